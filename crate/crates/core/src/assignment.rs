//! Atom-to-target assignment as a rectangular linear sum assignment problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Pos;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentProblem {
    pub sources: Vec<Pos>,
    pub targets: Vec<Pos>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl CostMetric {
    fn cost(self, a: Pos, b: Pos) -> f64 {
        match self {
            CostMetric::SquaredEuclidean => a.sq_dist(b) as f64,
            CostMetric::Euclidean => a.dist(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentSolution {
    /// `(source index, target index)`, one entry per target, ordered by target index.
    pub pairs: Vec<(usize, usize)>,
    /// Σ‖s − t‖² over the pairs, whatever metric was optimised.
    pub total_cost: i64,
    /// Largest Chebyshev distance over the pairs.
    pub max_move: i32,
}

impl AssignmentProblem {
    pub fn new(sources: Vec<Pos>, targets: Vec<Pos>) -> Result<Self> {
        let p = AssignmentProblem { sources, targets };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for list in [&self.sources, &self.targets] {
            let mut sorted = list.clone();
            sorted.sort();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::DuplicatePosition(w[0].m, w[0].n));
            }
        }
        if self.targets.is_empty() {
            return Err(Error::EmptyPattern);
        }
        if self.sources.len() < self.targets.len() {
            return Err(Error::InsufficientAtoms {
                available: self.sources.len(),
                required: self.targets.len(),
            });
        }
        Ok(())
    }

    /// Index permutations that sort sources and targets by position.
    ///
    /// Solving in this order makes tie-breaking depend on positions only, so reordering the
    /// input lists never changes which positions get paired.
    fn canonical_order(&self) -> (Vec<usize>, Vec<usize>) {
        let order = |v: &[Pos]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by_key(|&i| v[i]);
            idx
        };
        (order(&self.sources), order(&self.targets))
    }

    fn solution(&self, mut pairs: Vec<(usize, usize)>) -> AssignmentSolution {
        pairs.sort_by_key(|&(_, t)| t);
        let total_cost = pairs
            .iter()
            .map(|&(s, t)| self.sources[s].sq_dist(self.targets[t]))
            .sum();
        let max_move = pairs
            .iter()
            .map(|&(s, t)| self.sources[s].chebyshev(self.targets[t]))
            .max()
            .unwrap_or(0);
        AssignmentSolution {
            pairs,
            total_cost,
            max_move,
        }
    }
}

impl AssignmentSolution {
    /// Sources left without a target, in increasing index order.
    pub fn unassigned_sources(&self, n_sources: usize) -> Vec<usize> {
        let mut used = vec![false; n_sources];
        for &(s, _) in &self.pairs {
            used[s] = true;
        }
        (0..n_sources).filter(|&s| !used[s]).collect()
    }

    pub fn source_for(&self, target: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == target).map(|p| p.0)
    }
}

/// Minimum squared-distance assignment.
pub fn solve(problem: &AssignmentProblem) -> Result<AssignmentSolution> {
    solve_with_metric(problem, CostMetric::SquaredEuclidean)
}

pub fn solve_with_metric(
    problem: &AssignmentProblem,
    metric: CostMetric,
) -> Result<AssignmentSolution> {
    problem.validate()?;
    let (src, tgt) = problem.canonical_order();
    let cost: Vec<Vec<f64>> = tgt
        .iter()
        .map(|&t| {
            src.iter()
                .map(|&s| metric.cost(problem.sources[s], problem.targets[t]))
                .collect()
        })
        .collect();
    let col_for_row = lsap(&cost);
    let pairs = col_for_row
        .iter()
        .enumerate()
        .map(|(r, &c)| (src[c], tgt[r]))
        .collect();
    Ok(problem.solution(pairs))
}

/// Shortest augmenting path solver for a dense `rows ≤ cols` cost matrix.
///
/// Returns the column assigned to each row. Dual variables stay integral for integer costs,
/// so squared-distance instances are solved exactly.
fn lsap(cost: &[Vec<f64>]) -> Vec<usize> {
    let nr = cost.len();
    let nc = cost[0].len();
    let mut u = vec![0.0; nr];
    let mut v = vec![0.0; nc];
    let mut col4row: Vec<Option<usize>> = vec![None; nr];
    let mut row4col: Vec<Option<usize>> = vec![None; nc];
    let mut path = vec![0usize; nc];
    let mut spc = vec![f64::INFINITY; nc];
    let mut remaining = vec![0usize; nc];
    let mut sr = vec![false; nr];
    let mut sc = vec![false; nc];

    for cur in 0..nr {
        // Dijkstra-like search from row `cur` over reduced costs
        spc.fill(f64::INFINITY);
        sr.fill(false);
        sc.fill(false);
        for (k, r) in remaining.iter_mut().enumerate() {
            *r = nc - k - 1;
        }
        let mut n_rem = nc;
        let mut min_val = 0.0;
        let mut i = cur;
        let sink = loop {
            sr[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = 0;
            for (k, &j) in remaining[..n_rem].iter().enumerate() {
                let r = min_val + cost[i][j] - u[i] - v[j];
                if r < spc[j] {
                    path[j] = i;
                    spc[j] = r;
                }
                if spc[j] < lowest || (spc[j] == lowest && row4col[j].is_none()) {
                    lowest = spc[j];
                    index = k;
                }
            }
            min_val = lowest;
            let j = remaining[index];
            sc[j] = true;
            n_rem -= 1;
            remaining[index] = remaining[n_rem];
            match row4col[j] {
                None => break j,
                Some(r) => i = r,
            }
        };

        u[cur] += min_val;
        for r in 0..nr {
            if sr[r] && r != cur {
                u[r] += min_val - spc[col4row[r].expect("scanned rows are assigned")];
            }
        }
        for c in 0..nc {
            if sc[c] {
                v[c] -= min_val - spc[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = Some(r);
            let prev = col4row[r].replace(j);
            if r == cur {
                break;
            }
            j = prev.expect("path rows are assigned");
        }
    }
    col4row.into_iter().map(|c| c.expect("every row assigned")).collect()
}

pub const BRUTE_FORCE_MAX_TARGETS: usize = 8;
pub const BRUTE_FORCE_MAX_SOURCES: usize = 12;

/// Exhaustive optimum over all injections, in the same canonical order as [`solve`].
pub fn brute_force_solve(problem: &AssignmentProblem) -> Result<AssignmentSolution> {
    brute_force_with_metric(problem, CostMetric::SquaredEuclidean)
}

pub fn brute_force_with_metric(
    problem: &AssignmentProblem,
    metric: CostMetric,
) -> Result<AssignmentSolution> {
    problem.validate()?;
    if problem.targets.len() > BRUTE_FORCE_MAX_TARGETS
        || problem.sources.len() > BRUTE_FORCE_MAX_SOURCES
    {
        return Err(Error::SizeCap(format!(
            "brute force handles at most {BRUTE_FORCE_MAX_TARGETS} targets and \
             {BRUTE_FORCE_MAX_SOURCES} sources, got {} and {}",
            problem.targets.len(),
            problem.sources.len()
        )));
    }
    let (src, tgt) = problem.canonical_order();
    let cost: Vec<Vec<f64>> = tgt
        .iter()
        .map(|&t| {
            src.iter()
                .map(|&s| metric.cost(problem.sources[s], problem.targets[t]))
                .collect()
        })
        .collect();

    struct Search<'a> {
        cost: &'a [Vec<f64>],
        used: Vec<bool>,
        current: Vec<usize>,
        best: Vec<usize>,
        best_cost: f64,
    }
    impl Search<'_> {
        fn run(&mut self, row: usize, acc: f64) {
            if acc >= self.best_cost {
                return;
            }
            if row == self.cost.len() {
                self.best_cost = acc;
                self.best.clone_from(&self.current);
                return;
            }
            for c in 0..self.used.len() {
                if !self.used[c] {
                    self.used[c] = true;
                    self.current.push(c);
                    self.run(row + 1, acc + self.cost[row][c]);
                    self.current.pop();
                    self.used[c] = false;
                }
            }
        }
    }
    let mut search = Search {
        cost: &cost,
        used: vec![false; src.len()],
        current: Vec::with_capacity(tgt.len()),
        best: Vec::new(),
        best_cost: f64::INFINITY,
    };
    search.run(0, 0.0);
    let pairs = search
        .best
        .iter()
        .enumerate()
        .map(|(r, &c)| (src[c], tgt[r]))
        .collect();
    Ok(problem.solution(pairs))
}
