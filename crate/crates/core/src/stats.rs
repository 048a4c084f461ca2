//! SPAM-corrected survival and rearrangement statistics.
//!
//! Detection is modelled by a true-negative fidelity `F0`, a true-positive fidelity `F1`,
//! the single-atom loading probability `p1` and the survival `S` of one image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_P1: f64 = 0.45;

/// Detection fidelities and raw image survival measured on one array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayFidelity {
    pub f0: f64,
    pub f1: f64,
    pub s0: f64,
    #[serde(default)]
    pub f0_err: f64,
    #[serde(default)]
    pub f1_err: f64,
    #[serde(default)]
    pub s0_err: f64,
}

impl ArrayFidelity {
    pub fn new(f0: f64, f1: f64, s0: f64) -> Self {
        ArrayFidelity {
            f0,
            f1,
            s0,
            f0_err: 0.0,
            f1_err: 0.0,
            s0_err: 0.0,
        }
    }

    pub fn with_errors(mut self, f0_err: f64, f1_err: f64, s0_err: f64) -> Self {
        self.f0_err = f0_err;
        self.f1_err = f1_err;
        self.s0_err = s0_err;
        self
    }

    pub fn perfect() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("f0", self.f0), ("f1", self.f1), ("s0", self.s0)] {
            check_prob(name, v)?;
        }
        check_detector(self.f0, self.f1)
    }
}

/// Table of fidelities for the loading array and the target array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsParams {
    #[serde(default = "default_p1")]
    pub p1: f64,
    #[serde(default)]
    pub p1_err: f64,
    pub initial: ArrayFidelity,
    pub target: ArrayFidelity,
}

fn default_p1() -> f64 {
    DEFAULT_P1
}

impl StatsParams {
    /// Published characterisation of the 36-site loading and 16-site target arrays.
    pub fn reference() -> Self {
        StatsParams {
            p1: DEFAULT_P1,
            p1_err: 0.0,
            initial: ArrayFidelity::new(0.9986, 0.997, 0.988).with_errors(0.0013, 0.003, 0.003),
            target: ArrayFidelity::new(0.9992, 0.9998, 0.9966).with_errors(0.0007, 0.0002, 0.0013),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_p1(self.p1)?;
        self.initial.validate()?;
        self.target.validate()
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
    }
}

fn check_p1(p1: f64) -> Result<()> {
    check_prob("p1", p1)?;
    if p1 == 0.0 {
        return Err(Error::InvalidParameter("p1 must be positive".into()));
    }
    Ok(())
}

fn check_detector(f0: f64, f1: f64) -> Result<()> {
    if f0 + f1 <= 1.0 {
        Err(Error::DegenerateDetector(f0 + f1))
    } else {
        Ok(())
    }
}

/// Probability of a positive detection in the first image.
pub fn p_detect(f0: f64, f1: f64, p1: f64) -> f64 {
    f1 * p1 + (1.0 - f0) * (1.0 - p1)
}

/// Probability of positive detections in two consecutive images given true survival `s`.
pub fn p_detect_both(f0: f64, f1: f64, s: f64, p1: f64) -> f64 {
    f1 * f1 * s * p1 + f1 * (1.0 - f0) * (1.0 - s) * p1 + (1.0 - f0).powi(2) * (1.0 - p1)
}

/// Forward model: raw conditional survival observed for true survival `s`.
pub fn raw_survival(f0: f64, f1: f64, s: f64, p1: f64) -> f64 {
    p_detect_both(f0, f1, s, p1) / p_detect(f0, f1, p1)
}

/// True survival from raw survival `s0`, in the single-fraction form.
pub fn corrected_survival_fraction(f0: f64, f1: f64, s0: f64, p1: f64) -> Result<f64> {
    check_detector(f0, f1)?;
    check_p1(p1)?;
    Ok((s0 + f0 - 1.0) * p_detect(f0, f1, p1) / (p1 * f1 * (f1 + f0 - 1.0)))
}

/// True survival from raw survival `s0`.
pub fn corrected_survival(f0: f64, f1: f64, s0: f64, p1: f64) -> Result<f64> {
    check_detector(f0, f1)?;
    check_p1(p1)?;
    Ok((s0 + f0 - 1.0) / (f1 + f0 - 1.0) * (1.0 + (1.0 - f0) * (1.0 - p1) / (p1 * f1)))
}

/// Unclamped per-cycle success after `n` cycles with imaging in between.
pub fn rearrangement_unclamped(
    r0: f64,
    n: u32,
    initial: &ArrayFidelity,
    target: &ArrayFidelity,
    p1: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("cycle count must be at least 1".into()));
    }
    initial.validate()?;
    target.validate()?;
    check_p1(p1)?;
    let (a, b) = (initial, target);
    let s_init = corrected_survival(a.f0, a.f1, a.s0, p1)?;
    let s_target = corrected_survival(b.f0, b.f1, b.s0, p1)?;
    let num = (r0 + b.f0 - 1.0) * p_detect(a.f0, a.f1, p1);
    let den = s_target.powi(n as i32 - 1) * s_init * a.f1 * p1 * (b.f1 + b.f0 - 1.0);
    let ratio = num / den;
    if ratio < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "R0 = {r0} lies below the false-positive floor"
        )));
    }
    Ok(if n == 1 { ratio } else { ratio.powf(1.0 / n as f64) })
}

/// Per-atom success of one rearrangement from the measured retention `r0`, clamped to 1.
pub fn corrected_rearrangement(
    r0: f64,
    initial: &ArrayFidelity,
    target: &ArrayFidelity,
    p1: f64,
) -> Result<f64> {
    corrected_rearrangement_n(r0, 1, initial, target, p1)
}

/// Per-cycle success from the retention `r0` measured after `n` sequential cycles.
pub fn corrected_rearrangement_n(
    r0: f64,
    n: u32,
    initial: &ArrayFidelity,
    target: &ArrayFidelity,
    p1: f64,
) -> Result<f64> {
    Ok(rearrangement_unclamped(r0, n, initial, target, p1)?.min(1.0))
}

pub fn defect_free_probability(p: f64, n_tw: u64) -> f64 {
    p.powf(n_tw as f64)
}

/// A second cycle pays off once the per-atom loss drops below `1/√N_tw`.
pub fn multicycle_beneficial(loss: f64, n_tw: u64) -> bool {
    loss < 1.0 / (n_tw as f64).sqrt()
}

/// Value with a one-sided-clamped standard uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub plus: f64,
    pub minus: f64,
}

/// First-order propagation of independent standard deviations through `f`.
///
/// The result is clamped at `upper`; the upward error is cut off at the same bound.
pub fn propagate_uncertainty(
    f: impl Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    sigma: &[f64],
    upper: f64,
) -> Result<Estimate> {
    let v = f(x)?;
    let mut var = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        if sigma[i] == 0.0 {
            continue;
        }
        let h = (sigma[i] * 1e-3).max(1e-9);
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        let g = (up - down) / (2.0 * h);
        var += (g * sigma[i]).powi(2);
    }
    let s = var.sqrt();
    let value = v.min(upper);
    Ok(Estimate {
        value,
        plus: s.min(upper - value),
        minus: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub p1: f64,
    pub p_detect_initial: f64,
    pub p_detect_target: f64,
    pub survival_initial: Estimate,
    pub survival_target: Estimate,
    pub r0: Option<f64>,
    pub cycles: u32,
    pub rearrangement: Option<Estimate>,
}

/// Survival corrections for both arrays and, when `r0` is given, the rearrangement success.
pub fn report(params: &StatsParams, r0: Option<(f64, f64)>, cycles: u32) -> Result<StatsReport> {
    params.validate()?;
    let p1 = params.p1;
    let survival = |a: &ArrayFidelity| {
        propagate_uncertainty(
            |v| corrected_survival(v[0], v[1], v[2], v[3]),
            &[a.f0, a.f1, a.s0, p1],
            &[a.f0_err, a.f1_err, a.s0_err, params.p1_err],
            1.0,
        )
    };
    let rearrangement = match r0 {
        Some((r, r_err)) => {
            let (a, b) = (params.initial, params.target);
            let x = [r, a.f0, a.f1, a.s0, b.f0, b.f1, b.s0, p1];
            let sigma = [
                r_err, a.f0_err, a.f1_err, a.s0_err, b.f0_err, b.f1_err, b.s0_err, params.p1_err,
            ];
            Some(propagate_uncertainty(
                |v| {
                    rearrangement_unclamped(
                        v[0],
                        cycles,
                        &ArrayFidelity::new(v[1], v[2], v[3]),
                        &ArrayFidelity::new(v[4], v[5], v[6]),
                        v[7],
                    )
                },
                &x,
                &sigma,
                1.0,
            )?)
        }
        None => None,
    };
    Ok(StatsReport {
        p1,
        p_detect_initial: p_detect(params.initial.f0, params.initial.f1, p1),
        p_detect_target: p_detect(params.target.f0, params.target.f1, p1),
        survival_initial: survival(&params.initial)?,
        survival_target: survival(&params.target)?,
        r0: r0.map(|r| r.0),
        cycles,
        rearrangement,
    })
}
