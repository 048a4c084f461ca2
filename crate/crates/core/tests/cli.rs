use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holosort::io::{load_pgm, read_json, RunManifest, SequenceManifest};
use holosort::optics::sample_tweezer;
use holosort::wgs::uniformity;
use holosort::{OpticalConfig, Propagator, TweezerPattern};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holosort"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap()
}

/// 6×6 loading with 60 % fill (seed 3) and a 4×4 target, written under `dir`.
fn inputs(dir: &Path) {
    run(dir, &["pattern", "--kind", "grid", "--rows", "6", "--cols", "6", "--spacing", "13", "--load-p", "0.6", "--seed", "3", "--out", "init"]);
    run(dir, &["pattern", "--kind", "grid", "--rows", "4", "--cols", "4", "--out", "fin"]);
}

const SEQ: &[&str] = &[
    "--initial", "init/pattern.json", "--final", "fin/pattern.json", "--occupancy", "init/occupancy.json", "--grid", "128",
];

#[test]
fn pattern_grid_has_36_sites() {
    let tmp = tempfile::tempdir().unwrap();
    inputs(tmp.path());
    let p = json(tmp.path().join("init/pattern.json"));
    assert_eq!(p["schema"], "holosort.pattern/1");
    assert_eq!(p["config_hash"].as_str().unwrap().len(), 64);
    let tw = p["tweezers"].as_array().unwrap();
    assert_eq!(tw.len(), 36);
    assert!(tw.iter().all(|t| t["m"].is_i64() && t["n"].is_i64() && t["amp"].is_f64() && t["phase"].is_f64()));
    let occ = json(tmp.path().join("init/occupancy.json"));
    assert_eq!(occ["occupancy"].as_array().unwrap().len(), 36);
    assert_eq!(occ["seed"], 3);
}

#[test]
fn sequence_ends_on_balanced_target() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    inputs(d);
    run(d, &[&["sequence"], SEQ, &["--out", "seq"]].concat());
    // the target is balanced with seed + 1
    run(d, &["wgs", "--pattern", "fin/pattern.json", "--grid", "128", "--seed", "1", "--out", "fin_wgs"]);

    let plan = json(d.join("seq/plan.json"));
    let n = plan["move_steps"].as_u64().unwrap() as usize;
    assert!(n >= 1);
    let man: SequenceManifest = read_json(&d.join("seq/frames/manifest.json")).unwrap();
    assert_eq!(man.frames.len(), 2 + n);
    assert_eq!((man.ramp_steps, man.move_steps), (2, n));
    let pgms = fs::read_dir(d.join("seq/frames")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")).count();
    assert_eq!(pgms, 2 + n);

    let last = d.join("seq/frames").join(&man.frames.last().unwrap().file);
    assert_eq!(fs::read(&last).unwrap(), fs::read(d.join("fin_wgs/hologram.pgm")).unwrap());

    // re-propagate the quantized last frame
    let holo = load_pgm(&last).unwrap();
    let prop = Propagator::new(&OpticalConfig::square(128)).unwrap();
    let field = prop.propagate(&holo).unwrap();
    let target: TweezerPattern = holosort::io::PatternFile::load(&d.join("fin/pattern.json")).unwrap().pattern().unwrap();
    let amps: Vec<f64> = target.positions().map(|p| sample_tweezer(&field, p).unwrap().0).collect();
    let u = uniformity(&amps, &vec![1.0; amps.len()]);
    assert!(u <= 0.03, "{u}");
    let wgs = json(d.join("fin_wgs/wgs.json"));
    assert!(wgs["uniformity"].as_f64().unwrap() <= 0.01);
}

#[test]
fn stats_with_table_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let table = r#"{
        "p1": 0.45,
        "initial": {"f0": 0.9986, "f1": 0.997, "s0": 0.988, "f0_err": 0.0013, "f1_err": 0.003, "s0_err": 0.003},
        "target": {"f0": 0.9992, "f1": 0.9998, "s0": 0.9966, "f0_err": 0.0007, "f1_err": 0.0002, "s0_err": 0.0013}
    }"#;
    fs::write(d.join("table1.json"), table).unwrap();
    run(d, &["stats", "--params", "table1.json", "--r0", "0.988", "--out", "st"]);
    let r = json(d.join("st/report.json"));
    assert!((r["rearrangement"]["value"].as_f64().unwrap() - 0.997).abs() < 1e-3);
    assert!((r["survival_initial"]["value"].as_f64().unwrap() - 0.993).abs() < 1e-3);
    let csv = fs::read_to_string(d.join("st/report.csv")).unwrap();
    assert!(csv.starts_with("quantity,value,plus,minus\n"));
    let m: RunManifest = read_json(&d.join("st/manifest.json")).unwrap();
    assert_eq!(m.inputs, vec!["table1.json".to_string()]);
}

/// Every file under `dir`, with wall-clock fields removed from manifests.
fn payloads(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().display().to_string();
            let mut bytes = fs::read(&path).unwrap();
            if path.file_name().unwrap() == "manifest.json" {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("wall_clock_s");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.push((rel, bytes));
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    inputs(d);
    let commands: Vec<Vec<&str>> = vec![
        vec!["pattern", "--kind", "kagome", "--count", "12", "--load-p", "0.5", "--seed", "9"],
        vec!["wgs", "--pattern", "fin/pattern.json", "--grid", "64", "--seed", "4", "--field-csv"],
        vec!["plan", "--initial", "init/pattern.json", "--final", "fin/pattern.json", "--occupancy", "init/occupancy.json"],
        [&["sequence"], SEQ].concat(),
        [&["flicker"], SEQ, &["--waist", "2", "--substeps", "4", "--mode", "cross-fade"]].concat(),
        vec!["slipscan", "--grid", "64", "--points", "8", "--displacement", "8"],
        vec!["stats", "--r0", "0.968", "--cycles", "4"],
        vec!["mc", "--success", "0.99", "--trials", "3000", "--seed", "5", "--policy", "refill-on-defect", "--cycles", "2"],
    ];
    for cmd in commands {
        let a = [&cmd[..], &["--out", "a"]].concat();
        let b = [&cmd[..], &["--out", "b"]].concat();
        run(d, &a);
        run(d, &b);
        let (pa, pb) = (payloads(&d.join("a")), payloads(&d.join("b")));
        assert!(!pa.is_empty());
        assert_eq!(pa, pb, "{}", cmd[0]);
        let m: RunManifest = read_json(&d.join("a/manifest.json")).unwrap();
        assert_eq!(m.command, cmd[0]);
        for o in &m.outputs {
            assert!(d.join("a").join(o).exists(), "{o}");
        }
        fs::remove_dir_all(d.join("a")).unwrap();
        fs::remove_dir_all(d.join("b")).unwrap();
    }
}

#[test]
fn flicker_lpi_beats_wgs_only() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    inputs(d);
    let common = [SEQ, &["--waist", "2", "--substeps", "4"]].concat();
    run(d, &[&["flicker"], &common[..], &["--out", "lpi"]].concat());
    run(d, &[&["flicker"], &common[..], &["--wgs-only", "--out", "wgs"]].concat());
    let lpi = json(d.join("lpi/summary.json"))["min_rel_intensity"].as_f64().unwrap();
    let wgs = json(d.join("wgs/summary.json"))["min_rel_intensity"].as_f64().unwrap();
    assert!(lpi > wgs, "{lpi} vs {wgs}");
    let trace = fs::read_to_string(d.join("lpi/trace.csv")).unwrap();
    assert!(trace.starts_with("frame,tau,id,rel_intensity,phase\n"));
}

#[test]
fn slipscan_loss_follows_displacement() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, &["slipscan", "--grid", "128", "--points", "32", "--out", "s0"]);
    run(d, &["slipscan", "--grid", "128", "--points", "32", "--displacement", "32", "--out", "s1"]);
    let c0 = json(d.join("s0/summary.json"))["loss_centroid"].as_f64().unwrap();
    let s1 = json(d.join("s1/summary.json"));
    let (c1, xi) = (s1["loss_centroid"].as_f64().unwrap(), s1["xi"].as_f64().unwrap());
    let step = std::f64::consts::TAU / 32.0;
    let shift = holosort::optics::shortest_angle(c0, c1);
    assert!((shift + xi).abs() <= step, "{shift} {xi}");
    let csv = fs::read_to_string(d.join("s1/scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
}

#[test]
fn bench_writes_stage_table() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, &["bench", "--grid", "64", "--n-tw", "4,9", "--steps", "3", "--repetitions", "2", "--out", "b"]);
    let csv = fs::read_to_string(d.join("b/bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N_tw,stage,mean_ms,sdev_ms,mode");
    assert_eq!(lines.len(), 11);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert!(f[2].parse::<f64>().unwrap() >= 0.0 && f[3].parse::<f64>().unwrap() >= 0.0);
        assert_eq!(f[4], "serialized");
    }
}

#[test]
fn reproduce_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["reproduce", "--quick", "--criteria", "2,4,8", "--out", "r"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    let v = json(tmp.path().join("r/reproduce.json"));
    assert_eq!(v.as_array().unwrap().len(), 3);
}

fn error_json(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

#[test]
fn failures_report_json_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["wgs", "--pattern", "missing.json", "--out", "x"], "io"),
        (vec!["pattern", "--kind", "circle", "--out", "x"], "config"),
        (vec!["pattern", "--kind", "grid", "--rows", "3", "--cols", "3", "--spacing", "1", "--out", "x"], "invalid_parameter"),
        (vec!["stats", "--r0", "0.0001", "--out", "x"], "invalid_parameter"),
        (vec!["frobnicate"], "usage"),
        (vec!["mc", "--trials", "many", "--out", "x"], "usage"),
    ];
    for (args, kind) in cases {
        let out = bin().current_dir(d).args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        let v = error_json(&out);
        assert_eq!(v["error"], kind, "{args:?}: {v}");
        assert!(v["message"].is_string());
    }
    // too few atoms for the target
    inputs(d);
    fs::write(d.join("empty.json"), r#"{"schema":"holosort.occupancy/1","p_load":null,"seed":null,"occupancy":[true,true,true,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false,false]}"#).unwrap();
    let out = bin()
        .current_dir(d)
        .args(["plan", "--initial", "init/pattern.json", "--final", "fin/pattern.json", "--occupancy", "empty.json", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(error_json(&out)["error"], "insufficient_atoms");
}

#[test]
fn thread_cap_is_honoured_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = bin()
        .current_dir(tmp.path())
        .env("HOLOSORT_THREADS", "1")
        .args(["mc", "--trials", "100", "--out", "m"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = bin()
        .current_dir(tmp.path())
        .env("HOLOSORT_THREADS", "zero")
        .args(["mc", "--trials", "100", "--out", "m"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert_eq!(error_json(&bad)["error"], "config");
}
