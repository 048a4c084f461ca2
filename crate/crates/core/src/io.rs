//! File formats: PGM holograms, field CSV, pattern/occupancy/sequence JSON and run manifests.
//!
//! Phase encoding: gray value v = round(φ · 256 / 2π) mod 256, decoded as 2πv/256. Row 0 of
//! a PGM is l = −ny/2 and column 0 is k = −nx/2.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optics::{wrap_phase, ComplexField, PhaseMap, TweezerPattern, TweezerSpec};
use crate::sequencer::{FrameStage, FrameTweezer, HologramSequence};
use crate::wgs::WgsResult;

pub const PHASE_ENCODING: &str = "v = round(phase * 256 / 2pi) mod 256; phase = 2pi * v / 256";

pub const PATTERN_SCHEMA: &str = "holosort.pattern/1";
pub const OCCUPANCY_SCHEMA: &str = "holosort.occupancy/1";
pub const WGS_SCHEMA: &str = "holosort.wgs/1";
pub const SEQUENCE_SCHEMA: &str = "holosort.sequence/1";
pub const MANIFEST_SCHEMA: &str = "holosort.manifest/1";

pub fn phase_to_gray(phase: f64) -> u8 {
    ((wrap_phase(phase) * 256.0 / TAU).round() as u32 % 256) as u8
}

pub fn gray_to_phase(v: u8) -> f64 {
    TAU * v as f64 / 256.0
}

pub fn write_pgm<W: Write>(holo: &PhaseMap, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", holo.nx(), holo.ny())?;
    let bytes: Vec<u8> = holo.values().iter().map(|&p| phase_to_gray(p)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

fn pgm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && tok.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(tok)
}

/// Reads an 8-bit binary PGM back into (quantized) phases.
pub fn read_pgm<R: Read>(input: R) -> Result<PhaseMap> {
    let mut r = BufReader::new(input);
    if pgm_token(&mut r)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        pgm_token(&mut r)?
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM {what}")))
    };
    let (nx, ny, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval != 255 || nx == 0 || ny == 0 {
        return Err(Error::Format(format!("unsupported PGM {nx}x{ny} maxval {maxval}")));
    }
    let mut bytes = vec![0u8; nx * ny];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("PGM pixel data truncated".into()))?;
    let values = Array2::from_shape_fn((ny, nx), |(i, j)| gray_to_phase(bytes[i * nx + j]));
    Ok(PhaseMap::from_wrapped(values))
}

pub fn save_pgm(holo: &PhaseMap, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_pgm(holo, &mut f)?;
    f.flush()?;
    Ok(())
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn load_pgm(path: &Path) -> Result<PhaseMap> {
    read_pgm(fs::File::open(path).map_err(with_path(path))?)
}

/// CSV of `(m, n, re, im)` for every grid cell.
pub fn write_field_csv<W: Write>(field: &ComplexField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "n", "re", "im"])?;
    let (nx, ny) = field.dims();
    for ((r, c), z) in field.values().indexed_iter() {
        let m = c as i64 - (nx / 2) as i64;
        let n = r as i64 - (ny / 2) as i64;
        w.write_record([m.to_string(), n.to_string(), format!("{:e}", z.re), format!("{:e}", z.im)])?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(with_path(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!("schema {found:?}, expected {expected:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternFile {
    pub schema: String,
    pub config_hash: String,
    pub tweezers: Vec<TweezerSpec>,
}

impl PatternFile {
    pub fn new(pattern: &TweezerPattern, config_hash: String) -> Self {
        PatternFile { schema: PATTERN_SCHEMA.into(), config_hash, tweezers: pattern.tweezers().to_vec() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: PatternFile = read_json(path)?;
        check_schema(&f.schema, PATTERN_SCHEMA)?;
        Ok(f)
    }

    pub fn pattern(&self) -> Result<TweezerPattern> {
        TweezerPattern::new(self.tweezers.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyFile {
    pub schema: String,
    pub p_load: Option<f64>,
    pub seed: Option<u64>,
    pub occupancy: Vec<bool>,
}

impl OccupancyFile {
    pub fn new(occupancy: Vec<bool>, p_load: Option<f64>, seed: Option<u64>) -> Self {
        OccupancyFile { schema: OCCUPANCY_SCHEMA.into(), p_load, seed, occupancy }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: OccupancyFile = read_json(path)?;
        check_schema(&f.schema, OCCUPANCY_SCHEMA)?;
        Ok(f)
    }
}

/// JSON side-car of a WGS run; the hologram itself goes to a PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgsFile {
    pub schema: String,
    pub config_hash: String,
    pub uniformity: f64,
    pub iters_used: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub achieved: Vec<TweezerSpec>,
    pub drive: Vec<TweezerSpec>,
}

impl WgsFile {
    pub fn new(res: &WgsResult, config_hash: String) -> Self {
        WgsFile {
            schema: WGS_SCHEMA.into(),
            config_hash,
            uniformity: res.uniformity,
            iters_used: res.iters_used,
            converged: res.converged,
            history: res.history.clone(),
            achieved: res.achieved.tweezers().to_vec(),
            drive: res.drive.tweezers().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub stage: FrameStage,
    pub file: String,
    pub tweezers: Vec<FrameTweezer>,
}

/// Per-frame annotations of an exported sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub schema: String,
    pub config_hash: String,
    pub phase_encoding: String,
    pub ramp_steps: usize,
    pub move_steps: usize,
    pub frames: Vec<FrameEntry>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.pgm")
}

/// Writes numbered PGM frames plus `manifest.json` into `dir`.
pub fn write_sequence(seq: &HologramSequence, config_hash: &str, dir: &Path) -> Result<SequenceManifest> {
    fs::create_dir_all(dir)?;
    let mut frames = Vec::with_capacity(seq.len());
    for (i, f) in seq.frames.iter().enumerate() {
        let file = frame_file_name(i);
        save_pgm(&f.hologram, &dir.join(&file))?;
        frames.push(FrameEntry { index: i, stage: f.stage, file, tweezers: f.tweezers.clone() });
    }
    let manifest = SequenceManifest {
        schema: SEQUENCE_SCHEMA.into(),
        config_hash: config_hash.to_string(),
        phase_encoding: PHASE_ENCODING.into(),
        ramp_steps: seq.ramp_steps,
        move_steps: seq.move_steps,
        frames,
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Provenance record; one per artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub config_hash: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub phase_encoding: String,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            config_hash,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            phase_encoding: PHASE_ENCODING.into(),
            wall_clock_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(self, &dir.join("manifest.json"))
    }
}
