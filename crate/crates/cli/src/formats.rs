//! On-disk formats: CSV exports, the model file, trial lists and score files.
//!
//! Floats are written with 17 significant digits so every value reads back
//! to the same `f64`.
//!
//! # Model file
//!
//! All integers and floats are little-endian.
//!
//! | field              | type             |
//! |--------------------|------------------|
//! | magic              | 8 bytes `MLABTOY\0` |
//! | version            | u32, currently 1 |
//! | frame_dim          | u32              |
//! | hidden layer count | u32              |
//! | per hidden layer   | u32 width, u32 activation (0 identity, 1 tanh) |
//! | embed_dim          | u32              |
//! | num_classes        | u32              |
//! | parameter count    | u64              |
//! | parameters         | f64 each         |
//!
//! Parameters follow the flat layout of [`ToyModel::params`]: for each
//! hidden layer its weight matrix then its bias, then the projection weight
//! and bias, then one unit-norm classifier row per class. Weight matrices
//! are row-major with one row per output unit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use marginlab_core::metrics::{Histogram, Trial};
use marginlab_core::train::{Activation, EpochDiagnostics, ModelShape, ToyModel};

use crate::error::{CliError, CliResult};

pub const MODEL_MAGIC: &[u8; 8] = b"MLABTOY\0";
pub const MODEL_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn diagnostics_csv(rows: &[EpochDiagnostics]) -> String {
    let mut out = String::from("epoch,s_p_mean,s_n_mean,r_mean,loss,margin\n");
    for d in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.epoch + 1,
            fmt_f64(d.s_p_mean),
            fmt_f64(d.s_n_mean),
            fmt_f64(d.r_mean),
            fmt_f64(d.loss),
            fmt_f64(d.margin)
        );
    }
    out
}

/// One gradient-field sample: `(s_p, s_n, dL_dsp, dL_dsn)`.
pub type GradRow = [f64; 4];

pub fn grad_field_csv(rows: &[GradRow]) -> String {
    let mut out = String::from("s_p,s_n,dL_dsp,dL_dsn\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", fmt_f64(r[0]), fmt_f64(r[1]), fmt_f64(r[2]), fmt_f64(r[3]));
    }
    out
}

pub fn parse_grad_field_csv(text: &str) -> CliResult<Vec<GradRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("s_p,s_n,dL_dsp,dL_dsn") {
        return Err(CliError::Config("grad-field CSV: bad header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("grad-field CSV line {}: {e}", i + 2)))?;
            <[f64; 4]>::try_from(vals)
                .map_err(|_| CliError::Config(format!("grad-field CSV line {}: expected 4 fields", i + 2)))
        })
        .collect()
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{c}", fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]));
    }
    out
}

pub fn encode_model(model: &ToyModel) -> Vec<u8> {
    let shape = model.shape();
    let params = model.params();
    let mut buf = Vec::with_capacity(48 + 8 * shape.hidden.len() + 8 * params.len());
    buf.extend_from_slice(MODEL_MAGIC);
    let mut put = |v: u32| buf.extend_from_slice(&v.to_le_bytes());
    put(MODEL_VERSION);
    put(shape.frame_dim as u32);
    put(shape.hidden.len() as u32);
    for &(width, act) in &shape.hidden {
        put(width as u32);
        put(act.tag() as u32);
    }
    put(shape.embed_dim as u32);
    put(shape.num_classes as u32);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> CliResult<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Config(format!("model file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> CliResult<ToyModel> {
    let bad = |msg: String| CliError::Config(format!("model file: {msg}"));
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let frame_dim = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let mut hidden = Vec::new();
    for _ in 0..layers {
        let width = r.u32()? as usize;
        let tag = r.u32()?;
        let act = u8::try_from(tag)
            .ok()
            .and_then(Activation::from_tag)
            .ok_or_else(|| bad(format!("unknown activation tag {tag}")))?;
        hidden.push((width, act));
    }
    let shape = ModelShape {
        frame_dim,
        hidden,
        embed_dim: r.u32()? as usize,
        num_classes: r.u32()? as usize,
    };
    shape.validate().map_err(|e| bad(e.to_string()))?;
    let count = r.u64()? as usize;
    if count != shape.num_params() {
        return Err(bad(format!("{count} parameters, shape needs {}", shape.num_params())));
    }
    let body = r.take(count.checked_mul(8).ok_or_else(|| bad("parameter count overflows".into()))?)?;
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    ToyModel::from_params(shape, params).map_err(|e| bad(e.to_string()))
}

pub fn read_model(path: &Path) -> CliResult<ToyModel> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_model(&bytes).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses lines of `enroll_id test_id {1|0}`. Blank lines are skipped.
pub fn parse_trials(text: &str) -> CliResult<Vec<Trial>> {
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let is_target = match fields.as_slice() {
            [_, _, "1"] => true,
            [_, _, "0"] => false,
            _ => {
                return Err(CliError::Config(format!(
                    "trial list line {}: expected `enroll test 1|0`, got `{line}`",
                    i + 1
                )))
            }
        };
        trials.push(Trial {
            enroll: fields[0].to_string(),
            test: fields[1].to_string(),
            is_target,
        });
    }
    Ok(trials)
}

pub fn trials_text(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        let _ = writeln!(out, "{} {} {}", t.enroll, t.test, u8::from(t.is_target));
    }
    out
}

pub fn scores_text(trials: &[Trial], scores: &[f64]) -> String {
    let mut out = String::new();
    for (t, s) in trials.iter().zip(scores) {
        let _ = writeln!(out, "{} {} {}", t.enroll, t.test, fmt_f64(*s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> ToyModel {
        let shape = ModelShape {
            frame_dim: 3,
            hidden: vec![(4, Activation::Tanh), (2, Activation::Identity)],
            embed_dim: 2,
            num_classes: 3,
        };
        ToyModel::init(shape, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn model_round_trips() {
        let m = small_model();
        let bytes = encode_model(&m);
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back.shape(), m.shape());
        assert_eq!(back.params(), m.params());
        assert_eq!(encode_model(&back), bytes);
    }

    #[test]
    fn model_rejects_corruption() {
        let bytes = encode_model(&small_model());
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode_model(&magic).is_err());
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, -1.0 / 3.0, 29.999987591767972, 5e-324, 0.0, 1.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn trial_list_parses_and_reports_line() {
        let t = parse_trials("a b 1\n\nc d 0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].is_target && !t[1].is_target);
        assert_eq!(trials_text(&t), "a b 1\nc d 0\n");
        let err = parse_trials("a b 1\na b yes\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
