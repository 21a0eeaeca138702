//! On-disk formats: TTC1 embedding files (binary and CSV), curve CSVs, and
//! the TTCM model artifact.
//!
//! TTC1 binary layout, little-endian throughout: magic `TTC1`, u32 count,
//! u32 dim, then per record dim f32 components followed by one i32 label.
//! TTCM layout: magic `TTCM`, u32 version (1), u32 dim / gat_hidden / heads /
//! mlp_hidden, f64 leaky_slope, f64 tau (NaN when unset), f64 grid lo/hi/step,
//! then every parameter tensor as raw f32 in declaration order.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::curves::{round_sig, PerfCurve, ThresholdGrid};
use crate::embedding::EmbeddingSet;
use crate::error::{Result, TtcError};
use crate::net::{ModelParams, NetConfig};

const EMBEDDING_MAGIC: &[u8; 4] = b"TTC1";
const MODEL_MAGIC: &[u8; 4] = b"TTCM";
const MODEL_VERSION: u32 = 1;
/// Readers accept this much unit-norm drift (f32 quantization and text
/// round-trips) and renormalize.
const READ_NORM_TOL: f64 = 1e-4;

fn format_err(path: &Path, what: impl std::fmt::Display) -> TtcError {
    TtcError::Format(format!("{}: {what}", path.display()))
}

// ─── little-endian cursor ────────────────────────────────────────────────────

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn i32(&mut self) -> Option<i32> {
        self.take(4).map(|b| i32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

// ─── embeddings ──────────────────────────────────────────────────────────────

pub fn write_embeddings_binary(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut buf =
        Vec::with_capacity(12 + set.len() * (set.dim() + 1) * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&(set.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for i in 0..set.len() {
        for &x in set.row(i) {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        buf.extend_from_slice(&set.labels()[i].to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_embeddings_binary(path: &Path) -> Result<EmbeddingSet> {
    let buf = fs::read(path)?;
    let mut cur = Cursor::new(&buf);
    match cur.take(4) {
        Some(m) if m == EMBEDDING_MAGIC => {}
        _ => return Err(format_err(path, "not a TTC1 embedding file (bad magic)")),
    }
    let n = cur.u32().ok_or_else(|| format_err(path, "truncated header"))? as usize;
    let dim = cur.u32().ok_or_else(|| format_err(path, "truncated header"))? as usize;
    let expect = (n as u64) * (dim as u64 + 1) * 4;
    if (buf.len() - cur.pos) as u64 != expect {
        return Err(format_err(
            path,
            format!("expected {expect} record bytes for {n} x {dim}, found {}", buf.len() - 12),
        ));
    }
    let mut vectors = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..dim {
            vectors.push(cur.f32().unwrap() as f64);
        }
        labels.push(cur.i32().unwrap());
    }
    debug_assert!(cur.done());
    EmbeddingSet::new_renormalized(vectors, dim, labels, READ_NORM_TOL)
}

pub fn write_embeddings_csv(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "label")?;
    for d in 0..set.dim() {
        write!(w, ",x{d}")?;
    }
    writeln!(w)?;
    for i in 0..set.len() {
        write!(w, "{}", set.labels()[i])?;
        for &x in set.row(i) {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings_csv(path: &Path) -> Result<EmbeddingSet> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) =
        lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") || cols.len() < 2 {
        return Err(format_err(path, "header must be label,x0,...,x{D-1}"));
    }
    let dim = cols.len() - 1;
    for (d, c) in cols[1..].iter().enumerate() {
        if *c != format!("x{d}") {
            return Err(format_err(path, format!("header column {} should be x{d}", d + 1)));
        }
    }
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(format_err(
                path,
                format!("line {}: {} fields, expected {}", lineno + 1, fields.len(), dim + 1),
            ));
        }
        let label: i32 = fields[0]
            .parse()
            .map_err(|_| format_err(path, format!("line {}: bad label {:?}", lineno + 1, fields[0])))?;
        labels.push(label);
        for f in &fields[1..] {
            let x: f64 = f.parse().map_err(|_| {
                format_err(path, format!("line {}: bad number {f:?}", lineno + 1))
            })?;
            vectors.push(x);
        }
    }
    EmbeddingSet::new_renormalized(vectors, dim, labels, READ_NORM_TOL)
}

fn is_csv(path: &Path) -> bool {
    path.extension().map(|e| e.eq_ignore_ascii_case("csv")).unwrap_or(false)
}

/// Binary or CSV by file extension (`.csv` means CSV).
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    if is_csv(path) {
        read_embeddings_csv(path)
    } else {
        read_embeddings_binary(path)
    }
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    if is_csv(path) {
        write_embeddings_csv(path, set)
    } else {
        write_embeddings_binary(path, set)
    }
}

// ─── curves ──────────────────────────────────────────────────────────────────

/// A value quantized to the 6 significant digits every curve CSV carries.
/// Rust's default float formatting round-trips, so parsing the printed text
/// recovers the quantized value bit for bit.
pub fn fmt_sig(x: f64) -> String {
    format!("{}", round_sig(x, 6))
}

pub fn write_curve_csv(path: &Path, curve: &PerfCurve) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "threshold,tpr,tnr")?;
    for (k, d) in curve.grid.values().into_iter().enumerate() {
        writeln!(w, "{},{},{}", fmt_sig(d), fmt_sig(curve.tpr[k]), fmt_sig(curve.tnr[k]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<PerfCurve> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "threshold,tpr,tnr")) => {}
        _ => return Err(format_err(path, "header must be threshold,tpr,tnr")),
    }
    let mut thresholds = Vec::new();
    let mut tpr = Vec::new();
    let mut tnr = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| -> Result<f64> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format_err(path, format!("line {}: bad {name}", lineno + 1)))
        };
        thresholds.push(field("threshold")?);
        tpr.push(field("tpr")?);
        tnr.push(field("tnr")?);
        if parts.next().is_some() {
            return Err(format_err(path, format!("line {}: too many fields", lineno + 1)));
        }
    }
    if thresholds.len() < 2 {
        return Err(format_err(path, "a curve needs at least two grid points"));
    }
    let lo = thresholds[0];
    let hi = *thresholds.last().unwrap();
    let step = (hi - lo) / (thresholds.len() - 1) as f64;
    let grid = ThresholdGrid::new(lo, hi, step)?;
    if grid.n_points() != thresholds.len() {
        return Err(format_err(path, "threshold column is not an even grid"));
    }
    PerfCurve::new(grid, tpr, tnr)
}

// ─── model artifacts ─────────────────────────────────────────────────────────

/// What a model file holds: trained parameters, the selected connectivity
/// threshold when one has been chosen, and the distance grid to calibrate on.
#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub params: ModelParams,
    pub tau: Option<f64>,
    pub grid: ThresholdGrid,
}

pub fn write_model(path: &Path, artifact: &ModelArtifact) -> Result<()> {
    let cfg = &artifact.params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [cfg.dim, cfg.gat_hidden, cfg.heads, cfg.mlp_hidden] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&cfg.leaky_slope.to_le_bytes());
    buf.extend_from_slice(&artifact.tau.unwrap_or(f64::NAN).to_le_bytes());
    for v in [artifact.grid.lo, artifact.grid.hi, artifact.grid.step] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for tensor in artifact.params.tensors() {
        for &x in tensor {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelArtifact> {
    let buf = fs::read(path)?;
    let mut cur = Cursor::new(&buf);
    match cur.take(4) {
        Some(m) if m == MODEL_MAGIC => {}
        _ => return Err(format_err(path, "not a TTCM model file (bad magic)")),
    }
    let trunc = || format_err(path, "truncated");
    let version = cur.u32().ok_or_else(trunc)?;
    if version != MODEL_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let dim = cur.u32().ok_or_else(trunc)? as usize;
    let gat_hidden = cur.u32().ok_or_else(trunc)? as usize;
    let heads = cur.u32().ok_or_else(trunc)? as usize;
    let mlp_hidden = cur.u32().ok_or_else(trunc)? as usize;
    let leaky_slope = cur.f64().ok_or_else(trunc)?;
    let config = NetConfig { dim, gat_hidden, heads, mlp_hidden, leaky_slope };
    config.validate().map_err(|e| format_err(path, e))?;
    let tau_raw = cur.f64().ok_or_else(trunc)?;
    let tau = if tau_raw.is_nan() {
        None
    } else if tau_raw > 0.0 && tau_raw < 1.0 {
        Some(tau_raw)
    } else {
        return Err(format_err(path, format!("stored tau {tau_raw} outside (0, 1)")));
    };
    let lo = cur.f64().ok_or_else(trunc)?;
    let hi = cur.f64().ok_or_else(trunc)?;
    let step = cur.f64().ok_or_else(trunc)?;
    let grid = ThresholdGrid::new(lo, hi, step).map_err(|e| format_err(path, e))?;
    let mut params = ModelParams::init(config, 0).map_err(|e| format_err(path, e))?;
    for tensor in params.tensors_mut() {
        for x in tensor.iter_mut() {
            *x = cur.f32().ok_or_else(trunc)? as f64;
        }
    }
    if !cur.done() {
        return Err(format_err(path, format!("{} trailing bytes", buf.len() - cur.pos)));
    }
    Ok(ModelArtifact { params, tau, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::circle_set;
    use crate::synth::{generate_scenario, ScenarioConfig};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ttc-io-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn binary_embeddings_round_trip() {
        let set = circle_set(&[0.0, 10.0, 95.0, 180.0], &[0, 0, 1, 1]);
        let path = tmp("round.ttc1");
        write_embeddings_binary(&path, &set).unwrap();
        let back = read_embeddings_binary(&path).unwrap();
        assert_eq!(back.len(), set.len());
        assert_eq!(back.dim(), set.dim());
        assert_eq!(back.labels(), set.labels());
        for i in 0..set.len() {
            for (a, b) in back.row(i).iter().zip(set.row(i)) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            let norm: f64 = back.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "read rows are renormalized");
        }
    }

    #[test]
    fn binary_reader_rejects_bad_magic_and_truncation() {
        let path = tmp("bad.ttc1");
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_embeddings_binary(&path), Err(TtcError::Format(_))));
        let set = circle_set(&[0.0, 90.0], &[0, 1]);
        write_embeddings_binary(&path, &set).unwrap();
        let full = fs::read(&path).unwrap();
        fs::write(&path, &full[..full.len() - 2]).unwrap();
        let err = read_embeddings_binary(&path).unwrap_err();
        assert!(matches!(err, TtcError::Format(_)), "{err}");
    }

    #[test]
    fn csv_embeddings_round_trip_exactly() {
        let config = ScenarioConfig {
            dim: 5,
            n_train_classes: 4,
            n_cal_classes: 3,
            n_test_classes: 3,
            seed: 31,
            ..Default::default()
        };
        let set = generate_scenario(&config).unwrap().test;
        let path = tmp("round.csv");
        write_embeddings_csv(&path, &set).unwrap();
        let back = read_embeddings_csv(&path).unwrap();
        assert_eq!(back.labels(), set.labels());
        // default float formatting round-trips f64 exactly, and the norms
        // already pass the read tolerance, so renormalization is a no-op
        // only up to its own division; compare loosely on vectors
        for (a, b) in back.vectors().iter().zip(set.vectors()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_reader_diagnoses_line_numbers() {
        let path = tmp("diag.csv");
        fs::write(&path, "label,x0,x1\n0,1.0,0.0\n1,oops,0.0\n").unwrap();
        let err = read_embeddings_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn extension_dispatch() {
        let set = circle_set(&[0.0, 90.0, 180.0], &[0, 1, 1]);
        let bin = tmp("dispatch.ttc1");
        let csv = tmp("dispatch.csv");
        write_embeddings(&bin, &set).unwrap();
        write_embeddings(&csv, &set).unwrap();
        assert!(fs::read(&bin).unwrap().starts_with(b"TTC1"));
        assert!(fs::read_to_string(&csv).unwrap().starts_with("label,"));
        assert_eq!(read_embeddings(&bin).unwrap().labels(), set.labels());
        assert_eq!(read_embeddings(&csv).unwrap().labels(), set.labels());
    }

    #[test]
    fn curve_csv_round_trips_quantized_values() {
        let set = circle_set(&[0.0, 8.0, 100.0, 120.0, 200.0], &[0, 0, 1, 1, 2]);
        let curve = crate::curves::exact_curves(&set, ThresholdGrid::default_unit_sphere())
            .unwrap();
        let path = tmp("curve.csv");
        write_curve_csv(&path, &curve).unwrap();
        let back = read_curve_csv(&path).unwrap();
        assert_eq!(back.grid, curve.grid);
        let q = curve.quantized(6);
        assert_eq!(back.tpr, q.tpr, "parse recovers the quantized values bitwise");
        assert_eq!(back.tnr, q.tnr);
        // writing the quantized curve again is byte-identical
        let path2 = tmp("curve2.csv");
        write_curve_csv(&path2, &q).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn curve_csv_rejects_bad_header() {
        let path = tmp("badcurve.csv");
        fs::write(&path, "d,tpr,tnr\n0,0,1\n2,1,0\n").unwrap();
        assert!(matches!(read_curve_csv(&path), Err(TtcError::Format(_))));
    }

    #[test]
    fn model_round_trip_preserves_f32_values_tau_and_grid() {
        let params = ModelParams::init(NetConfig::with_dim(6), 9).unwrap();
        let grid = ThresholdGrid::default_unit_sphere();
        let path = tmp("model.ttcm");
        write_model(&path, &ModelArtifact { params: params.clone(), tau: Some(0.45), grid })
            .unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.tau, Some(0.45));
        assert_eq!(back.grid, grid);
        assert_eq!(back.params.config, params.config);
        for (a, b) in back.params.tensors().iter().zip(params.tensors()) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x, *y as f32 as f64, "storage is f32");
            }
        }
        // a second save of the loaded model is byte-identical (f32 is stable)
        let path2 = tmp("model2.ttcm");
        write_model(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn model_without_tau_reads_as_none() {
        let params = ModelParams::init(NetConfig::with_dim(4), 3).unwrap();
        let path = tmp("notau.ttcm");
        let grid = ThresholdGrid::default_unit_sphere();
        write_model(&path, &ModelArtifact { params, tau: None, grid }).unwrap();
        assert_eq!(read_model(&path).unwrap().tau, None);
    }

    #[test]
    fn model_reader_rejects_garbage() {
        let path = tmp("garbage.ttcm");
        fs::write(&path, b"TTCMxxxx").unwrap();
        assert!(matches!(read_model(&path), Err(TtcError::Format(_))));
    }
}
