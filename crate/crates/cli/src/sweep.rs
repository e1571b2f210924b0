//! Grid sweeps over sample size, SNR and replicate.
//!
//! Cells run in the rayon pool; rows are gathered and written in
//! `(n, snr, replicate, method)` order so output does not depend on
//! scheduling.

use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use fiedler_seriation::eigen::DEFAULT_TOL;
use fiedler_seriation::metrics::{err_closed_time, err_open_time, relative_error_cyclic, relative_error_interior};
use fiedler_seriation::recover::{normalize_labels, recover};
use fiedler_seriation::synth::{comparison_matrix, derive_seed, generate, noise_for_snr, serialrank_baseline};
use fiedler_seriation::{denoise_auto, ranking_from_labels, CurveKind, CurveSpec, DataMatrix, Ranking, TimeLabels};
use rayon::prelude::*;
use serde_json::json;

use crate::{fmt_float, Bandwidth};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Spectral,
    SerialRank,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Spectral => "spectral",
            Method::SerialRank => "serialrank",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectral" => Ok(Method::Spectral),
            "serialrank" => Ok(Method::SerialRank),
            _ => Err(format!("unknown method '{s}', expected spectral or serialrank")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub curve: CurveSpec,
    pub n_values: Vec<usize>,
    pub snr_values: Vec<f64>,
    pub replicates: usize,
    pub bandwidth: Bandwidth,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Open-curve interior margin as a fraction of the label range.
    pub delta_fraction: f64,
    /// Optional randomized denoising `(r0, eta)` before spectral recovery.
    pub denoise: Option<(usize, f64)>,
    pub record_timing: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.n_values.is_empty() {
            bail!("sweep needs at least one sample size");
        }
        if self.snr_values.is_empty() {
            bail!("sweep needs at least one SNR value");
        }
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            bail!("sweep needs at least one method");
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 3) {
            bail!("sample size {n} is too small");
        }
        if let Some(&s) = self.snr_values.iter().find(|&&s| !(s.is_finite() && s > 0.0)) {
            bail!("SNR values must be positive, got {s}");
        }
        if !(0.0..0.5).contains(&self.delta_fraction) {
            bail!("delta fraction must lie in [0, 0.5)");
        }
        Ok(())
    }

    fn grid(&self) -> Vec<(usize, f64, usize)> {
        let mut ns = self.n_values.clone();
        ns.sort_unstable();
        ns.dedup();
        let mut snrs = self.snr_values.clone();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        let mut cells = Vec::new();
        for &n in &ns {
            for &snr in &snrs {
                for rep in 0..self.replicates {
                    cells.push((n, snr, rep));
                }
            }
        }
        cells
    }

    fn cell_seed(&self, n: usize, snr: f64, rep: usize) -> u64 {
        derive_seed(self.seed, &[n as u64, snr.to_bits(), rep as u64])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub snr: f64,
    /// `None` on aggregate rows.
    pub replicate: Option<usize>,
    pub seed: Option<u64>,
    pub method: Method,
    pub sigma: Option<f64>,
    pub time_error: Option<f64>,
    pub relative_error: Option<f64>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn is_aggregate(&self) -> bool {
        self.replicate.is_none()
    }
}

struct CellData {
    x: DataMatrix,
    z: DataMatrix,
    truth: TimeLabels,
    truth_rank: Ranking,
}

fn prepare(cfg: &SweepConfig, n: usize, snr: f64, seed: u64) -> fiedler_seriation::Result<CellData> {
    let (x, t) = generate(cfg.curve, n, derive_seed(seed, &[0]))?;
    let z = noise_for_snr(&x, snr, derive_seed(seed, &[1]))?;
    let truth = match cfg.curve.kind() {
        CurveKind::OpenCurve => normalize_labels(t.as_slice(), cfg.curve.domain_end())?,
        CurveKind::ClosedLoop => t,
    };
    let truth_rank = ranking_from_labels(&truth);
    Ok(CellData { x, z, truth, truth_rank })
}

struct MethodResult {
    sigma: Option<f64>,
    time_error: Option<f64>,
    relative_error: f64,
}

fn score(cfg: &SweepConfig, data: &CellData, ranking: &Ranking) -> fiedler_seriation::Result<f64> {
    match cfg.curve.kind() {
        CurveKind::OpenCurve => relative_error_interior(&data.x, &data.truth, ranking, cfg.delta_fraction * TAU),
        CurveKind::ClosedLoop => relative_error_cyclic(&data.x, &data.truth_rank, ranking),
    }
}

fn run_method(cfg: &SweepConfig, data: &CellData, method: Method, seed: u64) -> fiedler_seriation::Result<MethodResult> {
    let kind = cfg.curve.kind();
    match method {
        Method::Spectral => {
            let work = match cfg.denoise {
                Some((r0, eta)) => denoise_auto(&data.z, r0.min(data.z.dim().min(data.z.len())), eta, derive_seed(seed, &[2]))?
                    .coordinates()?,
                None => data.z.clone(),
            };
            let params = cfg.bandwidth.resolve(&work, kind)?;
            let rec = recover(&work, kind, params, DEFAULT_TOL)?;
            let labels = &rec.output.labels;
            let time_error = match kind {
                CurveKind::OpenCurve => err_open_time(&data.truth, labels, cfg.delta_fraction * TAU)?.error,
                CurveKind::ClosedLoop => err_closed_time(&data.truth, labels)?.error,
            };
            Ok(MethodResult {
                sigma: Some(params.sigma()),
                time_error: Some(time_error),
                relative_error: score(cfg, data, &rec.output.ranking)?,
            })
        }
        Method::SerialRank => {
            let ranking = serialrank_baseline(&comparison_matrix(&data.z))?;
            Ok(MethodResult { sigma: None, time_error: None, relative_error: score(cfg, data, &ranking)? })
        }
    }
}

fn run_cell(cfg: &SweepConfig, n: usize, snr: f64, rep: usize) -> Vec<SweepRow> {
    let seed = cfg.cell_seed(n, snr, rep);
    let base = |method: Method| SweepRow {
        n,
        snr,
        replicate: Some(rep),
        seed: Some(seed),
        method,
        sigma: None,
        time_error: None,
        relative_error: None,
        wall_ms: None,
        error: None,
    };
    let data = match prepare(cfg, n, snr, seed) {
        Ok(d) => d,
        Err(e) => {
            return cfg.methods.iter().map(|&m| SweepRow { error: Some(e.to_string()), ..base(m) }).collect();
        }
    };
    cfg.methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let result = run_method(cfg, &data, m, seed);
            let wall_ms = cfg.record_timing.then(|| start.elapsed().as_secs_f64() * 1e3);
            match result {
                Ok(r) => SweepRow {
                    sigma: r.sigma,
                    time_error: r.time_error,
                    relative_error: Some(r.relative_error),
                    wall_ms,
                    ..base(m)
                },
                Err(e) => {
                    log::warn!("cell n={n} snr={snr} replicate={rep} method={m}: {e}");
                    SweepRow { wall_ms, error: Some(e.to_string()), ..base(m) }
                }
            }
        })
        .collect()
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(rows: &[SweepRow], cfg: &SweepConfig) -> Vec<SweepRow> {
    let first = &rows[0];
    cfg.methods
        .iter()
        .map(|&m| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.method == m).collect();
            let failed = group.iter().filter(|r| r.error.is_some()).count();
            SweepRow {
                n: first.n,
                snr: first.snr,
                replicate: None,
                seed: None,
                method: m,
                sigma: mean_of(group.iter().map(|r| r.sigma)),
                time_error: mean_of(group.iter().map(|r| r.time_error)),
                relative_error: mean_of(group.iter().map(|r| r.relative_error)),
                wall_ms: mean_of(group.iter().map(|r| r.wall_ms)),
                error: (failed > 0).then(|| format!("{failed} of {} replicates failed", group.len())),
            }
        })
        .collect()
}

/// Runs every cell and returns per-replicate rows, each `(n, snr)` group
/// followed by one mean row per method.
pub fn sweep(cfg: &SweepConfig) -> anyhow::Result<Vec<SweepRow>> {
    cfg.validate()?;
    let cells = cfg.grid();
    let per_cell: Vec<Vec<SweepRow>> = cells.par_iter().map(|&(n, snr, rep)| run_cell(cfg, n, snr, rep)).collect();

    let mut rows = Vec::new();
    for group in per_cell.chunks(cfg.replicates) {
        let flat: Vec<SweepRow> = group.iter().flatten().cloned().collect();
        let means = aggregate(&flat, cfg);
        rows.extend(flat);
        rows.extend(means);
    }
    Ok(rows)
}

fn opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str = "row_type,curve,n,snr,replicate,seed,method,sigma,time_error,relative_error,wall_ms,error";

pub fn write_csv<W: Write>(mut w: W, cfg: &SweepConfig, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            if r.is_aggregate() { "mean" } else { "cell" },
            cfg.curve,
            r.n,
            fmt_float(r.snr),
            r.replicate.map(|v| v.to_string()).unwrap_or_default(),
            r.seed.map(|v| v.to_string()).unwrap_or_default(),
            r.method,
            opt_float(r.sigma),
            opt_float(r.time_error),
            opt_float(r.relative_error),
            opt_float(r.wall_ms),
            csv_field(r.error.as_deref().unwrap_or_default()),
        )?;
    }
    Ok(())
}

/// Configuration, seeds and tool version for a finished sweep.
pub fn manifest(cfg: &SweepConfig, rows: &[SweepRow]) -> serde_json::Value {
    let cells: Vec<serde_json::Value> = cfg
        .grid()
        .into_iter()
        .map(|(n, snr, rep)| json!({"n": n, "snr": snr, "replicate": rep, "seed": cfg.cell_seed(n, snr, rep)}))
        .collect();
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": {
            "curve": cfg.curve.to_string(),
            "n_values": cfg.n_values,
            "snr_values": cfg.snr_values,
            "replicates": cfg.replicates,
            "bandwidth": cfg.bandwidth,
            "methods": cfg.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            "seed": cfg.seed,
            "delta_fraction": cfg.delta_fraction,
            "denoise": cfg.denoise.map(|(r0, eta)| json!({"r0": r0, "eta": eta})),
            "record_timing": cfg.record_timing,
        },
        "cells": cells,
        "rows": rows.len(),
        "failed_rows": rows.iter().filter(|r| !r.is_aggregate() && r.error.is_some()).count(),
    })
}

/// Runs the sweep and writes the CSV plus a `<stem>.manifest.json` beside it.
pub fn run_to_files(cfg: &SweepConfig, out: &Path) -> anyhow::Result<Vec<SweepRow>> {
    let rows = sweep(cfg)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, cfg, &rows)?;
    fs::write(out, buf).with_context(|| format!("writing {}", out.display()))?;
    let manifest_path = out.with_extension("manifest.json");
    fs::write(&manifest_path, crate::to_json(&manifest(cfg, &rows)))
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> SweepConfig {
        SweepConfig {
            curve: CurveSpec::UnitCircle,
            n_values: vec![60, 40],
            snr_values: vec![100.0, 10.0, 1000.0],
            replicates: 2,
            bandwidth: Bandwidth::Sigma { sigma: 0.5 },
            methods,
            seed: 3,
            delta_fraction: 0.05,
            denoise: None,
            record_timing: false,
        }
    }

    #[test]
    fn row_count_and_order() {
        let cfg = small(vec![Method::Spectral]);
        let rows = sweep(&cfg).unwrap();
        let cells: Vec<&SweepRow> = rows.iter().filter(|r| !r.is_aggregate()).collect();
        assert_eq!(cells.len(), 12);
        assert_eq!(rows.len() - cells.len(), 6);
        let keys: Vec<(usize, u64, usize)> = cells.iter().map(|r| (r.n, r.snr.to_bits(), r.replicate.unwrap())).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| (a.0, f64::from_bits(a.1), a.2).partial_cmp(&(b.0, f64::from_bits(b.1), b.2)).unwrap());
        assert_eq!(keys, sorted);
        assert!(cells.iter().all(|r| r.error.is_none() && r.time_error.is_some()));
    }

    #[test]
    fn both_methods_on_open_curve() {
        let mut cfg = small(vec![Method::Spectral, Method::SerialRank]);
        cfg.curve = CurveSpec::Cardioid;
        cfg.n_values = vec![80];
        cfg.snr_values = vec![100.0];
        let rows = sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 + 2);
        let base: Vec<&SweepRow> = rows.iter().filter(|r| r.method == Method::SerialRank).collect();
        assert!(base.iter().all(|r| r.time_error.is_none() && r.relative_error.is_some()));
    }

    #[test]
    fn empty_grid_rejected() {
        let mut cfg = small(vec![Method::Spectral]);
        cfg.snr_values.clear();
        assert!(sweep(&cfg).is_err());
    }

    #[test]
    fn deterministic_csv() {
        let cfg = small(vec![Method::Spectral]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&mut a, &cfg, &sweep(&cfg).unwrap()).unwrap();
        write_csv(&mut b, &cfg, &sweep(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded() {
        let mut cfg = small(vec![Method::Spectral]);
        cfg.denoise = Some((5, 2.0));
        cfg.n_values = vec![30];
        cfg.snr_values = vec![0.1];
        cfg.replicates = 2;
        let rows = sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[..2].iter().all(|r| r.error.is_some() && r.relative_error.is_none()));
        assert_eq!(rows[2].error.as_deref(), Some("2 of 2 replicates failed"));
    }

    #[test]
    fn error_field_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
