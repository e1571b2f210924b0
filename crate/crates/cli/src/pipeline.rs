//! Generate, optionally denoise, recover and evaluate in one run.
//!
//! Every stage writes its artifact into the output directory before the
//! next one starts, so a failed run leaves the completed stages on disk and
//! any stage can be rerun by hand from those files.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use fiedler_seriation::eigen::DEFAULT_TOL;
use fiedler_seriation::io::{write_labels, write_points};
use fiedler_seriation::metrics::{
    err_closed_rank, err_closed_time, err_open_rank, err_open_time, relative_error_cyclic, relative_error_interior, snr,
};
use fiedler_seriation::recover::{normalize_labels, recover, SpectralRecovery};
use fiedler_seriation::synth::{add_noise, derive_seed, generate, noise_for_snr};
use fiedler_seriation::{
    denoise_auto, denoise_fixed_rank, ranking_from_labels, CurveKind, CurveSpec, DataMatrix, DenoiseResult, TimeLabels,
};
use serde_json::{json, Value};

use crate::Bandwidth;

/// How the synthetic observations are corrupted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    None,
    /// Noise rescaled to hit this signal-to-noise ratio exactly.
    Snr(f64),
    /// i.i.d. Gaussian entries with this standard deviation.
    Eps(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Denoise {
    FixedRank(usize),
    Auto { r0: usize, eta: f64 },
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub curve: CurveSpec,
    pub n: usize,
    pub noise: Noise,
    pub denoise: Option<Denoise>,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    /// Open-curve interior margin as a fraction of the label range.
    pub delta_fraction: f64,
    pub eig_tol: f64,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(curve: CurveSpec, n: usize, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            curve,
            n,
            noise: Noise::None,
            denoise: None,
            bandwidth: Bandwidth::Slope,
            seed: 0,
            delta_fraction: fiedler_seriation::metrics::DEFAULT_DELTA_FRACTION,
            eig_tol: DEFAULT_TOL,
            out_dir: out_dir.into(),
        }
    }
}

/// Synthetic sample: clean points, observed points and labels on `[0, 2pi]`.
pub struct Sample {
    pub x: DataMatrix,
    pub z: DataMatrix,
    pub truth: TimeLabels,
}

/// Draws a sample; the same seed always gives the same bytes.
pub fn generate_sample(curve: CurveSpec, n: usize, noise: Noise, seed: u64) -> fiedler_seriation::Result<Sample> {
    let (x, t) = generate(curve, n, derive_seed(seed, &[0]))?;
    let z = match noise {
        Noise::None => x.clone(),
        Noise::Snr(s) => noise_for_snr(&x, s, derive_seed(seed, &[1]))?,
        Noise::Eps(e) => add_noise(&x, e, derive_seed(seed, &[1]))?,
    };
    let truth = match curve.kind() {
        CurveKind::OpenCurve => normalize_labels(t.as_slice(), curve.domain_end())?,
        CurveKind::ClosedLoop => t,
    };
    Ok(Sample { x, z, truth })
}

pub fn run_denoise(z: &DataMatrix, how: Denoise, seed: u64) -> fiedler_seriation::Result<DenoiseResult> {
    match how {
        Denoise::FixedRank(r) => denoise_fixed_rank(z, r),
        Denoise::Auto { r0, eta } => denoise_auto(z, r0, eta, derive_seed(seed, &[2])),
    }
}

/// Label, rank and relative errors of an estimate against the truth.
pub fn evaluate(
    kind: CurveKind,
    x: &DataMatrix,
    truth: &TimeLabels,
    rec: &SpectralRecovery,
    delta_fraction: f64,
) -> fiedler_seriation::Result<Value> {
    let est = &rec.output;
    let truth_rank = ranking_from_labels(truth);
    let report = match kind {
        CurveKind::OpenCurve => {
            let time = err_open_time(truth, &est.labels, delta_fraction * TAU)?;
            let rank = err_open_rank(&truth_rank, &est.ranking, delta_fraction)?;
            let rel = relative_error_interior(x, truth, &est.ranking, delta_fraction * TAU)?;
            json!({
                "time_error": time.error,
                "time_reflected": time.r < 0,
                "rank_error": rank.error,
                "relative_error": rel,
                "delta": delta_fraction * TAU,
                "clamped": est.clamped_count,
            })
        }
        CurveKind::ClosedLoop => {
            let time = err_closed_time(truth, &est.labels)?;
            let rank = err_closed_rank(&truth_rank, &est.ranking)?;
            json!({
                "time_error": time.error,
                "time_reflected": time.r < 0,
                "time_rotation": time.theta,
                "rank_error": rank.error,
                "rank_shift": rank.shift,
                "relative_error": relative_error_cyclic(x, &truth_rank, &est.ranking)?,
                "degenerate": est.degenerate.len(),
            })
        }
    };
    Ok(report)
}

/// Writes the `index,t_hat,rank` table produced by recovery.
pub fn write_estimate(path: &Path, rec: &SpectralRecovery) -> anyhow::Result<()> {
    let ranks = rec.output.ranking.ranks();
    let mut text = String::from("index,t_hat,rank\n");
    for (i, (t, r)) in rec.output.labels.as_slice().iter().zip(ranks).enumerate() {
        text.push_str(&format!("{i},{},{r}\n", crate::fmt_float(*t)));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stage<T>(name: &str, r: fiedler_seriation::Result<T>) -> anyhow::Result<T> {
    r.with_context(|| format!("{name} stage failed"))
}

/// Runs all stages and returns the report that was written to `report.json`.
pub fn run_pipeline(cfg: &PipelineConfig) -> anyhow::Result<Value> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let kind = cfg.curve.kind();

    let sample = stage("generate", generate_sample(cfg.curve, cfg.n, cfg.noise, cfg.seed))?;
    stage("generate", write_points(&dir.join("z.csv"), &sample.z))?;
    stage("generate", write_labels(&dir.join("t.csv"), &sample.truth))?;
    log::info!("generated {} points in dimension {}", sample.z.len(), sample.z.dim());

    let (work, r_hat) = match cfg.denoise {
        Some(how) => {
            let d = stage("denoise", run_denoise(&sample.z, how, cfg.seed))?;
            stage("denoise", write_points(&dir.join("zt.csv"), &d.z_tilde))?;
            log::info!("denoised to rank {}", d.r_hat);
            (stage("denoise", d.coordinates())?, Some(d.r_hat))
        }
        None => (sample.z.clone(), None),
    };

    let params = stage("recover", cfg.bandwidth.resolve(&work, kind))?;
    let rec = stage("recover", recover(&work, kind, params, cfg.eig_tol))?;
    write_estimate(&dir.join("t_hat.csv"), &rec)?;

    let metrics = stage("evaluate", evaluate(kind, &sample.x, &sample.truth, &rec, cfg.delta_fraction))?;
    let realized_snr = match cfg.noise {
        Noise::None => None,
        _ => {
            let e = DataMatrix::new(sample.z.matrix() - sample.x.matrix())?;
            Some(stage("evaluate", snr(&sample.x, &e))?)
        }
    };
    let mut report = json!({
        "curve": cfg.curve.to_string(),
        "kind": kind.to_string(),
        "n": cfg.n,
        "dim": sample.z.dim(),
        "seed": cfg.seed,
        "snr": realized_snr,
        "bandwidth": cfg.bandwidth,
        "sigma": rec.sigma,
        "r_hat": r_hat,
        "eigenvalues": rec.eigenvalues,
    });
    let obj = report.as_object_mut().expect("object");
    if let Value::Object(m) = metrics {
        obj.extend(m);
    }
    let path = dir.join("report.json");
    fs::write(&path, crate::to_json(&report)).with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_circle() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(CurveSpec::UnitCircle, 200, dir.path());
        cfg.bandwidth = Bandwidth::Auto { noise_level: 0.0 };
        let report = run_pipeline(&cfg).unwrap();
        assert!(report["time_error"].as_f64().unwrap() < 0.3);
        assert!(report["snr"].is_null());
        for f in ["z.csv", "t.csv", "t_hat.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(!dir.path().join("zt.csv").exists());
    }

    #[test]
    fn denoise_stage_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(CurveSpec::EmbeddedCircle { dim: 40 }, 100, dir.path());
        cfg.noise = Noise::Snr(10.0);
        cfg.denoise = Some(Denoise::FixedRank(2));
        cfg.bandwidth = Bandwidth::Sigma { sigma: 0.5 };
        let report = run_pipeline(&cfg).unwrap();
        assert_eq!(report["r_hat"], 2);
        assert!((report["snr"].as_f64().unwrap() - 10.0).abs() < 1e-9);
        assert!(dir.path().join("zt.csv").exists());
    }

    #[test]
    fn failure_keeps_earlier_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(CurveSpec::UnitCircle, 50, dir.path());
        cfg.denoise = Some(Denoise::FixedRank(9));
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(format!("{err:#}").contains("denoise"));
        assert!(dir.path().join("z.csv").exists());
        assert!(!dir.path().join("report.json").exists());
    }
}
