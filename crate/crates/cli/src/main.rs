use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fiedler_seriation::io::{
    count_columns, read_labels, read_labels_column_from, read_points, read_ranking, read_ranking_column_from, write_labels,
    write_matrix, write_points, write_ranking,
};
use fiedler_seriation::metrics::{
    err_closed_rank, err_closed_time, err_open_rank, err_open_time, relative_error, relative_error_cyclic,
    relative_error_interior,
};
use fiedler_seriation::recover::recover;
use fiedler_seriation::{build_kernel, build_laplacian, comparison_matrix, serialrank_baseline, CurveKind, CurveSpec};
use fiedler_cli::pipeline::{generate_sample, run_denoise, run_pipeline, write_estimate, Denoise, Noise, PipelineConfig};
use fiedler_cli::sweep::{run_to_files, Method, SweepConfig};
use fiedler_cli::{render, Bandwidth, Format};
use serde_json::json;

/// Temporal ordering of noisy trajectory samples from Laplacian eigenvectors.
#[derive(Parser)]
#[command(name = "fiedler", version)]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for files given by relative name.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Summary format on stdout.
    #[arg(long, global = true, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic curve, optionally with noise.
    Generate(GenerateArgs),
    /// Project observations onto a dominant singular subspace.
    Denoise(DenoiseArgs),
    /// Estimate labels and ranking from a point file.
    Recover(RecoverArgs),
    /// Score an estimate against true labels.
    Evaluate(EvaluateArgs),
    /// Comparison-matrix ranking baseline.
    Baseline(BaselineArgs),
    /// Run a grid of sample sizes, SNRs and replicates.
    Sweep(SweepArgs),
    /// Generate, denoise, recover and evaluate in one go.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct NoiseArgs {
    /// Target signal-to-noise ratio.
    #[arg(long, conflicts_with = "eps")]
    snr: Option<f64>,
    /// Per-entry Gaussian noise standard deviation.
    #[arg(long)]
    eps: Option<f64>,
}

impl NoiseArgs {
    fn noise(&self) -> Noise {
        match (self.snr, self.eps) {
            (Some(s), _) => Noise::Snr(s),
            (None, Some(e)) => Noise::Eps(e),
            (None, None) => Noise::None,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// half-circle, cardioid, circle or embedded:<dim>
    #[arg(long)]
    curve: CurveSpec,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Point file (one point per row).
    #[arg(long, default_value = "z.csv")]
    out: PathBuf,
    /// Label file, labels scaled to [0, 2pi].
    #[arg(long, default_value = "t.csv")]
    labels: PathBuf,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input has a header row.
    #[arg(long)]
    header: bool,
    /// Fixed projection rank.
    #[arg(long, conflicts_with_all = ["auto", "eta"])]
    rank: Option<usize>,
    /// Rank cap for the sketched rank estimate.
    #[arg(long)]
    auto: Option<usize>,
    /// Singular value ratio threshold for the rank estimate.
    #[arg(long, default_value_t = 1e-3)]
    eta: f64,
    /// Write basis coordinates (r x N) instead of the projected points.
    #[arg(long)]
    coordinates: bool,
    #[arg(long, default_value = "zt.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long, conflicts_with_all = ["sigma2", "bandwidth"])]
    sigma: Option<f64>,
    #[arg(long, conflicts_with = "bandwidth")]
    sigma2: Option<f64>,
    /// auto (rate rule, needs --noise-level) or slope.
    #[arg(long)]
    bandwidth: Option<String>,
    /// Noise standard deviation for the auto rule.
    #[arg(long, default_value_t = 0.0)]
    noise_level: f64,
}

impl BandwidthArgs {
    fn policy(&self) -> anyhow::Result<Bandwidth> {
        Ok(match (self.sigma, self.sigma2, self.bandwidth.as_deref()) {
            (Some(sigma), _, _) => Bandwidth::Sigma { sigma },
            (_, Some(sigma2), _) => Bandwidth::Sigma2 { sigma2 },
            (_, _, Some("auto")) => Bandwidth::Auto { noise_level: self.noise_level },
            (_, _, Some("slope")) | (_, _, None) => Bandwidth::Slope,
            (_, _, Some(other)) => bail!("unknown bandwidth rule '{other}', expected auto or slope"),
        })
    }
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    header: bool,
    /// open or closed
    #[arg(long)]
    kind: CurveKind,
    #[command(flatten)]
    bw: BandwidthArgs,
    #[arg(long, default_value_t = fiedler_seriation::eigen::DEFAULT_TOL)]
    eig_tol: f64,
    /// Also write the dense Laplacian here.
    #[arg(long)]
    dump_laplacian: Option<PathBuf>,
    /// `index,t_hat,rank` table.
    #[arg(long, default_value = "t_hat.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Metric {
    Time,
    Rank,
}

#[derive(Args)]
struct EvaluateArgs {
    /// `index,t` true labels.
    #[arg(long)]
    truth: PathBuf,
    /// `index,t_hat[,rank]` estimate; rank-only files also work with --metric rank.
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    kind: CurveKind,
    #[arg(long, value_enum, default_value = "time")]
    metric: Metric,
    /// Open-curve interior margin; in radians for time, as a fraction for rank.
    #[arg(long)]
    delta: Option<f64>,
    /// Clean points, enabling the relative Frobenius error.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long, default_value = "baseline.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    curve: CurveSpec,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// SNR values, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, value_delimiter = ',', default_value = "spectral")]
    methods: Vec<Method>,
    #[command(flatten)]
    bw: BandwidthArgs,
    /// Rank cap for sketched denoising before recovery.
    #[arg(long)]
    r0: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    eta: f64,
    #[arg(long, default_value_t = fiedler_seriation::metrics::DEFAULT_DELTA_FRACTION)]
    delta_fraction: f64,
    /// Leave wall-clock columns empty so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    curve: CurveSpec,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, conflicts_with = "auto")]
    rank: Option<usize>,
    #[arg(long)]
    auto: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    eta: f64,
    #[command(flatten)]
    bw: BandwidthArgs,
    #[arg(long, default_value_t = fiedler_seriation::eigen::DEFAULT_TOL)]
    eig_tol: f64,
    #[arg(long, default_value_t = fiedler_seriation::metrics::DEFAULT_DELTA_FRACTION)]
    delta_fraction: f64,
}

fn denoise_choice(rank: Option<usize>, auto: Option<usize>, eta: f64) -> Option<Denoise> {
    match (rank, auto) {
        (Some(r), _) => Some(Denoise::FixedRank(r)),
        (None, Some(r0)) => Some(Denoise::Auto { r0, eta }),
        (None, None) => None,
    }
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    format: Format,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn emit(&self, v: serde_json::Value) {
        println!("{}", render(&v, self.format));
    }
}

fn generate_cmd(ctx: &Ctx, a: GenerateArgs) -> anyhow::Result<()> {
    let s = generate_sample(a.curve, a.n, a.noise.noise(), ctx.seed)?;
    let (out, labels) = (ctx.path(&a.out), ctx.path(&a.labels));
    write_points(&out, &s.z)?;
    write_labels(&labels, &s.truth)?;
    ctx.emit(json!({"points": out.display().to_string(), "labels": labels.display().to_string(), "n": s.z.len(), "dim": s.z.dim()}));
    Ok(())
}

fn denoise_cmd(ctx: &Ctx, a: DenoiseArgs) -> anyhow::Result<()> {
    let z = read_points(&a.input, a.header).with_context(|| format!("reading {}", a.input.display()))?;
    let how = match denoise_choice(a.rank, a.auto, a.eta) {
        Some(h) => h,
        None => bail!("give either --rank or --auto"),
    };
    let d = run_denoise(&z, how, ctx.seed)?;
    let out = ctx.path(&a.out);
    let written = if a.coordinates { d.coordinates()? } else { d.z_tilde.clone() };
    write_points(&out, &written)?;
    ctx.emit(json!({"out": out.display().to_string(), "r_hat": d.r_hat, "top_singular_value": d.singular_values.first()}));
    Ok(())
}

fn recover_cmd(ctx: &Ctx, a: RecoverArgs) -> anyhow::Result<()> {
    let z = read_points(&a.input, a.header).with_context(|| format!("reading {}", a.input.display()))?;
    let params = a.bw.policy()?.resolve(&z, a.kind)?;
    if let Some(p) = &a.dump_laplacian {
        let l = build_laplacian(build_kernel(&z, params), a.kind)?;
        write_matrix(&ctx.path(p), l.matrix())?;
    }
    let rec = recover(&z, a.kind, params, a.eig_tol)?;
    let out = ctx.path(&a.out);
    write_estimate(&out, &rec)?;
    ctx.emit(json!({
        "out": out.display().to_string(),
        "sigma": rec.sigma,
        "eigenvalues": rec.eigenvalues,
        "clamped": rec.output.clamped_count,
        "degenerate": rec.output.degenerate.len(),
    }));
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> anyhow::Result<()> {
    let truth = read_labels(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let truth_rank = fiedler_seriation::ranking_from_labels(&truth);
    let open = a.kind == CurveKind::OpenCurve;
    let mut v = match a.metric {
        Metric::Time => {
            let est = read_labels_column_from(fs::File::open(&a.estimate)?, 1)?;
            let delta = a.delta.unwrap_or(fiedler_seriation::metrics::default_delta(TAU));
            let r = if open { err_open_time(&truth, &est, delta)? } else { err_closed_time(&truth, &est)? };
            json!({"metric": "time", "error": r.error, "r": r.r, "theta": r.theta, "shift": r.shift, "delta": if open { Some(delta) } else { None }})
        }
        Metric::Rank => {
            let est = rank_column(&a.estimate)?;
            let delta = a.delta.unwrap_or(fiedler_seriation::metrics::DEFAULT_DELTA_FRACTION);
            let r = if open { err_open_rank(&truth_rank, &est, delta)? } else { err_closed_rank(&truth_rank, &est)? };
            json!({"metric": "rank", "error": r.error, "r": r.r, "theta": r.theta, "shift": r.shift, "delta": if open { Some(delta) } else { None }})
        }
    };
    if let Some(p) = &a.points {
        let x = read_points(p, a.header).with_context(|| format!("reading {}", p.display()))?;
        let est = rank_column(&a.estimate)?;
        let rel = if open {
            let delta = match a.metric {
                Metric::Time => a.delta,
                Metric::Rank => None,
            };
            relative_error_interior(&x, &truth, &est, delta.unwrap_or(fiedler_seriation::metrics::default_delta(TAU)))?
        } else {
            relative_error_cyclic(&x, &truth_rank, &est)?
        };
        let obj = v.as_object_mut().expect("object");
        obj.insert("relative_error".into(), json!(rel));
        obj.insert("relative_error_literal".into(), json!(relative_error(&x, &truth_rank, &est)?));
    }
    ctx.emit(v);
    Ok(())
}

/// Ranks from the last column of an estimate file: the `rank` column of a
/// recovery table, or the only value column of a ranking file.
fn rank_column(path: &Path) -> anyhow::Result<fiedler_seriation::Ranking> {
    let cols = count_columns(path)?;
    if cols < 2 {
        bail!("{}: expected an index column and a rank column", path.display());
    }
    let p = match cols {
        2 => read_ranking(path)?,
        _ => read_ranking_column_from(fs::File::open(path)?, cols - 1)?,
    };
    Ok(p)
}

fn baseline_cmd(ctx: &Ctx, a: BaselineArgs) -> anyhow::Result<()> {
    let z = read_points(&a.input, a.header).with_context(|| format!("reading {}", a.input.display()))?;
    let p = serialrank_baseline(&comparison_matrix(&z))?;
    let out = ctx.path(&a.out);
    write_ranking(&out, &p)?;
    ctx.emit(json!({"out": out.display().to_string(), "n": p.len()}));
    Ok(())
}

fn sweep_cmd(ctx: &Ctx, a: SweepArgs) -> anyhow::Result<()> {
    let cfg = SweepConfig {
        curve: a.curve,
        n_values: a.n,
        snr_values: a.snr,
        replicates: a.replicates,
        bandwidth: a.bw.policy()?,
        methods: a.methods,
        seed: ctx.seed,
        delta_fraction: a.delta_fraction,
        denoise: a.r0.map(|r0| (r0, a.eta)),
        record_timing: !a.no_timing,
    };
    let out = ctx.path(&a.out);
    let rows = run_to_files(&cfg, &out)?;
    let failed = rows.iter().filter(|r| !r.is_aggregate() && r.error.is_some()).count();
    ctx.emit(json!({"out": out.display().to_string(), "rows": rows.len(), "failed": failed}));
    Ok(())
}

fn pipeline_cmd(ctx: &Ctx, a: PipelineArgs) -> anyhow::Result<()> {
    let cfg = PipelineConfig {
        curve: a.curve,
        n: a.n,
        noise: a.noise.noise(),
        denoise: denoise_choice(a.rank, a.auto, a.eta),
        bandwidth: a.bw.policy()?,
        seed: ctx.seed,
        delta_fraction: a.delta_fraction,
        eig_tol: a.eig_tol,
        out_dir: ctx.out_dir.clone(),
    };
    let report = run_pipeline(&cfg)?;
    match ctx.format {
        Format::Json => println!("{}", fiedler_cli::to_json(&report)),
        Format::Csv => {
            let flat: serde_json::Map<_, _> =
                report.as_object().expect("object").iter().filter(|(_, v)| !v.is_array() && !v.is_object()).map(|(k, v)| (k.clone(), v.clone())).collect();
            ctx.emit(serde_json::Value::Object(flat));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring thread pool")?;
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx { seed: cli.seed, out_dir: cli.out_dir, format: cli.format };
    match cli.command {
        Command::Generate(a) => generate_cmd(&ctx, a),
        Command::Denoise(a) => denoise_cmd(&ctx, a),
        Command::Recover(a) => recover_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Baseline(a) => baseline_cmd(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::Pipeline(a) => pipeline_cmd(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({"error": format!("{e:#}"), "causes": chain}));
            ExitCode::FAILURE
        }
    }
}
