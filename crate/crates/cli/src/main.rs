use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ssel_core::linalg::SubsetIds;
use ssel_core::samplers::diag::{tv_distance, tv_distance_diag, MAX_DIAG_POINTS};
use ssel_core::samplers::volume::{k_subsets, mcmc_volume_init, volume_distribution};
use ssel_core::stream::write_points;
use ssel_core::{
    check_lambda, generate_synthetic, report, run_experiment, AccessMode, Algorithm, DatasetSource,
    DatasetSpec, ExperimentSpec, FileFormat, GroundTruth, InitMode, ParamOverrides, SynthParams,
};

#[derive(Parser)]
#[command(name = "ssel", version, about = "Subset selection for lp subspace approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted low-rank dataset.
    Gen(GenArgs),
    /// Run trials of one algorithm and report errors against the optimum.
    Run(Box<RunArgs>),
    /// Distributional diagnostics on small instances.
    #[command(subcommand)]
    Diag(DiagCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

impl From<Format> for FileFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => FileFormat::Csv,
            Format::Bin => FileFormat::Bin,
        }
    }
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    /// Expected norm of the noise added to each inlier.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_frac: f64,
    /// Distance of the outliers from the planted subspace.
    #[arg(long, default_value_t = 10.0)]
    outlier_scale: f64,
}

impl SynthArgs {
    fn params(&self, seed: u64) -> SynthParams {
        SynthParams::new(self.n, self.d, self.rank, self.noise, seed)
            .with_outliers(self.outlier_frac, self.outlier_scale)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `bin` for a `.bin` extension, `csv` otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset file (CSV or binary). Without it a synthetic instance is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground-truth sidecar; defaults to `<input>.truth.json` when present.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value = "mcmc")]
    alg: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// `t=..,l=..,m=..`; individual flags take precedence.
    #[arg(long)]
    params_override: Option<String>,
    /// exact-volume, mcmc-volume or adaptive-k-pass.
    #[arg(long, default_value = "exact-volume")]
    init: String,
    #[arg(long)]
    walk_steps: Option<usize>,
    /// Re-read the input on every pass instead of loading it.
    #[arg(long)]
    streaming: bool,
    /// Report zero wall time so that reports are reproducible byte for byte.
    #[arg(long)]
    deterministic: bool,
    /// Report CSV; printed to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Expected format of `--input`; the run fails if the file is not in it.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Chains against the exact adaptive-sampling law.
    Tv(TvArgs),
    /// The volume walk against exact volume sampling.
    Volume(VolumeArgs),
}

#[derive(Args)]
struct TvArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Size of the pivot subset (its first rows).
    #[arg(long, default_value_t = 1)]
    s0: usize,
    /// Rows added to the pivot to form the current subset.
    #[arg(long, default_value_t = 0)]
    extra: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail (exit 1) when the empirical TV exceeds this.
    #[arg(long)]
    max_tv: Option<f64>,
}

#[derive(Args)]
struct VolumeArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 50_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    max_tv: f64,
}

/// Invalid input, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A failed pass-count or guarantee check, exit code 1.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn usage(e: ssel_core::Error) -> anyhow::Error {
    match e {
        ssel_core::Error::InvalidParameter(_) | ssel_core::Error::EnumerationTooLarge { .. } => {
            Usage(e.to_string()).into()
        }
        e => e.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(*a),
        Command::Diag(DiagCommand::Tv(a)) => diag_tv(a),
        Command::Diag(DiagCommand::Volume(a)) => diag_volume(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn truth_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

fn gen(a: GenArgs) -> Result<()> {
    let params = a.synth.params(a.seed);
    params.validate().map_err(usage)?;
    let (points, truth) = generate_synthetic(&params).map_err(usage)?;
    let format = a.format.map(FileFormat::from).unwrap_or_else(|| {
        if a.out.extension().is_some_and(|e| e == "bin") {
            FileFormat::Bin
        } else {
            FileFormat::Csv
        }
    });
    write_points(&points, &a.out, format)?;
    let sidecar = truth_path(&a.out);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&truth)?)
        .with_context(|| format!("writing {}", sidecar.display()))?;
    let lambda = check_lambda(&points, &truth.basis(), params.outlier_frac, Some(&truth.inlier_ids))?;
    println!(
        "wrote {} points in {} dimensions to {}",
        points.n(),
        points.d(),
        a.out.display()
    );
    println!("planted rank: {}", truth.planted_basis.len());
    println!("inliers: {}, outliers: {}", truth.inlier_ids.len(), truth.outlier_ids.len());
    println!("inlier error share w.r.t. planted subspace (lambda): {lambda:.6}");
    println!("ground truth: {}", sidecar.display());
    Ok(())
}

fn overrides(a: &RunArgs) -> Result<ParamOverrides> {
    let mut o = match &a.params_override {
        Some(s) => ParamOverrides::parse(s).map_err(usage)?,
        None => ParamOverrides::default(),
    };
    for (flag, value, slot) in [("t", a.t, &mut o.t), ("l", a.l, &mut o.l), ("m", a.m, &mut o.m)] {
        if let Some(v) = value {
            if v == 0 {
                bail!(Usage(format!("--{flag} must be at least 1")));
            }
            *slot = Some(v);
        }
    }
    Ok(o)
}

fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The experiment described by the `run` flags.
fn run_spec(a: &RunArgs) -> Result<ExperimentSpec> {
    let algorithm: Algorithm = a.alg.parse().map_err(usage)?;
    let init: InitMode = a.init.parse().map_err(usage)?;
    if let (Some(path), Some(want)) = (&a.input, a.format) {
        let found = FileFormat::detect(path)?;
        if found != FileFormat::from(want) {
            bail!(Usage(format!("{} is not in the requested format", path.display())));
        }
    }
    let dataset = match &a.input {
        Some(p) => DatasetSpec::File(p.clone()),
        None => DatasetSpec::Synthetic(a.synth.params(a.seed)),
    };
    let truth = match (&a.truth, &a.input) {
        (Some(t), _) => Some(read_truth(t)?),
        (None, Some(input)) if truth_path(input).exists() => Some(read_truth(&truth_path(input))?),
        _ => None,
    };
    let mut spec = ExperimentSpec::new(dataset, algorithm, a.k);
    spec.p = a.p;
    spec.epsilon = a.epsilon;
    spec.beta = a.beta;
    spec.lambda = a.lambda;
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.init = init;
    spec.overrides = overrides(a)?;
    spec.walk_steps = a.walk_steps;
    spec.mode = if a.streaming {
        AccessMode::Streaming
    } else {
        AccessMode::InMemory
    };
    spec.deterministic = a.deterministic;
    spec.truth = truth;
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

fn run(a: RunArgs) -> Result<()> {
    let spec = run_spec(&a)?;
    let outcome = run_experiment(&spec).map_err(usage)?;
    match &a.out {
        Some(path) => report::write_report_file(&outcome.rows, path)?,
        None => print!("{}", report::to_csv_string(&outcome.rows)?),
    }
    let s = &outcome.summary;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "summary: algorithm={} trials={} median_ratio={} median_ratio_rank_k={} passes={}",
        spec.algorithm,
        s.trials,
        fmt_opt(s.median_ratio),
        fmt_opt(s.median_ratio_rank_k),
        s.passes.map_or_else(|| "mixed".to_string(), |p| p.to_string()),
    );
    if spec.beta.is_some() {
        println!(
            "inliers: median_inlier_ratio={} median_inlier_ratio_rank_k={} observed_lambda={}",
            fmt_opt(s.median_inlier_ratio),
            fmt_opt(s.median_inlier_ratio_rank_k),
            fmt_opt(s.observed_lambda),
        );
    }
    if !s.pass_failures.is_empty() {
        bail!(CheckFailed(format!(
            "pass-count check failed: {}",
            s.pass_failures.join("; ")
        )));
    }
    Ok(())
}

fn diag_tv(a: TvArgs) -> Result<()> {
    if a.n > MAX_DIAG_POINTS {
        bail!(Usage(format!(
            "n = {} is too large for the exact target (at most {MAX_DIAG_POINTS})",
            a.n
        )));
    }
    if a.s0 + a.extra > a.n {
        bail!(Usage("--s0 plus --extra exceeds n".into()));
    }
    let (points, _) =
        generate_synthetic(&SynthParams::new(a.n, a.d, a.rank, a.noise, a.seed)).map_err(usage)?;
    let s0 = SubsetIds((0..a.s0).collect());
    let cur = SubsetIds((0..a.s0 + a.extra).collect());
    let d = tv_distance_diag(&points, &s0, &cur, a.m, a.p, a.trials, a.seed).map_err(usage)?;
    println!("n={} m={} trials={}", d.n, d.m, d.trials);
    println!("tv_empirical={:.6}", d.tv_empirical);
    println!("tv_exact={}", fmt_opt(d.tv_exact));
    println!("tv_start={:.6}", d.tv_start);
    println!("gamma={:.6}", d.gamma);
    println!("contraction_bound={:.6e}", d.contraction_bound);
    println!("acceptance_rate={:.6}", d.acceptance_rate);
    println!("error_ratio={:.6}", d.error_ratio);
    if let Some(max) = a.max_tv {
        if d.tv_empirical > max {
            bail!(CheckFailed(format!("empirical TV {:.6} exceeds {max}", d.tv_empirical)));
        }
    }
    Ok(())
}

fn diag_volume(a: VolumeArgs) -> Result<()> {
    let (points, _) = generate_synthetic(&SynthParams::new(a.n, a.d, a.d, a.noise, a.seed)).map_err(usage)?;
    let exact: Vec<f64> = volume_distribution(&points, a.k, 2.0)
        .map_err(usage)?
        .into_iter()
        .map(|e| e.1)
        .collect();
    let index: Vec<Vec<usize>> = k_subsets(a.n, a.k).collect();
    let points = std::sync::Arc::new(points);
    let mut counts = vec![0u64; index.len()];
    let (mut proposed, mut accepted) = (0u64, 0u64);
    for trial in 0..a.trials {
        let mut src = DatasetSource::in_memory(points.clone());
        let seed = ssel_core::seed::child(a.seed, ssel_core::seed::TRIAL, trial as u64);
        let (rows, stats) = mcmc_volume_init(&mut src, a.k, a.steps, seed).map_err(usage)?;
        let mut ids = rows.id_slice().to_vec();
        ids.sort_unstable();
        let i = index.binary_search(&ids).expect("a k-subset");
        counts[i] += 1;
        proposed += stats.proposed;
        accepted += stats.accepted;
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / a.trials as f64).collect();
    let tv = tv_distance(&empirical, &exact);
    println!("subsets={} steps={} trials={}", index.len(), a.steps, a.trials);
    println!("tv={tv:.6}");
    println!(
        "acceptance_rate={:.6}",
        if proposed > 0 { accepted as f64 / proposed as f64 } else { 0.0 }
    );
    if tv > a.max_tv {
        bail!(CheckFailed(format!("TV {tv:.6} exceeds {}", a.max_tv)));
    }
    Ok(())
}
