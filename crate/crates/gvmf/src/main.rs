use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gvmf::io::{load_sample, save_sample, write_sample, NormPolicy};
use gvmf::pipeline::{self, BlockSpec, GroupGrid, TABLE_ALPHAS, TABLE_KAPPAS};
use gvmf::report::{Format, Table};
use gvmf::{Error, Parallel, Result};
use gvmf_core::gof::{CriticalValueSource, PowerScenario};
use gvmf_core::inference::{fit, Estimator, FitOptions};
use gvmf_core::knn::{estimate_entropy_with, KnnConfig};
use gvmf_core::model::{parse_direction, Gvmf, MomentSpec};
use gvmf_core::sampling::GvmfSampler;
use gvmf_core::{run_gof_test, Family, GofConfig, GvmfParams, SeedSpec, UnitVector};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gvmf", version, about = "Generalized von Mises-Fisher models on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from a GvMF law.
    Simulate(SimulateArgs),
    /// Evaluate the log-density at given points.
    Density(DensityArgs),
    /// Normalizing constant, moments and entropy of a law.
    Moments(MomentsArgs),
    /// Nearest-neighbour entropy estimate of a sample.
    Entropy(EntropyArgs),
    /// Estimate (α, κ, μ) from a sample.
    Fit(FitArgs),
    /// Entropy-based goodness-of-fit test with a parametric bootstrap.
    Gof(GofArgs),
    /// Simulated critical values over an (α, κ) grid.
    CriticalTable(CriticalArgs),
    /// Rejection rates under Fisher-Bingham alternatives.
    Power(PowerArgs),
    /// Block-wise axial tests of lattice-indexed data.
    Blocks(BlocksArgs),
    /// Quantile pairs of μ̂ᵀx against the fitted marginal law.
    Qq(QqArgs),
}

#[derive(Args, Clone)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Clone)]
struct LawArgs {
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    kappa: f64,
    /// Mean direction as comma-separated coordinates (default e₁).
    #[arg(long)]
    mu: Option<String>,
}

impl LawArgs {
    fn params(&self) -> Result<GvmfParams> {
        let mu = match &self.mu {
            Some(s) => parse_direction(s)?,
            None => UnitVector::basis(self.d, 0)?,
        };
        if mu.dim() != self.d {
            return Err(Error::Usage(format!("--mu has {} coordinates but --d is {}", mu.dim(), self.d)));
        }
        Ok(GvmfParams::new(self.family, self.alpha, self.kappa, mu)?)
    }
}

#[derive(Args, Clone)]
struct InputArgs {
    /// CSV file of unit vectors.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Rescale rows that are not unit vectors instead of rejecting them.
    #[arg(long)]
    renormalize: bool,
}

impl InputArgs {
    fn load(&self) -> Result<gvmf::io::Dataset> {
        let policy = if self.renormalize {
            NormPolicy::Renormalize
        } else {
            NormPolicy::Strict
        };
        load_sample(&self.input, self.d, policy)
    }
}

#[derive(Args, Clone)]
struct TestArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    beta_level: f64,
    #[arg(long, default_value = "mle", value_parser = parse_estimator)]
    estimator: Estimator,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl TestArgs {
    fn config(&self, family: Family) -> GofConfig {
        let mut cfg = GofConfig::new(family, SeedSpec::new(self.seed, 0));
        cfg.k = self.k;
        cfg.n_null_replicates = self.replicates;
        cfg.beta_level = self.beta_level;
        cfg.estimator = self.estimator;
        cfg
    }
}

fn parse_estimator(s: &str) -> std::result::Result<Estimator, String> {
    s.parse().map_err(|e: gvmf_core::Error| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    law: LawArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    law: LawArgs,
    /// Point at which to evaluate, comma-separated; repeatable.
    #[arg(long = "x")]
    points: Vec<String>,
    /// Evaluate at every row of this file instead.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    law: LawArgs,
    /// Moment orders, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    beta: Vec<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Perturb points by 1e-10 before searching so duplicates do not abort.
    #[arg(long)]
    jitter: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    family: Family,
    #[arg(long, default_value = "mle", value_parser = parse_estimator)]
    estimator: Estimator,
    /// Also re-optimize the direction jointly with (α, κ).
    #[arg(long)]
    refine_direction: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GofArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    family: Family,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CriticalArgs {
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, default_value = "TypeI_FB")]
    scenario: PowerScenario,
    #[arg(long, value_delimiter = ',', default_value = "0,1,5,10,15,20")]
    j: Vec<u32>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Alternative samples per value of j.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Fixed critical value, or "bootstrap" for a per-sample bootstrap.
    #[arg(long)]
    critical: Option<String>,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BlocksArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "16,15,16")]
    block_shape: Vec<i64>,
    #[arg(long, default_value_t = 100)]
    min_block_size: usize,
    /// Share null simulations between blocks with nearby fits (grid of
    /// α ∈ {4,6,8,10}, κ/α ∈ {4,6}, N = 3500).
    #[arg(long)]
    group_grid: bool,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct QqArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    family: Family,
    #[arg(long, default_value = "mle", value_parser = parse_estimator)]
    estimator: Estimator,
    #[command(flatten)]
    output: Output,
}

fn emit(table: &Table, output: &Output) -> Result<()> {
    match &output.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let mut w = BufWriter::new(file);
            table.write(&mut w, output.format)?;
            w.flush()?;
            Ok(())
        }
        None => table.write(std::io::stdout().lock(), output.format),
    }
}

fn num(x: f64) -> Value {
    json!(x)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let p = a.law.params()?;
    let sample = GvmfSampler::new(p)?.sample(SeedSpec::new(a.seed, a.stream), a.n)?;
    match (a.output.format, &a.output.out) {
        (Format::Csv, Some(path)) => save_sample(path, &sample, None),
        (Format::Csv, None) => {
            let mut w = BufWriter::new(std::io::stdout().lock());
            write_sample(&mut w, &sample, None)?;
            w.flush()?;
            Ok(())
        }
        (Format::Json, _) => {
            let cols: Vec<String> = (1..=sample.dim()).map(|c| format!("x{c}")).collect();
            let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut t = Table::new("simulate", &refs);
            for x in sample.rows() {
                t.push(x.iter().map(|v| num(*v)).collect());
            }
            emit(&t, &a.output)
        }
    }
}

fn density(a: DensityArgs) -> Result<()> {
    let p = a.law.params()?;
    let model = Gvmf::new(p.clone())?;
    let mut points: Vec<UnitVector> = Vec::new();
    for s in &a.points {
        points.push(parse_direction(s)?);
    }
    if let Some(path) = &a.input {
        let ds = load_sample(path, p.d, NormPolicy::Strict)?;
        for x in ds.sample.rows() {
            points.push(UnitVector::new(x.to_vec())?);
        }
    }
    if points.is_empty() {
        return Err(Error::Usage("give at least one --x point or an --input file".into()));
    }
    let mut t = Table::new("density", &["index", "x", "log_density", "density"]);
    for (i, x) in points.iter().enumerate() {
        let ld = model.log_density(x)?;
        t.push(vec![json!(i), json!(x.as_slice()), num(ld), num(ld.exp())]);
    }
    emit(&t, &a.output)
}

fn moments(a: MomentsArgs) -> Result<()> {
    let p = a.law.params()?;
    let model = Gvmf::new(p.clone())?;
    let mut t = Table::new("moments", &["quantity", "beta", "value"]);
    t.push(vec![json!("log_norm_const"), Value::Null, num(model.log_norm_const())]);
    t.push(vec![json!("entropy"), Value::Null, num(model.entropy()?)]);
    t.push(vec![json!("mean_resultant_length"), Value::Null, num(model.mean_resultant_length()?)]);
    let kind = p.family.natural_moment();
    for &beta in &a.beta {
        let v = model.moment(MomentSpec { beta, kind })?;
        t.push(vec![json!(kind.name()), num(beta), num(v)]);
    }
    emit(&t, &a.output)
}

fn entropy(a: EntropyArgs) -> Result<()> {
    let ds = a.input.load()?;
    let cfg = KnnConfig {
        jitter: a.jitter.then(|| SeedSpec::new(a.seed, 0)),
        ..KnnConfig::default()
    };
    let e = estimate_entropy_with(&ds.sample, a.k, &cfg, &Parallel::from_env())?;
    let mut t = Table::new("entropy", &["n", "k", "m", "entropy", "mean_log_rho"]);
    t.push(vec![json!(e.n), json!(e.k), json!(e.m), num(e.value), num(e.mean_log_rho)]);
    emit(&t, &a.output)
}

fn fit_row(t: &mut Table, family: Family, n: usize, f: &gvmf_core::FitResult) {
    t.push(vec![
        json!(family.name()),
        json!(f.method.name()),
        json!(n),
        json!(f.params.mu.as_slice()),
        num(f.params.alpha),
        num(f.params.kappa),
        f.loglik.map_or(Value::Null, num),
        json!(f.converged),
        json!(f.iterations),
        f.diagnostic.as_ref().map_or(Value::Null, |d| json!(d)),
    ]);
}

const FIT_COLUMNS: [&str; 10] = [
    "family",
    "method",
    "n",
    "mu",
    "alpha",
    "kappa",
    "loglik",
    "converged",
    "iterations",
    "diagnostic",
];

fn fit_cmd(a: FitArgs) -> Result<()> {
    let ds = a.input.load()?;
    let opts = FitOptions {
        refine_direction: a.refine_direction,
        ..FitOptions::default()
    };
    let f = fit(a.family, a.estimator, &ds.sample, &opts)?;
    let mut t = Table::new("fit", &FIT_COLUMNS);
    fit_row(&mut t, a.family, ds.sample.len(), &f);
    emit(&t, &a.output)
}

fn gof(a: GofArgs) -> Result<()> {
    let ds = a.input.load()?;
    let cfg = a.test.config(a.family);
    let r = run_gof_test(&ds.sample, &cfg, &Parallel::from_env())?;
    let mut t = Table::new(
        "gof",
        &[
            "family",
            "method",
            "n",
            "mu",
            "alpha",
            "kappa",
            "entropy_estimate",
            "statistic",
            "critical_value",
            "p_value",
            "reject",
            "replicates",
            "dropped",
        ],
    );
    t.push(vec![
        json!(a.family.name()),
        json!(r.fitted.method.name()),
        json!(ds.sample.len()),
        json!(r.fitted.params.mu.as_slice()),
        num(r.fitted.params.alpha),
        num(r.fitted.params.kappa),
        num(r.entropy.value),
        num(r.statistic),
        num(r.critical_value),
        num(r.p_value),
        json!(r.reject),
        json!(r.null.abs_statistics.len()),
        json!(r.null.dropped),
    ]);
    emit(&t, &a.output)
}

fn critical_table(a: CriticalArgs) -> Result<()> {
    let cfg = a.test.config(a.family);
    let alphas = a.alphas.unwrap_or_else(|| TABLE_ALPHAS.to_vec());
    let kappas = a.kappas.unwrap_or_else(|| TABLE_KAPPAS.to_vec());
    let rows = pipeline::critical_table(&alphas, &kappas, a.d, a.n, &cfg, &Parallel::from_env())?;
    let t = Table::from_records(
        "critical-table",
        &rows,
        &["alpha", "kappa", "critical_value", "retained", "dropped"],
    )?;
    emit(&t, &a.output)
}

fn power(a: PowerArgs) -> Result<()> {
    let cfg = a.test.config(a.scenario.family());
    let critical = match a.critical.as_deref() {
        None => CriticalValueSource::Fixed(a.scenario.reference_critical_value()),
        Some("bootstrap") => CriticalValueSource::Bootstrap,
        Some(v) => CriticalValueSource::Fixed(
            v.parse()
                .map_err(|_| Error::Usage(format!("--critical: expected a number or \"bootstrap\", got {v:?}")))?,
        ),
    };
    let rows = pipeline::power_curve(a.scenario, &a.j, a.n, a.trials, critical, &cfg, &Parallel::from_env())?;
    let mut t = Table::new(
        "power",
        &["scenario", "j", "power", "standard_error", "rejections", "replicates", "failed"],
    );
    for r in rows {
        t.push(vec![
            json!(a.scenario.name()),
            json!(r.j),
            num(r.power),
            num(r.standard_error),
            json!(r.rejections),
            json!(r.replicates),
            json!(r.failed),
        ]);
    }
    emit(&t, &a.output)
}

const BLOCK_COLUMNS: [&str; 14] = [
    "l1",
    "l2",
    "l3",
    "n",
    "status",
    "mu",
    "alpha",
    "kappa",
    "entropy",
    "statistic",
    "critical_value",
    "p_value",
    "reject",
    "note",
];

fn blocks(a: BlocksArgs) -> Result<()> {
    let ds = a.input.load()?;
    let lattice = ds
        .lattice
        .ok_or_else(|| Error::Usage("--input has no lattice index columns".into()))?;
    let shape: [i64; 3] = a
        .block_shape
        .as_slice()
        .try_into()
        .map_err(|_| Error::Usage("--block-shape needs three entries".into()))?;
    let spec = BlockSpec {
        shape,
        min_block_size: a.min_block_size,
    };
    let cfg = a.test.config(Family::Axial);
    let grid = a.group_grid.then(GroupGrid::default);
    let rows = pipeline::run_block_tests(&ds.sample, &lattice, &spec, &cfg, grid.as_ref(), &Parallel::from_env())?;
    let t = Table::from_records("blocks", &rows, &BLOCK_COLUMNS)?;
    emit(&t, &a.output)
}

fn qq(a: QqArgs) -> Result<()> {
    let ds = a.input.load()?;
    let f = fit(a.family, a.estimator, &ds.sample, &FitOptions::default())?;
    let pairs = pipeline::qq_pairs(&ds.sample, &f.params)?;
    let t = Table::from_records("qq", &pairs, &["probability", "empirical", "theoretical"])?;
    emit(&t, &a.output)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Density(a) => density(a),
        Command::Moments(a) => moments(a),
        Command::Entropy(a) => entropy(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Gof(a) => gof(a),
        Command::CriticalTable(a) => critical_table(a),
        Command::Power(a) => power(a),
        Command::Blocks(a) => blocks(a),
        Command::Qq(a) => qq(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
