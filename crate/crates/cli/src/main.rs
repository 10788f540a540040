use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gofkit::density::parse_density;
use gofkit::functionals::{lipschitz_critical_radius, multinomial_critical_radius};
use gofkit::lipschitz::{DensityTestConfig, DensityTestId, PreparedDensityTest, Threshold};
use gofkit::multinomial::PreparedNull;
use gofkit::partition::{
    adaptive_partition_with, prune_partition, standard_params, verify_partition, BuildLimits, PartitionConstants,
    PropertyReport,
};
use gofkit::probs::parse_prob_spec;
use gofkit::sim::{self, ConstantsPreset, SimConfig, WeightScheme};
use gofkit::{CountVector, Cube, ProbVector, RadiusEquation, TestId, TestOutcome};

#[derive(Parser, Debug)]
#[command(
    name = "gofkit",
    version,
    about = "Goodness-of-fit tests for multinomials and Lipschitz densities"
)]
struct Cli {
    /// Worker threads for Monte Carlo work (default: all cores).
    #[arg(long, global = true, env = "GOFKIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test observed category counts against a multinomial null.
    MultinomialTest(MultinomialArgs),
    /// Test a sample against a density null.
    DensityTest(DensityArgs),
    /// Solve a critical-radius equation.
    CriticalRadius(RadiusArgs),
    /// Build the adaptive partition of a density null.
    Partition(PartitionArgs),
    /// Run a power experiment described by a JSON config.
    PowerSim(PowerArgs),
    /// Null-distribution diagnostic of a standardized statistic.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct MultinomialArgs {
    /// `uniform:d`, `powerlaw:d`, `weights:w1,w2,...` or a JSON file holding a probability array.
    #[arg(long)]
    null: String,
    /// Whitespace-separated category counts.
    #[arg(long)]
    counts: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(TestId))]
    test: TestId,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Truncation level for the tail-based tests (default u_n / 8).
    #[arg(long)]
    sigma: Option<f64>,
    /// Calibrate the threshold on this many null draws.
    #[arg(long)]
    calibrate: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the normalized null to this file.
    #[arg(long)]
    save_null: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Literal,
    Desk,
    Sim,
}

impl Preset {
    fn constants(self) -> PartitionConstants {
        match self {
            Preset::Literal => ConstantsPreset::Literal.constants(),
            Preset::Desk => ConstantsPreset::Desk.constants(),
            Preset::Sim => ConstantsPreset::Sim.constants(),
        }
    }
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// Density id such as `gaussian:0,1` or `pareto:0.5,1`.
    #[arg(long)]
    null: String,
    /// Smoothness parameter (L0 for the adaptive test).
    #[arg(long)]
    ln: f64,
    /// Design radius; ignored by ks and adaptive.
    #[arg(long, default_value_t = 0.3)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_parser = clap::value_parser!(DensityTestId))]
    test: DensityTestId,
    /// One point per line; whitespace-separated coordinates in d > 1.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Literal)]
    constants: Preset,
    #[arg(long)]
    calibrate: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RadiusArgs {
    /// Multinomial spec for un/ln/sigma, density id for wn/vn/adaptive.
    #[arg(long)]
    null: String,
    #[arg(long)]
    n: f64,
    #[arg(long)]
    ln: Option<f64>,
    /// un, ln, sigma, wn, vn or adaptive.
    #[arg(long, value_parser = clap::value_parser!(RadiusEquation))]
    which: RadiusEquation,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    null: String,
    #[arg(long)]
    ln: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Preset::Literal)]
    constants: Preset,
    /// Skip the pruning step.
    #[arg(long)]
    no_prune: bool,
    /// Attach the property report.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long)]
    config: PathBuf,
    /// Write the table as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// l2 or chisq.
    #[arg(long, default_value = "l2", value_parser = clap::value_parser!(WeightScheme))]
    scheme: WeightScheme,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Report the fraction of values inside [-w, w].
    #[arg(long)]
    window: Option<f64>,
}

enum Failure {
    Usage(String),
    Compute(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Compute(e)
    }
}

impl From<gofkit::Error> for Failure {
    fn from(e: gofkit::Error) -> Self {
        use gofkit::Error as E;
        match e {
            // bad argument values surface from the library as these
            E::BadAlpha(_) | E::BadSigma(_) | E::BadEps(_) | E::BadParams(_) | E::UnknownTest(_) | E::NoCdf => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Compute(e.into()),
        }
    }
}

type Outcome = Result<serde_json::Value, Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            print_subcommand_help(std::env::args().nth(1).as_deref());
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let name = subcommand_name(&cli.command);
    let result = match cli.command {
        Command::MultinomialTest(a) => multinomial_test(a),
        Command::DensityTest(a) => density_test(a),
        Command::CriticalRadius(a) => critical_radius(a),
        Command::Partition(a) => partition(a),
        Command::PowerSim(a) => power_sim(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(v) => {
            let mut out = std::io::stdout().lock();
            let _ = serde_json::to_writer_pretty(&mut out, &v);
            let _ = writeln!(out);
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            print_subcommand_help(Some(name));
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::MultinomialTest(_) => "multinomial-test",
        Command::DensityTest(_) => "density-test",
        Command::CriticalRadius(_) => "critical-radius",
        Command::Partition(_) => "partition",
        Command::PowerSim(_) => "power-sim",
        Command::Diagnose(_) => "diagnose",
    }
}

fn print_subcommand_help(name: Option<&str>) {
    let mut cmd = Cli::command();
    let help = match name.and_then(|n| cmd.find_subcommand_mut(n)) {
        Some(sub) => sub.render_help(),
        None => cmd.render_help(),
    };
    eprintln!("{help}");
}

fn to_json<T: Serialize>(v: &T) -> Outcome {
    serde_json::to_value(v).map_err(|e| Failure::Compute(e.into()))
}

fn load_null(spec: &str) -> Result<ProbVector, Failure> {
    if Path::new(spec).is_file() {
        let text = fs::read_to_string(spec).map_err(|e| Failure::Usage(format!("reading {spec}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{spec}: {e}")));
    }
    parse_prob_spec(spec).map_err(|e| Failure::Usage(e.to_string()))
}

fn read_numbers<T: std::str::FromStr>(path: &Path) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("reading {}: {e}", path.display())))?;
    text.split_whitespace()
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Failure::Usage(format!("{}: bad value '{s}': {e}", path.display())))
        })
        .collect()
}

fn need_seed(seed: Option<u64>) -> Result<u64, Failure> {
    match seed {
        Some(s) => Ok(s),
        None => usage("calibration is random; pass --seed"),
    }
}

#[derive(Serialize)]
struct MultinomialReport {
    test: TestId,
    #[serde(flatten)]
    outcome: TestOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    d: usize,
    n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_trials: Option<usize>,
}

fn multinomial_test(a: MultinomialArgs) -> Outcome {
    let p0 = load_null(&a.null)?;
    let counts: Vec<u64> = read_numbers(&a.counts)?;
    if counts.len() != p0.dim() {
        return usage(format!("{} counts for a null of dimension {}", counts.len(), p0.dim()));
    }
    let x = CountVector::fixed(counts).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(path) = &a.save_null {
        let text = serde_json::to_string(&p0).context("serializing the null")?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let sigma = match a.sigma {
        Some(s) => s,
        None if a.test.uses_sigma() => sim::default_sigma(&p0, x.nominal_n as usize)?,
        None => 0.0,
    };
    if a.test.uses_sigma() && !(sigma > 0.0 && sigma < 1.0) {
        return usage(format!("sigma must lie in (0,1), got {sigma}"));
    }
    let null = PreparedNull::new(&p0, sigma);
    let outcome = match a.calibrate {
        Some(trials) => {
            let seed = need_seed(a.seed)?;
            let thr =
                sim::calibrate_threshold(a.test, &p0, sigma, x.nominal_n as usize, a.alpha, x.mode, trials, seed)?;
            null.calibrated_test(a.test, &x, a.alpha, thr)?
        }
        None if a.test.has_analytic_threshold() => null.analytic_test(a.test, &x, a.alpha)?,
        None => {
            return usage(format!(
                "test '{}' has no analytic threshold; pass --calibrate and --seed",
                a.test
            ))
        }
    };
    to_json(&MultinomialReport {
        test: a.test,
        outcome,
        sigma: a.test.uses_sigma().then_some(sigma),
        d: p0.dim(),
        n: x.nominal_n,
        calibration_trials: a.calibrate,
    })
}

fn density_test(a: DensityArgs) -> Outcome {
    let f = parse_density(&a.null).map_err(|e| Failure::Usage(e.to_string()))?;
    let samples: Vec<f64> = read_numbers(&a.samples)?;
    if samples.is_empty() || samples.len() % f.dim() != 0 {
        return usage(format!(
            "{} values do not form points of dimension {}",
            samples.len(),
            f.dim()
        ));
    }
    let n = samples.len() / f.dim();
    let cfg = DensityTestConfig {
        constants: a.constants.constants(),
        ..Default::default()
    };
    let test = PreparedDensityTest::new(a.test, &f, a.ln, a.eps, n, a.alpha, &cfg)?;
    let threshold = match a.calibrate {
        Some(trials) => {
            let seed = need_seed(a.seed)?;
            Threshold::Calibrated(sim::calibrate_density_threshold(&test, n, trials, seed)?)
        }
        None if a.test.has_analytic_threshold() => Threshold::Analytic,
        None => {
            return usage(format!(
                "test '{}' has no analytic threshold; pass --calibrate and --seed",
                a.test
            ))
        }
    };
    to_json(&test.run(&samples, threshold)?)
}

fn critical_radius(a: RadiusArgs) -> Outcome {
    if a.which.is_multinomial() {
        let p0 = load_null(&a.null)?;
        if a.which == RadiusEquation::AdaptiveSigma {
            let s = gofkit::functionals::adaptive_sigma(&p0, a.n)?;
            return Ok(serde_json::json!({ "value": s, "equation": a.which }));
        }
        return to_json(&multinomial_critical_radius(&p0, a.n, a.which)?);
    }
    let f = parse_density(&a.null).map_err(|e| Failure::Usage(e.to_string()))?;
    let Some(ln) = a.ln else {
        return usage(format!("--ln is required for {}", a.which));
    };
    to_json(&lipschitz_critical_radius(f.as_ref(), a.n, ln, a.which)?)
}

#[derive(Serialize)]
struct CellRecord<'a> {
    #[serde(flatten)]
    cube: &'a Cube,
    prob: f64,
}

#[derive(Serialize)]
struct PartitionDump<'a> {
    cells: Vec<CellRecord<'a>>,
    a_infty_prob: f64,
    params: gofkit::PartitionParams,
    depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    properties: Option<PropertyReport>,
}

fn partition(a: PartitionArgs) -> Outcome {
    let f = parse_density(&a.null).map_err(|e| Failure::Usage(e.to_string()))?;
    let pp =
        standard_params(f.as_ref(), a.ln, a.eps, a.constants.constants()).map_err(|e| Failure::Usage(e.to_string()))?;
    let raw = adaptive_partition_with(f.as_ref(), pp.theta1, pp.theta2, pp.a, pp.b, BuildLimits::default())?;
    let part = if a.no_prune || raw.is_empty() {
        raw
    } else {
        prune_partition(&raw, pp.c.unwrap_or(pp.a), f.as_ref())?
    };
    let properties = if a.verify {
        Some(verify_partition(&part, f.as_ref(), a.eps)?)
    } else {
        None
    };
    let cells = part
        .cells
        .iter()
        .zip(&part.cell_probs)
        .map(|(cube, &prob)| CellRecord { cube, prob })
        .collect();
    to_json(&PartitionDump {
        cells,
        a_infty_prob: part.a_infty_prob,
        params: part.params,
        depth: part.depth,
        properties,
    })
}

fn power_sim(a: PowerArgs) -> Outcome {
    let text =
        fs::read_to_string(&a.config).map_err(|e| Failure::Usage(format!("reading {}: {e}", a.config.display())))?;
    let cfg: SimConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
    let table = sim::power_curve(&cfg)?;
    if let Some(out) = &a.out {
        fs::write(out, table.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    }
    to_json(&table)
}

fn diagnose(a: DiagnoseArgs) -> Outcome {
    let report = sim::null_diagnostic(a.scheme, a.d, a.n, a.trials, a.seed)?;
    let mut v = to_json(&report)?;
    if let Some(w) = a.window {
        v["window"] = serde_json::json!(w);
        v["fraction_within"] = serde_json::json!(report.fraction_within(-w, w));
    }
    Ok(v)
}
