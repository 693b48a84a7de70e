//! `rcw`: conditional Wald tests, confidence sets and size/power
//! simulations from the command line. Results are JSON on stdout (or
//! `--output`); failures are a JSON error document on stderr with a nonzero
//! exit code. Statistical decisions never change the exit code.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rcw::estimators::{CueSettings, EstimatorKind};
use rcw::report::{self, GridRequest};
use rcw::simulator::{size_power_experiment, DGPDesign, ErrorKind, ExperimentConfig};
use rcw::{load_dataset, ColumnSpec, Error, IVData, PlugIn, Stage, TestConfig, VcovKind, WaldForm};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "rcw", version, about = "Weak-instrument robust conditional Wald inference for linear IV")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RCW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional Wald test of H0: beta = beta0.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Null value, one entry per endogenous regressor.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        beta0: Vec<f64>,
        #[arg(long, default_value_t = 20_000)]
        draws: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Confidence set by inverting the test over a grid (one regressor).
    Ci {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, allow_hyphen_values = true)]
        grid_lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        grid_hi: Option<f64>,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long, default_value_t = 4000)]
        draws: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Size and power experiment over simulated designs.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    y: String,
    /// Endogenous regressor columns.
    #[arg(long, value_delimiter = ',', required = true)]
    endog: Vec<String>,
    /// Excluded instrument columns.
    #[arg(long, value_delimiter = ',', required = true)]
    instruments: Vec<String>,
    /// Included exogenous control columns.
    #[arg(long, value_delimiter = ',')]
    exog: Vec<String>,
    /// Integer cluster label column.
    #[arg(long)]
    cluster: Option<String>,
    /// Add an intercept to the controls.
    #[arg(long)]
    intercept: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    #[value(name = "2sls")]
    Tsls,
    Liml,
    Gmm2,
    Cue,
}

#[derive(Clone, Copy, ValueEnum)]
enum VcovArg {
    Hc,
    Hac,
    Cluster,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Sandwich,
    Efficient,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlugInArg {
    Estimate,
    Null,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "2sls")]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value = "hc")]
    vcov: VcovArg,
    /// HAC bandwidth in lags.
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Scale the HC variance by n/(n-k).
    #[arg(long)]
    small_sample: bool,
    /// Wald form (default: sandwich for 2sls/liml, efficient for gmm2/cue).
    #[arg(long, value_enum)]
    wald_form: Option<FormArg>,
    /// Value of beta in the Wald variance.
    #[arg(long, value_enum, default_value = "estimate")]
    plug_in: PlugInArg,
    /// CUE search interval, "lo,hi".
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    cue_bounds: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Concentration parameters, one design each.
    #[arg(long, value_delimiter = ',', default_value = "0,4,16,64")]
    mu2: Vec<f64>,
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    rho: f64,
    /// Error designs: homoskedastic, heteroskedastic, clustered.
    #[arg(long, value_delimiter = ',', default_value = "homoskedastic")]
    error_kind: Vec<String>,
    /// Clusters in clustered designs.
    #[arg(long, default_value_t = ErrorKind::DEFAULT_GROUPS)]
    groups: usize,
    /// Within-cluster error correlation.
    #[arg(long, default_value_t = ErrorKind::DEFAULT_ETA)]
    eta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta_true: f64,
    /// Null offsets in nominal standard errors; 0 measures size.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    offsets: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, value_enum, default_value = "2sls")]
    estimator: EstimatorArg,
    /// Variance estimator (default: cluster for clustered designs, else hc).
    #[arg(long, value_enum)]
    vcov: Option<VcovArg>,
    #[arg(long)]
    bandwidth: Option<usize>,
    #[arg(long, value_enum)]
    wald_form: Option<FormArg>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Text table path (default: stdout when --output is set).
    #[arg(long)]
    table: Option<PathBuf>,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected \"lo,hi\"")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn estimator(arg: EstimatorArg, cue_bounds: Option<(f64, f64)>) -> EstimatorKind {
    match arg {
        EstimatorArg::Tsls => EstimatorKind::Tsls,
        EstimatorArg::Liml => EstimatorKind::Liml,
        EstimatorArg::Gmm2 => EstimatorKind::Gmm2,
        EstimatorArg::Cue => EstimatorKind::Cue(CueSettings {
            bounds: cue_bounds,
            ..CueSettings::default()
        }),
    }
}

fn vcov(arg: VcovArg, bandwidth: Option<usize>, small_sample: bool) -> Result<VcovKind, Error> {
    match (arg, bandwidth) {
        (VcovArg::Hac, Some(b)) => Ok(VcovKind::Hac { bandwidth: b }),
        (VcovArg::Hac, None) => Err(config_error("--vcov hac needs --bandwidth")),
        (_, Some(_)) => Err(config_error("--bandwidth applies only to --vcov hac")),
        (VcovArg::Hc, None) => Ok(VcovKind::Hc { small_sample }),
        (VcovArg::Cluster, None) => Ok(VcovKind::Cluster),
    }
}

fn form(arg: FormArg) -> WaldForm {
    match arg {
        FormArg::Sandwich => WaldForm::Sandwich,
        FormArg::Efficient => WaldForm::Efficient,
    }
}

fn config_error(msg: &str) -> Error {
    Error::InStage {
        stage: Stage::Config,
        source: Box::new(Error::Config(msg.into())),
    }
}

fn load(args: &DataArgs) -> Result<IVData, Error> {
    let spec = ColumnSpec {
        y: args.y.clone(),
        endog: args.endog.clone(),
        instruments: args.instruments.clone(),
        exog: args.exog.clone(),
        cluster: args.cluster.clone(),
        intercept: args.intercept,
    };
    load_dataset(&args.data, &spec)
}

fn test_config(m: &MethodArgs, draws: usize) -> Result<TestConfig, Error> {
    Ok(TestConfig {
        estimator: estimator(m.estimator, m.cue_bounds),
        vcov: vcov(m.vcov, m.bandwidth, m.small_sample)?,
        wald_form: m.wald_form.map(form),
        plug_in: match m.plug_in {
            PlugInArg::Estimate => PlugIn::Estimate,
            PlugInArg::Null => PlugIn::Null,
        },
        alpha: m.alpha,
        n_draws: draws,
        seed: m.seed,
    })
}

fn write_document(value: &Value, path: Option<&PathBuf>) -> Result<(), Error> {
    write_text(&(report::to_json_string(value, true) + "\n"), path)
}

fn write_text(text: &str, path: Option<&PathBuf>) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<(), Error> {
    let mut designs = Vec::new();
    for name in &a.error_kind {
        let kind = match name.parse::<ErrorKind>().map_err(|e| Error::InStage {
            stage: Stage::Config,
            source: Box::new(e),
        })? {
            ErrorKind::Clustered { .. } => ErrorKind::Clustered {
                groups: a.groups,
                eta: a.eta,
            },
            other => other,
        };
        for &mu2 in &a.mu2 {
            designs.push(DGPDesign {
                n: a.n,
                k: a.k,
                concentration: mu2,
                rho: a.rho,
                error_kind: kind,
                beta_true: a.beta_true,
                seed: 0,
            });
        }
    }
    let config = ExperimentConfig {
        estimator: estimator(a.estimator, None),
        wald_form: a.wald_form.map(form),
        vcov: a.vcov.map(|v| vcov(v, a.bandwidth, false)).transpose()?,
        plug_in: PlugIn::Estimate,
        alpha: a.alpha,
        n_draws: a.draws,
        master_seed: a.seed,
    };
    let report = size_power_experiment(&designs, &config, &a.offsets, a.reps).map_err(|e| match e {
        e @ Error::InStage { .. } => e,
        e => Error::InStage {
            stage: Stage::Config,
            source: Box::new(e),
        },
    })?;
    write_document(&report::experiment_value(&report), a.output.as_ref())?;
    match (&a.table, &a.output) {
        (Some(t), _) => write_text(&report.to_table(), Some(t)),
        (None, Some(_)) => write_text(&report.to_table(), None),
        (None, None) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| config_error(&format!("cannot build thread pool: {e}")))?;
    }
    match cli.command {
        Command::Test {
            data,
            method,
            beta0,
            draws,
            out,
        } => {
            let config = test_config(&method, draws)?;
            let data = load(&data)?;
            write_document(&report::test_document(&data, &config, &beta0)?, out.output.as_ref())
        }
        Command::Ci {
            data,
            method,
            grid_lo,
            grid_hi,
            grid_points,
            draws,
            out,
        } => {
            let config = test_config(&method, draws)?;
            let data = load(&data)?;
            let grid = GridRequest {
                lo: grid_lo,
                hi: grid_hi,
                points: grid_points,
            };
            write_document(&report::ci_document(&data, &config, &grid)?, out.output.as_ref())
        }
        Command::Simulate(args) => simulate(&args),
    }
}

fn fail(value: Value) -> ExitCode {
    eprintln!("{}", report::to_json_string(&value, false));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            return fail(serde_json::json!({
                "schema_version": report::SCHEMA_VERSION,
                "error": { "stage": "config", "kind": "usage", "message": e.to_string().trim() },
            }))
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(report::error_value(&e)),
    }
}
