use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use qmeanlab::estimators::EstimatorId;
use qmeanlab::harness::checks::run_checks;
use qmeanlab::harness::{
    emit_plot_data, generate_hard, rows_to_csv, run_estimator, ExperimentConfig, HardSpec, PlotKind, TrialSpec,
};
use qmeanlab::oracles::{CostModel, NoiseModel, QuantileMode};
use qmeanlab::{parse_distribution_spec, SimRng};

#[derive(Parser)]
#[command(name = "qmeanlab", version, about = "Quantum and classical multivariate mean estimation on simulated oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimator on a distribution file and print the report as JSON.
    Estimate {
        /// Distribution document (JSON with d, prob, values and optional omega).
        #[arg(long)]
        spec: PathBuf,
        /// bounded, near_optimal, euclidean, qphase, qlowprec, phase_dispatch, classical or trivial.
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        n: f64,
        /// Phase-oracle budget n′.
        #[arg(long)]
        nprime: Option<f64>,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `ideal` or `perturbed:EPS,ETA`.
        #[arg(long, default_value = "ideal")]
        noise: String,
        /// Bound on E‖X‖₂ for the bounded estimator; the exact value if omitted.
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        quantile_c: f64,
        #[arg(long, value_enum, default_value_t = QuantileArg::Simulated)]
        quantile_mode: QuantileArg,
        #[arg(long, default_value_t = 1.0)]
        cost_constant: f64,
    },
    /// Run an experiment config and print its rows as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Also write plot data of this kind.
        #[arg(long, value_enum, requires = "plot_out")]
        plot: Option<PlotArg>,
        #[arg(long)]
        plot_out: Option<PathBuf>,
    },
    /// Generate a hard instance as a distribution document plus metadata.
    Hard {
        #[arg(long, value_enum)]
        family: Family,
        /// `key=value` pairs separated by commas (n, d, sigma, alpha, seed, norm), or a JSON object.
        #[arg(long, default_value = "")]
        params: String,
        /// Output path for the distribution; metadata goes next to it as `<stem>.meta.json`.
        /// Without it the distribution is printed and the metadata goes to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-check suite; exits with status 1 on any failure.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantileArg {
    Simulated,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotArg {
    ErrorVsBudget,
    RegimeMap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Low,
    High,
    Fracphase,
}

fn parse_noise(s: &str, seed: u64) -> Result<NoiseModel> {
    if s == "ideal" {
        return Ok(NoiseModel::ideal());
    }
    let rest = s.strip_prefix("perturbed:").ok_or_else(|| anyhow!("noise must be `ideal` or `perturbed:EPS,ETA`"))?;
    let (eps, eta) = rest.split_once(',').ok_or_else(|| anyhow!("perturbed noise needs EPS,ETA"))?;
    let eps: f64 = eps.trim().parse().context("EPS")?;
    let eta: f64 = eta.trim().parse().context("ETA")?;
    Ok(NoiseModel::perturbed(eps, eta, seed)?)
}

fn parse_params(family: Family, params: &str) -> Result<HardSpec> {
    let mut obj = if params.trim_start().starts_with('{') {
        serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(params).context("params JSON")?
    } else {
        let mut obj = serde_json::Map::new();
        for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| anyhow!("expected key=value, got `{pair}`"))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
            obj.insert(k.to_string(), value);
        }
        obj
    };
    let name = match family {
        Family::Low => "low",
        Family::High => "high",
        Family::Fracphase => "fracphase",
    };
    obj.insert("family".into(), name.into());
    serde_json::from_value(serde_json::Value::Object(obj)).context("hard-instance parameters")
}

fn meta_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into());
    out.with_file_name(format!("{stem}.meta.json"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Estimate {
            spec,
            estimator,
            n,
            nprime,
            delta,
            seed,
            noise,
            l2,
            quantile_c,
            quantile_mode,
            cost_constant,
        } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let rv = parse_distribution_spec(&text)?;
            let id = EstimatorId::parse(&estimator).ok_or_else(|| anyhow!("unknown estimator `{estimator}`"))?;
            let mut ts = TrialSpec::new(id, n, nprime, delta);
            ts.l2 = l2;
            ts.settings.noise = parse_noise(&noise, seed)?;
            ts.settings.quantile_c = quantile_c;
            ts.settings.cost = CostModel { constant: cost_constant };
            ts.settings.quantile_mode = match quantile_mode {
                QuantileArg::Simulated => QuantileMode::Simulated,
                QuantileArg::Exact => QuantileMode::Exact,
            };
            let mut rng = SimRng::seed_from_u64(seed);
            let report = run_estimator(&ts, &rv, &mut rng)?.with_seed(seed);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
        Command::Sweep { config, plot, plot_out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let rows = qmeanlab::harness::run_config(&cfg)?;
            print!("{}", rows_to_csv(&rows));
            if let (Some(kind), Some(path)) = (plot, plot_out) {
                let kind = match kind {
                    PlotArg::ErrorVsBudget => PlotKind::ErrorVsBudget,
                    PlotArg::RegimeMap => PlotKind::RegimeMap,
                };
                emit_plot_data(&rows, kind, &path)?;
            }
            Ok(true)
        }
        Command::Hard { family, params, out } => {
            let spec = parse_params(family, &params)?;
            let inst = generate_hard(&spec)?;
            let rv = inst.rv.as_ref().ok_or_else(|| anyhow!("generator returned no distribution"))?;
            let meta = serde_json::json!({
                "family": inst.family,
                "params": inst.params,
                "seed": spec.seed,
                "designed_mean": inst.designed_mean,
                "designed_cov_trace": inst.designed_cov_trace,
            });
            let meta = serde_json::to_string_pretty(&meta)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, rv.to_spec_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
                    let mp = meta_path(&path);
                    std::fs::write(&mp, meta + "\n").with_context(|| format!("writing {}", mp.display()))?;
                }
                None => {
                    println!("{}", rv.to_spec_json());
                    eprintln!("{meta}");
                }
            }
            Ok(true)
        }
        Command::Check => {
            let results = run_checks();
            let mut ok = true;
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
