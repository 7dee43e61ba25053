//! `mda` command-line front end.
//!
//! Exit codes: 0 ok, 1 check failure or other error, 2 config/usage error,
//! 3 numerical abort.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{MdaError, Result};
use crate::gradcheck::{self, GradcheckOptions};
use crate::train::experiments::{run_baseline_grid, run_k_ablation, run_supervision_sweep, ExperimentTable};
use crate::train::{train_experiment, write_metrics_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mda", version, about = "Latent-domain discovery with multi-domain alignment layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        config: ConfigArgs,
        /// Perturb the analytic assignment gradient (negative control).
        #[arg(long)]
        corrupt: bool,
    },
    /// Accuracy for several numbers of latent domains.
    AblateK {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seeds: SeedArgs,
        /// Comma-separated k values.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        k: Vec<usize>,
    },
    /// Accuracy for increasing fractions of revealed source domains.
    SweepLabels {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seeds: SeedArgs,
        /// Comma-separated fractions in [0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.25,0.5,1")]
        fractions: Vec<f64>,
    },
    /// Source-only, unified, discovery and known-domain runs side by side.
    Baselines {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config with model/train/data sections (defaults if omitted).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.seed=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory; must not exist or be empty.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Number of seeds (0..N).
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub seeds: u64,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.set)?,
            None => ExperimentConfig::default().with_overrides(&self.set)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &MdaError) -> i32 {
    match err {
        MdaError::Config { .. } | MdaError::InvalidArgument(_) | MdaError::Json(_) => EXIT_CONFIG,
        MdaError::NumericalAbort { .. } => EXIT_NUMERICAL,
        _ => EXIT_CHECK_FAILED,
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn prepare_out(out: &OutArgs) -> Result<()> {
    let occupied = fs::read_dir(&out.out).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !out.force {
        return Err(MdaError::Config {
            path: "--out".into(),
            message: format!("{} is not empty (use --force)", out.out.display()),
        });
    }
    fs::create_dir_all(&out.out).map_err(|e| MdaError::io(&out.out, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| MdaError::io(path, e))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    config_hash: String,
    out_dir: &'a Path,
    seeds: Vec<u64>,
    started_unix: u64,
    finished_unix: u64,
}

fn manifest<'a>(command: &'a str, cfg: &'a ExperimentConfig, out: &'a Path, seeds: Vec<u64>, started: u64) -> Result<RunManifest<'a>> {
    Ok(RunManifest {
        command,
        config: cfg,
        config_hash: cfg.content_hash()?,
        out_dir: out,
        seeds,
        started_unix: started,
        finished_unix: unix_now(),
    })
}

fn cmd_train(config: &ConfigArgs, out: &OutArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = config.load()?;
    prepare_out(out)?;
    let started = unix_now();
    let (net, outcome) = train_experiment(&cfg)?;

    let metrics_path = out.out.join("metrics.csv");
    let file = fs::File::create(&metrics_path).map_err(|e| MdaError::io(&metrics_path, e))?;
    write_metrics_csv(file, &outcome.metrics)?;
    net.save_checkpoint(&out.out.join("checkpoint.json"))?;
    write_json(
        &out.out.join("summary.json"),
        &serde_json::json!({
            "accuracy": outcome.scores.accuracy,
            "nmi": outcome.scores.nmi,
            "purity": outcome.scores.purity,
            "final_loss": outcome.last_loss,
        }),
    )?;
    write_json(
        &out.out.join("manifest.json"),
        &manifest("train", &cfg, &out.out, vec![cfg.train.seed], started)?,
    )?;
    let _ = writeln!(
        stdout,
        "accuracy {:.4}  nmi {:.4}  purity {:.4}  -> {}",
        outcome.scores.accuracy,
        outcome.scores.nmi,
        outcome.scores.purity,
        out.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_gradcheck(config: &ConfigArgs, corrupt: bool, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = config.load()?;
    let opts = GradcheckOptions {
        corrupt,
        seed: cfg.model.seed,
        ..GradcheckOptions::default()
    };
    let report = gradcheck::run(&cfg.model, &opts)?;
    for (name, g) in &report.groups {
        let verdict = if g.passed() { "ok" } else { "FAIL" };
        let _ = writeln!(
            stdout,
            "{name:<12} max_rel_err {:.3e}  tol {:.0e}  probes {:>5}  {verdict}",
            g.max_rel_err, g.tolerance, g.probes
        );
    }
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(stdout, "gradient check failed: {}", report.offenders().join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}

fn write_table(dir: &Path, table: &ExperimentTable) -> Result<()> {
    let mut runs = csv::Writer::from_path(dir.join("runs.csv"))?;
    for r in &table.runs {
        runs.serialize(r)?;
    }
    runs.flush().map_err(|e| MdaError::io(dir.join("runs.csv"), e))?;
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    for g in &table.groups {
        summary.serialize(g)?;
    }
    summary.flush().map_err(|e| MdaError::io(dir.join("summary.csv"), e))
}

fn cmd_experiment(
    name: &str,
    config: &ConfigArgs,
    out: &OutArgs,
    seeds: &SeedArgs,
    stdout: &mut dyn Write,
    run: impl FnOnce(&ExperimentConfig, &[u64]) -> Result<ExperimentTable>,
) -> Result<i32> {
    let cfg = config.load()?;
    prepare_out(out)?;
    let started = unix_now();
    let seed_list: Vec<u64> = (0..seeds.seeds).collect();
    let table = run(&cfg, &seed_list)?;
    write_table(&out.out, &table)?;
    write_json(&out.out.join("manifest.json"), &manifest(name, &cfg, &out.out, seed_list, started)?)?;
    for g in &table.groups {
        let _ = writeln!(
            stdout,
            "{:<18} median acc {:.4}  mean acc {:.4}  median nmi {:.4}",
            g.label, g.median_accuracy, g.mean_accuracy, g.median_nmi
        );
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Train { config, out } => cmd_train(config, out, stdout),
        Command::Gradcheck { config, corrupt } => cmd_gradcheck(config, *corrupt, stdout),
        Command::AblateK { config, out, seeds, k } => {
            cmd_experiment("ablate-k", config, out, seeds, stdout, |c, s| run_k_ablation(c, k, s))
        }
        Command::SweepLabels {
            config,
            out,
            seeds,
            fractions,
        } => cmd_experiment("sweep-labels", config, out, seeds, stdout, |c, s| {
            run_supervision_sweep(c, fractions, s)
        }),
        Command::Baselines { config, out, seeds } => cmd_experiment("baselines", config, out, seeds, stdout, run_baseline_grid),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = if e.use_stderr() { e.render().to_string() } else { e.to_string() };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
