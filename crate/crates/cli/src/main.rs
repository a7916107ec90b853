use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use uavxai::detectors::DetectorKind;
use uavxai::harness::{validate_config, AgentRole, ExperimentConfig, Runner, ScalePreset, Stage, StepOutcome};
use uavxai::{Error, Exec};

#[derive(Parser)]
#[command(name = "uavxai", version, about = "Train, attack, explain and guard a LiDAR guidance agent")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Scale preset used when no config file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Output root; beats the config's `output`.
    #[arg(short, long, global = true, env = "UAVXAI_OUT")]
    out: Option<PathBuf>,
    /// Worker threads. 1 runs everything on the calling thread.
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    /// Root seed; beats the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Re-run steps even when their outputs are current.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
    Compact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Fcn,
    Cnn,
    Lstm,
}

impl From<Kind> for DetectorKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Fcn => DetectorKind::Fcn,
            Kind::Cnn => DetectorKind::Cnn,
            Kind::Lstm => DetectorKind::Lstm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent.
    Train {
        #[arg(long, value_enum)]
        apf: Switch,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run an attack experiment against the attack target.
    Attack {
        #[command(subcommand)]
        what: AttackCmd,
        /// Perturbation budget in 1/255 depth units.
        #[arg(long, global = true, allow_negative_numbers = true)]
        eps: Option<f64>,
        /// Iterative attack steps.
        #[arg(long, global = true)]
        iters: Option<usize>,
    },
    /// Attribute the explain target's yaw decisions.
    Shap {
        #[command(subcommand)]
        what: ShapCmd,
    },
    /// Build, train, evaluate or time the attack detectors.
    Detect {
        #[command(subcommand)]
        what: DetectCmd,
    },
    /// Run a whole stage end to end, reusing finished steps.
    Reproduce {
        /// train-compare, attack-sweep, deflection-probe, campaign,
        /// shap-trace, detector-suite, latency or all
        stage: String,
    },
    /// Check a config and print it with every default filled in.
    Validate {
        /// Config file; defaults to --config.
        path: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Success rate and deflection over an ε × iterations grid.
    Sweep,
    /// Deflection at fixed obstacle placements.
    Probe,
    /// Random attack bursts over full evaluation flights.
    Campaign,
}

#[derive(Subcommand)]
enum ShapCmd {
    /// Per-step attribution trace of one evaluation flight.
    Trace,
    /// Full-input attribution of the traced states.
    Full,
    /// GRU-embedding attribution of the traced states.
    Gru,
}

#[derive(Subcommand)]
enum DetectCmd {
    /// Collect training payloads for all detector kinds.
    Build,
    Train {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    Eval {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Shuffled-label control detector.
    Control,
    /// Per-step timings of attribution and detector inference.
    Bench,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PREREQUISITE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// An unreadable config file counts as an invalid config.
fn read_config(path: &Path) -> Result<ExperimentConfig, Error> {
    validate_config(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidConfig(vec![format!("{}: {io}", path.display())]),
        other => other,
    })
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Error> {
    match &g.config {
        Some(p) => read_config(p),
        None => Ok(ExperimentConfig::preset(match g.preset {
            Preset::Desk => ScalePreset::Desk,
            Preset::Full => ScalePreset::Full,
            Preset::Compact => ScalePreset::Compact,
        })),
    }
}

fn setup_jobs(jobs: Option<usize>) -> anyhow::Result<Exec> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring worker threads")?;
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without the `parallel` feature; running sequentially");
            Ok(Exec::Sequential)
        }
        None => Ok(Exec::default()),
    }
}

fn print_outcomes(outcomes: &[StepOutcome]) {
    for o in outcomes {
        println!("{:<24} {:<10} {} {:>9.1}s", o.step, format!("{:?}", o.status), &o.report_hash[..16], o.wall_clock_s);
        for r in &o.reports {
            println!("    {}", r.display());
        }
    }
}

fn checked(cfg: ExperimentConfig) -> Result<ExperimentConfig, Error> {
    let issues = cfg.issues();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::InvalidConfig(issues))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if let Command::Validate { path } = &cli.command {
        let path = path.as_ref().or(g.config.as_ref()).context("no config file given")?;
        let cfg = read_config(path)?;
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let mut cfg = load_config(g)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Train { episodes: Some(n), .. } => cfg.train.episodes = *n,
        Command::Attack { eps, iters, .. } => {
            if let Some(e) = eps {
                cfg.attack.eps = *e;
                cfg.sweep.eps = vec![*e];
            }
            if let Some(n) = iters {
                cfg.attack.iterations = *n;
                cfg.sweep.iterations = vec![*n];
            }
        }
        _ => {}
    }
    let cfg = checked(cfg)?;
    let exec = setup_jobs(g.jobs)?;
    let root = g.out.clone().unwrap_or_else(|| cfg.output_root());
    let mut runner = Runner::new(cfg, root, exec)?.force(g.force);
    let outcomes = match cli.command {
        Command::Train { apf, .. } => vec![runner.train(match apf {
            Switch::On => AgentRole::ApfOn,
            Switch::Off => AgentRole::ApfOff,
        })?],
        Command::Attack { what, .. } => vec![match what {
            AttackCmd::Sweep => runner.attack_sweep()?,
            AttackCmd::Probe => runner.deflection_probe()?,
            AttackCmd::Campaign => runner.campaign()?,
        }],
        Command::Shap { what } => vec![match what {
            ShapCmd::Trace => runner.shap_trace()?,
            ShapCmd::Full => runner.shap_frames(false)?,
            ShapCmd::Gru => runner.shap_frames(true)?,
        }],
        Command::Detect { what } => match what {
            DetectCmd::Build => vec![runner.detect_build()?],
            DetectCmd::Train { kind } => vec![runner.detect_train(kind.into())?],
            DetectCmd::Eval { kind } => vec![runner.detect_eval(kind.into())?],
            DetectCmd::Control => vec![runner.detect_control()?],
            DetectCmd::Bench => vec![runner.latency()?],
        },
        Command::Reproduce { stage } => {
            let stages = if stage == "all" {
                Stage::ALL.to_vec()
            } else {
                vec![stage.parse::<Stage>().map_err(|e| Error::InvalidConfig(vec![format!("stage: {e}")]))?]
            };
            let mut all = Vec::new();
            for s in stages {
                all.extend(runner.reproduce(s)?);
            }
            all
        }
        Command::Validate { .. } => unreachable!("handled above"),
    };
    print_outcomes(&outcomes);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::InvalidConfig(_)) => EXIT_CONFIG,
                Some(Error::MissingPrerequisite { .. }) => EXIT_PREREQUISITE,
                _ => EXIT_RUNTIME,
            };
            ExitCode::from(code)
        }
    }
}
