mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dipcert::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use dipcert::model::save_network;
use dipcert::operators::save_operator;
use dipcert::trainer::{RecordFlags, StepMode, TrainConfig};
use dipcert::{Error, Variant};

use problem::{Problem, ProblemArgs};

#[derive(Parser, Debug)]
#[command(name = "dipcert", version, about = "Train and certify two-layer deep inverse prior networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network and write its trace, final network and operator.
    Train(TrainArgs),
    /// Print the certificate of one initialized instance.
    Certify(CertifyArgs),
    /// Convergence-frequency heatmap over (k, n) or (k, m).
    PhaseHeatmap {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Which dimension varies along the columns.
        #[arg(long, value_enum, default_value_t = Axis::N)]
        vary: Axis,
    },
    /// Signal error under increasing noise with a fixed ill-conditioned operator.
    NoiseSweep(ExperimentArgs),
    /// Final loss against width for several noise levels.
    NoiseVsK(ExperimentArgs),
    /// Loss trajectories for several loss exponents.
    PSweep(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Axis {
    N,
    M,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Paper,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Discrete,
    Continuous,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML file with experiment settings; missing keys come from the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// TOML file with instance settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out/train")]
    out: PathBuf,
    /// Fixed step size instead of the certified one.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    trace_stride: Option<usize>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Discrete)]
    variant: VariantArg,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Certify(args) => certify(args),
        Command::PhaseHeatmap { common, vary } => {
            let kind = match vary {
                Axis::N => ExperimentKind::PhaseKn,
                Axis::M => ExperimentKind::PhaseKm,
            };
            experiment(kind, common)
        }
        Command::NoiseSweep(args) => experiment(ExperimentKind::NoiseSweep, args),
        Command::NoiseVsK(args) => experiment(ExperimentKind::NoiseVsK, args),
        Command::PSweep(args) => experiment(ExperimentKind::PSweep, args),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let problem = Problem::resolve(
        &args.problem,
        args.config.as_deref(),
        args.seed,
        args.step,
        args.max_iters,
        args.threshold,
        args.trace_stride,
    )?;
    let inst = problem.build()?;
    let cfg = TrainConfig {
        max_iters: problem.max_iters,
        loss_threshold: problem.threshold,
        step_mode: match problem.step {
            Some(step) => StepMode::Fixed { step },
            None => StepMode::AutoCertified {
                safety: problem.safety,
            },
        },
        trace_stride: problem.trace_stride,
        record: RecordFlags::default(),
        milestone: None,
    };
    let (trace, diverged) = match inst.train(&cfg) {
        Ok(t) => (t, None),
        Err(Error::Divergence { iteration, trace }) => (*trace, Some(iteration)),
        Err(e) => return Err(e.into()),
    };
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    trace.save_csv(args.out.join("trace.csv"))?;
    save_network(&inst.net, args.out.join("initial_network.bin"))?;
    save_network(&trace.final_network, args.out.join("final_network.bin"))?;
    save_operator(&inst.op, "cli train", args.out.join("operator.bin"))?;
    let mut summary = format!(
        "converged: {}\niterations: {}\nfinal_loss: {:e}\nstep: {:e}\ntarget_scale: {}\n",
        trace.converged, trace.iterations, trace.final_loss, trace.step, inst.target_scale
    );
    if let Some(l) = trace.smoothness {
        summary.push_str(&format!("l_hat: {l:e}\n"));
    }
    if let Some(it) = diverged {
        summary.push_str(&format!("diverged_at: {it}\n"));
    }
    write_text(&args.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn certify(args: CertifyArgs) -> Result<()> {
    let problem = Problem::resolve(&args.problem, args.config.as_deref(), args.seed, None, None, None, None)?;
    let inst = problem.build()?;
    let variant = match args.variant {
        VariantArg::Discrete => Variant::Discrete,
        VariantArg::Continuous => Variant::Continuous,
    };
    let cert = inst.certify(variant, problem.safety)?;
    let mut report = cert.report();
    report.push_str(&format!("target_scale: {}\n", inst.target_scale));
    if let Some(path) = &args.out {
        write_text(path, &report)?;
    }
    print!("{report}");
    Ok(())
}

fn experiment(kind: ExperimentKind, args: ExperimentArgs) -> Result<()> {
    let mut table = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    match table.get("experiment").and_then(|v| v.as_str()) {
        Some(name) if name != kind.as_str() => {
            bail!("config describes `{name}` but the subcommand runs `{kind}`")
        }
        _ => {
            table.insert("experiment".into(), kind.as_str().into());
        }
    }
    if let Some(preset) = args.preset {
        let name = match preset {
            PresetArg::Paper => "paper",
            PresetArg::Reduced => "reduced",
        };
        table.insert("preset".into(), name.into());
    }
    let mut cfg = ExperimentConfig::from_toml_str(&toml::to_string(&table)?)?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    let start = std::time::Instant::now();
    let report = run_experiment(&cfg)?;
    print!("{}", report.summary);
    println!(
        "runs: {} (non-converged: {}), elapsed {:.1}s",
        report.runs,
        report.non_converged,
        start.elapsed().as_secs_f64()
    );
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
