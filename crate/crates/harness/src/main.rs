use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use tapbound_harness::config::{ExperimentConfig, MeasureKind};
use tapbound_harness::experiments::{run, tap_max};
use tapbound_harness::HarnessError;

#[derive(Parser)]
#[command(name = "tapbound", version, about = "TAP free-energy bound verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Clone)]
struct Opts {
    /// Config file; its `experiment` key selects which run it overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replica count for every experiment run.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory (default: $TAPBOUND_OUT or ./tapbound-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Covariance laws, recentering, gradients and series identities (criteria 3, 4, 5, 11).
    VerifyGaussian,
    /// Cover property and slice entropy (criteria 6, 7).
    VerifyCover,
    /// Entropy lemmas and the cap bound (criterion 10).
    VerifyEntropy,
    /// Onsager event frequency (criterion 8).
    VerifyOnsager,
    /// Ising bound: beta = 0, zero disorder and theorem direction (criteria 1, 2, 9).
    BoundIsing,
    /// Spherical theorem-direction bound (criterion 9).
    BoundSphere,
    /// Single TAP maximization with trace and radial slices.
    TapMax,
    /// Every criterion.
    All,
}

fn plan(cmd: Command) -> Vec<(&'static str, Option<MeasureKind>)> {
    match cmd {
        Command::VerifyGaussian => vec![("gaussian-law", None), ("recentering-law", None), ("gradient-check", None), ("series-identities", None)],
        Command::VerifyCover => vec![("cover-property", None), ("slice-entropy", None)],
        Command::VerifyEntropy => vec![("entropy-lemmas", None)],
        Command::VerifyOnsager => vec![("onsager-frequency", None)],
        Command::BoundIsing => vec![
            ("beta-zero-exactness", None),
            ("zero-disorder-tightness", None),
            ("theorem-bound", Some(MeasureKind::Ising)),
        ],
        Command::BoundSphere => vec![("theorem-bound", Some(MeasureKind::Sphere))],
        Command::TapMax => vec![("tap-max", None)],
        Command::All => tapbound_harness::EXPERIMENTS.iter().map(|e| (*e, None)).collect(),
    }
}

fn configure(name: &str, measure: Option<MeasureKind>, opts: &Opts, file: Option<&ExperimentConfig>) -> Result<ExperimentConfig, HarnessError> {
    let mut c = match file {
        Some(f) if f.experiment == name => f.clone(),
        _ => ExperimentConfig::defaults(name)?,
    };
    if let Some(m) = measure {
        c.measure = m;
    }
    if let Some(s) = opts.seed {
        c.seed = s;
    }
    if let Some(r) = opts.replicas {
        c.replicas = r;
        if c.aux_replicas > 0 {
            c.aux_replicas = r;
        }
    }
    if let Some(o) = &opts.out {
        c.out = o.clone();
    }
    Ok(c)
}

fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    if let Some(w) = cli.opts.workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    let file = cli.opts.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let mut all_passed = true;
    for (name, measure) in plan(cli.command) {
        let c = configure(name, measure, &cli.opts, file.as_ref())?;
        let start = Instant::now();
        if name == "tap-max" {
            c.validate()?;
            let t = tap_max(&c)?;
            let dir = t.write_all(&c.out)?;
            println!(
                "tap-max: value {:.10} ({:.6} per spin), converged {}, best start {}",
                t.maximum.value, t.maximum.per_spin, t.maximum.converged, t.maximum.best_start
            );
            println!("  wrote {}", dir.display());
            continue;
        }
        let report = run(&c)?;
        let dir = report.write_all(&c.out)?;
        let secs = start.elapsed().as_secs_f64();
        std::fs::write(dir.join("timing.txt"), format!("{secs:.3}\n"))?;
        for line in report.summary_lines() {
            println!("{line}");
        }
        eprintln!("  {name}: {secs:.2} s, wrote {}", dir.display());
        all_passed &= report.passed;
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
