use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use epilab::config::RunConfig;
use epilab_cli::{execute, exit_code, Verb};

#[derive(Parser)]
#[command(name = "epilab", version, about = "Epileptor stability, passivity and output-design tools")]
struct Cli {
    #[command(subcommand)]
    verb: VerbArg,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in setup: thm1, thm3 or example1.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output CSV path; the table goes to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to EPILAB_THREADS).
    #[arg(long, global = true, env = "EPILAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum VerbArg {
    /// Integrate a trajectory and report seizure statistics.
    Simulate,
    /// List equilibria at the configured input level.
    Equilibria,
    /// Spectral-abscissa grid over (u_star, k).
    Sweep,
    /// Check a quadratic certificate.
    Verify,
    /// Solve an output-design or sparse Lyapunov program.
    Design,
    /// Estimate a region-of-attraction level.
    Roa,
}

impl From<VerbArg> for Verb {
    fn from(v: VerbArg) -> Self {
        match v {
            VerbArg::Simulate => Verb::Simulate,
            VerbArg::Equilibria => Verb::Equilibria,
            VerbArg::Sweep => Verb::Sweep,
            VerbArg::Verify => Verb::Verify,
            VerbArg::Design => Verb::Design,
            VerbArg::Roa => Verb::Roa,
        }
    }
}

fn load(cli: &Cli) -> epilab::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = cli.preset.clone().or_else(|| cfg.preset.clone()) {
        cfg.apply_preset(&name)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(epilab::Error::Config("--threads must be >= 1".into()));
        }
        cfg.threads = Some(t);
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }

    let report = match execute(cli.verb.into(), &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };

    let written = match &cfg.out {
        Some(path) => report.table.write_file(path),
        None => report.table.write_to(std::io::stdout().lock()),
    };
    for line in &report.summary {
        if cfg.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if report.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
