use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fwsp_core::check::run_checks;
use fwsp_core::exec::ExecMode;
use fwsp_core::experiment::{run_experiment, ExperimentConfig, Mode, Outcome};
use fwsp_core::format::{fmt_g, fmt_opt};
use fwsp_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    /// Discrete self-play from the uniform start.
    Run,
    /// Euler discretization of the continuous flow.
    Flow,
    /// Posterior-sampling self-play on simulated rewards.
    Learn,
    /// Grid search for the game value.
    Solve,
    /// Invariant suite on the configured instance.
    Check,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Run => Mode::Run,
            CliMode::Flow => Mode::Flow,
            CliMode::Learn => Mode::Learn,
            CliMode::Solve => Mode::Solve,
            CliMode::Check => Mode::Check,
        }
    }
}

/// Frank-Wolfe self-play for best-arm identification.
#[derive(Debug, Parser)]
#[command(name = "fwsp", version)]
struct Cli {
    #[arg(value_enum)]
    mode: CliMode,

    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,

    /// 10^7 rounds (and 100 replications for learn) instead of the defaults.
    #[arg(long)]
    paper_scale: bool,

    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() || matches!(e, Error::Io(_)) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERIC
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let mode = Mode::from(cli.mode);
    let mut cfg = ExperimentConfig::from_file(&cli.config)?;
    if cli.paper_scale {
        cfg.paper_scale(mode);
    }
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }

    if mode == Mode::Check {
        let results = run_checks(&cfg.instance, cfg.base_seed);
        for r in &results {
            println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        }
        return Ok(if results.iter().all(|r| r.passed) { 0 } else { EXIT_NUMERIC });
    }

    match run_experiment(&cfg, mode, ExecMode::Parallel)? {
        Outcome::Solved { solution, files } => {
            println!("F_star {}", fmt_g(solution.value));
            let p: Vec<String> = solution.p_star.iter().map(|v| fmt_g(*v)).collect();
            println!("p_star {}", p.join(" "));
            println!("min_scenario {}", solution.minimizing_scenario.arm() + 1);
            println!("error_bound {}", fmt_opt(solution.error_bound));
            files.iter().for_each(|f| println!("wrote {}", f.display()));
        }
        Outcome::Trajectories { summary, files, .. } => {
            if let Some(last) = summary.last() {
                println!(
                    "step {} F_mean {} V_mean {} V_q1 {} V_q3 {}",
                    fmt_g(last.step),
                    fmt_g(last.f_mean),
                    fmt_g(last.v_mean),
                    fmt_g(last.v_q1),
                    fmt_g(last.v_q3)
                );
            }
            files.iter().for_each(|f| println!("wrote {}", f.display()));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fwsp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
