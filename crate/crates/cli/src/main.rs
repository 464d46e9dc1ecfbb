use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use paro_core::config::RunConfig;
use paro_core::paro::ParoResult;
use paro_core::verify::{run_suite, Suite, VerifyOptions};
use paro_core::Error;

#[derive(Parser)]
#[command(name = "paro", version, about = "Parallel orbital-updating eigensolver")]
struct Cli {
    /// Rayon worker threads; 1 runs strictly serially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the `output` key).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run { config: PathBuf },
    /// Run one of the self-checking suites.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
    },
}

fn init_logging() -> Result<(), String> {
    let level = match std::env::var("PARO_LOG_LEVEL").as_deref() {
        Err(_) => log::LevelFilter::Warn,
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => return Err(format!("PARO_LOG_LEVEL must be quiet, info or debug, got `{other}`")),
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn install_pool(workers: Option<usize>) -> Result<(), Error> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}")))?;
    }
    Ok(())
}

fn summary_line(result: &ParoResult, kohn_sham: bool) -> String {
    let status = if result.converged { "converged" } else { "failed" };
    let value = if kohn_sham {
        format!("e_tot={:.12e}", result.energy)
    } else {
        format!("lambda_1={:.12e}", result.eigenvalues()[0])
    };
    format!("{status} iterations={} {value} dofs={}", result.iterations, result.orbitals.space().dof_count())
}

fn eigenvalue_table(result: &ParoResult) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, l) in result.eigenvalues().iter().enumerate() {
        let _ = writeln!(out, "{},{l:.15e}", i + 1);
    }
    out
}

fn write_artifacts(dir: &Path, result: &ParoResult, summary: &str) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trace.csv"), result.trace.to_csv())?;
    fs::write(dir.join("eigenvalues.csv"), eigenvalue_table(result))?;
    fs::write(dir.join("mesh.txt"), result.mesh().to_dump())?;
    fs::write(dir.join("summary.txt"), format!("{summary}\n"))?;
    Ok(())
}

fn run(config: &Path, workers: Option<usize>, out: Option<PathBuf>) -> Result<bool, Error> {
    let mut cfg = RunConfig::load(config)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    if let Some(dir) = out {
        cfg.output = dir;
    }
    install_pool(cfg.workers)?;
    let problem = cfg.problem()?;
    let kohn_sham = problem.is_kohn_sham();
    info!("running {} with {} initial subdivisions", cfg.problem.name(), cfg.subdivisions);
    let result = cfg.run()?;
    let summary = summary_line(&result, kohn_sham);
    write_artifacts(&cfg.output, &result, &summary)?;
    println!("{summary}");
    Ok(result.converged)
}

fn verify(suite: &str, seed: u64, workers: Option<usize>, out: Option<PathBuf>) -> Result<bool, Error> {
    let suite: Suite = suite.parse()?;
    install_pool(workers)?;
    let report = run_suite(suite, &VerifyOptions { seed })?;
    let text = report.to_string();
    print!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("verify-{}.txt", suite.name())), &text)?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_logging() {
        eprintln!("error[invalid-argument]: {msg}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Run { config } => run(&config, cli.workers, cli.out),
        Command::Verify { suite, seed } => verify(&suite, seed, cli.workers, cli.out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(2)
        }
    }
}
