use std::path::PathBuf;
use std::process::ExitCode;

use cdmfg::Error;
use cdmfg_cli::{cmd_converge, cmd_gap, cmd_sample_graph, cmd_solve, exit_code, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cdmfg", version, about = "Colored digraphon mean field game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an equilibrium with online mirror descent.
    Solve(Common),
    /// Estimate the empirical mean-field error over the configured N values.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Policy CSV; defaults to <out>/policy.csv.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Estimate unilateral deviation gains of finite agents.
    Gap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Sample one colored digraph and write its edge and node lists.
    SampleGraph(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output.clone());
        Ok((cfg, out))
    }
}

fn run(command: Command) -> Result<(), Error> {
    let common = match &command {
        Command::Solve(c) | Command::SampleGraph(c) => c,
        Command::Converge { common, .. } | Command::Gap { common, .. } => common,
    };
    let (cfg, out) = common.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Error::Argument("--workers must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;

    pool.install(|| match &command {
        Command::Solve(_) => {
            let report = cmd_solve(&cfg, &out)?;
            println!(
                "solve: {} iterations, exploitability {:.6e} -> {:.6e}, wrote {}",
                report.config.iterations,
                report.exploitability_history[0].exploitability,
                report.final_exploitability(),
                out.display()
            );
            Ok(())
        }
        Command::Converge { policy, .. } => {
            for r in cmd_converge(&cfg, &out, policy.as_deref())? {
                println!(
                    "N={:<6} delta_mu={:.6} ci=[{:.6}, {:.6}]",
                    r.n, r.delta_mu_mean, r.ci_low, r.ci_high
                );
            }
            Ok(())
        }
        Command::Gap { policy, .. } => {
            let report = cmd_gap(&cfg, &out, policy.as_deref())?;
            println!("gap: N={} median={:.6}", report.n, report.median_gap());
            Ok(())
        }
        Command::SampleGraph(_) => {
            cmd_sample_graph(&cfg, &out)?;
            println!("sample-graph: N={}, wrote {}", cfg.sim.graph_n, out.display());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
