use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pricebeam::experiment::{
    format_value, load_config, run_convergence, run_nash_check, run_sweep, write_convergence, write_nash,
    write_sweep, ExperimentConfig, Overrides,
};

#[derive(Parser)]
#[command(name = "pricebeam", version, about = "Priced multi-cell beamforming game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one game on one channel draw and record every beam update.
    Converge(Common),
    /// Run every scheme over an SNR sweep and many channel draws.
    Sweep(Common),
    /// Converge, then check that no BS can improve its own payoff.
    NashCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated scheme names, or "all".
    #[arg(long)]
    scheme: Option<String>,
    /// prop_fair, alpha_fair or rate.
    #[arg(long)]
    utility: Option<String>,
    /// One or more SNR values in dB.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    snr_db: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the final beam vectors as CSV.
    #[arg(long)]
    dump_beams: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let ov = Overrides {
            seed: self.seed,
            schemes: self.scheme.clone(),
            utility: self.utility.clone(),
            snr_db: self.snr_db.clone(),
            out_dir: self.out.clone(),
        };
        load_config(self.config.as_deref(), &ov).context("invalid configuration")
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Converge(c) => {
            let cfg = c.load()?;
            if c.snr_db.as_ref().is_some_and(|v| v.len() > 1) {
                bail!("converge takes a single --snr-db value");
            }
            let run = run_convergence(&cfg).context("convergence run failed")?;
            write_convergence(&cfg, &run, c.dump_beams, "converge")?;
            println!(
                "{}: utility {} after {} rounds ({} accepted updates, converged: {}), {} scalars exchanged",
                cfg.schemes[0],
                format_value(run.state.network_utility()),
                run.summary.rounds,
                run.summary.accepted_updates,
                run.summary.converged,
                run.overhead.total_scalars,
            );
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let run = run_sweep(&cfg, c.dump_beams).context("sweep failed")?;
            write_sweep(&cfg, &run, "sweep")?;
            for s in &run.summary {
                println!(
                    "snr {:>5} dB  {:<13} mean {}  stderr {}",
                    s.snr_db,
                    s.scheme,
                    format_value(s.mean),
                    format_value(s.stderr)
                );
            }
        }
        Command::NashCheck(c) => {
            let cfg = c.load()?;
            let check = run_nash_check(&cfg).context("nash check failed")?;
            write_nash(&cfg, &check, c.dump_beams, "nash-check")?;
            for (m, r) in check.report.relative.iter().enumerate() {
                println!("bs {:>2}: relative gain {r:.3e}", cfg.scenario.coordinated[m]);
            }
            if !check.report.certified {
                bail!("not a Nash equilibrium at the configured tolerance");
            }
            println!("certified");
        }
    }
    Ok(())
}
