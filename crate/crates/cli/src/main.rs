use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ghost_core::correlate::ReductionMode;
use ghost_core::harness::{nfactorial_check, parse_config, run_scenario};
use ghost_core::metrics::psf_fwhm;
use ghost_core::{CorrelationOrder, OpticalConfig};

#[derive(Parser)]
#[command(name = "ghost", version, about = "Lensless ghost imaging simulator")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a configuration file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force the fixed-order reduction so output is bit-identical
        /// across thread counts.
        #[arg(long)]
        bit_exact: bool,
    },
    /// Compare same-point speckle moments with N!.
    CheckNfactorial {
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        max_order: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Width of the reconstructed point-spread peak for one order.
    Psf {
        /// Order and split written `N,n`.
        #[arg(long)]
        order: String,
        #[arg(long, default_value_t = 20_000)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Square grid side in pixels.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
}

fn parse_order(text: &str) -> Result<CorrelationOrder> {
    let (n_total, n) = text
        .split_once(',')
        .context("order must be written N,n")?;
    Ok(CorrelationOrder::new(n_total.trim().parse()?, n.trim().parse()?)?)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run {
            config,
            seed,
            frames,
            out,
            bit_exact,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("stage `configuration`: reading {}", config.display()))?;
            let mut spec = parse_config(&text).context("stage `configuration`")?;
            if let Some(seed) = seed {
                spec = spec.with_seed(seed);
            }
            if let Some(frames) = frames {
                spec = spec.with_frames(frames);
            }
            if let Some(out) = out {
                spec = spec.with_output_dir(out);
            }
            if bit_exact {
                spec.reduction = ReductionMode::Fixed;
            }
            let manifest = run_scenario(&spec)?;
            for row in &manifest.orders {
                let fluct = row.fluctuation.map_or("-".to_string(), |f| format!("{f:.4}"));
                println!(
                    "{}: visibility {:.4}, fluctuation {}, fidelity {:.4}",
                    row.order, row.visibility.v, fluct, row.fidelity
                );
            }
            for row in &manifest.direct {
                println!("direct z3 = {:.2} mm: fidelity {:.4}", row.z3 * 1e3, row.fidelity);
            }
            for row in &manifest.nfactorial {
                println!("g({}) = {:.4} (expected {})", row.order, row.measured, row.expected);
            }
            println!(
                "wrote {} files to {} in {:.1} s",
                manifest.files().count(),
                spec.output_dir.display(),
                manifest.wall_time.as_secs_f64()
            );
        }
        Command::CheckNfactorial {
            samples,
            max_order,
            seed,
        } => {
            let cfg = OpticalConfig::character_experiment().with_seed(seed);
            let rows = nfactorial_check(&cfg, samples, max_order).context("stage `correlation`")?;
            println!("N,measured,expected,relative_error");
            for r in rows {
                println!("{},{:.5},{},{:.4}", r.order, r.measured, r.expected, r.relative_error());
            }
        }
        Command::Psf {
            order,
            frames,
            seed,
            grid,
        } => {
            let order = parse_order(&order)?;
            let cfg = OpticalConfig::character_experiment()
                .with_grid(grid, grid)
                .with_seed(seed);
            let report = psf_fwhm(&cfg, order, frames).context("stage `metrics`")?;
            let lc = cfg.coherence_length();
            println!(
                "{}: FWHM {:.2} um ({:.3} coherence lengths of {:.2} um)",
                report.order,
                report.fwhm * 1e6,
                report.fwhm / lc,
                lc * 1e6
            );
        }
    }
    Ok(())
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
