use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use endonav::config::load_config;
use endonav::core::nav::ControllerMode;
use endonav::plot::emit_plots;
use endonav::runner::{compare_task, run_task, RunOptions};

/// Simulated autonomous endoscope navigation.
#[derive(Parser)]
#[command(name = "endonav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials of one task.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        /// with | without | velocity
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ControllerMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Paired comparison of planning against no planning.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the SVG panels for every trial under a run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<ControllerMode, String> {
    ControllerMode::parse(s).map_err(|e| e.to_string())
}

fn report(ok: usize, total: usize) -> ExitCode {
    println!("{ok}/{total} trials succeeded");
    if ok == total {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, trials, mode, seed, out } => load_config(&config)
            .and_then(|c| RunOptions { trials, mode, seed }.apply(&c))
            .and_then(|c| run_task(&c, &out))
            .map(|metrics| {
                for m in &metrics {
                    match &m.failure {
                        None => println!(
                            "trial {}: T_in {:.2} s, L_et {:.1} mm, mean |e| {:.3} px, energy flow {:.5}",
                            m.trial, m.t_in, m.l_et, m.mean_error_px, m.energy_flow
                        ),
                        Some(f) => println!("trial {}: FAILED after {} ticks: {f}", m.trial, m.ticks),
                    }
                }
                report(metrics.iter().filter(|m| m.success).count(), metrics.len())
            }),
        Command::Compare { config, out } => load_config(&config).and_then(|c| compare_task(&c, &out)).map(|cmp| {
            for r in &cmp.rows {
                println!(
                    "{:>8}: {} ok, {} failed, energy flow {:.5} ± {:.5}, mean |e| {:.3} px",
                    r.mode.label(),
                    r.completed,
                    r.failed,
                    r.energy_flow.mean,
                    r.energy_flow.std,
                    r.error_px.mean
                );
            }
            let (wins, pairs) = cmp.energy_wins();
            println!("{} energy flow <= {} in {wins}/{pairs} paired seeds", cmp.rows[1].mode.label(), cmp.rows[0].mode.label());
            let total = 2 * cmp.trials.len();
            report(cmp.rows.iter().map(|r| r.completed).sum(), total)
        }),
        Command::Plot { run } => emit_plots(&run).map(|files| {
            println!("wrote {} plots", files.len());
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
