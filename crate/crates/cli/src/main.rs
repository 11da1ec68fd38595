//! `emacfil`: batch runs of the time-filtered EMAC Navier-Stokes solver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.

mod config;
mod run;
mod vtk;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_config, ConfigError, RunConfig};
use run::RunError;

#[derive(Parser)]
#[command(name = "emacfil", version, about = "Time-filtered EMAC finite element runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Run { config: PathBuf },
    /// Run every member of the configured h or dt sweep and tabulate rates.
    Sweep { config: PathBuf },
    /// Run with and without the time filter and tabulate the differences.
    Compare { config: PathBuf },
    /// Describe a Gmsh 2.2 ASCII mesh.
    MeshInfo { path: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, (u8, String)> {
    parse_config(path).map_err(|e| match e {
        ConfigError::Read { .. } => (4, e.to_string()),
        _ => (2, e.to_string()),
    })
}

fn fail(e: RunError) -> (u8, String) {
    (e.exit_code(), e.to_string())
}

fn dispatch(cmd: Command) -> Result<(), (u8, String)> {
    match cmd {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let r = run::run(&cfg).map_err(fail)?;
            println!(
                "{} steps, final energy {}, output in {}",
                r.summary.steps,
                r.summary.final_energy,
                cfg.output_dir.display()
            );
        }
        Command::Sweep { config } => {
            let cfg = load(&config)?;
            let s = run::sweep(&cfg).map_err(fail)?;
            for (k, (v, e)) in s.values.iter().zip(&s.errors).enumerate() {
                let rate = if k == 0 { String::from("-") } else { format!("{:.4}", s.rates[k - 1]) };
                println!("{v:>12} {e:>14.6e} {rate:>8}");
            }
        }
        Command::Compare { config } => {
            let cfg = load(&config)?;
            let c = run::compare(&cfg).map_err(fail)?;
            for (name, s) in [("filtered", &c.filtered), ("unfiltered", &c.unfiltered)] {
                print!("{name:<11} energy {:.6e}", s.final_energy);
                if let (Some(cd), Some(cl)) = (s.c_d_max, s.c_l_max) {
                    print!("  c_d,max {cd:.6}  c_l,max {cl:.6}");
                }
                if let Some(e) = s.l2_h1_error {
                    print!("  l2(H1) error {e:.6e}");
                }
                println!();
            }
        }
        Command::MeshInfo { path } => print!("{}", run::mesh_info(&path).map_err(fail)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("emacfil: {message}");
            ExitCode::from(code)
        }
    }
}
