use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use waveguide::scenario::{
    field_slice_csv, modes_csv, preset_scenarios, run_scenario_with_basis, Scenario,
    ScenarioError, DEFAULT_SEED, PRESET_NAMES,
};

#[derive(Parser)]
#[command(name = "waveguide", version, about = "Modal acoustics and source localization in a three-layered ocean waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment: forward synthesis, noise, localization.
    Run {
        /// Scenario config file (or a previous run's manifest).
        config: Option<PathBuf>,
        /// Run a bundled scenario instead of a config file.
        #[arg(long, value_parser = PRESET_NAMES)]
        preset: Option<String>,
        /// Use the fine mesh and tight mode tolerance.
        #[arg(long)]
        paper_scale: bool,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Tabulate dispersion roots, weights and mode profiles.
    Modes {
        config: PathBuf,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Export a vertical slice of the background field for plotting.
    Field {
        config: PathBuf,
        /// Fixed plane, e.g. `x=18` or `y=18`.
        #[arg(long)]
        plane: String,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_scenario(path: &PathBuf, paper_scale: bool, seed: Option<u64>) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
    let mut sc = Scenario::from_text(&text)?;
    if paper_scale {
        sc.forward_delta = 1.0 / 15.0;
        sc.modes_tol = 1e-8;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn dispatch(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Run { config, preset, paper_scale, seed, out } => {
            let scenarios = match (config, preset) {
                (Some(path), None) => vec![load_scenario(&path, paper_scale, seed)?],
                (None, Some(name)) => {
                    preset_scenarios(&name, paper_scale, seed.unwrap_or(DEFAULT_SEED))?
                }
                _ => {
                    return Err(ScenarioError::Parse {
                        line: 0,
                        msg: "pass exactly one of <config> or --preset".into(),
                    })
                }
            };
            // scenarios from one preset share the waveguide and mesh scale,
            // so the modal basis is built once
            let basis = scenarios[0].build_basis()?;
            for sc in &scenarios {
                eprintln!("running scenario '{}'", sc.label);
                let artifacts = run_scenario_with_basis(sc, &basis)?;
                let best = artifacts.locate.vertices.first();
                if let Some((pos, _)) = best {
                    eprintln!(
                        "  estimate ({}, {}, {}) after {} indicator evaluations{}",
                        pos[0],
                        pos[1],
                        pos[2],
                        artifacts.locate.total_evals,
                        if artifacts.locate.budget_exceeded { " (budget hit)" } else { "" },
                    );
                }
                for path in artifacts.write_files(&out)? {
                    eprintln!("  wrote {}", path.display());
                }
            }
            Ok(())
        }
        Command::Modes { config, paper_scale, out } => {
            let sc = load_scenario(&config, paper_scale, None)?;
            let basis = sc.build_basis()?;
            let (table, profiles) = modes_csv(&basis);
            fs::create_dir_all(&out)
                .map_err(|source| ScenarioError::Io { path: out.clone(), source })?;
            for (name, content) in [("modes.csv", table), ("mode_profiles.csv", profiles)] {
                let path = out.join(format!("{}.{name}", sc.label));
                fs::write(&path, content)
                    .map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Field { config, plane, paper_scale, out } => {
            let sc = load_scenario(&config, paper_scale, None)?;
            let (axis, value) = parse_plane(&plane)?;
            let basis = sc.build_basis()?;
            let csv = field_slice_csv(&sc, &basis, axis, value, 121, 101);
            fs::create_dir_all(&out)
                .map_err(|source| ScenarioError::Io { path: out.clone(), source })?;
            let path = out.join(format!("{}.field.csv", sc.label));
            fs::write(&path, csv)
                .map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn parse_plane(spec: &str) -> Result<(usize, f64), ScenarioError> {
    let bad = || ScenarioError::Parse {
        line: 0,
        msg: format!("plane must look like 'x=18' or 'y=18', got '{spec}'"),
    };
    let (axis, value) = spec.split_once('=').ok_or_else(bad)?;
    let axis = match axis.trim() {
        "x" => 0,
        "y" => 1,
        _ => return Err(bad()),
    };
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    Ok((axis, value))
}
