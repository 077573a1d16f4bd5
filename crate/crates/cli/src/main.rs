use std::path::PathBuf;
use std::process::ExitCode;

use bearing_forge::control::ControlMode;
use bearing_forge::scenario::{self, Overrides, ScenarioConfig, ScenarioError};
use clap::{Args, Parser, Subcommand};

/// Bearing-based formation control simulator.
#[derive(Parser, Debug)]
#[command(name = "bearing-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario and write trajectory, metrics and oracle reports.
    Run(Invocation),
    /// Load and validate a scenario without integrating it.
    Validate(Invocation),
    /// Print the eigenvalues of the compact closed-loop matrix.
    Spectrum(Invocation),
    /// Print the follower target positions implied by the leaders at t = 0.
    Localize(Invocation),
}

#[derive(Args, Debug)]
struct Invocation {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[arg(long)]
    kappa_p: Option<f64>,
    #[arg(long)]
    kappa_v: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// known, adaptive or feedback_only.
    #[arg(long)]
    mode: Option<ControlMode>,
    /// Output directory (overrides the scenario's).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the oracle report.
    #[arg(long)]
    oracles: bool,
}

impl Invocation {
    fn overrides(&self) -> Overrides {
        Overrides {
            kappa_p: self.kappa_p,
            kappa_v: self.kappa_v,
            t_final: self.t_final,
            h: self.h,
            mode: self.mode,
            out: self.out.clone(),
            oracles: self.oracles.then_some(true),
        }
    }

    fn load(&self) -> Result<ScenarioConfig, ScenarioError> {
        let text = std::fs::read_to_string(&self.scenario).map_err(|e| ScenarioError::Io {
            path: self.scenario.clone(),
            source: e,
        })?;
        Ok(scenario::parse_scenario(&text)?.with_overrides(&self.overrides()))
    }
}

fn execute(cmd: &Command) -> Result<(), ScenarioError> {
    match cmd {
        Command::Run(inv) => {
            let cfg = inv.load()?;
            let report = scenario::run(&cfg, &Overrides::default())?;
            let m = &report.metrics;
            println!("trajectory: {}", report.trajectory_path.display());
            println!("metrics: {}", report.metrics_path.display());
            println!("terminal err_p = {:e}, err_v = {:e}", m.terminal_err_p, m.terminal_err_v);
            match m.decay_rate {
                Some(r) => println!("fitted decay rate = {r:.6}"),
                None => println!("fitted decay rate = undefined"),
            }
            if let Some(o) = &report.oracles {
                println!("oracles: {}", report.oracles_path.as_ref().expect("written with report").display());
                println!("spectral abscissa = {:.6}", o.spectral_abscissa);
                println!("xi max deviation = {:e}", o.xi_max_deviation);
                if let Some(l) = &o.lyapunov {
                    println!("V non-increasing = {}", l.non_increasing);
                }
            }
        }
        Command::Validate(inv) => {
            let cfg = inv.load()?;
            let sim = cfg.build()?;
            println!(
                "ok: {} agents, {} leaders, mode {}, lambda_min(B_ff) = {:.6}",
                sim.graph.n(),
                sim.graph.n_leaders(),
                sim.mode,
                sim.laplacian.ff_lambda_min()
            );
        }
        Command::Spectrum(inv) => {
            let sim = inv.load()?.build()?;
            for [re, im] in scenario::sorted_eigenvalues(&sim)? {
                println!("{re:.12e} {im:+.12e}");
            }
        }
        Command::Localize(inv) => {
            let sim = inv.load()?.build()?;
            let (pf, _) = sim.target(0.0).map_err(ScenarioError::Sim)?;
            let d = sim.dim();
            for (k, f) in sim.followers.iter().enumerate() {
                let coords: Vec<String> = (0..d)
                    .map(|a| {
                        // avoid printing "-0.000000000000" for roundoff-sized values
                        let x = pf[k * d + a];
                        format!("{:.12}", if x.abs() < 5e-13 { 0.0 } else { x })
                    })
                    .collect();
                println!("{} {}", f.label, coords.join(" "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
