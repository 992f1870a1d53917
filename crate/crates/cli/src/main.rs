//! `auction` — solve, sweep, and verify auction scenarios from the command
//! line. Exit code is 0 only when every requested verification passes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use auction_core::scenario::{
    load_scenario, run_solve, run_sweep, ScenarioConfig, SolveArtifacts, PRESET_NAMES,
};
use auction_core::solver::{optimize_allocation_at, virtual_surplus_at};
use auction_core::verification::oracle_allocation_search;

#[derive(Parser)]
#[command(name = "auction", version, about = "Optimal-auction solver and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write the mechanism table plus a verification report
    Solve {
        /// Preset name or path to a scenario TOML file
        scenario: String,
        /// Override the scenario's grid resolution
        #[arg(long, value_name = "R")]
        resolution: Option<usize>,
        /// Output directory (default: scenario's out_dir, then ./out)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Absolute tolerance for the IR/IC checks
        #[arg(long, value_name = "X", default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Sweep one user's type with opponents pinned and write the sweep CSV
    Sweep {
        scenario: String,
        #[arg(long, value_name = "R")]
        resolution: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Re-solve the mechanism at every sweep point (degenerate types)
        #[arg(long)]
        resolve_per_point: bool,
    },
    /// Solve a scenario and run the certification checks, reporting pass/fail
    Verify {
        scenario: String,
        #[arg(long, value_name = "R")]
        resolution: Option<usize>,
        #[arg(long, value_name = "X", default_value_t = 1e-6)]
        tolerance: f64,
        /// Also cross-check the allocation rule against the brute-force
        /// oracle on a K-step fractional grid (0 = skip)
        #[arg(long, value_name = "K", default_value_t = 0)]
        oracle_steps: usize,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// List the built-in scenario presets
    Presets {
        /// Write each preset's TOML file into this directory
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn out_dir(flag: Option<PathBuf>, config: &ScenarioConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn suffixed(stem: &str, label: &str, ext: &str) -> String {
    if label.is_empty() {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}-{label}.{ext}")
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> auction_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn report_text(artifacts: &[SolveArtifacts]) -> String {
    let mut text = String::new();
    for art in artifacts {
        if art.label.is_empty() {
            let _ = writeln!(text, "revenue = {}", art.revenue);
        } else {
            let _ = writeln!(text, "[{}] revenue = {}", art.label, art.revenue);
        }
        for w in &art.warnings {
            let _ = writeln!(text, "  warning: {w}");
        }
        for r in &art.reports {
            let _ = writeln!(
                text,
                "  {:24} {}  worst {:+.3e}  ({})",
                r.check,
                if r.pass { "PASS" } else { "FAIL" },
                r.worst,
                r.location
            );
        }
    }
    text
}

fn summary_toml(artifacts: &[SolveArtifacts]) -> String {
    let mut text = String::new();
    for art in artifacts {
        let _ = writeln!(text, "[[case]]");
        let _ = writeln!(text, "label = {:?}", art.label);
        let _ = writeln!(text, "revenue = {:?}", art.revenue);
        let _ = writeln!(text, "pass = {}", art.all_pass());
        for r in &art.reports {
            let _ = writeln!(text, "\n[[case.checks]]");
            let _ = writeln!(text, "name = {:?}", r.check);
            let _ = writeln!(text, "pass = {}", r.pass);
            let _ = writeln!(text, "worst = {:?}", r.worst);
            let _ = writeln!(text, "location = {:?}", r.location);
        }
        text.push('\n');
    }
    text
}

/// Spot-check the vertex optimizer against the brute-force oracle at interior
/// quantile nodes. Returns the largest objective shortfall found.
fn oracle_spot_check(
    config: &ScenarioConfig,
    resolution: Option<usize>,
    steps: usize,
) -> auction_core::Result<f64> {
    let resolution = resolution.unwrap_or(config.resolution);
    let (catalog, profiles) = config.build()?;
    let quantiles = [0.25, 0.5, 0.75];
    let mut worst = 0.0f64;
    let mut point = vec![0.0f64; profiles.len()];
    let combos = quantiles.len().pow(profiles.len() as u32);
    for c in 0..combos {
        let mut rem = c;
        for (i, profile) in profiles.iter().enumerate() {
            let q = quantiles[rem % quantiles.len()];
            rem /= quantiles.len();
            let (lo, hi) = profile.type_dist.bounds();
            // snap to a grid node so the check matches solver inputs
            let a = ((resolution - 1) as f64 * q).round();
            point[i] = lo + (hi - lo) * a / (resolution - 1) as f64;
        }
        let vertex = optimize_allocation_at(&catalog, &profiles, &point)?;
        let oracle = oracle_allocation_search(&catalog, &profiles, &point, steps, 2_000_000_000)?;
        let v = virtual_surplus_at(&catalog, &profiles, &point, &vertex)?;
        let o = virtual_surplus_at(&catalog, &profiles, &point, &oracle)?;
        worst = worst.max(o - v);
    }
    Ok(worst)
}

fn run(command: Command) -> auction_core::Result<bool> {
    match command {
        Command::Solve {
            scenario,
            resolution,
            out,
            tolerance,
        } => {
            let config = load_scenario(&scenario)?;
            let dir = out_dir(out, &config);
            let artifacts = run_solve(&config, resolution, tolerance)?;
            write_file(&dir, "scenario.toml", &config.to_toml())?;
            for art in &artifacts {
                write_file(&dir, &suffixed("mechanism", &art.label, "csv"), &art.mechanism_csv)?;
            }
            write_file(&dir, "report.txt", &report_text(&artifacts))?;
            write_file(&dir, "summary.toml", &summary_toml(&artifacts))?;
            print!("{}", report_text(&artifacts));
            Ok(artifacts.iter().all(SolveArtifacts::all_pass))
        }
        Command::Sweep {
            scenario,
            resolution,
            out,
            resolve_per_point,
        } => {
            let config = load_scenario(&scenario)?;
            let dir = out_dir(out, &config);
            let artifacts = run_sweep(&config, resolution, resolve_per_point)?;
            write_file(&dir, "scenario.toml", &config.to_toml())?;
            for art in &artifacts {
                write_file(&dir, &suffixed("sweep", &art.label, "csv"), &art.csv)?;
            }
            Ok(true)
        }
        Command::Verify {
            scenario,
            resolution,
            tolerance,
            oracle_steps,
            out,
        } => {
            let config = load_scenario(&scenario)?;
            let artifacts = run_solve(&config, resolution, tolerance)?;
            let mut text = report_text(&artifacts);
            let mut pass = artifacts.iter().all(SolveArtifacts::all_pass);
            if oracle_steps > 0 {
                let mut worst = 0.0f64;
                for (_, case) in config.cases() {
                    worst = worst.max(oracle_spot_check(&case, resolution, oracle_steps)?);
                }
                let ok = worst <= 1e-9;
                let _ = writeln!(
                    text,
                    "  {:24} {}  worst {:+.3e}  (oracle objective shortfall, {} steps)",
                    "oracle",
                    if ok { "PASS" } else { "FAIL" },
                    worst,
                    oracle_steps
                );
                pass &= ok;
            }
            print!("{text}");
            if let Some(dir) = out {
                write_file(&dir, "report.txt", &text)?;
                write_file(&dir, "summary.toml", &summary_toml(&artifacts))?;
            }
            println!("verification: {}", if pass { "PASS" } else { "FAIL" });
            Ok(pass)
        }
        Command::Presets { out } => {
            for name in PRESET_NAMES {
                println!("{name}");
                if let Some(dir) = &out {
                    let config = load_scenario(name)?;
                    write_file(dir, &format!("{name}.toml"), &config.to_toml())?;
                }
            }
            Ok(true)
        }
    }
}
