//! Command-line front end: model checking, equilibrium solves, shape
//! scans, oracle validation and re-evaluation of stored profiles.
//!
//! Exit codes: 0 success, 1 quantitative failure (non-convergence or a
//! failed check), 2 usage or configuration error.

mod config;
mod output;
mod validate;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use config::RunConfig;
use rotstar_core::energy::{compute_fields, potential_function, total_energy};
use rotstar_core::fields::DensityProfile;
use rotstar_core::geometry::build_grid;
use rotstar_core::gravity::ReducedKernel;
use rotstar_core::model::check_conditions;
use rotstar_core::solver::{scan_b, solve, support_radius};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "rotstar", about = "Rotating-star equilibria by constrained energy minimization")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and profiles.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the Monte Carlo oracles (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for field assembly (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the admissibility conditions of the configured model.
    Check,
    /// Solve the fixed-shape minimization and write the certificate.
    Solve,
    /// Minimize across the shape family b in [1/xi, xi].
    ScanB,
    /// Run the oracle cross-check suite.
    Validate,
    /// Re-evaluate the energy of a stored profile.
    Energy { profile: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Ignore the error if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let config_path = cli
        .config
        .as_deref()
        .context("--config <path> is required")?;
    let config = RunConfig::load(config_path)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.unwrap_or(config.seed);
    match &cli.command {
        Command::Check => cmd_check(&config, &out_dir),
        Command::Solve => cmd_solve(&config, &out_dir),
        Command::ScanB => cmd_scan_b(&config, &out_dir),
        Command::Validate => cmd_validate(&config, &out_dir, seed),
        Command::Energy { profile } => cmd_energy(&config, &out_dir, profile),
    }
}

fn cmd_check(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    let spec = config.model_spec()?;
    let report = check_conditions(&spec, config.solver.condition_samples)?;
    for line in report.lines() {
        println!("{line}");
    }
    output::write_json(&out_dir.join("check.json"), &report)?;
    Ok(if report.all_passed() { 0 } else { 1 })
}

fn cmd_solve(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    let spec = config.model_spec()?;
    let b = match config.geometry.b {
        Some(b) => b,
        None => bail!("solve needs geometry.b; use scan-b for shape ranges"),
    };
    let r_max = config.r_max(&spec)?;
    let grid = Arc::new(build_grid(b, r_max, config.geometry.cells, config.geometry.n_beta)?);
    let kernel = ReducedKernel::assemble(&grid);
    let outcome = solve(&spec, &grid, &kernel, &config.solver_options())?;

    output::write_json(&out_dir.join("report.json"), &outcome.report)?;
    output::write_profile_csv(
        &out_dir.join("profile.csv"),
        &outcome.profile,
        &outcome.fields,
        &outcome.potential,
    )?;

    let r = &outcome.report;
    println!(
        "converged={} iterations={} lambda={:.9e} E={:.9e} residual=({:.3e},{:.3e}) support={:.6}",
        r.converged, r.iterations, r.lambda, r.energy.total, r.residual.interior,
        r.residual.exterior, r.support_radius
    );
    if r.truncation_warning {
        println!("warning: support approaches the truncation radius; enlarge r_max");
    }
    Ok(if r.converged { 0 } else { 1 })
}

fn cmd_scan_b(config: &RunConfig, out_dir: &Path) -> anyhow::Result<i32> {
    let spec = config.model_spec()?;
    let xi = match config.geometry.xi {
        Some(xi) => xi,
        None => bail!("scan-b needs geometry.xi"),
    };
    let n_b = config.geometry.n_b.context("scan-b needs geometry.n_b")?;
    let r_max = config.r_max(&spec)?;
    let scan = scan_b(
        &spec,
        xi,
        n_b,
        r_max,
        config.geometry.cells,
        config.geometry.n_beta,
        &config.solver_options(),
    )?;

    let mut csv = String::from("b,F_b,converged\n");
    for e in &scan.entries {
        csv.push_str(&format!("{},{},{}\n", e.b, e.f_b, e.converged));
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("scan_b.csv"), csv)?;

    #[derive(Serialize)]
    struct ScanSummary<'a> {
        argmin_b: Option<f64>,
        argmin_energy: Option<f64>,
        all_converged: bool,
        entries: &'a [rotstar_core::solver::ScanEntry],
    }
    let all_converged = scan.entries.iter().all(|e| e.converged);
    let summary = ScanSummary {
        argmin_b: scan.argmin.map(|i| scan.entries[i].b),
        argmin_energy: scan.argmin.map(|i| scan.entries[i].f_b),
        all_converged,
        entries: &scan.entries,
    };
    output::write_json(&out_dir.join("scan_b.json"), &summary)?;
    for e in &scan.entries {
        println!("b={:.6} F_b={:.9e} converged={}", e.b, e.f_b, e.converged);
    }
    if let Some(b) = summary.argmin_b {
        println!("argmin b={b:.6}");
    }
    Ok(if all_converged { 0 } else { 1 })
}

fn cmd_validate(config: &RunConfig, out_dir: &Path, seed: u64) -> anyhow::Result<i32> {
    let report = validate::run_validation(
        config.validate.tolerance_scale,
        config.validate.mc_samples,
        seed,
    )?;
    for c in &report.checks {
        println!(
            "{} {}: measured {:.3e} allowed {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.allowed
        );
    }
    output::write_json(&out_dir.join("validate.json"), &report)?;
    Ok(if report.all_passed { 0 } else { 1 })
}

fn cmd_energy(config: &RunConfig, out_dir: &Path, profile_path: &Path) -> anyhow::Result<i32> {
    let spec = config.model_spec()?;
    let b = match config.geometry.b {
        Some(b) => b,
        None => bail!("energy needs geometry.b"),
    };
    let r_max = config.r_max(&spec)?;
    let grid = Arc::new(build_grid(b, r_max, config.geometry.cells, config.geometry.n_beta)?);
    let (r, rho) = output::read_profile_csv(profile_path)?;
    if r.len() != grid.n_cells {
        bail!(
            "profile has {} rows but the configured grid has {} cells",
            r.len(),
            grid.n_cells
        );
    }
    for (i, (&ri, &gi)) in r.iter().zip(&grid.midpoints).enumerate() {
        if (ri - gi).abs() > 1e-12 * gi.max(1.0) {
            bail!("row {i}: radius {ri} does not match the grid midpoint {gi}");
        }
    }
    let profile = DensityProfile::new(grid.clone(), rho)?;
    let kernel = ReducedKernel::assemble(&grid);
    let fields = compute_fields(&profile, &spec, &kernel)?;
    let _potential = potential_function(&profile, &spec, &fields)?;
    let energy = total_energy(&profile, &spec, &kernel)?;

    #[derive(Serialize)]
    struct EnergyReport {
        energy: rotstar_core::energy::EnergyBreakdown,
        mass: f64,
        support_radius: f64,
    }
    let floor = config.solver.density_floor * profile.values.iter().cloned().fold(0.0, f64::max);
    let report = EnergyReport {
        energy,
        mass: profile.total_mass(),
        support_radius: support_radius(&profile, floor),
    };
    output::write_json(&out_dir.join("energy.json"), &report)?;
    println!(
        "E={:.9e} internal={:.9e} rotational={:.9e} gravitational={:.9e} mass={:.12e}",
        report.energy.total,
        report.energy.internal,
        report.energy.rotational,
        report.energy.gravitational,
        report.mass
    );
    Ok(0)
}
