//! The oracle cross-check suite behind `rotstar validate`.
//!
//! Every check compares an independent route (closed form, 1-D spherical
//! reduction, Monte Carlo) against the production evaluators, at fixed
//! internal parameters, so the suite is a self-contained regression gate.
//! Tolerances are scaled by `validate.tolerance_scale` from the config.

use rotstar_core::fields::{CylindricalMass, DensityProfile};
use rotstar_core::geometry::build_grid;
use rotstar_core::gravity::{
    potential_at, ring_potential, spherical_potential, uniform_ellipsoid_center, ReducedKernel,
};
use rotstar_core::model::{AngularMomentumProfile, EntropyProfile, EquationOfState, ModelSpec, Shape};
use rotstar_core::oracles::{monte_carlo_cyl_mass, monte_carlo_potential, random_profile};
use rotstar_core::solver::{solve, SolverOptions};
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub allowed: f64,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub all_passed: bool,
}

fn check(name: &str, measured: f64, allowed: f64) -> ValidationCheck {
    ValidationCheck { name: name.into(), passed: measured <= allowed, measured, allowed }
}

pub fn run_validation(scale: f64, mc_samples: usize, seed: u64) -> anyhow::Result<ValidationReport> {
    let mut checks = Vec::new();

    // Ring kernel on the axis reduces to the slant point-mass law.
    {
        let v = ring_potential((0.0, 0.4), (0.8, 0.0), 1.5)?;
        let exact = 1.5 / (0.8f64.powi(2) + 0.16).sqrt();
        checks.push(check("ring_kernel_axis_limit", (v - exact).abs() / exact, 1e-14 * scale));
    }

    // Ring superposition against the 1-D spherical reduction, on the
    // uniform ball and on random profiles.
    {
        let g = Arc::new(build_grid(1.0, 2.0, 160, 8)?);
        let kernel = ReducedKernel::assemble(&g);
        let mut worst: f64 = 0.0;
        for s in 0..3u64 {
            let p = if s == 0 {
                DensityProfile::from_fn(g.clone(), |r| if r <= 1.0 { 1.0 } else { 0.0 })?
            } else {
                random_profile(g.clone(), seed.wrapping_add(s))
            };
            let exact = spherical_potential(&p)?;
            let kg = kernel.k_grav(&p.values);
            for i in 0..g.n_cells {
                worst = worst.max((kg[i] - exact[i]).abs() / exact[i].abs().max(1e-12));
            }
        }
        checks.push(check("spherical_vs_ring_kernel", worst, 1e-3 * scale));
    }

    // Central potential of homogeneous ellipsoids against the closed form.
    {
        let mut worst: f64 = 0.0;
        for &b in &[0.5, 1.0, 2.0] {
            let g = Arc::new(build_grid(b, 2.0, 160, 8)?);
            let p = DensityProfile::from_fn(g.clone(), |r| if r <= 1.0 { 1.0 } else { 0.0 })?;
            let exact = uniform_ellipsoid_center(b, p.total_mass(), 1.0)?;
            let got = potential_at(&p, 0.0, 0.0)?;
            worst = worst.max((got - exact).abs() / exact);
        }
        checks.push(check("ellipsoid_center_closed_form", worst, 1e-3 * scale));
    }

    // Monte Carlo potential at assorted field points of an ellipsoid.
    {
        let g = Arc::new(build_grid(2.0, 2.0, 120, 8)?);
        let p = DensityProfile::from_fn(g.clone(), |r| if r <= 1.0 { 1.0 } else { 0.0 })?;
        let mut worst: f64 = 0.0;
        for (k, &pt) in [(0.0, 0.0), (0.5, 0.4), (0.9, 0.0), (1.4, 1.0), (0.2, 1.5)]
            .iter()
            .enumerate()
        {
            let exact = potential_at(&p, pt.0, pt.1)?;
            let (est, se) = monte_carlo_potential(&p, pt, mc_samples, seed.wrapping_add(10 + k as u64))?;
            worst = worst.max((est - exact).abs() / (3.0 * se).max(1e-300));
        }
        checks.push(check("monte_carlo_potential_3sigma", worst, scale));
    }

    // Monte Carlo cylindrical mass against the exact cell sums.
    {
        let g = Arc::new(build_grid(1.0, 1.0, 120, 8)?);
        let p = DensityProfile::from_fn(g.clone(), |_| 1.0)?;
        let m = CylindricalMass::new(&p);
        let mut worst: f64 = 0.0;
        for (k, &s) in [0.4, 0.8].iter().enumerate() {
            let exact = m.eval(s)?;
            let (est, se) = monte_carlo_cyl_mass(&p, s, mc_samples, seed.wrapping_add(20 + k as u64))?;
            worst = worst.max((est - exact).abs() / (3.0 * se).max(1e-300));
        }
        checks.push(check("monte_carlo_cyl_mass_3sigma", worst, scale));
    }

    // End-to-end: the non-rotating isentropic solve against the closed
    // Lane-Emden form.
    {
        let mass = 1.0;
        let spec = ModelSpec::new(
            EquationOfState::polytrope(1.0, 2.0)?,
            EntropyProfile::linear(0.0, mass)?,
            AngularMomentumProfile::none(mass),
            mass,
            Shape::Fixed(1.0),
        )?;
        let g = Arc::new(build_grid(1.0, 3.0, 200, 8)?);
        let kernel = ReducedKernel::assemble(&g);
        let outcome = solve(&spec, &g, &kernel, &SolverOptions::default())?;
        let rho_c = 1.0 / (2.0 * PI).sqrt();
        let alpha = rho_c;
        let mut worst: f64 = 0.0;
        for (i, &r) in g.midpoints.iter().enumerate() {
            let x = r / alpha;
            let exact = if x < PI { (rho_c * x.sin() / x).max(0.0) } else { 0.0 };
            worst = worst.max((outcome.profile.values[i] - exact).abs() / rho_c);
        }
        let conv = if outcome.report.converged { 0.0 } else { 1.0 };
        checks.push(check("lane_emden_convergence_flag", conv, 0.5 * scale));
        checks.push(check("lane_emden_density_error", worst, 2e-3 * scale));
        checks.push(check(
            "lane_emden_multiplier",
            (outcome.report.lambda + (2.0 / PI).sqrt()).abs(),
            2e-3 * scale,
        ));
        checks.push(check(
            "lane_emden_support",
            (outcome.report.support_radius - (PI / 2.0).sqrt()).abs(),
            2.0 * g.cell_width() * scale,
        ));
    }

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, all_passed })
}
