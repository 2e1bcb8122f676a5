//! Self-consistent-field solver for the constrained minimization.
//!
//! One sweep recomputes the fields of the current profile, solves the
//! mass-constraint multiplier λ by bisection, inverts the stationarity
//! relation per shell,
//!
//! ```text
//! ρ̂_i = (A')⁻¹( max(0, λ − Q_i − K_rot,i + K_grav,i) / T(ñ_i) ),
//! ```
//!
//! and damps ρ ← (1−ω)ρ + ωρ̂. Fixed points satisfy G = λ on the support
//! and G >= λ outside by construction of the clamp, which is exactly the
//! discrete Euler-Lagrange certificate; the interior/exterior residuals
//! of the current iterate are the convergence monitor. Every iterate has
//! total mass M because λ is re-solved each sweep and damping averages
//! two mass-M states.

use crate::energy::{
    compute_fields, el_residual, potential_function, total_energy, EnergyBreakdown,
    PotentialFunction,
};
use crate::error::{Error, Result};
use crate::fields::{DensityProfile, FieldSet};
use crate::geometry::RadialGrid;
use crate::gravity::ReducedKernel;
use crate::model::{check_conditions, ModelSpec, Shape};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub enum InitialGuess {
    /// Uniform ball of radius R_max/2 carrying the total mass.
    UniformBall,
    Profile(DensityProfile),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Damping weight ω ∈ (0, 1] of the fixed-point update.
    pub damping: f64,
    /// Euler-Lagrange residual tolerance, scaled by max(1, |λ|).
    pub residual_tol: f64,
    /// Relative mass tolerance of the multiplier bisection.
    pub mass_tol: f64,
    pub max_iterations: usize,
    /// Relative density floor for support classification.
    pub density_floor: f64,
    pub initial: InitialGuess,
    /// Skip the (A1)-(A7) precondition (failures become the caller's
    /// responsibility).
    pub skip_condition_check: bool,
    /// Lattice size per axis for the precondition check.
    pub condition_samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            residual_tol: 1e-8,
            mass_tol: 1e-10,
            max_iterations: 500,
            density_floor: 1e-12,
            initial: InitialGuess::UniformBall,
            skip_condition_check: false,
            condition_samples: 100,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.residual_tol > 0.0) || !(self.mass_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.density_floor >= 0.0) {
            return Err(Error::InvalidInput("density floor must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub interior: f64,
    pub exterior: f64,
}

/// Convergence certificate of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub energy: EnergyBreakdown,
    pub residual: Residuals,
    pub support_radius: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mass_error: f64,
    /// Set when the support approaches the truncation radius: the state
    /// then solves the truncated problem, not necessarily the free one.
    pub truncation_warning: bool,
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

/// Report plus the state it certifies.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub profile: DensityProfile,
    pub fields: FieldSet,
    pub potential: PotentialFunction,
}

/// Multiplier λ such that the clamped inversion of the stationarity
/// relation against frozen fields carries total mass M.
///
/// The candidate mass is nondecreasing in λ (A' has a monotone inverse
/// and T > 0), so an expanding bracket plus bisection is sound.
pub fn solve_lambda(fields: &FieldSet, spec: &ModelSpec, target_mass: f64) -> Result<f64> {
    let grid_volumes: Vec<f64> = (0..fields.n_mid.len())
        .map(|i| fields.cell_volume_proxy(i))
        .collect();
    solve_lambda_impl(fields, spec, target_mass, &grid_volumes).map(|(l, _)| l)
}

impl FieldSet {
    // Cell volumes are recovered from the mass accumulation identity
    // vol_i = (n_{i+1} − n_i)/ρ_i only when ρ_i > 0; the solver passes
    // exact volumes instead. This proxy exists for the public
    // solve_lambda signature, which receives the grid through the
    // profile-independent edge data of the cylindrical mass.
    fn cell_volume_proxy(&self, i: usize) -> f64 {
        self.cyl_mass.cell_volume(i)
    }
}

fn solve_lambda_impl(
    fields: &FieldSet,
    spec: &ModelSpec,
    target_mass: f64,
    volumes: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = fields.n_mid.len();
    let mut pot = Vec::with_capacity(n);
    let mut temp = Vec::with_capacity(n);
    for i in 0..n {
        let v = fields.q[i] + fields.k_rot[i] - fields.k_grav[i];
        if !v.is_finite() {
            return Err(Error::NonFinite { field: "effective potential".into(), location: format!("shell {i}") });
        }
        pot.push(v);
        temp.push(spec.entropy.temperature(fields.n_mid[i].min(spec.mass))?);
    }
    let lambda_floor = pot.iter().cloned().fold(f64::MAX, f64::min);

    // Candidate mass at a multiplier; None when the inversion leaves the
    // tabulated range (treated as "more than enough mass").
    let candidate = |lambda: f64| -> Result<Option<(f64, Vec<f64>)>> {
        let mut values = Vec::with_capacity(n);
        let mut mass = 0.0;
        for i in 0..n {
            let y = ((lambda - pot[i]) / temp[i]).max(0.0);
            let rho = match spec.eos.density_from_marginal(y) {
                Ok(r) => r,
                Err(Error::OutOfRange(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            mass += rho * volumes[i];
            values.push(rho);
        }
        Ok(Some((mass, values)))
    };

    if target_mass == 0.0 {
        return Ok((lambda_floor, vec![0.0; n]));
    }

    // Expand the upper end of the bracket until the candidate mass
    // reaches the target.
    let mut lo = lambda_floor;
    let mut span = 1.0f64.max(lambda_floor.abs());
    let mut hi = lo + span;
    let mut doublings = 0;
    loop {
        match candidate(hi)? {
            None => break,
            Some((mass, _)) if mass >= target_mass => break,
            _ => {}
        }
        doublings += 1;
        if doublings > 60 {
            return Err(Error::UnsolvableConstraint(format!(
                "mass {target_mass} not reachable after 60 bracket doublings"
            )));
        }
        span *= 2.0;
        hi = lo + span;
    }

    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match candidate(mid)? {
            None => hi = mid,
            Some((mass, values)) => {
                let err = (mass - target_mass).abs() / target_mass;
                if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
                    best = Some((err, mid, values));
                }
                if err <= 1e-14 {
                    break;
                }
                if mass < target_mass {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if hi - lo <= 1e-16 * hi.abs().max(1.0) {
            break;
        }
    }
    match best {
        Some((_, lambda, values)) => Ok((lambda, values)),
        None => Err(Error::UnsolvableConstraint(
            "multiplier bisection found no admissible candidate".into(),
        )),
    }
}

/// One fixed-point sweep: fields of the current profile, λ, residuals of
/// the current state, and the damped update.
pub struct ScfStep {
    pub next: DensityProfile,
    pub fields: FieldSet,
    pub lambda: f64,
    pub residual: Residuals,
}

pub fn scf_step(
    profile: &DensityProfile,
    spec: &ModelSpec,
    kernel: &ReducedKernel,
    options: &SolverOptions,
) -> Result<ScfStep> {
    if !(0.0..=1.0).contains(&options.damping) {
        return Err(Error::InvalidInput(format!(
            "damping must lie in [0, 1], got {}",
            options.damping
        )));
    }
    let g = &profile.grid;
    let volumes: Vec<f64> = (0..g.n_cells).map(|i| g.cell_volume(i)).collect();
    let fields = compute_fields(profile, spec, kernel)?;
    let (lambda, candidate) = solve_lambda_impl(&fields, spec, spec.mass, &volumes)?;

    let pf = potential_function(profile, spec, &fields)?;
    let (interior, exterior) = el_residual(profile, &pf, lambda);

    let omega = options.damping;
    let values: Vec<f64> = profile
        .values
        .iter()
        .zip(&candidate)
        .map(|(&old, &new)| (1.0 - omega) * old + omega * new)
        .collect();
    let next = DensityProfile::new(g.clone(), values)?;
    Ok(ScfStep { next, fields, lambda, residual: Residuals { interior, exterior } })
}

/// Largest cell midpoint carrying density above the floor.
pub fn support_radius(profile: &DensityProfile, floor: f64) -> f64 {
    match profile.values.iter().rposition(|&v| v > floor) {
        Some(i) => profile.grid.midpoints[i],
        None => 0.0,
    }
}

/// Iterates the SCF map to the Euler-Lagrange certificate.
///
/// Non-convergence is reported in the outcome, not as an error.
pub fn solve(
    spec: &ModelSpec,
    grid: &Arc<RadialGrid>,
    kernel: &ReducedKernel,
    options: &SolverOptions,
) -> Result<SolveOutcome> {
    options.validate()?;
    if let Shape::Fixed(b) = spec.shape {
        if (b - grid.b).abs() > 1e-12 * b.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "model declares b = {b} but the grid has b = {}",
                grid.b
            )));
        }
    }
    if !options.skip_condition_check {
        let report = check_conditions(spec, options.condition_samples)?;
        if !report.all_passed() {
            return Err(Error::ConditionsViolated(report.lines().join("; ")));
        }
    }

    let mut profile = match &options.initial {
        InitialGuess::UniformBall => {
            DensityProfile::uniform_ball(grid.clone(), 0.5 * grid.r_max, spec.mass)?
        }
        InitialGuess::Profile(p) => {
            if !(Arc::ptr_eq(&p.grid, grid) || *p.grid == **grid) {
                return Err(Error::GridMismatch("initial guess lives on a different grid".into()));
            }
            // Project onto the mass constraint so every iterate sits in
            // the constrained class.
            let m0 = p.total_mass();
            if m0 > 0.0 && spec.mass > 0.0 {
                let scale = spec.mass / m0;
                DensityProfile::new(grid.clone(), p.values.iter().map(|v| v * scale).collect())?
            } else if spec.mass == 0.0 {
                DensityProfile::zero(grid.clone())
            } else {
                return Err(Error::InvalidInput(
                    "initial profile carries no mass to rescale".into(),
                ));
            }
        }
    };

    let mut energy_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut lambda = 0.0;
    let mut residual = Residuals { interior: f64::INFINITY, exterior: f64::INFINITY };
    let mut fields = compute_fields(&profile, spec, kernel)?;

    for it in 0..options.max_iterations {
        let step = scf_step(&profile, spec, kernel, options)?;
        lambda = step.lambda;
        residual = step.residual;
        fields = step.fields;
        energy_trace.push(total_energy(&profile, spec, kernel)?.total);

        let tol = options.residual_tol * lambda.abs().max(1.0);
        let mass_err = mass_error(&fields, spec.mass);
        if residual.interior <= tol && residual.exterior <= tol && mass_err <= options.mass_tol {
            converged = true;
            iterations = it;
            break;
        }
        profile = step.next;
        iterations = it + 1;
    }

    let pf = potential_function(&profile, spec, &fields)?;
    let energy = total_energy(&profile, spec, kernel)?;
    let floor = options.density_floor * profile.values.iter().cloned().fold(0.0, f64::max);
    let r_supp = support_radius(&profile, floor);
    let report = SolveReport {
        lambda,
        energy,
        residual,
        support_radius: r_supp,
        iterations,
        converged,
        mass_error: mass_error(&fields, spec.mass),
        truncation_warning: r_supp > 0.9 * grid.r_max,
        energy_trace,
    };
    Ok(SolveOutcome { report, profile, fields, potential: pf })
}

fn mass_error(fields: &FieldSet, target: f64) -> f64 {
    let total = fields.total_mass();
    if target == 0.0 {
        total.abs()
    } else {
        (total - target).abs() / target
    }
}

/// One row of the shape scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub b: f64,
    pub f_b: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    /// Index of the converged entry with the lowest energy.
    pub argmin: Option<usize>,
}

/// Minimizes over the shape family b ∈ [1/ξ, ξ] on a log-uniform grid.
///
/// Each solve is warm-started from the previous shape's minimizer mapped
/// by x₃ → (b_prev/b) x₃, which preserves the total mass exactly and is
/// the natural homotopy between neighboring admissible sets.
pub fn scan_b(
    spec: &ModelSpec,
    xi: f64,
    n_points: usize,
    r_max: f64,
    n_cells: usize,
    n_beta: usize,
    options: &SolverOptions,
) -> Result<ScanReport> {
    if !(xi > 1.0) {
        return Err(Error::InvalidInput(format!("scan range parameter must exceed 1, got {xi}")));
    }
    if n_points < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 scan points, got {n_points}")));
    }
    if !options.skip_condition_check {
        let report = check_conditions(spec, options.condition_samples)?;
        if !report.all_passed() {
            return Err(Error::ConditionsViolated(report.lines().join("; ")));
        }
    }

    let ln_xi = xi.ln();
    let mut entries = Vec::with_capacity(n_points);
    let mut warm: Option<(f64, DensityProfile)> = None;
    for k in 0..n_points {
        let t = k as f64 / (n_points - 1) as f64;
        let b = (-ln_xi + 2.0 * ln_xi * t).exp();
        let grid = Arc::new(crate::geometry::build_grid(b, r_max, n_cells, n_beta)?);
        let kernel = ReducedKernel::assemble(&grid);
        let mut local = options.clone();
        local.skip_condition_check = true;
        local.initial = match &warm {
            Some((b_prev, p)) => {
                let a = b_prev / b;
                let values: Vec<f64> = p.values.iter().map(|v| v * a).collect();
                InitialGuess::Profile(DensityProfile::new(grid.clone(), values)?)
            }
            None => InitialGuess::UniformBall,
        };
        let spec_b = ModelSpec::new(
            spec.eos.clone(),
            spec.entropy.clone(),
            spec.angmom.clone(),
            spec.mass,
            Shape::Fixed(b),
        )?;
        let outcome = solve(&spec_b, &grid, &kernel, &local)?;
        if outcome.report.converged {
            warm = Some((b, outcome.profile.clone()));
        }
        entries.push(ScanEntry { b, f_b: outcome.report.energy.total, converged: outcome.report.converged });
    }
    let argmin = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.converged)
        .min_by(|a, b| a.1.f_b.partial_cmp(&b.1.f_b).unwrap())
        .map(|(i, _)| i);
    Ok(ScanReport { entries, argmin })
}
