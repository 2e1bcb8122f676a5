//! Density profiles and the derived mass and rotation fields.
//!
//! Two cumulative masses drive the model: the ellipsoidal mass n(s)
//! (mass inside the ellipsoid of radius s, argument of the entropy law)
//! and the cylindrical mass m(s) (mass inside the cylinder η < s,
//! argument of the angular-momentum law). For ellipsoidally symmetric
//! densities both reduce to one-dimensional integrals; the cylindrical
//! one uses the shell-measure fraction of the cylinder,
//!
//! ```text
//! m(s) = ∫₀^s ρ 4πb r² dr + ∫_s^∞ ρ 4πb (r² − r√(r²−s²)) dr,
//! ```
//!
//! whose integrand has the closed antiderivative (r³ − (r²−s²)^{3/2})/3,
//! so m is evaluated exactly for cellwise-constant profiles.

use crate::error::{Error, Result};
use crate::geometry::{cumulative_radial_integral, gauss_legendre, shell_point, RadialGrid};
use crate::model::AngularMomentumProfile;
use std::sync::{Arc, OnceLock};

/// Relative axis guard: shell nodes with η below this fraction of R_max
/// contribute 0 to rotation integrals (L(m(0)) = 0 forces the limit).
const AXIS_GUARD: f64 = 1e-12;

fn gl4() -> &'static (Vec<f64>, Vec<f64>) {
    static GL4: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL4.get_or_init(|| gauss_legendre(4))
}

/// Nonnegative radial density at cell midpoints, representing the
/// ellipsoidally symmetric ρ(x) = ρ(r_b(x)).
#[derive(Debug, Clone)]
pub struct DensityProfile {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::InvalidInput(format!(
                "expected {} density values, got {}",
                grid.n_cells,
                values.len()
            )));
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("density must be finite and nonnegative, cell {i} has {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n_cells;
        Self { grid, values: vec![0.0; n] }
    }

    /// Uniform ball of the given radius holding `total_mass`.
    pub fn uniform_ball(grid: Arc<RadialGrid>, radius: f64, total_mass: f64) -> Result<Self> {
        if !(radius > 0.0) || radius > grid.r_max {
            return Err(Error::InvalidInput(format!(
                "ball radius must lie in (0, R_max], got {radius}"
            )));
        }
        let rho = total_mass / (4.0 / 3.0 * std::f64::consts::PI * grid.b * radius.powi(3));
        let values = grid
            .midpoints
            .iter()
            .map(|&r| if r <= radius { rho } else { 0.0 })
            .collect();
        Self::new(grid, values)
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.midpoints.iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.grid.cell_volume(i))
            .sum()
    }

    /// Outer edge of the last cell with nonzero density (0 for vacuum).
    pub fn support_edge(&self) -> f64 {
        match self.values.iter().rposition(|&v| v > 0.0) {
            Some(i) => self.grid.edges[i + 1],
            None => 0.0,
        }
    }

    /// Piecewise-linear interpolation of the midpoint values, clamped to 0
    /// outside the mesh. Used by pointwise diagnostics, not by the solver.
    pub fn interp(&self, r: f64) -> f64 {
        let g = &self.grid;
        if r < 0.0 || r > g.r_max {
            return 0.0;
        }
        let n = g.n_cells;
        if r <= g.midpoints[0] {
            return self.values[0];
        }
        if r >= g.midpoints[n - 1] {
            // Taper linearly to 0 at the outer edge.
            let t = (g.r_max - r) / (g.r_max - g.midpoints[n - 1]);
            return self.values[n - 1] * t.max(0.0);
        }
        let dr = g.cell_width();
        let k = (((r / dr) - 0.5).floor() as usize).min(n - 2);
        let t = (r - g.midpoints[k]) / dr;
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }
}

pub fn same_grid(a: &DensityProfile, b: &DensityProfile) -> bool {
    Arc::ptr_eq(&a.grid, &b.grid) || *a.grid == *b.grid
}

/// Ellipsoidal mass curve n(s) = ∫_{r_b(y) <= s} ρ on the cell edges.
pub fn ellipsoidal_mass(profile: &DensityProfile) -> Result<Vec<f64>> {
    cumulative_radial_integral(&profile.grid, &profile.values)
}

/// Exact cylindrical-mass evaluator for a cellwise-constant profile.
#[derive(Debug, Clone)]
pub struct CylindricalMass {
    edges: Vec<f64>,
    rho: Vec<f64>,
    b: f64,
    support_edge: f64,
    total: f64,
}

impl CylindricalMass {
    pub fn new(profile: &DensityProfile) -> Self {
        Self {
            edges: profile.grid.edges.clone(),
            rho: profile.values.clone(),
            b: profile.grid.b,
            support_edge: profile.support_edge(),
            total: profile.total_mass(),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Radius beyond which m(s) equals the total mass.
    pub fn support_edge(&self) -> f64 {
        self.support_edge
    }

    /// Volume of radial cell `i` of the originating grid.
    pub fn cell_volume(&self, i: usize) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.b
            * (self.edges[i + 1].powi(3) - self.edges[i].powi(3))
    }

    /// m(s): mass of the region η < s.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidInput(format!("cylinder radius must be nonnegative, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        if s >= self.support_edge {
            return Ok(self.total);
        }
        let mut m = 0.0;
        for (i, &rho) in self.rho.iter().enumerate() {
            if rho == 0.0 {
                continue;
            }
            m += rho * self.cell_factor(i, s);
        }
        Ok(m)
    }

    /// Geometric factor V_i(s) = ∂m(s)/∂ρ_i: the volume of cell i inside
    /// the cylinder η < s. m(s) = Σ ρ_i V_i(s).
    fn cell_factor(&self, i: usize, s: f64) -> f64 {
        let c = 4.0 * std::f64::consts::PI * self.b;
        let (lo, hi) = (self.edges[i], self.edges[i + 1]);
        if hi <= s {
            c / 3.0 * (hi.powi(3) - lo.powi(3))
        } else if lo >= s {
            c * cyl_fraction_integral(s, lo, hi)
        } else {
            c / 3.0 * (s.powi(3) - lo.powi(3)) + c * cyl_fraction_integral(s, s, hi)
        }
    }

    /// Fills V_i(s) for every cell.
    pub fn cell_factors_into(&self, s: f64, out: &mut [f64]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.cell_factor(i, s);
        }
    }
}

/// ∫_α^β (r² − r√(r²−s²)) dr for s <= α <= β, in closed form.
fn cyl_fraction_integral(s: f64, alpha: f64, beta: f64) -> f64 {
    let g = |r: f64| (r.powi(3) - (r * r - s * s).max(0.0).powf(1.5)) / 3.0;
    g(beta) - g(alpha)
}

/// Specific rotation potential ∫_η^∞ L(m(s)) s⁻³ ds.
///
/// Composite Gauss quadrature on the cell-edge partition of [η, R_s] plus
/// the exact tail L(M_tot)/(2 max(η, R_s)²) where m is constant.
pub fn rotation_potential(
    profile: &DensityProfile,
    angmom: &AngularMomentumProfile,
    eta: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("cylindrical radius must be positive, got {eta}")));
    }
    if angmom.is_zero() {
        return Ok(0.0);
    }
    let m = CylindricalMass::new(profile);
    rotation_potential_with(&m, angmom, eta)
}

pub(crate) fn rotation_potential_with(
    m: &CylindricalMass,
    angmom: &AngularMomentumProfile,
    eta: f64,
) -> Result<f64> {
    let r_s = m.support_edge();
    let cut = eta.max(r_s);
    let tail = angmom.value(m.total())? / (2.0 * cut * cut);
    if eta >= r_s {
        return Ok(tail);
    }
    let mut acc = 0.0;
    // Partition [eta, r_s] at the cell edges so each panel is smooth.
    let mut lo = eta;
    for &e in m.edges.iter() {
        if e <= eta {
            continue;
        }
        let hi = e.min(r_s);
        acc += rotation_panel(m, angmom, lo, hi)?;
        lo = hi;
        if lo >= r_s {
            break;
        }
    }
    Ok(acc + tail)
}

fn rotation_panel(
    m: &CylindricalMass,
    angmom: &AngularMomentumProfile,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let (nodes, weights) = gl4();
    let c = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        let s = mid + c * x;
        acc += w * angmom.value(m.eval(s)?)? / (s * s * s);
    }
    Ok(c * acc)
}

/// Shell quadrature nodes below u = 0, with the z-reflection symmetry
/// folded into the weights (the shell integrands here are even in u).
pub(crate) fn folded_u_nodes(grid: &RadialGrid) -> Vec<(f64, f64)> {
    let nb = grid.u_nodes.len();
    let half = nb.div_ceil(2);
    (0..half)
        .map(|j| {
            let w = if nb % 2 == 1 && j == half - 1 {
                grid.u_weights[j]
            } else {
                2.0 * grid.u_weights[j]
            };
            (grid.u_nodes[j], w)
        })
        .collect()
}

/// Per-shell means ⟨L(m(η))/η²⟩ with the axis guard applied; the common
/// core of the rotation energy and of its exact gradient.
pub(crate) fn rotation_shell_means(
    grid: &RadialGrid,
    cyl_mass: &CylindricalMass,
    angmom: &AngularMomentumProfile,
) -> Result<Vec<f64>> {
    let guard = AXIS_GUARD * grid.r_max;
    let folded = folded_u_nodes(grid);
    let mut out = Vec::with_capacity(grid.n_cells);
    for (i, &r) in grid.midpoints.iter().enumerate() {
        let mut shell = 0.0;
        for &(u, w) in &folded {
            let (eta, _) = shell_point(r, u, grid.b)?;
            if eta < guard {
                continue;
            }
            let v = angmom.value(cyl_mass.eval(eta)?)? / (eta * eta);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "rotation integrand".into(),
                    location: format!("shell {i} (r={r}), node at eta={eta}"),
                });
            }
            shell += w * v;
        }
        out.push(0.5 * shell);
    }
    Ok(out)
}

/// Kinetic energy ½ ∫ ρ L(m(η)) η⁻² dx by shell quadrature.
pub fn rotation_energy(profile: &DensityProfile, angmom: &AngularMomentumProfile) -> Result<f64> {
    if angmom.is_zero() {
        return Ok(0.0);
    }
    let g = &profile.grid;
    let m = CylindricalMass::new(profile);
    let means = rotation_shell_means(g, &m, angmom)?;
    Ok(profile
        .values
        .iter()
        .enumerate()
        .map(|(i, &rho)| 0.5 * rho * g.cell_volume(i) * means[i])
        .sum())
}

/// Mass-preserving dilation: returns ρ̄(r) = ρ(a r) on the grid stretched
/// by 1/a, so the same value array is reused. Test utility for the
/// rescaling identities m_ρ(η) = a³ m_ρ̄(η/a), n_ρ(r) = a³ n_ρ̄(r/a).
pub fn rescale_profile(profile: &DensityProfile, a: f64) -> Result<DensityProfile> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidInput(format!("rescaling factor must lie in (0, 1], got {a}")));
    }
    let g = &profile.grid;
    let grid = crate::geometry::build_grid(g.b, g.r_max / a, g.n_cells, g.u_nodes.len())?;
    DensityProfile::new(Arc::new(grid), profile.values.clone())
}

/// Derived fields of one profile, all on its grid.
///
/// `n_edges` is the ellipsoidal mass at the cell edges, `n_mid` its
/// per-cell midpoint (the argument handed to the entropy law), and the
/// remaining vectors are per-shell: the reduced gravity, the rotation
/// potential average, and the entropy tail Q.
#[derive(Debug, Clone)]
pub struct FieldSet {
    pub n_edges: Vec<f64>,
    pub n_mid: Vec<f64>,
    pub k_grav: Vec<f64>,
    pub k_rot: Vec<f64>,
    pub q: Vec<f64>,
    pub cyl_mass: CylindricalMass,
}

impl FieldSet {
    pub fn total_mass(&self) -> f64 {
        *self.n_edges.last().unwrap()
    }
}
