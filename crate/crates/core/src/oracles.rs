//! Independent verification oracles.
//!
//! Everything here exists to cross-check the main evaluators without
//! sharing their code paths: the classical Lane-Emden equilibrium
//! (closed form for γ = 2, adaptive RK4 otherwise), seeded Monte Carlo
//! estimates of the potential and the cylindrical mass, and a plain
//! adaptive Simpson rule.

use crate::error::{Error, Result};
use crate::fields::DensityProfile;
use crate::geometry::RadialGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// Spherical isentropic equilibrium of a polytrope, normalized to the
/// field equation ΔΦ = 4πρ.
///
/// For γ = 2 the profile is ρ(r) = ρ_c sin(r/α)/(r/α) with α = √(K/2π),
/// surface at πα and total mass 4π²ρ_c α³; other exponents are integrated
/// numerically in the dimensionless form θ'' + (2/ξ)θ' = −θⁿ.
#[derive(Debug, Clone)]
pub struct LaneEmdenSolution {
    pub k: f64,
    pub gamma: f64,
    /// Length scale relating r = α ξ.
    pub alpha: f64,
    pub surface_radius: f64,
    pub central_density: f64,
    /// Polytropic index n = 1/(γ−1).
    index: f64,
    /// Dense RK4 output (ξ, θ, θ'); empty for the closed form.
    steps: DenseSteps,
}

impl LaneEmdenSolution {
    /// Closed-form γ = 2 solution for the given total mass.
    pub fn closed_form_n1(k: f64, mass: f64) -> Result<Self> {
        if !(k > 0.0) || !(mass > 0.0) {
            return Err(Error::InvalidInput("closed form needs positive K and mass".into()));
        }
        let alpha = (k / (2.0 * PI)).sqrt();
        let central_density = mass / (4.0 * PI * PI * alpha.powi(3));
        Ok(Self {
            k,
            gamma: 2.0,
            alpha,
            surface_radius: PI * alpha,
            central_density,
            index: 1.0,
            steps: Vec::new(),
        })
    }

    /// Numerical solution by adaptive RK4 with local tolerance 1e-10.
    pub fn integrate(k: f64, gamma: f64, mass: f64) -> Result<Self> {
        if !(gamma > 6.0 / 5.0 && gamma <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "finite-mass profile needs gamma in (6/5, 2], got {gamma}"
            )));
        }
        if !(k > 0.0) || !(mass > 0.0) {
            return Err(Error::InvalidInput("positive K and mass required".into()));
        }
        let n = 1.0 / (gamma - 1.0);
        let (steps, xi1, dtheta1) = integrate_lane_emden(n, 1e-10)?;
        let omega1 = -xi1 * xi1 * dtheta1;
        // M = 4π a³ ρ_c ω₁ with a² = (n+1)K ρ_c^{γ−2}/(4π) fixes ρ_c.
        let c = 4.0 * PI * omega1 * ((n + 1.0) * k / (4.0 * PI)).powf(1.5);
        let central_density = (mass / c).powf(2.0 / (3.0 * gamma - 4.0));
        let alpha = ((n + 1.0) * k * central_density.powf(gamma - 2.0) / (4.0 * PI)).sqrt();
        Ok(Self {
            k,
            gamma,
            alpha,
            surface_radius: alpha * xi1,
            central_density,
            index: n,
            steps,
        })
    }

    /// ρ(r), zero beyond the surface.
    pub fn density(&self, r: f64) -> f64 {
        if r >= self.surface_radius {
            return 0.0;
        }
        if self.steps.is_empty() {
            // Closed form: ρ_c sinc(r/α).
            if r == 0.0 {
                return self.central_density;
            }
            let x = r / self.alpha;
            return (self.central_density * x.sin() / x).max(0.0);
        }
        let xi = r / self.alpha;
        let theta = hermite_lookup(&self.steps, xi, self.index);
        self.central_density * theta.max(0.0).powf(self.index)
    }
}

/// Samples a Lane-Emden equilibrium onto a grid (closed form for γ = 2).
pub fn lane_emden_profile(
    k: f64,
    gamma: f64,
    mass: f64,
    grid: Arc<RadialGrid>,
) -> Result<DensityProfile> {
    let sol = if gamma == 2.0 {
        LaneEmdenSolution::closed_form_n1(k, mass)?
    } else {
        LaneEmdenSolution::integrate(k, gamma, mass)?
    };
    if sol.surface_radius > grid.r_max {
        return Err(Error::InvalidInput(format!(
            "profile surface {} exceeds the grid radius {}",
            sol.surface_radius, grid.r_max
        )));
    }
    DensityProfile::from_fn(grid, |r| sol.density(r))
}

fn lane_emden_rhs(n: f64, xi: f64, theta: f64, dtheta: f64) -> (f64, f64) {
    (dtheta, -theta.max(0.0).powf(n) - 2.0 * dtheta / xi)
}

fn rk4_step(n: f64, xi: f64, y: (f64, f64), h: f64) -> (f64, f64) {
    let (t, d) = y;
    let k1 = lane_emden_rhs(n, xi, t, d);
    let k2 = lane_emden_rhs(n, xi + 0.5 * h, t + 0.5 * h * k1.0, d + 0.5 * h * k1.1);
    let k3 = lane_emden_rhs(n, xi + 0.5 * h, t + 0.5 * h * k2.0, d + 0.5 * h * k2.1);
    let k4 = lane_emden_rhs(n, xi + h, t + h * k3.0, d + h * k3.1);
    (
        t + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        d + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Series start near the regular center: θ = 1 − ξ²/6 + n ξ⁴/120.
fn series_start(n: f64, xi: f64) -> (f64, f64) {
    (
        1.0 - xi * xi / 6.0 + n * xi.powi(4) / 120.0,
        -xi / 3.0 + n * xi.powi(3) / 30.0,
    )
}

/// Dense output rows (ξ, θ, θ').
type DenseSteps = Vec<(f64, f64, f64)>;

/// Integrates to the first zero of θ; returns the dense output, ξ₁ and
/// θ'(ξ₁). Step doubling controls the local error.
fn integrate_lane_emden(n: f64, tol: f64) -> Result<(DenseSteps, f64, f64)> {
    let mut xi = 1e-4;
    let mut y = series_start(n, xi);
    let mut h = 1e-3;
    let mut steps = vec![(xi, y.0, y.1)];
    let mut guard = 0usize;
    loop {
        guard += 1;
        if guard > 2_000_000 {
            return Err(Error::InvalidInput("Lane-Emden integration did not reach the surface".into()));
        }
        let full = rk4_step(n, xi, y, h);
        let half = rk4_step(n, xi, y, 0.5 * h);
        let half2 = rk4_step(n, xi + 0.5 * h, half, 0.5 * h);
        let err = ((full.0 - half2.0).abs()).max((full.1 - half2.1).abs()) / 15.0;
        let scale = y.0.abs().max(y.1.abs()).max(1e-3);
        if err <= tol * scale {
            if half2.0 <= 0.0 {
                // Bracketed the surface inside [xi, xi+h]; bisect with
                // single RK4 substeps from the left endpoint.
                let (mut lo, mut y_lo) = (xi, y);
                let mut hi = xi + h;
                for _ in 0..200 {
                    if hi - lo <= 1e-13 * hi {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    let y_mid = rk4_step(n, lo, y_lo, mid - lo);
                    if y_mid.0 > 0.0 {
                        lo = mid;
                        y_lo = y_mid;
                        steps.push((lo, y_lo.0, y_lo.1));
                    } else {
                        hi = mid;
                    }
                }
                let y_end = rk4_step(n, lo, y_lo, hi - lo);
                steps.push((hi, 0.0, y_end.1));
                steps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                steps.dedup_by(|a, b| a.0 == b.0);
                return Ok((steps, hi, y_end.1));
            }
            xi += h;
            y = half2;
            steps.push((xi, y.0, y.1));
            h *= (tol * scale / err.max(1e-300)).powf(0.2).clamp(0.5, 2.0).min(2.0);
            h = h.min(0.05);
        } else {
            h *= 0.9 * (tol * scale / err).powf(0.2).clamp(0.1, 0.9);
        }
    }
}

/// Cubic Hermite interpolation of θ on the dense output.
fn hermite_lookup(steps: &[(f64, f64, f64)], xi: f64, _n: f64) -> f64 {
    if xi <= steps[0].0 {
        return steps[0].1;
    }
    let last = steps.len() - 1;
    if xi >= steps[last].0 {
        return steps[last].1;
    }
    let mut lo = 0;
    let mut hi = last;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if steps[mid].0 <= xi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x0, t0, d0) = steps[lo];
    let (x1, t1, d1) = steps[hi];
    let h = x1 - x0;
    let s = (xi - x0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * t0 + h10 * h * d0 + h01 * t1 + h11 * h * d1
}

/// Fixed-step RK4 value of (θ, θ') at ξ_end, for convergence-order tests.
pub fn lane_emden_fixed_step(n: f64, xi_end: f64, h: f64) -> (f64, f64) {
    let mut xi = 1e-6;
    let mut y = series_start(n, xi);
    while xi + h <= xi_end {
        y = rk4_step(n, xi, y, h);
        xi += h;
    }
    if xi < xi_end {
        y = rk4_step(n, xi, y, xi_end - xi);
    }
    y
}

/// Unbiased Monte Carlo estimate of Bρ(x) = ∫ρ(y)/|x−y| dy with its
/// standard error, by uniform sampling inside the support ellipsoid.
/// Deterministic for a fixed seed.
pub fn monte_carlo_potential(
    profile: &DensityProfile,
    point: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "need at least 10^4 samples, got {n_samples}"
        )));
    }
    let g = &profile.grid;
    let r_e = profile.support_edge();
    if r_e == 0.0 {
        return Ok((0.0, 0.0));
    }
    let volume = 4.0 / 3.0 * PI * g.b * r_e.powi(3);
    let (eta, z) = point;
    let x = (eta, 0.0, z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n_samples {
        let v;
        let mut tries = 0;
        loop {
            let w = sample_unit_ball(&mut rng);
            let y = (r_e * w.0, r_e * w.1, g.b * r_e * w.2);
            let d2 = (x.0 - y.0).powi(2) + (x.1 - y.1).powi(2) + (x.2 - y.2).powi(2);
            if d2 < 1e-24 {
                // Zero-measure singular set; resample.
                tries += 1;
                if tries > 100 {
                    v = 0.0;
                    break;
                }
                continue;
            }
            let r = r_e * (w.0 * w.0 + w.1 * w.1 + w.2 * w.2).sqrt();
            let rho = if r >= g.r_max { 0.0 } else { profile.values[g.cell_of(r)] };
            v = volume * rho / d2.sqrt();
            break;
        }
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / n_samples as f64;
    let var = (sum2 / n_samples as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_samples as f64).sqrt()))
}

/// Monte Carlo estimate of the cylindrical mass m(s) = ∫_{η(y)<s} ρ(y) dy.
pub fn monte_carlo_cyl_mass(
    profile: &DensityProfile,
    s: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "need at least 10^4 samples, got {n_samples}"
        )));
    }
    if s < 0.0 {
        return Err(Error::InvalidInput(format!("cylinder radius must be nonnegative, got {s}")));
    }
    let g = &profile.grid;
    let r_e = profile.support_edge();
    if r_e == 0.0 || s == 0.0 {
        return Ok((0.0, 0.0));
    }
    let volume = 4.0 / 3.0 * PI * g.b * r_e.powi(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n_samples {
        let w = sample_unit_ball(&mut rng);
        let eta = r_e * (w.0 * w.0 + w.1 * w.1).sqrt();
        let r = r_e * (w.0 * w.0 + w.1 * w.1 + w.2 * w.2).sqrt();
        let rho = if r >= g.r_max { 0.0 } else { profile.values[g.cell_of(r)] };
        let v = if eta < s { volume * rho } else { 0.0 };
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / n_samples as f64;
    let var = (sum2 / n_samples as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_samples as f64).sqrt()))
}

fn sample_unit_ball(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    loop {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y: f64 = rng.gen_range(-1.0..1.0);
        let z: f64 = rng.gen_range(-1.0..1.0);
        if x * x + y * y + z * z <= 1.0 {
            return (x, y, z);
        }
    }
}

/// Recursive adaptive Simpson quadrature.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: usize) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Smooth, nonnegative, compactly supported random profile for
/// cross-validation runs; deterministic per seed.
pub fn random_profile(grid: Arc<RadialGrid>, seed: u64) -> DensityProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
    let r_max = grid.r_max;
    let n_bumps = rng.gen_range(2..=4);
    let bumps: Vec<(f64, f64, f64)> = (0..n_bumps)
        .map(|_| {
            (
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.0..0.6 * r_max),
                rng.gen_range(0.08 * r_max..0.25 * r_max),
            )
        })
        .collect();
    DensityProfile::from_fn(grid, move |r| {
        let cutoff = (1.0 - r / (0.95 * r_max)).max(0.0);
        let v: f64 = bumps
            .iter()
            .map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp())
            .sum();
        v * cutoff
    })
    .expect("generated densities are nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::gravity::uniform_ellipsoid_center;

    #[test]
    fn closed_form_n1_constants() {
        let sol = LaneEmdenSolution::closed_form_n1(1.0, 1.0).unwrap();
        assert!((sol.central_density - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
        assert!((sol.surface_radius - (PI / 2.0).sqrt()).abs() < 1e-14);
        assert!((sol.density(0.0) - sol.central_density).abs() < 1e-14);
        assert_eq!(sol.density(2.0), 0.0);
    }

    #[test]
    fn rk4_path_matches_closed_form_for_n1() {
        let closed = LaneEmdenSolution::closed_form_n1(1.0, 1.0).unwrap();
        let num = LaneEmdenSolution::integrate(1.0, 2.0, 1.0).unwrap();
        assert!((num.central_density - closed.central_density).abs() < 1e-8);
        assert!((num.surface_radius - closed.surface_radius).abs() < 1e-8);
        for i in 0..=50 {
            let r = closed.surface_radius * i as f64 / 50.0;
            let d = (num.density(r) - closed.density(r)).abs();
            assert!(d <= 1e-8 * closed.central_density, "r={r}: diff {d}");
        }
        assert!(LaneEmdenSolution::integrate(1.0, 2.5, 1.0).is_err());
        assert!(LaneEmdenSolution::integrate(1.0, 1.1, 1.0).is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        // γ = 2 gives θ(ξ) = sin ξ / ξ exactly.
        let exact = 1.0f64.sin() / 1.0;
        let e1 = (lane_emden_fixed_step(1.0, 1.0, 0.02).0 - exact).abs();
        let e2 = (lane_emden_fixed_step(1.0, 1.0, 0.01).0 - exact).abs();
        assert!(e1 / e2 >= 8.0, "order ratio {}", e1 / e2);
    }

    #[test]
    fn regular_center_conditions() {
        let (t, d) = series_start(1.5, 1e-8);
        assert!((t - 1.0).abs() < 1e-15);
        assert!(d.abs() < 1e-8);
    }

    #[test]
    fn mc_potential_uniform_ball() {
        let g = Arc::new(build_grid(1.0, 1.0, 100, 8).unwrap());
        let p = DensityProfile::from_fn(g, |_| 1.0).unwrap();
        // Center of the unit ball: Bρ = 2π.
        let (est, se) = monte_carlo_potential(&p, (0.0, 0.0), 200_000, 12).unwrap();
        assert!((est - 2.0 * PI).abs() <= 3.0 * se, "{est} +- {se}");
        // Distant point: point-mass law M/|x|.
        let mass = p.total_mass();
        let (est, se) = monte_carlo_potential(&p, (8.0, 3.0), 100_000, 13).unwrap();
        let expect = mass / (64.0f64 + 9.0).sqrt();
        assert!((est - expect).abs() <= 3.0 * se.max(1e-9));
        assert!(monte_carlo_potential(&p, (0.0, 0.0), 100, 1).is_err());
    }

    #[test]
    fn mc_potential_ellipsoid_center_matches_closed_form() {
        let g = Arc::new(build_grid(2.0, 1.0, 100, 8).unwrap());
        let p = DensityProfile::from_fn(g, |_| 1.0).unwrap();
        let expect = uniform_ellipsoid_center(2.0, p.total_mass(), 1.0).unwrap();
        let (est, se) = monte_carlo_potential(&p, (0.0, 0.0), 400_000, 14).unwrap();
        assert!((est - expect).abs() <= 3.0 * se, "{est} vs {expect} (se {se})");
    }

    #[test]
    fn mc_cyl_mass_limits() {
        let g = Arc::new(build_grid(1.0, 1.0, 100, 8).unwrap());
        let p = DensityProfile::from_fn(g, |_| 1.0).unwrap();
        assert_eq!(monte_carlo_cyl_mass(&p, 0.0, 10_000, 3).unwrap().0, 0.0);
        // All samples satisfy the indicator, so the estimate is the exact
        // total up to summation rounding.
        let (est, _) = monte_carlo_cyl_mass(&p, 5.0, 50_000, 4).unwrap();
        assert!((est - p.total_mass()).abs() < 1e-9 * p.total_mass());
        let s = 0.6f64;
        let expect = 4.0 / 3.0 * PI * (1.0 - (1.0 - s * s).powf(1.5));
        let (est, se) = monte_carlo_cyl_mass(&p, s, 400_000, 5).unwrap();
        assert!((est - expect).abs() <= 3.0 * se);
    }

    #[test]
    fn mc_standard_error_scales_as_inverse_sqrt() {
        let g = Arc::new(build_grid(1.0, 1.0, 50, 8).unwrap());
        let p = DensityProfile::from_fn(g, |_| 1.0).unwrap();
        let (_, se4) = monte_carlo_potential(&p, (0.3, 0.1), 10_000, 21).unwrap();
        let (_, se6) = monte_carlo_potential(&p, (0.3, 0.1), 1_000_000, 22).unwrap();
        let ratio = se4 / se6;
        assert!((7.0..14.0).contains(&ratio), "se ratio {ratio}");
    }

    #[test]
    fn adaptive_simpson_on_smooth_integrands() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12, 40);
        assert!((v - (1.0f64.exp() - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-10, 50);
        assert!((v - 2.0 / 3.0).abs() < 1e-8);
    }
}
