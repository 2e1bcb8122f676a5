//! Newtonian potential Bρ = ∫ ρ(y)/|x−y| dy for ellipsoidally symmetric
//! densities.
//!
//! The axisymmetric Green's function is a ring kernel: a ring of mass m
//! at (η', z') produces
//!
//! ```text
//! Φ(η, z) = m · (2/π) K(k) / √((η+η')² + (z−z')²),
//! k² = 4ηη' / ((η+η')² + (z−z')²),
//! ```
//!
//! with K the complete elliptic integral of the first kind (computed by
//! the arithmetic-geometric mean). Source cells are integrated by an
//! adaptive panel scheme in (r, φ) with u = sin φ, so the shell measure
//! 2πb r² cos φ dr dφ is analytic up to the poles: panels well separated
//! from the field point use a 3×3 Gauss rule, panels too close are split
//! along their longer side until separation is reached. Panel sizes thus
//! track the distance to the field point and the logarithmic singularity
//! of the kernel is resolved without special-function self terms.
//!
//! For the solver, the cell-to-shell interaction is reduced once per grid
//! to a symmetric matrix H with ½ρᵀHρ = ½∫ρBρ; symmetry makes the
//! discrete gravitational energy an exact quadratic form of the cell
//! densities, so its gradient is exactly the reduced potential.

use crate::error::{Error, Result};
use crate::fields::DensityProfile;
use crate::geometry::{gauss_legendre, shell_point, RadialGrid};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// A panel is integrated directly once its distance to the field point
/// exceeds this multiple of its diameter.
const FAR_RATIO: f64 = 2.0;
/// Rings closer than this in k² to the singular limit are dropped; only
/// the innermost fallback panel (negligible mass) can reach it.
const K2_CUTOFF: f64 = 1.0 - 1e-12;
const MAX_DEPTH: usize = 64;

fn gl3() -> &'static (Vec<f64>, Vec<f64>) {
    static GL3: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL3.get_or_init(|| gauss_legendre(3))
}

/// Complete elliptic integral of the first kind K as a function of the
/// parameter m = k², by the arithmetic-geometric mean.
pub fn complete_elliptic_k(m: f64) -> f64 {
    if !(0.0..1.0).contains(&m) {
        return f64::NAN;
    }
    let mut a = 1.0f64;
    let mut g = (1.0 - m).sqrt();
    for _ in 0..40 {
        if (a - g).abs() <= 1e-14 * a {
            break;
        }
        let an = 0.5 * (a + g);
        g = (a * g).sqrt();
        a = an;
    }
    PI / (2.0 * a)
}

/// Potential of a circular ring of given mass at the field point (η, z).
pub fn ring_potential(
    field: (f64, f64),
    ring: (f64, f64),
    mass: f64,
) -> Result<f64> {
    let (eta, z) = field;
    let (eta_s, z_s) = ring;
    if eta < 0.0 || eta_s < 0.0 {
        return Err(Error::InvalidInput("cylindrical radii must be nonnegative".into()));
    }
    let denom2 = (eta + eta_s).powi(2) + (z - z_s).powi(2);
    if denom2 == 0.0 {
        return Err(Error::InvalidInput("field point coincides with the ring".into()));
    }
    let k2 = 4.0 * eta * eta_s / denom2;
    if k2 >= K2_CUTOFF {
        return Err(Error::InvalidInput(format!(
            "field point lies on the ring (k² = {k2})"
        )));
    }
    Ok(mass * (2.0 / PI) * complete_elliptic_k(k2) / denom2.sqrt())
}

/// Unchecked ring kernel per unit mass used in the panel hot loop; a ring
/// at the singular limit contributes 0 (it can only be the innermost
/// fallback panel, whose mass is negligible).
#[inline]
fn ring_kernel(eta: f64, z: f64, eta_s: f64, z_s: f64) -> f64 {
    let denom2 = (eta + eta_s).powi(2) + (z - z_s).powi(2);
    if denom2 == 0.0 {
        return 0.0;
    }
    let k2 = 4.0 * eta * eta_s / denom2;
    if k2 >= K2_CUTOFF {
        return 0.0;
    }
    (2.0 / PI) * complete_elliptic_k(k2) / denom2.sqrt()
}

/// Meridian-plane bounding box of the panel [r0,r1]×[φ0,φ1].
fn panel_bbox(b: f64, r0: f64, r1: f64, phi0: f64, phi1: f64) -> (f64, f64, f64, f64) {
    let cos_near = if phi0 <= 0.0 && phi1 >= 0.0 {
        1.0
    } else {
        phi0.cos().max(phi1.cos())
    };
    let cos_far = phi0.cos().min(phi1.cos());
    let eta_min = r0 * cos_far;
    let eta_max = r1 * cos_near;
    let (s0, s1) = (phi0.sin(), phi1.sin());
    let corners = [r0 * s0, r0 * s1, r1 * s0, r1 * s1];
    let z_min = b * corners.iter().cloned().fold(f64::MAX, f64::min);
    let z_max = b * corners.iter().cloned().fold(f64::MIN, f64::max);
    (eta_min, eta_max, z_min, z_max)
}

/// Adds the potential of a unit-density panel to `out` at every point,
/// with the near/far decisions taken for `center` only. Using one panel
/// tree for a whole finite-difference stencil keeps the quadrature error
/// smooth across the stencil.
#[allow(clippy::too_many_arguments)]
fn panel_add(
    b: f64,
    r0: f64,
    r1: f64,
    phi0: f64,
    phi1: f64,
    center: (f64, f64),
    points: &[(f64, f64)],
    out: &mut [f64],
    depth: usize,
) {
    let (eta_min, eta_max, z_min, z_max) = panel_bbox(b, r0, r1, phi0, phi1);
    let (ec, zc) = center;
    let dx = if ec < eta_min {
        eta_min - ec
    } else if ec > eta_max {
        ec - eta_max
    } else {
        0.0
    };
    let dz = if zc < z_min {
        z_min - zc
    } else if zc > z_max {
        zc - z_max
    } else {
        0.0
    };
    let dist = dx.hypot(dz);
    let diam = (eta_max - eta_min).hypot(z_max - z_min);

    if dist >= FAR_RATIO * diam {
        // 3×3 Gauss rule on the analytic integrand r² cos φ · kernel.
        let (nodes, weights) = gl3();
        let hr = 0.5 * (r1 - r0);
        let mr = 0.5 * (r1 + r0);
        let hp = 0.5 * (phi1 - phi0);
        let mp = 0.5 * (phi1 + phi0);
        for (&xr, &wr) in nodes.iter().zip(weights) {
            let r = mr + hr * xr;
            for (&xp, &wp) in nodes.iter().zip(weights) {
                let phi = mp + hp * xp;
                let (eta_s, z_s) = (r * phi.cos(), b * r * phi.sin());
                let w = wr * wp * hr * hp * 2.0 * PI * b * r * r * phi.cos();
                for (p, o) in points.iter().zip(out.iter_mut()) {
                    *o += w * ring_kernel(p.0, p.1, eta_s, z_s);
                }
            }
        }
        return;
    }

    if depth >= MAX_DEPTH || diam <= 1e-12 * (r1.abs() + 1e-300) {
        // Innermost fallback: lump the panel into its centroid ring.
        let mass = 2.0 * PI * b * (r1.powi(3) - r0.powi(3)) / 3.0 * (phi1.sin() - phi0.sin());
        let rc = 0.5 * (r0 + r1);
        let pc = 0.5 * (phi0 + phi1);
        let (eta_s, z_s) = (rc * pc.cos(), b * rc * pc.sin());
        for (p, o) in points.iter().zip(out.iter_mut()) {
            *o += mass * ring_kernel(p.0, p.1, eta_s, z_s);
        }
        return;
    }

    // Split the physically longer side (chord lengths at the midlines).
    let pc = 0.5 * (phi0 + phi1);
    let rc = 0.5 * (r0 + r1);
    let len_r = (r1 - r0) * (pc.cos().powi(2) + (b * pc.sin()).powi(2)).sqrt();
    let de = rc * (phi0.cos() - phi1.cos()).abs();
    let dzl = b * rc * (phi1.sin() - phi0.sin()).abs();
    let len_phi = de.hypot(dzl);
    if len_r >= len_phi {
        panel_add(b, r0, rc, phi0, phi1, center, points, out, depth + 1);
        panel_add(b, rc, r1, phi0, phi1, center, points, out, depth + 1);
    } else {
        panel_add(b, r0, r1, phi0, pc, center, points, out, depth + 1);
        panel_add(b, r0, r1, pc, phi1, center, points, out, depth + 1);
    }
}

/// Potential per unit density of one radial cell at several points, with
/// the panel tree anchored at `center`.
fn cell_potential(
    b: f64,
    r_lo: f64,
    r_hi: f64,
    center: (f64, f64),
    points: &[(f64, f64)],
    out: &mut [f64],
) {
    panel_add(b, r_lo, r_hi, -0.5 * PI, 0.5 * PI, center, points, out, 0);
}

/// Bρ at one cylindrical point by superposition over all source cells.
pub fn potential_at(profile: &DensityProfile, eta: f64, z: f64) -> Result<f64> {
    if eta < 0.0 {
        return Err(Error::InvalidInput(format!("cylindrical radius must be nonnegative, got {eta}")));
    }
    let g = &profile.grid;
    let mut total = 0.0;
    for (i, &rho) in profile.values.iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        let mut v = [0.0];
        cell_potential(g.b, g.edges[i], g.edges[i + 1], (eta, z), &[(eta, z)], &mut v);
        total += rho * v[0];
    }
    Ok(total)
}

/// Bρ at several points sharing one panel tree (anchored at `center`).
pub fn potential_at_stencil(
    profile: &DensityProfile,
    center: (f64, f64),
    points: &[(f64, f64)],
) -> Vec<f64> {
    let g = &profile.grid;
    let mut out = vec![0.0; points.len()];
    for (i, &rho) in profile.values.iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        let mut v = vec![0.0; points.len()];
        cell_potential(g.b, g.edges[i], g.edges[i + 1], center, points, &mut v);
        for (o, w) in out.iter_mut().zip(&v) {
            *o += rho * w;
        }
    }
    out
}

/// Pointwise Bρ on the shell quadrature nodes plus its shell averages.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: Arc<RadialGrid>,
    /// Bρ(r_i, u_j), stored row-major with node index j fastest.
    pub values: Vec<f64>,
    /// Plain shell averages of `values` (the solver uses the symmetric
    /// reduced kernel instead; the two agree to quadrature accuracy).
    pub k_grav: Vec<f64>,
}

impl PotentialField {
    pub fn value(&self, shell: usize, node: usize) -> f64 {
        self.values[shell * self.grid.u_nodes.len() + node]
    }
}

/// Evaluates Bρ on every shell node of the profile's grid.
pub fn potential_field(profile: &DensityProfile) -> Result<PotentialField> {
    let g = profile.grid.clone();
    let nb = g.u_nodes.len();
    let rows: Vec<Vec<f64>> = g
        .midpoints
        .par_iter()
        .map(|&r| {
            let mut row = vec![0.0; nb];
            for (j, &u) in g.u_nodes.iter().enumerate() {
                let (eta, z) = shell_point(r, u, g.b).expect("grid nodes are admissible");
                row[j] = potential_at(profile, eta, z).expect("grid nodes are admissible");
            }
            row
        })
        .collect();
    let mut values = Vec::with_capacity(g.n_cells * nb);
    let mut k_grav = Vec::with_capacity(g.n_cells);
    for row in rows {
        let mean: f64 = 0.5 * row.iter().zip(&g.u_weights).map(|(v, w)| v * w).sum::<f64>();
        k_grav.push(mean);
        values.extend_from_slice(&row);
    }
    Ok(PotentialField { grid: g, values, k_grav })
}

/// Grid-level reduction of the ring superposition: H(i, i') is the mutual
/// interaction of unit densities in cells i and i', symmetrized, so that
///
/// ```text
/// ½ ∫ρBρ = ½ ρᵀHρ,    K_grav,i = (Hρ)_i / vol_i.
/// ```
///
/// Assembly is the expensive step (once per grid); applying it per
/// iteration is a matrix-vector product.
#[derive(Debug, Clone)]
pub struct ReducedKernel {
    pub grid: Arc<RadialGrid>,
    h: Vec<f64>,
    volumes: Vec<f64>,
}

impl ReducedKernel {
    pub fn assemble(grid: &Arc<RadialGrid>) -> Self {
        let g = grid.clone();
        let n = g.n_cells;
        let nb = g.u_nodes.len();
        // Mean over each field shell of the unit-density cell potentials.
        // Field nodes at ±u see the same z-symmetric sources, so only the
        // lower half of the nodes is evaluated.
        let half = nb.div_ceil(2);
        let mean_rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let r = g.midpoints[i];
                let mut row = vec![0.0; n];
                let mut buf = vec![0.0; n];
                for j in 0..half {
                    let w = if nb % 2 == 1 && j == half - 1 {
                        g.u_weights[j]
                    } else {
                        2.0 * g.u_weights[j]
                    };
                    let (eta, z) = shell_point(r, g.u_nodes[j], g.b).unwrap();
                    for (ip, slot) in buf.iter_mut().enumerate() {
                        let mut v = [0.0];
                        cell_potential(
                            g.b,
                            g.edges[ip],
                            g.edges[ip + 1],
                            (eta, z),
                            &[(eta, z)],
                            &mut v,
                        );
                        *slot = v[0];
                    }
                    for (acc, v) in row.iter_mut().zip(&buf) {
                        *acc += 0.5 * w * v;
                    }
                }
                row
            })
            .collect();
        let volumes: Vec<f64> = (0..n).map(|i| g.cell_volume(i)).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for ip in 0..n {
                let u_ij = volumes[i] * mean_rows[i][ip];
                let u_ji = volumes[ip] * mean_rows[ip][i];
                h[i * n + ip] = 0.5 * (u_ij + u_ji);
            }
        }
        Self { grid: g, h, volumes }
    }

    /// Reduced gravity K_grav = D⁻¹Hρ per shell.
    pub fn k_grav(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.volumes.len();
        assert_eq!(rho.len(), n);
        (0..n)
            .map(|i| {
                let row = &self.h[i * n..(i + 1) * n];
                row.iter().zip(rho).map(|(h, r)| h * r).sum::<f64>() / self.volumes[i]
            })
            .collect()
    }

    /// Positive interaction energy ½ρᵀHρ = ½∫ρBρ.
    pub fn interaction_energy(&self, rho: &[f64]) -> f64 {
        let n = self.volumes.len();
        assert_eq!(rho.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            let row = &self.h[i * n..(i + 1) * n];
            let hi: f64 = row.iter().zip(rho).map(|(h, r)| h * r).sum();
            acc += rho[i] * hi;
        }
        0.5 * acc
    }
}

/// Exact 1-D potential for spherical profiles (b = 1), used as an oracle
/// against the ring-kernel path:
/// Bρ(r) = 4π[(1/r)∫₀^r ρ t² dt + ∫_r^R ρ t dt].
pub fn spherical_potential(profile: &DensityProfile) -> Result<Vec<f64>> {
    profile
        .grid
        .midpoints
        .clone()
        .iter()
        .map(|&r| spherical_potential_at(profile, r))
        .collect()
}

/// Same oracle at one radius.
pub fn spherical_potential_at(profile: &DensityProfile, r: f64) -> Result<f64> {
    let g = &profile.grid;
    if (g.b - 1.0).abs() > 1e-14 {
        return Err(Error::InvalidInput(format!(
            "spherical potential requires b = 1, grid has b = {}",
            g.b
        )));
    }
    if r < 0.0 {
        return Err(Error::InvalidInput(format!("radius must be nonnegative, got {r}")));
    }
    let mut inner = 0.0; // ∫₀^r ρ t² dt
    let mut outer = 0.0; // ∫_r^R ρ t dt
    for (i, &rho) in profile.values.iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        let (lo, hi) = (g.edges[i], g.edges[i + 1]);
        let hi_in = hi.min(r);
        if hi_in > lo {
            inner += rho * (hi_in.powi(3) - lo.powi(3)) / 3.0;
        }
        let lo_out = lo.max(r);
        if hi > lo_out {
            outer += rho * (hi * hi - lo_out * lo_out) / 2.0;
        }
    }
    if r == 0.0 {
        // Limit (1/r)∫₀^r ρt²dt → 0.
        return Ok(4.0 * PI * outer);
    }
    Ok(4.0 * PI * (inner / r + outer))
}

/// Central potential of the homogeneous ellipsoid of mass M, density ρ*,
/// semi-axes (a, a, ba): the closed form
///
/// ```text
/// I* = (9πM²ρ*/2)^{1/3} ·  b^{1/3}/√(b²−1) · ln(√(b²−1) + b)   (b > 1)
///    = (9πM²ρ*/2)^{1/3}                                        (b = 1)
///    = (9πM²ρ*/2)^{1/3} ·  b^{1/3}/√(1−b²) · asin(√(1−b²))     (b < 1),
/// ```
///
/// continuous across b = 1; the limit value is used for |b−1| < 1e-6.
pub fn uniform_ellipsoid_center(b: f64, mass: f64, rho_star: f64) -> Result<f64> {
    if !(b > 0.0) || !(mass > 0.0) || !(rho_star > 0.0) {
        return Err(Error::InvalidInput(
            "ellipticity, mass and density must all be positive".into(),
        ));
    }
    let base = (9.0 * PI * mass * mass * rho_star / 2.0).cbrt();
    if (b - 1.0).abs() < 1e-6 {
        return Ok(base);
    }
    if b > 1.0 {
        let s = (b * b - 1.0).sqrt();
        Ok(base * b.cbrt() / s * (s + b).ln())
    } else {
        let s = (1.0 - b * b).sqrt();
        Ok(base * b.cbrt() / s * s.asin())
    }
}

/// Positive gravitational interaction ½∫ρBρ from a computed field.
pub fn grav_energy(profile: &DensityProfile, field: &PotentialField) -> Result<f64> {
    if !(Arc::ptr_eq(&profile.grid, &field.grid) || *profile.grid == *field.grid) {
        return Err(Error::GridMismatch(
            "potential field was computed on a different grid".into(),
        ));
    }
    Ok(0.5
        * profile
            .values
            .iter()
            .enumerate()
            .map(|(i, &rho)| rho * profile.grid.cell_volume(i) * field.k_grav[i])
            .sum::<f64>())
}

/// Scale-invariant interaction ratio J = ∫ρBρ / (∫ρ^{4/3} · (∫ρ)^{2/3}).
///
/// Both sides scale as λ⁵ under spatial dilation and quadratically under
/// ρ → cρ, so J is a dimensionless shape functional.
pub fn hls_ratio(profile: &DensityProfile, kernel: &ReducedKernel) -> Result<f64> {
    if !(Arc::ptr_eq(&profile.grid, &kernel.grid) || *profile.grid == *kernel.grid) {
        return Err(Error::GridMismatch("kernel was assembled on a different grid".into()));
    }
    let mass = profile.total_mass();
    if mass <= 0.0 {
        return Err(Error::InvalidInput("ratio undefined for the zero profile".into()));
    }
    let num = 2.0 * kernel.interaction_energy(&profile.values);
    let l43: f64 = profile
        .values
        .iter()
        .enumerate()
        .map(|(i, &rho)| rho.powf(4.0 / 3.0) * profile.grid.cell_volume(i))
        .sum();
    Ok(num / (l43 * mass.powf(2.0 / 3.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::oracles::random_profile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(b: f64, r_max: f64, n: usize) -> Arc<RadialGrid> {
        Arc::new(build_grid(b, r_max, n, 8).unwrap())
    }

    #[test]
    fn elliptic_k_reference_values() {
        assert!((complete_elliptic_k(0.0) - PI / 2.0).abs() < 1e-15);
        // K(m = 0.5) from standard tables.
        assert!((complete_elliptic_k(0.5) - 1.854_074_677_301_371_9).abs() < 1e-14);
        let mut prev = complete_elliptic_k(0.0);
        for i in 1..10 {
            let v = complete_elliptic_k(i as f64 / 10.0);
            assert!(v > prev);
            prev = v;
        }
        assert!(complete_elliptic_k(1.0).is_nan());
    }

    #[test]
    fn ring_potential_limits() {
        // On the axis the ring is seen at its slant distance.
        let v = ring_potential((0.0, 0.3), (1.0, 0.0), 2.0).unwrap();
        let expect = 2.0 / (1.0f64 + 0.09).sqrt();
        assert!((v - expect).abs() < 1e-14 * expect);

        // A degenerate ring at η' = 0 is a point mass.
        let v = ring_potential((0.7, 0.2), (0.0, -0.1), 3.0).unwrap();
        let expect = 3.0 / (0.7f64.powi(2) + 0.3f64.powi(2)).sqrt();
        assert!((v - expect).abs() < 1e-14 * expect);

        assert!(ring_potential((1.0, 0.0), (1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn ring_potential_matches_monte_carlo() {
        // Average of 1/|x−y| over the unit ring, sampled in θ.
        let field = (0.5, 0.0);
        let exact = ring_potential(field, (1.0, 0.0), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let th: f64 = rng.gen_range(0.0..2.0 * PI);
            let dx = field.0 - th.cos();
            let dy = -th.sin();
            let v = 1.0 / (dx * dx + dy * dy).sqrt();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let var = (sum2 / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (exact - mean).abs() <= 3.0 * se,
            "{exact} vs {mean} (se {se})"
        );
    }

    #[test]
    fn uniform_ball_matches_shell_theorem() {
        // b = 1, ρ = 1 on r <= 1, grid R_max = 2 so exterior nodes exist.
        let g = grid(1.0, 2.0, 200);
        let p = DensityProfile::from_fn(g.clone(), |r| if r <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let field = potential_field(&p).unwrap();
        let mut worst: f64 = 0.0;
        for (i, &r) in g.midpoints.iter().enumerate() {
            // For b = 1 every node of shell i sits at radius r.
            let expect = if r <= 1.0 {
                2.0 * PI * (1.0 - r * r / 3.0)
            } else {
                4.0 * PI / 3.0 / r
            };
            for j in 0..g.u_nodes.len() {
                worst = worst.max((field.value(i, j) - expect).abs() / expect);
            }
        }
        assert!(worst <= 1e-3, "max relative error {worst}");

        let center = potential_at(&p, 0.0, 0.0).unwrap();
        assert!((center - 2.0 * PI).abs() / (2.0 * PI) <= 1e-3);

        let z = DensityProfile::zero(g);
        let f0 = potential_field(&z).unwrap();
        assert!(f0.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn oblate_and_prolate_centers_match_closed_form() {
        for b in [0.5, 2.0] {
            let g = grid(b, 2.0, 160);
            let p =
                DensityProfile::from_fn(g, |r| if r <= 1.0 { 1.0 } else { 0.0 }).unwrap();
            let mass = p.total_mass();
            let expect = uniform_ellipsoid_center(b, mass, 1.0).unwrap();
            let got = potential_at(&p, 0.0, 0.0).unwrap();
            assert!(
                (got - expect).abs() <= 1e-3 * expect,
                "b={b}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn uniform_ellipsoid_center_closed_form() {
        // b = 1 reduces to 2πρ*r*² for M = (4/3)πρ*r*³.
        let (rho, r_star) = (2.0f64, 0.7f64);
        let mass = 4.0 / 3.0 * PI * rho * r_star.powi(3);
        let v = uniform_ellipsoid_center(1.0, mass, rho).unwrap();
        assert!((v - 2.0 * PI * rho * r_star * r_star).abs() < 1e-12 * v);

        // b = 2 carries the factor 2^{1/3} ln(2+√3)/√3 ≈ 0.9580.
        let v1 = uniform_ellipsoid_center(1.0, 1.0, 1.0).unwrap();
        let v2 = uniform_ellipsoid_center(2.0, 1.0, 1.0).unwrap();
        let ratio = 2.0f64.cbrt() * (2.0 + 3.0f64.sqrt()).ln() / 3.0f64.sqrt();
        assert!((v2 / v1 - ratio).abs() < 1e-12);
        assert!((ratio - 0.9580).abs() < 1e-4);

        // The central value vanishes in both degenerate limits.
        assert!(uniform_ellipsoid_center(1e-9, 1.0, 1.0).unwrap() < 1e-2);
        assert!(uniform_ellipsoid_center(1e9, 1.0, 1.0).unwrap() < 1e-2);

        // Continuity across the b = 1 switch.
        let eps = uniform_ellipsoid_center(1.0 + 2e-6, 1.0, 1.0).unwrap();
        assert!((eps - v1).abs() < 1e-5 * v1);
    }

    #[test]
    fn spherical_oracle_and_cross_validation() {
        let g = grid(1.0, 2.0, 150);
        let p = DensityProfile::from_fn(g.clone(), |r| if r <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert!((spherical_potential_at(&p, 0.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        let mass = p.total_mass();
        assert!(
            (spherical_potential_at(&p, 1.8).unwrap() - mass / 1.8).abs() < 1e-12
        );

        // Ring-kernel path agrees with the 1-D closed form on random data.
        for seed in 0..10u64 {
            let p = random_profile(g.clone(), seed);
            let exact = spherical_potential(&p).unwrap();
            let field = potential_field(&p).unwrap();
            for (i, (kv, ev)) in field.k_grav.iter().zip(&exact).enumerate() {
                let scale = ev.abs().max(1e-12);
                assert!(
                    (kv - ev).abs() / scale <= 1e-3,
                    "seed {seed}, shell {i}: {kv} vs {ev}"
                );
            }
        }

        let g2 = grid(2.0, 1.0, 20);
        let p2 = DensityProfile::from_fn(g2, |_| 1.0).unwrap();
        assert!(spherical_potential(&p2).is_err());
    }

    #[test]
    fn reduced_kernel_consistent_with_field() {
        let g = grid(1.5, 1.5, 60);
        let p = random_profile(g.clone(), 5);
        let kernel = ReducedKernel::assemble(&g);
        let field = potential_field(&p).unwrap();
        let kg = kernel.k_grav(&p.values);
        for (i, (kv, fv)) in kg.iter().zip(&field.k_grav).enumerate() {
            let scale = fv.abs().max(1e-12);
            assert!(
                (kv - fv).abs() / scale <= 1e-3,
                "shell {i}: {kv} vs {fv}"
            );
        }
        // Shell mean cannot exceed the shell max (up to quadrature slack).
        let nb = g.u_nodes.len();
        for (i, kv) in kg.iter().enumerate() {
            let max = (0..nb).map(|j| field.value(i, j)).fold(f64::MIN, f64::max);
            assert!(*kv <= max * (1.0 + 1e-3) + 1e-12);
        }
        // Energy via the kernel matches ½Σ ρ vol K_grav via the field.
        let e_k = kernel.interaction_energy(&p.values);
        let e_f = grav_energy(&p, &field).unwrap();
        assert!((e_k - e_f).abs() <= 1e-3 * e_f.abs());
    }

    #[test]
    fn grav_energy_uniform_ball() {
        // ½∫ρBρ = (16/15)π² for the unit ball at unit density.
        let g = grid(1.0, 1.0, 200);
        let p = DensityProfile::from_fn(g.clone(), |_| 1.0).unwrap();
        let field = potential_field(&p).unwrap();
        let e = grav_energy(&p, &field).unwrap();
        let expect = 16.0 / 15.0 * PI * PI;
        assert!((e - expect).abs() <= 1e-3 * expect, "{e} vs {expect}");

        // Bilinearity: halving ρ quarters the energy.
        let ph = DensityProfile::from_fn(g.clone(), |_| 0.5).unwrap();
        let fh = potential_field(&ph).unwrap();
        let eh = grav_energy(&ph, &fh).unwrap();
        assert!((eh - 0.25 * e).abs() <= 1e-12 * e);

        let z = DensityProfile::zero(g);
        let fz = potential_field(&z).unwrap();
        assert_eq!(grav_energy(&z, &fz).unwrap(), 0.0);

        let other = DensityProfile::zero(grid(1.0, 2.0, 100));
        assert!(grav_energy(&other, &field).is_err());
    }

    #[test]
    fn potential_decays_like_point_mass() {
        // Support well inside the domain: ball of radius 0.3 in R_max = 3.
        let g = grid(1.0, 3.0, 120);
        let p = DensityProfile::from_fn(g.clone(), |r| if r <= 0.3 { 1.0 } else { 0.0 }).unwrap();
        let mass = p.total_mass();
        let field = potential_field(&p).unwrap();
        let i = g.n_cells - 1;
        let r = g.midpoints[i];
        assert!((field.k_grav[i] * r - mass).abs() / mass <= 5e-2);
    }

    #[test]
    fn hls_ratio_invariances() {
        let g = grid(1.0, 1.0, 60);
        let p = random_profile(g.clone(), 11);
        let kernel = ReducedKernel::assemble(&g);
        let j0 = hls_ratio(&p, &kernel).unwrap();
        assert!(j0.is_finite() && j0 > 0.0);

        // Homogeneity: ρ → 2ρ leaves J unchanged exactly.
        let p2 = DensityProfile::new(g.clone(), p.values.iter().map(|v| 2.0 * v).collect()).unwrap();
        let j2 = hls_ratio(&p2, &kernel).unwrap();
        assert!((j2 - j0).abs() <= 1e-14 * j0);

        // Dilation ρ_λ(x) = ρ(x/λ): same values on the stretched grid.
        for lambda in [0.5, 2.0, 4.0] {
            let gl = grid(1.0, lambda, 60);
            let pl = DensityProfile::new(gl.clone(), p.values.clone()).unwrap();
            let kl = ReducedKernel::assemble(&gl);
            let jl = hls_ratio(&pl, &kl).unwrap();
            assert!(
                (jl - j0).abs() <= 1e-8 * j0,
                "lambda={lambda}: {jl} vs {j0}"
            );
        }

        // Finite on a batch of random profiles.
        for seed in 0..20u64 {
            let p = random_profile(g.clone(), 100 + seed);
            let j = hls_ratio(&p, &kernel).unwrap();
            assert!(j.is_finite() && j > 0.0);
        }
        assert!(hls_ratio(&DensityProfile::zero(g), &kernel).is_err());
    }

    #[test]
    fn grid_refinement_does_not_degrade_ball_potential() {
        // The ball is exactly representable at any N, so the error is
        // quadrature-limited; refinement must not make it worse than the
        // panel-rule floor.
        let err_at = |n: usize| -> f64 {
            let g = grid(1.0, 1.0, n);
            let p = DensityProfile::from_fn(g.clone(), |_| 1.0).unwrap();
            let field = potential_field(&p).unwrap();
            let mut worst: f64 = 0.0;
            for (i, &r) in g.midpoints.iter().enumerate() {
                let expect = 2.0 * PI * (1.0 - r * r / 3.0);
                worst = worst.max((field.k_grav[i] - expect).abs() / expect);
            }
            worst
        };
        let coarse = err_at(50);
        let fine = err_at(100);
        assert!(
            fine <= (coarse / 2.0).max(3e-5),
            "coarse {coarse}, fine {fine}"
        );
    }
}
