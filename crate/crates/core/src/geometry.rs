//! Ellipsoidal-radius grid, shell parametrization and quadrature.
//!
//! Densities are constant on ellipsoids η² + z²/b² = r², so every field
//! reduces to a radial profile in the ellipsoidal radius r. A shell of
//! radius r is parametrized by (θ, u) with
//!
//! ```text
//! η = r √(1−u²),   z = b r u,   u ∈ [−1, 1],
//! ```
//!
//! under which the shell measure is uniform in u (volume element
//! 2πb r² dr du after integrating θ). Shell integrals are therefore
//! Gauss–Legendre sums in u, and radial integrals are exact per cell for
//! piecewise-constant profiles.

use crate::error::{Error, Result};

/// Radial mesh with cell-midpoint collocation and Gauss–Legendre shell nodes.
///
/// Cell edges sit at `i·R_max/N`, densities live at the midpoints, and
/// cumulative masses live on the edges so that mass is exactly additive.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    /// Ellipticity of the ellipsoidal symmetry (z semi-axis ratio).
    pub b: f64,
    /// Truncation radius of the computational domain.
    pub r_max: f64,
    /// Number of radial cells.
    pub n_cells: usize,
    /// Cell midpoints, length `n_cells`.
    pub midpoints: Vec<f64>,
    /// Cell edges, length `n_cells + 1`, from 0 to `r_max`.
    pub edges: Vec<f64>,
    /// Gauss–Legendre nodes in u on (−1, 1).
    pub u_nodes: Vec<f64>,
    /// Gauss–Legendre weights, summing to 2.
    pub u_weights: Vec<f64>,
}

impl RadialGrid {
    pub fn cell_width(&self) -> f64 {
        self.r_max / self.n_cells as f64
    }

    /// Volume of cell `i`: (4/3)πb(e_{i+1}³ − e_i³).
    pub fn cell_volume(&self, i: usize) -> f64 {
        let (lo, hi) = (self.edges[i], self.edges[i + 1]);
        4.0 / 3.0 * std::f64::consts::PI * self.b * (hi.powi(3) - lo.powi(3))
    }

    pub fn cell_volumes(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.cell_volume(i)).collect()
    }

    /// Total volume of the truncated domain.
    pub fn total_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.b * self.r_max.powi(3)
    }

    /// Ellipsoidal radius of a cylindrical point.
    pub fn r_b(&self, eta: f64, z: f64) -> f64 {
        (eta * eta + (z / self.b).powi(2)).sqrt()
    }

    /// Index of the cell containing radius `r`, clamped to the mesh.
    pub fn cell_of(&self, r: f64) -> usize {
        let i = (r / self.cell_width()).floor() as isize;
        i.clamp(0, self.n_cells as isize - 1) as usize
    }
}

/// Builds the uniform radial grid with `n_beta`-point shell quadrature.
pub fn build_grid(b: f64, r_max: f64, n_cells: usize, n_beta: usize) -> Result<RadialGrid> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidInput(format!("ellipticity b must be positive, got {b}")));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidInput(format!("R_max must be positive, got {r_max}")));
    }
    if n_cells < 8 {
        return Err(Error::InvalidInput(format!("need at least 8 cells, got {n_cells}")));
    }
    if n_beta < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 shell nodes, got {n_beta}")));
    }
    let dr = r_max / n_cells as f64;
    let edges: Vec<f64> = (0..=n_cells).map(|i| i as f64 * dr).collect();
    let midpoints: Vec<f64> = (0..n_cells).map(|i| (i as f64 + 0.5) * dr).collect();
    let (u_nodes, u_weights) = gauss_legendre(n_beta);
    Ok(RadialGrid { b, r_max, n_cells, midpoints, edges, u_nodes, u_weights })
}

/// Cylindrical coordinates (η, z) of the shell point at (r, u).
pub fn shell_point(r: f64, u: f64, b: f64) -> Result<(f64, f64)> {
    if r < 0.0 {
        return Err(Error::InvalidInput(format!("shell radius must be nonnegative, got {r}")));
    }
    if u.abs() > 1.0 {
        return Err(Error::InvalidInput(format!("shell coordinate |u| must be <= 1, got {u}")));
    }
    Ok((r * (1.0 - u * u).sqrt(), b * r * u))
}

/// Shell means ⟨g⟩(r_i) = ½ Σ_j w_j g(η_ij, z_ij) for every cell midpoint.
pub fn shell_average<F>(grid: &RadialGrid, g: F) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    let mut out = Vec::with_capacity(grid.n_cells);
    for (i, &r) in grid.midpoints.iter().enumerate() {
        let mut acc = 0.0;
        for (j, (&u, &w)) in grid.u_nodes.iter().zip(&grid.u_weights).enumerate() {
            let (eta, z) = shell_point(r, u, grid.b)?;
            let v = g(eta, z);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "shell integrand".into(),
                    location: format!("shell {i} (r={r}), node {j} (u={u})"),
                });
            }
            acc += w * v;
        }
        out.push(0.5 * acc);
    }
    Ok(out)
}

/// Cumulative radial integrals Σ_{i<k} v_i·(4/3)πb(e_{i+1}³−e_i³) on edges.
///
/// Exact for cellwise-constant integrands; entry 0 is 0 and entry N is the
/// full-domain integral.
pub fn cumulative_radial_integral(grid: &RadialGrid, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != grid.n_cells {
        return Err(Error::InvalidInput(format!(
            "expected {} cell values, got {}",
            grid.n_cells,
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(grid.n_cells + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: "cell value".into(),
                location: format!("cell {i}"),
            });
        }
        acc += v * grid.cell_volume(i);
        out.push(acc);
    }
    Ok(out)
}

/// Gauss–Legendre nodes and weights on (−1, 1) by Newton iteration on P_n.
///
/// Nodes are accurate to machine precision; weights sum to 2.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for k in 0..m {
        // Tricomi initial guess for the k-th positive root.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d2) = legendre_and_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_and_derivative(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
