//! Physical structure functions and the structural condition checker.
//!
//! The three model ingredients are the barotropic pressure law f, the
//! entropy per mass S as a function of enclosed ellipsoidal mass, and the
//! squared angular momentum per mass L as a function of enclosed
//! cylindrical mass. The internal-energy density derived from f is
//!
//! ```text
//! A(s) = s ∫₀^s f(t) t⁻² dt,
//! ```
//!
//! which is convex with A' strictly increasing, so the marginal energy A'
//! is invertible; the solver relies on that inversion.

use crate::error::{Error, Result};
use serde::Serialize;

const POLYTROPE_SAMPLE_RANGE: (f64, f64) = (1e-6, 1e6);

/// Barotropic pressure law f(s) with its derived energy density A(s).
#[derive(Debug, Clone)]
pub struct EquationOfState {
    kind: EosKind,
    /// Growth exponent for the large-density bound f(s) = o(s^γ̄).
    pub gamma_bar: f64,
}

#[derive(Debug, Clone)]
enum EosKind {
    Polytrope {
        k: f64,
        gamma: f64,
    },
    /// Monotone piecewise-linear table with a power-law head segment below
    /// the first positive sample. A linear head would make ∫ f t⁻² dt
    /// diverge at 0, so the head exponent is fitted to the first two
    /// samples and must exceed 1.
    Tabulated {
        s: Vec<f64>,
        f: Vec<f64>,
        /// F(s_k) = ∫₀^{s_k} f t⁻² dt at every knot.
        f_cum: Vec<f64>,
        head_exp: f64,
    },
}

impl EquationOfState {
    /// Polytrope f(s) = K s^γ with K > 0, γ > 4/3.
    pub fn polytrope(k: f64, gamma: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidInput(format!("polytrope constant K must be positive, got {k}")));
        }
        if !(gamma > 4.0 / 3.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("polytrope exponent must exceed 4/3, got {gamma}")));
        }
        Ok(Self { kind: EosKind::Polytrope { k, gamma }, gamma_bar: gamma + 0.5 })
    }

    pub fn with_gamma_bar(mut self, gamma_bar: f64) -> Result<Self> {
        if !(gamma_bar > 1.0) {
            return Err(Error::InvalidInput(format!("gamma_bar must exceed 1, got {gamma_bar}")));
        }
        self.gamma_bar = gamma_bar;
        Ok(self)
    }

    /// Tabulated pressure law from strictly increasing (density, pressure)
    /// samples. A leading (0, 0) sample is accepted and dropped.
    pub fn tabulated(density: Vec<f64>, pressure: Vec<f64>, gamma_bar: f64) -> Result<Self> {
        if density.len() != pressure.len() {
            return Err(Error::InvalidInput("density and pressure tables differ in length".into()));
        }
        let (mut s, mut f) = (density, pressure);
        if let (Some(&s0), Some(&f0)) = (s.first(), f.first()) {
            if s0 == 0.0 {
                if f0 != 0.0 {
                    return Err(Error::InvalidInput("tabulated f(0) must be 0".into()));
                }
                s.remove(0);
                f.remove(0);
            }
        }
        if s.len() < 2 {
            return Err(Error::InvalidInput("tabulated pressure law needs at least 2 positive samples".into()));
        }
        for w in s.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput("density samples must be strictly increasing".into()));
            }
        }
        if !(s[0] > 0.0) {
            return Err(Error::InvalidInput("density samples must be positive".into()));
        }
        for w in f.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput("pressure samples must be strictly increasing".into()));
            }
        }
        if !(f[0] > 0.0) {
            return Err(Error::InvalidInput("pressure samples must be positive".into()));
        }
        if !(gamma_bar > 1.0) {
            return Err(Error::InvalidInput(format!("gamma_bar must exceed 1, got {gamma_bar}")));
        }
        let head_exp = (f[1] / f[0]).ln() / (s[1] / s[0]).ln();
        if !(head_exp > 1.0) {
            return Err(Error::InvalidInput(format!(
                "head exponent {head_exp:.4} <= 1: f must vanish faster than linearly at 0"
            )));
        }
        // Cumulative F(s_k) = ∫₀^{s_k} f t⁻² dt: power-law head in closed
        // form, then per-segment antiderivative -α/t + β ln t.
        let mut f_cum = Vec::with_capacity(s.len());
        f_cum.push(f[0] / ((head_exp - 1.0) * s[0]));
        for k in 0..s.len() - 1 {
            let beta = (f[k + 1] - f[k]) / (s[k + 1] - s[k]);
            let alpha = f[k] - beta * s[k];
            let seg = alpha * (1.0 / s[k] - 1.0 / s[k + 1]) + beta * (s[k + 1] / s[k]).ln();
            f_cum.push(f_cum[k] + seg);
        }
        Ok(Self { kind: EosKind::Tabulated { s, f, f_cum, head_exp }, gamma_bar })
    }

    /// Density range over which the law is considered sampled.
    pub fn sample_range(&self) -> (f64, f64) {
        match &self.kind {
            EosKind::Polytrope { .. } => POLYTROPE_SAMPLE_RANGE,
            EosKind::Tabulated { s, .. } => (s[0], *s.last().unwrap()),
        }
    }

    pub fn polytrope_constants(&self) -> Option<(f64, f64)> {
        match self.kind {
            EosKind::Polytrope { k, gamma } => Some((k, gamma)),
            _ => None,
        }
    }

    /// Pressure f(s).
    pub fn pressure(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::InvalidInput(format!("density must be nonnegative, got {s}")));
        }
        match &self.kind {
            EosKind::Polytrope { k, gamma } => Ok(k * s.powf(*gamma)),
            EosKind::Tabulated { s: xs, f, head_exp, .. } => {
                if s == 0.0 {
                    return Ok(0.0);
                }
                let last = *xs.last().unwrap();
                if s > last {
                    return Err(Error::OutOfRange(format!("density {s} beyond tabulated maximum {last}")));
                }
                if s < xs[0] {
                    return Ok(f[0] * (s / xs[0]).powf(*head_exp));
                }
                let k = partition_index(xs, s);
                let t = (s - xs[k]) / (xs[k + 1] - xs[k]);
                Ok(f[k] + t * (f[k + 1] - f[k]))
            }
        }
    }

    /// Energy density A(s) = s ∫₀^s f(t) t⁻² dt.
    ///
    /// Closed form K s^γ/(γ−1) for the polytrope; exact piecewise
    /// integration of the interpolant for tables.
    pub fn internal_energy_density(&self, s: f64) -> Result<f64> {
        Ok(s * self.cumulative_kernel(s)?)
    }

    /// Marginal energy A'(s) = ∫₀^s f t⁻² dt + f(s)/s, with A'(0) = 0.
    pub fn marginal_internal_energy(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::InvalidInput(format!("density must be nonnegative, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(self.cumulative_kernel(s)? + self.pressure(s)? / s)
    }

    /// Unique s ≥ 0 with A'(s) = y.
    ///
    /// Closed form for the polytrope; bisection to relative tolerance
    /// 1e-12 for tables (A' is strictly increasing).
    pub fn density_from_marginal(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::InvalidInput(format!("marginal energy must be nonnegative, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            EosKind::Polytrope { k, gamma } => {
                Ok(((gamma - 1.0) * y / (k * gamma)).powf(1.0 / (gamma - 1.0)))
            }
            EosKind::Tabulated { s, .. } => {
                let hi = *s.last().unwrap();
                let top = self.marginal_internal_energy(hi)?;
                if y > top {
                    return Err(Error::OutOfRange(format!(
                        "marginal energy {y} beyond tabulated maximum {top}"
                    )));
                }
                let mut lo = 0.0;
                let mut hi = hi;
                while hi - lo > 1e-12 * hi {
                    let mid = 0.5 * (lo + hi);
                    if self.marginal_internal_energy(mid)? < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// F(s) = ∫₀^s f(t) t⁻² dt; integrable at 0 because f(t) = o(t^{4/3}).
    fn cumulative_kernel(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::InvalidInput(format!("density must be nonnegative, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            EosKind::Polytrope { k, gamma } => Ok(k * s.powf(gamma - 1.0) / (gamma - 1.0)),
            EosKind::Tabulated { s: xs, f, f_cum, head_exp } => {
                let last = *xs.last().unwrap();
                if s > last {
                    return Err(Error::OutOfRange(format!("density {s} beyond tabulated maximum {last}")));
                }
                if s <= xs[0] {
                    // Head: F(s) = f(s) / ((p-1) s).
                    return Ok(f[0] * (s / xs[0]).powf(*head_exp) / ((head_exp - 1.0) * s));
                }
                let k = partition_index(xs, s);
                let beta = (f[k + 1] - f[k]) / (xs[k + 1] - xs[k]);
                let alpha = f[k] - beta * xs[k];
                Ok(f_cum[k] + alpha * (1.0 / xs[k] - 1.0 / s) + beta * (s / xs[k]).ln())
            }
        }
    }
}

/// Largest index k with xs[k] <= x < xs[k+1] (x within the table).
fn partition_index(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}

/// Entropy per mass S(n) on [0, M], with T = e^S and its derivative.
#[derive(Debug, Clone)]
pub struct EntropyProfile {
    kind: EntropyKind,
    /// Total mass bounding the domain of S.
    pub mass: f64,
    /// Upper bound for T and |T'| on [0, M].
    pub t0: f64,
    /// Lower bound for T on [0, M].
    pub t1: f64,
    /// Vacuum margin: S' <= 0 on [M − δ₀, M].
    pub delta0: f64,
}

#[derive(Debug, Clone)]
enum EntropyKind {
    /// S(n) = slope · n.
    Linear { slope: f64 },
    /// Piecewise-linear samples with S(0) = 0.
    Tabulated { n: Vec<f64>, s: Vec<f64> },
}

impl EntropyProfile {
    /// Constant-slope entropy S(n) = slope·n (slope = S').
    pub fn linear(slope: f64, mass: f64) -> Result<Self> {
        if !slope.is_finite() || !(mass >= 0.0) {
            return Err(Error::InvalidInput("entropy slope and mass must be finite, mass nonnegative".into()));
        }
        let kind = EntropyKind::Linear { slope };
        Ok(Self::finish(kind, mass))
    }

    /// Piecewise-linear entropy from samples on [0, M]; requires S(0) = 0
    /// and samples covering the mass range.
    pub fn tabulated(n: Vec<f64>, s: Vec<f64>, mass: f64) -> Result<Self> {
        if n.len() != s.len() || n.len() < 2 {
            return Err(Error::InvalidInput("entropy table needs matching arrays of length >= 2".into()));
        }
        if n[0] != 0.0 || s[0] != 0.0 {
            return Err(Error::InvalidInput("entropy table must start at (0, 0)".into()));
        }
        for w in n.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput("entropy abscissas must be strictly increasing".into()));
            }
        }
        if *n.last().unwrap() < mass {
            return Err(Error::OutOfRange(format!(
                "entropy table covers [0, {}] but total mass is {mass}",
                n.last().unwrap()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("entropy samples must be finite".into()));
        }
        Ok(Self::finish(EntropyKind::Tabulated { n, s }, mass))
    }

    fn finish(kind: EntropyKind, mass: f64) -> Self {
        let mut p = Self { kind, mass, t0: 1.0, t1: 1.0, delta0: mass };
        let (t0, t1) = p.compute_bounds();
        p.t0 = t0;
        p.t1 = t1;
        p.delta0 = p.compute_delta0();
        p
    }

    /// Exact T-range and derivative bound from the knots (T is monotone on
    /// each segment, so the extremes sit at segment ends).
    fn compute_bounds(&self) -> (f64, f64) {
        let knots: Vec<f64> = match &self.kind {
            EntropyKind::Linear { .. } => vec![0.0, self.mass],
            EntropyKind::Tabulated { n, .. } => {
                let mut k: Vec<f64> = n.iter().copied().filter(|&v| v <= self.mass).collect();
                if *k.last().unwrap_or(&-1.0) < self.mass {
                    k.push(self.mass);
                }
                k
            }
        };
        let mut tmax: f64 = f64::MIN;
        let mut tmin: f64 = f64::MAX;
        let mut dmax: f64 = 0.0;
        for &nk in &knots {
            let t = self.temperature(nk).unwrap();
            tmax = tmax.max(t);
            tmin = tmin.min(t);
        }
        for w in knots.windows(2) {
            let sp = self.slope_on(0.5 * (w[0] + w[1]));
            let t_hi = self.temperature(w[0]).unwrap().max(self.temperature(w[1]).unwrap());
            dmax = dmax.max(sp.abs() * t_hi);
        }
        (tmax.max(dmax), tmin)
    }

    /// Largest δ₀ with S' <= 0 on [M − δ₀, M].
    fn compute_delta0(&self) -> f64 {
        match &self.kind {
            EntropyKind::Linear { slope } => {
                if *slope <= 0.0 {
                    self.mass
                } else {
                    0.0
                }
            }
            EntropyKind::Tabulated { n, s } => {
                let mut lowest = self.mass;
                for k in (0..n.len() - 1).rev() {
                    if n[k] >= self.mass {
                        continue;
                    }
                    let slope = (s[k + 1] - s[k]) / (n[k + 1] - n[k]);
                    if slope <= 0.0 {
                        lowest = n[k];
                    } else {
                        break;
                    }
                }
                self.mass - lowest
            }
        }
    }

    fn slope_on(&self, n: f64) -> f64 {
        match &self.kind {
            EntropyKind::Linear { slope } => *slope,
            EntropyKind::Tabulated { n: xs, s } => {
                let k = partition_index(xs, n.clamp(0.0, *xs.last().unwrap()));
                (s[k + 1] - s[k]) / (xs[k + 1] - xs[k])
            }
        }
    }

    /// S(n). Arguments beyond the total mass take the boundary value:
    /// cumulative masses overshoot M by discretization error and the
    /// first-order probes evaluate the functional at mass M + t∫σ, so the
    /// profile continues constantly past M.
    pub fn entropy(&self, n: f64) -> Result<f64> {
        let n = self.check_domain(n)?;
        match &self.kind {
            EntropyKind::Linear { slope } => Ok(slope * n),
            EntropyKind::Tabulated { n: xs, s } => {
                let k = partition_index(xs, n);
                let t = (n - xs[k]) / (xs[k + 1] - xs[k]);
                Ok(s[k] + t * (s[k + 1] - s[k]))
            }
        }
    }

    /// T(n) = e^{S(n)}.
    pub fn temperature(&self, n: f64) -> Result<f64> {
        Ok(self.entropy(n)?.exp())
    }

    /// T'(n) = S'(n) e^{S(n)}.
    pub fn temperature_derivative(&self, n: f64) -> Result<f64> {
        let n = self.check_domain(n)?;
        Ok(self.slope_on(n) * self.entropy(n)?.exp())
    }

    /// S'(n), piecewise constant for tables.
    pub fn entropy_derivative(&self, n: f64) -> Result<f64> {
        let n = self.check_domain(n)?;
        Ok(self.slope_on(n))
    }

    fn check_domain(&self, n: f64) -> Result<f64> {
        if !(n >= 0.0) {
            return Err(Error::InvalidInput(format!("mass argument must be nonnegative, got {n}")));
        }
        Ok(n.min(self.mass))
    }
}

/// Squared angular momentum per mass L(m) on [0, M].
#[derive(Debug, Clone)]
pub struct AngularMomentumProfile {
    kind: AngmomKind,
    pub mass: f64,
}

#[derive(Debug, Clone)]
enum AngmomKind {
    /// L(m) = β m^q; 0 < q <= 4/3 keeps (A4) automatic.
    Power { beta: f64, q: f64 },
    Tabulated { m: Vec<f64>, l: Vec<f64> },
}

impl AngularMomentumProfile {
    /// Non-rotating model, L = 0.
    pub fn none(mass: f64) -> Self {
        Self { kind: AngmomKind::Power { beta: 0.0, q: 1.0 }, mass }
    }

    pub fn power(beta: f64, q: f64, mass: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!("angular momentum amplitude must be nonnegative, got {beta}")));
        }
        if !(q > 0.0 && q <= 4.0 / 3.0) {
            return Err(Error::InvalidInput(format!("power exponent must lie in (0, 4/3], got {q}")));
        }
        Ok(Self { kind: AngmomKind::Power { beta, q }, mass })
    }

    /// Arbitrary tabulated L; structural validity only, the physical
    /// conditions (A3)-(A4) are checked by `check_conditions`.
    pub fn tabulated(m: Vec<f64>, l: Vec<f64>, mass: f64) -> Result<Self> {
        if m.len() != l.len() || m.len() < 2 {
            return Err(Error::InvalidInput("angular momentum table needs matching arrays of length >= 2".into()));
        }
        for w in m.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput("mass abscissas must be strictly increasing".into()));
            }
        }
        if m[0] != 0.0 {
            return Err(Error::InvalidInput("angular momentum table must start at m = 0".into()));
        }
        if *m.last().unwrap() < mass {
            return Err(Error::OutOfRange(format!(
                "angular momentum table covers [0, {}] but total mass is {mass}",
                m.last().unwrap()
            )));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("angular momentum samples must be finite".into()));
        }
        Ok(Self { kind: AngmomKind::Tabulated { m, l }, mass })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, AngmomKind::Power { beta, .. } if beta == 0.0)
    }

    /// L(m); tabulated profiles continue constantly past the last knot
    /// (discrete masses overshoot the declared total by quadrature error).
    pub fn value(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0) {
            return Err(Error::InvalidInput(format!("cylindrical mass must be nonnegative, got {m}")));
        }
        match &self.kind {
            AngmomKind::Power { beta, q } => Ok(beta * m.powf(*q)),
            AngmomKind::Tabulated { m: xs, l } => {
                let mc = m.min(*xs.last().unwrap());
                let k = partition_index(xs, mc);
                let t = (mc - xs[k]) / (xs[k + 1] - xs[k]);
                Ok(l[k] + t * (l[k + 1] - l[k]))
            }
        }
    }

    /// L'(m) in the interpolation sense; 0 at m = 0 and beyond the table
    /// (the value continues constantly there).
    pub fn derivative(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0) {
            return Err(Error::InvalidInput(format!("cylindrical mass must be nonnegative, got {m}")));
        }
        match &self.kind {
            AngmomKind::Power { beta, q } => {
                if m == 0.0 {
                    Ok(if *q >= 1.0 { if *q == 1.0 { *beta } else { 0.0 } } else { 0.0 })
                } else {
                    Ok(beta * q * m.powf(q - 1.0))
                }
            }
            AngmomKind::Tabulated { m: xs, l } => {
                let last = *xs.last().unwrap();
                if m >= last {
                    return Ok(0.0);
                }
                let k = partition_index(xs, m);
                Ok((l[k + 1] - l[k]) / (xs[k + 1] - xs[k]))
            }
        }
    }
}

/// Shape declaration: a fixed ellipticity or a scan range [1/ξ, ξ].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Fixed(f64),
    Range { xi: f64 },
}

/// Full model: structure functions, total mass, and shape declaration.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub eos: EquationOfState,
    pub entropy: EntropyProfile,
    pub angmom: AngularMomentumProfile,
    pub mass: f64,
    pub shape: Shape,
}

impl ModelSpec {
    pub fn new(
        eos: EquationOfState,
        entropy: EntropyProfile,
        angmom: AngularMomentumProfile,
        mass: f64,
        shape: Shape,
    ) -> Result<Self> {
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(Error::InvalidInput(format!("total mass must be nonnegative, got {mass}")));
        }
        match shape {
            Shape::Fixed(b) if !(b > 0.0) => {
                return Err(Error::InvalidInput(format!("ellipticity must be positive, got {b}")));
            }
            Shape::Range { xi } if !(xi > 1.0) => {
                return Err(Error::InvalidInput(format!("shape range parameter must exceed 1, got {xi}")));
            }
            _ => {}
        }
        Ok(Self { eos, entropy, angmom, mass, shape })
    }
}

/// Outcome of a single structural condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

impl ConditionCheck {
    fn pass() -> Self {
        Self { passed: true, counterexample: None }
    }
    fn fail(a: f64, x: f64, lhs: f64, rhs: f64) -> Self {
        Self { passed: false, counterexample: Some(Counterexample { a, x, lhs, rhs }) }
    }
}

/// First failing tuple of a sampled inequality, re-evaluable by hand.
/// `a` is the scaling parameter of the lattice (0 when not applicable),
/// `x` the abscissa (density, mass, or entropy argument).
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub a: f64,
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Per-condition verdicts for (A1)-(A7).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub a1: ConditionCheck,
    pub a2: ConditionCheck,
    pub a3: ConditionCheck,
    pub a4: ConditionCheck,
    pub a5: ConditionCheck,
    pub a6: ConditionCheck,
    pub a7: ConditionCheck,
    /// Sufficient condition sup|S'| <= 2/(3M), reported separately.
    pub entropy_slope_sufficient: bool,
    pub samples_per_axis: usize,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.a1.passed
            && self.a2.passed
            && self.a3.passed
            && self.a4.passed
            && self.a5.passed
            && self.a6.passed
            && self.a7.passed
    }

    pub fn lines(&self) -> Vec<String> {
        let row = |name: &str, c: &ConditionCheck| match (&c.passed, &c.counterexample) {
            (true, _) => format!("{name}: pass"),
            (false, Some(ce)) => format!(
                "{name}: FAIL at a={:.6e}, x={:.6e}: lhs={:.6e} < rhs={:.6e}",
                ce.a, ce.x, ce.lhs, ce.rhs
            ),
            (false, None) => format!("{name}: FAIL"),
        };
        vec![
            row("A1", &self.a1),
            row("A2", &self.a2),
            row("A3", &self.a3),
            row("A4", &self.a4),
            row("A5", &self.a5),
            row("A6", &self.a6),
            row("A7", &self.a7),
            format!(
                "entropy slope bound sup|S'| <= 2/(3M): {}",
                if self.entropy_slope_sufficient { "holds" } else { "not satisfied" }
            ),
        ]
    }
}

/// Relative slack for sampled inequalities; the conditions are closed
/// inequalities and equality cases must not fail from rounding.
const INEQ_SLACK: f64 = 1e-9;

/// Samples the structural conditions (A1)-(A7) on lattices of
/// `n_samples` points per axis. Failures are data, not errors.
pub fn check_conditions(spec: &ModelSpec, n_samples: usize) -> Result<ConditionReport> {
    if n_samples < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples per axis, got {n_samples}")));
    }
    let m_total = spec.mass;

    let (a1, a2) = check_pressure_growth(&spec.eos, n_samples)?;
    let (a3, a4) = check_angular_momentum(&spec.angmom, m_total, n_samples)?;
    let (a5, a6, a7) = check_entropy(&spec.entropy, m_total, n_samples)?;

    let entropy_slope_sufficient = if m_total == 0.0 {
        true
    } else {
        let bound = 2.0 / (3.0 * m_total);
        let mut sup = 0.0f64;
        for i in 0..=n_samples {
            let n = m_total * i as f64 / n_samples as f64;
            sup = sup.max(spec.entropy.entropy_derivative(n)?.abs());
        }
        sup <= bound * (1.0 + INEQ_SLACK)
    };

    Ok(ConditionReport {
        a1,
        a2,
        a3,
        a4,
        a5,
        a6,
        a7,
        entropy_slope_sufficient,
        samples_per_axis: n_samples,
    })
}

fn check_pressure_growth(
    eos: &EquationOfState,
    n_samples: usize,
) -> Result<(ConditionCheck, ConditionCheck)> {
    let (lo, hi) = eos.sample_range();
    let samples: Vec<f64> = (0..n_samples)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n_samples - 1) as f64))
        .collect();

    // f(0) = 0 and strict monotonicity at the samples.
    let f0 = eos.pressure(0.0)?;
    if f0.abs() > 0.0 {
        return Ok((ConditionCheck::fail(0.0, 0.0, 0.0, f0), ConditionCheck::pass()));
    }
    let mut prev = 0.0;
    let mut prev_s = 0.0;
    for &s in &samples {
        let f = eos.pressure(s)?;
        if !(f > prev) {
            return Ok((ConditionCheck::fail(prev_s, s, f, prev), ConditionCheck::pass()));
        }
        prev = f;
        prev_s = s;
    }

    // Limit surrogates on the sampled range: the ratio f s^{-4/3} must
    // clearly fall toward the small end and grow toward the large end.
    let ratio43 =
        |s: f64| -> Result<f64> { Ok(eos.pressure(s)? * s.powf(-4.0 / 3.0)) };
    let mid = samples[n_samples / 2];
    let (r_lo, r_mid, r_hi) = (ratio43(samples[0])?, ratio43(mid)?, ratio43(*samples.last().unwrap())?);
    let a1 = if r_lo > 0.5 * r_mid {
        ConditionCheck::fail(0.0, samples[0], 0.5 * r_mid, r_lo)
    } else if r_hi < 2.0 * r_mid {
        ConditionCheck::fail(0.0, *samples.last().unwrap(), r_hi, 2.0 * r_mid)
    } else {
        ConditionCheck::pass()
    };

    // (A2): f s^{-γ̄} must fall toward the large end.
    let gb = eos.gamma_bar;
    let rb = |s: f64| -> Result<f64> { Ok(eos.pressure(s)? * s.powf(-gb)) };
    let (rb_mid, rb_hi) = (rb(mid)?, rb(*samples.last().unwrap())?);
    let a2 = if rb_hi <= 0.5 * rb_mid {
        ConditionCheck::pass()
    } else {
        ConditionCheck::fail(gb, *samples.last().unwrap(), 0.5 * rb_mid, rb_hi)
    };
    Ok((a1, a2))
}

fn check_angular_momentum(
    angmom: &AngularMomentumProfile,
    m_total: f64,
    n_samples: usize,
) -> Result<(ConditionCheck, ConditionCheck)> {
    let scale = if m_total > 0.0 { angmom.value(m_total)?.abs().max(1e-300) } else { 1e-300 };
    let l0 = angmom.value(0.0)?;
    if l0.abs() > 1e-12 * scale {
        return Ok((ConditionCheck::fail(0.0, 0.0, l0, 0.0), ConditionCheck::pass()));
    }
    if m_total == 0.0 {
        return Ok((ConditionCheck::pass(), ConditionCheck::pass()));
    }
    // Nonnegativity over the mass samples.
    for i in 0..=n_samples {
        let m = m_total * i as f64 / n_samples as f64;
        let l = angmom.value(m)?;
        if l < -1e-12 * scale {
            return Ok((ConditionCheck::fail(0.0, m, l, 0.0), ConditionCheck::pass()));
        }
    }
    let a3 = ConditionCheck::pass();

    // (A4): L(am) >= a^{4/3} L(m) on the (a, m) lattice, plus monotone L.
    let mut prev = angmom.value(0.0)?;
    for i in 1..=n_samples {
        let m = m_total * i as f64 / n_samples as f64;
        let l = angmom.value(m)?;
        if l < prev * (1.0 - 1e-12) - 1e-12 * scale {
            return Ok((a3, ConditionCheck::fail(0.0, m, l, prev)));
        }
        prev = l;
    }
    for i in 0..=n_samples {
        let a = i as f64 / n_samples as f64;
        for j in 0..=n_samples {
            let m = m_total * j as f64 / n_samples as f64;
            let lhs = angmom.value(a * m)?;
            let rhs = a.powf(4.0 / 3.0) * angmom.value(m)?;
            if lhs < rhs * (1.0 - INEQ_SLACK) - 1e-14 * scale {
                return Ok((a3, ConditionCheck::fail(a, m, lhs, rhs)));
            }
        }
    }
    Ok((a3, ConditionCheck::pass()))
}

fn check_entropy(
    entropy: &EntropyProfile,
    m_total: f64,
    n_samples: usize,
) -> Result<(ConditionCheck, ConditionCheck, ConditionCheck)> {
    // (A5): S(0) = 0 and finite, differentiable samples.
    let s0 = entropy.entropy(0.0)?;
    if s0.abs() > 1e-14 {
        return Ok((
            ConditionCheck::fail(0.0, 0.0, s0, 0.0),
            ConditionCheck::pass(),
            ConditionCheck::pass(),
        ));
    }
    if m_total == 0.0 {
        return Ok((ConditionCheck::pass(), ConditionCheck::pass(), ConditionCheck::pass()));
    }
    for i in 0..=n_samples {
        let n = m_total * i as f64 / n_samples as f64;
        if !entropy.entropy(n)?.is_finite() || !entropy.entropy_derivative(n)?.is_finite() {
            return Ok((
                ConditionCheck::fail(0.0, n, f64::NAN, 0.0),
                ConditionCheck::pass(),
                ConditionCheck::pass(),
            ));
        }
    }
    let a5 = ConditionCheck::pass();

    // (A6): e^{S(an)} >= a^{2/3} e^{S(n)} and the vacuum-shifted variant.
    let mut a6 = ConditionCheck::pass();
    'outer: for i in 0..=n_samples {
        let a = i as f64 / n_samples as f64;
        let a23 = a.powf(2.0 / 3.0);
        for j in 0..=n_samples {
            let n = m_total * j as f64 / n_samples as f64;
            let rhs = a23 * entropy.temperature(n)?;
            let lhs1 = entropy.temperature(a * n)?;
            if lhs1 < rhs * (1.0 - INEQ_SLACK) {
                a6 = ConditionCheck::fail(a, n, lhs1, rhs);
                break 'outer;
            }
            let lhs2 = entropy.temperature(m_total - a * m_total + a * n)?;
            if lhs2 < rhs * (1.0 - INEQ_SLACK) {
                a6 = ConditionCheck::fail(a, n, lhs2, rhs);
                break 'outer;
            }
        }
    }

    // (A7): S' <= 0 on [M − δ₀, M].
    let mut a7 = ConditionCheck::pass();
    if entropy.delta0 <= 0.0 {
        let sp = entropy.entropy_derivative(m_total)?;
        if sp > 0.0 {
            a7 = ConditionCheck::fail(0.0, m_total, sp, 0.0);
        }
    } else {
        for i in 0..=n_samples {
            let n = m_total - entropy.delta0 + entropy.delta0 * i as f64 / n_samples as f64;
            let sp = entropy.entropy_derivative(n)?;
            if sp > 1e-12 {
                a7 = ConditionCheck::fail(0.0, n, sp, 0.0);
                break;
            }
        }
    }
    Ok((a5, a6, a7))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::adaptive_simpson;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poly(k: f64, gamma: f64) -> EquationOfState {
        EquationOfState::polytrope(k, gamma).unwrap()
    }

    /// Table sampled from a polytrope, log-spaced knots.
    fn tabulated_from_poly(k: f64, gamma: f64, lo: f64, hi: f64, n: usize) -> EquationOfState {
        let s: Vec<f64> = (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect();
        let f: Vec<f64> = s.iter().map(|&x| k * x.powf(gamma)).collect();
        EquationOfState::tabulated(s, f, gamma + 0.5).unwrap()
    }

    #[test]
    fn energy_density_closed_forms() {
        let eos = poly(1.0, 2.0);
        assert_eq!(eos.internal_energy_density(0.0).unwrap(), 0.0);
        assert!((eos.internal_energy_density(2.0).unwrap() - 4.0).abs() < 1e-14);
        let eos = poly(1.0, 5.0 / 3.0);
        assert!((eos.internal_energy_density(1.0).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn energy_density_quadrature_matches_closed_form() {
        // Independent quadrature of s ∫₀^s f t⁻² dt with the substitution
        // t = u³, which removes the endpoint singularity of f t⁻².
        let eos = poly(1.0, 5.0 / 3.0);
        for s in [0.3f64, 1.0, 7.5] {
            let integrand = |u: f64| {
                if u == 0.0 {
                    0.0
                } else {
                    3.0 * eos.pressure(u * u * u).unwrap() / u.powi(4)
                }
            };
            let quad = s * adaptive_simpson(&integrand, 0.0, s.cbrt(), 1e-13, 60);
            let closed = eos.internal_energy_density(s).unwrap();
            assert!(
                (quad - closed).abs() <= 1e-10 * closed,
                "s={s}: {quad} vs {closed}"
            );
        }
    }

    #[test]
    fn marginal_energy_values() {
        let eos = poly(1.0, 2.0);
        assert!((eos.marginal_internal_energy(1.5).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(eos.marginal_internal_energy(0.0).unwrap(), 0.0);
        // A'(s) − A(s)/s = f(s)/s at s = 2.
        let a = eos.internal_energy_density(2.0).unwrap();
        let ap = eos.marginal_internal_energy(2.0).unwrap();
        assert!((ap - a / 2.0 - eos.pressure(2.0).unwrap() / 2.0).abs() < 1e-14);
        assert!((ap - a / 2.0 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn marginal_identity_holds_for_tables() {
        let eos = tabulated_from_poly(0.7, 1.8, 1e-6, 1e3, 400);
        for &s in &[1e-5, 1e-2, 0.5, 3.0, 900.0] {
            let a = eos.internal_energy_density(s).unwrap();
            let ap = eos.marginal_internal_energy(s).unwrap();
            let f = eos.pressure(s).unwrap();
            let lhs = ap - a / s;
            assert!(
                (lhs - f / s).abs() <= 1e-10 * (f / s).abs(),
                "s={s}: {lhs} vs {}",
                f / s
            );
        }
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(EquationOfState::tabulated(vec![1.0, 0.5], vec![1.0, 2.0], 2.0).is_err());
        assert!(EquationOfState::tabulated(vec![0.5, 1.0], vec![2.0, 1.0], 2.0).is_err());
        // Linear head (f ~ s) is not integrable against t⁻².
        assert!(EquationOfState::tabulated(vec![1.0, 2.0], vec![1.0, 2.0], 2.0).is_err());
        // Out-of-range evaluation is an error, not an extrapolation.
        let eos = tabulated_from_poly(1.0, 2.0, 1e-3, 10.0, 50);
        assert!(eos.internal_energy_density(11.0).is_err());
        assert!(eos.pressure(11.0).is_err());
    }

    #[test]
    fn invert_marginal_closed_form_and_roundtrip() {
        let eos = poly(1.0, 2.0);
        assert!((eos.density_from_marginal(3.0).unwrap() - 1.5).abs() < 1e-14);
        assert_eq!(eos.density_from_marginal(0.0).unwrap(), 0.0);
        for &s in &[1e-6, 1.0, 10.0] {
            let y = eos.marginal_internal_energy(s).unwrap();
            let back = eos.density_from_marginal(y).unwrap();
            assert!((back - s).abs() <= 1e-10 * s, "s={s}, back={back}");
        }
        let tab = tabulated_from_poly(2.0, 1.6, 1e-7, 1e2, 300);
        for &s in &[1e-6, 1.0, 10.0] {
            let y = tab.marginal_internal_energy(s).unwrap();
            let back = tab.density_from_marginal(y).unwrap();
            assert!((back - s).abs() <= 1e-10 * s, "s={s}, back={back}");
        }
        let top = tab.marginal_internal_energy(100.0).unwrap();
        assert!(tab.density_from_marginal(2.0 * top).is_err());
        assert!(tab.density_from_marginal(-1.0).is_err());
    }

    fn spec_with(
        angmom: AngularMomentumProfile,
        entropy: EntropyProfile,
        mass: f64,
    ) -> ModelSpec {
        ModelSpec::new(poly(1.0, 2.0), entropy, angmom, mass, Shape::Fixed(1.0)).unwrap()
    }

    #[test]
    fn conditions_pass_for_critical_power_law() {
        // L = m^{4/3} meets (A4) with equality.
        let spec = spec_with(
            AngularMomentumProfile::power(1.0, 4.0 / 3.0, 1.0).unwrap(),
            EntropyProfile::linear(0.0, 1.0).unwrap(),
            1.0,
        );
        let report = check_conditions(&spec, 50).unwrap();
        assert!(report.a3.passed && report.a4.passed, "{:?}", report.a4);
        assert!(report.all_passed());
    }

    #[test]
    fn quadratic_angular_momentum_fails_a4() {
        // L(m) = m²: at a = 1/2, m = 1 the inequality reads 1/4 >= 2^{-4/3}.
        let m: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let l: Vec<f64> = m.iter().map(|x| x * x).collect();
        let spec = spec_with(
            AngularMomentumProfile::tabulated(m, l, 1.0).unwrap(),
            EntropyProfile::linear(0.0, 1.0).unwrap(),
            1.0,
        );
        let report = check_conditions(&spec, 100).unwrap();
        assert!(!report.a4.passed);
        let ce = report.a4.counterexample.unwrap();
        assert!(ce.lhs < ce.rhs);
        // Re-evaluable against the profile itself.
        assert!((ce.lhs - spec.angmom.value(ce.a * ce.x).unwrap()).abs() < 1e-14);
        assert!(
            (ce.rhs - ce.a.powf(4.0 / 3.0) * spec.angmom.value(ce.x).unwrap()).abs() < 1e-14
        );
        // The documented instance: a = 1/2, m = 1 violates by 0.25 < 0.397.
        let lhs = spec.angmom.value(0.5).unwrap();
        let rhs = 0.5f64.powf(4.0 / 3.0) * spec.angmom.value(1.0).unwrap();
        assert!((lhs - 0.25).abs() < 1e-4 && (rhs - 0.3969).abs() < 1e-4 && lhs < rhs);
    }

    #[test]
    fn linear_entropy_at_bound_passes_a5_a6_a7() {
        let mass = 1.0;
        let spec = spec_with(
            AngularMomentumProfile::none(mass),
            EntropyProfile::linear(-2.0 / (3.0 * mass), mass).unwrap(),
            mass,
        );
        let report = check_conditions(&spec, 100).unwrap();
        assert!(report.a5.passed);
        assert!(report.a6.passed, "{:?}", report.a6);
        assert!(report.a7.passed);
        assert!(report.entropy_slope_sufficient);
    }

    #[test]
    fn entropy_above_bound_detected() {
        let spec = spec_with(
            AngularMomentumProfile::none(1.0),
            EntropyProfile::linear(-2.0, 1.0).unwrap(),
            1.0,
        );
        let report = check_conditions(&spec, 100).unwrap();
        assert!(!report.entropy_slope_sufficient);
        // Steep decay also violates (A6) outright: at n = M, a small,
        // e^{S(an)-S(n)} = e^{2(1-a)} is fine but the shifted variant fails.
        assert!(!report.a6.passed);
    }

    #[test]
    fn increasing_entropy_near_vacuum_fails_a7() {
        let spec = spec_with(
            AngularMomentumProfile::none(1.0),
            EntropyProfile::tabulated(
                vec![0.0, 0.5, 1.0],
                vec![0.0, -0.1, 0.1],
                1.0,
            )
            .unwrap(),
            1.0,
        );
        assert_eq!(spec.entropy.delta0, 0.0);
        let report = check_conditions(&spec, 60).unwrap();
        assert!(!report.a7.passed);
    }

    #[test]
    fn temperature_bounds_hold_on_domain() {
        let e = EntropyProfile::tabulated(
            vec![0.0, 0.3, 0.7, 1.0],
            vec![0.0, 0.2, -0.1, -0.3],
            1.0,
        )
        .unwrap();
        assert_eq!(e.temperature(0.0).unwrap(), 1.0);
        for i in 0..=1000 {
            let n = i as f64 / 1000.0;
            let t = e.temperature(n).unwrap();
            assert!(t >= e.t1 * (1.0 - 1e-14) && t <= e.t0 * (1.0 + 1e-14));
            assert!(e.temperature_derivative(n).unwrap().abs() <= e.t0 * (1.0 + 1e-14));
        }
    }

    #[test]
    fn random_entropy_under_slope_bound_satisfies_a6() {
        // Sufficiency of sup|S'| <= 2/(3M) for (A6), probed on random
        // piecewise-linear profiles under the bound.
        let mass = 2.0;
        let bound = 2.0 / (3.0 * mass);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..5 {
            let n_knots = 12;
            let n: Vec<f64> = (0..=n_knots).map(|i| mass * i as f64 / n_knots as f64).collect();
            let mut s = vec![0.0];
            for k in 1..=n_knots {
                let slope = rng.gen_range(-bound..bound);
                let ds = slope * (n[k] - n[k - 1]);
                s.push(s[k - 1] + ds);
            }
            let e = EntropyProfile::tabulated(n, s, mass).unwrap();
            let spec = spec_with(AngularMomentumProfile::none(mass), e, mass);
            let report = check_conditions(&spec, 100).unwrap();
            assert!(report.entropy_slope_sufficient, "trial {trial}");
            assert!(report.a6.passed, "trial {trial}: {:?}", report.a6);
        }
    }

    #[test]
    fn gamma_4_3_rejected_and_a1_surrogate_sane() {
        assert!(EquationOfState::polytrope(1.0, 4.0 / 3.0).is_err());
        let spec = spec_with(
            AngularMomentumProfile::none(1.0),
            EntropyProfile::linear(0.0, 1.0).unwrap(),
            1.0,
        );
        let report = check_conditions(&spec, 100).unwrap();
        assert!(report.a1.passed && report.a2.passed);
    }

    proptest! {
        #[test]
        fn marginal_energy_strictly_increasing(
            s1 in 1e-5f64..1e3,
            factor in 1.001f64..100.0,
            gamma in 1.4f64..3.0,
        ) {
            let eos = poly(1.0, gamma);
            let s2 = s1 * factor;
            let a1 = eos.marginal_internal_energy(s1).unwrap();
            let a2 = eos.marginal_internal_energy(s2).unwrap();
            prop_assert!(a1 < a2);
        }

        #[test]
        fn tabulated_marginal_strictly_increasing(s1 in 1e-4f64..50.0, factor in 1.01f64..10.0) {
            let eos = tabulated_from_poly(1.3, 1.7, 1e-6, 1e3, 200);
            let s2 = (s1 * factor).min(1e3);
            prop_assume!(s2 > s1);
            let a1 = eos.marginal_internal_energy(s1).unwrap();
            let a2 = eos.marginal_internal_energy(s2).unwrap();
            prop_assert!(a1 < a2);
        }
    }
}
