//! JSON run configuration: schema-validated, unknown keys rejected.

use anyhow::{bail, Context};
use rotstar_core::model::{
    AngularMomentumProfile, EntropyProfile, EquationOfState, ModelSpec, Shape,
};
use rotstar_core::oracles::LaneEmdenSolution;
use rotstar_core::solver::SolverOptions;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub eos: EosConfig,
    pub entropy: EntropyConfig,
    pub angmom: AngmomConfig,
    pub mass: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum EosConfig {
    #[serde(rename = "polytrope")]
    Polytrope {
        k: f64,
        gamma: f64,
        #[serde(default)]
        gamma_bar: Option<f64>,
    },
    #[serde(rename = "table")]
    Table {
        density: Vec<f64>,
        pressure: Vec<f64>,
        gamma_bar: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum EntropyConfig {
    #[serde(rename = "linear")]
    Linear {
        slope: f64,
        #[serde(default)]
        delta0: Option<f64>,
    },
    #[serde(rename = "table")]
    Table {
        n: Vec<f64>,
        s: Vec<f64>,
        #[serde(default)]
        delta0: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum AngmomConfig {
    #[serde(rename = "none")]
    None {},
    #[serde(rename = "power")]
    Power { beta: f64, q: f64 },
    #[serde(rename = "table")]
    Table { m: Vec<f64>, l: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub n_b: Option<usize>,
    /// Truncation radius; defaults to 4x the non-rotating isentropic
    /// support estimate when the pressure law is a polytrope.
    #[serde(default)]
    pub r_max: Option<f64>,
    pub cells: usize,
    pub n_beta: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_mass_tol")]
    pub mass_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_density_floor")]
    pub density_floor: f64,
    #[serde(default)]
    pub skip_condition_check: bool,
    #[serde(default = "default_condition_samples")]
    pub condition_samples: usize,
}

fn default_damping() -> f64 {
    0.5
}
fn default_residual_tol() -> f64 {
    1e-8
}
fn default_mass_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    500
}
fn default_density_floor() -> f64 {
    1e-12
}
fn default_condition_samples() -> usize {
    100
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: default_damping(),
            residual_tol: default_residual_tol(),
            mass_tol: default_mass_tol(),
            max_iter: default_max_iter(),
            density_floor: default_density_floor(),
            skip_condition_check: false,
            condition_samples: default_condition_samples(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_tolerance_scale")]
    pub tolerance_scale: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_tolerance_scale() -> f64 {
    1.0
}
fn default_mc_samples() -> usize {
    1_000_000
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { tolerance_scale: default_tolerance_scale(), mc_samples: default_mc_samples() }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    pub fn shape(&self) -> anyhow::Result<Shape> {
        match (self.geometry.b, self.geometry.xi) {
            (Some(b), None) => Ok(Shape::Fixed(b)),
            (None, Some(xi)) => Ok(Shape::Range { xi }),
            (Some(_), Some(_)) => bail!("geometry declares both b and xi; choose one"),
            (None, None) => bail!("geometry must declare either b or xi"),
        }
    }

    pub fn model_spec(&self) -> anyhow::Result<ModelSpec> {
        let mass = self.model.mass;
        let eos = match &self.model.eos {
            EosConfig::Polytrope { k, gamma, gamma_bar } => {
                let eos = EquationOfState::polytrope(*k, *gamma)?;
                match gamma_bar {
                    Some(gb) => eos.with_gamma_bar(*gb)?,
                    None => eos,
                }
            }
            EosConfig::Table { density, pressure, gamma_bar } => {
                EquationOfState::tabulated(density.clone(), pressure.clone(), *gamma_bar)?
            }
        };
        let entropy = match &self.model.entropy {
            EntropyConfig::Linear { slope, delta0 } => {
                let mut e = EntropyProfile::linear(*slope, mass)?;
                if let Some(d) = delta0 {
                    e.delta0 = d.clamp(0.0, mass);
                }
                e
            }
            EntropyConfig::Table { n, s, delta0 } => {
                let mut e = EntropyProfile::tabulated(n.clone(), s.clone(), mass)?;
                if let Some(d) = delta0 {
                    e.delta0 = d.clamp(0.0, mass);
                }
                e
            }
        };
        let angmom = match &self.model.angmom {
            AngmomConfig::None {} => AngularMomentumProfile::none(mass),
            AngmomConfig::Power { beta, q } => AngularMomentumProfile::power(*beta, *q, mass)?,
            AngmomConfig::Table { m, l } => {
                AngularMomentumProfile::tabulated(m.clone(), l.clone(), mass)?
            }
        };
        Ok(ModelSpec::new(eos, entropy, angmom, mass, self.shape()?)?)
    }

    /// Truncation radius: explicit, or 4x the isentropic non-rotating
    /// support of the polytrope when that estimate exists.
    pub fn r_max(&self, spec: &ModelSpec) -> anyhow::Result<f64> {
        if let Some(r) = self.geometry.r_max {
            if !r.is_finite() || r <= 0.0 {
                bail!("geometry.r_max must be positive, got {r}");
            }
            return Ok(r);
        }
        let (k, gamma) = spec
            .eos
            .polytrope_constants()
            .context("geometry.r_max is required for tabulated pressure laws")?;
        if spec.mass <= 0.0 {
            bail!("geometry.r_max is required when the total mass is 0");
        }
        let sol = if gamma == 2.0 {
            LaneEmdenSolution::closed_form_n1(k, spec.mass)?
        } else {
            LaneEmdenSolution::integrate(k, gamma, spec.mass)
                .context("geometry.r_max is required for this exponent")?
        };
        Ok(4.0 * sol.surface_radius)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            damping: self.solver.damping,
            residual_tol: self.solver.residual_tol,
            mass_tol: self.solver.mass_tol,
            max_iterations: self.solver.max_iter,
            density_floor: self.solver.density_floor,
            initial: rotstar_core::solver::InitialGuess::UniformBall,
            skip_condition_check: self.solver.skip_condition_check,
            condition_samples: self.solver.condition_samples,
        }
    }
}
