//! Run configuration: a TOML file with nested sections, schema-validated
//! with unknown keys rejected. Every random quantity is driven by explicit
//! seeds; nothing reads the clock.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compressors::{CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::linalg::{purpose, stream_id, DenseMatrix, ParamVector, SeededRng};
use crate::objectives::{NoiseKind, Objective, StochasticOracle};
use crate::optimizer::{plan, HyperParams, PlanConstants, PlanInputs};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub oracle: OracleConfig,
    pub compressor: CompressorConfig,
    pub planner: PlannerConfig,
    #[serde(default)]
    pub execution: ExecutionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKindConfig,
    pub dim: usize,
    pub domain_radius: f64,
    /// Eigenvalues of H for the quadratic kinds.
    #[serde(default)]
    pub spectrum: Option<Vec<f64>>,
    /// Conjugate H by a seeded random rotation; absent keeps it diagonal.
    #[serde(default)]
    pub rotation_seed: Option<u64>,
    /// Cubic regularization weight.
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKindConfig {
    Quadratic,
    CubicRegQuadratic,
    DoubleWell,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub noise: NoiseKindConfig,
    #[serde(default)]
    pub sigma: f64,
    /// Optional heterogeneous noise levels, one per worker; must match
    /// execution.workers when present. `sigma` then bounds the average
    /// variance for the planner.
    #[serde(default)]
    pub worker_sigmas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindConfig {
    AdditiveGaussian,
    CoordinateSampling,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub kind: CompressorKindConfig,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "default_value_bits")]
    pub value_bits: u32,
}

fn default_value_bits() -> u32 {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKindConfig {
    Identity,
    RandomK,
    TopK,
    Sign,
    Quantization,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub epsilon: f64,
    /// Hessian-Lipschitz bound fed to the planner; required when the
    /// objective certifies rho = 0 (exact quadratics), since any positive
    /// value is a valid upper bound there.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub t_cap: Option<u64>,
    #[serde(default)]
    pub c_eta: Option<f64>,
    #[serde(default)]
    pub c_i: Option<f64>,
    #[serde(default)]
    pub c_rad: Option<f64>,
    #[serde(default)]
    pub c_f: Option<f64>,
    #[serde(default)]
    pub c_r: Option<f64>,
    #[serde(default)]
    pub c_t: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionConfig {
    #[serde(default = "default_one")]
    pub seeds_count: usize,
    #[serde(default)]
    pub reset_error: bool,
    #[serde(default = "default_one")]
    pub workers: usize,
    #[serde(default)]
    pub compress_downlink: bool,
    /// Force the iteration count, overriding the planner's T.
    #[serde(default)]
    pub t_override: Option<u64>,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub x0: StartPoint,
}

fn default_one() -> usize {
    1
}

fn default_record_every() -> u64 {
    1
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            seeds_count: 1,
            reset_error: false,
            workers: 1,
            compress_downlink: false,
            t_override: None,
            record_every: 1,
            x0: StartPoint::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum StartPoint {
    #[default]
    Origin,
    Constant {
        value: f64,
    },
    Vector {
        values: Vec<f64>,
    },
    /// Seeded Gaussian draw with the given per-coordinate std.
    Gaussian {
        std: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.objective.dim == 0 {
            return Err(Error::config("objective.dim must be >= 1"));
        }
        if !(self.objective.domain_radius > 0.0) {
            return Err(Error::config("objective.domain_radius must be positive"));
        }
        match self.objective.kind {
            ObjectiveKindConfig::Quadratic | ObjectiveKindConfig::CubicRegQuadratic => {
                let spec = self.objective.spectrum.as_ref().ok_or_else(|| {
                    Error::config("objective.spectrum required for quadratic kinds")
                })?;
                if spec.len() != self.objective.dim {
                    return Err(Error::config(format!(
                        "objective.spectrum has {} entries for dim {}",
                        spec.len(),
                        self.objective.dim
                    )));
                }
                if self.objective.kind == ObjectiveKindConfig::CubicRegQuadratic
                    && self.objective.rho.is_none()
                {
                    return Err(Error::config(
                        "objective.rho required for cubic_reg_quadratic",
                    ));
                }
            }
            ObjectiveKindConfig::DoubleWell => {}
        }
        match self.compressor.kind {
            CompressorKindConfig::RandomK | CompressorKindConfig::TopK
                if self.compressor.k.is_none() =>
            {
                return Err(Error::config("compressor.k required for sparsifiers"));
            }
            CompressorKindConfig::Quantization if self.compressor.s.is_none() => {
                return Err(Error::config("compressor.s required for quantization"));
            }
            _ => {}
        }
        if self.compressor.value_bits != 32 && self.compressor.value_bits != 64 {
            return Err(Error::config("compressor.value_bits must be 32 or 64"));
        }
        if self.execution.workers == 0 || self.execution.seeds_count == 0 {
            return Err(Error::config(
                "execution.workers and seeds_count must be >= 1",
            ));
        }
        if let StartPoint::Vector { values } = &self.execution.x0 {
            if values.len() != self.objective.dim {
                return Err(Error::config("execution.x0 vector length must match dim"));
            }
        }
        if let Some(ws) = &self.oracle.worker_sigmas {
            if ws.len() != self.execution.workers {
                return Err(Error::config(format!(
                    "oracle.worker_sigmas has {} entries for {} workers",
                    ws.len(),
                    self.execution.workers
                )));
            }
        }
        Ok(())
    }

    pub fn objective(&self) -> Result<Objective> {
        let d = self.objective.dim;
        let r = self.objective.domain_radius;
        match self.objective.kind {
            ObjectiveKindConfig::Quadratic => {
                let h = DenseMatrix::from_spectrum(
                    self.objective.spectrum.as_ref().unwrap(),
                    self.objective.rotation_seed,
                );
                Objective::quadratic(h, r)
            }
            ObjectiveKindConfig::CubicRegQuadratic => {
                let h = DenseMatrix::from_spectrum(
                    self.objective.spectrum.as_ref().unwrap(),
                    self.objective.rotation_seed,
                );
                Objective::cubic_reg_quadratic(h, self.objective.rho.unwrap(), r)
            }
            ObjectiveKindConfig::DoubleWell => Objective::double_well(d, r),
        }
    }

    pub fn oracle(&self) -> Result<StochasticOracle> {
        let noise = match self.oracle.noise {
            NoiseKindConfig::AdditiveGaussian => NoiseKind::AdditiveGaussian,
            NoiseKindConfig::CoordinateSampling => NoiseKind::CoordinateSampling,
        };
        StochasticOracle::new(self.objective()?, noise, self.oracle.sigma)
    }

    /// One oracle per worker. Distributions are identical unless
    /// `oracle.worker_sigmas` declares heterogeneous noise levels; either
    /// way the per-worker stochastic draws differ through their streams.
    pub fn oracles(&self) -> Result<Vec<StochasticOracle>> {
        let noise = match self.oracle.noise {
            NoiseKindConfig::AdditiveGaussian => NoiseKind::AdditiveGaussian,
            NoiseKindConfig::CoordinateSampling => NoiseKind::CoordinateSampling,
        };
        match &self.oracle.worker_sigmas {
            None => (0..self.execution.workers).map(|_| self.oracle()).collect(),
            Some(ws) => ws
                .iter()
                .map(|&s| StochasticOracle::new(self.objective()?, noise, s))
                .collect(),
        }
    }

    pub fn compressor_spec(&self) -> Result<CompressorSpec> {
        let kind = match self.compressor.kind {
            CompressorKindConfig::Identity => CompressorKind::Identity,
            CompressorKindConfig::RandomK => CompressorKind::RandomK {
                k: self.compressor.k.unwrap(),
            },
            CompressorKindConfig::TopK => CompressorKind::TopK {
                k: self.compressor.k.unwrap(),
            },
            CompressorKindConfig::Sign => CompressorKind::Sign,
            CompressorKindConfig::Quantization => CompressorKind::Quantization {
                s: self.compressor.s.unwrap(),
            },
        };
        CompressorSpec::new(kind, self.objective.dim)
    }

    /// Starting point for the sweep member `seed_index`.
    pub fn x0(&self, seed_index: u64) -> Result<ParamVector> {
        let d = self.objective.dim;
        Ok(match &self.execution.x0 {
            StartPoint::Origin => ParamVector::zeros(d),
            StartPoint::Constant { value } => ParamVector::constant(d, *value),
            StartPoint::Vector { values } => ParamVector::from_vec(values.clone()),
            StartPoint::Gaussian { std } => {
                let mut rng = SeededRng::new(self.seed, stream_id(&[purpose::INIT, seed_index]));
                rng.standard_normal_vector(d).scale(*std)
            }
        })
    }

    pub fn plan_constants(&self) -> PlanConstants {
        let defaults = PlanConstants::default();
        PlanConstants {
            c_eta: self.planner.c_eta.unwrap_or(defaults.c_eta),
            c_i: self.planner.c_i.or(defaults.c_i),
            c_rad: self.planner.c_rad.unwrap_or(defaults.c_rad),
            c_f: self.planner.c_f.unwrap_or(defaults.c_f),
            c_r: self.planner.c_r.unwrap_or(defaults.c_r),
            c_t: self.planner.c_t.unwrap_or(defaults.c_t),
        }
    }

    /// Planner inputs assembled from the objective's certified constants,
    /// the oracle regime, and f_max = f(x0) - f_lower.
    pub fn plan_inputs(&self) -> Result<PlanInputs> {
        let obj = self.objective()?;
        let oracle = self.oracle()?;
        let rho = match self.planner.rho {
            Some(r) if r > 0.0 => r,
            Some(r) => {
                return Err(Error::config(format!(
                    "planner.rho must be positive, got {r}"
                )))
            }
            None if obj.rho > 0.0 => obj.rho,
            None => {
                return Err(Error::config(
                    "objective certifies rho = 0; set planner.rho to a positive upper bound",
                ))
            }
        };
        let x0 = self.x0(0)?;
        let f_max = obj.value(&x0)? - obj.f_lower;
        Ok(PlanInputs {
            epsilon: self.planner.epsilon,
            l: obj.l,
            rho,
            sigma: self.oracle.sigma,
            ell_tilde: oracle.ell_tilde(),
            f_max: f_max.max(self.planner.epsilon), // guard tiny/zero starts
            d: self.objective.dim,
            lipschitz_sg: oracle.lipschitz_sg(),
            t_cap: self.planner.t_cap,
        })
    }

    pub fn plan(&self) -> Result<HyperParams> {
        let spec = self.compressor_spec()?;
        let inputs = self.plan_inputs()?;
        let mut hp = plan(&inputs, &spec, &self.plan_constants())?;
        if let Some(t) = self.execution.t_override {
            hp.iters = t;
        }
        Ok(hp)
    }

    /// Root seed for sweep member `seed_index`.
    pub fn run_seed(&self, seed_index: u64) -> u64 {
        if seed_index == 0 {
            self.seed
        } else {
            stream_id(&[purpose::SWEEP, self.seed, seed_index])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[objective]
kind = "double_well"
dim = 4
domain_radius = 1.25

[oracle]
noise = "additive_gaussian"
sigma = 0.0

[compressor]
kind = "random_k"
k = 2

[planner]
epsilon = 0.1
"#;

    #[test]
    fn minimal_config_parses_and_plans() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        let hp = cfg.plan().unwrap();
        assert!(hp.eta > 0.0);
        assert_eq!(hp.d, 4);
        assert!(hp.linear_compressor);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("[planner]", "[planner]\nbogus_key = 1");
        let err = RunConfig::from_toml(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("bogus_key") || msg.contains("unknown field"),
            "{msg}"
        );
    }

    #[test]
    fn quadratic_requires_planner_rho() {
        let cfg_text = r#"
seed = 1

[objective]
kind = "quadratic"
dim = 2
domain_radius = 5.0
spectrum = [1.0, 0.5]

[oracle]
noise = "additive_gaussian"
sigma = 0.1

[compressor]
kind = "identity"

[planner]
epsilon = 0.1
"#;
        let cfg = RunConfig::from_toml(cfg_text).unwrap();
        assert!(cfg.plan().is_err());
        let with_rho = cfg_text.replace("epsilon = 0.1", "epsilon = 0.1\nrho = 1.0");
        let cfg = RunConfig::from_toml(&with_rho).unwrap();
        assert!(cfg.plan().is_ok());
    }

    #[test]
    fn x0_kinds_resolve() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.x0(0).unwrap().as_slice(), &[0.0; 4]);

        let text = MINIMAL.replace(
            "[planner]",
            "[execution]\nseeds_count = 2\n[execution.x0]\nkind = \"gaussian\"\nstd = 0.5\n\n[planner]",
        );
        let cfg = RunConfig::from_toml(&text).unwrap();
        let a = cfg.x0(0).unwrap();
        let b = cfg.x0(1).unwrap();
        assert_ne!(a.as_slice(), b.as_slice());
        assert_eq!(a, cfg.x0(0).unwrap());
    }

    #[test]
    fn per_worker_sigmas() {
        let text = MINIMAL.replace("sigma = 0.0", "sigma = 0.2\nworker_sigmas = [0.1, 0.3]");
        // mismatched worker count rejected
        assert!(RunConfig::from_toml(&text).is_err());
        let text = text.replace("[compressor]", "[execution]\nworkers = 2\n\n[compressor]");
        let cfg = RunConfig::from_toml(&text).unwrap();
        let oracles = cfg.oracles().unwrap();
        assert_eq!(oracles.len(), 2);
        assert_eq!(oracles[0].sigma, 0.1);
        assert_eq!(oracles[1].sigma, 0.3);
    }

    #[test]
    fn spectrum_length_checked() {
        let bad = r#"
seed = 1

[objective]
kind = "quadratic"
dim = 3
domain_radius = 5.0
spectrum = [1.0, 0.5]

[oracle]
noise = "additive_gaussian"

[compressor]
kind = "identity"

[planner]
epsilon = 0.1
"#;
        assert!(RunConfig::from_toml(bad).is_err());
    }
}
