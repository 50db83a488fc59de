//! TOML run configuration shared by every CLI subcommand.
//!
//! Required keys: `model`, `t_end`, `[grid]`, `[rates]`, `[diffusion]`.
//! Everything else has a default; see the README for the full schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::SweepSpec;
use crate::grid::Grid1D;
use crate::integrator::IntegratorConfig;
use crate::models::{DiffusionConstants, ModelKind, ModelSpec, RateConstants};
use crate::profiles::InitialConditionSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
    pub cells: Vec<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 100, cells: vec![1, 2, 5, 10, 100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Reduced partner for `converge`; inferred from `model` and `δ` if absent.
    #[serde(default)]
    pub reduced: Option<ModelKind>,
    pub t_end: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Extra output times for `simulate`; `t_end` is always written.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub grid: Grid1D,
    pub rates: RateConstants,
    pub diffusion: DiffusionConstants,
    #[serde(default)]
    pub initial: InitialConditionSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        self.rates.validate().map_err(cfg_err)?;
        self.diffusion.validate().map_err(cfg_err)?;
        self.initial.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        self.integrator
            .validate(self.t_end)
            .map_err(|e| Error::Config(format!("integrator: {e}")))?;
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon must be positive, got {e}")));
            }
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilons must be positive, got {e}")));
        }
        if let Some(t) = self.snapshots.iter().find(|t| !(**t > 0.0 && **t <= self.t_end)) {
            return Err(Error::Config(format!("snapshot time {t} outside (0, t_end]")));
        }
        if self.model.is_irreversible() && !self.rates.is_irreversible() {
            return Err(Error::Config(format!(
                "model {} requires rates.k_m2 = 0, got {}",
                self.model, self.rates.k_m2
            )));
        }
        if self.verify.samples == 0 || self.verify.cells.contains(&0) {
            return Err(Error::Config("verify.samples and verify.cells must be positive".into()));
        }
        Ok(())
    }

    /// The spec of `model`; full kinds take `epsilon` (or the first of
    /// `epsilons`).
    pub fn model_spec(&self) -> Result<ModelSpec> {
        if self.model.is_homogeneous() {
            return Err(Error::Config(format!("{} is not a spatial model", self.model)));
        }
        let eps = if self.model.is_full() {
            Some(
                self.epsilon
                    .or_else(|| self.epsilons.first().copied())
                    .ok_or_else(|| Error::Config(format!("model {} needs `epsilon`", self.model)))?,
            )
        } else {
            None
        };
        ModelSpec::new(self.model, self.rates, self.diffusion, eps).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        })
    }

    /// Reduction paired with a full model: the variant without the δ term
    /// when `d_c = d_e`, otherwise the one keeping it.
    pub fn reduced_partner(&self) -> Result<ModelKind> {
        if let Some(r) = self.reduced {
            return Ok(r);
        }
        let small = self.diffusion.delta() == 0.0;
        match (self.model, small) {
            (ModelKind::FullScaledIrrev, true) => Ok(ModelKind::ReducedIrrevSmallDelta),
            (ModelKind::FullScaledIrrev, false) => Ok(ModelKind::ReducedIrrevBigDelta),
            (ModelKind::FullScaledRev, true) => Ok(ModelKind::ReducedRevSmallDelta),
            (ModelKind::FullScaledRev, false) => Ok(ModelKind::ReducedRevBigDelta),
            (other, _) => Err(Error::Config(format!(
                "convergence runs need a full model, got {other}"
            ))),
        }
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let epsilons = if !self.epsilons.is_empty() {
            self.epsilons.clone()
        } else if let Some(e) = self.epsilon {
            vec![e]
        } else {
            return Err(Error::Config("converge needs `epsilons` (or `epsilon`)".into()));
        };
        let spec = SweepSpec {
            full: self.model,
            reduced: self.reduced_partner()?,
            epsilons,
            rates: self.rates,
            diffusion: self.diffusion,
            grid: self.grid,
            initial: self.initial,
            t_end: self.t_end,
            integrator: self.integrator.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}
