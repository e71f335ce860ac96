//! Run configuration: one flat JSON object, every key optional.

use std::path::{Path, PathBuf};

use hpband::adapt::AdaptConfig;
use hpband::bench::ConvergenceConfig;
use hpband::bzmesh::DomainSpec;
use hpband::gapopt::{default_domain, BoConfig, DesignSpace, PipelineConfig};
use hpband::geometry::{validate_admissible, DesignParams, Model};
use hpband::oracle::{BandOracle, EmptyLattice, PlaneWaveOracle, PweConfig};
use hpband::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Bands,
    Adapt,
    Converge,
    Optimize,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Adapt => "adapt",
            Command::Converge => "converge",
            Command::Optimize => "optimize",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Plane-wave Maxwell solver on the model's unit cell.
    Pwe,
    /// Free-space bands |k+G|².
    EmptyLattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// φ(θ) of the configured model.
    Model,
    /// Built-in smooth test function on [0,1]².
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Set when the file is a manifest; must match the subcommand.
    pub command: Option<Command>,
    pub oracle: OracleKind,
    /// 1 (woodpile) or 2 (frame and sphere).
    pub model: u32,
    /// θ₁..θ₄ in units of `a`; literature values if absent.
    pub theta: Option<[f64; 4]>,
    pub lattice_constant: f64,
    /// Plane waves per axis (odd).
    pub modes_per_axis: usize,
    /// Bands tabulated by `bands`.
    pub n_bands: usize,
    /// Shell radius of the empty-lattice oracle.
    pub cutoff: i32,
    /// Mesh domain; the model's symmetry wedge if absent.
    pub domain: Option<DomainSpec>,
    /// Target band ℓ; model default (4 or 2) for PWE, 1 for the empty lattice.
    pub band: Option<usize>,
    pub kappa: f64,
    /// Smallest element size; `h1/32` if absent.
    pub tol2: Option<f64>,
    pub max_loops: usize,
    pub mu: f64,
    pub degree_cap: usize,
    pub eval_points: usize,
    pub seed: u64,
    pub initial_refinements: usize,
    pub points_per_segment: usize,
    pub bo_n_max: usize,
    pub bo_n_initial: Option<usize>,
    pub paper_stopping: bool,
    /// One-based indices of the optimized θ components.
    pub free_params: Vec<usize>,
    pub objective: Objective,
    /// Starting point of the synthetic objective.
    pub synthetic_start: [f64; 2],
    pub out: Option<PathBuf>,
    /// Written into manifests; ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adapt = AdaptConfig::default();
        RunConfig {
            command: None,
            oracle: OracleKind::Pwe,
            model: 1,
            theta: None,
            lattice_constant: 1.0,
            modes_per_axis: 7,
            n_bands: 6,
            cutoff: 3,
            domain: None,
            band: None,
            kappa: adapt.kappa,
            tol2: None,
            max_loops: adapt.max_loops,
            mu: 1.0,
            degree_cap: hpband::hpinterp::DEFAULT_DEGREE_CAP,
            eval_points: 2000,
            seed: 0,
            initial_refinements: 0,
            points_per_segment: 20,
            bo_n_max: 20,
            bo_n_initial: None,
            paper_stopping: false,
            free_params: vec![1, 2, 3, 4],
            objective: Objective::Model,
            synthetic_start: [0.5, 0.5],
            out: None,
            provenance: None,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paper_stopping: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies flags, pins the command and checks every setting.
    pub fn resolve(mut self, command: Command, flags: &Overrides) -> Result<RunConfig> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::Config(format!(
                    "config was written for '{}' but '{}' was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.command = Some(command);
        self.provenance = None;
        if let Some(out) = &flags.out {
            self.out = Some(out.clone());
        }
        if let Some(seed) = flags.seed {
            self.seed = seed;
        }
        self.paper_stopping |= flags.paper_stopping;
        if self.band.is_none() {
            self.band = Some(match self.oracle {
                OracleKind::Pwe => self.model()?.default_band(),
                OracleKind::EmptyLattice => 1,
            });
        }
        if self.theta.is_none() {
            self.theta = Some(self.model()?.default_theta());
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        self.model()?;
        if !(self.lattice_constant > 0.0 && self.lattice_constant.is_finite()) {
            return fail(format!("lattice_constant must be positive, got {}", self.lattice_constant));
        }
        PweConfig {
            modes_per_axis: self.modes_per_axis,
            n_bands: self.n_bands.max(1),
            fd_step: None,
        }
        .validate()?;
        if self.n_bands == 0 {
            return fail("n_bands must be at least 1".into());
        }
        if self.cutoff < 1 {
            return fail(format!("cutoff must be at least 1, got {}", self.cutoff));
        }
        self.adapt_config().validate()?;
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return fail(format!("mu must be positive, got {}", self.mu));
        }
        if self.degree_cap < 2 {
            return fail(format!("degree_cap must be at least 2, got {}", self.degree_cap));
        }
        if self.eval_points == 0 {
            return fail("eval_points must be at least 1".into());
        }
        if self.bo_n_max == 0 {
            return fail("bo_n_max must be at least 1".into());
        }
        if self.free_params.is_empty() || self.free_params.iter().any(|&i| !(1..=4).contains(&i)) {
            return fail(format!("free_params must list indices in 1..=4, got {:?}", self.free_params));
        }
        if self.synthetic_start.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return fail(format!("synthetic_start must lie in [0,1]², got {:?}", self.synthetic_start));
        }
        if self.oracle == OracleKind::Pwe {
            let p = self.params()?;
            if !validate_admissible(&p) {
                return Err(Error::Admissibility(format!(
                    "θ = {:?} lies outside the admissible set of model {}",
                    p.theta, self.model
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_id(self.model)
    }

    pub fn params(&self) -> Result<DesignParams> {
        let model = self.model()?;
        Ok(DesignParams::new(model, self.theta.unwrap_or(model.default_theta())))
    }

    pub fn band(&self) -> usize {
        self.band.unwrap_or(1)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        Ok(match (&self.domain, self.oracle) {
            (Some(d), _) => d.clone(),
            (None, OracleKind::Pwe) => default_domain(self.model()?),
            (None, OracleKind::EmptyLattice) => DomainSpec::IbzScFullSym,
        })
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            band: self.band(),
            kappa: self.kappa,
            tol2: self.tol2,
            max_loops: self.max_loops,
        }
    }

    /// The band oracle, providing at least `n_bands` bands.
    pub fn oracle(&self, n_bands: usize) -> Result<Box<dyn BandOracle>> {
        Ok(match self.oracle {
            OracleKind::Pwe => {
                let cell = hpband::geometry::model_cell(&self.params()?, self.lattice_constant)?;
                Box::new(PlaneWaveOracle::new(
                    cell,
                    PweConfig {
                        modes_per_axis: self.modes_per_axis,
                        n_bands,
                        fd_step: None,
                    },
                )?)
            }
            OracleKind::EmptyLattice => Box::new(EmptyLattice::new(self.lattice_constant, self.cutoff)),
        })
    }

    pub fn convergence_config(&self) -> Result<ConvergenceConfig> {
        Ok(ConvergenceConfig {
            domain: self.domain()?,
            lattice_constant: self.lattice_constant,
            adapt: self.adapt_config(),
            mu: self.mu,
            degree_cap: self.degree_cap,
            eval_points: self.eval_points,
            seed: self.seed,
            initial_refinements: self.initial_refinements,
        })
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            lattice_constant: self.lattice_constant,
            modes_per_axis: self.modes_per_axis,
            adapt: self.adapt_config(),
            mu: self.mu,
            degree_cap: self.degree_cap,
            eval_points: self.eval_points,
            domain: self.domain.clone(),
        }
    }

    pub fn design_space(&self) -> Result<DesignSpace> {
        let p = self.params()?;
        Ok(DesignSpace {
            model: p.model,
            start: p.theta,
            free: self.free_params.iter().map(|i| i - 1).collect(),
        })
    }

    pub fn bo_config(&self) -> BoConfig {
        BoConfig {
            n_max: self.bo_n_max,
            seed: self.seed,
            paper_stopping: self.paper_stopping,
            n_initial: self.bo_n_initial,
            ..BoConfig::default()
        }
    }
}
