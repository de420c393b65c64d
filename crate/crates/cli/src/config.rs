use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sbm_core::analysis::ConvergenceAxis;
use sbm_core::observables::DEFAULT_DEGENERACY_TOL;
use sbm_core::optimizer::{AnnealSchedule, OptimizerOptions};
use sbm_core::{MeshScheme, MeshSpec, ModelParams};

use crate::CliError;

/// Everything a run depends on. Written back into every output directory as
/// `config.toml`, with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub mesh: MeshSection,
    pub optimizer: OptimizerOptions,
    pub symmetry: SymmetrySection,
    pub sweep: SweepSection,
    pub converge: ConvergeSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSection::default(),
            mesh: MeshSection::default(),
            optimizer: OptimizerOptions::default(),
            symmetry: SymmetrySection::default(),
            sweep: SweepSection::default(),
            converge: ConvergeSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub s: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            alpha: 0.5,
            s: 1.0,
            epsilon: 0.0,
            delta: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub scheme: SchemeName,
    pub lambda: f64,
    pub modes: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            scheme: SchemeName::Log,
            lambda: 1.01,
            modes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetrySection {
    pub degeneracy_tol: f64,
}

impl Default for SymmetrySection {
    fn default() -> Self {
        SymmetrySection {
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit grid; when empty the grid runs from `alpha_min` to
    /// `alpha_max` in steps of `alpha_step`.
    pub alphas: Vec<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub warm_start: bool,
    pub write_modes: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            alphas: Vec::new(),
            alpha_min: 0.9,
            alpha_max: 1.1,
            alpha_step: 0.01,
            warm_start: true,
            write_modes: true,
        }
    }
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if !self.alphas.is_empty() {
            return Ok(self.alphas.clone());
        }
        if !(self.alpha_step > 0.0) || !(self.alpha_max >= self.alpha_min) {
            return Err(CliError::Usage(format!(
                "bad alpha range {}..{} step {}",
                self.alpha_min, self.alpha_max, self.alpha_step
            )));
        }
        let steps = ((self.alpha_max - self.alpha_min) / self.alpha_step + 1e-9).floor() as usize;
        // Rounded to 12 digits so that 0.1 + 3 * 0.01 prints as 0.13.
        Ok((0..=steps)
            .map(|i| {
                let a = self.alpha_min + self.alpha_step * i as f64;
                (a * 1e12).round() / 1e12
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub axis: ConvergenceAxis,
    pub values: Vec<usize>,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection {
            axis: ConvergenceAxis::States,
            values: (1..=6).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; relative paths resolve against `SBM_OUTPUT_ROOT`
    /// when set. Empty means `sbm-<command>`.
    pub dir: PathBuf,
    /// Report the entanglement entropy in bits instead of nats.
    pub entropy_bits: bool,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::new(),
            entropy_bits: false,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.model.epsilon, self.model.delta)?)
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        let scheme = match self.mesh.scheme {
            SchemeName::Log => MeshScheme::Logarithmic {
                lambda: self.mesh.lambda,
            },
            SchemeName::Linear => MeshScheme::Linear,
        };
        MeshSpec {
            scheme,
            modes: self.mesh.modes,
            s: self.model.s,
        }
    }

    pub fn output_dir(&self, command: &str) -> PathBuf {
        let dir = if self.output.dir.as_os_str().is_empty() {
            PathBuf::from(format!("sbm-{command}"))
        } else {
            self.output.dir.clone()
        };
        match std::env::var_os(crate::OUTPUT_ROOT_VAR) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.optimizer.validate()?;
        if self.mesh.modes < 1 {
            return Err(CliError::Usage("mode count M must be >= 1".into()));
        }
        self.mesh_spec().build(self.model.alpha)?;
        Ok(())
    }
}

/// Flags shared by every solver subcommand; each one overrides the config
/// file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// TOML config file
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Spectral exponent s
    #[arg(long)]
    pub s: Option<f64>,
    /// Coupling strength
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bias
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Bare tunneling amplitude
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    /// Logarithmic mesh factor
    #[arg(long = "Lambda")]
    pub lambda: Option<f64>,
    /// Number of bath modes
    #[arg(long = "M")]
    pub modes: Option<usize>,
    /// Coherent states per spin branch
    #[arg(long = "N")]
    pub n_states: Option<usize>,
    /// Random restarts
    #[arg(long)]
    pub starts: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Anneal metastable restarts with the default schedule
    #[arg(long)]
    pub anneal: bool,
    /// Output directory
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report entropy in bits
    #[arg(long)]
    pub entropy_bits: bool,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.model.s, self.s);
        set(&mut cfg.model.alpha, self.alpha);
        set(&mut cfg.model.epsilon, self.epsilon);
        set(&mut cfg.model.delta, self.delta);
        set(&mut cfg.mesh.lambda, self.lambda);
        set(&mut cfg.optimizer.grad_tol, self.grad_tol);
        if let Some(v) = self.scheme {
            cfg.mesh.scheme = v;
        }
        if let Some(v) = self.modes {
            cfg.mesh.modes = v;
        }
        if let Some(v) = self.n_states {
            cfg.optimizer.n_states = v;
        }
        if let Some(v) = self.starts {
            cfg.optimizer.n_starts = v;
        }
        if let Some(v) = self.seed {
            cfg.optimizer.seed = v;
        }
        if let Some(v) = self.max_iters {
            cfg.optimizer.max_iters = v;
        }
        if self.anneal && cfg.optimizer.anneal.is_none() {
            cfg.optimizer.anneal = Some(AnnealSchedule::default());
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.threads {
            cfg.output.threads = v;
        }
        cfg.output.entropy_bits |= self.entropy_bits;
        Ok(cfg)
    }
}
