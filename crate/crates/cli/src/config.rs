//! The TOML run file. Every table rejects unknown keys; everything except
//! `target` has a default, and `validate` prints the fully resolved form.

use std::path::PathBuf;

use boostvi::{
    BacktrackState, Family, Growth, LineSearchConfig, LmoConfig, McBudget, RunConfig, StepEngine, SurrogateMode,
    Variant,
};
use boostvi::targets::GaussianMixtureTarget;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::one")]
    pub replicates: usize,
    /// Parallel replicate or grid-cell runs.
    #[serde(default = "defaults::one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Set false for byte-stable traces (wall_seconds written as 0).
    #[serde(default = "defaults::yes")]
    pub wall_clock: bool,
    #[serde(default = "defaults::family")]
    pub family: Family,
    #[serde(default = "defaults::variant")]
    pub variant: Variant,
    #[serde(default = "defaults::step_engine")]
    pub step_engine: StepEngine,
    /// Posterior draws per evaluation of train LL, AUROC or exact KL.
    #[serde(default = "defaults::eval_samples")]
    pub eval_samples: usize,
    pub target: TargetSpec,
    #[serde(default)]
    pub stepsize: StepsizeSection,
    #[serde(default)]
    pub lmo: LmoSection,
    #[serde(default)]
    pub mc: McSection,
    /// Method grid for `compare`; ignored by `run`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Equal mixture of N(-offset, I) and N(offset, I).
    Bimodal {
        #[serde(default = "defaults::one")]
        dim: usize,
        #[serde(default = "defaults::offset")]
        offset: f64,
    },
    GaussianMixture { means: Vec<Vec<f64>>, scales: Vec<Vec<f64>>, weights: Vec<f64> },
    SyntheticLogistic {
        #[serde(default = "defaults::blr_dim")]
        dim: usize,
        #[serde(default = "defaults::blr_rows")]
        rows: usize,
        #[serde(default)]
        label_noise: f64,
        #[serde(default = "defaults::train_fraction")]
        train_fraction: f64,
        #[serde(default)]
        data_seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "defaults::label_column")]
        label_column: String,
        #[serde(default = "defaults::train_fraction")]
        train_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepsizeSection {
    /// Initial curvature estimate `C_{-1}`.
    pub curvature: f64,
    pub tau: f64,
    pub eta: f64,
    pub imax: usize,
    pub surrogate: SurrogateMode,
    pub line_search_b0: f64,
    pub line_search_steps: usize,
}

impl Default for StepsizeSection {
    fn default() -> Self {
        let b = BacktrackState::default();
        let l = LineSearchConfig::default();
        Self {
            curvature: b.curvature,
            tau: b.tau,
            eta: b.eta,
            imax: b.imax,
            surrogate: b.mode,
            line_search_b0: l.b0,
            line_search_steps: l.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmoSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub restarts: usize,
    pub init_scale: f64,
    pub samples_per_step: usize,
    pub grad_clip: f64,
}

impl Default for LmoSection {
    fn default() -> Self {
        let l = LmoConfig::default();
        Self {
            steps: l.steps,
            learning_rate: l.learning_rate,
            lr_decay: l.lr_decay,
            restarts: l.restarts,
            init_scale: l.init_scale,
            samples_per_step: l.samples_per_step,
            grad_clip: l.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub base_samples: usize,
    pub epsilon0: f64,
    pub growth: Growth,
}

impl Default for McSection {
    fn default() -> Self {
        let m = McBudget::default();
        Self { base_samples: m.base_samples, epsilon0: m.epsilon0, growth: m.growth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Method {
    /// Directory and row name; defaults to `<variant>-<step_engine>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub variant: Variant,
    pub step_engine: StepEngine,
}

impl Method {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let engine = serde_json::to_value(self.step_engine).ok();
            let engine = engine.as_ref().and_then(|v| v.as_str()).unwrap_or("engine");
            let variant = serde_json::to_value(self.variant).ok();
            let variant = variant.as_ref().and_then(|v| v.as_str()).unwrap_or("variant").to_string();
            format!("{variant}-{engine}")
        })
    }
}

mod defaults {
    use super::*;

    pub fn iterations() -> usize {
        30
    }
    pub fn one() -> usize {
        1
    }
    pub fn yes() -> bool {
        true
    }
    pub fn family() -> Family {
        Family::Laplace
    }
    pub fn variant() -> Variant {
        Variant::Fw
    }
    pub fn step_engine() -> StepEngine {
        StepEngine::Adaptive
    }
    pub fn eval_samples() -> usize {
        1000
    }
    pub fn offset() -> f64 {
        2.0
    }
    pub fn blr_dim() -> usize {
        5
    }
    pub fn blr_rows() -> usize {
        1000
    }
    pub fn train_fraction() -> f64 {
        0.8
    }
    pub fn label_column() -> String {
        "label".into()
    }
}

/// A configuration problem; always maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Range checks beyond what the types enforce.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.replicates == 0 {
            return Err(ConfigError("replicates must be positive".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError("workers must be positive".into()));
        }
        if self.eval_samples < 2 {
            return Err(ConfigError("eval_samples must be at least 2".into()));
        }
        if self.seed.checked_add(self.replicates as u64 - 1).is_none() {
            return Err(ConfigError("seed + replicates overflows a 64-bit seed".into()));
        }
        match &self.target {
            TargetSpec::Bimodal { dim, offset } if *dim == 0 || !offset.is_finite() => {
                return Err(ConfigError("target: bimodal needs dim >= 1 and a finite offset".into()))
            }
            TargetSpec::SyntheticLogistic { train_fraction, .. } | TargetSpec::Csv { train_fraction, .. }
                if !(*train_fraction > 0.0 && *train_fraction <= 1.0) =>
            {
                return Err(ConfigError("target: train_fraction must lie in (0, 1]".into()))
            }
            TargetSpec::GaussianMixture { means, scales, weights } => {
                GaussianMixtureTarget::new(means.clone(), scales.clone(), weights.clone())
                    .map_err(|e| ConfigError(format!("target: {e}")))?;
            }
            _ => {}
        }
        let mut names: Vec<String> = self.methods.iter().map(Method::label).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError("methods: labels must be unique".into()));
        }
        self.run_config(self.variant, self.step_engine, self.seed)
            .validate()
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn run_config(&self, variant: Variant, step_engine: StepEngine, seed: u64) -> RunConfig {
        let s = &self.stepsize;
        let l = &self.lmo;
        RunConfig {
            family: self.family,
            variant,
            step_engine,
            backtrack: BacktrackState { curvature: s.curvature, tau: s.tau, eta: s.eta, imax: s.imax, mode: s.surrogate },
            line_search: LineSearchConfig { b0: s.line_search_b0, steps: s.line_search_steps },
            lmo: LmoConfig {
                steps: l.steps,
                learning_rate: l.learning_rate,
                lr_decay: l.lr_decay,
                restarts: l.restarts,
                init_scale: l.init_scale,
                samples_per_step: l.samples_per_step,
                grad_clip: l.grad_clip,
            },
            init_lmo: None,
            mc: McBudget { base_samples: self.mc.base_samples, epsilon0: self.mc.epsilon0, growth: self.mc.growth },
            iterations: self.iterations,
            seed,
            initial: None,
            wall_clock: self.wall_clock,
            ..Default::default()
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|k| self.seed + k).collect()
    }

    /// The resolved configuration as TOML, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_resolves_defaults() {
        let cfg = CliConfig::parse("[target]\nkind = \"bimodal\"\n").unwrap();
        assert_eq!(cfg.stepsize.tau, 2.0);
        assert_eq!(cfg.replicates, 1);
        assert_eq!(cfg.target, TargetSpec::Bimodal { dim: 1, offset: 2.0 });
        let again = CliConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for text in [
            "colour = 1\n[target]\nkind = \"bimodal\"\n",
            "[target]\nkind = \"bimodal\"\nwidth = 3\n",
            "[target]\nkind = \"bimodal\"\n[lmo]\nstep = 3\n",
            "[target]\nkind = \"bimodal\"\n[[methods]]\nvariant = \"fw\"\nstep_engine = \"adaptive\"\nspeed = 1\n",
        ] {
            assert!(CliConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn missing_target_is_named() {
        let err = CliConfig::parse("iterations = 3\n").unwrap_err();
        assert!(err.0.contains("target"), "{err}");
    }

    #[test]
    fn invalid_hyperparameters_are_config_errors() {
        assert!(CliConfig::parse("[target]\nkind = \"bimodal\"\n[stepsize]\ntau = 0.5\n").is_err());
        assert!(CliConfig::parse("replicates = 0\n[target]\nkind = \"bimodal\"\n").is_err());
    }

    #[test]
    fn method_labels_default_to_variant_and_engine() {
        let m = Method { name: None, variant: Variant::Pairwise, step_engine: StepEngine::LineSearch };
        assert_eq!(m.label(), "pairwise-line_search");
    }
}
