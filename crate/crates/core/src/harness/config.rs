//! Experiment configuration.
//!
//! A config is a JSON object; every section except `kind` is optional and
//! falls back to the defaults below. Unknown keys are rejected so typos do
//! not silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autodiff::OptimizerSpec;
use crate::error::{Error, Result};
use crate::learned::{RampFilter, Schedule, SurrogateShape};
use crate::rsk::{BatchPlan, SmoothParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rsk,
    RskSimix,
    Ls,
    Feds,
    Esupcon,
    Gradcheck,
    OracleSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rsk => "rsk",
            Self::RskSimix => "rsk-simix",
            Self::Ls => "ls",
            Self::Feds => "feds",
            Self::Esupcon => "esupcon",
            Self::Gradcheck => "gradcheck",
            Self::OracleSuite => "oracle-suite",
        }
    }
}

/// Gaussian class clusters for the retrieval and classification runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSpec {
    pub classes: usize,
    pub per_class: usize,
    /// Held-out points per class, drawn around the same means.
    pub test_per_class: usize,
    pub dim: usize,
    pub sigma: f64,
    /// Fraction of training labels replaced by a different random class.
    pub label_noise: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 16,
            test_per_class: 16,
            dim: 16,
            sigma: 0.3,
            label_noise: 0.0,
        }
    }
}

/// The noisy string-recognition task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StringSpec {
    pub length: usize,
    pub alphabet: usize,
    pub noise: f64,
    pub train: usize,
    pub val: usize,
}

impl Default for StringSpec {
    fn default() -> Self {
        Self {
            length: 6,
            alphabet: 8,
            noise: 0.5,
            train: 2000,
            val: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RskSpec {
    pub tau1: f64,
    pub tau2: f64,
    pub k_set: Vec<usize>,
    pub embed_dim: usize,
    pub steps: usize,
    pub eval_every: usize,
    /// Classes per batch; `null` uses `min(4000, 4 × classes) / samples_per_class`.
    pub classes_per_batch: Option<usize>,
    pub samples_per_class: usize,
    /// Query chunk for the two-pass gradient; `null` means the whole batch.
    pub chunk_size: Option<usize>,
    /// Virtual samples for `rsk-simix`; `null` means one per batch sample.
    pub virtual_samples: Option<usize>,
    pub optimizer: OptimizerSpec,
}

impl Default for RskSpec {
    fn default() -> Self {
        let p = SmoothParams::default();
        Self {
            tau1: p.tau1,
            tau2: p.tau2,
            k_set: p.k_set,
            embed_dim: 16,
            steps: 500,
            eval_every: 25,
            classes_per_batch: None,
            samples_per_class: 4,
            chunk_size: None,
            virtual_samples: None,
            optimizer: OptimizerSpec::adam(0.01),
        }
    }
}

impl RskSpec {
    pub fn smooth_params(&self) -> SmoothParams {
        SmoothParams {
            tau1: self.tau1,
            tau2: self.tau2,
            k_set: self.k_set.clone(),
        }
    }

    pub fn batch_plan(&self, classes: usize) -> Result<BatchPlan> {
        let classes_per_batch = match self.classes_per_batch {
            Some(c) => c,
            None => BatchPlan::default_for(classes)?.batch_size() / self.samples_per_class.max(1),
        };
        let batch = classes_per_batch * self.samples_per_class;
        BatchPlan::new(classes_per_batch, self.samples_per_class, self.chunk_size.unwrap_or(batch))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnedSpec {
    pub schedule: Schedule,
    /// Ramp used by `feds` runs.
    pub ramp: RampFilter,
    pub surrogate: SurrogateShape,
    pub init_std: f64,
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub pretrain_optimizer: OptimizerSpec,
    /// Synthetic triplets the surrogate is fitted on before alternating.
    pub prefit_triplets: usize,
    pub prefit_steps: usize,
    pub prefit_batch: usize,
    pub surrogate_optimizer: OptimizerSpec,
    pub model_optimizer: OptimizerSpec,
}

impl Default for LearnedSpec {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            ramp: RampFilter::default(),
            surrogate: SurrogateShape::default(),
            init_std: 0.1,
            pretrain_steps: 500,
            pretrain_batch: 32,
            pretrain_optimizer: OptimizerSpec::sgd(0.005),
            prefit_triplets: 5000,
            prefit_steps: 2000,
            prefit_batch: 64,
            surrogate_optimizer: OptimizerSpec::adam(1e-3),
            model_optimizer: OptimizerSpec::adam(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveSpec {
    pub tau: f64,
    pub tau_c: f64,
    /// Width of a ReLU hidden layer in the backbone; 0 keeps it linear.
    pub hidden: usize,
    pub embed_dim: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub optimizer: OptimizerSpec,
    /// Also train the softmax cross-entropy baseline.
    pub baseline: bool,
}

impl Default for ContrastiveSpec {
    fn default() -> Self {
        Self {
            tau: 0.1,
            tau_c: 0.1,
            hidden: 0,
            embed_dim: 16,
            steps: 200,
            eval_every: 20,
            optimizer: OptimizerSpec::adam(0.01),
            baseline: true,
        }
    }
}

/// Sizes for the `gradcheck` and `oracle-suite` kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub gradcheck_instances: usize,
    pub gradcheck_eps: f64,
    pub edit_pairs: usize,
    pub iou_pairs: usize,
    pub iou_samples: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            gradcheck_instances: 20,
            gradcheck_eps: 1e-6,
            edit_pairs: 1000,
            iou_pairs: 50,
            iou_samples: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the CLI flag and environment variable interact
    /// with it as documented there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub data: GaussianSpec,
    #[serde(default)]
    pub strings: StringSpec,
    #[serde(default)]
    pub rsk: RskSpec,
    #[serde(default)]
    pub learned: LearnedSpec,
    #[serde(default)]
    pub contrastive: ContrastiveSpec,
    #[serde(default)]
    pub checks: CheckSpec,
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

fn finite_non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be non-negative and finite"))
    }
}

fn positive_float(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be positive and finite"))
    }
}

fn optimizer(field: &str, spec: &OptimizerSpec) -> Result<()> {
    spec.validate().map_err(|e| match e {
        Error::Config { field: f, msg } => Error::config(f.replacen("optimizer", field, 1), msg),
        other => other,
    })
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 0,
            output: None,
            data: GaussianSpec::default(),
            strings: StringSpec::default(),
            rsk: RskSpec::default(),
            learned: LearnedSpec::default(),
            contrastive: ContrastiveSpec::default(),
            checks: CheckSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `key=value` overrides with dotted keys, then re-validates.
    /// Values parse as JSON when possible and as plain strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = self.to_value();
        for o in overrides {
            apply_override(&mut value, o.as_ref())?;
        }
        Self::from_value(value)
    }

    /// Checks every precondition the selected pipeline relies on.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExperimentKind::Rsk | ExperimentKind::RskSimix => {
                self.validate_gaussian()?;
                self.validate_rsk()
            }
            ExperimentKind::Esupcon => {
                self.validate_gaussian()?;
                self.validate_contrastive()
            }
            ExperimentKind::Ls | ExperimentKind::Feds => {
                self.validate_strings()?;
                self.validate_learned()
            }
            ExperimentKind::Gradcheck => {
                positive("checks.gradcheck_instances", self.checks.gradcheck_instances)?;
                if !(self.checks.gradcheck_eps > 0.0 && self.checks.gradcheck_eps <= 1e-2) {
                    return Err(Error::config("checks.gradcheck_eps", "must lie in (0, 1e-2]"));
                }
                Ok(())
            }
            ExperimentKind::OracleSuite => {
                positive("checks.edit_pairs", self.checks.edit_pairs)?;
                positive("checks.iou_pairs", self.checks.iou_pairs)?;
                positive("checks.iou_samples", self.checks.iou_samples)
            }
        }
    }

    fn validate_gaussian(&self) -> Result<()> {
        let d = &self.data;
        if d.classes < 2 {
            return Err(Error::config("data.classes", "must be at least 2"));
        }
        if d.per_class < 2 {
            return Err(Error::config("data.per_class", "must be at least 2 so every point has a positive"));
        }
        if d.test_per_class < 2 {
            return Err(Error::config("data.test_per_class", "must be at least 2"));
        }
        positive("data.dim", d.dim)?;
        finite_non_negative("data.sigma", d.sigma)?;
        if !(0.0..1.0).contains(&d.label_noise) {
            return Err(Error::config("data.label_noise", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn validate_rsk(&self) -> Result<()> {
        let r = &self.rsk;
        self.rsk.smooth_params().validate()?;
        positive("rsk.embed_dim", r.embed_dim)?;
        positive("rsk.eval_every", r.eval_every)?;
        optimizer("rsk.optimizer", &r.optimizer)?;
        if let Some(v) = r.virtual_samples {
            positive("rsk.virtual_samples", v)?;
        }
        let plan = r.batch_plan(self.data.classes).map_err(|e| match e {
            Error::Config { field, msg } => Error::config(field.replacen("batch.", "rsk.", 1), msg),
            other => other,
        })?;
        if plan.classes_per_batch > self.data.classes {
            return Err(Error::config("rsk.classes_per_batch", "exceeds data.classes"));
        }
        if plan.samples_per_class > self.data.per_class {
            return Err(Error::config("rsk.samples_per_class", "exceeds data.per_class"));
        }
        if self.kind == ExperimentKind::RskSimix && plan.chunk_size < plan.batch_size() {
            return Err(Error::config("rsk.chunk_size", "chunked gradients do not support mixup; leave it null"));
        }
        Ok(())
    }

    fn validate_contrastive(&self) -> Result<()> {
        let c = &self.contrastive;
        positive_float("contrastive.tau", c.tau)?;
        positive_float("contrastive.tau_c", c.tau_c)?;
        positive("contrastive.embed_dim", c.embed_dim)?;
        positive("contrastive.eval_every", c.eval_every)?;
        optimizer("contrastive.optimizer", &c.optimizer)
    }

    fn validate_strings(&self) -> Result<()> {
        let s = &self.strings;
        positive("strings.length", s.length)?;
        if s.alphabet < 2 {
            return Err(Error::config("strings.alphabet", "must be at least 2"));
        }
        finite_non_negative("strings.noise", s.noise)?;
        positive("strings.train", s.train)?;
        positive("strings.val", s.val)
    }

    fn validate_learned(&self) -> Result<()> {
        let l = &self.learned;
        l.schedule.validate().map_err(|e| match e {
            Error::Config { field, msg } => Error::config(format!("learned.{field}"), msg),
            other => other,
        })?;
        if self.kind == ExperimentKind::Feds {
            l.ramp.validate().map_err(|e| match e {
                Error::Config { field, msg } => Error::config(field.replacen("feds.", "learned.ramp.", 1), msg),
                other => other,
            })?;
        }
        let sh = &l.surrogate;
        positive("learned.surrogate.embed", sh.embed)?;
        positive("learned.surrogate.hidden", sh.hidden)?;
        positive("learned.surrogate.out", sh.out)?;
        finite_non_negative("learned.init_std", l.init_std)?;
        positive("learned.pretrain_batch", l.pretrain_batch)?;
        positive("learned.prefit_batch", l.prefit_batch)?;
        if l.prefit_steps > 0 {
            positive("learned.prefit_triplets", l.prefit_triplets)?;
        }
        optimizer("learned.pretrain_optimizer", &l.pretrain_optimizer)?;
        optimizer("learned.surrogate_optimizer", &l.surrogate_optimizer)?;
        optimizer("learned.model_optimizer", &l.model_optimizer)
    }
}

fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(assignment, "override key is empty"));
    }
    let parsed = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        node = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}
