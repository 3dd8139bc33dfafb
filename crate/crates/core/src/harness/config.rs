use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvKind;
use crate::optimize::LossFlags;
use crate::policy::FeatureSpec;
use crate::trajectory::PlanMode;
use crate::Error;

/// Everything a run depends on. Loaded from TOML or JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    pub seed: u64,
    pub iterations: u32,
    /// Continuations per plan-following estimate.
    pub mc_samples: u32,
    pub beta: f64,
    pub sft_epochs: u32,
    pub po_epochs: u32,
    pub sft_learning_rate: f64,
    pub po_learning_rate: f64,
    pub momentum: f64,
    /// Examples per supervised step; `None` is full batch.
    pub sft_batch_size: Option<usize>,
    /// Pairs per preference step; `None` is full batch.
    pub po_batch_size: Option<usize>,
    pub explore_temperature: f64,
    pub score_temperature: f64,
    /// Overrides the per-task turn limit.
    pub max_turns: Option<u32>,
    pub use_pcode_plan: bool,
    pub use_nl_plan: bool,
    pub use_no_plan: bool,
    pub enable_lf: bool,
    pub enable_ls: bool,
    pub anchor_follow_winners: bool,
    pub ngram: u8,
    pub hash_dim: u32,
    /// World definition replacing the bundled one for `env`.
    pub world: Option<PathBuf>,
    /// Task file with `train` and `heldout` lists.
    pub tasks: Option<PathBuf>,
    /// Expert trajectories (JSONL). Synthesized from the oracle when absent.
    pub expert_data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub save_params: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvKind::Household,
            seed: 0,
            iterations: 4,
            mc_samples: 5,
            beta: 0.1,
            sft_epochs: 3,
            po_epochs: 4,
            sft_learning_rate: 0.5,
            po_learning_rate: 0.5,
            momentum: 0.0,
            sft_batch_size: Some(1),
            po_batch_size: Some(4),
            explore_temperature: 0.0,
            score_temperature: 1.0,
            max_turns: None,
            use_pcode_plan: true,
            use_nl_plan: false,
            use_no_plan: false,
            enable_lf: true,
            enable_ls: true,
            anchor_follow_winners: false,
            ngram: 3,
            hash_dim: 4096,
            world: None,
            tasks: None,
            expert_data: None,
            out_dir: PathBuf::from("runs/latest"),
            save_params: false,
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the file ends in `.json`, and validates.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let modes = [self.use_pcode_plan, self.use_nl_plan, self.use_no_plan];
        match modes.iter().filter(|&&m| m).count() {
            1 => {}
            0 => return Err(Error::Config("no plan mode set".into())),
            _ => return Err(Error::Config("conflicting plan modes: set exactly one".into())),
        }
        let checks: [(bool, &str); 8] = [
            (self.iterations >= 1, "iterations must be at least 1"),
            (self.mc_samples >= 1, "mc_samples must be at least 1"),
            (self.beta > 0.0 && self.beta.is_finite(), "beta must be positive"),
            (
                self.sft_learning_rate >= 0.0 && self.po_learning_rate >= 0.0,
                "learning rates must be non-negative",
            ),
            ((0.0..1.0).contains(&self.momentum), "momentum must be in [0, 1)"),
            (
                self.explore_temperature >= 0.0 && self.score_temperature >= 0.0,
                "temperatures must be non-negative",
            ),
            ((1..=3).contains(&self.ngram) && self.hash_dim > 0, "ngram must be 1..=3 and hash_dim positive"),
            (
                self.sft_batch_size != Some(0) && self.po_batch_size != Some(0) && self.max_turns != Some(0),
                "batch sizes and max_turns must be positive",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    pub fn plan_mode(&self) -> PlanMode {
        if self.use_nl_plan {
            PlanMode::Nl
        } else if self.use_no_plan {
            PlanMode::None
        } else {
            PlanMode::Pcode
        }
    }

    pub fn set_plan_mode(&mut self, mode: PlanMode) {
        self.use_pcode_plan = mode == PlanMode::Pcode;
        self.use_nl_plan = mode == PlanMode::Nl;
        self.use_no_plan = mode == PlanMode::None;
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            n: self.ngram,
            hash_dim: self.hash_dim,
        }
    }

    pub fn loss_flags(&self) -> LossFlags {
        LossFlags {
            lp: true,
            lf: self.enable_lf,
            ls: self.enable_ls,
            anchor_follow_winners: self.anchor_follow_winners,
        }
    }
}
