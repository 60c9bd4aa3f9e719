//! A common wrapper over the trainable predictors so evaluation and the CLI
//! can treat them uniformly.
//!
//! Train and probe sides of a split carry independent dense indices, so a
//! trained model keeps its own id-to-index maps and scores probe records by
//! external id. Users or items absent from the training side go through the
//! cold-start fallbacks.

use std::collections::HashMap;

use crate::baselines::{train_mbmf, MbmfModel, SlopeOneModel};
use crate::bmf::{self, BmfModel, Hyperparams};
use crate::dataset::{RatingDataset, Scale};
use crate::error::Result;
use crate::lcr::{train_lcr, LcrConfig, LcrModel};

/// External-id lookup tables captured from the training dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelIndex {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

impl ModelIndex {
    pub fn from_dataset(ds: &RatingDataset) -> ModelIndex {
        ModelIndex::from_parts(ds.user_ids().to_vec(), ds.item_ids().to_vec())
    }

    pub fn from_parts(users: Vec<String>, items: Vec<String>) -> ModelIndex {
        let user_index = users
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let item_index = items
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        ModelIndex {
            users,
            items,
            user_index,
            item_index,
        }
    }

    pub fn user(&self, id: &str) -> Option<u32> {
        self.user_index.get(id).copied()
    }

    pub fn item(&self, id: &str) -> Option<u32> {
        self.item_index.get(id).copied()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }
}

/// What to train. Carries every hyperparameter the model kind needs.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Bmf { hyper: Hyperparams },
    Lcr { config: LcrConfig },
    Mbmf { components: usize, hyper: Hyperparams, threads: usize },
    SlopeOne,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Bmf { .. } => "bmf",
            ModelSpec::Lcr { .. } => "lcr",
            ModelSpec::Mbmf { .. } => "mbmf",
            ModelSpec::SlopeOne => "slopeone",
        }
    }

    /// Same spec with all seeds replaced; used for repeated runs.
    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        let mut spec = self.clone();
        match &mut spec {
            ModelSpec::Bmf { hyper } | ModelSpec::Mbmf { hyper, .. } => hyper.seed = seed,
            ModelSpec::Lcr { config } => {
                config.seed = seed;
                config.base.seed = seed;
            }
            ModelSpec::SlopeOne => {}
        }
        spec
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Bmf { hyper } | ModelSpec::Mbmf { hyper, .. } => hyper.seed,
            ModelSpec::Lcr { config } => config.seed,
            ModelSpec::SlopeOne => 0,
        }
    }

    /// Key/value view of the hyperparameters, used for report echoing.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut kv = vec![("model".to_string(), self.name().to_string())];
        let push_hyper = |h: &Hyperparams, kv: &mut Vec<(String, String)>| {
            kv.push(("factors".into(), h.factors.to_string()));
            kv.push(("lambda".into(), h.lambda.to_string()));
            kv.push(("gamma".into(), h.gamma.to_string()));
            kv.push(("epochs".into(), h.epochs.to_string()));
            kv.push(("clamp".into(), if h.clamp_output { "on" } else { "off" }.into()));
            kv.push(("seed".into(), h.seed.to_string()));
        };
        match self {
            ModelSpec::Bmf { hyper } => push_hyper(hyper, &mut kv),
            ModelSpec::Lcr { config } => {
                kv.push(("components".into(), config.components.to_string()));
                kv.push(("retrain-epochs".into(), config.retrain_epochs.to_string()));
                kv.push(("threads".into(), config.threads.to_string()));
                push_hyper(&config.base, &mut kv);
                // The pipeline seed wins over the per-model one.
                kv.retain(|(k, _)| k != "seed");
                kv.push(("seed".into(), config.seed.to_string()));
            }
            ModelSpec::Mbmf { components, hyper, threads } => {
                kv.push(("components".into(), components.to_string()));
                kv.push(("threads".into(), threads.to_string()));
                push_hyper(hyper, &mut kv);
            }
            ModelSpec::SlopeOne => {}
        }
        kv
    }

    pub fn fit(&self, train: &RatingDataset) -> Result<TrainedModel> {
        let kind = match self {
            ModelSpec::Bmf { hyper } => TrainedKind::Bmf(bmf::fit(train, hyper)?),
            ModelSpec::Lcr { config } => TrainedKind::Lcr(train_lcr(train, config)?),
            ModelSpec::Mbmf { components, hyper, threads } => {
                TrainedKind::Mbmf(train_mbmf(train, *components, hyper, hyper.seed, *threads)?)
            }
            ModelSpec::SlopeOne => TrainedKind::SlopeOne(SlopeOneModel::fit(train)?),
        };
        let clamp_output = match self {
            ModelSpec::Bmf { hyper } | ModelSpec::Mbmf { hyper, .. } => hyper.clamp_output,
            ModelSpec::Lcr { config } => config.base.clamp_output,
            ModelSpec::SlopeOne => true,
        };
        Ok(TrainedModel {
            kind,
            index: ModelIndex::from_dataset(train),
            scale: train.scale(),
            clamp_output,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedKind {
    Bmf(BmfModel),
    Lcr(LcrModel),
    Mbmf(MbmfModel),
    SlopeOne(SlopeOneModel),
}

impl TrainedKind {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedKind::Bmf(_) => "bmf",
            TrainedKind::Lcr(_) => "lcr",
            TrainedKind::Mbmf(_) => "mbmf",
            TrainedKind::SlopeOne(_) => "slopeone",
        }
    }
}

/// A fitted model plus the id maps of the data it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: TrainedKind,
    pub index: ModelIndex,
    pub scale: Scale,
    pub clamp_output: bool,
}

impl TrainedModel {
    /// Raw (never clamped) score for external ids. Ids missing from the
    /// training index take each model's cold-start path.
    pub fn score(&self, user: &str, item: &str) -> f64 {
        let u = self.index.user(user);
        let i = self.index.item(item);
        match &self.kind {
            TrainedKind::Bmf(m) => match (u, i) {
                (Some(u), Some(i)) => m.predict(u, i),
                (u, i) => m.predict_cold(u, i),
            },
            TrainedKind::Lcr(m) => match (u, i) {
                (Some(u), Some(i)) => m.predict_raw(u, i),
                (u, i) => m.predict_cold_raw(u, i),
            },
            TrainedKind::Mbmf(m) => match (u, i) {
                (Some(u), Some(i)) => m.predict_raw(u, i),
                (u, i) => m.predict_cold_raw(u, i),
            },
            TrainedKind::SlopeOne(m) => match (u, i) {
                (Some(u), Some(i)) => m.predict_raw(u, i),
                (u, i) => m.predict_cold_raw(u, i),
            },
        }
    }

    /// Score honoring the model's own clamp setting.
    pub fn predict(&self, user: &str, item: &str) -> f64 {
        let p = self.score(user, item);
        if self.clamp_output {
            self.scale.clamp(p)
        } else {
            p
        }
    }
}
