//! Comparison models: weighted Slope One and an averaged multi-BMF
//! ensemble with the same parameter count as the component decomposition.

use crate::bmf::{BmfModel, Hyperparams, TargetSet};
use crate::dataset::{RatingDataset, Scale};
use crate::error::{LcrError, Result};

/// Item-based baseline built from average pairwise rating deviations.
///
/// `diff[j * m + i]` holds the raw sum of `r_uj - r_ui` over users who rated
/// both items, `cnt` the co-rating counts, so dev(j,i) = diff/cnt. Both
/// matrices are dense; rating datasets here have a few thousand items at
/// most.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeOneModel {
    n_items: usize,
    diff: Vec<f64>,
    cnt: Vec<u32>,
    user_ratings: Vec<Vec<(u32, f64)>>,
    user_mean: Vec<f64>,
    global_mean: f64,
    scale: Scale,
}

impl SlopeOneModel {
    pub fn fit(train: &RatingDataset) -> Result<SlopeOneModel> {
        if train.len() == 0 {
            return Err(LcrError::data("empty training set"));
        }
        let m = train.n_items();
        if m > 60_000 {
            return Err(LcrError::data(format!(
                "{m} items is too many for the dense deviation matrix"
            )));
        }
        let n = train.n_users();
        let mut user_ratings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(u, i, r) in train.triples() {
            user_ratings[u as usize].push((i, r));
        }
        let mut diff = vec![0.0f64; m * m];
        let mut cnt = vec![0u32; m * m];
        for items in &user_ratings {
            for (a, &(ia, ra)) in items.iter().enumerate() {
                for &(ib, rb) in &items[a + 1..] {
                    let (ia, ib) = (ia as usize, ib as usize);
                    let d = ra - rb;
                    diff[ia * m + ib] += d;
                    diff[ib * m + ia] -= d;
                    cnt[ia * m + ib] += 1;
                    cnt[ib * m + ia] += 1;
                }
            }
        }
        let user_mean = user_ratings
            .iter()
            .map(|rs| rs.iter().map(|&(_, r)| r).sum::<f64>() / rs.len() as f64)
            .collect();
        Ok(SlopeOneModel {
            n_items: m,
            diff,
            cnt,
            user_ratings,
            user_mean,
            global_mean: train.global_mean(),
            scale: train.scale(),
        })
    }

    /// Rebuild from the per-user rating lists (the deviation matrices are
    /// derived state); used when loading a saved model.
    pub fn from_parts(
        user_ratings: Vec<Vec<(u32, f64)>>,
        n_items: usize,
        global_mean: f64,
        scale: Scale,
    ) -> Result<SlopeOneModel> {
        if n_items > 60_000 {
            return Err(LcrError::data("too many items for the dense deviation matrix"));
        }
        for items in &user_ratings {
            if items.is_empty() {
                return Err(LcrError::data("user with no ratings"));
            }
            for &(i, r) in items {
                if i as usize >= n_items || !r.is_finite() {
                    return Err(LcrError::data("rating list entry out of range"));
                }
            }
        }
        let mut diff = vec![0.0f64; n_items * n_items];
        let mut cnt = vec![0u32; n_items * n_items];
        for items in &user_ratings {
            for (a, &(ia, ra)) in items.iter().enumerate() {
                for &(ib, rb) in &items[a + 1..] {
                    let (ia, ib) = (ia as usize, ib as usize);
                    let d = ra - rb;
                    diff[ia * n_items + ib] += d;
                    diff[ib * n_items + ia] -= d;
                    cnt[ia * n_items + ib] += 1;
                    cnt[ib * n_items + ia] += 1;
                }
            }
        }
        let user_mean = user_ratings
            .iter()
            .map(|rs| rs.iter().map(|&(_, r)| r).sum::<f64>() / rs.len() as f64)
            .collect();
        Ok(SlopeOneModel {
            n_items,
            diff,
            cnt,
            user_ratings,
            user_mean,
            global_mean,
            scale,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ratings.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn user_ratings(&self) -> &[Vec<(u32, f64)>] {
        &self.user_ratings
    }

    /// Average deviation and co-rating count for an item pair, if any user
    /// rated both.
    pub fn dev(&self, j: u32, i: u32) -> Option<(f64, u32)> {
        let idx = j as usize * self.n_items + i as usize;
        let c = self.cnt[idx];
        if c == 0 {
            None
        } else {
            Some((self.diff[idx] / f64::from(c), c))
        }
    }

    /// Count-weighted prediction, unclamped:
    /// `sum_i (dev(j,i) + r_ui) * cnt(j,i) / sum_i cnt(j,i)` over the user's
    /// rated items that co-occur with j. Falls back to the user's mean when
    /// no co-rated item exists.
    pub fn predict_raw(&self, u: u32, j: u32) -> f64 {
        let (u, j) = (u as usize, j as usize);
        assert!(u < self.user_ratings.len() && j < self.n_items, "index out of range");
        let mut num = 0.0;
        let mut den = 0.0;
        for &(i, r_ui) in &self.user_ratings[u] {
            let i = i as usize;
            if i == j {
                continue;
            }
            let c = self.cnt[j * self.n_items + i];
            if c == 0 {
                continue;
            }
            let dev = self.diff[j * self.n_items + i] / f64::from(c);
            num += (dev + r_ui) * f64::from(c);
            den += f64::from(c);
        }
        if den > 0.0 {
            num / den
        } else {
            self.user_mean[u]
        }
    }

    pub fn predict(&self, u: u32, j: u32) -> f64 {
        self.scale.clamp(self.predict_raw(u, j))
    }

    /// Unknown user falls to the global mean; a known user with an unknown
    /// item falls to that user's mean.
    pub fn predict_cold_raw(&self, u: Option<u32>, _i: Option<u32>) -> f64 {
        match u {
            Some(u) if (u as usize) < self.user_mean.len() => self.user_mean[u as usize],
            _ => self.global_mean,
        }
    }

    pub fn predict_cold(&self, u: Option<u32>, i: Option<u32>) -> f64 {
        self.scale.clamp(self.predict_cold_raw(u, i))
    }
}

/// Ensemble of independently trained biased-MF models whose predictions are
/// averaged. With c components it has exactly the parameter count of the
/// c-component decomposition, making it the equal-capacity control.
#[derive(Debug, Clone, PartialEq)]
pub struct MbmfModel {
    pub components: Vec<BmfModel>,
    pub clamp_output: bool,
    pub scale: Scale,
}

/// Train c BMF models on the full (undecomposed) ratings, component alpha
/// seeded with `seed ^ (alpha + 1)`.
pub fn train_mbmf(
    train: &RatingDataset,
    components: usize,
    base: &Hyperparams,
    seed: u64,
    threads: usize,
) -> Result<MbmfModel> {
    if components < 2 {
        return Err(LcrError::data("an ensemble needs at least 2 components; use plain BMF for 1"));
    }
    base.validate()?;
    if train.len() == 0 {
        return Err(LcrError::data("empty training set"));
    }
    let targets = TargetSet::from_dataset(train);
    let fit_one = |alpha: usize| -> Result<BmfModel> {
        let s = seed ^ (alpha as u64 + 1);
        let mut model = BmfModel::init(train.n_users(), train.n_items(), train.global_mean(), base, s)?;
        model
            .train(&targets, base, s)
            .map_err(|e| LcrError::divergence(format!("component {alpha}: {e}")))?;
        Ok(model)
    };
    let threads = threads.min(components).max(1);
    let models: Vec<BmfModel> = if threads == 1 {
        (0..components).map(fit_one).collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<BmfModel>>> = (0..components).map(|_| None).collect();
        let chunk = components.div_ceil(threads);
        std::thread::scope(|s| {
            for (ci, block) in slots.chunks_mut(chunk).enumerate() {
                let fit_one = &fit_one;
                s.spawn(move || {
                    for (off, slot) in block.iter_mut().enumerate() {
                        *slot = Some(fit_one(ci * chunk + off));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("ensemble worker skipped a component"))
            .collect::<Result<_>>()?
    };
    Ok(MbmfModel {
        components: models,
        clamp_output: base.clamp_output,
        scale: train.scale(),
    })
}

impl MbmfModel {
    /// Arithmetic mean of the component predictions, unclamped.
    pub fn predict_raw(&self, u: u32, i: u32) -> f64 {
        let sum: f64 = self.components.iter().map(|m| m.predict(u, i)).sum();
        sum / self.components.len() as f64
    }

    pub fn predict(&self, u: u32, i: u32) -> f64 {
        let p = self.predict_raw(u, i);
        if self.clamp_output {
            self.scale.clamp(p)
        } else {
            p
        }
    }

    pub fn predict_cold_raw(&self, u: Option<u32>, i: Option<u32>) -> f64 {
        let sum: f64 = self.components.iter().map(|m| m.predict_cold(u, i)).sum();
        sum / self.components.len() as f64
    }

    pub fn predict_cold(&self, u: Option<u32>, i: Option<u32>) -> f64 {
        let p = self.predict_cold_raw(u, i);
        if self.clamp_output {
            self.scale.clamp(p)
        } else {
            p
        }
    }
}
