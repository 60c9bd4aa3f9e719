//! Biased matrix factorization trained with plain SGD.
//!
//! A model predicts `mu + b_i + b_u + x_u . y_i` (or just the dot product
//! when biases are disabled). Training minimizes the squared error plus an
//! L2 penalty, `0.5 (r - rhat)^2 + 0.5 lambda (|x_u|^2 + |y_i|^2 + b_u^2 + b_i^2)`
//! per sample, so one SGD step is exactly
//!
//! ```text
//! b_u += gamma ((r - rhat) - lambda b_u)        (item bias alike)
//! x_u += gamma ((r - rhat) y_i - lambda x_u)
//! y_i += gamma ((r - rhat) x_u - lambda y_i)    (with the pre-update x_u)
//! ```
//!
//! The learning rate is constant across epochs; each epoch visits every
//! target once in a freshly shuffled order drawn from a seeded generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::RatingDataset;
use crate::error::{LcrError, Result};

/// Any parameter beyond this magnitude (or non-finite) aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Factor-matrix entries start uniform in `[0, INIT_SPREAD]`; biases at 0.
/// The spread matters: factor growth out of the bilinear saddle scales with
/// the starting magnitude, so a tiny spread leaves factors dormant for the
/// typical epoch budget.
pub const INIT_SPREAD: f64 = 0.1;

/// SGD settings for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Latent dimensionality k.
    pub factors: usize,
    /// L2 penalty.
    pub lambda: f64,
    /// Learning rate, constant over all epochs.
    pub gamma: f64,
    pub epochs: usize,
    /// false drops mu and both bias terms from the prediction.
    pub use_biases: bool,
    /// Seeds factor initialization and epoch shuffles.
    pub seed: u64,
    /// Whether final predictions should be clamped to the rating scale.
    pub clamp_output: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            factors: 10,
            lambda: 0.02,
            gamma: 0.005,
            epochs: 30,
            use_biases: true,
            seed: 0,
            clamp_output: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(LcrError::data("factors must be >= 1"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(LcrError::data(format!("learning rate {} must be positive", self.gamma)));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(LcrError::data(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }
}

/// Training targets: `(user index, item index, value)` triples against fixed
/// dimensions. Values are raw ratings for plain BMF and component shares
/// during decomposition/retraining.
#[derive(Debug, Clone)]
pub struct TargetSet {
    entries: Vec<(u32, u32, f64)>,
    n_users: usize,
    n_items: usize,
}

impl TargetSet {
    pub fn new(entries: Vec<(u32, u32, f64)>, n_users: usize, n_items: usize) -> Result<TargetSet> {
        for &(u, i, v) in &entries {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(LcrError::data(format!(
                    "target index ({u}, {i}) outside {n_users} x {n_items}"
                )));
            }
            if !v.is_finite() {
                return Err(LcrError::data(format!("non-finite target {v} for ({u}, {i})")));
            }
        }
        Ok(TargetSet {
            entries,
            n_users,
            n_items,
        })
    }

    pub fn from_dataset(ds: &RatingDataset) -> TargetSet {
        TargetSet {
            entries: ds.triples().to_vec(),
            n_users: ds.n_users(),
            n_items: ds.n_items(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Arithmetic mean of the target values (compensated sum).
    pub fn mean(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &(_, _, v) in &self.entries {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum / self.entries.len() as f64
    }
}

/// One biased-MF model. Factor matrices are row-major flat arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct BmfModel {
    pub mu: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub factors: usize,
    pub use_biases: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

impl BmfModel {
    /// Fresh model: biases zero, factor entries uniform in
    /// `[0, INIT_SPREAD]` drawn from a ChaCha stream seeded with `seed`
    /// (user factors first, then item factors, row-major). Identical seeds
    /// give identical models.
    pub fn init(n_users: usize, n_items: usize, mu: f64, hyper: &Hyperparams, seed: u64) -> Result<BmfModel> {
        hyper.validate()?;
        if n_users == 0 || n_items == 0 {
            return Err(LcrError::data("cannot size a model for 0 users or items"));
        }
        let k = hyper.factors;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random::<f64>() * INIT_SPREAD).collect()
        };
        Ok(BmfModel {
            mu,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            user_factors: draw(n_users * k),
            item_factors: draw(n_items * k),
            factors: k,
            use_biases: hyper.use_biases,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    /// Unclamped prediction. Panics if an index is out of range; callers
    /// resolving external ids route unknown users/items to [`BmfModel::predict_cold`].
    #[inline]
    pub fn predict(&self, u: u32, i: u32) -> f64 {
        let (u, i) = (u as usize, i as usize);
        let k = self.factors;
        let xs = &self.user_factors[u * k..(u + 1) * k];
        let ys = &self.item_factors[i * k..(i + 1) * k];
        if self.use_biases {
            self.mu + self.item_bias[i] + self.user_bias[u] + dot(xs, ys)
        } else {
            dot(xs, ys)
        }
    }

    /// Prediction limited to the rating scale.
    pub fn predict_clamped(&self, u: u32, i: u32, min: f64, max: f64) -> f64 {
        self.predict(u, i).clamp(min, max)
    }

    /// Fallback for users/items absent from training: the global mean plus
    /// whichever bias terms exist. `None` marks the unknown side.
    pub fn predict_cold(&self, u: Option<u32>, i: Option<u32>) -> f64 {
        let mut p = self.mu;
        if self.use_biases {
            if let Some(u) = u {
                if (u as usize) < self.user_bias.len() {
                    p += self.user_bias[u as usize];
                }
            }
            if let Some(i) = i {
                if (i as usize) < self.item_bias.len() {
                    p += self.item_bias[i as usize];
                }
            }
        }
        p
    }

    /// One SGD step toward `target`; returns the pre-update error.
    ///
    /// The error and all four parameter blocks are read before any write, so
    /// the item-factor update sees the pre-update user factors. Divergence
    /// (non-finite or beyond [`DIVERGENCE_LIMIT`]) is an error naming gamma.
    #[inline]
    pub fn sgd_update(&mut self, u: u32, i: u32, target: f64, gamma: f64, lambda: f64) -> Result<f64> {
        let e = target - self.predict(u, i);
        let (u, i) = (u as usize, i as usize);
        if !e.is_finite() || e.abs() > DIVERGENCE_LIMIT {
            return Err(LcrError::divergence(format!(
                "error term {e:.3e} for ({u}, {i}) exceeds {DIVERGENCE_LIMIT:.0e} at gamma={gamma}"
            )));
        }
        if self.use_biases {
            let bu = self.user_bias[u];
            let bi = self.item_bias[i];
            self.user_bias[u] = bu + gamma * (e - lambda * bu);
            self.item_bias[i] = bi + gamma * (e - lambda * bi);
            if !self.user_bias[u].is_finite() || !self.item_bias[i].is_finite() {
                return Err(LcrError::divergence(format!(
                    "bias became non-finite for ({u}, {i}) at gamma={gamma}"
                )));
            }
        }
        let k = self.factors;
        let xs = &mut self.user_factors[u * k..(u + 1) * k];
        let ys = &mut self.item_factors[i * k..(i + 1) * k];
        for (xf, yf) in xs.iter_mut().zip(ys.iter_mut()) {
            let x_old = *xf;
            *xf = x_old + gamma * (e * *yf - lambda * x_old);
            *yf += gamma * (e * x_old - lambda * *yf);
        }
        Ok(e)
    }

    /// Run `hyper.epochs` SGD passes over `targets`. Each epoch shuffles the
    /// visit order with a generator seeded once from `shuffle_seed`, so a
    /// given seed fixes the whole trajectory.
    pub fn train(&mut self, targets: &TargetSet, hyper: &Hyperparams, shuffle_seed: u64) -> Result<()> {
        hyper.validate()?;
        if targets.is_empty() {
            return Err(LcrError::data("empty target set"));
        }
        if targets.n_users() > self.n_users() || targets.n_items() > self.n_items() {
            return Err(LcrError::data(format!(
                "target dimensions {} x {} exceed model {} x {}",
                targets.n_users(),
                targets.n_items(),
                self.n_users(),
                self.n_items()
            )));
        }
        let mut order: Vec<u32> = (0..targets.len() as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let entries = targets.entries();
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            for &t in &order {
                let (u, i, v) = entries[t as usize];
                self.sgd_update(u, i, v, hyper.gamma, hyper.lambda)
                    .map_err(|e| LcrError::divergence(format!("epoch {epoch}: {e}")))?;
            }
            self.check_finite(epoch, hyper.gamma)?;
        }
        Ok(())
    }

    /// Full parameter sweep run once per epoch; catches blow-ups the cheap
    /// per-update check misses.
    pub(crate) fn check_finite(&self, epoch: usize, gamma: f64) -> Result<()> {
        let bad = |v: &f64| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT;
        if self.user_bias.iter().any(bad)
            || self.item_bias.iter().any(bad)
            || self.user_factors.iter().any(bad)
            || self.item_factors.iter().any(bad)
        {
            return Err(LcrError::divergence(format!(
                "parameter overflow after epoch {epoch} at gamma={gamma}"
            )));
        }
        Ok(())
    }
}

/// Initialize on the dataset mean and train on its ratings; the standalone
/// baseline path. Init and shuffle both derive from `hyper.seed`.
pub fn fit(ds: &RatingDataset, hyper: &Hyperparams) -> Result<BmfModel> {
    let targets = TargetSet::from_dataset(ds);
    let mut model = BmfModel::init(ds.n_users(), ds.n_items(), ds.global_mean(), hyper, hyper.seed)?;
    model.train(&targets, hyper, hyper.seed)?;
    Ok(model)
}
