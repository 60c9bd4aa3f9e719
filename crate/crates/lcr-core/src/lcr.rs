//! Latent-component decomposition of ratings.
//!
//! Each observed rating r is treated as a sum of c hidden component
//! ratings. Phase 1 trains c biased-MF models simultaneously: on every
//! visit of a rating, each model alpha is nudged toward `w_alpha * r`,
//! where the weights
//!
//! ```text
//! w_alpha = exp(-|r - rhat_alpha|) / sum_beta exp(-|r - rhat_beta|)
//! ```
//!
//! are a softmax over the (negated) absolute errors of the models'
//! predictions from the previous visit. After the models are updated the
//! predictions are recomputed, the weights are re-evaluated and added to a
//! per-rating accumulator. Phase 2 normalizes the accumulated weights into
//! per-rating component shares `rbar_alpha = wbar_alpha * r` (which sum
//! back to r exactly) and continues training each model on its own share,
//! never re-initializing. The final prediction is the sum of the component
//! predictions; only that sum is ever clamped.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bmf::{BmfModel, Hyperparams, TargetSet};
use crate::dataset::{RatingDataset, Scale};
use crate::error::{LcrError, Result};

/// Settings for the two-phase component training.
#[derive(Debug, Clone, PartialEq)]
pub struct LcrConfig {
    /// Number of latent components c (>= 2).
    pub components: usize,
    /// Per-component SGD settings; `base.epochs` is the phase-1 epoch count.
    pub base: Hyperparams,
    /// Phase-2 epoch count; 0 skips retraining entirely.
    pub retrain_epochs: usize,
    /// Master seed. Component inits use `seed ^ (alpha + 1)`, the phase-1
    /// visit order uses `seed` itself, phase 2 uses one derived shuffle seed
    /// shared by all components.
    pub seed: u64,
    /// Worker threads for phase 2 (components retrain independently).
    pub threads: usize,
}

impl LcrConfig {
    pub fn new(components: usize, base: Hyperparams) -> LcrConfig {
        LcrConfig {
            components,
            seed: base.seed,
            retrain_epochs: base.epochs,
            base,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components < 2 {
            return Err(LcrError::data(format!(
                "need at least 2 components, got {}",
                self.components
            )));
        }
        if self.threads == 0 {
            return Err(LcrError::data("threads must be >= 1"));
        }
        self.base.validate()
    }
}

impl Default for LcrConfig {
    fn default() -> Self {
        LcrConfig::new(5, Hyperparams::default())
    }
}

fn phase2_shuffle_seed(seed: u64) -> u64 {
    // One seed for every component: identically initialized components with
    // identical targets must stay identical through retraining.
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15)
}

/// Per-rating weight bookkeeping for phase 1, laid out as l x c row-major
/// tables.
#[derive(Debug, Clone)]
pub struct WeightTable {
    components: usize,
    /// Number of completed phase-1 epochs; every rating is visited exactly
    /// once per epoch, so this is the accumulation count p for each rating.
    visits: u32,
    /// Sum of the post-update weights over all visits.
    accum: Vec<f64>,
    /// Predictions stored by the latest visit (fresh-init predictions before
    /// the first).
    last_pred: Vec<f64>,
    /// Weights derived from `last_pred`; cached so the next visit's update
    /// step can reuse them instead of re-evaluating the softmax.
    last_w: Vec<f64>,
}

impl WeightTable {
    fn new(len: usize, components: usize) -> WeightTable {
        WeightTable {
            components,
            visits: 0,
            accum: vec![0.0; len * components],
            last_pred: vec![0.0; len * components],
            last_w: vec![0.0; len * components],
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Ratings covered by the table.
    pub fn len(&self) -> usize {
        self.accum.len() / self.components
    }

    pub fn is_empty(&self) -> bool {
        self.accum.is_empty()
    }

    /// Accumulation count p (phase-1 epochs completed).
    pub fn visits(&self) -> u32 {
        self.visits
    }

    pub fn accum_row(&self, t: usize) -> &[f64] {
        &self.accum[t * self.components..(t + 1) * self.components]
    }

    pub fn last_pred_row(&self, t: usize) -> &[f64] {
        &self.last_pred[t * self.components..(t + 1) * self.components]
    }

    pub fn last_weights_row(&self, t: usize) -> &[f64] {
        &self.last_w[t * self.components..(t + 1) * self.components]
    }
}

/// Per-rating component weights: softmax of negative absolute errors.
pub fn instance_weights(rating: f64, preds: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; preds.len()];
    instance_weights_into(rating, preds, &mut out);
    out
}

/// In-place variant for hot loops.
///
/// Shifting every exponent by the smallest error leaves the values
/// mathematically unchanged while pinning the largest term at exp(0) = 1,
/// so the denominator can never underflow for finite inputs.
pub fn instance_weights_into(rating: f64, preds: &[f64], out: &mut [f64]) {
    assert!(!preds.is_empty(), "need at least one prediction");
    assert_eq!(preds.len(), out.len());
    let mut e_min = f64::INFINITY;
    for (o, &p) in out.iter_mut().zip(preds) {
        let e = (rating - p).abs();
        *o = e;
        if e < e_min {
            e_min = e;
        }
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (e_min - *o).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Weight trajectories recorded during phase 1 (one entry per epoch).
#[derive(Debug, Clone)]
pub struct WeightTrace {
    pub components: usize,
    /// Rating indices whose weights are tracked individually.
    pub sample_indices: Vec<u32>,
    /// `[epoch][s * c + alpha]`: the weight accumulated for sampled rating s
    /// in that epoch.
    pub sample_weights: Vec<Vec<f64>>,
    /// `[epoch][alpha]`: mean accumulated weight over all ratings.
    pub mean_weights: Vec<Vec<f64>>,
}

/// Phase 1 with models seeded from the config: component alpha starts from
/// `seed ^ (alpha + 1)` with its mean set to `global_mean / c`.
pub fn decompose(train: &RatingDataset, config: &LcrConfig) -> Result<(Vec<BmfModel>, WeightTable)> {
    let (models, table, _) = decompose_traced(train, config, &[])?;
    Ok((models, table))
}

/// [`decompose`] that additionally records per-epoch weight trajectories for
/// the given rating indices.
pub fn decompose_traced(
    train: &RatingDataset,
    config: &LcrConfig,
    sample_indices: &[u32],
) -> Result<(Vec<BmfModel>, WeightTable, WeightTrace)> {
    config.validate()?;
    let mu0 = train.global_mean() / config.components as f64;
    let mut models = Vec::with_capacity(config.components);
    for alpha in 0..config.components {
        models.push(BmfModel::init(
            train.n_users(),
            train.n_items(),
            mu0,
            &config.base,
            config.seed ^ (alpha as u64 + 1),
        )?);
    }
    let (table, trace) = run_phase1(&mut models, train, config, sample_indices)?;
    Ok((models, table, trace))
}

/// Phase 1 over caller-supplied models (e.g. deliberately identical ones in
/// symmetry tests). Models must match the dataset's dimensions.
pub fn decompose_from_models(
    mut models: Vec<BmfModel>,
    train: &RatingDataset,
    config: &LcrConfig,
) -> Result<(Vec<BmfModel>, WeightTable)> {
    config.validate()?;
    if models.len() != config.components {
        return Err(LcrError::data(format!(
            "{} models supplied for {} components",
            models.len(),
            config.components
        )));
    }
    let (table, _) = run_phase1(&mut models, train, config, &[])?;
    Ok((models, table))
}

fn run_phase1(
    models: &mut [BmfModel],
    train: &RatingDataset,
    config: &LcrConfig,
    sample_indices: &[u32],
) -> Result<(WeightTable, WeightTrace)> {
    let c = models.len();
    let l = train.len();
    if l == 0 {
        return Err(LcrError::data("empty training set"));
    }
    for m in models.iter() {
        if m.n_users() != train.n_users() || m.n_items() != train.n_items() {
            return Err(LcrError::data("model dimensions do not match the training set"));
        }
    }
    for &t in sample_indices {
        if t as usize >= l {
            return Err(LcrError::data(format!("trace index {t} out of range")));
        }
    }
    let triples = train.triples();
    let mut wt = WeightTable::new(l, c);
    // First-visit weights come from the freshly initialized models, before
    // any update has touched them.
    for (t, &(u, i, r)) in triples.iter().enumerate() {
        let base = t * c;
        for (a, m) in models.iter().enumerate() {
            wt.last_pred[base + a] = m.predict(u, i);
        }
        instance_weights_into(r, &wt.last_pred[base..base + c], &mut wt.last_w[base..base + c]);
    }
    let mut trace = WeightTrace {
        components: c,
        sample_indices: sample_indices.to_vec(),
        sample_weights: Vec::new(),
        mean_weights: Vec::new(),
    };
    let tracing = !sample_indices.is_empty();
    let mut prev_col_sums = vec![0.0f64; c];
    let gamma = config.base.gamma;
    let lambda = config.base.lambda;
    let mut order: Vec<u32> = (0..l as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.base.epochs {
        order.shuffle(&mut rng);
        for &t in &order {
            let t = t as usize;
            let (u, i, r) = triples[t];
            let base = t * c;
            for (a, model) in models.iter_mut().enumerate() {
                let w = wt.last_w[base + a];
                model.sgd_update(u, i, w * r, gamma, lambda).map_err(|e| {
                    LcrError::divergence(format!("component {a}, epoch {epoch}: {e}"))
                })?;
            }
            for (a, model) in models.iter().enumerate() {
                wt.last_pred[base + a] = model.predict(u, i);
            }
            instance_weights_into(r, &wt.last_pred[base..base + c], &mut wt.last_w[base..base + c]);
            for a in 0..c {
                wt.accum[base + a] += wt.last_w[base + a];
            }
        }
        wt.visits += 1;
        for (a, model) in models.iter().enumerate() {
            model
                .check_finite(epoch, gamma)
                .map_err(|e| LcrError::divergence(format!("component {a}: {e}")))?;
        }
        if tracing {
            let mut row = Vec::with_capacity(sample_indices.len() * c);
            for &t in sample_indices {
                row.extend_from_slice(&wt.last_w[t as usize * c..t as usize * c + c]);
            }
            trace.sample_weights.push(row);
            let mut col_sums = vec![0.0f64; c];
            for t in 0..l {
                for a in 0..c {
                    col_sums[a] += wt.accum[t * c + a];
                }
            }
            let mean: Vec<f64> = col_sums
                .iter()
                .zip(&prev_col_sums)
                .map(|(s, p)| (s - p) / l as f64)
                .collect();
            prev_col_sums = col_sums;
            trace.mean_weights.push(mean);
        }
    }
    Ok((wt, trace))
}

/// Normalized weights and (after [`component_targets`]) per-component target
/// ratings, both l x c row-major.
#[derive(Debug, Clone)]
pub struct ComponentRatings {
    components: usize,
    weights: Vec<f64>,
    targets: Vec<f64>,
}

impl ComponentRatings {
    /// Build directly from per-rating weight rows (each must sum to ~1);
    /// mainly for tooling and tests. Training flows use [`normalize_weights`].
    pub fn from_weights(weights: Vec<f64>, components: usize) -> Result<ComponentRatings> {
        if components < 2 || weights.len() % components != 0 {
            return Err(LcrError::data("weight table shape mismatch"));
        }
        for (t, row) in weights.chunks(components).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(LcrError::data(format!("weight row {t} does not form a distribution")));
            }
        }
        Ok(ComponentRatings {
            components,
            targets: Vec::new(),
            weights,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.weights.len() / self.components
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights_row(&self, t: usize) -> &[f64] {
        &self.weights[t * self.components..(t + 1) * self.components]
    }

    /// Component target rows; empty until [`component_targets`] runs.
    pub fn targets_row(&self, t: usize) -> &[f64] {
        &self.targets[t * self.components..(t + 1) * self.components]
    }

    pub fn has_targets(&self) -> bool {
        !self.targets.is_empty()
    }
}

/// Divide each rating's accumulated weights by their sum.
pub fn normalize_weights(table: &WeightTable) -> Result<ComponentRatings> {
    let c = table.components();
    let mut weights = vec![0.0; table.accum.len()];
    for t in 0..table.len() {
        let row = table.accum_row(t);
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(LcrError::data(format!(
                "rating {t}: accumulated weights sum to {sum}, cannot normalize"
            )));
        }
        for a in 0..c {
            weights[t * c + a] = row[a] / sum;
        }
    }
    Ok(ComponentRatings {
        components: c,
        weights,
        targets: Vec::new(),
    })
}

/// Fill in the per-component target ratings `rbar = wbar * r`. By
/// construction each row sums back to the observed rating.
pub fn component_targets(train: &RatingDataset, cr: &mut ComponentRatings) {
    assert_eq!(train.len(), cr.len(), "component table must match the training set");
    let c = cr.components;
    let mut targets = vec![0.0; cr.weights.len()];
    for (t, &(_, _, r)) in train.triples().iter().enumerate() {
        for a in 0..c {
            targets[t * c + a] = cr.weights[t * c + a] * r;
        }
    }
    cr.targets = targets;
}

/// The trained ensemble: c biased-MF models whose predictions add up.
#[derive(Debug, Clone, PartialEq)]
pub struct LcrModel {
    pub components: Vec<BmfModel>,
    pub clamp_output: bool,
    pub scale: Scale,
}

impl LcrModel {
    /// Sum of component predictions, left to right, never clamped.
    pub fn predict_raw(&self, u: u32, i: u32) -> f64 {
        let mut p = 0.0;
        for m in &self.components {
            p += m.predict(u, i);
        }
        p
    }

    /// Final prediction; the sum (and only the sum) is clamped when
    /// configured. Components are free to run outside the scale.
    pub fn predict(&self, u: u32, i: u32) -> f64 {
        let p = self.predict_raw(u, i);
        if self.clamp_output {
            self.scale.clamp(p)
        } else {
            p
        }
    }

    pub fn predict_cold_raw(&self, u: Option<u32>, i: Option<u32>) -> f64 {
        let mut p = 0.0;
        for m in &self.components {
            p += m.predict_cold(u, i);
        }
        p
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

/// Phase 2: reset each component's mean to the mean of its own target share
/// and keep training it on that share. Models are never re-initialized;
/// `retrain_epochs = 0` leaves them untouched.
pub fn retrain(
    models: Vec<BmfModel>,
    cr: &ComponentRatings,
    train: &RatingDataset,
    config: &LcrConfig,
) -> Result<LcrModel> {
    config.validate()?;
    if models.len() != cr.components() {
        return Err(LcrError::data("model count does not match component count"));
    }
    if cr.len() != train.len() || !cr.has_targets() {
        return Err(LcrError::data("component targets missing or sized wrong"));
    }
    let mut models = models;
    if config.retrain_epochs == 0 {
        return Ok(LcrModel {
            components: models,
            clamp_output: config.base.clamp_output,
            scale: train.scale(),
        });
    }
    let hyper = Hyperparams {
        epochs: config.retrain_epochs,
        ..config.base.clone()
    };
    let shuffle_seed = phase2_shuffle_seed(config.seed);
    let c = models.len();
    let threads = config.threads.min(c).max(1);
    let retrain_one = |alpha: usize, model: &mut BmfModel| -> Result<()> {
        let entries: Vec<(u32, u32, f64)> = train
            .triples()
            .iter()
            .enumerate()
            .map(|(t, &(u, i, _))| (u, i, cr.targets[t * c + alpha]))
            .collect();
        let targets = TargetSet::new(entries, train.n_users(), train.n_items())?;
        model.mu = targets.mean();
        model
            .train(&targets, &hyper, shuffle_seed)
            .map_err(|e| LcrError::divergence(format!("component {alpha}: {e}")))
    };
    if threads == 1 {
        for (alpha, model) in models.iter_mut().enumerate() {
            retrain_one(alpha, model)?;
        }
    } else {
        let chunk = c.div_ceil(threads);
        let mut first_err = None;
        std::thread::scope(|s| {
            let mut handles = Vec::new();
            for (ci, block) in models.chunks_mut(chunk).enumerate() {
                let retrain_one = &retrain_one;
                handles.push(s.spawn(move || -> Result<()> {
                    for (off, model) in block.iter_mut().enumerate() {
                        retrain_one(ci * chunk + off, model)?;
                    }
                    Ok(())
                }));
            }
            for h in handles {
                if let Err(e) = h.join().expect("retrain worker panicked") {
                    first_err.get_or_insert(e);
                }
            }
        });
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    Ok(LcrModel {
        components: models,
        clamp_output: config.base.clamp_output,
        scale: train.scale(),
    })
}

/// The full pipeline: decompose, normalize, form targets, retrain.
pub fn train_lcr(train: &RatingDataset, config: &LcrConfig) -> Result<LcrModel> {
    let (models, table) = decompose(train, config)?;
    let mut cr = normalize_weights(&table)?;
    component_targets(train, &mut cr);
    retrain(models, &cr, train, config)
}

/// Write the decomposition as TSV: `user item rating w_1..w_c r_1..r_c`,
/// reals with six decimal places.
pub fn dump_decomposition<W: Write>(train: &RatingDataset, cr: &ComponentRatings, out: &mut W) -> Result<()> {
    if cr.len() != train.len() || !cr.has_targets() {
        return Err(LcrError::data("component targets missing or sized wrong"));
    }
    let c = cr.components();
    write!(out, "user\titem\trating")?;
    for a in 1..=c {
        write!(out, "\tw_{a}")?;
    }
    for a in 1..=c {
        write!(out, "\tr_{a}")?;
    }
    writeln!(out)?;
    for (t, &(u, i, r)) in train.triples().iter().enumerate() {
        write!(out, "{}\t{}\t{:.6}", train.user_id(u), train.item_id(i), r)?;
        for &w in cr.weights_row(t) {
            write!(out, "\t{w:.6}")?;
        }
        for &v in cr.targets_row(t) {
            write!(out, "\t{v:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, RatingRecord};
    use proptest::prelude::*;

    fn rec(u: &str, i: &str, r: f64) -> RatingRecord {
        RatingRecord {
            user: u.into(),
            item: i.into(),
            rating: r,
            timestamp: None,
        }
    }

    fn tiny_dataset() -> RatingDataset {
        build_dataset(
            &[rec("u0", "i0", 4.0), rec("u0", "i1", 2.0), rec("u1", "i0", 5.0)],
            Scale::default(),
        )
        .unwrap()
    }

    fn small_config(c: usize, epochs: usize, seed: u64) -> LcrConfig {
        let mut cfg = LcrConfig::new(
            c,
            Hyperparams {
                factors: 3,
                epochs,
                seed,
                ..Hyperparams::default()
            },
        );
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn weights_uniform_for_equal_predictions() {
        let w = instance_weights(3.0, &[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(w, vec![0.25; 4]);
    }

    #[test]
    fn weights_match_worked_example() {
        let w = instance_weights(4.0, &[3.0, 4.0, 5.0]);
        assert!((w[0] - 0.2119).abs() < 1e-4, "{w:?}");
        assert!((w[1] - 0.5761).abs() < 1e-4);
        assert!((w[2] - 0.2119).abs() < 1e-4);
        assert!((w[0] - w[2]).abs() < 1e-15);
    }

    #[test]
    fn weights_follow_permutation() {
        let w = instance_weights(2.5, &[1.0, 2.0, 4.0]);
        let p = instance_weights(2.5, &[4.0, 1.0, 2.0]);
        assert!((w[0] - p[1]).abs() < 1e-15);
        assert!((w[1] - p[2]).abs() < 1e-15);
        assert!((w[2] - p[0]).abs() < 1e-15);
    }

    #[test]
    fn weights_survive_extreme_errors() {
        let w = instance_weights(1.0, &[1e5, -1e5, 1.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[2] > 0.999);
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(r in 0.0f64..6.0, preds in proptest::collection::vec(-10.0f64..10.0, 2..8)) {
            let w = instance_weights(r, &preds);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
            // Smaller error must never get a smaller weight.
            for a in 0..preds.len() {
                for b in 0..preds.len() {
                    let (ea, eb) = ((r - preds[a]).abs(), (r - preds[b]).abs());
                    if ea < eb {
                        prop_assert!(w[a] >= w[b]);
                    }
                }
            }
        }

        #[test]
        fn normalization_ignores_accumulator_scale(
            rows in proptest::collection::vec(proptest::collection::vec(0.01f64..5.0, 3), 1..10),
            factor in 0.1f64..50.0,
        ) {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let scaled: Vec<f64> = flat.iter().map(|v| v * factor).collect();
            let base = WeightTable { components: 3, visits: 1, last_pred: vec![0.0; flat.len()], last_w: vec![0.0; flat.len()], accum: flat };
            let boosted = WeightTable { components: 3, visits: 1, last_pred: vec![0.0; scaled.len()], last_w: vec![0.0; scaled.len()], accum: scaled };
            let a = normalize_weights(&base).unwrap();
            let b = normalize_weights(&boosted).unwrap();
            for t in 0..a.len() {
                for (x, y) in a.weights_row(t).iter().zip(b.weights_row(t)) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identical_components_split_evenly() {
        let ds = tiny_dataset();
        let cfg = small_config(2, 4, 9);
        let shared = BmfModel::init(ds.n_users(), ds.n_items(), ds.global_mean() / 2.0, &cfg.base, 123).unwrap();
        let (models, table) = decompose_from_models(vec![shared.clone(), shared], &ds, &cfg).unwrap();
        assert_eq!(models[0], models[1]);
        assert_eq!(table.visits(), 4);
        for t in 0..ds.len() {
            let row = table.accum_row(t);
            assert_eq!(row[0], row[1]);
            assert_eq!(row[0], f64::from(table.visits()) * 0.5);
            assert_eq!(table.last_weights_row(t), &[0.5, 0.5]);
        }
    }

    /// Independent replay of phase 1: its own predict/update arithmetic over
    /// plain vectors, sharing only the shuffle primitive for the visit order.
    #[test]
    fn phase1_matches_reference_replay() {
        let ds = tiny_dataset();
        let c = 2;
        let epochs = 2;
        let cfg = small_config(c, epochs, 42);
        let init: Vec<BmfModel> = (0..c)
            .map(|a| {
                BmfModel::init(
                    ds.n_users(),
                    ds.n_items(),
                    ds.global_mean() / c as f64,
                    &cfg.base,
                    cfg.seed ^ (a as u64 + 1),
                )
                .unwrap()
            })
            .collect();

        // Reference state: copies of the initial parameters.
        let k = cfg.base.factors;
        let mut mu: Vec<f64> = init.iter().map(|m| m.mu).collect();
        let mut bu: Vec<Vec<f64>> = init.iter().map(|m| m.user_bias.clone()).collect();
        let mut bi: Vec<Vec<f64>> = init.iter().map(|m| m.item_bias.clone()).collect();
        let mut xs: Vec<Vec<f64>> = init.iter().map(|m| m.user_factors.clone()).collect();
        let mut ys: Vec<Vec<f64>> = init.iter().map(|m| m.item_factors.clone()).collect();
        let pred = |a: usize, u: usize, i: usize, mu: &[f64], bu: &[Vec<f64>], bi: &[Vec<f64>], xs: &[Vec<f64>], ys: &[Vec<f64>]| {
            let mut d = 0.0;
            for f in 0..k {
                d += xs[a][u * k + f] * ys[a][i * k + f];
            }
            mu[a] + bi[a][i] + bu[a][u] + d
        };
        let eq7 = |r: f64, p: &[f64]| -> Vec<f64> {
            let exps: Vec<f64> = p.iter().map(|&q| (-(r - q).abs()).exp()).collect();
            let s: f64 = exps.iter().sum();
            exps.iter().map(|e| e / s).collect()
        };
        let l = ds.len();
        let mut last_pred = vec![vec![0.0; c]; l];
        let mut accum = vec![vec![0.0; c]; l];
        for (t, &(u, i, _)) in ds.triples().iter().enumerate() {
            for a in 0..c {
                last_pred[t][a] = pred(a, u as usize, i as usize, &mu, &bu, &bi, &xs, &ys);
            }
        }
        let mut order: Vec<u32> = (0..l as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (g, lam) = (cfg.base.gamma, cfg.base.lambda);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &t in &order {
                let t = t as usize;
                let (u, i, r) = ds.triples()[t];
                let (u, i) = (u as usize, i as usize);
                let w = eq7(r, &last_pred[t]);
                for a in 0..c {
                    let e = w[a] * r - pred(a, u, i, &mu, &bu, &bi, &xs, &ys);
                    let (b1, b2) = (bu[a][u], bi[a][i]);
                    bu[a][u] = b1 + g * (e - lam * b1);
                    bi[a][i] = b2 + g * (e - lam * b2);
                    for f in 0..k {
                        let x_old = xs[a][u * k + f];
                        xs[a][u * k + f] = x_old + g * (e * ys[a][i * k + f] - lam * x_old);
                        ys[a][i * k + f] += g * (e * x_old - lam * ys[a][i * k + f]);
                    }
                }
                for a in 0..c {
                    last_pred[t][a] = pred(a, u, i, &mu, &bu, &bi, &xs, &ys);
                }
                let w2 = eq7(r, &last_pred[t]);
                for a in 0..c {
                    accum[t][a] += w2[a];
                }
            }
        }
        let _ = &mut mu;

        let (models, table) = decompose_from_models(init, &ds, &cfg).unwrap();
        for t in 0..l {
            for a in 0..c {
                assert!(
                    (table.accum_row(t)[a] - accum[t][a]).abs() < 1e-9,
                    "accum[{t}][{a}]: {} vs {}",
                    table.accum_row(t)[a],
                    accum[t][a]
                );
                assert!((table.last_pred_row(t)[a] - last_pred[t][a]).abs() < 1e-9);
            }
        }
        for a in 0..c {
            for (got, want) in models[a].user_bias.iter().zip(&bu[a]) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn visit_count_tracks_epochs() {
        let ds = tiny_dataset();
        let (_, table) = decompose(&ds, &small_config(3, 5, 7)).unwrap();
        assert_eq!(table.visits(), 5);
    }

    #[test]
    fn per_visit_weights_sum_to_one() {
        let ds = tiny_dataset();
        let (_, table) = decompose(&ds, &small_config(3, 6, 11)).unwrap();
        for t in 0..ds.len() {
            let total: f64 = table.accum_row(t).iter().sum();
            assert!((total - f64::from(table.visits())).abs() < 1e-9);
            let last: f64 = table.last_weights_row(t).iter().sum();
            assert!((last - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_small_rows() {
        let table = WeightTable {
            components: 3,
            visits: 1,
            accum: vec![2.0, 3.0, 5.0],
            last_pred: vec![0.0; 3],
            last_w: vec![0.0; 3],
        };
        let cr = normalize_weights(&table).unwrap();
        let row = cr.weights_row(0);
        assert!((row[0] - 0.2).abs() < 1e-15);
        assert!((row[1] - 0.3).abs() < 1e-15);
        assert!((row[2] - 0.5).abs() < 1e-15);

        let even = WeightTable {
            components: 2,
            visits: 1,
            accum: vec![4.0, 4.0],
            last_pred: vec![0.0; 2],
            last_w: vec![0.0; 2],
        };
        assert_eq!(normalize_weights(&even).unwrap().weights_row(0), &[0.5, 0.5]);
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let table = WeightTable {
            components: 2,
            visits: 1,
            accum: vec![0.0, 0.0],
            last_pred: vec![0.0; 2],
            last_w: vec![0.0; 2],
        };
        assert!(normalize_weights(&table).is_err());
    }

    #[test]
    fn targets_scale_weights_by_rating() {
        let ds = build_dataset(&[rec("u", "i", 5.0)], Scale::default()).unwrap();
        let mut cr = ComponentRatings::from_weights(vec![0.06, 0.08, 0.24, 0.2, 0.42], 5).unwrap();
        component_targets(&ds, &mut cr);
        let want = [0.3, 0.4, 1.2, 1.0, 2.1];
        for (got, want) in cr.targets_row(0).iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let total: f64 = cr.targets_row(0).iter().sum();
        assert!((total - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rating_gives_zero_targets() {
        let ds = build_dataset(&[rec("u", "i", 0.0)], Scale { min: 0.0, max: 5.0 }).unwrap();
        let mut cr = ComponentRatings::from_weights(vec![0.25; 4], 4).unwrap();
        component_targets(&ds, &mut cr);
        assert_eq!(cr.targets_row(0), &[0.0; 4]);
    }

    #[test]
    fn uniform_weights_split_rating_evenly() {
        let ds = build_dataset(&[rec("u", "i", 4.0)], Scale::default()).unwrap();
        let mut cr = ComponentRatings::from_weights(vec![0.25; 4], 4).unwrap();
        component_targets(&ds, &mut cr);
        for &v in cr.targets_row(0) {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn retrain_zero_epochs_is_identity() {
        let ds = tiny_dataset();
        let mut cfg = small_config(2, 3, 5);
        let (models, table) = decompose(&ds, &cfg).unwrap();
        let mut cr = normalize_weights(&table).unwrap();
        component_targets(&ds, &mut cr);
        cfg.retrain_epochs = 0;
        let lcr = retrain(models.clone(), &cr, &ds, &cfg).unwrap();
        assert_eq!(lcr.components, models);
    }

    #[test]
    fn retrain_keeps_identical_components_identical() {
        let ds = tiny_dataset();
        let cfg = small_config(2, 3, 5);
        let shared = BmfModel::init(ds.n_users(), ds.n_items(), ds.global_mean() / 2.0, &cfg.base, 77).unwrap();
        let (models, table) = decompose_from_models(vec![shared.clone(), shared], &ds, &cfg).unwrap();
        let mut cr = normalize_weights(&table).unwrap();
        component_targets(&ds, &mut cr);
        let lcr = retrain(models, &cr, &ds, &cfg).unwrap();
        assert_eq!(lcr.components[0], lcr.components[1]);
    }

    #[test]
    fn retrain_fits_component_share_better() {
        let mut recs = Vec::new();
        for u in 0..12 {
            for i in 0..15 {
                if (u * 31 + i * 17) % 3 != 0 {
                    recs.push(rec(&format!("u{u}"), &format!("i{i}"), 1.0 + ((u * 5 + i * 3) % 5) as f64));
                }
            }
        }
        let ds = build_dataset(&recs, Scale::default()).unwrap();
        let cfg = small_config(3, 8, 21);
        let (models, table) = decompose(&ds, &cfg).unwrap();
        let mut cr = normalize_weights(&table).unwrap();
        component_targets(&ds, &mut cr);
        let rmse_on_share = |m: &BmfModel, a: usize| {
            let se: f64 = ds
                .triples()
                .iter()
                .enumerate()
                .map(|(t, &(u, i, _))| (cr.targets_row(t)[a] - m.predict(u, i)).powi(2))
                .sum();
            (se / ds.len() as f64).sqrt()
        };
        let before: Vec<f64> = models.iter().enumerate().map(|(a, m)| rmse_on_share(m, a)).collect();
        let lcr = retrain(models, &cr, &ds, &cfg).unwrap();
        for (a, m) in lcr.components.iter().enumerate() {
            let after = rmse_on_share(m, a);
            assert!(after < before[a] + 1e-12, "component {a}: {after} vs {}", before[a]);
        }
    }

    #[test]
    fn parallel_retrain_matches_sequential() {
        let ds = tiny_dataset();
        let mut cfg = small_config(4, 3, 13);
        let (models, table) = decompose(&ds, &cfg).unwrap();
        let mut cr = normalize_weights(&table).unwrap();
        component_targets(&ds, &mut cr);
        let seq = retrain(models.clone(), &cr, &ds, &cfg).unwrap();
        cfg.threads = 3;
        let par = retrain(models, &cr, &ds, &cfg).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn prediction_is_component_sum() {
        let zero = |mu: f64| BmfModel {
            mu,
            user_bias: vec![0.0],
            item_bias: vec![0.0],
            user_factors: vec![0.0, 0.0],
            item_factors: vec![0.0, 0.0],
            factors: 2,
            use_biases: true,
        };
        let lcr = LcrModel {
            components: vec![zero(1.0), zero(1.2), zero(1.5)],
            clamp_output: true,
            scale: Scale::default(),
        };
        assert!((lcr.predict(0, 0) - 3.7).abs() < 1e-12);
        let sum: f64 = lcr.components.iter().map(|m| m.predict(0, 0)).sum();
        assert_eq!(lcr.predict_raw(0, 0), sum);
    }

    #[test]
    fn only_the_sum_is_clamped() {
        let big = BmfModel {
            mu: 4.0,
            user_bias: vec![0.0],
            item_bias: vec![0.0],
            user_factors: vec![0.0],
            item_factors: vec![0.0],
            factors: 1,
            use_biases: true,
        };
        let mut lcr = LcrModel {
            components: vec![big.clone(), big],
            clamp_output: true,
            scale: Scale::default(),
        };
        assert_eq!(lcr.predict_raw(0, 0), 8.0);
        assert_eq!(lcr.predict(0, 0), 5.0);
        lcr.clamp_output = false;
        assert_eq!(lcr.predict(0, 0), 8.0);
    }

    #[test]
    fn cold_prediction_sums_component_fallbacks() {
        let ds = tiny_dataset();
        let lcr = train_lcr(&ds, &small_config(2, 3, 3)).unwrap();
        let want: f64 = lcr.components.iter().map(|m| m.predict_cold(Some(0), None)).sum();
        assert!((lcr.predict_cold_raw(Some(0), None) - want).abs() < 1e-15);
    }

    #[test]
    fn full_pipeline_is_deterministic() {
        let ds = tiny_dataset();
        let cfg = small_config(3, 4, 99);
        let a = train_lcr(&ds, &cfg).unwrap();
        let b = train_lcr(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_conserves_ratings() {
        let mut recs = Vec::new();
        for u in 0..10 {
            for i in 0..12 {
                if (u + i) % 2 == 0 {
                    recs.push(rec(&format!("u{u}"), &format!("i{i}"), 1.0 + ((u * 3 + i) % 5) as f64));
                }
            }
        }
        let ds = build_dataset(&recs, Scale::default()).unwrap();
        let cfg = small_config(4, 6, 17);
        let (_, table) = decompose(&ds, &cfg).unwrap();
        let mut cr = normalize_weights(&table).unwrap();
        component_targets(&ds, &mut cr);
        for (t, &(_, _, r)) in ds.triples().iter().enumerate() {
            let wsum: f64 = cr.weights_row(t).iter().sum();
            assert!((wsum - 1.0).abs() < 1e-9);
            let tsum: f64 = cr.targets_row(t).iter().sum();
            assert!((tsum - r).abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_names_component() {
        let ds = tiny_dataset();
        let mut cfg = small_config(2, 30, 1);
        cfg.base.gamma = 10.0;
        let err = train_lcr(&ds, &cfg).unwrap_err();
        assert!(matches!(err, LcrError::Divergence(_)));
        assert!(err.to_string().contains("component"), "{err}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = LcrConfig::default();
        cfg.components = 1;
        assert!(cfg.validate().is_err());
        cfg.components = 2;
        cfg.threads = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trace_records_every_epoch() {
        let ds = tiny_dataset();
        let cfg = small_config(3, 4, 23);
        let (_, _, trace) = decompose_traced(&ds, &cfg, &[0, 2]).unwrap();
        assert_eq!(trace.sample_weights.len(), 4);
        assert_eq!(trace.mean_weights.len(), 4);
        for epoch in &trace.sample_weights {
            assert_eq!(epoch.len(), 2 * 3);
            for row in epoch.chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for mean in &trace.mean_weights {
            assert!((mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dump_layout_and_conservation() {
        let ds = tiny_dataset();
        let cfg = small_config(2, 3, 31);
        let (_, table) = decompose(&ds, &cfg).unwrap();
        let mut cr = normalize_weights(&table).unwrap();
        component_targets(&ds, &mut cr);
        let mut buf = Vec::new();
        dump_decomposition(&ds, &cr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "user\titem\trating\tw_1\tw_2\tr_1\tr_2");
        let mut rows = 0;
        for line in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 3 + 2 * 2);
            let rating: f64 = cols[2].parse().unwrap();
            let r1: f64 = cols[5].parse().unwrap();
            let r2: f64 = cols[6].parse().unwrap();
            // Printed at six decimals, so conservation holds to ~1e-6.
            assert!((r1 + r2 - rating).abs() < 5e-6);
            assert!(cols[3].split('.').nth(1).unwrap().len() == 6);
            rows += 1;
        }
        assert_eq!(rows, ds.len());
    }

    #[test]
    fn fig_style_row_prints_expected_shares() {
        let ds = build_dataset(&[rec("7", "42", 5.0)], Scale::default()).unwrap();
        let mut cr = ComponentRatings::from_weights(vec![0.06, 0.08, 0.24, 0.2, 0.42], 5).unwrap();
        component_targets(&ds, &mut cr);
        let mut buf = Vec::new();
        dump_decomposition(&ds, &cr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(
            row,
            "7\t42\t5.000000\t0.060000\t0.080000\t0.240000\t0.200000\t0.420000\t0.300000\t0.400000\t1.200000\t1.000000\t2.100000"
        );
    }
}
