//! Seeded synthetic rating data.
//!
//! Generates MovieLens-shaped datasets: log-normal user activity and item
//! popularity, per-user and per-item bias offsets, a weak low-rank latent
//! score, heavy-tailed Gaussian noise, rounded to the integer rating scale.
//! The presets put most of the predictable signal into the biases and keep
//! a long tail of sparsely rated items, which is the regime rating data
//! actually lives in: per-entity estimates stay noisy, and extra factor
//! capacity chases noise as readily as structure.
//!
//! Everything is driven by one seed; the same config always yields the same
//! records.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::{build_dataset, RatingDataset, RatingRecord, Scale};
use crate::error::{LcrError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    /// Every user rates at least this many items.
    pub min_degree: usize,
    /// Sigma of the log-normal user activity / item popularity weights.
    pub activity_sd: f64,
    pub popularity_sd: f64,
    /// Rank of the ground-truth latent score.
    pub latent_dims: usize,
    /// Geometric decay of the latent spectrum (dimension j scaled decay^j).
    pub latent_decay: f64,
    /// Standard deviation of the total latent contribution.
    pub latent_sd: f64,
    pub bias_sd: f64,
    pub noise_sd: f64,
    /// Fraction of ratings drawn with inflated noise. Observed rating noise
    /// is heavy-tailed; a purely Gaussian tail makes every method look alike.
    pub outlier_frac: f64,
    /// Noise multiplier applied to that fraction.
    pub outlier_scale: f64,
    /// Center of the pre-rounding score distribution.
    pub mean: f64,
    pub scale: Scale,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 {
            return Err(LcrError::data("need at least one user and item"));
        }
        if self.min_degree == 0 || self.min_degree > self.items {
            return Err(LcrError::data("min_degree must be in 1..=items"));
        }
        if self.ratings < self.users * self.min_degree {
            return Err(LcrError::data(format!(
                "{} ratings cannot give {} users {} each",
                self.ratings, self.users, self.min_degree
            )));
        }
        if self.ratings > self.users * self.items {
            return Err(LcrError::data("more ratings than user-item pairs"));
        }
        if self.latent_dims == 0 || !(0.0..=1.0).contains(&self.latent_decay) {
            return Err(LcrError::data("invalid latent spectrum"));
        }
        if !(0.0..1.0).contains(&self.outlier_frac) || self.outlier_scale < 1.0 {
            return Err(LcrError::data("invalid noise tail"));
        }
        Ok(())
    }
}

/// Shape and skew in the neighborhood of the 943 x 1682 / 100k benchmark.
pub fn ml100k_like(seed: u64) -> SynthConfig {
    SynthConfig {
        users: 943,
        items: 1682,
        ratings: 100_000,
        min_degree: 20,
        activity_sd: 0.9,
        popularity_sd: 1.6,
        latent_dims: 6,
        latent_decay: 1.0,
        latent_sd: 0.12,
        bias_sd: 0.8,
        noise_sd: 0.85,
        outlier_frac: 0.1,
        outlier_scale: 2.5,
        mean: 3.6,
        scale: Scale::default(),
        seed,
    }
}

/// Shape and skew in the neighborhood of the 6040 x 3706 / 1M benchmark.
pub fn ml1m_like(seed: u64) -> SynthConfig {
    SynthConfig {
        users: 6040,
        items: 3706,
        ratings: 1_000_209,
        min_degree: 20,
        activity_sd: 0.9,
        popularity_sd: 1.6,
        latent_dims: 6,
        latent_decay: 1.0,
        latent_sd: 0.12,
        bias_sd: 0.8,
        noise_sd: 0.85,
        outlier_frac: 0.1,
        outlier_scale: 2.5,
        mean: 3.6,
        scale: Scale::default(),
        seed,
    }
}

/// Integer user degrees proportional to the weights, each at least
/// `min_degree`, at most `cap`, summing exactly to `total`.
fn apportion(weights: &[f64], total: usize, min_degree: usize, cap: usize) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    let mut degrees: Vec<usize> = weights
        .iter()
        .map(|w| ((w / wsum) * total as f64).round() as usize)
        .map(|d| d.clamp(min_degree, cap))
        .collect();
    // Nudge the largest adjustable entries until the sum is exact.
    let mut sum: usize = degrees.iter().sum();
    while sum != total {
        if sum < total {
            let idx = (0..degrees.len())
                .filter(|&i| degrees[i] < cap)
                .max_by(|&a, &b| weights[a].partial_cmp(&weights[b]).unwrap())
                .expect("total ratings exceed capacity");
            degrees[idx] += 1;
            sum += 1;
        } else {
            let idx = (0..degrees.len())
                .filter(|&i| degrees[i] > min_degree)
                .max_by(|&a, &b| degrees[a].cmp(&degrees[b]))
                .expect("total ratings below the minimum-degree floor");
            degrees[idx] -= 1;
            sum -= 1;
        }
    }
    degrees
}

/// Draw an index from the cumulative weight table.
fn pick(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let x = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

/// Generate plain rating records (suitable for writing to a file).
pub fn generate_records(cfg: &SynthConfig) -> Result<Vec<RatingRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let activity = LogNormal::new(0.0, cfg.activity_sd).unwrap();
    let popularity = LogNormal::new(0.0, cfg.popularity_sd).unwrap();

    let user_w: Vec<f64> = (0..cfg.users).map(|_| activity.sample(&mut rng)).collect();
    let item_w: Vec<f64> = (0..cfg.items).map(|_| popularity.sample(&mut rng)).collect();
    let user_bias: Vec<f64> = (0..cfg.users).map(|_| normal.sample(&mut rng) * cfg.bias_sd).collect();
    let item_bias: Vec<f64> = (0..cfg.items).map(|_| normal.sample(&mut rng) * cfg.bias_sd).collect();

    let d = cfg.latent_dims;
    let user_f: Vec<f64> = (0..cfg.users * d).map(|_| normal.sample(&mut rng)).collect();
    let item_f: Vec<f64> = (0..cfg.items * d).map(|_| normal.sample(&mut rng)).collect();
    // Spectrum gains normalized so the latent term's variance is latent_sd^2
    // regardless of dimension count or decay.
    let gains: Vec<f64> = (0..d).map(|j| cfg.latent_decay.powi(j as i32)).collect();
    let gain_norm: f64 = gains.iter().map(|g| g * g).sum::<f64>().sqrt();
    let gains: Vec<f64> = gains.iter().map(|g| g * cfg.latent_sd / gain_norm).collect();

    // Leave headroom so the densest users cannot exhaust the item pool.
    let cap = cfg.items.min((cfg.items as f64 * 0.8).ceil() as usize).max(cfg.min_degree);
    let degrees = apportion(&user_w, cfg.ratings, cfg.min_degree, cap);

    let mut cum = Vec::with_capacity(cfg.items);
    let mut acc = 0.0;
    for w in &item_w {
        acc += w;
        cum.push(acc);
    }

    let mut records = Vec::with_capacity(cfg.ratings);
    let mut chosen = HashSet::new();
    for (u, &deg) in degrees.iter().enumerate() {
        chosen.clear();
        let mut fallback = 0usize;
        while chosen.len() < deg {
            // Weighted draws with rejection; a deterministic linear fill
            // takes over if a dense user keeps colliding.
            let i = pick(&cum, &mut rng);
            if !chosen.insert(i) {
                fallback += 1;
                if fallback > 20 * deg {
                    for j in 0..cfg.items {
                        if chosen.len() >= deg {
                            break;
                        }
                        chosen.insert(j);
                    }
                }
            }
        }
        let mut items: Vec<usize> = chosen.iter().copied().collect();
        items.sort_unstable();
        for i in items {
            let mut latent = 0.0;
            for (j, g) in gains.iter().enumerate() {
                latent += g * user_f[u * d + j] * item_f[i * d + j];
            }
            let mut noise_sd = cfg.noise_sd;
            if rng.random::<f64>() < cfg.outlier_frac {
                noise_sd *= cfg.outlier_scale;
            }
            let score = cfg.mean + user_bias[u] + item_bias[i] + latent + normal.sample(&mut rng) * noise_sd;
            let rating = cfg.scale.clamp(score.round());
            records.push(RatingRecord {
                user: (u + 1).to_string(),
                item: (i + 1).to_string(),
                rating,
                timestamp: None,
            });
        }
    }
    Ok(records)
}

/// Generate and index in one step.
pub fn generate(cfg: &SynthConfig) -> Result<RatingDataset> {
    build_dataset(&generate_records(cfg)?, cfg.scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            users: 40,
            items: 60,
            ratings: 800,
            min_degree: 5,
            ..ml100k_like(seed)
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_records(&small(7)).unwrap();
        let b = generate_records(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_records(&small(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_matches_config() {
        let cfg = small(3);
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.len(), cfg.ratings);
        assert_eq!(ds.n_users(), cfg.users);
        let stats = ds.user_degree_stats();
        assert!(stats.degrees.iter().all(|&d| d as usize >= cfg.min_degree));
    }

    #[test]
    fn ratings_are_integers_on_scale() {
        let ds = generate(&small(11)).unwrap();
        let mut seen = HashMap::new();
        for &(_, _, r) in ds.triples() {
            assert!(ds.scale().contains(r));
            assert_eq!(r, r.round());
            *seen.entry(r as i64).or_insert(0usize) += 1;
        }
        // A sane generator produces every rating level.
        for v in 1..=5 {
            assert!(seen.contains_key(&v), "rating {v} never generated");
        }
        let mean = ds.global_mean();
        assert!((3.0..4.2).contains(&mean), "mean {mean} out of range");
    }

    #[test]
    fn degrees_are_skewed() {
        let ds = generate(&small(5)).unwrap();
        let stats = ds.user_degree_stats();
        let max = *stats.degrees.iter().max().unwrap();
        let min = *stats.degrees.iter().min().unwrap();
        assert!(max >= 3 * min, "activity skew missing: {min}..{max}");
    }

    #[test]
    fn apportion_hits_exact_total() {
        let w = vec![5.0, 1.0, 1.0, 0.5];
        let d = apportion(&w, 100, 5, 80);
        assert_eq!(d.iter().sum::<usize>(), 100);
        assert!(d.iter().all(|&x| (5..=80).contains(&x)));
        assert!(d[0] > d[3]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small(1);
        cfg.ratings = cfg.users * cfg.items + 1;
        assert!(cfg.validate().is_err());
        let mut cfg = small(1);
        cfg.min_degree = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(1);
        cfg.ratings = 10;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn preset_dimensions() {
        let a = ml100k_like(0);
        assert_eq!((a.users, a.items, a.ratings), (943, 1682, 100_000));
        let b = ml1m_like(0);
        assert_eq!((b.users, b.items, b.ratings), (6040, 3706, 1_000_209));
    }
}
