//! Rating data: file parsing, dense index construction, holdout splits and
//! degree statistics.
//!
//! External user/item identifiers are opaque strings; a dataset assigns them
//! dense indices in first-appearance order so model parameter tables can be
//! flat arrays. Mapping triples back through the index tables reproduces the
//! input exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LcrError, Result};

/// Inclusive rating bounds, e.g. 1..5 for MovieLens-style data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn new(min: f64, max: f64) -> Result<Scale> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(LcrError::data(format!(
                "invalid rating scale [{min}, {max}]"
            )));
        }
        Ok(Scale { min, max })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.min && r <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale { min: 1.0, max: 5.0 }
    }
}

/// One parsed rating event. The timestamp is kept for round-tripping but
/// nothing downstream reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Supported input layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Tab-separated `user item rating timestamp`.
    Ml100k,
    /// `user::item::rating::timestamp`.
    Ml1m,
    /// `user,item,rating[,timestamp]` with an optional header line.
    Csv,
}

impl Format {
    pub fn from_name(name: &str) -> Result<Format> {
        match name {
            "ml100k" => Ok(Format::Ml100k),
            "ml1m" => Ok(Format::Ml1m),
            "csv" => Ok(Format::Csv),
            other => Err(LcrError::data(format!(
                "unknown format {other:?} (expected ml100k, ml1m or csv)"
            ))),
        }
    }
}

/// Parse rating lines from `source`.
///
/// Lines beginning with `#` and blank lines are skipped. Every malformed
/// line (wrong field count, non-numeric rating, rating outside `scale`,
/// broken timestamp) fails with its 1-based line number. Empty input yields
/// an empty list, not an error.
pub fn parse_ratings<R: BufRead>(source: R, format: Format, scale: Scale) -> Result<Vec<RatingRecord>> {
    let mut records = Vec::new();
    let mut saw_data_line = false;
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            Format::Ml100k => line.split('\t').collect(),
            Format::Ml1m => line.split("::").collect(),
            Format::Csv => line.split(',').map(str::trim).collect(),
        };
        let arity_ok = match format {
            Format::Ml100k | Format::Ml1m => fields.len() == 4,
            Format::Csv => fields.len() == 3 || fields.len() == 4,
        };
        if !arity_ok {
            return Err(parse_err(lineno, format!("expected user/item/rating fields, got {} fields", fields.len())));
        }
        // A leading CSV header is allowed: first data line where no field
        // looks numeric. "1,2,abc" stays an error because its ids parse.
        if format == Format::Csv && !saw_data_line && fields[..3].iter().all(|f| f.parse::<f64>().is_err()) {
            saw_data_line = true;
            continue;
        }
        saw_data_line = true;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(lineno, "empty user or item id".into()));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("malformed rating {:?}", fields[2])))?;
        if !rating.is_finite() {
            return Err(parse_err(lineno, format!("non-finite rating {rating}")));
        }
        if !scale.contains(rating) {
            return Err(parse_err(
                lineno,
                format!("rating {rating} outside scale [{}, {}]", scale.min, scale.max),
            ));
        }
        let timestamp = match fields.get(3) {
            None => None,
            Some(t) if t.is_empty() => None,
            Some(t) => Some(
                t.parse::<i64>()
                    .map_err(|_| parse_err(lineno, format!("malformed timestamp {t:?}")))?,
            ),
        };
        records.push(RatingRecord {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(records)
}

fn parse_err(line: usize, msg: String) -> LcrError {
    LcrError::Parse { line, msg }
}

/// Parse a rating file and index it in one step.
pub fn load_ratings_path<P: AsRef<std::path::Path>>(
    path: P,
    format: Format,
    scale: Scale,
) -> Result<RatingDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    let records = parse_ratings(std::io::BufReader::new(file), format, scale)?;
    build_dataset(&records, scale)
}

/// A set of ratings with dense user/item indexing.
#[derive(Debug, Clone)]
pub struct RatingDataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
    triples: Vec<(u32, u32, f64)>,
    global_mean: f64,
    scale: Scale,
}

impl RatingDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of ratings.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Ratings as `(user index, item index, rating)`.
    pub fn triples(&self) -> &[(u32, u32, f64)] {
        &self.triples
    }

    pub fn user_id(&self, idx: u32) -> &str {
        &self.users[idx as usize]
    }

    pub fn item_id(&self, idx: u32) -> &str {
        &self.items[idx as usize]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn user_idx(&self, id: &str) -> Option<u32> {
        self.user_index.get(id).copied()
    }

    pub fn item_idx(&self, id: &str) -> Option<u32> {
        self.item_index.get(id).copied()
    }

    /// Reconstruct records in storage order (timestamps were not kept).
    pub fn records(&self) -> Vec<RatingRecord> {
        self.triples
            .iter()
            .map(|&(u, i, r)| RatingRecord {
                user: self.users[u as usize].clone(),
                item: self.items[i as usize].clone(),
                rating: r,
                timestamp: None,
            })
            .collect()
    }

    /// Split into train/probe by seeded uniform assignment.
    ///
    /// The train side gets `round(ratio * len)` ratings (at least 1, leaving
    /// at least 1 for probe). Both sides are compact datasets with their own
    /// dense indices; probe users or items that never occur on the train
    /// side are the cold-start cases handled at prediction time.
    pub fn split_holdout(&self, ratio: f64, seed: u64) -> Result<DataSplit> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(LcrError::data(format!("split ratio {ratio} outside (0, 1)")));
        }
        if self.len() < 2 {
            return Err(LcrError::data("need at least 2 ratings to split"));
        }
        let l = self.len();
        let target = ((ratio * l as f64).round() as usize).clamp(1, l - 1);
        let mut order: Vec<usize> = (0..l).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut train_idx = order[..target].to_vec();
        let mut probe_idx = order[target..].to_vec();
        // Keep file order inside each side so indexing stays stable.
        train_idx.sort_unstable();
        probe_idx.sort_unstable();
        let side = |idx: &[usize]| -> Result<RatingDataset> {
            let records: Vec<RatingRecord> = idx
                .iter()
                .map(|&t| {
                    let (u, i, r) = self.triples[t];
                    RatingRecord {
                        user: self.users[u as usize].clone(),
                        item: self.items[i as usize].clone(),
                        rating: r,
                        timestamp: None,
                    }
                })
                .collect();
            build_dataset(&records, self.scale)
        };
        Ok(DataSplit {
            train: side(&train_idx)?,
            probe: side(&probe_idx)?,
            ratio,
            seed,
        })
    }

    /// Per-user rating-count statistics.
    pub fn user_degree_stats(&self) -> DegreeStats {
        let mut degrees = vec![0u32; self.n_users()];
        for &(u, _, _) in &self.triples {
            degrees[u as usize] += 1;
        }
        let mut histogram = BTreeMap::new();
        for &d in &degrees {
            *histogram.entry(d).or_insert(0u32) += 1;
        }
        let mean = self.len() as f64 / self.n_users() as f64;
        DegreeStats {
            degrees,
            mean,
            histogram,
        }
    }

    /// Drop users with fewer than `min_degree` ratings (and items that only
    /// they rated), re-indexing the survivors.
    pub fn filter_min_degree(&self, min_degree: u32) -> Result<RatingDataset> {
        if min_degree <= 1 {
            return Ok(self.clone());
        }
        let stats = self.user_degree_stats();
        let records: Vec<RatingRecord> = self
            .triples
            .iter()
            .filter(|&&(u, _, _)| stats.degrees[u as usize] >= min_degree)
            .map(|&(u, i, r)| RatingRecord {
                user: self.users[u as usize].clone(),
                item: self.items[i as usize].clone(),
                rating: r,
                timestamp: None,
            })
            .collect();
        if records.is_empty() {
            return Err(LcrError::data(format!(
                "min-degree filter {min_degree} removed every rating"
            )));
        }
        build_dataset(&records, self.scale)
    }
}

/// Build a dataset from records, assigning dense indices in first-appearance
/// order. Duplicate (user, item) pairs and out-of-scale ratings are errors;
/// an empty record list is an error.
pub fn build_dataset(records: &[RatingRecord], scale: Scale) -> Result<RatingDataset> {
    if records.is_empty() {
        return Err(LcrError::data("no ratings to index"));
    }
    let mut users: Vec<String> = Vec::new();
    let mut items: Vec<String> = Vec::new();
    let mut user_index: HashMap<String, u32> = HashMap::new();
    let mut item_index: HashMap<String, u32> = HashMap::new();
    let mut triples = Vec::with_capacity(records.len());
    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(records.len());
    // Kahan sum keeps the mean exact enough for million-rating files.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for rec in records {
        if !rec.rating.is_finite() || !scale.contains(rec.rating) {
            return Err(LcrError::data(format!(
                "rating {} for user {:?} item {:?} outside scale [{}, {}]",
                rec.rating, rec.user, rec.item, scale.min, scale.max
            )));
        }
        let u = match user_index.get(&rec.user) {
            Some(&u) => u,
            None => {
                let u = users.len() as u32;
                users.push(rec.user.clone());
                user_index.insert(rec.user.clone(), u);
                u
            }
        };
        let i = match item_index.get(&rec.item) {
            Some(&i) => i,
            None => {
                let i = items.len() as u32;
                items.push(rec.item.clone());
                item_index.insert(rec.item.clone(), i);
                i
            }
        };
        if !seen.insert((u, i)) {
            return Err(LcrError::data(format!(
                "duplicate rating for user {:?} item {:?}",
                rec.user, rec.item
            )));
        }
        triples.push((u, i, rec.rating));
        let y = rec.rating - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let global_mean = sum / triples.len() as f64;
    Ok(RatingDataset {
        users,
        items,
        user_index,
        item_index,
        triples,
        global_mean,
        scale,
    })
}

/// Result of a holdout split. Invariants (tested): the two sides are
/// disjoint, their union is the input, and the train side holds
/// `round(ratio * len)` ratings.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: RatingDataset,
    pub probe: RatingDataset,
    pub ratio: f64,
    pub seed: u64,
}

/// Per-user degree summary.
#[derive(Debug, Clone)]
pub struct DegreeStats {
    /// Rating count per dense user index.
    pub degrees: Vec<u32>,
    /// Mean ratings per user (= len / n_users).
    pub mean: f64,
    /// degree -> number of users with that degree.
    pub histogram: BTreeMap<u32, u32>,
}
