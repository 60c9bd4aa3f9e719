//! Binary model files.
//!
//! Three containers, dispatched on a 4-byte magic: `LCRM` for a single
//! biased-MF model, `LCRE` for component ensembles (kind 1 sums predictions,
//! kind 2 averages them), `LCRS` for the item-deviation baseline. All
//! integers and floats are little-endian; strings are u32-length-prefixed
//! UTF-8. Writing is a pure function of the model, so identical models
//! produce identical bytes.
//!
//! The deviation baseline stores only the per-user rating lists; its
//! matrices are derived state rebuilt on load, which keeps files small
//! without losing exactness.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::baselines::{MbmfModel, SlopeOneModel};
use crate::bmf::BmfModel;
use crate::dataset::Scale;
use crate::error::{LcrError, Result};
use crate::lcr::LcrModel;
use crate::model::{ModelIndex, TrainedKind, TrainedModel};

const MAGIC_BMF: &[u8; 4] = b"LCRM";
const MAGIC_ENSEMBLE: &[u8; 4] = b"LCRE";
const MAGIC_SLOPEONE: &[u8; 4] = b"LCRS";
const VERSION: u32 = 1;

const KIND_SUM: u8 = 1;
const KIND_MEAN: u8 = 2;

// Upper bounds applied while reading so corrupt headers cannot trigger
// absurd allocations.
const MAX_DIM: u64 = 100_000_000;
const MAX_FACTORS: u64 = 1_000_000;
const MAX_COMPONENTS: u64 = 100_000;
const MAX_STR: u32 = 1_000_000;

fn fmt_err(msg: impl Into<String>) -> LcrError {
    LcrError::Format(msg.into())
}

fn w_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}

fn w_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn w_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn w_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn w_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| fmt_err("string too long"))?;
    w_u32(w, len)?;
    Ok(w.write_all(s.as_bytes())?)
}

fn w_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w_f64(w, *v)?;
    }
    Ok(())
}

fn r_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn r_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn r_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn r_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r_u32(r)?;
    if len > MAX_STR {
        return Err(fmt_err("implausible string length"));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| fmt_err("id is not valid UTF-8"))
}

fn r_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn r_dim<R: Read>(r: &mut R, what: &str, max: u64) -> Result<usize> {
    let v = r_u64(r)?;
    if v > max {
        return Err(fmt_err(format!("implausible {what}: {v}")));
    }
    Ok(v as usize)
}

fn w_scale<W: Write>(w: &mut W, s: Scale) -> Result<()> {
    w_f64(w, s.min)?;
    w_f64(w, s.max)
}

fn r_scale<R: Read>(r: &mut R) -> Result<Scale> {
    let min = r_f64(r)?;
    let max = r_f64(r)?;
    Scale::new(min, max)
}

fn w_bool<W: Write>(w: &mut W, v: bool) -> Result<()> {
    w_u8(w, u8::from(v))
}

fn r_bool<R: Read>(r: &mut R) -> Result<bool> {
    match r_u8(r)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(fmt_err(format!("invalid flag byte {v}"))),
    }
}

fn w_params<W: Write>(w: &mut W, m: &BmfModel) -> Result<()> {
    w_bool(w, m.use_biases)?;
    w_u64(w, m.factors as u64)?;
    w_f64(w, m.mu)?;
    w_f64s(w, &m.user_bias)?;
    w_f64s(w, &m.item_bias)?;
    w_f64s(w, &m.user_factors)?;
    w_f64s(w, &m.item_factors)
}

fn r_params<R: Read>(r: &mut R, n: usize, m: usize) -> Result<BmfModel> {
    let use_biases = r_bool(r)?;
    let factors = r_dim(r, "factor count", MAX_FACTORS)?;
    let mu = r_f64(r)?;
    let user_bias = r_f64s(r, n)?;
    let item_bias = r_f64s(r, m)?;
    let user_factors = r_f64s(r, n * factors)?;
    let item_factors = r_f64s(r, m * factors)?;
    Ok(BmfModel {
        mu,
        user_bias,
        item_bias,
        user_factors,
        item_factors,
        factors,
        use_biases,
    })
}

fn w_ids<W: Write>(w: &mut W, index: &ModelIndex) -> Result<()> {
    for id in index.user_ids() {
        w_str(w, id)?;
    }
    for id in index.item_ids() {
        w_str(w, id)?;
    }
    Ok(())
}

fn r_ids<R: Read>(r: &mut R, n: usize, m: usize) -> Result<ModelIndex> {
    let mut users = Vec::with_capacity(n);
    for _ in 0..n {
        users.push(r_str(r)?);
    }
    let mut items = Vec::with_capacity(m);
    for _ in 0..m {
        items.push(r_str(r)?);
    }
    Ok(ModelIndex::from_parts(users, items))
}

/// Serialize any trained model into its container.
pub fn save_model<W: Write>(model: &TrainedModel, w: &mut W) -> Result<()> {
    match &model.kind {
        TrainedKind::Bmf(m) => {
            w.write_all(MAGIC_BMF)?;
            w_u32(w, VERSION)?;
            w_bool(w, model.clamp_output)?;
            w_scale(w, model.scale)?;
            w_u64(w, m.n_users() as u64)?;
            w_u64(w, m.n_items() as u64)?;
            w_params(w, m)?;
            w_ids(w, &model.index)
        }
        TrainedKind::Lcr(lcr) => save_ensemble(w, KIND_SUM, &lcr.components, model),
        TrainedKind::Mbmf(e) => save_ensemble(w, KIND_MEAN, &e.components, model),
        TrainedKind::SlopeOne(s) => {
            w.write_all(MAGIC_SLOPEONE)?;
            w_u32(w, VERSION)?;
            w_scale(w, model.scale)?;
            w_u64(w, s.n_users() as u64)?;
            w_u64(w, s.n_items() as u64)?;
            w_f64(w, s.global_mean())?;
            for ratings in s.user_ratings() {
                w_u64(w, ratings.len() as u64)?;
                for &(i, r) in ratings {
                    w_u32(w, i)?;
                    w_f64(w, r)?;
                }
            }
            w_ids(w, &model.index)
        }
    }
}

fn save_ensemble<W: Write>(
    w: &mut W,
    kind: u8,
    components: &[BmfModel],
    model: &TrainedModel,
) -> Result<()> {
    let first = components
        .first()
        .ok_or_else(|| fmt_err("ensemble with no components"))?;
    w.write_all(MAGIC_ENSEMBLE)?;
    w_u32(w, VERSION)?;
    w_u8(w, kind)?;
    w_bool(w, model.clamp_output)?;
    w_scale(w, model.scale)?;
    w_u64(w, components.len() as u64)?;
    w_u64(w, first.n_users() as u64)?;
    w_u64(w, first.n_items() as u64)?;
    for c in components {
        if c.n_users() != first.n_users() || c.n_items() != first.n_items() {
            return Err(fmt_err("ensemble components disagree on dimensions"));
        }
        w_params(w, c)?;
    }
    w_ids(w, &model.index)
}

/// Read back any container written by [`save_model`].
pub fn load_model<R: Read>(r: &mut R) -> Result<TrainedModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    let version = r_u32(r)?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported version {version}")));
    }
    match &magic {
        MAGIC_BMF => {
            let clamp_output = r_bool(r)?;
            let scale = r_scale(r)?;
            let n = r_dim(r, "user count", MAX_DIM)?;
            let m = r_dim(r, "item count", MAX_DIM)?;
            let params = r_params(r, n, m)?;
            let index = r_ids(r, n, m)?;
            Ok(TrainedModel {
                kind: TrainedKind::Bmf(params),
                index,
                scale,
                clamp_output,
            })
        }
        MAGIC_ENSEMBLE => {
            let kind = r_u8(r)?;
            let clamp_output = r_bool(r)?;
            let scale = r_scale(r)?;
            let c = r_dim(r, "component count", MAX_COMPONENTS)?;
            if c == 0 {
                return Err(fmt_err("ensemble with no components"));
            }
            let n = r_dim(r, "user count", MAX_DIM)?;
            let m = r_dim(r, "item count", MAX_DIM)?;
            let mut components = Vec::with_capacity(c);
            for _ in 0..c {
                components.push(r_params(r, n, m)?);
            }
            let index = r_ids(r, n, m)?;
            let kind = match kind {
                KIND_SUM => TrainedKind::Lcr(LcrModel {
                    components,
                    clamp_output,
                    scale,
                }),
                KIND_MEAN => TrainedKind::Mbmf(MbmfModel {
                    components,
                    clamp_output,
                    scale,
                }),
                v => return Err(fmt_err(format!("unknown ensemble kind {v}"))),
            };
            Ok(TrainedModel {
                kind,
                index,
                scale,
                clamp_output,
            })
        }
        MAGIC_SLOPEONE => {
            let scale = r_scale(r)?;
            let n = r_dim(r, "user count", MAX_DIM)?;
            let m = r_dim(r, "item count", MAX_DIM)?;
            let global_mean = r_f64(r)?;
            let mut user_ratings = Vec::with_capacity(n);
            for _ in 0..n {
                let len = r_dim(r, "rating list length", MAX_DIM)?;
                let mut ratings = Vec::with_capacity(len);
                for _ in 0..len {
                    let i = r_u32(r)?;
                    let v = r_f64(r)?;
                    ratings.push((i, v));
                }
                user_ratings.push(ratings);
            }
            let index = r_ids(r, n, m)?;
            let model = SlopeOneModel::from_parts(user_ratings, m, global_mean, scale)?;
            Ok(TrainedModel {
                kind: TrainedKind::SlopeOne(model),
                index,
                scale,
                clamp_output: true,
            })
        }
        other => Err(fmt_err(format!("unknown model file magic {other:?}"))),
    }
}

pub fn save_model_to_path<P: AsRef<Path>>(model: &TrainedModel, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_model(model, &mut w)?;
    Ok(w.flush()?)
}

pub fn load_model_from_path<P: AsRef<Path>>(path: P) -> Result<TrainedModel> {
    let mut r = BufReader::new(File::open(path)?);
    load_model(&mut r)
}
