//! Binary checkpoints, little-endian throughout.
//!
//! * Model (`DSOMCKPT`): `u32` version, `u64` dim, `u64` entity count, `u64`
//!   relation count, then entity re, entity im, relation re, relation im as
//!   `f64` row-major.
//! * Teachers (`DSOMTCHR`): `u32` version, `u64` manifest length, JSON
//!   manifest, then per modality in manifest order: `u64` length + model
//!   block, `u8` projection flag and, when set, `u64` out, `u64` in and the
//!   `f64` weights.
//! * Policy (`DSOMPLCY`): `u32` version, `u64` input, `u64` hidden, `u64`
//!   actions, `u8` standardize flag, then W1, b1, W2, b2 as `f64`.
//! * Teacher logit cache (`DSOMLOGC`): `u32` version, `u64` entity count,
//!   `u64` query count, the `(u64 head, u64 rel)` queries, then per query the
//!   three teachers' score vectors as `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{ComplexEmbeddingTable, KgeModel, Projection};
use crate::error::{Error, Result};
use crate::features::Cursor;
use crate::reinforce::{PolicyNet, NUM_ACTIONS};
use crate::scalar::Scalar;
use crate::teachers::{ModalTeacher, TeacherEnsemble, TeacherLogitCache};
use crate::{Modality, TrainConfig, NUM_MODALITIES};

pub const MODEL_MAGIC: &[u8; 8] = b"DSOMCKPT";
pub const TEACHER_MAGIC: &[u8; 8] = b"DSOMTCHR";
pub const POLICY_MAGIC: &[u8; 8] = b"DSOMPLCY";
pub const CACHE_MAGIC: &[u8; 8] = b"DSOMLOGC";
pub const VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s<S: Scalar>(out: &mut Vec<u8>, vs: &[S]) {
    for v in vs {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

fn get_scalars<S: Scalar>(cur: &mut Cursor<'_>, n: usize) -> Result<Vec<S>> {
    let raw = cur.f64s(n)?;
    if let Some(index) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: cur.what, index });
    }
    Ok(raw.into_iter().map(S::of).collect())
}

fn header<'a>(bytes: &'a [u8], magic: &'static [u8; 8], what: &'static str) -> Result<Cursor<'a>> {
    let mut cur = Cursor { bytes, pos: 0, what };
    if cur.take(8)? != magic {
        return Err(Error::BadMagic {
            what,
            expected: std::str::from_utf8(magic).unwrap(),
        });
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what,
            found: version,
            expected: VERSION,
        });
    }
    Ok(cur)
}

fn finish(cur: &Cursor<'_>) -> Result<()> {
    if cur.finished() {
        Ok(())
    } else {
        Err(Error::Shape(format!("{} has trailing bytes", cur.what)))
    }
}

pub fn model_to_bytes<S: Scalar>(model: &KgeModel<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, model.dim());
    put_u64(&mut out, model.entities.count);
    put_u64(&mut out, model.relations.count);
    for t in [&model.entities, &model.relations] {
        put_f64s(&mut out, &t.re);
        put_f64s(&mut out, &t.im);
    }
    out
}

fn read_model<S: Scalar>(cur: &mut Cursor<'_>) -> Result<KgeModel<S>> {
    let dim = cur.u64()? as usize;
    let ne = cur.u64()? as usize;
    let nr = cur.u64()? as usize;
    let mut table = |count: usize| -> Result<ComplexEmbeddingTable<S>> {
        let re = get_scalars(cur, count * dim)?;
        let im = get_scalars(cur, count * dim)?;
        Ok(ComplexEmbeddingTable { count, dim, re, im })
    };
    let entities = table(ne)?;
    let relations = table(nr)?;
    Ok(KgeModel { entities, relations })
}

pub fn model_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<KgeModel<S>> {
    let mut cur = header(bytes, MODEL_MAGIC, "model checkpoint")?;
    let model = read_model(&mut cur)?;
    finish(&cur)?;
    Ok(model)
}

pub fn save_model<S: Scalar>(model: &KgeModel<S>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<KgeModel<S>> {
    let path = path.as_ref();
    model_from_bytes(&fs::read(path)?).map_err(|e| e.context(path.display().to_string()))
}

/// JSON header of a teacher checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherManifest {
    pub modalities: Vec<Modality>,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    /// How each teacher's parameters were chosen, e.g. `best_valid_mrr`.
    pub selection: String,
    pub best_epochs: Vec<usize>,
    pub valid_mrr: Vec<f64>,
    pub config: TrainConfig,
    #[serde(default)]
    pub run_manifest: Option<String>,
}

pub fn teachers_to_bytes<S: Scalar>(ensemble: &TeacherEnsemble<S>, manifest: &TeacherManifest) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TEACHER_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(manifest).expect("manifest serializes");
    put_u64(&mut out, json.len());
    out.extend_from_slice(&json);
    for t in &ensemble.teachers {
        let block = model_to_bytes(&KgeModel {
            entities: t.entities.clone(),
            relations: t.relations.clone(),
        });
        put_u64(&mut out, block.len());
        out.extend_from_slice(&block);
        match &t.projection {
            Some(p) => {
                out.push(1);
                put_u64(&mut out, p.out_dim);
                put_u64(&mut out, p.in_dim);
                put_f64s(&mut out, &p.weights);
            }
            None => out.push(0),
        }
    }
    out
}

/// Loads a frozen ensemble; projected teachers keep their weights but no
/// features, so they cannot be trained further.
pub fn teachers_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<(TeacherEnsemble<S>, TeacherManifest)> {
    let mut cur = header(bytes, TEACHER_MAGIC, "teacher checkpoint")?;
    let len = cur.u64()? as usize;
    let manifest: TeacherManifest = serde_json::from_slice(cur.take(len)?)?;
    if manifest.modalities != Modality::ALL {
        return Err(Error::Config(format!(
            "teacher checkpoint modality order {:?} differs from {:?}",
            manifest.modalities,
            Modality::ALL
        )));
    }
    let mut teachers = Vec::with_capacity(NUM_MODALITIES);
    for &modality in &manifest.modalities {
        let block_len = cur.u64()? as usize;
        let model: KgeModel<S> = model_from_bytes(cur.take(block_len)?)?;
        let projection = match cur.take(1)?[0] {
            0 => None,
            1 => {
                let out_dim = cur.u64()? as usize;
                let in_dim = cur.u64()? as usize;
                let weights = get_scalars(&mut cur, out_dim * in_dim)?;
                Some(Projection {
                    in_dim,
                    out_dim,
                    weights,
                })
            }
            f => return Err(Error::Shape(format!("bad projection flag {f}"))),
        };
        if model.entities.count != manifest.num_entities || model.dim() != manifest.dim {
            return Err(Error::Shape(format!("{modality} teacher disagrees with manifest")));
        }
        teachers.push(ModalTeacher {
            modality,
            entities: model.entities,
            relations: model.relations,
            projection,
            features: None,
        });
    }
    finish(&cur)?;
    let teachers: [ModalTeacher<S>; NUM_MODALITIES] = teachers.try_into().expect("three teachers");
    Ok((TeacherEnsemble { teachers }, manifest))
}

pub fn save_teachers<S: Scalar>(
    ensemble: &TeacherEnsemble<S>,
    manifest: &TeacherManifest,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, teachers_to_bytes(ensemble, manifest))?;
    Ok(())
}

pub fn load_teachers<S: Scalar>(path: impl AsRef<Path>) -> Result<(TeacherEnsemble<S>, TeacherManifest)> {
    let path = path.as_ref();
    teachers_from_bytes(&fs::read(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn policy_to_bytes<S: Scalar>(policy: &PolicyNet<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(POLICY_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, policy.input);
    put_u64(&mut out, policy.hidden);
    put_u64(&mut out, NUM_ACTIONS);
    out.push(policy.standardize as u8);
    for p in policy.params() {
        put_f64s(&mut out, p);
    }
    out
}

pub fn policy_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<PolicyNet<S>> {
    let mut cur = header(bytes, POLICY_MAGIC, "policy checkpoint")?;
    let input = cur.u64()? as usize;
    let hidden = cur.u64()? as usize;
    let actions = cur.u64()? as usize;
    if actions != NUM_ACTIONS {
        return Err(Error::Shape(format!("policy has {actions} actions")));
    }
    let standardize = cur.take(1)?[0] != 0;
    let w1 = get_scalars(&mut cur, hidden * input)?;
    let b1 = get_scalars(&mut cur, hidden)?;
    let w2 = get_scalars(&mut cur, NUM_ACTIONS * hidden)?;
    let b2 = get_scalars(&mut cur, NUM_ACTIONS)?;
    finish(&cur)?;
    Ok(PolicyNet {
        input,
        hidden,
        w1,
        b1,
        w2,
        b2,
        standardize,
    })
}

pub fn cache_to_bytes<S: Scalar>(cache: &TeacherLogitCache<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, cache.num_entities);
    put_u64(&mut out, cache.queries.len());
    for &(h, r) in &cache.queries {
        put_u64(&mut out, h);
        put_u64(&mut out, r);
    }
    put_f64s(&mut out, &cache.data);
    out
}

pub fn cache_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<TeacherLogitCache<S>> {
    let mut cur = header(bytes, CACHE_MAGIC, "teacher logit cache")?;
    let n = cur.u64()? as usize;
    let q = cur.u64()? as usize;
    let mut queries = Vec::with_capacity(q);
    for _ in 0..q {
        queries.push((cur.u64()? as usize, cur.u64()? as usize));
    }
    let data = get_scalars(&mut cur, q * NUM_MODALITIES * n)?;
    finish(&cur)?;
    TeacherLogitCache::from_parts(n, queries, data)
}
