//! Binary parameter checkpoints.
//!
//! Layout: the 8-byte magic `GAUGCKPT`, a little-endian `u32` version, a
//! `u32` length followed by that many bytes of JSON metadata, a `u32`
//! parameter count, then per parameter a `u32` name length, the UTF-8 name,
//! `u32` rows, `u32` cols and `rows * cols` little-endian `f32` values.

use std::fs;
use std::path::Path;

use graphaug_core::nn::{Param, ParamStore};
use graphaug_core::policy::{PolicyConfig, PolicyModel};
use graphaug_core::reward::{RewardConfig, RewardModel};
use graphaug_core::trainer::{Classifier, ClassifierConfig};
use graphaug_core::Matrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GAUGCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: String,
    pub architecture: serde_json::Value,
    pub seed: u64,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct Arch<C> {
    feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    config: C,
}

pub fn encode(meta: &Metadata, store: &ParamStore<f32>) -> Vec<u8> {
    let json = serde_json::to_vec(meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + json.len() + store.num_scalars() * 4 + store.len() * 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
        for x in p.value.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(Metadata, Vec<Param<f32>>), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a graphaug checkpoint".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let len = r.u32()? as usize;
    let meta: Metadata = serde_json::from_slice(r.take(len)?).map_err(|e| format!("metadata: {e}"))?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| "parameter name is not UTF-8")?;
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let raw = r.take(rows.checked_mul(cols).and_then(|k| k.checked_mul(4)).ok_or("parameter too large")?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        params.push(Param { name, value: Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())? });
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok((meta, params))
}

pub fn save(path: &Path, meta: &Metadata, store: &ParamStore<f32>) -> Result<()> {
    fs::write(path, encode(meta, store)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Metadata, Vec<Param<f32>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|message| Error::Checkpoint { path: path.into(), message })
}

fn save_model<C: Serialize>(
    path: &Path,
    kind: &str,
    arch: Arch<C>,
    seed: u64,
    step: u64,
    store: &ParamStore<f32>,
) -> Result<()> {
    let architecture = serde_json::to_value(arch).expect("architecture serializes");
    save(path, &Metadata { kind: kind.into(), architecture, seed, step }, store)
}

fn load_model<C: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Metadata, Arch<C>, Vec<Param<f32>>)> {
    let (meta, params) = load(path)?;
    if meta.kind != kind {
        return Err(Error::Checkpoint {
            path: path.into(),
            message: format!("holds a {} model, not a {kind} model", meta.kind),
        });
    }
    let arch = serde_json::from_value(meta.architecture.clone())
        .map_err(|e| Error::Checkpoint { path: path.into(), message: format!("architecture: {e}") })?;
    Ok((meta, arch, params))
}

pub fn save_reward(path: &Path, model: &RewardModel, seed: u64, step: u64) -> Result<()> {
    let arch = Arch { feature_dim: model.net.feature_dim(), num_classes: None, config: model.config.clone() };
    save_model(path, "reward", arch, seed, step, &model.store)
}

pub fn load_reward(path: &Path) -> Result<RewardModel> {
    let (meta, arch, params) = load_model::<RewardConfig>(path, "reward")?;
    let mut model = RewardModel::new(arch.feature_dim, arch.config, meta.seed)?;
    model.store.load_from(&params)?;
    Ok(model)
}

pub fn save_policy(path: &Path, model: &PolicyModel, seed: u64, step: u64) -> Result<()> {
    let arch = Arch { feature_dim: model.net.feature_dim(), num_classes: None, config: model.config().clone() };
    save_model(path, "policy", arch, seed, step, &model.store)
}

pub fn load_policy(path: &Path) -> Result<PolicyModel> {
    let (meta, arch, params) = load_model::<PolicyConfig>(path, "policy")?;
    let mut model = PolicyModel::new(arch.feature_dim, arch.config, meta.seed)?;
    model.store.load_from(&params)?;
    Ok(model)
}

pub fn save_classifier(
    path: &Path,
    model: &Classifier,
    config: &ClassifierConfig,
    feature_dim: usize,
    seed: u64,
) -> Result<()> {
    let arch = Arch { feature_dim, num_classes: Some(model.num_classes), config: config.clone() };
    save_model(path, "classifier", arch, seed, config.epochs as u64, &model.store)
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    let (meta, arch, params) = load_model::<ClassifierConfig>(path, "classifier")?;
    let classes = arch
        .num_classes
        .ok_or_else(|| Error::Checkpoint { path: path.into(), message: "missing class count".into() })?;
    let mut model = Classifier::new(arch.feature_dim, classes, &arch.config, meta.seed)?;
    model.store.load_from(&params)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphaug_core::datasets::{gen_colors, SyntheticConfig};
    use graphaug_core::rng;

    #[test]
    fn reward_round_trip_gives_identical_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ckpt");
        let config = RewardConfig { layers: 2, hidden: 8, ..RewardConfig::default() };
        let mut model = RewardModel::new(4, config, 5).unwrap();
        let mut r = rng::seeded(1);
        for id in model.store.ids().collect::<Vec<_>>() {
            for x in model.store.get_mut(id).as_mut_slice() {
                *x += rand::Rng::gen_range(&mut r, -0.3f32..0.3);
            }
        }
        save_reward(&path, &model, 5, 17).unwrap();
        let back = load_reward(&path).unwrap();
        assert_eq!(back.store, model.store);
        let ds = gen_colors(&SyntheticConfig::with_size(4), 2).unwrap();
        let (a, b) = (&ds.graphs[0].graph, &ds.graphs[1].graph);
        assert_eq!(model.score(a, b).unwrap().to_bits(), back.score(a, b).unwrap().to_bits());
        assert_eq!(load(&path).unwrap().0.step, 17);
    }

    #[test]
    fn policy_round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let config = PolicyConfig { hidden: 8, category_hidden: 8, head_hidden: 8, ..PolicyConfig::default() };
        let model = PolicyModel::new(4, config, 9).unwrap();
        save_policy(&path, &model, 9, 0).unwrap();
        assert_eq!(load_policy(&path).unwrap().store, model.store);
        assert!(matches!(load_reward(&path), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let model = PolicyModel::new(4, PolicyConfig::default(), 1).unwrap();
        let meta = Metadata { kind: "policy".into(), architecture: serde_json::Value::Null, seed: 1, step: 0 };
        let bytes = encode(&meta, &model.store);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert_eq!(decode(&bytes).unwrap().1.len(), model.store.len());
    }
}
