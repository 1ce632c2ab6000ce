//! Compact little-endian model encoding.
//!
//! ```text
//! magic      "HRVM" 0x01
//! kind       u8            0 dt, 1 rf, 2 knn, 3 mlp
//! seed       u64
//! features   varint
//! hyperparams
//!   dt       varint max_depth
//!   rf       varint trees, varint max_depth
//!   knn      varint k, u8 distance (0 manhattan, 1 euclidean)
//!   mlp      varint layers, varint width per layer, u8 activation (0 relu, 1 tanh)
//! params
//!   dt       tree
//!   rf       tree per tree
//!   knn      scaler, varint rows, f64 label per row, f64 feature per row and column
//!   mlp      scaler, f64 target mean, f64 target scale, f32 per network parameter
//! tree       varint node count, nodes in preorder:
//!              varint 0, f64 leaf value
//!              varint feature + 1, f32 threshold
//! scaler     f64 mean per feature, f64 scale per feature
//! ```
//!
//! Varints are unsigned LEB128.

use super::knn::KnnModel;
use super::mlp::{MlpModel, Network};
use super::tree::{Node, RegressionTree};
use super::{Activation, Distance, Hyperparams, ModelMeta, ModelParams, Standardizer, TrainedModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"HRVM\x01";

const MAX_TREE_DEPTH: usize = 64;

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    let meta = model.meta();
    let tag = match meta.hyperparams {
        Hyperparams::Dt { .. } => 0,
        Hyperparams::Rf { .. } => 1,
        Hyperparams::Knn { .. } => 2,
        Hyperparams::Mlp { .. } => 3,
    };
    w.u8(tag);
    w.buf.extend_from_slice(&meta.seed.to_le_bytes());
    w.varint(meta.n_features as u64);
    match &meta.hyperparams {
        Hyperparams::Dt { max_depth } => w.varint(*max_depth as u64),
        Hyperparams::Rf { trees, max_depth } => {
            w.varint(*trees as u64);
            w.varint(*max_depth as u64);
        }
        Hyperparams::Knn { k, distance } => {
            w.varint(*k as u64);
            w.u8(match distance {
                Distance::Manhattan => 0,
                Distance::Euclidean => 1,
            });
        }
        Hyperparams::Mlp { hidden, activation } => {
            w.varint(hidden.len() as u64);
            hidden.iter().for_each(|h| w.varint(*h as u64));
            w.u8(match activation {
                Activation::Relu => 0,
                Activation::Tanh => 1,
            });
        }
    }
    match model.params() {
        ModelParams::Tree(t) => w.tree(t),
        ModelParams::Forest(ts) => ts.iter().for_each(|t| w.tree(t)),
        ModelParams::Knn(m) => {
            w.scaler(&m.scaler);
            w.varint(m.labels.len() as u64);
            m.labels.iter().for_each(|v| w.f64(*v));
            m.points.iter().for_each(|v| w.f64(*v));
        }
        ModelParams::Mlp(m) => {
            w.scaler(&m.scaler);
            w.f64(m.y_mean);
            w.f64(m.y_scale);
            m.network.params().iter().for_each(|p| w.f32(*p as f32));
        }
    }
    w.buf
}

/// Length of [`encode`]'s output.
pub fn serialized_size(model: &TrainedModel) -> usize {
    encode(model).len()
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Decode("bad magic".to_string()));
    }
    let tag = r.u8()?;
    let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let n_features = r.small("feature count")?;
    if n_features == 0 {
        return Err(Error::Decode("zero features".to_string()));
    }
    let (hyperparams, params) = match tag {
        0 => {
            let max_depth = r.small("max_depth")?;
            (Hyperparams::Dt { max_depth }, ModelParams::Tree(r.tree(n_features)?))
        }
        1 => {
            let trees = r.small("trees")?;
            let max_depth = r.small("max_depth")?;
            if trees == 0 {
                return Err(Error::Decode("empty forest".to_string()));
            }
            let forest = (0..trees).map(|_| r.tree(n_features)).collect::<Result<Vec<_>>>()?;
            (Hyperparams::Rf { trees, max_depth }, ModelParams::Forest(forest))
        }
        2 => {
            let k = r.small("k")?;
            let distance = match r.u8()? {
                0 => Distance::Manhattan,
                1 => Distance::Euclidean,
                d => return Err(Error::Decode(format!("unknown distance tag {d}"))),
            };
            let scaler = r.scaler(n_features)?;
            let rows = r.small("rows")?;
            if k == 0 || k > rows {
                return Err(Error::Decode(format!("k = {k} with {rows} rows")));
            }
            let labels = r.f64s(rows)?;
            let points = r.f64s(
                rows.checked_mul(n_features)
                    .ok_or_else(|| Error::Decode("size overflow".to_string()))?,
            )?;
            let model = KnnModel {
                scaler,
                points,
                labels,
                k,
                distance,
            };
            (Hyperparams::Knn { k, distance }, ModelParams::Knn(model))
        }
        3 => {
            let layers = r.small("layers")?;
            let hidden = (0..layers).map(|_| r.small("width")).collect::<Result<Vec<_>>>()?;
            let activation = match r.u8()? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                a => return Err(Error::Decode(format!("unknown activation tag {a}"))),
            };
            let scaler = r.scaler(n_features)?;
            let y_mean = r.f64()?;
            let y_scale = r.f64()?;
            let mut sizes = vec![n_features];
            sizes.extend_from_slice(&hidden);
            sizes.push(1);
            let mut network =
                Network::zeros(&sizes, activation).map_err(|e| Error::Decode(format!("bad architecture: {e}")))?;
            let count = network.params().len();
            let params = (0..count).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
            network.set_params(&params)?;
            let model = MlpModel {
                network,
                scaler,
                y_mean,
                y_scale,
            };
            (Hyperparams::Mlp { hidden, activation }, ModelParams::Mlp(model))
        }
        t => return Err(Error::Decode(format!("unknown model tag {t}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TrainedModel::from_parts(
        ModelMeta {
            hyperparams,
            seed,
            n_features,
        },
        params,
    ))
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn varint(&mut self, mut v: u64) {
        loop {
            let byte = (v & 0x7f) as u8;
            v >>= 7;
            if v == 0 {
                self.buf.push(byte);
                return;
            }
            self.buf.push(byte | 0x80);
        }
    }

    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn scaler(&mut self, s: &Standardizer) {
        s.mean.iter().chain(&s.scale).for_each(|v| self.f64(*v));
    }

    fn tree(&mut self, t: &RegressionTree) {
        self.varint(t.nodes().len() as u64);
        for node in t.nodes() {
            match *node {
                Node::Leaf(v) => {
                    self.varint(0);
                    self.f64(v);
                }
                Node::Split { feature, threshold, .. } => {
                    self.varint(u64::from(feature) + 1);
                    self.f32(threshold);
                }
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.u8()?;
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Decode("varint too long".to_string()))
    }

    /// A varint that must fit comfortably in memory-sized quantities.
    fn small(&mut self, what: &str) -> Result<usize> {
        let v = self.varint()?;
        if v > (self.bytes.len() as u64).max(1 << 16) {
            return Err(Error::Decode(format!("{what} = {v} is implausible")));
        }
        Ok(v as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Decode("size overflow".to_string()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn scaler(&mut self, n: usize) -> Result<Standardizer> {
        Ok(Standardizer {
            mean: self.f64s(n)?,
            scale: self.f64s(n)?,
        })
    }

    fn tree(&mut self, n_features: usize) -> Result<RegressionTree> {
        let count = self.small("node count")?;
        let mut nodes = Vec::with_capacity(count.min(self.bytes.len()));
        self.subtree(n_features, count, 0, &mut nodes)?;
        if nodes.len() != count {
            return Err(Error::Decode(format!(
                "tree declares {count} nodes, holds {}",
                nodes.len()
            )));
        }
        Ok(RegressionTree::from_nodes(nodes))
    }

    fn subtree(&mut self, n_features: usize, count: usize, depth: usize, nodes: &mut Vec<Node>) -> Result<()> {
        if depth > MAX_TREE_DEPTH || nodes.len() >= count {
            return Err(Error::Decode("malformed tree".to_string()));
        }
        let tag = self.varint()?;
        if tag == 0 {
            nodes.push(Node::Leaf(self.f64()?));
            return Ok(());
        }
        let feature = tag - 1;
        if feature >= n_features as u64 {
            return Err(Error::Decode(format!("split on feature {feature} of {n_features}")));
        }
        let threshold = self.f32()?;
        let here = nodes.len();
        nodes.push(Node::Split {
            feature: feature as u32,
            threshold,
            right: 0,
        });
        self.subtree(n_features, count, depth + 1, nodes)?;
        let right = nodes.len() as u32;
        if let Node::Split { right: r, .. } = &mut nodes[here] {
            *r = right;
        }
        self.subtree(n_features, count, depth + 1, nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_dt, train_knn, train_mlp, train_rf, Dataset, MlpTrainingConfig, Sample, Target};
    use crate::seeded_rng;
    use rand::Rng;

    fn data(m: usize, d: usize) -> Dataset {
        let mut rng = seeded_rng(8, 0);
        let samples = (0..m)
            .map(|i| {
                let features: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
                let label = features.iter().sum::<f64>() + 20.0;
                Sample {
                    features,
                    label,
                    time_s: i as f64,
                }
            })
            .collect();
        Dataset::new(samples, Target::Hr, d).unwrap()
    }

    fn assert_round_trip(m: &TrainedModel) {
        let bytes = encode(m);
        assert_eq!(bytes.len(), serialized_size(m));
        let back = decode(&bytes).unwrap();
        assert_eq!(back.meta(), m.meta());
        let mut rng = seeded_rng(1, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..m.n_features()).map(|_| rng.random_range(-6.0..6.0)).collect();
            assert_eq!(back.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());
        }
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn round_trips() {
        let d = data(120, 4);
        assert_round_trip(&train_dt(&d, 8, 1).unwrap());
        assert_round_trip(&train_rf(&d, 4, 5, 2).unwrap());
        assert_round_trip(&train_knn(&d, 3, Distance::Manhattan).unwrap());
        let cfg = MlpTrainingConfig {
            max_epochs: 3,
            ..Default::default()
        };
        assert_round_trip(&train_mlp(&d, &[5, 3], Activation::Tanh, &cfg, 3).unwrap());
    }

    #[test]
    fn single_leaf_tree_is_tiny() {
        let samples = (0..10)
            .map(|i| Sample {
                features: vec![i as f64; 301],
                label: 42.0,
                time_s: i as f64,
            })
            .collect();
        let d = Dataset::new(samples, Target::Hr, 300).unwrap();
        let m = train_dt(&d, 20, 0).unwrap();
        // magic 5 + tag 1 + seed 8 + features 2 + depth 1 + count 1 + leaf 9
        assert_eq!(serialized_size(&m), 27);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"").is_err());
        assert!(decode(b"HRVM\x02").is_err());
        let mut bytes = encode(&train_dt(&data(30, 2), 3, 0).unwrap());
        bytes[5] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Decode(_))));
    }
}
