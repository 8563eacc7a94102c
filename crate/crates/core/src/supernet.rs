//! Weight-sharing supernet over the cell search space, plus the isolated stand-alone model.
//!
//! Cell semantics: `node₀ = stem(x)`, `node_j = Σ_{(i,j)} op_{(i,j)}(node_i)`,
//! `logits = head(node_last)`. A node with no non-zero input is the zero tensor.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optim::ParamGrads;
use crate::scalar::Scalar;
use crate::space::{SearchSpaceSpec, Subnet};

pub const STEM_W: usize = 0;
pub const STEM_B: usize = 1;
pub const HEAD_W: usize = 2;
pub const HEAD_B: usize = 3;
const CHECKPOINT_MAGIC: &[u8; 8] = b"SNLCKPT1";

fn glorot<S: Scalar, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<S> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| S::of(rng.random_range(-a..=a)))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("glorot shape")
}

fn affine_pair<S: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> [Tensor<S>; 2] {
    [glorot(fan_in, fan_out, rng), Tensor::zeros(vec![fan_out])]
}

/// Stable 64-bit digest of a search-space spec.
pub fn spec_hash(spec: &SearchSpaceSpec) -> u64 {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Logits plus the tape handle of every parameter slot that entered the graph.
#[derive(Debug)]
pub struct Forward {
    pub logits: Var,
    pub params: Vec<(usize, Var)>,
}

/// One parameter slot per (edge, parameterized op), plus the shared stem and head.
#[derive(Debug, Clone, PartialEq)]
pub struct SupernetWeights<S> {
    spec: SearchSpaceSpec,
    params: Vec<Tensor<S>>,
    /// `op_slots[edge][op]`: first of the four slots (w1, b1, w2, b2) of a dense op.
    op_slots: Vec<Vec<Option<usize>>>,
}

impl<S: Scalar> SupernetWeights<S> {
    pub fn init<R: Rng + ?Sized>(spec: &SearchSpaceSpec, rng: &mut R) -> Self {
        let (d, f, c) = (spec.input_dim(), spec.feature_dim(), spec.num_classes());
        let mut params = Vec::new();
        params.extend(affine_pair(d, f, rng));
        params.extend(affine_pair(f, c, rng));
        let mut op_slots = Vec::with_capacity(spec.num_edges());
        for _ in spec.edges() {
            let mut row = Vec::with_capacity(spec.num_ops());
            for op in spec.candidate_ops() {
                if op.is_parameterized() {
                    row.push(Some(params.len()));
                    params.extend(affine_pair(f, op.hidden_width, rng));
                    params.extend(affine_pair(op.hidden_width, f, rng));
                } else {
                    row.push(None);
                }
            }
            op_slots.push(row);
        }
        Self {
            spec: spec.clone(),
            params,
            op_slots,
        }
    }

    pub fn spec(&self) -> &SearchSpaceSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// First slot of the dense op `op` on `edge`, if it has parameters.
    pub fn op_slot(&self, edge: usize, op: usize) -> Option<usize> {
        self.op_slots[edge][op]
    }

    /// Slots of 𝒲(α): stem, head and the chosen dense op of every edge.
    pub fn active_slots(&self, subnet: &Subnet) -> Vec<usize> {
        let mut slots = vec![STEM_W, STEM_B, HEAD_W, HEAD_B];
        for (e, &op) in subnet.choices().iter().enumerate() {
            if let Some(base) = self.op_slots[e][op] {
                slots.extend(base..base + 4);
            }
        }
        slots
    }

    pub fn forward(&self, tape: &mut Tape<S>, subnet: &Subnet, x: &Tensor<S>) -> Result<Forward> {
        subnet.validate(&self.spec)?;
        let (batch, width) = x.dims2()?;
        if width != self.spec.input_dim() {
            return Err(Error::dim(format!(
                "batch width {width} does not match input dim {}",
                self.spec.input_dim()
            )));
        }
        let f = self.spec.feature_dim();
        let mut used = Vec::new();
        let mut leaf = |tape: &mut Tape<S>, slot: usize| {
            let v = tape.leaf(self.params[slot].clone());
            used.push((slot, v));
            v
        };
        let xv = tape.leaf(x.clone());
        let (sw, sb) = (leaf(tape, STEM_W), leaf(tape, STEM_B));
        let mut nodes: Vec<Option<Var>> = vec![None; self.spec.num_nodes()];
        nodes[0] = Some(tape.affine(xv, sw, sb)?);
        for j in 1..self.spec.num_nodes() {
            let mut acc: Option<Var> = None;
            for (e, &(src, dst)) in self.spec.edges().iter().enumerate() {
                if dst != j {
                    continue;
                }
                let op = subnet.op_at(e);
                let out = match self.spec.candidate_ops()[op].tag {
                    crate::space::OpTag::Zeroize => None,
                    crate::space::OpTag::Skip => nodes[src],
                    _ => {
                        let base = self.op_slots[e][op].expect("dense op has slots");
                        let input = match nodes[src] {
                            Some(v) => v,
                            None => tape.leaf(Tensor::zeros(vec![batch, f])),
                        };
                        let (w1, b1) = (leaf(tape, base), leaf(tape, base + 1));
                        let h = tape.affine(input, w1, b1)?;
                        let h = tape.relu(h);
                        let (w2, b2) = (leaf(tape, base + 2), leaf(tape, base + 3));
                        Some(tape.affine(h, w2, b2)?)
                    }
                };
                acc = match (acc, out) {
                    (Some(a), Some(b)) => Some(tape.add(a, b)?),
                    (a, b) => a.or(b),
                };
            }
            nodes[j] = acc;
        }
        let last = match nodes[self.spec.num_nodes() - 1] {
            Some(v) => v,
            None => tape.leaf(Tensor::zeros(vec![batch, f])),
        };
        let (hw, hb) = (leaf(tape, HEAD_W), leaf(tape, HEAD_B));
        let logits = tape.affine(last, hw, hb)?;
        Ok(Forward {
            logits,
            params: used,
        })
    }

    /// Cross-entropy and gradients for exactly the active slice.
    pub fn train_loss_and_grads(
        &self,
        subnet: &Subnet,
        x: &Tensor<S>,
        labels: &[usize],
    ) -> Result<(S, ParamGrads<S>)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, subnet, x)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, labels)?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss)?;
        let mut out = ParamGrads::new();
        for (slot, var) in fwd.params {
            if let Some(g) = grads.take(var) {
                out.insert(slot, g);
            }
        }
        Ok((value, out))
    }

    pub fn logits(&self, subnet: &Subnet, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, subnet, x)?;
        Ok(tape.value(fwd.logits).clone())
    }

    /// Mean cross-entropy and top-1 accuracy over the whole validation set.
    pub fn validate(&self, subnet: &Subnet, val: &Dataset<S>) -> Result<(S, f64)> {
        if val.is_empty() {
            return Err(Error::Usage("empty validation set".into()));
        }
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, subnet, val.features())?;
        let logits = tape.value(fwd.logits).clone();
        let loss = tape.softmax_cross_entropy(fwd.logits, val.labels())?;
        Ok((tape.value(loss).data()[0], accuracy(&logits, val.labels())))
    }

    /// Copies the active slice into an isolated model.
    pub fn extract(&self, subnet: &Subnet) -> Result<StandaloneNet<S>> {
        subnet.validate(&self.spec)?;
        let mut params = vec![
            self.params[STEM_W].clone(),
            self.params[STEM_B].clone(),
            self.params[HEAD_W].clone(),
            self.params[HEAD_B].clone(),
        ];
        let mut edge_params = Vec::with_capacity(subnet.choices().len());
        for (e, &op) in subnet.choices().iter().enumerate() {
            match self.op_slots[e][op] {
                Some(base) => {
                    edge_params.push(Some(params.len()));
                    params.extend(self.params[base..base + 4].iter().cloned());
                }
                None => edge_params.push(None),
            }
        }
        Ok(StandaloneNet {
            spec: self.spec.clone(),
            subnet: subnet.clone(),
            params,
            edge_params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&spec_hash(&self.spec).to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for p in &self.params {
            for v in p.data() {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint written for the same spec.
    pub fn load(spec: &SearchSpaceSpec, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        if cur.u64()? != spec_hash(spec) {
            return Err(Error::Checkpoint(
                "checkpoint was written for a different search space".into(),
            ));
        }
        // A zero-seeded skeleton gives the expected layout; only shapes are compared.
        let mut skeleton = Self::init(
            spec,
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
        );
        let count = cur.u32()? as usize;
        if count != skeleton.params.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors, expected {}",
                skeleton.params.len()
            )));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let ndim = cur.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| cur.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            shapes.push(shape);
        }
        for (p, shape) in skeleton.params.iter_mut().zip(shapes) {
            if p.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "shape {shape:?} != {:?}",
                    p.shape()
                )));
            }
            for v in p.data_mut() {
                *v = S::of(f64::from_le_bytes(
                    cur.take(8)?.try_into().expect("8 bytes"),
                ));
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(skeleton)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Top-1 accuracy; argmax ties resolve to the lowest class index.
pub fn accuracy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> f64 {
    let mut correct = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// A single architecture with its own compact parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct StandaloneNet<S> {
    spec: SearchSpaceSpec,
    subnet: Subnet,
    /// Stem w/b, head w/b, then four tensors per parameterized edge.
    params: Vec<Tensor<S>>,
    edge_params: Vec<Option<usize>>,
}

impl<S: Scalar> StandaloneNet<S> {
    pub fn init<R: Rng + ?Sized>(
        spec: &SearchSpaceSpec,
        subnet: &Subnet,
        rng: &mut R,
    ) -> Result<Self> {
        subnet.validate(spec)?;
        let (d, f, c) = (spec.input_dim(), spec.feature_dim(), spec.num_classes());
        let mut params = Vec::new();
        params.extend(affine_pair(d, f, rng));
        params.extend(affine_pair(f, c, rng));
        let mut edge_params = Vec::new();
        for &op in subnet.choices() {
            let kind = spec.candidate_ops()[op];
            if kind.is_parameterized() {
                edge_params.push(Some(params.len()));
                params.extend(affine_pair(f, kind.hidden_width, rng));
                params.extend(affine_pair(kind.hidden_width, f, rng));
            } else {
                edge_params.push(None);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            subnet: subnet.clone(),
            params,
            edge_params,
        })
    }

    pub fn subnet(&self) -> &Subnet {
        &self.subnet
    }

    pub fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    pub fn param_count(&self) -> u64 {
        self.params.iter().map(|p| p.len() as u64).sum()
    }

    fn forward(&self, tape: &mut Tape<S>, x: &Tensor<S>) -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let batch = x.dims2()?.0;
        let f = self.spec.feature_dim();
        let xv = tape.leaf(x.clone());
        let mut outputs: Vec<Option<Var>> = Vec::with_capacity(self.spec.num_nodes());
        outputs.push(Some(tape.affine(xv, vars[0], vars[1])?));
        for node in 1..self.spec.num_nodes() {
            let mut terms = Vec::new();
            for (e, &(src, dst)) in self.spec.edges().iter().enumerate() {
                if dst != node {
                    continue;
                }
                match (
                    self.spec.candidate_ops()[self.subnet.op_at(e)].tag,
                    self.edge_params[e],
                ) {
                    (crate::space::OpTag::Zeroize, _) => {}
                    (crate::space::OpTag::Skip, _) => terms.extend(outputs[src]),
                    (_, Some(p)) => {
                        let input = match outputs[src] {
                            Some(v) => v,
                            None => tape.leaf(Tensor::zeros(vec![batch, f])),
                        };
                        let h = tape.affine(input, vars[p], vars[p + 1])?;
                        let h = tape.relu(h);
                        terms.push(tape.affine(h, vars[p + 2], vars[p + 3])?);
                    }
                    (_, None) => unreachable!("dense edge without parameters"),
                }
            }
            let mut it = terms.into_iter();
            let first = it.next();
            let sum = match first {
                Some(mut acc) => {
                    for t in it {
                        acc = tape.add(acc, t)?;
                    }
                    Some(acc)
                }
                None => None,
            };
            outputs.push(sum);
        }
        let last = match outputs.pop().flatten() {
            Some(v) => v,
            None => tape.leaf(Tensor::zeros(vec![batch, f])),
        };
        Ok((tape.affine(last, vars[2], vars[3])?, vars))
    }

    pub fn logits(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let (logits, _) = self.forward(&mut tape, x)?;
        Ok(tape.value(logits).clone())
    }

    /// Loss and a gradient for every parameter (zero where the loss does not depend on it).
    pub fn loss_and_grads(&self, x: &Tensor<S>, labels: &[usize]) -> Result<(S, ParamGrads<S>)> {
        let mut tape = Tape::new();
        let (logits, vars) = self.forward(&mut tape, x)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss)?;
        let mut out = ParamGrads::new();
        for (slot, v) in vars.into_iter().enumerate() {
            let g = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(self.params[slot].shape().to_vec()));
            out.insert(slot, g);
        }
        Ok((value, out))
    }

    pub fn validate(&self, val: &Dataset<S>) -> Result<(S, f64)> {
        if val.is_empty() {
            return Err(Error::Usage("empty validation set".into()));
        }
        let mut tape = Tape::new();
        let (logits, _) = self.forward(&mut tape, val.features())?;
        let acc = accuracy(tape.value(logits), val.labels());
        let loss = tape.softmax_cross_entropy(logits, val.labels())?;
        Ok((tape.value(loss).data()[0], acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{complexity, enumerate_subnets, DEFAULT_ENUMERATION_CAP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> SearchSpaceSpec {
        SearchSpaceSpec::toy(2, 3)
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> (Tensor<f64>, Vec<usize>) {
        let x = Tensor::new(
            vec![n, 2],
            (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let y = (0..n).map(|_| rng.random_range(0..3)).collect();
        (x, y)
    }

    #[test]
    fn one_slot_per_edge_op() {
        let spec = toy();
        let w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        let dense_ops = spec
            .candidate_ops()
            .iter()
            .filter(|o| o.is_parameterized())
            .count();
        assert_eq!(w.params().len(), 4 + spec.num_edges() * dense_ops * 4);
        let mut seen = std::collections::HashSet::new();
        for e in 0..spec.num_edges() {
            for o in 0..spec.num_ops() {
                if let Some(s) = w.op_slot(e, o) {
                    assert!(seen.insert(s));
                }
            }
        }
        // The slice of any subnet has exactly its parameter count.
        for s in enumerate_subnets(&spec, DEFAULT_ENUMERATION_CAP).unwrap() {
            let n: u64 = w
                .active_slots(&s)
                .iter()
                .map(|&i| w.params()[i].len() as u64)
                .sum();
            assert_eq!(n, complexity(&spec, &s).value());
        }
    }

    #[test]
    fn zeroize_subnet_outputs_head_bias() {
        let spec = toy();
        let mut w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(1));
        w.params_mut()[HEAD_B] = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let (x, _) = batch(&mut ChaCha8Rng::seed_from_u64(2), 4);
        let logits = w.logits(&Subnet::uniform(3, 0), &x).unwrap();
        for r in 0..4 {
            assert_eq!(logits.row(r), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn skip_paths_add_up() {
        // Edges (0,1), (0,2), (1,2) all skip: node2 = node1 + node0 = 2·stem(x).
        let spec = toy();
        let w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(3));
        let (x, _) = batch(&mut ChaCha8Rng::seed_from_u64(4), 5);
        let logits = w.logits(&Subnet::uniform(3, 1), &x).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let sw = tape.leaf(w.params()[STEM_W].clone());
        let sb = tape.leaf(w.params()[STEM_B].clone());
        let stem = tape.affine(xv, sw, sb).unwrap();
        let doubled = tape.scale(stem, 2.0);
        let hw = tape.leaf(w.params()[HEAD_W].clone());
        let hb = tape.leaf(w.params()[HEAD_B].clone());
        let expect = tape.affine(doubled, hw, hb).unwrap();
        for (a, b) in logits.data().iter().zip(tape.value(expect).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn extracted_model_matches_supernet() {
        let spec = toy();
        let w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
        let (x, y) = batch(&mut ChaCha8Rng::seed_from_u64(6), 7);
        for s in enumerate_subnets(&spec, DEFAULT_ENUMERATION_CAP).unwrap() {
            let net = w.extract(&s).unwrap();
            assert_eq!(net.param_count(), complexity(&spec, &s).value());
            let a = w.logits(&s, &x).unwrap();
            let b = net.logits(&x).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12);
            }
            let (la, _) = w.train_loss_and_grads(&s, &x, &y).unwrap();
            let (lb, _) = net.loss_and_grads(&x, &y).unwrap();
            assert!((la - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_only_on_active_slice() {
        let spec = toy();
        let w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        let (x, y) = batch(&mut ChaCha8Rng::seed_from_u64(8), 6);
        for s in enumerate_subnets(&spec, DEFAULT_ENUMERATION_CAP).unwrap() {
            let (_, g) = w.train_loss_and_grads(&s, &x, &y).unwrap();
            let active = w.active_slots(&s);
            assert!(g.slots().all(|slot| active.contains(&slot)));
        }
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let spec =
            SearchSpaceSpec::new(2, vec![(0, 1)], SearchSpaceSpec::default_ops(), 2, 4, 2).unwrap();
        let mut w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        w.params_mut()[HEAD_W] = Tensor::zeros(vec![4, 2]);
        let (x, _) = batch(&mut ChaCha8Rng::seed_from_u64(1), 3);
        let (loss, _) = w
            .train_loss_and_grads(&Subnet::new(vec![3]), &x, &[0, 1, 1])
            .unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn validate_accuracy_edge_cases() {
        let spec =
            SearchSpaceSpec::new(2, vec![(0, 1)], SearchSpaceSpec::default_ops(), 1, 2, 2).unwrap();
        let mut w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        // Constant logits on a balanced set.
        w.params_mut()[HEAD_W] = Tensor::zeros(vec![2, 2]);
        w.params_mut()[HEAD_B] = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let x = Tensor::new(vec![4, 1], vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let val = Dataset::new(x.clone(), vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(w.validate(&Subnet::new(vec![1]), &val).unwrap().1, 0.5);
        // Perfect: stem identity-ish, head separates by sign.
        w.params_mut()[STEM_W] = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        w.params_mut()[STEM_B] = Tensor::zeros(vec![2]);
        w.params_mut()[HEAD_W] = Tensor::new(vec![2, 2], vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
        w.params_mut()[HEAD_B] = Tensor::zeros(vec![2]);
        let (loss, acc) = w.validate(&Subnet::new(vec![1]), &val).unwrap();
        assert_eq!(acc, 1.0);
        let (train_loss, _) = w
            .train_loss_and_grads(&Subnet::new(vec![1]), &x, val.labels())
            .unwrap();
        assert_eq!(loss.to_bits(), train_loss.to_bits());
    }

    #[test]
    fn mutating_a_slot_affects_exactly_its_subnets() {
        let spec = SearchSpaceSpec::new(
            3,
            vec![(0, 1), (1, 2)],
            SearchSpaceSpec::default_ops(),
            2,
            4,
            3,
        )
        .unwrap();
        let base = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(9));
        let (x, _) = batch(&mut ChaCha8Rng::seed_from_u64(10), 6);
        let subnets = enumerate_subnets(&spec, DEFAULT_ENUMERATION_CAP).unwrap();
        for e in 0..2 {
            for o in 2..5 {
                let slot = base.op_slot(e, o).unwrap();
                let mut probe = base.clone();
                for v in probe.params_mut()[slot + 3].data_mut() {
                    *v += 0.5;
                }
                for s in &subnets {
                    let changed = base.logits(s, &x).unwrap() != probe.logits(s, &x).unwrap();
                    // Edge 0's output only matters if edge 1 reads it (not zeroize).
                    let reaches = s.op_at(e) == o && (e == 1 || s.op_at(1) != 0);
                    assert_eq!(changed, reaches, "edge {e} op {o} subnet {s}");
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = toy();
        let w = SupernetWeights::<f64>::init(&spec, &mut ChaCha8Rng::seed_from_u64(11));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        w.save(&path).unwrap();
        let back = SupernetWeights::<f64>::load(&spec, &path).unwrap();
        assert_eq!(back, w);
        let other = SearchSpaceSpec::nb201_shaped(2, 3);
        assert!(matches!(
            SupernetWeights::<f64>::load(&other, &path),
            Err(Error::Checkpoint(_))
        ));
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(SupernetWeights::<f64>::load(&spec, &path).is_err());
    }
}
