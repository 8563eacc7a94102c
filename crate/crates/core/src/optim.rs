//! SGD with momentum, with one momentum buffer per subnet cluster while weights stay shared.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{SearchSpaceSpec, Subnet, DEFAULT_ENUMERATION_CAP};

/// Gradients for a subset of parameter slots, keyed by slot index in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<S> {
    entries: BTreeMap<usize, Tensor<S>>,
}

impl<S: Scalar> Default for ParamGrads<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamGrads<S> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, slot: usize, grad: Tensor<S>) {
        self.entries.insert(slot, grad);
    }

    pub fn get(&self, slot: usize) -> Option<&Tensor<S>> {
        self.entries.get(&slot)
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor<S>)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `self += scale · other`, slot-wise, creating missing slots.
    pub fn accumulate_scaled(&mut self, other: &ParamGrads<S>, scale: S) {
        for (&slot, g) in &other.entries {
            match self.entries.get_mut(&slot) {
                Some(acc) => acc.add_scaled(g, scale),
                None => {
                    let mut t = g.clone();
                    t.scale(scale);
                    self.entries.insert(slot, t);
                }
            }
        }
    }

    /// Adds `λ·W` to every present slot (coupled weight decay).
    pub fn add_weight_decay(&mut self, weights: &[Tensor<S>], lambda: S) {
        if lambda == S::zero() {
            return;
        }
        for (&slot, g) in self.entries.iter_mut() {
            g.add_scaled(&weights[slot], lambda);
        }
    }

    pub fn norm(&self) -> S {
        self.entries
            .values()
            .map(Tensor::sum_squares)
            .sum::<S>()
            .sqrt()
    }

    /// Dense vector over all slots of `shapes`, zero where no gradient exists.
    pub fn flatten(&self, shapes: &[Tensor<S>]) -> Vec<S> {
        let mut out = Vec::with_capacity(shapes.iter().map(Tensor::len).sum());
        for (slot, t) in shapes.iter().enumerate() {
            match self.entries.get(&slot) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat_n(S::zero(), t.len())),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    OperationBased,
    Random,
}

/// A partition of the search space into momentum clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    mode: ClusterMode,
    chosen_edges: Vec<usize>,
    num_clusters: usize,
    num_ops: usize,
    /// Cluster id per subnet, indexed by lexicographic subnet index (Random mode only).
    table: Vec<usize>,
}

impl ClusterAssignment {
    /// A single cluster: plain shared momentum.
    pub fn single(spec: &SearchSpaceSpec) -> Self {
        Self {
            mode: ClusterMode::OperationBased,
            chosen_edges: Vec::new(),
            num_clusters: 1,
            num_ops: spec.num_ops(),
            table: Vec::new(),
        }
    }

    /// Clusters by the op tuple at `edges`; `n^|edges|` clusters.
    pub fn operation_based(spec: &SearchSpaceSpec, edges: Vec<usize>) -> Result<Self> {
        if edges.is_empty() || edges.len() > spec.num_edges() {
            return Err(Error::config(format!(
                "need between 1 and {} clustering edges, got {}",
                spec.num_edges(),
                edges.len()
            )));
        }
        let mut seen = edges.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != edges.len() || seen.iter().any(|&e| e >= spec.num_edges()) {
            return Err(Error::config(format!("invalid clustering edges {edges:?}")));
        }
        let num_clusters = spec
            .num_ops()
            .checked_pow(edges.len() as u32)
            .ok_or_else(|| Error::config("too many clusters"))?;
        Ok(Self {
            mode: ClusterMode::OperationBased,
            chosen_edges: edges,
            num_clusters,
            num_ops: spec.num_ops(),
            table: Vec::new(),
        })
    }

    /// Shuffles the enumerated subnets and deals them round-robin into `num_clusters`
    /// clusters, so cluster sizes differ by at most one.
    pub fn random<R: Rng + ?Sized>(
        spec: &SearchSpaceSpec,
        num_clusters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_clusters == 0 {
            return Err(Error::config("need at least one cluster"));
        }
        let count = spec
            .num_subnets()
            .filter(|&c| c <= DEFAULT_ENUMERATION_CAP)
            .ok_or(Error::Enumeration {
                count: spec
                    .num_subnets()
                    .map_or_else(|| "overflowing".into(), |c| c.to_string()),
                cap: DEFAULT_ENUMERATION_CAP,
            })?;
        if num_clusters > count {
            return Err(Error::config(format!(
                "{num_clusters} clusters for {count} subnets"
            )));
        }
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(rng);
        let mut table = vec![0; count];
        for (i, &subnet) in order.iter().enumerate() {
            table[subnet] = i % num_clusters;
        }
        Ok(Self {
            mode: ClusterMode::Random,
            chosen_edges: Vec::new(),
            num_clusters,
            num_ops: spec.num_ops(),
            table,
        })
    }

    pub fn mode(&self) -> ClusterMode {
        self.mode
    }

    pub fn chosen_edges(&self) -> &[usize] {
        &self.chosen_edges
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_of(&self, subnet: &Subnet) -> usize {
        match self.mode {
            ClusterMode::OperationBased => self
                .chosen_edges
                .iter()
                .fold(0, |acc, &e| acc * self.num_ops + subnet.op_at(e)),
            ClusterMode::Random => self.table[subnet.index(self.num_ops)],
        }
    }

    /// Op tuple over the chosen edges for an operation-based cluster id.
    pub fn cluster_ops(&self, cluster: usize) -> Vec<usize> {
        let mut ops = vec![0; self.chosen_edges.len()];
        let mut rest = cluster;
        for slot in ops.iter_mut().rev() {
            *slot = rest % self.num_ops;
            rest /= self.num_ops;
        }
        ops
    }
}

/// Builds an assignment, drawing `count` distinct clustering edges (OperationBased) or
/// `count` random clusters (Random) from `rng`.
pub fn build_assignment<R: Rng + ?Sized>(
    spec: &SearchSpaceSpec,
    mode: ClusterMode,
    count: usize,
    rng: &mut R,
) -> Result<ClusterAssignment> {
    match mode {
        ClusterMode::OperationBased => {
            if count == 0 || count > spec.num_edges() {
                return Err(Error::config(format!(
                    "cannot choose {count} of {} edges",
                    spec.num_edges()
                )));
            }
            let mut edges: Vec<usize> = (0..spec.num_edges()).collect();
            edges.shuffle(rng);
            edges.truncate(count);
            edges.sort_unstable();
            ClusterAssignment::operation_based(spec, edges)
        }
        ClusterMode::Random => ClusterAssignment::random(spec, count, rng),
    }
}

/// Per-cluster momentum buffers, each congruent with the full shared weight set.
#[derive(Debug, Clone)]
pub struct ClusteredMomentum<S> {
    buffers: Vec<Vec<Tensor<S>>>,
    beta: S,
    weight_decay: S,
}

impl<S: Scalar> ClusteredMomentum<S> {
    pub fn new(
        num_clusters: usize,
        weights: &[Tensor<S>],
        beta: S,
        weight_decay: S,
    ) -> Result<Self> {
        if num_clusters == 0 {
            return Err(Error::config("need at least one momentum buffer"));
        }
        if !(beta >= S::zero() && beta < S::one()) {
            return Err(Error::config(format!("momentum {beta} outside [0, 1)")));
        }
        if !(weight_decay >= S::zero()) {
            return Err(Error::config("weight decay must be non-negative"));
        }
        let zeros: Vec<Tensor<S>> = weights
            .iter()
            .map(|w| Tensor::zeros(w.shape().to_vec()))
            .collect();
        Ok(Self {
            buffers: vec![zeros; num_clusters],
            beta,
            weight_decay,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.buffers.len()
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    pub fn weight_decay(&self) -> S {
        self.weight_decay
    }

    pub fn buffer(&self, cluster: usize) -> &[Tensor<S>] {
        &self.buffers[cluster]
    }

    pub fn flatten_buffer(&self, cluster: usize) -> Vec<S> {
        self.buffers[cluster]
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// One momentum-SGD step on the slots present in `grads`, using cluster `cluster`'s buffer.
    ///
    /// With `lr_inside == false`: `μ ← βμ + (g + λW)`, `W ← W − η·μ`.
    /// With `lr_inside == true` the gradient already carries the LR (and decay):
    /// `μ ← βμ + g`, `W ← W − μ`; `lr` is ignored.
    pub fn momentum_step(
        &mut self,
        cluster: usize,
        grads: &ParamGrads<S>,
        weights: &mut [Tensor<S>],
        lr: S,
        lr_inside: bool,
    ) -> Result<()> {
        if cluster >= self.buffers.len() {
            return Err(Error::input(format!(
                "cluster {cluster} out of range for {} buffers",
                self.buffers.len()
            )));
        }
        if weights.len() != self.buffers[cluster].len() {
            return Err(Error::dim(format!(
                "{} weight slots for {} buffer slots",
                weights.len(),
                self.buffers[cluster].len()
            )));
        }
        for (slot, g) in grads.iter() {
            if slot >= weights.len() || g.shape() != weights[slot].shape() {
                return Err(Error::dim(format!(
                    "gradient for slot {slot} does not match weights"
                )));
            }
        }
        let buf = &mut self.buffers[cluster];
        for (slot, g) in grads.iter() {
            let mu = buf[slot].data_mut();
            let w = weights[slot].data_mut();
            if lr_inside {
                for ((m, wv), &gv) in mu.iter_mut().zip(w.iter_mut()).zip(g.data()) {
                    *m = self.beta * *m + gv;
                    *wv -= *m;
                }
            } else {
                for ((m, wv), &gv) in mu.iter_mut().zip(w.iter_mut()).zip(g.data()) {
                    *m = self.beta * *m + (gv + self.weight_decay * *wv);
                    *wv -= lr * *m;
                }
            }
        }
        Ok(())
    }
}
