//! The toy cell search space: a DAG whose edges each carry one candidate operation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpTag {
    Zeroize,
    Skip,
    DenseNarrow,
    DenseMid,
    DenseWide,
}

/// A candidate operation. Dense ops are `affine(f→h) → relu → affine(h→f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperationKind {
    pub tag: OpTag,
    pub hidden_width: usize,
}

impl OperationKind {
    pub const ZEROIZE: Self = Self {
        tag: OpTag::Zeroize,
        hidden_width: 0,
    };
    pub const SKIP: Self = Self {
        tag: OpTag::Skip,
        hidden_width: 0,
    };

    pub fn dense(tag: OpTag, hidden_width: usize) -> Self {
        Self { tag, hidden_width }
    }

    pub fn is_parameterized(&self) -> bool {
        !matches!(self.tag, OpTag::Zeroize | OpTag::Skip)
    }

    pub fn param_count(&self, feature_dim: usize) -> u64 {
        if !self.is_parameterized() {
            return 0;
        }
        let (f, h) = (feature_dim as u64, self.hidden_width as u64);
        f * h + h + h * f + f
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tag {
            OpTag::Zeroize => write!(f, "zeroize"),
            OpTag::Skip => write!(f, "skip"),
            OpTag::DenseNarrow => write!(f, "dense_narrow({})", self.hidden_width),
            OpTag::DenseMid => write!(f, "dense_mid({})", self.hidden_width),
            OpTag::DenseWide => write!(f, "dense_wide({})", self.hidden_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceSpec {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    candidate_ops: Vec<OperationKind>,
    input_dim: usize,
    feature_dim: usize,
    num_classes: usize,
}

impl SearchSpaceSpec {
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        candidate_ops: Vec<OperationKind>,
        input_dim: usize,
        feature_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::config("a cell needs at least 2 nodes"));
        }
        if edges.is_empty() {
            return Err(Error::config("a cell needs at least one edge"));
        }
        for &(i, j) in &edges {
            if i >= j || j >= num_nodes {
                return Err(Error::config(format!(
                    "edge ({i}, {j}) must satisfy i < j < {num_nodes}"
                )));
            }
        }
        let mut sorted = edges.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != edges.len() {
            return Err(Error::config("duplicate edges"));
        }
        if candidate_ops.is_empty() {
            return Err(Error::config("candidate op set is empty"));
        }
        let mut last_dense: Option<(OpTag, usize)> = None;
        for op in &candidate_ops {
            if op.is_parameterized() {
                if op.hidden_width == 0 {
                    return Err(Error::config(format!("{op} has zero hidden width")));
                }
                if let Some((tag, width)) = last_dense {
                    if dense_rank(op.tag) <= dense_rank(tag) || op.hidden_width <= width {
                        return Err(Error::config(
                            "dense ops must be listed narrow < mid < wide with strictly increasing widths",
                        ));
                    }
                }
                last_dense = Some((op.tag, op.hidden_width));
            } else if op.hidden_width != 0 {
                return Err(Error::config(format!("{op} must have hidden width 0")));
            }
        }
        if input_dim == 0 || feature_dim == 0 {
            return Err(Error::config("input and feature widths must be positive"));
        }
        if num_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        Ok(Self {
            num_nodes,
            edges,
            candidate_ops,
            input_dim,
            feature_dim,
            num_classes,
        })
    }

    /// All `i < j` pairs, ordered by target node then source, as in NAS-Bench-201 cells.
    pub fn complete_dag_edges(num_nodes: usize) -> Vec<(usize, usize)> {
        (1..num_nodes)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .collect()
    }

    pub fn default_ops() -> Vec<OperationKind> {
        vec![
            OperationKind::ZEROIZE,
            OperationKind::SKIP,
            OperationKind::dense(OpTag::DenseNarrow, 4),
            OperationKind::dense(OpTag::DenseMid, 8),
            OperationKind::dense(OpTag::DenseWide, 16),
        ]
    }

    /// 3 nodes, 3 edges, 5 ops: 125 subnets.
    pub fn toy(input_dim: usize, num_classes: usize) -> Self {
        Self::new(
            3,
            Self::complete_dag_edges(3),
            Self::default_ops(),
            input_dim,
            8,
            num_classes,
        )
        .expect("toy spec is valid")
    }

    /// 4 nodes, 6 edges, 5 ops: 15625 subnets.
    pub fn nb201_shaped(input_dim: usize, num_classes: usize) -> Self {
        Self::new(
            4,
            Self::complete_dag_edges(4),
            Self::default_ops(),
            input_dim,
            8,
            num_classes,
        )
        .expect("nb201-shaped spec is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn candidate_ops(&self) -> &[OperationKind] {
        &self.candidate_ops
    }

    pub fn num_ops(&self) -> usize {
        self.candidate_ops.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `n^|edges|`, or `None` on overflow.
    pub fn num_subnets(&self) -> Option<usize> {
        self.num_ops().checked_pow(self.num_edges() as u32)
    }

    /// Parameters of the stem and head, shared by every subnet.
    pub fn stem_head_params(&self) -> u64 {
        let (d, f, c) = (
            self.input_dim as u64,
            self.feature_dim as u64,
            self.num_classes as u64,
        );
        d * f + f + f * c + c
    }

    pub fn op_params(&self, op: usize) -> u64 {
        self.candidate_ops[op].param_count(self.feature_dim)
    }
}

fn dense_rank(tag: OpTag) -> u8 {
    match tag {
        OpTag::DenseNarrow => 0,
        OpTag::DenseMid => 1,
        OpTag::DenseWide => 2,
        _ => unreachable!("only dense ops are ranked"),
    }
}

/// One candidate-op index per edge. Ordering is lexicographic over the choices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subnet {
    choices: Vec<usize>,
}

impl Subnet {
    pub fn new(choices: Vec<usize>) -> Self {
        Self { choices }
    }

    pub fn uniform(num_edges: usize, op: usize) -> Self {
        Self {
            choices: vec![op; num_edges],
        }
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    /// `op(α, e)`.
    pub fn op_at(&self, edge: usize) -> usize {
        self.choices[edge]
    }

    pub fn with_op(&self, edge: usize, op: usize) -> Self {
        let mut choices = self.choices.clone();
        choices[edge] = op;
        Self { choices }
    }

    pub fn validate(&self, spec: &SearchSpaceSpec) -> Result<()> {
        if self.choices.len() != spec.num_edges() {
            return Err(Error::input(format!(
                "subnet {self} has {} choices for {} edges",
                self.choices.len(),
                spec.num_edges()
            )));
        }
        if let Some(&bad) = self.choices.iter().find(|&&c| c >= spec.num_ops()) {
            return Err(Error::input(format!(
                "subnet {self}: op index {bad} out of range for {} ops",
                spec.num_ops()
            )));
        }
        Ok(())
    }

    /// Position in the lexicographic enumeration of the full space.
    pub fn index(&self, num_ops: usize) -> usize {
        self.choices.iter().fold(0, |acc, &c| acc * num_ops + c)
    }

    pub fn from_index(mut index: usize, num_edges: usize, num_ops: usize) -> Self {
        let mut choices = vec![0; num_edges];
        for slot in choices.iter_mut().rev() {
            *slot = index % num_ops;
            index /= num_ops;
        }
        Self { choices }
    }
}

impl fmt::Display for Subnet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.choices.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Subnet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let choices = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::input(format!("bad subnet string {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { choices })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComplexityScore(pub u64);

impl ComplexityScore {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for ComplexityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Per-edge sets of allowed op indices. The full space allows every op on every edge;
/// few-shot sub-supernets restrict one edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpMask {
    allowed: Vec<Vec<usize>>,
}

impl OpMask {
    pub fn full(spec: &SearchSpaceSpec) -> Self {
        Self {
            allowed: vec![(0..spec.num_ops()).collect(); spec.num_edges()],
        }
    }

    pub fn restrict_edge(mut self, edge: usize, ops: Vec<usize>) -> Result<Self> {
        if edge >= self.allowed.len() {
            return Err(Error::config(format!("edge {edge} out of range")));
        }
        if ops.is_empty() {
            return Err(Error::config("restricted op set is empty"));
        }
        let mut ops = ops;
        ops.sort_unstable();
        ops.dedup();
        self.allowed[edge] = ops;
        Ok(self)
    }

    pub fn allowed(&self, edge: usize) -> &[usize] {
        &self.allowed[edge]
    }

    pub fn contains(&self, subnet: &Subnet) -> bool {
        subnet.choices().len() == self.allowed.len()
            && subnet
                .choices()
                .iter()
                .zip(&self.allowed)
                .all(|(c, ops)| ops.contains(c))
    }

    pub fn size(&self) -> Option<usize> {
        self.allowed
            .iter()
            .try_fold(1usize, |acc, ops| acc.checked_mul(ops.len()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Subnet {
        Subnet::new(
            self.allowed
                .iter()
                .map(|ops| ops[rng.random_range(0..ops.len())])
                .collect(),
        )
    }

    /// Every subnet in the mask, in lexicographic order.
    pub fn enumerate(&self, cap: usize) -> Result<Vec<Subnet>> {
        let count = self.size();
        match count {
            Some(c) if c <= cap => {}
            _ => {
                return Err(Error::Enumeration {
                    count: count.map_or_else(|| "overflowing".to_string(), |c| c.to_string()),
                    cap,
                })
            }
        }
        let mut out = Vec::with_capacity(count.unwrap_or(0));
        let mut cursor = vec![0usize; self.allowed.len()];
        loop {
            out.push(Subnet::new(
                cursor
                    .iter()
                    .zip(&self.allowed)
                    .map(|(&k, ops)| ops[k])
                    .collect(),
            ));
            let mut e = self.allowed.len();
            loop {
                if e == 0 {
                    return Ok(out);
                }
                e -= 1;
                cursor[e] += 1;
                if cursor[e] < self.allowed[e].len() {
                    break;
                }
                cursor[e] = 0;
            }
        }
    }

    /// Exact complexity extrema, computed per edge.
    pub fn complexity_extrema(&self, spec: &SearchSpaceSpec) -> (ComplexityScore, ComplexityScore) {
        let base = spec.stem_head_params();
        let (mut lo, mut hi) = (base, base);
        for ops in &self.allowed {
            let costs = ops.iter().map(|&o| spec.op_params(o));
            lo += costs.clone().min().unwrap_or(0);
            hi += costs.max().unwrap_or(0);
        }
        (ComplexityScore(lo), ComplexityScore(hi))
    }
}

pub fn enumerate_subnets(spec: &SearchSpaceSpec, cap: usize) -> Result<Vec<Subnet>> {
    OpMask::full(spec).enumerate(cap)
}

pub fn sample_uniform<R: Rng + ?Sized>(spec: &SearchSpaceSpec, rng: &mut R) -> Subnet {
    Subnet::new(
        (0..spec.num_edges())
            .map(|_| rng.random_range(0..spec.num_ops()))
            .collect(),
    )
}

/// Exact parameter count of the subnet, stem and head included.
pub fn complexity(spec: &SearchSpaceSpec, subnet: &Subnet) -> ComplexityScore {
    let edges: u64 = subnet.choices().iter().map(|&o| spec.op_params(o)).sum();
    ComplexityScore(spec.stem_head_params() + edges)
}

pub fn complexity_extrema(spec: &SearchSpaceSpec) -> (ComplexityScore, ComplexityScore) {
    OpMask::full(spec).complexity_extrema(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn spec_with(edges: usize, ops: Vec<OperationKind>) -> SearchSpaceSpec {
        // A chain-free layout: every edge from node 0 to a distinct later node.
        let e = (1..=edges).map(|j| (0, j)).collect();
        SearchSpaceSpec::new(edges + 1, e, ops, 2, 8, 3).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        let five = SearchSpaceSpec::default_ops();
        assert_eq!(
            enumerate_subnets(&spec_with(1, five.clone()), DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .len(),
            5
        );
        let nb = SearchSpaceSpec::nb201_shaped(2, 3);
        let all = enumerate_subnets(&nb, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 15625);
        let three = five[..3].to_vec();
        let s = spec_with(4, three);
        let all = enumerate_subnets(&s, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 81);
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 81);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        for (i, s) in all.iter().enumerate() {
            assert_eq!(s.index(3), i);
            assert_eq!(&Subnet::from_index(i, 4, 3), s);
        }
    }

    #[test]
    fn enumeration_cap() {
        let nb = SearchSpaceSpec::nb201_shaped(2, 3);
        assert!(matches!(
            enumerate_subnets(&nb, 1000),
            Err(Error::Enumeration { .. })
        ));
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let toy = SearchSpaceSpec::toy(2, 3);
        let a = sample_uniform(&toy, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_uniform(&toy, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);

        let s = spec_with(1, SearchSpaceSpec::default_ops());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[sample_uniform(&s, &mut rng).op_at(0)] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((0.17..=0.23).contains(&f), "{counts:?}");
        }

        let single = spec_with(1, vec![OperationKind::SKIP]);
        for _ in 0..10 {
            assert_eq!(sample_uniform(&single, &mut rng), Subnet::new(vec![0]));
        }
    }

    #[test]
    fn complexity_examples() {
        let toy = SearchSpaceSpec::toy(2, 3);
        let base = toy.stem_head_params();
        assert_eq!(base, 2 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(complexity(&toy, &Subnet::uniform(3, 0)).value(), base);
        let (lo, hi) = complexity_extrema(&toy);
        assert_eq!(lo.value(), base);
        assert_eq!(complexity(&toy, &Subnet::uniform(3, 4)), hi);

        let narrow = spec_with(1, vec![OperationKind::dense(OpTag::DenseNarrow, 4)]);
        assert_eq!(
            complexity(&narrow, &Subnet::new(vec![0])).value(),
            76 + base
        );
        assert_eq!(complexity_extrema(&narrow).0, complexity_extrema(&narrow).1);
    }

    #[test]
    fn extrema_match_enumeration() {
        let s = spec_with(
            4,
            vec![
                OperationKind::SKIP,
                OperationKind::dense(OpTag::DenseNarrow, 3),
                OperationKind::dense(OpTag::DenseWide, 9),
            ],
        );
        let all = enumerate_subnets(&s, DEFAULT_ENUMERATION_CAP).unwrap();
        let cs: Vec<_> = all.iter().map(|a| complexity(&s, a)).collect();
        let (lo, hi) = complexity_extrema(&s);
        assert_eq!(lo, *cs.iter().min().unwrap());
        assert_eq!(hi, *cs.iter().max().unwrap());
    }

    #[test]
    fn complexity_is_monotone_in_op_cost() {
        let toy = SearchSpaceSpec::toy(2, 3);
        for a in enumerate_subnets(&toy, DEFAULT_ENUMERATION_CAP).unwrap() {
            for e in 0..toy.num_edges() {
                for o in 0..toy.num_ops() {
                    let b = a.with_op(e, o);
                    if toy.op_params(o) > toy.op_params(a.op_at(e)) {
                        assert!(complexity(&toy, &b) > complexity(&toy, &a));
                    }
                }
            }
        }
    }

    #[test]
    fn subnet_string_round_trip_and_validation() {
        let s: Subnet = "2,0,4".parse().unwrap();
        assert_eq!(s.choices(), &[2, 0, 4]);
        assert_eq!(s.to_string(), "2,0,4");
        let toy = SearchSpaceSpec::toy(2, 3);
        assert!(s.validate(&toy).is_ok());
        assert!(Subnet::new(vec![5, 0, 0]).validate(&toy).is_err());
        assert!(Subnet::new(vec![0, 0]).validate(&toy).is_err());
        assert!("1,x".parse::<Subnet>().is_err());
    }

    #[test]
    fn spec_validation() {
        let ops = SearchSpaceSpec::default_ops();
        assert!(SearchSpaceSpec::new(1, vec![], ops.clone(), 2, 8, 3).is_err());
        assert!(SearchSpaceSpec::new(3, vec![(1, 0)], ops.clone(), 2, 8, 3).is_err());
        assert!(SearchSpaceSpec::new(3, vec![(0, 1)], vec![], 2, 8, 3).is_err());
        let bad_order = vec![
            OperationKind::dense(OpTag::DenseWide, 16),
            OperationKind::dense(OpTag::DenseNarrow, 4),
        ];
        assert!(SearchSpaceSpec::new(2, vec![(0, 1)], bad_order, 2, 8, 3).is_err());
        assert_eq!(SearchSpaceSpec::complete_dag_edges(4).len(), 6);
    }

    #[test]
    fn mask_restriction() {
        let toy = SearchSpaceSpec::toy(2, 3);
        let m = OpMask::full(&toy).restrict_edge(1, vec![3]).unwrap();
        assert_eq!(m.size(), Some(25));
        let subs = m.enumerate(DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(subs.iter().all(|s| s.op_at(1) == 3 && m.contains(s)));
        let (lo, hi) = m.complexity_extrema(&toy);
        let cs: Vec<_> = subs.iter().map(|s| complexity(&toy, s)).collect();
        assert_eq!(
            (lo, hi),
            (*cs.iter().min().unwrap(), *cs.iter().max().unwrap())
        );
    }
}
