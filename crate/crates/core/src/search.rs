//! Subnet selection from a trained supernet: exhaustive argmax and a constrained
//! evolutionary search.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{
    complexity, enumerate_subnets, OpMask, SearchSpaceSpec, Subnet, DEFAULT_ENUMERATION_CAP,
};
use crate::trainers::TrainOutput;

/// Predicted quality of a subnet; higher is better.
pub trait SubnetScorer {
    fn score(&self, subnet: &Subnet) -> Result<f64>;
}

/// Validation accuracy read from whichever trained supernet covers the subnet.
pub struct SupernetScorer<'a, S> {
    supernets: &'a [TrainOutput<S>],
    val: &'a Dataset<S>,
}

impl<'a, S: Scalar> SupernetScorer<'a, S> {
    pub fn new(supernets: &'a [TrainOutput<S>], val: &'a Dataset<S>) -> Self {
        Self { supernets, val }
    }
}

impl<S: Scalar> SubnetScorer for SupernetScorer<'_, S> {
    fn score(&self, subnet: &Subnet) -> Result<f64> {
        let owner = self
            .supernets
            .iter()
            .find(|o| o.mask.contains(subnet))
            .ok_or_else(|| Error::Search(format!("no trained supernet covers {subnet}")))?;
        Ok(owner.weights.validate(subnet, self.val)?.1)
    }
}

/// Scores computed ahead of time (e.g. during ranking evaluation).
#[derive(Debug, Clone, Default)]
pub struct PrecomputedScores(pub BTreeMap<Subnet, f64>);

impl SubnetScorer for PrecomputedScores {
    fn score(&self, subnet: &Subnet) -> Result<f64> {
        self.0
            .get(subnet)
            .copied()
            .ok_or_else(|| Error::Search(format!("no score for {subnet}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub subnet: Subnet,
    pub predicted: f64,
    pub ground_truth: Option<f64>,
    pub complexity: u64,
    /// Parameter-count ceiling; `None` means unconstrained.
    pub constraint: Option<u64>,
    /// Distinct subnets scored.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub population: usize,
    pub generations: usize,
    /// Per-edge probability of resampling the op.
    pub mutation_rate: f64,
    /// Probability a child comes from uniform crossover rather than a copy.
    pub crossover_prob: f64,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 20,
            mutation_rate: 0.1,
            crossover_prob: 0.5,
        }
    }
}

fn feasible(spec: &SearchSpaceSpec, subnet: &Subnet, constraint: Option<u64>) -> bool {
    constraint.is_none_or(|c| complexity(spec, subnet).value() <= c)
}

/// Higher score first, then lexicographically smaller subnet.
fn better(a: (&Subnet, f64), b: (&Subnet, f64)) -> bool {
    match a.1.partial_cmp(&b.1) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => a.0 < b.0,
        _ => false,
    }
}

fn result(
    spec: &SearchSpaceSpec,
    subnet: Subnet,
    predicted: f64,
    constraint: Option<u64>,
    evaluations: usize,
) -> SearchResult {
    SearchResult {
        complexity: complexity(spec, &subnet).value(),
        subnet,
        predicted,
        ground_truth: None,
        constraint,
        evaluations,
    }
}

/// Argmax of the predicted score over every subnet within the parameter ceiling.
pub fn exhaustive_select(
    scorer: &dyn SubnetScorer,
    spec: &SearchSpaceSpec,
    constraint: Option<u64>,
) -> Result<SearchResult> {
    let mut best: Option<(Subnet, f64)> = None;
    let mut evaluations = 0;
    for subnet in enumerate_subnets(spec, DEFAULT_ENUMERATION_CAP)? {
        if !feasible(spec, &subnet, constraint) {
            continue;
        }
        let s = scorer.score(&subnet)?;
        evaluations += 1;
        if best
            .as_ref()
            .is_none_or(|(b, bs)| better((&subnet, s), (b, *bs)))
        {
            best = Some((subnet, s));
        }
    }
    let (subnet, predicted) = best.ok_or_else(|| {
        Error::Search(format!("no subnet satisfies the constraint {constraint:?}"))
    })?;
    Ok(result(spec, subnet, predicted, constraint, evaluations))
}

/// Elitist evolutionary search: the top half survives each generation and the rest is
/// refilled by crossover and mutation; infeasible children are redrawn. Returns the best
/// subnet ever scored.
///
/// When the space is enumerable and the population is at least the number of feasible
/// subnets, the initial population is the whole feasible set.
pub fn evolutionary_select<R: Rng + ?Sized>(
    scorer: &dyn SubnetScorer,
    spec: &SearchSpaceSpec,
    constraint: Option<u64>,
    params: &EvolutionParams,
    rng: &mut R,
) -> Result<SearchResult> {
    if params.population < 2 {
        return Err(Error::Search("population must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&params.mutation_rate) || !(0.0..=1.0).contains(&params.crossover_prob)
    {
        return Err(Error::Search(
            "mutation and crossover rates must lie in [0, 1]".into(),
        ));
    }
    let mask = OpMask::full(spec);
    let mut population = initial_population(spec, &mask, constraint, params.population, rng)?;
    let mut cache: HashMap<Subnet, f64> = HashMap::new();
    let mut best: Option<(Subnet, f64)> = None;
    for generation in 0..params.generations.max(1) {
        let mut scored = Vec::with_capacity(population.len());
        for subnet in population {
            let s = match cache.get(&subnet) {
                Some(&s) => s,
                None => {
                    let s = scorer.score(&subnet)?;
                    cache.insert(subnet.clone(), s);
                    s
                }
            };
            if best
                .as_ref()
                .is_none_or(|(b, bs)| better((&subnet, s), (b, *bs)))
            {
                best = Some((subnet.clone(), s));
            }
            scored.push((subnet, s));
        }
        if generation + 1 == params.generations.max(1) {
            break;
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        let target = params.population;
        scored.truncate(target.div_ceil(2));
        let parents: Vec<Subnet> = scored.into_iter().map(|(s, _)| s).collect();
        population = parents.clone();
        while population.len() < target {
            population.push(child(spec, &parents, constraint, params, rng));
        }
    }
    let (subnet, predicted) = best.expect("at least one generation is scored");
    Ok(result(spec, subnet, predicted, constraint, cache.len()))
}

fn initial_population<R: Rng + ?Sized>(
    spec: &SearchSpaceSpec,
    mask: &OpMask,
    constraint: Option<u64>,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Subnet>> {
    if spec
        .num_subnets()
        .is_some_and(|c| c <= DEFAULT_ENUMERATION_CAP)
    {
        let all: Vec<Subnet> = enumerate_subnets(spec, DEFAULT_ENUMERATION_CAP)?
            .into_iter()
            .filter(|s| feasible(spec, s, constraint))
            .collect();
        if all.is_empty() {
            return Err(Error::Search(format!(
                "no subnet satisfies the constraint {constraint:?}"
            )));
        }
        if size >= all.len() {
            return Ok(all);
        }
    }
    let mut out = Vec::with_capacity(size);
    for _ in 0..size * 10 {
        let s = mask.sample(rng);
        if feasible(spec, &s, constraint) {
            out.push(s);
            if out.len() == size {
                return Ok(out);
            }
        }
    }
    Err(Error::Search(format!(
        "could not draw {size} subnets under the constraint {constraint:?} in {} tries",
        size * 10
    )))
}

fn child<R: Rng + ?Sized>(
    spec: &SearchSpaceSpec,
    parents: &[Subnet],
    constraint: Option<u64>,
    params: &EvolutionParams,
    rng: &mut R,
) -> Subnet {
    let n = spec.num_ops();
    for _ in 0..100 {
        let a = &parents[rng.random_range(0..parents.len())];
        let mut choices = a.choices().to_vec();
        if rng.random_bool(params.crossover_prob) {
            let b = &parents[rng.random_range(0..parents.len())];
            for (c, &other) in choices.iter_mut().zip(b.choices()) {
                if rng.random_bool(0.5) {
                    *c = other;
                }
            }
        }
        for c in choices.iter_mut() {
            if rng.random_bool(params.mutation_rate) {
                *c = rng.random_range(0..n);
            }
        }
        let s = Subnet::new(choices);
        if feasible(spec, &s, constraint) {
            return s;
        }
    }
    // Parents are feasible, so a copy always is.
    parents[rng.random_range(0..parents.len())].clone()
}
