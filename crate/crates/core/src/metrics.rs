//! Ranking-consistency and unfairness metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Subnet;

fn cmp<T: PartialOrd>(a: &T, b: &T) -> Result<Ordering> {
    a.partial_cmp(b)
        .ok_or_else(|| Error::input("scores must be totally ordered (NaN found)"))
}

/// Kendall's tau with tied pairs counted as neither concordant nor discordant and
/// the denominator fixed at `n(n−1)/2`.
///
/// Knight's algorithm: sort by `(a, b)`, count the exchanges a merge sort on `b` needs,
/// then `C − D = n₀ − n_a − n_b + n_ab − 2·swaps`.
pub fn kendall_tau<A: PartialOrd, B: PartialOrd>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "score lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::input("need at least two scores"));
    }
    // Validate orderability up front so the sorts below can unwrap.
    for w in a.windows(2) {
        cmp(&w[0], &w[1])?;
    }
    for w in b.windows(2) {
        cmp(&w[0], &w[1])?;
    }
    let by = |i: &usize, j: &usize| b[*i].partial_cmp(&b[*j]).expect("checked");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|i, j| {
        a[*i]
            .partial_cmp(&a[*j])
            .expect("checked")
            .then_with(|| by(i, j))
    });

    let tied_pairs = |runs: &mut dyn Iterator<Item = bool>| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for same in runs {
            if same {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let ties_a = tied_pairs(&mut idx.windows(2).map(|w| a[w[0]] == a[w[1]]));
    let ties_ab = tied_pairs(
        &mut idx
            .windows(2)
            .map(|w| a[w[0]] == a[w[1]] && b[w[0]] == b[w[1]]),
    );

    let swaps = merge_count(&mut idx, &by);
    let ties_b = tied_pairs(&mut idx.windows(2).map(|w| b[w[0]] == b[w[1]]));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let numerator = n0 as i64 - ties_a as i64 - ties_b as i64 + ties_ab as i64 - 2 * swaps as i64;
    Ok(numerator as f64 / n0 as f64)
}

/// Stable merge sort of `idx` by `key`, returning the number of strictly inverted pairs.
fn merge_count(idx: &mut [usize], key: &dyn Fn(&usize, &usize) -> Ordering) -> u64 {
    let n = idx.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut idx[..mid], key) + merge_count(&mut idx[mid..], key);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if key(&idx[j], &idx[i]) == Ordering::Less {
            swaps += (mid - i) as u64;
            merged.push(idx[j]);
            j += 1;
        } else {
            merged.push(idx[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&idx[i..mid]);
    merged.extend_from_slice(&idx[j..n]);
    idx.copy_from_slice(&merged);
    swaps
}

/// Complexity Bias: among misranked pairs, the fraction whose lower-predicted member
/// has strictly higher complexity. Undefined when nothing is misranked.
pub fn complexity_bias<C: PartialOrd>(gt: &[f64], pred: &[f64], complexities: &[C]) -> Result<f64> {
    if gt.len() != pred.len() || gt.len() != complexities.len() {
        return Err(Error::input(
            "gt, pred and complexities must have equal lengths",
        ));
    }
    let mut misranked = 0u64;
    let mut biased = 0u64;
    for i in 0..gt.len() {
        for j in i + 1..gt.len() {
            let sg = cmp(&gt[i], &gt[j])?;
            let sp = cmp(&pred[i], &pred[j])?;
            if sg == Ordering::Equal || sp == Ordering::Equal || sg == sp {
                continue;
            }
            misranked += 1;
            let (low, high) = if sp == Ordering::Less { (i, j) } else { (j, i) };
            if cmp(&complexities[low], &complexities[high])? == Ordering::Greater {
                biased += 1;
            }
        }
    }
    if misranked == 0 {
        return Err(Error::UndefinedMetric("no misranked pairs".into()));
    }
    Ok(biased as f64 / misranked as f64)
}

/// Complexity-Convergence Correlation: Kendall's tau of complexity against convergence ratio.
pub fn c3<C: PartialOrd>(complexities: &[C], convergence_ratios: &[f64]) -> Result<f64> {
    kendall_tau(complexities, convergence_ratios)
}

pub fn convergence_ratio(supernet_acc: f64, standalone_acc: f64) -> Result<f64> {
    if standalone_acc == 0.0 {
        return Err(Error::UndefinedMetric(
            "stand-alone accuracy is zero".into(),
        ));
    }
    Ok(supernet_acc / standalone_acc)
}

/// Flattened gradient and momentum vectors captured during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTrace {
    pub steps: Vec<usize>,
    /// Momentum cluster that produced each logged vector.
    pub clusters: Vec<usize>,
    pub gradients: Vec<Vec<f64>>,
    pub momentums: Vec<Vec<f64>>,
    /// Number of logged vectors per window.
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Gradients,
    Momentums,
}

impl ConsistencyTrace {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn push(&mut self, step: usize, cluster: usize, gradient: Vec<f64>, momentum: Vec<f64>) {
        self.steps.push(step);
        self.clusters.push(cluster);
        self.gradients.push(gradient);
        self.momentums.push(momentum);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Per window: population std of every coordinate across the window's vectors,
/// averaged over coordinates.
///
/// Vectors are compared only within their momentum cluster; a window's value is the
/// count-weighted mean over clusters holding at least two of its vectors. With one cluster
/// this is the plain per-window std. Windows without any such cluster are dropped.
pub fn consistency_std(trace: &ConsistencyTrace, which: TraceKind) -> Result<Vec<f64>> {
    let vectors = match which {
        TraceKind::Gradients => &trace.gradients,
        TraceKind::Momentums => &trace.momentums,
    };
    if trace.window < 2 {
        return Err(Error::input("consistency window needs at least 2 vectors"));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::input("trace vectors differ in dimension"));
    }
    if trace.clusters.len() != vectors.len() {
        return Err(Error::input("trace needs one cluster id per vector"));
    }
    let mut out = Vec::new();
    for (chunk, ids) in vectors
        .chunks(trace.window)
        .zip(trace.clusters.chunks(trace.window))
    {
        let mut groups: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
        for (v, &c) in chunk.iter().zip(ids) {
            groups.entry(c).or_default().push(v.clone());
        }
        let (mut total, mut count) = (0.0, 0usize);
        for group in groups.values().filter(|g| g.len() >= 2) {
            total += window_std(group) * group.len() as f64;
            count += group.len();
        }
        if count > 0 {
            out.push(total / count as f64);
        }
    }
    Ok(out)
}

fn window_std(chunk: &[Vec<f64>]) -> f64 {
    let dim = chunk[0].len();
    if dim == 0 {
        return 0.0;
    }
    let k = chunk.len() as f64;
    let mut total = 0.0;
    for c in 0..dim {
        let mean = chunk.iter().map(|v| v[c]).sum::<f64>() / k;
        let var = chunk.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / k;
        total += var.sqrt();
    }
    total / dim as f64
}

/// One subnet's ground truth, supernet prediction and derived values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub subnet: Subnet,
    pub gt: f64,
    pub pred: f64,
    pub complexity: u64,
    pub cr: f64,
}

/// Keeps the `ceil(fraction·N)` rows with the highest ground truth; ties keep the
/// lexicographically smaller subnet first. Output is in that ranked order.
pub fn top_fraction_filter(rows: &[RankingRow], fraction: f64) -> Result<Vec<RankingRow>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::input(format!("fraction {fraction} outside (0, 1]")));
    }
    let keep = (fraction * rows.len() as f64).ceil() as usize;
    let mut sorted = rows.to_vec();
    sorted.sort_by(|x, y| {
        y.gt.partial_cmp(&x.gt)
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.subnet.cmp(&y.subnet))
    });
    sorted.truncate(keep);
    Ok(sorted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub rows: Vec<RankingRow>,
    pub kendall_tau: f64,
    /// `None` when no pair is misranked.
    pub cb: Option<f64>,
    pub c3: Option<f64>,
    /// Metrics on the top-fraction subset.
    pub top_fraction: f64,
    pub top_kendall_tau: Option<f64>,
    pub top_cb: Option<f64>,
    pub top_c3: Option<f64>,
}

/// The headline numbers of a report, as persisted in `ranking_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub num_subnets: usize,
    pub kendall_tau: f64,
    pub cb: Option<f64>,
    pub c3: Option<f64>,
    pub top_fraction: f64,
    pub top_num_subnets: usize,
    pub top_kendall_tau: Option<f64>,
    pub top_cb: Option<f64>,
    pub top_c3: Option<f64>,
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn metrics_of(rows: &[RankingRow]) -> Result<(f64, Option<f64>, Option<f64>)> {
    let gt: Vec<f64> = rows.iter().map(|r| r.gt).collect();
    let pred: Vec<f64> = rows.iter().map(|r| r.pred).collect();
    let cx: Vec<u64> = rows.iter().map(|r| r.complexity).collect();
    let cr: Vec<f64> = rows.iter().map(|r| r.cr).collect();
    let tau = kendall_tau(&gt, &pred)?;
    let cb = optional(complexity_bias(&gt, &pred, &cx))?;
    let c3v = if cr.iter().all(|v| v.is_finite()) {
        Some(c3(&cx, &cr)?)
    } else {
        None
    };
    Ok((tau, cb, c3v))
}

impl RankingReport {
    /// Rows must carry finite `cr` where defined; use `f64::NAN` for undefined ratios.
    pub fn build(mut rows: Vec<RankingRow>, top_fraction: f64) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::input("a ranking report needs at least two subnets"));
        }
        rows.sort_by(|a, b| a.subnet.cmp(&b.subnet));
        let (kendall_tau, cb, c3v) = metrics_of(&rows)?;
        let top = top_fraction_filter(&rows, top_fraction)?;
        let (top_kendall_tau, top_cb, top_c3) = if top.len() >= 2 {
            let (t, b, c) = metrics_of(&top)?;
            (Some(t), b, c)
        } else {
            (None, None, None)
        };
        Ok(Self {
            rows,
            kendall_tau,
            cb,
            c3: c3v,
            top_fraction,
            top_kendall_tau,
            top_cb,
            top_c3,
        })
    }

    pub fn summary(&self) -> ReportSummary {
        let top_n = (self.top_fraction * self.rows.len() as f64).ceil() as usize;
        ReportSummary {
            num_subnets: self.rows.len(),
            kendall_tau: self.kendall_tau,
            cb: self.cb,
            c3: self.c3,
            top_fraction: self.top_fraction,
            top_num_subnets: top_n,
            top_kendall_tau: self.top_kendall_tau,
            top_cb: self.top_cb,
            top_c3: self.top_c3,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("subnet,gt,pred,complexity,cr\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "\"{}\",{},{},{},{}",
                r.subnet, r.gt, r.pred, r.complexity, r.cr
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1, 2, 3], &[3, 2, 1]).unwrap(), -1.0);
        assert!((kendall_tau(&[1, 2, 3], &[1, 3, 2]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&[1, 2], &[1]).is_err());
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cb_examples() {
        let cb = complexity_bias(&[0.9, 0.8, 0.7], &[0.7, 0.8, 0.9], &[3, 2, 1]).unwrap();
        assert_eq!(cb, 1.0);
        assert!(matches!(
            complexity_bias(&[0.9, 0.8, 0.7], &[0.9, 0.8, 0.7], &[3, 2, 1]),
            Err(Error::UndefinedMetric(_))
        ));
        assert_eq!(
            complexity_bias(&[0.9, 0.8], &[0.8, 0.9], &[1, 2]).unwrap(),
            0.0
        );
    }

    #[test]
    fn c3_examples() {
        assert_eq!(c3(&[1, 2, 3], &[0.9, 0.8, 0.7]).unwrap(), -1.0);
        assert_eq!(c3(&[1, 2, 3], &[0.5, 0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn convergence_ratio_examples() {
        assert_eq!(convergence_ratio(0.7, 0.7).unwrap(), 1.0);
        assert_eq!(convergence_ratio(0.45, 0.9).unwrap(), 0.5);
        assert!(matches!(
            convergence_ratio(0.5, 0.0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn consistency_compares_within_clusters() {
        let mut t = ConsistencyTrace::new(4);
        t.push(0, 0, vec![0.0], vec![0.0]);
        t.push(1, 1, vec![10.0], vec![10.0]);
        t.push(2, 0, vec![2.0], vec![0.0]);
        t.push(3, 1, vec![10.0], vec![10.0]);
        // Cluster 0 has std 1, cluster 1 std 0; pooled std would be 4.5.
        assert_eq!(
            consistency_std(&t, TraceKind::Gradients).unwrap(),
            vec![0.5]
        );
        let mut lonely = ConsistencyTrace::new(2);
        lonely.push(0, 0, vec![1.0], vec![1.0]);
        lonely.push(1, 1, vec![3.0], vec![3.0]);
        assert!(consistency_std(&lonely, TraceKind::Gradients)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn consistency_examples() {
        let mut t = ConsistencyTrace::new(2);
        t.push(0, 0, vec![1.0, 2.0], vec![0.0]);
        t.push(1, 0, vec![1.0, 2.0], vec![2.0]);
        assert_eq!(
            consistency_std(&t, TraceKind::Gradients).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            consistency_std(&t, TraceKind::Momentums).unwrap(),
            vec![1.0]
        );
        t.push(2, 0, vec![1.0], vec![0.0]);
        assert!(consistency_std(&t, TraceKind::Gradients).is_err());
    }

    fn row(name: &str, gt: f64, pred: f64, complexity: u64) -> RankingRow {
        RankingRow {
            subnet: name.parse().unwrap(),
            gt,
            pred,
            complexity,
            cr: pred / gt,
        }
    }

    #[test]
    fn top_fraction_counts_and_ties() {
        let rows: Vec<_> = (0..125)
            .map(|i| row(&i.to_string(), (i % 7) as f64, 0.0, 1))
            .collect();
        assert_eq!(top_fraction_filter(&rows, 1.0).unwrap().len(), 125);
        let top = top_fraction_filter(&rows, 0.3).unwrap();
        assert_eq!(top.len(), 38);
        assert!(top.iter().all(|r| r.gt >= 4.0));
        assert_eq!(top.iter().filter(|r| r.gt >= 5.0).count(), 35);
        assert_eq!(top[0].subnet.to_string(), "6");
        assert!(top_fraction_filter(&rows, 0.0).is_err());
    }

    #[test]
    fn filtering_changes_cb() {
        // Top two (by gt) are misranked with the bigger net predicted low; the
        // lower three add misranked pairs biased the other way.
        let rows = vec![
            row("0", 0.95, 0.60, 900),
            row("1", 0.90, 0.70, 100),
            row("2", 0.50, 0.10, 100),
            row("3", 0.40, 0.20, 900),
            row("4", 0.30, 0.30, 900),
        ];
        let gt: Vec<f64> = rows.iter().map(|r| r.gt).collect();
        let pred: Vec<f64> = rows.iter().map(|r| r.pred).collect();
        let cx: Vec<u64> = rows.iter().map(|r| r.complexity).collect();
        let full = complexity_bias(&gt, &pred, &cx).unwrap();
        let top = top_fraction_filter(&rows, 0.4).unwrap();
        let tg: Vec<f64> = top.iter().map(|r| r.gt).collect();
        let tp: Vec<f64> = top.iter().map(|r| r.pred).collect();
        let tc: Vec<u64> = top.iter().map(|r| r.complexity).collect();
        let filtered = complexity_bias(&tg, &tp, &tc).unwrap();
        assert_eq!(filtered, 1.0);
        assert!((full - 1.0 / 4.0).abs() < 1e-15, "{full}");
        assert_ne!(full, filtered);
    }

    #[test]
    fn report_json_and_csv() {
        let rows = vec![
            row("0,1", 0.9, 0.8, 10),
            row("1,1", 0.5, 0.6, 20),
            row("2,0", 0.7, 0.4, 30),
        ];
        let rep = RankingReport::build(rows, 1.0).unwrap();
        assert_eq!(rep.rows[0].subnet.to_string(), "0,1");
        let json: serde_json::Value = serde_json::from_str(&rep.summary_json()).unwrap();
        assert_eq!(json["num_subnets"], 3);
        assert!(rep
            .rows_csv()
            .starts_with("subnet,gt,pred,complexity,cr\n\"0,1\",0.9,0.8,10,"));
    }
}
