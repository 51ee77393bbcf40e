//! Observables of an LMC ensemble: distance distributions, connected
//! components, the magnetization order parameter, transition locations and
//! barrier estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmc::LmcRun;
use crate::protocol::{pairwise, slice_distance, SampleSet, SetMetric};

/// Histogram bin rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "bins")]
pub enum Binning {
    FreedmanDiaconis,
    Fixed(usize),
}

impl Default for Binning {
    fn default() -> Self {
        Binning::FreedmanDiaconis
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Sum of the values falling in each bin.
    pub sums: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Histogram {
    pub fn new(values: &[f64], binning: Binning) -> Histogram {
        if values.is_empty() {
            return Histogram {
                edges: vec![0.0, 1.0],
                counts: vec![0],
                sums: vec![0.0],
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let span = hi - lo;
        let bins = if span <= 0.0 {
            1
        } else {
            match binning {
                Binning::Fixed(n) => n.max(1),
                Binning::FreedmanDiaconis => {
                    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
                    if width > 0.0 {
                        ((span / width).ceil() as usize).clamp(1, 10_000)
                    } else {
                        (sorted.len() as f64).log2().ceil() as usize + 1
                    }
                }
            }
        };
        let (lo, width) = if span <= 0.0 { (lo - 0.5, 1.0) } else { (lo, span / bins as f64) };
        let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        let mut sums = vec![0.0; bins];
        for &v in values {
            let k = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
            sums[k] += v;
        }
        Histogram { edges, counts, sums }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Local maxima holding at least `min_fraction` of the total count, each
    /// located at the mean of the values in its bin (or plateau of bins).
    pub fn peaks(&self, min_fraction: f64) -> Vec<f64> {
        let total: usize = self.counts.iter().sum();
        let n = self.counts.len();
        let mut peaks = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && self.counts[j + 1] == self.counts[i] {
                j += 1;
            }
            let left = if i == 0 { 0 } else { self.counts[i - 1] };
            let right = if j + 1 == n { 0 } else { self.counts[j + 1] };
            let c = self.counts[i];
            if c > left && c > right && c as f64 >= min_fraction * total as f64 {
                let sum: f64 = self.sums[i..=j].iter().sum();
                peaks.push(sum / (c * (j - i + 1)) as f64);
            }
            i = j + 1;
        }
        peaks
    }
}

/// Symmetric run-by-run distance matrix in condensed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    condensed: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_condensed(n: usize, condensed: Vec<f64>) -> Result<Self> {
        if condensed.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} condensed distances for {n} runs",
                condensed.len()
            )));
        }
        Ok(DistanceMatrix { n, condensed })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut condensed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                condensed.push(f(i, j));
            }
        }
        DistanceMatrix { n, condensed }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn condensed(&self) -> &[f64] {
        &self.condensed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.condensed[a * (2 * self.n - a - 1) / 2 + (b - a - 1)]
    }

    /// Pairs `(i, j, d)` with `i < j` in condensed order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n)
            .flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
            .zip(&self.condensed)
            .map(|((i, j), &d)| (i, j, d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceDistribution {
    pub metric: SetMetric,
    pub duration: f64,
    pub steps: usize,
    /// Samples per run entering the distance (`None` = all).
    pub subsample: Option<usize>,
    pub matrix: DistanceMatrix,
    pub histogram: Histogram,
}

impl DistanceDistribution {
    pub fn values(&self) -> &[f64] {
        self.matrix.condensed()
    }
}

/// All `R(R−1)/2` run-pair distances. `subsample` thins every run before
/// evaluating `d_avg`; the other metrics always see every sample.
pub fn pairwise_distances(
    runs: &[SampleSet],
    metric: SetMetric,
    subsample: Option<usize>,
    binning: Binning,
) -> Result<DistanceDistribution> {
    if runs.len() < 2 {
        return Err(Error::InsufficientRuns(runs.len()));
    }
    let (duration, steps) = (runs[0].duration(), runs[0].steps());
    if let Some(bad) = runs.iter().find(|r| r.duration() != duration || r.steps() != steps) {
        return Err(Error::ShapeMismatch(format!(
            "run {} has (T = {}, L = {}), expected (T = {duration}, L = {steps})",
            bad.run_id,
            bad.duration(),
            bad.steps()
        )));
    }
    let condensed = match (metric, subsample) {
        (SetMetric::Avg, Some(k)) => {
            let thinned: Vec<SampleSet> = runs.iter().map(|r| r.subsample(k)).collect();
            pairwise(&thinned, metric)?
        }
        _ => pairwise(runs, metric)?,
    };
    let histogram = Histogram::new(&condensed, binning);
    Ok(DistanceDistribution {
        metric,
        duration,
        steps,
        subsample: if metric == SetMetric::Avg { subsample } else { None },
        matrix: DistanceMatrix::from_condensed(runs.len(), condensed)?,
        histogram,
    })
}

/// Smallest relative width `(hi − lo) / hi` of a gap that splits runs.
pub const MIN_RELATIVE_GAP: f64 = 0.05;

/// Midpoint of the widest gap between consecutive sorted distances. When that
/// gap is narrower than [`MIN_RELATIVE_GAP`] of its upper edge the distances
/// show no structure and ε sits just above the largest one.
pub fn largest_gap_epsilon(matrix: &DistanceMatrix) -> f64 {
    let mut sorted = matrix.condensed().to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = sorted.last().copied().unwrap_or(0.0);
    sorted
        .windows(2)
        .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
        .filter(|w| w[1] > w[0] && w[1] - w[0] >= MIN_RELATIVE_GAP * w[1])
        .map(|w| 0.5 * (w[0] + w[1]))
        .unwrap_or_else(|| next_up(top))
}

fn next_up(x: f64) -> f64 {
    x + x.abs() * 1e-12 + f64::MIN_POSITIVE
}

/// How the clustering threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Epsilon {
    LargestGap,
    Fixed(f64),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::LargestGap
    }
}

impl Epsilon {
    pub fn resolve(self, matrix: &DistanceMatrix) -> f64 {
        match self {
            Epsilon::LargestGap => largest_gap_epsilon(matrix),
            Epsilon::Fixed(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPartition {
    /// Component of each run; components are numbered by their lowest run.
    pub labels: Vec<usize>,
    pub b0: usize,
    pub sizes: Vec<usize>,
    /// Mean run-pair distance within (diagonal) and between components.
    /// Singletons have no intra-component pairs.
    pub component_distances: Vec<Vec<Option<f64>>>,
    pub threshold: f64,
}

impl ComponentPartition {
    pub fn members(&self, component: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == component).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage clustering: runs `i`, `j` are joined when `d(i, j) < epsilon`.
pub fn cluster_components(matrix: &DistanceMatrix, epsilon: f64) -> ComponentPartition {
    let n = matrix.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for (i, j, d) in matrix.pairs() {
        if d < epsilon {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut root_label = vec![usize::MAX; n];
    let mut b0 = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_label[r] == usize::MAX {
            root_label[r] = b0;
            b0 += 1;
        }
        labels[i] = root_label[r];
    }
    let mut sizes = vec![0; b0];
    labels.iter().for_each(|&l| sizes[l] += 1);

    let mut sums = vec![vec![0.0; b0]; b0];
    let mut counts = vec![vec![0usize; b0]; b0];
    for (i, j, d) in matrix.pairs() {
        let (a, b) = (labels[i], labels[j]);
        sums[a][b] += d;
        counts[a][b] += 1;
        if a != b {
            sums[b][a] += d;
            counts[b][a] += 1;
        }
    }
    let component_distances = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s.iter().zip(c).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect())
        .collect();
    ComponentPartition {
        labels,
        b0,
        sizes,
        component_distances,
        threshold: epsilon,
    }
}

/// Per-run quantities the order parameter and trap analysis need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub min_abs_m: f64,
    pub mean_abs_m: f64,
    pub best_infidelity: f64,
}

impl From<&LmcRun> for RunSummary {
    fn from(run: &LmcRun) -> Self {
        RunSummary {
            run_index: run.run_index,
            min_abs_m: run.min_abs_m,
            mean_abs_m: run.mean_abs_m(),
            best_infidelity: run.best_infidelity,
        }
    }
}

/// Mean |m| below which a component counts as symmetric.
pub const SYMMETRIC_THRESHOLD: f64 = 0.05;

/// Components whose runs have mean |m| below `threshold`, provided at least
/// one magnetized component exists alongside them.
pub fn symmetric_components(partition: &ComponentPartition, runs: &[RunSummary], threshold: f64) -> Vec<usize> {
    let mean_abs: Vec<f64> = (0..partition.b0)
        .map(|c| {
            let members = partition.members(c);
            members.iter().map(|&i| runs[i].mean_abs_m).sum::<f64>() / members.len() as f64
        })
        .collect();
    let symmetric: Vec<usize> = (0..partition.b0).filter(|&c| mean_abs[c] < threshold).collect();
    if symmetric.len() == partition.b0 {
        Vec::new()
    } else {
        symmetric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderParameter {
    pub per_run: Vec<f64>,
    pub included: Vec<bool>,
    pub excluded_components: Vec<usize>,
    /// Minimum over the included runs.
    pub minimum: f64,
    pub mean: f64,
}

/// `min_n |m|` per run, aggregated over the runs outside `exclude`.
pub fn order_parameter(
    runs: &[RunSummary],
    partition: Option<&ComponentPartition>,
    exclude: &[usize],
) -> Result<OrderParameter> {
    if let Some(p) = partition {
        if p.labels.len() != runs.len() {
            return Err(Error::ShapeMismatch(format!(
                "partition of {} runs for {} run summaries",
                p.labels.len(),
                runs.len()
            )));
        }
    }
    let included: Vec<bool> = (0..runs.len())
        .map(|i| partition.is_none_or(|p| !exclude.contains(&p.labels[i])))
        .collect();
    let kept: Vec<f64> = runs
        .iter()
        .zip(&included)
        .filter(|(_, &keep)| keep)
        .map(|(r, _)| r.min_abs_m)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterExclusion);
    }
    Ok(OrderParameter {
        per_run: runs.iter().map(|r| r.min_abs_m).collect(),
        included,
        excluded_components: exclude.to_vec(),
        minimum: kept.iter().copied().fold(f64::INFINITY, f64::min),
        mean: kept.iter().sum::<f64>() / kept.len() as f64,
    })
}

/// Observables of one duration on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub duration: f64,
    pub b0: usize,
    pub min_infidelity: f64,
    pub order_parameter: f64,
    pub peak_locations: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Qsl,
    SymmetryBreaking,
    TrapAbsorption,
    Merging,
}

impl Transition {
    pub fn name(self) -> &'static str {
        match self {
            Transition::Qsl => "T_QSL",
            Transition::SymmetryBreaking => "T_sb",
            Transition::TrapAbsorption => "T_t+",
            Transition::Merging => "T_t-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub records: Vec<PhaseRecord>,
    pub t_qsl: Option<Estimate>,
    pub t_sb: Option<Estimate>,
    pub t_t_plus: Option<Estimate>,
    pub t_t_minus: Option<Estimate>,
}

impl PhaseDiagram {
    /// The estimate, or `NotBracketed` when the grid does not contain it.
    pub fn transition(&self, which: Transition) -> Result<Estimate> {
        let est = match which {
            Transition::Qsl => self.t_qsl,
            Transition::SymmetryBreaking => self.t_sb,
            Transition::TrapAbsorption => self.t_t_plus,
            Transition::Merging => self.t_t_minus,
        };
        est.ok_or(Error::NotBracketed(which.name()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionTolerances {
    pub qsl: f64,
    /// Order parameter below this counts as vanishing.
    pub order: f64,
}

impl Default for TransitionTolerances {
    fn default() -> Self {
        TransitionTolerances { qsl: 1e-4, order: 1e-2 }
    }
}

fn bracket(records: &[PhaseRecord], k: usize) -> Estimate {
    let (a, b) = (records[k].duration, records[k + 1].duration);
    Estimate {
        value: 0.5 * (a + b),
        uncertainty: 0.5 * (b - a),
    }
}

/// Locates transitions as midpoints of the grid interval where the
/// corresponding signature first appears.
pub fn detect_transitions(records: Vec<PhaseRecord>, tol: TransitionTolerances) -> Result<PhaseDiagram> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no phase records".into()));
    }
    if records.windows(2).any(|w| !(w[1].duration > w[0].duration)) {
        return Err(Error::InvalidConfig("durations must be strictly increasing".into()));
    }
    let vanishing = |op: f64| op.is_nan() || op < tol.order;
    let first = |pred: &dyn Fn(&PhaseRecord, &PhaseRecord) -> bool| {
        records.windows(2).position(|w| pred(&w[0], &w[1])).map(|k| bracket(&records, k))
    };
    let t_qsl = first(&|a, b| a.min_infidelity >= tol.qsl && b.min_infidelity < tol.qsl);
    let t_sb = first(&|a, b| a.b0 == 1 && b.b0 == 2 && !vanishing(b.order_parameter));
    let t_t_plus = first(&|a, b| a.b0 == 2 && b.b0 == 3);
    let t_t_minus = first(&|a, b| a.b0 == 3 && b.b0 == 2 && (b.order_parameter.is_nan() || vanishing(b.order_parameter)));
    Ok(PhaseDiagram {
        records,
        t_qsl,
        t_sb,
        t_t_plus,
        t_t_minus,
    })
}

/// Component count of an ensemble at one β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub b0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierEstimate {
    pub points: Vec<BetaPoint>,
    /// Component count at the largest β.
    pub reference_b0: usize,
    pub beta_star: f64,
    pub steps: usize,
    pub delta_infidelity: f64,
}

/// Largest β whose component count falls below the count at the largest β,
/// turned into a barrier `ΔI ≈ 1/(β* L)`.
pub fn barrier_estimate(points: &[BetaPoint], steps: usize) -> Result<BarrierEstimate> {
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let reference = points.last().ok_or(Error::NoCollapse)?.b0;
    let beta_star = points
        .iter()
        .rev()
        .find(|p| p.b0 < reference)
        .map(|p| p.beta)
        .ok_or(Error::NoCollapse)?;
    Ok(BarrierEstimate {
        points,
        reference_b0: reference,
        beta_star,
        steps,
        delta_infidelity: 1.0 / (beta_star * steps as f64),
    })
}

/// One component at one duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub runs: Vec<usize>,
    pub mean_protocol: Vec<f64>,
    pub min_infidelity: f64,
    pub mean_abs_m: f64,
    pub symmetric: bool,
}

/// Components found at one duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSnapshot {
    pub duration: f64,
    pub components: Vec<ComponentSummary>,
}

/// Groups runs by component and summarizes each group.
pub fn summarize_components(
    partition: &ComponentPartition,
    sets: &[SampleSet],
    runs: &[RunSummary],
    threshold: f64,
) -> Result<ComponentSnapshot> {
    if sets.len() != partition.labels.len() || runs.len() != sets.len() {
        return Err(Error::ShapeMismatch("partition, sample sets and run summaries differ in length".into()));
    }
    let duration = sets.first().map_or(0.0, |s| s.duration());
    let components = (0..partition.b0)
        .map(|c| {
            let members = partition.members(c);
            let mut mean = vec![0.0; sets[members[0]].steps()];
            for &i in &members {
                for (m, v) in mean.iter_mut().zip(sets[i].mean_protocol().values()) {
                    *m += v / members.len() as f64;
                }
            }
            let mean_abs_m = members.iter().map(|&i| runs[i].mean_abs_m).sum::<f64>() / members.len() as f64;
            ComponentSummary {
                min_infidelity: members.iter().map(|&i| runs[i].best_infidelity).fold(f64::INFINITY, f64::min),
                runs: members,
                mean_protocol: mean,
                mean_abs_m,
                symmetric: mean_abs_m < threshold,
            }
        })
        .collect();
    Ok(ComponentSnapshot { duration, components })
}

/// A component followed across durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub symmetric: bool,
    /// `(T, min infidelity)` for every duration the component was seen.
    pub curve: Vec<(f64, f64)>,
    #[serde(skip)]
    last_protocol: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub tracks: Vec<Track>,
    /// First duration at which a symmetric component is at least as good as
    /// every magnetized one.
    pub crossover: Option<f64>,
}

/// Follows components across increasing durations by nearest mean protocol.
/// A match is ambiguous when the runner-up track is closer than
/// `ambiguity_ratio` times the best distance.
pub fn trap_tracker(snapshots: &[ComponentSnapshot], ambiguity_ratio: f64) -> Result<TrapReport> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut crossover = None;
    for snap in snapshots {
        let mut claimed = vec![false; tracks.len()];
        let mut fresh = Vec::new();
        for comp in &snap.components {
            let mut ranked: Vec<(f64, usize)> = tracks
                .iter()
                .enumerate()
                .filter(|(_, t)| t.symmetric == comp.symmetric && t.last_protocol.len() == comp.mean_protocol.len())
                .map(|(k, t)| (slice_distance(&t.last_protocol, &comp.mean_protocol), k))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            match ranked.as_slice() {
                [] => fresh.push(comp),
                [(d, k), rest @ ..] => {
                    if let Some((d2, _)) = rest.first() {
                        if *d2 < ambiguity_ratio * d {
                            return Err(Error::TrackingLost {
                                duration: snap.duration,
                                reason: format!("tracks at distances {d:.3} and {d2:.3} both match"),
                            });
                        }
                    }
                    if claimed[*k] {
                        return Err(Error::TrackingLost {
                            duration: snap.duration,
                            reason: "two components matched the same track".into(),
                        });
                    }
                    claimed[*k] = true;
                    tracks[*k].curve.push((snap.duration, comp.min_infidelity));
                    tracks[*k].last_protocol.clone_from(&comp.mean_protocol);
                }
            }
        }
        for comp in fresh {
            tracks.push(Track {
                symmetric: comp.symmetric,
                curve: vec![(snap.duration, comp.min_infidelity)],
                last_protocol: comp.mean_protocol.clone(),
            });
        }
        if crossover.is_none() {
            let best = |sym: bool| {
                snap.components
                    .iter()
                    .filter(|c| c.symmetric == sym)
                    .map(|c| c.min_infidelity)
                    .fold(f64::INFINITY, f64::min)
            };
            let (s, m) = (best(true), best(false));
            if s.is_finite() && m.is_finite() && s <= m {
                crossover = Some(snap.duration);
            }
        }
    }
    Ok(TrapReport { tracks, crossover })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, f: impl FnMut(usize, usize) -> f64) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, f)
    }

    #[test]
    fn condensed_indexing() {
        let m = matrix(5, |i, j| (10 * i + j) as f64);
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 0.0 } else { (10 * i.min(j) + i.max(j)) as f64 };
                assert_eq!(m.get(i, j), expected);
            }
        }
        assert!(DistanceMatrix::from_condensed(4, vec![0.0; 5]).is_err());
    }

    #[test]
    fn histogram_counts_every_value() {
        let values: Vec<f64> = (0..200).map(|k| (k as f64 * 0.37).sin().abs()).collect();
        for binning in [Binning::FreedmanDiaconis, Binning::Fixed(50)] {
            let h = Histogram::new(&values, binning);
            assert_eq!(h.counts.iter().sum::<usize>(), values.len());
            assert_eq!(h.edges.len(), h.counts.len() + 1);
        }
        assert_eq!(Histogram::new(&values, Binning::Fixed(50)).counts.len(), 50);
        assert_eq!(Histogram::new(&[0.3; 4], Binning::FreedmanDiaconis).counts, vec![4]);
    }

    #[test]
    fn histogram_peaks_of_bimodal_data() {
        let mut values = vec![0.05; 30];
        values.extend([0.04, 0.06, 0.03, 0.07]);
        values.extend(vec![0.6; 20]);
        values.extend([0.58, 0.62]);
        let peaks = Histogram::new(&values, Binning::Fixed(20)).peaks(0.05);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0] - 0.05).abs() < 1e-3 && (peaks[1] - 0.6).abs() < 1e-3);
    }

    #[test]
    fn peak_sits_at_the_mean_of_its_bin() {
        let mut values = vec![0.0; 10];
        values.extend(vec![0.518; 12]);
        values.push(1.0);
        let h = Histogram::new(&values, Binning::Fixed(5));
        assert_eq!(h.counts, vec![10, 0, 12, 0, 1]);
        let peaks = h.peaks(0.1);
        assert_eq!(peaks.len(), 2);
        assert!(peaks[0] == 0.0 && (peaks[1] - 0.518).abs() < 1e-12);
    }

    #[test]
    fn epsilon_extremes() {
        let m = matrix(6, |i, j| 1.0 + (i + j) as f64 * 0.1);
        let max = m.condensed().iter().copied().fold(0.0, f64::max);
        let min = m.condensed().iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(cluster_components(&m, max + 1.0).b0, 1);
        assert_eq!(cluster_components(&m, min * 0.5).b0, 6);
    }

    #[test]
    fn two_blocks_with_largest_gap() {
        let side = |i: usize| i % 2;
        let m = matrix(8, |i, j| if side(i) == side(j) { 0.05 } else { 0.6 });
        let eps = largest_gap_epsilon(&m);
        assert!((eps - 0.325).abs() < 1e-12);
        let p = cluster_components(&m, eps);
        assert_eq!(p.b0, 2);
        assert_eq!(p.labels, vec![0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(p.sizes, vec![4, 4]);
        assert!((p.component_distances[0][1].unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(p.component_distances[0][1], p.component_distances[1][0]);
        assert!((p.component_distances[0][0].unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn largest_gap_can_isolate_a_distant_run() {
        let pos: [f64; 6] = [0.0, 0.02, 0.05, 0.07, 0.1, 1.3];
        let m = matrix(6, |i, j| (pos[i] - pos[j]).abs());
        let eps = largest_gap_epsilon(&m);
        assert!((eps - 0.65).abs() < 1e-12, "{eps}");
        assert_eq!(cluster_components(&m, eps).sizes, vec![5, 1]);
        let flat = matrix(4, |_, _| 0.3);
        assert_eq!(cluster_components(&flat, largest_gap_epsilon(&flat)).b0, 1);
        let noisy = matrix(5, |i, j| 0.3 + 1e-3 * ((i * 7 + j * 3) % 5) as f64);
        assert_eq!(cluster_components(&noisy, largest_gap_epsilon(&noisy)).b0, 1);
    }

    #[test]
    fn singleton_has_no_intra_distance() {
        let m = matrix(3, |i, j| if i == 2 || j == 2 { 1.0 } else { 0.1 });
        let p = cluster_components(&m, 0.5);
        assert_eq!(p.b0, 2);
        assert_eq!(p.component_distances[1][1], None);
    }

    fn summary(i: usize, min_abs_m: f64, mean_abs_m: f64) -> RunSummary {
        RunSummary {
            run_index: i,
            min_abs_m,
            mean_abs_m,
            best_infidelity: 0.0,
        }
    }

    #[test]
    fn order_parameter_excludes_symmetric_component() {
        let runs = vec![
            summary(0, 0.2, 0.25),
            summary(1, 0.0, 0.01),
            summary(2, 0.18, 0.25),
            summary(3, 0.0, 0.02),
        ];
        let m = matrix(4, |i, j| if i % 2 == j % 2 { 0.05 } else { 1.2 });
        let p = cluster_components(&m, 0.5);
        let sym = symmetric_components(&p, &runs, SYMMETRIC_THRESHOLD);
        assert_eq!(sym, vec![1]);
        let op = order_parameter(&runs, Some(&p), &sym).unwrap();
        assert_eq!(op.minimum, 0.18);
        assert_eq!(op.included, vec![true, false, true, false]);
        assert!(matches!(order_parameter(&runs, Some(&p), &[0, 1]), Err(Error::EmptyAfterExclusion)));
        assert_eq!(order_parameter(&runs, None, &[]).unwrap().minimum, 0.0);
    }

    #[test]
    fn lone_symmetric_component_is_kept() {
        let runs = vec![summary(0, 0.0, 0.01), summary(1, 0.0, 0.02)];
        let m = matrix(2, |_, _| 0.1);
        let p = cluster_components(&m, 0.5);
        assert!(symmetric_components(&p, &runs, SYMMETRIC_THRESHOLD).is_empty());
    }

    fn record(duration: f64, b0: usize, min_infidelity: f64, order_parameter: f64) -> PhaseRecord {
        PhaseRecord {
            duration,
            b0,
            min_infidelity,
            order_parameter,
            peak_locations: vec![],
        }
    }

    #[test]
    fn bracketing_arithmetic() {
        let ts = [1.0, 2.0, 3.0, 3.2, 3.4, 3.6];
        let b0 = [1, 1, 2, 2, 3, 2];
        let inf = [0.3, 0.2, 1e-3, 1e-6, 1e-8, 1e-8];
        let op = [0.0, 0.0, 0.2, 0.15, 0.1, 0.0];
        let records: Vec<_> = (0..6).map(|k| record(ts[k], b0[k], inf[k], op[k])).collect();
        let d = detect_transitions(records, TransitionTolerances::default()).unwrap();
        let close = |e: Estimate, v: f64, u: f64| (e.value - v).abs() < 1e-12 && (e.uncertainty - u).abs() < 1e-12;
        assert!(close(d.transition(Transition::TrapAbsorption).unwrap(), 3.3, 0.1));
        assert!(close(d.transition(Transition::Merging).unwrap(), 3.5, 0.1));
        assert!(close(d.transition(Transition::SymmetryBreaking).unwrap(), 2.5, 0.5));
        assert!(close(d.transition(Transition::Qsl).unwrap(), 3.1, 0.1));
    }

    #[test]
    fn missing_transition_is_not_bracketed() {
        let records = vec![record(2.6, 2, 0.03, 0.3), record(3.0, 2, 1e-7, 0.2)];
        let d = detect_transitions(records, TransitionTolerances::default()).unwrap();
        assert!(matches!(d.transition(Transition::Merging), Err(Error::NotBracketed("T_t-"))));
        assert!(matches!(d.transition(Transition::SymmetryBreaking), Err(Error::NotBracketed(_))));
        assert!(d.t_qsl.is_some());
        let unsorted = vec![record(3.0, 2, 0.0, 0.0), record(2.0, 2, 0.0, 0.0)];
        assert!(detect_transitions(unsorted, TransitionTolerances::default()).is_err());
    }

    #[test]
    fn barrier_from_beta_scan() {
        let pts = [(1e1, 1), (1e2, 1), (1e3, 2), (1e4, 2)].map(|(beta, b0)| BetaPoint { beta, b0 });
        let est = barrier_estimate(&pts, 32).unwrap();
        assert_eq!(est.beta_star, 1e2);
        assert!((est.delta_infidelity - 1.0 / 3200.0).abs() < 1e-15);
        let flat = [BetaPoint { beta: 1e6, b0: 2 }];
        assert!(matches!(barrier_estimate(&flat, 32), Err(Error::NoCollapse)));
    }

    fn snapshot(duration: f64, comps: &[(f64, f64, bool)]) -> ComponentSnapshot {
        ComponentSnapshot {
            duration,
            components: comps
                .iter()
                .map(|&(level, inf, symmetric)| ComponentSummary {
                    runs: vec![],
                    mean_protocol: vec![level; 4],
                    min_infidelity: inf,
                    mean_abs_m: if symmetric { 0.0 } else { level.abs() },
                    symmetric,
                })
                .collect(),
        }
    }

    #[test]
    fn tracker_follows_components_and_finds_crossover() {
        let snaps = vec![
            snapshot(2.8, &[(0.3, 0.01, false), (-0.3, 0.01, false), (0.0, 0.06, true)]),
            snapshot(3.0, &[(0.32, 1e-6, false), (-0.31, 1e-6, false), (0.01, 0.02, true)]),
            snapshot(3.4, &[(0.33, 1e-9, false), (-0.33, 1e-9, false), (0.0, 1e-9, true)]),
        ];
        let report = trap_tracker(&snaps, 1.5).unwrap();
        assert_eq!(report.tracks.len(), 3);
        assert!(report.tracks.iter().all(|t| t.curve.len() == 3));
        assert_eq!(report.crossover, Some(3.4));
    }

    #[test]
    fn tracker_reports_ambiguity() {
        let snaps = vec![
            snapshot(2.8, &[(0.3, 0.01, false), (0.32, 0.01, false)]),
            snapshot(3.0, &[(0.31, 0.01, false)]),
        ];
        assert!(matches!(trap_tracker(&snaps, 1.5), Err(Error::TrackingLost { .. })));
    }
}
