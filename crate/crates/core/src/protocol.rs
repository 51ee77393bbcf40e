//! Piecewise-constant protocols, sample sets and the distances between them.
//!
//! All distances use the discrete `1/L` weight, which coincides with the
//! time average `T⁻¹∫dt` for piecewise-constant controls. Protocols on
//! different grids are never compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitudes of a bounded, piecewise-constant control on `L` equal steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    values: Vec<f64>,
    duration: f64,
}

impl Protocol {
    pub fn new(values: Vec<f64>, duration: f64) -> Result<Self> {
        check_shape(values.len(), duration)?;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && v.abs() <= 1.0))
        {
            return Err(Error::InvalidProtocol(format!("site {i} has amplitude {v}, outside [-1, 1]")));
        }
        Ok(Protocol { values, duration })
    }

    pub fn constant(value: f64, steps: usize, duration: f64) -> Result<Self> {
        Protocol::new(vec![value; steps], duration)
    }

    pub fn zeros(steps: usize, duration: f64) -> Result<Self> {
        Protocol::constant(0.0, steps, duration)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step_duration(&self) -> f64 {
        self.duration / self.values.len() as f64
    }

    fn check_compatible(&self, other: &Protocol) -> Result<()> {
        if self.len() != other.len() || self.duration != other.duration {
            return Err(Error::ShapeMismatch(format!(
                "(T = {}, L = {}) vs (T = {}, L = {})",
                self.duration,
                self.len(),
                other.duration,
                other.len()
            )));
        }
        Ok(())
    }
}

fn check_shape(steps: usize, duration: f64) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidProtocol("a protocol needs at least one step".into()));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidProtocol(format!("duration must be positive, got {duration}")));
    }
    Ok(())
}

/// `sqrt((1/L) Σ (a_i − b_i)²)` on raw amplitude slices of equal length.
pub fn slice_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / a.len() as f64).sqrt()
}

pub fn distance(a: &Protocol, b: &Protocol) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(slice_distance(&a.values, &b.values))
}

/// Time-averaged control `(1/L) Σ s_i`.
pub fn magnetization(s: &Protocol) -> f64 {
    slice_magnetization(&s.values)
}

pub(crate) fn slice_magnetization(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The control symmetry `s(t) → −s(T − t)`.
pub fn symmetry_transform(s: &Protocol) -> Protocol {
    Protocol {
        values: s.values.iter().rev().map(|v| -v).collect(),
        duration: s.duration,
    }
}

/// Protocols sampled by one run, stored row-major (`M × L`), with the cost
/// of each recorded at sampling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub run_id: usize,
    pub seed: u64,
    duration: f64,
    steps: usize,
    values: Vec<f64>,
    infidelities: Vec<f64>,
}

impl SampleSet {
    pub fn new(run_id: usize, seed: u64, protocols: &[Protocol], infidelities: Vec<f64>) -> Result<Self> {
        let first = protocols
            .first()
            .ok_or_else(|| Error::InvalidProtocol("a sample set needs at least one protocol".into()))?;
        if infidelities.len() != protocols.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} protocols but {} infidelities",
                protocols.len(),
                infidelities.len()
            )));
        }
        let mut values = Vec::with_capacity(protocols.len() * first.len());
        for p in protocols {
            first.check_compatible(p)?;
            values.extend_from_slice(&p.values);
        }
        Ok(SampleSet {
            run_id,
            seed,
            duration: first.duration,
            steps: first.len(),
            values,
            infidelities,
        })
    }

    /// Builds a set from raw rows, validating bounds.
    pub fn from_rows(
        run_id: usize,
        seed: u64,
        duration: f64,
        steps: usize,
        values: Vec<f64>,
        infidelities: Vec<f64>,
    ) -> Result<Self> {
        check_shape(steps, duration)?;
        if values.is_empty() || values.len() != steps * infidelities.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for {} protocols of length {steps}",
                values.len(),
                infidelities.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && v.abs() <= 1.0)) {
            return Err(Error::InvalidProtocol("amplitude outside [-1, 1]".into()));
        }
        Ok(SampleSet {
            run_id,
            seed,
            duration,
            steps,
            values,
            infidelities,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.infidelities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infidelities.is_empty()
    }

    pub fn infidelities(&self) -> &[f64] {
        &self.infidelities
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.steps..(i + 1) * self.steps]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.steps)
    }

    pub fn protocol(&self, i: usize) -> Protocol {
        Protocol {
            values: self.row(i).to_vec(),
            duration: self.duration,
        }
    }

    /// Every `stride`-th sample, taken from the end so the last sample is kept.
    pub fn subsample(&self, count: usize) -> SampleSet {
        if count == 0 || count >= self.len() {
            return self.clone();
        }
        let stride = self.len() / count;
        let picks: Vec<usize> = (0..count).map(|k| self.len() - 1 - k * stride).rev().collect();
        let mut values = Vec::with_capacity(count * self.steps);
        for &i in &picks {
            values.extend_from_slice(self.row(i));
        }
        SampleSet {
            run_id: self.run_id,
            seed: self.seed,
            duration: self.duration,
            steps: self.steps,
            values,
            infidelities: picks.iter().map(|&i| self.infidelities[i]).collect(),
        }
    }

    /// Elementwise mean protocol; stays inside `[−1, 1]` by convexity.
    pub fn mean_protocol(&self) -> Protocol {
        let mut mean = vec![0.0; self.steps];
        for row in self.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let m = self.len() as f64;
        mean.iter_mut().for_each(|x| *x /= m);
        debug_assert!(mean.iter().all(|x| x.abs() <= 1.0));
        Protocol {
            values: mean,
            duration: self.duration,
        }
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        self.rows().map(slice_magnetization).collect()
    }

    /// Concatenation of two compatible sets (run metadata from `self`).
    pub fn union(&self, other: &SampleSet) -> Result<SampleSet> {
        check_sets(self, other)?;
        let mut out = self.clone();
        out.values.extend_from_slice(&other.values);
        out.infidelities.extend_from_slice(&other.infidelities);
        Ok(out)
    }
}

fn check_sets(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.steps != b.steps || a.duration != b.duration {
        return Err(Error::ShapeMismatch(format!(
            "sample sets at (T = {}, L = {}) and (T = {}, L = {})",
            a.duration, a.steps, b.duration, b.steps
        )));
    }
    Ok(())
}

/// Mean distance over all `M_A · M_B` cross pairs (diagonal included when
/// `a` and `b` are the same set).
pub fn d_avg(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_sets(a, b)?;
    let total: f64 = a
        .rows()
        .map(|x| b.rows().map(|y| slice_distance(x, y)).sum::<f64>())
        .sum();
    Ok(total / (a.len() * b.len()) as f64)
}

/// Smallest distance over all cross pairs.
pub fn d_set(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_sets(a, b)?;
    Ok(a
        .rows()
        .flat_map(|x| b.rows().map(move |y| slice_distance(x, y)))
        .fold(f64::INFINITY, f64::min))
}

/// Distance between the mean protocols of the two sets.
pub fn d_prt(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_sets(a, b)?;
    Ok(slice_distance(a.mean_protocol().values(), b.mean_protocol().values()))
}

/// Which set-to-set distance to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetMetric {
    Avg,
    Set,
    Prt,
}

impl SetMetric {
    pub const ALL: [SetMetric; 3] = [SetMetric::Avg, SetMetric::Set, SetMetric::Prt];

    pub fn tag(self) -> &'static str {
        match self {
            SetMetric::Avg => "avg",
            SetMetric::Set => "set",
            SetMetric::Prt => "prt",
        }
    }

    pub fn evaluate(self, a: &SampleSet, b: &SampleSet) -> Result<f64> {
        match self {
            SetMetric::Avg => d_avg(a, b),
            SetMetric::Set => d_set(a, b),
            SetMetric::Prt => d_prt(a, b),
        }
    }
}

impl std::str::FromStr for SetMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(SetMetric::Avg),
            "set" => Ok(SetMetric::Set),
            "prt" => Ok(SetMetric::Prt),
            other => Err(Error::InvalidConfig(format!("unknown metric '{other}'"))),
        }
    }
}

/// Condensed upper-triangle distances for every pair `i < j`, computed in
/// parallel. Pair order is `(0,1), (0,2), …, (1,2), …`.
pub fn pairwise(sets: &[SampleSet], metric: SetMetric) -> Result<Vec<f64>> {
    let pairs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|i| (i + 1..sets.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| metric.evaluate(&sets[i], &sets[j]))
        .collect()
}
