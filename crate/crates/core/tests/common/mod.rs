use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use clpt::experiment::{duration_dir, run_sweep, ExperimentConfig, Preset};
use clpt::landscape::{cluster_components, DistanceMatrix};
use clpt::lmc::Anneal;
use clpt::protocol::{d_avg, d_prt, d_set, distance, Protocol, SampleSet};

const TOL: f64 = 1e-12;

pub type Check = Result<(), TestCaseError>;

pub fn protocol(steps: usize, duration: f64) -> impl Strategy<Value = Protocol> {
    prop::collection::vec(-1.0..=1.0f64, steps).prop_map(move |v| Protocol::new(v, duration).unwrap())
}

pub fn protocol_triple() -> impl Strategy<Value = (Protocol, Protocol, Protocol)> {
    (1usize..20).prop_flat_map(|l| (protocol(l, 2.0), protocol(l, 2.0), protocol(l, 2.0)))
}

fn sample_set(steps: usize) -> impl Strategy<Value = SampleSet> {
    prop::collection::vec(protocol(steps, 1.5), 1..6).prop_map(|ps| {
        let n = ps.len();
        SampleSet::new(0, 0, &ps, vec![0.5; n]).unwrap()
    })
}

pub fn set_triple() -> impl Strategy<Value = (SampleSet, SampleSet, SampleSet)> {
    (1usize..8).prop_flat_map(|l| (sample_set(l), sample_set(l), sample_set(l)))
}

pub fn distance_matrix() -> impl Strategy<Value = DistanceMatrix> {
    (2usize..14).prop_flat_map(|n| {
        prop::collection::vec(0.0..2.0f64, n * (n - 1) / 2)
            .prop_map(move |c| DistanceMatrix::from_condensed(n, c).unwrap())
    })
}

pub fn permuted_matrix() -> impl Strategy<Value = (DistanceMatrix, Vec<usize>)> {
    distance_matrix().prop_flat_map(|m| {
        let n = m.len();
        (Just(m), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

pub fn grid() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..40, 1..4).prop_map(|s| s.into_iter().map(|k| k as f64 / 10.0).collect())
}

pub fn metric_axioms(a: &Protocol, b: &Protocol, c: &Protocol) -> Check {
    let ab = distance(a, b).unwrap();
    prop_assert!(ab >= 0.0);
    prop_assert_eq!(ab, distance(b, a).unwrap());
    prop_assert_eq!(distance(a, a).unwrap(), 0.0);
    if ab == 0.0 {
        prop_assert_eq!(a.values(), b.values());
    }
    let ac = distance(a, c).unwrap();
    let cb = distance(c, b).unwrap();
    prop_assert!(ab <= ac + cb + TOL);
    Ok(())
}

pub fn bounded_by_average(a: &SampleSet, b: &SampleSet) -> Check {
    let avg = d_avg(a, b).unwrap();
    prop_assert!(d_set(a, b).unwrap() <= avg + TOL);
    prop_assert!(d_prt(a, b).unwrap() <= avg + TOL);
    prop_assert!((avg - d_avg(b, a).unwrap()).abs() < TOL);
    Ok(())
}

pub fn union_identity(a: &SampleSet, b: &SampleSet, c: &SampleSet) -> Check {
    let union = a.union(b).unwrap();
    let (ma, mb) = (a.len() as f64, b.len() as f64);
    let expected = (ma * d_avg(a, c).unwrap() + mb * d_avg(b, c).unwrap()) / (ma + mb);
    prop_assert!((d_avg(&union, c).unwrap() - expected).abs() < TOL);
    Ok(())
}

pub fn mean_in_bounds(a: &SampleSet) -> Check {
    let mean = a.mean_protocol();
    prop_assert!(mean.values().iter().all(|v| v.abs() <= 1.0));
    prop_assert_eq!(mean.len(), a.steps());
    Ok(())
}

pub fn epsilon_monotone(m: &DistanceMatrix, e1: f64, e2: f64) -> Check {
    let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
    let a = cluster_components(m, lo);
    let b = cluster_components(m, hi);
    prop_assert!(a.b0 >= b.b0);
    prop_assert_eq!(a.sizes.iter().sum::<usize>(), m.len());
    // every coarse cluster is a union of fine ones
    for i in 0..m.len() {
        for j in 0..m.len() {
            if a.labels[i] == a.labels[j] {
                prop_assert_eq!(b.labels[i], b.labels[j]);
            }
        }
    }
    Ok(())
}

pub fn permutation_invariant(m: &DistanceMatrix, perm: &[usize], eps: f64) -> Check {
    let permuted = DistanceMatrix::from_fn(m.len(), |i, j| m.get(perm[i], perm[j]));
    let a = cluster_components(m, eps);
    let b = cluster_components(&permuted, eps);
    prop_assert_eq!(a.b0, b.b0);
    let mut sa = a.sizes.clone();
    let mut sb = b.sizes.clone();
    sa.sort_unstable();
    sb.sort_unstable();
    prop_assert_eq!(sa, sb);
    for i in 0..m.len() {
        for j in 0..m.len() {
            prop_assert_eq!(b.labels[i] == b.labels[j], a.labels[perm[i]] == a.labels[perm[j]]);
        }
    }
    Ok(())
}

pub fn tiny_config(seed: u64, grid: Vec<f64>, out: &Path, workers: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(Preset::Desk);
    c.t_grid = grid;
    c.output_dir = out.to_path_buf();
    c.workers = workers;
    c.sampler.steps = 4;
    c.sampler.runs = 3;
    c.sampler.samples = 3;
    c.sampler.delta_n = 1;
    c.sampler.burn_in = 4;
    c.sampler.seed = seed;
    c.sampler.anneal = Anneal {
        enabled: true,
        beta_start: 1e2,
        ramp_sweeps: 2,
    };
    c.analysis.avg_subsample = 0;
    c
}

pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn sweep_deterministic(seed: u64, grid: &[f64]) -> Check {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_sweep(&tiny_config(seed, grid.to_vec(), a.path(), 1), |_| {}).unwrap();
    let rb = run_sweep(&tiny_config(seed, grid.to_vec(), b.path(), 2), |_| {}).unwrap();
    prop_assert_eq!(ra.diagram, rb.diagram);
    let sa = snapshot(a.path());
    prop_assert!(sa.contains_key("phase_diagram.json"));
    prop_assert_eq!(sa, snapshot(b.path()));
    Ok(())
}

pub fn sweep_resumes(seed: u64, grid: &[f64], cut: usize) -> Check {
    let full = tempfile::tempdir().unwrap();
    let resumed = tempfile::tempdir().unwrap();
    run_sweep(&tiny_config(seed, grid.to_vec(), full.path(), 1), |_| {}).unwrap();

    let config = tiny_config(seed, grid.to_vec(), resumed.path(), 1);
    run_sweep(&config, |_| {}).unwrap();
    // the completion marker is written last; removing it and the analysis
    // for the tail of the grid mimics an interrupted run
    let cut = cut.min(grid.len() - 1);
    for &t in &grid[cut..] {
        let dir = duration_dir(resumed.path(), t);
        std::fs::remove_file(dir.join("ensemble.json")).unwrap();
        std::fs::remove_file(dir.join("distances.csv")).unwrap();
    }
    std::fs::remove_file(resumed.path().join("phase_diagram.json")).unwrap();
    let modified = |t: f64| {
        std::fs::metadata(duration_dir(resumed.path(), t).join("run_000_samples.csv"))
            .unwrap()
            .modified()
            .unwrap()
    };
    let kept: Vec<_> = grid[..cut].iter().map(|&t| modified(t)).collect();
    run_sweep(&config, |_| {}).unwrap();
    for (&t, before) in grid[..cut].iter().zip(kept) {
        prop_assert_eq!(modified(t), before);
    }
    prop_assert_eq!(snapshot(full.path()), snapshot(resumed.path()));
    Ok(())
}
