//! Experiment orchestration: configuration, cached ensembles, per-duration
//! analysis, duration sweeps and β scans.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, fmt12, round12};
use crate::landscape::{
    barrier_estimate, cluster_components, detect_transitions, order_parameter, pairwise_distances,
    summarize_components, symmetric_components, BarrierEstimate, BetaPoint, Binning, ComponentPartition,
    ComponentSnapshot, DistanceDistribution, Epsilon, OrderParameter, PhaseDiagram, PhaseRecord, RunSummary,
    TransitionTolerances, SYMMETRIC_THRESHOLD,
};
use crate::lmc::{sample_ensemble, LmcConfig, LmcRun};
use crate::protocol::{SampleSet, SetMetric};
use crate::quantum::{ControlProblem, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub epsilon: Epsilon,
    pub binning: Binning,
    /// Metric whose run-pair distances feed the clustering.
    pub cluster_metric: SetMetric,
    /// Samples per run entering `d_avg` (0 = all).
    pub avg_subsample: usize,
    pub tol_qsl: f64,
    /// Order parameter below this counts as vanishing.
    pub order_tolerance: f64,
    /// Mean |m| below which a component counts as symmetric.
    pub symmetric_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            epsilon: Epsilon::LargestGap,
            binning: Binning::FreedmanDiaconis,
            cluster_metric: SetMetric::Avg,
            avg_subsample: 1 << 8,
            tol_qsl: 1e-4,
            order_tolerance: 1e-2,
            symmetric_threshold: SYMMETRIC_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    /// Sampler settings; `duration` is replaced by each grid point.
    pub sampler: LmcConfig,
    pub t_grid: Vec<f64>,
    pub metrics: Vec<SetMetric>,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(Preset::Paper)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => ExperimentConfig {
                model: ModelParams::default(),
                sampler: LmcConfig::default(),
                t_grid: (1..=20).map(|k| round12(0.2 * k as f64)).collect(),
                metrics: SetMetric::ALL.to_vec(),
                analysis: AnalysisConfig::default(),
                output_dir: PathBuf::from("clpt-out"),
                workers: default_workers(),
            },
            Preset::Desk => {
                let paper = ExperimentConfig::preset(Preset::Paper);
                ExperimentConfig {
                    sampler: LmcConfig {
                        steps: 32,
                        runs: 32,
                        samples: 1 << 8,
                        delta_n: 1 << 10,
                        ..paper.sampler
                    },
                    t_grid: vec![1.0, 1.6, 2.6, 3.0, 3.3, 3.45, 3.6],
                    ..paper
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.t_grid.is_empty() {
            return Err(Error::InvalidConfig("t_grid is empty".into()));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidConfig("t_grid entries must be positive".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("t_grid must be strictly increasing".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidConfig("at least one metric is required".into()));
        }
        self.sampler_at(self.t_grid[0]).validate()
    }

    pub fn sampler_at(&self, duration: f64) -> LmcConfig {
        LmcConfig {
            duration,
            ..self.sampler.clone()
        }
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        ExperimentConfig::parse(&text, is_json).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, json: bool) -> std::result::Result<Self, String> {
        if json {
            let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
            if let Some(map) = v.as_object_mut() {
                map.remove("schema_version");
            }
            serde_json::from_value(v).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

/// Everything recorded about one run besides its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_index: usize,
    pub base_seed: u64,
    /// ChaCha stream of the run (equal to the run index).
    pub stream: u64,
    pub model: ModelParams,
    pub config: LmcConfig,
    pub acceptance_rate: f64,
    pub best_infidelity: f64,
    pub final_infidelity: f64,
    pub burn_in_infidelity: f64,
    pub max_post_burn_in_infidelity: f64,
    pub min_abs_m: f64,
    pub mean_abs_m: f64,
    pub best_protocol: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub manifest: RunManifest,
    pub samples: SampleSet,
}

impl RunRecord {
    /// Record of `run`, rounded exactly as it is written to disk.
    pub fn from_run(run: &LmcRun, model: &ModelParams, config: &LmcConfig) -> Result<Self> {
        let manifest = io::json_rounded(&RunManifest {
            run_index: run.run_index,
            base_seed: config.seed,
            stream: run.run_index as u64,
            model: *model,
            config: config.clone(),
            acceptance_rate: run.acceptance_rate,
            best_infidelity: run.best_infidelity,
            final_infidelity: run.final_infidelity(),
            burn_in_infidelity: run.burn_in_infidelity,
            max_post_burn_in_infidelity: run.max_post_burn_in_infidelity,
            min_abs_m: run.min_abs_m,
            mean_abs_m: run.mean_abs_m(),
            best_protocol: run.best_protocol.clone(),
        })?;
        let s = &run.samples;
        let values = s.rows().flat_map(|r| r.iter().map(|&v| round12(v))).collect();
        let infidelities = s.infidelities().iter().map(|&v| round12(v)).collect();
        let samples = SampleSet::from_rows(s.run_id, s.seed, s.duration(), s.steps(), values, infidelities)?;
        Ok(RunRecord { manifest, samples })
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            run_index: self.manifest.run_index,
            min_abs_m: self.manifest.min_abs_m,
            mean_abs_m: self.manifest.mean_abs_m,
            best_infidelity: self.manifest.best_infidelity,
        }
    }
}

/// Marker written last into an ensemble directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleMeta {
    model: ModelParams,
    config: LmcConfig,
}

const ENSEMBLE_FILE: &str = "ensemble.json";

fn manifest_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("run_{k:03}_manifest.json"))
}

fn samples_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("run_{k:03}_samples.csv"))
}

pub fn write_ensemble(dir: &Path, model: &ModelParams, config: &LmcConfig, records: &[RunRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in records {
        io::write_json(&manifest_path(dir, r.manifest.run_index), &r.manifest)?;
        io::write_samples(&samples_path(dir, r.manifest.run_index), &r.samples)?;
    }
    io::write_json(
        &dir.join(ENSEMBLE_FILE),
        &EnsembleMeta {
            model: *model,
            config: config.clone(),
        },
    )
}

/// Loads a complete ensemble directory, returning its model, sampler
/// configuration and runs.
pub fn read_ensemble(dir: &Path) -> Result<(ModelParams, LmcConfig, Vec<RunRecord>)> {
    let meta: EnsembleMeta = io::read_json(&dir.join(ENSEMBLE_FILE))?;
    let records = (0..meta.config.runs)
        .map(|k| {
            let manifest: RunManifest = io::read_json(&manifest_path(dir, k))?;
            let samples = io::read_samples(&samples_path(dir, k), k, manifest.base_seed)?;
            Ok(RunRecord { manifest, samples })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((meta.model, meta.config, records))
}

/// Samples an ensemble with `workers` threads.
pub fn compute_ensemble(model: &ModelParams, config: &LmcConfig, workers: usize) -> Result<Vec<RunRecord>> {
    let problem = ControlProblem::new(*model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let runs = pool.install(|| sample_ensemble(&problem, config))?;
    runs.iter().map(|r| RunRecord::from_run(r, model, config)).collect()
}

/// The ensemble stored in `dir` when it was produced by the same model and
/// configuration, otherwise a freshly sampled one (which is then stored).
pub fn cached_ensemble(dir: &Path, model: &ModelParams, config: &LmcConfig, workers: usize) -> Result<Vec<RunRecord>> {
    let meta = io::json_rounded(&EnsembleMeta {
        model: *model,
        config: config.clone(),
    })?;
    if dir.join(ENSEMBLE_FILE).exists() {
        if let Ok((m, c, records)) = read_ensemble(dir) {
            if m == meta.model && c == meta.config {
                return Ok(records);
            }
        }
    }
    let records = compute_ensemble(model, config, workers)?;
    write_ensemble(dir, model, config, &records)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAnalysis {
    pub duration: f64,
    pub distributions: Vec<DistanceDistribution>,
    pub partition: ComponentPartition,
    pub symmetric_components: Vec<usize>,
    pub order_parameter: OrderParameter,
    pub components: ComponentSnapshot,
    pub record: PhaseRecord,
}

impl EnsembleAnalysis {
    pub fn distribution(&self, metric: SetMetric) -> Option<&DistanceDistribution> {
        self.distributions.iter().find(|d| d.metric == metric)
    }
}

pub fn analyze_ensemble(
    records: &[RunRecord],
    analysis: &AnalysisConfig,
    metrics: &[SetMetric],
) -> Result<EnsembleAnalysis> {
    let sets: Vec<SampleSet> = records.iter().map(|r| r.samples.clone()).collect();
    let summaries: Vec<RunSummary> = records.iter().map(RunRecord::summary).collect();
    let mut wanted: Vec<SetMetric> = metrics.to_vec();
    if !wanted.contains(&analysis.cluster_metric) {
        wanted.push(analysis.cluster_metric);
    }
    let distributions = wanted
        .iter()
        .map(|&m| pairwise_distances(&sets, m, (analysis.avg_subsample > 0).then_some(analysis.avg_subsample), analysis.binning))
        .collect::<Result<Vec<_>>>()?;
    let clustered = distributions
        .iter()
        .find(|d| d.metric == analysis.cluster_metric)
        .expect("cluster metric was computed");
    let epsilon = analysis.epsilon.resolve(&clustered.matrix);
    let partition = cluster_components(&clustered.matrix, epsilon);
    let symmetric = symmetric_components(&partition, &summaries, analysis.symmetric_threshold);
    let op = order_parameter(&summaries, Some(&partition), &symmetric)?;
    let components = summarize_components(&partition, &sets, &summaries, analysis.symmetric_threshold)?;
    let record = PhaseRecord {
        duration: sets[0].duration(),
        b0: partition.b0,
        min_infidelity: summaries.iter().map(|s| s.best_infidelity).fold(f64::INFINITY, f64::min),
        order_parameter: op.minimum,
        peak_locations: clustered.histogram.peaks(0.02),
    };
    Ok(EnsembleAnalysis {
        duration: record.duration,
        distributions,
        partition,
        symmetric_components: symmetric,
        order_parameter: op,
        components,
        record,
    })
}

#[derive(Serialize)]
struct ComponentsDoc<'a> {
    duration: f64,
    b0: usize,
    epsilon: f64,
    labels: &'a [usize],
    sizes: &'a [usize],
    component_distances: &'a [Vec<Option<f64>>],
    symmetric_components: &'a [usize],
    order_parameter: &'a OrderParameter,
    components: &'a ComponentSnapshot,
}

/// Writes `distances.csv`, `histogram.csv` and `components.json`.
pub fn write_analysis(dir: &Path, a: &EnsembleAnalysis) -> Result<()> {
    let mut distances = String::from("# schema_version=1\ni,j");
    for d in &a.distributions {
        distances.push_str(&format!(",d_{}", d.metric.tag()));
    }
    distances.push('\n');
    if let Some(first) = a.distributions.first() {
        for (k, (i, j, _)) in first.matrix.pairs().enumerate() {
            distances.push_str(&format!("{i},{j}"));
            for d in &a.distributions {
                distances.push(',');
                distances.push_str(&fmt12(d.values()[k]));
            }
            distances.push('\n');
        }
    }
    io::write_atomic(&dir.join("distances.csv"), &distances)?;

    let mut hist = String::from("# schema_version=1\nmetric,lo,hi,count,mean\n");
    for d in &a.distributions {
        let h = &d.histogram;
        for (k, &c) in h.counts.iter().enumerate() {
            let mean = if c > 0 { fmt12(h.sums[k] / c as f64) } else { String::new() };
            hist.push_str(&format!("{},{},{},{c},{mean}\n", d.metric.tag(), fmt12(h.edges[k]), fmt12(h.edges[k + 1])));
        }
    }
    io::write_atomic(&dir.join("histogram.csv"), &hist)?;

    io::write_json(
        &dir.join("components.json"),
        &ComponentsDoc {
            duration: a.duration,
            b0: a.partition.b0,
            epsilon: a.partition.threshold,
            labels: &a.partition.labels,
            sizes: &a.partition.sizes,
            component_distances: &a.partition.component_distances,
            symmetric_components: &a.symmetric_components,
            order_parameter: &a.order_parameter,
            components: &a.components,
        },
    )
}

pub fn duration_dir(root: &Path, duration: f64) -> PathBuf {
    root.join(format!("T_{}", fmt12(duration)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub analyses: Vec<EnsembleAnalysis>,
    pub diagram: PhaseDiagram,
}

/// Samples and analyzes every grid duration, reusing ensembles already on
/// disk, then locates the transitions and writes `phase_diagram.json`.
pub fn run_sweep(config: &ExperimentConfig, mut progress: impl FnMut(&str)) -> Result<SweepOutcome> {
    config.validate()?;
    let mut analyses = Vec::with_capacity(config.t_grid.len());
    for &t in &config.t_grid {
        let dir = duration_dir(&config.output_dir, t);
        progress(&format!("T = {}", fmt12(t)));
        let records = cached_ensemble(&dir, &config.model, &config.sampler_at(t), config.workers)?;
        let a = analyze_ensemble(&records, &config.analysis, &config.metrics)?;
        write_analysis(&dir, &a)?;
        analyses.push(a);
    }
    let diagram = detect_transitions(
        analyses.iter().map(|a| a.record.clone()).collect(),
        TransitionTolerances {
            qsl: config.analysis.tol_qsl,
            order: config.analysis.order_tolerance,
        },
    )?;
    io::write_json(&config.output_dir.join("phase_diagram.json"), &diagram)?;
    Ok(SweepOutcome { analyses, diagram })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScanPoint {
    pub beta: f64,
    pub b0: usize,
    pub epsilon: f64,
    pub peak_locations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScanReport {
    pub duration: f64,
    pub steps: usize,
    pub points: Vec<BetaScanPoint>,
    pub estimate: Option<BarrierEstimate>,
    pub warning: Option<String>,
}

/// Ensembles at one duration across `betas`, reduced to a barrier estimate.
/// A missing collapse is reported as a warning rather than an error.
pub fn run_beta_scan(config: &ExperimentConfig, duration: f64, betas: &[f64]) -> Result<BetaScanReport> {
    config.validate()?;
    if betas.is_empty() || betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::InvalidConfig("beta list must be nonempty and positive".into()));
    }
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let sampler = LmcConfig {
            beta,
            ..config.sampler_at(duration)
        };
        let dir = config.output_dir.join(format!("beta_{}", fmt12(beta)));
        let records = cached_ensemble(&dir, &config.model, &sampler, config.workers)?;
        let a = analyze_ensemble(&records, &config.analysis, &[config.analysis.cluster_metric])?;
        write_analysis(&dir, &a)?;
        points.push(BetaScanPoint {
            beta,
            b0: a.partition.b0,
            epsilon: a.partition.threshold,
            peak_locations: a.record.peak_locations.clone(),
        });
    }
    let bp: Vec<BetaPoint> = points.iter().map(|p| BetaPoint { beta: p.beta, b0: p.b0 }).collect();
    let (estimate, warning) = match barrier_estimate(&bp, config.sampler.steps) {
        Ok(e) => (Some(e), None),
        Err(Error::NoCollapse) => (None, Some(Error::NoCollapse.to_string())),
        Err(e) => return Err(e),
    };
    let report = BetaScanReport {
        duration,
        steps: config.sampler.steps,
        points,
        estimate,
        warning,
    };
    io::write_json(&config.output_dir.join("beta_scan.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let desk = ExperimentConfig::preset(Preset::Desk);
        assert_eq!((desk.sampler.runs, desk.sampler.samples, desk.sampler.delta_n, desk.sampler.steps), (32, 256, 1024, 32));
        let paper = ExperimentConfig::preset(Preset::Paper);
        assert_eq!((paper.sampler.runs, paper.sampler.samples, paper.sampler.delta_n, paper.sampler.steps), (64, 4096, 16384, 64));
        assert_eq!(paper.t_grid.len(), 20);
        assert_eq!(paper.t_grid[19], 4.0);
        desk.validate().unwrap();
        paper.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let base = ExperimentConfig::preset(Preset::Desk);
        for bad in [
            ExperimentConfig { t_grid: vec![], ..base.clone() },
            ExperimentConfig { t_grid: vec![2.0, 1.0], ..base.clone() },
            ExperimentConfig { t_grid: vec![0.0, 1.0], ..base.clone() },
            ExperimentConfig { workers: 0, ..base.clone() },
            ExperimentConfig { metrics: vec![], ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn partial_toml_falls_back_to_defaults() {
        let cfg = ExperimentConfig::parse("t_grid = [2.6, 3.0]\n[sampler]\nruns = 4\n", false).unwrap();
        assert_eq!(cfg.t_grid, vec![2.6, 3.0]);
        assert_eq!(cfg.sampler.runs, 4);
        assert_eq!(cfg.sampler.beta, 1e6);
        assert_eq!(cfg.model, ModelParams::default());
        assert!(ExperimentConfig::parse("t_grid = 3", false).is_err());
    }

    #[test]
    fn toml_and_json_round_trip() {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.sampler.anneal = crate::lmc::Anneal::off();
        cfg.analysis.avg_subsample = 0;
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap(), false).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&json, true).unwrap(), cfg);
    }
}
