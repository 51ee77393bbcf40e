use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use clpt::experiment::{
    analyze_ensemble, cached_ensemble, duration_dir, read_ensemble, run_beta_scan, run_sweep, write_analysis,
    ExperimentConfig,
};
use clpt::io::{self, fmt12};
use clpt::landscape::{detect_transitions, Binning, Epsilon, TransitionTolerances};
use clpt::lmc::InitKind;
use clpt::protocol::SetMetric;
use clpt::quantum::{ground_state, reduced_bloch, BlochPoint, ControlProblem, QuantumState};
use clpt::{Error, Result};

#[derive(Parser)]
#[command(name = "clpt", version, about = "Sample and analyze the two-qubit control landscape")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the initial and target ground states and their overlap.
    GroundStates {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        json: bool,
    },
    /// Infidelity and Bloch trajectory of protocols read from a CSV file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Samples CSV, or headerless rows of amplitudes.
        #[arg(long)]
        protocol: PathBuf,
        /// Duration; required when the file has no T column.
        #[arg(long)]
        duration: Option<f64>,
        /// Trajectory CSV for the row selected by --row.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Directory receiving one trajectory CSV per row.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Sample one ensemble at a single duration.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        duration: f64,
        /// Ensemble directory (default: <output-dir>/T_<duration>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze an ensemble directory, or every T_* ensemble under a sweep root.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Sample and analyze every duration of the grid, resuming from disk.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Ensembles across inverse temperatures at one duration.
    BetaScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        duration: f64,
        #[arg(long, value_delimiter = ',', default_value = "1e1,1e2,1e3,1e4,1e5,1e6")]
        betas: Vec<f64>,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON configuration; replaces the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    preset: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<SetMetric>>,

    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    h_z: Option<f64>,
    #[arg(long)]
    h_x: Option<f64>,
    #[arg(long)]
    h_init: Option<f64>,
    #[arg(long)]
    h_target: Option<f64>,

    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    delta_n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial protocol: unit ([0,1]), symmetric ([-1,1]) or zero.
    #[arg(long, value_parser = ["unit", "symmetric", "zero"])]
    init: Option<String>,
    #[arg(long)]
    anneal: Option<bool>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    ramp_sweeps: Option<usize>,
    /// Accept with exp(-β ΔI) rather than exp(-β L ΔI).
    #[arg(long)]
    intensive: bool,

    /// Clustering threshold: "gap" or a number.
    #[arg(long)]
    epsilon: Option<String>,
    /// Histogram bins: "fd" or a bin count.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    cluster_metric: Option<SetMetric>,
    #[arg(long)]
    avg_subsample: Option<usize>,
    #[arg(long)]
    tol_qsl: Option<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, p) => ExperimentConfig::preset(p.as_deref().unwrap_or("paper").parse()?),
            (Some(_), Some(_)) => return Err(bad("--config and --preset are mutually exclusive")),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set!(
            output_dir => c.output_dir,
            workers => c.workers,
            t_grid => c.t_grid,
            metrics => c.metrics,
            j => c.model.j,
            h_z => c.model.h_z,
            h_x => c.model.h_x,
            h_init => c.model.h_init,
            h_target => c.model.h_target,
            steps => c.sampler.steps,
            beta => c.sampler.beta,
            sigma => c.sampler.sigma,
            burn_in => c.sampler.burn_in,
            delta_n => c.sampler.delta_n,
            samples => c.sampler.samples,
            runs => c.sampler.runs,
            seed => c.sampler.seed,
            anneal => c.sampler.anneal.enabled,
            beta_start => c.sampler.anneal.beta_start,
            ramp_sweeps => c.sampler.anneal.ramp_sweeps,
            cluster_metric => c.analysis.cluster_metric,
            avg_subsample => c.analysis.avg_subsample,
            tol_qsl => c.analysis.tol_qsl,
        );
        if self.intensive {
            c.sampler.extensive = false;
        }
        if let Some(init) = &self.init {
            c.sampler.init = match init.as_str() {
                "unit" => InitKind::UniformUnit,
                "symmetric" => InitKind::UniformSymmetric,
                _ => InitKind::Zero,
            };
        }
        if let Some(e) = &self.epsilon {
            c.analysis.epsilon = match e.as_str() {
                "gap" => Epsilon::LargestGap,
                v => Epsilon::Fixed(v.parse().map_err(|_| bad(format!("bad --epsilon '{v}'")))?),
            };
        }
        if let Some(b) = &self.bins {
            c.analysis.binning = match b.as_str() {
                "fd" => Binning::FreedmanDiaconis,
                v => Binning::Fixed(v.parse().map_err(|_| bad(format!("bad --bins '{v}'")))?),
            };
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct StateReport {
    re: Vec<f64>,
    im: Vec<f64>,
    bloch: BlochPoint,
}

impl From<&QuantumState> for StateReport {
    fn from(psi: &QuantumState) -> Self {
        StateReport {
            re: psi.amplitudes.iter().map(|z| z.re).collect(),
            im: psi.amplitudes.iter().map(|z| z.im).collect(),
            bloch: reduced_bloch(psi),
        }
    }
}

#[derive(Serialize)]
struct GroundStateReport {
    h_init: f64,
    h_target: f64,
    initial: StateReport,
    target: StateReport,
    overlap: f64,
    static_infidelity: f64,
}

fn print_state(label: &str, field: f64, s: &StateReport) {
    println!("{label} (h_eff = {}):", fmt12(field));
    for (k, (re, im)) in s.re.iter().zip(&s.im).enumerate() {
        println!("  a{} = {} {} {}i", k + 1, fmt12(*re), if *im < 0.0 { "-" } else { "+" }, fmt12(im.abs()));
    }
    println!("  bloch n = ({}, {}, {}), |n| = {}", fmt12(s.bloch.n[0]), fmt12(s.bloch.n[1]), fmt12(s.bloch.n[2]), fmt12(s.bloch.norm));
}

fn ground_states(common: &Common, json: bool) -> Result<()> {
    let c = common.resolve()?;
    let m = c.model;
    let initial = ground_state(&m, m.h_init)?;
    let target = ground_state(&m, m.h_target)?;
    let report = GroundStateReport {
        h_init: m.h_init,
        h_target: m.h_target,
        initial: (&initial).into(),
        target: (&target).into(),
        overlap: target.fidelity(&initial),
        static_infidelity: 1.0 - target.fidelity(&initial),
    };
    if json {
        print!("{}", io::to_json_string(&report)?);
    } else {
        print_state("initial state", m.h_init, &report.initial);
        print_state("target state", m.h_target, &report.target);
        println!("|<psi*|psi0>|^2 = {}", fmt12(report.overlap));
        println!("infidelity at T = 0: {}", fmt12(report.static_infidelity));
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    row: usize,
    duration: f64,
    infidelity: f64,
    min_bloch_norm: f64,
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    common: &Common,
    protocol: &Path,
    duration: Option<f64>,
    out: Option<&Path>,
    row: usize,
    frames: Option<&Path>,
    json: bool,
) -> Result<()> {
    let c = common.resolve()?;
    let (protocols, _) = io::read_protocols(protocol, duration)?;
    if row >= protocols.len() {
        return Err(bad(format!("--row {row} but the file has {} rows", protocols.len())));
    }
    let problem = ControlProblem::new(c.model)?;
    let mut results = Vec::with_capacity(protocols.len());
    let mut trajectories = Vec::with_capacity(protocols.len());
    for (k, p) in protocols.iter().enumerate() {
        let (last, states) = problem.evolve(p);
        let min_norm = states.iter().map(|s| reduced_bloch(s).norm).fold(f64::INFINITY, f64::min);
        results.push(Evaluation {
            row: k,
            duration: p.duration(),
            infidelity: 1.0 - problem.target.fidelity(&last),
            min_bloch_norm: min_norm,
        });
        trajectories.push(io::trajectory_csv(p.duration(), &states));
    }
    if let Some(path) = out {
        io::write_atomic(path, &trajectories[row])?;
    }
    if let Some(dir) = frames {
        for (k, t) in trajectories.iter().enumerate() {
            io::write_atomic(&dir.join(format!("frame_{k:05}.csv")), t)?;
        }
    }
    if json {
        print!("{}", io::to_json_string(&results)?);
    } else {
        for r in &results {
            println!(
                "row {}: T = {}, infidelity = {}, min |n| = {}",
                r.row,
                fmt12(r.duration),
                fmt12(r.infidelity),
                fmt12(r.min_bloch_norm)
            );
        }
    }
    Ok(())
}

fn sample(common: &Common, duration: f64, out: Option<&Path>) -> Result<()> {
    let c = common.resolve()?;
    let sampler = c.sampler_at(duration);
    sampler.validate()?;
    let dir = out.map_or_else(|| duration_dir(&c.output_dir, duration), Path::to_path_buf);
    let records = cached_ensemble(&dir, &c.model, &sampler, c.workers)?;
    for r in &records {
        let m = &r.manifest;
        println!(
            "run {:3}: best I = {}, final I = {}, min |m| = {}, acceptance = {}",
            m.run_index,
            fmt12(m.best_infidelity),
            fmt12(m.final_infidelity),
            fmt12(m.min_abs_m),
            fmt12(m.acceptance_rate)
        );
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn analyze(common: &Common, input: &Path) -> Result<()> {
    let c = common.resolve()?;
    let mut dirs: Vec<PathBuf> = if input.join("ensemble.json").exists() {
        vec![input.to_path_buf()]
    } else {
        std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("ensemble.json").exists())
            .collect()
    };
    if dirs.is_empty() {
        return Err(Error::parse(input.display().to_string(), "no ensemble directories found"));
    }
    let mut analyses = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let (_, _, records) = read_ensemble(dir)?;
        let a = analyze_ensemble(&records, &c.analysis, &c.metrics)?;
        write_analysis(dir, &a)?;
        println!(
            "T = {}: b0 = {}, epsilon = {}, order parameter = {}, min I = {}",
            fmt12(a.duration),
            a.partition.b0,
            fmt12(a.partition.threshold),
            fmt12(a.record.order_parameter),
            fmt12(a.record.min_infidelity)
        );
        analyses.push(a);
    }
    if analyses.len() > 1 {
        let mut order: Vec<usize> = (0..analyses.len()).collect();
        order.sort_by(|&a, &b| analyses[a].duration.total_cmp(&analyses[b].duration));
        dirs = order.iter().map(|&k| dirs[k].clone()).collect();
        let records = order.iter().map(|&k| analyses[k].record.clone()).collect();
        let diagram = detect_transitions(
            records,
            TransitionTolerances {
                qsl: c.analysis.tol_qsl,
                order: c.analysis.order_tolerance,
            },
        )?;
        io::write_json(&input.join("phase_diagram.json"), &diagram)?;
        print_transitions(&diagram);
    }
    let _ = dirs;
    Ok(())
}

fn print_transitions(d: &clpt::landscape::PhaseDiagram) {
    for (name, est) in [("T_QSL", d.t_qsl), ("T_sb", d.t_sb), ("T_t+", d.t_t_plus), ("T_t-", d.t_t_minus)] {
        match est {
            Some(e) => println!("{name} = {} ± {}", fmt12(e.value), fmt12(e.uncertainty)),
            None => println!("{name}: not bracketed by the grid"),
        }
    }
}

fn sweep(common: &Common) -> Result<()> {
    let c = common.resolve()?;
    let outcome = run_sweep(&c, |msg| eprintln!("{msg}"))?;
    for a in &outcome.analyses {
        println!(
            "T = {}: b0 = {}, order parameter = {}, min I = {}",
            fmt12(a.duration),
            a.partition.b0,
            fmt12(a.record.order_parameter),
            fmt12(a.record.min_infidelity)
        );
    }
    print_transitions(&outcome.diagram);
    Ok(())
}

fn beta_scan(common: &Common, duration: f64, betas: &[f64]) -> Result<()> {
    let c = common.resolve()?;
    let report = run_beta_scan(&c, duration, betas)?;
    for p in &report.points {
        println!("beta = {}: b0 = {}", fmt12(p.beta), p.b0);
    }
    match (&report.estimate, &report.warning) {
        (Some(e), _) => println!("beta* = {}, barrier ΔI ≈ {}", fmt12(e.beta_star), fmt12(e.delta_infidelity)),
        (None, Some(w)) => eprintln!("warning: {w}"),
        (None, None) => {}
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GroundStates { common, json } => ground_states(common, *json),
        Command::Evaluate {
            common,
            protocol,
            duration,
            out,
            row,
            frames,
            json,
        } => evaluate(common, protocol, *duration, out.as_deref(), *row, frames.as_deref(), *json),
        Command::Sample { common, duration, out } => sample(common, *duration, out.as_deref()),
        Command::Analyze { common, input } => analyze(common, input),
        Command::Sweep { common } => sweep(common),
        Command::BetaScan { common, duration, betas } => beta_scan(common, *duration, betas),
        Command::Config { common } => {
            print!("{}", common.resolve()?.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
