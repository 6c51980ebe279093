//! Experiment commands behind the `mpctune` binary.
//!
//! Each command runs once per seed (seeds in parallel) and writes per-seed
//! files into the output directory, plus a `manifest_<command>.json` holding the fully
//! resolved configuration. Every JSON artifact also embeds the config and seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::acquisition::AcquisitionRegistry;
use crate::bo::{self, Evaluator, IterationLog, Observation};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::harness::{
    baseline_openloop_id, evaluate_with_runs, monte_carlo_assess, run_closed_loop, ClosedLoopResult,
    CstrEvaluator, HarnessConfig, SummaryStats, TuningParams,
};
use crate::rng::{stream, stream_id, Purpose};

pub const OUT_DIR_ENV: &str = "MPCTUNE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "mpctune-out";

pub const SIMULATE_HEADER: &str = "k,t,F,cB_true,TR_true,cB_meas,TR_meas,feasible";
pub const TRAJECTORY_HEADER: &str = "t,cA,cB,TR,TK,F,cB_meas,TR_meas";
pub const BEST_SO_FAR_HEADER: &str = "iteration,y_obj,y_con,best_feasible_production";
pub const SUMMARY_HEADER: &str = "iteration,mean,std,min,max,n_feasible_seeds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Tune,
    Baseline,
    Assess,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Tune => "tune",
            Command::Baseline => "baseline",
            Command::Assess => "assess",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Replaces the config's seed list when present.
    pub seeds: Option<Vec<u64>>,
    pub theta_path: Option<PathBuf>,
    pub dump_trajectories: bool,
}

/// Output directory precedence: flag, then config, then environment, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig, env: Option<&str>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: Result<Vec<PathBuf>>,
}

#[derive(Debug)]
pub struct CommandReport {
    pub command: Command,
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    /// Cross-seed artifacts (manifest, summaries).
    pub shared: Vec<PathBuf>,
}

impl CommandReport {
    pub fn all_ok(&self) -> bool {
        self.seeds.iter().all(|s| s.result.is_ok())
    }
}

/// Writes a float with 17 significant digits; non-finite values become `nan`/`inf`/`-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// A θ file is any JSON object with a 15-element `"theta"` array.
pub fn load_theta(path: &Path) -> Result<TuningParams> {
    #[derive(Deserialize)]
    struct ThetaFile {
        theta: Vec<f64>,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: ThetaFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed theta file {}: {e}", path.display())))?;
    TuningParams::from_theta_unchecked(&file.theta)
        .map_err(|e| Error::Config(format!("malformed theta file {}: {e}", path.display())))
}

/// Rows `k = 0..T` of one closed loop; the last row has no input or measurement.
pub fn simulate_csv(run: &ClosedLoopResult, config: &HarnessConfig) -> String {
    let mut out = format!("{SIMULATE_HEADER}\n");
    let (lo, hi) = config.mpc.t_bounds;
    for (k, s) in run.states.iter().enumerate() {
        let (f, meas) = match (run.inputs.get(k), run.measurements.get(k)) {
            (Some(f), Some(m)) => (fmt_f64(*f), [fmt_f64(m[0]), fmt_f64(m[1])]),
            _ => (String::new(), [String::new(), String::new()]),
        };
        let feasible = s.TR >= lo && s.TR <= hi;
        out.push_str(&csv_line(&[
            k.to_string(),
            fmt_f64(k as f64 * config.mpc.dt),
            f,
            fmt_f64(s.cB),
            fmt_f64(s.TR),
            meas[0].clone(),
            meas[1].clone(),
            (feasible as u8).to_string(),
        ]));
    }
    out
}

/// Full-state dump of one closed loop.
pub fn trajectory_csv(run: &ClosedLoopResult, dt: f64) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for (k, s) in run.states.iter().enumerate() {
        let (f, meas) = match (run.inputs.get(k), run.measurements.get(k)) {
            (Some(f), Some(m)) => (fmt_f64(*f), [fmt_f64(m[0]), fmt_f64(m[1])]),
            _ => (String::new(), [String::new(), String::new()]),
        };
        out.push_str(&csv_line(&[
            fmt_f64(k as f64 * dt),
            fmt_f64(s.cA),
            fmt_f64(s.cB),
            fmt_f64(s.TR),
            fmt_f64(s.TK),
            f,
            meas[0].clone(),
            meas[1].clone(),
        ]));
    }
    out
}

fn manifest(command: Command, config: &ExperimentConfig, seeds: &[u64], opts: &RunOptions) -> serde_json::Value {
    json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seeds": seeds,
        "theta_file": opts.theta_path,
        "dump_trajectories": opts.dump_trajectories,
        "assumptions": {
            "vin_l": config.mpc.vin,
            "vr_l": config.plant.VR,
            "cB_scaling": config.mpc.scaling.cB,
            "constraint_on_true_temperature": true,
        },
        "config": config,
    })
}

/// Runs `command` for every seed and writes all artifacts under `opts.out_dir`.
pub fn run_command(command: Command, config: &ExperimentConfig, opts: &RunOptions) -> Result<CommandReport> {
    config.validate()?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| config.seeds.clone());
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let theta = match command {
        Command::Assess | Command::Simulate => {
            let path = opts
                .theta_path
                .as_deref()
                .ok_or_else(|| Error::Usage(format!("`{}` needs --theta <path>", command.name())))?;
            Some(load_theta(path)?)
        }
        _ => None,
    };
    fs::create_dir_all(&opts.out_dir)?;
    if opts.dump_trajectories {
        fs::create_dir_all(opts.out_dir.join("trajectories"))?;
    }
    let manifest_path = opts.out_dir.join(format!("manifest_{}.json", command.name()));
    write_json(&manifest_path, &manifest(command, config, &seeds, opts))?;

    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            let result = match command {
                Command::Tune => tune_seed(config, seed, opts).map(|t| t.files),
                Command::Baseline => baseline_seed(config, seed, opts),
                Command::Assess => assess_seed(config, theta.as_ref().expect("loaded"), seed, opts),
                Command::Simulate => simulate_seed(config, theta.as_ref().expect("loaded"), seed, opts),
            };
            SeedOutcome { seed, result }
        })
        .collect();

    let mut shared = vec![manifest_path];
    if command == Command::Tune {
        shared.push(write_tune_summary(config, &seeds, opts)?);
    }
    Ok(CommandReport {
        command,
        out_dir: opts.out_dir.clone(),
        seeds: outcomes,
        shared,
    })
}

pub fn cmd_tune(config: &ExperimentConfig, opts: &RunOptions) -> Result<CommandReport> {
    run_command(Command::Tune, config, opts)
}

pub fn cmd_baseline(config: &ExperimentConfig, opts: &RunOptions) -> Result<CommandReport> {
    run_command(Command::Baseline, config, opts)
}

pub fn cmd_assess(config: &ExperimentConfig, opts: &RunOptions) -> Result<CommandReport> {
    run_command(Command::Assess, config, opts)
}

pub fn cmd_simulate(config: &ExperimentConfig, opts: &RunOptions) -> Result<CommandReport> {
    run_command(Command::Simulate, config, opts)
}

/// Wraps the CSTR evaluator to write every replicate trajectory.
struct DumpingEvaluator {
    inner: CstrEvaluator,
    dir: PathBuf,
    errors: Mutex<Vec<String>>,
}

impl Evaluator for DumpingEvaluator {
    fn evaluate(&self, theta: &[f64], iteration: usize) -> Result<Observation> {
        let params = TuningParams::from_theta_unchecked(theta)?;
        let c = &self.inner;
        let (e, runs) = evaluate_with_runs(&params, c.replicates, &c.config, &c.noise, c.seed, iteration as u64)?;
        for (j, run) in runs.iter().enumerate() {
            let path = self.dir.join(format!("tune_seed{}_iter{iteration:03}_rep{j:03}.csv", c.seed));
            if let Err(err) = write_text(&path, &trajectory_csv(run, c.config.mpc.dt)) {
                self.errors.lock().expect("poisoned").push(err.to_string());
            }
        }
        Ok(Observation {
            y_obj: e.y_obj,
            y_con: e.y_con,
            replicate_count: e.m,
            rng_stream_id: stream_id(Purpose::Replicate, iteration as u64, 0),
        })
    }
}

pub struct TuneOutput {
    pub report: bo::RunReport,
    pub logs: Vec<IterationLog>,
    pub files: Vec<PathBuf>,
}

fn tune_paths(out: &Path, seed: u64) -> [PathBuf; 3] {
    [
        out.join(format!("tune_seed{seed}.jsonl")),
        out.join(format!("best_theta_seed{seed}.json")),
        out.join(format!("best_so_far_seed{seed}.csv")),
    ]
}

/// One BO run; the JSON-lines log is flushed line by line so a failed run
/// leaves its partial log behind.
pub fn tune_seed(config: &ExperimentConfig, seed: u64, opts: &RunOptions) -> Result<TuneOutput> {
    let [log_path, theta_path, csv_path] = tune_paths(&opts.out_dir, seed);
    let inner = CstrEvaluator {
        config: config.harness(),
        noise: config.noise(),
        replicates: config.replicates,
        seed,
    };
    let dumping = DumpingEvaluator {
        inner: inner.clone(),
        dir: opts.out_dir.join("trajectories"),
        errors: Mutex::new(Vec::new()),
    };
    let evaluator: &dyn Evaluator = if opts.dump_trajectories { &dumping } else { &inner };

    let mut log_file = BufWriter::new(File::create(&log_path)?);
    let mut logs = Vec::with_capacity(config.bo.budget);
    let registry = AcquisitionRegistry::default();
    let outcome = bo::run(
        &config.bo,
        evaluator,
        &config.theta_bounds.to_bounds(),
        seed,
        &registry,
        &mut |log| {
            serde_json::to_writer(&mut log_file, log)?;
            log_file.write_all(b"\n")?;
            log_file.flush()?;
            logs.push(log.clone());
            Ok(())
        },
    );
    log_file.flush()?;
    let (_, report) = outcome?;
    if let Some(err) = dumping.errors.lock().expect("poisoned").first() {
        return Err(Error::Evaluation(format!("trajectory dump failed: {err}")));
    }

    let production = report.best_feasible.map(|v| -v);
    write_json(
        &theta_path,
        &json!({
            "seed": seed,
            "theta": report.recommended_theta,
            "recommendation_source": report.recommendation_source,
            "best_feasible_production": production,
            "report": report,
            "config": config,
        }),
    )?;

    let mut csv = format!("{BEST_SO_FAR_HEADER}\n");
    for log in &logs {
        csv.push_str(&csv_line(&[
            log.iteration.to_string(),
            fmt_f64(log.y_obj.unwrap_or(f64::NAN)),
            fmt_f64(log.y_con.unwrap_or(f64::NAN)),
            fmt_f64(log.best_feasible.map(|v| -v).unwrap_or(f64::NAN)),
        ]));
    }
    write_text(&csv_path, &csv)?;
    Ok(TuneOutput {
        report,
        logs,
        files: vec![log_path, theta_path, csv_path],
    })
}

/// Per-iteration statistics of best-so-far feasible production across the
/// seeds whose logs exist; seeds without a feasible point yet are skipped.
fn write_tune_summary(config: &ExperimentConfig, seeds: &[u64], opts: &RunOptions) -> Result<PathBuf> {
    let mut per_seed: Vec<Vec<Option<f64>>> = Vec::new();
    for &seed in seeds {
        let [log_path, ..] = tune_paths(&opts.out_dir, seed);
        let Ok(text) = fs::read_to_string(&log_path) else {
            continue;
        };
        let mut column = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let log: IterationLog = serde_json::from_str(line)?;
            column.push(log.best_feasible.map(|v| -v));
        }
        per_seed.push(column);
    }
    let mut csv = format!("{SUMMARY_HEADER}\n");
    for it in 0..config.bo.budget {
        let values: Vec<f64> = per_seed.iter().filter_map(|c| c.get(it).copied().flatten()).collect();
        let stats = SummaryStats::from_values(&values);
        csv.push_str(&csv_line(&[
            it.to_string(),
            fmt_f64(stats.mean),
            fmt_f64(stats.std),
            fmt_f64(stats.min),
            fmt_f64(stats.max),
            values.len().to_string(),
        ]));
    }
    let path = opts.out_dir.join("best_so_far_summary.csv");
    write_text(&path, &csv)?;
    Ok(path)
}

fn baseline_seed(config: &ExperimentConfig, seed: u64, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let harness = config.harness();
    let b = baseline_openloop_id(&harness, &config.baseline, &config.noise(), seed)?;
    let json_path = opts.out_dir.join(format!("baseline_seed{seed}.json"));
    let csv_path = opts.out_dir.join(format!("baseline_closed_loop_seed{seed}.csv"));
    write_json(
        &json_path,
        &json!({
            "seed": seed,
            "theta": b.theta.to_theta(),
            "fit": b.fit,
            "train_rows": b.train_rows,
            "holdout_rows": b.holdout_rows,
            "holdout_accuracy": b.holdout_accuracy,
            "holdout_accuracy_mean": b.holdout_accuracy_mean,
            "production": b.closed_loop.production,
            "all_feasible": b.closed_loop.all_feasible(),
            "config": config,
        }),
    )?;
    write_text(&csv_path, &simulate_csv(&b.closed_loop, &harness))?;
    let mut files = vec![json_path, csv_path];
    if opts.dump_trajectories {
        let p = opts.out_dir.join("trajectories").join(format!("baseline_seed{seed}.csv"));
        write_text(&p, &trajectory_csv(&b.closed_loop, harness.mpc.dt))?;
        files.push(p);
    }
    Ok(files)
}

fn assess_seed(config: &ExperimentConfig, theta: &TuningParams, seed: u64, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let harness = config.harness();
    let (report, runs) = monte_carlo_assess(theta, config.assessment_runs, &harness, &config.noise(), seed)?;
    let path = opts.out_dir.join(format!("assessment_seed{seed}.json"));
    write_json(
        &path,
        &json!({
            "seed": seed,
            "theta": report.theta,
            "production_stats": report.production_stats,
            "per_step_violation_freq": report.per_step_violation_freq,
            "max_violation_freq": report.max_violation_freq,
            "n_runs": report.n_runs,
            "n_failed": report.n_failed,
            "config": config,
        }),
    )?;
    let mut files = vec![path];
    if opts.dump_trajectories {
        for (j, run) in runs.iter().enumerate() {
            let p = opts.out_dir.join("trajectories").join(format!("assess_seed{seed}_run{j:03}.csv"));
            write_text(&p, &trajectory_csv(run, harness.mpc.dt))?;
            files.push(p);
        }
    }
    Ok(files)
}

/// One closed loop on the seed's simulation stream.
pub fn simulate_run(config: &ExperimentConfig, theta: &TuningParams, seed: u64) -> Result<ClosedLoopResult> {
    let mut rng = stream(seed, stream_id(Purpose::Simulate, 0, 0));
    run_closed_loop(theta, &config.harness(), &config.noise(), &mut rng)
}

fn simulate_seed(config: &ExperimentConfig, theta: &TuningParams, seed: u64, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let harness = config.harness();
    let run = simulate_run(config, theta, seed)?;
    let path = opts.out_dir.join(format!("simulate_seed{seed}.csv"));
    write_text(&path, &simulate_csv(&run, &harness))?;
    let mut files = vec![path];
    if opts.dump_trajectories {
        let p = opts.out_dir.join("trajectories").join(format!("simulate_seed{seed}.csv"));
        write_text(&p, &trajectory_csv(&run, harness.mpc.dt))?;
        files.push(p);
    }
    Ok(files)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;

    #[test]
    fn floats_have_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-12.5), "-1.2500000000000000e1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        for x in [0.1, 1.0 / 3.0, 123456.789, -2.5e-300] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn out_dir_precedence() {
        let mut c = ExperimentConfig::benchmark(5.1, Scenario::NoiseFree);
        assert_eq!(resolve_out_dir(None, &c, None), PathBuf::from(DEFAULT_OUT_DIR));
        assert_eq!(resolve_out_dir(None, &c, Some("envdir")), PathBuf::from("envdir"));
        c.output_dir = Some("cfgdir".into());
        assert_eq!(resolve_out_dir(None, &c, Some("envdir")), PathBuf::from("cfgdir"));
        assert_eq!(resolve_out_dir(Some(Path::new("flag")), &c, Some("envdir")), PathBuf::from("flag"));
    }

    #[test]
    fn theta_file_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        fs::write(&p, r#"{"theta": [0,0,0,0,0,0,0,0,0,0,0,0,0,0,0.1], "extra": 1}"#).unwrap();
        assert_eq!(load_theta(&p).unwrap().backoff, 0.1);
        fs::write(&p, r#"{"theta": [0,0,0]}"#).unwrap();
        assert!(matches!(load_theta(&p), Err(Error::Config(_))));
        fs::write(&p, "not json").unwrap();
        assert!(matches!(load_theta(&p), Err(Error::Config(_))));
        assert!(load_theta(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn simulate_csv_layout() {
        let c = ExperimentConfig::benchmark(5.1, Scenario::NoiseFree);
        let theta = TuningParams::from_theta_unchecked(&[0.0; 15]).unwrap();
        let run = simulate_run(&c, &theta, 0).unwrap();
        let text = simulate_csv(&run, &c.harness());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SIMULATE_HEADER);
        assert_eq!(lines.len(), 1 + c.horizon + 1);
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
        assert!(!text.contains('\r'));
    }
}
