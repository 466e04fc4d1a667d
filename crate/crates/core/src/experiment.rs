//! Experiment configs, replicated runs and CSV output.
//!
//! A run writes `<mode>.csv` with one row per recorded step of every
//! replication, ordered by `(rep, step)`, and `<mode>_summary.csv` with the
//! per-step mean and quartiles across replications.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::builtins;
use crate::dynamics::{euler_flow, run_fwsp, RecordSchedule, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::exec::{map_indices, ExecMode};
use crate::format::{fmt_g, fmt_opt};
use crate::learning::{run_learning, LearningConfig};
use crate::model::{BanditInstance, InstanceSpec};
use crate::oracles::{grid_saddle_solve, GridSolution};
use crate::simplex::{Allocation, ScenarioMix};

pub const DEFAULT_ITERS: u64 = 1_000_000;
pub const PAPER_ITERS: u64 = 10_000_000;
pub const PAPER_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Run,
    Flow,
    Learn,
    Solve,
    Check,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Flow => "flow",
            Mode::Learn => "learn",
            Mode::Solve => "solve",
            Mode::Check => "check",
        }
    }
}

/// JSON config file schema. Only `instance` is required.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: Value,
    mode: Option<Mode>,
    iters: Option<u64>,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "default_step_h")]
    step_h: f64,
    #[serde(default = "default_resolution")]
    resolution: f64,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default)]
    base_seed: u64,
    #[serde(default)]
    record: RecordSchedule,
    #[serde(default = "default_out")]
    out: PathBuf,
}

fn default_horizon() -> f64 {
    10.0
}
fn default_step_h() -> f64 {
    1e-3
}
fn default_resolution() -> f64 {
    1e-2
}
fn default_replications() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("fwsp-out")
}

/// Where the instance came from.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    Builtin(String),
    Inline,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub instance: BanditInstance,
    pub source: InstanceSource,
    pub mode: Option<Mode>,
    /// Rounds for `run` and `learn`; `None` means the default scale.
    pub iters: Option<u64>,
    pub horizon: f64,
    pub step_h: f64,
    pub resolution: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub record: RecordSchedule,
    pub out: PathBuf,
}

fn json_error(path: &serde_path_to_error::Path, e: &serde_json::Error) -> Error {
    Error::Config(format!("at `{path}` (line {}, column {}): {e}", e.line(), e.column()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| json_error(e.path(), e.inner()))?;
        let (instance, source) = match &raw.instance {
            Value::String(name) => {
                let (inst, _) = builtins::by_name(name).ok_or_else(|| {
                    Error::Config(format!(
                        "at `instance`: unknown builtin `{name}`, expected one of {}",
                        builtins::BUILTIN_NAMES.join(", ")
                    ))
                })?;
                (inst, InstanceSource::Builtin(name.clone()))
            }
            Value::Object(_) => {
                let spec: InstanceSpec = serde_path_to_error::deserialize(raw.instance.clone())
                    .map_err(|e| Error::Config(format!("at `instance.{}`: {}", e.path(), e.inner())))?;
                (BanditInstance::from_spec(&spec)?, InstanceSource::Inline)
            }
            _ => return Err(Error::Config("at `instance`: expected a builtin name or an instance object".into())),
        };
        let cfg = Self {
            instance,
            source,
            mode: raw.mode,
            iters: raw.iters,
            horizon: raw.horizon,
            step_h: raw.step_h,
            resolution: raw.resolution,
            replications: raw.replications,
            base_seed: raw.base_seed,
            record: raw.record,
            out: raw.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("at `replications`: must be at least 1".into()));
        }
        if self.iters == Some(0) {
            return Err(Error::Config("at `iters`: must be at least 1".into()));
        }
        if !(self.step_h > 0.0 && self.step_h < 1.0) {
            return Err(Error::Config(format!("at `step_h`: must lie in (0, 1), got {}", self.step_h)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("at `horizon`: must be nonnegative, got {}", self.horizon)));
        }
        if !(self.resolution > 0.0 && self.resolution <= 1.0) {
            return Err(Error::Config(format!("at `resolution`: must lie in (0, 1], got {}", self.resolution)));
        }
        Ok(())
    }

    /// Applies `--paper-scale`: 10^7 rounds, and 100 replications for `learn`.
    pub fn paper_scale(&mut self, mode: Mode) {
        self.iters = Some(PAPER_ITERS);
        if mode == Mode::Learn {
            self.replications = PAPER_REPLICATIONS;
        }
    }

    pub fn rounds(&self) -> u64 {
        self.iters.unwrap_or(DEFAULT_ITERS)
    }
}

/// One replication's records.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub records: Vec<TrajectoryRecord>,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub step: f64,
    pub v_mean: f64,
    pub v_q1: f64,
    pub v_q3: f64,
    pub f_mean: f64,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Trajectories { replications: Vec<Replication>, summary: Vec<SummaryRow>, files: Vec<PathBuf> },
    Solved { solution: GridSolution, files: Vec<PathBuf> },
}

/// Percentile with linear interpolation between order statistics at
/// position `q (n - 1)`. `values` must be sorted and nonempty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-step mean and quartiles of `V`, and mean of `F`, across replications.
/// Missing `V` values are left out of that step's statistics.
pub fn summarize_replications(reps: &[Replication]) -> Result<Vec<SummaryRow>> {
    let first = reps.first().ok_or(Error::Config("no replications to summarize".into()))?;
    let steps: Vec<f64> = first.records.iter().map(|r| r.step).collect();
    for rep in reps {
        if rep.records.len() != steps.len() || rep.records.iter().zip(&steps).any(|(r, s)| r.step != *s) {
            return Err(Error::MisalignedSchedules);
        }
    }
    Ok(steps
        .iter()
        .enumerate()
        .map(|(j, &step)| {
            let mut v: Vec<f64> = reps.iter().filter_map(|r| r.records[j].v).collect();
            v.sort_by(f64::total_cmp);
            let f: Vec<f64> = reps.iter().map(|r| r.records[j].f).collect();
            let (v_mean, v_q1, v_q3) = if v.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (mean(&v), percentile(&v, 0.25), percentile(&v, 0.75))
            };
            SummaryRow { step, v_mean, v_q1, v_q3, f_mean: mean(&f) }
        })
        .collect())
}

fn trajectory_header(k: usize, learning: bool) -> String {
    let mut h = String::from("rep,step,F,V,gap_lb");
    (1..=k).for_each(|i| write!(h, ",p_{i}").unwrap());
    (1..k).for_each(|i| write!(h, ",mu_{i}").unwrap());
    h.push_str(",pulled_arm,chosen_scenario");
    if learning {
        h.push_str(",used_fallback,posterior_rank");
    }
    h
}

fn label(i: Option<usize>) -> String {
    i.map_or_else(|| "nan".into(), |a| (a + 1).to_string())
}

pub fn trajectory_csv(k: usize, reps: &[Replication]) -> String {
    let learning = reps.iter().flat_map(|r| &r.records).any(|r| r.learning.is_some());
    let mut out = trajectory_header(k, learning);
    out.push('\n');
    for rep in reps {
        for r in &rep.records {
            write!(out, "{},{},{},{},{}", rep.rep, fmt_g(r.step), fmt_g(r.f), fmt_opt(r.v), fmt_g(r.gap_lb)).unwrap();
            r.p.iter().chain(&r.mu).for_each(|x| write!(out, ",{}", fmt_g(*x)).unwrap());
            write!(out, ",{},{}", label(r.pulled_arm), label(r.chosen_scenario)).unwrap();
            if learning {
                match r.learning {
                    Some(l) => write!(out, ",{},{}", l.used_fallback as u8, l.posterior_rank).unwrap(),
                    None => out.push_str(",nan,nan"),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("step,V_mean,V_q1,V_q3,F_mean\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", fmt_g(r.step), fmt_g(r.v_mean), fmt_g(r.v_q1), fmt_g(r.v_q3), fmt_g(r.f_mean))
            .unwrap();
    }
    out
}

fn solution_csv(sol: &GridSolution) -> String {
    let k = sol.p_star.len();
    let mut out = String::from("F_star");
    (1..=k).for_each(|i| write!(out, ",p_{i}").unwrap());
    out.push_str(",min_scenario,error_bound\n");
    out.push_str(&fmt_g(sol.value));
    sol.p_star.iter().for_each(|x| write!(out, ",{}", fmt_g(*x)).unwrap());
    writeln!(out, ",{},{}", sol.minimizing_scenario.arm() + 1, fmt_opt(sol.error_bound)).unwrap();
    out
}

/// Runs the replications of a trajectory-producing mode.
pub fn run_replications(cfg: &ExperimentConfig, mode: Mode, exec: ExecMode) -> Result<Vec<Replication>> {
    let inst = &cfg.instance;
    let rounds = cfg.rounds();
    let results = map_indices(cfg.replications, exec, |rep| -> Result<Replication> {
        let uniform = || (Allocation::uniform(inst.num_arms()), ScenarioMix::uniform(inst.num_scenarios()));
        let records = match mode {
            Mode::Run => {
                let (p, mu) = uniform();
                run_fwsp(inst, p, mu, rounds, &cfg.record)?
            }
            Mode::Flow => {
                let (p, mu) = uniform();
                euler_flow(inst, p, mu, cfg.step_h, cfg.horizon)?
            }
            Mode::Learn => {
                let lc = LearningConfig { schedule: cfg.record.clone(), ..Default::default() };
                run_learning(inst, rounds, cfg.base_seed.wrapping_add(rep as u64), &lc)?.records
            }
            Mode::Solve | Mode::Check => {
                return Err(Error::Config(format!("mode `{}` has no trajectories", mode.name())))
            }
        };
        Ok(Replication { rep, records })
    })?;
    results.into_iter().collect()
}

/// Runs `mode` on `cfg` and writes its CSV files into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode, exec: ExecMode) -> Result<Outcome> {
    match mode {
        Mode::Check => Err(Error::Config("check mode is handled by the check module".into())),
        Mode::Solve => {
            let solution = grid_saddle_solve(&cfg.instance, cfg.resolution, exec)?;
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("solve.csv");
            fs::write(&path, solution_csv(&solution))?;
            Ok(Outcome::Solved { solution, files: vec![path] })
        }
        _ => {
            let replications = run_replications(cfg, mode, exec)?;
            let summary = summarize_replications(&replications)?;
            fs::create_dir_all(&cfg.out)?;
            let traj = cfg.out.join(format!("{}.csv", mode.name()));
            let summ = cfg.out.join(format!("{}_summary.csv", mode.name()));
            fs::write(&traj, trajectory_csv(cfg.instance.num_arms(), &replications))?;
            fs::write(&summ, summary_csv(&summary))?;
            Ok(Outcome::Trajectories { replications, summary, files: vec![traj, summ] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: f64, v: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            step,
            f: v,
            v: Some(v),
            gap_lb: 0.0,
            p: vec![1.0],
            mu: vec![],
            pulled_arm: None,
            chosen_scenario: None,
            learning: None,
        }
    }

    #[test]
    fn quartiles_interpolate() {
        let reps: Vec<Replication> =
            (1..=4).map(|v| Replication { rep: v, records: vec![rec(1.0, v as f64)] }).collect();
        let s = summarize_replications(&reps).unwrap();
        assert_eq!((s[0].v_mean, s[0].v_q1, s[0].v_q3), (2.5, 1.75, 3.25));
        let one = summarize_replications(&reps[..1]).unwrap();
        assert_eq!((one[0].v_mean, one[0].v_q1, one[0].v_q3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn misaligned_steps_are_rejected() {
        let reps = vec![
            Replication { rep: 0, records: vec![rec(1.0, 0.0)] },
            Replication { rep: 1, records: vec![rec(2.0, 0.0)] },
        ];
        assert!(matches!(summarize_replications(&reps), Err(Error::MisalignedSchedules)));
    }

    #[test]
    fn config_defaults_and_builtins() {
        let cfg = ExperimentConfig::from_json(r#"{"instance": "case1"}"#).unwrap();
        assert_eq!(cfg.rounds(), DEFAULT_ITERS);
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.record, RecordSchedule::Geometric);
        assert_eq!(cfg.source, InstanceSource::Builtin("case1".into()));
        let cfg = ExperimentConfig::from_json(
            r#"{"instance": {"kind": "unstructured", "theta": [1, 0]}, "record": [1, 5], "iters": 5}"#,
        )
        .unwrap();
        assert_eq!(cfg.record, RecordSchedule::Steps(vec![1, 5]));
    }

    #[test]
    fn config_errors_name_the_field() {
        let e = ExperimentConfig::from_json("{\"instance\": \"case1\",\n \"iters\": \"many\"}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("iters") && msg.contains("line 2"), "{msg}");
        let e = ExperimentConfig::from_json(r#"{"instance": {"kind": "linear", "theta": [1], "bogus": 1}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("instance"), "{e}");
        assert!(ExperimentConfig::from_json(r#"{"instance": "case9"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"instance": "case1", "replications": 0}"#).is_err());
        let e = ExperimentConfig::from_json(r#"{"instance": {"kind": "unstructured", "theta": [1, 1]}}"#)
            .unwrap_err();
        assert!(e.is_config_error());
    }

    #[test]
    fn csv_layout() {
        let cfg = ExperimentConfig::from_json(r#"{"instance": "case1", "iters": 4}"#).unwrap();
        let reps = run_replications(&cfg, Mode::Run, ExecMode::Sequential).unwrap();
        let csv = trajectory_csv(3, &reps);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "rep,step,F,V,gap_lb,p_1,p_2,p_3,mu_1,mu_2,pulled_arm,chosen_scenario");
        assert_eq!(csv.lines().count(), 1 + 3);
        let summary = summary_csv(&summarize_replications(&reps).unwrap());
        assert!(summary.starts_with("step,V_mean,V_q1,V_q3,F_mean\n1,"));
    }
}
