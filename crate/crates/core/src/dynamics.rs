//! Frank-Wolfe self-play: discrete one-hot updates, the explicit Euler
//! surrogate of the continuous-time flow, and the Lyapunov / KKT diagnostics.

use serde::{Deserialize, Serialize};

use crate::divergences::{evaluate_scenarios, grad_p_f, grad_p_f_selection, ScenarioEval};
use crate::error::{Error, Result};
use crate::model::{dot, BanditInstance, ScenarioIndex};
use crate::simplex::{Allocation, ScenarioMix};

/// State of the discrete dynamics. The next step uses step size `1/(n+1)`,
/// so a state with `n = 0` is fully replaced by the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub n: u64,
    pub p: Allocation,
    pub mu: ScenarioMix,
}

impl IterateState {
    pub fn new(p: Allocation, mu: ScenarioMix) -> Self {
        Self { n: 0, p, mu }
    }

    pub fn uniform(inst: &BanditInstance) -> Self {
        Self::new(Allocation::uniform(inst.num_arms()), ScenarioMix::uniform(inst.num_scenarios()))
    }

    /// One simultaneous self-play step, in place.
    pub fn advance(&mut self, inst: &BanditInstance) -> Result<StepOutcome> {
        check_dims(inst, &self.p, &self.mu)?;
        let evals = evaluate_scenarios(inst, &self.p, true);
        let (arm, pos) = select_pair(inst, &self.p, &self.mu, &evals);
        let step = 1.0 / (self.n as f64 + 1.0);
        self.p.move_toward_vertex(arm, step);
        self.mu.move_toward_vertex(pos, step);
        self.n += 1;
        Ok(StepOutcome { pulled_arm: arm, chosen_scenario: inst.scenario_set()[pos] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub pulled_arm: usize,
    pub chosen_scenario: ScenarioIndex,
}

/// Extra columns emitted by the learning variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearningColumns {
    pub used_fallback: bool,
    pub posterior_rank: usize,
}

/// One recorded row of a trajectory. `step` is a round index for the
/// discrete dynamics and a time for the Euler flow. `v` is `None` where the
/// payoff is not differentiable at the recorded point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: f64,
    pub f: f64,
    pub v: Option<f64>,
    pub gap_lb: f64,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    pub pulled_arm: Option<usize>,
    pub chosen_scenario: Option<usize>,
    pub learning: Option<LearningColumns>,
}

/// Which steps of a run get recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(untagged, deny_unknown_fields)]
pub enum RecordSchedule {
    /// Powers of two plus the final step.
    #[default]
    #[serde(with = "geometric_token")]
    Geometric,
    Steps(Vec<u64>),
}

mod geometric_token {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("geometric")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "geometric" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("unknown record schedule `{s}`")))
        }
    }
}

impl RecordSchedule {
    /// Sorted, deduplicated steps in `0..=last`.
    pub fn steps(&self, last: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            RecordSchedule::Geometric => std::iter::successors(Some(1u64), |s| s.checked_mul(2))
                .take_while(|&s| s <= last)
                .chain(std::iter::once(last))
                .filter(|&s| s >= 1)
                .collect(),
            RecordSchedule::Steps(v) => v.iter().copied().filter(|&s| s <= last).collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn check_dims(inst: &BanditInstance, p: &[f64], mu: &[f64]) -> Result<()> {
    if p.len() != inst.num_arms() || mu.len() != inst.num_scenarios() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} arms and {} scenarios, instance has {} and {}",
            p.len(),
            mu.len(),
            inst.num_arms(),
            inst.num_scenarios()
        )));
    }
    Ok(())
}

/// Index of the first maximum.
pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Index of the first minimum.
pub(crate) fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

/// Arm and scenario position picked from one evaluation at `(p, mu)`.
fn select_pair(inst: &BanditInstance, p: &[f64], mu: &[f64], evals: &[ScenarioEval]) -> (usize, usize) {
    let g = grad_p_f_selection(inst, p, mu, evals);
    let values: Vec<f64> = evals.iter().map(|e| e.value).collect();
    (argmax_first(&g), argmin_first(&values))
}

/// Experimenter's vertex response: the first arm maximizing `grad_p F`.
///
/// Where a weighted scenario is not differentiable at `p` the gradient is
/// replaced by a limiting gradient from the interior, so this never fails on
/// a valid state.
pub fn select_arm(inst: &BanditInstance, p: &[f64], mu: &[f64]) -> Result<usize> {
    check_dims(inst, p, mu)?;
    let evals = evaluate_scenarios(inst, p, true);
    Ok(argmax_first(&grad_p_f_selection(inst, p, mu, &evals)))
}

/// Skeptic's vertex response: the first scenario minimizing `D(p, x)`.
pub fn select_scenario(inst: &BanditInstance, p: &[f64]) -> Result<ScenarioIndex> {
    if p.len() != inst.num_arms() {
        return Err(Error::DimensionMismatch("allocation length".into()));
    }
    let values: Vec<f64> = evaluate_scenarios(inst, p, false).iter().map(|e| e.value).collect();
    Ok(inst.scenario_set()[argmin_first(&values)])
}

/// Functional form of [`IterateState::advance`]: both selections are made at
/// `(p_n, mu_n)` before either vector moves.
pub fn fwsp_step(inst: &BanditInstance, state: &IterateState) -> Result<(IterateState, StepOutcome)> {
    let mut next = state.clone();
    let out = next.advance(inst)?;
    Ok((next, out))
}

/// Payoff-level quantities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub f: f64,
    pub min_d: f64,
    pub v: Option<f64>,
}

impl Diagnostics {
    pub fn gap_lb(&self) -> f64 {
        self.f - self.min_d
    }
}

pub fn diagnostics(inst: &BanditInstance, p: &[f64], mu: &[f64]) -> Diagnostics {
    let evals = evaluate_scenarios(inst, p, true);
    let values: Vec<f64> = evals.iter().map(|e| e.value).collect();
    let f = dot(mu, &values);
    let min_d = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let v = crate::divergences::combine_gradients(&evals, mu, p.len())
        .ok()
        .map(|g| lyapunov_from_parts(p, mu, &g, &values));
    Diagnostics { f, min_d, v }
}

fn lyapunov_from_parts(p: &[f64], mu: &[f64], g: &[f64], values: &[f64]) -> f64 {
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let experimenter = (gmax - dot(p, g)).max(0.0);
    let skeptic = (dot(mu, values) - dmin).max(0.0);
    experimenter + skeptic
}

/// `V(p, mu) = max_q (q - p)' grad_p F - min_nu (nu - mu)' grad_mu F`.
pub fn lyapunov_v(inst: &BanditInstance, p: &[f64], mu: &[f64]) -> Result<f64> {
    check_dims(inst, p, mu)?;
    let g = grad_p_f(inst, p, mu)?;
    let values: Vec<f64> = evaluate_scenarios(inst, p, false).iter().map(|e| e.value).collect();
    Ok(lyapunov_from_parts(p, mu, &g, &values))
}

/// Complementary-slackness violations `(experimenter, skeptic)`; both vanish
/// exactly at a Nash equilibrium.
pub fn kkt_residuals(inst: &BanditInstance, p: &[f64], mu: &[f64]) -> Result<(f64, f64)> {
    check_dims(inst, p, mu)?;
    let g = grad_p_f(inst, p, mu)?;
    let values: Vec<f64> = evaluate_scenarios(inst, p, false).iter().map(|e| e.value).collect();
    let f = dot(mu, &values);
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |a, b| a.max(b.abs()));
    let max_pos = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |a, b| a.max(b));
    let experimenter = max_abs(&mut p.iter().zip(&g).map(|(pi, gi)| pi * (gi - f)))
        + max_pos(&mut g.iter().map(|gi| gi - f));
    let skeptic = max_pos(&mut values.iter().map(|d| f - d))
        + max_abs(&mut mu.iter().zip(&values).map(|(m, d)| m * (d - f)));
    Ok((experimenter, skeptic))
}

fn record(
    inst: &BanditInstance,
    step: f64,
    p: &[f64],
    mu: &[f64],
    last: Option<StepOutcome>,
) -> TrajectoryRecord {
    let diag = diagnostics(inst, p, mu);
    TrajectoryRecord {
        step,
        f: diag.f,
        v: diag.v,
        gap_lb: diag.gap_lb(),
        p: p.to_vec(),
        mu: mu.to_vec(),
        pulled_arm: last.map(|o| o.pulled_arm),
        chosen_scenario: last.map(|o| o.chosen_scenario.arm()),
        learning: None,
    }
}

/// Runs `n_iters` self-play steps from `(p0, mu0)` with the counter at zero,
/// recording the state after each scheduled step.
pub fn run_fwsp(
    inst: &BanditInstance,
    p0: Allocation,
    mu0: ScenarioMix,
    n_iters: u64,
    schedule: &RecordSchedule,
) -> Result<Vec<TrajectoryRecord>> {
    if n_iters == 0 {
        return Err(Error::Config("n_iters must be at least 1".into()));
    }
    let mut state = IterateState::new(p0, mu0);
    check_dims(inst, &state.p, &state.mu)?;
    let steps = schedule.steps(n_iters);
    let mut out = Vec::with_capacity(steps.len());
    let mut next = steps.iter().peekable();
    if next.peek() == Some(&&0) {
        out.push(record(inst, 0.0, &state.p, &state.mu, None));
        next.next();
    }
    let mut last = None;
    while state.n < n_iters {
        last = Some(state.advance(inst)?);
        if next.peek() == Some(&&state.n) {
            out.push(record(inst, state.n as f64, &state.p, &state.mu, last));
            next.next();
        }
    }
    debug_assert!(last.is_some());
    Ok(out)
}

/// Explicit Euler discretization of the self-play flow
/// `dp/dt = e_i - p`, `dmu/dt = e_x - mu` with the same vertex selections as
/// the discrete dynamics. Records at `t = 0` and every `ceil(1/h)` steps.
pub fn euler_flow(
    inst: &BanditInstance,
    p0: Allocation,
    mu0: ScenarioMix,
    h: f64,
    horizon: f64,
) -> Result<Vec<TrajectoryRecord>> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Config(format!("step size must lie in (0, 1), got {h}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be nonnegative, got {horizon}")));
    }
    check_dims(inst, &p0, &mu0)?;
    let total = (horizon / h - 1e-9).ceil().max(0.0) as u64;
    let every = (1.0 / h - 1e-9).ceil() as u64;
    let (mut p, mut mu) = (p0, mu0);
    let mut out = vec![record(inst, 0.0, &p, &mu, None)];
    for k in 1..=total {
        let evals = evaluate_scenarios(inst, &p, true);
        let (arm, pos) = select_pair(inst, &p, &mu, &evals);
        p.move_toward_vertex(arm, h);
        mu.move_toward_vertex(pos, h);
        if k % every == 0 || k == total {
            let last = StepOutcome { pulled_arm: arm, chosen_scenario: inst.scenario_set()[pos] };
            out.push(record(inst, k as f64 * h, &p, &mu, Some(last)));
        }
    }
    Ok(out)
}
