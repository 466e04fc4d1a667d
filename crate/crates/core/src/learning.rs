//! Posterior-sampling self-play for gaussian linear bandits.
//!
//! Each round samples a parameter from the gaussian posterior, treats it as
//! the truth, lets the skeptic pick a scenario by rejection sampling from
//! the same posterior, and lets the experimenter take a one-hot step against
//! the payoff gradient evaluated at the already-updated scenario mixture.
//! Diagnostics are always computed under the true parameter.
//!
//! Random draws within a round are consumed in a fixed order: the posterior
//! sample (plus redraws on a best-arm tie), the rejection draws, then the
//! simulated reward.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};

use crate::divergences::{evaluate_scenarios, grad_p_f_selection, DesignPinv};
use crate::dynamics::{argmax_first, argmin_first, diagnostics, LearningColumns, RecordSchedule, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::model::{dot, BanditInstance, Family, ScenarioIndex};
use crate::simplex::Allocation;

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;
const TIE_REDRAWS: usize = 10;
const TIE_PERTURBATION: f64 = 1e-12;
// Rank-one updates on top of a tiny ridge cancel badly; re-invert now and then.
const REFRESH_EVERY: u64 = 256;

/// Seeded generator for one replication.
pub fn replication_rng(base_seed: u64, replication: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(replication))
}

/// Sufficient statistics of the gaussian posterior over `theta`.
///
/// The precision is `ridge * I + sum_i n_i sigma_i^-2 a_i a_i'` and its
/// inverse is maintained by Sherman-Morrison rank-one updates.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    dim: usize,
    features: Vec<f64>,
    variances: Vec<f64>,
    ridge: f64,
    precision: Vec<f64>,
    covariance: Vec<f64>,
    moment: Vec<f64>,
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl PosteriorState {
    pub fn new(inst: &BanditInstance, ridge: f64) -> Result<Self> {
        Self::from_counts(inst, ridge, vec![0; inst.num_arms()], vec![0.0; inst.num_arms()])
    }

    /// Batch construction from per-arm pull counts and sample means.
    pub fn from_counts(inst: &BanditInstance, ridge: f64, counts: Vec<u64>, means: Vec<f64>) -> Result<Self> {
        if !inst.is_linear() {
            return Err(Error::DomainViolation("posterior requires a linear instance".into()));
        }
        if ridge.is_nan() || ridge < 0.0 {
            return Err(Error::DomainViolation(format!("ridge must be nonnegative, got {ridge}")));
        }
        let (k, d) = (inst.num_arms(), inst.dim());
        if counts.len() != k || means.len() != k {
            return Err(Error::DimensionMismatch("counts and means need one entry per arm".into()));
        }
        let features: Vec<f64> = (0..k).flat_map(|i| inst.feature(i).unwrap().to_vec()).collect();
        let mut precision = vec![0.0; d * d];
        let mut moment = vec![0.0; d];
        for i in 0..d {
            precision[i * d + i] = ridge;
        }
        for i in 0..k {
            let a = &features[i * d..(i + 1) * d];
            let w = counts[i] as f64 / inst.variances()[i];
            for r in 0..d {
                moment[r] += w * a[r] * means[i];
                for c in 0..d {
                    precision[r * d + c] += w * a[r] * a[c];
                }
            }
        }
        let covariance = invert_spd(d, &precision).unwrap_or_else(|| vec![f64::NAN; d * d]);
        Ok(Self {
            dim: d,
            features,
            variances: inst.variances().to_vec(),
            ridge,
            precision,
            covariance,
            moment,
            counts,
            means,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    /// Cached inverse of the precision matrix.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sample_means(&self) -> &[f64] {
        &self.means
    }

    pub fn total_pulls(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Posterior mean from the cached inverse.
    pub fn mean(&self) -> Vec<f64> {
        mat_vec(&self.covariance, self.dim, &self.moment)
    }

    /// Posterior mean from a fresh solve against the precision matrix.
    pub fn batch_mean(&self) -> Option<Vec<f64>> {
        let chol = Cholesky::new(DMatrix::from_row_slice(self.dim, self.dim, &self.precision))?;
        let b = nalgebra::DVector::from_column_slice(&self.moment);
        Some(chol.solve(&b).iter().copied().collect())
    }

    /// Incorporates one reward from `arm`.
    pub fn update(&mut self, arm: usize, reward: f64) {
        let d = self.dim;
        let s2 = self.variances[arm];
        let a = self.feature(arm).to_vec();
        for r in 0..d {
            self.moment[r] += a[r] * reward / s2;
            for c in 0..d {
                self.precision[r * d + c] += a[r] * a[c] / s2;
            }
        }
        // (P + a a'/s2)^-1 = C - (C a)(C a)' / (s2 + a' C a)
        let ca = mat_vec(&self.covariance, d, &a);
        let denom = s2 + dot(&a, &ca);
        for r in 0..d {
            for c in 0..d {
                self.covariance[r * d + c] -= ca[r] * ca[c] / denom;
            }
        }
        if (self.total_pulls() + 1).is_multiple_of(REFRESH_EVERY) {
            if let Some(c) = invert_spd(d, &self.precision) {
                self.covariance = c;
            }
        }
        let n = self.counts[arm] + 1;
        self.means[arm] += (reward - self.means[arm]) / n as f64;
        self.counts[arm] = n;
    }

    /// Rank of the data part of the precision (ridge excluded).
    pub fn data_rank(&self) -> usize {
        let d = self.dim;
        let mut m = self.precision.clone();
        for i in 0..d {
            m[i * d + i] -= self.ridge;
        }
        DesignPinv::from_matrix(d, &m).rank()
    }

    /// Mean and lower Cholesky factor of the posterior, ready for sampling.
    pub fn sampler(&self) -> Result<PosteriorSampler> {
        let d = self.dim;
        let mut cov = self.covariance.clone();
        for r in 0..d {
            for c in 0..r {
                let s = 0.5 * (cov[r * d + c] + cov[c * d + r]);
                cov[r * d + c] = s;
                cov[c * d + r] = s;
            }
        }
        let chol = Cholesky::new(DMatrix::from_row_slice(d, d, &cov)).ok_or(Error::CholeskyFailure)?;
        let l = chol.l();
        let lower = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| l[(r, c)]).collect();
        Ok(PosteriorSampler { dim: d, mean: self.mean(), lower })
    }
}

/// Functional form of [`PosteriorState::update`].
pub fn posterior_update(state: &PosteriorState, arm: usize, reward: f64) -> PosteriorState {
    let mut next = state.clone();
    next.update(arm, reward);
    next
}

fn mat_vec(m: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|r| dot(&m[r * d..(r + 1) * d], v)).collect()
}

fn invert_spd(d: usize, m: &[f64]) -> Option<Vec<f64>> {
    let inv = Cholesky::new(DMatrix::from_row_slice(d, d, m))?.inverse();
    Some((0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| inv[(r, c)]).collect())
}

/// Draws `mean + L z` with `L L' = covariance` and `z` standard normal.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    dim: usize,
    mean: Vec<f64>,
    lower: Vec<f64>,
}

impl PosteriorSampler {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let d = self.dim;
        (0..d)
            .map(|r| self.mean[r] + dot(&self.lower[r * d..r * d + r + 1], &z[..=r]))
            .collect()
    }

    /// `L' v`, the sensitivity of `v' theta` to the standard normal draw.
    fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|c| (c..d).map(|r| self.lower[r * d + c] * v[r]).sum()).collect()
    }
}

/// Draws a posterior sample.
pub fn posterior_sample<R: Rng + ?Sized>(state: &PosteriorState, rng: &mut R) -> Result<Vec<f64>> {
    Ok(state.sampler()?.draw(rng))
}

/// Reward of one pull under the true instance.
pub fn simulate_reward<R: Rng + ?Sized>(inst: &BanditInstance, arm: usize, rng: &mut R) -> f64 {
    let m = inst.mean_rewards()[arm];
    match inst.family() {
        Family::Gaussian => m + inst.variances()[arm].sqrt() * rng.sample::<f64, _>(StandardNormal),
        Family::Bernoulli => {
            if Bernoulli::new(m).expect("validated mean").sample(rng) {
                1.0
            } else {
                0.0
            }
        }
        Family::Poisson => Poisson::new(m).expect("validated mean").sample(rng),
    }
}

/// Result of the skeptic's rejection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlternativeDraw {
    pub scenario: ScenarioIndex,
    pub used_fallback: bool,
    pub attempts: usize,
}

/// Samples from the posterior until some arm beats the best arm of
/// `hat_inst` (the instance built on the posterior sample) and returns the
/// lowest such arm. After `max_attempts` failures it falls back to the
/// scenario minimizing `D(p, x)` under `hat_inst`.
pub fn sample_alternative<R: Rng + ?Sized>(
    sampler: &PosteriorSampler,
    hat_inst: &BanditInstance,
    p: &[f64],
    rng: &mut R,
    max_attempts: usize,
) -> AlternativeDraw {
    let best = hat_inst.best_arm();
    let a_best = hat_inst.feature(best).expect("linear instance");
    // x beats best under mean + L z  iff  offset_x + slope_x . z > 0
    let (offsets, slopes): (Vec<f64>, Vec<Vec<f64>>) = hat_inst
        .scenario_set()
        .iter()
        .map(|x| {
            let diff: Vec<f64> = hat_inst.feature(x.arm()).unwrap().iter().zip(a_best).map(|(a, b)| a - b).collect();
            (dot(&diff, &sampler.mean), sampler.transpose_apply(&diff))
        })
        .unzip();
    let d = sampler.dim;
    // A draw can only succeed for x if |z| >= -offset_x / |slope_x|; skipping
    // the scan below that radius changes nothing but the running time.
    let reach = offsets
        .iter()
        .zip(&slopes)
        .map(|(c, g)| if *c >= 0.0 { 0.0 } else { c * c / dot(g, g) })
        .fold(f64::INFINITY, f64::min);
    let mut z = vec![0.0; d];
    for attempt in 1..=max_attempts {
        z.iter_mut().for_each(|zi| *zi = rng.sample(StandardNormal));
        if dot(&z, &z) < reach {
            continue;
        }
        if let Some(pos) = (0..offsets.len()).find(|&j| offsets[j] + dot(&slopes[j], &z) > 0.0) {
            return AlternativeDraw { scenario: hat_inst.scenario_set()[pos], used_fallback: false, attempts: attempt };
        }
    }
    let values: Vec<f64> = evaluate_scenarios(hat_inst, p, false).iter().map(|e| e.value).collect();
    AlternativeDraw {
        scenario: hat_inst.scenario_set()[argmin_first(&values)],
        used_fallback: true,
        attempts: max_attempts,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub ridge: f64,
    pub max_attempts: usize,
    pub schedule: RecordSchedule,
    /// Pull every arm once before the first round.
    pub warm_up: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self { ridge: DEFAULT_RIDGE, max_attempts: DEFAULT_MAX_ATTEMPTS, schedule: RecordSchedule::Geometric, warm_up: true }
    }
}

/// What happened in one learning round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub theta_hat: Vec<f64>,
    pub scenario: ScenarioIndex,
    pub used_fallback: bool,
    pub pulled_arm: usize,
    pub reward: f64,
}

/// Restricts a mixture over arms to the scenarios of `inst` (dropping the
/// best arm) and renormalizes; all-zero mass maps to the uniform mixture.
pub fn restrict_to_scenarios(inst: &BanditInstance, mu_arms: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = inst.scenario_set().iter().map(|x| mu_arms[x.arm()]).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|m| m / s).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

/// Online state of the learning algorithm.
///
/// The skeptic's mixture is kept over arm indices because the scenario set
/// depends on the sampled parameter: the same arm can be a scenario in one
/// round and the sampled best arm in the next.
#[derive(Debug, Clone)]
pub struct Learner {
    truth: BanditInstance,
    config: LearningConfig,
    posterior: PosteriorState,
    p: Allocation,
    mu_arms: Vec<f64>,
    t: u64,
}

impl Learner {
    pub fn new(truth: &BanditInstance, config: LearningConfig) -> Result<Self> {
        let truth = if truth.is_linear() {
            truth.clone()
        } else {
            truth.as_linear()?
        };
        let k = truth.num_arms();
        Ok(Self {
            posterior: PosteriorState::new(&truth, config.ridge)?,
            p: Allocation::uniform(k),
            mu_arms: vec![1.0 / k as f64; k],
            t: 0,
            truth,
            config,
        })
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn set_posterior(&mut self, posterior: PosteriorState) {
        self.posterior = posterior;
    }

    pub fn allocation(&self) -> &Allocation {
        &self.p
    }

    /// Mixture over arm indices.
    pub fn mixture(&self) -> &[f64] {
        &self.mu_arms
    }

    pub fn round_index(&self) -> u64 {
        self.t
    }

    /// Overrides the strategies and the round counter.
    pub fn set_state(&mut self, t: u64, p: Allocation, mu_arms: Vec<f64>) -> Result<()> {
        if p.len() != self.truth.num_arms() || mu_arms.len() != self.truth.num_arms() {
            return Err(Error::DimensionMismatch("state must have one entry per arm".into()));
        }
        self.t = t;
        self.p = p;
        self.mu_arms = mu_arms;
        Ok(())
    }

    /// Pulls `arm` without touching the strategies.
    pub fn observe<R: Rng + ?Sized>(&mut self, arm: usize, rng: &mut R) -> f64 {
        let y = simulate_reward(&self.truth, arm, rng);
        self.posterior.update(arm, y);
        y
    }

    fn sample_hat<R: Rng + ?Sized>(&self, sampler: &PosteriorSampler, rng: &mut R) -> Result<BanditInstance> {
        let mut last_err = None;
        for _ in 0..TIE_REDRAWS {
            match self.truth.with_theta(sampler.draw(rng)) {
                Ok(inst) => return Ok(inst),
                Err(e @ Error::NonUniqueBestArm { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        let mut theta = sampler.draw(rng);
        theta[0] += TIE_PERTURBATION;
        self.truth.with_theta(theta).map_err(|e| last_err.unwrap_or(e))
    }

    /// One round of the algorithm.
    pub fn round<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<RoundOutcome> {
        let sampler = self.posterior.sampler()?;
        let hat = self.sample_hat(&sampler, rng)?;
        let alt = sample_alternative(&sampler, &hat, &self.p, rng, self.config.max_attempts);

        let step = 1.0 / (self.t as f64 + 1.0);
        self.mu_arms.iter_mut().for_each(|m| *m *= 1.0 - step);
        self.mu_arms[alt.scenario.arm()] += step;

        // The experimenter responds to the already-updated mixture.
        let mu_hat = restrict_to_scenarios(&hat, &self.mu_arms);
        let evals = evaluate_scenarios(&hat, &self.p, true);
        let arm = argmax_first(&grad_p_f_selection(&hat, &self.p, &mu_hat, &evals));
        self.p.move_toward_vertex(arm, step);
        self.t += 1;

        let reward = self.observe(arm, rng);
        Ok(RoundOutcome {
            theta_hat: hat.theta().to_vec(),
            scenario: alt.scenario,
            used_fallback: alt.used_fallback,
            pulled_arm: arm,
            reward,
        })
    }

    /// Diagnostics of the current strategies under the true parameter.
    pub fn record(&self, step: f64, pulled: Option<usize>, scenario: Option<usize>, used_fallback: bool) -> TrajectoryRecord {
        let mu = restrict_to_scenarios(&self.truth, &self.mu_arms);
        let diag = diagnostics(&self.truth, &self.p, &mu);
        TrajectoryRecord {
            step,
            f: diag.f,
            v: diag.v,
            gap_lb: diag.gap_lb(),
            p: self.p.to_vec(),
            mu,
            pulled_arm: pulled,
            chosen_scenario: scenario,
            learning: Some(LearningColumns { used_fallback, posterior_rank: self.posterior.data_rank() }),
        }
    }
}

/// Output of [`run_learning`].
#[derive(Debug, Clone)]
pub struct LearningRun {
    pub records: Vec<TrajectoryRecord>,
    pub pulls: Vec<usize>,
    pub scenarios: Vec<ScenarioIndex>,
    pub fallbacks: u64,
}

/// Runs `rounds` learning rounds on `truth` with a generator seeded by `seed`.
pub fn run_learning(truth: &BanditInstance, rounds: u64, seed: u64, config: &LearningConfig) -> Result<LearningRun> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    if truth.family() != Family::Gaussian {
        return Err(Error::DomainViolation("learning requires gaussian rewards".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = Learner::new(truth, config.clone())?;
    let k = learner.truth.num_arms();
    let mut records = Vec::new();
    if config.warm_up {
        for arm in 0..k {
            learner.observe(arm, &mut rng);
            let step = arm as f64 - k as f64;
            records.push(learner.record(step, Some(arm), None, false));
        }
    }
    let steps = config.schedule.steps(rounds);
    let mut next = steps.iter().peekable();
    if next.peek() == Some(&&0) {
        records.push(learner.record(0.0, None, None, false));
        next.next();
    }
    let mut pulls = Vec::with_capacity(rounds as usize);
    let mut scenarios = Vec::with_capacity(rounds as usize);
    let mut fallbacks = 0;
    while learner.t < rounds {
        let out = learner.round(&mut rng)?;
        pulls.push(out.pulled_arm);
        scenarios.push(out.scenario);
        fallbacks += out.used_fallback as u64;
        if next.peek() == Some(&&learner.t) {
            records.push(learner.record(
                learner.t as f64,
                Some(out.pulled_arm),
                Some(out.scenario.arm()),
                out.used_fallback,
            ));
            next.next();
        }
    }
    Ok(LearningRun { records, pulls, scenarios, fallbacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use crate::dynamics::{select_arm, select_scenario};

    fn frob_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn single_update_is_ridge_regression() {
        let inst = builtins::case1();
        let mut post = PosteriorState::new(&inst, 1e-6).unwrap();
        post.update(0, 0.7);
        let m = post.mean();
        assert!((m[0] - 0.7 / (1.0 + 1e-6)).abs() < 1e-9);
        assert!((m[0] - 0.6999993).abs() < 1e-7);
        assert!(m[1].abs() < 1e-15);
    }

    #[test]
    fn incremental_equals_batch() {
        let inst = builtins::case2();
        let mut post = PosteriorState::new(&inst, 1e-6).unwrap();
        post.update(3, 0.4);
        post.update(3, 1.1);
        let batch = PosteriorState::from_counts(&inst, 1e-6, vec![0, 0, 0, 2, 0, 0], vec![0.0, 0.0, 0.0, 0.75, 0.0, 0.0]).unwrap();
        assert!(frob_diff(post.precision(), batch.precision()) < 1e-12);
        assert!(frob_diff(post.moment(), batch.moment()) < 1e-12);
        assert_eq!(post.counts(), batch.counts());
        assert!((post.sample_means()[3] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sherman_morrison_tracks_inverse() {
        let inst = builtins::case2();
        let mut rng = replication_rng(7, 0);
        let mut post = PosteriorState::new(&inst, 1e-6).unwrap();
        for _ in 0..100 {
            let arm = rng.random_range(0..inst.num_arms());
            let y = simulate_reward(&inst, arm, &mut rng);
            post.update(arm, y);
        }
        let direct = invert_spd(post.dim(), post.precision()).unwrap();
        assert!(frob_diff(post.covariance(), &direct) < 1e-8);
        let bm = post.batch_mean().unwrap();
        assert!(frob_diff(&post.mean(), &bm) < 1e-8);
    }

    #[test]
    fn fixed_seed_draws_repeat() {
        let inst = builtins::case1();
        let mut post = PosteriorState::new(&inst, 1e-6).unwrap();
        post.update(0, 1.0);
        post.update(1, 0.0);
        let a: Vec<Vec<f64>> = {
            let mut rng = replication_rng(3, 1);
            (0..5).map(|_| posterior_sample(&post, &mut rng).unwrap()).collect()
        };
        let b: Vec<Vec<f64>> = {
            let mut rng = replication_rng(3, 1);
            (0..5).map(|_| posterior_sample(&post, &mut rng).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn zero_ridge_without_data_fails_to_factor() {
        let inst = builtins::case1();
        let post = PosteriorState::new(&inst, 0.0).unwrap();
        assert!(matches!(post.sampler(), Err(Error::CholeskyFailure)));
    }

    #[test]
    fn alternative_selection_rules() {
        // Degenerate posterior concentrated at a point where only arm 3 beats arm 1.
        let inst = builtins::case1();
        let hat = inst.clone();
        let sampler = PosteriorSampler { dim: 2, mean: vec![-1.0, -1.0], lower: vec![0.0; 4] };
        let mut rng = replication_rng(0, 0);
        let draw = sample_alternative(&sampler, &hat, &[1.0 / 3.0; 3], &mut rng, 10);
        assert_eq!(draw.scenario, ScenarioIndex(2));
        assert!(!draw.used_fallback);
        // Both arms 2 and 3 beat arm 1: lowest index wins.
        let sampler = PosteriorSampler { dim: 2, mean: vec![-1.0, 1.0], lower: vec![0.0; 4] };
        let draw = sample_alternative(&sampler, &hat, &[1.0 / 3.0; 3], &mut rng, 10);
        assert_eq!(draw.scenario, ScenarioIndex(1));
    }

    #[test]
    fn concentrated_posterior_falls_back_to_argmin() {
        let inst = builtins::case2();
        let counts = vec![10_000; 6];
        let post = PosteriorState::from_counts(&inst, 1e-6, counts, inst.mean_rewards().to_vec()).unwrap();
        let sampler = post.sampler().unwrap();
        let mut rng = replication_rng(11, 0);
        let p = [0.3, 0.3, 0.05, 0.25, 0.05, 0.05];
        let mut fallbacks = 0;
        for _ in 0..1000 {
            let hat = inst.with_theta(sampler.draw(&mut rng)).unwrap();
            let draw = sample_alternative(&sampler, &hat, &p, &mut rng, 20);
            if draw.used_fallback {
                fallbacks += 1;
                assert_eq!(draw.scenario, select_scenario(&hat, &p).unwrap());
            }
        }
        assert!(fallbacks >= 0);
    }

    #[test]
    fn point_mass_round_matches_nonlearning_selection() {
        let inst = builtins::case1();
        let big = 1_000_000_000_000u64;
        let post = PosteriorState::from_counts(&inst, 1e-6, vec![big; 3], inst.mean_rewards().to_vec()).unwrap();
        let config = LearningConfig { max_attempts: 5, ..Default::default() };
        let mut learner = Learner::new(&inst, config).unwrap();
        learner.set_posterior(post);
        let p = Allocation::new(vec![0.1, 0.5, 0.4]).unwrap();
        learner.set_state(9, p.clone(), vec![0.0, 0.3, 0.7]).unwrap();
        let mut rng = replication_rng(1, 0);
        let out = learner.round(&mut rng).unwrap();
        assert!(out.used_fallback);
        assert_eq!(out.scenario, select_scenario(&inst, &p).unwrap());
        // mu_{t+1} over scenarios after the skeptic's step of size 1/10.
        let mut mu = vec![0.0, 0.3, 0.7];
        mu.iter_mut().for_each(|m| *m *= 0.9);
        mu[out.scenario.arm()] += 0.1;
        let mu_s = restrict_to_scenarios(&inst, &mu);
        assert_eq!(out.pulled_arm, select_arm(&inst, &p, &mu_s).unwrap());
    }

    #[test]
    fn one_round_run() {
        let inst = builtins::case1();
        let cfg = LearningConfig { warm_up: false, ..Default::default() };
        let run = run_learning(&inst, 1, 5, &cfg).unwrap();
        assert_eq!(run.pulls.len(), 1);
        assert_eq!(run.records.len(), 1);
        let cfg = LearningConfig::default();
        let run = run_learning(&inst, 1, 5, &cfg).unwrap();
        // Three warm-up rows then the first round.
        assert_eq!(run.records.len(), 4);
        assert_eq!(run.records[0].step, -3.0);
    }

    #[test]
    fn reward_sample_mean() {
        let inst = builtins::case2();
        let mut rng = replication_rng(99, 0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| simulate_reward(&inst, 4, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.4549).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn restriction_renormalizes() {
        let inst = builtins::case1();
        assert_eq!(restrict_to_scenarios(&inst, &[0.5, 0.25, 0.25]), vec![0.5, 0.5]);
        assert_eq!(restrict_to_scenarios(&inst, &[1.0, 0.0, 0.0]), vec![0.5, 0.5]);
    }
}
