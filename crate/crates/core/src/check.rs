//! Invariant suite behind `fwsp check`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::builtins;
use crate::divergences::{d_grad, d_value, d_value_linear, d_value_unstructured};
use crate::dynamics::{kkt_residuals, lyapunov_v, IterateState};
use crate::learning::{simulate_reward, PosteriorState};
use crate::model::{dot, BanditInstance, Family, InstanceKind};
use crate::oracles::{fd_gradient, halfspace_projection_oracle, inner_max_f, PROJECTION_ITERS};
use crate::simplex::{Allocation, ScenarioMix};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, tol: f64) -> Self {
        Self { name, passed: worst <= tol, detail: format!("worst {worst:.3e}, tolerance {tol:.0e}") }
    }
}

/// Random point of the simplex with every coordinate at least `floor / k`.
pub fn random_interior<R: Rng + ?Sized>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| (1.0 - floor) * x / s + floor / k as f64).collect()
}

/// KKT residuals of every stored optimum.
pub fn stored_optima() -> CheckResult {
    let mut worst_ratio = 0.0f64;
    let mut detail = Vec::new();
    for name in builtins::BUILTIN_NAMES {
        let (inst, opt) = builtins::by_name(name).expect("builtin");
        let tol = if name == "case2" { 1e-3 } else { 1e-6 };
        let r = kkt_residuals(&inst, &opt.p_star, &opt.mu_star).map_or(f64::INFINITY, |(a, b)| a.max(b));
        worst_ratio = worst_ratio.max(r / tol);
        detail.push(format!("{name} {r:.2e}"));
    }
    CheckResult { name: "stored optima satisfy KKT", passed: worst_ratio <= 1.0, detail: detail.join(", ") }
}

/// Analytic gradients against central differences, and `p . grad D = D`.
pub fn gradients(inst: &BanditInstance, rng: &mut ChaCha8Rng, points: usize) -> [CheckResult; 2] {
    let mut worst_rel = 0.0f64;
    let mut worst_euler = 0.0f64;
    for _ in 0..points {
        let p = random_interior(rng, inst.num_arms(), 0.1);
        for &x in inst.scenario_set() {
            let g = d_grad(inst, &p, x).expect("interior point");
            let fd = fd_gradient(|q| d_value(inst, q, x).expect("cone point"), &p, 1e-6).expect("valid step");
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = fd.gradient.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst_rel = worst_rel.max(err / scale);
            let d = d_value(inst, &p, x).unwrap();
            worst_euler = worst_euler.max((dot(&p, &g) - d).abs());
        }
    }
    [CheckResult::new("gradients match finite differences", worst_rel, 1e-5), CheckResult::new("Euler identity", worst_euler, 1e-9)]
}

/// Simplex preservation, strict positivity and the empirical-frequency
/// identity over a short self-play run.
pub fn dynamics_run(inst: &BanditInstance, steps: u64) -> [CheckResult; 3] {
    let k = inst.num_arms();
    let mut state = IterateState::uniform(inst);
    let mut counts = vec![0u64; k];
    let mut worst_sum = 0.0f64;
    let mut nonneg = true;
    for _ in 0..steps {
        let out = state.advance(inst).expect("valid state");
        counts[out.pulled_arm] += 1;
        let sp: f64 = state.p.iter().sum();
        let sm: f64 = state.mu.iter().sum();
        worst_sum = worst_sum.max((sp - 1.0).abs()).max((sm - 1.0).abs());
        nonneg &= state.p.iter().chain(state.mu.iter()).all(|v| *v >= 0.0);
    }
    let freq_err = state
        .p
        .iter()
        .zip(&counts)
        .map(|(p, c)| (p - *c as f64 / steps as f64).abs())
        .fold(0.0, f64::max);

    // With the counter started at one, the start acts as a pseudo-observation
    // and every coordinate stays at least p0_i / (n + 1).
    let p0 = Allocation::uniform(k);
    let mut pos = IterateState { n: 1, p: p0.clone(), mu: ScenarioMix::uniform(inst.num_scenarios()) };
    let mut worst_pos = 0.0f64;
    for _ in 0..steps {
        pos.advance(inst).expect("interior state");
        let bound = p0[0] / (pos.n as f64);
        worst_pos = worst_pos.max(pos.p.iter().map(|v| bound - v).fold(f64::NEG_INFINITY, f64::max));
    }
    let mut simplex = CheckResult::new("simplex preservation", worst_sum, 1e-12);
    simplex.passed &= nonneg;
    [simplex, CheckResult::new("empirical frequency identity", freq_err, 1e-12), CheckResult::new("strict positivity bound", worst_pos, 0.0)]
}

/// `inner_max_F(mu) - min_x D(p, x)` lies in `[0, V(p, mu) + 1e-6]`.
pub fn gap_sandwich(inst: &BanditInstance, rng: &mut ChaCha8Rng, points: usize) -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..points {
        let p = random_interior(rng, inst.num_arms(), 0.1);
        let mu = random_interior(rng, inst.num_scenarios(), 0.0);
        let upper = inner_max_f(inst, &mu, 1000).expect("interior").value;
        let lower = inst
            .scenario_set()
            .iter()
            .map(|&x| d_value(inst, &p, x).unwrap())
            .fold(f64::INFINITY, f64::min);
        let v = lyapunov_v(inst, &p, &mu).expect("interior");
        let gap = upper - lower;
        worst = worst.max(-gap).max(gap - v - 1e-6);
    }
    CheckResult::new("duality gap sandwiched by V", worst.max(0.0), 0.0)
}

/// Projection oracle against the closed form.
pub fn projection(inst: &BanditInstance, rng: &mut ChaCha8Rng, points: usize) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..points {
        let p = random_interior(rng, inst.num_arms(), 0.1);
        for &x in inst.scenario_set() {
            let oracle = halfspace_projection_oracle(inst, &p, x, PROJECTION_ITERS).unwrap().value;
            worst = worst.max((oracle - d_value_linear(inst, &p, x).unwrap()).abs());
        }
    }
    CheckResult::new("projection oracle matches closed form", worst, 1e-7)
}

/// Identity features reproduce the unstructured gaussian divergence.
pub fn identity_features(inst: &BanditInstance, rng: &mut ChaCha8Rng, points: usize) -> CheckResult {
    let lin = inst.as_linear().expect("gaussian instance");
    let mut worst = 0.0f64;
    for _ in 0..points {
        let p = random_interior(rng, inst.num_arms(), 0.05);
        for &x in inst.scenario_set() {
            let a = d_value_unstructured(inst, &p, x).unwrap();
            let b = d_value_linear(&lin, &p, x).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    CheckResult::new("identity features match unstructured", worst, 1e-10)
}

/// Sherman-Morrison cache against a direct inverse after random pulls.
pub fn posterior(inst: &BanditInstance, rng: &mut ChaCha8Rng, pulls: usize) -> CheckResult {
    let mut post = PosteriorState::new(inst, crate::learning::DEFAULT_RIDGE).unwrap();
    for _ in 0..pulls {
        let arm = rng.random_range(0..inst.num_arms());
        let y = simulate_reward(inst, arm, rng);
        post.update(arm, y);
    }
    let d = post.dim();
    let (c, v) = (post.covariance(), post.precision());
    let mut worst = 0.0f64;
    for r in 0..d {
        for col in 0..d {
            let prod: f64 = (0..d).map(|m| c[r * d + m] * v[m * d + col]).sum();
            let want = if r == col { 1.0 } else { 0.0 };
            worst = worst.max((prod - want).abs());
        }
    }
    CheckResult::new("posterior inverse cache", worst, 1e-7)
}

/// Full suite on `inst`, plus the instance-independent checks.
pub fn run_checks(inst: &BanditInstance, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![stored_optima()];
    out.extend(gradients(inst, &mut rng, 20));
    out.extend(dynamics_run(inst, 2000));
    out.push(gap_sandwich(inst, &mut rng, 20));
    match inst.kind() {
        InstanceKind::Linear => {
            out.push(projection(inst, &mut rng, 10));
            out.push(posterior(inst, &mut rng, 100));
        }
        InstanceKind::Unstructured if inst.family() == Family::Gaussian => {
            out.push(identity_features(inst, &mut rng, 20));
        }
        InstanceKind::Unstructured => {}
    }
    out
}
