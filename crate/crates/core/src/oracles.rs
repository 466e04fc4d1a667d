//! Brute-force and iterative references for checking the closed forms and
//! the self-play solver. None of these are used by the dynamics themselves.

use crate::divergences::{gradient_bound, grad_p_f, payoff_f, scenario_values, DesignPinv};
use crate::dynamics::argmax_first;
use crate::error::{Error, Result};
use crate::exec::{map_indices, ExecMode};
use crate::model::{dot, BanditInstance, ScenarioIndex};
use crate::simplex::Allocation;

/// Largest lattice the grid search will enumerate.
pub const GRID_POINT_LIMIT: u128 = 20_000_000;

/// Best lattice point of `g(p) = min_x D(p, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub value: f64,
    pub p_star: Allocation,
    /// Lattice coordinates of `p_star`, in units of `1/N`.
    pub lattice: Vec<u64>,
    /// `D(p_star, x)` for every scenario, in canonical order.
    pub scenario_values: Vec<f64>,
    pub minimizing_scenario: ScenarioIndex,
    /// `M * resolution` for unstructured instances, where `M` bounds the
    /// gradient entries; no bound is available for linear ones.
    pub error_bound: Option<f64>,
}

/// Number of points `C(N + K - 1, K - 1)` of the lattice with spacing `1/N`.
pub fn lattice_size(n: u64, k: usize) -> u128 {
    let mut c: u128 = 1;
    for j in 1..k as u128 {
        c = c * (n as u128 + j) / j;
    }
    c
}

fn for_each_composition(parts: &mut [u64], idx: usize, remaining: u64, f: &mut impl FnMut(&[u64])) {
    if idx + 1 == parts.len() {
        parts[idx] = remaining;
        f(parts);
        return;
    }
    for c in 0..=remaining {
        parts[idx] = c;
        for_each_composition(parts, idx + 1, remaining - c, f);
    }
}

fn min_value(inst: &BanditInstance, p: &[f64]) -> f64 {
    scenario_values(inst, p).into_iter().fold(f64::INFINITY, f64::min)
}

/// Exhaustive maximin search over the simplex lattice with spacing
/// `resolution`. Ties go to the lexicographically smallest lattice point.
pub fn grid_saddle_solve(inst: &BanditInstance, resolution: f64, mode: ExecMode) -> Result<GridSolution> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Config(format!("resolution must lie in (0, 1], got {resolution}")));
    }
    let n = (1.0 / resolution).round() as u64;
    let k = inst.num_arms();
    let points = lattice_size(n, k);
    if points > GRID_POINT_LIMIT {
        return Err(Error::TooManyGridPoints { points, limit: GRID_POINT_LIMIT });
    }
    let nf = n as f64;
    // One shard per value of the first coordinate; shards are visited in
    // lexicographic order, so keeping the first strict maximum is enough.
    let shards = map_indices(n as usize + 1, mode, |c0| {
        let mut best: Option<(f64, Vec<u64>)> = None;
        let mut parts = vec![0u64; k];
        parts[0] = c0 as u64;
        let mut p = vec![0.0; k];
        let mut visit = |parts: &[u64]| {
            p.iter_mut().zip(parts).for_each(|(pi, &c)| *pi = c as f64 / nf);
            let g = min_value(inst, &p);
            if best.as_ref().is_none_or(|(b, _)| g > *b) {
                best = Some((g, parts.to_vec()));
            }
        };
        if k == 1 {
            visit(&parts);
        } else {
            for_each_composition(&mut parts, 1, n - c0 as u64, &mut visit);
        }
        best
    })?;
    let (value, lattice) = shards
        .into_iter()
        .flatten()
        .fold(None::<(f64, Vec<u64>)>, |acc, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .expect("lattice is nonempty");
    let p_star = Allocation::from_external(lattice.iter().map(|&c| c as f64).collect())?;
    let values = scenario_values(inst, &p_star);
    let pos = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < values[b] { i } else { b });
    Ok(GridSolution {
        value,
        minimizing_scenario: inst.scenario_set()[pos],
        scenario_values: values,
        p_star,
        lattice,
        error_bound: gradient_bound(inst).ok().map(|m| m * resolution),
    })
}

/// Frank-Wolfe lower bound on `max_q F(q, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMax {
    pub value: f64,
    pub p_arg: Allocation,
}

/// Classical Frank-Wolfe on the concave `F(., mu)` from the uniform
/// allocation with steps `2/(k+2)`, `k = 1, 2, ...`. Every iterate and every
/// vertex proposed by the linear oracle is feasible, so the best value seen
/// is a valid lower bound on the maximum.
pub fn inner_max_f(inst: &BanditInstance, mu: &[f64], iters: usize) -> Result<InnerMax> {
    if iters < 100 {
        return Err(Error::Config(format!("inner maximization needs at least 100 iterations, got {iters}")));
    }
    if mu.len() != inst.num_scenarios() {
        return Err(Error::DimensionMismatch("mixture length".into()));
    }
    let k = inst.num_arms();
    match frank_wolfe(inst, mu, iters, Allocation::uniform(k)) {
        Err(Error::NonsmoothPoint { .. }) => {
            let start: Vec<f64> = (0..k).map(|i| 1.0 + 1e-3 * (i + 1) as f64).collect();
            frank_wolfe(inst, mu, iters, Allocation::from_external(start)?)
        }
        r => r,
    }
}

fn frank_wolfe(inst: &BanditInstance, mu: &[f64], iters: usize, start: Allocation) -> Result<InnerMax> {
    let k = inst.num_arms();
    let mut p = start;
    let mut best = InnerMax { value: payoff_f(inst, &p, mu)?, p_arg: p.clone() };
    let mut seen_vertex = vec![false; k];
    for it in 1..=iters {
        let g = grad_p_f(inst, &p, mu)?;
        let i = argmax_first(&g);
        if !seen_vertex[i] {
            seen_vertex[i] = true;
            let v = Allocation::vertex(k, i);
            let fv = payoff_f(inst, &v, mu)?;
            if fv > best.value {
                best = InnerMax { value: fv, p_arg: v };
            }
        }
        p.move_toward_vertex(i, 2.0 / (it as f64 + 2.0));
        let f = payoff_f(inst, &p, mu)?;
        if f > best.value {
            best = InnerMax { value: f, p_arg: p.clone() };
        }
    }
    Ok(best)
}

/// Central-difference gradient on the nonnegative cone.
#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub gradient: Vec<f64>,
    /// Coordinates where `p_i < h` forced a forward difference.
    pub one_sided: Vec<bool>,
}

/// Finite-difference gradient of `f` at `p`, perturbing one coordinate at a
/// time without renormalizing.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, p: &[f64], h: f64) -> Result<FdGradient> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::Config(format!("finite-difference step must lie in [1e-8, 1e-4], got {h}")));
    }
    let mut q = p.to_vec();
    let mut gradient = Vec::with_capacity(p.len());
    let mut one_sided = Vec::with_capacity(p.len());
    let f0 = f(p);
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let up = f(&q);
        if p[i] < h {
            gradient.push((up - f0) / h);
            one_sided.push(true);
        } else {
            q[i] = p[i] - h;
            gradient.push((up - f(&q)) / (2.0 * h));
            one_sided.push(false);
        }
        q[i] = p[i];
    }
    Ok(FdGradient { gradient, one_sided })
}

/// Minimizer of `1/2 |v - theta|^2_{V_p}` over the halfspace `delta' v <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub value: f64,
    pub minimizer: Vec<f64>,
}

pub const PROJECTION_ITERS: usize = 10_000;

/// Projected-gradient solution of the linear scenario divergence as a
/// constrained quadratic, with step `1/lambda_max(V_p)` and Nesterov momentum.
pub fn halfspace_projection_oracle(
    inst: &BanditInstance,
    p: &[f64],
    x: ScenarioIndex,
    iters: usize,
) -> Result<ProjectionResult> {
    if !inst.is_linear() {
        return Err(Error::DomainViolation("projection oracle requires a linear instance".into()));
    }
    if p.len() != inst.num_arms() {
        return Err(Error::DimensionMismatch("allocation length".into()));
    }
    if inst.scenario_position(x).is_none() {
        return Err(Error::DomainViolation(format!("arm {} is not a scenario", x.arm() + 1)));
    }
    let d = inst.dim();
    let a_best = inst.feature(inst.best_arm()).unwrap();
    let delta: Vec<f64> = a_best.iter().zip(inst.feature(x.arm()).unwrap()).map(|(b, a)| b - a).collect();
    let mut v = vec![0.0; d * d];
    for (i, &pi) in p.iter().enumerate() {
        let a = inst.feature(i).unwrap();
        let w = pi / inst.variances()[i];
        for r in 0..d {
            for c in 0..d {
                v[r * d + c] += w * a[r] * a[c];
            }
        }
    }
    Ok(halfspace_qp(d, &v, inst.theta(), &delta, iters))
}

/// Minimizes `1/2 (u - theta)' V (u - theta)` over `delta' u <= 0` for a
/// positive semidefinite row-major `V`.
pub fn halfspace_qp(d: usize, v: &[f64], theta: &[f64], delta: &[f64], iters: usize) -> ProjectionResult {
    let dd = dot(delta, delta);
    let objective = |u: &[f64]| {
        let e: Vec<f64> = u.iter().zip(theta).map(|(a, b)| a - b).collect();
        let ve: Vec<f64> = (0..d).map(|r| dot(&v[r * d..(r + 1) * d], &e)).collect();
        0.5 * dot(&e, &ve)
    };
    let lmax = DesignPinv::from_matrix(d, v).max_eigenvalue();
    if dot(delta, theta) <= 0.0 || lmax.is_nan() || lmax <= 0.0 {
        return ProjectionResult { value: 0.0, minimizer: theta.to_vec() };
    }
    let project = |u: &mut [f64]| {
        let s = dot(delta, u);
        if s > 0.0 {
            u.iter_mut().zip(delta).for_each(|(ui, di)| *ui -= s / dd * di);
        }
    };
    let step = 1.0 / lmax;

    let mut cur = theta.to_vec();
    project(&mut cur);
    let mut f_cur = objective(&cur);
    let mut look = cur.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let e: Vec<f64> = look.iter().zip(theta).map(|(a, b)| a - b).collect();
        let mut next: Vec<f64> = (0..d).map(|r| look[r] - step * dot(&v[r * d..(r + 1) * d], &e)).collect();
        project(&mut next);
        let f_next = objective(&next);
        // Restart the momentum whenever it stops decreasing the objective.
        if f_next > f_cur {
            t = 1.0;
            look = cur.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        look = next.iter().zip(&cur).map(|(n, c)| n + beta * (n - c)).collect();
        cur = next;
        f_cur = f_next;
        t = t_next;
    }
    ProjectionResult { value: f_cur, minimizer: cur }
}
