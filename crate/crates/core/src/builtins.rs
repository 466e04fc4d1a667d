//! Named reference instances together with their known saddle points.

use crate::model::{BanditInstance, Family};

/// A known equilibrium `(p*, mu*)` and its game value.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredOptimum {
    pub p_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub value: f64,
}

pub const BUILTIN_NAMES: [&str; 5] = ["case1", "case2", "example2", "example3", "bai-fwfail"];

pub fn by_name(name: &str) -> Option<(BanditInstance, StoredOptimum)> {
    let inst = match name {
        "case1" => case1(),
        "case2" => case2(),
        "example2" => example2(),
        "example3" => example3(),
        "bai-fwfail" => bai_fwfail(),
        _ => return None,
    };
    Some((inst, optimum(name)?))
}

/// theta = e1, arms e1, e2, -2 e1, unit variances.
pub fn case1() -> BanditInstance {
    BanditInstance::linear(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-2.0, 0.0]],
        vec![1.0, 0.0],
        None,
    )
    .expect("case1 is well posed")
}

/// Six arms in three dimensions; constants stored at four decimals.
pub fn case2() -> BanditInstance {
    BanditInstance::linear(
        vec![
            vec![-0.7322, -0.7272, -0.0976],
            vec![-0.9580, -0.2982, 0.8227],
            vec![-0.0585, -0.8511, 0.1397],
            vec![0.2705, -0.8211, 0.1124],
            vec![0.5793, -0.5567, -0.1627],
            vec![-0.5004, -0.4163, 0.6065],
        ],
        vec![1.9492, -0.4601, -0.4279],
        None,
    )
    .expect("case2 is well posed")
}

/// Like case1 but with a3 = -e1; the optimal allocations form a segment.
pub fn example2() -> BanditInstance {
    BanditInstance::linear(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
        vec![1.0, 0.0],
        None,
    )
    .expect("example2 is well posed")
}

/// theta = (1, 1), arms -e1, -e2, 0: the payoff is bilinear.
pub fn example3() -> BanditInstance {
    BanditInstance::linear(
        vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 0.0]],
        vec![1.0, 1.0],
        None,
    )
    .expect("example3 is well posed")
}

/// Gaussian best-arm identification with theta = (1, 0, 0).
pub fn bai_fwfail() -> BanditInstance {
    BanditInstance::unstructured(Family::Gaussian, vec![1.0, 0.0, 0.0], None)
        .expect("bai-fwfail is well posed")
}

pub fn optimum(name: &str) -> Option<StoredOptimum> {
    let sqrt2 = std::f64::consts::SQRT_2;
    Some(match name {
        "case1" => StoredOptimum {
            p_star: vec![0.0, 2.0 / 3.0, 1.0 / 3.0],
            mu_star: vec![1.0, 0.0],
            value: 2.0 / 9.0,
        },
        "case2" => StoredOptimum {
            p_star: vec![0.3122, 0.3856, 0.0, 0.3022, 0.0, 0.0],
            mu_star: vec![0.5149, 0.0, 0.0, 0.4851, 0.0],
            value: 0.5037,
        },
        // Any p = (z, 1/2, 1/2 - z) is optimal; z = 1/4 is stored.
        "example2" => StoredOptimum {
            p_star: vec![0.25, 0.5, 0.25],
            mu_star: vec![1.0, 0.0],
            value: 0.125,
        },
        "example3" => StoredOptimum {
            p_star: vec![0.5, 0.5, 0.0],
            mu_star: vec![0.5, 0.5],
            value: 0.25,
        },
        "bai-fwfail" => {
            let p1 = sqrt2 - 1.0;
            let p2 = 1.0 - sqrt2 / 2.0;
            StoredOptimum {
                p_star: vec![p1, p2, p2],
                mu_star: vec![0.5, 0.5],
                value: 0.5 * p1 * p2 / (p1 + p2),
            }
        }
        _ => return None,
    })
}
