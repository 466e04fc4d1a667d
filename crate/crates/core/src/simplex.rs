//! Points of the probability simplex: the experimenter's allocation over arms
//! and the skeptic's mixture over scenarios.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Absolute tolerance on the coordinate sum of a simplex point.
pub const SIMPLEX_TOL: f64 = 1e-12;

fn check(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidSimplex(format!("{what} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidSimplex(format!("{what} has a negative or non-finite entry {x}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidSimplex(format!("{what} sums to {s}")));
    }
    Ok(())
}

fn renormalized(mut v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidSimplex(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return Err(Error::InvalidSimplex(format!("{what} has zero mass")));
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(v)
}

macro_rules! simplex_point {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Checked constructor; entries must already sum to one.
            pub fn new(v: Vec<f64>) -> Result<Self> {
                check(&v, $what)?;
                Ok(Self(v))
            }

            /// Constructor for values read from outside the solver: divides by the sum.
            pub fn from_external(v: Vec<f64>) -> Result<Self> {
                renormalized(v, $what).map(Self)
            }

            pub fn uniform(n: usize) -> Self {
                Self(vec![1.0 / n as f64; n])
            }

            pub fn vertex(n: usize, i: usize) -> Self {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                Self(v)
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            /// `self <- self + step * (e_i - self)`.
            pub(crate) fn move_toward_vertex(&mut self, i: usize, step: f64) {
                let keep = 1.0 - step;
                self.0.iter_mut().for_each(|x| *x *= keep);
                self.0[i] += step;
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

simplex_point!(Allocation, "allocation");
simplex_point!(ScenarioMix, "scenario mix");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_simplex() {
        assert!(Allocation::new(vec![0.5, 0.6]).is_err());
        assert!(Allocation::new(vec![1.5, -0.5]).is_err());
        assert!(ScenarioMix::new(vec![]).is_err());
        assert!(Allocation::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn external_input_is_renormalized() {
        let p = Allocation::from_external(vec![1.0, 3.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert!(Allocation::from_external(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn vertex_step() {
        let mut p = Allocation::uniform(4);
        p.move_toward_vertex(2, 0.5);
        assert_eq!(p.as_slice(), &[0.125, 0.125, 0.625, 0.125]);
        let mut q = Allocation::uniform(3);
        q.move_toward_vertex(1, 1.0);
        assert_eq!(q, Allocation::vertex(3, 1));
    }
}
