//! Problem instances for best-arm identification.
//!
//! An instance is either *unstructured* (one independent mean per arm, drawn
//! from a one-parameter exponential family) or *linear* (Gaussian rewards
//! whose means are `a_i . theta` for known arm features `a_i`). Instances are
//! validated on construction and immutable afterwards, so they can be shared
//! freely across concurrent replications.
//!
//! Arms are indexed from zero in the API. CSV output and the CLI print
//! one-based labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward distribution family for unstructured instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Gaussian with known per-arm variance.
    #[default]
    Gaussian,
    Bernoulli,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Unstructured,
    Linear,
}

/// A scenario is identified by the suboptimal arm that would overtake the
/// best arm under an alternative parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScenarioIndex(pub usize);

impl ScenarioIndex {
    pub fn arm(self) -> usize {
        self.0
    }
}

/// Instance file schema.
///
/// ```json
/// { "kind": "linear", "theta": [1, 0], "features": [[1, 0], [0, 1]], "variances": [1, 1] }
/// ```
///
/// `family` defaults to gaussian and `variances` to all ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    #[serde(default)]
    pub family: Family,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
}

/// A validated bandit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    kind: InstanceKind,
    family: Family,
    /// Row-major `K x d` feature matrix, linear instances only.
    features: Option<Vec<f64>>,
    dim: usize,
    theta: Vec<f64>,
    variances: Vec<f64>,
    means: Vec<f64>,
    best: usize,
    scenarios: Vec<ScenarioIndex>,
}

/// Checks every well-posedness condition of an instance description.
pub fn validate_instance(spec: &InstanceSpec) -> Result<()> {
    BanditInstance::from_spec(spec).map(|_| ())
}

impl BanditInstance {
    pub fn from_spec(spec: &InstanceSpec) -> Result<Self> {
        match spec.kind {
            InstanceKind::Unstructured => {
                if spec.features.is_some() {
                    return Err(Error::DimensionMismatch(
                        "unstructured instances take no feature matrix".into(),
                    ));
                }
                Self::unstructured(spec.family, spec.theta.clone(), spec.variances.clone())
            }
            InstanceKind::Linear => {
                if spec.family != Family::Gaussian {
                    return Err(Error::DomainViolation(
                        "linear instances are always gaussian".into(),
                    ));
                }
                let features = spec.features.clone().ok_or_else(|| {
                    Error::DimensionMismatch("linear instance requires `features`".into())
                })?;
                Self::linear(features, spec.theta.clone(), spec.variances.clone())
            }
        }
    }

    /// Unstructured instance: `theta[i]` is the mean of arm `i`.
    pub fn unstructured(family: Family, theta: Vec<f64>, variances: Option<Vec<f64>>) -> Result<Self> {
        let k = theta.len();
        if k < 2 {
            return Err(Error::DimensionMismatch(format!("need at least 2 arms, got {k}")));
        }
        let variances = check_variances(variances, k)?;
        for (i, &m) in theta.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::DomainViolation(format!("mean of arm {} is not finite", i + 1)));
            }
            match family {
                Family::Gaussian => {}
                Family::Bernoulli if !(m > 0.0 && m < 1.0) => {
                    return Err(Error::DomainViolation(format!(
                        "bernoulli mean of arm {} must lie in (0, 1), got {m}",
                        i + 1
                    )))
                }
                Family::Poisson if m <= 0.0 => {
                    return Err(Error::DomainViolation(format!(
                        "poisson mean of arm {} must be positive, got {m}",
                        i + 1
                    )))
                }
                _ => {}
            }
        }
        let means = theta.clone();
        let best = unique_argmax(&means)?;
        Ok(Self {
            kind: InstanceKind::Unstructured,
            family,
            features: None,
            dim: k,
            scenarios: scenarios_excluding(k, best),
            theta,
            variances,
            means,
            best,
        })
    }

    /// Gaussian linear instance with feature rows `features[i]`.
    pub fn linear(features: Vec<Vec<f64>>, theta: Vec<f64>, variances: Option<Vec<f64>>) -> Result<Self> {
        let k = features.len();
        let d = theta.len();
        if k < 2 {
            return Err(Error::DimensionMismatch(format!("need at least 2 arms, got {k}")));
        }
        if d == 0 {
            return Err(Error::DimensionMismatch("theta must be nonempty".into()));
        }
        if let Some((i, row)) = features.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "feature row {} has width {}, theta has length {d}",
                i + 1,
                row.len()
            )));
        }
        if features.iter().flatten().chain(theta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DomainViolation("features and theta must be finite".into()));
        }
        let variances = check_variances(variances, k)?;
        let flat: Vec<f64> = features.into_iter().flatten().collect();
        let means: Vec<f64> = flat.chunks_exact(d).map(|a| dot(a, &theta)).collect();
        let best = unique_argmax(&means)?;
        Ok(Self {
            kind: InstanceKind::Linear,
            family: Family::Gaussian,
            features: Some(flat),
            dim: d,
            scenarios: scenarios_excluding(k, best),
            theta,
            variances,
            means,
            best,
        })
    }

    /// Same instance with a different parameter vector.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        match &self.features {
            None => Self::unstructured(self.family, theta, Some(self.variances.clone())),
            Some(flat) => Self::linear(
                flat.chunks_exact(self.dim).map(<[f64]>::to_vec).collect(),
                theta,
                Some(self.variances.clone()),
            ),
        }
    }

    /// Identity-feature linear view of a gaussian unstructured instance.
    /// Only meant for cross-checking the two closed forms against each other.
    pub fn as_linear(&self) -> Result<Self> {
        match self.kind {
            InstanceKind::Linear => Ok(self.clone()),
            InstanceKind::Unstructured if self.family == Family::Gaussian => {
                let k = self.num_arms();
                let features = (0..k)
                    .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect();
                Self::linear(features, self.theta.clone(), Some(self.variances.clone()))
            }
            InstanceKind::Unstructured => Err(Error::DomainViolation(
                "only gaussian instances have a linear equivalent".into(),
            )),
        }
    }

    pub fn to_spec(&self) -> InstanceSpec {
        InstanceSpec {
            kind: self.kind,
            family: self.family,
            theta: self.theta.clone(),
            features: self
                .features
                .as_ref()
                .map(|f| f.chunks_exact(self.dim).map(<[f64]>::to_vec).collect()),
            variances: Some(self.variances.clone()),
        }
    }

    pub fn kind(&self) -> InstanceKind {
        self.kind
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn is_linear(&self) -> bool {
        self.kind == InstanceKind::Linear
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// Parameter dimension `d` (equal to `K` for unstructured instances).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Feature row of arm `i`; `None` for unstructured instances.
    pub fn feature(&self, i: usize) -> Option<&[f64]> {
        self.features.as_ref().map(|f| &f[i * self.dim..(i + 1) * self.dim])
    }

    /// Mean rewards `m_i`.
    pub fn mean_rewards(&self) -> &[f64] {
        &self.means
    }

    pub fn best_arm(&self) -> usize {
        self.best
    }

    /// Scenarios in ascending arm order; every mixed strategy of the skeptic
    /// is indexed by position in this list.
    pub fn scenario_set(&self) -> &[ScenarioIndex] {
        &self.scenarios
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Position of scenario `x` in the canonical order.
    pub fn scenario_position(&self, x: ScenarioIndex) -> Option<usize> {
        self.scenarios.binary_search(&x).ok()
    }

    /// `m_best - m_x`, strictly positive for every scenario.
    pub fn gap(&self, x: ScenarioIndex) -> f64 {
        self.means[self.best] - self.means[x.arm()]
    }
}

fn check_variances(variances: Option<Vec<f64>>, k: usize) -> Result<Vec<f64>> {
    let v = variances.unwrap_or_else(|| vec![1.0; k]);
    if v.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "expected {k} variances, got {}",
            v.len()
        )));
    }
    if let Some((i, s)) = v.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::DomainViolation(format!(
            "variance of arm {} must be positive, got {s}",
            i + 1
        )));
    }
    Ok(v)
}

fn unique_argmax(means: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, &m) in means.iter().enumerate().skip(1) {
        if m > means[best] {
            best = i;
        }
    }
    // Exact comparison: near-ties are the caller's business.
    if let Some(other) = (0..means.len()).find(|&i| i != best && means[i] == means[best]) {
        let (first, second) = if other < best { (other, best) } else { (best, other) };
        return Err(Error::NonUniqueBestArm { first, second });
    }
    Ok(best)
}

fn scenarios_excluding(k: usize, best: usize) -> Vec<ScenarioIndex> {
    (0..k).filter(|&i| i != best).map(ScenarioIndex).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;

    #[test]
    fn case1_is_valid() {
        let inst = builtins::case1();
        assert_eq!(inst.mean_rewards(), &[1.0, 0.0, -2.0]);
        assert_eq!(inst.best_arm(), 0);
        assert_eq!(inst.scenario_set(), &[ScenarioIndex(1), ScenarioIndex(2)]);
    }

    #[test]
    fn tie_is_rejected() {
        let err = BanditInstance::unstructured(Family::Gaussian, vec![1.0, 1.0, 0.0], None).unwrap_err();
        assert!(matches!(err, Error::NonUniqueBestArm { first: 0, second: 1 }));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let err = BanditInstance::linear(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            vec![1.0, 0.0],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn bad_domains() {
        assert!(matches!(
            BanditInstance::unstructured(Family::Bernoulli, vec![0.5, 1.0], None),
            Err(Error::DomainViolation(_))
        ));
        assert!(matches!(
            BanditInstance::unstructured(Family::Poisson, vec![0.5, 0.0], None),
            Err(Error::DomainViolation(_))
        ));
        assert!(matches!(
            BanditInstance::unstructured(Family::Gaussian, vec![0.5, 0.0], Some(vec![1.0, 0.0])),
            Err(Error::DomainViolation(_))
        ));
        assert!(matches!(
            BanditInstance::unstructured(Family::Gaussian, vec![0.5], None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn case2_means_and_best_arm() {
        let inst = builtins::case2();
        let expected = [-1.0509, -2.0821, 0.2178, 0.8569, 1.4549, -1.0434];
        for (m, e) in inst.mean_rewards().iter().zip(expected) {
            // Stored constants are rounded, so the last digit can move.
            assert!((m - e).abs() < 1e-4, "{m} vs {e}");
        }
        assert_eq!(inst.best_arm(), 4);
        let arms: Vec<usize> = inst.scenario_set().iter().map(|x| x.arm()).collect();
        assert_eq!(arms, vec![0, 1, 2, 3, 5]);
    }

    #[test]
    fn bilinear_instance() {
        let inst = builtins::example3();
        assert_eq!(inst.mean_rewards(), &[-1.0, -1.0, 0.0]);
        assert_eq!(inst.best_arm(), 2);
    }

    #[test]
    fn two_arms_have_one_scenario() {
        let inst = BanditInstance::unstructured(Family::Gaussian, vec![1.0, 0.0], None).unwrap();
        assert_eq!(inst.scenario_set(), &[ScenarioIndex(1)]);
    }

    #[test]
    fn identity_features_give_same_means() {
        let inst = BanditInstance::unstructured(Family::Gaussian, vec![0.3, 1.2, -0.4], Some(vec![1.0, 2.0, 0.5])).unwrap();
        let lin = inst.as_linear().unwrap();
        assert_eq!(inst.mean_rewards(), lin.mean_rewards());
        assert_eq!(inst.best_arm(), lin.best_arm());
        assert!(BanditInstance::unstructured(Family::Poisson, vec![1.0, 2.0], None)
            .unwrap()
            .as_linear()
            .is_err());
    }

    #[test]
    fn spec_json_roundtrip_and_defaults() {
        let spec: InstanceSpec = serde_json::from_str(
            r#"{"kind":"linear","theta":[1,0],"features":[[1,0],[0,1],[-2,0]]}"#,
        )
        .unwrap();
        let inst = BanditInstance::from_spec(&spec).unwrap();
        assert_eq!(inst.variances(), &[1.0, 1.0, 1.0]);
        assert_eq!(inst, builtins::case1());
        let back = BanditInstance::from_spec(&inst.to_spec()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn linear_rejects_non_gaussian_family() {
        let spec: InstanceSpec = serde_json::from_str(
            r#"{"kind":"linear","family":"poisson","theta":[1,0],"features":[[1,0],[0,1]]}"#,
        )
        .unwrap();
        assert!(matches!(validate_instance(&spec), Err(Error::DomainViolation(_))));
    }
}
