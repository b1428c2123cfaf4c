use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RandomStream;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed distribution: {0}")]
pub struct MalformedDistribution(pub String);

/// Largest Poisson rate accepted; Knuth's product method underflows past ~745.
const MAX_POISSON_LAMBDA: f64 = 700.0;

/// A named distribution with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Categorical { values: Vec<String>, probs: Vec<f64> },
    Bernoulli { p: f64 },
    Binomial { n: u32, p: f64 },
    Geometric { p: f64 },
    NegativeBinomial { r: u32, p: f64 },
    Poisson { lambda: f64 },
    Beta { alpha: f64, beta: f64 },
    Exponential { lambda: f64 },
    Normal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
}

impl DistributionSpec {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Categorical { .. } => "categorical",
            Self::Bernoulli { .. } => "bernoulli",
            Self::Binomial { .. } => "binomial",
            Self::Geometric { .. } => "geometric",
            Self::NegativeBinomial { .. } => "negative_binomial",
            Self::Poisson { .. } => "poisson",
            Self::Beta { .. } => "beta",
            Self::Exponential { .. } => "exponential",
            Self::Normal { .. } => "normal",
            Self::Uniform { .. } => "uniform",
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Self::Bernoulli { .. }
                | Self::Binomial { .. }
                | Self::Geometric { .. }
                | Self::NegativeBinomial { .. }
                | Self::Poisson { .. }
        )
    }

    pub fn is_continuous(&self) -> bool {
        matches!(
            self,
            Self::Beta { .. } | Self::Exponential { .. } | Self::Normal { .. } | Self::Uniform { .. }
        )
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Self::Categorical { .. })
    }

    pub fn validate(&self) -> Result<(), MalformedDistribution> {
        let bad = |msg: String| Err(MalformedDistribution(msg));
        let unit = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match self {
            Self::Categorical { values, probs } => {
                if values.is_empty() {
                    return bad("categorical with no values".into());
                }
                if values.len() != probs.len() {
                    return bad(format!(
                        "categorical has {} values but {} probabilities",
                        values.len(),
                        probs.len()
                    ));
                }
                if let Some(p) = probs.iter().find(|p| !unit(**p)) {
                    return bad(format!("categorical probability {p} outside [0, 1]"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("categorical probabilities sum to {total}"));
                }
                let mut seen = std::collections::HashSet::new();
                if let Some(v) = values.iter().find(|v| !seen.insert(v.as_str())) {
                    return bad(format!("duplicate categorical value {v:?}"));
                }
                Ok(())
            }
            Self::Bernoulli { p } | Self::Binomial { p, .. } if !unit(*p) => {
                bad(format!("probability {p} outside [0, 1]"))
            }
            Self::Binomial { n: 0, .. } => bad("binomial n must be positive".into()),
            Self::Geometric { p } | Self::NegativeBinomial { p, .. } if !(unit(*p) && *p > 0.0) => {
                bad(format!("success probability {p} outside (0, 1]"))
            }
            Self::NegativeBinomial { r: 0, .. } => bad("negative binomial r must be positive".into()),
            Self::Poisson { lambda } if !(positive(*lambda) && *lambda <= MAX_POISSON_LAMBDA) => {
                bad(format!("poisson lambda {lambda} outside (0, {MAX_POISSON_LAMBDA}]"))
            }
            Self::Exponential { lambda } if !positive(*lambda) => {
                bad(format!("exponential lambda {lambda} must be positive"))
            }
            Self::Beta { alpha, beta } if !(positive(*alpha) && positive(*beta)) => {
                bad(format!("beta parameters ({alpha}, {beta}) must be positive"))
            }
            Self::Normal { mu, sigma } if !(mu.is_finite() && positive(*sigma)) => {
                bad(format!("normal parameters ({mu}, {sigma}) invalid"))
            }
            Self::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                bad(format!("uniform bounds ({a}, {b}) require a < b"))
            }
            _ => Ok(()),
        }
    }

    /// One draw using the pinned algorithm for the family.
    pub fn sample(&self, stream: &mut RandomStream) -> Result<Value, MalformedDistribution> {
        self.validate()?;
        Ok(self.sample_unchecked(stream))
    }

    pub(crate) fn sample_unchecked(&self, stream: &mut RandomStream) -> Value {
        match self {
            Self::Categorical { values, probs } => {
                let u = stream.next_f64();
                let mut cumulative = 0.0;
                for (value, p) in values.iter().zip(probs) {
                    cumulative += p;
                    if u < cumulative {
                        return Value::Str(value.clone());
                    }
                }
                // Rounding left the cumulative sum just under 1.
                let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(values.len() - 1);
                Value::Str(values[last].clone())
            }
            Self::Bernoulli { p } => Value::Int(i64::from(stream.next_f64() < *p)),
            Self::Binomial { n, p } => {
                let hits = (0..*n).filter(|_| stream.next_f64() < *p).count();
                Value::Int(hits as i64)
            }
            Self::Geometric { p } => Value::Int(sample_geometric(stream, *p)),
            Self::NegativeBinomial { r, p } => {
                let total = (0..*r).map(|_| sample_geometric(stream, *p)).sum();
                Value::Int(total)
            }
            Self::Poisson { lambda } => {
                let limit = (-lambda).exp();
                let mut k = 0i64;
                let mut product = 1.0;
                loop {
                    product *= stream.next_f64();
                    if product <= limit {
                        break;
                    }
                    k += 1;
                }
                Value::Int(k)
            }
            Self::Uniform { a, b } => Value::Real(a + stream.next_f64() * (b - a)),
            Self::Exponential { lambda } => Value::Real(-(1.0 - stream.next_f64()).ln() / lambda),
            Self::Normal { mu, sigma } => Value::Real(mu + sigma * stream.standard_normal()),
            Self::Beta { alpha, beta } => Value::Real(sample_beta(stream, *alpha, *beta)),
        }
    }

    /// Analytic mean and variance, where both are finite.
    pub fn moments(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Categorical { .. } => None,
            Self::Bernoulli { p } => Some((p, p * (1.0 - p))),
            Self::Binomial { n, p } => Some((n as f64 * p, n as f64 * p * (1.0 - p))),
            Self::Geometric { p } => Some(((1.0 - p) / p, (1.0 - p) / (p * p))),
            Self::NegativeBinomial { r, p } => {
                Some((r as f64 * (1.0 - p) / p, r as f64 * (1.0 - p) / (p * p)))
            }
            Self::Poisson { lambda } => Some((lambda, lambda)),
            Self::Beta { alpha, beta } => {
                let s = alpha + beta;
                Some((alpha / s, alpha * beta / (s * s * (s + 1.0))))
            }
            Self::Exponential { lambda } => Some((1.0 / lambda, 1.0 / (lambda * lambda))),
            Self::Normal { mu, sigma } => Some((mu, sigma * sigma)),
            Self::Uniform { a, b } => Some(((a + b) / 2.0, (b - a) * (b - a) / 12.0)),
        }
    }
}

/// Failures before the first success; support starts at 0.
fn sample_geometric(stream: &mut RandomStream, p: f64) -> i64 {
    let u = stream.next_f64();
    if p >= 1.0 {
        return 0;
    }
    ((1.0 - u).ln() / (1.0 - p).ln()).floor() as i64
}

/// Marsaglia–Tsang gamma with unit scale; shapes below one use the
/// `Gamma(a + 1) * u^(1/a)` boost.
pub(crate) fn sample_gamma(stream: &mut RandomStream, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = sample_gamma(stream, shape + 1.0);
        let u = stream.next_f64();
        return g * (1.0 - u).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = stream.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = stream.next_f64();
        if u < 1.0 - 0.0331 * x * x * x * x {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub(crate) fn sample_beta(stream: &mut RandomStream, alpha: f64, beta: f64) -> f64 {
    let x = sample_gamma(stream, alpha);
    let y = sample_gamma(stream, beta);
    x / (x + y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw_reals(dist: &DistributionSpec, seed: u64, n: usize) -> Vec<f64> {
        let mut s = RandomStream::new(seed);
        (0..n).map(|_| dist.sample(&mut s).unwrap().as_f64().unwrap()).collect()
    }

    #[test]
    fn degenerate_bernoulli() {
        let d = DistributionSpec::Bernoulli { p: 1.0 };
        let mut s = RandomStream::new(3);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut s).unwrap(), Value::Int(1));
        }
    }

    #[test]
    fn uniform_is_affine_in_u() {
        let d = DistributionSpec::Uniform { a: 0.0, b: 1.0 };
        let mut s = RandomStream::new(11);
        let mut t = s;
        let u = t.next_f64();
        assert_eq!(d.sample(&mut s).unwrap(), Value::Real(u));
        let d = DistributionSpec::Uniform { a: 2.0, b: 6.0 };
        let mut s = RandomStream::new(11);
        assert_eq!(d.sample(&mut s).unwrap(), Value::Real(2.0 + 4.0 * u));
    }

    #[test]
    fn normal_moments() {
        let xs = draw_reals(&DistributionSpec::Normal { mu: 0.0, sigma: 1.0 }, 5, 100_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn normal_consumes_two_uniforms() {
        let mut s = RandomStream::new(42);
        let mut t = s;
        s.standard_normal();
        t.next_u64();
        t.next_u64();
        assert_eq!(s, t);
    }

    #[test]
    fn categorical_inverse_cdf() {
        let d = DistributionSpec::Categorical {
            values: vec!["a".into(), "b".into(), "c".into()],
            probs: vec![0.2, 0.5, 0.3],
        };
        // u = 0.1 -> a, u = 0.6 -> b, u = 0.95 -> c
        for (u_target, want) in [(0.1, "a"), (0.6, "b"), (0.95, "c")] {
            // Find a state whose first uniform lands near the target.
            let mut found = None;
            for seed in 0..10_000u64 {
                let mut probe = RandomStream::new(seed);
                let u = probe.next_f64();
                if (u - u_target).abs() < 0.01 {
                    found = Some(seed);
                    break;
                }
            }
            let mut s = RandomStream::new(found.unwrap());
            assert_eq!(d.sample(&mut s).unwrap(), Value::Str(want.into()));
        }
    }

    #[test]
    fn malformed_rejected() {
        let cases = vec![
            DistributionSpec::Bernoulli { p: 1.5 },
            DistributionSpec::Binomial { n: 0, p: 0.5 },
            DistributionSpec::Geometric { p: 0.0 },
            DistributionSpec::NegativeBinomial { r: 0, p: 0.5 },
            DistributionSpec::Poisson { lambda: -1.0 },
            DistributionSpec::Poisson { lambda: 5000.0 },
            DistributionSpec::Beta { alpha: 0.0, beta: 1.0 },
            DistributionSpec::Exponential { lambda: 0.0 },
            DistributionSpec::Normal { mu: 0.0, sigma: 0.0 },
            DistributionSpec::Uniform { a: 1.0, b: 1.0 },
            DistributionSpec::Categorical { values: vec!["a".into()], probs: vec![0.5] },
            DistributionSpec::Categorical { values: vec!["a".into(), "a".into()], probs: vec![0.5, 0.5] },
        ];
        for d in cases {
            assert!(d.sample(&mut RandomStream::new(1)).is_err(), "{d:?} accepted");
        }
    }

    #[test]
    fn beta_stays_in_unit_interval() {
        for (a, b) in [(0.3, 0.7), (1.05, 25.0), (5.0, 2.0)] {
            let xs = draw_reals(&DistributionSpec::Beta { alpha: a, beta: b }, 9, 10_000);
            assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
