//! Closed-form scalar values used as anchors.

use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleKind {
    /// Ruin probability of the Cramér–Lundberg model with exponential claims.
    ClRuinProb { lambda: f64, mu: f64, c: f64, a: f64 },
    /// Probability that the ±1 walk reflected at 0 is ever pushed.
    GamblersRuin { q: f64 },
    /// `P(X > c A)` for `A ~ Exp(lambda)`, `X ~ Exp(1/mu)`.
    StoragePCl { lambda: f64, mu: f64, c: f64 },
}

fn domain_error(msg: &str) -> EstimatorError {
    EstimatorError::InvalidArgument(format!("oracle parameters: {msg}"))
}

fn all_positive(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite() && *x > 0.0)
}

pub fn closed_form_oracle(kind: OracleKind) -> Result<f64, EstimatorError> {
    match kind {
        OracleKind::ClRuinProb { lambda, mu, c, a } => {
            if !all_positive(&[lambda, mu, c]) || !(a.is_finite() && a >= 0.0) {
                return Err(domain_error("need lambda, mu, c > 0 and a >= 0"));
            }
            let load = lambda * mu;
            if c <= load {
                return Err(domain_error("need c > lambda mu"));
            }
            Ok(load / c * (-(c - load) * a / (c * mu)).exp())
        }
        OracleKind::GamblersRuin { q } => {
            if !(q.is_finite() && (0.0..0.5).contains(&q)) {
                return Err(domain_error("need 0 <= q < 1/2"));
            }
            Ok(q / (1.0 - q))
        }
        OracleKind::StoragePCl { lambda, mu, c } => {
            if !all_positive(&[lambda, mu, c]) {
                return Err(domain_error("need lambda, mu, c > 0"));
            }
            Ok(lambda * mu / (lambda * mu + c))
        }
    }
}
