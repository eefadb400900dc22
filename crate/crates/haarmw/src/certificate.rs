//! Machine-checked inequality instances.
//!
//! A certificate records one evaluated inequality: the computed left and
//! right sides, the slack, and whether the instance passes under the fixed
//! slack rule. Inapplicable certificates (hypothesis not met on this
//! instance) are marked rather than failed.

use alloc::string::String;

use crate::tol;

/// Instance coordinates attached to emitted certificates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceParams {
    pub seed: u64,
    pub dim: usize,
    pub depth: usize,
    pub branching: usize,
    pub complexity: usize,
    /// Free-form tag (operator kind, degeneracy mode).
    pub tag: String,
}

/// One evaluated inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    /// False when the statement's hypothesis fails on this instance.
    pub applicable: bool,
    pub params: InstanceParams,
}

impl Certificate {
    /// Evaluate `lhs <= rhs` with the standard slack rule:
    /// pass iff `rhs - lhs >= -CERT_SLACK * max(1, rhs)`.
    pub fn evaluate(name: &str, lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        Certificate {
            name: String::from(name),
            lhs,
            rhs,
            slack,
            pass: slack >= -tol::CERT_SLACK * rhs.max(1.0),
            applicable: true,
            params: InstanceParams::default(),
        }
    }

    /// A certificate whose hypothesis does not hold on this instance.
    pub fn inapplicable(name: &str) -> Self {
        Certificate {
            name: String::from(name),
            lhs: 0.0,
            rhs: 0.0,
            slack: 0.0,
            pass: true,
            applicable: false,
            params: InstanceParams::default(),
        }
    }

    pub fn with_params(mut self, params: InstanceParams) -> Self {
        self.params = params;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_rule() {
        assert!(Certificate::evaluate("x", 1.0, 1.0).pass);
        assert!(Certificate::evaluate("x", 1.0, 1.0 - 1e-10).pass);
        assert!(!Certificate::evaluate("x", 1.0, 0.9).pass);
        // tolerance scales with max(1, rhs)
        assert!(Certificate::evaluate("x", 1e6 + 5e-4, 1e6).pass);
        assert!(!Certificate::evaluate("x", 1e6 + 2e-2, 1e6).pass);
        let c = Certificate::evaluate("x", 0.5, 2.0);
        assert_eq!(c.slack, 1.5);
        assert!(c.applicable);
    }
}
