use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which proportional colocalization test produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// All variants, χ²_{J-1} reference.
    Full,
    /// Two lead variants, χ²_1 reference ignoring selection.
    Naive,
    /// Two lead variants, Monte-Carlo critical value given the selection event.
    Conditional,
    /// Lagrange-multiplier test of a zero proportionality constant.
    Lm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Full, Method::Naive, Method::Conditional, Method::Lm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Naive => "naive",
            Method::Conditional => "cond",
            Method::Lm => "lm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Method::Full),
            "naive" => Ok(Method::Naive),
            "cond" | "conditional" => Ok(Method::Conditional),
            "lm" => Ok(Method::Lm),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    /// n·Q̂ at the minimizer, or the LM statistic.
    pub statistic: f64,
    /// Degrees of freedom for the χ² tests; the conditional critical value
    /// w*_ν for the conditional test.
    pub df_or_critical: f64,
    pub p_value: f64,
    /// Absent for the LM test, which is evaluated at η = 0.
    pub eta_hat: Option<f64>,
    pub nu: f64,
    pub reject: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Combined conditional + LM decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// LM finds a trait-1 signal and proportionality is not rejected.
    RetainProportionalColocalization,
    /// LM finds a trait-1 signal and the proportionality test rejects.
    RejectProportionalColocalization,
    /// No evidence of a trait-1 signal: colocalization cannot be supported.
    RejectNoTrait1Signal,
}

impl Verdict {
    pub fn rejects(&self) -> bool {
        !matches!(self, Verdict::RetainProportionalColocalization)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::RetainProportionalColocalization => "retain proportional colocalization",
            Verdict::RejectProportionalColocalization => "reject proportional colocalization",
            Verdict::RejectNoTrait1Signal => {
                "reject proportional colocalization (insufficient trait-1 signal)"
            }
        };
        f.write_str(s)
    }
}

/// Combines a proportionality test with the LM test: the proportionality
/// p-value only counts when the LM test finds a non-zero proportionality
/// constant at level `nu`; otherwise colocalization is rejected outright.
pub fn combined_verdict(cond: &TestResult, lm: &TestResult, nu: f64) -> Verdict {
    if lm.p_value >= nu {
        Verdict::RejectNoTrait1Signal
    } else if cond.p_value < nu {
        Verdict::RejectProportionalColocalization
    } else {
        Verdict::RetainProportionalColocalization
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_p(method: Method, p: f64) -> TestResult {
        TestResult {
            method,
            statistic: 0.0,
            df_or_critical: 1.0,
            p_value: p,
            eta_hat: None,
            nu: 0.05,
            reject: p < 0.05,
            diagnostics: BTreeMap::new(),
        }
    }

    #[test]
    fn verdict_rules() {
        let c = |p| with_p(Method::Conditional, p);
        let l = |p| with_p(Method::Lm, p);
        assert_eq!(
            combined_verdict(&c(0.4), &l(0.002), 0.05),
            Verdict::RetainProportionalColocalization
        );
        assert_eq!(
            combined_verdict(&c(0.4), &l(0.3), 0.05),
            Verdict::RejectNoTrait1Signal
        );
        assert_eq!(
            combined_verdict(&c(0.01), &l(0.001), 0.05),
            Verdict::RejectProportionalColocalization
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
