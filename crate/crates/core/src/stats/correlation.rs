use serde::{Deserialize, Serialize};

use super::special::{t_critical, t_sf};
use crate::error::{Error, Result};

/// Degrees of freedom used when turning a correlation into a t statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfConvention {
    /// `n - 2`, the textbook test for a Pearson coefficient.
    #[default]
    Standard,
    /// `n - 1`, the convention used for cross-correlation significance.
    NMinusOne,
}

impl DfConvention {
    pub fn df(self, n: usize) -> f64 {
        match self {
            DfConvention::Standard => n as f64 - 2.0,
            DfConvention::NMinusOne => n as f64 - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    #[default]
    TwoSided,
    /// Half the two-sided probability, in the direction of the observed sign.
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorrelationTest {
    pub df: DfConvention,
    pub tail: Tail,
}

impl CorrelationTest {
    pub fn p_value(&self, r: f64, n: usize) -> f64 {
        let df = self.df.df(n);
        let p = if r.abs() >= 1.0 {
            0.0
        } else {
            t_sf(r * (df / (1.0 - r * r)).sqrt(), df)
        };
        match self.tail {
            Tail::TwoSided => p,
            Tail::OneSided => 0.5 * p,
        }
    }

    /// Smallest `|r|` significant at level `alpha` for a sample of `n`.
    pub fn critical_r(&self, alpha: f64, n: usize) -> f64 {
        let df = self.df.df(n);
        let two_sided_alpha = match self.tail {
            Tail::TwoSided => alpha,
            Tail::OneSided => 2.0 * alpha,
        };
        let t = t_critical(two_sided_alpha, df);
        t / (df + t * t).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub p_value: f64,
}

/// Pearson's r with a two-sided p-value on `n - 2` degrees of freedom.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    pearson_r_with(x, y, CorrelationTest::default())
}

pub fn pearson_r_with(x: &[f64], y: &[f64], test: CorrelationTest) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let mx = super::mean(x);
    let my = super::mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        r,
        n,
        p_value: test.p_value(r, n),
    })
}
