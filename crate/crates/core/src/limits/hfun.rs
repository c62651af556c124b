use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};

/// Registry of functionals whose growth order is known by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HFunction {
    /// `h(x) = x` (vector valued).
    Identity,
    /// `h(x) = x_coord^power` (0-based coordinate).
    CoordinatePower { coord: usize, power: i32 },
    /// Indicator of the box `∏[lower_i, upper_i]`.
    IndicatorBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl HFunction {
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            HFunction::Identity => d,
            _ => 1,
        }
    }

    /// Polynomial growth order `p` with `|h(x)| ≤ c(1 + ‖x‖^p)`.
    pub fn growth_order(&self) -> f64 {
        match self {
            HFunction::Identity => 1.0,
            HFunction::CoordinatePower { power, .. } => f64::from((*power).max(0)),
            HFunction::IndicatorBox { .. } => 0.0,
        }
    }

    pub fn check(&self, d: usize) -> Result<()> {
        match self {
            HFunction::Identity => Ok(()),
            HFunction::CoordinatePower { coord, power } => {
                if *coord >= d {
                    return Err(AjdError::Dimension(format!("coordinate {} out of range for d = {d}", coord + 1)));
                }
                if *power < 0 {
                    return Err(AjdError::InvalidArgument("coordinate power must be nonnegative".into()));
                }
                Ok(())
            }
            HFunction::IndicatorBox { lower, upper } => {
                if lower.len() != d || upper.len() != d {
                    return Err(AjdError::Dimension(format!("box bounds must have length {d}")));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            HFunction::Identity => out.copy_from_slice(x),
            HFunction::CoordinatePower { coord, power } => out[0] = x[*coord].powi(*power),
            HFunction::IndicatorBox { lower, upper } => {
                let inside = x.iter().zip(lower).zip(upper).all(|((v, l), u)| *v >= *l && *v <= *u);
                out[0] = if inside { 1.0 } else { 0.0 };
            }
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for HFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            HFunction::Identity => write!(f, "identity"),
            HFunction::CoordinatePower { coord, power } => write!(f, "pow:{}:{power}", coord + 1),
            HFunction::IndicatorBox { lower, upper } => write!(f, "box:{}:{}", join(lower), join(upper)),
        }
    }
}

/// Parses `identity`, `pow:<i>:<p>` (1-based `i`) or `box:<l1,..>:<u1,..>`.
impl FromStr for HFunction {
    type Err = AjdError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AjdError::Parse(format!("unknown functional '{s}' (identity | pow:i:p | box:l,..:u,..)"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let nums = |t: &str| -> Result<Vec<f64>> {
            t.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
        };
        match parts.as_slice() {
            ["identity"] => Ok(HFunction::Identity),
            ["pow", i, p] => {
                let i: usize = i.parse().map_err(|_| bad())?;
                if i == 0 {
                    return Err(bad());
                }
                Ok(HFunction::CoordinatePower { coord: i - 1, power: p.parse().map_err(|_| bad())? })
            }
            ["box", l, u] => Ok(HFunction::IndicatorBox { lower: nums(l)?, upper: nums(u)? }),
            _ => Err(bad()),
        }
    }
}
