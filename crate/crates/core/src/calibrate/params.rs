use std::fmt;
use std::str::FromStr;

use crate::error::{AjdError, Result};
use crate::model::ModelSpec;

/// Address of one scalar entry of a [`ModelSpec`] (0-based internally,
/// 1-based in the textual form).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    B(usize),
    Beta(usize, usize),
    Lambda,
    Kappa(usize),
    /// Symmetric entry of `a`; setting it writes both triangles.
    A(usize, usize),
    /// Symmetric entry of `alpha[k]`.
    Alpha(usize, usize, usize),
}

impl ParamRef {
    pub fn check(&self, d: usize) -> Result<()> {
        let ok = match *self {
            ParamRef::B(i) | ParamRef::Kappa(i) => i < d,
            ParamRef::Beta(i, j) | ParamRef::A(i, j) => i < d && j < d,
            ParamRef::Alpha(k, i, j) => k < d && i < d && j < d,
            ParamRef::Lambda => true,
        };
        if ok {
            Ok(())
        } else {
            Err(AjdError::Dimension(format!("parameter {self} out of range for d = {d}")))
        }
    }

    pub fn get(&self, s: &ModelSpec) -> f64 {
        match *self {
            ParamRef::B(i) => s.b[i],
            ParamRef::Beta(i, j) => s.beta[(i, j)],
            ParamRef::Lambda => s.lambda0,
            ParamRef::Kappa(i) => s.kappa[i],
            ParamRef::A(i, j) => s.a[(i, j)],
            ParamRef::Alpha(k, i, j) => s.alpha[k][(i, j)],
        }
    }

    pub fn set(&self, s: &mut ModelSpec, v: f64) {
        match *self {
            ParamRef::B(i) => s.b[i] = v,
            ParamRef::Beta(i, j) => s.beta[(i, j)] = v,
            ParamRef::Lambda => s.lambda0 = v,
            ParamRef::Kappa(i) => s.kappa[i] = v,
            ParamRef::A(i, j) => {
                s.a[(i, j)] = v;
                s.a[(j, i)] = v;
            }
            ParamRef::Alpha(k, i, j) => {
                s.alpha[k][(i, j)] = v;
                s.alpha[k][(j, i)] = v;
            }
        }
    }
}

impl fmt::Display for ParamRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ParamRef::B(i) => write!(f, "b[{}]", i + 1),
            ParamRef::Beta(i, j) => write!(f, "beta[{},{}]", i + 1, j + 1),
            ParamRef::Lambda => write!(f, "lambda"),
            ParamRef::Kappa(i) => write!(f, "kappa[{}]", i + 1),
            ParamRef::A(i, j) => write!(f, "a[{},{}]", i + 1, j + 1),
            ParamRef::Alpha(k, i, j) => write!(f, "alpha[{}][{},{}]", k + 1, i + 1, j + 1),
        }
    }
}

/// Parses `beta`, `beta[i,j]`, `b`, `b[i]`, `lambda`, `kappa`, `kappa[i]`,
/// `a`, `a[i,j]`, `alpha`, `alpha[k][i,j]`; bare names address the first
/// entry and are meant for 1-D models.
impl FromStr for ParamRef {
    type Err = AjdError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || AjdError::Parse(format!("unknown parameter '{s}'"));
        let (name, rest) = s.split_once('[').map_or((s, ""), |(n, r)| (n, r));
        let groups: Vec<Vec<usize>> = if rest.is_empty() {
            vec![]
        } else {
            format!("[{rest}")
                .split('[')
                .skip(1)
                .map(|g| {
                    let g = g.strip_suffix(']').ok_or_else(bad)?;
                    g.split(',')
                        .map(|v| match v.trim().parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(bad()),
                        })
                        .collect()
                })
                .collect::<Result<_>>()?
        };
        let shape: Vec<usize> = groups.iter().map(Vec::len).collect();
        let flat: Vec<usize> = groups.concat();
        match (name, shape.as_slice()) {
            ("b", []) => Ok(ParamRef::B(0)),
            ("b", [1]) => Ok(ParamRef::B(flat[0])),
            ("beta", []) => Ok(ParamRef::Beta(0, 0)),
            ("beta", [2]) => Ok(ParamRef::Beta(flat[0], flat[1])),
            ("lambda", []) => Ok(ParamRef::Lambda),
            ("kappa", []) => Ok(ParamRef::Kappa(0)),
            ("kappa", [1]) => Ok(ParamRef::Kappa(flat[0])),
            ("a", []) => Ok(ParamRef::A(0, 0)),
            ("a", [2]) => Ok(ParamRef::A(flat[0], flat[1])),
            ("alpha", []) => Ok(ParamRef::Alpha(0, 0, 0)),
            ("alpha", [1, 2]) => Ok(ParamRef::Alpha(flat[0], flat[1], flat[2])),
            _ => Err(bad()),
        }
    }
}
