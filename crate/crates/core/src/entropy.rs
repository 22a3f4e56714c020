//! Auxiliary information, total information and the nonsymmetric entropy
//! functional `S(p, β) = −Σ p(i)·ln(β_i·p(i))` on finite alphabets.
//!
//! All logarithms are natural. Terms with `p(i) = 0` contribute exactly zero.

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Tolerance on `|Σ p − 1|` accepted when building a [`DiscreteDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A probability vector on `m ≥ 1` events.
///
/// Inputs within [`NORMALIZATION_TOLERANCE`] of unit mass are divided by
/// their sum so that downstream identities hold tightly.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return domain("a distribution needs at least one event");
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return domain(format!(
                "probability at index {} is {p}; entries must be finite and non-negative",
                i + 1
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return domain(format!(
                "probabilities sum to {total}, not 1 (tolerance {NORMALIZATION_TOLERANCE:e})"
            ));
        }
        let probs = if total == 1.0 {
            probs
        } else {
            probs.into_iter().map(|p| p / total).collect()
        };
        Ok(Self { probs })
    }

    /// All mass on event `j` (0-based) of `m`.
    pub fn point_mass(m: usize, j: usize) -> Result<Self> {
        if j >= m {
            return domain(format!("atom index {j} out of range for {m} events"));
        }
        let mut probs = vec![0.0; m];
        probs[j] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return domain("a distribution needs at least one event");
        }
        Ok(Self {
            probs: vec![1.0 / m as f64; m],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// L∞ distance to another distribution of the same length.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Strictly positive auxiliary parameters `β_1, …, β_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return domain("a weight vector needs at least one entry");
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w <= 0.0)
        {
            return domain(format!(
                "weight at index {} is {w}; weights must be finite and > 0",
                i + 1
            ));
        }
        Ok(Self { weights })
    }

    pub fn ones(m: usize) -> Result<Self> {
        Self::new(vec![1.0; m])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `c·β` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * c).collect())
    }

    /// Sum of reciprocal weights, `Σ 1/β_i`.
    pub fn reciprocal_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.recip()).sum()
    }
}

/// A parametric generator of discrete weights `β_i`, `i = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFamily {
    /// `β_i = c`.
    Constant { c: f64 },
    /// `β_i = i^α`, the Zipf family.
    Power { alpha: f64 },
    /// `β_i = (i + γ)^α`, the Mandelbrot family. Requires `γ > −1`.
    ShiftedPower { alpha: f64, gamma: f64 },
}

impl WeightFamily {
    pub fn constant(c: f64) -> Result<Self> {
        let f = Self::Constant { c };
        f.validate()?;
        Ok(f)
    }

    pub fn power(alpha: f64) -> Result<Self> {
        let f = Self::Power { alpha };
        f.validate()?;
        Ok(f)
    }

    pub fn shifted_power(alpha: f64, gamma: f64) -> Result<Self> {
        let f = Self::ShiftedPower { alpha, gamma };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { c } if !(c.is_finite() && c > 0.0) => {
                domain(format!("constant weight c must be finite and > 0, got {c}"))
            }
            Self::Power { alpha } if !alpha.is_finite() => {
                domain(format!("power exponent must be finite, got {alpha}"))
            }
            Self::ShiftedPower { alpha, gamma } if !(alpha.is_finite() && gamma.is_finite()) => {
                domain(format!(
                    "shifted-power parameters must be finite, got alpha={alpha}, gamma={gamma}"
                ))
            }
            Self::ShiftedPower { gamma, .. } if gamma <= -1.0 => domain(format!(
                "shifted-power shift must satisfy gamma > -1, got {gamma}"
            )),
            _ => Ok(()),
        }
    }

    /// Weight of the 1-based event `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let x = i as f64;
        match *self {
            Self::Constant { c } => c,
            Self::Power { alpha } => x.powf(alpha),
            Self::ShiftedPower { alpha, gamma } => (x + gamma).powf(alpha),
        }
    }

    /// Weights for events `1..=m`.
    pub fn materialize(&self, m: usize) -> Result<WeightVector> {
        self.validate()?;
        WeightVector::new((1..=m).map(|i| self.weight(i)).collect())
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { c } => write!(f, "const:c={c}"),
            Self::Power { alpha } => write!(f, "power:alpha={alpha}"),
            Self::ShiftedPower { alpha, gamma } => {
                write!(f, "mandelbrot:alpha={alpha},gamma={gamma}")
            }
        }
    }
}

/// Parses `const:c=<real>`, `power:alpha=<real>` or
/// `mandelbrot:alpha=<real>,gamma=<real>`.
impl FromStr for WeightFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| {
            Error::Input(format!(
                "weight expression {s:?}: {why}; expected const:c=<real>, \
                 power:alpha=<real> or mandelbrot:alpha=<real>,gamma=<real>"
            ))
        };
        let (kind, params) = s.trim().split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let mut values = Vec::new();
        for part in params.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad("parameters must be key=value"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(&format!("{:?} is not a real number", value.trim())))?;
            values.push((key.trim(), value));
        }
        let keys: Vec<&str> = values.iter().map(|(k, _)| *k).collect();
        let family = match (kind.trim(), keys.as_slice()) {
            ("const", ["c"]) => Self::Constant { c: values[0].1 },
            ("power", ["alpha"]) => Self::Power { alpha: values[0].1 },
            ("mandelbrot", ["alpha", "gamma"]) => Self::ShiftedPower {
                alpha: values[0].1,
                gamma: values[1].1,
            },
            ("mandelbrot", ["gamma", "alpha"]) => Self::ShiftedPower {
                alpha: values[1].1,
                gamma: values[0].1,
            },
            _ => return Err(bad("unknown family or parameter names")),
        };
        family.validate()?;
        Ok(family)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        domain(format!(
            "auxiliary parameter must be finite and > 0, got {beta}"
        ))
    }
}

/// `A = −ln β`.
pub fn auxiliary_information(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(-beta.ln())
}

/// `−ln(β·p)`: Shannon self-information of `p` plus the auxiliary
/// information of `β`.
pub fn total_information(p: f64, beta: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return domain(format!(
            "probability must lie in (0, 1] for self-information, got {p}"
        ));
    }
    check_beta(beta)?;
    Ok(-(beta * p).ln())
}

pub fn shannon_entropy(dist: &DiscreteDistribution) -> f64 {
    -dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub fn nonsymmetric_entropy(dist: &DiscreteDistribution, weights: &WeightVector) -> Result<f64> {
    if dist.len() != weights.len() {
        return Err(Error::Dimension {
            expected: dist.len(),
            found: weights.len(),
        });
    }
    Ok(-dist
        .probs()
        .iter()
        .zip(weights.weights())
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &b)| p * (b * p).ln())
        .sum::<f64>())
}

/// Nonsymmetric entropy with Zipf weights `β_i = i^α`.
pub fn zipf_entropy(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    let weights = WeightFamily::power(alpha)?.materialize(dist.len())?;
    nonsymmetric_entropy(dist, &weights)
}
