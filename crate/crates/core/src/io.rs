//! CSV and JSON formats used by the command-line tool.

use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::continuous::{ConstraintSet, MultiplierSolution, Support, WeightFunction};
use crate::corpus::FitResult;
use crate::discrete::{DiscreteMaxEntSolution, HessianReport};
use crate::entropy::{DiscreteDistribution, WeightFamily, WeightVector};
use crate::error::{Error, Result};

/// Points in the plotting table attached to continuous solutions.
pub const DENSITY_TABLE_POINTS: usize = 512;

fn read_indexed<R: Read>(reader: R, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("cannot read CSV header: {e}")))?;
    if headers.len() != 2 || &headers[0] != "index" || &headers[1] != column {
        return Err(Error::Input(format!(
            "CSV header must be `index,{column}`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut values = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Input(format!("CSV row {}: {e}", row + 1)))?;
        let index: usize = record[0].parse().map_err(|_| {
            Error::Input(format!(
                "CSV row {}: index `{}` is not an integer",
                row + 1,
                &record[0]
            ))
        })?;
        if index != row + 1 {
            return Err(Error::Input(format!(
                "CSV indices must be 1-based and contiguous; row {} has index {index}",
                row + 1
            )));
        }
        let value: f64 = record[1].parse().map_err(|_| {
            Error::Input(format!(
                "CSV row {}: {column} `{}` is not a number",
                row + 1,
                &record[1]
            ))
        })?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::Input("CSV file has no data rows".into()));
    }
    Ok(values)
}

fn write_indexed(values: &[f64], column: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", column]).expect("write to memory");
    for (i, v) in values.iter().enumerate() {
        w.serialize((i + 1, v)).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

/// Reads an `index,probability` file.
pub fn read_distribution_csv<R: Read>(reader: R) -> Result<DiscreteDistribution> {
    DiscreteDistribution::new(read_indexed(reader, "probability")?)
}

/// Reads an `index,weight` file.
pub fn read_weights_csv<R: Read>(reader: R) -> Result<WeightVector> {
    WeightVector::new(read_indexed(reader, "weight")?)
}

pub fn distribution_csv(dist: &DiscreteDistribution) -> String {
    write_indexed(dist.probs(), "probability")
}

pub fn weights_csv(weights: &WeightVector) -> String {
    write_indexed(weights.weights(), "weight")
}

#[derive(Debug, Serialize)]
struct HessianDoc {
    positive_definite: bool,
    determinant: f64,
}

#[derive(Debug, Serialize)]
struct DiscreteSolutionDoc<'a> {
    m: usize,
    weights: &'a [f64],
    maximizer: &'a [f64],
    max_entropy: f64,
    hessian: Option<HessianDoc>,
}

/// Solution document; `hessian` is `null` when there is no free coordinate.
pub fn discrete_solution_json(
    solution: &DiscreteMaxEntSolution,
    hessian: Option<&HessianReport>,
) -> Value {
    serde_json::to_value(DiscreteSolutionDoc {
        m: solution.maximizer.len(),
        weights: solution.weights_used.weights(),
        maximizer: solution.maximizer.probs(),
        max_entropy: solution.max_entropy,
        hessian: hessian.map(|h| HessianDoc {
            positive_definite: h.positive_definite,
            determinant: h.determinant,
        }),
    })
    .expect("solution serializes")
}

fn bound_json(x: f64) -> Value {
    if x == f64::INFINITY {
        json!("inf")
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(x)
    }
}

fn bound_from_json(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Input(format!("bad support bound {n}"))),
        Value::String(s) => match s.trim() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => other.parse().map_err(|_| {
                Error::Input(format!("support bound `{other}` is not a number or inf"))
            }),
        },
        other => Err(Error::Input(format!(
            "support bound {other} is not a number or \"inf\""
        ))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    second_moment: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    beta: String,
    support: Vec<Value>,
    #[serde(default)]
    constraints: ConstraintsDoc,
}

/// A continuous problem: weight function on its support plus constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousProblem {
    pub beta: WeightFunction,
    pub constraints: ConstraintSet,
}

impl ContinuousProblem {
    /// Parses `{"beta": expr, "support": [a, b], "constraints": {...}}` where
    /// either bound may be the string `"inf"` or `"-inf"`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDoc =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("problem JSON: {e}")))?;
        if doc.support.len() != 2 {
            return Err(Error::Input(format!(
                "support must have two bounds, got {}",
                doc.support.len()
            )));
        }
        let support = Support::new(
            bound_from_json(&doc.support[0])?,
            bound_from_json(&doc.support[1])?,
        )?;
        let family: WeightFamily = doc.beta.parse()?;
        let constraints = ConstraintSet {
            mean: doc.constraints.mean,
            second_moment: doc.constraints.second_moment,
        };
        constraints.validate()?;
        Ok(Self {
            beta: WeightFunction::from_family(family, support)?,
            constraints,
        })
    }

    pub fn to_json(&self) -> Value {
        let s = self.beta.support();
        json!({
            "beta": self.beta.describe(),
            "support": [bound_json(s.lower), bound_json(s.upper)],
            "constraints": ConstraintsDoc {
                mean: self.constraints.mean,
                second_moment: self.constraints.second_moment,
            },
        })
    }
}

/// Multipliers, diagnostics and a `density_table` of `points` samples.
pub fn continuous_solution_json(solution: &MultiplierSolution, points: usize) -> Value {
    let s = solution.support();
    let table: Vec<[f64; 2]> = solution
        .density_table(points)
        .into_iter()
        .map(|(x, rho)| [x, rho])
        .collect();
    json!({
        "beta": solution.beta.describe(),
        "support": [bound_json(s.lower), bound_json(s.upper)],
        "constraints": ConstraintsDoc {
            mean: solution.constraints.mean,
            second_moment: solution.constraints.second_moment,
        },
        "lambda1": solution.lambda1,
        "lambda2": solution.lambda2,
        "lambda3": solution.lambda3,
        "constraint_residuals": solution.constraint_residuals,
        "quadrature_error_estimate": solution.quadrature_error_estimate,
        "iterations": solution.iterations,
        "density_table": table,
    })
}

pub fn fit_json(fit: &FitResult) -> Value {
    json!({
        "alpha": fit.alpha,
        "gamma": fit.gamma,
        "r2": fit.log_log_r2,
        "ks": fit.ks_statistic,
        "n_ranks": fit.n_ranks_used,
    })
}
