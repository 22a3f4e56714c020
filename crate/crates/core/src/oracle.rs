//! Independent checks of the closed-form and variational solutions.
//!
//! Nothing here calls the closed-form solvers to produce a candidate: the
//! grid search enumerates the simplex, the projected-gradient ascent uses only
//! the gradient of the functional, and the continuous harness builds its own
//! perturbations and integrates with a double-exponential rule unrelated to
//! the Gauss–Kronrod code in [`crate::quadrature`].

use rayon::prelude::*;

use crate::continuous::{continuous_entropy_with, MultiplierSolution};
use crate::discrete::solve_discrete_maxent;
use crate::entropy::{nonsymmetric_entropy, DiscreteDistribution, WeightVector};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, QuadratureConfig};
use crate::rng::SplitMix64;

/// Largest alphabet the grid search accepts.
pub const GRID_MAX_EVENTS: usize = 6;
const PG_MAX_ITERATIONS: usize = 10_000;
/// Lower clamp applied to probabilities before taking logarithms.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub best_point: DiscreteDistribution,
    pub best_value: f64,
    pub closed_form_value: f64,
    /// `closed_form_value − best_value`.
    pub gap: f64,
    pub evaluations: u64,
}

fn raw_entropy(p: &[f64], b: &[f64]) -> f64 {
    -p.iter()
        .zip(b)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, b)| p * (b * p).ln())
        .sum::<f64>()
}

/// `∂S/∂p_i = −ln(β_i p_i) − 1`, treating `S` as a function on the open orthant.
pub fn entropy_gradient(p: &[f64], weights: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(weights)
        .map(|(p, b)| -(b * p.max(LOG_FLOOR)).ln() - 1.0)
        .collect()
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Best composition of `remaining` over the tables from `dim` on, visited in
/// lexicographic order; the first maximum wins ties.
fn best_completion(
    tables: &[Vec<f64>],
    dim: usize,
    remaining: usize,
    base: f64,
    prefix: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    let m = tables.len();
    if dim == m - 1 {
        let v = base + tables[dim][remaining];
        if v > best.0 {
            prefix.push(remaining);
            *best = (v, prefix.clone());
            prefix.pop();
        }
        return;
    }
    if dim == m - 2 {
        let (a, b) = (&tables[dim], &tables[dim + 1]);
        let mut local = (f64::NEG_INFINITY, 0);
        for k in 0..=remaining {
            let v = a[k] + b[remaining - k];
            if v > local.0 {
                local = (v, k);
            }
        }
        let v = base + local.0;
        if v > best.0 {
            prefix.push(local.1);
            prefix.push(remaining - local.1);
            *best = (v, prefix.clone());
            prefix.truncate(prefix.len() - 2);
        }
        return;
    }
    for k in 0..=remaining {
        prefix.push(k);
        best_completion(
            tables,
            dim + 1,
            remaining - k,
            base + tables[dim][k],
            prefix,
            best,
        );
        prefix.pop();
    }
}

/// Exhaustive search over the grid `{k/resolution}` on the simplex.
pub fn grid_search_maxent(weights: &WeightVector, resolution: usize) -> Result<OracleReport> {
    let m = weights.len();
    if m > GRID_MAX_EVENTS {
        return domain(format!(
            "grid search is limited to m <= {GRID_MAX_EVENTS} events (got m = {m}); \
             the number of compositions grows as resolution^(m-1)"
        ));
    }
    if resolution < 10 {
        return domain(format!(
            "grid resolution must be at least 10, got {resolution}"
        ));
    }
    let n = resolution;
    let tables: Vec<Vec<f64>> = weights
        .weights()
        .iter()
        .map(|&b| {
            (0..=n)
                .map(|k| {
                    let p = k as f64 / n as f64;
                    if k == 0 {
                        0.0
                    } else {
                        -p * (b * p).ln()
                    }
                })
                .collect()
        })
        .collect();

    let composition = if m == 1 {
        vec![n]
    } else {
        (0..=n)
            .into_par_iter()
            .map(|k| {
                let mut prefix = vec![k];
                let mut best = (f64::NEG_INFINITY, Vec::new());
                best_completion(&tables, 1, n - k, tables[0][k], &mut prefix, &mut best);
                best
            })
            .reduce(
                || (f64::NEG_INFINITY, Vec::new()),
                |a, b| match a.0.total_cmp(&b.0) {
                    std::cmp::Ordering::Greater => a,
                    std::cmp::Ordering::Less => b,
                    std::cmp::Ordering::Equal => {
                        if a.1 <= b.1 {
                            a
                        } else {
                            b
                        }
                    }
                },
            )
            .1
    };

    let best_point =
        DiscreteDistribution::new(composition.iter().map(|&k| k as f64 / n as f64).collect())?;
    let best_value = nonsymmetric_entropy(&best_point, weights)?;
    let closed_form_value = solve_discrete_maxent(weights)?.max_entropy;
    Ok(OracleReport {
        best_point,
        best_value,
        closed_form_value,
        gap: closed_form_value - best_value,
        evaluations: binomial((n + m - 1) as u64, (m - 1) as u64),
    })
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Projected-gradient ascent on `S` with Barzilai–Borwein step lengths and an
/// Armijo backtracking safeguard, started from the uniform distribution.
pub fn projected_gradient_maxent(weights: &WeightVector, tol: f64) -> Result<OracleReport> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let b = weights.weights();
    let m = b.len();
    let mut p = vec![1.0 / m as f64; m];
    let mut value = raw_entropy(&p, b);
    let mut grad = entropy_gradient(&p, b);
    let mut step_length = 1.0;
    let mut last_step = f64::INFINITY;
    let mut evaluations = 1u64;

    for _ in 0..PG_MAX_ITERATIONS {
        let ascent: Vec<f64> = p.iter().zip(&grad).map(|(p, g)| p + g).collect();
        let pg_norm = linf(&project_simplex(&ascent), &p);
        if pg_norm < tol && last_step < tol {
            let best_point = DiscreteDistribution::new(p)?;
            let closed_form_value = solve_discrete_maxent(weights)?.max_entropy;
            return Ok(OracleReport {
                best_value: value,
                gap: closed_form_value - value,
                best_point,
                closed_form_value,
                evaluations,
            });
        }

        let trial: Vec<f64> = p
            .iter()
            .zip(&grad)
            .map(|(p, g)| p + step_length * g)
            .collect();
        let direction: Vec<f64> = project_simplex(&trial)
            .iter()
            .zip(&p)
            .map(|(q, p)| q - p)
            .collect();
        let slope: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();

        let mut t = 1.0;
        let mut next = p.clone();
        let mut next_value = value;
        for _ in 0..60 {
            next = p
                .iter()
                .zip(&direction)
                .map(|(p, d)| (p + t * d).max(0.0))
                .collect();
            next_value = raw_entropy(&next, b);
            evaluations += 1;
            if next_value >= value + 1e-4 * t * slope {
                break;
            }
            t *= 0.5;
        }
        let next_grad = entropy_gradient(&next, b);
        let s: Vec<f64> = next.iter().zip(&p).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let ss: f64 = s.iter().map(|x| x * x).sum();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        step_length = if sy < 0.0 {
            (ss / -sy).clamp(1e-10, 1e10)
        } else {
            1.0
        };
        last_step = linf(&next, &p);
        p = next;
        value = next_value;
        grad = next_grad;
    }
    Err(Error::NonConvergence {
        iterations: PG_MAX_ITERATIONS,
        detail: format!("projected-gradient ascent stopped at {p:?}"),
    })
}

/// Uniform points on the simplex from normalized exponential spacings.
pub fn sample_simplex(m: usize, count: usize, seed: u64) -> Result<Vec<DiscreteDistribution>> {
    if m == 0 || count == 0 {
        return domain("sample_simplex needs m >= 1 and count >= 1");
    }
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|_| {
            let e: Vec<f64> = (0..m).map(|_| rng.exponential()).collect();
            let total: f64 = e.iter().sum();
            DiscreteDistribution::new(e.into_iter().map(|x| x / total).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMaximumPrincipleReport {
    /// `max_p S(p) − S(p₀)` over the sampled points.
    pub max_violation: f64,
    /// Range of the cross term `−Σ p_i ln(β_i p₀_i)` over the sampled points.
    pub constancy_spread: f64,
    pub cross_term: f64,
    pub trials: usize,
}

/// Samples `trials` distributions and checks that the cross term against the
/// closed-form maximizer is constant and that no sample beats it.
pub fn maximum_principle_check_discrete(
    weights: &WeightVector,
    trials: usize,
    seed: u64,
) -> Result<DiscreteMaximumPrincipleReport> {
    if trials == 0 {
        return domain("trials must be at least 1");
    }
    let solution = solve_discrete_maxent(weights)?;
    let reference = nonsymmetric_entropy(&solution.maximizer, weights)?;
    let log_weighted: Vec<f64> = solution
        .maximizer
        .probs()
        .iter()
        .zip(weights.weights())
        .map(|(p, b)| (b * p).ln())
        .collect();
    let mut max_violation = f64::NEG_INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in sample_simplex(weights.len(), trials, seed)? {
        let s = nonsymmetric_entropy(&p, weights)?;
        max_violation = max_violation.max(s - reference);
        let cross: f64 = -p
            .probs()
            .iter()
            .zip(&log_weighted)
            .map(|(p, l)| p * l)
            .sum::<f64>();
        lo = lo.min(cross);
        hi = hi.max(cross);
    }
    Ok(DiscreteMaximumPrincipleReport {
        max_violation,
        constancy_spread: hi - lo,
        cross_term: 0.5 * (lo + hi),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    /// `max |analytic − central difference| / max(|analytic|, 1)`.
    pub max_relative_error: f64,
    pub points: usize,
}

/// Compares [`entropy_gradient`] with central differences (step 1e-6) at
/// random interior points, mixed 9:1 with the uniform point so every
/// coordinate stays at least `0.1/m` from the boundary.
pub fn gradient_check(weights: &WeightVector, points: usize, seed: u64) -> Result<GradientReport> {
    const STEP: f64 = 1e-6;
    let b = weights.weights();
    let m = b.len();
    let mut worst: f64 = 0.0;
    for d in sample_simplex(m, points.max(1), seed)? {
        let p: Vec<f64> = d.probs().iter().map(|x| 0.9 * x + 0.1 / m as f64).collect();
        let analytic = entropy_gradient(&p, b);
        for i in 0..m {
            let mut up = p.clone();
            let mut down = p.clone();
            up[i] += STEP;
            down[i] -= STEP;
            let fd = (raw_entropy(&up, b) - raw_entropy(&down, b)) / (2.0 * STEP);
            worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));
        }
    }
    Ok(GradientReport {
        max_relative_error: worst,
        points,
    })
}

/// A deterministic battery of weight vectors with `1 ≤ m ≤ max_m` and entries
/// in `[0.1, 10]`: a few hand-picked cases followed by log-uniform draws.
pub fn weight_battery(count: usize, max_m: usize, seed: u64) -> Vec<WeightVector> {
    let fixed: [&[f64]; 8] = [
        &[1.0, 1.0],
        &[1.0, 2.0],
        &[1.0, 2.0, 3.0],
        &[1.0, 1.0, 1.0, 1.0],
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        &[5.0, 5.0],
        &[0.1, 10.0],
        &[10.0, 0.1, 10.0, 0.1, 10.0],
    ];
    let mut rng = SplitMix64::new(seed);
    let mut out: Vec<WeightVector> = fixed
        .iter()
        .filter(|w| w.len() <= max_m)
        .take(count)
        .map(|w| WeightVector::new(w.to_vec()).expect("fixed battery weights are positive"))
        .collect();
    let mut i = 0;
    while out.len() < count {
        let m = 1 + i % max_m.max(1);
        let w = (0..m).map(|_| 10f64.powf(rng.uniform(-1.0, 1.0))).collect();
        out.push(WeightVector::new(w).expect("log-uniform weights are positive"));
        i += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Continuous checks
// ---------------------------------------------------------------------------

/// Double-exponential quadrature: tanh-sinh on finite intervals, exp-sinh on
/// half lines and sinh-sinh on the whole line.
pub fn de_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let node = |t: f64| -> (f64, f64) {
        let u = FRAC_PI_2 * t.sinh();
        let du = FRAC_PI_2 * t.cosh();
        match (a.is_finite(), b.is_finite()) {
            (true, true) => {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                let ch = u.cosh();
                (c + h * u.tanh(), h * du / (ch * ch))
            }
            (true, false) => (a + u.exp(), du * u.exp()),
            (false, true) => (b - u.exp(), du * u.exp()),
            (false, false) => (u.sinh(), du * u.cosh()),
        }
    };
    let span = if a.is_finite() && b.is_finite() {
        3.5
    } else {
        4.5
    };
    let term = |t: f64| {
        let (x, w) = node(t);
        if w == 0.0 || !w.is_finite() || x <= a || x >= b {
            return 0.0;
        }
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let steps = (span / h) as i64;
    let mut sum: f64 = (-steps..=steps).map(|k| term(k as f64 * h)).sum();
    let mut estimate = sum * h;
    for _ in 0..8 {
        h *= 0.5;
        let steps = (span / h) as i64;
        sum += (-steps..=steps)
            .filter(|k| k % 2 != 0)
            .map(|k| term(k as f64 * h))
            .sum::<f64>();
        let next = sum * h;
        let done = (next - estimate).abs() <= 1e-15 * next.abs().max(1e-300);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Constraint residuals of a solved density recomputed with [`de_integrate`].
pub fn independent_constraint_residuals(solution: &MultiplierSolution) -> Vec<f64> {
    let s = solution.support();
    let targets = [
        Some(1.0),
        solution.constraints.mean,
        solution.constraints.second_moment,
    ];
    targets
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.map(|t| (k, t)))
        .map(|(k, t)| {
            de_integrate(|x| solution.density(x) * x.powi(k as i32), s.lower, s.upper) - t
        })
        .collect()
}

/// `ρ₀·(1 + h)` with `h` a bounded combination of Cauchy bumps whose moments
/// against `ρ₀` vanish up to the order of the active constraints, so the
/// density stays in the same constraint class.
#[derive(Debug, Clone)]
pub struct Perturbation {
    centers: Vec<f64>,
    widths: Vec<f64>,
    coefficients: Vec<f64>,
}

impl Perturbation {
    pub fn shape(&self, x: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(&self.coefficients)
            .map(|((c, w), a)| a / (1.0 + ((x - c) / w).powi(2)))
            .sum()
    }

    /// Upper bound on `sup |h|`.
    pub fn bound(&self) -> f64 {
        self.coefficients.iter().map(|a| a.abs()).sum()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn scaled(mut self, amplitude: f64) -> Self {
        let k = amplitude / self.bound();
        for a in self.coefficients.iter_mut() {
            *a *= k;
        }
        self
    }
}

fn quadrature_for(solution: &MultiplierSolution) -> QuadratureConfig {
    let mut config = QuadratureConfig::default();
    if let crate::continuous::WeightKind::Power { alpha }
    | crate::continuous::WeightKind::ShiftedPower { alpha, .. } = solution.beta.kind()
    {
        if solution.lambda2.is_none() && !solution.support().is_bounded() && *alpha > 1.0 {
            config.tail_stretch = (2.0 / (alpha - 1.0)).clamp(1.0, 16.0);
        }
    }
    config
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (offset, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            rhs[col + 1 + offset] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / a[row][row];
    }
    Some(x)
}

/// Region carrying the bulk of `ρ₀`: table points whose density exceeds a
/// thousandth of the table maximum.
fn bulk_region(solution: &MultiplierSolution) -> (f64, f64) {
    let table = solution.density_table(512);
    let peak = table.iter().map(|p| p.1).fold(0.0, f64::max);
    let inside: Vec<f64> = table
        .iter()
        .filter(|p| p.1 >= 1e-3 * peak)
        .map(|p| p.0)
        .collect();
    let lo = inside.first().copied().unwrap_or(0.0);
    let hi = inside.last().copied().unwrap_or(1.0);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    }
}

/// Builds a random in-class perturbation with `sup |h| ≤ amplitude`.
pub fn random_perturbation(
    solution: &MultiplierSolution,
    rng: &mut SplitMix64,
    amplitude: f64,
) -> Result<Perturbation> {
    let orders = solution.constraint_residuals.len();
    let extra = 3;
    let (lo, hi) = bulk_region(solution);
    let span = hi - lo;
    let n = orders + extra;
    let centers: Vec<f64> = (0..n).map(|_| rng.uniform(lo, hi)).collect();
    let widths: Vec<f64> = (0..n).map(|_| span * rng.uniform(0.05, 0.5)).collect();
    let s = solution.support();
    let config = quadrature_for(solution);

    // moments[k][j] = ∫ ρ₀ φ_j x^k
    let mut moments = vec![vec![0.0; n]; orders];
    for j in 0..n {
        let (c, w) = (centers[j], widths[j]);
        let r = integrate(
            |x| {
                let v = solution.density(x) / (1.0 + ((x - c) / w).powi(2));
                match orders {
                    1 => [v, 0.0, 0.0],
                    2 => [v, v * x, 0.0],
                    _ => [v, v * x, v * x * x],
                }
            },
            s.lower,
            s.upper,
            &[c],
            &config,
        );
        for (k, row) in moments.iter_mut().enumerate() {
            row[j] = r.value[k];
        }
    }
    let free: Vec<f64> = (0..extra).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let a: Vec<Vec<f64>> = moments.iter().map(|row| row[..orders].to_vec()).collect();
    let rhs: Vec<f64> = moments
        .iter()
        .map(|row| {
            -row[orders..]
                .iter()
                .zip(&free)
                .map(|(m, c)| m * c)
                .sum::<f64>()
        })
        .collect();
    let fixed = solve_dense(a, rhs).ok_or_else(|| {
        Error::Domain("perturbation moment system is singular; try another seed".into())
    })?;
    let mut coefficients = fixed;
    coefficients.extend(free);
    Ok(Perturbation {
        centers,
        widths,
        coefficients,
    }
    .scaled(amplitude))
}

/// `−∫ ρ ln(β ρ₀)`, which the maximum principle requires to be the same for
/// every `ρ` in the constraint class.
pub fn cross_entropy<F: Fn(f64) -> f64>(solution: &MultiplierSolution, density: F) -> f64 {
    let s = solution.support();
    integrate(
        |x| [-density(x) * solution.log_weighted_density(x)],
        s.lower,
        s.upper,
        &[],
        &quadrature_for(solution),
    )
    .value[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousMaximumPrincipleReport {
    /// `S(ρ₀)`.
    pub reference_entropy: f64,
    /// `max S(ρ) − S(ρ₀)` over the perturbed densities.
    pub max_violation: f64,
    /// Range of [`cross_entropy`] over the perturbed densities.
    pub constancy_spread: f64,
    pub densities: usize,
}

/// Evaluates `count` random in-class perturbations `ρ₀(1 + h)` of a solved
/// density, with `sup |h|` drawn from `[0.05, 0.5]`.
pub fn maximum_principle_check_continuous(
    solution: &MultiplierSolution,
    count: usize,
    seed: u64,
) -> Result<ContinuousMaximumPrincipleReport> {
    if count == 0 {
        return domain("count must be at least 1");
    }
    let config = quadrature_for(solution);
    let reference_entropy =
        continuous_entropy_with(|x| solution.density(x), &solution.beta, &[], &config)?;
    let mut rng = SplitMix64::new(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..count {
        let amplitude = rng.uniform(0.05, 0.5);
        let h = random_perturbation(solution, &mut rng, amplitude)?;
        let rho = |x: f64| solution.density(x) * (1.0 + h.shape(x));
        let s = continuous_entropy_with(rho, &solution.beta, h.centers(), &config)?;
        max_violation = max_violation.max(s - reference_entropy);
        let cross = cross_entropy(solution, rho);
        lo = lo.min(cross);
        hi = hi.max(cross);
    }
    Ok(ContinuousMaximumPrincipleReport {
        reference_entropy,
        max_violation,
        constancy_spread: hi - lo,
        densities: count,
    })
}

/// `|S(ρ₀ + εη) − S(ρ₀)| / ε²` for each `ε`, with `η = ρ₀·h` an in-class
/// direction. Roughly constant in `ε` when `ρ₀` is a stationary point.
pub fn second_order_ratios(
    solution: &MultiplierSolution,
    epsilons: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let config = quadrature_for(solution);
    let mut rng = SplitMix64::new(seed);
    let h = random_perturbation(solution, &mut rng, 1.0)?;
    let base = continuous_entropy_with(
        |x| solution.density(x),
        &solution.beta,
        h.centers(),
        &config,
    )?;
    epsilons
        .iter()
        .map(|&eps| {
            let s = continuous_entropy_with(
                |x| solution.density(x) * (1.0 + eps * h.shape(x)),
                &solution.beta,
                h.centers(),
                &config,
            )?;
            Ok((s - base).abs() / (eps * eps))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::{solve_with_mean, Support, WeightFunction};

    fn w(b: &[f64]) -> WeightVector {
        WeightVector::new(b.to_vec()).unwrap()
    }

    #[test]
    fn grid_examples() {
        let r = grid_search_maxent(&w(&[1.0, 1.0]), 400).unwrap();
        assert_eq!(r.best_point.probs(), &[0.5, 0.5]);
        assert!(r.gap.abs() <= 1e-5);

        let r = grid_search_maxent(&w(&[1.0, 2.0]), 400).unwrap();
        assert!((r.best_point.probs()[0] - 0.6675).abs() < 1e-12);
        assert!(r.gap >= -1e-9 && r.gap <= 5e-6);
        assert_eq!(r.evaluations, 401);

        let r = grid_search_maxent(&w(&[1.0, 2.0, 3.0]), 200).unwrap();
        let target = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        let dist = r
            .best_point
            .probs()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dist <= 5e-3);
        assert_eq!(r.evaluations, 201 * 202 / 2);
    }

    #[test]
    fn grid_guards() {
        assert!(grid_search_maxent(&w(&[1.0; 7]), 20).is_err());
        assert!(grid_search_maxent(&w(&[1.0; 2]), 9).is_err());
        let r = grid_search_maxent(&w(&[4.0]), 10).unwrap();
        assert_eq!(r.best_point.probs(), &[1.0]);
        assert!(r.gap.abs() < 1e-15);
    }

    #[test]
    fn grid_matches_brute_force_listing() {
        // m = 3 at a coarse grid, cross-checked against a naive double loop.
        let weights = w(&[0.7, 3.0, 1.3]);
        let n = 30;
        let mut best = (f64::NEG_INFINITY, [0usize; 3]);
        for i in 0..=n {
            for j in 0..=n - i {
                let p = [i, j, n - i - j].map(|k| k as f64 / n as f64);
                let s = raw_entropy(&p, weights.weights());
                if s > best.0 {
                    best = (s, [i, j, n - i - j]);
                }
            }
        }
        let r = grid_search_maxent(&weights, n).unwrap();
        let expected: Vec<f64> = best.1.iter().map(|&k| k as f64 / n as f64).collect();
        assert_eq!(r.best_point.probs(), expected.as_slice());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, -0.2, 0.9]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|x| *x >= 0.0));
        assert!((p[0] - 0.2).abs() < 1e-15 && p[1] == 0.0 && (p[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn projected_gradient_examples() {
        let r = projected_gradient_maxent(&w(&[1.0, 2.0]), 1e-8).unwrap();
        assert!((r.best_point.probs()[0] - 2.0 / 3.0).abs() < 1e-7);
        let r = projected_gradient_maxent(&w(&[1.0; 4]), 1e-8).unwrap();
        assert!(r.best_point.probs().iter().all(|p| (p - 0.25).abs() < 1e-7));
        let r = projected_gradient_maxent(&w(&[1.0, 2.0, 3.0, 4.0, 5.0]), 1e-8).unwrap();
        for (i, p) in r.best_point.probs().iter().enumerate() {
            let expected = 60.0 / 137.0 / (i + 1) as f64;
            assert!((p - expected).abs() < 1e-7, "{i}: {p} vs {expected}");
        }
        assert!(projected_gradient_maxent(&w(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn sampling_examples() {
        for p in sample_simplex(1, 5, 9).unwrap() {
            assert_eq!(p.probs(), &[1.0]);
        }
        let pts = sample_simplex(3, 1000, 42).unwrap();
        for i in 0..3 {
            let mean = pts.iter().map(|p| p.probs()[i]).sum::<f64>() / 1000.0;
            assert!((mean - 1.0 / 3.0).abs() < 0.02, "coordinate {i}: {mean}");
        }
        assert_eq!(
            sample_simplex(4, 10, 5).unwrap(),
            sample_simplex(4, 10, 5).unwrap()
        );
        assert_ne!(
            sample_simplex(4, 10, 5).unwrap(),
            sample_simplex(4, 10, 6).unwrap()
        );
        assert!(sample_simplex(0, 1, 1).is_err());
    }

    #[test]
    fn maximum_principle_examples() {
        let r = maximum_principle_check_discrete(&w(&[1.0, 2.0]), 1000, 3).unwrap();
        assert!(r.max_violation <= 1e-12 && r.constancy_spread <= 1e-12);
        assert!((r.cross_term - 1.5f64.ln()).abs() < 1e-12);

        let r = maximum_principle_check_discrete(&w(&[1.0; 3]), 100, 4).unwrap();
        assert!((r.cross_term - 3f64.ln()).abs() < 1e-12);
        assert!(r.constancy_spread <= 1e-12);

        let r = maximum_principle_check_discrete(&w(&[5.0, 5.0]), 100, 5).unwrap();
        assert!((r.cross_term - 0.4f64.ln()).abs() < 1e-12);
        assert!(r.max_violation <= 1e-12);
        assert!(maximum_principle_check_discrete(&w(&[1.0]), 0, 1).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let r = gradient_check(&w(&[0.3, 1.0, 7.0]), 50, 11).unwrap();
        assert!(r.max_relative_error < 1e-5);
    }

    #[test]
    fn battery_shape() {
        let b = weight_battery(50, 5, 1);
        assert_eq!(b.len(), 50);
        assert!(b.iter().all(|w| (1..=5).contains(&w.len())));
        assert!(b
            .iter()
            .flat_map(|w| w.weights().to_vec())
            .all(|x| (0.1..=10.0).contains(&x)));
        assert_eq!(b, weight_battery(50, 5, 1));
    }

    #[test]
    fn double_exponential_rules() {
        use std::f64::consts::PI;
        assert!((de_integrate(|x| x.sin(), 0.0, PI) - 2.0).abs() < 1e-14);
        assert!((de_integrate(|x| (-x).exp(), 0.0, f64::INFINITY) - 1.0).abs() < 1e-13);
        assert!((de_integrate(|x| x.exp(), f64::NEG_INFINITY, 0.0) - 1.0).abs() < 1e-13);
        let g = de_integrate(|x| (-x * x / 2.0).exp(), f64::NEG_INFINITY, f64::INFINITY);
        assert!((g - (2.0 * PI).sqrt()).abs() < 1e-13);
        assert!((de_integrate(|x| x.powf(-2.5), 1.0, f64::INFINITY) - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn perturbations_stay_in_class() {
        let beta = WeightFunction::constant(1.0, Support::half_line(0.0).unwrap()).unwrap();
        let sol = solve_with_mean(&beta, 2.0).unwrap();
        let mut rng = SplitMix64::new(8);
        let h = random_perturbation(&sol, &mut rng, 0.3).unwrap();
        assert!(h.bound() <= 0.3 + 1e-15);
        let mass = de_integrate(|x| sol.density(x) * h.shape(x), 0.0, f64::INFINITY);
        let mean = de_integrate(|x| x * sol.density(x) * h.shape(x), 0.0, f64::INFINITY);
        assert!(mass.abs() < 1e-11 && mean.abs() < 1e-10, "{mass} {mean}");
    }

    #[test]
    fn continuous_maximum_principle() {
        let beta = WeightFunction::constant(1.0, Support::real_line()).unwrap();
        let sol = crate::continuous::solve_with_mean_and_second_moment(&beta, 0.0, 1.0).unwrap();
        let r = maximum_principle_check_continuous(&sol, 20, 3).unwrap();
        assert!(
            r.max_violation <= 1e-7 && r.constancy_spread <= 1e-6,
            "{r:?}"
        );
        assert!(
            (r.reference_entropy - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
                .abs()
                < 1e-10
        );
        let k = second_order_ratios(&sol, &[1e-2, 1e-3, 1e-4], 4).unwrap();
        assert!(k.iter().all(|v| (v / k[0] - 1.0).abs() < 0.05), "{k:?}");
        for r in independent_constraint_residuals(&sol) {
            assert!(r.abs() < 1e-12);
        }
    }
}
