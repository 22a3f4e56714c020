//! Maximal nonsymmetric entropy densities on an interval.
//!
//! Maximizing `S(ρ) = −∫ ρ ln(βρ)` subject to normalization and optional
//! mean / raw second moment constraints gives
//!
//! ```text
//! ρ₀(x) = exp(1 − λ₁ − λ₂x − λ₃x²) / β(x)
//! ```
//!
//! `λ₁` is fixed by normalization, `λ₁ = 1 + ln ∫ exp(−λ₂x − λ₃x²)/β`, so the
//! search runs over `(λ₂, λ₃)` only. The remaining equations are the gradient of
//! the convex dual `D(λ) = ln Z(λ) + λ₂μ + λ₃σ²`, whose Hessian is the covariance
//! of `(x, x²)` under `ρ₀`; damped Newton on that map converges from the
//! moment-matched starting point in a handful of steps.

use std::fmt;
use std::str::FromStr;

use crate::entropy::WeightFamily;
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, Integral, QuadratureConfig};

/// Residual bound every successful solve satisfies.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Mass tolerance accepted by [`continuous_entropy`].
pub const DENSITY_MASS_TOLERANCE: f64 = 1e-6;
const MAX_NEWTON_ITERATIONS: usize = 100;
const GRADIENT_TARGET: f64 = 1e-12;

/// Closed interval `[lower, upper]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
}

impl Support {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper || lower == f64::INFINITY {
            return domain(format!(
                "support [{lower}, {upper}] must satisfy lower < upper"
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn half_line(lower: f64) -> Result<Self> {
        Self::new(lower, f64::INFINITY)
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

/// Parses `a,b` where either end may be `inf` / `-inf`.
impl FromStr for Support {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_end = |t: &str| -> Result<f64> {
            match t.trim() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => other.parse().map_err(|_| {
                    Error::Input(format!("support bound {other:?} is not a real or inf"))
                }),
            }
        };
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Input(format!("support {s:?} must be written a,b")))?;
        Self::new(parse_end(a)?, parse_end(b)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    Constant {
        c: f64,
    },
    /// `β(x) = x^α`.
    Power {
        alpha: f64,
    },
    /// `β(x) = (x + γ)^α`.
    ShiftedPower {
        alpha: f64,
        gamma: f64,
    },
    /// Linear interpolation through `(x, β)` knots.
    Tabulated {
        xs: Vec<f64>,
        betas: Vec<f64>,
    },
}

/// A positive weight function `β(x)` together with the support it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    kind: WeightKind,
    support: Support,
}

impl WeightFunction {
    pub fn constant(c: f64, support: Support) -> Result<Self> {
        Self::from_family(WeightFamily::constant(c)?, support)
    }

    pub fn power(alpha: f64, support: Support) -> Result<Self> {
        Self::from_family(WeightFamily::power(alpha)?, support)
    }

    pub fn shifted_power(alpha: f64, gamma: f64, support: Support) -> Result<Self> {
        if !(alpha.is_finite() && gamma.is_finite()) {
            return domain("shifted-power parameters must be finite");
        }
        Self::build(WeightKind::ShiftedPower { alpha, gamma }, support)
    }

    /// Maps a discrete family expression onto the real line. The continuous
    /// shifted power only needs `x + γ > 0` on the support.
    pub fn from_family(family: WeightFamily, support: Support) -> Result<Self> {
        let kind = match family {
            WeightFamily::Constant { c } => WeightKind::Constant { c },
            WeightFamily::Power { alpha } => WeightKind::Power { alpha },
            WeightFamily::ShiftedPower { alpha, gamma } => {
                WeightKind::ShiftedPower { alpha, gamma }
            }
        };
        Self::build(kind, support)
    }

    /// Piecewise-linear `β` through the given knots; the support is the knot range.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return domain("a tabulated weight needs at least two knots");
        }
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return domain("tabulated knots must be strictly increasing in x");
        }
        if points
            .iter()
            .any(|&(x, b)| !x.is_finite() || !b.is_finite() || b <= 0.0)
        {
            return domain("tabulated knots must be finite with positive weights");
        }
        let support = Support::new(points[0].0, points[points.len() - 1].0)?;
        Self::build(
            WeightKind::Tabulated {
                xs: points.iter().map(|p| p.0).collect(),
                betas: points.iter().map(|p| p.1).collect(),
            },
            support,
        )
    }

    fn build(kind: WeightKind, support: Support) -> Result<Self> {
        match &kind {
            WeightKind::Constant { c } if !(c.is_finite() && *c > 0.0) => {
                return domain(format!("constant weight must be finite and > 0, got {c}"));
            }
            WeightKind::Power { .. } if !(support.lower.is_finite() && support.lower > 0.0) => {
                return domain(format!(
                    "x^alpha needs a support with lower bound > 0, got {support}"
                ));
            }
            WeightKind::ShiftedPower { gamma, .. }
                if !(support.lower.is_finite() && support.lower + gamma > 0.0) =>
            {
                return domain(format!(
                    "(x+gamma)^alpha needs lower bound + gamma > 0, got {support} with gamma={gamma}"
                ));
            }
            WeightKind::Tabulated { .. } if !support.is_bounded() => {
                return domain("tabulated weights require a bounded support");
            }
            _ => {}
        }
        Ok(Self { kind, support })
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            WeightKind::Constant { c } => *c,
            WeightKind::Power { alpha } => x.powf(*alpha),
            WeightKind::ShiftedPower { alpha, gamma } => (x + gamma).powf(*alpha),
            WeightKind::Tabulated { xs, betas } => {
                let i = xs.partition_point(|&k| k <= x).clamp(1, xs.len() - 1);
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                betas[i - 1] + t * (betas[i] - betas[i - 1])
            }
        }
    }

    pub fn ln_value(&self, x: f64) -> f64 {
        match &self.kind {
            WeightKind::Constant { c } => c.ln(),
            WeightKind::Power { alpha } => alpha * x.ln(),
            WeightKind::ShiftedPower { alpha, gamma } => alpha * (x + gamma).ln(),
            WeightKind::Tabulated { .. } => self.value(x).ln(),
        }
    }

    /// Interior knots where `β` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            WeightKind::Tabulated { xs, .. } => xs[1..xs.len() - 1].to_vec(),
            _ => Vec::new(),
        }
    }

    /// Exponent `q` with `β(x) ~ x^q` as `|x| → ∞`.
    fn tail_exponent(&self) -> f64 {
        match &self.kind {
            WeightKind::Power { alpha } | WeightKind::ShiftedPower { alpha, .. } => *alpha,
            _ => 0.0,
        }
    }

    /// Text form for reports: the family expression or `table:<n knots>`.
    pub fn describe(&self) -> String {
        match &self.kind {
            WeightKind::Constant { c } => WeightFamily::Constant { c: *c }.to_string(),
            WeightKind::Power { alpha } => WeightFamily::Power { alpha: *alpha }.to_string(),
            WeightKind::ShiftedPower { alpha, gamma } => WeightFamily::ShiftedPower {
                alpha: *alpha,
                gamma: *gamma,
            }
            .to_string(),
            WeightKind::Tabulated { xs, .. } => format!("table:{}", xs.len()),
        }
    }
}

/// Moment constraints beyond normalization. `second_moment` is the raw
/// moment `∫x²ρ`, not the variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConstraintSet {
    pub mean: Option<f64>,
    pub second_moment: Option<f64>,
}

impl ConstraintSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_mean(mean: f64) -> Self {
        Self {
            mean: Some(mean),
            second_moment: None,
        }
    }

    pub fn with_moments(mean: f64, second_moment: f64) -> Self {
        Self {
            mean: Some(mean),
            second_moment: Some(second_moment),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mean, self.second_moment) {
            (None, Some(_)) => Err(Error::Input(
                "a second-moment constraint requires a mean constraint".into(),
            )),
            (Some(mu), _) if !mu.is_finite() => domain(format!("mean must be finite, got {mu}")),
            (Some(mu), Some(s2)) if !(s2.is_finite() && s2 - mu * mu > 0.0) => {
                Err(Error::Infeasible(format!(
                    "second moment {s2} must exceed mean^2 = {} (variance must be positive)",
                    mu * mu
                )))
            }
            _ => Ok(()),
        }
    }

    fn target(&self) -> [f64; 2] {
        [self.mean.unwrap_or(0.0), self.second_moment.unwrap_or(0.0)]
    }
}

/// Solved multipliers of `ρ₀(x) = exp(1 − λ₁ − λ₂x − λ₃x²)/β(x)` plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSolution {
    pub lambda1: f64,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    /// `[∫ρ₀ − 1, ∫xρ₀ − μ, ∫x²ρ₀ − σ²]`, truncated to the active constraints.
    pub constraint_residuals: Vec<f64>,
    pub quadrature_error_estimate: f64,
    pub iterations: usize,
    pub beta: WeightFunction,
    pub constraints: ConstraintSet,
}

impl MultiplierSolution {
    /// `ln(β(x)ρ₀(x)) = 1 − λ₁ − λ₂x − λ₃x²`.
    pub fn log_weighted_density(&self, x: f64) -> f64 {
        1.0 - self.lambda1 - self.lambda2.unwrap_or(0.0) * x - self.lambda3.unwrap_or(0.0) * x * x
    }

    pub fn density(&self, x: f64) -> f64 {
        if !self.beta.support().contains(x) {
            return 0.0;
        }
        (self.log_weighted_density(x) - self.beta.ln_value(x)).exp()
    }

    /// `exp(1 − λ₁)`, the constant in front of `exp(−λ₂x − λ₃x²)/β(x)`.
    pub fn prefactor(&self) -> f64 {
        (1.0 - self.lambda1).exp()
    }

    pub fn support(&self) -> Support {
        self.beta.support()
    }

    /// `S(ρ₀)` by quadrature.
    pub fn entropy(&self) -> Result<f64> {
        continuous_entropy(|x| self.density(x), &self.beta)
    }

    /// Sample points for plotting: log-spaced offsets from the finite end on
    /// half lines, linear elsewhere.
    pub fn table_points(&self, points: usize) -> Vec<f64> {
        let s = self.support();
        if points == 0 {
            return Vec::new();
        }
        if points == 1 {
            return vec![if s.lower.is_finite() {
                s.lower
            } else if s.upper.is_finite() {
                s.upper
            } else {
                0.0
            }];
        }
        let linear = |a: f64, b: f64| -> Vec<f64> {
            (0..points)
                .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
                .collect()
        };
        let log_offsets = |unit: f64| -> Vec<f64> {
            let mut v = vec![0.0];
            v.extend((0..points - 1).map(|i| {
                let e = -3.0 + 7.0 * i as f64 / (points - 2).max(1) as f64;
                unit * 10f64.powf(e)
            }));
            v
        };
        match (s.lower.is_finite(), s.upper.is_finite()) {
            (true, true) => linear(s.lower, s.upper),
            (true, false) => {
                let unit = s.lower.abs().max(1.0);
                log_offsets(unit).into_iter().map(|d| s.lower + d).collect()
            }
            (false, true) => {
                let unit = s.upper.abs().max(1.0);
                let mut v: Vec<f64> = log_offsets(unit).into_iter().map(|d| s.upper - d).collect();
                v.reverse();
                v
            }
            (false, false) => {
                let (center, half) = match (self.lambda2, self.lambda3) {
                    (l2, Some(l3)) if l3 > 0.0 => {
                        (-l2.unwrap_or(0.0) / (2.0 * l3), 10.0 / (2.0 * l3).sqrt())
                    }
                    _ => (0.0, 50.0),
                };
                linear(center - half, center + half)
            }
        }
    }

    /// `(x, ρ₀(x))` pairs at [`Self::table_points`].
    pub fn density_table(&self, points: usize) -> Vec<(f64, f64)> {
        self.table_points(points)
            .into_iter()
            .map(|x| (x, self.density(x)))
            .collect()
    }
}

/// Whether `exp(−λ₂x − λ₃x²)·x^k/β(x)` is integrable over the support.
fn integrable(beta: &WeightFunction, l2: f64, l3: f64, k: u32) -> bool {
    let s = beta.support();
    let tail_ok = |sign: f64| {
        // sign = +1 for the +∞ end, −1 for −∞: exponent behaves like −λ₃x² − sign·λ₂|x|.
        if l3 != 0.0 {
            l3 > 0.0
        } else if sign * l2 != 0.0 {
            sign * l2 > 0.0
        } else {
            beta.tail_exponent() - k as f64 > 1.0
        }
    };
    (s.upper.is_finite() || tail_ok(1.0)) && (s.lower.is_finite() || tail_ok(-1.0))
}

fn non_finite_weight_message(beta: &WeightFunction) -> String {
    format!(
        "normalization integral of 1/beta(x) for beta = {} over {} diverges",
        beta.describe(),
        beta.support()
    )
}

/// Moments of the unnormalized kernel `exp(−λ₂x − λ₃x²)/β(x)`.
#[derive(Debug, Clone, Copy)]
struct KernelMoments {
    /// `ln Z`.
    log_z: f64,
    /// `E[x^k]` for `k = 1..=4` under the normalized kernel.
    m: [f64; 4],
    /// Largest quadrature error estimate, relative to `Z`.
    rel_error: f64,
}

fn kernel_shift(support: Support, l2: f64, l3: f64) -> f64 {
    let poly = |x: f64| -l2 * x - l3 * x * x;
    let mut candidates = Vec::new();
    for end in [support.lower, support.upper] {
        if end.is_finite() {
            candidates.push(poly(end));
        }
    }
    if l3 > 0.0 {
        let vertex = -l2 / (2.0 * l3);
        if support.contains(vertex) {
            candidates.push(poly(vertex));
        }
    }
    candidates
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(-700.0, 700.0)
}

/// Points where the kernel varies on its natural scale, used to seed panels.
fn kernel_breakpoints(beta: &WeightFunction, l2: f64, l3: f64) -> Vec<f64> {
    let s = beta.support();
    let mut pts = beta.breakpoints();
    if l3 > 0.0 {
        let center = -l2 / (2.0 * l3);
        let sd = (0.5 / l3).sqrt();
        for k in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
            pts.push(center + k * sd);
        }
    } else if l2 != 0.0 {
        let scale = 1.0 / l2.abs();
        let origin = if l2 > 0.0 { s.lower } else { s.upper };
        if origin.is_finite() {
            let dir = l2.signum();
            for k in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
                pts.push(origin + dir * k * scale);
            }
        }
    }
    pts.retain(|x| x.is_finite() && *x > s.lower && *x < s.upper);
    pts
}

/// Largest error estimate, relative to the integral, accepted when the
/// adaptive pass stops on its depth cap instead of its tolerance.
const ACCEPTABLE_RELATIVE_ERROR: f64 = 1e-9;

/// Quadrature settings for the kernel: purely algebraic tails get a stretched
/// half-line map so the mapped integrand stays bounded at the far end.
fn kernel_config(
    beta: &WeightFunction,
    l2: f64,
    l3: f64,
    order: u32,
    base: &QuadratureConfig,
) -> QuadratureConfig {
    let s = beta.support();
    let algebraic = l2 == 0.0 && l3 == 0.0 && !s.is_bounded();
    let excess = beta.tail_exponent() - order as f64 - 1.0;
    let tail_stretch = if algebraic && excess > 0.0 {
        (2.0 / excess).clamp(1.0, 16.0)
    } else {
        base.tail_stretch
    };
    QuadratureConfig {
        tail_stretch,
        ..*base
    }
}

/// Normalizer and the first `order` raw moments of the kernel.
fn kernel_moments(
    beta: &WeightFunction,
    l2: f64,
    l3: f64,
    order: u32,
    config: &QuadratureConfig,
) -> Option<KernelMoments> {
    if !integrable(beta, l2, l3, order) {
        return None;
    }
    let s = beta.support();
    let shift = kernel_shift(s, l2, l3);
    let kernel = |x: f64| {
        let w = (-l2 * x - l3 * x * x - shift - beta.ln_value(x)).exp();
        let mut out = [w, 0.0, 0.0, 0.0, 0.0];
        for k in 1..=order as usize {
            out[k] = out[k - 1] * x;
        }
        out
    };
    let config = kernel_config(beta, l2, l3, order, config);
    let r: Integral<5> = integrate(
        kernel,
        s.lower,
        s.upper,
        &kernel_breakpoints(beta, l2, l3),
        &config,
    );
    let z = r.value[0];
    if !r.is_finite() || !(z > 0.0) {
        return None;
    }
    if !r.converged && r.max_error() > ACCEPTABLE_RELATIVE_ERROR * z {
        return None;
    }
    Some(KernelMoments {
        log_z: shift + z.ln(),
        m: [
            r.value[1] / z,
            r.value[2] / z,
            r.value[3] / z,
            r.value[4] / z,
        ],
        rel_error: r.max_error() / z,
    })
}

/// Integrates `[ρ₀, xρ₀, x²ρ₀]` for a finished solution and returns the
/// constraint residuals and the largest error estimate.
fn constraint_residuals(
    beta: &WeightFunction,
    lambda1: f64,
    l2: f64,
    l3: f64,
    constraints: &ConstraintSet,
    config: &QuadratureConfig,
) -> (Vec<f64>, f64) {
    let s = beta.support();
    let active =
        1 + constraints.mean.is_some() as usize + constraints.second_moment.is_some() as usize;
    let config = &kernel_config(beta, l2, l3, active as u32 - 1, config);
    let density = |x: f64| (1.0 - lambda1 - l2 * x - l3 * x * x - beta.ln_value(x)).exp();
    let r: Integral<3> = if active == 1 {
        let r = integrate(
            |x| [density(x)],
            s.lower,
            s.upper,
            &kernel_breakpoints(beta, l2, l3),
            config,
        );
        Integral {
            value: [r.value[0], 0.0, 0.0],
            error: [r.error[0], 0.0, 0.0],
            panels: r.panels,
            converged: r.converged,
        }
    } else {
        integrate(
            |x| {
                let d = density(x);
                [d, d * x, d * x * x]
            },
            s.lower,
            s.upper,
            &kernel_breakpoints(beta, l2, l3),
            config,
        )
    };
    let target = constraints.target();
    let residuals = (0..active)
        .map(|k| {
            if k == 0 {
                r.value[0] - 1.0
            } else {
                r.value[k] - target[k - 1]
            }
        })
        .collect();
    (residuals, r.max_error())
}

/// The unconstrained maximizer `ρ₀ = C/β` with `C = 1/∫(1/β)`.
pub fn solve_unconstrained(beta: &WeightFunction) -> Result<MultiplierSolution> {
    solve_unconstrained_with(beta, &QuadratureConfig::default())
}

pub fn solve_unconstrained_with(
    beta: &WeightFunction,
    config: &QuadratureConfig,
) -> Result<MultiplierSolution> {
    if !integrable(beta, 0.0, 0.0, 0) {
        return Err(Error::Infeasible(non_finite_weight_message(beta)));
    }
    let moments = kernel_moments(beta, 0.0, 0.0, 0, config)
        .ok_or_else(|| Error::Infeasible(non_finite_weight_message(beta)))?;
    let lambda1 = 1.0 + moments.log_z;
    finish(
        beta,
        lambda1,
        None,
        None,
        ConstraintSet::none(),
        0,
        moments.rel_error,
        config,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    beta: &WeightFunction,
    lambda1: f64,
    lambda2: Option<f64>,
    lambda3: Option<f64>,
    constraints: ConstraintSet,
    iterations: usize,
    rel_error: f64,
    config: &QuadratureConfig,
) -> Result<MultiplierSolution> {
    let (residuals, err) = constraint_residuals(
        beta,
        lambda1,
        lambda2.unwrap_or(0.0),
        lambda3.unwrap_or(0.0),
        &constraints,
        config,
    );
    if residuals.iter().any(|r| !(r.abs() <= RESIDUAL_TOLERANCE)) {
        return Err(Error::Infeasible(format!(
            "constraint residuals {residuals:?} exceed {RESIDUAL_TOLERANCE:e} \
             (lambda1={lambda1}, lambda2={lambda2:?}, lambda3={lambda3:?})"
        )));
    }
    Ok(MultiplierSolution {
        lambda1,
        lambda2,
        lambda3,
        constraint_residuals: residuals,
        quadrature_error_estimate: err.max(rel_error),
        iterations,
        beta: beta.clone(),
        constraints,
    })
}

/// Maximizer under a mean constraint `∫xρ = μ`.
pub fn solve_with_mean(beta: &WeightFunction, mu: f64) -> Result<MultiplierSolution> {
    solve_constrained(
        beta,
        ConstraintSet::with_mean(mu),
        &QuadratureConfig::default(),
    )
}

/// Maximizer under `∫xρ = μ` and `∫x²ρ = σ²` (raw second moment).
pub fn solve_with_mean_and_second_moment(
    beta: &WeightFunction,
    mu: f64,
    sigma2: f64,
) -> Result<MultiplierSolution> {
    solve_constrained(
        beta,
        ConstraintSet::with_moments(mu, sigma2),
        &QuadratureConfig::default(),
    )
}

/// Dispatches on which constraints are present.
pub fn solve(beta: &WeightFunction, constraints: ConstraintSet) -> Result<MultiplierSolution> {
    match constraints.mean {
        None if constraints.second_moment.is_none() => solve_unconstrained(beta),
        _ => solve_constrained(beta, constraints, &QuadratureConfig::default()),
    }
}

fn check_moment_feasibility(support: Support, constraints: &ConstraintSet) -> Result<()> {
    constraints.validate()?;
    let Some(mu) = constraints.mean else {
        return Ok(());
    };
    if !(mu > support.lower && mu < support.upper) {
        return Err(Error::Infeasible(format!(
            "mean {mu} is not in the interior of the support {support}"
        )));
    }
    if let Some(s2) = constraints.second_moment {
        let var = s2 - mu * mu;
        if support.is_bounded() && var >= (mu - support.lower) * (support.upper - mu) {
            return Err(Error::Infeasible(format!(
                "variance {var} exceeds the largest variance achievable on {support} with mean {mu}"
            )));
        }
    }
    Ok(())
}

fn initial_guess(support: Support, constraints: &ConstraintSet) -> Result<(f64, f64)> {
    let mu = constraints.mean.unwrap_or(0.0);
    match constraints.second_moment {
        Some(s2) => {
            let l3 = 1.0 / (2.0 * (s2 - mu * mu));
            Ok((-2.0 * l3 * mu, l3))
        }
        None => match (support.lower.is_finite(), support.upper.is_finite()) {
            (true, true) => Ok((0.0, 0.0)),
            (true, false) => Ok((1.0 / (mu - support.lower), 0.0)),
            (false, true) => Ok((-1.0 / (support.upper - mu), 0.0)),
            (false, false) => Err(Error::Infeasible(format!(
                "a mean constraint alone admits no normalizable maximizer on {support}; \
                 exp(-lambda2 x) diverges at one end for every lambda2"
            ))),
        },
    }
}

struct Evaluation {
    lambda: (f64, f64),
    moments: KernelMoments,
    gradient: [f64; 2],
    norm: f64,
}

fn evaluate(
    beta: &WeightFunction,
    lambda: (f64, f64),
    dims: usize,
    target: [f64; 2],
    config: &QuadratureConfig,
) -> Option<Evaluation> {
    let moments = kernel_moments(beta, lambda.0, lambda.1, 2 * dims as u32, config)?;
    let mut gradient = [target[0] - moments.m[0], target[1] - moments.m[1]];
    if dims == 1 {
        gradient[1] = 0.0;
    }
    let norm = gradient[0].abs().max(gradient[1].abs());
    norm.is_finite().then_some(Evaluation {
        lambda,
        moments,
        gradient,
        norm,
    })
}

fn solve_constrained(
    beta: &WeightFunction,
    constraints: ConstraintSet,
    config: &QuadratureConfig,
) -> Result<MultiplierSolution> {
    let support = beta.support();
    check_moment_feasibility(support, &constraints)?;
    let dims = if constraints.second_moment.is_some() {
        2
    } else {
        1
    };
    let target = constraints.target();
    let start = initial_guess(support, &constraints)?;

    let mut current = evaluate(beta, start, dims, target, config).ok_or_else(|| {
        Error::Infeasible(format!(
            "the starting multipliers {start:?} give a divergent normalization integral"
        ))
    })?;
    let mut iterations = 0;
    let mut stalled = false;
    while current.norm > GRADIENT_TARGET && iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        let m = current.moments.m;
        let v11 = m[1] - m[0] * m[0];
        let step = if dims == 1 {
            (-current.gradient[0] / v11, 0.0)
        } else {
            let v12 = m[2] - m[0] * m[1];
            let v22 = m[3] - m[1] * m[1];
            let det = v11 * v22 - v12 * v12;
            let (g1, g2) = (current.gradient[0], current.gradient[1]);
            (-(v22 * g1 - v12 * g2) / det, -(v11 * g2 - v12 * g1) / det)
        };
        if !(step.0.is_finite() && step.1.is_finite()) {
            stalled = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = (current.lambda.0 + t * step.0, current.lambda.1 + t * step.1);
            if let Some(e) = evaluate(beta, trial, dims, target, config) {
                if e.norm <= (1.0 - 1e-4 * t) * current.norm {
                    accepted = Some(e);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(e) => {
                let tiny = (e.lambda.0 - current.lambda.0).abs()
                    <= 1e-15 * (1.0 + e.lambda.0.abs())
                    && (e.lambda.1 - current.lambda.1).abs() <= 1e-15 * (1.0 + e.lambda.1.abs());
                current = e;
                if tiny {
                    break;
                }
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    if dims == 1 && (stalled || current.norm > RESIDUAL_TOLERANCE * 1e-2) {
        if let Some((e, extra)) = bisect_mean(beta, current.lambda.0, target[0], config) {
            current = e;
            iterations += extra;
        }
    }

    if current.norm > RESIDUAL_TOLERANCE {
        return Err(Error::Infeasible(format!(
            "multiplier search stopped after {iterations} iterations with constraint \
             residuals {:?} (lambda2={}, lambda3={})",
            &current.gradient[..dims],
            current.lambda.0,
            current.lambda.1
        )));
    }
    let lambda1 = 1.0 + current.moments.log_z;
    let lambda3 = (dims == 2).then_some(current.lambda.1);
    finish(
        beta,
        lambda1,
        Some(current.lambda.0),
        lambda3,
        constraints,
        iterations,
        current.moments.rel_error,
        config,
    )
}

/// Bisection on `λ₂` for the mean-only case; the kernel mean decreases
/// monotonically in `λ₂`. The bracket is found by geometric scanning from the
/// last Newton iterate.
fn bisect_mean(
    beta: &WeightFunction,
    from: f64,
    mu: f64,
    config: &QuadratureConfig,
) -> Option<(Evaluation, usize)> {
    let eval = |l: f64| evaluate(beta, (l, 0.0), 1, [mu, 0.0], config);
    let mean_at = |l: f64| eval(l).map(|e| e.moments.m[0]);
    let mut evaluations = 0;
    let (mut lo, mut hi) = (from, from);
    let mut width = 1.0;
    // lo: mean above μ; hi: mean below μ.
    loop {
        evaluations += 1;
        match mean_at(hi) {
            Some(m) if m < mu => break,
            Some(_) => hi += width,
            None => return None,
        }
        width *= 2.0;
        if evaluations > 200 {
            return None;
        }
    }
    width = 1.0;
    loop {
        evaluations += 1;
        match mean_at(lo) {
            Some(m) if m > mu => break,
            Some(_) => lo -= width,
            None => return None,
        }
        width *= 2.0;
        if evaluations > 400 {
            return None;
        }
    }
    for _ in 0..200 {
        evaluations += 1;
        let mid = 0.5 * (lo + hi);
        let e = eval(mid)?;
        if e.norm <= GRADIENT_TARGET || mid == lo || mid == hi {
            return Some((e, evaluations));
        }
        if e.moments.m[0] > mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eval(0.5 * (lo + hi)).map(|e| (e, evaluations))
}

/// Continuous power law `ρ₀(x) = (α−1)·k^{α−1}·x^{−α}` on `[k, ∞)`, obtained
/// as the unconstrained maximizer for `β(x) = x^α`.
pub fn power_law_density(alpha: f64, k: f64) -> Result<MultiplierSolution> {
    if !(k.is_finite() && k > 0.0) {
        return domain(format!(
            "power-law lower bound k must be finite and > 0, got {k}"
        ));
    }
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::Infeasible(format!(
            "power law with alpha = {alpha} is not normalizable on [{k}, inf): \
             the integral of x^(-alpha) diverges for alpha <= 1"
        )));
    }
    let beta = WeightFunction::power(alpha, Support::half_line(k)?)?;
    let solution = solve_unconstrained(&beta)?;
    if solution.constraint_residuals[0].abs() > 1e-10 {
        return Err(Error::Infeasible(format!(
            "power-law normalization residual {} exceeds 1e-10",
            solution.constraint_residuals[0]
        )));
    }
    Ok(solution)
}

/// `S(ρ) = −∫ ρ ln(βρ)` over the support of `beta`. Points with `ρ = 0`
/// contribute nothing.
pub fn continuous_entropy<F>(density: F, beta: &WeightFunction) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    continuous_entropy_with(density, beta, &[], &QuadratureConfig::default())
}

pub fn continuous_entropy_with<F>(
    density: F,
    beta: &WeightFunction,
    breakpoints: &[f64],
    config: &QuadratureConfig,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let s = beta.support();
    let config = &kernel_config(beta, 0.0, 0.0, 0, config);
    let negative = std::cell::Cell::new(None);
    let mut pts = beta.breakpoints();
    pts.extend_from_slice(breakpoints);
    let r = integrate(
        |x| {
            let rho = density(x);
            if rho < 0.0 || rho.is_nan() {
                negative.set(Some((x, rho)));
                return [0.0, 0.0];
            }
            if rho == 0.0 {
                return [0.0, 0.0];
            }
            [rho, -rho * (beta.ln_value(x) + rho.ln())]
        },
        s.lower,
        s.upper,
        &pts,
        config,
    );
    if let Some((x, rho)) = negative.get() {
        return domain(format!(
            "density is negative or undefined at x = {x} (value {rho})"
        ));
    }
    let mass = r.value[0];
    if !(mass - 1.0).abs().le(&DENSITY_MASS_TOLERANCE) {
        return domain(format!(
            "density integrates to {mass} over {s}, not 1 (tolerance {DENSITY_MASS_TOLERANCE:e})"
        ));
    }
    if !r.value[1].is_finite() {
        return domain("entropy integral diverges");
    }
    Ok(r.value[1])
}

/// A density given by `(x, ρ)` samples, linearly interpolated and zero
/// outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 || points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return domain("a tabulated density needs at least two strictly increasing x values");
        }
        if points.iter().any(|p| !(p.1 >= 0.0) || !p.0.is_finite()) {
            return domain("tabulated density values must be finite and non-negative");
        }
        Ok(Self {
            xs: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k <= x).clamp(1, n - 1);
        let t = (x - self.xs[i - 1]) / (self.xs[i] - self.xs[i - 1]);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn half_line(a: f64) -> Support {
        Support::half_line(a).unwrap()
    }

    fn interval(a: f64, b: f64) -> Support {
        Support::new(a, b).unwrap()
    }

    #[test]
    fn support_parsing() {
        assert_eq!("0,inf".parse::<Support>().unwrap(), half_line(0.0));
        assert_eq!("-inf,inf".parse::<Support>().unwrap(), Support::real_line());
        assert_eq!("1,2".parse::<Support>().unwrap(), interval(1.0, 2.0));
        assert!("2,1".parse::<Support>().is_err());
        assert!("1".parse::<Support>().is_err());
        assert!("a,b".parse::<Support>().is_err());
        assert!("inf,inf".parse::<Support>().is_err());
    }

    #[test]
    fn weight_function_domains() {
        assert!(WeightFunction::power(2.0, half_line(0.0)).is_err());
        assert!(WeightFunction::power(2.0, Support::real_line()).is_err());
        assert!(WeightFunction::shifted_power(1.0, 0.5, half_line(-0.4)).is_ok());
        assert!(WeightFunction::shifted_power(1.0, 0.5, half_line(-0.5)).is_err());
        assert!(WeightFunction::tabulated(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(WeightFunction::tabulated(&[(0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(WeightFunction::constant(0.0, Support::real_line()).is_err());
        let t = WeightFunction::tabulated(&[(0.0, 1.0), (1.0, 3.0), (2.0, 1.0)]).unwrap();
        assert_eq!(t.value(0.5), 2.0);
        assert_eq!(t.value(1.5), 2.0);
        assert_eq!(t.value(2.0), 1.0);
        assert_eq!(t.breakpoints(), vec![1.0]);
    }

    #[test]
    fn unconstrained_constant_weight() {
        let beta = WeightFunction::constant(2.0, interval(0.0, 1.0)).unwrap();
        let s = solve_unconstrained(&beta).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert!((s.density(x) - 1.0).abs() < 1e-12);
        }
        assert!((s.prefactor() - 2.0).abs() < 1e-12);
        assert!(s.lambda2.is_none() && s.lambda3.is_none());
    }

    #[test]
    fn unconstrained_power_weight() {
        let beta = WeightFunction::power(2.5, half_line(1.0)).unwrap();
        let s = solve_unconstrained(&beta).unwrap();
        for x in [1.0f64, 2.0, 10.0, 1e3] {
            let expected = 1.5 * x.powf(-2.5);
            assert!((s.density(x) - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-15);
        }
        assert!(s.constraint_residuals[0].abs() < 1e-10);
    }

    #[test]
    fn harmonic_weight_is_infeasible() {
        let beta = WeightFunction::power(1.0, half_line(1.0)).unwrap();
        let err = solve_unconstrained(&beta).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref m) if m.contains("1/beta")));
        let beta = WeightFunction::constant(1.0, half_line(0.0)).unwrap();
        assert!(matches!(
            solve_unconstrained(&beta),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn mean_on_half_line_is_exponential() {
        let beta = WeightFunction::constant(1.0, half_line(0.0)).unwrap();
        let s = solve_with_mean(&beta, 2.0).unwrap();
        assert!((s.lambda2.unwrap() - 0.5).abs() < 1e-10);
        assert!((s.prefactor() - 0.5).abs() < 1e-10);
        assert!(s.constraint_residuals.iter().all(|r| r.abs() <= 1e-8));
        assert_eq!(s.constraint_residuals.len(), 2);
    }

    #[test]
    fn symmetric_mean_on_interval_is_uniform() {
        let beta = WeightFunction::constant(1.0, interval(0.0, 1.0)).unwrap();
        let s = solve_with_mean(&beta, 0.5).unwrap();
        assert!(s.lambda2.unwrap().abs() < 1e-10);
        assert!((s.prefactor() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mean_with_linear_weight() {
        let beta = WeightFunction::power(1.0, half_line(1.0)).unwrap();
        let s = solve_with_mean(&beta, 3.0).unwrap();
        assert!(s.constraint_residuals.iter().all(|r| r.abs() <= 1e-8));
        assert!(s.lambda2.unwrap() > 0.0);
    }

    #[test]
    fn infeasible_means() {
        let beta = WeightFunction::constant(1.0, interval(0.0, 1.0)).unwrap();
        assert!(matches!(
            solve_with_mean(&beta, 1.5),
            Err(Error::Infeasible(_))
        ));
        let beta = WeightFunction::constant(1.0, Support::real_line()).unwrap();
        assert!(matches!(
            solve_with_mean(&beta, 0.0),
            Err(Error::Infeasible(_))
        ));
        let beta = WeightFunction::constant(1.0, half_line(0.0)).unwrap();
        assert!(matches!(
            solve_with_mean(&beta, -1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn two_moments_give_gaussians() {
        let beta = WeightFunction::constant(1.0, Support::real_line()).unwrap();
        let s = solve_with_mean_and_second_moment(&beta, 0.0, 1.0).unwrap();
        assert!(s.lambda2.unwrap().abs() < 1e-10);
        assert!((s.lambda3.unwrap() - 0.5).abs() < 1e-10);
        assert!((s.prefactor() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-10);
        assert_eq!(s.constraint_residuals.len(), 3);

        let s = solve_with_mean_and_second_moment(&beta, 1.0, 2.0).unwrap();
        assert!((s.lambda3.unwrap() - 0.5).abs() < 1e-9);
        assert!((s.lambda2.unwrap() + 1.0).abs() < 1e-9);
        assert!((s.density(1.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-9);

        let err = solve_with_mean_and_second_moment(&beta, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn two_moments_on_bounded_support() {
        // Variance above the uniform value pushes λ₃ negative.
        let beta = WeightFunction::constant(1.0, interval(-1.0, 1.0)).unwrap();
        let s = solve_with_mean_and_second_moment(&beta, 0.0, 0.5).unwrap();
        assert!(s.lambda3.unwrap() < 0.0);
        assert!(s.constraint_residuals.iter().all(|r| r.abs() <= 1e-8));
        assert!(matches!(
            solve_with_mean_and_second_moment(&beta, 0.0, 1.5),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn power_law_examples() {
        let s = power_law_density(2.0, 1.0).unwrap();
        assert!((s.density(2.0) - 0.25).abs() < 1e-12);
        let s = power_law_density(3.0, 2.0).unwrap();
        assert!((s.prefactor() - 8.0).abs() < 1e-10);
        assert!((s.density(4.0) - 8.0 / 64.0).abs() < 1e-12);
        assert!(matches!(
            power_law_density(1.0, 1.0),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            power_law_density(0.5, 1.0),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(power_law_density(2.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn entropy_examples() {
        let unit = WeightFunction::constant(1.0, interval(0.0, 1.0)).unwrap();
        assert!(continuous_entropy(|_| 1.0, &unit).unwrap().abs() < 1e-14);
        let wide = WeightFunction::constant(1.0, interval(0.0, 2.0)).unwrap();
        let h = continuous_entropy(|_| 0.5, &wide).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);

        let s = power_law_density(2.5, 1.0).unwrap();
        let h = s.entropy().unwrap();
        assert!((h + 1.5f64.ln()).abs() < 1e-9, "{h}");

        let err = continuous_entropy(|_| 2.0, &unit).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("integrates to 2")));
        assert!(continuous_entropy(|x| if x < 0.5 { -1.0 } else { 3.0 }, &unit).is_err());
    }

    #[test]
    fn zero_density_regions_contribute_nothing() {
        let wide = WeightFunction::constant(1.0, interval(0.0, 2.0)).unwrap();
        let h = continuous_entropy(|x| if x <= 1.0 { 1.0 } else { 0.0 }, &wide).unwrap();
        assert!(h.abs() < 1e-6);
    }

    #[test]
    fn tabulated_density_interpolates() {
        let d = TabulatedDensity::new(&[(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert_eq!(d.eval(0.5), 1.0);
        assert_eq!(d.eval(-1.0), 0.0);
        let beta = WeightFunction::constant(1.0, interval(0.0, 2.0)).unwrap();
        let h = continuous_entropy_with(
            |x| d.eval(x),
            &beta,
            d.knots(),
            &QuadratureConfig::default(),
        );
        // Triangle on [0, 2] with peak 1: −∫ρ ln ρ = 1/2.
        let d = TabulatedDensity::new(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        let h2 = continuous_entropy_with(
            |x| d.eval(x),
            &beta,
            d.knots(),
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert!(h.is_err());
        assert!((h2 - 0.5).abs() < 1e-10);
    }

    #[test]
    fn tabulated_weight_solves() {
        let beta = WeightFunction::tabulated(&[(0.0, 1.0), (1.0, 2.0), (3.0, 0.5)]).unwrap();
        let s = solve_unconstrained(&beta).unwrap();
        assert!(s.constraint_residuals[0].abs() < 1e-10);
        let s = solve_with_mean(&beta, 1.2).unwrap();
        assert!(s.constraint_residuals.iter().all(|r| r.abs() <= 1e-8));
    }

    #[test]
    fn table_layout() {
        let s =
            solve_with_mean(&WeightFunction::constant(1.0, half_line(0.0)).unwrap(), 2.0).unwrap();
        let pts = s.table_points(512);
        assert_eq!(pts.len(), 512);
        assert_eq!(pts[0], 0.0);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!((pts[511] - 1e4).abs() < 1e-6);

        let g = solve_with_mean_and_second_moment(
            &WeightFunction::constant(1.0, Support::real_line()).unwrap(),
            0.0,
            1.0,
        )
        .unwrap();
        let pts = g.table_points(512);
        assert!((pts[0] + 10.0).abs() < 1e-9 && (pts[511] - 10.0).abs() < 1e-9);
        let b = solve_unconstrained(&WeightFunction::constant(2.0, interval(0.0, 1.0)).unwrap())
            .unwrap();
        assert_eq!(b.table_points(3), vec![0.0, 0.5, 1.0]);
    }
}
