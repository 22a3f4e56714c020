//! Closed-form maximizer of the nonsymmetric entropy over the probability
//! simplex, together with the curvature and stationarity diagnostics that
//! certify it.
//!
//! For positive weights the maximizer is `p(i) = 1 / (β_i · Σ_j 1/β_j)` and the
//! maximum value is `ln Σ_j 1/β_j`.

use crate::entropy::{nonsymmetric_entropy, DiscreteDistribution, WeightFamily, WeightVector};
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMaxEntSolution {
    pub maximizer: DiscreteDistribution,
    pub max_entropy: f64,
    pub weights_used: WeightVector,
}

/// Curvature of `−S` restricted to the simplex, in the coordinates
/// `p(1), …, p(m−1)` with `p(m) = 1 − Σ p(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianReport {
    /// `m − 1`.
    pub dimension: usize,
    /// Smallest pivot of the LDLᵀ factorization.
    pub min_pivot: f64,
    pub positive_definite: bool,
    /// Product of the factorization pivots.
    pub determinant: f64,
    /// `Π 1/p(i) · (1 + Σ p(i)/p(m))`, evaluated in log space.
    pub closed_form_determinant: f64,
}

pub fn solve_discrete_maxent(weights: &WeightVector) -> Result<DiscreteMaxEntSolution> {
    let normalizer = weights.reciprocal_sum();
    let probs = weights
        .weights()
        .iter()
        .map(|b| 1.0 / (b * normalizer))
        .collect();
    Ok(DiscreteMaxEntSolution {
        maximizer: DiscreteDistribution::new(probs)?,
        max_entropy: normalizer.ln(),
        weights_used: weights.clone(),
    })
}

/// Maximizer for Zipf weights `β_i = i^α`, i.e. `p(i) = p(1)/i^α`.
pub fn solve_zipf_maxent(alpha: f64, m: usize) -> Result<DiscreteMaxEntSolution> {
    if m == 0 {
        return domain("the number of events m must be at least 1");
    }
    solve_discrete_maxent(&WeightFamily::power(alpha)?.materialize(m)?)
}

/// Gradient of `S` in the free coordinates `p(1), …, p(m−1)`:
/// `−ln[β_i p(i) / (β_m p(m))]`. Vanishes exactly at the maximizer.
pub fn stationarity_residual(
    dist: &DiscreteDistribution,
    weights: &WeightVector,
) -> Result<Vec<f64>> {
    check_lengths(dist, weights)?;
    require_interior(dist)?;
    let p = dist.probs();
    let b = weights.weights();
    let m = p.len();
    let last = b[m - 1] * p[m - 1];
    Ok((0..m - 1).map(|i| -(b[i] * p[i] / last).ln()).collect())
}

/// Factorizes `a_ij = δ_ij/p(i) + 1/p(m)` (the negated Hessian of `S` in the
/// free coordinates) and reports its pivots and determinant.
pub fn hessian_check(dist: &DiscreteDistribution) -> Result<HessianReport> {
    let p = dist.probs();
    if p.len() < 2 {
        return domain("the curvature check needs at least two events");
    }
    require_interior(dist)?;
    let k = p.len() - 1;
    let inv_last = 1.0 / p[k];
    let mut a = vec![vec![0.0; k]; k];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = inv_last + if i == j { 1.0 / p[i] } else { 0.0 };
        }
    }
    let max_diag = (0..k).map(|i| a[i][i]).fold(0.0, f64::max);
    let pivots = ldlt_pivots(&mut a);
    let min_pivot = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HessianReport {
        dimension: k,
        min_pivot,
        positive_definite: pivots.iter().all(|&d| d > 1e-12 * max_diag),
        determinant: pivots.iter().product(),
        closed_form_determinant: closed_form_determinant(p),
    })
}

/// In-place LDLᵀ without pivoting; returns the diagonal `D`.
fn ldlt_pivots(a: &mut [Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = a[j][j];
        for k in 0..j {
            dj -= a[j][k] * a[j][k] * d[k];
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut lij = a[i][j];
            for k in 0..j {
                lij -= a[i][k] * a[j][k] * d[k];
            }
            a[i][j] = if dj != 0.0 { lij / dj } else { f64::NAN };
        }
    }
    d
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Determinant of the `(m−1)×(m−1)` curvature matrix by the matrix
/// determinant lemma: `det(D + 11ᵀ/p(m)) = det D + (1/p(m)) Σ_i Π_{j≠i} 1/p(j)`.
pub fn closed_form_determinant(p: &[f64]) -> f64 {
    let k = p.len() - 1;
    let log_det_diag: f64 = -p[..k].iter().map(|x| x.ln()).sum::<f64>();
    let mut terms = vec![log_det_diag];
    terms.extend(hatted_log_terms(p));
    log_sum_exp(&terms).exp()
}

/// `(1/p(m)) · Σ_{i=1}^{k} 1/(p(1)⋯p̂(i)⋯p(k))` with `k = m − 1`: the
/// hatted-product sum alone, without the `Π 1/p(i)` term of the lemma.
pub fn hatted_product_sum(p: &[f64]) -> f64 {
    log_sum_exp(&hatted_log_terms(p)).exp()
}

fn hatted_log_terms(p: &[f64]) -> Vec<f64> {
    let k = p.len() - 1;
    let logs: Vec<f64> = p[..k].iter().map(|x| x.ln()).collect();
    let total: f64 = logs.iter().sum();
    let log_inv_last = -p[k].ln();
    logs.iter().map(|li| log_inv_last - (total - li)).collect()
}

/// `S_1, …, S_{m_max}` where `S_m = ln Σ_{i≤m} 1/β_i` is the maximal entropy on
/// the first `m` events of the family.
pub fn entropy_monotonicity_scan(family: &WeightFamily, m_max: usize) -> Result<Vec<f64>> {
    if m_max == 0 {
        return domain("m_max must be at least 1");
    }
    let weights = family.materialize(m_max)?;
    let mut sum = 0.0;
    let mut compensation = 0.0;
    Ok(weights
        .weights()
        .iter()
        .map(|b| {
            // Kahan summation keeps tiny increments visible for large m.
            let y = b.recip() - compensation;
            let t = sum + y;
            compensation = (t - sum) - y;
            sum = t;
            sum.ln()
        })
        .collect())
}

/// Value of `S` at the maximizer, recomputed from the functional.
pub fn entropy_at_maximizer(solution: &DiscreteMaxEntSolution) -> Result<f64> {
    nonsymmetric_entropy(&solution.maximizer, &solution.weights_used)
}

fn check_lengths(dist: &DiscreteDistribution, weights: &WeightVector) -> Result<()> {
    if dist.len() != weights.len() {
        return Err(crate::Error::Dimension {
            expected: dist.len(),
            found: weights.len(),
        });
    }
    Ok(())
}

fn require_interior(dist: &DiscreteDistribution) -> Result<()> {
    if let Some(i) = dist.probs().iter().position(|&p| p <= 0.0) {
        return domain(format!(
            "probability at index {} is zero; the logarithm is undefined there",
            i + 1
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::shannon_entropy;
    use proptest::prelude::*;

    fn w(b: &[f64]) -> WeightVector {
        WeightVector::new(b.to_vec()).unwrap()
    }

    fn d(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let s = solve_discrete_maxent(&w(&[1.0; 4])).unwrap();
        assert!(s.maximizer.probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert!((s.max_entropy - 4f64.ln()).abs() < 1e-15);

        let s = solve_discrete_maxent(&w(&[1.0, 2.0])).unwrap();
        assert!(s.maximizer.max_abs_diff(&d(&[2.0 / 3.0, 1.0 / 3.0])) < 1e-15);
        assert!((s.max_entropy - 0.4054651081081645).abs() < 1e-15);

        let s = solve_discrete_maxent(&w(&[1.0, 2.0, 3.0])).unwrap();
        assert!(
            s.maximizer
                .max_abs_diff(&d(&[6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]))
                < 1e-15
        );
        assert!((s.max_entropy - (11.0f64 / 6.0).ln()).abs() < 1e-15);
        assert!((entropy_at_maximizer(&s).unwrap() - s.max_entropy).abs() < 1e-12);
    }

    #[test]
    fn single_event() {
        let s = solve_discrete_maxent(&w(&[3.0])).unwrap();
        assert_eq!(s.maximizer.probs(), &[1.0]);
        assert!((s.max_entropy + 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn negative_log_first_probability_needs_unit_first_weight() {
        // β_1 = 1: −ln p(1) agrees with ln Σ 1/β.
        let s = solve_zipf_maxent(1.3, 7).unwrap();
        assert!((-s.maximizer.probs()[0].ln() - s.max_entropy).abs() < 1e-12);
        // β_1 ≠ 1: −ln p(1) = ln(β_1 Σ 1/β) instead.
        let s = solve_discrete_maxent(&w(&[2.0, 3.0])).unwrap();
        let gap = -s.maximizer.probs()[0].ln() - s.max_entropy;
        assert!((gap - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zipf_examples() {
        let s = solve_zipf_maxent(0.0, 5).unwrap();
        assert!(s.maximizer.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));
        let s = solve_zipf_maxent(1.0, 3).unwrap();
        assert!(
            s.maximizer
                .max_abs_diff(&d(&[6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]))
                < 1e-15
        );
        let s2 = solve_zipf_maxent(1.0, 2).unwrap().max_entropy;
        let s3 = solve_zipf_maxent(1.0, 3).unwrap().max_entropy;
        assert!(s2 < s3);
        assert!((s2 - 1.5f64.ln()).abs() < 1e-15);
        assert!(solve_zipf_maxent(1.0, 0).is_err());
    }

    #[test]
    fn stationarity_examples() {
        let sol = solve_discrete_maxent(&w(&[1.0, 2.0])).unwrap();
        let r = stationarity_residual(&sol.maximizer, &w(&[1.0, 2.0])).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].abs() < 1e-15);

        let r = stationarity_residual(&d(&[0.5, 0.5]), &w(&[1.0, 2.0])).unwrap();
        assert!((r[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let r = stationarity_residual(&d(&[0.25, 0.25, 0.5]), &w(&[1.0; 3])).unwrap();
        assert!(r.iter().all(|x| (x - std::f64::consts::LN_2).abs() < 1e-15));

        assert!(stationarity_residual(&d(&[0.0, 1.0]), &w(&[1.0, 1.0])).is_err());
        assert!(stationarity_residual(&d(&[0.5, 0.5]), &w(&[1.0])).is_err());
        assert!(stationarity_residual(&d(&[1.0]), &w(&[2.0]))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn hessian_examples() {
        let h = hessian_check(&d(&[0.5, 0.5])).unwrap();
        assert_eq!(h.dimension, 1);
        assert!(h.positive_definite);
        assert!((h.determinant - 4.0).abs() < 1e-12);
        assert!((h.closed_form_determinant - 4.0).abs() < 1e-12);

        let h = hessian_check(&d(&[2.0 / 3.0, 1.0 / 3.0])).unwrap();
        assert!((h.determinant - 4.5).abs() < 1e-12);
        assert!((h.min_pivot - 4.5).abs() < 1e-12);

        let third = 1.0 / 3.0;
        let h = hessian_check(&d(&[third; 3])).unwrap();
        assert_eq!(h.dimension, 2);
        assert!(h.positive_definite);
        assert!((h.determinant - 27.0).abs() < 1e-10);
        assert!((h.closed_form_determinant - 27.0).abs() < 1e-10);
        // The hatted-product sum on its own omits Π 1/p(i) = 9.
        assert!((hatted_product_sum(&[third; 3]) - 18.0).abs() < 1e-10);

        assert!(hessian_check(&d(&[1.0])).is_err());
        assert!(hessian_check(&d(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let s = entropy_monotonicity_scan(&WeightFamily::power(1.0).unwrap(), 3).unwrap();
        let expected = [0.0, 1.5f64.ln(), (11.0f64 / 6.0).ln()];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = entropy_monotonicity_scan(&WeightFamily::constant(1.0).unwrap(), 4).unwrap();
        for (m, v) in s.iter().enumerate() {
            assert!((v - ((m + 1) as f64).ln()).abs() < 1e-15);
        }
        let fam = WeightFamily::shifted_power(1.0, 1.0).unwrap();
        let s = entropy_monotonicity_scan(&fam, 2).unwrap();
        assert!((s[0] + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((s[1] - (5.0f64 / 6.0).ln()).abs() < 1e-15);
        assert!((s[1] - -0.1823215567939546).abs() < 1e-12);
        for (m, v) in s.iter().enumerate() {
            let direct = solve_discrete_maxent(&fam.materialize(m + 1).unwrap()).unwrap();
            assert!((direct.max_entropy - v).abs() < 1e-15);
        }
        assert!(entropy_monotonicity_scan(&fam, 0).is_err());
    }

    #[test]
    fn uniform_weights_reproduce_shannon_maximum() {
        let s = solve_discrete_maxent(&WeightVector::ones(6).unwrap()).unwrap();
        assert!((shannon_entropy(&s.maximizer) - s.max_entropy).abs() < 1e-15);
    }

    fn weight_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.1f64..10.0, 2..8)
    }

    proptest! {
        #[test]
        fn solution_invariants(b in weight_vec()) {
            let wv = WeightVector::new(b.clone()).unwrap();
            let s = solve_discrete_maxent(&wv).unwrap();
            let sum: f64 = b.iter().map(|x| 1.0 / x).sum();
            for (p, beta) in s.maximizer.probs().iter().zip(&b) {
                prop_assert!((p - 1.0 / (beta * sum)).abs() <= 1e-12);
            }
            prop_assert!((s.max_entropy - sum.ln()).abs() <= 1e-12);
            prop_assert!((entropy_at_maximizer(&s).unwrap() - s.max_entropy).abs() <= 1e-12);
            let via_first = -s.maximizer.probs()[0].ln() - b[0].ln();
            prop_assert!((via_first - s.max_entropy).abs() <= 1e-12);
            let r = stationarity_residual(&s.maximizer, &wv).unwrap();
            prop_assert!(r.iter().all(|x| x.abs() <= 1e-10));
        }

        #[test]
        fn zipf_shape(alpha in -1.0f64..3.0, m in 1usize..200) {
            let s = solve_zipf_maxent(alpha, m).unwrap();
            let c0 = s.maximizer.probs()[0];
            for (i, p) in s.maximizer.probs().iter().enumerate() {
                prop_assert!((p * ((i + 1) as f64).powf(alpha) - c0).abs() <= 1e-12);
            }
        }

        #[test]
        fn curvature_positive_everywhere(raw in prop::collection::vec(0.01f64..1.0, 2..8)) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let h = hessian_check(&DiscreteDistribution::new(p).unwrap()).unwrap();
            prop_assert!(h.positive_definite);
            prop_assert!(((h.determinant - h.closed_form_determinant) / h.determinant).abs() <= 1e-8);
        }
    }
}
