//! Dense weighted least squares on small designs.
//!
//! Every solve goes through a Householder QR of the column-equilibrated,
//! weight-scaled design. The Gram matrix `AᵀWA` is never formed explicitly;
//! its inverse is applied through the triangular factor when the sandwich
//! bread is needed.

use nalgebra::{DMatrix, DVector};

/// Largest admissible condition number of the (equilibrated) Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IllConditioned {
    pub condition: f64,
}

/// Factorised weighted least-squares problem.
#[derive(Debug, Clone)]
pub struct WeightedQr {
    r: DMatrix<f64>,
    scale: Vec<f64>,
}

impl WeightedQr {
    /// Factorise `diag(√w)·A` where `design` is row-major `n × p`.
    pub fn new(design: &[f64], weights: &[f64], p: usize) -> Result<Self, IllConditioned> {
        Self::factor(design, weights, None, p).map(|(f, _)| f)
    }

    fn factor(
        design: &[f64],
        weights: &[f64],
        response: Option<&[f64]>,
        p: usize,
    ) -> Result<(Self, Vec<f64>), IllConditioned> {
        let singular = IllConditioned {
            condition: f64::INFINITY,
        };
        let n = weights.len();
        debug_assert_eq!(design.len(), n * p);
        if n < p || p == 0 {
            return Err(singular);
        }
        let mut m = DMatrix::<f64>::zeros(n, p);
        for (row, &w) in weights.iter().enumerate() {
            let sw = w.sqrt();
            for col in 0..p {
                m[(row, col)] = sw * design[row * p + col];
            }
        }
        let mut scale = Vec::with_capacity(p);
        for col in 0..p {
            let norm = m.column(col).norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(singular);
            }
            m.column_mut(col).scale_mut(1.0 / norm);
            scale.push(norm);
        }
        let qr = m.qr();
        let r = qr.r();
        let condition = triangular_condition(&r);
        if !(condition * condition <= MAX_GRAM_CONDITION) {
            return Err(IllConditioned {
                condition: condition * condition,
            });
        }
        let coef = match response {
            Some(y) => {
                let mut b =
                    DVector::from_iterator(n, y.iter().zip(weights).map(|(y, w)| w.sqrt() * y));
                qr.q_tr_mul(&mut b);
                let mut top = b.rows(0, p).into_owned();
                if !r.solve_upper_triangular_mut(&mut top) {
                    return Err(singular);
                }
                top.iter().zip(&scale).map(|(x, s)| x / s).collect()
            }
            None => Vec::new(),
        };
        Ok((Self { r, scale }, coef))
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Apply `(AᵀWA)⁻¹` to a vector.
    pub fn gram_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut v = DVector::from_iterator(p, rhs.iter().zip(&self.scale).map(|(x, s)| x / s));
        // Rᵀ y = v, then R x = y
        let rt = self.r.transpose();
        let ok = rt.solve_lower_triangular_mut(&mut v);
        debug_assert!(ok);
        let ok = self.r.solve_upper_triangular_mut(&mut v);
        debug_assert!(ok);
        v.iter().zip(&self.scale).map(|(x, s)| x / s).collect()
    }

    /// `(AᵀWA)⁻¹` as a dense matrix.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut out = DMatrix::zeros(p, p);
        let mut e = vec![0.0; p];
        for c in 0..p {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            let col = self.gram_solve(&e);
            for r in 0..p {
                out[(r, c)] = col[r];
            }
        }
        out
    }
}

/// Weighted least squares `argmin Σ w (y - a·β)²` solved by QR.
///
/// Returns the coefficients and the factorisation for later bread products.
pub fn weighted_least_squares(
    design: &[f64],
    response: &[f64],
    weights: &[f64],
    p: usize,
) -> Result<(Vec<f64>, WeightedQr), IllConditioned> {
    let (fact, coef) = WeightedQr::factor(design, weights, Some(response), p)?;
    Ok((coef, fact))
}

/// 2-norm condition number of an upper-triangular factor.
fn triangular_condition(r: &DMatrix<f64>) -> f64 {
    if r.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let sv = r.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        // y = 2 + 3x, non-uniform weights
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let w = [0.1, 0.5, 1.0, 2.0, 0.3];
        let (beta, _) = weighted_least_squares(&design, &y, &w, 2).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12);
        assert!((beta[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gram_inverse_matches_direct_inverse() {
        let design = [1.0, 0.3, 1.0, -1.2, 1.0, 2.5, 1.0, 0.1];
        let w = [1.0, 2.0, 0.5, 1.5];
        let fact = WeightedQr::new(&design, &w, 2).unwrap();
        let mut g = DMatrix::<f64>::zeros(2, 2);
        for r in 0..4 {
            for a in 0..2 {
                for b in 0..2 {
                    g[(a, b)] += w[r] * design[r * 2 + a] * design[r * 2 + b];
                }
            }
        }
        let direct = g.try_inverse().unwrap();
        let via_qr = fact.gram_inverse();
        assert!((direct - via_qr).abs().max() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_rejected() {
        let design = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!(WeightedQr::new(&design, &[1.0, 1.0, 1.0], 2).is_err());
        let zero = [1.0, 0.0, 1.0, 0.0];
        assert!(WeightedQr::new(&zero, &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn min_eigenvalue_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -1.0]);
        assert!((min_eigenvalue(&m) + 1.0).abs() < 1e-12);
    }
}
