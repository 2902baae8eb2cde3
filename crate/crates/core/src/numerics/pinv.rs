//! Moore–Penrose pseudoinverse of complex matrices.
//!
//! Tall inputs are first reduced with a Householder QR, so the SVD only runs
//! on the small `n x n` triangular factor: `A = Q R`, `R = U S V^†`, hence
//! `A^+ = V S^+ U^† Q^†`. Wide inputs go through `A^+ = ((A^†)^+)^†`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::matrix::ComplexMatrix;

/// Singular values below `DEFAULT_RCOND * σ_max` are treated as zero.
pub const DEFAULT_RCOND: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Pseudoinverse {
    pub matrix: ComplexMatrix,
    /// All `min(rows, cols)` singular values, descending.
    pub singular_values: Vec<f64>,
    /// Number of singular values above the cutoff.
    pub rank: usize,
}

impl Pseudoinverse {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Smallest singular value that was kept, if any.
    pub fn sigma_min_retained(&self) -> Option<f64> {
        self.rank
            .checked_sub(1)
            .map(|idx| self.singular_values[idx])
    }
}

pub fn pseudoinverse(a: &ComplexMatrix, rcond: f64) -> ComplexMatrix {
    pseudoinverse_detailed(a, rcond).matrix
}

pub fn pseudoinverse_detailed(a: &ComplexMatrix, rcond: f64) -> Pseudoinverse {
    assert!(
        rcond > 0.0 && rcond < 1.0,
        "rcond must lie in (0, 1), got {rcond}"
    );
    let m = a.to_nalgebra();
    let (pinv, mut sv) = if m.nrows() >= m.ncols() {
        pinv_tall(m, rcond)
    } else {
        let (p, sv) = pinv_tall(m.adjoint(), rcond);
        (p.adjoint(), sv)
    };
    sv.sort_by(|x, y| y.total_cmp(x));
    let cutoff = rcond * sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    Pseudoinverse {
        matrix: ComplexMatrix::from_nalgebra(&pinv),
        singular_values: sv,
        rank,
    }
}

fn pinv_tall(a: DMatrix<Complex64>, rcond: f64) -> (DMatrix<Complex64>, Vec<f64>) {
    let (rows, cols) = a.shape();
    let (q_adj, small) = if rows > cols {
        let qr = a.qr();
        (Some(qr.q().adjoint()), qr.r())
    } else {
        (None, a)
    };
    let svd = small.svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rcond * smax;

    // V S^+ U^†, built column-scaled to avoid a dense diagonal product.
    let mut v = v_t.adjoint();
    for (j, &s) in sigma.iter().enumerate() {
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        v.column_mut(j).scale_mut(inv);
    }
    let small_pinv = v * u.adjoint();
    let pinv = match q_adj {
        Some(q_adj) => small_pinv * q_adj,
        None => small_pinv,
    };
    (pinv, sigma.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = rng_from_seed(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        })
    }

    /// The four Penrose conditions, each as a max-abs residual.
    fn penrose_residuals(a: &ComplexMatrix, p: &ComplexMatrix) -> [f64; 4] {
        let ap = a.matmul(p).unwrap();
        let pa = p.matmul(a).unwrap();
        [
            ap.matmul(a).unwrap().max_abs_diff(a).unwrap() / a.max_abs().max(1.0),
            pa.matmul(p).unwrap().max_abs_diff(p).unwrap() / p.max_abs().max(1.0),
            ap.max_abs_diff(&ap.adjoint()).unwrap(),
            pa.max_abs_diff(&pa.adjoint()).unwrap(),
        ]
    }

    #[test]
    fn identity_is_its_own_pinv() {
        let p = pseudoinverse(&ComplexMatrix::identity(4), DEFAULT_RCOND);
        assert!(p.max_abs_diff(&ComplexMatrix::identity(4)).unwrap() < 1e-14);
    }

    #[test]
    fn rank_deficient_diagonal() {
        let a = ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(0.0, 0.0)]);
        let p = pseudoinverse_detailed(&a, DEFAULT_RCOND);
        let expected = ComplexMatrix::from_diagonal(&[c(0.5, 0.0), c(0.0, 0.0)]);
        assert!(p.matrix.max_abs_diff(&expected).unwrap() < 1e-15);
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn zero_matrix_maps_to_zero() {
        let p = pseudoinverse_detailed(&ComplexMatrix::zeros(5, 3), DEFAULT_RCOND);
        assert_eq!(p.rank, 0);
        assert_eq!(p.matrix.shape(), (3, 5));
        assert_eq!(p.matrix.max_abs(), 0.0);
    }

    #[test]
    fn penrose_conditions_tall_wide_square() {
        for (rows, cols, seed) in [(20, 8, 1), (8, 20, 2), (6, 6, 3), (1, 5, 4)] {
            let a = random_matrix(rows, cols, seed);
            let p = pseudoinverse(&a, DEFAULT_RCOND);
            assert_eq!(p.shape(), (cols, rows));
            for r in penrose_residuals(&a, &p) {
                assert!(r < 1e-10, "{rows}x{cols}: residual {r:e}");
            }
        }
    }

    #[test]
    fn penrose_conditions_rank_deficient_product() {
        // 12x9 of rank 4.
        let a = random_matrix(12, 4, 5)
            .matmul(&random_matrix(4, 9, 6))
            .unwrap();
        let p = pseudoinverse_detailed(&a, 1e-10);
        assert_eq!(p.rank, 4);
        for r in penrose_residuals(&a, &p.matrix) {
            assert!(r < 1e-10, "residual {r:e}");
        }
    }

    #[test]
    fn double_pinv_recovers_full_rank_input() {
        let a = random_matrix(10, 6, 8);
        let back = pseudoinverse(&pseudoinverse(&a, DEFAULT_RCOND), DEFAULT_RCOND);
        assert!(back.max_abs_diff(&a).unwrap() < 1e-8);
    }
}
