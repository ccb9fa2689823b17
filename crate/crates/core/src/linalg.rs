//! Dense kernels shared by every extrapolator: small square solves with a
//! minimum-norm fallback, a sorted thin SVD, condition numbers, weighted norms
//! and the synthetic matrix factory with a prescribed spectrum.
//!
//! Storage is nalgebra's column-major `DMatrix<f64>`, so an iterate window is
//! simply the column stack `[x_0 ... x_K]`.

use nalgebra::{Cholesky, DMatrix, DVector, FullPivLU};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff below which a system is treated as singular.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Outcome of [`solve_square`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vector,
    /// `‖Mz − b‖`.
    pub residual_norm: f64,
    pub effective_rank: usize,
    /// `s_max / s_min`; infinite when the matrix is exactly singular.
    pub condition: f64,
    pub used_pseudoinverse: bool,
}

/// Thin singular value decomposition `M = U diag(s) Vᵀ` with `s` nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vector,
    pub v: Matrix,
}

impl Svd {
    pub fn largest(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }

    pub fn smallest(&self) -> f64 {
        self.s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        let cut = rank_tol * self.largest();
        self.s.iter().filter(|&&s| s > cut && s > 0.0).count()
    }

    /// `V diag(1/s) Uᵀ`, dropping singular values at or below `rank_tol · s_max`.
    pub fn pseudo_inverse(&self, rank_tol: f64) -> Matrix {
        let cut = rank_tol * self.largest();
        let mut scaled_v = self.v.clone();
        for (j, &s) in self.s.iter().enumerate() {
            let inv = if s > cut && s > 0.0 { 1.0 / s } else { 0.0 };
            scaled_v.column_mut(j).scale_mut(inv);
        }
        scaled_v * self.u.transpose()
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.s) * self.v.transpose()
    }
}

fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::argument(format!("{what} has non-finite entries")))
    }
}

/// Thin SVD with singular values sorted in nonincreasing order.
///
/// Computed with faer; nalgebra's SVD loses accuracy on some ill-conditioned
/// inputs once singular vectors are requested.
pub fn svd(m: &Matrix) -> Svd {
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Svd {
            u: Matrix::zeros(rows, 0),
            s: Vector::zeros(0),
            v: Matrix::zeros(cols, 0),
        };
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let (u, s, v) = match fm.thin_svd() {
        Ok(dec) => {
            let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());
            (
                Matrix::from_fn(rows, r, |i, j| fu[(i, j)]),
                Vector::from_fn(r, |i, _| fs[i]),
                Matrix::from_fn(cols, r, |i, j| fv[(i, j)]),
            )
        }
        Err(_) => {
            let dec = m.clone().svd(true, true);
            let v_t = dec.v_t.expect("requested Vᵀ");
            (
                dec.u.expect("requested U"),
                dec.singular_values,
                v_t.transpose(),
            )
        }
    };

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut us = Matrix::zeros(rows, r);
    let mut vs = Matrix::zeros(cols, r);
    let mut ss = Vector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        ss[dst] = s[src];
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
    }
    Svd {
        u: us,
        s: ss,
        v: vs,
    }
}

/// Moore–Penrose pseudo-inverse via truncated SVD.
pub fn pinv(m: &Matrix, rank_tol: f64) -> Matrix {
    svd(m).pseudo_inverse(rank_tol)
}

/// Solves `M z = b` for square `M`.
///
/// Well-conditioned systems (`s_min > rank_tol · s_max`) go through a fully
/// pivoted LU factorization. Anything else returns the minimum-norm
/// least-squares solution from the truncated SVD and sets
/// `used_pseudoinverse`. Singularity is never an error.
pub fn solve_square(m: &Matrix, b: &Vector, rank_tol: f64) -> Result<SolveReport> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::argument(format!(
            "solve_square needs a square matrix, got {rows}x{cols}"
        )));
    }
    if rows == 0 {
        return Err(Error::argument("solve_square needs k >= 1"));
    }
    check_dim(rows, b.len())?;
    ensure_finite("system matrix", m.as_slice())?;
    ensure_finite("right-hand side", b.as_slice())?;

    let dec = svd(m);
    let s_max = dec.largest();
    let s_min = dec.smallest();
    let rank = dec.rank(rank_tol);
    let condition = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };

    let well_conditioned = s_max > 0.0 && s_min > rank_tol * s_max;
    let direct = if well_conditioned {
        FullPivLU::new(m.clone())
            .solve(b)
            .filter(|z| z.iter().all(|v| v.is_finite()))
    } else {
        None
    };
    let (solution, used_pseudoinverse) = match direct {
        Some(z) => (z, false),
        None => (dec.pseudo_inverse(rank_tol) * b, true),
    };
    let residual_norm = (m * &solution - b).norm();
    Ok(SolveReport {
        solution,
        residual_norm,
        effective_rank: rank,
        condition,
        used_pseudoinverse,
    })
}

/// `s_max / s_min`, or `+∞` when `M` lacks full column rank.
pub fn condition_number(m: &Matrix) -> f64 {
    let (rows, cols) = m.shape();
    if rows < cols || cols == 0 {
        return f64::INFINITY;
    }
    let dec = svd(m);
    let s_max = dec.largest();
    let s_min = dec.smallest();
    if s_min <= s_max * f64::EPSILON * rows.max(cols) as f64 {
        return f64::INFINITY;
    }
    s_max / s_min
}

/// Dimensions, spectrum and seed of a synthetic data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    /// `min(rows, cols)` strictly positive, nonincreasing values.
    pub singular_values: Vec<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize, singular_values: Vec<f64>, seed: u64) -> Result<Self> {
        let spec = SyntheticSpec {
            rows,
            cols,
            singular_values,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Geometric spectrum from `s_max` down to `s_min`.
    pub fn geometric(rows: usize, cols: usize, s_max: f64, s_min: f64, seed: u64) -> Result<Self> {
        let r = rows.min(cols);
        if !(s_max >= s_min && s_min > 0.0) {
            return Err(Error::argument(format!(
                "geometric spectrum needs s_max >= s_min > 0, got {s_max}, {s_min}"
            )));
        }
        let values = (0..r)
            .map(|i| {
                if r == 1 {
                    s_max
                } else {
                    let t = i as f64 / (r - 1) as f64;
                    s_max * (s_min / s_max).powf(t)
                }
            })
            .collect();
        Self::new(rows, cols, values, seed)
    }

    /// Spectrum from 1 down to `1/kappa`, so that `κ(A) = kappa`.
    pub fn with_condition(rows: usize, cols: usize, kappa: f64, seed: u64) -> Result<Self> {
        if !(kappa >= 1.0) {
            return Err(Error::argument(format!(
                "condition number must be >= 1, got {kappa}"
            )));
        }
        Self::geometric(rows, cols, 1.0, 1.0 / kappa, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::argument(
                "synthetic matrix dimensions must be positive",
            ));
        }
        let r = self.rows.min(self.cols);
        check_dim(r, self.singular_values.len())?;
        if self
            .singular_values
            .iter()
            .any(|&s| !(s > 0.0) || !s.is_finite())
        {
            return Err(Error::argument(
                "singular values must be positive and finite",
            ));
        }
        if self.singular_values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::argument("singular values must be nonincreasing"));
        }
        Ok(())
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    // Column-major fill order is part of the determinism contract.
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: rand::Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal `rows × cols` factor from the QR of a Gaussian matrix.
pub fn orthonormal_factor<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let g = gaussian_matrix(rng, rows, cols);
    g.qr().q()
}

/// Builds `A = U diag(s) Vᵀ` with orthonormal `U`, `V` drawn from the seed.
pub fn make_conditioned_matrix(spec: &SyntheticSpec) -> Result<Matrix> {
    spec.validate()?;
    let r = spec.rows.min(spec.cols);
    let mut rng = seeded_rng(spec.seed);
    let u = orthonormal_factor(&mut rng, spec.rows, r);
    let v = orthonormal_factor(&mut rng, spec.cols, r);
    let s = Vector::from_column_slice(&spec.singular_values);
    Ok(u * Matrix::from_diagonal(&s) * v.transpose())
}

/// `(‖z‖, ‖z‖_A, ‖z‖_{A⁻¹})` for symmetric positive definite `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorms {
    pub euclidean: f64,
    pub a_norm: f64,
    pub a_inv_norm: f64,
}

pub fn is_symmetric(a: &Matrix, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() <= rel_tol * scale
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn spd_cholesky(a: &Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if !is_symmetric(a, 1e-12) {
        return Err(Error::argument("matrix is not symmetric"));
    }
    ensure_finite("matrix", a.as_slice())?;
    Cholesky::new(a.clone()).ok_or_else(|| Error::argument("matrix is not positive definite"))
}

pub fn weighted_norms(z: &Vector, a: &Matrix) -> Result<WeightedNorms> {
    check_dim(a.nrows(), z.len())?;
    let chol = spd_cholesky(a)?;
    let a_sq = z.dot(&(a * z)).max(0.0);
    let a_inv_sq = z.dot(&chol.solve(z)).max(0.0);
    Ok(WeightedNorms {
        euclidean: z.norm(),
        a_norm: a_sq.sqrt(),
        a_inv_norm: a_inv_sq.sqrt(),
    })
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues geometric in `[1, kappa]`.
pub fn random_spd<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, kappa: f64) -> Matrix {
    let q = orthonormal_factor(rng, n, n);
    let eig = Vector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            kappa.powf(i as f64 / (n - 1) as f64)
        }
    });
    let a = &q * Matrix::from_diagonal(&eig) * q.transpose();
    (&a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn identity_solve() {
        let m = Matrix::identity(3, 3);
        let b = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let rep = solve_square(&m, &b, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rep.solution, b);
        assert_eq!(rep.effective_rank, 3);
        assert!(!rep.used_pseudoinverse);
    }

    #[test]
    fn rank_one_diagonal_uses_minimum_norm() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        let b = Vector::from_vec(vec![2.0, 0.0]);
        let rep = solve_square(&m, &b, DEFAULT_RANK_TOL).unwrap();
        assert!(rep.used_pseudoinverse);
        assert_eq!(rep.effective_rank, 1);
        assert_close(rep.solution[0], 2.0, 1e-15);
        assert_close(rep.solution[1], 0.0, 1e-15);
    }

    #[test]
    fn conditioned_system_residual() {
        let spec = SyntheticSpec::geometric(5, 5, 1.0, 1e-6, 11).unwrap();
        let m = make_conditioned_matrix(&spec).unwrap();
        let b = gaussian_vector(&mut seeded_rng(12), 5);
        let rep = solve_square(&m, &b, DEFAULT_RANK_TOL).unwrap();
        assert!(!rep.used_pseudoinverse);
        assert!(
            rep.residual_norm <= 1e-8 * b.norm(),
            "{}",
            rep.residual_norm
        );
        assert_close(rep.condition / 1e6, 1.0, 1e-6);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = Matrix::from_element(2, 2, f64::NAN);
        let b = Vector::zeros(2);
        assert!(matches!(
            solve_square(&m, &b, DEFAULT_RANK_TOL),
            Err(Error::Argument(_))
        ));
        let m = Matrix::identity(2, 2);
        let b = Vector::from_vec(vec![1.0, f64::INFINITY]);
        assert!(solve_square(&m, &b, DEFAULT_RANK_TOL).is_err());
        assert!(solve_square(&Matrix::zeros(2, 3), &b, DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn svd_examples() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0]));
        let dec = svd(&d);
        assert_close(dec.s[0], 3.0, 1e-14);
        assert_close(dec.s[1], 1.0, 1e-14);

        let u = Vector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = Vector::from_vec(vec![3.0, 4.0]);
        let dec = svd(&(&u * v.transpose()));
        assert_close(dec.s[0], 15.0, 1e-12);
        assert_close(dec.s[1], 0.0, 1e-12);
    }

    #[test]
    fn svd_reconstruction_random() {
        let m = gaussian_matrix(&mut seeded_rng(3), 6, 4);
        let dec = svd(&m);
        assert!((dec.reconstruct() - &m).norm() <= 1e-12 * m.norm());
        let wide = m.transpose();
        let dec = svd(&wide);
        assert!((dec.reconstruct() - &wide).norm() <= 1e-12 * wide.norm());
    }

    #[test]
    fn condition_number_examples() {
        assert_close(condition_number(&Matrix::identity(4, 4)), 1.0, 1e-14);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![10.0, 0.1]));
        assert_close(condition_number(&d), 100.0, 1e-10);
        let spec = SyntheticSpec::geometric(8, 6, 1e4, 1.0, 5).unwrap();
        let a = make_conditioned_matrix(&spec).unwrap();
        assert_close(condition_number(&a) / 1e4, 1.0, 1e-6);
        assert_eq!(condition_number(&Matrix::zeros(3, 2)), f64::INFINITY);
        assert_eq!(condition_number(&Matrix::zeros(2, 3)), f64::INFINITY);
    }

    #[test]
    fn conditioned_matrix_examples() {
        let spec = SyntheticSpec::new(4, 4, vec![1.0; 4], 9).unwrap();
        let a = make_conditioned_matrix(&spec).unwrap();
        assert!((a.transpose() * &a - Matrix::identity(4, 4)).amax() <= 1e-10);
        assert_eq!(a, make_conditioned_matrix(&spec).unwrap());

        let spec = SyntheticSpec::geometric(30, 10, 1e3, 1.0, 4).unwrap();
        let a = make_conditioned_matrix(&spec).unwrap();
        assert_close(condition_number(&a) / 1e3, 1.0, 1e-8);
    }

    #[test]
    fn synthetic_spec_validation() {
        assert!(SyntheticSpec::new(3, 2, vec![1.0, 2.0], 0).is_err());
        assert!(SyntheticSpec::new(3, 2, vec![1.0, 0.0], 0).is_err());
        assert!(SyntheticSpec::new(3, 2, vec![1.0], 0).is_err());
        assert!(SyntheticSpec::new(0, 2, vec![], 0).is_err());
        assert!(SyntheticSpec::with_condition(3, 2, 0.5, 0).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let z = Vector::from_vec(vec![3.0, 4.0]);
        let n = weighted_norms(&z, &Matrix::identity(2, 2)).unwrap();
        assert_close(n.euclidean, 5.0, 1e-15);
        assert_close(n.a_norm, 5.0, 1e-15);
        assert_close(n.a_inv_norm, 5.0, 1e-15);

        let n = weighted_norms(
            &Vector::from_vec(vec![1.0]),
            &Matrix::from_element(1, 1, 4.0),
        )
        .unwrap();
        assert_close(n.a_norm, 2.0, 1e-15);
        assert_close(n.a_inv_norm, 0.5, 1e-15);

        let not_spd = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(weighted_norms(&z, &not_spd).is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(weighted_norms(&z, &asym).is_err());
    }

    #[test]
    fn weighted_norms_cauchy_schwarz() {
        let mut rng = seeded_rng(21);
        let a = random_spd(&mut rng, 5, 50.0);
        for _ in 0..100 {
            let z = gaussian_vector(&mut rng, 5);
            let n = weighted_norms(&z, &a).unwrap();
            assert!(n.a_norm * n.a_inv_norm >= n.euclidean.powi(2) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn minimum_norm_beats_null_space_shifts() {
        let mut rng = seeded_rng(8);
        // Rank-3 5x5 matrix.
        let spec = SyntheticSpec::new(5, 3, vec![2.0, 1.0, 0.5], 1).unwrap();
        let tall = make_conditioned_matrix(&spec).unwrap();
        let m = &tall * gaussian_matrix(&mut rng, 3, 5);
        let b = &m * gaussian_vector(&mut rng, 5);
        let rep = solve_square(&m, &b, DEFAULT_RANK_TOL).unwrap();
        assert!(rep.used_pseudoinverse);
        assert_eq!(rep.effective_rank, 3);
        let dec = svd(&m);
        let null = dec.v.columns(3, 2).into_owned();
        for _ in 0..20 {
            let shift = &null * gaussian_vector(&mut rng, 2);
            let alt = &rep.solution + shift;
            assert!(rep.solution.norm() <= alt.norm() + 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nonsingular_solve_residual(seed in 0u64..10_000, k in 1usize..12) {
            let mut rng = seeded_rng(seed);
            let m = gaussian_matrix(&mut rng, k, k);
            let b = gaussian_vector(&mut rng, k);
            let rep = solve_square(&m, &b, DEFAULT_RANK_TOL).unwrap();
            let bound = 1e-10 * (m.norm() * rep.solution.norm() + b.norm());
            prop_assert!(rep.residual_norm <= bound);
        }

        #[test]
        fn svd_factors_orthonormal(seed in 0u64..10_000, rows in 1usize..9, cols in 1usize..9) {
            let m = gaussian_matrix(&mut seeded_rng(seed), rows, cols);
            let dec = svd(&m);
            let r = rows.min(cols);
            prop_assert!((dec.u.transpose() * &dec.u - Matrix::identity(r, r)).amax() <= 1e-12);
            prop_assert!((dec.v.transpose() * &dec.v - Matrix::identity(r, r)).amax() <= 1e-12);
            prop_assert!(dec.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn prescribed_spectrum_recovered(seed in 0u64..10_000, rows in 2usize..12, cols in 2usize..12, log_kappa in 0.0f64..6.0) {
            let spec = SyntheticSpec::geometric(rows, cols, 1.0, 10f64.powf(-log_kappa), seed).unwrap();
            let a = make_conditioned_matrix(&spec).unwrap();
            let dec = svd(&a);
            let top = spec.singular_values[0];
            for (got, want) in dec.s.iter().zip(&spec.singular_values) {
                prop_assert!((got - want).abs() <= 1e-10 * top);
            }
        }
    }
}
