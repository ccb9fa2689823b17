//! Closed-form theory for `f(x) = ½xᵀAx` as executable checks.
//!
//! For a GD window `X` on `f`:
//!
//! * `f_D = 0`, `f_D1 = 1 / (2·1ᵀ(XᵀAX)⁻¹1)` and
//!   `f_R = 1ᵀG⁻¹(XᵀAX)G⁻¹1 / (2(1ᵀG⁻¹1)²)` with `G = XᵀA²X`;
//! * `f_R/f_D1 = ‖z‖²_{A⁻¹}‖y‖²/‖z‖⁴` where `z = ((AX)†)ᵀ1` and
//!   `y = ((A^{1/2}X)†)ᵀ1`, and `1 ≤ f_R/f_D1 ≤ U_R(z) ≤ κ(A)`;
//! * `(A^{1/2}X)† A^{−1/2} ((AX)†)ᵀ = (XᵀA²X)⁻¹` and `yᵀA^{−1/2}z = zᵀz`.

use nalgebra::SymmetricEigen;

use crate::error::{check_dim, Error, Result};
use crate::extrapolate::{Extrapolator, ExtrapolatorConfig, IterateWindow, Method};
use crate::linalg::{
    condition_number, gaussian_vector, is_symmetric, pinv, random_spd, seeded_rng, svd,
    weighted_norms, Matrix, Vector, DEFAULT_RANK_TOL,
};
use crate::parallel;

const EIGEN_FLOOR: f64 = 1e-14;

/// `(A^{1/2}, A^{−1/2})` from the eigendecomposition of the symmetrized `A`.
pub fn sqrt_spd(a: &Matrix) -> Result<(Matrix, Matrix)> {
    if !a.is_square() {
        return Err(Error::argument("matrix square root needs a square matrix"));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let q = &eig.eigenvectors;
    let root = q * Matrix::from_diagonal(&clamped.map(f64::sqrt)) * q.transpose();
    let inv_root = q * Matrix::from_diagonal(&clamped.map(|l| 1.0 / l.sqrt())) * q.transpose();
    Ok((root, inv_root))
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn extreme_eigenvalues(a: &Matrix) -> (f64, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.min(), eig.max())
}

/// `U_R(z) = ‖z‖²_{A⁻¹}‖z‖²_A / ‖z‖⁴`.
pub fn u_r(a: &Matrix, z: &Vector) -> Result<f64> {
    let w = weighted_norms(z, a)?;
    let e2 = w.euclidean * w.euclidean;
    Ok((w.a_inv_norm * w.a_inv_norm) * (w.a_norm * w.a_norm) / (e2 * e2))
}

/// Right side of the DNA rate bound
/// `λ_max κ · 2ξᵏ/(1+ξ²ᵏ) · ‖x0 − x*‖²`, `ξ = (√L−√μ)/(√L+√μ)`.
pub fn rate_bound(a: &Matrix, x0: &Vector, x_star: &Vector, k: usize) -> Result<f64> {
    check_dim(a.nrows(), x0.len())?;
    check_dim(a.nrows(), x_star.len())?;
    let (mu, l) = extreme_eigenvalues(a);
    if !(mu > 0.0) {
        return Err(Error::argument(format!(
            "rate bound needs a positive definite matrix, λ_min = {mu}"
        )));
    }
    let xi = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
    let xk = xi.powi(k as i32);
    Ok(l * (l / mu) * (2.0 * xk / (1.0 + xk * xk)) * (x0 - x_star).norm_squared())
}

/// Objective values at the DNA, DNA-1 and RNA points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormValues {
    pub f_d: f64,
    pub f_d1: f64,
    pub f_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport {
    /// `f_R / f_D1` from the closed forms.
    pub ratio: f64,
    /// `‖z‖²_{A⁻¹}‖y‖²/‖z‖⁴`.
    pub ratio_identity: f64,
    pub u_r: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinvIdentityReport {
    pub matrix_diff: f64,
    pub matrix_scale: f64,
    /// `|yᵀA^{−1/2}z − zᵀz|`.
    pub inner_diff: f64,
    pub inner_scale: f64,
}

impl PinvIdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.matrix_diff <= tol * self.matrix_scale && self.inner_diff <= tol * self.inner_scale
    }
}

/// A Hessian `A` and a window `X` of GD iterates on `½xᵀAx`.
#[derive(Debug, Clone)]
pub struct QuadraticCase {
    a: Matrix,
    x: Matrix,
    window: Option<IterateWindow>,
}

fn inverse_spd(m: &Matrix, what: &str) -> Result<Matrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Rank(format!("{what} is not positive definite")))
}

impl QuadraticCase {
    pub fn new(a: Matrix, x: Matrix) -> Result<Self> {
        Self::validate(&a, &x)?;
        Ok(QuadraticCase { a, x, window: None })
    }

    /// Runs `window_len` GD steps with `α = 1/λ_max` from `x0`; `X` holds the
    /// first `window_len` iterates.
    pub fn from_gd(a: Matrix, x0: &Vector, window_len: usize) -> Result<Self> {
        check_dim(a.nrows(), x0.len())?;
        if window_len == 0 {
            return Err(Error::argument("window must hold at least one iterate"));
        }
        let (_, l) = extreme_eigenvalues(&a);
        let alpha = 1.0 / l;
        let mut iterates = vec![x0.clone()];
        for _ in 0..window_len {
            let x = iterates.last().expect("nonempty");
            iterates.push(x - &a * x * alpha);
        }
        let window = IterateWindow::from_sequence(&iterates, &vec![alpha; window_len])?;
        let x = Matrix::from_columns(window.points());
        Self::validate(&a, &x)?;
        Ok(QuadraticCase {
            a,
            x,
            window: Some(window),
        })
    }

    fn validate(a: &Matrix, x: &Matrix) -> Result<()> {
        check_dim(a.nrows(), x.nrows())?;
        if !a.is_square() || !is_symmetric(a, 1e-12) {
            return Err(Error::argument("A must be symmetric"));
        }
        if extreme_eigenvalues(a).0 <= 0.0 {
            return Err(Error::argument("A must be positive definite"));
        }
        let s = svd(x);
        if x.ncols() > x.nrows() || !(s.smallest() > 1e-10 * s.largest()) {
            return Err(Error::Rank(
                "window columns are not linearly independent".into(),
            ));
        }
        Ok(())
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn window(&self) -> Option<&IterateWindow> {
        self.window.as_ref()
    }

    pub fn value(&self, p: &Vector) -> f64 {
        0.5 * p.dot(&(&self.a * p))
    }

    /// `XᵀAX` and `XᵀA²X`.
    pub fn grams(&self) -> (Matrix, Matrix) {
        let ax = &self.a * &self.x;
        (self.x.tr_mul(&ax), ax.tr_mul(&ax))
    }

    /// Worst condition number of the two Gram matrices.
    pub fn gram_condition(&self) -> f64 {
        let (g1, g2) = self.grams();
        condition_number(&g1).max(condition_number(&g2))
    }

    pub fn closed_form_values(&self) -> Result<ClosedFormValues> {
        let (g1, g2) = self.grams();
        let ones = Vector::from_element(self.x.ncols(), 1.0);
        let g1_inv = inverse_spd(&g1, "XᵀAX")?;
        let g2_inv = inverse_spd(&g2, "XᵀA²X")?;
        let f_d1 = 1.0 / (2.0 * ones.dot(&(&g1_inv * &ones)));
        let w = &g2_inv * &ones;
        let s = ones.dot(&w);
        let f_r = w.dot(&(&g1 * &w)) / (2.0 * s * s);
        Ok(ClosedFormValues {
            f_d: 0.0,
            f_d1,
            f_r,
        })
    }

    /// `(z, y) = (((AX)†)ᵀ1, ((A^{1/2}X)†)ᵀ1)`.
    pub fn probe_vectors(&self) -> Result<(Vector, Vector)> {
        let (root, _) = sqrt_spd(&self.a)?;
        let ones = Vector::from_element(self.x.ncols(), 1.0);
        let z = pinv(&(&self.a * &self.x), DEFAULT_RANK_TOL).transpose() * &ones;
        let y = pinv(&(root * &self.x), DEFAULT_RANK_TOL).transpose() * &ones;
        Ok((z, y))
    }

    pub fn ratio_and_bounds(&self) -> Result<RatioReport> {
        let values = self.closed_form_values()?;
        if !(values.f_d1 > 0.0) {
            return Err(Error::Rank(format!(
                "f_D1 = {} is not positive",
                values.f_d1
            )));
        }
        let (z, y) = self.probe_vectors()?;
        let norms = weighted_norms(&z, &self.a)?;
        let z2 = norms.euclidean * norms.euclidean;
        let ratio_identity = norms.a_inv_norm * norms.a_inv_norm * y.norm_squared() / (z2 * z2);
        let (mu, l) = extreme_eigenvalues(&self.a);
        Ok(RatioReport {
            ratio: values.f_r / values.f_d1,
            ratio_identity,
            u_r: u_r(&self.a, &z)?,
            kappa: l / mu,
        })
    }

    pub fn pinv_identity_check(&self) -> Result<PinvIdentityReport> {
        let (root, inv_root) = sqrt_spd(&self.a)?;
        let (_, g2) = self.grams();
        let rhs = inverse_spd(&g2, "XᵀA²X")?;
        let p_ax = pinv(&(&self.a * &self.x), DEFAULT_RANK_TOL);
        let p_rx = pinv(&(&root * &self.x), DEFAULT_RANK_TOL);
        let lhs = &p_rx * &inv_root * p_ax.transpose();
        let (z, y) = self.probe_vectors()?;
        let zz = z.dot(&z);
        Ok(PinvIdentityReport {
            matrix_diff: (lhs - &rhs).amax(),
            matrix_scale: rhs.amax(),
            inner_diff: (y.dot(&(&inv_root * &z)) - zz).abs(),
            inner_scale: zz,
        })
    }

    /// `(f_D, f_D1, f_R)` evaluated at the points the extrapolators produce
    /// with `λ = ε = 0`; needs a GD-built case.
    pub fn coefficient_path_values(&self) -> Result<ClosedFormValues> {
        let w = self
            .window
            .as_ref()
            .ok_or_else(|| Error::argument("coefficient path needs a case built from GD"))?;
        let g0 = Vector::zeros(self.a.nrows());
        let eval = |m: Method| -> Result<f64> {
            let cfg = ExtrapolatorConfig::new(m)
                .with_lambda(0.0)
                .with_epsilon(0.0);
            Ok(self.value(&cfg.extrapolate(w, &g0)?.point))
        };
        Ok(ClosedFormValues {
            f_d: eval(Method::Dna)?,
            f_d1: eval(Method::Dna1)?,
            f_r: eval(Method::Rna)?,
        })
    }
}

/// Relative difference with an absolute floor for values near zero.
pub fn relative_error(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Seeded GD windows on random SPD matrices, kept only when both Gram
/// matrices have condition at most `max_gram_condition`.
pub fn build_corpus(count: usize, seed: u64, max_gram_condition: f64) -> Vec<QuadraticCase> {
    let kappas = [10.0, 1e2, 1e3];
    let mut cases = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while cases.len() < count {
        let mut rng = seeded_rng(seed.wrapping_mul(1_000_003).wrapping_add(attempt));
        attempt += 1;
        let n = 4 + (attempt as usize % 9);
        let window_len = 2 + (attempt as usize / 3) % 3;
        let kappa = kappas[attempt as usize % kappas.len()];
        let a = random_spd(&mut rng, n, kappa);
        let x0 = gaussian_vector(&mut rng, n);
        if let Ok(case) = QuadraticCase::from_gd(a, &x0, window_len) {
            if case.gram_condition() <= max_gram_condition {
                cases.push(case);
            }
        }
    }
    cases
}

/// Outcome of one named check over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed error in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct CaseMeasurements {
    closed_form: f64,
    identity: f64,
    lower: f64,
    upper_u: f64,
    upper_kappa: f64,
    pinv: f64,
}

fn measure(case: &QuadraticCase) -> Result<CaseMeasurements> {
    let cf = case.closed_form_values()?;
    let path = case.coefficient_path_values()?;
    let r = case.ratio_and_bounds()?;
    let p = case.pinv_identity_check()?;
    Ok(CaseMeasurements {
        closed_form: relative_error(path.f_d1, cf.f_d1).max(relative_error(path.f_r, cf.f_r)),
        identity: relative_error(r.ratio_identity, r.ratio),
        lower: 1.0 - r.ratio,
        upper_u: r.ratio / r.u_r - 1.0,
        upper_kappa: r.u_r / r.kappa - 1.0,
        pinv: (p.matrix_diff / p.matrix_scale).max(p.inner_diff / p.inner_scale),
    })
}

/// Runs every quadratic-theory check over `cases` (in parallel when enabled).
pub fn run_corpus(cases: &[QuadraticCase]) -> Vec<OracleCheck> {
    let results = parallel::map(cases, measure);
    let specs: [(&'static str, f64, fn(&CaseMeasurements) -> f64); 6] = [
        ("closed-form values match coefficient path", 1e-8, |m| {
            m.closed_form
        }),
        ("ratio identity matches direct ratio", 1e-8, |m| m.identity),
        ("ratio >= 1", 1e-10, |m| m.lower),
        ("ratio <= U_R(z)", 1e-8, |m| m.upper_u),
        ("U_R(z) <= kappa", 1e-8, |m| m.upper_kappa),
        ("pseudo-inverse identities", 1e-8, |m| m.pinv),
    ];
    specs
        .iter()
        .map(|&(name, tolerance, get)| {
            let mut failures = 0;
            let mut worst = f64::NEG_INFINITY;
            for r in &results {
                match r {
                    Ok(m) => {
                        let v = get(m);
                        worst = worst.max(v);
                        if !(v <= tolerance) {
                            failures += 1;
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            OracleCheck {
                name,
                cases: results.len(),
                failures,
                worst,
                tolerance,
            }
        })
        .collect()
}

/// The built-in corpus: 100 cases, Gram condition at most `1e10`.
pub fn default_corpus() -> Vec<QuadraticCase> {
    build_corpus(100, 2024, 1e10)
}
