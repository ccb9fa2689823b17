//! Benchmark objectives: least squares, ridge, logistic regression, and a
//! general quadratic `½xᵀHx + bᵀx` used by the theory checks.
//!
//! Every problem caches `∇f(0)` at construction; the DNA family needs it for
//! every window and it never changes.

use nalgebra::SymmetricEigen;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{spd_cholesky, svd, Matrix, Vector};

/// A minimizer and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vector,
    pub value: f64,
}

/// A smooth objective with exact value and gradient oracles.
///
/// Oracles are pure: the same input always yields bit-identical output.
/// Callers must pass points of length [`Problem::dim`]; use
/// [`Problem::evaluate`] for a checked entry point.
pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector;

    fn value_grad(&self, x: &Vector) -> (f64, Vector) {
        (self.value(x), self.gradient(x))
    }

    /// Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    /// Strong-convexity modulus, zero when unknown or absent.
    fn strong_convexity(&self) -> f64;

    /// `∇f(0)`, computed once at construction.
    fn grad_at_origin(&self) -> &Vector;

    /// Closed-form minimizer when one exists.
    fn closed_form_optimum(&self) -> Result<Optimum> {
        Err(Error::OptimumUnavailable(format!(
            "{} has no closed-form optimum",
            self.name()
        )))
    }

    /// Constant Hessian of quadratic objectives.
    fn hessian(&self) -> Option<&Matrix> {
        None
    }

    fn evaluate(&self, x: &Vector) -> Result<(f64, Vector)> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value_grad(x))
    }
}

fn min_norm_ls(a: &Matrix, y: &Vector, rank_tol: f64) -> Result<Vector> {
    let dec = svd(a);
    let (m, n) = a.shape();
    if m < n || dec.smallest() <= rank_tol * dec.largest() {
        return Err(Error::OptimumUnavailable(format!(
            "least-squares matrix is rank deficient (s_min = {:e}, s_max = {:e})",
            dec.smallest(),
            dec.largest()
        )));
    }
    Ok(dec.pseudo_inverse(0.0) * y)
}

/// `f(x) = ½‖Ax − y‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Matrix,
    y: Vector,
    gram: Matrix,
    lipschitz: f64,
    mu: f64,
    grad0: Vector,
    optimum: std::result::Result<Optimum, String>,
}

impl LeastSquares {
    pub fn new(a: Matrix, y: Vector) -> Result<Self> {
        check_dim(a.nrows(), y.len())?;
        let dec = svd(&a);
        let s_max = dec.largest();
        let s_min = if a.nrows() >= a.ncols() {
            dec.smallest()
        } else {
            0.0
        };
        let gram = a.transpose() * &a;
        let mut p = LeastSquares {
            lipschitz: s_max * s_max,
            mu: s_min * s_min,
            a,
            y,
            gram,
            grad0: Vector::zeros(0),
            optimum: Err(String::new()),
        };
        p.grad0 = p.gradient(&Vector::zeros(p.dim()));
        p.optimum = match min_norm_ls(&p.a, &p.y, 1e-12) {
            Ok(x) => {
                let value = p.value(&x);
                Ok(Optimum { x, value })
            }
            Err(e) => Err(e.to_string()),
        };
        Ok(p)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn response(&self) -> &Vector {
        &self.y
    }
}

impl Problem for LeastSquares {
    fn name(&self) -> &'static str {
        "least-squares"
    }

    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.a * x - &self.y).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * x - &self.y))
    }

    fn value_grad(&self, x: &Vector) -> (f64, Vector) {
        let r = &self.a * x - &self.y;
        (0.5 * r.norm_squared(), self.a.tr_mul(&r))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn grad_at_origin(&self) -> &Vector {
        &self.grad0
    }

    fn closed_form_optimum(&self) -> Result<Optimum> {
        self.optimum.clone().map_err(Error::OptimumUnavailable)
    }

    fn hessian(&self) -> Option<&Matrix> {
        Some(&self.gram)
    }
}

/// `f(x) = ½‖Ax − y‖² + (μ/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct Ridge {
    a: Matrix,
    y: Vector,
    mu: f64,
    hessian: Matrix,
    lipschitz: f64,
    grad0: Vector,
    optimum: Optimum,
}

impl Ridge {
    /// Ridge problem with the default coefficient `μ = 1/n`.
    pub fn with_default_mu(a: Matrix, y: Vector) -> Result<Self> {
        let n = a.ncols().max(1);
        Self::new(a, y, 1.0 / n as f64)
    }

    pub fn new(a: Matrix, y: Vector, mu: f64) -> Result<Self> {
        check_dim(a.nrows(), y.len())?;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::argument(format!(
                "ridge coefficient must be positive, got {mu}"
            )));
        }
        let n = a.ncols();
        let s_max = svd(&a).largest();
        let hessian = a.transpose() * &a + Matrix::identity(n, n) * mu;
        let rhs = a.tr_mul(&y);
        let chol = spd_cholesky(&((&hessian + hessian.transpose()) * 0.5))?;
        let x_star = chol.solve(&rhs);
        let mut p = Ridge {
            a,
            y,
            mu,
            hessian,
            lipschitz: s_max * s_max + mu,
            grad0: Vector::zeros(0),
            optimum: Optimum {
                x: Vector::zeros(0),
                value: 0.0,
            },
        };
        p.grad0 = p.gradient(&Vector::zeros(n));
        let value = p.value(&x_star);
        p.optimum = Optimum { x: x_star, value };
        Ok(p)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl Problem for Ridge {
    fn name(&self) -> &'static str {
        "ridge"
    }

    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.a * x - &self.y).norm_squared() + 0.5 * self.mu * x.norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * x - &self.y)) + x * self.mu
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn grad_at_origin(&self) -> &Vector {
        &self.grad0
    }

    fn closed_form_optimum(&self) -> Result<Optimum> {
        Ok(self.optimum.clone())
    }

    fn hessian(&self) -> Option<&Matrix> {
        Some(&self.hessian)
    }
}

/// `log(1 + exp(u))` without overflow.
pub fn softplus(u: f64) -> f64 {
    (-u.abs()).exp().ln_1p() + u.max(0.0)
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `f(x) = Σᵢ log(1 + exp(−yᵢ⟨aᵢ, x⟩)) + (τ/2)‖x‖²` with samples `aᵢ` stored
/// as the columns of an `n × m` matrix.
#[derive(Debug, Clone)]
pub struct Logistic {
    samples: Matrix,
    labels: Vector,
    tau: f64,
    lipschitz: f64,
    grad0: Vector,
}

impl Logistic {
    /// Logistic problem with the default coefficient `τ = 1/(2m)`.
    pub fn with_default_tau(samples: Matrix, labels: Vector) -> Result<Self> {
        let m = samples.ncols().max(1);
        Self::new(samples, labels, 1.0 / (2.0 * m as f64))
    }

    pub fn new(samples: Matrix, labels: Vector, tau: f64) -> Result<Self> {
        check_dim(samples.ncols(), labels.len())?;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::argument(format!(
                "ridge coefficient must be nonnegative, got {tau}"
            )));
        }
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l != 1.0 && l != -1.0)
        {
            return Err(Error::Data(format!(
                "label {l} at sample {i} is not in {{-1, +1}}"
            )));
        }
        let s_max = svd(&samples).largest();
        let mut p = Logistic {
            lipschitz: 0.25 * s_max * s_max + tau,
            samples,
            labels,
            tau,
            grad0: Vector::zeros(0),
        };
        p.grad0 = p.gradient(&Vector::zeros(p.dim()));
        Ok(p)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn margins(&self, x: &Vector) -> Vector {
        self.samples.tr_mul(x).component_mul(&self.labels)
    }
}

impl Problem for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.samples.nrows()
    }

    fn value(&self, x: &Vector) -> f64 {
        let loss: f64 = self.margins(x).iter().map(|&t| softplus(-t)).sum();
        loss + 0.5 * self.tau * x.norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let margins = self.margins(x);
        let weights = Vector::from_fn(margins.len(), |i, _| -self.labels[i] * sigmoid(-margins[i]));
        &self.samples * weights + x * self.tau
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.tau
    }

    fn grad_at_origin(&self) -> &Vector {
        &self.grad0
    }
}

/// `f(x) = ½xᵀHx + bᵀx` with symmetric positive definite `H`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    h: Matrix,
    b: Vector,
    lipschitz: f64,
    mu: f64,
    optimum: Optimum,
}

impl Quadratic {
    pub fn new(h: Matrix, b: Vector) -> Result<Self> {
        check_dim(h.nrows(), b.len())?;
        let chol = spd_cholesky(&h)?;
        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        let lipschitz = eig.max();
        let mu = eig.min();
        let x = -chol.solve(&b);
        let value = 0.5 * b.dot(&x);
        Ok(Quadratic {
            h,
            b,
            lipschitz,
            mu,
            optimum: Optimum { x, value },
        })
    }

    /// `½xᵀHx`, minimized at the origin.
    pub fn homogeneous(h: Matrix) -> Result<Self> {
        let n = h.nrows();
        Self::new(h, Vector::zeros(n))
    }

    pub fn linear_term(&self) -> &Vector {
        &self.b
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.b.dot(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.h * x + &self.b
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn grad_at_origin(&self) -> &Vector {
        &self.b
    }

    fn closed_form_optimum(&self) -> Result<Optimum> {
        Ok(self.optimum.clone())
    }

    fn hessian(&self) -> Option<&Matrix> {
        Some(&self.h)
    }
}

/// Minimizes a strongly convex problem to `‖∇f(x)‖ ≤ tol` with accelerated
/// gradient descent (stepsize `1/L`, adaptive restart), starting at the origin.
pub fn numerical_optimum(p: &dyn Problem, tol: f64, max_iter: usize) -> Result<Optimum> {
    let l = p.lipschitz();
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::argument(format!("invalid Lipschitz constant {l}")));
    }
    let mu = p.strong_convexity();
    let momentum = if mu > 0.0 {
        let (sl, sm) = (l.sqrt(), mu.min(l).sqrt());
        Some((sl - sm) / (sl + sm))
    } else {
        None
    };

    let n = p.dim();
    let mut x = Vector::zeros(n);
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let mut best = x.clone();
    let mut best_norm = p.grad_at_origin().norm();
    if best_norm <= tol {
        let value = p.value(&x);
        return Ok(Optimum { x, value });
    }

    for _ in 0..max_iter {
        let gy = p.gradient(&y);
        let x_next = &y - &gy / l;
        let gx = p.gradient(&x_next);
        let gnorm = gx.norm();
        if !gnorm.is_finite() {
            break;
        }
        if gnorm < best_norm {
            best_norm = gnorm;
            best.copy_from(&x_next);
        }
        if gnorm <= tol {
            let value = p.value(&x_next);
            return Ok(Optimum { x: x_next, value });
        }
        let step = &x_next - &x;
        let restart = gy.dot(&step) > 0.0;
        let beta = if restart {
            theta = 1.0;
            0.0
        } else if let Some(b) = momentum {
            b
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let b = (theta - 1.0) / theta_next;
            theta = theta_next;
            b
        };
        y = &x_next + step * beta;
        x = x_next;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        grad_norm: best_norm,
        best: Box::new(best),
    })
}

/// Optimum used to compute `f − f*` gaps: the closed form when available,
/// otherwise [`numerical_optimum`] at `1e-12 · max(1, ‖∇f(0)‖)`.
pub fn reference_optimum(p: &dyn Problem) -> Result<Optimum> {
    match p.closed_form_optimum() {
        Ok(opt) => Ok(opt),
        Err(_) => {
            let tol = 1e-12 * p.grad_at_origin().norm().max(1.0);
            match numerical_optimum(p, tol, 2_000_000) {
                Ok(opt) => Ok(opt),
                // Roundoff can floor the gradient norm slightly above the target.
                Err(Error::NotConverged {
                    grad_norm, best, ..
                }) if grad_norm <= 1e3 * tol => {
                    let value = p.value(&best);
                    Ok(Optimum { x: *best, value })
                }
                Err(e) => Err(e),
            }
        }
    }
}
