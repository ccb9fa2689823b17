//! Extrapolators: RNA, DNA, DNA-1, DNA-2, DNA-3 and Anderson acceleration.
//!
//! Each one maps an [`IterateWindow`] to coefficients `c` and the combined
//! point `Xc = Σ cᵢ xᵢ`. They differ only in the small `(K+1) × (K+1)`
//! system they solve:
//!
//! | method   | system                                  | normalization |
//! |----------|-----------------------------------------|---------------|
//! | RNA      | `(R̃ᵀR̃ + λI) z = 1`                      | `c = z/zᵀ1`   |
//! | DNA      | `XᵀR c = −Xᵀ∇f(0)`                      | none          |
//! | DNA-1    | `XᵀR̃ z = 1`                             | `c = z/zᵀ1`   |
//! | DNA-2    | `(XᵀR + λXᵀX + εI) c = λXᵀy − Xᵀ∇f(0)`  | none          |
//! | DNA-3    | `(XᵀR + λI) c = λe − Xᵀ∇f(0)`           | none          |
//! | Anderson | `FᵀF z = 1`                             | `c = z/zᵀ1`   |
//!
//! `R̃` holds the scaled steps `(xᵢ − xᵢ₊₁)/αᵢ` (the gradients, for GD
//! windows) and `R = R̃ − ∇f(0)·1ᵀ`, which makes `Rc + ∇f(0)` exact for the
//! gradient at `Xc` whenever `f` is quadratic.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{solve_square, Matrix, SolveReport, Vector, DEFAULT_RANK_TOL};

/// `K + 1` base points, the point each one stepped to, and the stepsizes.
///
/// For a plain GD run the successor of `xᵢ` is `xᵢ₊₁`
/// ([`IterateWindow::from_sequence`]); schedules that restart from
/// extrapolated points pair each base with its own GD output instead.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateWindow {
    points: Vec<Vector>,
    successors: Vec<Vector>,
    stepsizes: Vec<f64>,
}

impl IterateWindow {
    /// Window over consecutive iterates `x_0 … x_{K+1}` with stepsizes `α_0 … α_K`.
    pub fn from_sequence(iterates: &[Vector], stepsizes: &[f64]) -> Result<Self> {
        if iterates.len() < 2 {
            return Err(Error::argument("a window needs at least two iterates"));
        }
        check_dim(iterates.len() - 1, stepsizes.len())?;
        Self::from_steps(
            iterates[..iterates.len() - 1].to_vec(),
            iterates[1..].to_vec(),
            stepsizes.to_vec(),
        )
    }

    pub fn from_steps(
        points: Vec<Vector>,
        successors: Vec<Vector>,
        stepsizes: Vec<f64>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::argument("a window needs at least one step"));
        }
        check_dim(points.len(), successors.len())?;
        check_dim(points.len(), stepsizes.len())?;
        let n = points[0].len();
        for v in points.iter().chain(&successors) {
            check_dim(n, v.len())?;
        }
        if let Some(a) = stepsizes.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::argument(format!(
                "stepsizes must be positive, got {a}"
            )));
        }
        Ok(IterateWindow {
            points,
            successors,
            stepsizes,
        })
    }

    /// Number of combined iterates, `K + 1`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn successors(&self) -> &[Vector] {
        &self.successors
    }

    pub fn stepsizes(&self) -> &[f64] {
        &self.stepsizes
    }

    /// `x_K`, the newest combined iterate.
    pub fn last_point(&self) -> &Vector {
        self.points.last().expect("nonempty window")
    }

    /// `x_{K+1}`, the newest iterate in the window.
    pub fn last_successor(&self) -> &Vector {
        self.successors.last().expect("nonempty window")
    }
}

/// `X`, `R̃`, `R` and `∇f(0)` for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrices {
    pub x: Matrix,
    pub r_tilde: Matrix,
    pub r: Matrix,
    pub g0: Vector,
}

pub fn build_residuals(w: &IterateWindow, g0: &Vector) -> Result<ResidualMatrices> {
    let n = w.dim();
    check_dim(n, g0.len())?;
    let cols = w.len();
    let x = Matrix::from_columns(&w.points);
    let mut r_tilde = Matrix::zeros(n, cols);
    let mut r = Matrix::zeros(n, cols);
    for (i, ((p, s), &alpha)) in w
        .points
        .iter()
        .zip(&w.successors)
        .zip(&w.stepsizes)
        .enumerate()
    {
        let step = (p - s) / alpha;
        r.set_column(i, &(&step - g0));
        r_tilde.set_column(i, &step);
    }
    Ok(ResidualMatrices {
        x,
        r_tilde,
        r,
        g0: g0.clone(),
    })
}

/// Coefficients plus the solver diagnostics behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSolve {
    pub coefficients: Vector,
    pub report: SolveReport,
    /// Normalization was degenerate; `coefficients` is the last-iterate indicator.
    pub fallback: bool,
}

fn last_indicator(len: usize) -> Vector {
    let mut e = Vector::zeros(len);
    e[len - 1] = 1.0;
    e
}

/// `c = z / zᵀ1`, falling back to the last-iterate indicator when `zᵀ1` vanishes.
fn normalize(report: SolveReport) -> CoefficientSolve {
    let z = &report.solution;
    let total: f64 = z.sum();
    let degenerate = !total.is_finite()
        || total == 0.0
        || total.abs() < 1e-14 * z.norm()
        || z.iter().any(|v| !v.is_finite());
    if degenerate {
        return CoefficientSolve {
            coefficients: last_indicator(z.len()),
            report,
            fallback: true,
        };
    }
    let mut c = z / total;
    // One compensation pass so Σc = 1 up to the rounding of the sum itself.
    let last = c.len() - 1;
    c[last] += 1.0 - c.sum();
    CoefficientSolve {
        coefficients: c,
        report,
        fallback: false,
    }
}

fn ones(len: usize) -> Vector {
    Vector::from_element(len, 1.0)
}

fn check_regularizer(name: &str, value: f64, strict: bool) -> Result<()> {
    let ok = if strict { value > 0.0 } else { value >= 0.0 };
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::argument(format!("invalid {name} = {value}")))
    }
}

/// RNA: `(R̃ᵀR̃ + λI) z = 1`, `c = z / zᵀ1`.
pub fn rna_coefficients(r_tilde: &Matrix, lambda: f64) -> Result<CoefficientSolve> {
    check_regularizer("lambda", lambda, false)?;
    let k = r_tilde.ncols();
    let mut gram = r_tilde.tr_mul(r_tilde);
    for i in 0..k {
        gram[(i, i)] += lambda;
    }
    Ok(normalize(solve_square(&gram, &ones(k), DEFAULT_RANK_TOL)?))
}

/// DNA: `XᵀR c = −Xᵀ∇f(0)`, no summability constraint.
pub fn dna_coefficients(rm: &ResidualMatrices) -> Result<CoefficientSolve> {
    let system = rm.x.tr_mul(&rm.r);
    let rhs = -rm.x.tr_mul(&rm.g0);
    let report = solve_square(&system, &rhs, DEFAULT_RANK_TOL)?;
    Ok(CoefficientSolve {
        coefficients: report.solution.clone(),
        report,
        fallback: false,
    })
}

/// DNA-1: `XᵀR̃ z = 1`, `c = z / zᵀ1`.
pub fn dna1_coefficients(rm: &ResidualMatrices) -> Result<CoefficientSolve> {
    let system = rm.x.tr_mul(&rm.r_tilde);
    let k = system.ncols();
    Ok(normalize(solve_square(
        &system,
        &ones(k),
        DEFAULT_RANK_TOL,
    )?))
}

/// DNA-2: `(XᵀR + λXᵀX + εI) c = λXᵀy − Xᵀ∇f(0)`; with `symmetrize` the
/// `XᵀR` block is replaced by its symmetric part.
pub fn dna2_coefficients(
    rm: &ResidualMatrices,
    lambda: f64,
    y: &Vector,
    epsilon: f64,
    symmetrize: bool,
) -> Result<CoefficientSolve> {
    check_regularizer("lambda", lambda, true)?;
    check_regularizer("epsilon", epsilon, false)?;
    check_dim(rm.x.nrows(), y.len())?;
    let mut xr = rm.x.tr_mul(&rm.r);
    if symmetrize {
        xr = (&xr + xr.transpose()) * 0.5;
    }
    let k = xr.ncols();
    let system = xr + rm.x.tr_mul(&rm.x) * lambda + Matrix::identity(k, k) * epsilon;
    let rhs = rm.x.tr_mul(y) * lambda - rm.x.tr_mul(&rm.g0);
    let report = solve_square(&system, &rhs, DEFAULT_RANK_TOL)?;
    Ok(CoefficientSolve {
        coefficients: report.solution.clone(),
        report,
        fallback: false,
    })
}

/// DNA-3: `(XᵀR + λI) c = λe − Xᵀ∇f(0)`.
pub fn dna3_coefficients(
    rm: &ResidualMatrices,
    lambda: f64,
    e: &Vector,
) -> Result<CoefficientSolve> {
    check_regularizer("lambda", lambda, true)?;
    let k = rm.x.ncols();
    check_dim(k, e.len())?;
    let system = rm.x.tr_mul(&rm.r) + Matrix::identity(k, k) * lambda;
    let rhs = e * lambda - rm.x.tr_mul(&rm.g0);
    let report = solve_square(&system, &rhs, DEFAULT_RANK_TOL)?;
    Ok(CoefficientSolve {
        coefficients: report.solution.clone(),
        report,
        fallback: false,
    })
}

/// Anderson: `min ‖Fc‖` subject to `Σc = 1` through `FᵀF z = 1`, `c = z/zᵀ1`.
///
/// When `FᵀF` is singular and `1` reaches into its null space, the answer is
/// the `δ → 0` limit of `(FᵀF + δI)⁻¹1`: the null-space projection of `1`,
/// which combines the residuals to zero.
///
/// Columns are equilibrated first (`D = diag(1/‖fᵢ‖)`, solving
/// `DFᵀFD ẑ = D1`, `z = Dẑ`); late residuals are orders of magnitude smaller
/// than early ones and would otherwise be truncated away.
pub fn anderson_coefficients(residuals: &Matrix) -> Result<CoefficientSolve> {
    let k = residuals.ncols();
    let scale = Vector::from_iterator(
        k,
        residuals.column_iter().map(|c| {
            let norm = c.norm();
            if norm > 0.0 && norm.is_finite() {
                1.0 / norm
            } else {
                1.0
            }
        }),
    );
    let scaled = residuals * Matrix::from_diagonal(&scale);
    let gram = scaled.tr_mul(&scaled);
    let mut report = solve_square(&gram, &scale, DEFAULT_RANK_TOL)?;
    if report.used_pseudoinverse && report.effective_rank > 0 {
        let dec = crate::linalg::svd(&gram);
        let null = dec
            .v
            .columns(report.effective_rank, k - report.effective_rank);
        let projected = &null * null.tr_mul(&scale);
        if projected.dot(&scale) > 1e-8 * scale.norm_squared() {
            report.solution = projected;
        }
    }
    report.solution.component_mul_assign(&scale);
    Ok(normalize(report))
}

/// `Xc`.
pub fn extrapolate_point(x: &Matrix, c: &Vector) -> Result<Vector> {
    check_dim(x.ncols(), c.len())?;
    Ok(x * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Rna,
    Dna,
    Dna1,
    Dna2,
    Dna3,
    Anderson,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rna,
        Method::Dna,
        Method::Dna1,
        Method::Dna2,
        Method::Dna3,
        Method::Anderson,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rna => "rna",
            Method::Dna => "dna",
            Method::Dna1 => "dna1",
            Method::Dna2 => "dna2",
            Method::Dna3 => "dna3",
            Method::Anderson => "anderson",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::argument(format!("unknown method '{s}'")))
    }
}

/// Reference point `y` for DNA-2.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PointReference {
    /// `x_K`, the newest combined iterate.
    #[default]
    LastIterate,
    Fixed(Vector),
}

/// Reference coefficients `e` for DNA-3.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CoefficientReference {
    #[default]
    LastIterateIndicator,
    Zero,
    /// `1/(K+1)` everywhere.
    Uniform,
    Fixed(Vector),
}

impl CoefficientReference {
    pub fn resolve(&self, len: usize) -> Result<Vector> {
        match self {
            CoefficientReference::LastIterateIndicator => Ok(last_indicator(len)),
            CoefficientReference::Zero => Ok(Vector::zeros(len)),
            CoefficientReference::Uniform => Ok(Vector::from_element(len, 1.0 / len as f64)),
            CoefficientReference::Fixed(e) => {
                check_dim(len, e.len())?;
                Ok(e.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolatorConfig {
    pub method: Method,
    pub lambda: f64,
    /// Extra `ε‖c‖²` stabilizer, DNA-2 only.
    pub epsilon: f64,
    pub point_reference: PointReference,
    pub coefficient_reference: CoefficientReference,
    pub symmetrize: bool,
}

impl ExtrapolatorConfig {
    pub const DEFAULT_LAMBDA: f64 = 1e-8;
    pub const DEFAULT_EPSILON: f64 = 1e-14;

    pub fn new(method: Method) -> Self {
        ExtrapolatorConfig {
            method,
            lambda: Self::DEFAULT_LAMBDA,
            epsilon: Self::DEFAULT_EPSILON,
            point_reference: PointReference::default(),
            coefficient_reference: CoefficientReference::default(),
            symmetrize: false,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_point_reference(mut self, y: PointReference) -> Self {
        self.point_reference = y;
        self
    }

    pub fn with_coefficient_reference(mut self, e: CoefficientReference) -> Self {
        self.coefficient_reference = e;
        self
    }

    pub fn with_symmetrize(mut self, symmetrize: bool) -> Self {
        self.symmetrize = symmetrize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_regularizer("lambda", self.lambda, false)?;
        check_regularizer("epsilon", self.epsilon, false)
    }

    pub fn coefficients(
        &self,
        w: &IterateWindow,
        rm: &ResidualMatrices,
    ) -> Result<CoefficientSolve> {
        match self.method {
            Method::Rna => rna_coefficients(&rm.r_tilde, self.lambda),
            Method::Dna => dna_coefficients(rm),
            Method::Dna1 => dna1_coefficients(rm),
            Method::Dna2 => {
                let y = match &self.point_reference {
                    PointReference::LastIterate => w.last_point().clone(),
                    PointReference::Fixed(y) => y.clone(),
                };
                dna2_coefficients(rm, self.lambda, &y, self.epsilon, self.symmetrize)
            }
            Method::Dna3 => {
                let e = self.coefficient_reference.resolve(w.len())?;
                dna3_coefficients(rm, self.lambda, &e)
            }
            Method::Anderson => {
                // Fixed-point residuals Φ(xᵢ) − xᵢ = successorᵢ − xᵢ.
                let f = Matrix::from_columns(
                    &w.successors
                        .iter()
                        .zip(&w.points)
                        .map(|(s, p)| s - p)
                        .collect::<Vec<_>>(),
                );
                anderson_coefficients(&f)
            }
        }
    }
}

/// Coefficients, combined point and diagnostics of one extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationResult {
    pub coefficients: Vector,
    pub point: Vector,
    pub report: SolveReport,
    pub method: Method,
    pub fallback: bool,
}

/// Anything that turns a window into an extrapolated point.
pub trait Extrapolator: Sync {
    fn label(&self) -> String;

    fn extrapolate(&self, w: &IterateWindow, g0: &Vector) -> Result<ExtrapolationResult>;
}

impl Extrapolator for ExtrapolatorConfig {
    fn label(&self) -> String {
        self.method.to_string()
    }

    fn extrapolate(&self, w: &IterateWindow, g0: &Vector) -> Result<ExtrapolationResult> {
        self.validate()?;
        let rm = build_residuals(w, g0)?;
        let solve = self.coefficients(w, &rm)?;
        // Anderson combines the map images Φ(xᵢ), everything else the iterates.
        let point = match self.method {
            Method::Anderson => Matrix::from_columns(&w.successors) * &solve.coefficients,
            _ => extrapolate_point(&rm.x, &solve.coefficients)?,
        };
        Ok(ExtrapolationResult {
            coefficients: solve.coefficients,
            point,
            report: solve.report,
            method: self.method,
            fallback: solve.fallback,
        })
    }
}

/// One Anderson update from the history `(xᵢ, Φ(xᵢ))`, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct AndersonStep {
    pub next: Vector,
    pub coefficients: Vector,
    pub fallback: bool,
}

/// Uses the newest `min(depth, k) + 1` pairs, `k + 1` being the history length.
pub fn anderson_step(points: &[Vector], images: &[Vector], depth: usize) -> Result<AndersonStep> {
    if points.is_empty() {
        return Err(Error::argument(
            "Anderson step needs at least one evaluation",
        ));
    }
    check_dim(points.len(), images.len())?;
    let k = points.len() - 1;
    let used = depth.min(k) + 1;
    let start = points.len() - used;
    let n = points[0].len();
    let mut f = Matrix::zeros(n, used);
    for (j, i) in (start..points.len()).enumerate() {
        check_dim(n, points[i].len())?;
        check_dim(n, images[i].len())?;
        f.set_column(j, &(&images[i] - &points[i]));
    }
    let solve = anderson_coefficients(&f)?;
    if solve.fallback {
        return Ok(AndersonStep {
            next: images[points.len() - 1].clone(),
            coefficients: solve.coefficients,
            fallback: true,
        });
    }
    let mut next = Vector::zeros(n);
    for (j, i) in (start..points.len()).enumerate() {
        next.axpy(solve.coefficients[j], &images[i], 1.0);
    }
    Ok(AndersonStep {
        next,
        coefficients: solve.coefficients,
        fallback: false,
    })
}

/// Trajectory of an Anderson-accelerated fixed-point iteration.
#[derive(Debug, Clone)]
pub struct AndersonRun {
    pub iterates: Vec<Vector>,
    /// `‖Φ(xᵢ) − xᵢ‖` for every evaluated iterate.
    pub residual_norms: Vec<f64>,
    pub fallbacks: usize,
    pub converged: bool,
}

/// Runs `x_{k+1} = Σ ĉᵢ Φ(x_{k−m_k+i})` until `‖Φ(x) − x‖ ≤ tol` or
/// `max_steps` map evaluations. `depth = 0` is plain Picard iteration.
pub fn anderson_solve<F>(
    phi: F,
    x0: &Vector,
    depth: usize,
    max_steps: usize,
    tol: f64,
) -> Result<AndersonRun>
where
    F: Fn(&Vector) -> Vector,
{
    let mut points = vec![x0.clone()];
    let mut images: Vec<Vector> = Vec::new();
    let mut residual_norms = Vec::new();
    let mut fallbacks = 0;
    for _ in 0..max_steps {
        let x = points.last().expect("nonempty");
        let image = phi(x);
        check_dim(x.len(), image.len())?;
        let res = (&image - x).norm();
        residual_norms.push(res);
        images.push(image);
        if res <= tol {
            return Ok(AndersonRun {
                iterates: points,
                residual_norms,
                fallbacks,
                converged: true,
            });
        }
        let keep = depth + 1;
        let from = points.len().saturating_sub(keep);
        let step = anderson_step(&points[from..], &images[from..], depth)?;
        if step.fallback {
            fallbacks += 1;
        }
        points.push(step.next);
    }
    Ok(AndersonRun {
        iterates: points,
        residual_norms,
        fallbacks,
        converged: false,
    })
}
