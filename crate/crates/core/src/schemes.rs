//! Gradient descent and the three acceleration schedules built on it.
//!
//! * **online1**: `k` GD steps from the current start, extrapolate over that
//!   window, restart GD from the extrapolated point.
//! * **online2**: after an initial `k` steps, one GD step per cycle from the
//!   latest extrapolated point; the window slides by one pair each time.
//! * **offline**: GD runs untouched and every window of `k + 1` consecutive
//!   iterates is extrapolated on the side.
//!
//! Budgets count gradient evaluations. `∇f(0)` is cached by the problem and
//! extrapolations are free, so a finished trace always ends at `budget`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::extrapolate::{Extrapolator, IterateWindow};
use crate::linalg::Vector;
use crate::problems::{reference_optimum, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    PlainGd,
    Online1,
    Online2,
    Offline,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::PlainGd => "gd",
            Scheme::Online1 => "online1",
            Scheme::Online2 => "online2",
            Scheme::Offline => "offline",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "plain-gd" => Ok(Scheme::PlainGd),
            "online1" => Ok(Scheme::Online1),
            "online2" => Ok(Scheme::Online2),
            "offline" => Ok(Scheme::Offline),
            _ => Err(Error::argument(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Stepsize {
    /// `1/L` from the problem's Lipschitz constant.
    #[default]
    InverseLipschitz,
    Constant(f64),
}

impl Stepsize {
    pub fn resolve(self, p: &dyn Problem) -> Result<f64> {
        let alpha = match self {
            Stepsize::InverseLipschitz => 1.0 / p.lipschitz(),
            Stepsize::Constant(a) => a,
        };
        if alpha > 0.0 && alpha.is_finite() {
            Ok(alpha)
        } else {
            Err(Error::argument(format!(
                "stepsize must be positive and finite, got {alpha}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// `k`: GD steps feeding each online1 extrapolation, window length otherwise.
    pub window: usize,
    /// Total gradient evaluations.
    pub budget: usize,
    pub stepsize: Stepsize,
    /// Restart from the last GD iterate when an extrapolation is non-finite
    /// or its gap exceeds ten times the gap it started from.
    pub guard: bool,
    /// Optimal value for gaps; computed with [`reference_optimum`] when absent.
    pub f_star: Option<f64>,
}

impl SchemeConfig {
    pub const DEFAULT_WINDOW: usize = 3;

    pub fn new(scheme: Scheme, window: usize, budget: usize) -> Self {
        SchemeConfig {
            scheme,
            window,
            budget,
            stepsize: Stepsize::default(),
            guard: true,
            f_star: None,
        }
    }

    pub fn with_stepsize(mut self, stepsize: Stepsize) -> Self {
        self.stepsize = stepsize;
        self
    }

    pub fn with_guard(mut self, guard: bool) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::argument("window k must be at least 1"));
        }
        if self.budget < self.window + 1 {
            return Err(Error::argument(format!(
                "budget {} must be at least window + 1 = {}",
                self.budget,
                self.window + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Gd,
    Extrapolation,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Gd => "gd",
            EventKind::Extrapolation => "extrapolation",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(EventKind::Gd),
            "extrapolation" => Ok(EventKind::Extrapolation),
            _ => Err(Error::argument(format!("unknown event kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub grad_evals: usize,
    pub kind: EventKind,
    pub point: Vector,
    pub f_value: f64,
    pub f_gap: f64,
    pub fallback: bool,
}

/// The serialized columns of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub grad_evals: usize,
    pub event: EventKind,
    pub f_value: f64,
    pub f_gap: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub label: String,
    pub scheme: Scheme,
    pub f_star: f64,
    pub events: Vec<TraceEvent>,
    /// A GD iterate became non-finite; the trace stops at the last finite one.
    pub diverged: bool,
}

impl ConvergenceTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.events
            .iter()
            .map(|e| TraceRow {
                grad_evals: e.grad_evals,
                event: e.kind,
                f_value: e.f_value,
                f_gap: e.f_gap,
                fallback: e.fallback,
            })
            .collect()
    }

    pub fn gd_events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Gd)
    }

    pub fn extrapolation_events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Extrapolation)
    }

    pub fn extrapolations(&self) -> usize {
        self.extrapolation_events().count()
    }

    pub fn fallbacks(&self) -> usize {
        self.events.iter().filter(|e| e.fallback).count()
    }

    pub fn grad_evals(&self) -> usize {
        self.events.last().map_or(0, |e| e.grad_evals)
    }

    pub fn final_gap(&self) -> f64 {
        self.events.last().map_or(f64::NAN, |e| e.f_gap)
    }

    pub fn best_gap(&self) -> f64 {
        self.events
            .iter()
            .map(|e| e.f_gap)
            .fold(f64::INFINITY, f64::min)
    }
}

fn is_finite(x: &Vector) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// `x_{t+1} = x_t − α∇f(x_t)` for `steps` steps; returns `x_0 … x_steps`.
pub fn gd_run(p: &dyn Problem, x0: &Vector, steps: usize, alpha: f64) -> Result<Vec<Vector>> {
    check_dim(p.dim(), x0.len())?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::argument(format!(
            "stepsize must be positive, got {alpha}"
        )));
    }
    if steps == 0 {
        return Err(Error::argument("gd_run needs at least one step"));
    }
    let mut iterates = Vec::with_capacity(steps + 1);
    iterates.push(x0.clone());
    for t in 0..steps {
        let x = &iterates[t];
        let next = x - p.gradient(x) * alpha;
        if !is_finite(&next) {
            return Err(Error::Divergence {
                steps: t + 1,
                partial: iterates,
            });
        }
        iterates.push(next);
    }
    Ok(iterates)
}

/// Shared bookkeeping for every scheme.
struct Recorder<'a> {
    problem: &'a dyn Problem,
    alpha: f64,
    f_star: f64,
    guard: bool,
    evals: usize,
    events: Vec<TraceEvent>,
    diverged: bool,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a dyn Problem, cfg: &SchemeConfig, x0: &Vector) -> Result<Self> {
        check_dim(problem.dim(), x0.len())?;
        cfg.validate()?;
        let alpha = cfg.stepsize.resolve(problem)?;
        let f_star = match cfg.f_star {
            Some(v) => v,
            None => reference_optimum(problem)?.value,
        };
        let mut rec = Recorder {
            problem,
            alpha,
            f_star,
            guard: cfg.guard,
            evals: 0,
            events: Vec::new(),
            diverged: false,
        };
        rec.record(EventKind::Gd, x0.clone(), false);
        Ok(rec)
    }

    fn gap(&self, x: &Vector) -> f64 {
        self.problem.value(x) - self.f_star
    }

    fn record(&mut self, kind: EventKind, point: Vector, fallback: bool) {
        let f_value = self.problem.value(&point);
        self.events.push(TraceEvent {
            grad_evals: self.evals,
            kind,
            point,
            f_value,
            f_gap: f_value - self.f_star,
            fallback,
        });
    }

    /// One charged GD step; `None` (and the divergence marker) on a non-finite result.
    fn step(&mut self, x: &Vector) -> Option<Vector> {
        let next = x - self.problem.gradient(x) * self.alpha;
        self.evals += 1;
        if is_finite(&next) && self.problem.value(&next).is_finite() {
            self.record(EventKind::Gd, next.clone(), false);
            Some(next)
        } else {
            self.diverged = true;
            None
        }
    }

    /// Extrapolates and records the point the scheme continues from.
    fn extrapolate(&mut self, ex: &dyn Extrapolator, w: &IterateWindow) -> Result<Vector> {
        let restart = w.last_successor().clone();
        let out = ex.extrapolate(w, self.problem.grad_at_origin())?;
        let rejected = out.fallback
            || !is_finite(&out.point)
            || (self.guard && !(self.gap(&out.point) <= 10.0 * self.gap(&restart).max(0.0)));
        let point = if rejected { restart } else { out.point };
        self.record(EventKind::Extrapolation, point.clone(), rejected);
        Ok(point)
    }

    fn finish(self, label: String, scheme: Scheme) -> ConvergenceTrace {
        ConvergenceTrace {
            label,
            scheme,
            f_star: self.f_star,
            events: self.events,
            diverged: self.diverged,
        }
    }
}

/// Plain GD for the whole budget.
pub fn run_plain_gd(p: &dyn Problem, x0: &Vector, cfg: &SchemeConfig) -> Result<ConvergenceTrace> {
    let mut rec = Recorder::new(p, cfg, x0)?;
    let mut x = x0.clone();
    while rec.evals < cfg.budget {
        match rec.step(&x) {
            Some(next) => x = next,
            None => break,
        }
    }
    Ok(rec.finish("gd".into(), Scheme::PlainGd))
}

/// Cycles of `k` GD steps, each closed by one extrapolation over `x_0 … x_{k−1}`
/// (successors `x_1 … x_k`), restarting from the result. A final partial
/// cycle shorter than `k` is plain GD.
pub fn run_online1(
    p: &dyn Problem,
    x0: &Vector,
    cfg: &SchemeConfig,
    ex: &dyn Extrapolator,
) -> Result<ConvergenceTrace> {
    let mut rec = Recorder::new(p, cfg, x0)?;
    let k = cfg.window;
    let mut start = x0.clone();
    'outer: while rec.evals < cfg.budget {
        let remaining = cfg.budget - rec.evals;
        let mut iterates = vec![start.clone()];
        for _ in 0..remaining.min(k) {
            match rec.step(iterates.last().expect("nonempty")) {
                Some(next) => iterates.push(next),
                None => break 'outer,
            }
        }
        if remaining < k {
            break;
        }
        let w = IterateWindow::from_sequence(&iterates, &vec![rec.alpha; k])?;
        start = rec.extrapolate(ex, &w)?;
    }
    Ok(rec.finish(ex.label(), Scheme::Online1))
}

/// The `k` most recent (base, successor) pairs, each labeled with the index
/// of its successor in the GD/extrapolation sequence.
#[derive(Debug, Clone, Default)]
pub struct SlidingWindow {
    pairs: VecDeque<(usize, Vector, Vector)>,
    capacity: usize,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        SlidingWindow {
            pairs: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn push(&mut self, label: usize, base: Vector, successor: Vector) {
        self.pairs.push_back((label, base, successor));
        while self.pairs.len() > self.capacity {
            self.pairs.pop_front();
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.pairs.iter().map(|(l, _, _)| *l).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_window(&self, alpha: f64) -> Result<IterateWindow> {
        let (bases, successors) = self
            .pairs
            .iter()
            .map(|(_, b, s)| (b.clone(), s.clone()))
            .unzip();
        IterateWindow::from_steps(bases, successors, vec![alpha; self.pairs.len()])
    }
}

/// `k` initial GD steps, then per cycle one GD step from the latest
/// extrapolated point; after `c` cycles the window holds successors `c+1 … c+k`.
pub fn run_online2(
    p: &dyn Problem,
    x0: &Vector,
    cfg: &SchemeConfig,
    ex: &dyn Extrapolator,
) -> Result<ConvergenceTrace> {
    let mut rec = Recorder::new(p, cfg, x0)?;
    let k = cfg.window;
    let mut window = SlidingWindow::new(k);
    let mut base = x0.clone();
    let mut label = 0;
    while rec.evals < cfg.budget {
        let Some(next) = rec.step(&base) else { break };
        label += 1;
        window.push(label, base, next.clone());
        base = next;
        if window.len() == k {
            base = rec.extrapolate(ex, &window.to_window(rec.alpha)?)?;
        }
    }
    Ok(rec.finish(ex.label(), Scheme::Online2))
}

/// Uninterrupted GD with every window of `k + 1` consecutive iterates
/// extrapolated as a side channel: `budget − k + 1` extrapolation events.
pub fn run_offline(
    p: &dyn Problem,
    x0: &Vector,
    cfg: &SchemeConfig,
    ex: &dyn Extrapolator,
) -> Result<ConvergenceTrace> {
    let mut rec = Recorder::new(p, cfg, x0)?;
    let k = cfg.window;
    let mut iterates: VecDeque<Vector> = VecDeque::from([x0.clone()]);
    while rec.evals < cfg.budget {
        let Some(next) = rec.step(iterates.back().expect("nonempty")) else {
            break;
        };
        iterates.push_back(next);
        if iterates.len() > k + 1 {
            iterates.pop_front();
        }
        if iterates.len() == k + 1 {
            let seq: Vec<Vector> = iterates.iter().cloned().collect();
            let w = IterateWindow::from_sequence(&seq, &vec![rec.alpha; k])?;
            let out = ex.extrapolate(&w, p.grad_at_origin())?;
            let ok = !out.fallback && is_finite(&out.point);
            let point = if ok {
                out.point
            } else {
                w.last_successor().clone()
            };
            rec.record(EventKind::Extrapolation, point, !ok);
        }
    }
    Ok(rec.finish(ex.label(), Scheme::Offline))
}

/// Dispatches on `cfg.scheme`; `ex` is ignored for plain GD.
pub fn run_scheme(
    p: &dyn Problem,
    x0: &Vector,
    cfg: &SchemeConfig,
    ex: &dyn Extrapolator,
) -> Result<ConvergenceTrace> {
    match cfg.scheme {
        Scheme::PlainGd => run_plain_gd(p, x0, cfg),
        Scheme::Online1 => run_online1(p, x0, cfg, ex),
        Scheme::Online2 => run_online2(p, x0, cfg, ex),
        Scheme::Offline => run_offline(p, x0, cfg, ex),
    }
}
