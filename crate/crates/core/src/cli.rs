//! Command-line driver: `generate`, `run`, `compare` and `oracle-check`.
//!
//! Usage errors exit with 2, runtime failures with 1.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::extrapolate::{ExtrapolatorConfig, Method};
use crate::io::{
    read_libsvm, write_libsvm_file, write_summary_file, write_trace_file, LibsvmDataset, RunSummary,
};
use crate::linalg::{
    gaussian_vector, make_conditioned_matrix, seeded_rng, Matrix, SyntheticSpec, Vector,
};
use crate::oracle::{build_corpus, run_corpus};
use crate::parallel;
use crate::problems::{reference_optimum, LeastSquares, Logistic, Problem, Ridge};
use crate::schemes::{run_plain_gd, run_scheme, ConvergenceTrace, Scheme, SchemeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    Ls,
    Ridge,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gd,
    Rna,
    Dna,
    Dna1,
    Dna2,
    Dna3,
    Anderson,
}

impl MethodArg {
    /// `None` for plain gradient descent.
    pub fn extrapolator(self) -> Option<Method> {
        match self {
            MethodArg::Gd => None,
            MethodArg::Rna => Some(Method::Rna),
            MethodArg::Dna => Some(Method::Dna),
            MethodArg::Dna1 => Some(Method::Dna1),
            MethodArg::Dna2 => Some(Method::Dna2),
            MethodArg::Dna3 => Some(Method::Dna3),
            MethodArg::Anderson => Some(Method::Anderson),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Gd,
    Online1,
    Online2,
    Offline,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Gd => Scheme::PlainGd,
            SchemeArg::Online1 => Scheme::Online1,
            SchemeArg::Online2 => Scheme::Online2,
            SchemeArg::Offline => Scheme::Offline,
        }
    }
}

/// `m,n,kappa` for a synthetic matrix with a geometric spectrum from 1 to `1/kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticArg {
    pub rows: usize,
    pub cols: usize,
    pub kappa: f64,
}

impl FromStr for SyntheticArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [m, n, k] = parts[..] else {
            return Err(format!("expected m,n,kappa, got '{s}'"));
        };
        let rows = m.parse().map_err(|_| format!("bad row count '{m}'"))?;
        let cols = n.parse().map_err(|_| format!("bad column count '{n}'"))?;
        let kappa: f64 = k
            .parse()
            .map_err(|_| format!("bad condition number '{k}'"))?;
        if rows == 0 || cols == 0 || !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(format!("need m, n >= 1 and finite kappa >= 1, got '{s}'"));
        }
        Ok(SyntheticArg { rows, cols, kappa })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dna",
    version,
    about = "Nonlinear acceleration of gradient descent"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as a LIBSVM file.
    Generate(GenerateArgs),
    /// Run one method under one scheme and write its trace CSV.
    Run(RunArgs),
    /// Run gd, rna, dna, dna1, dna2 and dna3 on one problem.
    Compare(CompareArgs),
    /// Check the quadratic-case identities on a seeded corpus.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "ls")]
    pub problem: ProblemKind,
    #[arg(long)]
    pub synthetic: SyntheticArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "ls")]
    pub problem: ProblemKind,
    /// LIBSVM file.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub data: Option<PathBuf>,
    /// Synthetic matrix `m,n,kappa`.
    #[arg(long)]
    pub synthetic: Option<SyntheticArg>,
    /// Ridge coefficient (default 1/n).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Logistic regularization (default 1/(2m)).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum, default_value = "online1")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = SchemeConfig::DEFAULT_WINDOW,
          value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub window: usize,
    #[arg(long, default_value_t = ExtrapolatorConfig::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Gradient-evaluation budget.
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable the restart guard against bad extrapolations.
    #[arg(long)]
    pub no_guard: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    #[arg(long, value_enum, default_value = "dna1")]
    pub method: MethodArg,
    /// Trace CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    /// Output directory for `<method>.csv` and `summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

/// Synthetic features and response: `A` with the prescribed spectrum and a
/// seeded Gaussian `y`, or labels `sign(A w)` for a planted `w` (logistic).
pub fn synthetic_dataset(
    problem: ProblemKind,
    spec: SyntheticArg,
    seed: u64,
) -> Result<LibsvmDataset> {
    let s = SyntheticSpec::with_condition(spec.rows, spec.cols, spec.kappa, seed)?;
    let a = make_conditioned_matrix(&s)?;
    let mut rng = seeded_rng(seed ^ 0x5eed_1abe1);
    let labels = match problem {
        ProblemKind::Ls | ProblemKind::Ridge => gaussian_vector(&mut rng, spec.rows),
        ProblemKind::Logistic => {
            let w = gaussian_vector(&mut rng, spec.cols);
            (&a * w).map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
        }
    };
    LibsvmDataset::new(a, labels)
}

/// Everything one `run` needs; identical configs give identical traces.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub data: Option<PathBuf>,
    pub synthetic: Option<SyntheticArg>,
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    pub scheme: SchemeConfig,
    pub lambda: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_args(a: &ProblemArgs) -> Self {
        RunConfig {
            problem: a.problem,
            data: a.data.clone(),
            synthetic: a.synthetic,
            mu: a.mu,
            tau: a.tau,
            scheme: SchemeConfig::new(a.scheme.into(), a.window, a.iters).with_guard(!a.no_guard),
            lambda: a.lambda,
            seed: a.seed,
        }
    }

    pub fn dataset(&self) -> Result<LibsvmDataset> {
        match (&self.data, self.synthetic) {
            (Some(path), _) => read_libsvm(path),
            (None, Some(spec)) => synthetic_dataset(self.problem, spec, self.seed),
            (None, None) => Err(Error::argument("either --data or --synthetic is required")),
        }
    }

    pub fn build_problem(&self) -> Result<Box<dyn Problem>> {
        let ds = self.dataset()?;
        if ds.samples() == 0 || ds.dim() == 0 {
            return Err(Error::Data("dataset has no samples or no features".into()));
        }
        let LibsvmDataset { features, labels } = ds;
        Ok(match self.problem {
            ProblemKind::Ls => Box::new(LeastSquares::new(features, labels)?),
            ProblemKind::Ridge => match self.mu {
                Some(mu) => Box::new(Ridge::new(features, labels, mu)?),
                None => Box::new(Ridge::with_default_mu(features, labels)?),
            },
            ProblemKind::Logistic => {
                let samples: Matrix = features.transpose();
                match self.tau {
                    Some(tau) => Box::new(Logistic::new(samples, labels, tau)?),
                    None => Box::new(Logistic::with_default_tau(samples, labels)?),
                }
            }
        })
    }

    /// Runs `method` from `x0 = 0`, reusing `f_star` when given.
    pub fn execute(
        &self,
        p: &dyn Problem,
        method: MethodArg,
        f_star: Option<f64>,
    ) -> Result<ConvergenceTrace> {
        let mut cfg = self.scheme.clone();
        cfg.f_star = f_star;
        let x0 = Vector::zeros(p.dim());
        match method.extrapolator() {
            None => run_plain_gd(p, &x0, &cfg),
            Some(_) if cfg.scheme == Scheme::PlainGd => run_plain_gd(p, &x0, &cfg),
            Some(m) => {
                let ex = ExtrapolatorConfig::new(m).with_lambda(self.lambda);
                run_scheme(p, &x0, &cfg, &ex)
            }
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let ds = synthetic_dataset(args.problem, args.synthetic, args.seed)?;
    write_libsvm_file(&ds, &args.out)?;
    println!(
        "wrote {} samples x {} features to {}",
        ds.samples(),
        ds.dim(),
        args.out.display()
    );
    Ok(())
}

fn report(t: &ConvergenceTrace) -> String {
    format!(
        "{:<9} {:<8} final_gap={:e} grad_evals={} extrapolations={} fallbacks={}{}",
        t.label,
        t.scheme,
        t.final_gap(),
        t.grad_evals(),
        t.extrapolations(),
        t.fallbacks(),
        if t.diverged { " diverged" } else { "" }
    )
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = RunConfig::from_args(&args.common);
    cfg.scheme.validate()?;
    let p = cfg.build_problem()?;
    let trace = cfg.execute(p.as_ref(), args.method, None)?;
    write_trace_file(&trace, &args.out)?;
    println!("{}", report(&trace));
    Ok(())
}

pub const COMPARE_METHODS: [MethodArg; 6] = [
    MethodArg::Gd,
    MethodArg::Rna,
    MethodArg::Dna,
    MethodArg::Dna1,
    MethodArg::Dna2,
    MethodArg::Dna3,
];

fn method_name(m: MethodArg) -> &'static str {
    m.extrapolator().map_or("gd", Method::as_str)
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let cfg = RunConfig::from_args(&args.common);
    cfg.scheme.validate()?;
    let p = cfg.build_problem()?;
    let f_star = reference_optimum(p.as_ref())?.value;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let traces = parallel::map(&COMPARE_METHODS, |&m| {
        cfg.execute(p.as_ref(), m, Some(f_star))
    });
    let mut summaries = Vec::new();
    for (m, trace) in COMPARE_METHODS.iter().zip(traces) {
        let trace = trace?;
        write_trace_file(&trace, &args.out.join(format!("{}.csv", method_name(*m))))?;
        println!("{}", report(&trace));
        let mut s = RunSummary::from_trace(&trace);
        s.method = method_name(*m).to_string();
        summaries.push(s);
    }
    write_summary_file(&summaries, &args.out.join("summary.json"))
}

fn cmd_oracle(args: &OracleArgs) -> Result<bool> {
    if args.cases == 0 {
        return Err(Error::argument("--cases must be positive"));
    }
    let checks = run_corpus(&build_corpus(args.cases, args.seed, 1e10));
    let mut all = true;
    for c in &checks {
        all &= c.passed();
        println!(
            "{}  {:<44} worst={:>10.3e}  tol={:.0e}  failures={}/{}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tolerance,
            c.failures,
            c.cases
        );
    }
    Ok(all)
}

/// Parses `argv` (program name first) and runs the command; returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| true),
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Compare(a) => cmd_compare(a).map(|_| true),
        Command::OracleCheck(a) => cmd_oracle(a),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Error::Argument(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Path helper for tests and scripts: `<dir>/<method>.csv`.
pub fn compare_trace_path(dir: &Path, method: MethodArg) -> PathBuf {
    dir.join(format!("{}.csv", method_name(method)))
}
