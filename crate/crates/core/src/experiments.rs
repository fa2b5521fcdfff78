//! Experiment drivers: single runs, alpha sweeps, mesh convergence studies
//! and the discontinuous-permeability study, plus their flat-file output.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::cases::{keps_case, make_case, CaseError, CaseName, ManufacturedCase};
use crate::gradp::{self, GradPState, GradPSystemSpec, DEFAULT_PENALTY};
use crate::mesh::TriangleMesh;
use crate::mixed::{self, MixedState, MixedSystemSpec};
use crate::picard::{IterationReport, SchemeError};

pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_ALPHAS: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
pub const CONVERGENCE_NS: [usize; 8] = [60, 80, 100, 120, 140, 160, 180, 200];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{context}: {source}")]
    Scheme {
        context: String,
        #[source]
        source: SchemeError,
    },
    #[error("scheme {scheme} cannot run case {case}")]
    Incompatible { scheme: Scheme, case: CaseName },
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("N = {n} did not converge after {iterations} iterations (last Err_L = {last_err_l:e})")]
    NotConverged {
        n: usize,
        iterations: usize,
        last_err_l: f64,
    },
    #[error("malformed CSV line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// P0 velocity / P1 pressure, normal-flux boundary condition.
    GradP,
    /// RT0 velocity / P0 pressure, pressure boundary condition.
    Mixed,
}

impl Scheme {
    pub fn accepts(self, case: CaseName) -> bool {
        match self {
            Scheme::GradP => case.has_flux_data(),
            Scheme::Mixed => !case.has_flux_data(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::GradP => "gradp",
            Scheme::Mixed => "mixed",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gradp" => Ok(Scheme::GradP),
            "mixed" => Ok(Scheme::Mixed),
            _ => Err(format!("unknown scheme '{s}' (expected gradp or mixed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Init {
    Zero,
    /// Start from the discrete solution of the example posed as a Darcy
    /// problem: `alpha = beta = 0` in the operator and the forcing built
    /// without the Forchheimer term.
    Darcy,
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::Zero => "zero",
            Init::Darcy => "darcy",
        })
    }
}

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(Init::Zero),
            "darcy" => Ok(Init::Darcy),
            _ => Err(format!("unknown init '{s}' (expected zero or darcy)")),
        }
    }
}

/// Parameters of one Picard run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub case: CaseName,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub init: Init,
    pub tol: f64,
    pub max_iter: usize,
    pub penalty: f64,
    /// Inclusion permeability, used by the `keps` case only.
    pub eps_k: f64,
}

impl RunConfig {
    pub fn new(scheme: Scheme, case: CaseName, n: usize) -> Self {
        Self {
            scheme,
            case,
            n,
            alpha: 10.0,
            beta: 10.0,
            gamma: 1.0,
            init: Init::Darcy,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            penalty: DEFAULT_PENALTY,
            eps_k: 1.0,
        }
    }

    fn context(&self) -> String {
        format!(
            "{} {} N={} alpha={} beta={} gamma={} init={}",
            self.scheme, self.case, self.n, self.alpha, self.beta, self.gamma, self.init
        )
    }

    fn build_case(&self) -> Result<ManufacturedCase, ExperimentError> {
        if !self.scheme.accepts(self.case) {
            return Err(ExperimentError::Incompatible {
                scheme: self.scheme,
                case: self.case,
            });
        }
        Ok(match self.case {
            CaseName::Keps => ManufacturedCase {
                beta: self.beta,
                ..keps_case(self.eps_k)?
            },
            name => make_case(name, self.gamma, self.beta),
        })
    }

    fn build_mesh(&self) -> Result<Arc<TriangleMesh>, ExperimentError> {
        TriangleMesh::unit_square(self.n)
            .map(Arc::new)
            .map_err(|e| ExperimentError::Scheme {
                context: self.context(),
                source: e.into(),
            })
    }
}

fn run_prepared(
    cfg: &RunConfig,
    mesh: &Arc<TriangleMesh>,
    case: &ManufacturedCase,
) -> Result<IterationReport, SchemeError> {
    let (report, err) = match cfg.scheme {
        Scheme::GradP => {
            let spec = GradPSystemSpec {
                alpha: cfg.alpha,
                penalty_eps: cfg.penalty,
                ..GradPSystemSpec::from_case(mesh.clone(), case, cfg.alpha)?
            };
            let init = match cfg.init {
                Init::Zero => GradPState::zeros(mesh),
                Init::Darcy => gradp::darcy_initial_guess_gradp(&GradPSystemSpec {
                    forcing: case.darcy_forcing.clone(),
                    ..spec.clone()
                })?,
            };
            let (state, report) = gradp::picard_iterate_gradp(&spec, init, cfg.tol, cfg.max_iter)?;
            let err = gradp::err_vs_exact_gradp(mesh, &state, case);
            (report, err)
        }
        Scheme::Mixed => {
            let spec = MixedSystemSpec {
                penalty_eps: cfg.penalty,
                ..MixedSystemSpec::from_case(mesh.clone(), case, cfg.alpha)
            };
            let init = match cfg.init {
                Init::Zero => MixedState::zeros(mesh),
                Init::Darcy => mixed::darcy_initial_guess_mixed(&MixedSystemSpec {
                    forcing: case.darcy_forcing.clone(),
                    ..spec.clone()
                })?,
            };
            let (state, report) = mixed::picard_iterate_mixed(&spec, init, cfg.tol, cfg.max_iter)?;
            let err = mixed::err_vs_exact_mixed(mesh, &state, case);
            (report, err)
        }
    };
    Ok(IterationReport {
        final_err: if report.converged { err } else { None },
        ..report
    })
}

/// Builds the mesh and case and runs the Picard loop. `final_err` is set
/// for converged runs of cases with a known exact solution.
pub fn run_single(cfg: &RunConfig) -> Result<IterationReport, ExperimentError> {
    let case = cfg.build_case()?;
    let mesh = cfg.build_mesh()?;
    run_prepared(cfg, &mesh, &case).map_err(|source| ExperimentError::Scheme {
        context: cfg.context(),
        source,
    })
}

/// One line of an alpha sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    /// Picard solves performed (the cap, or fewer if the iteration broke down).
    pub nbr: usize,
    pub converged: bool,
    /// `None` when not converged, or when the case has no exact solution.
    pub log10_err: Option<f64>,
}

impl SweepRow {
    fn from_report(alpha: f64, report: &IterationReport) -> Self {
        Self {
            alpha,
            nbr: report.iterations,
            converged: report.converged,
            log10_err: report.final_err.map(f64::log10),
        }
    }
}

/// Runs `cfg` once per alpha, sharing the mesh and case. A linear solver
/// failure marks its row as not converged; the other rows still run.
pub fn alpha_sweep(cfg: &RunConfig, alphas: &[f64]) -> Result<Vec<SweepRow>, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::InvalidStudy("empty alpha list".into()));
    }
    let case = cfg.build_case()?;
    let mesh = cfg.build_mesh()?;
    alphas
        .par_iter()
        .map(|&alpha| {
            let row_cfg = RunConfig { alpha, ..cfg.clone() };
            match run_prepared(&row_cfg, &mesh, &case) {
                Ok(report) => Ok(SweepRow::from_report(alpha, &report)),
                Err(SchemeError::Solver { iteration, .. }) => Ok(SweepRow {
                    alpha,
                    nbr: iteration,
                    converged: false,
                    log10_err: None,
                }),
                Err(source) => Err(ExperimentError::Scheme {
                    context: row_cfg.context(),
                    source,
                }),
            }
        })
        .collect()
}

/// The mixed scheme on the discontinuous-permeability case at `N = 60`,
/// `beta = 10`.
pub fn keps_study(eps_k: f64, alphas: &[f64], init: Init) -> Result<Vec<SweepRow>, ExperimentError> {
    let cfg = RunConfig {
        init,
        eps_k,
        beta: 10.0,
        ..RunConfig::new(Scheme::Mixed, CaseName::Keps, 60)
    };
    alpha_sweep(&cfg, alphas)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub n_values: Vec<usize>,
    pub err_values: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Least-squares slope of `log10 Err` against `log10(1/N)`.
    pub fitted_slope: f64,
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "slope fit needs paired samples");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `cfg` on every mesh size in `n_values` (the `n` field of `cfg` is
/// ignored) and fits the error slope.
pub fn convergence_study(cfg: &RunConfig, n_values: &[usize]) -> Result<ConvergenceStudy, ExperimentError> {
    if n_values.len() < 3 {
        return Err(ExperimentError::InvalidStudy(
            "at least three mesh sizes are needed".into(),
        ));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::InvalidStudy(
            "mesh sizes must be strictly increasing".into(),
        ));
    }
    let case = cfg.build_case()?;
    if case.exact.is_none() {
        return Err(ExperimentError::InvalidStudy(format!(
            "case {} has no exact solution",
            cfg.case
        )));
    }
    let reports: Vec<(usize, IterationReport)> = n_values
        .par_iter()
        .map(|&n| {
            let run_cfg = RunConfig { n, ..cfg.clone() };
            let mesh = run_cfg.build_mesh()?;
            let report = run_prepared(&run_cfg, &mesh, &case).map_err(|source| ExperimentError::Scheme {
                context: run_cfg.context(),
                source,
            })?;
            Ok((n, report))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut err_values = Vec::with_capacity(reports.len());
    for (n, report) in &reports {
        match report.final_err {
            Some(err) if report.converged => err_values.push(err),
            _ => {
                return Err(ExperimentError::NotConverged {
                    n: *n,
                    iterations: report.iterations,
                    last_err_l: report.err_l_history.last().copied().unwrap_or(f64::NAN),
                })
            }
        }
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| (1.0 / n as f64).log10()).collect();
    let ys: Vec<f64> = err_values.iter().map(|e| e.log10()).collect();
    Ok(ConvergenceStudy {
        n_values: n_values.to_vec(),
        fitted_slope: fit_slope(&xs, &ys),
        iterations: reports.iter().map(|(_, r)| r.iterations).collect(),
        err_values,
    })
}

pub const CSV_HEADER: &str = "alpha,nbr,log10_err";

/// Writes sweep rows as CSV. Non-converged rows read `>nbr` and `div`;
/// converged rows without an exact solution leave the error field empty.
pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        if row.converged {
            let err = row.log10_err.map(|e| format!("{e:.16e}")).unwrap_or_default();
            writeln!(out, "{:.16e},{},{}", row.alpha, row.nbr, err)?;
        } else {
            writeln!(out, "{:.16e},>{},div", row.alpha, row.nbr)?;
        }
    }
    out.flush()
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<(), ExperimentError> {
    write_csv(rows, BufWriter::new(File::create(path)?))?;
    Ok(())
}

/// Parses the output of [`write_csv`].
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let bad = |reason: &str| ExperimentError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        if i == 0 {
            if line != CSV_HEADER {
                return Err(bad("unexpected header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [alpha, nbr, err] = fields[..] else {
            return Err(bad("expected three fields"));
        };
        let alpha: f64 = alpha.parse().map_err(|_| bad("alpha is not a number"))?;
        let (converged, nbr) = match nbr.strip_prefix('>') {
            Some(rest) => (false, rest),
            None => (true, nbr),
        };
        let nbr: usize = nbr.parse().map_err(|_| bad("nbr is not an integer"))?;
        let log10_err = match (converged, err) {
            (false, "div") => None,
            (false, _) => return Err(bad("non-converged row must read div")),
            (true, "") => None,
            (true, e) => Some(e.parse().map_err(|_| bad("error is not a number"))?),
        };
        rows.push(SweepRow {
            alpha,
            nbr,
            converged,
            log10_err,
        });
    }
    Ok(rows)
}

/// Writes `# slope = ...` followed by `log10_h log10_err` pairs, with
/// `h = 1/N`.
pub fn write_plot_data<W: Write>(study: &ConvergenceStudy, mut out: W) -> io::Result<()> {
    writeln!(out, "# slope = {:.16e}", study.fitted_slope)?;
    writeln!(out, "# log10_h log10_err")?;
    for (n, err) in study.n_values.iter().zip(&study.err_values) {
        writeln!(out, "{:.16e} {:.16e}", (1.0 / *n as f64).log10(), err.log10())?;
    }
    out.flush()
}

pub fn emit_plot_data(study: &ConvergenceStudy, path: &Path) -> Result<(), ExperimentError> {
    write_plot_data(study, BufWriter::new(File::create(path)?))?;
    Ok(())
}
