use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forchheimer::experiments::{
    alpha_sweep, convergence_study, emit_csv, emit_plot_data, keps_study, run_single, write_csv, write_plot_data,
    ExperimentError, Init, RunConfig, Scheme, CONVERGENCE_NS, DEFAULT_ALPHAS, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use forchheimer::gradp::DEFAULT_PENALTY;
use forchheimer::{CaseName, SchemeError};

const ALPHA_HELP: &str = "Relaxation parameter alpha. Values of 10 or more are the robust choice: \
small alpha makes the Picard iteration slow, and from a zero start it may fail to converge";

#[derive(Parser)]
#[command(
    name = "forchheimer",
    version,
    about = "Picard solvers for the Darcy-Forchheimer equations on the unit square"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and print Nbr and Err.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, help = ALPHA_HELP)]
        alpha: Option<f64>,
    },
    /// Sweep alpha and write an `alpha,nbr,log10_err` table.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated alpha values.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHAS)]
        alphas: Vec<f64>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mesh convergence study with a fitted error slope.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, help = ALPHA_HELP)]
        alpha: Option<f64>,
        /// Comma-separated, strictly increasing mesh sizes.
        #[arg(long, value_delimiter = ',', default_values_t = CONVERGENCE_NS)]
        ns: Vec<usize>,
        /// Output plot-data path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discontinuous-permeability study (mixed scheme, f = 0, b = 1, N = 60, beta = 10).
    Keps {
        /// Permeability inside the inclusion.
        #[arg(long, default_value_t = 1e6)]
        eps_k: f64,
        #[arg(long, value_enum, default_value_t = InitArg::Zero)]
        init: InitArg,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHAS)]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, value_enum)]
    case: CaseArg,
    /// Subdivisions per side of the unit square.
    #[arg(long, default_value_t = 60)]
    n: usize,
    /// Parameter bundle; explicit flags override it.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_PENALTY)]
    penalty: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Gradp,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Ex1fa,
    Ex2fa,
    Ex1sa,
    Ex2sa,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Zero,
    Darcy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// beta = 20, gamma = 20, zero start
    T1,
    /// beta = 20, gamma = 20, Darcy start
    T2,
    /// beta = 10, gamma = 1, Darcy start
    T3,
    /// alpha = 10, beta = 10, gamma = 1, Darcy start (convergence figures)
    Fig,
}

impl Preset {
    /// `(alpha, beta, gamma, init)`
    fn values(self) -> (Option<f64>, f64, f64, Init) {
        match self {
            Preset::T1 => (None, 20.0, 20.0, Init::Zero),
            Preset::T2 => (None, 20.0, 20.0, Init::Darcy),
            Preset::T3 => (None, 10.0, 1.0, Init::Darcy),
            Preset::Fig => (Some(10.0), 10.0, 1.0, Init::Darcy),
        }
    }
}

impl From<InitArg> for Init {
    fn from(value: InitArg) -> Self {
        match value {
            InitArg::Zero => Init::Zero,
            InitArg::Darcy => Init::Darcy,
        }
    }
}

impl Common {
    fn config(&self, alpha: Option<f64>) -> RunConfig {
        let scheme = match self.scheme {
            SchemeArg::Gradp => Scheme::GradP,
            SchemeArg::Mixed => Scheme::Mixed,
        };
        let case = match self.case {
            CaseArg::Ex1fa => CaseName::Ex1FA,
            CaseArg::Ex2fa => CaseName::Ex2FA,
            CaseArg::Ex1sa => CaseName::Ex1SA,
            CaseArg::Ex2sa => CaseName::Ex2SA,
        };
        let base = RunConfig::new(scheme, case, self.n);
        let (preset_alpha, beta, gamma, init) = self
            .preset
            .map(Preset::values)
            .unwrap_or((None, base.beta, base.gamma, base.init));
        RunConfig {
            alpha: alpha.or(preset_alpha).unwrap_or(base.alpha),
            beta: self.beta.unwrap_or(beta),
            gamma: self.gamma.unwrap_or(gamma),
            init: self.init.map(Init::from).unwrap_or(init),
            tol: self.tol,
            max_iter: self.max_iter,
            penalty: self.penalty,
            ..base
        }
    }
}

fn exit_code(err: &ExperimentError) -> ExitCode {
    match err {
        ExperimentError::Incompatible { .. }
        | ExperimentError::InvalidStudy(_)
        | ExperimentError::Case(_)
        | ExperimentError::Scheme {
            source: SchemeError::InvalidParameter(_) | SchemeError::Mesh(_),
            ..
        } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn execute(command: Command) -> Result<ExitCode, ExperimentError> {
    let mut stdout = io::stdout().lock();
    match command {
        Command::Run { common, alpha } => {
            let report = run_single(&common.config(alpha))?;
            let err = report
                .final_err
                .map_or_else(|| "div".to_string(), |e| format!("{:.6}", e.log10()));
            writeln!(
                stdout,
                "converged={} nbr={} log10_err={} wall_time={:.3}s",
                report.converged, report.iterations, err, report.wall_time
            )?;
            Ok(if report.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::SweepAlpha { common, alphas, out } => {
            let rows = alpha_sweep(&common.config(None), &alphas)?;
            match out {
                Some(path) => emit_csv(&rows, &path)?,
                None => write_csv(&rows, &mut stdout)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Convergence { common, alpha, ns, out } => {
            let study = convergence_study(&common.config(alpha), &ns)?;
            match out {
                Some(path) => emit_plot_data(&study, &path)?,
                None => write_plot_data(&study, &mut stdout)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Keps {
            eps_k,
            init,
            alphas,
            out,
        } => {
            let rows = keps_study(eps_k, &alphas, init.into())?;
            match out {
                Some(path) => emit_csv(&rows, &path)?,
                None => write_csv(&rows, &mut stdout)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
