//! Permeability fields and the manufactured test cases.
//!
//! Every manufactured case uses `mu = rho = 1` and `K = I`; the forcing is
//! built from the exact solution as `f = u + beta |u| u + grad p`. The
//! `Keps` case has no exact solution: `f = 0`, `b = 1` and a permeability
//! that jumps on the inclusion `[0.25, 0.5] x [0.25, 0.75]`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::fem::integrate;
use crate::mesh::{Point, Side, TriangleMesh};
use crate::quadrature::{edge_gauss3, quadrature_rule};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("unknown case `{0}` (expected ex1fa, ex2fa, ex1sa, ex2sa or keps)")]
    UnknownCase(String),
    #[error("permeability parameter must be positive, got {0}")]
    NonPositivePermeability(f64),
}

/// Scalar permeability `K(x) = k(x) I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PermeabilityField {
    Identity,
    Scalar(f64),
    /// `eps_k I` on the inclusion, `I` elsewhere.
    Discontinuous {
        eps_k: f64,
    },
}

/// Lower-left and upper-right corners of the inclusion of the discontinuous field.
pub const INCLUSION: (Point, Point) = ([0.25, 0.25], [0.5, 0.75]);

impl PermeabilityField {
    pub fn scalar(k: f64) -> Result<Self, CaseError> {
        if k > 0.0 && k.is_finite() {
            Ok(Self::Scalar(k))
        } else {
            Err(CaseError::NonPositivePermeability(k))
        }
    }

    pub fn discontinuous(eps_k: f64) -> Result<Self, CaseError> {
        if eps_k > 0.0 && eps_k.is_finite() {
            Ok(Self::Discontinuous { eps_k })
        } else {
            Err(CaseError::NonPositivePermeability(eps_k))
        }
    }

    pub fn in_inclusion(x: Point) -> bool {
        let (lo, hi) = INCLUSION;
        (lo[0]..=hi[0]).contains(&x[0]) && (lo[1]..=hi[1]).contains(&x[1])
    }

    /// The scalar `k(x)`.
    pub fn value_at(&self, x: Point) -> f64 {
        match *self {
            Self::Identity => 1.0,
            Self::Scalar(k) => k,
            Self::Discontinuous { eps_k } => {
                if Self::in_inclusion(x) {
                    eps_k
                } else {
                    1.0
                }
            }
        }
    }

    /// The scalar `1 / k(x)` multiplying the identity in `K^{-1}`.
    pub fn inverse_at(&self, x: Point) -> f64 {
        1.0 / self.value_at(x)
    }

    /// Uniform bounds `(K_m, K_M)` of the field.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Identity => (1.0, 1.0),
            Self::Scalar(k) => (k, k),
            Self::Discontinuous { eps_k } => (eps_k.min(1.0), eps_k.max(1.0)),
        }
    }

    /// `1/k` sampled at each triangle centroid.
    pub fn elementwise_inverse(&self, mesh: &TriangleMesh) -> Vec<f64> {
        mesh.geometries()
            .iter()
            .map(|g| self.inverse_at(g.centroid()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseName {
    Ex1FA,
    Ex2FA,
    Ex1SA,
    Ex2SA,
    Keps,
}

impl CaseName {
    /// Whether the case carries normal-flux boundary data (for the P0/P1 scheme)
    /// rather than a homogeneous pressure condition (for the RT0 scheme).
    pub fn has_flux_data(self) -> bool {
        matches!(self, Self::Ex1FA | Self::Ex2FA)
    }
}

impl fmt::Display for CaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ex1FA => "ex1fa",
            Self::Ex2FA => "ex2fa",
            Self::Ex1SA => "ex1sa",
            Self::Ex2SA => "ex2sa",
            Self::Keps => "keps",
        })
    }
}

impl FromStr for CaseName {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ex1fa" => Ok(Self::Ex1FA),
            "ex2fa" => Ok(Self::Ex2FA),
            "ex1sa" => Ok(Self::Ex1SA),
            "ex2sa" => Ok(Self::Ex2SA),
            "keps" => Ok(Self::Keps),
            _ => Err(CaseError::UnknownCase(s.to_string())),
        }
    }
}

/// Closed-form velocity and pressure with a hand-derived pressure gradient.
#[derive(Clone)]
pub struct ExactSolution {
    pub velocity: VectorFn,
    pub pressure: ScalarFn,
    pub pressure_gradient: VectorFn,
}

/// Normal flux `u . n` prescribed on each side of the square.
#[derive(Clone)]
pub struct BoundaryFlux {
    left: ScalarFn,
    right: ScalarFn,
    bottom: ScalarFn,
    top: ScalarFn,
}

impl BoundaryFlux {
    pub fn new(left: ScalarFn, right: ScalarFn, bottom: ScalarFn, top: ScalarFn) -> Self {
        Self {
            left,
            right,
            bottom,
            top,
        }
    }

    pub fn zero() -> Self {
        let z: ScalarFn = Arc::new(|_| 0.0);
        Self::new(z.clone(), z.clone(), z.clone(), z)
    }

    pub fn on(&self, side: Side) -> &ScalarFn {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    pub fn eval(&self, side: Side, x: Point) -> f64 {
        self.on(side)(x)
    }
}

#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: CaseName,
    pub gamma: f64,
    pub beta: f64,
    pub permeability: PermeabilityField,
    pub exact: Option<ExactSolution>,
    pub forcing: VectorFn,
    /// Forcing of the same example posed as a Darcy problem (`beta = 0`),
    /// used to compute the Darcy initial guess.
    pub darcy_forcing: VectorFn,
    pub source: ScalarFn,
    pub boundary_flux: Option<BoundaryFlux>,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("beta", &self.beta)
            .field("permeability", &self.permeability)
            .field("has_exact", &self.exact.is_some())
            .field("has_flux", &self.boundary_flux.is_some())
            .finish()
    }
}

/// `u + beta |u| u + grad p` for `mu = rho = 1`, `K = I`.
pub fn forcing_from_exact(exact: &ExactSolution, beta: f64) -> VectorFn {
    let u = exact.velocity.clone();
    let gp = exact.pressure_gradient.clone();
    Arc::new(move |x| {
        let v = u(x);
        let g = gp(x);
        let norm = v[0].hypot(v[1]);
        [v[0] + beta * norm * v[0] + g[0], v[1] + beta * norm * v[1] + g[1]]
    })
}

fn velocity_one(gamma: f64) -> VectorFn {
    Arc::new(move |[x, y]| [gamma * x.exp() * (PI * y).sin(), gamma / PI * x.exp() * (PI * y).cos()])
}

fn velocity_two(gamma: f64) -> VectorFn {
    Arc::new(move |[x, y]| [gamma * x * (PI * y).exp(), gamma * y * (PI * x).exp()])
}

fn source_two(gamma: f64) -> ScalarFn {
    Arc::new(move |[x, y]| gamma * ((PI * x).exp() + (PI * y).exp()))
}

fn zero_scalar() -> ScalarFn {
    Arc::new(|_| 0.0)
}

/// Builds a manufactured case.
///
/// For `Keps` this returns the identity-permeability variant (`eps_k = 1`);
/// use [`keps_case`] to choose the contrast.
pub fn make_case(name: CaseName, gamma: f64, beta: f64) -> ManufacturedCase {
    let (exact, source, flux) = match name {
        CaseName::Ex1FA => {
            let exact = ExactSolution {
                velocity: velocity_one(gamma),
                pressure: Arc::new(|[x, y]| (PI * x).cos() * (PI * y).cos()),
                pressure_gradient: Arc::new(|[x, y]| {
                    [
                        -PI * (PI * x).sin() * (PI * y).cos(),
                        -PI * (PI * x).cos() * (PI * y).sin(),
                    ]
                }),
            };
            let flux = BoundaryFlux::new(
                Arc::new(move |[_, y]| -gamma * (PI * y).sin()),
                Arc::new(move |[_, y]| gamma * E * (PI * y).sin()),
                Arc::new(move |[x, _]| -gamma / PI * x.exp()),
                Arc::new(move |[x, _]| -gamma / PI * x.exp()),
            );
            (Some(exact), zero_scalar(), Some(flux))
        }
        CaseName::Ex2FA => {
            let exact = ExactSolution {
                velocity: velocity_two(gamma),
                pressure: Arc::new(|[x, y]| x * y * y - y * x * x),
                pressure_gradient: Arc::new(|[x, y]| [y * y - 2.0 * x * y, 2.0 * x * y - x * x]),
            };
            let flux = BoundaryFlux::new(
                zero_scalar(),
                Arc::new(move |[_, y]| gamma * (PI * y).exp()),
                zero_scalar(),
                Arc::new(move |[x, _]| gamma * (PI * x).exp()),
            );
            (Some(exact), source_two(gamma), Some(flux))
        }
        CaseName::Ex1SA => {
            let exact = ExactSolution {
                velocity: velocity_one(gamma),
                pressure: Arc::new(|[x, y]| 10.0 * (PI * x).sin() * (PI * y).sin()),
                pressure_gradient: Arc::new(|[x, y]| {
                    [
                        10.0 * PI * (PI * x).cos() * (PI * y).sin(),
                        10.0 * PI * (PI * x).sin() * (PI * y).cos(),
                    ]
                }),
            };
            (Some(exact), zero_scalar(), None)
        }
        CaseName::Ex2SA => {
            let exact = ExactSolution {
                velocity: velocity_two(gamma),
                pressure: Arc::new(|[x, y]| 10.0 * (x - x * x) * (y - y * y)),
                pressure_gradient: Arc::new(|[x, y]| {
                    [
                        10.0 * (1.0 - 2.0 * x) * (y - y * y),
                        10.0 * (x - x * x) * (1.0 - 2.0 * y),
                    ]
                }),
            };
            (Some(exact), source_two(gamma), None)
        }
        CaseName::Keps => {
            return keps_case(1.0).expect("unit contrast is valid");
        }
    };
    let exact = exact.expect("manufactured cases carry an exact solution");
    ManufacturedCase {
        name,
        gamma,
        beta,
        permeability: PermeabilityField::Identity,
        forcing: forcing_from_exact(&exact, beta),
        darcy_forcing: forcing_from_exact(&exact, 0.0),
        exact: Some(exact),
        source,
        boundary_flux: flux,
    }
}

/// The discontinuous-permeability case: `f = 0`, `b = 1`, `K = eps_k I` on
/// the inclusion and `I` elsewhere.
pub fn keps_case(eps_k: f64) -> Result<ManufacturedCase, CaseError> {
    let permeability = if eps_k == 1.0 {
        PermeabilityField::Identity
    } else {
        PermeabilityField::discontinuous(eps_k)?
    };
    Ok(ManufacturedCase {
        name: CaseName::Keps,
        gamma: 1.0,
        beta: 0.0,
        permeability,
        exact: None,
        forcing: Arc::new(|_| [0.0, 0.0]),
        darcy_forcing: Arc::new(|_| [0.0, 0.0]),
        source: Arc::new(|_| 1.0),
        boundary_flux: None,
    })
}

/// Residuals of the closed forms measured at interior sample points.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub samples: usize,
    /// Largest `|f - u - beta|u|u - grad p| / (1 + |f|)`, with `grad p` from finite differences.
    pub max_momentum_residual: f64,
    /// Largest `|div u - b| / (1 + |b|)`, with `div u` from finite differences.
    pub max_divergence_residual: f64,
    pub failures: Vec<Point>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const CONSISTENCY_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-2;
const FD_WEIGHTS: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// Eighth-order central difference of `f` along `dir`.
fn central_difference(f: impl Fn(Point) -> f64, x: Point, dir: usize) -> f64 {
    let mut acc = 0.0;
    for (k, w) in FD_WEIGHTS.iter().enumerate() {
        let s = (k + 1) as f64 * FD_STEP;
        let mut xp = x;
        let mut xm = x;
        xp[dir] += s;
        xm[dir] -= s;
        acc += w * (f(xp) - f(xm));
    }
    acc / FD_STEP
}

/// Interior sample points from an additive recurrence (deterministic).
pub fn interior_samples(count: usize) -> Vec<Point> {
    let g = 1.324_717_957_244_746; // plastic number
    let (a1, a2) = (1.0 / g, 1.0 / (g * g));
    (1..=count)
        .map(|i| {
            let i = i as f64;
            [
                0.02 + 0.96 * (0.5 + a1 * i).fract(),
                0.02 + 0.96 * (0.5 + a2 * i).fract(),
            ]
        })
        .collect()
}

/// Checks the momentum and mass equations of a case at 1000 interior
/// points, independently of the hand-coded pressure gradient.
pub fn consistency_check(case: &ManufacturedCase) -> Option<ConsistencyReport> {
    let exact = case.exact.as_ref()?;
    let points = interior_samples(1000);
    let mut report = ConsistencyReport {
        samples: points.len(),
        max_momentum_residual: 0.0,
        max_divergence_residual: 0.0,
        failures: Vec::new(),
    };
    for &x in &points {
        let u = (exact.velocity)(x);
        let f = (case.forcing)(x);
        let gp = [
            central_difference(|y| (exact.pressure)(y), x, 0),
            central_difference(|y| (exact.pressure)(y), x, 1),
        ];
        let norm = u[0].hypot(u[1]);
        let kinv = case.permeability.inverse_at(x);
        let r = [
            f[0] - kinv * u[0] - case.beta * norm * u[0] - gp[0],
            f[1] - kinv * u[1] - case.beta * norm * u[1] - gp[1],
        ];
        let momentum = r[0].hypot(r[1]) / (1.0 + f[0].hypot(f[1]));

        let div =
            central_difference(|y| (exact.velocity)(y)[0], x, 0) + central_difference(|y| (exact.velocity)(y)[1], x, 1);
        let b = (case.source)(x);
        let mass = (div - b).abs() / (1.0 + b.abs());

        report.max_momentum_residual = report.max_momentum_residual.max(momentum);
        report.max_divergence_residual = report.max_divergence_residual.max(mass);
        if !(momentum <= CONSISTENCY_TOL && mass <= CONSISTENCY_TOL) {
            report.failures.push(x);
        }
    }
    Some(report)
}

/// `int_Omega b - int_Gamma g_u`, computed on an `n x n` mesh with the
/// degree-5 rule and three-point Gauss on boundary edges.
pub fn compatibility_gap(case: &ManufacturedCase, n: usize) -> Option<f64> {
    let flux = case.boundary_flux.as_ref()?;
    let mesh = TriangleMesh::unit_square(n.max(1)).expect("n >= 1");
    let rule = quadrature_rule(5).expect("degree 5 is supported");
    let volume = integrate(&mesh, |x| (case.source)(x), &rule);
    let mut boundary = 0.0;
    for &(e, side) in mesh.boundary_edges() {
        let [a, b] = mesh.edges()[e];
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let len = mesh.edge_length(e);
        boundary += len
            * edge_gauss3()
                .iter()
                .map(|&(s, w)| w * flux.eval(side, [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]))
                .sum::<f64>();
    }
    Some(volume - boundary)
}
