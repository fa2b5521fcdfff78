//! Lowest-order Raviart-Thomas velocity / piecewise-constant pressure
//! discretization with a homogeneous pressure boundary condition, and its
//! relaxed, penalized Picard iteration.
//!
//! Unknowns are the edge coefficients followed by one pressure per
//! triangle. One Picard step solves
//!
//! ```text
//! a(u,v) + (mu/rho)(K^-1 u, v) + (beta/rho)(|u_prev| u, v) - (p, div v) = (f, v) + a(u_prev, v)
//! (q, div u) + eps (p, q)                                                = (b, q)
//! ```
//!
//! The pressure condition is natural: no boundary degrees of freedom are
//! constrained.

use std::sync::Arc;

use crate::cases::{ManufacturedCase, PermeabilityField, ScalarFn, VectorFn};
use crate::fem::{
    l2_error_vs_exact, l2_norm, l2_norm_exact, rt0_shape, rt0_shape_divergence, DiscreteField, P0ScalarField, RT0Field,
};
use crate::gradp::DEFAULT_PENALTY;
use crate::mesh::TriangleMesh;
use crate::picard::{self, check_parameters, relative_increment, Increment, IterationReport, SchemeError};
use crate::quadrature::{pairwise_sum, quadrature_rule, QuadratureRule};
use crate::sparse::{LdltSolver, SparseError, SparseMatrix, TripletBuffer};

#[derive(Clone)]
pub struct MixedSystemSpec {
    pub mesh: Arc<TriangleMesh>,
    pub permeability: PermeabilityField,
    pub mu: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub penalty_eps: f64,
    pub forcing: VectorFn,
    pub source: ScalarFn,
}

impl MixedSystemSpec {
    /// Wires a case onto a mesh (`mu = rho = 1`, `beta` from the case).
    pub fn from_case(mesh: Arc<TriangleMesh>, case: &ManufacturedCase, alpha: f64) -> Self {
        Self {
            mesh,
            permeability: case.permeability,
            mu: 1.0,
            rho: 1.0,
            beta: case.beta,
            alpha,
            penalty_eps: DEFAULT_PENALTY,
            forcing: case.forcing.clone(),
            source: case.source.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        check_parameters(self.mu, self.rho, self.beta, self.alpha, self.penalty_eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    pub u: RT0Field,
    pub p: P0ScalarField,
}

impl MixedState {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self {
            u: RT0Field::zeros(mesh),
            p: P0ScalarField::zeros(mesh),
        }
    }
}

const NQ: usize = 7;

struct ElementData {
    edges: [usize; 3],
    /// `w_q |T|` for the degree-5 points.
    weights: [f64; NQ],
    /// Basis values (orientation included) at the degree-5 points.
    phi: [[[f64; 2]; 3]; NQ],
    mass: [[f64; 3]; 3],
    force: [f64; 3],
    kinv: f64,
    /// Positions of the 3x3 velocity block in the matrix values.
    positions: [[usize; 3]; 3],
}

/// Parts of the linear system that do not change between Picard steps.
pub struct MixedSystem<'a> {
    spec: &'a MixedSystemSpec,
    elements: Vec<ElementData>,
    base: SparseMatrix,
    pressure_rhs: Vec<f64>,
}

impl<'a> MixedSystem<'a> {
    pub fn new(spec: &'a MixedSystemSpec) -> Result<Self, SchemeError> {
        spec.validate()?;
        let mesh = &*spec.mesh;
        let rule = quadrature_rule(5).expect("degree 5 is supported");
        let n_edges = mesh.n_edges();
        let dim = n_edges + mesh.n_triangles();
        let kinv = spec.permeability.elementwise_inverse(mesh);

        let mut triplets = TripletBuffer::with_capacity(dim, 16 * mesh.n_triangles());
        let mut elements = Vec::with_capacity(mesh.n_triangles());
        let mut pressure_rhs = Vec::with_capacity(mesh.n_triangles());
        for (t, local) in mesh.tri_edges().iter().enumerate() {
            let g = mesh.triangle_geometry(t)?;
            let edges = local.map(|le| le.edge);
            let mut weights = [0.0; NQ];
            let mut phi = [[[0.0; 2]; 3]; NQ];
            let mut force = [0.0; 3];
            let mut b_integral = 0.0;
            for (q, (w, l)) in rule.iter().enumerate() {
                let x = g.point(l);
                weights[q] = w * g.area;
                let f = (spec.forcing)(x);
                for k in 0..3 {
                    phi[q][k] = rt0_shape(&g, k, local[k].sign, x);
                    force[k] += weights[q] * (f[0] * phi[q][k][0] + f[1] * phi[q][k][1]);
                }
                b_integral += weights[q] * (spec.source)(x);
            }
            let mut mass = [[0.0; 3]; 3];
            for (i, row) in mass.iter_mut().enumerate() {
                for (j, m) in row.iter_mut().enumerate() {
                    *m = (0..NQ)
                        .map(|q| weights[q] * (phi[q][i][0] * phi[q][j][0] + phi[q][i][1] * phi[q][j][1]))
                        .sum();
                }
            }

            let pt = n_edges + t;
            for k in 0..3 {
                for j in 0..3 {
                    triplets.push(edges[k], edges[j], 0.0);
                }
                let div = g.area * rt0_shape_divergence(&g, k, local[k].sign);
                triplets.push(edges[k], pt, -div);
                triplets.push(pt, edges[k], div);
            }
            triplets.push(pt, pt, spec.penalty_eps * g.area);
            pressure_rhs.push(b_integral);

            elements.push(ElementData {
                edges,
                weights,
                phi,
                mass,
                force,
                kinv: kinv[t],
                positions: [[0; 3]; 3],
            });
        }

        let base = triplets.compress()?;
        for el in &mut elements {
            for i in 0..3 {
                for j in 0..3 {
                    el.positions[i][j] = base
                        .position(el.edges[i], el.edges[j])
                        .expect("velocity block entry is stored");
                }
            }
        }
        Ok(Self {
            spec,
            elements,
            base,
            pressure_rhs,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Matrix and right-hand side of one step with the given relaxation and
    /// Forchheimer coefficients. `|u_prev|` is evaluated at the quadrature
    /// points from the RT0 expansion.
    pub fn assemble_with(&self, u_prev: &RT0Field, alpha: f64, beta: f64) -> (SparseMatrix, Vec<f64>) {
        let spec = self.spec;
        let n_edges = spec.mesh.n_edges();
        assert_eq!(u_prev.0.len(), n_edges, "velocity field does not match the mesh");
        let mut matrix = self.base.clone();
        let mut rhs = vec![0.0; self.dim()];
        let values = matrix.values_mut();
        let drag = beta / spec.rho;
        for el in &self.elements {
            let c = el.edges.map(|e| u_prev.0[e]);
            let mut weighted = [0.0; NQ];
            for q in 0..NQ {
                let mut v = [0.0; 2];
                for k in 0..3 {
                    v[0] += c[k] * el.phi[q][k][0];
                    v[1] += c[k] * el.phi[q][k][1];
                }
                weighted[q] = el.weights[q] * v[0].hypot(v[1]);
            }
            let linear = alpha + spec.mu / spec.rho * el.kinv;
            for i in 0..3 {
                for j in 0..3 {
                    let nonlinear: f64 = (0..NQ)
                        .map(|q| weighted[q] * (el.phi[q][i][0] * el.phi[q][j][0] + el.phi[q][i][1] * el.phi[q][j][1]))
                        .sum();
                    values[el.positions[i][j]] += linear * el.mass[i][j] + drag * nonlinear;
                }
                let relax: f64 = (0..3).map(|j| el.mass[i][j] * c[j]).sum();
                rhs[el.edges[i]] += el.force[i] + alpha * relax;
            }
        }
        rhs[n_edges..].copy_from_slice(&self.pressure_rhs);
        (matrix, rhs)
    }

    pub fn assemble(&self, u_prev: &RT0Field) -> (SparseMatrix, Vec<f64>) {
        self.assemble_with(u_prev, self.spec.alpha, self.spec.beta)
    }

    fn split(&self, mut x: Vec<f64>) -> MixedState {
        let p = x.split_off(self.spec.mesh.n_edges());
        MixedState {
            u: RT0Field(x),
            p: P0ScalarField(p),
        }
    }

    fn solve_step(
        &self,
        solver: &mut LdltSolver,
        u_prev: &RT0Field,
        alpha: f64,
        beta: f64,
    ) -> Result<MixedState, SparseError> {
        let (mut matrix, mut rhs) = self.assemble_with(u_prev, alpha, beta);
        // negated pressure rows make the system symmetric quasi-definite
        let n_edges = self.spec.mesh.n_edges();
        let start = matrix.row_offsets()[n_edges];
        matrix.values_mut()[start..].iter_mut().for_each(|v| *v = -*v);
        rhs[n_edges..].iter_mut().for_each(|v| *v = -*v);
        Ok(self.split(solver.solve(&matrix, &rhs)?))
    }
}

/// Assembles the block system of one Picard step.
pub fn assemble_mixed(spec: &MixedSystemSpec, u_prev: &RT0Field) -> Result<(SparseMatrix, Vec<f64>), SchemeError> {
    if u_prev.0.len() != spec.mesh.n_edges() {
        return Err(SchemeError::InvalidParameter("u_prev does not match the mesh".into()));
    }
    Ok(MixedSystem::new(spec)?.assemble(u_prev))
}

/// Solution of the linear Darcy problem (`alpha = beta = 0`).
pub fn darcy_initial_guess_mixed(spec: &MixedSystemSpec) -> Result<MixedState, SchemeError> {
    let system = MixedSystem::new(spec)?;
    system
        .solve_step(&mut LdltSolver::new(), &RT0Field::zeros(&spec.mesh), 0.0, 0.0)
        .map_err(|source| SchemeError::Solver { iteration: 0, source })
}

fn increment(mesh: &TriangleMesh, new: &MixedState, old: &MixedState, rule: &QuadratureRule) -> Increment {
    let du = RT0Field(new.u.0.iter().zip(&old.u.0).map(|(a, b)| a - b).collect());
    let dp = P0ScalarField(new.p.0.iter().zip(&old.p.0).map(|(a, b)| a - b).collect());
    let du2 = l2_norm(mesh, &du, rule).powi(2);
    let dp2 = l2_norm(mesh, &dp, rule).powi(2);
    let u2 = l2_norm(mesh, &new.u, rule).powi(2);
    let p2 = l2_norm(mesh, &new.p, rule).powi(2);
    Increment {
        relative: relative_increment(du2, dp2, u2, p2),
        velocity: du2.sqrt(),
    }
}

/// Relative L2 increment between two iterates.
pub fn err_l_mixed(mesh: &TriangleMesh, new: &MixedState, old: &MixedState) -> f64 {
    increment(mesh, new, old, &quadrature_rule(5).expect("degree 5 is supported")).relative
}

/// Runs the relaxed Picard iteration from `init`.
pub fn picard_iterate_mixed(
    spec: &MixedSystemSpec,
    init: MixedState,
    tol: f64,
    max_iter: usize,
) -> Result<(MixedState, IterationReport), SchemeError> {
    let mesh = &*spec.mesh;
    if init.u.0.len() != mesh.n_edges() || init.p.0.len() != mesh.n_triangles() {
        return Err(SchemeError::InvalidParameter(
            "initial state does not match the mesh".into(),
        ));
    }
    let system = MixedSystem::new(spec)?;
    let rule = quadrature_rule(5).expect("degree 5 is supported");
    let mut solver = LdltSolver::new();
    picard::run(
        init,
        tol,
        max_iter,
        |state| system.solve_step(&mut solver, &state.u, spec.alpha, spec.beta),
        |new, old| increment(mesh, new, old, &rule),
    )
}

/// L2 norm of `div u_h - b_T`, where `b_T` is the elementwise mean of `b`.
pub fn divergence_residual(mesh: &TriangleMesh, state: &MixedState, source: impl Fn([f64; 2]) -> f64) -> f64 {
    let rule = quadrature_rule(5).expect("degree 5 is supported");
    let div = state.u.divergence(mesh);
    let b_mean = P0ScalarField::mean_interpolant(mesh, source, &rule);
    let contributions: Vec<f64> = mesh
        .geometries()
        .iter()
        .enumerate()
        .map(|(t, g)| g.area * (div.0[t] - b_mean.0[t]).powi(2))
        .collect();
    pairwise_sum(&contributions).sqrt()
}

/// Combined relative L2 error against the case's exact solution (no
/// pressure shift: the boundary condition fixes the pressure level).
pub fn err_vs_exact_mixed(mesh: &TriangleMesh, state: &MixedState, case: &ManufacturedCase) -> Option<f64> {
    let exact = case.exact.as_ref()?;
    let rule = quadrature_rule(5).expect("degree 5 is supported");
    let eu = l2_error_vs_exact(mesh, &state.u, |x| (exact.velocity)(x), &rule);
    let ep = l2_error_vs_exact(mesh, &state.p, |x| (exact.pressure)(x), &rule);
    let nu = l2_norm_exact(mesh, |x| (exact.velocity)(x), &rule);
    let np = l2_norm_exact(mesh, |x| (exact.pressure)(x), &rule);
    Some(((eu * eu + ep * ep) / (nu * nu + np * np)).sqrt())
}

/// Velocity of an RT0 field at the centroid of every triangle.
pub fn centroid_velocities(mesh: &TriangleMesh, u: &RT0Field) -> Vec<[f64; 2]> {
    mesh.geometries()
        .iter()
        .enumerate()
        .map(|(t, g)| u.eval_in(mesh, t, g, [1.0 / 3.0; 3]))
        .collect()
}
