//! Piecewise-constant velocity / continuous P1 pressure discretization with
//! prescribed normal flux, and its relaxed, penalized Picard iteration.
//!
//! Unknowns are ordered as the two velocity components of every triangle
//! (`2t`, `2t + 1`) followed by the vertex pressures. One Picard step solves
//!
//! ```text
//! a(u,v) + (mu/rho)(K^-1 u, v) + (beta/rho)(|u_prev| u, v) + (grad p, v) = (f, v) + a(u_prev, v)
//! (grad q, u) - eps (p, q)                                                = -(b, q) + <g_u, q>
//! ```
//!
//! with `a = alpha`.

use std::sync::Arc;

use crate::cases::{BoundaryFlux, ManufacturedCase, PermeabilityField, ScalarFn, VectorFn};
use crate::fem::{integrate, l2_error_vs_exact, l2_norm, P0VectorField, P1ScalarField};
use crate::mesh::TriangleMesh;
use crate::picard::{self, check_parameters, relative_increment, Increment, IterationReport, SchemeError};
use crate::quadrature::{edge_gauss3, quadrature_rule, QuadratureRule};
use crate::sparse::{LdltSolver, SparseMatrix, TripletBuffer};

pub const DEFAULT_PENALTY: f64 = 1e-8;

#[derive(Clone)]
pub struct GradPSystemSpec {
    pub mesh: Arc<TriangleMesh>,
    pub permeability: PermeabilityField,
    pub mu: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub penalty_eps: f64,
    pub forcing: VectorFn,
    pub source: ScalarFn,
    pub boundary_flux: BoundaryFlux,
}

impl GradPSystemSpec {
    /// Wires a manufactured case with flux data onto a mesh (`mu = rho = 1`).
    pub fn from_case(mesh: Arc<TriangleMesh>, case: &ManufacturedCase, alpha: f64) -> Result<Self, SchemeError> {
        let flux = case.boundary_flux.clone().ok_or_else(|| {
            SchemeError::InvalidParameter(format!("case {} has no normal-flux boundary data", case.name))
        })?;
        Ok(Self {
            mesh,
            permeability: case.permeability,
            mu: 1.0,
            rho: 1.0,
            beta: case.beta,
            alpha,
            penalty_eps: DEFAULT_PENALTY,
            forcing: case.forcing.clone(),
            source: case.source.clone(),
            boundary_flux: flux,
        })
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        check_parameters(self.mu, self.rho, self.beta, self.alpha, self.penalty_eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradPState {
    pub u: P0VectorField,
    pub p: P1ScalarField,
}

impl GradPState {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self {
            u: P0VectorField::zeros(mesh),
            p: P1ScalarField::zeros(mesh),
        }
    }
}

/// Parts of the linear system that do not change between Picard steps.
pub struct GradPSystem<'a> {
    spec: &'a GradPSystemSpec,
    areas: Vec<f64>,
    kinv: Vec<f64>,
    force_loads: Vec<[f64; 2]>,
    base: SparseMatrix,
    diagonal_positions: Vec<usize>,
    pressure_rhs: Vec<f64>,
}

impl<'a> GradPSystem<'a> {
    pub fn new(spec: &'a GradPSystemSpec) -> Result<Self, SchemeError> {
        spec.validate()?;
        let mesh = &*spec.mesh;
        let rule5 = quadrature_rule(5).expect("degree 5 is supported");
        let geometries = mesh.geometries();
        let n_vel = 2 * mesh.n_triangles();
        let dim = n_vel + mesh.n_vertices();

        let mut triplets =
            TripletBuffer::with_capacity(dim, 2 * n_vel + 12 * 2 * mesh.n_triangles() + 9 * mesh.n_triangles());
        let mut pressure_rhs = vec![0.0; mesh.n_vertices()];
        let mut force_loads = Vec::with_capacity(mesh.n_triangles());
        for (t, (g, tri)) in geometries.iter().zip(mesh.triangles()).enumerate() {
            for d in 0..2 {
                triplets.push(2 * t + d, 2 * t + d, 0.0);
            }
            for (k, &vk) in tri.iter().enumerate() {
                let pk = n_vel + vk;
                let grad = g.bary_gradients[k];
                for d in 0..2 {
                    let c = g.area * grad[d];
                    triplets.push(2 * t + d, pk, c);
                    triplets.push(pk, 2 * t + d, c);
                }
                for (j, &vj) in tri.iter().enumerate() {
                    let mass = g.area / 12.0 * if j == k { 2.0 } else { 1.0 };
                    triplets.push(pk, n_vel + vj, -spec.penalty_eps * mass);
                }
            }

            let mut load = [0.0; 2];
            let mut b_moments = [0.0; 3];
            for (w, l) in rule5.iter() {
                let x = g.point(l);
                let f = (spec.forcing)(x);
                load[0] += w * f[0];
                load[1] += w * f[1];
                let b = (spec.source)(x);
                for k in 0..3 {
                    b_moments[k] += w * b * l[k];
                }
            }
            force_loads.push([load[0] * g.area, load[1] * g.area]);
            for k in 0..3 {
                pressure_rhs[tri[k]] -= b_moments[k] * g.area;
            }
        }

        for &(e, side) in mesh.boundary_edges() {
            let [a, b] = mesh.edges()[e];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let len = mesh.edge_length(e);
            for (s, w) in edge_gauss3() {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let g = spec.boundary_flux.eval(side, x) * w * len;
                pressure_rhs[a] += g * (1.0 - s);
                pressure_rhs[b] += g * s;
            }
        }

        let base = triplets.compress()?;
        let diagonal_positions = (0..n_vel)
            .map(|i| {
                let start = base.row_offsets()[i];
                let k = base.col_indices()[start..base.row_offsets()[i + 1]]
                    .binary_search(&i)
                    .expect("velocity diagonal is stored");
                start + k
            })
            .collect();

        Ok(Self {
            spec,
            areas: geometries.iter().map(|g| g.area).collect(),
            kinv: spec.permeability.elementwise_inverse(mesh),
            force_loads,
            base,
            diagonal_positions,
            pressure_rhs,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn n_velocity(&self) -> usize {
        2 * self.areas.len()
    }

    /// Matrix and right-hand side of one step with the given relaxation and
    /// Forchheimer coefficients.
    pub fn assemble_with(&self, u_prev: &P0VectorField, alpha: f64, beta: f64) -> (SparseMatrix, Vec<f64>) {
        assert_eq!(
            u_prev.0.len(),
            self.areas.len(),
            "velocity field does not match the mesh"
        );
        let spec = self.spec;
        let mut matrix = self.base.clone();
        let mut rhs = Vec::with_capacity(self.dim());
        let values = matrix.values_mut();
        for (t, &area) in self.areas.iter().enumerate() {
            let up = u_prev.0[t];
            let speed = up[0].hypot(up[1]);
            let coeff = area * (alpha + spec.mu / spec.rho * self.kinv[t] + beta / spec.rho * speed);
            for d in 0..2 {
                values[self.diagonal_positions[2 * t + d]] += coeff;
                rhs.push(self.force_loads[t][d] + alpha * area * up[d]);
            }
        }
        rhs.extend_from_slice(&self.pressure_rhs);
        (matrix, rhs)
    }

    pub fn assemble(&self, u_prev: &P0VectorField) -> (SparseMatrix, Vec<f64>) {
        self.assemble_with(u_prev, self.spec.alpha, self.spec.beta)
    }

    fn split(&self, x: Vec<f64>) -> GradPState {
        let n_vel = self.n_velocity();
        let u = x[..n_vel].chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        GradPState {
            u: P0VectorField(u),
            p: P1ScalarField(x[n_vel..].to_vec()),
        }
    }

    fn solve_step(
        &self,
        solver: &mut LdltSolver,
        u_prev: &P0VectorField,
        alpha: f64,
        beta: f64,
    ) -> Result<GradPState, crate::sparse::SparseError> {
        let (matrix, rhs) = self.assemble_with(u_prev, alpha, beta);
        Ok(self.split(solver.solve(&matrix, &rhs)?))
    }
}

/// Assembles the block system of one Picard step.
pub fn assemble_gradp(spec: &GradPSystemSpec, u_prev: &P0VectorField) -> Result<(SparseMatrix, Vec<f64>), SchemeError> {
    if u_prev.0.len() != spec.mesh.n_triangles() {
        return Err(SchemeError::InvalidParameter("u_prev does not match the mesh".into()));
    }
    Ok(GradPSystem::new(spec)?.assemble(u_prev))
}

/// Solution of the linear Darcy problem (`alpha = beta = 0`).
pub fn darcy_initial_guess_gradp(spec: &GradPSystemSpec) -> Result<GradPState, SchemeError> {
    let system = GradPSystem::new(spec)?;
    let zero = P0VectorField::zeros(&spec.mesh);
    system
        .solve_step(&mut LdltSolver::new(), &zero, 0.0, 0.0)
        .map_err(|source| SchemeError::Solver { iteration: 0, source })
}

fn squared_norms(mesh: &TriangleMesh, state: &GradPState, rule: &QuadratureRule) -> (f64, f64) {
    (
        l2_norm(mesh, &state.u, rule).powi(2),
        l2_norm(mesh, &state.p, rule).powi(2),
    )
}

fn increment(mesh: &TriangleMesh, new: &GradPState, old: &GradPState, rule: &QuadratureRule) -> Increment {
    let du = P0VectorField(
        new.u
            .0
            .iter()
            .zip(&old.u.0)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect(),
    );
    let dp = P1ScalarField(new.p.0.iter().zip(&old.p.0).map(|(a, b)| a - b).collect());
    let du2 = l2_norm(mesh, &du, rule).powi(2);
    let dp2 = l2_norm(mesh, &dp, rule).powi(2);
    let (u2, p2) = squared_norms(mesh, new, rule);
    Increment {
        relative: relative_increment(du2, dp2, u2, p2),
        velocity: du2.sqrt(),
    }
}

/// Relative L2 increment between two iterates.
pub fn err_l(mesh: &TriangleMesh, new: &GradPState, old: &GradPState) -> f64 {
    increment(mesh, new, old, &quadrature_rule(5).expect("degree 5 is supported")).relative
}

/// Runs the relaxed Picard iteration from `init`.
pub fn picard_iterate_gradp(
    spec: &GradPSystemSpec,
    init: GradPState,
    tol: f64,
    max_iter: usize,
) -> Result<(GradPState, IterationReport), SchemeError> {
    let mesh = &*spec.mesh;
    if init.u.0.len() != mesh.n_triangles() || init.p.0.len() != mesh.n_vertices() {
        return Err(SchemeError::InvalidParameter(
            "initial state does not match the mesh".into(),
        ));
    }
    let system = GradPSystem::new(spec)?;
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

/// Combined relative L2 error against the case's exact solution. The
/// discrete pressure is shifted so its mean matches the exact mean.
pub fn err_vs_exact_gradp(mesh: &TriangleMesh, state: &GradPState, case: &ManufacturedCase) -> Option<f64> {
    let exact = case.exact.as_ref()?;
    let rule = quadrature_rule(5).expect("degree 5 is supported");
    let exact_mean = integrate(mesh, |x| (exact.pressure)(x), &rule);
    let discrete_mean = integrate_p1(mesh, &state.p);
    let shifted = P1ScalarField(state.p.0.iter().map(|v| v - discrete_mean + exact_mean).collect());
    let eu = l2_error_vs_exact(mesh, &state.u, |x| (exact.velocity)(x), &rule);
    let ep = l2_error_vs_exact(mesh, &shifted, |x| (exact.pressure)(x), &rule);
    let nu = crate::fem::l2_norm_exact(mesh, |x| (exact.velocity)(x), &rule);
    let np = crate::fem::l2_norm_exact(mesh, |x| (exact.pressure)(x), &rule);
    Some(((eu * eu + ep * ep) / (nu * nu + np * np)).sqrt())
}

/// Integral of a P1 field over the unit square (its mean).
pub fn integrate_p1(mesh: &TriangleMesh, p: &P1ScalarField) -> f64 {
    let contributions: Vec<f64> = mesh
        .geometries()
        .iter()
        .zip(mesh.triangles())
        .map(|(g, tri)| g.area * (p.0[tri[0]] + p.0[tri[1]] + p.0[tri[2]]) / 3.0)
        .collect();
    crate::quadrature::pairwise_sum(&contributions)
}

/// Residual of the discrete constraint `(grad q, u) + (b, q) - <g_u, q>`
/// for every vertex basis function `q` (without the penalty term).
pub fn constraint_residuals(spec: &GradPSystemSpec, state: &GradPState) -> Result<Vec<f64>, SchemeError> {
    let system = GradPSystem::new(spec)?;
    let (matrix, rhs) = system.assemble(&state.u);
    let n_vel = system.n_velocity();
    let mut x: Vec<f64> = state.u.0.iter().flat_map(|v| [v[0], v[1]]).collect();
    x.extend(std::iter::repeat_n(0.0, spec.mesh.n_vertices()));
    let ax = matrix.mul_vec(&x)?;
    Ok((n_vel..matrix.dim()).map(|i| ax[i] - rhs[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{make_case, CaseName};
    use crate::sparse::solve;

    fn zero_spec(n: usize) -> GradPSystemSpec {
        GradPSystemSpec {
            mesh: Arc::new(TriangleMesh::unit_square(n).unwrap()),
            permeability: PermeabilityField::Identity,
            mu: 1.0,
            rho: 1.0,
            beta: 0.0,
            alpha: 0.0,
            penalty_eps: DEFAULT_PENALTY,
            forcing: Arc::new(|_| [0.0, 0.0]),
            source: Arc::new(|_| 0.0),
            boundary_flux: BoundaryFlux::zero(),
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let spec = zero_spec(3);
        let (a, rhs) = assemble_gradp(&spec, &P0VectorField::zeros(&spec.mesh)).unwrap();
        let x = solve(&a, &rhs).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-14));

        let d = darcy_initial_guess_gradp(&spec).unwrap();
        assert_eq!(d, GradPState::zeros(&spec.mesh));

        let (state, report) = picard_iterate_gradp(&spec, GradPState::zeros(&spec.mesh), 1e-5, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(state, GradPState::zeros(&spec.mesh));
    }

    #[test]
    fn velocity_block_is_p0_mass() {
        let spec = zero_spec(2);
        let (a, _) = assemble_gradp(&spec, &P0VectorField::zeros(&spec.mesh)).unwrap();
        let area = 1.0 / 8.0;
        for t in 0..spec.mesh.n_triangles() {
            assert!((a.get(2 * t, 2 * t) - area).abs() < 1e-15);
            assert!((a.get(2 * t + 1, 2 * t + 1) - area).abs() < 1e-15);
            assert_eq!(a.get(2 * t, 2 * t + 1), 0.0);
        }
    }

    #[test]
    fn gradient_coupling_entries() {
        let spec = zero_spec(2);
        let mesh = &spec.mesh;
        let (a, _) = assemble_gradp(&spec, &P0VectorField::zeros(mesh)).unwrap();
        let n_vel = 2 * mesh.n_triangles();
        let t = 3;
        let g = mesh.triangle_geometry(t).unwrap();
        for (k, &v) in mesh.triangles()[t].iter().enumerate() {
            for d in 0..2 {
                let expected = g.area * g.bary_gradients[k][d];
                assert!((a.get(2 * t + d, n_vel + v) - expected).abs() < 1e-15);
                assert!((a.get(n_vel + v, 2 * t + d) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn darcy_guess_ignores_alpha_and_beta() {
        let mesh = Arc::new(TriangleMesh::unit_square(6).unwrap());
        let case = make_case(CaseName::Ex1FA, 1.0, 0.0);
        let mut spec = GradPSystemSpec::from_case(mesh, &case, 0.0).unwrap();
        let reference = darcy_initial_guess_gradp(&spec).unwrap();
        spec.alpha = 17.0;
        spec.beta = 3.0;
        assert_eq!(darcy_initial_guess_gradp(&spec).unwrap(), reference);
    }

    #[test]
    fn linear_problem_is_a_fixed_point_after_one_solve() {
        let mesh = Arc::new(TriangleMesh::unit_square(6).unwrap());
        let case = make_case(CaseName::Ex2FA, 1.0, 0.0);
        let spec = GradPSystemSpec::from_case(mesh.clone(), &case, 0.0).unwrap();
        let (_, report) = picard_iterate_gradp(&spec, GradPState::zeros(&mesh), 1e-5, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 2);
        assert!(report.err_l_history[1] < 1e-10);
    }

    #[test]
    fn err_l_special_values() {
        let mesh = TriangleMesh::unit_square(2).unwrap();
        let a = GradPState {
            u: P0VectorField(vec![[1.0, 2.0]; mesh.n_triangles()]),
            p: P1ScalarField(vec![0.5; mesh.n_vertices()]),
        };
        assert_eq!(err_l(&mesh, &a, &a), 0.0);
        assert!((err_l(&mesh, &a, &GradPState::zeros(&mesh)) - 1.0).abs() < 1e-14);
        assert_eq!(err_l(&mesh, &GradPState::zeros(&mesh), &a), f64::INFINITY);
    }

    #[test]
    fn err_l_on_single_cell_mesh() {
        // Two triangles of area 1/2: explicit sums.
        let mesh = TriangleMesh::unit_square(1).unwrap();
        let new = GradPState {
            u: P0VectorField(vec![[1.0, 0.0], [0.0, 2.0]]),
            p: P1ScalarField(vec![1.0, 0.0, 0.0, 0.0]),
        };
        let old = GradPState {
            u: P0VectorField(vec![[0.0, 0.0], [0.0, 1.0]]),
            p: P1ScalarField(vec![0.0; 4]),
        };
        // |du|^2 = 0.5 * 1 + 0.5 * 1 = 1; |u|^2 = 0.5 + 0.5 * 4 = 2.5
        // vertex 0 belongs to both triangles, hat mass = 2 * area / 6 = 1/6
        let expected = ((1.0f64 + 1.0 / 6.0) / (2.5 + 1.0 / 6.0)).sqrt();
        assert!((err_l(&mesh, &new, &old) - expected).abs() < 1e-14);
    }

    #[test]
    fn err_vs_exact_of_zero_state_is_one() {
        let mesh = TriangleMesh::unit_square(8).unwrap();
        let case = make_case(CaseName::Ex1FA, 1.0, 1.0);
        let e = err_vs_exact_gradp(&mesh, &GradPState::zeros(&mesh), &case).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn err_vs_exact_of_representable_case_vanishes() {
        // constant velocity, affine zero-mean pressure
        let mesh = TriangleMesh::unit_square(5).unwrap();
        let mut case = make_case(CaseName::Ex2FA, 1.0, 0.0);
        let exact = case.exact.as_mut().unwrap();
        exact.velocity = Arc::new(|_| [0.3, -0.2]);
        exact.pressure = Arc::new(|[x, y]| x - y);
        let state = GradPState {
            u: P0VectorField(vec![[0.3, -0.2]; mesh.n_triangles()]),
            p: P1ScalarField::nodal_interpolant(&mesh, |[x, y]| x - y + 4.0),
        };
        assert!(err_vs_exact_gradp(&mesh, &state, &case).unwrap() < 1e-13);
    }

    #[test]
    fn rejects_cases_without_flux() {
        let mesh = Arc::new(TriangleMesh::unit_square(2).unwrap());
        assert!(GradPSystemSpec::from_case(mesh, &make_case(CaseName::Ex1SA, 1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn invalid_parameters() {
        let mut spec = zero_spec(1);
        spec.penalty_eps = 0.0;
        assert!(matches!(GradPSystem::new(&spec), Err(SchemeError::InvalidParameter(_))));
        let mut spec = zero_spec(1);
        spec.beta = -1.0;
        assert!(GradPSystem::new(&spec).is_err());
    }
}
