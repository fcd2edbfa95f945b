//! The θ-linear tangent-plane scheme.
//!
//! Each step finds a nodally tangent P1 field v with
//! λ₁⟨m×v, w⟩_h − λ₂⟨v, w⟩_h − μkθ⟨∇v, ∇w⟩ = μ⟨∇m, ∇w⟩ + μF(t_j, m, w)
//! for all tangent w, then sets m ← normalize(m + k v). The pairing ⟨·,·⟩_h is
//! the lumped one; stiffness terms use the exact P1 stiffness matrix.

use crate::error::{Error, Result};
use crate::fem::{normalize_nodal, NodalField3, P1Space, Vec3};
use crate::par;
use crate::rotation::{NoiseCoefficients, RotationField};
use crate::sparse::{self, CsrMatrix, SolverOptions};
use crate::wiener::WienerPath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    lambda1: f64,
    lambda2: f64,
    mu: f64,
    theta: f64,
    horizon: f64,
    steps: usize,
    dt: f64,
    pub solver: SolverOptions,
    /// Constant c in the step-size guards k ≤ c h² (θ < 1/2) and k ≤ c h (θ = 1/2).
    pub guard_constant: f64,
}

impl SchemeParams {
    pub fn new(lambda1: f64, lambda2: f64, theta: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(lambda1.is_finite() && lambda1 != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda1 must be finite and nonzero, got {lambda1}"
            )));
        }
        if !(lambda2.is_finite() && lambda2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda2 must be positive, got {lambda2}"
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon T must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "step count J must be at least 1".into(),
            ));
        }
        Ok(SchemeParams {
            lambda1,
            lambda2,
            mu: lambda1 * lambda1 + lambda2 * lambda2,
            theta,
            horizon,
            steps,
            dt: horizon / steps as f64,
            solver: SolverOptions::default(),
            guard_constant: 1.0,
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// μ = λ₁² + λ₂².
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time step k = T / J.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Refuse step sizes outside the stable regime for the given mesh size:
    /// θ < 1/2 needs k ≤ c h², θ = 1/2 needs k ≤ c h, θ > 1/2 is unconditional.
    pub fn check_regime(&self, h: f64) -> Result<()> {
        let c = self.guard_constant;
        if self.theta < 0.5 && self.dt > c * h * h {
            return Err(Error::Regime(format!(
                "theta = {} < 1/2 requires k <= c h^2 = {:e}, but k = {:e}",
                self.theta,
                c * h * h,
                self.dt
            )));
        }
        if self.theta == 0.5 && self.dt > c * h {
            return Err(Error::Regime(format!(
                "theta = 1/2 requires k <= c h = {:e}, but k = {:e}",
                c * h,
                self.dt
            )));
        }
        Ok(())
    }
}

/// Two orthonormal tangent vectors per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame(pub Vec<[Vec3; 2]>);

impl TangentFrame {
    /// Householder frame: the reflection exchanging ∓e₃ and m maps e₁, e₂ to
    /// the tangent pair, choosing the sign so that the reflection vector has
    /// length at least √2.
    pub fn build(m: &NodalField3) -> Result<Self> {
        let mut frame = Vec::with_capacity(m.len());
        for (n, v) in m.iter().enumerate() {
            let norm = v.norm();
            if !((norm - 1.0).abs() <= 1e-10) {
                return Err(Error::NotUnit { node: n, norm });
            }
            let (u, scale) = if v[2] >= 0.0 {
                (Vec3::new(-v[0], -v[1], -1.0 - v[2]), 1.0 + v[2])
            } else {
                (Vec3::new(-v[0], -v[1], 1.0 - v[2]), 1.0 - v[2])
            };
            let t1 = Vec3::x() - u * (u[0] / scale);
            let t2 = Vec3::y() - u * (u[1] / scale);
            frame.push([t1, t2]);
        }
        Ok(TangentFrame(frame))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Nodal field Σ_n (c_{2n} τ₁(n) + c_{2n+1} τ₂(n)).
    pub fn expand(&self, coeffs: &[f64]) -> NodalField3 {
        NodalField3(
            self.0
                .iter()
                .enumerate()
                .map(|(n, t)| t[0] * coeffs[2 * n] + t[1] * coeffs[2 * n + 1])
                .collect(),
        )
    }

    /// Coordinates of a nodal field in the frame (drops the normal part).
    pub fn project(&self, u: &NodalField3) -> Vec<f64> {
        self.0
            .iter()
            .zip(u.iter())
            .flat_map(|(t, v)| [t[0].dot(v), t[1].dot(v)])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalState {
    pub j: usize,
    pub m: NodalField3,
    /// The update computed at step j (zero before the first solve).
    pub v: NodalField3,
    /// ‖∇m‖².
    pub energy: f64,
}

/// Linear system of one step in tangent coordinates (2 unknowns per node).
#[derive(Debug, Clone)]
pub struct StepSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub frame: TangentFrame,
    /// R_n with ⟨∇m, ∇w⟩ + F(t_j, m, w) = Σ_n R_n·w_n.
    pub load: Vec<Vec3>,
}

impl StepSystem {
    /// Load functional ℓ(w) = μ(⟨∇m, ∇w⟩ + F(t_j, m, w)).
    pub fn load_functional(&self, mu: f64, w: &NodalField3) -> f64 {
        mu * self
            .load
            .iter()
            .zip(w.iter())
            .map(|(r, x)| r.dot(x))
            .sum::<f64>()
    }
}

/// Assemble the step system for state `m` at step `j`.
pub fn assemble_step_system(
    space: &P1Space,
    state: &NodalState,
    rotation: &RotationField,
    params: &SchemeParams,
) -> Result<StepSystem> {
    if rotation.step() != state.j {
        return Err(Error::TimeMismatch {
            expected: state.j,
            found: rotation.step(),
        });
    }
    let frame = TangentFrame::build(&state.m)?;
    let load = rotation.transformed_stiffness_load(space, &state.m)?;
    let k = space.stiffness();
    let mass = space.lumped_mass();
    let (l1, l2, mu) = (params.lambda1, params.lambda2, params.mu);
    let stiff = mu * params.dt * params.theta;
    let n = space.n_nodes();

    let rows = par::map_range(n, |node| {
        let (cols, vals) = k.row(node);
        let t = &frame.0[node];
        let mnode = state.m[node];
        let mut out: [(Vec<usize>, Vec<f64>); 2] = Default::default();
        for (b, (oc, ov)) in out.iter_mut().enumerate() {
            oc.reserve(2 * cols.len());
            ov.reserve(2 * cols.len());
            for (&other, &kv) in cols.iter().zip(vals) {
                for a in 0..2 {
                    let ta = frame.0[other][a];
                    let mut val = -stiff * kv * ta.dot(&t[b]);
                    if other == node {
                        val += l1 * mass[node] * mnode.cross(&ta).dot(&t[b]);
                        if a == b {
                            val -= l2 * mass[node];
                        }
                    }
                    oc.push(2 * other + a);
                    ov.push(val);
                }
            }
        }
        out
    });
    let mut row_ptr = Vec::with_capacity(2 * n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for pair in rows {
        for (c, v) in pair {
            col_idx.extend(c);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
    }
    let matrix = CsrMatrix::from_raw(2 * n, 2 * n, row_ptr, col_idx, values)?;
    let rhs = frame
        .0
        .iter()
        .zip(&load)
        .flat_map(|(t, r)| [mu * r.dot(&t[0]), mu * r.dot(&t[1])])
        .collect();
    Ok(StepSystem {
        matrix,
        rhs,
        frame,
        load,
    })
}

#[derive(Debug, Clone)]
pub struct StepSolution {
    pub v: NodalField3,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn solve_step(system: &StepSystem, opts: &SolverOptions) -> Result<StepSolution> {
    let sol = sparse::solve(&system.matrix, &system.rhs, opts)?;
    Ok(StepSolution {
        v: system.frame.expand(&sol.x),
        coefficients: sol.x,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// m^{j+1} = normalize(m^j + k v).
pub fn advance(
    space: &P1Space,
    state: &NodalState,
    v: &NodalField3,
    params: &SchemeParams,
) -> Result<NodalState> {
    let m = normalize_nodal(&state.m.axpy(params.dt, v))?;
    let energy = space.dirichlet_energy(&m);
    Ok(NodalState {
        j: state.j + 1,
        m,
        v: v.clone(),
        energy,
    })
}

/// Per-step record of the quantities in the discrete energy law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub j: usize,
    pub t: f64,
    /// ‖∇m^j‖².
    pub energy: f64,
    /// Lumped ‖v^j‖².
    pub v_norm2: f64,
    /// ‖∇v^j‖².
    pub grad_v_norm2: f64,
    /// F(t_j, m^j, v^j).
    pub f_value: f64,
    /// ‖∇m^{j+1}‖².
    pub energy_next: f64,
    pub solver_iters: usize,
    pub residual: f64,
    /// LHS − RHS of the per-step energy inequality (≤ 0 when it holds).
    pub energy_defect: f64,
    /// max_n ||m^{j+1}(x_n)| − 1|.
    pub norm_defect: f64,
    /// max_n |v^j(x_n)·m^j(x_n)|.
    pub tangency: f64,
    /// max ‖ZᵀZ − I‖_F at t_j over all points.
    pub orthogonality: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "j,t_j,energy,v_norm2,F_value,solver_iters,residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            self.j,
            self.t,
            self.energy,
            self.v_norm2,
            self.f_value,
            self.solver_iters,
            self.residual
        )
    }
}

/// Data handed to a run observer after each step.
pub struct StepEvent<'a> {
    pub old: &'a NodalState,
    pub new: &'a NodalState,
    /// Rotation field at t_j (before advancing to t_{j+1}).
    pub rotation: &'a RotationField,
    pub diagnostics: &'a StepDiagnostics,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: NodalState,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Whether the interpolated initial data had to be renormalized.
    pub renormalized_initial: bool,
    /// ||m^0(x_n)| − 1| maximum after renormalization.
    pub initial_norm_defect: f64,
    /// Rotation field at t_J.
    pub final_rotation: RotationField,
}

impl RunOutput {
    pub fn max_norm_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.norm_defect)
            .fold(self.initial_norm_defect, f64::max)
    }

    pub fn max_tangency(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.tangency)
            .fold(0.0, f64::max)
    }

    pub fn max_orthogonality(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.orthogonality)
            .fold(0.0, f64::max)
    }

    pub fn max_energy_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.energy_defect)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Prepare m^0 from nodal data: renormalize if any node is off the sphere by
/// more than 1e−12.
pub fn initial_state(space: &P1Space, m0: &NodalField3) -> Result<(NodalState, bool)> {
    if m0.len() != space.n_nodes() {
        return Err(Error::Mismatch(format!(
            "initial data has {} nodes, space {}",
            m0.len(),
            space.n_nodes()
        )));
    }
    let off = m0.iter().any(|v| (v.norm() - 1.0).abs() > 1e-12);
    let m = if off {
        normalize_nodal(m0)?
    } else {
        m0.clone()
    };
    let energy = space.dirichlet_energy(&m);
    Ok((
        NodalState {
            j: 0,
            v: NodalField3::zeros(m.len()),
            m,
            energy,
        },
        off,
    ))
}

/// Run J steps from nodal initial data, calling `observer` after every step.
pub fn run_with<O>(
    space: &P1Space,
    params: &SchemeParams,
    coeffs: &NoiseCoefficients,
    path: &WienerPath,
    m0: &NodalField3,
    mut observer: O,
) -> Result<RunOutput>
where
    O: FnMut(&StepEvent) -> Result<()>,
{
    if path.steps() != params.steps
        || (path.horizon() - params.horizon).abs() > 1e-12 * params.horizon
    {
        return Err(Error::Mismatch(format!(
            "path has {} steps on [0, {}], scheme expects {} on [0, {}]",
            path.steps(),
            path.horizon(),
            params.steps,
            params.horizon
        )));
    }
    if path.q() != coeffs.q() {
        return Err(Error::Mismatch(format!(
            "path has q = {}, coefficients q = {}",
            path.q(),
            coeffs.q()
        )));
    }
    params.check_regime(space.mesh_size())?;
    let (mut state, renormalized_initial) = initial_state(space, m0)?;
    let initial_norm_defect = norm_defect(&state.m);
    let mut rotation = RotationField::new(space, coeffs, params.dt);
    let mut diagnostics = Vec::with_capacity(params.steps);
    for j in 0..params.steps {
        let system = assemble_step_system(space, &state, &rotation, params)?;
        let sol = solve_step(&system, &params.solver)?;
        let v = &sol.v;
        let next = advance(space, &state, v, params)?;
        let v_norm2 = space.lumped_pairing(v, v);
        let grad_v_norm2 = space.dirichlet_energy(v);
        let f_value = system.load_functional(1.0, v) - space.stiffness_pairing(&state.m, v);
        let k = params.dt;
        let lhs = next.energy
            + 2.0 * k * params.lambda2 / params.mu * v_norm2
            + k * k * (2.0 * params.theta - 1.0) * grad_v_norm2;
        let rhs = state.energy - 2.0 * k * f_value;
        let tangency = v
            .iter()
            .zip(state.m.iter())
            .map(|(a, b)| a.dot(b).abs())
            .fold(0.0, f64::max);
        let diag = StepDiagnostics {
            j,
            t: path.time(j),
            energy: state.energy,
            v_norm2,
            grad_v_norm2,
            f_value,
            energy_next: next.energy,
            solver_iters: sol.iterations,
            residual: sol.residual,
            energy_defect: lhs - rhs,
            norm_defect: norm_defect(&next.m),
            tangency,
            orthogonality: rotation.orthogonality_defect(),
        };
        observer(&StepEvent {
            old: &state,
            new: &next,
            rotation: &rotation,
            diagnostics: &diag,
        })?;
        diagnostics.push(diag);
        rotation.evolve_step(path.increment(j))?;
        state = next;
    }
    Ok(RunOutput {
        final_state: state,
        diagnostics,
        renormalized_initial,
        initial_norm_defect,
        final_rotation: rotation,
    })
}

pub fn run(
    space: &P1Space,
    params: &SchemeParams,
    coeffs: &NoiseCoefficients,
    path: &WienerPath,
    m0: &NodalField3,
) -> Result<RunOutput> {
    run_with(space, params, coeffs, path, m0, |_| Ok(()))
}

fn norm_defect(m: &NodalField3) -> f64 {
    m.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate_nodal;
    use crate::mesh::Mesh;

    #[test]
    fn frame_axis_cases() {
        let m = NodalField3(vec![Vec3::z(), -Vec3::z()]);
        let f = TangentFrame::build(&m).unwrap();
        assert_eq!(f.0[0], [Vec3::x(), Vec3::y()]);
        assert_eq!(f.0[1], [Vec3::x(), Vec3::y()]);
    }

    #[test]
    fn frame_rejects_non_unit() {
        let m = NodalField3(vec![Vec3::z(), Vec3::new(0.0, 0.0, 1.1)]);
        assert!(matches!(
            TangentFrame::build(&m),
            Err(Error::NotUnit { node: 1, .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(0.0, 1.0, 1.0, 1.0, 10).is_err());
        assert!(SchemeParams::new(1.0, 0.0, 1.0, 1.0, 10).is_err());
        assert!(SchemeParams::new(1.0, 1.0, 1.5, 1.0, 10).is_err());
        assert!(SchemeParams::new(1.0, 1.0, 1.0, 1.0, 0).is_err());
        let p = SchemeParams::new(0.5, 2.0, 1.0, 1.0, 10).unwrap();
        assert_eq!(p.mu(), 4.25);
    }

    #[test]
    fn regime_guard() {
        let p = SchemeParams::new(1.0, 1.0, 0.3, 1.0, 10).unwrap();
        assert!(matches!(p.check_regime(0.25), Err(Error::Regime(_))));
        assert!(p.check_regime(0.5).is_ok());
        let p = SchemeParams::new(1.0, 1.0, 0.8, 1.0, 1).unwrap();
        assert!(p.check_regime(1e-3).is_ok());
    }

    #[test]
    fn rotation_time_mismatch() {
        let sp = P1Space::new(Mesh::structured(2, 2).unwrap()).unwrap();
        let p = SchemeParams::new(1.0, 1.0, 1.0, 1.0, 4).unwrap();
        let (mut state, _) =
            initial_state(&sp, &NodalField3::constant(sp.n_nodes(), Vec3::z())).unwrap();
        let rot = RotationField::new(&sp, &NoiseCoefficients::zero(1).unwrap(), p.dt());
        state.j = 1;
        assert!(matches!(
            assemble_step_system(&sp, &state, &rot, &p),
            Err(Error::TimeMismatch { .. })
        ));
    }

    #[test]
    fn constant_state_is_equilibrium() {
        let sp = P1Space::new(Mesh::structured(2, 3).unwrap()).unwrap();
        let p = SchemeParams::new(1.0, 1.0, 1.0, 1.0, 4).unwrap();
        let (state, _) = initial_state(
            &sp,
            &NodalField3::constant(sp.n_nodes(), Vec3::new(0.6, 0.0, 0.8)),
        )
        .unwrap();
        let rot = RotationField::new(&sp, &NoiseCoefficients::zero(1).unwrap(), p.dt());
        let sys = assemble_step_system(&sp, &state, &rot, &p).unwrap();
        assert!(sys.rhs.iter().all(|r| r.abs() < 1e-14));
        let sol = solve_step(&sys, &p.solver).unwrap();
        assert!(sol.v.max_norm() == 0.0);
    }

    #[test]
    fn initial_data_is_renormalized() {
        let sp = P1Space::new(Mesh::structured(2, 2).unwrap()).unwrap();
        let m0 = interpolate_nodal(&sp, |x| Vec3::new(x[0], 0.0, 1.0)).unwrap();
        let (s, flag) = initial_state(&sp, &m0).unwrap();
        assert!(flag);
        assert!(norm_defect(&s.m) < 1e-15);
    }
}
