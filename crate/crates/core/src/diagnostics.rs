//! Reconstruction of the physical magnetization, time interpolants of a
//! computed trajectory, interpolant error norms, and the weak-form residual.

use crate::error::{Error, Result};
use crate::fem::{NodalField3, P1Space, Vec3};
use crate::rotation::{NoiseCoefficients, RotationField};
use crate::scheme::{run_with, RunOutput, SchemeParams};
use crate::wiener::WienerPath;

/// M = Z_{t_j} m at the nodes; `j` must match the rotation field's step.
pub fn reconstruct_magnetization(
    m: &NodalField3,
    rotation: &RotationField,
    j: usize,
) -> Result<NodalField3> {
    if rotation.step() != j {
        return Err(Error::TimeMismatch {
            expected: j,
            found: rotation.step(),
        });
    }
    rotation.apply_nodes(m, false)
}

/// Nodal states m^0..m^J and updates v^0..v^{J−1} on a uniform grid, read as
/// the piecewise-linear interpolant m_{h,k}, the piecewise-constant m⁻_{h,k}
/// and v_{h,k}.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryInterpolants {
    dt: f64,
    states: Vec<NodalField3>,
    velocities: Vec<NodalField3>,
}

impl TrajectoryInterpolants {
    pub fn new(dt: f64, states: Vec<NodalField3>, velocities: Vec<NodalField3>) -> Result<Self> {
        if states.len() != velocities.len() + 1 || velocities.is_empty() {
            return Err(Error::Mismatch(format!(
                "{} states need {} updates, got {}",
                states.len(),
                states.len().saturating_sub(1),
                velocities.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time step must be positive, got {dt}"
            )));
        }
        Ok(TrajectoryInterpolants {
            dt,
            states,
            velocities,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.velocities.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn states(&self) -> &[NodalField3] {
        &self.states
    }

    pub fn velocities(&self) -> &[NodalField3] {
        &self.velocities
    }

    /// Index j with t ∈ [t_j, t_{j+1}), clamped so that t = T maps to J − 1.
    pub fn interval(&self, t: f64) -> usize {
        ((t / self.dt).floor().max(0.0) as usize).min(self.steps() - 1)
    }

    /// m_{h,k}(t).
    pub fn m_at(&self, t: f64) -> NodalField3 {
        let j = self.interval(t);
        let tj = j as f64 * self.dt;
        if t == tj {
            return self.states[j].clone();
        }
        if t >= self.horizon() {
            return self.states[self.steps()].clone();
        }
        let s = (t - tj) / self.dt;
        self.states[j].scaled(1.0 - s).axpy(s, &self.states[j + 1])
    }

    /// m⁻_{h,k}(t) = m^j on [t_j, t_{j+1}).
    pub fn m_minus_at(&self, t: f64) -> &NodalField3 {
        &self.states[self.interval(t)]
    }

    /// v_{h,k}(t) = v^j on [t_j, t_{j+1}).
    pub fn v_at(&self, t: f64) -> &NodalField3 {
        &self.velocities[self.interval(t)]
    }
}

/// Run the scheme and keep the full trajectory.
pub fn run_recorded(
    space: &P1Space,
    params: &SchemeParams,
    coeffs: &NoiseCoefficients,
    path: &WienerPath,
    m0: &NodalField3,
) -> Result<(RunOutput, TrajectoryInterpolants)> {
    let mut states = Vec::with_capacity(params.steps() + 1);
    let mut velocities = Vec::with_capacity(params.steps());
    let out = run_with(space, params, coeffs, path, m0, |ev| {
        if states.is_empty() {
            states.push(ev.old.m.clone());
        }
        velocities.push(ev.new.v.clone());
        states.push(ev.new.m.clone());
        Ok(())
    })?;
    let traj = TrajectoryInterpolants::new(params.dt(), states, velocities)?;
    Ok((out, traj))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolantErrors {
    /// ‖m_{h,k} − m⁻_{h,k}‖²_{L²(D_T)}.
    pub m_minus_gap2: f64,
    /// ‖|m_{h,k}| − 1‖²_{L²(D_T)}.
    pub unit_defect2: f64,
    /// ‖v_{h,k} − ∂_t m_{h,k}‖_{L¹(D_T)}.
    pub v_gap: f64,
}

// 5-point Gauss–Legendre rule on [0, 1]
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668_0,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

pub fn interpolant_errors(traj: &TrajectoryInterpolants, space: &P1Space) -> InterpolantErrors {
    let k = traj.dt;
    let w = space.qp_weights();
    let (mut gap, mut unit, mut vgap) = (0.0, 0.0, 0.0);
    let mut a = space.eval_qp(&traj.states[0]);
    for j in 0..traj.steps() {
        let b = space.eval_qp(&traj.states[j + 1]);
        let vq = space.eval_qp(&traj.velocities[j]);
        for i in 0..w.len() {
            let diff = b[i] - a[i];
            // ∫_0^k (s/k)² ds |Δm|² = k/3 |Δm|²
            gap += w[i] * k / 3.0 * diff.norm_squared();
            for (s, gw) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let mt = a[i] + diff * *s;
                unit += w[i] * k * gw * (mt.norm() - 1.0).powi(2);
            }
            vgap += w[i] * k * (vq[i] - diff / k).norm();
        }
        a = b;
    }
    InterpolantErrors {
        m_minus_gap2: gap,
        unit_defect2: unit,
        v_gap: vgap,
    }
}

/// A smooth space-time test field ψ(t, x).
pub trait TestField: Send + Sync {
    fn value(&self, t: f64, x: &Vec3) -> Vec3;
    /// Entry d is ∂ψ/∂x_d.
    fn gradient(&self, t: f64, x: &Vec3) -> [Vec3; 3];
    /// Closed interval outside of which ψ vanishes.
    fn time_support(&self) -> (f64, f64);
}

/// ψ(t, x) = b(t) (sin(ω·x + φ) a + cos(ω·x + φ) c), with b a C^∞ bump
/// supported in [t0, t1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpTrigField {
    pub t0: f64,
    pub t1: f64,
    pub omega: Vec3,
    pub phase: f64,
    pub a: Vec3,
    pub c: Vec3,
}

impl BumpTrigField {
    fn bump(&self, t: f64) -> f64 {
        let s = (2.0 * t - self.t0 - self.t1) / (self.t1 - self.t0);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }
}

impl TestField for BumpTrigField {
    fn value(&self, t: f64, x: &Vec3) -> Vec3 {
        let arg = self.omega.dot(x) + self.phase;
        (self.a * arg.sin() + self.c * arg.cos()) * self.bump(t)
    }

    fn gradient(&self, t: f64, x: &Vec3) -> [Vec3; 3] {
        let arg = self.omega.dot(x) + self.phase;
        let dir = (self.a * arg.cos() - self.c * arg.sin()) * self.bump(t);
        [
            dir * self.omega[0],
            dir * self.omega[1],
            dir * self.omega[2],
        ]
    }

    fn time_support(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }
}

/// Three test fields supported in [0.1 T, 0.9 T].
pub fn builtin_test_fields(horizon: f64) -> Vec<BumpTrigField> {
    let (t0, t1) = (0.1 * horizon, 0.9 * horizon);
    let pi = std::f64::consts::PI;
    vec![
        BumpTrigField {
            t0,
            t1,
            omega: Vec3::new(pi, 0.0, 0.0),
            phase: 0.0,
            a: Vec3::new(0.0, 1.0, 0.0),
            c: Vec3::new(0.0, 0.0, 0.5),
        },
        BumpTrigField {
            t0,
            t1,
            omega: Vec3::new(pi, 2.0 * pi, 0.0),
            phase: 0.3,
            a: Vec3::new(1.0, 0.0, 0.0),
            c: Vec3::new(0.0, 0.7, 0.0),
        },
        BumpTrigField {
            t0,
            t1,
            omega: Vec3::new(0.0, pi, pi),
            phase: 1.1,
            a: Vec3::new(0.4, 0.4, 0.8),
            c: Vec3::new(-0.6, 0.0, 0.3),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub value: f64,
    /// Set when ψ is not supported strictly inside (0, T).
    pub support_warning: bool,
}

/// I(m_{h,k}, ψ) = ∫_0^T λ₁⟨m×∂_t m, m×ψ⟩ − λ₂⟨∂_t m, m×ψ⟩ − μ⟨∇m, ∇(m×ψ)⟩
/// − μ F_k(t, m, m×ψ) dt, by the midpoint rule on each scheme interval with
/// the frozen F_k(t, ·, ·) = F(t_j, ·, ·). The rotation field is re-evolved
/// along `path`, so memory stays independent of J.
pub fn weak_residual(
    traj: &TrajectoryInterpolants,
    space: &P1Space,
    coeffs: &NoiseCoefficients,
    path: &WienerPath,
    params: &SchemeParams,
    psi: &dyn TestField,
) -> Result<ResidualReport> {
    if path.steps() != traj.steps() {
        return Err(Error::Mismatch(format!(
            "path has {} steps, trajectory {}",
            path.steps(),
            traj.steps()
        )));
    }
    let (s0, s1) = psi.time_support();
    let support_warning = s0 <= 0.0 || s1 >= traj.horizon();
    let k = traj.dt;
    let (l1, l2, mu) = (params.lambda1(), params.lambda2(), params.mu());
    let mut rotation = RotationField::new(space, coeffs, k);
    let w = space.qp_weights();
    let nq = space.n_quad_per_cell();
    let dim = space.dim();
    let mut total = 0.0;
    for j in 0..traj.steps() {
        let tm = (j as f64 + 0.5) * k;
        let mid = traj.states[j].scaled(0.5).axpy(0.5, &traj.states[j + 1]);
        let dm = traj.states[j + 1]
            .axpy(-1.0, &traj.states[j])
            .scaled(1.0 / k);
        let mq = space.eval_qp(&mid);
        let dq = space.eval_qp(&dm);
        let n = space.n_qp();
        let mut grads_m = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        let mut grads_phi = Vec::with_capacity(n);
        let mut local = 0.0;
        for c in 0..space.n_cells() {
            let gm = space.cell_gradient(&mid, c);
            for i in c * nq..(c + 1) * nq {
                let x = space.qp_points()[i];
                let p = psi.value(tm, &x);
                let gp = psi.gradient(tm, &x);
                let mxp = mq[i].cross(&p);
                let mut gmxp = [Vec3::zeros(); 3];
                let mut grad_term = 0.0;
                for d in 0..dim {
                    gmxp[d] = gm[d].cross(&p) + mq[i].cross(&gp[d]);
                    grad_term += gm[d].dot(&gmxp[d]);
                }
                local += w[i]
                    * (l1 * mq[i].cross(&dq[i]).dot(&mxp) - l2 * dq[i].dot(&mxp) - mu * grad_term);
                grads_m.push(gm);
                phi.push(mxp);
                grads_phi.push(gmxp);
            }
        }
        let f = rotation.compute_f_sampled(space, &mq, &grads_m, &phi, &grads_phi)?;
        total += k * (local - mu * f);
        rotation.evolve_step(path.increment(j))?;
    }
    Ok(ResidualReport {
        value: total,
        support_warning,
    })
}

/// The unique φ with λ₁φ + λ₂ φ×ζ = ψ, for |ζ| = 1 and λ₁ ≠ 0.
pub fn solve_phi(lambda1: f64, lambda2: f64, zeta: &Vec3, psi: &Vec3) -> Result<Vec3> {
    if lambda1 == 0.0 || !lambda1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda1 must be nonzero, got {lambda1}"
        )));
    }
    if (zeta.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "zeta must be a unit vector, |zeta| = {}",
            zeta.norm()
        )));
    }
    // (aI + b[ζ]×)⁻¹ = (a²I − ab[ζ]× + b²ζζᵀ) / (a(a² + b²)) with a = λ₁, b = −λ₂
    let (a, b) = (lambda1, -lambda2);
    let num = psi * (a * a) - zeta.cross(psi) * (a * b) + zeta * (b * b * zeta.dot(psi));
    Ok(num / (a * (a * a + b * b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use approx::assert_relative_eq;

    #[test]
    fn solve_phi_examples() {
        let phi = solve_phi(1.0, 1.0, &Vec3::z(), &Vec3::x()).unwrap();
        assert_relative_eq!(phi, Vec3::new(0.5, 0.5, 0.0), epsilon = 1e-15);
        let psi = Vec3::new(0.3, -2.0, 1.0);
        assert_relative_eq!(
            solve_phi(2.0, 0.0, &Vec3::y(), &psi).unwrap(),
            psi / 2.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            solve_phi(2.0, 5.0, &Vec3::y(), &Vec3::y()).unwrap(),
            Vec3::y() / 2.0,
            epsilon = 1e-15
        );
        assert!(solve_phi(0.0, 1.0, &Vec3::z(), &psi).is_err());
        assert!(solve_phi(1.0, 1.0, &(Vec3::z() * 1.1), &psi).is_err());
    }

    #[test]
    fn stationary_trajectory_has_zero_errors_and_residual() {
        let sp = P1Space::new(Mesh::structured(2, 3).unwrap()).unwrap();
        let m = NodalField3::constant(sp.n_nodes(), Vec3::z());
        let v = NodalField3::zeros(sp.n_nodes());
        let traj = TrajectoryInterpolants::new(0.1, vec![m.clone(); 5], vec![v; 4]).unwrap();
        let e = interpolant_errors(&traj, &sp);
        assert_eq!((e.m_minus_gap2, e.v_gap), (0.0, 0.0));
        // quadrature-point values of a unit constant are unit up to round-off
        assert!(e.unit_defect2 < 1e-28);
        let params = SchemeParams::new(1.0, 1.0, 1.0, 0.4, 4).unwrap();
        let path = WienerPath::sample(1, 1, 4, 0.4).unwrap();
        let coeffs = NoiseCoefficients::zero(1).unwrap();
        for psi in builtin_test_fields(0.4) {
            let r = weak_residual(&traj, &sp, &coeffs, &path, &params, &psi).unwrap();
            assert_eq!(r.value, 0.0);
            assert!(!r.support_warning);
        }
    }

    #[test]
    fn interpolants_at_grid_times() {
        let a = NodalField3(vec![Vec3::new(0.1, 0.2, 0.3)]);
        let b = NodalField3(vec![Vec3::new(-0.7, 0.2, 0.9)]);
        let c = NodalField3(vec![Vec3::new(0.5, 0.5, 0.5)]);
        let v = NodalField3(vec![Vec3::x()]);
        let t = TrajectoryInterpolants::new(
            0.25,
            vec![a.clone(), b.clone(), c.clone()],
            vec![v.clone(), v],
        )
        .unwrap();
        assert_eq!(t.m_at(0.0), a);
        assert_eq!(t.m_at(0.25), b);
        assert_eq!(t.m_at(0.5), c);
        assert_eq!(t.m_minus_at(0.25), &b);
        assert_eq!(t.m_minus_at(0.2499), &a);
        assert_relative_eq!(t.m_at(0.125)[0], (a[0] + b[0]) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let f = builtin_test_fields(1.0)[2];
        let x = Vec3::new(0.3, 0.6, 0.2);
        let g = f.gradient(0.4, &x);
        for d in 0..3 {
            let mut e = Vec3::zeros();
            e[d] = 1e-6;
            let fd = (f.value(0.4, &(x + e)) - f.value(0.4, &(x - e))) / 2e-6;
            assert_relative_eq!(fd, g[d], epsilon = 1e-8);
        }
        assert_eq!(f.value(0.05, &x), Vec3::zeros());
    }

    #[test]
    fn support_warning_flag() {
        let sp = P1Space::new(Mesh::structured(2, 2).unwrap()).unwrap();
        let m = NodalField3::constant(sp.n_nodes(), Vec3::z());
        let traj = TrajectoryInterpolants::new(
            0.5,
            vec![m.clone(); 3],
            vec![NodalField3::zeros(sp.n_nodes()); 2],
        )
        .unwrap();
        let params = SchemeParams::new(1.0, 1.0, 1.0, 1.0, 2).unwrap();
        let path = WienerPath::zero(1, 2, 1.0).unwrap();
        let psi = BumpTrigField {
            t0: -0.5,
            ..builtin_test_fields(1.0)[0]
        };
        let r = weak_residual(
            &traj,
            &sp,
            &NoiseCoefficients::zero(1).unwrap(),
            &path,
            &params,
            &psi,
        )
        .unwrap();
        assert!(r.support_warning);
    }
}
