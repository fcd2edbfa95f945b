//! The rotation process Z_t(x), its spatial gradient ξ_t(x), and the
//! correction functional F(t, u, v) = ⟨∇(Z_t u), ∇(Z_t v)⟩ − ⟨∇u, ∇v⟩.
//!
//! Z solves the Stratonovich equation dZ = Σ_i G_i Z ∘ dW_i with
//! G_i u = u × g_i(x). It is tracked pointwise at the mesh nodes and at every
//! quadrature point of a [`P1Space`].

use std::fmt::Debug;
use std::io::Write;
use std::sync::Arc;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::fem::{NodalField3, P1Space, Vec3};
use crate::par;
use crate::wiener::WienerPath;

pub type Mat3 = Matrix3<f64>;

/// A smooth noise coefficient g: D → R³ with its Jacobian.
pub trait NoiseField: Send + Sync + Debug {
    fn value(&self, x: &Vec3) -> Vec3;
    /// Column d holds ∂g/∂x_d.
    fn jacobian(&self, x: &Vec3) -> Mat3;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub Vec3);

impl NoiseField for ConstantField {
    fn value(&self, _: &Vec3) -> Vec3 {
        self.0
    }
    fn jacobian(&self, _: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
}

/// g(x) = α (x₁, 0, 1 − x₁).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGradientField {
    pub alpha: f64,
}

impl NoiseField for LinearGradientField {
    fn value(&self, x: &Vec3) -> Vec3 {
        Vec3::new(x[0], 0.0, 1.0 - x[0]) * self.alpha
    }
    fn jacobian(&self, _: &Vec3) -> Mat3 {
        let mut j = Mat3::zeros();
        j.set_column(0, &(Vec3::new(1.0, 0.0, -1.0) * self.alpha));
        j
    }
}

/// The q coefficient fields g_1..g_q.
#[derive(Debug, Clone)]
pub struct NoiseCoefficients {
    fields: Vec<Arc<dyn NoiseField>>,
}

impl NoiseCoefficients {
    pub fn new(fields: Vec<Arc<dyn NoiseField>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one noise coefficient is required".into(),
            ));
        }
        Ok(NoiseCoefficients { fields })
    }

    /// q coefficients that vanish identically.
    pub fn zero(q: usize) -> Result<Self> {
        Self::new(
            (0..q)
                .map(|_| Arc::new(ConstantField(Vec3::zeros())) as Arc<dyn NoiseField>)
                .collect(),
        )
    }

    pub fn constant(vectors: &[Vec3]) -> Result<Self> {
        Self::new(
            vectors
                .iter()
                .map(|&g| Arc::new(ConstantField(g)) as Arc<dyn NoiseField>)
                .collect(),
        )
    }

    pub fn constant_z(amplitude: f64) -> Self {
        Self::constant(&[Vec3::z() * amplitude]).unwrap()
    }

    pub fn constant_x(amplitude: f64) -> Self {
        Self::constant(&[Vec3::x() * amplitude]).unwrap()
    }

    /// g₁ = a e₃, g₂ = a e₁.
    pub fn pair_noncommuting(amplitude: f64) -> Self {
        Self::constant(&[Vec3::z() * amplitude, Vec3::x() * amplitude]).unwrap()
    }

    pub fn linear_gradient(amplitude: f64) -> Self {
        Self::new(vec![Arc::new(LinearGradientField { alpha: amplitude })]).unwrap()
    }

    pub fn q(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[Arc<dyn NoiseField>] {
        &self.fields
    }

    /// Matrices of G_i and of I_i (per direction) at x.
    pub fn at(&self, x: &Vec3, dim: usize) -> PointCoefficients {
        let mut a = Vec::with_capacity(self.q());
        let mut b = Vec::with_capacity(self.q());
        let mut varying = false;
        for f in &self.fields {
            a.push(cross_right(&f.value(x)));
            let jac = f.jacobian(x);
            let mut bd = [Mat3::zeros(); 3];
            for (d, m) in bd.iter_mut().enumerate().take(dim) {
                *m = cross_right(&jac.column(d).into_owned());
                varying |= m.iter().any(|&e| e != 0.0);
            }
            b.push(bd);
        }
        PointCoefficients { a, b, varying }
    }
}

/// Matrix of u ↦ u × g.
pub fn cross_right(g: &Vec3) -> Mat3 {
    Mat3::new(0.0, g[2], -g[1], -g[2], 0.0, g[0], g[1], -g[0], 0.0)
}

/// exp(S) for a skew-symmetric 3×3 matrix by the Rodrigues formula.
pub fn expm_skew(s: &Mat3) -> Mat3 {
    // S = [w]× with w the axial vector
    let w = Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]);
    let th2 = w.norm_squared();
    let (c1, c2) = if th2 < 1e-8 {
        (
            1.0 - th2 / 6.0 * (1.0 - th2 / 20.0),
            0.5 * (1.0 - th2 / 12.0 * (1.0 - th2 / 30.0)),
        )
    } else {
        let th = th2.sqrt();
        (th.sin() / th, (1.0 - th.cos()) / th2)
    };
    Mat3::identity() + s * c1 + s * s * c2
}

/// Coefficient matrices at one evaluation point.
#[derive(Debug, Clone)]
pub struct PointCoefficients {
    /// A_i, the matrix of G_i.
    pub a: Vec<Mat3>,
    /// B_{i,d}, the matrix of u ↦ u × ∂g_i/∂x_d.
    pub b: Vec<[Mat3; 3]>,
    /// Whether any g_i has a nonzero Jacobian here.
    pub varying: bool,
}

/// Z and ξ = ∇Z at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub z: Mat3,
    pub xi: [Mat3; 3],
}

impl PointState {
    pub fn identity() -> Self {
        PointState {
            z: Mat3::identity(),
            xi: [Mat3::zeros(); 3],
        }
    }

    /// One step: Lie–Euler exponential for Z, Euler–Maruyama for the Itô
    /// equation of ξ with coefficients frozen at the old Z.
    pub fn advance(&mut self, c: &PointCoefficients, dw: &[f64], dt: f64, dim: usize) {
        let omega =
            c.a.iter()
                .zip(dw)
                .fold(Mat3::zeros(), |acc, (a, w)| acc + a * *w);
        let z_old = self.z;
        self.z = expm_skew(&omega) * z_old;
        if !c.varying && self.xi.iter().all(|m| m.iter().all(|&e| e == 0.0)) {
            return;
        }
        let mut next = self.xi;
        for (i, (a, b)) in c.a.iter().zip(&c.b).enumerate() {
            let a2 = a * a;
            for d in 0..dim {
                let h = b[d] * a + a * b[d];
                next[d] += (a2 * self.xi[d] + h * z_old) * (0.5 * dt)
                    + (a * self.xi[d] + b[d] * z_old) * dw[i];
            }
        }
        self.xi = next;
    }
}

/// Z_t and ξ_t at the nodes and quadrature points of a space.
///
/// Points `0..n_nodes` are the mesh nodes; the rest are the quadrature points
/// in the space's global quadrature order.
#[derive(Debug, Clone)]
pub struct RotationField {
    dim: usize,
    n_nodes: usize,
    coeffs: Arc<Vec<PointCoefficients>>,
    states: Vec<PointState>,
    q: usize,
    step: usize,
    dt: f64,
}

impl RotationField {
    /// Identity field on the nodes and quadrature points of `space`.
    pub fn new(space: &P1Space, coeffs: &NoiseCoefficients, dt: f64) -> Self {
        let nodes: Vec<Vec3> = space
            .mesh()
            .vertices()
            .iter()
            .map(|&p| Vec3::from(p))
            .collect();
        Self::from_points(space.dim(), &nodes, space.qp_points(), coeffs, dt)
    }

    /// Identity field on arbitrary point sets.
    pub fn from_points(
        dim: usize,
        nodes: &[Vec3],
        qps: &[Vec3],
        coeffs: &NoiseCoefficients,
        dt: f64,
    ) -> Self {
        let pts: Vec<&Vec3> = nodes.iter().chain(qps).collect();
        let pc = par::map_range(pts.len(), |i| coeffs.at(pts[i], dim));
        RotationField {
            dim,
            n_nodes: nodes.len(),
            coeffs: Arc::new(pc),
            states: vec![PointState::identity(); pts.len()],
            q: coeffs.q(),
            step: 0,
            dt,
        }
    }

    /// Copy of this field reset to t = 0, sharing the coefficient cache.
    pub fn reset(&self) -> Self {
        RotationField {
            states: vec![PointState::identity(); self.states.len()],
            step: 0,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_qp(&self) -> usize {
        self.states.len() - self.n_nodes
    }

    pub fn states(&self) -> &[PointState] {
        &self.states
    }

    pub fn node_state(&self, n: usize) -> &PointState {
        &self.states[n]
    }

    pub fn qp_state(&self, i: usize) -> &PointState {
        &self.states[self.n_nodes + i]
    }

    pub fn qp_coefficients(&self, i: usize) -> &PointCoefficients {
        &self.coeffs[self.n_nodes + i]
    }

    /// Advance from t_j to t_{j+1} with the increments of step j.
    pub fn evolve_step(&mut self, dw: &[f64]) -> Result<()> {
        if dw.len() != self.q {
            return Err(Error::Mismatch(format!(
                "expected {} increments, got {}",
                self.q,
                dw.len()
            )));
        }
        if let Some(i) = dw.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "Wiener increment",
                index: i,
            });
        }
        let (coeffs, dt, dim) = (&self.coeffs, self.dt, self.dim);
        par::for_each_mut(&mut self.states, |i, s| s.advance(&coeffs[i], dw, dt, dim));
        self.step += 1;
        Ok(())
    }

    /// Evolve along `path` until step `j` is reached.
    pub fn evolve_to(&mut self, path: &WienerPath, j: usize) -> Result<()> {
        if j > path.steps() || j < self.step {
            return Err(Error::TimeMismatch {
                expected: j,
                found: self.step,
            });
        }
        while self.step < j {
            self.evolve_step(path.increment(self.step))?;
        }
        Ok(())
    }

    /// Z u (or Zᵀ u) at the nodes.
    pub fn apply_nodes(&self, u: &NodalField3, inverse: bool) -> Result<NodalField3> {
        if u.len() != self.n_nodes {
            return Err(Error::Mismatch(format!(
                "field has {} nodes, rotation field {}",
                u.len(),
                self.n_nodes
            )));
        }
        Ok(NodalField3(apply(
            &self.states[..self.n_nodes],
            u.as_slice(),
            inverse,
        )))
    }

    /// Z u (or Zᵀ u) at the quadrature points.
    pub fn apply_qp(&self, u: &[Vec3], inverse: bool) -> Result<Vec<Vec3>> {
        if u.len() != self.n_qp() {
            return Err(Error::Mismatch(format!(
                "{} values for {} quadrature points",
                u.len(),
                self.n_qp()
            )));
        }
        Ok(apply(&self.states[self.n_nodes..], u, inverse))
    }

    fn check_space(&self, space: &P1Space) -> Result<()> {
        if space.n_nodes() != self.n_nodes || space.n_qp() != self.n_qp() {
            return Err(Error::Mismatch(
                "rotation field does not live on this space".into(),
            ));
        }
        Ok(())
    }

    /// ∇(Z u) at every quadrature point: entry d is ξ_d u + Z ∂_d u.
    pub fn grad_apply(&self, space: &P1Space, u: &NodalField3) -> Result<Vec<[Vec3; 3]>> {
        self.check_space(space)?;
        let uq = space.eval_qp(u);
        let nq = space.n_quad_per_cell();
        let per_cell = par::map_range(space.n_cells(), |c| {
            let du = space.cell_gradient(u, c);
            (0..nq)
                .map(|q| self.grad_at(c * nq + q, &uq[c * nq + q], &du))
                .collect::<Vec<_>>()
        });
        Ok(per_cell.into_iter().flatten().collect())
    }

    fn grad_at(&self, i: usize, u: &Vec3, du: &[Vec3; 3]) -> [Vec3; 3] {
        let s = self.qp_state(i);
        let mut g = [Vec3::zeros(); 3];
        for d in 0..self.dim {
            g[d] = s.xi[d] * u + s.z * du[d];
        }
        g
    }

    /// F(t, u, v) = ⟨∇(Z u), ∇(Z v)⟩ − ⟨∇u, ∇v⟩ with both terms by quadrature.
    pub fn compute_f_identity(
        &self,
        space: &P1Space,
        u: &NodalField3,
        v: &NodalField3,
    ) -> Result<f64> {
        self.check_space(space)?;
        let uq = space.eval_qp(u);
        let vq = space.eval_qp(v);
        let nq = space.n_quad_per_cell();
        let w = space.qp_weights();
        let per_cell = par::map_range(space.n_cells(), |c| {
            let du = space.cell_gradient(u, c);
            let dv = space.cell_gradient(v, c);
            let mut acc = 0.0;
            for q in 0..nq {
                let i = c * nq + q;
                let gu = self.grad_at(i, &uq[i], &du);
                let gv = self.grad_at(i, &vq[i], &dv);
                let mut s = 0.0;
                for d in 0..self.dim {
                    s += gu[d].dot(&gv[d]) - du[d].dot(&dv[d]);
                }
                acc += w[i] * s;
            }
            acc
        });
        Ok(per_cell.iter().sum())
    }

    /// F(t, u, v) for fields given by their values and spatial derivatives at
    /// every quadrature point (not necessarily P1).
    pub fn compute_f_sampled(
        &self,
        space: &P1Space,
        u: &[Vec3],
        du: &[[Vec3; 3]],
        v: &[Vec3],
        dv: &[[Vec3; 3]],
    ) -> Result<f64> {
        self.check_space(space)?;
        let n = self.n_qp();
        if u.len() != n || du.len() != n || v.len() != n || dv.len() != n {
            return Err(Error::Mismatch(
                "sampled fields do not match the quadrature points".into(),
            ));
        }
        let w = space.qp_weights();
        let nq = space.n_quad_per_cell();
        let per_cell = par::map_range(space.n_cells(), |c| {
            let mut acc = 0.0;
            for i in c * nq..(c + 1) * nq {
                let gu = self.grad_at(i, &u[i], &du[i]);
                let gv = self.grad_at(i, &v[i], &dv[i]);
                let s: f64 = (0..self.dim)
                    .map(|d| gu[d].dot(&gv[d]) - du[i][d].dot(&dv[i][d]))
                    .sum();
                acc += w[i] * s;
            }
            acc
        });
        Ok(per_cell.iter().sum())
    }

    /// Nodal vectors R_n with ⟨∇(Z m), ∇(Z w)⟩ = Σ_n R_n·w_n for every P1 field w.
    ///
    /// Hence ⟨∇m, ∇w⟩ + F(t, m, w) = Σ_n R_n·w_n.
    pub fn transformed_stiffness_load(
        &self,
        space: &P1Space,
        m: &NodalField3,
    ) -> Result<Vec<Vec3>> {
        self.check_space(space)?;
        let mq = space.eval_qp(m);
        let nq = space.n_quad_per_cell();
        let nv = space.dim() + 1;
        let w = space.qp_weights();
        let bary = &space.quadrature().bary;
        let locals = par::map_range(space.n_cells(), |c| {
            let dm = space.cell_gradient(m, c);
            let grads = space.cell_grads(c);
            let mut local = [Vec3::zeros(); 4];
            for (q, bq) in bary.iter().enumerate().take(nq) {
                let i = c * nq + q;
                let gm = self.grad_at(i, &mq[i], &dm);
                let s = self.qp_state(i);
                for (a, r) in local.iter_mut().enumerate().take(nv) {
                    for d in 0..self.dim {
                        *r += (s.xi[d].tr_mul(&gm[d]) * bq[a] + s.z.tr_mul(&gm[d]) * grads[a][d])
                            * w[i];
                    }
                }
            }
            local
        });
        let mut r = vec![Vec3::zeros(); space.n_nodes()];
        for (c, local) in locals.iter().enumerate() {
            for (a, &n) in space.mesh().cell(c).iter().enumerate() {
                r[n] += local[a];
            }
        }
        Ok(r)
    }

    /// Largest ‖ZᵀZ − I‖_F over all points.
    pub fn orthogonality_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.z.tr_mul(&s.z) - Mat3::identity()).norm())
            .fold(0.0, f64::max)
    }

    /// Largest |det Z − 1| over all points.
    pub fn determinant_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.z.determinant() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Per-node Z as CSV, nine entries row-major per line.
    pub fn write_node_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::from("node,z11,z12,z13,z21,z22,z23,z31,z32,z33\n");
        for (n, st) in self.states[..self.n_nodes].iter().enumerate() {
            s.push_str(&n.to_string());
            for r in 0..3 {
                for c in 0..3 {
                    s.push_str(&format!(",{:.16e}", st.z[(r, c)]));
                }
            }
            s.push('\n');
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn apply(states: &[PointState], u: &[Vec3], inverse: bool) -> Vec<Vec3> {
    states
        .iter()
        .zip(u)
        .map(|(s, v)| if inverse { s.z.tr_mul(v) } else { s.z * v })
        .collect()
}

/// F(t_j, u, v) accumulated directly from its stochastic integral
/// representation, as an independent check on [`RotationField::compute_f_identity`].
///
/// Uses the left-point sum Σ_{s<j} Σ_i [F_{1,i}(t_s) k + F_{2,i}(t_s) ΔW_i(s)],
/// with pointwise integrands written before any integration by parts so no
/// boundary condition on g_i is needed:
/// F_{1,i} = Σ_d ⟨C_d Zu, ∇_d Zv⟩ + ⟨∇_d Zu, C_d Zv⟩ + ⟨B_d Zu, B_d Zv⟩ and
/// F_{2,i} = Σ_d ⟨∇_d Zu, B_d Zv⟩ + ⟨B_d Zu, ∇_d Zv⟩, where B_d = I_{i,d} and
/// C_d = ½(B_d A_i − A_i B_d).
pub fn compute_f_direct(
    space: &P1Space,
    coeffs: &NoiseCoefficients,
    path: &WienerPath,
    u: &NodalField3,
    v: &NodalField3,
    j: usize,
) -> Result<f64> {
    if j > path.steps() {
        return Err(Error::InvalidArgument(format!(
            "step {j} beyond path horizon of {} steps",
            path.steps()
        )));
    }
    if coeffs.q() != path.q() {
        return Err(Error::Mismatch(format!(
            "{} coefficients but path has q = {}",
            coeffs.q(),
            path.q()
        )));
    }
    let k = path.dt();
    let mut field = RotationField::new(space, coeffs, k);
    let uq = space.eval_qp(u);
    let vq = space.eval_qp(v);
    let nq = space.n_quad_per_cell();
    let dim = space.dim();
    let w = space.qp_weights();
    let mut total = 0.0;
    for s in 0..j {
        let dw = path.increment(s);
        let per_cell = par::map_range(space.n_cells(), |c| {
            let du = space.cell_gradient(u, c);
            let dv = space.cell_gradient(v, c);
            let mut acc = 0.0;
            for q in 0..nq {
                let i = c * nq + q;
                let st = field.qp_state(i);
                let pc = field.qp_coefficients(i);
                let zu = st.z * uq[i];
                let zv = st.z * vq[i];
                let gu = field.grad_at(i, &uq[i], &du);
                let gv = field.grad_at(i, &vq[i], &dv);
                let mut inc = 0.0;
                for (ii, (a, b)) in pc.a.iter().zip(&pc.b).enumerate() {
                    let (mut f1, mut f2) = (0.0, 0.0);
                    for d in 0..dim {
                        let cm = (b[d] * a - a * b[d]) * 0.5;
                        let (bzu, bzv) = (b[d] * zu, b[d] * zv);
                        f1 += (cm * zu).dot(&gv[d]) + gu[d].dot(&(cm * zv)) + bzu.dot(&bzv);
                        f2 += gu[d].dot(&bzv) + bzu.dot(&gv[d]);
                    }
                    inc += f1 * k + f2 * dw[ii];
                }
                acc += w[i] * inc;
            }
            acc
        });
        total += per_cell.iter().sum::<f64>();
        field.evolve_step(dw)?;
    }
    Ok(total)
}
