//! The P1 finite element space: quadrature, basis gradients, stiffness and
//! lumped mass assembly, and nodal operations on vector-valued fields.

use std::ops::{Index, IndexMut};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::par;
use crate::sparse::CsrMatrix;

pub type Vec3 = Vector3<f64>;

/// A vector-valued P1 field given by its nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField3(pub Vec<Vec3>);

impl NodalField3 {
    /// Wrap nodal values, rejecting non-finite entries.
    pub fn new(values: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite {
                what: "nodal value",
                index: i,
            });
        }
        Ok(NodalField3(values))
    }

    pub fn zeros(n: usize) -> Self {
        NodalField3(vec![Vec3::zeros(); n])
    }

    pub fn constant(n: usize, c: Vec3) -> Self {
        NodalField3(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.0
    }

    /// self + s·other
    pub fn axpy(&self, s: f64, other: &NodalField3) -> NodalField3 {
        NodalField3(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b * s)
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> NodalField3 {
        NodalField3(self.0.iter().map(|a| a * s).collect())
    }

    /// Largest nodal Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for NodalField3 {
    type Output = Vec3;
    fn index(&self, i: usize) -> &Vec3 {
        &self.0[i]
    }
}

impl IndexMut<usize> for NodalField3 {
    fn index_mut(&mut self, i: usize) -> &mut Vec3 {
        &mut self.0[i]
    }
}

/// A symmetric quadrature rule on the reference simplex, in barycentric form.
#[derive(Debug, Clone)]
pub struct Quadrature {
    /// Barycentric coordinates, `dim + 1` per point.
    pub bary: Vec<Vec<f64>>,
    /// Weights relative to the cell measure (they sum to one).
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Degree-2 exact rule: 3 points on triangles, 4 points on tetrahedra.
    pub fn degree2(dim: usize) -> Self {
        match dim {
            2 => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                Quadrature {
                    bary: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
                    weights: vec![1.0 / 3.0; 3],
                }
            }
            _ => {
                let a = 0.585_410_196_624_968_5;
                let b = 0.138_196_601_125_010_5;
                Quadrature {
                    bary: vec![
                        vec![a, b, b, b],
                        vec![b, a, b, b],
                        vec![b, b, a, b],
                        vec![b, b, b, a],
                    ],
                    weights: vec![0.25; 4],
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// P1 Lagrange space on a simplicial mesh with precomputed geometry,
/// quadrature points, stiffness matrix and lumped mass.
#[derive(Debug, Clone)]
pub struct P1Space {
    mesh: Mesh,
    quad: Quadrature,
    measures: Vec<f64>,
    /// Basis gradients, `dim + 1` per cell (z component zero in 2D).
    grads: Vec<Vec3>,
    qp_points: Vec<Vec3>,
    qp_weights: Vec<f64>,
    stiffness: CsrMatrix,
    lumped: Vec<f64>,
}

impl P1Space {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let dim = mesh.dim();
        let nv = dim + 1;
        let quad = Quadrature::degree2(dim);
        let nc = mesh.n_cells();
        let geometry = par::try_map_range(nc, |c| cell_geometry(&mesh, c))?;
        let mut measures = Vec::with_capacity(nc);
        let mut grads = Vec::with_capacity(nc * nv);
        for (measure, g) in geometry {
            measures.push(measure);
            grads.extend_from_slice(&g[..nv]);
        }
        let mut qp_points = Vec::with_capacity(nc * quad.len());
        let mut qp_weights = Vec::with_capacity(nc * quad.len());
        for (c, cell) in mesh.cells().enumerate() {
            for (bary, w) in quad.bary.iter().zip(&quad.weights) {
                let mut x = Vec3::zeros();
                for (a, &v) in cell.iter().enumerate() {
                    x += Vec3::from(mesh.vertex(v)) * bary[a];
                }
                qp_points.push(x);
                qp_weights.push(w * measures[c]);
            }
        }
        let mut space = P1Space {
            mesh,
            quad,
            measures,
            grads,
            qp_points,
            qp_weights,
            stiffness: CsrMatrix::diagonal(&[]),
            lumped: Vec::new(),
        };
        space.stiffness = assemble_stiffness(&space);
        space.lumped = lumped_mass_diagonal(&space);
        Ok(space)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn n_quad_per_cell(&self) -> usize {
        self.quad.len()
    }

    /// Total number of quadrature points; point `q` of cell `c` has index `c * nq + q`.
    pub fn n_qp(&self) -> usize {
        self.qp_points.len()
    }

    pub fn qp_points(&self) -> &[Vec3] {
        &self.qp_points
    }

    pub fn qp_weights(&self) -> &[f64] {
        &self.qp_weights
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        self.measures[c]
    }

    /// Gradients of the local basis functions of cell `c`.
    pub fn cell_grads(&self, c: usize) -> &[Vec3] {
        let nv = self.dim() + 1;
        &self.grads[c * nv..(c + 1) * nv]
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Diagonal of the lumped mass matrix.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn mesh_size(&self) -> f64 {
        self.mesh.mesh_size()
    }

    fn check_len(&self, u: &NodalField3) {
        assert_eq!(
            u.len(),
            self.n_nodes(),
            "nodal field length does not match the space"
        );
    }

    /// Values of `u` at all quadrature points.
    pub fn eval_qp(&self, u: &NodalField3) -> Vec<Vec3> {
        self.check_len(u);
        let nq = self.quad.len();
        let mut out = Vec::with_capacity(self.n_qp());
        for cell in self.mesh.cells() {
            for q in 0..nq {
                let bary = &self.quad.bary[q];
                out.push(
                    cell.iter()
                        .enumerate()
                        .fold(Vec3::zeros(), |acc, (a, &v)| acc + u[v] * bary[a]),
                );
            }
        }
        out
    }

    /// Spatial derivatives of `u` on cell `c`: entry `d` is ∂u/∂x_d.
    pub fn cell_gradient(&self, u: &NodalField3, c: usize) -> [Vec3; 3] {
        let grads = self.cell_grads(c);
        let mut out = [Vec3::zeros(); 3];
        for (a, &v) in self.mesh.cell(c).iter().enumerate() {
            for (d, o) in out.iter_mut().enumerate() {
                *o += u[v] * grads[a][d];
            }
        }
        out
    }

    /// uᵀ K v = ⟨∇u, ∇v⟩ for vector fields.
    pub fn stiffness_pairing(&self, u: &NodalField3, v: &NodalField3) -> f64 {
        self.check_len(u);
        self.check_len(v);
        (0..self.n_nodes())
            .map(|n| {
                let (cols, vals) = self.stiffness.row(n);
                let kv = cols
                    .iter()
                    .zip(vals)
                    .fold(Vec3::zeros(), |acc, (&m, &k)| acc + v[m] * k);
                u[n].dot(&kv)
            })
            .sum()
    }

    /// Dirichlet energy ‖∇u‖².
    pub fn dirichlet_energy(&self, u: &NodalField3) -> f64 {
        self.stiffness_pairing(u, u)
    }

    /// Lumped pairing Σ_n M_n u_n·v_n.
    pub fn lumped_pairing(&self, u: &NodalField3, v: &NodalField3) -> f64 {
        self.check_len(u);
        self.check_len(v);
        self.lumped
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(m, (a, b))| m * a.dot(b))
            .sum()
    }

    /// ⟨u, v⟩ by the degree-2 quadrature (exact for P1 × P1).
    pub fn l2_pairing(&self, u: &NodalField3, v: &NodalField3) -> f64 {
        let uq = self.eval_qp(u);
        let vq = self.eval_qp(v);
        self.qp_weights
            .iter()
            .zip(uq.iter().zip(&vq))
            .map(|(w, (a, b))| w * a.dot(b))
            .sum()
    }
}

fn cell_geometry(mesh: &Mesh, c: usize) -> Result<(f64, [Vec3; 4])> {
    let dim = mesh.dim();
    let cell = mesh.cell(c);
    let p0 = Vec3::from(mesh.vertex(cell[0]));
    let mut jac = Matrix3::identity();
    for k in 0..dim {
        jac.set_column(k, &(Vec3::from(mesh.vertex(cell[k + 1])) - p0));
    }
    let det = jac.determinant();
    let measure = det.abs() / if dim == 2 { 2.0 } else { 6.0 };
    if !(measure > 0.0) {
        return Err(Error::DegenerateCell { cell: c, measure });
    }
    let inv = jac
        .try_inverse()
        .ok_or(Error::DegenerateCell { cell: c, measure })?;
    let mut g = [Vec3::zeros(); 4];
    for k in 0..dim {
        g[k + 1] = inv.row(k).transpose();
    }
    g[0] = -(1..=dim).fold(Vec3::zeros(), |acc, k| acc + g[k]);
    Ok((measure, g))
}

/// Scalar P1 stiffness matrix K_nm = ∫∇φ_n·∇φ_m.
pub fn assemble_stiffness(space: &P1Space) -> CsrMatrix {
    let mesh = space.mesh();
    let n = mesh.n_vertices();
    let nv = mesh.dim() + 1;
    let mut rows = vec![Vec::new(); n];
    for cell in mesh.cells() {
        for &a in cell {
            rows[a].extend_from_slice(cell);
        }
    }
    let mut k = CsrMatrix::from_pattern(n, n, rows);
    let locals = par::map_range(mesh.n_cells(), |c| {
        let g = space.cell_grads(c);
        let vol = space.cell_measure(c);
        let mut local = [[0.0; 4]; 4];
        for a in 0..nv {
            for b in 0..nv {
                local[a][b] = vol * g[a].dot(&g[b]);
            }
        }
        local
    });
    for (c, local) in locals.iter().enumerate() {
        let cell = mesh.cell(c);
        for a in 0..nv {
            for b in 0..nv {
                k.add(cell[a], cell[b], local[a][b]);
            }
        }
    }
    k
}

fn lumped_mass_diagonal(space: &P1Space) -> Vec<f64> {
    let mesh = space.mesh();
    let share = 1.0 / (mesh.dim() + 1) as f64;
    let mut m = vec![0.0; mesh.n_vertices()];
    for (c, cell) in mesh.cells().enumerate() {
        for &v in cell {
            m[v] += share * space.cell_measure(c);
        }
    }
    m
}

/// Lumped (nodal quadrature) mass matrix as a diagonal sparse matrix.
pub fn assemble_lumped_mass(space: &P1Space) -> CsrMatrix {
    CsrMatrix::diagonal(space.lumped_mass())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffDiagReport {
    pub holds: bool,
    /// Node pair carrying the most positive off-diagonal entry.
    pub worst_pair: Option<(usize, usize)>,
    pub worst_value: f64,
}

/// Check that every off-diagonal stiffness entry is at most `tol`.
pub fn check_offdiag_condition(space: &P1Space, tol: f64) -> OffDiagReport {
    let mut worst_pair = None;
    let mut worst_value = f64::NEG_INFINITY;
    for (r, c, v) in space.stiffness().iter() {
        if r != c && v > worst_value {
            worst_value = v;
            worst_pair = Some((r, c));
        }
    }
    OffDiagReport {
        holds: worst_value <= tol,
        worst_pair,
        worst_value,
    }
}

/// Nodal interpolant of `f`.
pub fn interpolate_nodal<F>(space: &P1Space, f: F) -> Result<NodalField3>
where
    F: Fn(&Vec3) -> Vec3,
{
    let values: Vec<Vec3> = space
        .mesh()
        .vertices()
        .iter()
        .map(|p| f(&Vec3::from(*p)))
        .collect();
    NodalField3::new(values)
}

/// Scale every nodal vector to unit length.
pub fn normalize_nodal(u: &NodalField3) -> Result<NodalField3> {
    let mut out = Vec::with_capacity(u.len());
    for (n, v) in u.iter().enumerate() {
        let norm = v.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                what: "nodal value",
                index: n,
            });
        }
        if norm == 0.0 {
            return Err(Error::ZeroVector { node: n });
        }
        out.push(v / norm);
    }
    Ok(NodalField3(out))
}

/// Discrete norm (h^d Σ_n |u_n|^p)^{1/p}; the maximum nodal norm for p = ∞.
pub fn discrete_lp_norm(u: &NodalField3, p: f64, h: f64, dim: usize) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "p must lie in [1, inf], got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(u.max_norm());
    }
    let s: f64 = u.iter().map(|v| v.norm().powf(p)).sum();
    Ok((h.powi(dim as i32) * s).powf(1.0 / p))
}
