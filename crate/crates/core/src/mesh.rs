//! Simplicial meshes of the unit square / cube and a plain-text mesh format.
//!
//! Vertices are always stored as 3-tuples; in 2D the third coordinate is zero.
//! Cells are stored flat with `dim + 1` vertex indices each.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<[f64; 3]>,
    cells: Vec<usize>,
    boundary_facets: Vec<Vec<usize>>,
}

impl Mesh {
    /// Build and validate a mesh from raw vertex and cell lists.
    pub fn new(dim: usize, vertices: Vec<[f64; 3]>, cells: Vec<Vec<usize>>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "mesh dimension must be 2 or 3, got {dim}"
            )));
        }
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        let nv = dim + 1;
        let mut flat = Vec::with_capacity(cells.len() * nv);
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != nv {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} has {} vertices, expected {nv}",
                    cell.len()
                )));
            }
            for &v in cell {
                if v >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c} references vertex {v} but only {} vertices exist",
                        vertices.len()
                    )));
                }
            }
            flat.extend_from_slice(cell);
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "vertex coordinate",
                    index: i,
                });
            }
        }
        let mut mesh = Mesh {
            dim,
            vertices,
            cells: flat,
            boundary_facets: Vec::new(),
        };
        for c in 0..mesh.n_cells() {
            let measure = mesh.cell_measure(c);
            if !(measure > 0.0) {
                return Err(Error::DegenerateCell { cell: c, measure });
            }
        }
        mesh.boundary_facets = mesh.collect_boundary_facets()?;
        Ok(mesh)
    }

    /// Structured simplicial mesh of the unit square (2D, two right isoceles
    /// triangles per square) or unit cube (3D, Kuhn split into six tetrahedra).
    pub fn structured(dim: usize, divisions: usize) -> Result<Self> {
        if divisions == 0 {
            return Err(Error::InvalidArgument(
                "divisions must be at least 1".into(),
            ));
        }
        let n = divisions;
        let h = 1.0 / n as f64;
        match dim {
            2 => {
                let idx = |i: usize, j: usize| j * (n + 1) + i;
                let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
                for j in 0..=n {
                    for i in 0..=n {
                        vertices.push([i as f64 * h, j as f64 * h, 0.0]);
                    }
                }
                let mut cells = Vec::with_capacity(2 * n * n);
                for j in 0..n {
                    for i in 0..n {
                        let a = idx(i, j);
                        let b = idx(i + 1, j);
                        let c = idx(i + 1, j + 1);
                        let d = idx(i, j + 1);
                        cells.push(vec![a, b, c]);
                        cells.push(vec![a, c, d]);
                    }
                }
                Mesh::new(2, vertices, cells)
            }
            3 => {
                let idx = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
                let mut vertices = Vec::with_capacity((n + 1).pow(3));
                for k in 0..=n {
                    for j in 0..=n {
                        for i in 0..=n {
                            vertices.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                        }
                    }
                }
                const PERMS: [[usize; 3]; 6] = [
                    [0, 1, 2],
                    [0, 2, 1],
                    [1, 0, 2],
                    [1, 2, 0],
                    [2, 0, 1],
                    [2, 1, 0],
                ];
                let mut cells = Vec::with_capacity(6 * n * n * n);
                for k in 0..n {
                    for j in 0..n {
                        for i in 0..n {
                            for perm in PERMS {
                                let mut p = [i, j, k];
                                let mut tet = vec![idx(p[0], p[1], p[2])];
                                for axis in perm {
                                    p[axis] += 1;
                                    tet.push(idx(p[0], p[1], p[2]));
                                }
                                cells.push(tet);
                            }
                        }
                    }
                }
                Mesh::new(3, vertices, cells)
            }
            _ => Err(Error::InvalidArgument(format!(
                "mesh dimension must be 2 or 3, got {dim}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        self.vertices[i]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[c * nv..(c + 1) * nv]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.dim + 1)
    }

    /// Facets (edges in 2D, triangles in 3D) that belong to exactly one cell,
    /// with sorted vertex indices.
    pub fn boundary_facets(&self) -> &[Vec<usize>] {
        &self.boundary_facets
    }

    /// Signed-free measure (area or volume) of cell `c`.
    pub fn cell_measure(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let p0 = self.vertices[cell[0]];
        let edge = |k: usize| {
            let p = self.vertices[cell[k]];
            [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]]
        };
        match self.dim {
            2 => {
                let (a, b) = (edge(1), edge(2));
                0.5 * (a[0] * b[1] - a[1] * b[0]).abs()
            }
            _ => {
                let (a, b, d) = (edge(1), edge(2), edge(3));
                let det = a[0] * (b[1] * d[2] - b[2] * d[1]) - a[1] * (b[0] * d[2] - b[2] * d[0])
                    + a[2] * (b[0] * d[1] - b[1] * d[0]);
                det.abs() / 6.0
            }
        }
    }

    /// Maximal edge length over all cells.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cell in self.cells() {
            for a in 0..cell.len() {
                for b in a + 1..cell.len() {
                    let p = self.vertices[cell[a]];
                    let q = self.vertices[cell[b]];
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                        .sqrt();
                    h = h.max(d);
                }
            }
        }
        h
    }

    /// Total measure of the domain.
    pub fn domain_measure(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_measure(c)).sum()
    }

    fn collect_boundary_facets(&self) -> Result<Vec<Vec<usize>>> {
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for cell in self.cells() {
            for skip in 0..cell.len() {
                let mut facet: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                facet.sort_unstable();
                *counts.entry(facet).or_insert(0) += 1;
            }
        }
        let mut boundary = Vec::new();
        for (facet, count) in counts {
            match count {
                1 => boundary.push(facet),
                2 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "facet {facet:?} is shared by {count} cells (non-conforming)"
                    )))
                }
            }
        }
        boundary.sort();
        Ok(boundary)
    }

    /// Write the plain-text format: `dim N_vertices N_cells`, then one vertex
    /// per line (`dim` coordinates, 17 significant digits), then one cell per
    /// line (0-based vertex indices).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{} {} {}", self.dim, self.n_vertices(), self.n_cells()).unwrap();
        for v in &self.vertices {
            let coords: Vec<String> = v[..self.dim].iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(s, "{}", coords.join(" ")).unwrap();
        }
        for cell in self.cells() {
            let idx: Vec<String> = cell.iter().map(|i| i.to_string()).collect();
            writeln!(s, "{}", idx.join(" ")).unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l.split_whitespace().map(str::to_owned).collect())),
                Some((_, Err(e))) => Err(Error::Io(e)),
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (ln, header) = next("header")?;
        if header.len() != 3 {
            return Err(Error::Parse {
                line: ln,
                msg: "header must be `dim N_vertices N_cells`".into(),
            });
        }
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line,
                msg: format!("`{s}`: {e}"),
            })
        };
        let dim = parse_usize(&header[0], ln)?;
        let nv = parse_usize(&header[1], ln)?;
        let nc = parse_usize(&header[2], ln)?;
        if dim != 2 && dim != 3 {
            return Err(Error::Parse {
                line: ln,
                msg: format!("dimension must be 2 or 3, got {dim}"),
            });
        }
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, toks) = next("vertex")?;
            if toks.len() != dim {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {dim} coordinates"),
                });
            }
            let mut p = [0.0; 3];
            for (d, t) in toks.iter().enumerate() {
                p[d] = t.parse::<f64>().map_err(|e| Error::Parse {
                    line: ln,
                    msg: format!("`{t}`: {e}"),
                })?;
            }
            vertices.push(p);
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, toks) = next("cell")?;
            if toks.len() != dim + 1 {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {} vertex indices", dim + 1),
                });
            }
            cells.push(
                toks.iter()
                    .map(|t| parse_usize(t, ln))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Mesh::new(dim, vertices, cells)
    }
}
