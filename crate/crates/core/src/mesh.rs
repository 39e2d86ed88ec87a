//! Structured triangulations of the unit square and the chessboard device layout.
//!
//! The grid has `n = ell * subdiv * 2^rf` cells per side. Nodes are numbered
//! lexicographically by `(row, column)`: node `row * (n + 1) + col` sits at
//! `(col / n, row / n)`. Every square cell is split along its bottom-left to
//! top-right diagonal, so a refinement keeps every coarse node and every
//! coarse edge.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

const ALIGN_TOL: f64 = 1e-9;

/// Triangulation of `[0, 1]^2` aligned with an `ell x ell` grid of device cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    /// Device cells per side.
    pub ell: usize,
    /// Refinement level.
    pub rf: u32,
    /// Elements per device-cell side at `rf = 0`.
    pub subdiv: usize,
    /// Node coordinates.
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    /// Sorted indices of the nodes on the boundary.
    pub boundary_nodes: Vec<usize>,
    /// Maximal element diameter.
    pub h: f64,
}

impl StructuredMesh {
    /// Cells per side of the full grid.
    pub fn n(&self) -> usize {
        (self.ell * self.subdiv) << self.rf
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, row: usize, col: usize) -> usize {
        row * (self.n() + 1) + col
    }

    /// Signed area of triangle `t`.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Nodal interpolant of `f(x1, x2)`.
    pub fn interpolate<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }

    /// The regular refinement of this mesh (level `rf + 1`).
    pub fn refine(&self) -> StructuredMesh {
        build(self.ell, self.rf + 1, self.subdiv)
    }

    /// Index in `self.refine()` of coarse node `node`.
    pub fn refined_index(&self, node: usize) -> usize {
        let n = self.n();
        let (row, col) = (node / (n + 1), node % (n + 1));
        2 * row * (2 * n + 1) + 2 * col
    }

    /// Grid line index of coordinate `x`, if `x` lies on a grid line.
    fn grid_line(&self, x: f64) -> Option<usize> {
        let s = x * self.n() as f64;
        let r = libm::round(s);
        if libm::fabs(s - r) <= ALIGN_TOL && r >= 0.0 && r <= self.n() as f64 {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Grid line ranges `(col0, col1, row0, row1)` covered by `rect`.
    fn aligned_range(&self, rect: &Rect) -> Result<(usize, usize, usize, usize)> {
        let line = |x: f64| {
            self.grid_line(x).ok_or_else(|| {
                Error::Misaligned(format!("edge at {x} is not a grid line of the n = {} mesh", self.n()))
            })
        };
        Ok((line(rect.x0)?, line(rect.x1)?, line(rect.y0)?, line(rect.y1)?))
    }
}

/// Builds the uniform right-triangle mesh with `n = ell * subdiv * 2^rf` cells per side.
pub fn build_mesh(ell: usize, rf: u32, subdiv: usize) -> Result<StructuredMesh> {
    if ell == 0 {
        return Err(invalid("ell must be positive"));
    }
    if subdiv < 2 {
        return Err(invalid("subdiv must be at least 2"));
    }
    if rf > 8 {
        return Err(invalid(format!("refinement level {rf} is unreasonably large")));
    }
    Ok(build(ell, rf, subdiv))
}

/// Builds a mesh and checks that every support of `layout` is a union of elements.
pub fn build_mesh_for_layout(layout: &DeviceLayout, rf: u32, subdiv: usize) -> Result<StructuredMesh> {
    let mesh = build_mesh(layout.ell, rf, subdiv)?;
    layout.check_aligned(&mesh)?;
    Ok(mesh)
}

fn build(ell: usize, rf: u32, subdiv: usize) -> StructuredMesh {
    let n = (ell * subdiv) << rf;
    let nf = n as f64;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary_nodes = Vec::with_capacity(4 * n);
    for row in 0..=n {
        for col in 0..=n {
            let idx = nodes.len();
            nodes.push([col as f64 / nf, row as f64 / nf]);
            if row == 0 || col == 0 || row == n || col == n {
                boundary_nodes.push(idx);
            }
        }
    }
    let id = |row: usize, col: usize| row * (n + 1) + col;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for row in 0..n {
        for col in 0..n {
            let bl = id(row, col);
            let br = id(row, col + 1);
            let tl = id(row + 1, col);
            let tr = id(row + 1, col + 1);
            triangles.push([bl, br, tr]);
            triangles.push([bl, tr, tl]);
        }
    }
    StructuredMesh {
        ell,
        rf,
        subdiv,
        nodes,
        triangles,
        boundary_nodes,
        h: core::f64::consts::SQRT_2 / nf,
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn is_empty(&self) -> bool {
        !(self.x1 > self.x0 && self.y1 > self.y0)
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0)
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// True if the closed rectangles share at least one point.
    pub fn touches(&self, other: &Rect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }
}

/// Nodal interpolant of the indicator function of the closed support `rect`.
///
/// Empty rectangles give the zero vector.
pub fn indicator_vector(mesh: &StructuredMesh, rect: &Rect) -> Result<Vec<f64>> {
    let mut v = vec![0.0; mesh.num_nodes()];
    if rect.is_empty() {
        return Ok(v);
    }
    let (c0, c1, r0, r1) = mesh.aligned_range(rect)?;
    for row in r0..=r1 {
        for col in c0..=c1 {
            v[mesh.node_index(row, col)] = 1.0;
        }
    }
    Ok(v)
}

/// Chessboard assignment of actuator and sensor supports over an `ell x ell` grid of cells.
///
/// Cell `(i, j)` spans `[i/ell, (i+1)/ell] x [j/ell, (j+1)/ell]`; it carries an
/// actuator when `i + j` is even (so the bottom-left cell is an actuator cell)
/// and a sensor otherwise. Each support is the centered square of side
/// `support_fraction / ell`. Cells are listed row by row from the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceLayout {
    pub ell: usize,
    pub support_fraction: f64,
    pub actuator_cells: Vec<(usize, usize)>,
    pub sensor_cells: Vec<(usize, usize)>,
    pub actuator_supports: Vec<Rect>,
    pub sensor_supports: Vec<Rect>,
}

/// Chessboard layout with centered square supports.
pub fn chessboard_layout(ell: usize, support_fraction: f64) -> Result<DeviceLayout> {
    if ell == 0 {
        return Err(invalid("ell must be positive"));
    }
    if !(support_fraction > 0.0 && support_fraction <= 1.0) {
        return Err(invalid(format!(
            "support fraction {support_fraction} is outside (0, 1]"
        )));
    }
    let l = ell as f64;
    let lo = 0.5 * (1.0 - support_fraction);
    let hi = 0.5 * (1.0 + support_fraction);
    let support = |i: usize, j: usize| {
        Rect::new(
            (i as f64 + lo) / l,
            (i as f64 + hi) / l,
            (j as f64 + lo) / l,
            (j as f64 + hi) / l,
        )
    };
    let mut layout = DeviceLayout {
        ell,
        support_fraction,
        actuator_cells: Vec::new(),
        sensor_cells: Vec::new(),
        actuator_supports: Vec::new(),
        sensor_supports: Vec::new(),
    };
    for j in 0..ell {
        for i in 0..ell {
            if (i + j) % 2 == 0 {
                layout.actuator_cells.push((i, j));
                layout.actuator_supports.push(support(i, j));
            } else {
                layout.sensor_cells.push((i, j));
                layout.sensor_supports.push(support(i, j));
            }
        }
    }
    Ok(layout)
}

impl DeviceLayout {
    pub fn num_actuators(&self) -> usize {
        self.actuator_supports.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensor_supports.len()
    }

    /// Fails with [`Error::Misaligned`] if some support edge cuts through elements.
    pub fn check_aligned(&self, mesh: &StructuredMesh) -> Result<()> {
        for rect in self.actuator_supports.iter().chain(&self.sensor_supports) {
            mesh.aligned_range(rect)?;
        }
        Ok(())
    }
}
