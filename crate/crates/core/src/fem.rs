//! Piecewise-linear finite element matrices on a [`StructuredMesh`].
//!
//! All element integrals are exact closed forms for linear hat functions.
//! Coefficients enter through diagonal matrices of nodal values.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Result};
use crate::mesh::StructuredMesh;
use crate::sparse::CsrMatrix;

type ScalarFn = dyn Fn([f64; 2], f64) -> f64 + Send + Sync;
type VectorFn = dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync;

/// Reaction `a(x, t)`, convection `b(x, t)`, diffusion `nu` and memory weight `eta`.
#[derive(Clone)]
pub struct CoefficientField {
    pub nu: f64,
    pub eta: f64,
    reaction: Arc<ScalarFn>,
    convection: Arc<VectorFn>,
    reaction_autonomous: bool,
    convection_autonomous: bool,
}

impl core::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("nu", &self.nu)
            .field("eta", &self.eta)
            .field("reaction_autonomous", &self.reaction_autonomous)
            .field("convection_autonomous", &self.convection_autonomous)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    /// General field. Set the `*_autonomous` flags only when the function ignores `t`.
    pub fn new(
        nu: f64,
        eta: f64,
        reaction: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static,
        reaction_autonomous: bool,
        convection: impl Fn([f64; 2], f64) -> [f64; 2] + Send + Sync + 'static,
        convection_autonomous: bool,
    ) -> Self {
        CoefficientField {
            nu,
            eta,
            reaction: Arc::new(reaction),
            convection: Arc::new(convection),
            reaction_autonomous,
            convection_autonomous,
        }
    }

    /// `a = -1.5 + x1 - |sin(6t + x1)|`, `b = (x1 + x2, |cos(6t) x1 x2|)`, `nu = 0.1`.
    pub fn reference(eta: f64) -> Self {
        Self::new(
            0.1,
            eta,
            |x, t| -1.5 + x[0] - libm::fabs(libm::sin(6.0 * t + x[0])),
            false,
            |x, t| [x[0] + x[1], libm::fabs(libm::cos(6.0 * t) * x[0] * x[1])],
            false,
        )
    }

    /// Constant reaction `a` and convection `b`.
    pub fn constant(nu: f64, eta: f64, a: f64, b: [f64; 2]) -> Self {
        Self::new(nu, eta, move |_, _| a, true, move |_, _| b, true)
    }

    pub fn a(&self, x: [f64; 2], t: f64) -> f64 {
        (self.reaction)(x, t)
    }

    pub fn b(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        (self.convection)(x, t)
    }

    pub fn reaction_is_autonomous(&self) -> bool {
        self.reaction_autonomous
    }

    pub fn convection_is_autonomous(&self) -> bool {
        self.convection_autonomous
    }

    /// Nodal values of `a(., t)`.
    pub fn reaction_nodal(&self, mesh: &StructuredMesh, t: f64) -> Vec<f64> {
        mesh.nodes.iter().map(|&p| self.a(p, t)).collect()
    }

    /// Nodal values of the two components of `b(., t)`.
    pub fn convection_nodal(&self, mesh: &StructuredMesh, t: f64) -> [Vec<f64>; 2] {
        let mut b1 = Vec::with_capacity(mesh.num_nodes());
        let mut b2 = Vec::with_capacity(mesh.num_nodes());
        for &p in &mesh.nodes {
            let b = self.b(p, t);
            b1.push(b[0]);
            b2.push(b[1]);
        }
        [b1, b2]
    }
}

struct Element {
    nodes: [usize; 3],
    area: f64,
    grads: [[f64; 2]; 3],
}

fn elements(mesh: &StructuredMesh) -> impl Iterator<Item = Element> + '_ {
    mesh.triangles.iter().map(move |&tri| {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            grads[i] = [(p[j][1] - p[k][1]) / det, (p[k][0] - p[j][0]) / det];
        }
        Element {
            nodes: tri,
            area: 0.5 * det,
            grads,
        }
    })
}

fn assemble(mesh: &StructuredMesh, local: impl Fn(&Element, usize, usize) -> f64) -> CsrMatrix {
    let n = mesh.num_nodes();
    let mut t = Vec::with_capacity(9 * mesh.triangles.len());
    for e in elements(mesh) {
        for i in 0..3 {
            for j in 0..3 {
                t.push((e.nodes[i], e.nodes[j], local(&e, i, j)));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Consistent mass matrix `M_ij = (phi_j, phi_i)`.
pub fn assemble_mass(mesh: &StructuredMesh) -> CsrMatrix {
    assemble(mesh, |e, i, j| if i == j { e.area / 6.0 } else { e.area / 12.0 })
}

/// Stiffness matrix `S_ij = (grad phi_j, grad phi_i)`.
pub fn assemble_stiffness(mesh: &StructuredMesh) -> CsrMatrix {
    assemble(mesh, |e, i, j| {
        e.area * (e.grads[i][0] * e.grads[j][0] + e.grads[i][1] * e.grads[j][1])
    })
}

/// Directional derivative matrix `G_ij = (d phi_j / dx_axis, phi_i)`, `axis` in `{1, 2}`.
pub fn assemble_directional(mesh: &StructuredMesh, axis: usize) -> CsrMatrix {
    assert!(axis == 1 || axis == 2, "axis must be 1 or 2");
    let a = axis - 1;
    assemble(mesh, |e, _i, j| e.grads[j][a] * e.area / 3.0)
}

/// `(M D_a + D_a M) / 2` for nodal reaction values `a`.
pub fn reaction_matrix(mass: &CsrMatrix, a: &[f64]) -> Result<CsrMatrix> {
    check_len(mass.nrows(), a.len())?;
    let t: Vec<_> = mass
        .triplets()
        .into_iter()
        .zip(reaction_values(mass, a))
        .map(|((i, j, _), v)| (i, j, v))
        .collect();
    Ok(CsrMatrix::from_triplets(mass.nrows(), mass.ncols(), &t))
}

/// Values of `(M D_a + D_a M) / 2` on the pattern of `M`.
pub fn reaction_values(mass: &CsrMatrix, a: &[f64]) -> Vec<f64> {
    let mut vals = Vec::with_capacity(mass.nnz());
    for i in 0..mass.nrows() {
        let (cols, m) = mass.row(i);
        vals.extend(cols.iter().zip(m).map(|(&j, &mij)| 0.5 * mij * (a[i] + a[j])));
    }
    vals
}

/// Reaction matrix for `field` at time `t`.
pub fn assemble_reaction(mesh: &StructuredMesh, field: &CoefficientField, t: f64) -> CsrMatrix {
    let mass = assemble_mass(mesh);
    let a = field.reaction_nodal(mesh, t);
    reaction_matrix(&mass, &a).expect("one value per node")
}

/// Convection matrix `D_{b1} G_1 + D_{b2} G_2` for `field` at time `t`.
pub fn assemble_convection(mesh: &StructuredMesh, field: &CoefficientField, t: f64) -> CsrMatrix {
    let g1 = assemble_directional(mesh, 1);
    let g2 = assemble_directional(mesh, 2);
    let [b1, b2] = field.convection_nodal(mesh, t);
    let c1 = g1.scale_rows(&b1);
    let c2 = g2.scale_rows(&b2);
    CsrMatrix::linear_combination(&[(1.0, &c1), (1.0, &c2)]).expect("same dimensions")
}

/// Discrete `L^2` norm `sqrt(v^T M v)`.
pub fn h_norm(mass: &CsrMatrix, v: &[f64]) -> f64 {
    let mv = mass.mul_vec(v);
    let s: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
    libm::sqrt(s.max(0.0))
}

/// Pins the listed unknowns to zero by symmetric row/column elimination.
pub fn apply_dirichlet(a: &CsrMatrix, rhs: &[f64], boundary: &[usize]) -> Result<(CsrMatrix, Vec<f64>)> {
    check_len(a.nrows(), rhs.len())?;
    let mut pinned = vec![false; a.nrows()];
    for &b in boundary {
        pinned[b] = true;
    }
    let mut t: Vec<_> = a
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| !pinned[i] && !pinned[j])
        .collect();
    t.extend(boundary.iter().map(|&b| (b, b, 1.0)));
    let mut rhs = rhs.to_vec();
    for &b in boundary {
        rhs[b] = 0.0;
    }
    Ok((CsrMatrix::from_triplets(a.nrows(), a.ncols(), &t), rhs))
}

/// The time-independent matrices of one mesh.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub dx1: CsrMatrix,
    pub dx2: CsrMatrix,
}

impl FemMatrices {
    pub fn assemble(mesh: &StructuredMesh) -> Self {
        FemMatrices {
            mass: assemble_mass(mesh),
            stiffness: assemble_stiffness(mesh),
            dx1: assemble_directional(mesh, 1),
            dx2: assemble_directional(mesh, 2),
        }
    }

    /// `C y = D_{b1} G_1 y + D_{b2} G_2 y` without forming `C`.
    pub fn apply_convection(&self, b: &[Vec<f64>; 2], y: &[f64], out: &mut [f64]) {
        self.dx1.mul_vec_into(y, out);
        for (o, b1) in out.iter_mut().zip(&b[0]) {
            *o *= b1;
        }
        let (cols_ptr, cols, vals) = (self.dx2.row_ptr(), self.dx2.col_idx(), self.dx2.values());
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in cols_ptr[i]..cols_ptr[i + 1] {
                s += vals[p] * y[cols[p]];
            }
            *o += b[1][i] * s;
        }
    }
}
