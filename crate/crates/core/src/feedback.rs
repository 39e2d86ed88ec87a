//! Actuator and sensor matrices, the feedback operator `K` and the output injection `L`.
//!
//! Only the orthogonal construction is provided: the input shapes and the
//! functions used to read out the state are the same indicator vectors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{DenseCholesky, DenseMatrix};
use crate::error::{check_len, invalid, Result};
use crate::mesh::{indicator_vector, DeviceLayout, Rect, StructuredMesh};
use crate::sparse::CsrMatrix;

/// Which family of devices an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceSide {
    Actuators,
    Sensors,
}

/// Feedback scaling `lambda1` and injection scaling `lambda2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackGains {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl FeedbackGains {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 >= 0.0 && lambda1.is_finite() && lambda2 >= 0.0 && lambda2.is_finite()) {
            return Err(invalid(format!("gains ({lambda1}, {lambda2}) must be nonnegative")));
        }
        Ok(FeedbackGains { lambda1, lambda2 })
    }

    pub fn zero() -> Self {
        FeedbackGains {
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }
}

/// Indicator columns of the devices, their mass-weighted versions and Gram matrices.
#[derive(Debug, Clone)]
pub struct DeviceMatrices {
    /// `nodes x M` actuator indicators.
    pub u: CsrMatrix,
    /// `nodes x S` sensor indicators.
    pub w: CsrMatrix,
    /// `M U`.
    pub mu: CsrMatrix,
    /// `M W`.
    pub mw: CsrMatrix,
    /// `U^T M U`.
    pub vu: DenseMatrix,
    /// `W^T M W`.
    pub vw: DenseMatrix,
    vu_chol: DenseCholesky,
    vw_chol: DenseCholesky,
}

fn indicator_columns(mesh: &StructuredMesh, supports: &[Rect]) -> Result<CsrMatrix> {
    let mut t = Vec::new();
    for (c, rect) in supports.iter().enumerate() {
        let v = indicator_vector(mesh, rect)?;
        t.extend(v.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i, c, x)));
    }
    Ok(CsrMatrix::from_triplets(mesh.num_nodes(), supports.len(), &t))
}

fn gram(cols: &CsrMatrix, mcols: &CsrMatrix) -> Result<DenseMatrix> {
    let g = cols.transpose().matmul(mcols)?;
    let mut d = DenseMatrix::zeros(g.nrows(), g.ncols());
    for (i, j, v) in g.triplets() {
        d.set(i, j, v);
    }
    Ok(d)
}

/// Builds `U`, `W` and their Gram matrices for `layout` on `mesh`.
pub fn build_device_matrices(mesh: &StructuredMesh, layout: &DeviceLayout, mass: &CsrMatrix) -> Result<DeviceMatrices> {
    check_len(mesh.num_nodes(), mass.nrows())?;
    layout.check_aligned(mesh)?;
    let u = indicator_columns(mesh, &layout.actuator_supports)?;
    let w = indicator_columns(mesh, &layout.sensor_supports)?;
    let mu = mass.matmul(&u)?;
    let mw = mass.matmul(&w)?;
    let vu = gram(&u, &mu)?;
    let vw = gram(&w, &mw)?;
    let vu_chol = DenseCholesky::new(&vu)?;
    let vw_chol = DenseCholesky::new(&vw)?;
    Ok(DeviceMatrices {
        u,
        w,
        mu,
        mw,
        vu,
        vw,
        vu_chol,
        vw_chol,
    })
}

impl DeviceMatrices {
    pub fn num_actuators(&self) -> usize {
        self.u.ncols()
    }

    pub fn num_sensors(&self) -> usize {
        self.w.ncols()
    }

    /// `U^T M y`.
    pub fn actuator_output(&self, y: &[f64]) -> Vec<f64> {
        self.mu.mul_transpose_vec(y)
    }

    /// Sensor output `W^T M y`.
    pub fn sensor_output(&self, y: &[f64]) -> Vec<f64> {
        self.mw.mul_transpose_vec(y)
    }

    pub fn solve_vu(&self, b: &[f64]) -> Vec<f64> {
        self.vu_chol.solve(b)
    }

    pub fn solve_vw(&self, b: &[f64]) -> Vec<f64> {
        self.vw_chol.solve(b)
    }

    /// `|U u|_H = sqrt(u^T V_U u)` for an input vector `u`.
    pub fn input_norm(&self, u: &[f64]) -> f64 {
        let vu = self.vu.mul_vec(u);
        libm::sqrt(u.iter().zip(&vu).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }
}

/// `K = -lambda1 V_U^{-1} U^T M`, an `M x nodes` matrix.
pub fn feedback_matrix(dm: &DeviceMatrices, lambda1: f64) -> Result<CsrMatrix> {
    if !(lambda1 >= 0.0) {
        return Err(invalid("lambda1 must be nonnegative"));
    }
    let inv = dm.vu_chol.inverse();
    let mut t = Vec::new();
    for (node, s, v) in dm.mu.triplets() {
        for r in 0..dm.num_actuators() {
            let c = -lambda1 * inv.get(r, s);
            if c != 0.0 {
                t.push((r, node, c * v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dm.num_actuators(), dm.u.nrows(), &t))
}

/// `L = -lambda2 M W V_W^{-1}`, a `nodes x S` matrix.
pub fn injection_matrix(dm: &DeviceMatrices, lambda2: f64) -> Result<CsrMatrix> {
    if !(lambda2 >= 0.0) {
        return Err(invalid("lambda2 must be nonnegative"));
    }
    let inv = dm.vw_chol.inverse();
    let mut t = Vec::new();
    for (node, s, v) in dm.mw.triplets() {
        for c in 0..dm.num_sensors() {
            let g = -lambda2 * inv.get(s, c);
            if g != 0.0 {
                t.push((node, c, v * g));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dm.w.nrows(), dm.num_sensors(), &t))
}

/// `M`-orthogonal projection onto the span of the actuator (or sensor) indicators.
pub fn orthogonal_projection(dm: &DeviceMatrices, side: DeviceSide, v: &[f64]) -> Vec<f64> {
    match side {
        DeviceSide::Actuators => dm.u.mul_vec(&dm.solve_vu(&dm.actuator_output(v))),
        DeviceSide::Sensors => dm.w.mul_vec(&dm.solve_vw(&dm.sensor_output(v))),
    }
}

/// Observer initial guess: the projection of `y0` onto the sensor span.
pub fn observer_initial_state(dm: &DeviceMatrices, y0: &[f64]) -> Vec<f64> {
    orthogonal_projection(dm, DeviceSide::Sensors, y0)
}

/// The same guess built from the measured output `w = W^T M y0` alone.
pub fn observer_initial_state_from_output(dm: &DeviceMatrices, w: &[f64]) -> Result<Vec<f64>> {
    check_len(dm.num_sensors(), w.len())?;
    Ok(dm.w.mul_vec(&dm.solve_vw(w)))
}

/// `K_stat = -lambda1 V_U^{-1}`, mapping the output `U^T M y` to the input.
pub fn static_output_gain(dm: &DeviceMatrices, lambda1: f64) -> Result<DenseMatrix> {
    if !(lambda1 >= 0.0) {
        return Err(invalid("lambda1 must be nonnegative"));
    }
    let mut k = dm.vu_chol.inverse();
    for v in k.data.iter_mut() {
        *v *= -lambda1;
    }
    Ok(k)
}

/// Convenience: `K y` through the two sparse products and the small solve.
pub fn apply_feedback(dm: &DeviceMatrices, lambda1: f64, y: &[f64]) -> Vec<f64> {
    let mut u = dm.solve_vu(&dm.actuator_output(y));
    for v in u.iter_mut() {
        *v *= -lambda1;
    }
    u
}

/// Zero input vector sized for the actuators.
pub fn zero_input(dm: &DeviceMatrices) -> Vec<f64> {
    vec![0.0; dm.num_actuators()]
}
