//! Memory kernels and the discrete history convolution.
//!
//! On the uniform grid `t_i = k (i - 1)` the state is taken affine on each
//! interval `[t_i, t_{i+1}]`, so the convolution at `t_j` reduces to two exact
//! interval integrals per lag `m = j - i`:
//!
//! ```text
//! I0(m) = ∫_{t_i}^{t_{i+1}} K(t_j - s) ds
//! I1(m) = ∫_{t_i}^{t_{i+1}} (s - t_i) K(t_j - s) ds
//! ```
//!
//! and the weights `Γ1(m) = I0(m)`, `Γ2(m) = I1(m) / k`. The closed forms are
//! evaluated in cancellation-free arrangements (`expm1`, `log1p`, and a
//! binomial series for large Riesz lags); they agree with the textbook forms in
//! exact arithmetic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::sparse::CsrMatrix;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `K(t) = exp(-gamma t)`, `gamma > 0`.
    Exponential,
    /// Weakly singular `K(t) = t^(gamma - 1)`, `0 < gamma < 1`.
    Riesz,
}

/// A memory kernel with its rate parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    gamma: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, gamma: f64) -> Result<Self> {
        let ok = match family {
            KernelFamily::Exponential => gamma > 0.0 && gamma.is_finite(),
            KernelFamily::Riesz => gamma > 0.0 && gamma < 1.0,
        };
        if ok {
            Ok(KernelSpec { family, gamma })
        } else {
            Err(invalid(format!(
                "gamma = {gamma} is not admissible for the {family:?} kernel"
            )))
        }
    }

    pub fn exponential(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, gamma)
    }

    pub fn riesz(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Riesz, gamma)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `K(tau)` for `tau > 0`.
    pub fn eval(&self, tau: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential => libm::exp(-self.gamma * tau),
            KernelFamily::Riesz => libm::pow(tau, self.gamma - 1.0),
        }
    }

    /// `∫_0^t K(s) ds`.
    pub fn primitive(&self, t: f64) -> f64 {
        let g = self.gamma;
        match self.family {
            KernelFamily::Exponential => -libm::expm1(-g * t) / g,
            KernelFamily::Riesz => libm::pow(t, g) / g,
        }
    }
}

fn check_lag(k: f64, m: usize) -> Result<()> {
    if m < 1 {
        return Err(invalid("lag must be at least 1"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid(format!("time step {k} must be positive")));
    }
    Ok(())
}

/// `m^g - (m - 1)^g` for `m >= 1`, `g > 0`.
fn pow_step(m: usize, g: f64) -> f64 {
    if m == 1 {
        return 1.0;
    }
    let mf = m as f64;
    -libm::pow(mf, g) * libm::expm1(g * libm::log1p(-1.0 / mf))
}

/// `∫_0^1 s (m - s)^(g - 1) ds`.
fn riesz_first_moment(m: usize, g: f64) -> f64 {
    let mf = m as f64;
    if m < 8 {
        let p = (m - 1) as f64;
        let a = g + 1.0;
        let pa = if m == 1 { 0.0 } else { libm::pow(p, a) };
        let pg = if m == 1 { 0.0 } else { libm::pow(p, g) };
        return (libm::pow(mf, a) - pa - a * pg) / (g * a);
    }
    // (1 - s/m)^(g-1) = sum_n c_n (s/m)^n with c_n >= 0.
    let x = 1.0 / mf;
    let mut c = 1.0;
    let mut xn = 1.0;
    let mut sum = 0.5;
    for n in 0..200 {
        c *= (n as f64 + 1.0 - g) / (n as f64 + 1.0);
        xn *= x;
        let term = c * xn / (n as f64 + 3.0);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    libm::pow(mf, g - 1.0) * sum
}

/// `(x - 1 + e^(-x)) / x^2 = ∫_0^1 s e^(-x (1 - s)) ds`, stable near zero.
fn exp_moment(x: f64) -> f64 {
    if x < 0.5 {
        // sum_n (-x)^n / (n + 2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for n in 1..40 {
            term *= -x / (n as f64 + 2.0);
            sum += term;
            if libm::fabs(term) < 1e-18 * sum {
                break;
            }
        }
        sum
    } else {
        (x + libm::expm1(-x)) / (x * x)
    }
}

/// `∫_{t_i}^{t_{i+1}} K(t_j - s) ds` with lag `m = j - i >= 1`.
pub fn interval_integral_0(kernel: &KernelSpec, k: f64, m: usize) -> Result<f64> {
    check_lag(k, m)?;
    let g = kernel.gamma;
    Ok(match kernel.family {
        KernelFamily::Exponential => libm::exp(-g * k * m as f64) * libm::expm1(g * k) / g,
        KernelFamily::Riesz => libm::pow(k, g) * pow_step(m, g) / g,
    })
}

/// `∫_{t_i}^{t_{i+1}} (s - t_i) K(t_j - s) ds` with lag `m = j - i >= 1`.
pub fn interval_integral_1(kernel: &KernelSpec, k: f64, m: usize) -> Result<f64> {
    check_lag(k, m)?;
    let g = kernel.gamma;
    Ok(match kernel.family {
        KernelFamily::Exponential => {
            let x = g * k;
            k * k * libm::exp(-x * (m as f64 - 1.0)) * exp_moment(x)
        }
        KernelFamily::Riesz => libm::pow(k, g + 1.0) * riesz_first_moment(m, g),
    })
}

/// The convolution weights `(Γ1(m), Γ2(m)) = (I0(m), I1(m) / k)`.
pub fn gamma_coeffs(kernel: &KernelSpec, k: f64, m: usize) -> Result<(f64, f64)> {
    Ok((
        interval_integral_0(kernel, k, m)?,
        interval_integral_1(kernel, k, m)? / k,
    ))
}

/// Lag-indexed cache of the convolution weights for one `(kernel, k)` pair.
#[derive(Debug, Clone)]
pub struct MemoryWeights {
    kernel: KernelSpec,
    k: f64,
    g1: Vec<f64>,
    g2: Vec<f64>,
}

impl MemoryWeights {
    pub fn new(kernel: KernelSpec, k: f64) -> Result<Self> {
        check_lag(k, 1)?;
        Ok(MemoryWeights {
            kernel,
            k,
            g1: Vec::new(),
            g2: Vec::new(),
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn step(&self) -> f64 {
        self.k
    }

    /// Makes lags `1..=max_lag` available.
    pub fn ensure(&mut self, max_lag: usize) {
        while self.g1.len() < max_lag {
            let m = self.g1.len() + 1;
            let (a, b) = gamma_coeffs(&self.kernel, self.k, m).expect("validated step and lag");
            self.g1.push(a);
            self.g2.push(b);
        }
    }

    /// `(Γ1(m), Γ2(m))`; call [`ensure`](Self::ensure) first.
    pub fn get(&self, m: usize) -> (f64, f64) {
        (self.g1[m - 1], self.g2[m - 1])
    }

    /// `S sum_{i<j} (Γ1(j-i) y_i + Γ2(j-i) (y_{i+1} - y_i))`, zero for `j <= 1`.
    pub fn memory_term(&mut self, stiffness: &CsrMatrix, history: &HistoryBuffer, j: usize) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; history.dim()];
        self.weighted_history(history, j, &mut acc)?;
        if j <= 1 {
            return Ok(acc);
        }
        Ok(stiffness.mul_vec(&acc))
    }

    /// The weighted history sum before the stiffness multiply, written into `acc`.
    ///
    /// The interval terms are regrouped per stored state so each state is read once:
    /// `y_1` carries `Γ1(j-1) - Γ2(j-1)`, `y_i` (`1 < i < j`) carries
    /// `Γ1(j-i) - Γ2(j-i) + Γ2(j-i+1)` and `y_j` carries `Γ2(1)`.
    pub fn weighted_history(&mut self, history: &HistoryBuffer, j: usize, acc: &mut [f64]) -> Result<()> {
        check_len(history.dim(), acc.len())?;
        acc.iter_mut().for_each(|v| *v = 0.0);
        if j <= 1 {
            return Ok(());
        }
        if history.len() < j {
            return Err(Error::HistoryTooShort {
                needed: j,
                len: history.len(),
            });
        }
        if !history.retains(1) {
            return Err(Error::HistoryTooShort {
                needed: j,
                len: history.len() - history.first_retained() + 1,
            });
        }
        self.ensure(j);
        let coeff = |i: usize| -> f64 {
            let m = j - i;
            if i == j {
                self.g2[0]
            } else if i == 1 {
                self.g1[m - 1] - self.g2[m - 1]
            } else {
                self.g1[m - 1] - self.g2[m - 1] + self.g2[m]
            }
        };
        let mut i = 1;
        while i + 3 <= j {
            let (c0, c1, c2, c3) = (coeff(i), coeff(i + 1), coeff(i + 2), coeff(i + 3));
            let (y0, y1, y2, y3) = (
                history.state(i).unwrap(),
                history.state(i + 1).unwrap(),
                history.state(i + 2).unwrap(),
                history.state(i + 3).unwrap(),
            );
            for n in 0..acc.len() {
                acc[n] += c0 * y0[n] + c1 * y1[n] + c2 * y2[n] + c3 * y3[n];
            }
            i += 4;
        }
        while i <= j {
            let c = coeff(i);
            let y = history.state(i).unwrap();
            for n in 0..acc.len() {
                acc[n] += c * y[n];
            }
            i += 1;
        }
        Ok(())
    }
}

/// The history term at `t_j` for `kernel`, with the weights computed on the fly.
pub fn memory_term(stiffness: &CsrMatrix, history: &HistoryBuffer, kernel: &KernelSpec, j: usize) -> Result<Vec<f64>> {
    MemoryWeights::new(*kernel, history.dt())?.memory_term(stiffness, history, j)
}

/// O(1)-per-step accumulator for the exponential kernel.
///
/// Both weights satisfy `Γ(m + 1) = exp(-gamma k) Γ(m)`, so the weighted
/// history sum obeys `A_{j+1} = exp(-gamma k) A_j + Γ1(1) y_j + Γ2(1) (y_{j+1} - y_j)`.
#[derive(Debug, Clone)]
pub struct ExponentialAccumulator {
    decay: f64,
    g1: f64,
    g2: f64,
    acc: Vec<f64>,
    j: usize,
}

impl ExponentialAccumulator {
    pub fn new(kernel: &KernelSpec, k: f64, dim: usize) -> Result<Self> {
        if kernel.family != KernelFamily::Exponential {
            return Err(invalid("the recurrence only holds for the exponential kernel"));
        }
        let (g1, g2) = gamma_coeffs(kernel, k, 1)?;
        Ok(ExponentialAccumulator {
            decay: libm::exp(-kernel.gamma * k),
            g1,
            g2,
            acc: vec![0.0; dim],
            j: 1,
        })
    }

    /// Index `j` of the time `t_j` the accumulator currently represents.
    pub fn index(&self) -> usize {
        self.j
    }

    /// Advances from `t_j` to `t_{j+1}` given `y_j` and `y_{j+1}`.
    pub fn advance(&mut self, y_j: &[f64], y_next: &[f64]) {
        for n in 0..self.acc.len() {
            self.acc[n] = self.decay * self.acc[n] + self.g1 * y_j[n] + self.g2 * (y_next[n] - y_j[n]);
        }
        self.j += 1;
    }

    /// The weighted history sum at `t_j` (multiply by the stiffness matrix for the memory term).
    pub fn weighted_sum(&self) -> &[f64] {
        &self.acc
    }
}

/// Storage policy for [`HistoryBuffer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    /// Keep every state.
    Full,
    /// Keep only the two most recent states (the count still advances).
    LastTwo,
}

/// Append-only record of the states `y(t_1), y(t_2), ...` on the uniform grid.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dt: f64,
    dim: usize,
    retention: Retention,
    len: usize,
    first: usize,
    data: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new(dt: f64, dim: usize, retention: Retention) -> Self {
        HistoryBuffer {
            dt,
            dim,
            retention,
            len: 0,
            first: 1,
            data: Vec::new(),
        }
    }

    /// Preallocates room for `states` states under [`Retention::Full`].
    pub fn reserve(&mut self, states: usize) {
        if self.retention == Retention::Full {
            self.data.reserve(states.saturating_sub(self.len) * self.dim);
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of states appended so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn retention(&self) -> Retention {
        self.retention
    }

    fn first_retained(&self) -> usize {
        self.first
    }

    fn retains(&self, i: usize) -> bool {
        i >= self.first && i <= self.len
    }

    /// Time of state `i` (1-based).
    pub fn time(&self, i: usize) -> f64 {
        self.dt * (i as f64 - 1.0)
    }

    pub fn push(&mut self, y: &[f64]) -> Result<()> {
        check_len(self.dim, y.len())?;
        match self.retention {
            Retention::Full => self.data.extend_from_slice(y),
            Retention::LastTwo => {
                if self.len - (self.first - 1) == 2 {
                    self.data.drain(..self.dim);
                    self.first += 1;
                }
                self.data.extend_from_slice(y);
            }
        }
        self.len += 1;
        Ok(())
    }

    /// State `i` (1-based), if retained.
    pub fn state(&self, i: usize) -> Option<&[f64]> {
        if !self.retains(i) {
            return None;
        }
        let o = (i - self.first) * self.dim;
        Some(&self.data[o..o + self.dim])
    }
}

/// `∫_0^T f(τ) ∫_0^τ K(τ - r) f(r) dr dτ` for `f` piecewise constant on the cells `[k(i-1), k i)`.
///
/// A positive kernel makes this nonnegative for every `f`. For a constant
/// kernel `κ` it equals `κ (k sum f)^2 / 2`.
pub fn kernel_positivity_form(kernel: &KernelSpec, k: f64, f: &[f64]) -> Result<f64> {
    if f.len() < 2 {
        return Err(invalid("need at least two samples"));
    }
    check_lag(k, 1)?;
    let n = f.len();
    let g = kernel.gamma;
    let (self_cell, cross): (f64, Vec<f64>) = match kernel.family {
        KernelFamily::Exponential => {
            let x = g * k;
            let d0 = k * k * exp_moment(x);
            let pair = -libm::expm1(-x) * libm::expm1(x) / (g * g);
            (d0, (1..n).map(|m| libm::exp(-x * m as f64) * pair).collect())
        }
        KernelFamily::Riesz => {
            let scale = libm::pow(k, g + 1.0) / (g * (g + 1.0));
            (scale, (1..n).map(|m| scale * riesz_second_difference(m, g)).collect())
        }
    };
    let mut total = 0.0;
    for j in 0..n {
        let mut inner = f[j] * self_cell;
        for i in 0..j {
            inner += f[i] * cross[j - i - 1];
        }
        total += f[j] * inner;
    }
    Ok(total)
}

/// `(m+1)^a - 2 m^a + (m-1)^a` with `a = g + 1`.
fn riesz_second_difference(m: usize, g: f64) -> f64 {
    let a = g + 1.0;
    let mf = m as f64;
    if m < 16 {
        return libm::pow(mf + 1.0, a) - 2.0 * libm::pow(mf, a) + libm::pow(mf - 1.0, a);
    }
    // Even Taylor terms: 2 sum_{p>=1} a(a-1)...(a-2p+1) m^{a-2p} / (2p)!
    let mut sum = 0.0;
    let mut falling = 1.0;
    let mut fact = 1.0;
    for p in 1..20 {
        let q = 2 * p;
        falling *= (a - (q - 2) as f64) * (a - (q - 1) as f64);
        fact *= ((q - 1) * q) as f64;
        let term = 2.0 * falling * libm::pow(mf, a - q as f64) / fact;
        sum += term;
        if libm::fabs(term) < 1e-18 * libm::fabs(sum) {
            break;
        }
    }
    sum
}
