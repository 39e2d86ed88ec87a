//! The fully discrete plant/observer recurrence.
//!
//! With `t_j = k (j - 1)`, every state `z` (the plant `y` or the observer `ŷ`)
//! is advanced by
//!
//! ```text
//! X⁺_{j+1} z_{j+1} = X⁻_j z_j - k (3 F_j - F_{j-1}) [+ k (G_j + G_{j+1})]
//! X⁺_{j+1} = 2M + k S_ν + k R_{j+1},   X⁻_j = 2M - k S_ν - k R_j
//! ```
//!
//! where `F_j` gathers the explicitly treated terms: convection `C_j z_j`,
//! memory `η S A_j[z]`, the actuator forcing `-M U u_j` and, for the observer,
//! the output injection `-L (W^T M (ŷ_j - y_j))`. The start-up ghosts
//! `y_0 = y_1`, `ŷ_0 = ŷ_1`, `C_0 = C_1`, `A(t_0) = A(t_1) = 0` and
//! `u_0 = u_1` amount to `F_0 = F_1`. The bracketed load `G = M I_h f` is only
//! present for manufactured solutions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dense::DenseMatrix;
use crate::error::{invalid, Error, Result};
use crate::feedback::{
    build_device_matrices, feedback_matrix, injection_matrix, observer_initial_state, static_output_gain,
    DeviceMatrices, FeedbackGains,
};
use crate::fem::{h_norm, reaction_values, CoefficientField, FemMatrices};
use crate::memory::{ExponentialAccumulator, HistoryBuffer, KernelFamily, KernelSpec, MemoryWeights, Retention};
use crate::mesh::{DeviceLayout, StructuredMesh};
use crate::sparse::{conjugate_gradient, CsrMatrix, SkylineCholesky, SolverPolicy};

/// What is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Plant without control. The observer is not integrated (`ŷ ≡ 0`).
    Free,
    /// Plant driven by `u = K ŷ` plus the Luenberger observer.
    Coupled,
    /// Plant driven by `u = K y` (no observer; `ŷ := y`).
    StateFeedback,
    /// Plant driven by `u = K_stat (U^T M y)` (no observer; `ŷ := y`).
    StaticOutput,
    /// Uncontrolled plant with the forcing that makes the reference field
    /// [`exact_solution`] an exact solution; `norm_err` is the error against it.
    Manufactured,
}

impl Mode {
    fn uses_devices(self) -> bool {
        matches!(self, Mode::Coupled | Mode::StateFeedback | Mode::StaticOutput)
    }
}

/// Initial plant state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// `y_0 = 1 - 2 x1 x2`.
    Reference,
    Zero,
    /// Nodal values.
    Nodal(Vec<f64>),
}

/// Initial observer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserverInit {
    /// `M`-orthogonal projection of `y_0` onto the sensor span.
    Projection,
    Zero,
    /// `ŷ_1 = y_1`.
    Exact,
}

/// Full description of one simulation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mode: Mode,
    pub field: CoefficientField,
    pub kernel: KernelSpec,
    pub gains: FeedbackGains,
    /// Time step.
    pub k: f64,
    pub t_final: f64,
    pub initial: InitialState,
    pub observer_init: ObserverInit,
    pub solver: SolverPolicy,
    /// Use the exponential-kernel recurrence instead of the history sum.
    pub fast_memory: bool,
    /// Reuse the step matrices and their factorization when the reaction is autonomous.
    pub cache_operators: bool,
}

impl Scenario {
    /// Reference coefficients, projected observer guess, automatic solver choice.
    pub fn new(mode: Mode, eta: f64, kernel: KernelSpec, gains: FeedbackGains, k: f64, t_final: f64) -> Self {
        Scenario {
            mode,
            field: CoefficientField::reference(eta),
            kernel,
            gains,
            k,
            t_final,
            initial: InitialState::Reference,
            observer_init: ObserverInit::Projection,
            solver: SolverPolicy::Auto,
            fast_memory: false,
            cache_operators: true,
        }
    }

    /// Number of steps `J` so that `t_{J+1} = k J >= t_final`.
    pub fn num_steps(&self) -> usize {
        let r = self.t_final / self.k;
        let n = libm::round(r);
        if libm::fabs(r - n) <= 1e-9 * n.max(1.0) {
            n as usize
        } else {
            libm::ceil(r) as usize
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(invalid(format!("time step {} must be positive", self.k)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(invalid(format!("final time {} must be nonnegative", self.t_final)));
        }
        if !(self.field.nu > 0.0) {
            return Err(invalid("nu must be positive"));
        }
        if !(self.field.eta >= 0.0) {
            return Err(invalid("eta must be nonnegative"));
        }
        FeedbackGains::new(self.gains.lambda1, self.gains.lambda2)?;
        if let SolverPolicy::ConjugateGradient { rel_tol, max_iter } = self.solver {
            if !(rel_tol > 0.0) || max_iter == 0 {
                return Err(invalid(
                    "conjugate gradient needs a positive tolerance and iteration cap",
                ));
            }
        }
        Ok(())
    }
}

/// `cos(pi x1) cos(2 pi x2) + cos(2 pi x1) + 2`, which satisfies homogeneous Neumann conditions.
pub fn exact_solution(x: [f64; 2]) -> f64 {
    libm::cos(PI * x[0]) * libm::cos(2.0 * PI * x[1]) + libm::cos(2.0 * PI * x[0]) + 2.0
}

fn exact_gradient(x: [f64; 2]) -> [f64; 2] {
    [
        -PI * libm::sin(PI * x[0]) * libm::cos(2.0 * PI * x[1]) - 2.0 * PI * libm::sin(2.0 * PI * x[0]),
        -2.0 * PI * libm::cos(PI * x[0]) * libm::sin(2.0 * PI * x[1]),
    ]
}

fn exact_neg_laplacian(x: [f64; 2]) -> f64 {
    5.0 * PI * PI * libm::cos(PI * x[0]) * libm::cos(2.0 * PI * x[1]) + 4.0 * PI * PI * libm::cos(2.0 * PI * x[0])
}

/// Right-hand side `f` for which [`exact_solution`] (constant in time) solves
/// `y_t - nu Δy + y + a y + b·∇y + eta ∫_0^t K(t-s) (-Δy)(s) ds = f`.
pub fn manufactured_forcing(field: &CoefficientField, kernel: &KernelSpec, x: [f64; 2], t: f64) -> f64 {
    let y = exact_solution(x);
    let g = exact_gradient(x);
    let lap = exact_neg_laplacian(x);
    let b = field.b(x, t);
    field.nu * lap + y + field.a(x, t) * y + b[0] * g[0] + b[1] * g[1] + field.eta * kernel.primitive(t) * lap
}

/// Norms recorded at every `t_j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormSeries {
    pub k: f64,
    pub times: Vec<f64>,
    pub norm_y: Vec<f64>,
    pub norm_err: Vec<f64>,
    pub norm_yhat: Vec<f64>,
    pub norm_input: Vec<f64>,
}

/// Column of a [`NormSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Y,
    Err,
    Yhat,
    Input,
}

impl NormSeries {
    pub fn new(k: f64) -> Self {
        NormSeries {
            k,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn get(&self, kind: SeriesKind) -> &[f64] {
        match kind {
            SeriesKind::Y => &self.norm_y,
            SeriesKind::Err => &self.norm_err,
            SeriesKind::Yhat => &self.norm_yhat,
            SeriesKind::Input => &self.norm_input,
        }
    }

    /// Appends the sample for `t_j`, `j` 1-based.
    pub fn push(&mut self, j: usize, y: f64, err: f64, yhat: f64, input: f64) {
        self.times.push(self.k * (j as f64 - 1.0));
        self.norm_y.push(y);
        self.norm_err.push(err);
        self.norm_yhat.push(yhat);
        self.norm_input.push(input);
    }

    pub fn max(&self, kind: SeriesKind) -> f64 {
        self.get(kind).iter().copied().fold(0.0, f64::max)
    }
}

/// Least-squares fit of `ln(norm) = c - rate t` over samples with `t` in `[t_a, t_b]`.
///
/// Returns `(rate, c)`; a positive rate means decay.
pub fn decay_rate_fit(series: &NormSeries, which: SeriesKind, t_a: f64, t_b: f64) -> Result<(f64, f64)> {
    let tol = 1e-9 * series.k.max(1e-300);
    let values = series.get(which);
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for (&t, &v) in series.times.iter().zip(values) {
        if t >= t_a - tol && t <= t_b + tol {
            if !(v > 0.0) {
                return Err(Error::NonPositiveNorm { t });
            }
            ts.push(t);
            ls.push(libm::log(v));
        }
    }
    if ts.len() < 2 {
        return Err(invalid(format!("window [{t_a}, {t_b}] holds fewer than two samples")));
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let lm = ls.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, l) in ts.iter().zip(&ls) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (l - lm);
    }
    let slope = sxy / sxx;
    Ok((-slope, lm - slope * tm))
}

/// Step matrices `X⁺`, `X⁻` on the mass-matrix pattern and the solver for `X⁺`.
#[derive(Debug, Clone)]
pub struct StepOperators {
    k: f64,
    plus_base: Vec<f64>,
    minus_base: Vec<f64>,
    x_plus: CsrMatrix,
    x_minus: CsrMatrix,
    factor: Option<SkylineCholesky>,
    policy: SolverPolicy,
    frozen: bool,
}

impl StepOperators {
    /// `policy` must already be resolved (not [`SolverPolicy::Auto`]).
    pub fn new(fem: &FemMatrices, nu: f64, k: f64, policy: SolverPolicy) -> Result<Self> {
        let mass = &fem.mass;
        let s_nu = CsrMatrix::linear_combination(&[(nu, &fem.stiffness), (1.0, mass)])?;
        let s_vals = mass.values_on_pattern(&s_nu)?;
        let plus_base: Vec<f64> = mass
            .values()
            .iter()
            .zip(&s_vals)
            .map(|(m, s)| 2.0 * m + k * s)
            .collect();
        let minus_base: Vec<f64> = mass
            .values()
            .iter()
            .zip(&s_vals)
            .map(|(m, s)| 2.0 * m - k * s)
            .collect();
        Ok(StepOperators {
            k,
            x_plus: mass.with_values(plus_base.clone())?,
            x_minus: mass.with_values(minus_base.clone())?,
            plus_base,
            minus_base,
            factor: None,
            policy,
            frozen: false,
        })
    }

    pub fn x_plus(&self) -> &CsrMatrix {
        &self.x_plus
    }

    pub fn x_minus(&self) -> &CsrMatrix {
        &self.x_minus
    }

    /// Sets `X⁻ = 2M - k S_ν - k R` and `X⁺ = 2M + k S_ν + k R'` from reaction values on the pattern.
    fn update(&mut self, r_curr: &[f64], r_next: &[f64]) -> Result<()> {
        let k = self.k;
        let minus: Vec<f64> = self.minus_base.iter().zip(r_curr).map(|(b, r)| b - k * r).collect();
        let plus: Vec<f64> = self.plus_base.iter().zip(r_next).map(|(b, r)| b + k * r).collect();
        self.x_minus = self.x_minus.with_values(minus)?;
        self.x_plus = self.x_plus.with_values(plus)?;
        if self.policy == SolverPolicy::Direct {
            match &mut self.factor {
                Some(f) => f.refactor(&self.x_plus)?,
                None => self.factor = Some(SkylineCholesky::new(&self.x_plus)?),
            }
        }
        Ok(())
    }

    /// Solves `X⁺ x = b`; `x` holds the initial guess for the iterative path.
    fn solve(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        match self.policy {
            SolverPolicy::ConjugateGradient { rel_tol, max_iter } => {
                conjugate_gradient(&self.x_plus, b, x, rel_tol, max_iter)?;
                Ok(())
            }
            _ => {
                x.copy_from_slice(b);
                self.factor.as_ref().expect("factorized in update").solve_in_place(x)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum MemoryEval {
    Off,
    Sum(MemoryWeights),
    Recurrence(ExponentialAccumulator),
}

impl MemoryEval {
    /// Weighted history sum at `t_j` into `acc`.
    fn weighted(&mut self, history: &HistoryBuffer, j: usize, acc: &mut [f64]) -> Result<()> {
        match self {
            MemoryEval::Off => {
                acc.iter_mut().for_each(|v| *v = 0.0);
                Ok(())
            }
            MemoryEval::Sum(w) => w.weighted_history(history, j, acc),
            MemoryEval::Recurrence(r) => {
                debug_assert_eq!(r.index(), j);
                acc.copy_from_slice(r.weighted_sum());
                Ok(())
            }
        }
    }

    fn advance(&mut self, z_j: &[f64], z_next: &[f64]) {
        if let MemoryEval::Recurrence(r) = self {
            r.advance(z_j, z_next);
        }
    }
}

/// Trajectory data of the coupled system at step `j`.
#[derive(Debug, Clone)]
pub struct SchemeState {
    /// Current index; the state vectors hold values at `t_j = k (j - 1)`.
    pub j: usize,
    pub k: f64,
    pub y_prev: Vec<f64>,
    pub y_curr: Vec<f64>,
    pub yhat_prev: Vec<f64>,
    pub yhat_curr: Vec<f64>,
    pub plant_history: HistoryBuffer,
    pub observer_history: HistoryBuffer,
    /// Input `u_j` applied at the current step.
    pub input: Vec<f64>,
}

impl SchemeState {
    pub fn t(&self) -> f64 {
        self.k * (self.j as f64 - 1.0)
    }
}

struct Controller {
    dm: DeviceMatrices,
    k_mat: CsrMatrix,
    l_mat: CsrMatrix,
    k_stat: DenseMatrix,
}

/// A configured run that can be advanced one step at a time.
pub struct Simulation<'a> {
    scenario: Scenario,
    mesh: &'a StructuredMesh,
    fem: FemMatrices,
    ops: StepOperators,
    controller: Option<Controller>,
    state: SchemeState,
    plant_mem: MemoryEval,
    observer_mem: MemoryEval,
    reaction_curr: Vec<f64>,
    reaction_next: Vec<f64>,
    f_prev_plant: Option<Vec<f64>>,
    f_prev_observer: Option<Vec<f64>>,
    load_curr: Option<Vec<f64>>,
    exact: Option<Vec<f64>>,
    scratch: Vec<f64>,
}

impl<'a> Simulation<'a> {
    /// Sets up matrices, devices and the start-up state. `layout` is required
    /// for the controlled modes and ignored otherwise.
    pub fn new(scenario: &Scenario, mesh: &'a StructuredMesh, layout: Option<&DeviceLayout>) -> Result<Self> {
        scenario.validate()?;
        let sc = scenario.clone();
        let n = mesh.num_nodes();
        let fem = FemMatrices::assemble(mesh);
        let policy = sc.solver.resolve(mesh.rf);
        let mut ops = StepOperators::new(&fem, sc.field.nu, sc.k, policy)?;

        let controller = if sc.mode.uses_devices() {
            let layout = layout.ok_or_else(|| invalid("this mode needs an actuator/sensor layout"))?;
            let dm = build_device_matrices(mesh, layout, &fem.mass)?;
            let k_mat = feedback_matrix(&dm, sc.gains.lambda1)?;
            let l_mat = injection_matrix(&dm, sc.gains.lambda2)?;
            let k_stat = static_output_gain(&dm, sc.gains.lambda1)?;
            Some(Controller {
                dm,
                k_mat,
                l_mat,
                k_stat,
            })
        } else {
            None
        };

        let exact = (sc.mode == Mode::Manufactured).then(|| mesh.interpolate(|a, b| exact_solution([a, b])));
        let y1 = match (&exact, &sc.initial) {
            (Some(e), _) => e.clone(),
            (None, InitialState::Reference) => mesh.interpolate(|a, b| 1.0 - 2.0 * a * b),
            (None, InitialState::Zero) => vec![0.0; n],
            (None, InitialState::Nodal(v)) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: v.len(),
                    });
                }
                v.clone()
            }
        };
        let yhat1 = match (sc.mode, &controller) {
            (Mode::Coupled, Some(c)) => match sc.observer_init {
                ObserverInit::Projection => observer_initial_state(&c.dm, &y1),
                ObserverInit::Zero => vec![0.0; n],
                ObserverInit::Exact => y1.clone(),
            },
            (Mode::StateFeedback | Mode::StaticOutput, _) => y1.clone(),
            _ => vec![0.0; n],
        };

        let eta_on = sc.field.eta != 0.0;
        let recurrence = sc.fast_memory && sc.kernel.family() == KernelFamily::Exponential;
        let retention = if eta_on && !recurrence {
            Retention::Full
        } else {
            Retention::LastTwo
        };
        let make_mem = || -> Result<MemoryEval> {
            Ok(if !eta_on {
                MemoryEval::Off
            } else if recurrence {
                MemoryEval::Recurrence(ExponentialAccumulator::new(&sc.kernel, sc.k, n)?)
            } else {
                MemoryEval::Sum(MemoryWeights::new(sc.kernel, sc.k)?)
            })
        };
        let plant_mem = make_mem()?;
        let observer_mem = make_mem()?;
        let steps = sc.num_steps();
        let mut plant_history = HistoryBuffer::new(sc.k, n, retention);
        let mut observer_history = HistoryBuffer::new(sc.k, n, retention);
        plant_history.reserve(steps + 1);
        plant_history.push(&y1)?;
        if sc.mode == Mode::Coupled {
            observer_history.reserve(steps + 1);
            observer_history.push(&yhat1)?;
        }

        let reaction_curr = reaction_values(&fem.mass, &sc.field.reaction_nodal(mesh, 0.0));
        let reaction_next = if sc.field.reaction_is_autonomous() {
            reaction_curr.clone()
        } else {
            reaction_values(&fem.mass, &sc.field.reaction_nodal(mesh, sc.k))
        };
        ops.update(&reaction_curr, &reaction_next)?;
        ops.frozen = sc.cache_operators && sc.field.reaction_is_autonomous();

        let mut sim = Simulation {
            scenario: sc,
            mesh,
            fem,
            ops,
            controller,
            state: SchemeState {
                j: 1,
                k: scenario.k,
                y_prev: y1.clone(),
                y_curr: y1,
                yhat_prev: yhat1.clone(),
                yhat_curr: yhat1,
                plant_history,
                observer_history,
                input: Vec::new(),
            },
            plant_mem,
            observer_mem,
            reaction_curr,
            reaction_next,
            f_prev_plant: None,
            f_prev_observer: None,
            load_curr: None,
            exact,
            scratch: vec![0.0; n],
        };
        sim.state.input = sim.current_input();
        if sim.scenario.mode == Mode::Manufactured {
            sim.load_curr = Some(sim.load(0.0));
        }
        Ok(sim)
    }

    pub fn state(&self) -> &SchemeState {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn operators(&self) -> &StepOperators {
        &self.ops
    }

    pub fn matrices(&self) -> &FemMatrices {
        &self.fem
    }

    /// Device matrices of the controlled modes.
    pub fn devices(&self) -> Option<&DeviceMatrices> {
        self.controller.as_ref().map(|c| &c.dm)
    }

    /// Nodal interpolant of [`exact_solution`] in manufactured mode.
    pub fn exact(&self) -> Option<&[f64]> {
        self.exact.as_deref()
    }

    fn current_input(&self) -> Vec<f64> {
        let Some(c) = &self.controller else {
            return Vec::new();
        };
        match self.scenario.mode {
            Mode::Coupled => c.k_mat.mul_vec(&self.state.yhat_curr),
            Mode::StateFeedback => c.k_mat.mul_vec(&self.state.y_curr),
            Mode::StaticOutput => c.k_stat.mul_vec(&c.dm.actuator_output(&self.state.y_curr)),
            _ => Vec::new(),
        }
    }

    fn load(&self, t: f64) -> Vec<f64> {
        let sc = &self.scenario;
        let f = self
            .mesh
            .interpolate(|a, b| manufactured_forcing(&sc.field, &sc.kernel, [a, b], t));
        self.fem.mass.mul_vec(&f)
    }

    /// Explicit terms `C_j z + eta S A_j[z] - M U u_j - L r_j` for one state.
    fn explicit_terms(&mut self, b: &[Vec<f64>; 2], observer: bool, injection: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.mesh.num_nodes();
        let j = self.state.j;
        let (z, history, mem) = if observer {
            (
                &self.state.yhat_curr,
                &self.state.observer_history,
                &mut self.observer_mem,
            )
        } else {
            (&self.state.y_curr, &self.state.plant_history, &mut self.plant_mem)
        };
        let mut f = vec![0.0; n];
        self.fem.apply_convection(b, z, &mut f);
        if !matches!(mem, MemoryEval::Off) {
            mem.weighted(history, j, &mut self.scratch)?;
            self.fem
                .stiffness
                .mul_vec_add(self.scenario.field.eta, &self.scratch, &mut f);
        }
        if let Some(c) = &self.controller {
            c.dm.mu.mul_vec_add(-1.0, &self.state.input, &mut f);
            if let Some(r) = injection {
                c.l_mat.mul_vec_add(-1.0, r, &mut f);
            }
        }
        Ok(f)
    }

    /// Advances from `t_j` to `t_{j+1}`.
    pub fn step(&mut self) -> Result<()> {
        let sc_k = self.scenario.k;
        let j = self.state.j;
        let t_j = self.state.t();
        let t_next = sc_k * j as f64;
        let mode = self.scenario.mode;
        let coupled = mode == Mode::Coupled;

        if !self.ops.frozen && j > 1 {
            core::mem::swap(&mut self.reaction_curr, &mut self.reaction_next);
            self.reaction_next =
                reaction_values(&self.fem.mass, &self.scenario.field.reaction_nodal(self.mesh, t_next));
            self.ops.update(&self.reaction_curr, &self.reaction_next)?;
        }

        let b = self.scenario.field.convection_nodal(self.mesh, t_j);
        let f_plant = self.explicit_terms(&b, false, None)?;
        let f_observer = if coupled {
            let c = self.controller.as_ref().expect("coupled mode has devices");
            let diff: Vec<f64> = self
                .state
                .yhat_curr
                .iter()
                .zip(&self.state.y_curr)
                .map(|(a, b)| a - b)
                .collect();
            let r = c.dm.sensor_output(&diff);
            Some(self.explicit_terms(&b, true, Some(&r))?)
        } else {
            None
        };

        let load_next = if mode == Mode::Manufactured {
            Some(self.load(t_next))
        } else {
            None
        };

        let y_next = self.advance_state(
            &self.state.y_curr,
            &f_plant,
            self.f_prev_plant.as_deref(),
            self.load_curr.as_deref().zip(load_next.as_deref()),
        )?;
        let yhat_next = match &f_observer {
            Some(fo) => Some(self.advance_state(&self.state.yhat_curr, fo, self.f_prev_observer.as_deref(), None)?),
            None => None,
        };

        self.state.plant_history.push(&y_next)?;
        self.plant_mem.advance(&self.state.y_curr, &y_next);
        self.state.y_prev = core::mem::replace(&mut self.state.y_curr, y_next);
        match yhat_next {
            Some(yh) => {
                self.state.observer_history.push(&yh)?;
                self.observer_mem.advance(&self.state.yhat_curr, &yh);
                self.state.yhat_prev = core::mem::replace(&mut self.state.yhat_curr, yh);
            }
            None if matches!(mode, Mode::StateFeedback | Mode::StaticOutput) => {
                self.state.yhat_prev = core::mem::replace(&mut self.state.yhat_curr, self.state.y_curr.clone());
            }
            None => {}
        }
        self.f_prev_plant = Some(f_plant);
        self.f_prev_observer = f_observer;
        self.load_curr = load_next;
        self.state.j += 1;
        self.state.input = self.current_input();
        Ok(())
    }

    /// Solves `X⁺ z' = X⁻ z - k (3 F_j - F_{j-1}) + k (G_j + G_{j+1})`.
    fn advance_state(
        &self,
        z: &[f64],
        f: &[f64],
        f_prev: Option<&[f64]>,
        load: Option<(&[f64], &[f64])>,
    ) -> Result<Vec<f64>> {
        let k = self.scenario.k;
        let f_prev = f_prev.unwrap_or(f);
        let mut rhs = self.ops.x_minus.mul_vec(z);
        for i in 0..rhs.len() {
            rhs[i] -= k * (3.0 * f[i] - f_prev[i]);
        }
        if let Some((g0, g1)) = load {
            for i in 0..rhs.len() {
                rhs[i] += k * (g0[i] + g1[i]);
            }
        }
        let mut x = z.to_vec();
        self.ops.solve(&rhs, &mut x)?;
        Ok(x)
    }

    /// Norms at the current `t_j`: `(|y|, |ŷ - y|, |ŷ|, |U u|)`; in manufactured
    /// mode the second entry is `|y - I_h y_exact|`.
    pub fn norms(&self) -> (f64, f64, f64, f64) {
        let m = &self.fem.mass;
        let y = &self.state.y_curr;
        let reference: &[f64] = match &self.exact {
            Some(e) => e,
            None => &self.state.yhat_curr,
        };
        let diff: Vec<f64> = reference.iter().zip(y).map(|(a, b)| a - b).collect();
        let input = match &self.controller {
            Some(c) => c.dm.input_norm(&self.state.input),
            None => 0.0,
        };
        (h_norm(m, y), h_norm(m, &diff), h_norm(m, &self.state.yhat_curr), input)
    }

    fn record(&self, series: &mut NormSeries) {
        let (a, b, c, d) = self.norms();
        series.push(self.state.j, a, b, c, d);
    }
}

/// Runs `scenario` to its final time and returns the recorded norms.
pub fn run(scenario: &Scenario, mesh: &StructuredMesh, layout: Option<&DeviceLayout>) -> Result<NormSeries> {
    let mut sim = Simulation::new(scenario, mesh, layout)?;
    let steps = scenario.num_steps();
    let mut series = NormSeries::new(scenario.k);
    sim.record(&mut series);
    for _ in 0..steps {
        sim.step()?;
        sim.record(&mut series);
    }
    Ok(series)
}

/// Error history of a manufactured-solution run.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedResult {
    pub series: NormSeries,
    /// `max_j |y_j - I_h y_exact|_H`.
    pub max_error: f64,
    pub final_error: f64,
}

/// Runs `scenario` in manufactured mode (the mode field is overridden).
pub fn run_manufactured(scenario: &Scenario, mesh: &StructuredMesh) -> Result<ManufacturedResult> {
    let mut sc = scenario.clone();
    sc.mode = Mode::Manufactured;
    let series = run(&sc, mesh, None)?;
    let max_error = series.max(SeriesKind::Err);
    let final_error = *series.norm_err.last().unwrap_or(&0.0);
    Ok(ManufacturedResult {
        series,
        max_error,
        final_error,
    })
}
