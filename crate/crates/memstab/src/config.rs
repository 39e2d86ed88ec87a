//! Experiment configuration and its flat `key = value` text form.

use std::fmt::Write as _;

use clap::ValueEnum;
use memstab_core::mesh::{build_mesh_for_layout, chessboard_layout};
use memstab_core::timestepper::{InitialState, Mode, ObserverInit, Scenario};
use memstab_core::{DeviceLayout, FeedbackGains, KernelFamily, KernelSpec, SolverPolicy, StructuredMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    /// Uncontrolled plant.
    Free,
    /// Plant plus observer, input from the observer state.
    Coupled,
    /// Input from the true state.
    StateFeedback,
    /// Input from the actuator output through the static gain.
    StaticOutput,
    /// Forced problem with a known exact solution.
    Manufactured,
}

impl From<ModeKind> for Mode {
    fn from(m: ModeKind) -> Mode {
        match m {
            ModeKind::Free => Mode::Free,
            ModeKind::Coupled => Mode::Coupled,
            ModeKind::StateFeedback => Mode::StateFeedback,
            ModeKind::StaticOutput => Mode::StaticOutput,
            ModeKind::Manufactured => Mode::Manufactured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `exp(-gamma t)`.
    Exp,
    /// `t^(gamma - 1)`.
    Riesz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// `1 - 2 x1 x2`.
    Reference,
    Zero,
    /// Uniform nodal values in `[-1, 1]` drawn from `seed`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObserverKind {
    /// Projection of `y0` onto the sensor span.
    Projection,
    Zero,
    /// The true initial state.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Cholesky up to `rf = 1`, conjugate gradients beyond.
    Auto,
    Direct,
    Cg,
}

/// Every parameter of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: ModeKind,
    pub ell: usize,
    pub rf: u32,
    pub subdiv: usize,
    pub support_fraction: f64,
    pub kernel: KernelKind,
    pub gamma: f64,
    pub eta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub t_final: f64,
    /// Time step at `rf = 0`; halved per refinement level.
    pub k0: f64,
    pub y0: InitialKind,
    pub yhat0: ObserverKind,
    pub seed: u64,
    pub solver: SolverKind,
    /// Evaluate the exponential memory term by recurrence instead of the full sum.
    pub fast_memory: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            mode: ModeKind::Coupled,
            ell: 2,
            rf: 0,
            subdiv: 4,
            support_fraction: 0.5,
            kernel: KernelKind::Exp,
            gamma: 1.0,
            eta: 0.01,
            lambda1: 200.0,
            lambda2: 200.0,
            t_final: 3.0,
            k0: 4e-4,
            y0: InitialKind::Reference,
            yhat0: ObserverKind::Projection,
            seed: 0,
            solver: SolverKind::Auto,
            fast_memory: true,
        }
    }
}

const KEYS: [&str; 18] = [
    "name",
    "mode",
    "ell",
    "rf",
    "subdiv",
    "support_fraction",
    "kernel",
    "gamma",
    "eta",
    "lambda1",
    "lambda2",
    "t_final",
    "k0",
    "y0",
    "yhat0",
    "seed",
    "solver",
    "fast_memory",
];

fn enum_name<E: ValueEnum>(v: &E) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

fn parse_enum<E: ValueEnum>(key: &str, value: &str) -> Result<E> {
    E::from_str(value, false).map_err(|_| {
        let names: Vec<String> = E::value_variants().iter().map(enum_name).collect();
        AppError::config(format!("{key}: `{value}` is not one of {}", names.join(", ")))
    })
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AppError::config(format!("{key}: cannot parse `{value}`")))
}

impl ExperimentConfig {
    /// `k = k0 2^(-rf)`, exact in binary floating point.
    pub fn time_step(&self) -> f64 {
        self.k0 * 0.5f64.powi(self.rf as i32)
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let family = match self.kernel {
            KernelKind::Exp => KernelFamily::Exponential,
            KernelKind::Riesz => KernelFamily::Riesz,
        };
        Ok(KernelSpec::new(family, self.gamma)?)
    }

    /// Checks every field against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AppError::Config(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\', '\n']) {
            return bad(format!("name `{}` cannot be used as a file stem", self.name));
        }
        if self.ell == 0 {
            return bad("ell must be positive".into());
        }
        if self.rf > 6 {
            return bad(format!("rf = {} is too large", self.rf));
        }
        if self.subdiv < 2 {
            return bad("subdiv must be at least 2".into());
        }
        if !(self.support_fraction > 0.0 && self.support_fraction <= 1.0) {
            return bad(format!("support_fraction {} is outside (0, 1]", self.support_fraction));
        }
        self.kernel_spec().map_err(|e| AppError::config(e.to_string()))?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be nonnegative", self.eta));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite() && self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("gains must be nonnegative".into());
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final {} must be nonnegative", self.t_final));
        }
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return bad(format!("k0 {} must be positive", self.k0));
        }
        let layout = chessboard_layout(self.ell, self.support_fraction).map_err(|e| AppError::config(e.to_string()))?;
        build_mesh_for_layout(&layout, 0, self.subdiv).map_err(|e| AppError::config(e.to_string()))?;
        Ok(())
    }

    pub fn layout(&self) -> Result<DeviceLayout> {
        Ok(chessboard_layout(self.ell, self.support_fraction)?)
    }

    /// The mesh at this configuration's refinement level, aligned with [`layout`](Self::layout).
    pub fn mesh(&self) -> Result<StructuredMesh> {
        Ok(build_mesh_for_layout(&self.layout()?, self.rf, self.subdiv)?)
    }

    /// The core scenario for `mesh`.
    pub fn scenario(&self, mesh: &StructuredMesh) -> Result<Scenario> {
        self.validate()?;
        let gains = FeedbackGains::new(self.lambda1, self.lambda2)?;
        let mut sc = Scenario::new(
            self.mode.into(),
            self.eta,
            self.kernel_spec()?,
            gains,
            self.time_step(),
            self.t_final,
        );
        sc.initial = match self.y0 {
            InitialKind::Reference => InitialState::Reference,
            InitialKind::Zero => InitialState::Zero,
            InitialKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                InitialState::Nodal((0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            }
        };
        sc.observer_init = match self.yhat0 {
            ObserverKind::Projection => ObserverInit::Projection,
            ObserverKind::Zero => ObserverInit::Zero,
            ObserverKind::Exact => ObserverInit::Exact,
        };
        sc.solver = match self.solver {
            SolverKind::Auto => SolverPolicy::Auto,
            SolverKind::Direct => SolverPolicy::Direct,
            SolverKind::Cg => SolverPolicy::ConjugateGradient {
                rel_tol: 1e-10,
                max_iter: 20 * mesh.num_nodes(),
            },
        };
        sc.fast_memory = self.fast_memory;
        Ok(sc)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "name" => self.name = v.to_string(),
            "mode" => self.mode = parse_enum(key, v)?,
            "ell" => self.ell = parse_num(key, v)?,
            "rf" => self.rf = parse_num(key, v)?,
            "subdiv" => self.subdiv = parse_num(key, v)?,
            "support_fraction" => self.support_fraction = parse_num(key, v)?,
            "kernel" => self.kernel = parse_enum(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "eta" => self.eta = parse_num(key, v)?,
            "lambda1" => self.lambda1 = parse_num(key, v)?,
            "lambda2" => self.lambda2 = parse_num(key, v)?,
            "t_final" => self.t_final = parse_num(key, v)?,
            "k0" => self.k0 = parse_num(key, v)?,
            "y0" => self.y0 = parse_enum(key, v)?,
            "yhat0" => self.yhat0 = parse_enum(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "solver" => self.solver = parse_enum(key, v)?,
            "fast_memory" => self.fast_memory = parse_num(key, v)?,
            _ => return Err(AppError::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// The text form of one field; floats use the shortest round-tripping representation.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "name" => self.name.clone(),
            "mode" => enum_name(&self.mode),
            "ell" => self.ell.to_string(),
            "rf" => self.rf.to_string(),
            "subdiv" => self.subdiv.to_string(),
            "support_fraction" => self.support_fraction.to_string(),
            "kernel" => enum_name(&self.kernel),
            "gamma" => self.gamma.to_string(),
            "eta" => self.eta.to_string(),
            "lambda1" => self.lambda1.to_string(),
            "lambda2" => self.lambda2.to_string(),
            "t_final" => self.t_final.to_string(),
            "k0" => self.k0.to_string(),
            "y0" => enum_name(&self.y0),
            "yhat0" => enum_name(&self.yhat0),
            "seed" => self.seed.to_string(),
            "solver" => enum_name(&self.solver),
            "fast_memory" => self.fast_memory.to_string(),
            _ => return None,
        })
    }

    /// One `key = value` line per field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            writeln!(s, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        s
    }

    /// Parses the `key = value` form on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored; a repeated key is an error.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| AppError::config(format!("line {}: expected `key = value`", no + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(AppError::config(format!("line {}: `{key}` given twice", no + 1)));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn time_step_halves_exactly() {
        let mut c = ExperimentConfig::default();
        for rf in 0..4 {
            c.rf = rf;
            assert_eq!(c.time_step() * f64::from(1u32 << rf), 4e-4);
        }
    }

    #[test]
    fn kv_round_trip() {
        let c = ExperimentConfig {
            eta: 0.1 + 0.2,
            kernel: KernelKind::Riesz,
            gamma: 0.5,
            mode: ModeKind::StaticOutput,
            fast_memory: false,
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn kv_errors() {
        assert!(ExperimentConfig::from_kv("bogus = 1").is_err());
        assert!(ExperimentConfig::from_kv("eta = 1\neta = 2").is_err());
        assert!(ExperimentConfig::from_kv("eta 1").is_err());
        assert!(ExperimentConfig::from_kv("kernel = gauss").is_err());
        let c = ExperimentConfig::from_kv("# comment\n\n ell = 4 \nkernel=riesz").unwrap();
        assert_eq!((c.ell, c.kernel), (4, KernelKind::Riesz));
    }

    #[test]
    fn validation_catches_bad_values() {
        let cases: [fn(&mut ExperimentConfig); 6] = [
            |c| c.gamma = -1.0,
            |c| {
                c.kernel = KernelKind::Riesz;
                c.gamma = 1.0
            },
            |c| c.eta = -0.1,
            |c| c.k0 = 0.0,
            |c| c.subdiv = 3,
            |c| c.support_fraction = 1.5,
        ];
        for f in cases {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        }
    }
}
