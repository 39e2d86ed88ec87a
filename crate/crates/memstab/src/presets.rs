//! Named experiment sweeps.
//!
//! Each preset expands to one configuration per run. Gains default to 200 for
//! the controlled runs, and the exponential-kernel runs use the recurrence for
//! the memory term.

use crate::config::{ExperimentConfig, KernelKind, ModeKind};
use crate::error::{AppError, Result};

/// Catalogue of preset names, in display order.
pub const PRESETS: [&str; 13] = [
    "free-fig2",
    "l2-sweep-fig4",
    "l2-eta-fig5",
    "l4-eta-fig6",
    "l6-eta-fig7",
    "wsk-l2",
    "wsk-l4",
    "wsk-l6",
    "static-l4",
    "manufactured",
    "refine-free",
    "refine-coupled",
    "smoke",
];

const ETAS: [f64; 4] = [0.0, 0.01, 0.1, 1.0];

fn base(name: &str, mode: ModeKind, ell: usize, eta: f64, lambda: f64, t_final: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        mode,
        ell,
        eta,
        lambda1: lambda,
        lambda2: lambda,
        t_final,
        ..ExperimentConfig::default()
    }
}

fn eta_sweep(
    preset: &str,
    mode: ModeKind,
    ell: usize,
    lambda: f64,
    t_final: f64,
    etas: &[f64],
) -> Vec<ExperimentConfig> {
    etas.iter()
        .map(|&eta| base(&format!("{preset}_eta{eta}"), mode, ell, eta, lambda, t_final))
        .collect()
}

fn riesz(mut cfgs: Vec<ExperimentConfig>) -> Vec<ExperimentConfig> {
    for c in &mut cfgs {
        c.kernel = KernelKind::Riesz;
        c.gamma = 0.5;
        c.fast_memory = false;
    }
    cfgs
}

/// Expands `name` into its runs.
pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>> {
    use ModeKind::*;
    let runs = match name {
        "free-fig2" => eta_sweep(name, Free, 6, 0.0, 3.0, &ETAS),
        "l2-sweep-fig4" => [50.0, 200.0]
            .iter()
            .map(|&l2| {
                let mut c = base(&format!("{name}_l2-{l2}"), Coupled, 2, 0.01, 200.0, 3.0);
                c.lambda2 = l2;
                c
            })
            .collect(),
        "l2-eta-fig5" => eta_sweep(name, Coupled, 2, 200.0, 3.0, &ETAS),
        "l4-eta-fig6" => eta_sweep(name, Coupled, 4, 200.0, 6.0, &ETAS),
        "l6-eta-fig7" => eta_sweep(name, Coupled, 6, 200.0, 3.0, &ETAS),
        "wsk-l2" => riesz(eta_sweep(name, Coupled, 2, 200.0, 6.0, &[0.1])),
        "wsk-l4" => riesz(eta_sweep(name, Coupled, 4, 200.0, 6.0, &[0.1])),
        "wsk-l6" => riesz(eta_sweep(name, Coupled, 6, 200.0, 6.0, &[0.1])),
        "static-l4" => eta_sweep(name, StaticOutput, 4, 200.0, 3.0, &[0.01]),
        "manufactured" => {
            let mut v = Vec::new();
            for eta in [0.0, 0.1, 1.0] {
                for rf in 0..4 {
                    let mut c = base(&format!("{name}_eta{eta}_rf{rf}"), Manufactured, 2, eta, 0.0, 0.2);
                    c.rf = rf;
                    v.push(c);
                }
            }
            riesz(v)
        }
        "refine-free" | "refine-coupled" => {
            let (mode, lambda) = if name == "refine-free" {
                (Free, 0.0)
            } else {
                (Coupled, 200.0)
            };
            (0..2)
                .map(|rf| {
                    let mut c = base(&format!("{name}_rf{rf}"), mode, 6, 0.1, lambda, 3.0);
                    c.rf = rf;
                    c
                })
                .collect()
        }
        "smoke" => vec![base("smoke", Coupled, 2, 0.1, 20.0, 0.05)],
        _ => {
            return Err(AppError::config(format!(
                "unknown preset `{name}`; known presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(runs)
}
