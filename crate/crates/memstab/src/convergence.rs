//! Error-versus-refinement tables for manufactured-solution runs.

use std::collections::BTreeMap;

use memstab_core::run_manufactured;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModeKind};
use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    pub rf: u32,
    pub h: f64,
    pub k: f64,
    /// `max_j |y_j - I_h y_exact|_H`.
    pub max_error: f64,
    pub final_error: f64,
}

/// Errors of one refinement sweep and the observed orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub eta: f64,
    pub levels: Vec<ConvergenceLevel>,
    /// `log2(e_rf / e_{rf+1})` for consecutive levels; `None` when an error vanishes.
    pub orders: Vec<Option<f64>>,
    /// `log2(e_first / e_last) / (rf_last - rf_first)`.
    pub overall_order: Option<f64>,
    pub strictly_decreasing: bool,
}

fn order(coarse: f64, fine: f64, levels: u32) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2() / f64::from(levels))
}

/// Builds the report for runs differing only in `rf` (sorted by `rf` here).
pub fn convergence_report(configs: &[ExperimentConfig]) -> Result<ConvergenceReport> {
    let first = configs
        .first()
        .ok_or_else(|| AppError::config("convergence report needs at least one run"))?;
    for c in configs {
        if c.mode != ModeKind::Manufactured {
            return Err(AppError::config(format!(
                "{}: convergence needs manufactured mode",
                c.name
            )));
        }
        if c.eta != first.eta || c.kernel != first.kernel || c.gamma != first.gamma || c.ell != first.ell {
            return Err(AppError::config("convergence runs must differ only in rf"));
        }
    }
    let mut sorted = configs.to_vec();
    sorted.sort_by_key(|c| c.rf);
    let levels: Vec<ConvergenceLevel> = sorted
        .par_iter()
        .map(|c| -> Result<ConvergenceLevel> {
            let mesh = c.mesh()?;
            let res = run_manufactured(&c.scenario(&mesh)?, &mesh)?;
            Ok(ConvergenceLevel {
                rf: c.rf,
                h: mesh.h,
                k: c.time_step(),
                max_error: res.max_error,
                final_error: res.final_error,
            })
        })
        .collect::<Result<_>>()?;
    let orders = levels
        .windows(2)
        .map(|w| order(w[0].max_error, w[1].max_error, w[1].rf - w[0].rf))
        .collect();
    let overall_order = match (levels.first(), levels.last()) {
        (Some(a), Some(b)) if b.rf > a.rf => order(a.max_error, b.max_error, b.rf - a.rf),
        _ => None,
    };
    let strictly_decreasing = levels.windows(2).all(|w| w[1].max_error < w[0].max_error);
    Ok(ConvergenceReport {
        eta: first.eta,
        levels,
        orders,
        overall_order,
        strictly_decreasing,
    })
}

/// Splits manufactured runs into one sweep per `eta`, in increasing `eta`.
pub fn group_by_eta(configs: &[ExperimentConfig]) -> Vec<Vec<ExperimentConfig>> {
    let mut groups: BTreeMap<u64, Vec<ExperimentConfig>> = BTreeMap::new();
    for c in configs {
        groups.entry(c.eta.to_bits()).or_default().push(c.clone());
    }
    let mut v: Vec<_> = groups.into_values().collect();
    v.sort_by(|a, b| a[0].eta.total_cmp(&b[0].eta));
    v
}
