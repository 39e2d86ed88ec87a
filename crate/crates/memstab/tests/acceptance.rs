//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use memstab::config::{InitialKind, ModeKind};
use memstab::convergence::{convergence_report, group_by_eta};
use memstab::experiment::{execute, fitted_rate, output_paths, simulate_all, RunSummary};
use memstab::{preset, ExperimentConfig};
use memstab_core::feedback::{build_device_matrices, feedback_matrix, injection_matrix, orthogonal_projection};
use memstab_core::fem::{assemble_convection, assemble_mass, assemble_reaction, assemble_stiffness};
use memstab_core::memory::{
    interval_integral_0, interval_integral_1, kernel_positivity_form, memory_term, ExponentialAccumulator,
    HistoryBuffer, MemoryWeights, Retention,
};
use memstab_core::mesh::{build_mesh_for_layout, chessboard_layout};
use memstab_core::oracle::tanh_sinh;
use memstab_core::{
    CoefficientField, CsrMatrix, DeviceSide, FeedbackGains, KernelFamily, KernelSpec, Mode, NormSeries, Scenario,
    SeriesKind, Simulation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn runs(name: &str) -> Vec<(NormSeries, RunSummary)> {
    simulate_all(&preset(name).unwrap())
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

fn fmt_opt(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn random_kernel(rng: &mut ChaCha8Rng) -> KernelSpec {
    if rng.gen_bool(0.5) {
        KernelSpec::exponential(rng.gen_range(0.05..5.0)).unwrap()
    } else {
        KernelSpec::riesz(rng.gen_range(0.05..0.95)).unwrap()
    }
}

fn quadrature_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..200 {
        let kern = random_kernel(&mut rng);
        let k = 10f64.powf(rng.gen_range(-4.0..-0.3));
        let m = if rng.gen_bool(0.25) {
            1
        } else {
            rng.gen_range(1..=200usize)
        };
        let tol = if kern.family() == KernelFamily::Riesz && m == 1 {
            1e-8
        } else {
            1e-10
        };
        let offset = (m as f64 - 1.0) * k;
        for p in [0, 1] {
            let got = if p == 0 {
                interval_integral_0(&kern, k, m).unwrap()
            } else {
                interval_integral_1(&kern, k, m).unwrap()
            };
            let want = tanh_sinh(|s, _, dr| s.powi(p) * kern.eval(offset + dr), 0.0, k, 1e-15);
            let rel = (got - want).abs() / want.abs();
            worst = worst.max(rel / tol);
            if !(rel <= tol) {
                failures += 1;
            }
        }
    }
    (
        failures == 0,
        format!("400 integrals, worst error/tolerance {worst:.2e}"),
    )
}

fn kernel_positivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    for i in 0..200 {
        let kern = if i % 2 == 0 {
            KernelSpec::exponential(rng.gen_range(0.05..5.0)).unwrap()
        } else {
            KernelSpec::riesz(rng.gen_range(0.05..0.95)).unwrap()
        };
        let k = 10f64.powf(rng.gen_range(-3.0..0.0));
        let n = rng.gen_range(2..=64);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm2: f64 = f.iter().map(|v| v * v).sum();
        let q = kernel_positivity_form(&kern, k, &f).unwrap();
        worst = worst.min(q / norm2);
    }
    (worst >= -1e-10, format!("min form/|f|^2 = {worst:.3e}"))
}

fn free_instability() -> Outcome {
    let r = runs("free-fig2");
    let growth: Vec<f64> = r.iter().map(|(_, s)| -s.rate_y.unwrap_or(f64::NAN)).collect();
    let monotone = growth.windows(2).all(|w| w[1] <= w[0]);
    let detail = r
        .iter()
        .zip(&growth)
        .map(|((_, s), g)| format!("eta {} growth {g:.4}", s.config.eta))
        .collect::<Vec<_>>()
        .join(", ");
    (growth[0] > 0.1 && monotone, detail)
}

fn insufficient_l2() -> Outcome {
    let r = runs("l2-sweep-fig4");
    let ok = r.iter().all(|(_, s)| s.rate_err.is_some_and(|v| v <= 0.05));
    let detail = r
        .iter()
        .map(|(_, s)| format!("lambda2 {} rate_err {}", s.config.lambda2, fmt_opt(s.rate_err)))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, detail)
}

fn stabilization_l4() -> Outcome {
    let cfgs: Vec<ExperimentConfig> = preset("l4-eta-fig6")
        .unwrap()
        .into_iter()
        .filter(|c| c.eta < 1.0)
        .collect();
    let r: Vec<_> = simulate_all(&cfgs).into_iter().map(|r| r.unwrap()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (series, s) in &r {
        let (ry, re) = (s.rate_y.unwrap_or(f64::NAN), s.rate_err.unwrap_or(f64::NAN));
        ok &= ry >= 0.8 && re >= 0.8;
        let early = [1.5, 3.0];
        parts.push(format!(
            "eta {}: y {ry:.3} err {re:.3} on [{}, {}] (on [1.5, 3]: y {} err {})",
            s.config.eta,
            s.window[0],
            s.window[1],
            fmt_opt(fitted_rate(series, SeriesKind::Y, early)),
            fmt_opt(fitted_rate(series, SeriesKind::Err, early)),
        ));
    }
    (ok, parts.join("; "))
}

fn saturation_l6() -> Outcome {
    let cfgs: Vec<ExperimentConfig> = preset("l6-eta-fig7")
        .unwrap()
        .into_iter()
        .filter(|c| c.eta == 0.0 || c.eta == 0.01)
        .collect();
    let r: Vec<_> = simulate_all(&cfgs).into_iter().map(|r| r.unwrap()).collect();
    let rate = |eta: f64| r.iter().find(|(_, s)| s.config.eta == eta).unwrap().1.clone();
    let (m, free) = (rate(0.01), rate(0.0));
    let ry = m.rate_y.unwrap_or(f64::NAN);
    let r0 = free.rate_y.unwrap_or(f64::NAN);
    let ok = (0.8..=1.6).contains(&ry) && r0 >= 2.0;
    (
        ok,
        format!(
            "eta 0.01: y {ry:.3} (err {}), eta 0: y {r0:.3} (err {})",
            fmt_opt(m.rate_err),
            fmt_opt(free.rate_err)
        ),
    )
}

fn weakly_singular() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["wsk-l4", "wsk-l6"] {
        for (_, s) in runs(name) {
            ok &= s.rate_y.is_some_and(|v| v > 0.0);
            parts.push(format!(
                "ell {}: tail slope of ln|y| {}",
                s.config.ell,
                fmt_opt(s.rate_y.map(|v| -v))
            ));
        }
    }
    (ok, parts.join(", "))
}

fn manufactured_convergence() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for group in group_by_eta(&preset("manufactured").unwrap()) {
        let r = convergence_report(&group).unwrap();
        let in_range = |o: &Option<f64>| o.is_some_and(|v| (1.6..=2.4).contains(&v));
        ok &= r.strictly_decreasing && r.orders.iter().all(in_range) && in_range(&r.overall_order);
        let orders: Vec<String> = r.orders.iter().map(|o| fmt_opt(*o)).collect();
        parts.push(format!(
            "eta {}: orders [{}] overall {} decreasing {}",
            r.eta,
            orders.join(", "),
            fmt_opt(r.overall_order),
            r.strictly_decreasing
        ));
    }
    (ok, parts.join("; "))
}

fn static_output() -> Outcome {
    let cfg = ExperimentConfig {
        mode: ModeKind::StateFeedback,
        eta: 0.1,
        t_final: 0.08,
        ..ExperimentConfig::default()
    };
    let mesh = cfg.mesh().unwrap();
    let layout = cfg.layout().unwrap();
    let state = cfg.scenario(&mesh).unwrap();
    let mut stat = state.clone();
    stat.mode = Mode::StaticOutput;
    let mut a = Simulation::new(&state, &mesh, Some(&layout)).unwrap();
    let mut b = Simulation::new(&stat, &mesh, Some(&layout)).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..state.num_steps() {
        a.step().unwrap();
        b.step().unwrap();
        worst = worst.max(max_diff(&a.state().y_curr, &b.state().y_curr));
    }
    let (_, s) = runs("static-l4").remove(0);
    let rate = s.rate_y.unwrap_or(f64::NAN);
    (
        worst <= 1e-12 && rate >= 0.8,
        format!(
            "{} steps max |diff| {worst:.2e}; ell 4 rate_y {rate:.3}",
            state.num_steps()
        ),
    )
}

fn refinement_robustness() -> Outcome {
    let r = runs("refine-coupled");
    let ry: Vec<f64> = r.iter().map(|(_, s)| s.rate_y.unwrap_or(f64::NAN)).collect();
    let re: Vec<String> = r.iter().map(|(_, s)| fmt_opt(s.rate_err)).collect();
    let diff = (ry[0] - ry[1]).abs();
    (
        diff <= 0.15,
        format!(
            "rate_y rf0 {:.4} rf1 {:.4} |diff| {diff:.4} (rate_err {})",
            ry[0],
            ry[1],
            re.join(" / ")
        ),
    )
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c][c];
    }
    x
}

fn projection_idempotence(rng: &mut ChaCha8Rng) -> f64 {
    let layout = chessboard_layout(4, 0.5).unwrap();
    let mesh = build_mesh_for_layout(&layout, 0, 4).unwrap();
    let dm = build_device_matrices(&mesh, &layout, &assemble_mass(&mesh)).unwrap();
    let mut worst = 0.0f64;
    for side in [DeviceSide::Actuators, DeviceSide::Sensors] {
        for _ in 0..20 {
            let v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = orthogonal_projection(&dm, side, &v);
            let pp = orthogonal_projection(&dm, side, &p);
            worst = worst.max(max_diff(&p, &pp) / max_abs(&p).max(1e-300));
        }
    }
    worst
}

fn memory_linearity(rng: &mut ChaCha8Rng) -> f64 {
    let dim = 6;
    let mut t = Vec::new();
    for i in 0..dim {
        t.push((i, i, 3.0));
        if i + 1 < dim {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    let s = CsrMatrix::from_triplets(dim, dim, &t);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let kern = random_kernel(rng);
        let k = 0.01;
        let len = rng.gen_range(2..40);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mut h1 = HistoryBuffer::new(k, dim, Retention::Full);
        let mut h2 = HistoryBuffer::new(k, dim, Retention::Full);
        let mut hc = HistoryBuffer::new(k, dim, Retention::Full);
        for _ in 0..len {
            let y1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yc: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
            h1.push(&y1).unwrap();
            h2.push(&y2).unwrap();
            hc.push(&yc).unwrap();
        }
        let m1 = memory_term(&s, &h1, &kern, len).unwrap();
        let m2 = memory_term(&s, &h2, &kern, len).unwrap();
        let mc = memory_term(&s, &hc, &kern, len).unwrap();
        let combo: Vec<f64> = m1.iter().zip(&m2).map(|(p, q)| a * p + b * q).collect();
        let scale = max_abs(&m1).abs() * a.abs() + max_abs(&m2) * b.abs();
        worst = worst.max(max_diff(&mc, &combo) / scale.max(1e-300));
    }
    worst
}

fn recurrence_equivalence(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let kern = KernelSpec::exponential(rng.gen_range(0.1..4.0)).unwrap();
        let k = 0.02;
        let dim = 3;
        let mut h = HistoryBuffer::new(k, dim, Retention::Full);
        let mut acc = ExponentialAccumulator::new(&kern, k, dim).unwrap();
        let mut w = MemoryWeights::new(kern, k).unwrap();
        let mut sum = vec![0.0; dim];
        let mut prev: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
        h.push(&prev).unwrap();
        for j in 1..100 {
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
            h.push(&y).unwrap();
            acc.advance(&prev, &y);
            w.weighted_history(&h, j + 1, &mut sum).unwrap();
            for (a, b) in acc.weighted_sum().iter().zip(&sum) {
                worst = worst.max((a - b).abs() / b.abs());
            }
            prev = y;
        }
    }
    worst
}

fn rerun_bytes_identical() -> bool {
    let cfg = ExperimentConfig {
        y0: InitialKind::Random,
        seed: 11,
        ..preset("smoke").unwrap().remove(0)
    };
    let read = || {
        let dir = tempfile::tempdir().unwrap();
        execute(&cfg, dir.path()).unwrap();
        fs::read(output_paths(dir.path(), &cfg).0).unwrap()
    };
    read() == read()
}

/// First coupled step: both ghost forcings equal the `t_1` forcing, so
/// `X+ z_2 = X- z_1 - 2 k F_1` for the plant and for the observer.
fn ghost_step_error() -> f64 {
    let layout = chessboard_layout(2, 0.5).unwrap();
    let mesh = build_mesh_for_layout(&layout, 0, 4).unwrap();
    let (k, eta, lambda) = (0.001, 0.1, 50.0);
    let kern = KernelSpec::exponential(1.0).unwrap();
    let sc = Scenario::new(
        Mode::Coupled,
        eta,
        kern,
        FeedbackGains::new(lambda, lambda).unwrap(),
        k,
        k,
    );
    let mut sim = Simulation::new(&sc, &mesh, Some(&layout)).unwrap();
    sim.step().unwrap();

    let field = CoefficientField::reference(eta);
    let m = assemble_mass(&mesh);
    let s = assemble_stiffness(&mesh);
    let dm = build_device_matrices(&mesh, &layout, &m).unwrap();
    let kmat = feedback_matrix(&dm, lambda).unwrap();
    let lmat = injection_matrix(&dm, lambda).unwrap();
    let r0 = assemble_reaction(&mesh, &field, 0.0);
    let r1 = assemble_reaction(&mesh, &field, k);
    let c0 = assemble_convection(&mesh, &field, 0.0);
    let x_minus = CsrMatrix::linear_combination(&[(2.0 - k, &m), (-k * 0.1, &s), (-k, &r0)]).unwrap();
    let x_plus = CsrMatrix::linear_combination(&[(2.0 + k, &m), (k * 0.1, &s), (k, &r1)]).unwrap();

    let y1 = mesh.interpolate(|a, b| 1.0 - 2.0 * a * b);
    let yh1 = dm.w.mul_vec(&dm.solve_vw(&dm.mw.mul_transpose_vec(&y1)));
    let u1 = kmat.mul_vec(&yh1);
    let mismatch: Vec<f64> = yh1.iter().zip(&y1).map(|(a, b)| a - b).collect();
    let lr = lmat.mul_vec(&dm.mw.mul_transpose_vec(&mismatch));
    let mu = dm.mu.mul_vec(&u1);
    let step = |z: &[f64], extra: Option<&[f64]>| {
        let mut f = c0.mul_vec(z);
        for i in 0..f.len() {
            f[i] -= mu[i] + extra.map_or(0.0, |e| e[i]);
        }
        let mut rhs = x_minus.mul_vec(z);
        for i in 0..rhs.len() {
            rhs[i] -= 2.0 * k * f[i];
        }
        dense_solve(&x_plus, &rhs)
    };
    let y2 = step(&y1, None);
    let yh2 = step(&yh1, Some(&lr));
    max_diff(&sim.state().y_curr, &y2).max(max_diff(&sim.state().yhat_curr, &yh2))
}

fn property_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let proj = projection_idempotence(&mut rng);
    let lin = memory_linearity(&mut rng);
    let rec = recurrence_equivalence(&mut rng);
    let det = rerun_bytes_identical();
    let ghost = ghost_step_error();
    let ok = proj <= 1e-12 && lin <= 1e-12 && rec <= 1e-12 && det && ghost <= 1e-12;
    (
        ok,
        format!(
            "idempotence {proj:.1e}, linearity {lin:.1e}, recurrence {rec:.1e}, identical reruns {det}, ghost step {ghost:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("quadrature oracle", quadrature_oracle),
        ("kernel positivity", kernel_positivity),
        ("free instability", free_instability),
        ("insufficient devices at ell 2", insufficient_l2),
        ("stabilization at ell 4", stabilization_l4),
        ("rate saturation at ell 6", saturation_l6),
        ("weakly singular decrease", weakly_singular),
        ("manufactured convergence", manufactured_convergence),
        ("static output feedback", static_output),
        ("refinement robustness", refinement_robustness),
        ("property suite", property_suite),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
