use memstab_core::memory::{
    gamma_coeffs, interval_integral_0, interval_integral_1, kernel_positivity_form, memory_term,
    ExponentialAccumulator, HistoryBuffer, KernelSpec, MemoryWeights, Retention,
};
use memstab_core::oracle::tanh_sinh;
use memstab_core::sparse::CsrMatrix;
use proptest::prelude::*;

/// Keeps `exp(-gamma k m)` well inside the normal range of `f64`.
fn representable(kern: &KernelSpec, k: f64, m: usize) -> bool {
    kern.family() == memstab_core::KernelFamily::Riesz || kern.gamma() * k * (m as f64 + 1.0) < 600.0
}

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.05f64..5.0).prop_map(|g| KernelSpec::exponential(g).unwrap()),
        (0.05f64..0.95).prop_map(|g| KernelSpec::riesz(g).unwrap()),
    ]
}

/// Quadrature of `∫_0^k s^p K(m k - s) ds` with `m k - s` measured from the right end.
fn quad(kernel: &KernelSpec, k: f64, m: usize, p: i32) -> f64 {
    let offset = (m as f64 - 1.0) * k;
    tanh_sinh(|s, _, dr| s.powi(p) * kernel.eval(offset + dr), 0.0, k, 1e-15)
}

#[test]
fn spec_reference_values() {
    let e = KernelSpec::exponential(1.0).unwrap();
    assert!((interval_integral_0(&e, 0.5, 1).unwrap() - 0.3934693402873666).abs() < 1e-15);
    assert!((interval_integral_1(&e, 1.0, 1).unwrap() - 0.36787944117144233).abs() < 1e-15);
    let r = KernelSpec::riesz(0.5).unwrap();
    assert!((interval_integral_0(&r, 0.25, 1).unwrap() - 1.0).abs() < 1e-15);
    assert!((interval_integral_1(&r, 1.0, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn exponential_decays_monotonically_in_lag() {
    let e = KernelSpec::exponential(2.0).unwrap();
    let mut prev = f64::INFINITY;
    for m in 1..200 {
        let v = interval_integral_0(&e, 0.1, m).unwrap();
        assert!(v < prev && v > 0.0);
        prev = v;
    }
    assert!(prev < 1e-15);
}

#[test]
fn riesz_near_one_is_constant_kernel() {
    let r = KernelSpec::riesz(1.0 - 1e-9).unwrap();
    for m in [1, 2, 10, 100] {
        let (g1, _) = gamma_coeffs(&r, 0.3, m).unwrap();
        assert!((g1 - 0.3).abs() < 1e-7, "{m} {g1}");
    }
}

#[test]
fn memory_term_three_point_hand_sum() {
    let kern = KernelSpec::exponential(1.0).unwrap();
    let k = 0.5f64;
    let y = [1.0, 2.0, 4.0];
    let mut h = HistoryBuffer::new(k, 1, Retention::Full);
    for v in y {
        h.push(&[v]).unwrap();
    }
    // Γ1(m) = e^{-km}(e^k - 1), Γ2(m) = e^{-km}(e^k - (e^k - 1)/k), γ = 1.
    let g1 = |m: f64| (-k * m).exp() * (k.exp() - 1.0);
    let g2 = |m: f64| (-k * m).exp() * (k.exp() - (k.exp() - 1.0) / k);
    let expect = g1(2.0) * y[0] + g2(2.0) * (y[1] - y[0]) + g1(1.0) * y[1] + g2(1.0) * (y[2] - y[1]);
    let s = CsrMatrix::identity(1);
    let got = memory_term(&s, &h, &kern, 3).unwrap()[0];
    assert!((got - expect).abs() < 1e-14 * expect.abs(), "{got} {expect}");
}

#[test]
fn constant_history_integrates_kernel() {
    for kern in [KernelSpec::exponential(1.7).unwrap(), KernelSpec::riesz(0.4).unwrap()] {
        let k = 0.05;
        let s = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 3.0)]);
        let v = [0.7, -1.3];
        let mut h = HistoryBuffer::new(k, 2, Retention::Full);
        for _ in 0..40 {
            h.push(&v).unwrap();
        }
        let j = 40;
        // The intervals [t_i, t_{i+1}], i < j, cover [0, t_j]: the weights sum to ∫_0^{t_j} K.
        let mass = kern.primitive(k * (j as f64 - 1.0));
        let sv = s.mul_vec(&v);
        let got = memory_term(&s, &h, &kern, j).unwrap();
        for i in 0..2 {
            assert!((got[i] - sv[i] * mass).abs() < 1e-12 * sv[i].abs().max(1.0));
        }
    }
}

#[test]
fn lag_indexed_cache_agrees_with_direct_evaluation() {
    let kern = KernelSpec::riesz(0.5).unwrap();
    let mut w = MemoryWeights::new(kern, 0.01).unwrap();
    w.ensure(50);
    for m in [1, 7, 50] {
        assert_eq!(w.get(m), gamma_coeffs(&kern, 0.01, m).unwrap());
    }
}

#[test]
fn positivity_form_of_zero_and_constant_kernel() {
    let kern = KernelSpec::exponential(0.5).unwrap();
    assert_eq!(kernel_positivity_form(&kern, 0.1, &[0.0; 10]).unwrap(), 0.0);
    // γ → 1 Riesz kernel is the constant 1: value = (k Σ f)^2 / 2.
    let near_const = KernelSpec::riesz(1.0 - 1e-10).unwrap();
    let f = [1.0, -2.0, 0.5, 3.0, -1.0];
    let k = 0.2;
    let sum: f64 = f.iter().sum();
    let v = kernel_positivity_form(&near_const, k, &f).unwrap();
    assert!((v - 0.5 * (k * sum).powi(2)).abs() < 1e-8, "{v}");
}

#[test]
fn positivity_form_matches_continuous_double_integral() {
    for kern in [KernelSpec::exponential(1.3).unwrap(), KernelSpec::riesz(0.35).unwrap()] {
        let k = 0.3;
        let f = [1.0, -0.5, 2.0, -1.5];
        // ∫_0^T f(τ) ∫_0^τ K(τ - r) f(r) dr dτ with piecewise-constant f, cell by cell.
        let mut oracle = 0.0;
        for (j, &fj) in f.iter().enumerate() {
            let tj = j as f64 * k;
            oracle += fj
                * tanh_sinh(
                    |tau, _, _| {
                        let mut inner = 0.0;
                        for (i, &fi) in f.iter().enumerate().take(j + 1) {
                            let a = i as f64 * k;
                            let b = if i == j { tau } else { a + k };
                            inner += fi * tanh_sinh(|_, _, dr| kern.eval(tau - b + dr), a, b, 1e-14);
                        }
                        inner
                    },
                    tj,
                    tj + k,
                    1e-13,
                );
        }
        let got = kernel_positivity_form(&kern, k, &f).unwrap();
        assert!((got - oracle).abs() < 1e-9 * oracle.abs(), "{got} {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn interval_integrals_match_quadrature(kern in kernel_strategy(), k in 1e-3f64..2.0, m in 1usize..400) {
        prop_assume!(representable(&kern, k, m));
        let i0 = interval_integral_0(&kern, k, m).unwrap();
        let i1 = interval_integral_1(&kern, k, m).unwrap();
        let tol = if m == 1 && kern.family() == memstab_core::KernelFamily::Riesz { 1e-8 } else { 1e-10 };
        let q0 = quad(&kern, k, m, 0);
        let q1 = quad(&kern, k, m, 1);
        prop_assert!(((i0 - q0) / q0).abs() < tol, "I0 {} vs {}", i0, q0);
        prop_assert!(((i1 - q1) / q1).abs() < tol, "I1 {} vs {}", i1, q1);
        prop_assert!(i1 <= k * i0 * (1.0 + 1e-14));
    }

    #[test]
    fn weights_positive_and_bounded(kern in kernel_strategy(), k in 1e-4f64..1.0, m in 1usize..5000) {
        prop_assume!(representable(&kern, k, m));
        let (g1, g2) = gamma_coeffs(&kern, k, m).unwrap();
        prop_assert!(g1 > 0.0 && g2 > 0.0);
        prop_assert!(g2 <= g1 * (1.0 + 1e-14));
        prop_assert_eq!(g1, interval_integral_0(&kern, k, m).unwrap());
    }

    #[test]
    fn exponential_weights_are_geometric(g in 0.05f64..5.0, k in 1e-4f64..0.5, m in 1usize..1000) {
        let kern = KernelSpec::exponential(g).unwrap();
        prop_assume!(representable(&kern, k, m));
        let (a1, a2) = gamma_coeffs(&kern, k, m).unwrap();
        let (b1, b2) = gamma_coeffs(&kern, k, m + 1).unwrap();
        let r = (-g * k).exp();
        prop_assert!((b1 - r * a1).abs() <= 1e-12 * b1);
        prop_assert!((b2 - r * a2).abs() <= 1e-12 * b2);
    }

    #[test]
    fn positivity_form_nonnegative(
        kern in kernel_strategy(),
        k in 1e-3f64..1.0,
        f in prop::collection::vec(-10.0f64..10.0, 2..=64),
    ) {
        let v = kernel_positivity_form(&kern, k, &f).unwrap();
        let norm2: f64 = f.iter().map(|x| x * x).sum();
        prop_assert!(v >= -1e-10 * norm2, "{}", v);
    }

    #[test]
    fn memory_term_is_linear(
        kern in kernel_strategy(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        ys in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 12),
        zs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 12),
    ) {
        let s = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)]);
        let k = 0.07;
        let mut hy = HistoryBuffer::new(k, 3, Retention::Full);
        let mut hz = HistoryBuffer::new(k, 3, Retention::Full);
        let mut hc = HistoryBuffer::new(k, 3, Retention::Full);
        for (y, z) in ys.iter().zip(&zs) {
            hy.push(y).unwrap();
            hz.push(z).unwrap();
            let c: Vec<f64> = y.iter().zip(z).map(|(a, b)| alpha * a + beta * b).collect();
            hc.push(&c).unwrap();
        }
        let my = memory_term(&s, &hy, &kern, 12).unwrap();
        let mz = memory_term(&s, &hz, &kern, 12).unwrap();
        let mc = memory_term(&s, &hc, &kern, 12).unwrap();
        let scale = my.iter().chain(&mz).fold(1.0f64, |a, b| a.max(b.abs()));
        for i in 0..3 {
            prop_assert!((mc[i] - alpha * my[i] - beta * mz[i]).abs() <= 1e-12 * scale * (alpha.abs() + beta.abs()).max(1.0));
        }
    }

    #[test]
    fn recurrence_matches_history_sum(
        g in 0.1f64..4.0,
        ys in prop::collection::vec(prop::collection::vec(0.5f64..2.0, 2), 2..80),
    ) {
        let kern = KernelSpec::exponential(g).unwrap();
        let k = 0.02;
        let mut h = HistoryBuffer::new(k, 2, Retention::Full);
        let mut acc = ExponentialAccumulator::new(&kern, k, 2).unwrap();
        let mut w = MemoryWeights::new(kern, k).unwrap();
        let mut sum = vec![0.0; 2];
        h.push(&ys[0]).unwrap();
        for j in 1..ys.len() {
            h.push(&ys[j]).unwrap();
            acc.advance(&ys[j - 1], &ys[j]);
            w.weighted_history(&h, j + 1, &mut sum).unwrap();
            for i in 0..2 {
                let a = acc.weighted_sum()[i];
                prop_assert!((a - sum[i]).abs() <= 1e-12 * sum[i].abs(), "{} {}", a, sum[i]);
            }
        }
    }
}
