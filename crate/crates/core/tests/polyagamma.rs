use netglm_core::polyagamma::{sample_pg, sample_pg1};
use netglm_core::spikes::{log_sigmoid, CountModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample critical value at level 0.001.
fn ks_critical(n: usize, m: usize) -> f64 {
    let c = (-(0.001f64 / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

#[test]
fn summed_shapes_match_direct_draws() {
    let n = 100_000;
    let crit = ks_critical(n, n);
    for (case, &(b1, b2, c)) in [(1.0, 2.0, 1.5), (0.7, 1.8, -0.4), (3.0, 4.0, 0.0)].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case as u64);
        let summed: Vec<f64> =
            (0..n).map(|_| sample_pg(b1, c, &mut rng).unwrap() + sample_pg(b2, c, &mut rng).unwrap()).collect();
        let direct: Vec<f64> = (0..n).map(|_| sample_pg(b1 + b2, c, &mut rng).unwrap()).collect();
        let d = ks_statistic(summed, direct);
        assert!(d < crit, "b = {b1} + {b2}, c = {c}: D = {d} exceeds {crit}");
    }
}

#[test]
fn augmentation_integral_reproduces_bernoulli_likelihood() {
    // 2^{-b} e^{kappa psi} E[e^{-omega psi^2 / 2}], omega ~ PG(1, 0), equals sigma(psi)^s sigma(-psi)^{1-s}.
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let omega: Vec<f64> = (0..n).map(|_| sample_pg1(0.0, &mut rng)).collect();
    let model = CountModel::bernoulli();
    for psi in [-2.0, 0.0, 2.0] {
        let tilt = omega.iter().map(|w| (-w * psi * psi / 2.0).exp()).sum::<f64>() / n as f64;
        for s in [0u32, 1] {
            let kappa = model.kappa(s);
            let estimate = 0.5 * (kappa * psi).exp() * tilt;
            let exact = if s == 1 { log_sigmoid(psi) } else { log_sigmoid(-psi) }.exp();
            let rel = (estimate - exact).abs() / exact;
            assert!(rel < 0.01, "psi = {psi}, s = {s}: {estimate} vs {exact}");
        }
    }
}
