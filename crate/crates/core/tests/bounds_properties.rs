mod common;

use cvlasso::bounds::{bound_report, gaussian_square_mgf, risk_constants};
use cvlasso::simlab::MeanSe;
use cvlasso::BoundInputs;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::Cauchy;

fn inputs(n: usize) -> BoundInputs {
    BoundInputs {
        n,
        p: 50,
        sigma: 1.3,
        l_star: 2.0,
        delta: 0.05,
        m_stat: 3.0,
        l1: 4.0,
        l2: 4.5,
    }
}

#[test]
fn r_decreases_in_n() {
    let mut prev = f64::INFINITY;
    for i in 0..=40 {
        let n = 10f64.powf(1.0 + i as f64 / 10.0).round() as usize;
        let r = bound_report(&inputs(n)).unwrap().r;
        assert!(r >= 0.0 && r < prev, "n = {n}: {r} !< {prev}");
        prev = r;
    }
}

fn unit_noise(n: usize, l: f64, m: f64) -> f64 {
    let b = BoundInputs {
        n,
        l_star: l,
        delta: 0.0,
        m_stat: m,
        sigma: 1.0,
        ..inputs(n)
    };
    risk_constants(&b).unwrap().e_n
}

#[test]
fn e_n_is_negligible_for_moderate_n() {
    // 30-digit evaluations of the same expression
    let at_200 = [
        (0.5, 0.25, 2.278536918714664e-6),
        (2.0, 2.0, 5.502434856816716e-6),
    ];
    for (l, m, expected) in at_200 {
        let e_n = unit_noise(200, l, m);
        assert!(
            (e_n - expected).abs() <= 1e-9 * expected,
            "L={l} M={m}: {e_n}"
        );
    }
    for n in [222, 500, 2_000, 100_000] {
        for l in [0.5, 1.0, 2.0] {
            for m in [0.25, 1.0, 2.0] {
                let e_n = unit_noise(n, l, m);
                assert!((0.0..1e-6).contains(&e_n), "n={n} L={l} M={m}: {e_n}");
            }
        }
    }
}

/// Importance sampling with a Cauchy proposal keeps the estimator's
/// variance finite for every `a > 1`.
fn mgf_monte_carlo(mu: f64, sigma: f64, a: f64, seed: u64) -> MeanSe {
    let mut r = common::rng(seed);
    let scale = 2.0 * sigma;
    let proposal = Cauchy::new(mu, scale).unwrap();
    let weights: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let z: f64 = r.sample(proposal);
            let u = (z - mu) / sigma;
            let log_target = -0.5 * u * u - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
            let log_q = -(std::f64::consts::PI * scale * (1.0 + ((z - mu) / scale).powi(2))).ln();
            (z * z / (2.0 * a * sigma * sigma) + log_target - log_q).exp()
        })
        .collect();
    MeanSe::of(&weights)
}

#[test]
fn square_mgf_agrees_with_monte_carlo() {
    let mut seed = 0;
    for a in [1.5, 2.0, 4.0] {
        for mu in [0.0, 1.0] {
            for sigma in [0.5, 1.0] {
                seed += 1;
                let mc = mgf_monte_carlo(mu, sigma, a, seed);
                let exact = gaussian_square_mgf(mu, sigma, a).unwrap();
                assert!(
                    (mc.mean - exact).abs() <= 3.0 * mc.se,
                    "mu={mu} sigma={sigma} a={a}: {exact} vs {} +- {}",
                    mc.mean,
                    mc.se
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn report_composes_exactly(
        n in 1usize..100_000,
        p in 1usize..10_000,
        sigma in 0.01f64..10.0,
        l_star in 0.0f64..10.0,
        m in 0.0f64..20.0,
        l1 in 0.0f64..15.0,
        l2 in 0.0f64..15.0,
    ) {
        let b = BoundInputs { n, p, sigma, l_star, delta: 0.05, m_stat: m, l1, l2 };
        let rep = bound_report(&b).unwrap();
        let nf = n as f64;
        let r = rep.c1 * (l1.sqrt() + l2.sqrt()) / nf.sqrt()
            + rep.c2 * ((2.0 * p as f64).ln() / nf).sqrt()
            + rep.e_n;
        prop_assert_eq!(rep.r, r);
        prop_assert!(rep.r >= 0.0 && rep.sigma_bound >= rep.r);
        prop_assert_eq!(rep.big_l, l_star + 0.05);
    }

    #[test]
    fn r_grows_with_every_input(
        base in 0.1f64..3.0,
        bump in 0.01f64..1.0,
    ) {
        let b = BoundInputs { n: 300, p: 20, sigma: base, l_star: base, delta: 0.05, m_stat: base, l1: base, l2: base };
        let r0 = bound_report(&b).unwrap().r;
        for grown in [
            BoundInputs { sigma: base + bump, ..b },
            BoundInputs { l_star: base + bump, ..b },
            BoundInputs { m_stat: base + bump, ..b },
            BoundInputs { l1: base + bump, ..b },
            BoundInputs { p: 40, ..b },
        ] {
            prop_assert!(bound_report(&grown).unwrap().r > r0);
        }
    }
}
