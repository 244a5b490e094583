use bernmark::remez::verify_alternance;
use bernmark::{chebyshev_polynomial, markov_constant, ExpSpectrum, QuasiPolynomial, RemezOptions};
use proptest::prelude::*;

fn spectrum_values(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..=1.0, 1..=max_n)
}

fn poly() -> impl Strategy<Value = QuasiPolynomial> {
    prop::collection::vec((0.1f64..3.0, 1usize..=3), 1..=3).prop_flat_map(|entries| {
        let h = ExpSpectrum::new(entries).unwrap();
        let n = h.degree();
        prop::collection::vec(-5.0f64..5.0, n)
            .prop_map(move |c| QuasiPolynomial::new(h.clone(), c).unwrap())
    })
}

fn sign_changes(p: &QuasiPolynomial, hi: f64, points: usize) -> usize {
    let mut last = 0.0;
    let mut changes = 0;
    for i in 0..=points {
        let v = p.evaluate(hi * i as f64 / points as f64);
        if v.abs() < 1e-9 {
            continue;
        }
        if last != 0.0 && v.signum() != last {
            changes += 1;
        }
        last = v.signum();
    }
    changes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_matches_difference_quotient(p in poly(), t in 0.1f64..5.0) {
        let d = p.derivative(1);
        prop_assert_eq!(d.spectrum(), p.spectrum());
        let step = 1e-5;
        let fd = (p.evaluate(t + step) - p.evaluate(t - step)) / (2.0 * step);
        let scale = 1.0 + p.abs_coeff_sum() * 10.0;
        prop_assert!((d.evaluate(t) - fd).abs() < 1e-6 * scale, "{} vs {}", d.evaluate(t), fd);
        prop_assert!((d.evaluate(0.0) - p.derivative_at_zero(1)).abs() < 1e-9 * scale);
    }

    #[test]
    fn zero_count_below_degree(p in poly()) {
        let n = p.spectrum().degree();
        prop_assert!(sign_changes(&p, 60.0, 20_000) < n);
    }

    #[test]
    fn rescale_is_time_change(p in poly(), alpha in 0.2f64..5.0, t in 0.0f64..10.0) {
        let q = p.rescale(alpha).unwrap();
        let (a, b) = (q.evaluate(t), p.evaluate(t / alpha));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs() + p.abs_coeff_sum()));
    }

    #[test]
    fn certificates_verify(h in spectrum_values(4)) {
        let spectrum = ExpSpectrum::from_values(&h).unwrap();
        let cert = chebyshev_polynomial(&spectrum, &RemezOptions::default()).unwrap();
        let report = verify_alternance(&cert, 1e-8);
        prop_assert!(report.passed(), "{:?}", report);
    }

    #[test]
    fn scaling_law(h in spectrum_values(3), alpha in 0.25f64..4.0, ell in 1usize..=3) {
        let opts = RemezOptions::default();
        let spectrum = ExpSpectrum::from_values(&h).unwrap();
        let base = markov_constant(&spectrum, ell, &opts).unwrap().value;
        let scaled = markov_constant(&spectrum.scaled(alpha).unwrap(), ell, &opts).unwrap().value;
        let expected = alpha.powi(ell as i32) * base;
        prop_assert!((scaled - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn larger_exponents_give_larger_constants(
        h in spectrum_values(4),
        bumps in prop::collection::vec(0.0f64..0.5, 4),
        ell in 1usize..=2,
    ) {
        let opts = RemezOptions::default();
        let mut lower = h.clone();
        lower.sort_by(f64::total_cmp);
        let upper: Vec<f64> = lower.iter().zip(&bumps).map(|(v, b)| (v + b).min(1.0)).collect();
        let a = markov_constant(&ExpSpectrum::from_values(&lower).unwrap(), ell, &opts).unwrap().value;
        let b = markov_constant(&ExpSpectrum::from_values(&upper).unwrap(), ell, &opts).unwrap().value;
        prop_assert!(b >= a - 1e-6, "{lower:?} -> {a}, {upper:?} -> {b}");
    }

    #[test]
    fn unit_confluent_is_maximal(h in spectrum_values(4), ell in 1usize..=2) {
        let opts = RemezOptions::default();
        let n = h.len();
        let a = markov_constant(&ExpSpectrum::from_values(&h).unwrap(), ell, &opts).unwrap().value;
        let e = markov_constant(&ExpSpectrum::confluent(1.0, n).unwrap(), ell, &opts).unwrap().value;
        prop_assert!(a <= e + 1e-6, "{h:?}: {a} > {e}");
    }
}
