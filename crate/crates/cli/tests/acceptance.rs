//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p bernmark-cli --test acceptance`.

use std::process::{Command, ExitCode};
use std::str::FromStr;
use std::time::{Duration, Instant};

use bernmark::laguerre::{k2_bound, markov3_bounds_exact, sklyarov_bounds};
use bernmark::oracle::{lp_markov_constant, step_value};
use bernmark::switching::{per_matrix_contraction_check, simulate, step_bound};
use bernmark::{laguerre_chebyshev, markov_constant, ExpSpectrum, MatrixFamily, RemezOptions};
use nalgebra::DMatrix;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE: [f64; 9] = [
    8.182, 25.157, 52.587, 90.585, 139.191, 198.420, 268.283, 348.788, 439.938,
];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, u64);

fn opts() -> RemezOptions {
    RemezOptions::default()
}

/// `a >= b` up to round-off between two computations of one quantity.
fn at_least(a: f64, b: f64) -> bool {
    a >= b - 1e-12 * b.abs()
}

/// Values in `(0, 1]`.
fn unit_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 1.0 - rng.random::<f64>()).collect()
}

fn spectrum(values: &[f64]) -> Result<ExpSpectrum, String> {
    ExpSpectrum::from_values(values).map_err(|e| format!("{values:?}: {e}"))
}

fn m(h: &ExpSpectrum, ell: usize) -> Result<f64, String> {
    markov_constant(h, ell, &opts())
        .map(|c| c.value)
        .map_err(|e| format!("m_{ell}({:?}): {e}", h.expanded()))
}

fn table_reproduction() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_bernmark"))
        .args(["table", "--ell", "2", "--n-max", "10"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let rows: Vec<&str> = text.lines().skip(1).collect();
    if rows.len() != TABLE.len() {
        return Err(format!("{} rows", rows.len()));
    }
    for (row, want) in rows.iter().zip(TABLE) {
        let cols: Vec<&str> = row.split(',').collect();
        let n: i64 = cols[0].parse().map_err(|_| format!("bad row {row}"))?;
        let value: f64 = cols[1]
            .parse()
            .map_err(|_| format!("row n = {n} has no value: {row}"))?;
        worst = worst.max((value - want).abs());
        if (value - want).abs() > 5e-3 {
            return Err(format!("n = {n}: {value} vs {want}"));
        }
        let bound = BigRational::from_str(cols[3]).map_err(|_| format!("bad bound {row}"))?;
        let exact = BigRational::new((16 * n * n - 24 * n + 11).into(), 3.into());
        if bound != exact {
            return Err(format!("n = {n}: bound {bound} vs {exact}"));
        }
    }
    Ok(format!("9 values, max deviation {worst:.1e}; bounds exact"))
}

fn sklyarov_bracket() -> Outcome {
    let mut checked = 0;
    for n in 2..=10 {
        let lc = laguerre_chebyshev(n, &opts()).map_err(|e| format!("n = {n}: {e}"))?;
        for ell in 1..=4.min(n - 1) {
            let (lo, hi) = sklyarov_bounds(ell, n).map_err(|e| e.to_string())?;
            let d = lc.r_derivative_at_zero(ell).abs();
            if !(lo <= d && d <= hi) {
                return Err(format!("n = {n}, ell = {ell}: {lo} <= {d} <= {hi} fails"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (n, ell) pairs"))
}

fn closed_form_identity() -> Outcome {
    for n in 2..=50 {
        let (_, upper) = markov3_bounds_exact(2, n).map_err(|e| e.to_string())?;
        let k2 = k2_bound(n).map_err(|e| e.to_string())?;
        if upper != k2 {
            return Err(format!("n = {n}: {upper} vs {k2}"));
        }
    }
    Ok("n = 2..50 exact".into())
}

fn comparison_theorem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let ell = rng.random_range(1..=2);
        let mut lower = unit_values(&mut rng, n);
        lower.sort_by(f64::total_cmp);
        let upper: Vec<f64> = lower
            .iter()
            .map(|&v| v + rng.random::<f64>() * (1.0 - v))
            .collect();
        let a = m(&spectrum(&lower)?, ell)?;
        let b = m(&spectrum(&upper)?, ell)?;
        worst = worst.min(b - a);
        if b < a - 1e-6 {
            return Err(format!("{lower:?} -> {a} but {upper:?} -> {b}"));
        }
    }
    Ok(format!("200 pairs, min m(h') - m(h) = {worst:.2e}"))
}

fn vertex_maximality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut unit = std::collections::HashMap::new();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let ell = rng.random_range(1..=2);
        let h = unit_values(&mut rng, n);
        let a = m(&spectrum(&h)?, ell)?;
        let e = match unit.get(&(n, ell)) {
            Some(&e) => e,
            None => {
                let e = m(
                    &ExpSpectrum::confluent(1.0, n).map_err(|e| e.to_string())?,
                    ell,
                )?;
                unit.insert((n, ell), e);
                e
            }
        };
        worst = worst.max(a - e);
        if a > e + 1e-6 {
            return Err(format!("{h:?}: m_{ell} = {a} > {e}"));
        }
    }
    Ok(format!("200 spectra, max m(h) - m(e) = {worst:.2e}"))
}

fn oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = rng.random_range(1..=4);
        let ell = 1 + i % 2;
        let h = spectrum(&unit_values(&mut rng, n))?;
        let exact = m(&h, ell)?;
        for level in 0..=2 {
            let lp = lp_markov_constant(&h, ell, level).map_err(|e| e.to_string())?;
            if !at_least(lp, exact) {
                return Err(format!(
                    "{:?} level {level}: LP {lp} < Remez {exact}",
                    h.expanded()
                ));
            }
            if level == 2 {
                let rel = (lp - exact).abs() / exact;
                worst = worst.max(rel);
                if rel > 1e-3 {
                    return Err(format!("{:?}: LP {lp} vs Remez {exact}", h.expanded()));
                }
            }
        }
    }
    Ok(format!("20 spectra, max relative gap {worst:.2e}"))
}

fn homogeneity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(1..=3);
        let h = spectrum(&unit_values(&mut rng, n))?;
        let eps = rng.random_range(0.01..=0.3);
        let base = step_value(&h, eps, 2, None)
            .map_err(|e| e.to_string())?
            .value;
        for lambda in [0.5, 2.0] {
            let scaled = h.scaled(lambda).map_err(|e| e.to_string())?;
            let s = step_value(&scaled, lambda * eps, 2, None)
                .map_err(|e| e.to_string())?
                .value;
            let rel = (s * lambda - base).abs() / base;
            worst = worst.max(rel);
            if rel > 1e-3 {
                return Err(format!(
                    "{:?}, eps {eps}, lambda {lambda}: {s} vs {base}",
                    h.expanded()
                ));
            }
        }
    }
    Ok(format!(
        "10 spectra x 2 scalings, max relative deviation {worst:.1e}"
    ))
}

fn step_lower_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let h = spectrum(&unit_values(&mut rng, n))?;
        let eps = rng.random_range(0.01..=0.3);
        let s = step_value(&h, eps, 2, None)
            .map_err(|e| e.to_string())?
            .value;
        let bound = 2.0 * eps / (m(&h, 2)? + 2.0 * eps * eps);
        worst = worst.min(s / bound);
        if s <= bound {
            return Err(format!("{:?}, eps {eps}: {s} <= {bound}", h.expanded()));
        }
    }
    Ok(format!("50 cases, min s / bound = {worst:.3}"))
}

/// 20 families with real spectra in `[-3, -0.15]`: ten diagonal, five
/// upper triangular, five similar to diagonal.
fn family_corpus(rng: &mut ChaCha8Rng) -> Vec<(MatrixFamily, bool)> {
    let mut corpus = Vec::new();
    let eigen = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| -rng.random_range(0.15..=3.0)).collect()
    };
    for kind in 0..20 {
        let n = 1 + kind % 5;
        let count = rng.random_range(1..=3);
        let matrices: Vec<DMatrix<f64>> = (0..count)
            .map(|_| {
                let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigen(rng, n)));
                match kind / 10 {
                    0 => d,
                    _ if kind % 2 == 0 => {
                        let mut a = d;
                        for r in 0..n {
                            for c in r + 1..n {
                                a[(r, c)] = rng.random_range(-1.0..1.0);
                            }
                        }
                        a
                    }
                    _ => {
                        let s = DMatrix::from_fn(n, n, |r, c| {
                            (if r == c { 2.0 } else { 0.0 }) + rng.random_range(-0.5..0.5)
                        });
                        let inv = s.clone().try_inverse().expect("diagonally dominant");
                        &s * d * inv
                    }
                }
            })
            .collect();
        corpus.push((
            MatrixFamily::new(matrices).expect("valid family"),
            kind < 10,
        ));
    }
    corpus
}

fn step_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eps = 0.1;
    let mut trials = 0;
    for (i, (family, diagonal)) in family_corpus(&mut rng).iter().enumerate() {
        let est = step_bound(family, eps, &opts()).map_err(|e| format!("family {i}: {e}"))?;
        let check = per_matrix_contraction_check(family, est.tau_individual);
        if !check.all_contracting {
            return Err(format!(
                "family {i}: radii {:?} at tau {}",
                check.radii, est.tau_individual
            ));
        }
        if *diagonal {
            for seed in 0..10 {
                let r = simulate(family, est.tau_individual, 10_000, 100, seed)
                    .map_err(|e| e.to_string())?;
                trials += r.trials;
                if r.divergent > 0 || r.decayed != r.trials {
                    return Err(format!(
                        "family {i}, seed {seed}: {} divergent, {} of {} decayed",
                        r.divergent, r.decayed, r.trials
                    ));
                }
            }
        }
    }
    Ok(format!(
        "20 families contract; {trials} diagonal-family trials decay"
    ))
}

fn trivial_exactness() -> Outcome {
    for alpha in [0.5, 1.0, 2.0] {
        for ell in 1..=3 {
            let v = m(&spectrum(&[alpha])?, ell)?;
            let want = alpha.powi(ell as i32);
            if (v - want).abs() > 1e-10 * want {
                return Err(format!("alpha {alpha}, ell {ell}: {v} vs {want}"));
            }
        }
    }
    Ok("9 cases".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("uniform constant table", table_reproduction, 30),
        ("derivative bracket", sklyarov_bracket, 60),
        ("closed-form identity", closed_form_identity, 5),
        ("comparison theorem", comparison_theorem, 300),
        ("vertex maximality", vertex_maximality, 300),
        ("oracle agreement", oracle_agreement, 300),
        ("homogeneity", homogeneity, 120),
        ("step lower bound", step_lower_bound, 300),
        ("step soundness", step_soundness, 300),
        ("trivial exactness", trivial_exactness, 5),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(*budget) => {
                Err(format!("{detail}; exceeded {budget} s budget"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{:.2?}]", i + 1, elapsed),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{:.2?}]", i + 1, elapsed);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
