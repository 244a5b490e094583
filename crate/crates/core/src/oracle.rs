//! Brute-force cross-checks: a dense-grid LP relaxation of the sharp
//! constant, and a bisection-over-LP solver for the step problem
//! `min (1 - p(0)) / (p'(0) - eps p(0))` over `||p|| <= 1`.
//!
//! Both replace the uniform constraint on the half-line by constraints at
//! finitely many grid points, so the constant comes out as an upper
//! estimate and the step value as a lower one. All LPs are solved on the
//! spectrum normalized to `h_max = 1` and rescaled afterwards.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, Variable};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quasipoly::{ExpSpectrum, QuasiPolynomial};

pub const MAX_LEVEL: usize = 2;
pub const MAX_DEGREE: usize = 8;

const BASE_POINTS: usize = 128;
/// Grid offset in units of `1 / h_max`; spacing near zero is about
/// `GRID_OFFSET * ds`, relative spacing far out about `ds`.
const GRID_OFFSET: f64 = 1e-3;
const VIOLATION_TOL: f64 = 1e-9;
const MAX_CUT_ROUNDS: usize = 200;
const FEASIBILITY_SLACK: f64 = 1e-10;

/// The semi-infinite constraint `|p(t)| <= 1, t >= 0` sampled at `grid`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRelaxation {
    pub spectrum: ExpSpectrum,
    pub grid: Vec<f64>,
    pub level: usize,
}

impl GridRelaxation {
    /// Level `k` has `2^k * 128 * n` intervals on
    /// `t = t0 (e^s - 1)`, `s` uniform, plus the point 0. Levels are nested.
    pub fn new(spectrum: &ExpSpectrum, level: usize) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(invalid(format!("grid level {level} exceeds {MAX_LEVEL}")));
        }
        let n = spectrum.degree();
        let intervals = (1usize << level) * BASE_POINTS * n;
        let t0 = GRID_OFFSET / spectrum.h_max();
        let span = (1.0 + Self::horizon(spectrum) / t0).ln();
        let grid = (0..=intervals)
            .map(|i| t0 * (span * i as f64 / intervals as f64).exp_m1())
            .collect();
        Ok(GridRelaxation {
            spectrum: spectrum.clone(),
            grid,
            level,
        })
    }

    /// Right end of the grid, well past the last alternance point.
    pub fn horizon(spectrum: &ExpSpectrum) -> f64 {
        (40.0 + 8.0 * spectrum.degree() as f64) / spectrum.h_min()
    }
}

fn check_scale(h: &ExpSpectrum, level: usize) -> Result<()> {
    if h.degree() > MAX_DEGREE {
        return Err(invalid(format!(
            "oracle supports at most {MAX_DEGREE} basis functions, got {}",
            h.degree()
        )));
    }
    if level > MAX_LEVEL {
        return Err(invalid(format!("grid level {level} exceeds {MAX_LEVEL}")));
    }
    Ok(())
}

/// Sampled basis with every column divided by its maximum on the half-line.
struct GridLp {
    n: usize,
    rows: Vec<f64>,
    scale: Vec<f64>,
}

impl GridLp {
    fn new(relaxation: &GridRelaxation) -> Self {
        let spectrum = &relaxation.spectrum;
        let n = spectrum.degree();
        let scale: Vec<f64> = spectrum
            .entries()
            .iter()
            .flat_map(|e| {
                (0..e.m).map(move |j| {
                    if j == 0 {
                        1.0
                    } else {
                        let j = j as f64;
                        (j / (e.h * std::f64::consts::E)).powf(j)
                    }
                })
            })
            .collect();
        let mut rows = vec![0.0; relaxation.grid.len() * n];
        for (row, &t) in rows.chunks_mut(n).zip(&relaxation.grid) {
            spectrum.basis_values(t, row);
            for (v, s) in row.iter_mut().zip(&scale) {
                *v /= s;
            }
        }
        GridLp { n, rows, scale }
    }

    fn points(&self) -> usize {
        self.rows.len() / self.n
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    /// Scaled representation of a functional given on raw coefficients.
    fn scaled(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.scale).map(|(d, s)| d / s).collect()
    }

    fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    /// Maximizes `objective . y` subject to `|row_i . y| <= 1` and, when
    /// given, `floor.0 . y >= floor.1`. Point constraints enter lazily:
    /// start from a coarse subset and add the worst violator of every run
    /// of violated grid points until none is left.
    fn maximize(&self, objective: &[f64], floor: Option<(&[f64], f64)>) -> Result<(f64, Vec<f64>)> {
        let n = self.n;
        let points = self.points();
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<Variable> = objective
            .iter()
            .map(|&c| problem.add_var(c, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        let expr = |coeffs: &[f64]| {
            let mut e = LinearExpr::empty();
            for (&v, &c) in vars.iter().zip(coeffs) {
                e.add(v, c);
            }
            e
        };
        if let Some((g, lo)) = floor {
            problem.add_constraint(expr(g), ComparisonOp::Ge, lo);
        }
        let mut upper = vec![false; points];
        let mut lower = vec![false; points];
        let stride = (points / (8 * n)).max(1);
        for i in (0..points).step_by(stride).chain([points - 1]) {
            if !upper[i] {
                upper[i] = true;
                lower[i] = true;
                problem.add_constraint(expr(self.row(i)), ComparisonOp::Le, 1.0);
                problem.add_constraint(expr(self.row(i)), ComparisonOp::Ge, -1.0);
            }
        }
        let mut solution: Solution = problem.solve().map_err(lp_error)?;
        for _ in 0..MAX_CUT_ROUNDS {
            let y: Vec<f64> = vars.iter().map(|&v| *solution.var_value(v)).collect();
            let cuts = self.violations(&y, &upper, &lower);
            if cuts.is_empty() {
                return Ok((solution.objective(), y));
            }
            for (i, above) in cuts {
                let (op, rhs) = if above {
                    upper[i] = true;
                    (ComparisonOp::Le, 1.0)
                } else {
                    lower[i] = true;
                    (ComparisonOp::Ge, -1.0)
                };
                solution = solution
                    .add_constraint(expr(self.row(i)), op, rhs)
                    .map_err(lp_error)?;
            }
        }
        Err(Error::LinearProgram(format!(
            "constraint generation did not settle in {MAX_CUT_ROUNDS} rounds"
        )))
    }

    /// Worst violated point of each maximal run of violations not already
    /// constrained on that side; `true` marks `p > 1`.
    fn violations(&self, y: &[f64], upper: &[bool], lower: &[bool]) -> Vec<(usize, bool)> {
        let mut cuts = Vec::new();
        let mut run: Option<(usize, bool, f64)> = None;
        for i in 0..self.points() {
            let v: f64 = self.row(i).iter().zip(y).map(|(a, b)| a * b).sum();
            let above = v > 0.0;
            let excess = v.abs() - 1.0;
            let open = excess > VIOLATION_TOL && !(if above { upper[i] } else { lower[i] });
            match (&mut run, open) {
                (Some((best, side, worst)), true) if *side == above => {
                    if excess > *worst {
                        *best = i;
                        *worst = excess;
                    }
                }
                (_, true) => {
                    if let Some((best, side, _)) = run.take() {
                        cuts.push((best, side));
                    }
                    run = Some((i, above, excess));
                }
                (_, false) => {
                    if let Some((best, side, _)) = run.take() {
                        cuts.push((best, side));
                    }
                }
            }
        }
        if let Some((best, side, _)) = run {
            cuts.push((best, side));
        }
        cuts
    }
}

fn lp_error(e: minilp::Error) -> Error {
    match e {
        minilp::Error::Unbounded => Error::LinearProgram(
            "unbounded relaxation: the grid does not pin the coefficients".into(),
        ),
        minilp::Error::Infeasible => Error::LinearProgram("infeasible relaxation".into()),
    }
}

fn normalized(h: &ExpSpectrum) -> Result<(ExpSpectrum, f64)> {
    let a = h.h_max();
    Ok((h.scaled(1.0 / a)?, a))
}

/// Grid LP value `max { p^(ell)(0) : |p(t_i)| <= 1 }`, an upper estimate of
/// the sharp constant that decreases as `level` grows.
pub fn lp_markov_constant(h: &ExpSpectrum, ell: usize, level: usize) -> Result<f64> {
    check_scale(h, level)?;
    if ell == 0 {
        return Err(invalid("derivative order must be at least 1"));
    }
    let (hn, a) = normalized(h)?;
    let lp = GridLp::new(&GridRelaxation::new(&hn, level)?);
    let objective = lp.scaled(&hn.basis_derivatives_at_zero(ell));
    let (value, _) = lp.maximize(&objective, None)?;
    Ok(value * a.powi(ell as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepProblemValue {
    pub spectrum: ExpSpectrum,
    pub eps: f64,
    pub value: f64,
    pub witness: QuasiPolynomial,
    pub bisection_gap: f64,
    pub level: usize,
}

impl StepProblemValue {
    /// `(1 - p(0)) / (p'(0) - eps p(0))` for the witness.
    pub fn witness_objective(&self) -> f64 {
        let p0 = self.witness.evaluate(0.0);
        let d0 = self.witness.derivative_at_zero(1);
        (1.0 - p0) / (d0 - self.eps * p0)
    }
}

/// Lower estimate of `s(h, eps)` by bisection on the level `theta`:
/// `theta` is feasible when some `p` with `|p(t_i)| <= 1` and
/// `p'(0) - eps p(0) >= delta` has `1 - p(0) <= theta (p'(0) - eps p(0))`.
/// `tol_bisect` defaults to `1e-6 / eps`.
pub fn step_value(
    h: &ExpSpectrum,
    eps: f64,
    level: usize,
    tol_bisect: Option<f64>,
) -> Result<StepProblemValue> {
    check_scale(h, level)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    let tol = tol_bisect.unwrap_or(1e-6 / eps);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let (hn, a) = normalized(h)?;
    let en = eps / a;
    let tol = tol * a;
    let lp = GridLp::new(&GridRelaxation::new(&hn, level)?);

    let at_zero = lp.scaled(&hn.basis_derivatives_at_zero(0));
    let slope: Vec<f64> = lp
        .scaled(&hn.basis_derivatives_at_zero(1))
        .iter()
        .zip(&at_zero)
        .map(|(d, p)| d - en * p)
        .collect();
    let delta = 1e-9 * (1.0 + en);
    let (best_slope, _) = lp.maximize(&slope, None)?;
    if best_slope < delta {
        return Err(Error::NoFeasibleDirection { eps });
    }

    let feasible = |theta: f64| -> Result<Option<Vec<f64>>> {
        let objective: Vec<f64> = slope
            .iter()
            .zip(&at_zero)
            .map(|(g, p)| theta * g + p)
            .collect();
        let (value, y) = lp.maximize(&objective, Some((&slope, delta)))?;
        Ok((value >= 1.0 - FEASIBILITY_SLACK).then_some(y))
    };

    let mut hi = 10.0 / en;
    let mut witness = None;
    for _ in 0..3 {
        if let Some(y) = feasible(hi)? {
            witness = Some(y);
            break;
        }
        hi *= 10.0;
    }
    let Some(mut witness) = witness else {
        return Err(Error::NoFeasibleDirection { eps });
    };
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match feasible(mid)? {
            Some(y) => {
                hi = mid;
                witness = y;
            }
            None => lo = mid,
        }
    }
    let witness = QuasiPolynomial::new(hn, lp.unscale(&witness))?.rescale(1.0 / a)?;
    Ok(StepProblemValue {
        spectrum: h.clone(),
        eps,
        value: hi / a,
        witness,
        bisection_gap: (hi - lo) / a,
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefineTarget {
    Markov { ell: usize },
    Step { eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    /// Value at each level computed, starting from level 0.
    pub values: Vec<f64>,
    pub value: f64,
    /// Coarser level of the first pair of successive values within the target.
    pub level: usize,
    pub gap: f64,
    pub converged: bool,
}

/// Walks levels `0..=2` until two successive values differ by less than
/// `target_gap`. Missing the target at level 2 is reported, not raised.
pub fn refine_until(h: &ExpSpectrum, target: RefineTarget, target_gap: f64) -> Result<Refinement> {
    if target_gap.is_nan() || target_gap <= 1e-6 {
        return Err(invalid(format!(
            "target gap must exceed 1e-6, got {target_gap}"
        )));
    }
    let eval = |level| match target {
        RefineTarget::Markov { ell } => lp_markov_constant(h, ell, level),
        RefineTarget::Step { eps } => step_value(h, eps, level, None).map(|s| s.value),
    };
    let mut values = vec![eval(0)?];
    for level in 1..=MAX_LEVEL {
        let v = eval(level)?;
        let gap = (v - values[level - 1]).abs();
        values.push(v);
        if gap < target_gap {
            return Ok(Refinement {
                value: values[level - 1],
                level: level - 1,
                gap,
                converged: true,
                values,
            });
        }
    }
    let gap = (values[MAX_LEVEL] - values[MAX_LEVEL - 1]).abs();
    Ok(Refinement {
        value: values[MAX_LEVEL],
        level: MAX_LEVEL,
        gap,
        converged: false,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasipoly::SupNormOptions;
    use crate::remez::{markov_constant, RemezOptions};

    fn spectrum_of(entries: &[(f64, usize)]) -> ExpSpectrum {
        ExpSpectrum::new(entries.iter().copied()).unwrap()
    }

    #[test]
    fn grid_is_nested_and_starts_at_zero() {
        let h = spectrum_of(&[(0.3, 1), (1.0, 2)]);
        let coarse = GridRelaxation::new(&h, 0).unwrap();
        let fine = GridRelaxation::new(&h, 1).unwrap();
        assert_eq!(coarse.grid[0], 0.0);
        assert!(coarse.grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(fine.grid.len(), 2 * coarse.grid.len() - 1);
        for (i, t) in coarse.grid.iter().enumerate() {
            assert_eq!(fine.grid[2 * i], *t);
        }
        assert!(GridRelaxation::new(&h, 3).is_err());
    }

    #[test]
    fn single_exponent_first_derivative() {
        let h = spectrum_of(&[(1.0, 1)]);
        for level in 0..=2 {
            let v = lp_markov_constant(&h, 1, level).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn confluent_pair_matches_table_and_decreases() {
        let h = spectrum_of(&[(1.0, 2)]);
        let v: Vec<f64> = (0..=2)
            .map(|k| lp_markov_constant(&h, 2, k).unwrap())
            .collect();
        assert!(v[0] >= v[1] && v[1] >= v[2], "{v:?}");
        assert!((v[2] - 8.182).abs() < 1e-2, "{v:?}");
        let exact = markov_constant(&h, 2, &RemezOptions::default())
            .unwrap()
            .value;
        assert!(
            v[2] >= exact && (v[2] - exact) / exact < 1e-3,
            "{v:?} vs {exact}"
        );
    }

    #[test]
    fn agrees_with_remez_on_distinct_pair() {
        let h = spectrum_of(&[(0.5, 1), (1.0, 1)]);
        let exact = markov_constant(&h, 2, &RemezOptions::default())
            .unwrap()
            .value;
        let r = refine_until(&h, RefineTarget::Markov { ell: 2 }, 1e-2).unwrap();
        assert!(r.converged);
        assert!((r.value - exact).abs() < 1e-2, "{} vs {exact}", r.value);
    }

    #[test]
    fn refine_trivial_converges_at_level_zero() {
        let h = spectrum_of(&[(1.0, 1)]);
        let r = refine_until(&h, RefineTarget::Markov { ell: 1 }, 1e-3).unwrap();
        assert!(r.converged);
        assert_eq!(r.level, 0);
        assert!(r.gap < 1e-9);
        assert!(refine_until(&h, RefineTarget::Markov { ell: 1 }, 1e-7).is_err());
    }

    #[test]
    fn single_exponent_step_value() {
        // p = c e^{-t}: the objective is minimized at c = -1.
        let h = spectrum_of(&[(1.0, 1)]);
        for eps in [0.1, 0.5] {
            let s = step_value(&h, eps, 1, None).unwrap();
            let expected = 2.0 / (1.0 + eps);
            assert!(
                (s.value - expected).abs() < 1e-5,
                "{} vs {expected}",
                s.value
            );
        }
    }

    #[test]
    fn step_value_exceeds_lower_bound_and_scales() {
        let h = spectrum_of(&[(1.0, 2)]);
        let eps = 0.1;
        let s = step_value(&h, eps, 2, None).unwrap();
        assert!(
            s.value > 2.0 * eps / (8.182 + 2.0 * eps * eps),
            "{}",
            s.value
        );
        for lambda in [0.5, 2.0] {
            let scaled = step_value(&h.scaled(lambda).unwrap(), lambda * eps, 2, None).unwrap();
            let rel = (scaled.value * lambda - s.value).abs() / s.value;
            assert!(rel < 1e-3, "lambda {lambda}: {rel}");
        }
    }

    #[test]
    fn step_witness_certificate() {
        let h = spectrum_of(&[(0.4, 1), (1.0, 1)]);
        let s = step_value(&h, 0.2, 2, None).unwrap();
        let norm = s
            .witness
            .sup_norm(&SupNormOptions::default())
            .unwrap()
            .value;
        assert!(norm <= 1.0 + 1e-4, "{norm}");
        let tol = 1e-6 / 0.2;
        assert!(s.witness_objective() <= s.value + tol + 1e-4);
        let p0 = s.witness.evaluate(0.0);
        assert!(s.witness.derivative_at_zero(1) - 0.2 * p0 > 0.0);
    }

    #[test]
    fn rejects_out_of_scale_input() {
        let big = ExpSpectrum::confluent(1.0, 9).unwrap();
        assert!(matches!(
            lp_markov_constant(&big, 1, 0),
            Err(Error::InvalidInput(_))
        ));
        let h = spectrum_of(&[(1.0, 1)]);
        assert!(step_value(&h, 0.0, 0, None).is_err());
        assert!(lp_markov_constant(&h, 0, 0).is_err());
    }
}
