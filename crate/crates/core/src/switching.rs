//! Certified Euler steps for linear switching systems `x' = A(t) x`,
//! `A(t)` drawn from a finite family, and a seeded Monte-Carlo check of the
//! discretized system `x(k+1) = (I + tau A(k)) x(k)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::laguerre::m_uniform;
use crate::quasipoly::ExpSpectrum;
use crate::remez::{markov_constant, RemezOptions};

/// Imaginary parts below `TOL_IMAG * (1 + |lambda|)` count as round-off.
pub const TOL_IMAG: f64 = 1e-8;
pub const MAX_DIMENSION: usize = 64;
pub const MAX_STEPS: usize = 1_000_000;
pub const MAX_TRIALS: usize = 10_000;
const DIVERGENCE_NORM: f64 = 1e30;

/// A non-empty family of real square matrices of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct MatrixFamily {
    dimension: usize,
    matrices: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    dimension: usize,
    matrices: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<FamilyRepr> for MatrixFamily {
    type Error = Error;

    fn try_from(repr: FamilyRepr) -> Result<Self> {
        MatrixFamily::from_rows(repr.dimension, &repr.matrices)
    }
}

impl From<MatrixFamily> for FamilyRepr {
    fn from(family: MatrixFamily) -> Self {
        let matrices = family
            .matrices
            .iter()
            .map(|a| a.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect();
        FamilyRepr {
            dimension: family.dimension,
            matrices,
        }
    }
}

impl MatrixFamily {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(invalid("matrix family is empty"));
        };
        let dimension = first.nrows();
        if dimension == 0 {
            return Err(invalid("matrices must have dimension at least 1"));
        }
        for (i, a) in matrices.iter().enumerate() {
            if a.nrows() != dimension || a.ncols() != dimension {
                return Err(invalid(format!(
                    "matrix {i} is {}x{}, expected {dimension}x{dimension}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("matrix {i} has a non-finite entry")));
            }
        }
        Ok(MatrixFamily {
            dimension,
            matrices,
        })
    }

    /// Builds the family from row-major nested lists.
    pub fn from_rows(dimension: usize, matrices: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut out = Vec::with_capacity(matrices.len());
        for (i, rows) in matrices.iter().enumerate() {
            if rows.len() != dimension || rows.iter().any(|r| r.len() != dimension) {
                return Err(invalid(format!(
                    "matrix {i} is not {dimension}x{dimension}"
                )));
            }
            out.push(DMatrix::from_fn(dimension, dimension, |r, c| rows[r][c]));
        }
        let family = MatrixFamily::new(out)?;
        if family.dimension != dimension {
            return Err(invalid("dimension does not match the matrices"));
        }
        Ok(family)
    }

    pub fn diagonal(diagonals: &[Vec<f64>]) -> Result<Self> {
        MatrixFamily::new(
            diagonals
                .iter()
                .map(|d| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
                .collect(),
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumInfo {
    pub index: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub is_hurwitz: bool,
    pub spectral_abscissa: f64,
    pub spectral_radius: f64,
}

/// Real spectrum of `a`, or `ComplexSpectrum` when some eigenvalue has a
/// genuine imaginary part. The sharp constants are only available for
/// real spectra.
pub fn spectrum(index: usize, a: &DMatrix<f64>, tol_imag: f64) -> Result<SpectrumInfo> {
    let n = a.nrows();
    if n == 0 || n != a.ncols() {
        return Err(invalid(format!("matrix {index} is not square")));
    }
    if n > MAX_DIMENSION {
        return Err(invalid(format!(
            "matrix {index} has dimension {n}, at most {MAX_DIMENSION} supported"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("matrix {index} has a non-finite entry")));
    }
    let mut eigenvalues = Vec::with_capacity(n);
    for z in a.complex_eigenvalues().iter() {
        if z.im.abs() > tol_imag * (1.0 + z.norm()) {
            return Err(Error::ComplexSpectrum {
                index,
                re: z.re,
                im: z.im,
            });
        }
        eigenvalues.push(z.re);
    }
    eigenvalues.sort_by(f64::total_cmp);
    let spectral_abscissa = eigenvalues[n - 1];
    let spectral_radius = eigenvalues.iter().fold(0.0, |r: f64, v| r.max(v.abs()));
    Ok(SpectrumInfo {
        index,
        eigenvalues,
        is_hurwitz: spectral_abscissa < 0.0,
        spectral_abscissa,
        spectral_radius,
    })
}

/// Exponents `-lambda_k - eps`, merged into multiplicities.
pub fn shifted_spectrum(info: &SpectrumInfo, eps: f64) -> Result<ExpSpectrum> {
    check_eps(eps)?;
    for &lambda in &info.eigenvalues {
        let shifted = -lambda - eps;
        if shifted <= 0.0 {
            return Err(Error::MarginViolated {
                index: info.index,
                eigenvalue: lambda,
                eps,
                shifted,
            });
        }
    }
    ExpSpectrum::from_values(
        &info
            .eigenvalues
            .iter()
            .map(|l| -l - eps)
            .collect::<Vec<_>>(),
    )
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("eps must be positive, got {eps}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStep {
    pub index: usize,
    pub eigenvalues: Vec<f64>,
    pub shifted: ExpSpectrum,
    /// Sharp second-order constant of the shifted spectrum.
    pub m2: f64,
    /// `2 eps / (m2 + 2 eps^2)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    pub eps: f64,
    pub dimension: usize,
    pub per_matrix: Vec<MatrixStep>,
    /// Minimum of the per-matrix bounds.
    pub tau_individual: f64,
    /// Maximum of the per-matrix bounds, reported for comparison only.
    pub tau_individual_max: f64,
    /// Largest spectral radius over the family.
    pub radius: f64,
    /// Worst-case second-order constant over all spectra in `(0, 1]^dimension`.
    pub uniform_constant: f64,
    /// `2 eps / (radius^2 uniform_constant)`.
    pub tau_uniform: f64,
    /// `2 eps / ((radius - eps)^2 uniform_constant + 2 eps^2)`.
    pub tau_uniform_informational: f64,
    pub notes: Vec<String>,
}

const NOTES: [&str; 3] = [
    "tau_individual is the minimum over matrices; tau_individual_max is not a certified step",
    "each matrix has spectral abscissa below -eps; this is necessary for the family's Lyapunov exponent to be below -eps but does not prove it",
    "only the step formula is certified, not stability of the switching system itself",
];

/// Step bounds for `family` at margin `eps`.
pub fn step_bound(family: &MatrixFamily, eps: f64, opts: &RemezOptions) -> Result<StepEstimate> {
    check_eps(eps)?;
    let per_matrix = family
        .matrices
        .par_iter()
        .enumerate()
        .map(|(index, a)| {
            let info = spectrum(index, a, TOL_IMAG)?;
            let shifted = shifted_spectrum(&info, eps)?;
            let m2 = markov_constant(&shifted, 2, opts)?.value;
            Ok(MatrixStep {
                index,
                eigenvalues: info.eigenvalues,
                shifted,
                m2,
                bound: 2.0 * eps / (m2 + 2.0 * eps * eps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tau_individual = per_matrix
        .iter()
        .map(|m| m.bound)
        .fold(f64::INFINITY, f64::min);
    let tau_individual_max = per_matrix.iter().map(|m| m.bound).fold(0.0, f64::max);
    let radius = per_matrix
        .iter()
        .flat_map(|m| m.eigenvalues.iter())
        .fold(0.0, |r: f64, v| r.max(v.abs()));
    let uniform_constant = m_uniform(2, family.dimension, opts)?.value;
    let tau_uniform = 2.0 * eps / (radius * radius * uniform_constant);
    let tau_uniform_informational =
        2.0 * eps / ((radius - eps).powi(2) * uniform_constant + 2.0 * eps * eps);
    Ok(StepEstimate {
        eps,
        dimension: family.dimension,
        per_matrix,
        tau_individual,
        tau_individual_max,
        radius,
        uniform_constant,
        tau_uniform,
        tau_uniform_informational,
        notes: NOTES.iter().map(|s| s.to_string()).collect(),
    })
}

/// `I + tau A`.
pub fn discretize(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    DMatrix::identity(a.nrows(), a.ncols()) + a * tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub tau: f64,
    /// Spectral radius of `I + tau A` per matrix.
    pub radii: Vec<f64>,
    pub contracting: Vec<bool>,
    pub all_contracting: bool,
}

/// Whether every single `I + tau A` has spectral radius strictly below 1.
/// Necessary, not sufficient, for the switched product to contract.
pub fn per_matrix_contraction_check(family: &MatrixFamily, tau: f64) -> ContractionReport {
    let radii: Vec<f64> = family
        .matrices
        .iter()
        .map(|a| {
            discretize(a, tau)
                .complex_eigenvalues()
                .iter()
                .fold(0.0, |r: f64, z| r.max(z.norm()))
        })
        .collect();
    let contracting: Vec<bool> = radii.iter().map(|&r| r < 1.0).collect();
    ContractionReport {
        tau,
        all_contracting: contracting.iter().all(|&c| c),
        radii,
        contracting,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub max_norm: f64,
    pub final_norm: f64,
    /// `log ||x(K)|| / K` over the steps actually taken.
    pub growth_exponent: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub tau: f64,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub divergent: usize,
    /// Trials ending with `||x(K)|| < ||x(0)|| = 1`.
    pub decayed: usize,
    pub max_norm: f64,
    pub growth_exponent_min: f64,
    pub growth_exponent_mean: f64,
    pub growth_exponent_max: f64,
}

/// Runs `trials` random switching sequences of length `steps`. Trial `i`
/// draws from stream `i` of a generator seeded with `seed`, so results do
/// not depend on thread count.
pub fn simulate(
    family: &MatrixFamily,
    tau: f64,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    if steps == 0 || steps > MAX_STEPS {
        return Err(invalid(format!(
            "steps must be in 1..={MAX_STEPS}, got {steps}"
        )));
    }
    if trials == 0 || trials > MAX_TRIALS {
        return Err(invalid(format!(
            "trials must be in 1..={MAX_TRIALS}, got {trials}"
        )));
    }
    let n = family.dimension;
    let steppers: Vec<Vec<f64>> = family
        .matrices
        .iter()
        .map(|a| {
            let b = discretize(a, tau);
            (0..n)
                .flat_map(|r| (0..n).map(move |c| (r, c)))
                .map(|(r, c)| b[(r, c)])
                .collect()
        })
        .collect();
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(&steppers, n, steps, seed, i as u64))
        .collect();

    let divergent = outcomes.iter().filter(|o| o.divergent).count();
    let decayed = outcomes
        .iter()
        .filter(|o| !o.divergent && o.final_norm < 1.0)
        .count();
    let exponents = outcomes.iter().map(|o| o.growth_exponent);
    Ok(SimulationReport {
        tau,
        steps,
        trials,
        seed,
        divergent,
        decayed,
        max_norm: outcomes.iter().map(|o| o.max_norm).fold(0.0, f64::max),
        growth_exponent_min: exponents.clone().fold(f64::INFINITY, f64::min),
        growth_exponent_mean: exponents.clone().sum::<f64>() / trials as f64,
        growth_exponent_max: exponents.fold(f64::NEG_INFINITY, f64::max),
    })
}

fn run_trial(
    steppers: &[Vec<f64>],
    n: usize,
    steps: usize,
    seed: u64,
    stream: u64,
) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm0 = norm(&x);
    if norm0 > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm0);
    } else {
        x[0] = 1.0;
    }
    // ||x(k)|| = exp(log_scale) * ||x||, with x renormalized when it drifts.
    let mut log_scale = 0.0;
    let mut max_norm: f64 = 1.0;
    let mut y = vec![0.0; n];
    for k in 1..=steps {
        let b = &steppers[rng.random_range(0..steppers.len())];
        for (r, out) in y.iter_mut().enumerate() {
            *out = b[r * n..(r + 1) * n]
                .iter()
                .zip(&x)
                .map(|(a, v)| a * v)
                .sum();
        }
        std::mem::swap(&mut x, &mut y);
        let local = norm(&x);
        let log_norm = log_scale + local.ln();
        if log_norm > DIVERGENCE_NORM.ln() || !local.is_finite() {
            return TrialOutcome {
                max_norm: max_norm.max(log_norm.exp()),
                final_norm: log_norm.exp(),
                growth_exponent: log_norm / k as f64,
                divergent: true,
            };
        }
        max_norm = max_norm.max(log_norm.exp());
        if local == 0.0 {
            return TrialOutcome {
                max_norm,
                final_norm: 0.0,
                growth_exponent: f64::NEG_INFINITY,
                divergent: false,
            };
        }
        if !(1e-100..=1e100).contains(&local) {
            x.iter_mut().for_each(|v| *v /= local);
            log_scale += local.ln();
        }
    }
    let log_norm = log_scale + norm(&x).ln();
    TrialOutcome {
        max_norm,
        final_norm: log_norm.exp(),
        growth_exponent: log_norm / steps as f64,
        divergent: false,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
