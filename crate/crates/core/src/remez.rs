//! Exponential Chebyshev polynomials on the half-line and the sharp
//! Markov-Bernstein constants `m_l(h) = |T_h^{(l)}(0)|`.
//!
//! `T_h` is the element of the span of `{t^j e^{-h_k t}}` with sup norm one
//! on `[0, inf)` that attains `+-1` with alternating signs at `n` points, the
//! first of which is `t = 0`. It is computed by a multi-point Remez exchange:
//! with the reference `0 = mu_0 < ... < mu_{n-1}` fixed, the last basis
//! function is levelled against the others,
//!
//! ```text
//! phi_{n-1}(mu_i) + sum_{k < n-1} a_k phi_k(mu_i) = (-1)^i lambda,
//! ```
//!
//! and the reference is replaced by `0` together with the `n - 1` critical
//! points of the levelled polynomial. Because the system is Chebyshev those
//! critical points interleave the reference exactly, so the exchange is always
//! one-for-one and the endpoint `0` stays in the alternance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quasipoly::{ExpSpectrum, Exponent, QuasiPolynomial, SupNormOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemezOptions {
    /// Stop once `sup |T| - 1 <= tol` on the current reference.
    pub tol: f64,
    /// Bound on `|T'(mu_i)| / h_min` at interior alternance points.
    pub tol_deriv: f64,
    pub max_iter: usize,
    /// Condition number of the equilibrated levelling system above which the
    /// two closest exponents are merged.
    pub cond_guard: f64,
    pub sup: SupNormOptions,
}

impl Default for RemezOptions {
    fn default() -> Self {
        RemezOptions {
            tol: 1e-9,
            tol_deriv: 1e-6,
            max_iter: 200,
            cond_guard: 1e13,
            sup: SupNormOptions {
                tol: 1e-10,
                ..SupNormOptions::default()
            },
        }
    }
}

impl RemezOptions {
    pub fn with_tol(tol: f64) -> Self {
        RemezOptions {
            tol,
            ..Self::default()
        }
    }
}

/// The extremal polynomial `T_h` with its alternance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertificateRepr", into = "CertificateRepr")]
pub struct ChebyshevCertificate {
    pub polynomial: QuasiPolynomial,
    pub alternance: Vec<f64>,
    pub signs: Vec<i8>,
    /// `max_i ||T(mu_i)| - 1|`.
    pub equioscillation_residual: f64,
    /// `sup |T| - 1`, recomputed by critical-point search.
    pub norm_excess: f64,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct CertificateRepr {
    h: Vec<Exponent>,
    coeffs: Vec<f64>,
    alternance: Vec<f64>,
    signs: Vec<i8>,
    residual: f64,
    norm_excess: f64,
    iterations: usize,
}

impl TryFrom<CertificateRepr> for ChebyshevCertificate {
    type Error = Error;

    fn try_from(r: CertificateRepr) -> Result<Self> {
        let spectrum = ExpSpectrum::new(r.h.iter().map(|e| (e.h, e.m)))?;
        if r.alternance.len() != r.signs.len() {
            return Err(invalid("alternance and signs differ in length"));
        }
        Ok(ChebyshevCertificate {
            polynomial: QuasiPolynomial::new(spectrum, r.coeffs)?,
            alternance: r.alternance,
            signs: r.signs,
            equioscillation_residual: r.residual,
            norm_excess: r.norm_excess,
            iterations: r.iterations,
        })
    }
}

impl From<ChebyshevCertificate> for CertificateRepr {
    fn from(c: ChebyshevCertificate) -> Self {
        CertificateRepr {
            h: c.polynomial.spectrum().entries().to_vec(),
            coeffs: c.polynomial.coeffs().to_vec(),
            alternance: c.alternance,
            signs: c.signs,
            residual: c.equioscillation_residual,
            norm_excess: c.norm_excess,
            iterations: c.iterations,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Remez,
    Oracle,
    ClosedForm,
}

/// A sharp constant `m_l(h)` (or the uniform `m_{l,n}`) with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovConstant {
    pub spectrum: ExpSpectrum,
    pub ell: usize,
    pub value: f64,
    pub certificate: Option<ChebyshevCertificate>,
    pub method: Method,
}

/// Computes `T_h`, normalized so that `T_h(0) > 0` and `sup |T_h| = 1`.
///
/// The exchange runs on the normalized spectrum `h / h_max` and the result is
/// rescaled back, so `T_{alpha h}(t) = T_h(alpha t)` holds up to round-off.
pub fn chebyshev_polynomial(h: &ExpSpectrum, opts: &RemezOptions) -> Result<ChebyshevCertificate> {
    if !(opts.tol > 1e-14 && opts.tol < 1e-2) {
        return Err(invalid(format!("tol {} outside (1e-14, 1e-2)", opts.tol)));
    }
    let scale = h.h_max();
    let mut spectrum = h.scaled(1.0 / scale)?;
    let unit = loop {
        match exchange(&spectrum, opts, true)? {
            Some(cert) => break cert,
            None => match spectrum.merge_closest() {
                Some(merged) => spectrum = merged,
                // a single (confluent) exponent cannot be merged further
                None => break exchange(&spectrum, opts, false)?.expect("guard disabled"),
            },
        }
    };
    if scale == 1.0 {
        return Ok(unit);
    }
    let polynomial = unit.polynomial.rescale(1.0 / scale)?;
    let norm_excess = polynomial.sup_norm(&opts.sup)?.value - 1.0;
    Ok(ChebyshevCertificate {
        alternance: unit.alternance.iter().map(|t| t / scale).collect(),
        norm_excess,
        polynomial,
        ..unit
    })
}

/// `None` when the condition guard trips.
fn exchange(
    spectrum: &ExpSpectrum,
    opts: &RemezOptions,
    guard: bool,
) -> Result<Option<ChebyshevCertificate>> {
    let n = spectrum.degree();
    if n == 1 {
        let poly = QuasiPolynomial::new(spectrum.clone(), vec![1.0])?;
        return Ok(Some(ChebyshevCertificate {
            polynomial: poly,
            alternance: vec![0.0],
            signs: vec![1],
            equioscillation_residual: 0.0,
            norm_excess: 0.0,
            iterations: 0,
        }));
    }

    // Continuation over basis prefixes: the alternance of the first k
    // functions, extended by one point, seeds the solve on k + 1.
    let h_min = spectrum.h_min();
    let mut nodes = vec![0.0, std::f64::consts::LN_2 / h_min];
    let mut total = 0;
    for k in 2..=n {
        let sub = spectrum.prefix(k);
        let last = k == n;
        let tol = if last { opts.tol } else { opts.tol.max(1e-4) };
        let Some((t_poly, alt, peak, iters)) = iterate(&sub, nodes, tol, opts, guard)? else {
            return Ok(None);
        };
        total += iters;
        if last {
            return finalize(t_poly, alt, peak, total, opts).map(Some);
        }
        let end = alt[k - 1];
        let gap = end - alt[k - 2];
        nodes = alt;
        nodes.push(end + 2.0 * gap);
    }
    unreachable!("degree at least two")
}

type Iterate = (QuasiPolynomial, Vec<f64>, f64, usize);

fn iterate(
    spectrum: &ExpSpectrum,
    mut nodes: Vec<f64>,
    tol: f64,
    opts: &RemezOptions,
    guard: bool,
) -> Result<Option<Iterate>> {
    let mut excess = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let Some(t_poly) = level(spectrum, &nodes, opts.cond_guard, guard)? else {
            return Ok(None);
        };
        let crit = interior_extrema(&t_poly, opts)?;
        let mut peak: f64 = 1.0;
        for (i, &t) in crit.iter().enumerate() {
            let v = t_poly.evaluate(t);
            let expected = if i % 2 == 0 { -1.0 } else { 1.0 };
            if v.signum() != expected {
                return Err(Error::InternalInconsistency(format!(
                    "extremum {} at t = {t} has the wrong sign",
                    i + 1
                )));
            }
            peak = peak.max(v.abs());
        }
        excess = peak - 1.0;
        nodes.truncate(1);
        nodes.extend_from_slice(&crit);
        if excess <= tol {
            return Ok(Some((t_poly, nodes, peak, iter)));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        excess,
    })
}

/// Solves the levelling system on `nodes` and returns `T` with
/// `T(nodes[i]) = (-1)^i`.
fn level(
    spectrum: &ExpSpectrum,
    nodes: &[f64],
    cond_guard: f64,
    guard: bool,
) -> Result<Option<QuasiPolynomial>> {
    let n = spectrum.degree();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; n];
    for (i, &t) in nodes.iter().enumerate() {
        spectrum.basis_values(t, &mut row);
        for k in 0..n - 1 {
            m[(i, k)] = row[k];
        }
        m[(i, n - 1)] = if i % 2 == 0 { -1.0 } else { 1.0 };
        rhs[i] = -row[n - 1];
    }
    let scales: Vec<f64> = (0..n)
        .map(|k| {
            let s = m.column(k).amax();
            if s > 0.0 {
                1.0 / s
            } else {
                1.0
            }
        })
        .collect();
    for (k, s) in scales.iter().enumerate() {
        m.column_mut(k).scale_mut(*s);
    }

    let sv = m.clone().singular_values();
    let cond = sv.max() / sv.min();
    if guard && (cond.is_nan() || cond > cond_guard) {
        return Ok(None);
    }

    let y = m
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InternalInconsistency("singular levelling system".into()))?;
    let lambda = y[n - 1] * scales[n - 1];
    if !lambda.is_finite() || lambda == 0.0 {
        return Err(Error::InternalInconsistency(format!(
            "degenerate levelled error {lambda}"
        )));
    }
    let mut coeffs: Vec<f64> = (0..n - 1).map(|k| y[k] * scales[k] / lambda).collect();
    coeffs.push(1.0 / lambda);
    QuasiPolynomial::new(spectrum.clone(), coeffs).map(Some)
}

/// The `n - 1` interior extrema of a levelled polynomial, refining the
/// bracketing grid if some were missed.
fn interior_extrema(t_poly: &QuasiPolynomial, opts: &RemezOptions) -> Result<Vec<f64>> {
    let n = t_poly.spectrum().degree();
    let mut sup = opts.sup;
    for _ in 0..4 {
        let crit = t_poly.critical_points(&sup)?;
        if crit.len() == n - 1 {
            return Ok(crit);
        }
        sup.points_per_decade *= 2;
    }
    Err(Error::ResolutionTooCoarse(format!(
        "could not isolate {} extrema of the levelled polynomial",
        n - 1
    )))
}

fn finalize(
    t_poly: QuasiPolynomial,
    alternance: Vec<f64>,
    peak: f64,
    iterations: usize,
    opts: &RemezOptions,
) -> Result<ChebyshevCertificate> {
    let polynomial = t_poly.scaled(1.0 / peak);
    let signs: Vec<i8> = (0..alternance.len())
        .map(|i| if i % 2 == 0 { 1 } else { -1 })
        .collect();
    let equioscillation_residual = alternance
        .iter()
        .map(|&t| (polynomial.evaluate(t).abs() - 1.0).abs())
        .fold(0.0, f64::max);
    let norm_excess = polynomial.sup_norm(&opts.sup)?.value - 1.0;
    Ok(ChebyshevCertificate {
        polynomial,
        alternance,
        signs,
        equioscillation_residual,
        norm_excess,
        iterations,
    })
}

/// `m_l(h) = |T_h^{(l)}(0)|`. A single exponent `h = (alpha)` gives
/// `alpha^l` in closed form.
pub fn markov_constant(h: &ExpSpectrum, ell: usize, opts: &RemezOptions) -> Result<MarkovConstant> {
    if ell == 0 {
        return Err(invalid("derivative order must be at least 1"));
    }
    if h.degree() == 1 {
        let alpha = h.h_min();
        let certificate = chebyshev_polynomial(h, opts)?;
        return Ok(MarkovConstant {
            spectrum: h.clone(),
            ell,
            value: alpha.powi(ell as i32),
            certificate: Some(certificate),
            method: Method::ClosedForm,
        });
    }
    let certificate = chebyshev_polynomial(h, opts)?;
    let value = certificate.polynomial.derivative_at_zero(ell).abs();
    Ok(MarkovConstant {
        spectrum: h.clone(),
        ell,
        value,
        certificate: Some(certificate),
        method: Method::Remez,
    })
}

/// One line of an [`AlternanceReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity minus the allowed bound (`<= 0` when passing).
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlternanceReport {
    pub checks: Vec<Check>,
}

impl AlternanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Re-derives every certificate invariant from scratch.
pub fn verify_alternance(cert: &ChebyshevCertificate, tol: f64) -> AlternanceReport {
    let p = &cert.polynomial;
    let n = p.spectrum().degree();
    let mut checks = Vec::new();
    let mut push = |name, measured: f64, bound: f64| {
        checks.push(Check {
            name,
            passed: measured <= bound,
            slack: measured - bound,
        });
    };

    let count_diff = (cert.alternance.len() as f64 - n as f64).abs();
    push("count", count_diff, 0.0);
    let first = cert.alternance.first().copied().unwrap_or(f64::INFINITY);
    push("first_at_zero", first.abs(), 0.0);
    let increasing = cert.alternance.windows(2).all(|w| w[0] < w[1]);
    push("increasing", if increasing { 0.0 } else { 1.0 }, 0.0);

    let alternating = cert.signs.len() == cert.alternance.len()
        && cert.signs.first() == Some(&1)
        && cert.signs.iter().all(|s| s.abs() == 1)
        && cert.signs.windows(2).all(|w| w[0] == -w[1]);
    push("signs_alternate", if alternating { 0.0 } else { 1.0 }, 0.0);

    let residual = cert
        .alternance
        .iter()
        .zip(&cert.signs)
        .map(|(&t, &s)| (p.evaluate(t) - s as f64).abs())
        .fold(0.0, f64::max);
    push("equioscillation", residual, tol);

    let opts = RemezOptions::default();
    let excess = match p.sup_norm(&opts.sup) {
        Ok(s) => s.value - 1.0,
        Err(_) => f64::INFINITY,
    };
    push("norm", excess, tol);

    let dp = p.derivative(1);
    let h_min = p.spectrum().h_min();
    let deriv = cert
        .alternance
        .iter()
        .skip(1)
        .map(|&t| dp.evaluate(t).abs() / h_min)
        .fold(0.0, f64::max);
    push("critical", deriv, opts.tol_deriv);

    AlternanceReport { checks }
}
