//! Real exponential polynomials (quasipolynomials) on the half-line.
//!
//! A [`QuasiPolynomial`] is a real combination of the basis functions
//! `t^j e^{-h_k t}`, `0 <= j < m_k`, where `(h_k, m_k)` run over the entries of
//! an [`ExpSpectrum`]. Coefficients are stored in the fixed basis order
//! `(k ascending, j ascending)`. Powers are raw `t^j`, not `t^j / j!`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Exponents closer than this (relative) are merged into one exponent of
/// higher multiplicity.
pub const CONFLUENCE_REL_TOL: f64 = 1e-8;

/// One distinct exponent `h` with multiplicity `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    pub h: f64,
    pub m: usize,
}

/// The exponent vector of a system `{t^j e^{-h_k t}}`, with multiplicities.
///
/// Entries are strictly increasing in `h`, all `h > 0`, all `m >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumRepr", into = "SpectrumRepr")]
pub struct ExpSpectrum {
    entries: Vec<Exponent>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    exponents: Vec<Exponent>,
}

impl TryFrom<SpectrumRepr> for ExpSpectrum {
    type Error = Error;

    fn try_from(repr: SpectrumRepr) -> Result<Self> {
        ExpSpectrum::new(repr.exponents.into_iter().map(|e| (e.h, e.m)))
    }
}

impl From<ExpSpectrum> for SpectrumRepr {
    fn from(s: ExpSpectrum) -> Self {
        SpectrumRepr {
            exponents: s.entries,
        }
    }
}

impl ExpSpectrum {
    /// Builds a spectrum from `(h, multiplicity)` pairs in any order.
    ///
    /// Near-equal exponents (within [`CONFLUENCE_REL_TOL`]) are merged, the
    /// merged value being the multiplicity-weighted mean.
    pub fn new(entries: impl IntoIterator<Item = (f64, usize)>) -> Result<Self> {
        let mut raw: Vec<(f64, usize)> = entries.into_iter().collect();
        if raw.is_empty() {
            return Err(invalid("spectrum must contain at least one exponent"));
        }
        for &(h, m) in &raw {
            if !h.is_finite() || h <= 0.0 {
                return Err(invalid(format!("exponent {h} must be finite and positive")));
            }
            if m == 0 {
                return Err(invalid("multiplicities must be at least 1"));
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut merged: Vec<Exponent> = Vec::with_capacity(raw.len());
        for (h, m) in raw {
            match merged.last_mut() {
                Some(last) if (h - last.h).abs() <= CONFLUENCE_REL_TOL * h.max(last.h) => {
                    let total = last.m + m;
                    last.h = (last.h * last.m as f64 + h * m as f64) / total as f64;
                    last.m = total;
                }
                _ => merged.push(Exponent { h, m }),
            }
        }
        Ok(ExpSpectrum { entries: merged })
    }

    /// Each value with multiplicity one; repeated values merge.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&h| (h, 1)))
    }

    /// The single exponent `h` with multiplicity `n`.
    pub fn confluent(h: f64, n: usize) -> Result<Self> {
        Self::new([(h, n)])
    }

    pub fn entries(&self) -> &[Exponent] {
        &self.entries
    }

    /// Sum of multiplicities, i.e. the dimension of the space.
    pub fn degree(&self) -> usize {
        self.entries.iter().map(|e| e.m).sum()
    }

    pub fn h_min(&self) -> f64 {
        self.entries[0].h
    }

    pub fn h_max(&self) -> f64 {
        self.entries[self.entries.len() - 1].h
    }

    pub fn max_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.m).max().unwrap_or(1)
    }

    /// The exponents as a sorted multiset, each repeated by its multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.h, e.m))
            .collect()
    }

    /// The span of the first `k` basis functions in basis order.
    pub fn prefix(&self, k: usize) -> ExpSpectrum {
        let mut left = k.clamp(1, self.degree());
        let mut entries = Vec::new();
        for e in &self.entries {
            if left == 0 {
                break;
            }
            let m = e.m.min(left);
            entries.push(Exponent { h: e.h, m });
            left -= m;
        }
        ExpSpectrum { entries }
    }

    /// `alpha * h`, multiplicities unchanged.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(invalid(format!("scale factor {alpha} must be positive")));
        }
        Ok(ExpSpectrum {
            entries: self
                .entries
                .iter()
                .map(|e| Exponent {
                    h: e.h * alpha,
                    m: e.m,
                })
                .collect(),
        })
    }

    /// Component-wise `self <= other` after expansion to sorted multisets.
    /// `None` when the degrees differ.
    pub fn dominated_by(&self, other: &ExpSpectrum) -> Option<bool> {
        let (a, b) = (self.expanded(), other.expanded());
        (a.len() == b.len()).then(|| a.iter().zip(&b).all(|(x, y)| x <= y))
    }

    /// Merges the two adjacent exponents with the smallest relative gap.
    /// Returns `None` for a spectrum with a single distinct exponent.
    pub fn merge_closest(&self) -> Option<ExpSpectrum> {
        if self.entries.len() < 2 {
            return None;
        }
        let k = (0..self.entries.len() - 1)
            .min_by(|&i, &j| {
                let gap = |i: usize| {
                    let (a, b) = (self.entries[i], self.entries[i + 1]);
                    (b.h - a.h) / b.h
                };
                gap(i).total_cmp(&gap(j))
            })
            .expect("at least two entries");
        let (a, b) = (self.entries[k], self.entries[k + 1]);
        let m = a.m + b.m;
        let mut entries = self.entries.clone();
        entries[k] = Exponent {
            h: (a.h * a.m as f64 + b.h * b.m as f64) / m as f64,
            m,
        };
        entries.remove(k + 1);
        Some(ExpSpectrum { entries })
    }

    /// Values of all basis functions at `t`, in basis order.
    pub fn basis_values(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.degree());
        let mut i = 0;
        for e in &self.entries {
            let mut v = (-e.h * t).exp();
            for _ in 0..e.m {
                out[i] = v;
                v *= t;
                i += 1;
            }
        }
    }

    /// `ell`-th derivatives at zero of all basis functions, in basis order.
    pub fn basis_derivatives_at_zero(&self, ell: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.degree());
        for e in &self.entries {
            for j in 0..e.m {
                out.push(leibniz_at_zero(e.h, j, ell));
            }
        }
        out
    }
}

/// `(t^j e^{-h t})^{(ell)}` at `t = 0`, which is `ell!/(ell-j)! (-h)^{ell-j}`
/// for `j <= ell` and zero otherwise.
fn leibniz_at_zero(h: f64, j: usize, ell: usize) -> f64 {
    if j > ell {
        return 0.0;
    }
    let falling: f64 = ((ell - j + 1)..=ell).map(|i| i as f64).product();
    falling * (-h).powi((ell - j) as i32)
}

/// Resolution controls for critical-point isolation and the sup norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupNormOptions {
    /// The search horizon is chosen so the tail beyond it is below `tol`.
    pub tol: f64,
    /// Grid points per decade, per unit of spectrum degree.
    pub points_per_decade: usize,
    /// Left end of the geometric grid, in units of `1 / h_max`.
    pub t_lo: f64,
    /// Absolute bisection tolerance in `t`.
    pub bisect_tol: f64,
}

impl Default for SupNormOptions {
    fn default() -> Self {
        SupNormOptions {
            tol: 1e-12,
            points_per_decade: 64,
            t_lo: 1e-4,
            bisect_tol: 1e-12,
        }
    }
}

/// Result of [`QuasiPolynomial::sup_norm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupNorm {
    pub value: f64,
    pub argmax: f64,
}

/// A real combination of `t^j e^{-h_k t}` over an [`ExpSpectrum`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct QuasiPolynomial {
    spectrum: ExpSpectrum,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    exponents: Vec<Exponent>,
    coeffs: Vec<f64>,
}

impl TryFrom<PolyRepr> for QuasiPolynomial {
    type Error = Error;

    fn try_from(repr: PolyRepr) -> Result<Self> {
        let spectrum = ExpSpectrum::try_from(SpectrumRepr {
            exponents: repr.exponents,
        })?;
        QuasiPolynomial::new(spectrum, repr.coeffs)
    }
}

impl From<QuasiPolynomial> for PolyRepr {
    fn from(p: QuasiPolynomial) -> Self {
        PolyRepr {
            exponents: p.spectrum.entries,
            coeffs: p.coeffs,
        }
    }
}

impl QuasiPolynomial {
    pub fn new(spectrum: ExpSpectrum, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spectrum.degree() {
            return Err(invalid(format!(
                "expected {} coefficients, got {}",
                spectrum.degree(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(QuasiPolynomial { spectrum, coeffs })
    }

    pub fn spectrum(&self) -> &ExpSpectrum {
        &self.spectrum
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `(exponent, coefficients of t^0..t^{m-1})` per distinct exponent.
    pub fn blocks(&self) -> impl Iterator<Item = (Exponent, &[f64])> {
        let mut offset = 0;
        self.spectrum.entries.iter().map(move |e| {
            let block = &self.coeffs[offset..offset + e.m];
            offset += e.m;
            (*e, block)
        })
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.blocks()
            .map(|(e, c)| {
                let poly = c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci);
                poly * (-e.h * t).exp()
            })
            .sum()
    }

    /// Exact `ell`-th derivative on the same spectrum.
    pub fn derivative(&self, ell: usize) -> QuasiPolynomial {
        let mut coeffs = self.coeffs.clone();
        let mut offset = 0;
        for e in &self.spectrum.entries {
            let block = &mut coeffs[offset..offset + e.m];
            for _ in 0..ell {
                // (q e^{-ht})' = (q' - h q) e^{-ht}
                for j in 0..block.len() {
                    let next = if j + 1 < block.len() {
                        (j + 1) as f64 * block[j + 1]
                    } else {
                        0.0
                    };
                    block[j] = next - e.h * block[j];
                }
            }
            offset += e.m;
        }
        QuasiPolynomial {
            spectrum: self.spectrum.clone(),
            coeffs,
        }
    }

    /// `p^{(ell)}(0)` by the Leibniz rule, without forming the derivative.
    pub fn derivative_at_zero(&self, ell: usize) -> f64 {
        self.blocks()
            .map(|(e, c)| {
                c.iter()
                    .enumerate()
                    .map(|(j, &cj)| cj * leibniz_at_zero(e.h, j, ell))
                    .sum::<f64>()
            })
            .sum()
    }

    /// `q(t) = p(t / alpha)`, living on the spectrum `h / alpha`.
    pub fn rescale(&self, alpha: f64) -> Result<QuasiPolynomial> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(invalid(format!("rescale factor {alpha} must be positive")));
        }
        let spectrum = self.spectrum.scaled(1.0 / alpha)?;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (e, c) in self.blocks() {
            let mut w = 1.0;
            for (j, &cj) in c.iter().enumerate() {
                if j > 0 {
                    w /= alpha;
                }
                coeffs.push(cj * w);
            }
            debug_assert_eq!(c.len(), e.m);
        }
        Ok(QuasiPolynomial { spectrum, coeffs })
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> QuasiPolynomial {
        QuasiPolynomial {
            spectrum: self.spectrum.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn abs_coeff_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// `sum |c_kj| t^j e^{-h_k t}`. For `t >= (m_max - 1) / h_min` every term is
    /// decreasing, so this bounds `|p(s)|` for all `s >= t`.
    pub fn tail_envelope(&self, t: f64) -> f64 {
        self.blocks()
            .map(|(e, c)| {
                let poly = c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci.abs());
                poly * (-e.h * t).exp()
            })
            .sum()
    }

    /// A horizon `T` past which `|p| <= tol`.
    ///
    /// Starts from `(log S + m log(m/h_min + e) + log(1/tol)) / h_min` with
    /// `S = sum |c|`, clamped to `[10, 1e6] / h_min`, then doubles until the
    /// tail envelope confirms the bound (or the upper clamp is reached).
    pub fn tail_horizon(&self, tol: f64) -> f64 {
        let h = self.spectrum.h_min();
        let m = self.spectrum.max_multiplicity() as f64;
        let lo = (10.0 / h).max((m - 1.0) / h);
        let hi = 1e6 / h;
        let s = self.abs_coeff_sum();
        if s == 0.0 {
            return lo;
        }
        let guess = (s.ln() + m * (m / h + E).ln() + (1.0 / tol).ln()) / h;
        let mut t = guess.clamp(lo, hi);
        while t < hi && self.tail_envelope(t) > tol {
            t = (2.0 * t).min(hi);
        }
        t
    }

    /// Sorted zeros of `p'` in `(0, T]`, `T` the tail horizon for `opts.tol`.
    ///
    /// Sign changes of `p'` are bracketed on a geometric grid with
    /// `points_per_decade * n` points per decade and refined by bisection.
    /// More than `n - 1` sign changes cannot happen for a Chebyshev system, so
    /// that outcome is reported as a resolution failure.
    pub fn critical_points(&self, opts: &SupNormOptions) -> Result<Vec<f64>> {
        let n = self.spectrum.degree();
        if n < 2 {
            return Ok(Vec::new());
        }
        let dp = self.derivative(1);
        let horizon = self.tail_horizon(opts.tol);
        let grid = geometric_grid(
            opts.t_lo / self.spectrum.h_max(),
            horizon,
            opts.points_per_decade * n,
        );

        let mut roots = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for &t in &grid {
            let v = dp.evaluate(t);
            if v == 0.0 {
                continue;
            }
            if let Some((ta, va)) = prev {
                if va.signum() != v.signum() {
                    roots.push(bisect(&dp, ta, t, va, opts.bisect_tol));
                }
            }
            prev = Some((t, v));
        }
        if roots.len() > n - 1 {
            return Err(Error::ResolutionTooCoarse(format!(
                "found {} sign changes of p' but at most {} are possible",
                roots.len(),
                n - 1
            )));
        }
        Ok(roots)
    }

    /// `sup_{t >= 0} |p(t)|` and a maximizer.
    pub fn sup_norm(&self, opts: &SupNormOptions) -> Result<SupNorm> {
        let mut best = SupNorm {
            value: self.evaluate(0.0).abs(),
            argmax: 0.0,
        };
        for t in self.critical_points(opts)? {
            let v = self.evaluate(t).abs();
            if v > best.value {
                best = SupNorm {
                    value: v,
                    argmax: t,
                };
            }
        }
        Ok(best)
    }
}

/// `0` followed by geometrically spaced points from `lo` to `hi`.
pub(crate) fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10().max(1.0);
    let count = (decades * per_decade as f64).ceil() as usize;
    let ratio = (hi / lo).ln() / count as f64;
    let mut grid = Vec::with_capacity(count + 2);
    grid.push(0.0);
    grid.extend((0..=count).map(|i| lo * (ratio * i as f64).exp()));
    grid
}

fn bisect(f: &QuasiPolynomial, mut a: f64, mut b: f64, fa: f64, tol: f64) -> f64 {
    let sa = fa.signum();
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let v = f.evaluate(mid);
        if v == 0.0 {
            return mid;
        }
        if v.signum() == sa {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
