//! The Laguerre-weighted Chebyshev polynomial `R_{n-1}`, the uniform
//! constants `m_{l,n}` over the unit cube, and their closed-form brackets.
//!
//! On the confluent spectrum `h = (1, ..., 1)` the basis is `t^j e^{-t}`, so the
//! coefficients of `T_e = e^{-t} R_{n-1}(t)` are exactly the algebraic
//! coefficients of `R_{n-1}`. Closed-form bounds are evaluated in exact
//! rational arithmetic and rounded to `f64` only at the end.

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::quasipoly::ExpSpectrum;
use crate::remez::{
    chebyshev_polynomial, ChebyshevCertificate, MarkovConstant, Method, RemezOptions,
};

pub const MAX_DEGREE: usize = 64;

/// Relative agreement required between the two routes to `m_{l,n}`.
const ROUTE_AGREEMENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LaguerreChebyshev {
    pub n: usize,
    /// Coefficients of `R_{n-1}` in ascending powers.
    pub r_coeffs: Vec<f64>,
    pub certificate: ChebyshevCertificate,
    /// `|R^{(j)}(0)|` for `j = 0..n-1`.
    pub derivatives_at_zero: Vec<f64>,
}

impl LaguerreChebyshev {
    /// Signed `R^{(j)}(0) = j! r_j`; zero for `j >= n`.
    pub fn r_derivative_at_zero(&self, j: usize) -> f64 {
        self.r_coeffs
            .get(j)
            .map_or(0.0, |c| c * (1..=j).map(|i| i as f64).product::<f64>())
    }
}

pub fn laguerre_chebyshev(n: usize, opts: &RemezOptions) -> Result<LaguerreChebyshev> {
    if n == 0 || n > MAX_DEGREE {
        return Err(invalid(format!("n = {n} outside 1..={MAX_DEGREE}")));
    }
    let certificate = chebyshev_polynomial(&ExpSpectrum::confluent(1.0, n)?, opts)?;
    let r_coeffs = certificate.polynomial.coeffs().to_vec();
    let mut lc = LaguerreChebyshev {
        n,
        r_coeffs,
        certificate,
        derivatives_at_zero: Vec::new(),
    };
    lc.derivatives_at_zero = (0..n).map(|j| lc.r_derivative_at_zero(j).abs()).collect();
    Ok(lc)
}

/// `m_{l,n} = |T_e^{(l)}(0)|`, cross-checked against
/// `1 + sum_{j=1}^{l} C(l, j) |R^{(j)}(0)|`.
pub fn m_uniform(ell: usize, n: usize, opts: &RemezOptions) -> Result<MarkovConstant> {
    if ell == 0 {
        return Err(invalid("derivative order must be at least 1"));
    }
    let lc = laguerre_chebyshev(n, opts)?;
    let direct = lc.certificate.polynomial.derivative_at_zero(ell).abs();
    let summed = binomial_route(&lc, ell);
    if (direct - summed).abs() > ROUTE_AGREEMENT * direct.max(1.0) {
        return Err(Error::InternalInconsistency(format!(
            "m_{{{ell},{n}}}: certificate derivative {direct} vs binomial sum {summed}"
        )));
    }
    Ok(MarkovConstant {
        spectrum: lc.certificate.polynomial.spectrum().clone(),
        ell,
        value: direct,
        method: if n == 1 {
            Method::ClosedForm
        } else {
            Method::Remez
        },
        certificate: Some(lc.certificate),
    })
}

fn binomial_route(lc: &LaguerreChebyshev, ell: usize) -> f64 {
    1.0 + (1..=ell.min(lc.n - 1))
        .map(|j| binomial(ell as u64, j as u64) as f64 * lc.derivatives_at_zero[j])
        .sum::<f64>()
}

fn factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn big_binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact Sklyarov bracket for `|R_{n-1}^{(l)}(0)|`. Both ends are zero when
/// `l > n - 1`.
pub fn sklyarov_bounds_exact(ell: usize, n: usize) -> Result<(BigRational, BigRational)> {
    if ell == 0 || !(2..=MAX_DEGREE).contains(&n) {
        return Err(invalid(format!("need l >= 1 and 2 <= n <= {MAX_DEGREE}")));
    }
    if ell > n - 1 {
        return Ok((BigRational::zero(), BigRational::zero()));
    }
    let num = BigInt::from(8).pow(ell as u32) * factorial(n - 1) * factorial(ell);
    let den = factorial(n - 1 - ell) * factorial(2 * ell);
    let upper = BigRational::new(num, den);
    let correction =
        BigRational::one() - BigRational::new(BigInt::from(ell), BigInt::from(2 * (n - 1)));
    Ok((&upper * correction, upper))
}

/// `(lower, upper)` of the Sklyarov bracket, rounded to `f64`.
pub fn sklyarov_bounds(ell: usize, n: usize) -> Result<(f64, f64)> {
    let (lo, hi) = sklyarov_bounds_exact(ell, n)?;
    Ok((to_f64(&lo), to_f64(&hi)))
}

/// Exact bracket on `m_{l,n}`:
/// `sum_{j=0}^{l} (1 - j/(2(n-1))) 8^j C(n-1,j) C(l,j) / C(2j,j)` and the same
/// sum without the correction factor.
pub fn markov3_bounds_exact(ell: usize, n: usize) -> Result<(BigRational, BigRational)> {
    if ell == 0 || !(2..=MAX_DEGREE).contains(&n) {
        return Err(invalid(format!("need l >= 1 and 2 <= n <= {MAX_DEGREE}")));
    }
    let mut lower = BigRational::zero();
    let mut upper = BigRational::zero();
    for j in 0..=ell.min(n - 1) {
        let term = BigRational::new(
            BigInt::from(8).pow(j as u32) * big_binomial(n - 1, j) * big_binomial(ell, j),
            big_binomial(2 * j, j),
        );
        let correction =
            BigRational::one() - BigRational::new(BigInt::from(j), BigInt::from(2 * (n - 1)));
        lower += &term * correction;
        upper += term;
    }
    Ok((lower, upper))
}

pub fn markov3_bounds(ell: usize, n: usize) -> Result<(f64, f64)> {
    let (lo, hi) = markov3_bounds_exact(ell, n)?;
    Ok((to_f64(&lo), to_f64(&hi)))
}

/// `(16 n^2 - 24 n + 11) / 3`, the `l = 2` case of the upper bracket.
pub fn k2_bound(n: usize) -> Result<BigRational> {
    if n < 2 {
        return Err(invalid("k2 bound needs n >= 2"));
    }
    let n = BigInt::from(n);
    let num = BigInt::from(16) * &n * &n - BigInt::from(24) * &n + BigInt::from(11);
    Ok(BigRational::new(num, BigInt::from(3)))
}

/// Serializes a rational as a `"p/q"` string (or `"p"` when integral).
pub fn rational_string(r: &BigRational) -> String {
    r.to_string()
}

fn ser_rational<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(r))
}

fn ser_opt_rational<S: Serializer>(
    r: &Option<BigRational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&rational_string(r)),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub ell: usize,
    /// `|R_{n-1}^{(l)}(0)|` from the certificate.
    pub r_derivative: f64,
    pub sklyarov_lower: f64,
    pub sklyarov_upper: f64,
    pub m_lower: f64,
    pub m_upper: f64,
    #[serde(serialize_with = "ser_rational")]
    pub m_upper_exact: BigRational,
    #[serde(serialize_with = "ser_opt_rational")]
    pub k2_upper: Option<BigRational>,
    pub m_exact: f64,
}

pub fn bounds_report(ell: usize, n: usize, opts: &RemezOptions) -> Result<BoundsReport> {
    let (sklyarov_lower, sklyarov_upper) = sklyarov_bounds(ell, n)?;
    let (lo, hi) = markov3_bounds_exact(ell, n)?;
    let lc = laguerre_chebyshev(n, opts)?;
    let m = m_uniform(ell, n, opts)?;
    Ok(BoundsReport {
        n,
        ell,
        r_derivative: lc.r_derivative_at_zero(ell).abs(),
        sklyarov_lower,
        sklyarov_upper,
        m_lower: to_f64(&lo),
        m_upper: to_f64(&hi),
        m_upper_exact: hi,
        k2_upper: (ell == 2).then(|| k2_bound(n)).transpose()?,
        m_exact: m.value,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub n: usize,
    /// `m_{l,n}`, or `None` if the computation failed for this row.
    pub m: Option<f64>,
    #[serde(serialize_with = "ser_rational")]
    pub markov3_upper: BigRational,
    #[serde(serialize_with = "ser_opt_rational")]
    pub k2: Option<BigRational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub ell: usize,
    pub rows: Vec<TableRow>,
}

/// Rows `n = 2..=n_max` of `m_{l,n}` against the closed-form upper bound.
/// A failing row records its error and the other rows are still computed.
pub fn table(ell: usize, n_max: usize, opts: &RemezOptions) -> Result<Table> {
    if ell == 0 {
        return Err(invalid("derivative order must be at least 1"));
    }
    if !(2..=32).contains(&n_max) {
        return Err(invalid(format!("n_max = {n_max} outside 2..=32")));
    }
    let rows = (2..=n_max)
        .into_par_iter()
        .map(|n| {
            let (_, upper) = markov3_bounds_exact(ell, n)?;
            let k2 = (ell == 2).then(|| k2_bound(n)).transpose()?;
            let (m, error) = match m_uniform(ell, n, opts) {
                Ok(c) => (Some(c.value), None),
                Err(e) => (None, Some(e.name().to_string())),
            };
            Ok(TableRow {
                n,
                m,
                markov3_upper: upper,
                k2,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { ell, rows })
}

impl Table {
    /// CSV with header `n,m,markov3_upper,k2,error`; `format_float`
    /// renders `m`, which is empty on rows that failed.
    pub fn to_csv(&self, format_float: impl Fn(f64) -> String) -> String {
        let mut out = String::from("n,m,markov3_upper,k2,error\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.n,
                row.m.map(&format_float).unwrap_or_default(),
                rational_string(&row.markov3_upper),
                row.k2.as_ref().map(rational_string).unwrap_or_default(),
                row.error.as_deref().unwrap_or_default(),
            ));
        }
        out
    }
}
