//! Entropy, channel capacity and single-query gain primitives.
//!
//! Everything is measured in nats. Bit-valued quantities are recovered with
//! [`Nats::bits`].

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};

use crate::error::{check_open_half, check_unit, Error, Result};
use crate::posterior::GridPosterior;

/// An entropy or information quantity in nats.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, serde::Serialize)]
#[serde(transparent)]
pub struct Nats(pub f64);

impl Nats {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn bits(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }

    pub fn from_bits(bits: f64) -> Self {
        Nats(bits * std::f64::consts::LN_2)
    }
}

impl Add for Nats {
    type Output = Nats;
    fn add(self, rhs: Nats) -> Nats {
        Nats(self.0 + rhs.0)
    }
}

impl Sub for Nats {
    type Output = Nats;
    fn sub(self, rhs: Nats) -> Nats {
        Nats(self.0 - rhs.0)
    }
}

impl Sum for Nats {
    fn sum<I: Iterator<Item = Nats>>(iter: I) -> Nats {
        Nats(iter.map(|n| n.0).sum())
    }
}

impl fmt::Display for Nats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

/// `-x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlnx_neg(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

/// A probability mass function over the response alphabet `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryPmf {
    p0: f64,
    p1: f64,
}

impl BinaryPmf {
    const TOL: f64 = 1e-12;

    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        let ok = p0.is_finite()
            && p1.is_finite()
            && p0 >= 0.0
            && p1 >= 0.0
            && (p0 + p1 - 1.0).abs() <= Self::TOL;
        if ok {
            Ok(BinaryPmf { p0, p1 })
        } else {
            Err(Error::InvalidPmf(p0, p1))
        }
    }

    pub fn prob(&self, y: bool) -> f64 {
        if y {
            self.p1
        } else {
            self.p0
        }
    }

    pub fn entropy(&self) -> Nats {
        Nats(xlnx_neg(self.p0) + xlnx_neg(self.p1))
    }

    /// Response laws `(f0, f1)` of a binary symmetric channel: `f_z` is the
    /// distribution of the answer when the truth bit is `z`.
    pub fn bsc_pair(eps: f64) -> Result<(BinaryPmf, BinaryPmf)> {
        check_unit(eps)?;
        Ok((
            BinaryPmf {
                p0: 1.0 - eps,
                p1: eps,
            },
            BinaryPmf {
                p0: eps,
                p1: 1.0 - eps,
            },
        ))
    }
}

/// Binary entropy `h(p) = -p ln p - (1-p) ln(1-p)`.
pub fn binary_entropy(p: f64) -> Result<Nats> {
    check_unit(p)?;
    Ok(Nats(h(p)))
}

/// Unchecked binary entropy for callers that already validated `p`.
#[inline]
pub(crate) fn h(p: f64) -> f64 {
    xlnx_neg(p) + xlnx_neg(1.0 - p)
}

/// Differential entropy of a piecewise-constant grid density on `[0, 1]`.
pub fn grid_entropy(posterior: &GridPosterior) -> Nats {
    let delta = posterior.delta();
    Nats(
        posterior
            .masses()
            .iter()
            .filter(|&&a| a > 0.0)
            .map(|&a| -a * (a / delta).ln())
            .sum(),
    )
}

/// Capacity of a binary symmetric channel, `ln 2 - h(eps)`.
pub fn capacity_bsc(eps: f64) -> Result<Nats> {
    check_open_half(eps)?;
    Ok(Nats(capacity_unchecked(eps)))
}

#[inline]
pub(crate) fn capacity_unchecked(eps: f64) -> f64 {
    std::f64::consts::LN_2 - h(eps)
}

/// Rate exponent `1/2 - sqrt(eps (1 - eps))` of the discretized-bisection tail bound.
pub fn cbar(eps: f64) -> Result<f64> {
    check_open_half(eps)?;
    Ok(cbar_unchecked(eps))
}

#[inline]
pub(crate) fn cbar_unchecked(eps: f64) -> f64 {
    0.5 - (eps * (1.0 - eps)).sqrt()
}

/// Expected entropy reduction of a single query holding posterior mass `u`:
/// `H(u f1 + (1-u) f0) - u H(f1) - (1-u) H(f0)`.
pub fn phi_gain(u: f64, f0: &BinaryPmf, f1: &BinaryPmf) -> Result<Nats> {
    check_unit(u)?;
    Ok(Nats(phi_unchecked(u, f0, f1)))
}

pub(crate) fn phi_unchecked(u: f64, f0: &BinaryPmf, f1: &BinaryPmf) -> f64 {
    let mix1 = u * f1.p1 + (1.0 - u) * f0.p1;
    let mix = xlnx_neg(mix1) + xlnx_neg(1.0 - mix1);
    // clamp tiny negative rounding residue
    (mix - u * f1.entropy().0 - (1.0 - u) * f0.entropy().0).max(0.0)
}

/// Default tolerance for [`argmax_phi`].
pub const ARGMAX_TOL: f64 = 1e-9;

/// Maximizer of [`phi_gain`] over `[0, 1]`.
///
/// `phi` is concave, so this bisects on the sign of its derivative
/// `(f1(1) - f0(1)) ln((1-q)/q) - H(f1) + H(f0)`, `q = P(Y = 1)`.
pub fn argmax_phi(f0: &BinaryPmf, f1: &BinaryPmf, tol: f64) -> f64 {
    let tol = if tol > 0.0 { tol } else { ARGMAX_TOL };
    let slope = f1.p1 - f0.p1;
    if slope == 0.0 {
        // identical channels carry no information anywhere
        return 0.5;
    }
    let offset = f0.entropy().0 - f1.entropy().0;
    let deriv = |u: f64| {
        let q = u * f1.p1 + (1.0 - u) * f0.p1;
        slope * ((1.0 - q) / q).ln() + offset
    };
    if deriv(0.0) <= 0.0 {
        return 0.0;
    }
    if deriv(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
