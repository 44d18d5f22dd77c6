//! Closed-form MSE bounds for noisy bisection.
//!
//! Rates are in nats per cycle. `cbar_total` is the sum of
//! [`cbar`](crate::info::cbar) over the machines queried in one cycle and
//! `c_total` the matching sum of capacities.

use std::f64::consts::{E, PI};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::Serialize;

use crate::info::cbar_unchecked;

/// `2^{-2/3} + 2^{1/3}`.
pub fn upper_constant() -> f64 {
    2f64.powf(-2.0 / 3.0) + 2f64.cbrt()
}

/// Bound values indexed by iteration count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    pub n_values: Vec<u64>,
    pub values: Vec<f64>,
}

impl BoundCurve {
    pub fn evaluate(n_values: impl IntoIterator<Item = u64>, f: impl Fn(u64) -> f64) -> Self {
        let n_values: Vec<u64> = n_values.into_iter().collect();
        let values = n_values.iter().map(|&n| f(n)).collect();
        BoundCurve { n_values, values }
    }

    pub fn is_non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `e^{2 H0} / (2πe) · d · exp(-2 n C / d)`.
pub fn mse_lower_bound(n: u64, c_total: f64, d: u32, h0: f64) -> f64 {
    let d = f64::from(d);
    (2.0 * h0).exp() / (2.0 * PI * E) * d * (-2.0 * n as f64 * c_total / d).exp()
}

/// Same form as [`mse_lower_bound`], applied to the joint `(X, ε)` estimate
/// with `cbar_n` the running mean of the per-step gains.
pub fn mse_lower_bound_unknown(n: u64, cbar_n: f64, d_total: u32, h0: f64) -> f64 {
    mse_lower_bound(n, cbar_n, d_total, h0)
}

/// Tail bound on `P(|X_n - X*| > Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub raw: f64,
    pub clipped: f64,
}

/// `(1/Δ - 1) exp(-n C̄)`.
pub fn tail_upper_bound(n: u64, delta: f64, cbar_total: f64) -> TailBound {
    let raw = (1.0 / delta - 1.0) * (-(n as f64) * cbar_total).exp();
    TailBound {
        raw,
        clipped: raw.clamp(0.0, 1.0),
    }
}

/// `Δ² + (1 - Δ²) · tail`.
pub fn lemma_expectation_bound(delta: f64, tail_prob: f64) -> f64 {
    delta * delta + (1.0 - delta * delta) * tail_prob
}

/// `(2^{-2/3} + 2^{1/3}) exp(-(2/3) n C̄)`.
pub fn mse_upper_bound(n: u64, cbar_total: f64) -> f64 {
    upper_constant() * (-2.0 / 3.0 * n as f64 * cbar_total).exp()
}

/// The `Δ` minimizing `Δ² + Δ^{-1} e^{-n C̄}`: `2^{-1/3} e^{-n C̄ / 3}`.
pub fn optimal_delta(n: u64, cbar_total: f64) -> f64 {
    2f64.powf(-1.0 / 3.0) * (-(n as f64) * cbar_total / 3.0).exp()
}

static KAPPA_WARNED: AtomicBool = AtomicBool::new(false);

fn note_kappa(kappa: f64) {
    if kappa < 2.0 && !KAPPA_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("kappa = {kappa} is outside the kappa >= 2 regime the human bound is stated for");
    }
}

/// Extra rate a human contributes at resolution `Δ`: `(μ²/50)(3Δ/4)^{2κ-2}`.
pub fn human_rate(mu: f64, kappa: f64, delta: f64) -> f64 {
    mu * mu / 50.0 * (0.75 * delta).powf(2.0 * kappa - 2.0)
}

/// `Δ² + Δ^{-1} exp(-n [C̄(ε₁) + human_rate(Δ)])` for one machine and one human.
pub fn human_mse_bound(n: u64, eps1: f64, mu: f64, kappa: f64, delta: f64) -> f64 {
    note_kappa(kappa);
    let rate = cbar_unchecked(eps1) + human_rate(mu, kappa, delta);
    delta * delta + (-(n as f64) * rate).exp() / delta
}

/// [`human_mse_bound`] at `Δ = optimal_delta(n, C̄(ε₁))`, in closed form.
pub fn human_mse_bound_opt(n: u64, eps1: f64, mu: f64, kappa: f64) -> f64 {
    note_kappa(kappa);
    let cb = cbar_unchecked(eps1);
    let inner = hgr_inner_exponent(n, kappa, mu, eps1);
    (-2.0 / 3.0 * n as f64 * cb).exp() * (2f64.powf(-2.0 / 3.0) + 2f64.cbrt() * (-inner).exp())
}

/// `(μ²/50)(3·2^{-1/3}/4)^{2κ-2} · n · e^{-n C̄(ε₁)(2κ-2)/3}`.
pub fn hgr_inner_exponent(n: u64, kappa: f64, mu: f64, eps1: f64) -> f64 {
    let n = n as f64;
    let k2 = 2.0 * kappa - 2.0;
    mu * mu / 50.0
        * (0.75 * 2f64.powf(-1.0 / 3.0)).powf(k2)
        * n
        * (-n * cbar_unchecked(eps1) * k2 / 3.0).exp()
}

/// Ratio of the machine-alone upper bound to the machine-plus-human one.
pub fn hgr(n: u64, kappa: f64, mu: f64, eps1: f64) -> f64 {
    let inner = hgr_inner_exponent(n, kappa, mu, eps1);
    upper_constant() / (2f64.powf(-2.0 / 3.0) + 2f64.cbrt() * (-inner).exp())
}

/// Bounds for a team of constant-error machines and distance-sensitive humans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TeamBounds {
    pub tail: TailBound,
    /// `Δ² + Δ^{-1} exp(-n rate)` at the requested `Δ`.
    pub mse: f64,
    /// The same expression at [`optimal_delta`] for the machines' rate.
    pub mse_opt: f64,
}

/// Tail and MSE bounds for machines `machine_eps` plus humans `(μ, κ)`.
pub fn multi_human_bounds(n: u64, machine_eps: &[f64], humans: &[(f64, f64)], delta: f64) -> TeamBounds {
    let cb: f64 = machine_eps.iter().map(|&e| cbar_unchecked(e)).sum();
    let rate_at = |d: f64| {
        cb + humans
            .iter()
            .map(|&(mu, kappa)| {
                note_kappa(kappa);
                human_rate(mu, kappa, d)
            })
            .sum::<f64>()
    };
    let nf = n as f64;
    let at = |d: f64| d * d + (-nf * rate_at(d)).exp() / d;
    let tail = tail_upper_bound(n, delta, rate_at(delta));
    TeamBounds {
        tail,
        mse: at(delta),
        mse_opt: at(optimal_delta(n, cb)),
    }
}
