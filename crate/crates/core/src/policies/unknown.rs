//! Query design when each player's crossover probability is unknown and
//! tracked jointly with the target.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::{h, Nats};
use crate::joint::JointGridPosterior;

/// Two boundaries whose gains differ by less than this count as tied.
const TIE_TOL: f64 = 1e-12;

/// Best threshold query `[0, x)` for one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnknownEpsQuery {
    pub x: f64,
    pub gain: Nats,
    /// Number of grid boundaries attaining the maximum.
    pub multiplicity: usize,
}

/// Probability that player `u` says "yes" to `[0, x_k)` for every grid
/// boundary `x_k = k Δ`, `k = 0..=cells`.
pub fn yes_probability_curve(jp: &JointGridPosterior, u: usize) -> Result<Vec<(f64, f64)>> {
    let sub = jp.sub_marginal(u)?;
    let nodes = jp.axes()[u].nodes();
    let n = jp.x_cells();
    // mu[ix] = sum_e eps * p(ix, e), p[ix] = sum_e p(ix, e)
    let mut mu = vec![0.0; n];
    let mut p = vec![0.0; n];
    for ix in 0..n {
        for (ie, &e) in nodes.iter().enumerate() {
            let m = sub.get(ix, ie);
            mu[ix] += e * m;
            p[ix] += m;
        }
    }
    let mut below = 0.0;
    let mut above: f64 = p.iter().zip(&mu).map(|(p, m)| p - m).sum();
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.0, below + above));
    for ix in 0..n {
        below += mu[ix];
        above -= p[ix] - mu[ix];
        out.push(((ix + 1) as f64 / n as f64, below + above.max(0.0)));
    }
    Ok(out)
}

/// Expected information `h(g(x)) - E[h(ε_u)]` from asking player `u`
/// about `[0, x)`, at every grid boundary.
pub fn unknown_eps_gain_curve(jp: &JointGridPosterior, u: usize) -> Result<Vec<(f64, f64)>> {
    let noise = jp.expected_noise_entropy(u)?;
    Ok(yes_probability_curve(jp, u)?
        .into_iter()
        .map(|(x, g)| (x, h(g.clamp(0.0, 1.0)) - noise))
        .collect())
}

/// The first boundary maximizing [`unknown_eps_gain_curve`].
pub fn unknown_eps_query(jp: &JointGridPosterior, u: usize) -> Result<UnknownEpsQuery> {
    let curve = unknown_eps_gain_curve(jp, u)?;
    let (x, best) = curve
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, (x, g)| if g > acc.1 { (x, g) } else { acc });
    let multiplicity = curve.iter().filter(|(_, g)| best - g < TIE_TOL).count();
    if multiplicity > 1 {
        log::debug!("player {u}: {multiplicity} boundaries tie at gain {best}, using x = {x}");
    }
    Ok(UnknownEpsQuery {
        x,
        gain: Nats(best),
        multiplicity,
    })
}

/// The player with the largest achievable gain, lowest index on ties.
pub fn unknown_eps_select_player(jp: &JointGridPosterior) -> Result<(usize, UnknownEpsQuery)> {
    if jp.players() == 0 {
        return Err(Error::NoPlayers);
    }
    let mut best: Option<(usize, UnknownEpsQuery)> = None;
    for u in 0..jp.players() {
        let q = unknown_eps_query(jp, u)?;
        if best.map_or(true, |(_, b)| q.gain.0 > b.gain.0) {
            best = Some((u, q));
        }
    }
    Ok(best.expect("at least one player"))
}
