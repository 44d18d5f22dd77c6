//! Batch queries: all players answer simultaneously.

use crate::error::{check_open_half, Error, Result};
use crate::info::{h, xlnx_neg, Nats};
use crate::posterior::{dyadic_partition, GridPosterior, Measure, QueryRegion};

/// Largest batch `joint_gain` enumerates (`4^M` terms).
pub const MAX_JOINT_PLAYERS: usize = 8;

/// Expected entropy loss when player `m` answers "is X in `regions[m]`?"
/// through a BSC with crossover `eps[m]`, all at once.
///
/// Enumerates the `2^M` dyadic cells and `2^M` answer vectors.
pub fn joint_gain<M: Measure + ?Sized>(
    measure: &M,
    regions: &[QueryRegion],
    eps: &[f64],
) -> Result<Nats> {
    if regions.is_empty() {
        return Err(Error::NoPlayers);
    }
    if regions.len() > MAX_JOINT_PLAYERS {
        return Err(Error::TooManyPlayers {
            max: MAX_JOINT_PLAYERS,
            got: regions.len(),
        });
    }
    if eps.len() != regions.len() {
        return Err(Error::DimensionMismatch {
            expected: regions.len(),
            got: eps.len(),
        });
    }
    for &e in eps {
        check_open_half(e)?;
    }
    for r in regions {
        r.expect_dim(measure.dim())?;
    }
    let m = regions.len();
    let cells: Vec<f64> = dyadic_partition(regions)?
        .iter()
        .map(|c| measure.measure(&c.region))
        .collect::<Result<_>>()?;
    let total: f64 = cells.iter().sum();

    let mut output_entropy = 0.0;
    for y in 0..1usize << m {
        let mut q = 0.0;
        for (i, &p) in cells.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut lik = 1.0;
            for (j, &e) in eps.iter().enumerate() {
                let inside = i >> j & 1 == 1;
                let says_yes = y >> j & 1 == 1;
                lik *= if inside == says_yes { 1.0 - e } else { e };
            }
            q += p * lik;
        }
        output_entropy += xlnx_neg(q / total);
    }
    let noise_entropy: f64 = eps.iter().map(|&e| h(e)).sum();
    Ok(Nats(output_entropy - noise_entropy))
}

/// Equalizing 1-D batch queries for one or two players.
///
/// `M = 1` bisects; `M = 2` maps `[1/8, 5/8)` and `[3/8, 7/8)` through the
/// posterior quantile function so that all four dyadic cells get mass 1/4.
pub fn construct_joint_queries_1d(posterior: &GridPosterior, m: usize) -> Result<Vec<QueryRegion>> {
    let q = |p: f64| posterior.quantile(p);
    match m {
        1 => Ok(vec![QueryRegion::interval(0.0, q(0.5))?]),
        2 => Ok(vec![
            QueryRegion::interval(q(0.125), q(0.625))?,
            QueryRegion::interval(q(0.375), q(0.875))?,
        ]),
        0 => Err(Error::NoPlayers),
        got => Err(Error::TooManyPlayers { max: 2, got }),
    }
}
