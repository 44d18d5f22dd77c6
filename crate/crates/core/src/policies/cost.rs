//! Trading information against per-query cost.

use serde::Serialize;

use crate::error::{check_unit, Error, Result};
use crate::info::{capacity_unchecked, phi_unchecked, BinaryPmf};
use crate::players::PlayerModel;
use crate::posterior::{GridPosterior, Measure, QueryRegion};

/// Running record of who was asked and what it cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    pub total: f64,
    pub per_step: Vec<(usize, f64)>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, player: usize, cost: f64) {
        self.total += cost;
        self.per_step.push((player, cost));
    }

    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )))
    }
}

fn player(players: &[PlayerModel], u: usize) -> Result<&PlayerModel> {
    players.get(u).ok_or(Error::InvalidPlayer {
        index: u,
        count: players.len(),
    })
}

/// `φ(P(A)) - γ K(u)` for a constant-error player `u`.
pub fn gain_with_cost(
    u: usize,
    region: &QueryRegion,
    posterior: &GridPosterior,
    gamma: f64,
    players: &[PlayerModel],
) -> Result<f64> {
    check_gamma(gamma)?;
    let p = player(players, u)?;
    let eps = p.constant_eps().ok_or(Error::NonConstantChannel(u))?;
    let (f0, f1) = BinaryPmf::bsc_pair(eps)?;
    let mass = check_unit(posterior.measure(region)?.clamp(0.0, 1.0))?;
    Ok(phi_unchecked(mass, &f0, &f1) - gamma * p.cost)
}

/// `argmax_u C(ε_u) - γ K(u)` over constant-error players, lowest index on ties.
pub fn select_player_cost(players: &[PlayerModel], gamma: f64) -> Result<usize> {
    for (u, p) in players.iter().enumerate() {
        if !p.is_constant() {
            return Err(Error::NonConstantChannel(u));
        }
    }
    select_player_cost_at(players, gamma, 0.0)
}

/// Like [`select_player_cost`], evaluating each player's crossover
/// probability at localization error `distance`.
pub fn select_player_cost_at(players: &[PlayerModel], gamma: f64, distance: f64) -> Result<usize> {
    check_gamma(gamma)?;
    if players.is_empty() {
        return Err(Error::NoPlayers);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (u, p) in players.iter().enumerate() {
        let score = capacity_unchecked(p.error_prob(distance)) - gamma * p.cost;
        if score > best.1 {
            best = (u, score);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn priced(eps: f64, cost: f64) -> PlayerModel {
        PlayerModel::bsc(eps).unwrap().with_cost(cost).unwrap()
    }

    #[test]
    fn gain_examples() {
        let u = GridPosterior::uniform(100).unwrap();
        let half = QueryRegion::interval(0.0, 0.5).unwrap();
        let players = [priced(0.4, 0.01)];
        let g = gain_with_cost(0, &half, &u, 1.0, &players).unwrap();
        assert!((g - 0.010_135_513_550_688_873).abs() < 1e-12);
        let free = gain_with_cost(0, &half, &u, 0.0, &players).unwrap();
        assert!((free - 0.020_135_513_550_688_873).abs() < 1e-12);
        let steep = [priced(0.4, 1.0)];
        assert!(gain_with_cost(0, &half, &u, 1.0, &steep).unwrap() < 0.0);
        assert!(matches!(
            gain_with_cost(3, &half, &u, 1.0, &players),
            Err(Error::InvalidPlayer { index: 3, count: 1 })
        ));
    }

    #[test]
    fn selection_examples() {
        let players = [priced(0.3, 0.08), priced(0.4, 0.001)];
        assert_eq!(select_player_cost(&players, 1.0).unwrap(), 1);
        assert_eq!(select_player_cost(&players, 0.0).unwrap(), 0);
        let tied = [priced(0.3, 0.0), priced(0.3, 0.0)];
        assert_eq!(select_player_cost(&tied, 1.0).unwrap(), 0);
    }

    #[test]
    fn selection_invariant_to_common_cost_shift() {
        let base = [(0.3, 0.08), (0.4, 0.001), (0.2, 0.2)];
        for gamma in [0.0, 0.3, 1.0, 2.0] {
            let want = select_player_cost(&base.map(|(e, k)| priced(e, k)), gamma).unwrap();
            for shift in [0.0, 0.5, 3.0] {
                let shifted = base.map(|(e, k)| priced(e, k + shift));
                assert_eq!(select_player_cost(&shifted, gamma).unwrap(), want);
            }
        }
    }

    #[test]
    fn humans_need_a_distance() {
        let players = [PlayerModel::human(0.4, 0.45, 2.0).unwrap(), priced(0.4, 0.0)];
        assert_eq!(select_player_cost(&players, 0.0), Err(Error::NonConstantChannel(0)));
        // far from the target the human answers with error 0.1
        assert_eq!(select_player_cost_at(&players, 0.0, 1.0).unwrap(), 0);
        // right on top of it the human is useless
        assert_eq!(select_player_cost_at(&players, 0.0, 0.0).unwrap(), 1);
    }

    #[test]
    fn ledger_sums() {
        let mut l = CostLedger::new();
        l.record(0, 0.5);
        l.record(1, 0.25);
        assert_eq!(l.total, l.per_step.iter().map(|s| s.1).sum::<f64>());
        assert_eq!(l.len(), 2);
    }
}
