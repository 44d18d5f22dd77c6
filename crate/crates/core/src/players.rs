//! Noisy responders: constant-error machines and distance-dependent humans.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_half, Error, Result};

/// How a player's answers are corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Channel {
    /// Binary symmetric channel with a fixed crossover probability.
    Bsc { eps: f64 },
    /// Human error that grows as the estimate closes in on the target:
    /// `1/2 - min(delta0, mu * d^(kappa-1))` at localization error `d`.
    Human { delta0: f64, mu: f64, kappa: f64 },
}

/// A responder's noise law plus its per-query cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerModel {
    #[serde(flatten)]
    pub channel: Channel,
    #[serde(default)]
    pub cost: f64,
}

impl PlayerModel {
    pub fn bsc(eps: f64) -> Result<Self> {
        PlayerModel {
            channel: Channel::Bsc { eps },
            cost: 0.0,
        }
        .validated()
    }

    pub fn human(delta0: f64, mu: f64, kappa: f64) -> Result<Self> {
        PlayerModel {
            channel: Channel::Human { delta0, mu, kappa },
            cost: 0.0,
        }
        .validated()
    }

    pub fn with_cost(mut self, cost: f64) -> Result<Self> {
        self.cost = cost;
        self.validated()
    }

    /// Checks the parameter ranges.
    pub fn validated(self) -> Result<Self> {
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(Error::InvalidPlayerModel(format!(
                "cost must be nonnegative, got {}",
                self.cost
            )));
        }
        match self.channel {
            Channel::Bsc { eps } => {
                check_open_half(eps)?;
            }
            Channel::Human { delta0, mu, kappa } => {
                if !(kappa > 1.0 && kappa.is_finite()) {
                    return Err(Error::InvalidPlayerModel(format!(
                        "human kappa must exceed 1, got {kappa}"
                    )));
                }
                if !(0.0 < delta0 && delta0 < mu && mu < 0.5) {
                    return Err(Error::InvalidPlayerModel(format!(
                        "human parameters need 0 < delta0 < mu < 1/2, got delta0={delta0}, mu={mu}"
                    )));
                }
            }
        }
        Ok(self)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.channel, Channel::Bsc { .. })
    }

    /// Crossover probability when the current estimate sits `distance` from the target.
    pub fn error_prob(&self, distance: f64) -> f64 {
        match self.channel {
            Channel::Bsc { eps } => eps,
            Channel::Human { delta0, mu, kappa } => {
                let d = distance.abs();
                0.5 - delta0.min(mu * d.powf(kappa - 1.0))
            }
        }
    }

    /// The fixed crossover probability, if the channel has one.
    pub fn constant_eps(&self) -> Option<f64> {
        match self.channel {
            Channel::Bsc { eps } => Some(eps),
            Channel::Human { .. } => None,
        }
    }

    /// Noisy answer to a question whose true answer is `truth`.
    pub fn respond<R: Rng + ?Sized>(&self, truth: bool, distance: f64, rng: &mut R) -> bool {
        respond_with_error(truth, self.error_prob(distance), rng)
    }
}

/// Flips `truth` with probability `error`. Consumes exactly one uniform draw.
pub fn respond_with_error<R: Rng + ?Sized>(truth: bool, error: f64, rng: &mut R) -> bool {
    let flip = rng.gen::<f64>() < error;
    truth ^ flip
}
