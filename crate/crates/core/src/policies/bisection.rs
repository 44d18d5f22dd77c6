//! Posterior bisection, the BZ discretized step and sequential cycles.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{grid_entropy, Nats};
use crate::players::{respond_with_error, PlayerModel};
use crate::posterior::{GridPosterior, Measure, QueryRegion};

/// Lower clamp applied to BZ design parameters.
pub const ALPHA_FLOOR: f64 = 1e-6;

/// Which bisection implementation a cycle uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Query `[0, median)` and apply the exact Bayes update.
    Exact,
    /// Randomized cell-boundary threshold with `2α / 2(1-α)` reweighting.
    #[default]
    Bz,
}

/// Source of answers to "is the target in this region?".
pub trait Oracle {
    fn answer(&mut self, query: &QueryRegion, rng: &mut dyn RngCore) -> Result<bool>;
}

/// Simulated responder: tells the truth about `target` except with probability `error`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedOracle {
    pub target: f64,
    pub error: f64,
}

impl Oracle for SimulatedOracle {
    fn answer(&mut self, query: &QueryRegion, rng: &mut dyn RngCore) -> Result<bool> {
        Ok(respond_with_error(
            query.contains_point(self.target),
            self.error,
            rng,
        ))
    }
}

/// The region `[0, median)`.
pub fn bisect_query(posterior: &GridPosterior) -> QueryRegion {
    QueryRegion::interval(0.0, posterior.median()).expect("median lies in [0, 1]")
}

/// BZ design parameter `sqrt(e) / (sqrt(e) + sqrt(1-e))`, clamped to
/// `[1e-6, 1/2 - 1e-6]`.
pub fn bz_alpha(error: f64) -> f64 {
    let e = error.clamp(0.0, 1.0);
    let a = e.sqrt() / (e.sqrt() + (1.0 - e).sqrt());
    a.clamp(ALPHA_FLOOR, 0.5 - ALPHA_FLOOR)
}

/// State of one BZ chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BzState {
    pub posterior: GridPosterior,
    alpha: f64,
    /// Threshold of the most recent query `[0, t)`.
    pub last_query: Option<f64>,
}

impl BzState {
    pub fn new(posterior: GridPosterior, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::ProbabilityOutOfRange {
                value: alpha,
                range: "(0, 1/2)",
            });
        }
        Ok(BzState {
            posterior,
            alpha,
            last_query: None,
        })
    }

    /// Uses the player's error probability at `distance` to set α.
    pub fn for_player(posterior: GridPosterior, player: &PlayerModel, distance: f64) -> Self {
        BzState {
            posterior,
            alpha: bz_alpha(player.error_prob(distance)),
            last_query: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        *self = BzState::new(self.posterior.clone(), alpha).map(|s| BzState {
            last_query: self.last_query,
            ..s
        })?;
        Ok(())
    }

    /// One BZ iteration.
    ///
    /// The threshold is the right edge of the median cell with probability
    /// `b = (1/2 - cum_before) / a_median` and its left edge otherwise, so the
    /// queried mass is 1/2 in expectation. Cells agreeing with the answer are
    /// scaled by `2(1-α)`, the others by `2α`, and the result renormalized.
    pub fn step<O: Oracle + ?Sized, R: Rng + ?Sized>(&self, oracle: &mut O, rng: &mut R) -> Result<Self> {
        let masses = self.posterior.masses();
        let n = masses.len();
        let mut cum_before = 0.0;
        let mut k = n - 1;
        for (i, &a) in masses.iter().enumerate() {
            if cum_before + a >= 0.5 {
                k = i;
                break;
            }
            cum_before += a;
        }
        let a_k = masses[k];
        let b = if a_k > 0.0 {
            ((0.5 - cum_before) / a_k).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let coin: f64 = rng.gen();
        // query covers cells [0, edge)
        let edge = if coin < b { k + 1 } else { k };
        let threshold = edge as f64 / n as f64;
        let query = QueryRegion::interval(0.0, threshold)?;
        let mut rng_core = RngShim(rng);
        let y = oracle.answer(&query, &mut rng_core)?;
        let up = 2.0 * (1.0 - self.alpha);
        let down = 2.0 * self.alpha;
        let posterior = self
            .posterior
            .reweight(|i| if (i < edge) == y { up } else { down })?;
        Ok(BzState {
            posterior,
            alpha: self.alpha,
            last_query: Some(threshold),
        })
    }
}

/// Adapts any `Rng + ?Sized` to `&mut dyn RngCore`.
struct RngShim<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for RngShim<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// One sequential cycle: each player in order gets a bisection query and
/// the posterior is updated before the next player is asked.
///
/// A player's crossover probability is evaluated at `|x_star - median|`
/// of the posterior current when that player is asked.
pub fn sequential_cycle<R: Rng + ?Sized>(
    posterior: &GridPosterior,
    players: &[PlayerModel],
    x_star: f64,
    backend: Backend,
    rng: &mut R,
) -> Result<GridPosterior> {
    if players.is_empty() {
        return Err(Error::NoPlayers);
    }
    let mut current = posterior.clone();
    for player in players {
        current = query_player(&current, player, x_star, backend, rng)?;
    }
    Ok(current)
}

/// A single bisection query to one simulated player.
pub fn query_player<R: Rng + ?Sized>(
    posterior: &GridPosterior,
    player: &PlayerModel,
    x_star: f64,
    backend: Backend,
    rng: &mut R,
) -> Result<GridPosterior> {
    let distance = (x_star - posterior.median()).abs();
    let error = player.error_prob(distance);
    let mut oracle = SimulatedOracle {
        target: x_star,
        error,
    };
    match backend {
        Backend::Exact => {
            let q = bisect_query(posterior);
            let y = oracle.answer(&q, &mut RngShim(rng))?;
            posterior.bayes_update(&q, y, error.clamp(0.0, 0.5))
        }
        Backend::Bz => {
            let state = BzState::for_player(posterior.clone(), player, distance);
            Ok(state.step(&mut oracle, rng)?.posterior)
        }
    }
}

/// Expected entropy loss of one exact sequential cycle over constant-error
/// players, computed by enumerating all `2^M` answer paths.
pub fn sequential_expected_entropy_loss(posterior: &GridPosterior, eps: &[f64]) -> Result<Nats> {
    if eps.is_empty() {
        return Err(Error::NoPlayers);
    }
    for &e in eps {
        crate::error::check_open_half(e)?;
    }
    fn expected_final_entropy(p: &GridPosterior, eps: &[f64]) -> Result<f64> {
        let Some((&e, rest)) = eps.split_first() else {
            return Ok(grid_entropy(p).0);
        };
        let q = bisect_query(p);
        let pa = p.measure(&q)?;
        let p_yes = (1.0 - e) * pa + e * (1.0 - pa);
        let mut acc = 0.0;
        for (y, py) in [(true, p_yes), (false, 1.0 - p_yes)] {
            if py > 0.0 {
                acc += py * expected_final_entropy(&p.bayes_update(&q, y, e)?, rest)?;
            }
        }
        Ok(acc)
    }
    Ok(Nats(grid_entropy(posterior).0 - expected_final_entropy(posterior, eps)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::capacity_bsc;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Truthful(f64);

    impl Oracle for Truthful {
        fn answer(&mut self, query: &QueryRegion, _rng: &mut dyn RngCore) -> Result<bool> {
            Ok(query.contains_point(self.0))
        }
    }

    #[test]
    fn bisect_examples() {
        let u = GridPosterior::uniform(100).unwrap();
        assert_eq!(bisect_query(&u).intervals_1d(), vec![(0.0, 0.5)]);

        let right = GridPosterior::from_weights((0..100).map(|i| if i < 50 { 0.1 } else { 1.0 }).collect()).unwrap();
        let q = bisect_query(&right);
        let (_, end) = q.intervals_1d()[0];
        assert!(end > 0.5);
        // direct cumulative-sum check
        let cum: f64 = right.masses()[..(end * 100.0).floor() as usize].iter().sum();
        assert!((cum - 0.5).abs() <= right.masses().iter().cloned().fold(0.0, f64::max));

        // 4 cells, answer "left half" with ε = 0.1: masses 0.45, 0.45, 0.05, 0.05
        let four = GridPosterior::uniform(4).unwrap();
        let post = four.bayes_update(&bisect_query(&four), true, 0.1).unwrap();
        let m = bisect_query(&post).intervals_1d()[0].1;
        // cum 0.45 after cell 1, so median = 0.25 + 0.25 * (0.05 / 0.45)
        assert!((m - (0.25 + 0.25 * 0.05 / 0.45)).abs() < 1e-14);
        assert!(m < 0.5);
    }

    #[test]
    fn alpha_formula() {
        assert!((bz_alpha(0.4) - 0.449_489_742_783_178_1).abs() < 1e-15);
        assert_eq!(bz_alpha(0.0), ALPHA_FLOOR);
        assert_eq!(bz_alpha(0.5), 0.5 - ALPHA_FLOOR);
    }

    #[test]
    fn noiseless_bz_never_loses_true_cell_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x_star = 0.4321;
        let mut s = BzState::new(GridPosterior::uniform(256).unwrap(), ALPHA_FLOOR).unwrap();
        let k = s.posterior.cell_of(x_star);
        let mut prev = s.posterior.masses()[k];
        for _ in 0..40 {
            s = s.step(&mut Truthful(x_star), &mut rng).unwrap();
            let now = s.posterior.masses()[k];
            assert!(now >= prev * (1.0 - 1e-12));
            prev = now;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn boundary_median_gives_deterministic_threshold() {
        let mut s = BzState::new(GridPosterior::uniform(4).unwrap(), 0.3).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            s = BzState::new(GridPosterior::uniform(4).unwrap(), 0.3).unwrap();
            s = s.step(&mut Truthful(0.9), &mut rng).unwrap();
            assert_eq!(s.last_query, Some(0.5));
        }
        assert!(s.posterior.is_normalized());
    }

    #[test]
    fn bz_step_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = BzState::new(GridPosterior::uniform(500).unwrap(), bz_alpha(0.3)).unwrap();
        let mut oracle = SimulatedOracle { target: 0.75, error: 0.3 };
        for _ in 0..300 {
            s = s.step(&mut oracle, &mut rng).unwrap();
            assert!((s.posterior.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_player_cycle_is_one_bz_step() {
        let p = GridPosterior::uniform(200).unwrap();
        let machine = PlayerModel::bsc(0.35).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let via_cycle = sequential_cycle(&p, &[machine], 0.3, Backend::Bz, &mut r1).unwrap();
        let state = BzState::for_player(p, &machine, 0.2);
        let mut oracle = SimulatedOracle { target: 0.3, error: 0.35 };
        let via_step = state.step(&mut oracle, &mut r2).unwrap().posterior;
        assert_eq!(via_cycle, via_step);
    }

    #[test]
    fn expected_cycle_loss_is_capacity_sum() {
        let p = GridPosterior::uniform(1024).unwrap();
        let want = capacity_bsc(0.3).unwrap().0 + capacity_bsc(0.4).unwrap().0;
        let fwd = sequential_expected_entropy_loss(&p, &[0.3, 0.4]).unwrap().0;
        let rev = sequential_expected_entropy_loss(&p, &[0.4, 0.3]).unwrap().0;
        assert!((fwd - 0.102_418_392_055_740_72).abs() < 1e-3, "{fwd}");
        assert!((fwd - want).abs() < 1e-3);
        assert!((rev - want).abs() < 1e-3);
        assert!((fwd - rev).abs() < 1e-3);
    }
}
