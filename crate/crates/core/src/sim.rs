//! Monte Carlo engine.
//!
//! Trials are independent and run on the rayon pool. Trial `t` draws from a
//! [`ChaCha8Rng`] seeded with [`trial_seed`]`(seed, t)`, and per-cycle errors
//! are folded in trial-index order, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{mse_lower_bound, mse_upper_bound};
use crate::error::{Error, Result};
use crate::info::{capacity_unchecked, cbar_unchecked, grid_entropy};
use crate::joint::{EpsAxis, JointGridPosterior, DEFAULT_EPS_CELLS};
use crate::players::{respond_with_error, PlayerModel};
use crate::policies::bisection::{query_player, Backend};
use crate::policies::cost::{select_player_cost_at, CostLedger};
use crate::policies::unknown::unknown_eps_query;
use crate::posterior::{GridPosterior, QueryRegion};

/// Prior over the target location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    #[default]
    Uniform,
    /// Mixture of normals, truncated to `[0, 1]`.
    GaussianMixture {
        means: Vec<f64>,
        variances: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// Whether crossover probabilities are known to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    KnownEps,
    UnknownEps,
}

fn default_eps_cells() -> usize {
    DEFAULT_EPS_CELLS
}

/// A complete simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub players: Vec<PlayerModel>,
    #[serde(default)]
    pub prior: PriorSpec,
    pub x_star: f64,
    pub n_cycles: usize,
    pub trials: usize,
    pub grid_cells: usize,
    /// Cost weight. When absent every player is asked once per cycle;
    /// when present a single player is chosen per cycle by capacity minus
    /// `gamma` times cost.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_eps_cells")]
    pub eps_grid_cells: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.players.is_empty() {
            return Err(Error::NoPlayers);
        }
        for p in &self.players {
            p.validated()?;
        }
        if !(0.0..=1.0).contains(&self.x_star) {
            return Err(Error::InvalidParameter(format!(
                "x_star must lie in [0, 1], got {}",
                self.x_star
            )));
        }
        if self.grid_cells < 2 {
            return Err(Error::GridTooSmall {
                min: 2,
                got: self.grid_cells,
            });
        }
        if self.trials == 0 || self.n_cycles == 0 {
            return Err(Error::InvalidParameter(
                "trials and n_cycles must be positive".into(),
            ));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be nonnegative, got {g}"
                )));
            }
        }
        if self.mode == Mode::UnknownEps {
            if self.eps_grid_cells == 0 {
                return Err(Error::GridTooSmall {
                    min: 1,
                    got: 0,
                });
            }
            if let Some(u) = self.players.iter().position(|p| !p.is_constant()) {
                return Err(Error::NonConstantChannel(u));
            }
        }
        make_prior(&self.prior, self.grid_cells).map(drop)
    }
}

/// Discretizes a prior onto `cells` cells.
///
/// Mixture masses are proportional to the density at cell midpoints.
pub fn make_prior(spec: &PriorSpec, cells: usize) -> Result<GridPosterior> {
    match spec {
        PriorSpec::Uniform => GridPosterior::uniform(cells),
        PriorSpec::GaussianMixture {
            means,
            variances,
            weights,
        } => {
            if means.len() != variances.len() || means.len() != weights.len() || means.is_empty() {
                return Err(Error::InvalidPrior(
                    "means, variances and weights must be nonempty and of equal length".into(),
                ));
            }
            if let Some(v) = variances.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidPrior(format!("variance must be positive, got {v}")));
            }
            if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidPrior("weights must be nonnegative".into()));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidPrior(format!("weights sum to {total}, not 1")));
            }
            let density = |x: f64| -> f64 {
                means
                    .iter()
                    .zip(variances)
                    .zip(weights)
                    .map(|((m, v), w)| {
                        w * (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
                    })
                    .sum()
            };
            let delta = 1.0 / cells as f64;
            GridPosterior::from_weights((0..cells).map(|i| density((i as f64 + 0.5) * delta)).collect())
        }
    }
}

/// Seed for trial `trial`: one SplitMix64 round over `master` advanced by
/// `trial + 1` golden-ratio increments.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(trial.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Estimates after each cycle, index 0 being the prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub x: Vec<f64>,
    /// Per-player posterior mean crossover probability, unknown mode only.
    pub eps: Option<Vec<Vec<f64>>>,
    pub costs: CostLedger,
}

/// Posterior state handed to a [`run_trial_with`] observer.
#[derive(Debug, Clone, Copy)]
pub enum Snapshot<'a> {
    Known(&'a GridPosterior),
    Unknown(&'a JointGridPosterior),
}

pub fn run_trial(config: &ScenarioConfig, seed: u64) -> Result<Trajectory> {
    run_trial_with(config, seed, |_, _| {})
}

/// Runs one trial, calling `observe(n, posterior)` after each cycle (and
/// once with `n = 0` before the first).
pub fn run_trial_with(
    config: &ScenarioConfig,
    seed: u64,
    mut observe: impl FnMut(usize, Snapshot<'_>),
) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = make_prior(&config.prior, config.grid_cells)?;
    let mut costs = CostLedger::new();
    match config.mode {
        Mode::KnownEps => {
            let mut post = prior;
            let mut xs = Vec::with_capacity(config.n_cycles + 1);
            xs.push(post.median());
            observe(0, Snapshot::Known(&post));
            for n in 1..=config.n_cycles {
                match config.gamma {
                    None => {
                        for (u, p) in config.players.iter().enumerate() {
                            post = query_player(&post, p, config.x_star, config.backend, &mut rng)?;
                            costs.record(u, p.cost);
                        }
                    }
                    Some(gamma) => {
                        let distance = (config.x_star - post.median()).abs();
                        let u = select_player_cost_at(&config.players, gamma, distance)?;
                        let p = &config.players[u];
                        post = query_player(&post, p, config.x_star, config.backend, &mut rng)?;
                        costs.record(u, p.cost);
                    }
                }
                xs.push(post.median());
                observe(n, Snapshot::Known(&post));
            }
            Ok(Trajectory {
                x: xs,
                eps: None,
                costs,
            })
        }
        Mode::UnknownEps => {
            let axes = config
                .players
                .iter()
                .map(|_| {
                    let axis = EpsAxis::uniform(config.eps_grid_cells)?;
                    let w = vec![1.0; axis.len()];
                    Ok((axis, w))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut jp = JointGridPosterior::product(&prior, axes)?;
            let gamma = config.gamma.unwrap_or(0.0);
            let mut xs = Vec::with_capacity(config.n_cycles + 1);
            let mut es = Vec::with_capacity(config.n_cycles + 1);
            let (x0, e0) = jp.means();
            xs.push(x0);
            es.push(e0);
            observe(0, Snapshot::Unknown(&jp));
            for n in 1..=config.n_cycles {
                let mut best: Option<(usize, f64, f64)> = None;
                for (u, p) in config.players.iter().enumerate() {
                    let q = unknown_eps_query(&jp, u)?;
                    let score = q.gain.0 - gamma * p.cost;
                    if best.map_or(true, |b| score > b.2) {
                        best = Some((u, q.x, score));
                    }
                }
                let (u, x, _) = best.expect("players nonempty");
                let p = &config.players[u];
                let query = QueryRegion::interval(0.0, x)?;
                let truth = query.contains_point(config.x_star);
                let y = respond_with_error(truth, p.error_prob(0.0), &mut rng);
                jp = jp.bayes_update(u, &query, y)?;
                costs.record(u, p.cost);
                let (xm, em) = jp.means();
                xs.push(xm);
                es.push(em);
                observe(n, Snapshot::Unknown(&jp));
            }
            Ok(Trajectory {
                x: xs,
                eps: Some(es),
                costs,
            })
        }
    }
}

/// Per-cycle mean squared errors over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurve {
    pub n_values: Vec<u64>,
    pub mse_x: Vec<f64>,
    pub stderr_x: Vec<f64>,
    pub mse_eps: Option<Vec<f64>>,
    pub stderr_eps: Option<Vec<f64>>,
}

/// Welford accumulator folded in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let d = v - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (v - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.count < 2.0 {
            0.0
        } else {
            (self.m2 / (self.count - 1.0) / self.count).sqrt()
        }
    }
}

const CHUNK: usize = 256;

/// Squared errors of one trajectory: `(x_err², Some(‖ε - ε*‖²))`.
fn squared_errors(config: &ScenarioConfig, t: &Trajectory) -> (Vec<f64>, Option<Vec<f64>>) {
    let x = t.x.iter().map(|v| (v - config.x_star).powi(2)).collect();
    let eps = t.eps.as_ref().map(|es| {
        let truth: Vec<f64> = config.players.iter().map(|p| p.error_prob(0.0)).collect();
        es.iter()
            .map(|e| e.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum())
            .collect()
    });
    (x, eps)
}

/// Runs all trials in parallel.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<MseCurve> {
    monte_carlo(config, true)
}

/// Same result as [`run_monte_carlo`], on the calling thread only.
pub fn run_monte_carlo_serial(config: &ScenarioConfig) -> Result<MseCurve> {
    monte_carlo(config, false)
}

fn monte_carlo(config: &ScenarioConfig, parallel: bool) -> Result<MseCurve> {
    config.validate()?;
    let len = config.n_cycles + 1;
    let unknown = config.mode == Mode::UnknownEps;
    let mut mx = vec![Moments::default(); len];
    let mut me = vec![Moments::default(); if unknown { len } else { 0 }];
    let run = |t: usize| run_trial(config, trial_seed(config.seed, t as u64)).map(|tr| squared_errors(config, &tr));
    let mut start = 0;
    while start < config.trials {
        let end = (start + CHUNK).min(config.trials);
        let chunk: Vec<_> = if parallel {
            (start..end).into_par_iter().map(run).collect::<Result<_>>()?
        } else {
            (start..end).map(run).collect::<Result<_>>()?
        };
        for (xe, ee) in chunk {
            for (m, v) in mx.iter_mut().zip(xe) {
                m.push(v);
            }
            if let Some(ee) = ee {
                for (m, v) in me.iter_mut().zip(ee) {
                    m.push(v);
                }
            }
        }
        start = end;
    }
    Ok(MseCurve {
        n_values: (0..len as u64).collect(),
        mse_x: mx.iter().map(|m| m.mean).collect(),
        stderr_x: mx.iter().map(Moments::stderr).collect(),
        mse_eps: unknown.then(|| me.iter().map(|m| m.mean).collect()),
        stderr_eps: unknown.then(|| me.iter().map(Moments::stderr).collect()),
    })
}

/// Per-cycle information rates entering the bounds: `(Σ C, Σ C̄)`.
///
/// Humans contribute `C(1/2 - δ0)` to the lower-bound rate (their best
/// case) and nothing to the upper-bound rate.
pub fn scenario_rates(config: &ScenarioConfig) -> Result<(f64, f64)> {
    let rate = |p: &PlayerModel| match p.constant_eps() {
        Some(e) => (capacity_unchecked(e), cbar_unchecked(e)),
        None => (capacity_unchecked(p.error_prob(f64::INFINITY).min(0.5)), 0.0),
    };
    match config.gamma {
        None => Ok(config
            .players
            .iter()
            .map(rate)
            .fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1))),
        Some(gamma) => {
            if let Some(u) = config.players.iter().position(|p| !p.is_constant()) {
                return Err(Error::NonConstantChannel(u));
            }
            let u = select_player_cost_at(&config.players, gamma, 0.0)?;
            Ok(rate(&config.players[u]))
        }
    }
}

/// One row of an empirical-versus-bounds comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: u64,
    pub lower: f64,
    pub mse: f64,
    pub stderr: f64,
    pub upper: f64,
    /// `mse + 2 stderr < lower`.
    pub lower_violation: bool,
    /// `mse - 2 stderr > upper`.
    pub upper_violation: bool,
}

/// Places an empirical curve between the analytic lower and upper bounds.
pub fn compare_bounds(curve: &MseCurve, config: &ScenarioConfig) -> Result<Vec<BoundRow>> {
    if config.mode != Mode::KnownEps {
        return Err(Error::InvalidParameter(
            "bound comparison needs known crossover probabilities".into(),
        ));
    }
    let (c, cb) = scenario_rates(config)?;
    let h0 = grid_entropy(&make_prior(&config.prior, config.grid_cells)?).0;
    Ok(curve
        .n_values
        .iter()
        .zip(curve.mse_x.iter().zip(&curve.stderr_x))
        .map(|(&n, (&mse, &se))| {
            let lower = mse_lower_bound(n, c, 1, h0);
            let upper = mse_upper_bound(n, cb);
            BoundRow {
                n,
                lower,
                mse,
                stderr: se,
                upper,
                lower_violation: mse + 2.0 * se < lower,
                upper_violation: mse - 2.0 * se > upper,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(eps: f64) -> PlayerModel {
        PlayerModel::bsc(eps).unwrap()
    }

    fn config(players: Vec<PlayerModel>) -> ScenarioConfig {
        ScenarioConfig {
            players,
            prior: PriorSpec::Uniform,
            x_star: 0.75,
            n_cycles: 20,
            trials: 40,
            grid_cells: 128,
            gamma: None,
            mode: Mode::KnownEps,
            eps_grid_cells: 16,
            seed: 7,
            backend: Backend::Bz,
        }
    }

    fn paper_mixture() -> PriorSpec {
        PriorSpec::GaussianMixture {
            means: vec![0.25, 0.5, 0.75],
            variances: vec![0.02, 0.05, 0.08],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    #[test]
    fn prior_examples() {
        let u = make_prior(&PriorSpec::Uniform, 1500).unwrap();
        assert!(u.masses().iter().all(|&m| m == 1.0 / 1500.0));

        let mix = make_prior(&paper_mixture(), 100).unwrap();
        assert!(mix.masses()[25] > mix.masses()[95]);
        assert!(mix.is_normalized());

        let three = PriorSpec::GaussianMixture {
            means: vec![0.25, 0.5, 0.75],
            variances: vec![0.02, 0.05, 0.08],
            weights: vec![0.5, 0.5, 0.0],
        };
        let two = PriorSpec::GaussianMixture {
            means: vec![0.25, 0.5],
            variances: vec![0.02, 0.05],
            weights: vec![0.5, 0.5],
        };
        assert_eq!(make_prior(&three, 64).unwrap(), make_prior(&two, 64).unwrap());

        let bad = PriorSpec::GaussianMixture {
            means: vec![0.5],
            variances: vec![0.0],
            weights: vec![1.0],
        };
        assert!(matches!(make_prior(&bad, 10), Err(Error::InvalidPrior(_))));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|t| trial_seed(42, t)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(trial_seed(42, 3), seeds[3]);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    #[test]
    fn noiseless_trial_converges() {
        let mut cfg = config(vec![machine(1e-12)]);
        cfg.grid_cells = 64;
        cfg.n_cycles = 6;
        cfg.x_star = 0.3;
        let t = run_trial(&cfg, 1).unwrap();
        assert_eq!(t.x.len(), 7);
        assert!((t.x[6] - 0.3).abs() <= 2.0 / 64.0, "{:?}", t.x);
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = config(vec![machine(0.3), PlayerModel::human(0.4, 0.45, 1.1).unwrap()]);
        assert_eq!(run_trial(&cfg, 99).unwrap(), run_trial(&cfg, 99).unwrap());
    }

    #[test]
    fn single_trial_curve_is_squared_error() {
        let mut cfg = config(vec![machine(0.3)]);
        cfg.trials = 1;
        let t = run_trial(&cfg, trial_seed(cfg.seed, 0)).unwrap();
        let curve = run_monte_carlo(&cfg).unwrap();
        for (n, x) in t.x.iter().enumerate() {
            assert_eq!(curve.mse_x[n], (x - 0.75).powi(2));
            assert_eq!(curve.stderr_x[n], 0.0);
        }
    }

    #[test]
    fn parallel_equals_serial() {
        let mut cfg = config(vec![machine(0.4), machine(0.3)]);
        cfg.trials = 600;
        assert_eq!(run_monte_carlo(&cfg).unwrap(), run_monte_carlo_serial(&cfg).unwrap());
    }

    #[test]
    fn unknown_mode_tracks_both() {
        let mut cfg = config(vec![machine(0.3)]);
        cfg.mode = Mode::UnknownEps;
        cfg.grid_cells = 32;
        cfg.trials = 4;
        let curve = run_monte_carlo(&cfg).unwrap();
        let eps = curve.mse_eps.as_ref().unwrap();
        assert_eq!(eps.len(), 21);
        assert!((eps[0] - 0.0025).abs() < 1e-12);
        assert!((curve.mse_x[0] - 0.0625).abs() < 1e-12);
        assert!(curve.mse_x[20] < curve.mse_x[0]);
    }

    #[test]
    fn unknown_mode_rejects_humans() {
        let mut cfg = config(vec![PlayerModel::human(0.4, 0.45, 2.0).unwrap()]);
        cfg.mode = Mode::UnknownEps;
        assert_eq!(cfg.validate(), Err(Error::NonConstantChannel(0)));
    }

    #[test]
    fn point_eps_axis_matches_known_update_on_same_answers() {
        // feed the queries the unknown-mode policy chooses to both models
        let prior = make_prior(&paper_mixture(), 64).unwrap();
        let mut known = prior.clone();
        let mut jp =
            JointGridPosterior::product(&prior, vec![(EpsAxis::point(0.2).unwrap(), vec![1.0])]).unwrap();
        let answers = [true, false, false, true, true, false, true, true];
        for &y in &answers {
            let q = unknown_eps_query(&jp, 0).unwrap();
            let region = QueryRegion::interval(0.0, q.x).unwrap();
            jp = jp.bayes_update(0, &region, y).unwrap();
            known = known.bayes_update(&region, y, 0.2).unwrap();
            for (a, b) in jp.x_marginal().masses().iter().zip(known.masses()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cost_mode_asks_one_player_per_cycle() {
        let mut cfg = config(vec![
            machine(0.3).with_cost(0.08).unwrap(),
            machine(0.4).with_cost(0.001).unwrap(),
        ]);
        cfg.gamma = Some(1.0);
        let t = run_trial(&cfg, 3).unwrap();
        assert_eq!(t.costs.len(), cfg.n_cycles);
        assert!(t.costs.per_step.iter().all(|&(u, _)| u == 1));
        assert!((t.costs.total - 0.001 * cfg.n_cycles as f64).abs() < 1e-12);
    }

    #[test]
    fn bound_rows_at_zero() {
        let cfg = config(vec![machine(0.4)]);
        let curve = MseCurve {
            n_values: vec![0],
            mse_x: vec![1.0 / 12.0],
            stderr_x: vec![0.0],
            mse_eps: None,
            stderr_eps: None,
        };
        let rows = compare_bounds(&curve, &cfg).unwrap();
        assert!(rows[0].lower < rows[0].mse && rows[0].mse < rows[0].upper);
        assert!(!rows[0].lower_violation && !rows[0].upper_violation);
    }

    #[test]
    fn log_mse_slope_in_window() {
        let mut cfg = config(vec![machine(0.2)]);
        cfg.trials = 400;
        cfg.n_cycles = 40;
        cfg.grid_cells = 2048;
        let curve = run_monte_carlo(&cfg).unwrap();
        let pts: Vec<(f64, f64)> = (10..=40).map(|n| (n as f64, curve.mse_x[n].ln())).collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let c = capacity_unchecked(0.2);
        let cb = cbar_unchecked(0.2);
        assert!(slope >= -2.0 * c && slope <= -2.0 / 3.0 * cb * 0.8, "slope {slope}");
    }

    #[test]
    fn config_json_defaults() {
        let json = r#"{"players":[{"kind":"bsc","eps":0.4}],"x_star":0.75,"n_cycles":5,"trials":2,"grid_cells":50}"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.mode, Mode::KnownEps);
        assert_eq!(cfg.backend, Backend::Bz);
        assert_eq!(cfg.eps_grid_cells, 64);
        assert_eq!(cfg.gamma, None);
        assert!(serde_json::from_str::<ScenarioConfig>(&json.replace("\"trials\"", "\"trails\"")).is_err());
    }
}
