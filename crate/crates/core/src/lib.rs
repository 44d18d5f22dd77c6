//! Collaborative noisy twenty questions.
//!
//! A target `X*` in `[0, 1]` is located by asking players "is `X*` in `A`?".
//! Each player answers through a noisy channel: a machine flips its answer
//! with a fixed probability, a human with a probability that grows as the
//! estimate approaches the target. The crate keeps a discretized posterior,
//! chooses queries that maximize expected entropy loss, and compares the
//! resulting mean squared error with closed-form bounds.
//!
//! ```
//! use bisectquest::{bisect_query, GridPosterior};
//!
//! let prior = GridPosterior::uniform(1000)?;
//! let q = bisect_query(&prior);
//! let post = prior.bayes_update(&q, true, 0.1)?;
//! assert!(post.median() < 0.5);
//! # Ok::<(), bisectquest::Error>(())
//! ```

pub mod bounds;
pub mod error;
pub mod info;
pub mod joint;
pub mod players;
pub mod policies;
pub mod posterior;
pub mod sim;

pub use error::{Error, Result};
pub use info::{
    argmax_phi, binary_entropy, capacity_bsc, cbar, grid_entropy, phi_gain, BinaryPmf, Nats,
};
pub use joint::{EpsAxis, JointGridPosterior, JointMarginals, SubMarginal};
pub use players::{respond_with_error, Channel, PlayerModel};
pub use policies::{
    bisect_query, bz_alpha, construct_joint_queries_1d, gain_with_cost, joint_gain,
    select_player_cost, select_player_cost_at, sequential_cycle, sequential_expected_entropy_loss,
    unknown_eps_gain_curve, unknown_eps_query, unknown_eps_select_player, Backend, BzState,
    CostLedger, Oracle, SimulatedOracle, UnknownEpsQuery,
};
pub use posterior::{
    dyadic_partition, mass, verify_equalization, DyadicCell, Equalization, GridPosterior, Measure,
    QueryRegion, Rect, UniformMeasure,
};
pub use sim::{
    compare_bounds, make_prior, run_monte_carlo, run_trial, trial_seed, Mode, MseCurve, PriorSpec,
    ScenarioConfig,
};

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/posterior.md")]
    mod posterior {}
    #[doc = include_str!("../../../book/src/information.md")]
    mod information {}
    #[doc = include_str!("../../../book/src/players.md")]
    mod players {}
    #[doc = include_str!("../../../book/src/bisection.md")]
    mod bisection {}
    #[doc = include_str!("../../../book/src/joint-queries.md")]
    mod joint_queries {}
    #[doc = include_str!("../../../book/src/unknown-noise.md")]
    mod unknown_noise {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
