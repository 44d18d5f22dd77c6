//! Query design.
//!
//! * [`bisection`]: posterior bisection, the discretized BZ step and
//!   sequential multi-player cycles.
//! * [`joint`]: batch (joint) query gain and the equalizing constructions.
//! * [`cost`]: cost-aware player selection.
//! * [`unknown`]: query and player choice when crossover probabilities are
//!   themselves being estimated.
//!
//! Every argmax breaks ties toward the lowest player index or smallest `x`.

pub mod bisection;
pub mod cost;
pub mod joint;
pub mod unknown;

pub use bisection::{
    bisect_query, bz_alpha, sequential_cycle, sequential_expected_entropy_loss, Backend, BzState,
    Oracle, SimulatedOracle,
};
pub use cost::{gain_with_cost, select_player_cost, select_player_cost_at, CostLedger};
pub use joint::{construct_joint_queries_1d, joint_gain, MAX_JOINT_PLAYERS};
pub use unknown::{
    unknown_eps_gain_curve, unknown_eps_query, unknown_eps_select_player, UnknownEpsQuery,
};
