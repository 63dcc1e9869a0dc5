//! Simulation laboratory for the GHZ game and the impossible-necklace game.
//!
//! * [`quantum`]: exact state vectors, spin observables and Born-rule
//!   distributions for two and three qubits.
//! * [`games`]: question sets, the interrogator's distribution and the win
//!   predicates.
//! * [`strategies`]: classical and quantum strategies, exact values and
//!   exhaustive classical optimization.
//! * [`referee`]: seeded Monte Carlo sessions and statistics.
//! * [`netplay`]: referee, player and entanglement-provider processes talking
//!   a line-delimited JSON protocol.

pub mod games;
pub mod netplay;
pub mod quantum;
pub mod referee;
pub mod strategies;

pub use games::{ghz_spec, necklace_spec, Answer, GameKind, GameSpec, Question, QuestionTuple, Verdict};
pub use quantum::{make_entangled_state, EntangledKind, MeasurementSetting, StateVector};
pub use referee::{run_experiment, RunStats, SessionConfig};
pub use strategies::{exact_win_probability, StrategyProfile};
