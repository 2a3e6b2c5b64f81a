//! Quantum-circuit model of trick-taking card games.
//!
//! Deals are encoded as basis states of a qubit register ([`encoding`]), game
//! play is a sequence of controlled gates on a sparse statevector ([`qsim`],
//! [`gates`]), outcomes are read out by projection or quantum counting
//! ([`scoring`]), and every quantum number can be checked against a classical
//! game-tree search ([`oracle`]).

pub mod encoding;
pub mod gates;
pub mod oracle;
pub mod qsim;
pub mod scoring;

pub use encoding::{Card, CardLayout, Deal, DealSpec, GameType, Holder, Rank, Suit, TrickOrder};
pub use qsim::{BasisIndex, ControlSpec, GateOp, SparseState};
