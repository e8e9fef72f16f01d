//! Bug finding for forall-exists safety hyperproperties by symbolic execution.
//!
//! The pipeline: [`frontend`] parses programs and a specification, [`graph`]
//! holds the lowered program graphs, [`symexec`] enumerates observed symbolic
//! traces, [`encode`] builds first-order queries, [`solver`] discharges them to
//! an external SMT solver, and [`driver`] ties everything together.
//! [`concrete`] is a finite-domain reference semantics used for replay and
//! cross-checking.

pub mod concrete;
pub mod driver;
pub mod encode;
pub mod frontend;
pub mod graph;
pub mod logic;
pub mod solver;
pub mod symexec;
