//! Structural analysis of multimode DAE systems: given a model and a mode
//! change, synthesize the hot-restart system (rescaling impulsive variables
//! along the way) or diagnose why the restart is under-determined.
//!
//! Module map:
//! - [`expr`]: symbolic kernel (shifted/differentiated variables, exact
//!   rational constants, eps powers, opaque functions)
//! - [`graph`]: bipartite matching and Dulmage-Mendelsohn decomposition
//! - [`sigma`]: signature-method index reduction of a single mode
//! - [`mcarray`]: mode change arrays, facts, heights, canonical matching
//! - [`rescale`]: rescaling offsets (max/+ fixpoint) and goodness
//! - [`restart`]: the restart pipeline, diagnosis, and numeric checks
//! - [`model`]: the `.mdae` text format
//! - [`report`]: machine- and human-readable run reports
//! - [`corpus`]: golden-case harness over the shipped fixture directory

pub mod corpus;
pub mod expr;
pub mod graph;
pub mod mcarray;
pub mod model;
pub mod numeric;
pub mod report;
pub mod rescale;
pub mod restart;
pub mod sigma;

pub use expr::{EvalContext, Expr, FuncId, Rat, Sym, VarKey, VarTag};
pub use graph::{
    dm_decompose, is_structurally_nonsingular, max_matching, BipartiteGraph, DMDecomposition,
    Matching,
};
pub use mcarray::{build_array, ModeChange, ModeChangeArray};
pub use model::{parse_model, validate_model, Model};
pub use rescale::{check_goodness, Mu, RescalingSolution};
pub use restart::{generate_restart, Outcome, RestartSystem};
pub use sigma::{complete, solve_sigma, DAESystem, SigmaOffsets};
