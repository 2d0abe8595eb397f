//! Refinement engine for safety operational rules.
//!
//! Rules are predicates over an operational design domain (ODD) that assign
//! a Pass or Fail verdict when they hold. The engine finds rules whose
//! verdicts disagree with observed outcomes, localizes the disagreement with
//! minimal-change counterfactual search, and synthesizes small,
//! grammar-valid refinements that are accepted only after contradiction,
//! regression and resolution checks.

pub mod candidate;
pub mod cli;
pub mod counterfactual;
pub mod decimal;
pub mod grammar;
pub mod io;
pub mod metrics;
pub mod scenario;
pub mod semantics;
pub mod validation;
