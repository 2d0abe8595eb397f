//! Candidate validation: contradiction checking against opposing rules,
//! preserved consistency, target resolution, and the refinement loop.

pub mod checks;
pub mod contradiction;
pub mod interval;
pub mod refine;

pub use checks::{check_preserved_consistency, check_target_resolution, CheckError, PreservedReport, ResolutionReport};
pub use contradiction::{check_contradiction, check_pair, ContradictionBudget, ContradictionStatus, DecidedBy, PairCheck};
pub use refine::{
    prepare, refine, refine_with_context, render_exhausted, render_report, ContradictionReport, RefineConfig, RefineError,
    RefineInputs, RefinementOutcome, ValidationReport,
};
