//! Necessary conditions for reaching a target location in programs with
//! loops.
//!
//! A program is a control flow graph whose edges carry instructions. The
//! analysis enumerates the acyclic paths from the start to the target,
//! executes them symbolically and replaces each loop on such a path by a
//! summary: a looping condition and an iterated state, both expressed over
//! path counters that count how often each path through the loop body was
//! taken. The resulting formula over the program's inputs is satisfied by
//! every input that reaches the target.

pub mod backbone;
pub mod formula_builder;
pub mod interp;
pub mod loop_summary;
pub mod program_model;
pub mod smt_backend;
pub mod symexec;
pub mod symexpr;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/language.md")]
    mod language {}
    #[doc = include_str!("../../../book/src/summaries.md")]
    mod summaries {}
    #[doc = include_str!("../../../book/src/deciding.md")]
    mod deciding {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
