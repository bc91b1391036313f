//! Verifier toolchain for an imperative differential-privacy language with
//! randomness-alignment distance types.
//!
//! The pipeline is: [`parser`] → [`infer`] (optional) → [`checker`] →
//! [`solver`] / [`budget`], with [`interp`] providing executable semantics
//! for testing alignments empirically.

pub mod ast;
pub mod budget;
pub mod checker;
pub mod infer;
pub mod interp;
pub mod normalize;
pub mod parser;
pub mod solver;
pub mod target;
pub mod wellformed;
