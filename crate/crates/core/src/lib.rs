//! Core library of the unlearning lab: a small reverse-mode autodiff engine,
//! a tiny causal transformer, synthetic multilingual benchmarks, the
//! unlearning objectives and training loops, evaluation metrics, and the
//! cross-lingual transfer statistics.

pub mod analysis;
pub mod corpus;
pub mod encode;
pub mod eval;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod unlearn;
