//! Layered, tensorized evaluation of compiled Boolean circuits.
//!
//! The pipeline is: parse a compiled circuit (c2d / d4 NNF, SDD) into a
//! [`Circuit`], group its nodes into alternating product/sum layers with
//! [`layerize`], flatten each layer into gather/segment index vectors with
//! [`tensorize`], and evaluate the result in the real, logarithmic or any
//! other [`Semiring`] with the [`eval`] engine. The [`oracle`] module holds the
//! independent post-order and enumeration evaluators used to check it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` / `f64`); the aliases at
//! the bottom of this file fix the common 64-bit instantiations.

pub mod bench;
pub mod circuit;
pub mod eval;
pub mod hash;
pub mod layerize;
pub mod oracle;
pub mod parse;
pub mod scalar;
pub mod stats;
pub mod tensorize;

pub use circuit::{Assignment, BitAssignment, Circuit, CircuitBuilder, CircuitError, Literal, NodeId, NodeKind, Polarity};
pub use eval::semiring::{
    BooleanSemiring, BuiltinSemiring, LogSemiring, MaxProductSemiring, RealSemiring, Semiring,
};
pub use eval::{Domain, EvalError, EvalTrace, WeightAssignment};
pub use layerize::{layerize, layerize_with, LayerOp, LayeredCircuit, LayeredNode, LayerizeError};
pub use parse::{CnfFormula, ParseError};
pub use scalar::Scalar;
pub use stats::CircuitStats;
pub use tensorize::{tensorize, KlayFormatError, ReduceOp, TensorLayer, TensorizedCircuit};

/// 64-bit weight matrix, the default precision of the engine.
pub type WeightAssignment64 = WeightAssignment<f64>;
/// 32-bit weight matrix.
pub type WeightAssignment32 = WeightAssignment<f32>;
/// 64-bit forward trace.
pub type EvalTrace64 = EvalTrace<f64>;
/// 32-bit forward trace.
pub type EvalTrace32 = EvalTrace<f32>;
