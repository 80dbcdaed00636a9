//! Merkle hashing of layered nodes.
//!
//! A node's digest is the wrapping sum of the mixed digests of its children
//! (permutation invariant, and unlike XOR a repeated child does not cancel
//! out), offset by a tag for the node's operation and mixed once more.
//! Digests only pick hash buckets: equal digests are always re-checked
//! structurally before two nodes are merged.

use crate::circuit::{Literal, Polarity};
use crate::layerize::LayerOp;

/// 64-bit bit-dispersal function.
pub trait Mixer {
    fn mix(&self, x: u64) -> u64;
}

/// The MurmurHash3 `fmix64` finalizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fmix64;

impl Mixer for Fmix64 {
    #[inline]
    fn mix(&self, mut x: u64) -> u64 {
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
        x ^= x >> 33;
        x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
        x ^= x >> 33;
        x
    }
}

impl<M: Mixer + ?Sized> Mixer for &M {
    fn mix(&self, x: u64) -> u64 {
        (**self).mix(x)
    }
}

fn op_tag(op: LayerOp) -> u64 {
    match op {
        LayerOp::Input => 0x9e37_79b9_7f4a_7c15,
        LayerOp::Product => 0xbf58_476d_1ce4_e5b9,
        LayerOp::Sum => 0x94d0_49bb_1331_11eb,
    }
}

/// `2 * variable + 1` for negative literals, `2 * variable` for positive.
pub fn encode_literal(lit: Literal) -> u64 {
    2 * u64::from(lit.variable()) + u64::from(lit.polarity() == Polarity::Negative)
}

pub fn node_hash<M: Mixer, I: IntoIterator<Item = u64>>(mixer: &M, op: LayerOp, child_hashes: I) -> u64 {
    let combined = child_hashes
        .into_iter()
        .fold(0u64, |acc, h| acc.wrapping_add(mixer.mix(h)));
    mixer.mix(combined.wrapping_add(op_tag(op)))
}

pub fn leaf_hash<M: Mixer>(mixer: &M, lit: Literal) -> u64 {
    node_hash(mixer, LayerOp::Input, [mixer.mix(encode_literal(lit))])
}
