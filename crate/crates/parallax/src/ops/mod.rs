//! Forward/backward kernels for every differentiable primitive.
//!
//! Each submodule exposes plain functions over [`Tensor`]s; the [`crate::tape`]
//! records which kernel produced which value and replays the backward rules
//! in reverse order. Keeping the kernels free of tape bookkeeping makes them
//! independently testable against finite differences.

use serde::{Deserialize, Serialize};

pub mod conv;
pub mod elem;
pub mod lrn;
pub mod pool;
pub mod upsample;
pub mod warp;

/// Zero padding applied to the two spatial dims, one count per side.
/// Asymmetric values reproduce the uneven padding the trunk needs to hit
/// the published resolution ladder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pad2 {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pad2 {
    pub const ZERO: Pad2 = Pad2 {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    pub fn uniform(p: usize) -> Self {
        Pad2 {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    pub fn hw(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        Pad2 {
            top,
            bottom,
            left,
            right,
        }
    }
}

/// Per-side spatial adjustment: positive entries zero-pad, negative entries
/// crop. The backward rule is the adjoint (crops backward zero-pad and vice
/// versa).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropPad {
    pub top: i64,
    pub bottom: i64,
    pub left: i64,
    pub right: i64,
}

impl CropPad {
    pub const NONE: CropPad = CropPad {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    pub fn is_none(&self) -> bool {
        *self == CropPad::NONE
    }
}
