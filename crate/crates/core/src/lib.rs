//! Core algorithms for few-shot oriented object detection with a memorable
//! contrastive objective.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It provides:
//!
//! - [`geometry`]: oriented boxes, convex clipping, rotated and axis-aligned IoU.
//! - [`membank`]: the fixed-capacity FIFO proposal memory bank.
//! - [`mcl`]: the IoU-gated in-batch + cross-batch contrastive loss and its
//!   analytic gradient.
//! - [`fewshot`]: dataset index, base/novel splitting, K-shot sampling, shot
//!   masking and tiling.
//! - [`evaluation`]: VOC2007 11-point AP50 for oriented or axis-aligned boxes.
//! - [`toytrain`]: a desk-scale projection encoder trained with the loss on
//!   synthetic clustered features.
//! - [`gradcheck`]: finite-difference verification of the analytic gradients.
//!
//! File formats, image IO and the command line live in the companion `fsood`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod evaluation;
pub mod fewshot;
pub mod geometry;
pub mod gradcheck;
pub mod math;
pub mod mcl;
pub mod membank;
pub mod rng;
pub mod toytrain;

pub use geometry::{AxisAlignedBox, ConvexPolygon, OrientedBox, Point};
pub use mcl::{ContrastiveBatch, LossBreakdown, MclConfig};
pub use membank::{MemoryBank, ProposalRecord};
