//! Allocation-only core of the mask-text engine.
//!
//! Everything here is pure computation over in-memory values: the scene
//! model and binary-mask primitives, pinhole projection with the
//! depth-consistency inclusion test, caption merging onto class-agnostic
//! proposals, the training-loss kernels (with analytic gradients and an exact
//! assignment solver), and dataset / benchmark metrics.
//!
//! File formats, parallel drivers and the command line live in the
//! `masktext` crate.
#![no_std]
#![cfg_attr(not(test), forbid(unsafe_code))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assign;
mod error;
pub mod fusion;
pub mod loss;
pub mod mask;
pub mod merge;
pub mod metrics;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
pub use fusion::{
    associate_frame, fuse_frame, fuse_scene, project_point, CameraFrame, FrameInput, FrameOutput,
    FuseOutput, FuseReport, FusionConfig, Projection,
};
pub use mask::{mask3d_iou, Mask2D, RegionMask3D};
pub use merge::{concat_captions, merge_captions, sample_captions, MergeConfig, MergeOutput};
pub use scene::{
    CameraIntrinsics, CameraPose, DepthMap, EmbeddingMatrix, MaskTextPair, MergedProposal,
    PointCloud, Proposal3D,
};
