//! Pseudo-label generation for LiDAR 3D detection from 2D instance masks.

pub mod cpst;
pub mod geometry;
pub mod dcpg;
pub mod scoring;
pub mod eval;
pub mod io;
pub mod synth;
pub mod pipeline;
