//! Multi-stream video classification from extracted frames.
//!
//! RGB frames, dense optical flow and rasterized pose skeletons feed parallel
//! convolutional streams that are fused before a linear classifier. The
//! [`engine`] module is a small reverse-mode autodiff library the models are
//! built on; [`pipeline`] strings the stages together the way the
//! `dancestream` binary runs them.

pub mod cli;
pub mod dataset;
pub mod engine;
pub mod flow;
pub mod models;
pub mod pipeline;
pub mod pose;
pub mod training;
