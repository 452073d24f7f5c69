//! Graph-reasoning engine for video question answering.
//!
//! Per-frame scene graphs are assembled into a human-rooted video-level
//! graph, encoded with a heterogeneous edge graph attention network, reasoned
//! over by a hierarchical conditional relation network, and classified over a
//! fixed answer set. Training runs end-to-end on a reverse-mode gradient tape
//! with finite-difference verification built in.

pub mod crn;
pub mod data;
pub mod model;
pub mod parallel;
pub mod params;
pub mod question;
pub mod scenegraph;
pub mod sgem;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod videograph;
