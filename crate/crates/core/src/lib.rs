//! Interaction-group detection as link prediction on scene graphs.
//!
//! People in a frame become nodes, a two-hop neighborhood embedding feeds an
//! edge classifier, and groups are the connected components left after
//! dropping edges scored below threshold.

pub mod cli;
pub mod evaluation;
pub mod graph;
pub mod grouping;
pub mod io;
pub mod model;
pub mod projection;
pub mod render;
pub mod scene;
pub mod synth;
pub mod trainer;
