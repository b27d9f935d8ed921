//! Convex relaxations and cutting planes for AC optimal power flow.

pub mod case_io;
pub mod conic;
pub mod network;
pub mod relaxations;
pub mod bounds;
pub mod envelopes;
pub mod cycle_cuts;
pub mod sdp_cuts;
pub mod pipeline;
