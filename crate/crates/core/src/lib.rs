//! Plane-constraint-aided cooperative positioning for vehicle fleets.
//!
//! Each vehicle's GNSS pseudoranges, Doppler-derived velocity, inter-vehicle
//! UWB ranges and a road plane fitted from the fleet's recent positions are
//! fused in a sliding-window factor graph solved by Levenberg-Marquardt.
//! A deterministic simulator and an evaluation harness exercise the whole
//! pipeline on synthetic scenarios.

pub mod config;
pub mod evaluation;
pub mod factor_graph;
pub mod geodesy;
pub mod plane;
pub mod rng;
pub mod simulator;
