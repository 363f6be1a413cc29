//! Distributed state estimation over a sensor network with per-sensor
//! windowed chi-square attack detection.
//!
//! A linear autonomous system is observed by scalar sensors that fuse
//! neighbor estimates once per time step (consensus + innovation), and each
//! sensor runs a local sliding-window chi-square test on its own residual to
//! detect and isolate measurement attacks against FAR-derived thresholds.

pub mod chidetect;
pub mod estimator;
pub mod gainsynth;
pub mod harness;
pub mod matcore;
pub mod netgraph;
pub mod sysmodel;
