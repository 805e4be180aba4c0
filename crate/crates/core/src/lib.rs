//! Runtime for ASTD operator trees and a continuous, per-user anomaly
//! detection pattern built on it: sliding-window retraining of three
//! unsupervised time-of-day detectors combined by majority vote.

pub mod cli;
pub mod detectors;
pub mod engine;
pub mod ensemble;
pub mod pipeline;
pub mod windowing;
