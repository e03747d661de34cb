//! Algorithmic core of a nano-drone monocular relative-localization pipeline:
//! CNN profiling, 8-bit quantized inference, L1 tiling and throughput
//! modelling, synthetic camera frames, closed-loop target following and
//! regression metrics.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;

pub mod arch;
pub mod geometry;
pub mod metrics;
pub mod planner;
pub mod quant;
pub mod sim;
pub mod vision;
