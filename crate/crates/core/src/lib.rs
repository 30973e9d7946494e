//! Point-cloud and mesh learning with precomputed per-point surface features.

pub mod analytics;
pub mod cloudmodels;
pub mod error;
pub mod featurestore;
pub mod formats;
pub mod geometry;
pub mod harness;
pub mod kv;
pub mod meshsim;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
