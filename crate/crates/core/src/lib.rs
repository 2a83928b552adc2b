//! Evolutionary search over spatio-temporal CNN architectures.
#![allow(clippy::needless_range_loop)] // direct-loop numerics index by design
//!
//! The crate is organized around five subsystems:
//!
//! * [`genome`] — the architecture search space as data: meta-architectures,
//!   modules, parallel streams and layers, with random sampling, validation,
//!   parameter counting and a strict JSON wire format.
//! * [`kernels`] — the numerical core: dense tensors, Gaussian-mixture
//!   temporal kernels, forward passes and analytic gradients for every layer
//!   kind, and kernel stretching.
//! * [`mutation`] — the four mutation operators and the annealed
//!   mutation-count schedule, with replayable mutation logs.
//! * [`trainer`] — network construction from genomes, a synthetic
//!   spatio-temporal video dataset, SGD training, surrogate fitness and
//!   softmax-averaging ensembles.
//! * [`evolution`] — tournament evolution over a fixed-size population with
//!   least-fit eviction, the random-search baseline, and run archives.

pub mod evolution;
pub mod genome;
pub mod kernels;
pub mod mutation;
pub mod rng;
pub mod trainer;
