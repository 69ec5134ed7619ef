//! Arbitrage-free implied volatility surface toolkit.
//!
//! The crate covers a two-step workflow for predicting and simulating implied
//! volatility surfaces through time:
//!
//! 1. compress each day's surface into a feature vector (grid sampling, PCA on
//!    log-vol differences, or a variational autoencoder), then predict the next
//!    day's features with a small LSTM ([`features`], [`predictor`]);
//! 2. rebuild a full surface from the predicted features with a feedforward
//!    network trained under static no-arbitrage penalties (calendar, butterfly,
//!    and large-moneyness terms), so constructed surfaces stay arbitrage-free
//!    ([`constructor`]).
//!
//! Around that core sit the supporting pieces: Black-Scholes pricing and a
//! robust implied-vol solver ([`surface`]), quadratic-polynomial and
//! Nadaraya-Watson interpolators ([`interp`]), synthetic panel generation and
//! data handling ([`dataset`]), a small reverse-mode autodiff stack
//! ([`nn`]), Monte Carlo surface simulation ([`simulate`]), and a backtest
//! harness with Diebold-Mariano forecast comparisons ([`evaluate`]).
//!
//! Everything is `f64`, deterministic given a seed, and `no_std`-compatible
//! (with `alloc`); file IO and the command-line front end live in the
//! companion `arbsurf-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod constructor;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod interp;
pub mod linalg;
pub mod math;
pub mod nn;
pub mod predictor;
pub mod simulate;
pub mod surface;

pub use error::{Error, Result};
