//! Speaking-style verification with suprasegmental hidden Markov models.
//!
//! The pipeline: 16 ms / 9 ms-overlap framing, Hamming window, 16th-order
//! LPC by the autocorrelation method, LPC-to-cepstrum conversion, then
//! left-to-right Gaussian-mixture HMMs trained per (speaker, sentence,
//! style) with Baum-Welch. A suprasegmental layer groups the hidden states
//! into prosodic states observing fundamental frequency, intensity, and
//! duration at segment rate. Verification is a log-likelihood-ratio test
//! against an adaptive or frozen threshold.
//!
//! All probability arithmetic is done in log space.

pub mod auth;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod hmm;
pub mod prosody;
pub mod sphmm;

pub use error::{Error, Result};
