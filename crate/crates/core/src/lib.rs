//! Skill extraction from job-advertisement text and comparison of skill
//! measures by the share of log-wage variation they explain.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`] loads and cleans advertisement records and summarizes wages.
//! 2. [`textnorm`] turns raw descriptions into normalized token sequences.
//! 3. [`lexicon`] scores dictionary-based skill intensities.
//! 4. [`embed`] trains skip-gram embeddings and assigns ads to skill domains.
//! 5. [`topicmodel`] fits LDA topic models and scores topic coherence.
//! 6. [`econo`] standardizes features and fits fixed-effects wage regressions.
//! 7. [`compare`] runs every method and ranks them by adjusted R².
//!
//! [`synth`] generates corpora with planted topics and wage equations for testing.

pub mod compare;
pub mod corpus;
pub mod econo;
pub mod embed;
pub mod error;
pub mod lexicon;
pub mod synth;
pub mod textnorm;
pub mod topicmodel;

mod util;

pub use error::{Error, Result};
