use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coherence::{coherence_cv, DEFAULT_TOP_N, DEFAULT_WINDOW};
use super::dtm::{build_dtm, DEFAULT_MAX_DF_FRACTION, DEFAULT_MIN_DF};
use super::lda::{fit_lda, LdaParams};
use crate::textnorm::NormalizedDoc;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectParams {
    pub k_grid: Vec<usize>,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub min_df: usize,
    pub max_df_fraction: f64,
    pub top_n: usize,
    pub window: usize,
    /// `None` means 50/K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl SelectParams {
    pub fn new(k_grid: Vec<usize>, sample_size: usize, seed: u64) -> Self {
        let lda = LdaParams::for_selection(1, seed);
        SelectParams {
            k_grid,
            sample_size,
            replicates: 2,
            seed,
            min_df: DEFAULT_MIN_DF,
            max_df_fraction: DEFAULT_MAX_DF_FRACTION,
            top_n: DEFAULT_TOP_N,
            window: DEFAULT_WINDOW,
            alpha: lda.alpha,
            beta: lda.beta,
            iterations: lda.iterations,
            burn_in: lda.burn_in,
            thin: lda.thin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub replicate_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub chosen_k: usize,
    pub table: Vec<KScore>,
}

/// Fits every K on `replicates` disjoint random samples and picks the K
/// with the highest average C_V coherence; ties go to the smaller K.
pub fn select_k(docs: &[NormalizedDoc], p: &SelectParams) -> Result<KSelection> {
    if p.k_grid.is_empty() {
        return Err(Error::InvalidParameter("empty K grid".into()));
    }
    if p.replicates == 0 || p.sample_size == 0 {
        return Err(Error::InvalidParameter("replicates and sample_size must be positive".into()));
    }
    if p.replicates * p.sample_size > docs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} disjoint samples of {} need {} documents, corpus has {}",
            p.replicates,
            p.sample_size,
            p.replicates * p.sample_size,
            docs.len()
        )));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(p.seed));
    let samples = (0..p.replicates)
        .map(|r| {
            let sample: Vec<NormalizedDoc> =
                order[r * p.sample_size..(r + 1) * p.sample_size].iter().map(|&i| docs[i].clone()).collect();
            build_dtm(&sample, p.min_df, p.max_df_fraction)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grid = p.k_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let jobs: Vec<(usize, usize)> = grid.iter().flat_map(|&k| (0..p.replicates).map(move |r| (k, r))).collect();
    let scores = jobs
        .par_iter()
        .map(|&(k, r)| {
            let params = LdaParams {
                k,
                alpha: p.alpha,
                beta: p.beta,
                iterations: p.iterations,
                burn_in: p.burn_in,
                thin: p.thin,
                seed: p.seed.wrapping_add(k as u64).wrapping_add(r as u64),
            };
            let m = fit_lda(&samples[r], &params)?;
            Ok(coherence_cv(&m, &samples[r], p.top_n, p.window)?.mean)
        })
        .collect::<Result<Vec<f64>>>()?;

    let table: Vec<KScore> = grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let replicate_scores = scores[i * p.replicates..(i + 1) * p.replicates].to_vec();
            let mean = replicate_scores.iter().sum::<f64>() / p.replicates as f64;
            KScore { k, replicate_scores, mean }
        })
        .collect();
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean > table[best].mean {
            best = i;
        }
    }
    Ok(KSelection { chosen_k: table[best].k, table })
}
