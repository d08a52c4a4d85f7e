//! Seeded synthetic job-ad corpora with planted topics and a planted
//! log-wage equation.

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, JobAd, JobType};
use crate::lexicon::{SkillCategory, SkillScheme};
use crate::util;
use crate::{Error, Result};

const THETA_STREAM: u64 = 0;
const TOKEN_STREAM: u64 = 1;
const META_STREAM: u64 = 2;
const KEYWORD_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub k_true: usize,
    pub vocab_size: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    pub alpha_true: f64,
    /// Probability mass each topic puts outside its own vocabulary block.
    pub leakage: f64,
    /// Power-law exponent of word weights by rank inside a block.
    pub decay: f64,
    pub beta0: f64,
    pub beta_topics: Vec<f64>,
    pub counties: Vec<String>,
    pub county_effects: Vec<f64>,
    /// Twelve effects, January first.
    pub month_effects: Vec<f64>,
    /// One effect per job type, in `JobType::ALL` order.
    pub job_type_effects: Vec<f64>,
    pub year: i32,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 2000 ads over 4 planted topics and 200 words, noise set so that the
    /// population R² of log wage on θ and the controls is 0.5.
    pub fn new(seed: u64) -> Self {
        let mut cfg = SynthConfig {
            n_docs: 2000,
            k_true: 4,
            vocab_size: 200,
            doc_len_min: 60,
            doc_len_max: 120,
            alpha_true: 0.2,
            leakage: 0.1,
            decay: 0.5,
            beta0: 10.2,
            beta_topics: vec![0.0, 0.3, 0.6, 0.9],
            counties: ["Kent", "Essex", "Surrey", "Devon", "Cumbria"].map(String::from).to_vec(),
            county_effects: vec![0.05, -0.03, 0.02, -0.04, 0.0],
            month_effects: vec![0.0, 0.01, -0.01, 0.02, 0.0, -0.02, 0.01, 0.0, -0.01, 0.02, 0.0, -0.02],
            job_type_effects: vec![0.0, -0.1, 0.05, -0.05],
            year: 2018,
            noise_sd: 0.0,
            seed,
        };
        cfg.noise_sd = cfg.noise_sd_for_target_r2(0.5);
        cfg
    }

    /// Same design with `k` topics; topic effects spread evenly over [0, 0.9].
    pub fn with_topics(mut self, k: usize) -> Self {
        self.k_true = k;
        self.beta_topics = (0..k).map(|t| if k == 1 { 0.0 } else { 0.9 * t as f64 / (k - 1) as f64 }).collect();
        self.noise_sd = self.noise_sd_for_target_r2(0.5);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic config: {m}")));
        if self.n_docs == 0 || self.k_true == 0 || self.vocab_size < self.k_true {
            return bad("need n_docs >= 1 and 1 <= k_true <= vocab_size");
        }
        if self.vocab_size > 26usize.pow(3) {
            return bad("vocab_size above 17576");
        }
        if self.doc_len_min > self.doc_len_max {
            return bad("doc_len_min exceeds doc_len_max");
        }
        if !(self.alpha_true > 0.0) || !(0.0..1.0).contains(&self.leakage) || !(self.noise_sd >= 0.0) {
            return bad("alpha_true must be positive, leakage in [0, 1), noise_sd non-negative");
        }
        if self.beta_topics.len() != self.k_true
            || self.county_effects.len() != self.counties.len()
            || self.counties.is_empty()
            || self.month_effects.len() != 12
            || self.job_type_effects.len() != 4
        {
            return bad("effect vectors do not match their level counts");
        }
        Ok(())
    }

    fn signal_variance(&self) -> f64 {
        let k = self.k_true as f64;
        let mean = self.beta_topics.iter().sum::<f64>() / k;
        let sq = self.beta_topics.iter().map(|b| b * b).sum::<f64>() / k;
        let theta = (sq - mean * mean) / (k * self.alpha_true + 1.0);
        let pop_var = |e: &[f64]| {
            let m = e.iter().sum::<f64>() / e.len() as f64;
            e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / e.len() as f64
        };
        theta + pop_var(&self.county_effects) + pop_var(&self.month_effects) + pop_var(&self.job_type_effects)
    }

    /// Noise SD giving population R² = `r2` for the full planted equation.
    pub fn noise_sd_for_target_r2(&self, r2: f64) -> f64 {
        (self.signal_variance() * (1.0 - r2) / r2).sqrt()
    }

    /// var(signal) / (var(signal) + noise²).
    pub fn design_r2(&self) -> f64 {
        let s = self.signal_variance();
        s / (s + self.noise_sd * self.noise_sd)
    }

    pub fn vocab(&self) -> Vec<String> {
        (0..self.vocab_size).map(word).collect()
    }

    /// Vocabulary block of word `w`.
    pub fn block_of(&self, w: usize) -> usize {
        w * self.k_true / self.vocab_size
    }

    fn block(&self, k: usize) -> std::ops::Range<usize> {
        let start = (k * self.vocab_size).div_ceil(self.k_true);
        let end = ((k + 1) * self.vocab_size).div_ceil(self.k_true);
        start..end
    }

    /// Topic-word distributions: power-law weights inside each topic's
    /// block, `leakage` spread evenly over all other words.
    pub fn planted_phi(&self) -> Vec<Vec<f64>> {
        (0..self.k_true)
            .map(|k| {
                let block = self.block(k);
                let weights: Vec<f64> = (0..block.len()).map(|r| (r as f64 + 1.0).powf(-self.decay)).collect();
                let total: f64 = weights.iter().sum();
                let outside = self.vocab_size - block.len();
                let inside_mass = if outside == 0 { 1.0 } else { 1.0 - self.leakage };
                (0..self.vocab_size)
                    .map(|w| {
                        if block.contains(&w) {
                            inside_mass * weights[w - block.start] / total
                        } else {
                            self.leakage / outside as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn word(i: usize) -> String {
    let l = |x: usize| (b'a' + x as u8) as char;
    format!("zz{}{}{}", l(i / 676 % 26), l(i / 26 % 26), l(i % 26))
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn categorical(rng: &mut ChaCha8Rng, cum: &[f64]) -> usize {
    let u = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub vocab: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Planted topic of every token.
    pub assignments: Vec<Vec<u16>>,
    pub dominant: Vec<usize>,
    pub county: Vec<usize>,
    pub month: Vec<usize>,
    pub job_type: Vec<usize>,
    pub noise: Vec<f64>,
    pub log_wage: Vec<f64>,
    pub design_r2: f64,
}

impl SynthTruth {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        util::write_string(path, &serde_json::to_string(self).map_err(|e| Error::json("ground truth", e))?)
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        serde_json::from_str(&util::read_to_string(path)?).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Tokens and planted assignments for given topic proportions. Uses only
/// the token stream, so stored θ and the seed reproduce the text.
pub fn regenerate_tokens(cfg: &SynthConfig, theta: &[Vec<f64>]) -> (Vec<Vec<String>>, Vec<Vec<u16>>) {
    let vocab = cfg.vocab();
    let phi_cum: Vec<Vec<f64>> = cfg.planted_phi().iter().map(|p| cumulative(p)).collect();
    let mut rng = stream(cfg.seed, TOKEN_STREAM);
    theta
        .iter()
        .map(|th| {
            let th_cum = cumulative(th);
            let len = rng.random_range(cfg.doc_len_min..=cfg.doc_len_max);
            (0..len)
                .map(|_| {
                    let z = categorical(&mut rng, &th_cum);
                    let w = categorical(&mut rng, &phi_cum[z]);
                    (vocab[w].clone(), z as u16)
                })
                .unzip()
        })
        .unzip()
}

pub fn generate(cfg: &SynthConfig) -> Result<(Corpus, SynthTruth)> {
    cfg.validate()?;
    let k = cfg.k_true;
    let gamma = Gamma::new(cfg.alpha_true, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream(cfg.seed, THETA_STREAM);
    let theta: Vec<Vec<f64>> = (0..cfg.n_docs)
        .map(|_| {
            let g: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let s: f64 = g.iter().sum();
            if s > 0.0 {
                g.iter().map(|x| x / s).collect()
            } else {
                let hot = rng.random_range(0..k);
                (0..k).map(|t| if t == hot { 1.0 } else { 0.0 }).collect()
            }
        })
        .collect();
    let (tokens, assignments) = regenerate_tokens(cfg, &theta);

    let noise_dist = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream(cfg.seed, META_STREAM);
    let mut ads = Vec::with_capacity(cfg.n_docs);
    let (mut county, mut month, mut job_type, mut noise, mut log_wage, mut dominant) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, (th, toks)) in theta.iter().zip(&tokens).enumerate() {
        let c = rng.random_range(0..cfg.counties.len());
        let m = rng.random_range(0..12);
        let day = rng.random_range(1..=28);
        let j = rng.random_range(0..4);
        let company = rng.random_range(0..100);
        let e = noise_dist.sample(&mut rng);
        let signal: f64 = cfg.beta0
            + th.iter().zip(&cfg.beta_topics).map(|(t, b)| t * b).sum::<f64>()
            + cfg.county_effects[c]
            + cfg.month_effects[m]
            + cfg.job_type_effects[j];
        let lw = signal + e;
        let dom = util::argmax(th);
        ads.push(JobAd {
            id: format!("syn{:06}", i + 1),
            title: format!("Synthetic role {}", i + 1),
            category: format!("Sector {}", dom + 1),
            company: format!("Company {company:03}"),
            county: cfg.counties[c].clone(),
            posting_date: NaiveDate::from_ymd_opt(cfg.year, m as u32 + 1, day).expect("valid date"),
            job_type: JobType::ALL[j],
            wage: lw.exp(),
            description_raw: toks.join(" "),
        });
        county.push(c);
        month.push(m);
        job_type.push(j);
        noise.push(e);
        log_wage.push(lw);
        dominant.push(dom);
    }
    let corpus = Corpus::from_ads(ads, format!("synthetic(seed={})", cfg.seed))?;
    let truth = SynthTruth {
        config: cfg.clone(),
        vocab: cfg.vocab(),
        phi: cfg.planted_phi(),
        theta,
        assignments,
        dominant,
        county,
        month,
        job_type,
        noise,
        log_wage,
        design_r2: cfg.design_r2(),
    };
    Ok((corpus, truth))
}

/// A coarse straw-man scheme: each category takes random words spread
/// evenly across all planted blocks, so no category tracks any one topic.
pub fn mismatched_dictionary(cfg: &SynthConfig, n_categories: usize, per_category: usize, seed: u64) -> Result<SkillScheme> {
    let vocab = cfg.vocab();
    let mut rng = stream(seed, 7);
    let mut pools: Vec<Vec<usize>> = (0..cfg.k_true)
        .map(|k| {
            let block: Vec<usize> = cfg.block(k).collect();
            sample(&mut rng, block.len(), block.len()).into_iter().map(|i| block[i]).collect()
        })
        .collect();
    let categories = (0..n_categories)
        .map(|c| {
            let words: Vec<Vec<String>> = (0..per_category)
                .filter_map(|j| pools[(c + j) % cfg.k_true].pop())
                .map(|w| vec![vocab[w].clone()])
                .collect();
            SkillCategory::new(format!("Mismatched skill {}", c + 1), words)
        })
        .collect::<Result<Vec<_>>>()?;
    SkillScheme::new("mismatched", categories)
}

/// One category per planted topic holding that topic's `top` most
/// probable block words.
pub fn aligned_dictionary(cfg: &SynthConfig, top: usize) -> Result<SkillScheme> {
    let vocab = cfg.vocab();
    let categories = (0..cfg.k_true)
        .map(|k| {
            let words = cfg.block(k).take(top).map(|w| vec![vocab[w].clone()]);
            SkillCategory::new(format!("Planted skill {}", k + 1), words)
        })
        .collect::<Result<Vec<_>>>()?;
    SkillScheme::new("aligned", categories)
}

/// Appends `per_ad` keyword phrases to every description, each from a
/// uniformly chosen category of `schemes`, so that lexicon methods have
/// something to score. Wages are left untouched.
pub fn plant_keywords(corpus: &mut Corpus, schemes: &[&SkillScheme], per_ad: usize, seed: u64) {
    let categories: Vec<&SkillCategory> = schemes.iter().flat_map(|s| &s.categories).collect();
    if categories.is_empty() {
        return;
    }
    let mut rng = stream(seed, KEYWORD_STREAM);
    for ad in &mut corpus.ads {
        for _ in 0..per_ad {
            let cat = categories[rng.random_range(0..categories.len())];
            let kw = &cat.keywords()[rng.random_range(0..cat.len())];
            ad.description_raw.push(' ');
            ad.description_raw.push_str(&kw.join(" "));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { n_docs: 200, ..SynthConfig::new(seed) }
    }

    #[test]
    fn planted_keywords_are_found() {
        use crate::lexicon::{intensity, BundledScheme};
        use crate::textnorm::{normalize, NormConfig};
        let norm = NormConfig::bundled();
        let scheme = SkillScheme::bundled(BundledScheme::Spitz5, &norm);
        let (mut corpus, _) = generate(&small(4)).unwrap();
        let wages = corpus.wages();
        plant_keywords(&mut corpus, &[&scheme], 3, 9);
        assert_eq!(corpus.wages(), wages);
        for ad in &corpus.ads {
            let doc = crate::textnorm::NormalizedDoc { ad_id: ad.id.clone(), tokens: normalize(&ad.description_raw, &norm) };
            let hits: f64 = scheme.categories.iter().map(|c| intensity(&doc, c) * c.len() as f64).sum();
            assert!(hits >= 1.0);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let (a, ta) = generate(&small(5)).unwrap();
        let (b, tb) = generate(&small(5)).unwrap();
        assert_eq!(a.ads, b.ads);
        assert_eq!(ta, tb);
        let (c, _) = generate(&small(6)).unwrap();
        assert_ne!(a.ads, c.ads);
    }

    #[test]
    fn theta_rows_on_simplex() {
        let (_, t) = generate(&small(1)).unwrap();
        for row in &t.theta {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
        for row in &t.phi {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tokens_regenerate_from_theta() {
        let cfg = small(3);
        let (corpus, t) = generate(&cfg).unwrap();
        let (tokens, z) = regenerate_tokens(&cfg, &t.theta);
        assert_eq!(z, t.assignments);
        for (ad, toks) in corpus.ads.iter().zip(tokens) {
            assert_eq!(ad.description_raw, toks.join(" "));
        }
    }

    #[test]
    fn words_survive_normalization() {
        let cfg = crate::textnorm::NormConfig::bundled();
        let vocab = SynthConfig::new(0).vocab();
        assert_eq!(vocab[0], "zzaaa");
        assert_eq!(vocab[27], "zzabb");
        for w in &vocab {
            assert_eq!(crate::textnorm::normalize(w, &cfg), [w.clone()]);
        }
    }

    #[test]
    fn blocks_partition_vocabulary() {
        let cfg = SynthConfig { vocab_size: 10, ..SynthConfig::new(0) }.with_topics(3);
        let sizes: Vec<usize> = (0..3).map(|k| cfg.block(k).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        for w in 0..10 {
            assert!(cfg.block(cfg.block_of(w)).contains(&w), "{w}");
        }
    }

    #[test]
    fn design_r2_matches_target() {
        let cfg = SynthConfig::new(0);
        assert!((cfg.design_r2() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dictionaries_have_requested_shape() {
        let cfg = SynthConfig::new(0);
        let m = mismatched_dictionary(&cfg, 5, 10, 1).unwrap();
        assert_eq!(m.categories.len(), 5);
        for c in &m.categories {
            assert_eq!(c.len(), 10);
            let mut per_block = [0usize; 4];
            for k in c.keywords() {
                let idx = cfg.vocab().iter().position(|w| *w == k[0]).unwrap();
                per_block[cfg.block_of(idx)] += 1;
            }
            assert!(per_block.iter().all(|&n| n == 2 || n == 3), "{per_block:?}");
        }
        let a = aligned_dictionary(&cfg, 10).unwrap();
        assert_eq!(a.categories.len(), 4);
        assert_eq!(a.categories[1].keywords()[0], ["zzaby"]);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&SynthConfig { k_true: 3, ..SynthConfig::new(0) }).is_err());
        assert!(generate(&SynthConfig { leakage: 1.0, ..SynthConfig::new(0) }).is_err());
        assert!(generate(&SynthConfig { doc_len_min: 10, doc_len_max: 5, ..SynthConfig::new(0) }).is_err());
    }
}
