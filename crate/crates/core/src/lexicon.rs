//! Keyword skill schemes and dictionary-based skill intensity scores.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::textnorm::{normalize, NormConfig, NormalizedDoc};
use crate::util;
use crate::{Error, Result};

const SPITZ5: &str = include_str!("../schemes/spitz5.json");
const DEMING10: &str = include_str!("../schemes/deming10.json");
const DISCO_NONDOMAIN: &str = include_str!("../schemes/disco_nondomain.json");
const DISCO_DOMAINS: &str = include_str!("../schemes/disco_domains.json");

/// Schemes shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundledScheme {
    /// Five task categories, nonroutine analytic through nonroutine manual.
    Spitz5,
    /// Ten job-skill categories, cognitive through specific computer skills.
    Deming10,
    /// Eight general (non-domain) skill categories.
    DiscoNonDomain,
    /// Illustrative domain-specific categories for domain assignment.
    DiscoDomains,
}

impl BundledScheme {
    pub fn json(self) -> &'static str {
        match self {
            BundledScheme::Spitz5 => SPITZ5,
            BundledScheme::Deming10 => DEMING10,
            BundledScheme::DiscoNonDomain => DISCO_NONDOMAIN,
            BundledScheme::DiscoDomains => DISCO_DOMAINS,
        }
    }
}

/// A keyword is a normalized token sequence; unigrams have length one.
pub type Keyword = Vec<String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCategory {
    pub name: String,
    keywords: Vec<Keyword>,
}

impl SkillCategory {
    /// Builds a category from already-normalized keywords, dropping
    /// duplicates while keeping first-seen order.
    pub fn new(name: impl Into<String>, keywords: impl IntoIterator<Item = Keyword>) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        let keywords: Vec<Keyword> = keywords
            .into_iter()
            .filter(|k| !k.is_empty())
            .filter(|k| seen.insert(k.clone()))
            .collect();
        if keywords.is_empty() {
            return Err(Error::Scheme(format!("category `{name}` has no keywords")));
        }
        Ok(SkillCategory { name, keywords })
    }

    pub fn keywords(&self) -> &[Keyword] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillScheme {
    pub name: String,
    pub categories: Vec<SkillCategory>,
    /// Raw keywords that normalized to nothing and were skipped.
    #[serde(default)]
    pub dropped_keywords: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct SchemeFile {
    name: String,
    categories: Vec<CategoryFile>,
}

#[derive(Debug, Deserialize)]
struct CategoryFile {
    name: String,
    keywords: Vec<String>,
}

impl SkillScheme {
    pub fn new(name: impl Into<String>, categories: Vec<SkillCategory>) -> Result<Self> {
        let name = name.into();
        if categories.is_empty() {
            return Err(Error::Scheme(format!("scheme `{name}` has no categories")));
        }
        let mut names = HashSet::new();
        for c in &categories {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Scheme(format!("duplicate category `{}` in `{name}`", c.name)));
            }
        }
        Ok(SkillScheme { name, categories, dropped_keywords: Vec::new() })
    }

    /// Parses scheme JSON, normalizing every keyword with the document
    /// pipeline minus stopword removal.
    pub fn from_json(json: &str, cfg: &NormConfig) -> Result<Self> {
        let file: SchemeFile = serde_json::from_str(json).map_err(|e| Error::json("skill scheme", e))?;
        let kw_cfg = cfg.for_keywords();
        let mut dropped = Vec::new();
        let mut categories = Vec::with_capacity(file.categories.len());
        for cat in file.categories {
            let mut keywords = Vec::with_capacity(cat.keywords.len());
            for raw in cat.keywords {
                let tokens = normalize(&raw, &kw_cfg);
                if tokens.is_empty() {
                    warn!("keyword `{raw}` in `{}` is empty after normalization; skipped", cat.name);
                    dropped.push(raw);
                } else {
                    keywords.push(tokens);
                }
            }
            categories.push(SkillCategory::new(cat.name, keywords)?);
        }
        let mut scheme = SkillScheme::new(file.name, categories)?;
        scheme.dropped_keywords = dropped;
        Ok(scheme)
    }

    pub fn load(path: &Path, cfg: &NormConfig) -> Result<Self> {
        Self::from_json(&util::read_to_string(path)?, cfg)
    }

    pub fn bundled(which: BundledScheme, cfg: &NormConfig) -> Self {
        Self::from_json(which.json(), cfg).expect("bundled scheme is valid")
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn keyword_count(&self) -> usize {
        self.categories.iter().map(SkillCategory::len).sum()
    }

    /// Writes the scheme in the on-disk JSON shape, phrases joined by spaces.
    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "name": self.name,
            "categories": self.categories.iter().map(|c| serde_json::json!({
                "name": c.name,
                "keywords": c.keywords.iter().map(|k| k.join(" ")).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&value).expect("scheme serializes")
    }
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    if phrase.len() == 1 {
        return tokens.iter().any(|t| *t == phrase[0]);
    }
    tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Fraction of the category's unique keywords found at least once as a
/// contiguous token sequence of the document.
pub fn intensity(doc: &NormalizedDoc, cat: &SkillCategory) -> f64 {
    let hits = cat.keywords.iter().filter(|k| contains_phrase(&doc.tokens, k)).count();
    hits as f64 / cat.keywords.len() as f64
}

pub fn binary_presence(doc: &NormalizedDoc, cat: &SkillCategory) -> u8 {
    u8::from(intensity(doc, cat) > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Intensity,
    Binary,
    Probability,
    /// Z-scored columns; no range restriction.
    Standardized,
}

/// Per-ad skill scores for one method, row-aligned with the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub method: String,
    pub ad_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub kind: FeatureKind,
    /// Row-major `ad_ids.len() × feature_names.len()`.
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        method: impl Into<String>,
        ad_ids: Vec<String>,
        feature_names: Vec<String>,
        kind: FeatureKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != ad_ids.len() * feature_names.len() {
            return Err(Error::InvalidParameter(format!(
                "feature matrix has {} values for {} rows × {} columns",
                values.len(),
                ad_ids.len(),
                feature_names.len()
            )));
        }
        let ok = |v: f64| match kind {
            FeatureKind::Intensity | FeatureKind::Probability => (0.0..=1.0).contains(&v),
            FeatureKind::Binary => v == 0.0 || v == 1.0,
            FeatureKind::Standardized => v.is_finite(),
        };
        if let Some(bad) = values.iter().position(|&v| !ok(v)) {
            return Err(Error::InvalidParameter(format!(
                "value {} at row {}, column {} is out of range for {kind:?} features",
                values[bad],
                bad / feature_names.len().max(1),
                bad % feature_names.len().max(1)
            )));
        }
        Ok(FeatureMatrix { method: method.into(), ad_ids, feature_names, kind, values })
    }

    pub fn n_rows(&self) -> usize {
        self.ad_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[row * p..(row + 1) * p]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean of each column: average intensity, or share of ads for binary.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n_rows().max(1) as f64;
        (0..self.n_cols())
            .map(|c| (0..self.n_rows()).map(|r| self.get(r, c)).sum::<f64>() / n)
            .collect()
    }

    /// Drops one column, keeping order of the rest.
    pub fn without_column(&self, col: usize) -> Self {
        let p = self.n_cols();
        let values = self
            .values
            .chunks(p)
            .flat_map(|row| row.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, v)| *v))
            .collect();
        let mut names = self.feature_names.clone();
        names.remove(col);
        FeatureMatrix { values, feature_names: names, ..self.clone() }
    }

    /// Concatenates columns of row-aligned matrices.
    pub fn hstack(method: impl Into<String>, parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidParameter("nothing to stack".into()))?;
        for p in parts {
            if p.ad_ids != first.ad_ids {
                return Err(Error::Alignment(format!("`{}` rows differ from `{}`", p.method, first.method)));
            }
        }
        let names = parts.iter().flat_map(|p| p.feature_names.iter().cloned()).collect();
        let mut values = Vec::with_capacity(first.n_rows() * parts.iter().map(|p| p.n_cols()).sum::<usize>());
        for r in 0..first.n_rows() {
            for p in parts {
                values.extend_from_slice(p.row(r));
            }
        }
        let kind = if parts.iter().all(|p| p.kind == first.kind) { first.kind } else { FeatureKind::Intensity };
        FeatureMatrix::new(method, first.ad_ids.clone(), names, kind, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(util::create(path)?);
        let mut header = vec!["ad_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (r, id) in self.ad_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, method: &str, kind: FeatureKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(util::open(path)?);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("ad_id") {
            return Err(Error::MissingColumn("ad_id".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            for field in rec.iter().skip(1) {
                values.push(field.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("non-numeric feature value `{field}` in {}", path.display()))
                })?);
            }
        }
        FeatureMatrix::new(method, ids, names, kind, values)
    }

    /// `name,mean` lines summarizing prevalence per feature.
    pub fn prevalence_csv(&self) -> String {
        let mut out = String::from("feature,mean\n");
        for (name, m) in self.feature_names.iter().zip(self.column_means()) {
            out.push_str(&format!("{name},{m:.6}\n"));
        }
        out
    }
}

/// Keyword lookup indexed by first token, shared by every document.
struct Matcher<'a> {
    by_first: HashMap<&'a str, Vec<(usize, usize)>>,
    sizes: Vec<usize>,
}

impl<'a> Matcher<'a> {
    fn new(scheme: &'a SkillScheme) -> Self {
        let mut by_first: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
        for (c, cat) in scheme.categories.iter().enumerate() {
            for (k, kw) in cat.keywords.iter().enumerate() {
                by_first.entry(kw[0].as_str()).or_default().push((c, k));
            }
        }
        Matcher { by_first, sizes: scheme.categories.iter().map(SkillCategory::len).collect() }
    }

    fn hits(&self, scheme: &SkillScheme, tokens: &[String]) -> Vec<usize> {
        let mut found: HashSet<(usize, usize)> = HashSet::new();
        let mut hits = vec![0usize; self.sizes.len()];
        for (i, tok) in tokens.iter().enumerate() {
            let Some(cands) = self.by_first.get(tok.as_str()) else { continue };
            for &(c, k) in cands {
                let kw = &scheme.categories[c].keywords[k];
                if tokens.len() - i >= kw.len() && tokens[i..i + kw.len()] == kw[..] && found.insert((c, k)) {
                    hits[c] += 1;
                }
            }
        }
        hits
    }
}

/// Scores every document against every category, one column per category
/// in scheme order.
pub fn score_corpus(docs: &[NormalizedDoc], scheme: &SkillScheme, kind: FeatureKind) -> Result<FeatureMatrix> {
    if docs.is_empty() {
        return Err(Error::InvalidParameter("no documents to score".into()));
    }
    if !matches!(kind, FeatureKind::Intensity | FeatureKind::Binary) {
        return Err(Error::InvalidParameter(format!("lexicon scores cannot be {kind:?}")));
    }
    let matcher = Matcher::new(scheme);
    let values: Vec<f64> = docs
        .par_iter()
        .flat_map_iter(|doc| {
            let hits = matcher.hits(scheme, &doc.tokens);
            hits.into_iter()
                .zip(&matcher.sizes)
                .map(|(h, &size)| match kind {
                    FeatureKind::Binary => f64::from(u8::from(h > 0)),
                    _ => h as f64 / size as f64,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    FeatureMatrix::new(
        scheme.name.clone(),
        docs.iter().map(|d| d.ad_id.clone()).collect(),
        scheme.category_names(),
        kind,
        values,
    )
}

/// Writes `features` to `path` alongside a prevalence summary.
pub fn write_with_prevalence(features: &FeatureMatrix, path: &Path, prevalence: &Path) -> Result<()> {
    features.write_csv(path)?;
    let mut w = util::create(prevalence)?;
    w.write_all(features.prevalence_csv().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(prevalence, e))
}
