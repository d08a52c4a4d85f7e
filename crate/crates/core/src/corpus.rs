//! Job-advertisement records: loading, cleaning and wage summaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::util;
use crate::{Error, Result};

/// Columns every input file must carry, in canonical order.
pub const COLUMNS: [&str; 10] = [
    "id",
    "title",
    "category",
    "company",
    "county",
    "posting_date",
    "job_type",
    "contract_type",
    "wage",
    "description",
];

/// Default two-sided wage trimming quantile.
pub const DEFAULT_TRIM_QUANTILE: f64 = 0.005;

const BUNDLED_UK_LOCATIONS: &str = include_str!("../data/uk_locations.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hours {
    FullTime,
    PartTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tenure {
    Permanent,
    Temporary,
}

/// Working-hours and contract-duration classification of a posting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JobType {
    pub hours: Hours,
    pub tenure: Tenure,
}

impl JobType {
    pub const ALL: [JobType; 4] = [
        JobType { hours: Hours::FullTime, tenure: Tenure::Permanent },
        JobType { hours: Hours::FullTime, tenure: Tenure::Temporary },
        JobType { hours: Hours::PartTime, tenure: Tenure::Permanent },
        JobType { hours: Hours::PartTime, tenure: Tenure::Temporary },
    ];

    /// Dense code in `0..4`, used as a fixed-effect level.
    pub fn code(self) -> u32 {
        match (self.hours, self.tenure) {
            (Hours::FullTime, Tenure::Permanent) => 0,
            (Hours::FullTime, Tenure::Temporary) => 1,
            (Hours::PartTime, Tenure::Permanent) => 2,
            (Hours::PartTime, Tenure::Temporary) => 3,
        }
    }
}

impl fmt::Display for Hours {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hours::FullTime => "full_time",
            Hours::PartTime => "part_time",
        })
    }
}

impl fmt::Display for Tenure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tenure::Permanent => "permanent",
            Tenure::Temporary => "temporary",
        })
    }
}

fn squash(s: &str) -> String {
    s.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == '-' || c == ' ' { '_' } else { c })
        .collect()
}

impl FromStr for Hours {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match squash(s).as_str() {
            "full_time" | "fulltime" => Ok(Hours::FullTime),
            "part_time" | "parttime" => Ok(Hours::PartTime),
            _ => Err(()),
        }
    }
}

impl FromStr for Tenure {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match squash(s).as_str() {
            "permanent" => Ok(Tenure::Permanent),
            "temporary" | "temp" | "contract" => Ok(Tenure::Temporary),
            _ => Err(()),
        }
    }
}

/// One job advertisement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAd {
    pub id: String,
    pub title: String,
    pub category: String,
    pub company: String,
    pub county: String,
    pub posting_date: NaiveDate,
    pub job_type: JobType,
    /// Annual wage in GBP.
    pub wage: f64,
    pub description_raw: String,
}

impl JobAd {
    pub fn posting_month(&self) -> u32 {
        self.posting_date.month()
    }

    fn missing_field(&self) -> Option<&'static str> {
        [
            ("title", &self.title),
            ("category", &self.category),
            ("company", &self.company),
            ("county", &self.county),
            ("description", &self.description_raw),
        ]
        .into_iter()
        .find(|(_, v)| v.trim().is_empty())
        .map(|(name, _)| name)
    }
}

/// A row that did not become a [`JobAd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row (header excluded) or JSONL line.
    pub row: usize,
    pub id: Option<String>,
    pub reason: String,
}

/// Per-rule drop counts accumulated by [`clean`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningLog {
    pub trim_quantile: f64,
    /// Wage interval `[low, high]` that survived trimming.
    pub wage_bounds: Option<(f64, f64)>,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub input_rows: usize,
    pub rejected: Vec<Rejection>,
    pub cleaning: Option<CleaningLog>,
}

impl Provenance {
    /// Rejection counts per reason code.
    pub fn rejection_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rejected {
            *counts.entry(r.reason.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// An ordered collection of advertisements with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub ads: Vec<JobAd>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus from already-validated ads.
    pub fn from_ads(ads: Vec<JobAd>, source: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for ad in &ads {
            if !seen.insert(ad.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate ad id `{}`", ad.id)));
            }
            if !(ad.wage > 0.0 && ad.wage.is_finite()) {
                return Err(Error::InvalidParameter(format!("ad `{}` has non-positive wage", ad.id)));
            }
        }
        Ok(Corpus {
            provenance: Provenance {
                source: source.into(),
                input_rows: ads.len(),
                ..Provenance::default()
            },
            ads,
        })
    }

    pub fn len(&self) -> usize {
        self.ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ads.is_empty()
    }

    pub fn wages(&self) -> Vec<f64> {
        self.ads.iter().map(|a| a.wage).collect()
    }

    /// SHA-256 over the canonical JSONL serialization of the ads.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        for ad in &self.ads {
            serde_json::to_writer(&mut buf, &AdRecord::from(ad)).expect("ad serializes");
            buf.push(b'\n');
        }
        util::sha256_hex(&buf)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(util::create(path)?);
        w.write_record(COLUMNS)?;
        for ad in &self.ads {
            w.serialize(AdRecord::from(ad))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = util::create(path)?;
        for ad in &self.ads {
            serde_json::to_writer(&mut w, &AdRecord::from(ad)).map_err(|e| Error::json("corpus", e))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .parse()
    }
}

/// Flat on-disk record shared by the CSV and JSONL formats.
#[derive(Debug, Serialize)]
struct AdRecord<'a> {
    id: &'a str,
    title: &'a str,
    category: &'a str,
    company: &'a str,
    county: &'a str,
    posting_date: String,
    job_type: String,
    contract_type: String,
    wage: f64,
    description: &'a str,
}

impl<'a> From<&'a JobAd> for AdRecord<'a> {
    fn from(ad: &'a JobAd) -> Self {
        AdRecord {
            id: &ad.id,
            title: &ad.title,
            category: &ad.category,
            company: &ad.company,
            county: &ad.county,
            posting_date: ad.posting_date.format("%Y-%m-%d").to_string(),
            job_type: ad.job_type.hours.to_string(),
            contract_type: ad.job_type.tenure.to_string(),
            wage: ad.wage,
            description: &ad.description_raw,
        }
    }
}

/// Raw field values of one input row, keyed by column name.
type RawRow = HashMap<&'static str, Option<String>>;

fn parse_row(raw: &RawRow) -> std::result::Result<JobAd, String> {
    let get = |k: &str| raw.get(k).and_then(|v| v.as_deref()).map(str::trim).unwrap_or("");
    let id = get("id");
    if id.is_empty() {
        return Err("missing_id".into());
    }
    let wage_text = get("wage");
    if wage_text.is_empty() {
        return Err("missing_wage".into());
    }
    let wage: f64 = match wage_text.parse::<f64>() {
        Ok(w) if w.is_finite() => w,
        _ => return Err("non_numeric_wage".into()),
    };
    if wage <= 0.0 {
        return Err("non_positive_wage".into());
    }
    let date_text = get("posting_date");
    if date_text.is_empty() {
        return Err("missing_posting_date".into());
    }
    let posting_date =
        NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| "invalid_posting_date".to_string())?;
    let hours = get("job_type").parse::<Hours>().map_err(|_| "invalid_job_type".to_string())?;
    let tenure = get("contract_type")
        .parse::<Tenure>()
        .map_err(|_| "invalid_contract_type".to_string())?;
    let text = |k: &str| raw.get(k).cloned().flatten().unwrap_or_default();
    Ok(JobAd {
        id: id.to_string(),
        title: text("title"),
        category: text("category"),
        company: text("company"),
        county: text("county"),
        posting_date,
        job_type: JobType { hours, tenure },
        wage,
        description_raw: text("description"),
    })
}

struct Loader {
    ads: Vec<JobAd>,
    rejected: Vec<Rejection>,
    ids: HashSet<String>,
    rows: usize,
}

impl Loader {
    fn new() -> Self {
        Loader { ads: Vec::new(), rejected: Vec::new(), ids: HashSet::new(), rows: 0 }
    }

    fn push(&mut self, raw: std::result::Result<RawRow, String>) {
        self.rows += 1;
        let row = self.rows;
        let raw = match raw {
            Ok(raw) => raw,
            Err(reason) => {
                self.rejected.push(Rejection { row, id: None, reason });
                return;
            }
        };
        let id = raw.get("id").cloned().flatten().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        match parse_row(&raw) {
            Ok(ad) if !self.ids.insert(ad.id.clone()) => {
                self.rejected.push(Rejection { row, id, reason: "duplicate_id".into() });
            }
            Ok(ad) => self.ads.push(ad),
            Err(reason) => self.rejected.push(Rejection { row, id, reason }),
        }
    }

    fn finish(self, source: String) -> Corpus {
        Corpus {
            ads: self.ads,
            provenance: Provenance {
                source,
                input_rows: self.rows,
                rejected: self.rejected,
                cleaning: None,
            },
        }
    }
}

/// Reads a corpus file. Rows that fail validation are kept in the
/// rejection log with a reason code; input order is preserved.
pub fn load(path: &Path, format: Format) -> Result<Corpus> {
    let reader = util::open(path)?;
    let source = path.display().to_string();
    match format {
        Format::Csv => load_csv(reader, source),
        Format::Jsonl => load_jsonl(reader, source, path),
    }
}

pub fn load_csv<R: std::io::Read>(reader: R, source: String) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions = Vec::with_capacity(COLUMNS.len());
    for col in COLUMNS {
        let pos = headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == col)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))?;
        positions.push((col, pos));
    }
    let mut loader = Loader::new();
    for record in rdr.records() {
        let raw = record.map_err(|_| "malformed_row".to_string()).map(|rec| {
            positions
                .iter()
                .map(|&(col, pos)| (col, rec.get(pos).map(str::to_string)))
                .collect::<RawRow>()
        });
        loader.push(raw);
    }
    Ok(loader.finish(source))
}

fn load_jsonl<R: BufRead>(reader: R, source: String, path: &Path) -> Result<Corpus> {
    let mut loader = Loader::new();
    let mut checked_columns = false;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw = match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&line) {
            Ok(obj) => {
                if !checked_columns {
                    if let Some(col) = COLUMNS.iter().find(|c| !obj.contains_key(**c)) {
                        return Err(Error::MissingColumn(col.to_string()));
                    }
                    checked_columns = true;
                }
                Ok(COLUMNS
                    .iter()
                    .map(|&col| {
                        let v = match obj.get(col) {
                            None | Some(serde_json::Value::Null) => None,
                            Some(serde_json::Value::String(s)) => Some(s.clone()),
                            Some(other) => Some(other.to_string()),
                        };
                        (col, v)
                    })
                    .collect::<RawRow>())
            }
            Err(_) => Err("malformed_row".to_string()),
        };
        loader.push(raw);
    }
    Ok(loader.finish(source))
}

/// Set of recognised UK counties and regions, compared case-insensitively.
#[derive(Debug, Clone)]
pub struct UkLocations(HashSet<String>);

fn location_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl UkLocations {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_UK_LOCATIONS)
    }

    /// One location per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        UkLocations(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(location_key)
                .collect(),
        )
    }

    pub fn contains(&self, county: &str) -> bool {
        self.0.contains(&location_key(county))
    }
}

/// Nearest-rank quantile: the smallest value whose 1-based rank reaches `q * n`.
/// `sorted` must be ascending and non-empty.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // Guard against 0.995 * 1000 = 995.0000000000001.
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Cleans with the bundled UK location list.
pub fn clean(corpus: &Corpus, trim_quantile: f64) -> Result<Corpus> {
    clean_with(corpus, trim_quantile, &UkLocations::bundled())
}

/// Applies, in order: missing mandatory fields, exact duplicates on
/// (title, company, county, description), non-UK locations, and two-sided
/// nearest-rank wage trimming with strict inequalities.
///
/// A corpus that was already cleaned with the same `trim_quantile` reuses its
/// recorded wage bounds, so cleaning is idempotent.
pub fn clean_with(corpus: &Corpus, trim_quantile: f64, locations: &UkLocations) -> Result<Corpus> {
    if !(0.0..0.25).contains(&trim_quantile) {
        return Err(Error::InvalidParameter(format!(
            "trim_quantile must lie in [0, 0.25), got {trim_quantile}"
        )));
    }
    let previous = corpus
        .provenance
        .cleaning
        .as_ref()
        .filter(|log| log.trim_quantile == trim_quantile);
    let mut counts: BTreeMap<String, usize> = ["missing_field", "duplicate", "non_uk_location", "wage_below_quantile", "wage_above_quantile"]
        .into_iter()
        .map(|k| (k.to_string(), 0))
        .collect();
    if let Some(prev) = previous {
        for (k, v) in &prev.counts {
            *counts.entry(k.clone()).or_insert(0) += v;
        }
    }

    let mut seen = HashSet::new();
    let mut kept: Vec<&JobAd> = Vec::with_capacity(corpus.ads.len());
    for ad in &corpus.ads {
        let rule = if ad.missing_field().is_some() {
            Some("missing_field")
        } else if !seen.insert((&ad.title, &ad.company, &ad.county, &ad.description_raw)) {
            Some("duplicate")
        } else if !locations.contains(&ad.county) {
            Some("non_uk_location")
        } else {
            None
        };
        match rule {
            Some(r) => *counts.get_mut(r).unwrap() += 1,
            None => kept.push(ad),
        }
    }

    let bounds = match previous.and_then(|p| p.wage_bounds) {
        Some(b) => Some(b),
        None if trim_quantile > 0.0 && !kept.is_empty() => {
            let mut wages: Vec<f64> = kept.iter().map(|a| a.wage).collect();
            wages.sort_by(f64::total_cmp);
            Some((nearest_rank(&wages, trim_quantile), nearest_rank(&wages, 1.0 - trim_quantile)))
        }
        None => None,
    };
    if let Some((low, high)) = bounds {
        kept.retain(|ad| {
            if ad.wage < low {
                *counts.get_mut("wage_below_quantile").unwrap() += 1;
                false
            } else if ad.wage > high {
                *counts.get_mut("wage_above_quantile").unwrap() += 1;
                false
            } else {
                true
            }
        });
    }
    if kept.is_empty() {
        return Err(Error::CorpusEmpty);
    }

    Ok(Corpus {
        ads: kept.into_iter().cloned().collect(),
        provenance: Provenance {
            cleaning: Some(CleaningLog { trim_quantile, wage_bounds: bounds, counts }),
            ..corpus.provenance.clone()
        },
    })
}

/// Gini coefficient Σᵢ Σⱼ |wᵢ − wⱼ| / (2 n² μ), evaluated in O(n log n)
/// from the order statistics. Returns 0 for an empty slice.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    // Σᵢ (2i − n − 1) x₍ᵢ₎ with 1-based ranks equals half the pairwise sum.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x)
        .sum();
    (weighted / (n as f64 * total)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryWages {
    pub n: usize,
    pub mean: f64,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageSummary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Nearest-rank quantiles keyed `p10`, `p25`, `p50`, `p75`, `p90`.
    pub quantiles: BTreeMap<String, f64>,
    pub gini: f64,
    pub per_category: BTreeMap<String, CategoryWages>,
}

impl WageSummary {
    /// Per-category table sorted by descending mean wage.
    pub fn category_table_csv(&self) -> String {
        let mut rows: Vec<_> = self.per_category.iter().collect();
        rows.sort_by(|a, b| b.1.mean.total_cmp(&a.1.mean).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("category,n,mean_wage,gini\n");
        for (name, c) in rows {
            let name = if name.contains([',', '"']) {
                format!("\"{}\"", name.replace('"', "\"\""))
            } else {
                name.clone()
            };
            out.push_str(&format!("{name},{},{:.2},{:.4}\n", c.n, c.mean, c.gini));
        }
        out
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn summarize(corpus: &Corpus) -> Result<WageSummary> {
    if corpus.is_empty() {
        return Err(Error::CorpusEmpty);
    }
    let mut wages = corpus.wages();
    wages.sort_by(f64::total_cmp);
    let quantiles = [("p10", 0.10), ("p25", 0.25), ("p50", 0.50), ("p75", 0.75), ("p90", 0.90)]
        .into_iter()
        .map(|(k, q)| (k.to_string(), nearest_rank(&wages, q)))
        .collect();

    let mut by_category: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ad in &corpus.ads {
        by_category.entry(ad.category.clone()).or_default().push(ad.wage);
    }
    let per_category = by_category
        .into_iter()
        .map(|(k, w)| (k, CategoryWages { n: w.len(), mean: mean(&w), gini: gini(&w) }))
        .collect();

    Ok(WageSummary {
        n: wages.len(),
        mean: mean(&wages),
        min: wages[0],
        max: wages[wages.len() - 1],
        quantiles,
        gini: gini(&wages),
        per_category,
    })
}
