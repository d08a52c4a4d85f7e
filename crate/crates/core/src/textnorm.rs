//! Deterministic normalization of job descriptions into word tokens.
//!
//! The steps run in a fixed order: lowercase, decode HTML entities, strip
//! HTML tags, transliterate accented Latin letters to ASCII, delete digits,
//! replace every other non-`[a-z]` character with a space, split on
//! whitespace, drop stopwords, lemmatize through a lookup table, and drop
//! tokens shorter than two characters.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::util;
use crate::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const BUNDLED_LEMMAS: &str = include_str!("../data/lemmas_en.tsv");

pub const MIN_TOKEN_LEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedDoc {
    pub ad_id: String,
    pub tokens: Vec<String>,
}

/// Stopword list, lemma table and switches for [`normalize`].
#[derive(Debug, Clone)]
pub struct NormConfig {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
    pub strip_html: bool,
    pub remove_stopwords: bool,
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase())
}

impl NormConfig {
    /// Bundled English stopwords (179 entries) and lemma table.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED_STOPWORDS, BUNDLED_LEMMAS).expect("bundled normalization data is valid")
    }

    /// Loads overrides from disk; `None` keeps the bundled file.
    pub fn from_files(stopwords: Option<&Path>, lemmas: Option<&Path>) -> Result<Self> {
        let stop = match stopwords {
            Some(p) => util::read_to_string(p)?,
            None => BUNDLED_STOPWORDS.to_string(),
        };
        let lem = match lemmas {
            Some(p) => util::read_to_string(p)?,
            None => BUNDLED_LEMMAS.to_string(),
        };
        Self::from_text(&stop, &lem)
    }

    /// Stopwords one per line; lemma table as `surface<TAB>lemma` lines.
    pub fn from_text(stopwords: &str, lemmas: &str) -> Result<Self> {
        let stop = stopwords
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase);
        let mut pairs = Vec::new();
        for (i, line) in lemmas.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, lemma) = line
                .split_once('\t')
                .ok_or_else(|| Error::InvalidParameter(format!("lemma table line {}: expected surface<TAB>lemma", i + 1)))?;
            pairs.push((surface.trim().to_string(), lemma.trim().to_string()));
        }
        Ok(Self::from_parts(stop, pairs))
    }

    /// Builds a configuration, resolving lemma chains to their fixed point.
    /// Entries whose lemma is a stopword or not a plain lowercase word are
    /// discarded so every emitted token is its own lemma.
    pub fn from_parts(
        stopwords: impl IntoIterator<Item = String>,
        lemmas: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        let stopwords: HashSet<String> = stopwords.into_iter().map(|s| s.to_lowercase()).collect();
        let raw: HashMap<String, String> = lemmas
            .into_iter()
            .map(|(s, l)| (s.to_lowercase(), l.to_lowercase()))
            .filter(|(s, l)| s != l && is_word(s) && is_word(l))
            .collect();
        let mut lemmas = HashMap::with_capacity(raw.len());
        let mut discarded = 0usize;
        for (surface, first) in &raw {
            let mut target = first;
            let mut steps = 0;
            while let Some(next) = raw.get(target) {
                target = next;
                steps += 1;
                if steps > raw.len() {
                    break;
                }
            }
            if steps > raw.len() || target == surface || stopwords.contains(target) {
                discarded += 1;
                continue;
            }
            lemmas.insert(surface.clone(), target.clone());
        }
        if discarded > 0 {
            warn!("discarded {discarded} lemma-table entries (cycles or stopword lemmas)");
        }
        NormConfig {
            stopwords,
            lemmas,
            strip_html: true,
            remove_stopwords: true,
        }
    }

    /// Same pipeline without stopword removal, used for keyword phrases.
    pub fn for_keywords(&self) -> Self {
        NormConfig {
            remove_stopwords: false,
            ..self.clone()
        }
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn stopword_count(&self) -> usize {
        self.stopwords.len()
    }

    pub fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.lemmas.get(token).map(String::as_str).unwrap_or(token)
    }

    pub fn stopwords(&self) -> impl Iterator<Item = &str> {
        self.stopwords.iter().map(String::as_str)
    }
}

/// Counters for irregular input seen during normalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormStats {
    /// `<` without a closing `>`; the remainder of the string was deleted.
    pub unclosed_tags: usize,
}

fn named_entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "ndash" => '–',
        "mdash" => '—',
        "lsquo" => '‘',
        "rsquo" => '’',
        "ldquo" => '“',
        "rdquo" => '”',
        "hellip" => '…',
        "bull" => '•',
        "middot" => '·',
        "copy" => '©',
        "reg" => '®',
        "trade" => '™',
        "pound" => '£',
        "euro" => '€',
        "agrave" => 'à',
        "aacute" => 'á',
        "acirc" => 'â',
        "atilde" => 'ã',
        "auml" => 'ä',
        "aring" => 'å',
        "aelig" => 'æ',
        "ccedil" => 'ç',
        "egrave" => 'è',
        "eacute" => 'é',
        "ecirc" => 'ê',
        "euml" => 'ë',
        "igrave" => 'ì',
        "iacute" => 'í',
        "icirc" => 'î',
        "iuml" => 'ï',
        "eth" => 'ð',
        "ntilde" => 'ñ',
        "ograve" => 'ò',
        "oacute" => 'ó',
        "ocirc" => 'ô',
        "otilde" => 'õ',
        "ouml" => 'ö',
        "oslash" => 'ø',
        "ugrave" => 'ù',
        "uacute" => 'ú',
        "ucirc" => 'û',
        "uuml" => 'ü',
        "yacute" => 'ý',
        "thorn" => 'þ',
        "yuml" => 'ÿ',
        "szlig" => 'ß',
        _ => return None,
    })
}

fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp + 1..];
        let decoded = tail.find(';').filter(|&end| end > 0 && end <= 10).and_then(|end| {
            let body = &tail[..end];
            let ch = if let Some(num) = body.strip_prefix("#x") {
                u32::from_str_radix(num, 16).ok().and_then(char::from_u32)
            } else if let Some(num) = body.strip_prefix('#') {
                num.parse::<u32>().ok().and_then(char::from_u32)
            } else {
                named_entity(body)
            };
            ch.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('&');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

fn strip_tags(s: &str, stats: &mut NormStats) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        match rest[open..].find('>') {
            Some(close) => {
                out.push(' ');
                rest = &rest[open + close + 1..];
            }
            None => {
                stats.unclosed_tags += 1;
                return out;
            }
        }
    }
    out.push_str(rest);
    out
}

/// ASCII rendering of Latin-1 and Latin Extended-A lowercase letters.
fn transliterate(c: char) -> Option<&'static str> {
    Some(match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'ā' | 'ă' | 'ą' => "a",
        'æ' => "ae",
        'ç' | 'ć' | 'ĉ' | 'ċ' | 'č' => "c",
        'ď' | 'đ' | 'ð' => "d",
        'è' | 'é' | 'ê' | 'ë' | 'ē' | 'ĕ' | 'ė' | 'ę' | 'ě' => "e",
        'ĝ' | 'ğ' | 'ġ' | 'ģ' => "g",
        'ĥ' | 'ħ' => "h",
        'ì' | 'í' | 'î' | 'ï' | 'ĩ' | 'ī' | 'ĭ' | 'į' | 'ı' => "i",
        'ĳ' => "ij",
        'ĵ' => "j",
        'ķ' | 'ĸ' => "k",
        'ĺ' | 'ļ' | 'ľ' | 'ŀ' | 'ł' => "l",
        'ñ' | 'ń' | 'ņ' | 'ň' | 'ŉ' => "n",
        'ŋ' => "ng",
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' | 'ō' | 'ŏ' | 'ő' => "o",
        'œ' => "oe",
        'ŕ' | 'ŗ' | 'ř' => "r",
        'ś' | 'ŝ' | 'ş' | 'š' | 'ſ' => "s",
        'ß' => "ss",
        'ţ' | 'ť' | 'ŧ' => "t",
        'þ' => "th",
        'ù' | 'ú' | 'û' | 'ü' | 'ũ' | 'ū' | 'ŭ' | 'ů' | 'ű' | 'ų' => "u",
        'ŵ' => "w",
        'ý' | 'ÿ' | 'ŷ' => "y",
        'ź' | 'ż' | 'ž' => "z",
        _ => return None,
    })
}

fn to_letters(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_digit() {
            continue;
        }
        if c.is_ascii_lowercase() {
            out.push(c);
        } else if let Some(t) = transliterate(c) {
            out.push_str(t);
        } else {
            out.push(' ');
        }
    }
    out
}

/// Normalizes `text` into tokens, counting irregular markup in `stats`.
pub fn normalize_counting(text: &str, cfg: &NormConfig, stats: &mut NormStats) -> Vec<String> {
    let lower = text.to_lowercase();
    let cleaned = if cfg.strip_html {
        strip_tags(&decode_entities(&lower), stats)
    } else {
        lower
    };
    to_letters(&cleaned)
        .split_whitespace()
        .filter(|t| !(cfg.remove_stopwords && cfg.stopwords.contains(*t)))
        .map(|t| cfg.lemma(t))
        .filter(|t| t.len() >= MIN_TOKEN_LEN)
        .map(str::to_string)
        .collect()
}

pub fn normalize(text: &str, cfg: &NormConfig) -> Vec<String> {
    normalize_counting(text, cfg, &mut NormStats::default())
}

/// One document per ad, in corpus order.
pub fn normalize_corpus(corpus: &Corpus, cfg: &NormConfig) -> Vec<NormalizedDoc> {
    let (docs, unclosed): (Vec<NormalizedDoc>, Vec<usize>) = corpus
        .ads
        .par_iter()
        .map(|ad| {
            let mut stats = NormStats::default();
            let tokens = normalize_counting(&ad.description_raw, cfg, &mut stats);
            (NormalizedDoc { ad_id: ad.id.clone(), tokens }, stats.unclosed_tags)
        })
        .unzip();
    let unclosed: usize = unclosed.iter().sum();
    if unclosed > 0 {
        warn!("{unclosed} descriptions contained an unclosed HTML tag; text after it was dropped");
    }
    docs
}

pub fn write_docs(docs: &[NormalizedDoc], path: &Path) -> Result<()> {
    let mut w = util::create(path)?;
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(|e| Error::json("documents", e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_docs(path: &Path) -> Result<Vec<NormalizedDoc>> {
    let text = util::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path.display().to_string(), e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> NormConfig {
        NormConfig::bundled()
    }

    #[test]
    fn bundled_stopword_list_has_179_entries() {
        assert_eq!(bundled().stopword_count(), 179);
    }

    #[test]
    fn markup_entities_and_numbers() {
        assert_eq!(normalize("<b>Java &amp; SQL</b> 101", &bundled()), ["java", "sql"]);
    }

    #[test]
    fn only_stopwords() {
        assert!(normalize("the and of", &bundled()).is_empty());
    }

    #[test]
    fn accents_and_lemmas() {
        let cfg = bundled();
        assert_eq!(cfg.lemma("teams"), "team");
        let expected_first = cfg.lemma("negociating").to_string();
        assert_eq!(normalize("Négociating    teams", &cfg), [expected_first.as_str(), "team"]);
    }

    #[test]
    fn digits_are_deleted_in_place() {
        assert_eq!(normalize("java8 developer", &bundled()), ["java", "developer"]);
    }

    #[test]
    fn uppercase_entities_and_numeric_references() {
        let cfg = bundled();
        assert_eq!(normalize("CAF&Eacute; caf&#233; caf&#xE9;", &cfg), ["cafe", "cafe", "cafe"]);
        assert_eq!(normalize("fish &chips; &unknown; rock&roll", &cfg), ["fish", "chips", "unknown", "rock", "roll"]);
    }

    #[test]
    fn entity_decoded_markup_is_stripped() {
        assert_eq!(normalize("&lt;p&gt;sales&lt;/p&gt;", &bundled()), ["sale"]);
    }

    #[test]
    fn unclosed_tag_deletes_to_end() {
        let mut stats = NormStats::default();
        let toks = normalize_counting("python <div class='x' developer", &bundled(), &mut stats);
        assert_eq!(toks, ["python"]);
        assert_eq!(stats.unclosed_tags, 1);
    }

    #[test]
    fn tags_separate_words() {
        assert_eq!(normalize("<p>alpha</p><p>beta</p>", &bundled()), ["alpha", "beta"]);
    }

    #[test]
    fn html_stripping_can_be_disabled() {
        let mut cfg = bundled();
        cfg.strip_html = false;
        assert_eq!(normalize("<b>java</b>", &cfg), ["java"]);
        assert_eq!(normalize("&amp;lt java", &cfg), ["amp", "lt", "java"]);
    }

    #[test]
    fn keyword_mode_keeps_stopwords() {
        let cfg = bundled().for_keywords();
        assert_eq!(normalize("drop a line", &cfg), ["drop", "line"]);
        assert_eq!(normalize("count on", &cfg), ["count", "on"]);
    }

    #[test]
    fn lemma_chains_resolve_and_stopword_lemmas_are_discarded() {
        let cfg = NormConfig::from_parts(
            ["is".to_string()],
            [("aa".into(), "bb".into()), ("bb".into(), "cc".into()), ("xs".into(), "is".into()), ("p".into(), "q".into()), ("q".into(), "p".into())],
        );
        assert_eq!(cfg.lemma("aa"), "cc");
        assert_eq!(cfg.lemma("bb"), "cc");
        assert_eq!(cfg.lemma("xs"), "xs");
        assert_eq!(cfg.lemma("p"), "p");
    }

    #[test]
    fn bundled_lemmas_are_fixed_points() {
        let cfg = bundled();
        for lemma in cfg.lemmas.values() {
            assert_eq!(cfg.lemma(lemma), lemma);
            assert!(!cfg.is_stopword(lemma));
        }
    }

    #[test]
    fn empty_description_is_kept() {
        use crate::corpus::{Corpus, JobAd, JobType};
        let ad = |id: &str, d: &str| JobAd {
            id: id.into(),
            title: "t".into(),
            category: "c".into(),
            company: "c".into(),
            county: "Kent".into(),
            posting_date: chrono::NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            job_type: JobType::ALL[0],
            wage: 1.0,
            description_raw: d.into(),
        };
        let c = Corpus::from_ads(vec![ad("a", "Sales team"), ad("b", "<p></p>"), ad("c", "nurses")], "x").unwrap();
        let docs = normalize_corpus(&c, &bundled());
        let ids: Vec<_> = docs.iter().map(|d| d.ad_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(docs[1].tokens.is_empty());
        assert_eq!(docs[2].tokens, ["nurse"]);
        assert_eq!(docs, normalize_corpus(&c, &bundled()));
    }

    #[test]
    fn docs_round_trip() {
        let docs = vec![
            NormalizedDoc { ad_id: "1".into(), tokens: vec!["java".into()] },
            NormalizedDoc { ad_id: "2".into(), tokens: vec![] },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("docs.jsonl");
        write_docs(&docs, &p).unwrap();
        assert_eq!(read_docs(&p).unwrap(), docs);
    }
}
