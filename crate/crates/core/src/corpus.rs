//! Tweet ingestion, keyword filtering, period partitioning and sample audits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::tokenize;

/// Fraction of malformed lines above which ingestion aborts.
pub const MALFORMED_TOLERANCE: f64 = 0.01;
/// Malformed lines always tolerated regardless of file size.
pub const STRAY_LINE_ALLOWANCE: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{malformed} of {lines} lines malformed in {source_name} (first at line {first_line}: {first_reason})")]
    TooManyMalformed { source_name: String, malformed: usize, lines: usize, first_line: usize, first_reason: String },
    #[error("keyword lexicon is empty")]
    EmptyLexicon,
    #[error("invalid period configuration: {0}")]
    PeriodConfig(String),
    #[error("periods {0:?} and {1:?} overlap")]
    OverlappingPeriods(String, String),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("popularity thresholds must be non-empty and strictly ascending")]
    InvalidThresholds,
    #[error("subsample and reference share no calendar day")]
    NoOverlap,
    #[error("subsample has more tweets than the reference on {0}")]
    SubsampleExceedsReference(NaiveDate),
}

/// One post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub user_id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    #[serde(default)]
    pub retweet_count: u64,
}

#[derive(Debug, Deserialize)]
struct RawTweet {
    id: String,
    user_id: String,
    created_at: String,
    text: String,
    #[serde(default)]
    retweet_count: Option<u64>,
}

impl RawTweet {
    fn validate(self) -> Result<Tweet, String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.user_id.trim().is_empty() {
            return Err("empty user_id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        let created_at = parse_timestamp(&self.created_at)
            .ok_or_else(|| format!("unparseable or out-of-range created_at {:?}", self.created_at))?;
        Ok(Tweet {
            id: self.id,
            user_id: self.user_id,
            created_at,
            text: self.text,
            retweet_count: self.retweet_count.unwrap_or(0),
        })
    }
}

/// Parses an ISO-8601 timestamp (or bare date) into second-precision UTC.
///
/// Offsets are converted to UTC; timestamps without an offset are taken as UTC.
/// Years outside `[1970, 2100)` are rejected.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let s = s.strip_suffix(" UTC").unwrap_or(s);
    let parsed = DateTime::parse_from_rfc3339(s).map(|dt| dt.with_timezone(&Utc)).ok().or_else(|| {
        ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
            .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
            .map(|naive| Utc.from_utc_datetime(&naive))
    })?;
    let parsed = parsed.with_nanosecond(0)?;
    (1970..2100).contains(&parsed.year()).then_some(parsed)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub filters: Vec<String>,
}

/// Tweets ordered by `(created_at, id)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn new(mut tweets: Vec<Tweet>, provenance: Provenance) -> Self {
        tweets.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Self { tweets, provenance }
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn into_tweets(self) -> Vec<Tweet> {
        self.tweets
    }

    fn derive(&self, tweets: Vec<Tweet>, filter: String) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.filters.push(filter);
        Self { tweets, provenance }
    }
}

/// Record layout of an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One JSON object per line.
    #[default]
    Jsonl,
    /// Header `id,user_id,created_at,text,retweet_count`.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

/// Result of [`ingest_tweets`] with the records that did not make it in.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub corpus: Corpus,
    pub lines_read: usize,
    pub duplicate_ids: Vec<String>,
    pub malformed: Vec<MalformedLine>,
}

pub fn ingest_tweets(path: &Path, format: InputFormat) -> Result<IngestReport, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    ingest_reader(file, &path.display().to_string(), format)
}

/// Like [`ingest_tweets`], reading from any source. `source_name` is used in
/// messages and recorded as provenance.
pub fn ingest_reader<R: Read>(reader: R, source_name: &str, format: InputFormat) -> Result<IngestReport, CorpusError> {
    let io_err = |source| CorpusError::Io { path: source_name.to_string(), source };
    let mut records: Vec<(usize, Result<Tweet, String>)> = Vec::new();

    match format {
        InputFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed =
                    serde_json::from_str::<RawTweet>(&line).map_err(|e| e.to_string()).and_then(RawTweet::validate);
                records.push((i + 1, parsed));
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
            let headers =
                rdr.headers().map_err(|e| io_err(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?.clone();
            for row in rdr.records() {
                match row {
                    Ok(rec) => {
                        let line = rec.position().map_or(0, |p| p.line() as usize);
                        let parsed = rec
                            .deserialize::<RawTweet>(Some(&headers))
                            .map_err(|e| e.to_string())
                            .and_then(RawTweet::validate);
                        records.push((line, parsed));
                    }
                    Err(e) => records.push((e.position().map_or(0, |p| p.line() as usize), Err(e.to_string()))),
                }
            }
        }
    }

    let lines_read = records.len();
    let mut malformed = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicate_ids = Vec::new();
    let mut tweets = Vec::new();
    for (line, record) in records {
        match record {
            Ok(tweet) if seen.contains(&tweet.id) => duplicate_ids.push(tweet.id),
            Ok(tweet) => {
                seen.insert(tweet.id.clone());
                tweets.push(tweet);
            }
            Err(reason) => malformed.push(MalformedLine { line, reason }),
        }
    }

    if malformed.len() > STRAY_LINE_ALLOWANCE && malformed.len() as f64 > MALFORMED_TOLERANCE * lines_read as f64 {
        return Err(CorpusError::TooManyMalformed {
            source_name: source_name.to_string(),
            malformed: malformed.len(),
            lines: lines_read,
            first_line: malformed[0].line,
            first_reason: malformed[0].reason.clone(),
        });
    }
    for m in &malformed {
        warn!("{source_name}:{}: skipping malformed record: {}", m.line, m.reason);
    }
    if !duplicate_ids.is_empty() {
        warn!("{source_name}: dropped {} duplicate ids", duplicate_ids.len());
    }

    let provenance = Provenance { source: source_name.to_string(), filters: Vec::new() };
    Ok(IngestReport { corpus: Corpus::new(tweets, provenance), lines_read, duplicate_ids, malformed })
}

/// Keyword and hashtag entries matched against tokenized text.
///
/// Each entry is tokenized with the same rules as tweet text, so a
/// multi-word entry such as `covid vaccine` matches the two tokens in
/// sequence and `#vaccineswork` matches only the hashtag token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordLexicon {
    singles: HashSet<String>,
    phrases: Vec<Vec<String>>,
}

impl KeywordLexicon {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lexicon = Self::default();
        for entry in entries {
            let toks = tokenize(entry.as_ref());
            match toks.len() {
                0 => warn!("lexicon entry {:?} has no tokens and is ignored", entry.as_ref()),
                1 => {
                    lexicon.singles.insert(toks.into_iter().next().unwrap_or_default());
                }
                _ => {
                    if !lexicon.phrases.contains(&toks) {
                        lexicon.phrases.push(toks);
                    }
                }
            }
        }
        lexicon
    }

    /// Plain-text lexicon: one entry per line; `# ` starts a comment while
    /// `#word` is a hashtag entry.
    pub fn parse(text: &str) -> Self {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("# ") && *l != "#"))
    }

    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        Ok(Self::parse(&text))
    }

    pub fn len(&self) -> usize {
        self.singles.len() + self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matches(&self, tokens: &[String]) -> bool {
        tokens.iter().any(|t| self.singles.contains(t))
            || self.phrases.iter().any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
    }
}

/// Keeps tweets whose tokens contain at least one lexicon entry.
pub fn filter_by_keywords(corpus: &Corpus, lexicon: &KeywordLexicon) -> Result<Corpus, CorpusError> {
    if lexicon.is_empty() {
        return Err(CorpusError::EmptyLexicon);
    }
    let kept = corpus.tweets.iter().filter(|t| lexicon.matches(&tokenize(&t.text))).cloned().collect();
    Ok(corpus.derive(kept, format!("keywords({} entries)", lexicon.len())))
}

/// Named half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimePeriod {
    pub name: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimePeriod {
    pub fn contains(&self, ts: &DateTime<Utc>) -> bool {
        self.start <= *ts && *ts < self.end
    }
}

/// Raw period entry as written in configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub name: String,
    pub start: String,
    pub end: String,
}

/// Disjoint periods, kept in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodSet {
    periods: Vec<TimePeriod>,
}

impl PeriodSet {
    pub fn new(mut periods: Vec<TimePeriod>) -> Result<Self, CorpusError> {
        if periods.is_empty() {
            return Err(CorpusError::PeriodConfig("no periods defined".into()));
        }
        let mut names = HashSet::new();
        for p in &periods {
            if p.start >= p.end {
                return Err(CorpusError::PeriodConfig(format!("period {:?} has start >= end", p.name)));
            }
            if !names.insert(p.name.as_str()) {
                return Err(CorpusError::PeriodConfig(format!("duplicate period name {:?}", p.name)));
            }
        }
        periods.sort_by_key(|p| p.start);
        for w in periods.windows(2) {
            if w[1].start < w[0].end {
                return Err(CorpusError::OverlappingPeriods(w[0].name.clone(), w[1].name.clone()));
            }
        }
        Ok(Self { periods })
    }

    pub fn from_specs(specs: &[PeriodSpec]) -> Result<Self, CorpusError> {
        let bound = |name: &str, s: &str| {
            parse_timestamp(s).ok_or_else(|| CorpusError::PeriodConfig(format!("period {name:?}: bad timestamp {s:?}")))
        };
        let periods = specs
            .iter()
            .map(|s| {
                Ok(TimePeriod { name: s.name.clone(), start: bound(&s.name, &s.start)?, end: bound(&s.name, &s.end)? })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        Self::new(periods)
    }

    /// Parses `[[period]]` tables with `name`, `start`, `end`.
    pub fn from_toml_str(text: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct File {
            period: Vec<PeriodSpec>,
        }
        let file: File = toml::from_str(text).map_err(|e| CorpusError::PeriodConfig(e.to_string()))?;
        Self::from_specs(&file.period)
    }

    /// Pre-COVID (2018-19), COVID (2020) and COVID-vax (Jan-Mar 2021).
    pub fn vaccine_study() -> Self {
        let spec =
            |name: &str, start: &str, end: &str| PeriodSpec { name: name.into(), start: start.into(), end: end.into() };
        Self::from_specs(&[
            spec("pre-COVID", "2018-01-01", "2020-01-01"),
            spec("COVID", "2020-01-01", "2021-01-01"),
            spec("COVID-vax", "2021-01-01", "2021-04-01"),
        ])
        .expect("built-in periods are valid")
    }

    pub fn periods(&self) -> &[TimePeriod] {
        &self.periods
    }

    pub fn names(&self) -> Vec<String> {
        self.periods.iter().map(|p| p.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Index of the period containing `ts`.
    pub fn assign(&self, ts: &DateTime<Utc>) -> Option<usize> {
        let idx = self.periods.partition_point(|p| p.end <= *ts);
        self.periods.get(idx).filter(|p| p.contains(ts)).map(|_| idx)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.periods.iter().position(|p| p.name == name)
    }
}

/// Corpus split by period; `unassigned` counts tweets outside every period.
#[derive(Debug, Clone)]
pub struct Partition {
    pub periods: Vec<(String, Corpus)>,
    pub unassigned: usize,
}

impl Partition {
    pub fn get(&self, name: &str) -> Option<&Corpus> {
        self.periods.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn assigned(&self) -> usize {
        self.periods.iter().map(|(_, c)| c.len()).sum()
    }

    /// Tweet id → period name.
    pub fn period_of(&self) -> HashMap<&str, &str> {
        self.periods.iter().flat_map(|(name, c)| c.tweets.iter().map(move |t| (t.id.as_str(), name.as_str()))).collect()
    }
}

pub fn partition_by_period(corpus: &Corpus, periods: &PeriodSet) -> Partition {
    let mut buckets: Vec<Vec<Tweet>> = vec![Vec::new(); periods.len()];
    let mut unassigned = 0;
    for tweet in &corpus.tweets {
        match periods.assign(&tweet.created_at) {
            Some(i) => buckets[i].push(tweet.clone()),
            None => unassigned += 1,
        }
    }
    if unassigned > 0 {
        warn!("{unassigned} tweets fall outside every configured period");
    }
    let periods = periods
        .periods
        .iter()
        .zip(buckets)
        .map(|(p, tweets)| (p.name.clone(), corpus.derive(tweets, format!("period({})", p.name))))
        .collect();
    Partition { periods, unassigned }
}

/// Daily capture fraction of a subsample relative to a reference collection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalAudit {
    pub per_day_fraction: BTreeMap<NaiveDate, f64>,
    pub mean_fraction: f64,
    pub max_abs_deviation: f64,
}

fn daily_counts(corpus: &Corpus) -> BTreeMap<NaiveDate, usize> {
    let mut counts = BTreeMap::new();
    for t in &corpus.tweets {
        *counts.entry(t.created_at.date_naive()).or_insert(0) += 1;
    }
    counts
}

pub fn audit_temporal_coverage(subsample: &Corpus, reference: &Corpus) -> Result<TemporalAudit, CorpusError> {
    if reference.is_empty() {
        return Err(CorpusError::EmptyCorpus("reference"));
    }
    let sub = daily_counts(subsample);
    let reference = daily_counts(reference);
    let (first, last) = match (sub.keys().next(), sub.keys().next_back()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(CorpusError::NoOverlap),
    };
    let mut per_day_fraction = BTreeMap::new();
    for (day, &n_ref) in reference.range(first..=last) {
        let n_sub = sub.get(day).copied().unwrap_or(0);
        if n_sub > n_ref {
            return Err(CorpusError::SubsampleExceedsReference(*day));
        }
        per_day_fraction.insert(*day, n_sub as f64 / n_ref as f64);
    }
    if per_day_fraction.is_empty() {
        return Err(CorpusError::NoOverlap);
    }
    let mean_fraction = per_day_fraction.values().sum::<f64>() / per_day_fraction.len() as f64;
    let max_abs_deviation = per_day_fraction.values().map(|f| (f - mean_fraction).abs()).fold(0.0, f64::max);
    Ok(TemporalAudit { per_day_fraction, mean_fraction, max_abs_deviation })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityShare {
    pub source: String,
    pub threshold: u64,
    pub share: f64,
}

/// Share of tweets with `retweet_count < threshold`, per source and threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityAudit {
    pub shares: Vec<PopularityShare>,
}

impl PopularityAudit {
    pub fn share(&self, source: &str, threshold: u64) -> Option<f64> {
        self.shares.iter().find(|s| s.source == source && s.threshold == threshold).map(|s| s.share)
    }
}

pub fn popularity_shares(corpus: &Corpus, thresholds: &[u64]) -> Result<Vec<f64>, CorpusError> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CorpusError::InvalidThresholds);
    }
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus("audited"));
    }
    let n = corpus.len() as f64;
    Ok(thresholds.iter().map(|&t| corpus.tweets.iter().filter(|tw| tw.retweet_count < t).count() as f64 / n).collect())
}

pub fn audit_popularity_bias(
    subsample: &Corpus,
    reference: &Corpus,
    thresholds: &[u64],
) -> Result<PopularityAudit, CorpusError> {
    let mut shares = Vec::new();
    for (source, corpus) in [("subsample", subsample), ("reference", reference)] {
        for (&threshold, share) in thresholds.iter().zip(popularity_shares(corpus, thresholds)?) {
            shares.push(PopularityShare { source: source.into(), threshold, share });
        }
    }
    Ok(PopularityAudit { shares })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tweet(id: &str, ts: &str, text: &str) -> Tweet {
        Tweet {
            id: id.into(),
            user_id: "u".into(),
            created_at: parse_timestamp(ts).unwrap(),
            text: text.into(),
            retweet_count: 0,
        }
    }

    fn corpus(tweets: Vec<Tweet>) -> Corpus {
        Corpus::new(tweets, Provenance::default())
    }

    fn jsonl(id: &str, ts: &str) -> String {
        format!(r#"{{"id":"{id}","user_id":"u1","created_at":"{ts}","text":"vaccine talk"}}"#)
    }

    #[test]
    fn ingest_three_records_in_stable_order() {
        let data = [
            jsonl("b", "2020-01-02T00:00:00Z"),
            jsonl("c", "2020-01-01T00:00:00Z"),
            jsonl("a", "2020-01-02T00:00:00Z"),
        ]
        .join("\n");
        let rep = ingest_reader(data.as_bytes(), "mem", InputFormat::Jsonl).unwrap();
        let ids: Vec<_> = rep.corpus.tweets().iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert!(rep.duplicate_ids.is_empty() && rep.malformed.is_empty());
    }

    #[test]
    fn ingest_dedups_keeping_first() {
        let first = r#"{"id":"x","user_id":"u1","created_at":"2020-01-01T00:00:00Z","text":"first"}"#;
        let second = r#"{"id":"x","user_id":"u2","created_at":"2020-01-01T00:00:00Z","text":"second"}"#;
        let rep = ingest_reader(format!("{first}\n{second}\n").as_bytes(), "mem", InputFormat::Jsonl).unwrap();
        assert_eq!(rep.corpus.len(), 1);
        assert_eq!(rep.corpus.tweets()[0].text, "first");
        assert_eq!(rep.duplicate_ids, vec!["x".to_string()]);
    }

    #[test]
    fn ingest_skips_stray_malformed_lines() {
        let mut lines: Vec<String> = (0..100).map(|i| jsonl(&format!("t{i:03}"), "2020-05-01T10:00:00Z")).collect();
        lines[17] = "{not json".into();
        lines[60] = r#"{"id":"t060","user_id":"u","created_at":"yesterday","text":"x"}"#.into();
        let rep = ingest_reader(lines.join("\n").as_bytes(), "mem", InputFormat::Jsonl).unwrap();
        assert_eq!(rep.corpus.len(), 98);
        assert_eq!(rep.malformed.iter().map(|m| m.line).collect::<Vec<_>>(), vec![18, 61]);
    }

    #[test]
    fn ingest_aborts_on_corrupt_file() {
        let mut lines: Vec<String> = (0..100).map(|i| jsonl(&format!("t{i}"), "2020-05-01T10:00:00Z")).collect();
        for l in lines.iter_mut().take(5) {
            *l = "garbage".into();
        }
        let err = ingest_reader(lines.join("\n").as_bytes(), "mem", InputFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::TooManyMalformed { malformed: 5, lines: 100, first_line: 1, .. }));
    }

    #[test]
    fn ingest_rejects_blank_text_and_bad_years() {
        let data = [
            r#"{"id":"a","user_id":"u","created_at":"2020-01-01T00:00:00Z","text":"   "}"#.to_string(),
            r#"{"id":"b","user_id":"u","created_at":"2100-01-01T00:00:00Z","text":"ok"}"#.to_string(),
            jsonl("c", "2020-01-01 12:30:00"),
        ]
        .join("\n");
        let rep = ingest_reader(data.as_bytes(), "mem", InputFormat::Jsonl).unwrap();
        assert_eq!(rep.corpus.len(), 1);
        assert_eq!(rep.malformed.len(), 2);
    }

    #[test]
    fn ingest_csv() {
        let data = "id,user_id,created_at,text,retweet_count\n1,u,2020-03-01T00:00:00+02:00,\"vaccine, now\",4\n2,u,2020-03-02,hi there,\n";
        let rep = ingest_reader(data.as_bytes(), "mem", InputFormat::Csv).unwrap();
        assert_eq!(rep.corpus.len(), 2);
        let t = &rep.corpus.tweets()[0];
        assert_eq!(t.created_at, parse_timestamp("2020-02-29T22:00:00Z").unwrap());
        assert_eq!(t.retweet_count, 4);
    }

    #[test]
    fn timestamps_truncate_to_seconds() {
        let ts = parse_timestamp("2020-01-01T00:00:00.750Z").unwrap();
        assert_eq!(ts, parse_timestamp("2020-01-01T00:00:00Z").unwrap());
        assert!(parse_timestamp("1969-12-31T23:59:59Z").is_none());
    }

    #[test]
    fn keyword_filter_uses_tokens() {
        let lex = KeywordLexicon::new(["vaccine"]);
        let c = corpus(vec![
            tweet("1", "2020-01-01", "I got my vaccine"),
            tweet("2", "2020-01-01", "hello world"),
            tweet("3", "2020-01-01", "time to vaccinate"),
        ]);
        let kept = filter_by_keywords(&c, &lex).unwrap();
        assert_eq!(kept.tweets().iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), ["1"]);
    }

    #[test]
    fn keyword_filter_hashtags_and_phrases() {
        let lex = KeywordLexicon::parse("# generic terms\n#vaccineswork\ncovid vaccine\n");
        assert_eq!(lex.len(), 2);
        assert!(lex.matches(&tokenize("Great news #VaccinesWork")));
        assert!(!lex.matches(&tokenize("vaccineswork without hash")));
        assert!(lex.matches(&tokenize("the COVID vaccine is here")));
        assert!(!lex.matches(&tokenize("vaccine for covid")));
    }

    #[test]
    fn empty_lexicon_is_an_error() {
        assert!(matches!(
            filter_by_keywords(&Corpus::default(), &KeywordLexicon::default()),
            Err(CorpusError::EmptyLexicon)
        ));
    }

    #[test]
    fn study_period_boundaries() {
        let periods = PeriodSet::vaccine_study();
        let name = |ts: &str| periods.assign(&parse_timestamp(ts).unwrap()).map(|i| periods.periods()[i].name.clone());
        assert_eq!(name("2019-12-31T23:59:59Z").as_deref(), Some("pre-COVID"));
        assert_eq!(name("2020-01-01T00:00:00Z").as_deref(), Some("COVID"));
        assert_eq!(name("2021-03-31T23:59:59Z").as_deref(), Some("COVID-vax"));
        assert_eq!(name("2021-04-01T00:00:00Z"), None);
        assert_eq!(name("2017-12-31T23:59:59Z"), None);
    }

    #[test]
    fn partition_reports_unassigned() {
        let c = corpus(vec![
            tweet("1", "2019-12-31T23:59:59Z", "a"),
            tweet("2", "2020-01-01T00:00:00Z", "b"),
            tweet("3", "2021-04-01T00:00:00Z", "c"),
        ]);
        let part = partition_by_period(&c, &PeriodSet::vaccine_study());
        assert_eq!(part.get("pre-COVID").unwrap().len(), 1);
        assert_eq!(part.get("COVID").unwrap().len(), 1);
        assert_eq!(part.unassigned, 1);
    }

    #[test]
    fn overlapping_periods_rejected() {
        let text = r#"
            [[period]]
            name = "a"
            start = "2020-01-01"
            end = "2020-06-01"
            [[period]]
            name = "b"
            start = "2020-05-01"
            end = "2020-12-01"
        "#;
        assert!(matches!(PeriodSet::from_toml_str(text), Err(CorpusError::OverlappingPeriods(..))));
    }

    #[test]
    fn temporal_audit_identity() {
        let c = corpus(vec![tweet("1", "2021-06-01T01:00:00Z", "a"), tweet("2", "2021-06-02T01:00:00Z", "b")]);
        let audit = audit_temporal_coverage(&c, &c).unwrap();
        assert!(audit.per_day_fraction.values().all(|&f| f == 1.0));
        assert_eq!(audit.max_abs_deviation, 0.0);
        assert!(matches!(audit_temporal_coverage(&c, &Corpus::default()), Err(CorpusError::EmptyCorpus(_))));
    }

    #[test]
    fn temporal_audit_hash_bucket_sample() {
        use sha2::{Digest, Sha256};
        let tweets: Vec<Tweet> = (0..30 * 2000)
            .map(|i| tweet(&format!("id{i}"), &format!("2021-06-{:02}T12:00:00Z", i % 30 + 1), "x"))
            .collect();
        let reference = corpus(tweets);
        let in_bucket = |id: &str| Sha256::digest(id.as_bytes())[0] as u32 * 100 / 256 < 15;
        let sample = corpus(reference.tweets().iter().filter(|t| in_bucket(&t.id)).cloned().collect());
        let audit = audit_temporal_coverage(&sample, &reference).unwrap();
        assert_eq!(audit.per_day_fraction.len(), 30);
        // bucket "byte * 100 / 256 < 15" is bytes 0..=38, i.e. 39/256
        let expected = 39.0 / 256.0;
        // binomial sd at n = 2000 is about 0.008
        for f in audit.per_day_fraction.values() {
            assert!((f - expected).abs() < 0.04, "{f}");
        }
        assert!((audit.mean_fraction - expected).abs() < 0.01);
    }

    #[test]
    fn popularity_shares_hand_fixture() {
        let mut tweets = Vec::new();
        for (i, rt) in [0u64, 5, 50, 500].iter().enumerate() {
            let mut t = tweet(&i.to_string(), "2021-06-01", "x");
            t.retweet_count = *rt;
            tweets.push(t);
        }
        let c = corpus(tweets);
        let audit = audit_popularity_bias(&c, &c, &[10, 100]).unwrap();
        assert_eq!(audit.share("subsample", 10), Some(0.5));
        assert_eq!(audit.share("subsample", 100), Some(0.75));
        assert!(matches!(popularity_shares(&c, &[100, 10]), Err(CorpusError::InvalidThresholds)));
        assert!(matches!(popularity_shares(&Corpus::default(), &[10]), Err(CorpusError::EmptyCorpus(_))));
    }

    #[test]
    fn popularity_degenerate_all_zero() {
        let c = corpus(vec![tweet("1", "2021-06-01", "x"), tweet("2", "2021-06-01", "y")]);
        assert_eq!(popularity_shares(&c, &[10]).unwrap(), vec![1.0]);
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        let words = prop::sample::select(vec!["vaccine", "hello", "#vaxxed", "covid", "shot", "world"]);
        prop::collection::vec((0i64..(4 * 365 * 86400), prop::collection::vec(words, 1..5), 0u64..300), 0..40).prop_map(
            |rows| {
                let base = parse_timestamp("2017-10-01T00:00:00Z").unwrap();
                corpus(
                    rows.into_iter()
                        .enumerate()
                        .map(|(i, (secs, words, rt))| Tweet {
                            id: format!("t{i}"),
                            user_id: format!("u{}", i % 5),
                            created_at: base + chrono::Duration::seconds(secs),
                            text: words.join(" "),
                            retweet_count: rt,
                        })
                        .collect(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn partition_complete_and_deterministic(c in arb_corpus()) {
            let periods = PeriodSet::vaccine_study();
            let a = partition_by_period(&c, &periods);
            let b = partition_by_period(&c, &periods);
            prop_assert_eq!(a.assigned() + a.unassigned, c.len());
            prop_assert_eq!(a.period_of(), b.period_of());
        }

        #[test]
        fn keyword_filter_idempotent(c in arb_corpus()) {
            let lex = KeywordLexicon::new(["vaccine", "#vaxxed"]);
            let once = filter_by_keywords(&c, &lex).unwrap();
            let twice = filter_by_keywords(&once, &lex).unwrap();
            prop_assert_eq!(once.tweets(), twice.tweets());
        }

        #[test]
        fn popularity_monotone(c in arb_corpus()) {
            prop_assume!(!c.is_empty());
            let shares = popularity_shares(&c, &[1, 10, 50, 100, 250]).unwrap();
            prop_assert!(shares.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(shares.iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }
}
