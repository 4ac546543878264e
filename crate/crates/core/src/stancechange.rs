//! Users whose stance changed between consecutive periods.
//!
//! Covers transition matrices, the distinct-changer accounting, bot
//! filtering, a per-vaccine preference check, monthly timelines, cohort
//! CDFs against the active population, sampled user groups and their topic
//! profiles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Utc};
use log::warn;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Predictions, StanceLabel};
use crate::corpus::Tweet;
use crate::seed::{derive_seed, rng};
use crate::textproc::tokenize;
use crate::topics::TopicReport;
use crate::userstance::{LabelCounts, UserPeriodProfile, UserStance};

pub const DEFAULT_BOT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ACTIVE_THRESHOLD: usize = 6;
pub const DEFAULT_GROUP_SAMPLE: usize = 50;
pub const DEFAULT_VACCINES: &str = include_str!("../configs/vaccines.toml");

#[derive(Debug, Error)]
pub enum StanceChangeError {
    #[error("transition matrix needs two distinct periods, got {0:?} twice")]
    SamePeriod(String),
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("bot threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("invalid vaccine lexicon: {0}")]
    Lexicon(String),
    #[error("group definitions need at least two consecutive period pairs, got {0}")]
    TooFewPairs(usize),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn stance_slot(s: UserStance) -> Option<usize> {
    match s {
        UserStance::AntiVaxxer => Some(0),
        UserStance::ProVaxxer => Some(1),
        UserStance::Unidentified => None,
    }
}

/// Stances of users classified in both of two periods. Index 0 is
/// Anti-Vaxxer and 1 is Pro-Vaxxer on both axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub period_a: String,
    pub period_b: String,
    /// Sorted user ids per cell, `cells[stance_a][stance_b]`.
    pub cells: [[Vec<String>; 2]; 2],
}

impl TransitionMatrix {
    pub fn counts(&self) -> [[usize; 2]; 2] {
        [[self.cells[0][0].len(), self.cells[0][1].len()], [self.cells[1][0].len(), self.cells[1][1].len()]]
    }

    pub fn total(&self) -> usize {
        self.counts().iter().flatten().sum()
    }

    pub fn anti_to_pro(&self) -> &[String] {
        &self.cells[0][1]
    }

    pub fn pro_to_anti(&self) -> &[String] {
        &self.cells[1][0]
    }

    /// Users in the off-diagonal cells.
    pub fn changers(&self) -> BTreeSet<&str> {
        self.anti_to_pro().iter().chain(self.pro_to_anti()).map(String::as_str).collect()
    }
}

pub fn stance_change_matrix(
    profiles: &[UserPeriodProfile],
    period_a: &str,
    period_b: &str,
) -> Result<TransitionMatrix, StanceChangeError> {
    if period_a == period_b {
        return Err(StanceChangeError::SamePeriod(period_a.to_string()));
    }
    let classified = |period: &str| -> BTreeMap<&str, usize> {
        profiles
            .iter()
            .filter(|p| p.period == period)
            .filter_map(|p| stance_slot(p.stance).map(|s| (p.user_id.as_str(), s)))
            .collect()
    };
    let a = classified(period_a);
    let b = classified(period_b);
    let mut cells: [[Vec<String>; 2]; 2] = Default::default();
    for (user, &sa) in &a {
        if let Some(&sb) = b.get(user) {
            cells[sa][sb].push(user.to_string());
        }
    }
    Ok(TransitionMatrix { period_a: period_a.into(), period_b: period_b.into(), cells })
}

/// One matrix per consecutive pair of `periods`.
pub fn consecutive_matrices(
    profiles: &[UserPeriodProfile],
    periods: &[String],
) -> Result<Vec<TransitionMatrix>, StanceChangeError> {
    periods.windows(2).map(|w| stance_change_matrix(profiles, &w[0], &w[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairChangeCount {
    pub period_a: String,
    pub period_b: String,
    pub anti_to_pro: usize,
    pub pro_to_anti: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeAccounting {
    pub per_pair: Vec<PairChangeCount>,
    /// Sum of changers over all pairs, counting a user once per pair.
    pub pair_total: usize,
    /// Extra counts of users who changed in more than one pair.
    pub overlap: usize,
    pub distinct: BTreeSet<String>,
    pub multi_changers: BTreeSet<String>,
}

/// Union of changers over the matrices; `distinct.len() == pair_total - overlap`.
pub fn distinct_changed_users(matrices: &[TransitionMatrix]) -> ChangeAccounting {
    let mut times: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_pair = Vec::new();
    for m in matrices {
        per_pair.push(PairChangeCount {
            period_a: m.period_a.clone(),
            period_b: m.period_b.clone(),
            anti_to_pro: m.anti_to_pro().len(),
            pro_to_anti: m.pro_to_anti().len(),
        });
        for u in m.changers() {
            *times.entry(u.to_string()).or_default() += 1;
        }
    }
    let pair_total = per_pair.iter().map(|p| p.anti_to_pro + p.pro_to_anti).sum();
    let overlap = times.values().map(|&t| t - 1).sum();
    let multi_changers = times.iter().filter(|(_, &t)| t > 1).map(|(u, _)| u.clone()).collect();
    ChangeAccounting { per_pair, pair_total, overlap, distinct: times.into_keys().collect(), multi_changers }
}

/// Chronological (period, stance) list of one user's classified periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceChangeRecord {
    pub user_id: String,
    pub stances: Vec<(String, UserStance)>,
    /// `(from, to)` period names of consecutive periods with unequal
    /// classified stances.
    pub changes: Vec<(String, String)>,
}

pub fn change_records(
    profiles: &[UserPeriodProfile],
    periods: &[String],
    users: &BTreeSet<String>,
) -> Vec<StanceChangeRecord> {
    let index: HashMap<(&str, &str), UserStance> =
        profiles.iter().map(|p| ((p.user_id.as_str(), p.period.as_str()), p.stance)).collect();
    users
        .iter()
        .map(|u| {
            let per_period: Vec<Option<UserStance>> = periods
                .iter()
                .map(|p| index.get(&(u.as_str(), p.as_str())).copied().filter(|s| *s != UserStance::Unidentified))
                .collect();
            let stances = periods.iter().zip(&per_period).filter_map(|(p, s)| s.map(|s| (p.clone(), s))).collect();
            let changes = (1..periods.len())
                .filter(|&i| matches!((per_period[i - 1], per_period[i]), (Some(a), Some(b)) if a != b))
                .map(|i| (periods[i - 1].clone(), periods[i].clone()))
                .collect();
            StanceChangeRecord { user_id: u.clone(), stances, changes }
        })
        .collect()
}

/// Externally computed automation scores plus a manual whitelist.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BotScores {
    pub scores: BTreeMap<String, f64>,
    pub whitelist: BTreeSet<String>,
}

impl BotScores {
    /// CSV with header `user_id,score`, scores in [0, 1].
    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self, StanceChangeError> {
        #[derive(Deserialize)]
        struct Row {
            user_id: String,
            score: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut scores = BTreeMap::new();
        for row in rdr.deserialize::<Row>() {
            let parse = |line: usize, message: String| StanceChangeError::Parse { path: source.into(), line, message };
            let row = row.map_err(|e| parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            if !(0.0..=1.0).contains(&row.score) {
                return Err(parse(0, format!("score {} for {} outside [0, 1]", row.score, row.user_id)));
            }
            scores.insert(row.user_id, row.score);
        }
        Ok(Self { scores, whitelist: BTreeSet::new() })
    }

    pub fn from_csv(path: &Path) -> Result<Self, StanceChangeError> {
        let f = std::fs::File::open(path)
            .map_err(|source| StanceChangeError::Io { path: path.display().to_string(), source })?;
        Self::from_csv_reader(f, &path.display().to_string())
    }

    /// One user id per line; blank lines and `#` comments are ignored.
    pub fn parse_whitelist(text: &str) -> BTreeSet<String> {
        text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotFilterOutcome {
    pub retained: BTreeSet<String>,
    /// Every user scoring at or above the threshold, whitelisted or not.
    pub flagged: BTreeSet<String>,
    /// Flagged users kept because they are whitelisted.
    pub whitelisted: BTreeSet<String>,
    /// Retained users without a score.
    pub unscored: BTreeSet<String>,
}

impl BotFilterOutcome {
    pub fn removed(&self) -> BTreeSet<String> {
        self.flagged.difference(&self.whitelisted).cloned().collect()
    }
}

pub fn filter_bots(
    users: &BTreeSet<String>,
    bots: &BotScores,
    threshold: f64,
) -> Result<BotFilterOutcome, StanceChangeError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(StanceChangeError::InvalidThreshold(threshold));
    }
    let mut out = BotFilterOutcome::default();
    for u in users {
        match bots.scores.get(u) {
            Some(&s) if s >= threshold => {
                out.flagged.insert(u.clone());
                if bots.whitelist.contains(u) {
                    out.whitelisted.insert(u.clone());
                    out.retained.insert(u.clone());
                }
            }
            Some(_) => {
                out.retained.insert(u.clone());
            }
            None => {
                out.unscored.insert(u.clone());
                out.retained.insert(u.clone());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaccineEntry {
    pub name: String,
    pub aliases: Vec<String>,
}

/// Vaccine names with pairwise-disjoint alias token sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaccineLexicon {
    #[serde(rename = "vaccine")]
    pub vaccines: Vec<VaccineEntry>,
}

impl VaccineLexicon {
    pub fn from_toml_str(text: &str) -> Result<Self, StanceChangeError> {
        let lex: Self = toml::from_str(text).map_err(|e| StanceChangeError::Lexicon(e.to_string()))?;
        let mut seen = HashMap::new();
        for v in &lex.vaccines {
            for a in &v.aliases {
                if a.is_empty() || *a != a.to_lowercase() || a.contains(char::is_whitespace) {
                    return Err(StanceChangeError::Lexicon(format!("alias {a:?} must be one lowercase token")));
                }
                if let Some(prev) = seen.insert(a.clone(), v.name.clone()) {
                    return Err(StanceChangeError::Lexicon(format!("alias {a:?} used by {prev} and {}", v.name)));
                }
            }
        }
        Ok(lex)
    }

    pub fn from_file(path: &Path) -> Result<Self, StanceChangeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| StanceChangeError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn default_set() -> Self {
        Self::from_toml_str(DEFAULT_VACCINES).expect("bundled vaccine lexicon is valid")
    }

    /// Vaccines mentioned in `text`, by alias token or its hashtag form.
    pub fn mentions(&self, text: &str) -> BTreeSet<&str> {
        let tokens: BTreeSet<String> =
            tokenize(text).into_iter().map(|t| t.strip_prefix('#').map(str::to_string).unwrap_or(t)).collect();
        self.vaccines.iter().filter(|v| v.aliases.iter().any(|a| tokens.contains(a))).map(|v| v.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceEvidence {
    pub opposed: String,
    pub anti_tweet: String,
    pub preferred: String,
    pub pro_tweet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaccinePreference {
    pub user_id: String,
    pub mentioned: BTreeSet<String>,
    pub flagged: bool,
    pub evidence: Vec<PreferenceEvidence>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaccinePreferenceReport {
    /// Users mentioning at least one vaccine, sorted by id.
    pub users: Vec<VaccinePreference>,
}

impl VaccinePreferenceReport {
    pub fn multi_vaccine_users(&self) -> usize {
        self.users.iter().filter(|u| u.mentioned.len() >= 2).count()
    }

    pub fn flagged_users(&self) -> usize {
        self.users.iter().filter(|u| u.flagged).count()
    }
}

/// Flags users with an Anti tweet mentioning one vaccine and a Pro tweet
/// mentioning a different one. Each evidence pair cites the first such
/// tweets in input order.
pub fn vaccine_preference_check(
    tweets: &[Tweet],
    predictions: &Predictions,
    lexicon: &VaccineLexicon,
) -> VaccinePreferenceReport {
    #[derive(Default)]
    struct Acc<'a> {
        mentioned: BTreeSet<&'a str>,
        anti: BTreeMap<&'a str, &'a str>,
        pro: BTreeMap<&'a str, &'a str>,
    }
    let mut by_user: BTreeMap<&str, Acc> = BTreeMap::new();
    for t in tweets {
        let names = lexicon.mentions(&t.text);
        if names.is_empty() {
            continue;
        }
        let acc = by_user.entry(t.user_id.as_str()).or_default();
        let label = predictions.get(&t.id).map(|p| p.label);
        for n in names {
            acc.mentioned.insert(n);
            match label {
                Some(StanceLabel::Anti) => {
                    acc.anti.entry(n).or_insert(t.id.as_str());
                }
                Some(StanceLabel::Pro) => {
                    acc.pro.entry(n).or_insert(t.id.as_str());
                }
                _ => {}
            }
        }
    }
    let users = by_user
        .into_iter()
        .map(|(user, acc)| {
            let mut evidence = Vec::new();
            for (&x, &anti_tweet) in &acc.anti {
                for (&y, &pro_tweet) in &acc.pro {
                    if x != y {
                        evidence.push(PreferenceEvidence {
                            opposed: x.into(),
                            anti_tweet: anti_tweet.into(),
                            preferred: y.into(),
                            pro_tweet: pro_tweet.into(),
                        });
                    }
                }
            }
            VaccinePreference {
                user_id: user.into(),
                mentioned: acc.mentioned.into_iter().map(String::from).collect(),
                flagged: !evidence.is_empty(),
                evidence,
            }
        })
        .collect();
    VaccinePreferenceReport { users }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthCount {
    /// `YYYY-MM`, UTC.
    pub month: String,
    pub pro: usize,
    pub anti: usize,
}

/// Calendar-month Pro and Anti tweet counts from the first to the last
/// month with any such tweet; Neutral tweets are ignored.
pub fn monthly_timeline<I>(labeled: I) -> Vec<MonthCount>
where
    I: IntoIterator<Item = (DateTime<Utc>, StanceLabel)>,
{
    let mut counts: BTreeMap<(i32, u32), (usize, usize)> = BTreeMap::new();
    for (ts, label) in labeled {
        let e = counts.entry((ts.year(), ts.month()));
        match label {
            StanceLabel::Pro => e.or_default().0 += 1,
            StanceLabel::Anti => e.or_default().1 += 1,
            StanceLabel::Neutral => {}
        }
    }
    let (Some(&first), Some(&last)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let (mut y, mut m) = first;
    while (y, m) <= last {
        let (pro, anti) = counts.get(&(y, m)).copied().unwrap_or_default();
        out.push(MonthCount { month: format!("{y:04}-{m:02}"), pro, anti });
        (y, m) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    }
    out
}

/// Anti/Pro/Neutral tweet counts per user over `tweets`; tweets without a
/// prediction are skipped.
pub fn user_label_counts(tweets: &[Tweet], predictions: &Predictions) -> BTreeMap<String, LabelCounts> {
    let mut out: BTreeMap<String, LabelCounts> = BTreeMap::new();
    for t in tweets {
        if let Some(p) = predictions.get(&t.id) {
            out.entry(t.user_id.clone()).or_default().add(p.label);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialMetadata {
    pub followers: u64,
    pub followings: u64,
}

/// CSV with header `user_id,followers,followings`.
pub fn read_metadata_csv<R: Read>(
    reader: R,
    source: &str,
) -> Result<BTreeMap<String, SocialMetadata>, StanceChangeError> {
    #[derive(Deserialize)]
    struct Row {
        user_id: String,
        followers: u64,
        followings: u64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| StanceChangeError::Parse {
            path: source.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        out.insert(row.user_id, SocialMetadata { followers: row.followers, followings: row.followings });
    }
    Ok(out)
}

/// Empirical CDF as `(value, fraction of values <= value)` with strictly
/// increasing values.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCdfs {
    pub cohort: String,
    pub n_users: usize,
    pub missing_metadata: usize,
    pub log_followers: Vec<(f64, f64)>,
    pub log_followings: Vec<(f64, f64)>,
    pub pct_anti: Vec<(f64, f64)>,
    pub pct_pro: Vec<(f64, f64)>,
}

/// CDFs of `log10(1 + followers)`, `log10(1 + followings)` and the
/// percentage of Anti and Pro tweets for a cohort. Users without metadata
/// or without labeled tweets are left out and counted.
pub fn cohort_cdfs(
    name: &str,
    users: &BTreeSet<String>,
    counts: &BTreeMap<String, LabelCounts>,
    metadata: &BTreeMap<String, SocialMetadata>,
) -> CohortCdfs {
    let mut missing = 0;
    let (mut fol, mut fing, mut anti, mut pro) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for u in users {
        let (Some(m), Some(c)) = (metadata.get(u), counts.get(u).filter(|c| c.total() > 0)) else {
            missing += 1;
            continue;
        };
        fol.push((1.0 + m.followers as f64).log10());
        fing.push((1.0 + m.followings as f64).log10());
        anti.push(100.0 * c.anti as f64 / c.total() as f64);
        pro.push(100.0 * c.pro as f64 / c.total() as f64);
    }
    if missing > 0 {
        warn!("cohort {name}: {missing} users without metadata or labeled tweets excluded");
    }
    CohortCdfs {
        cohort: name.into(),
        n_users: fol.len(),
        missing_metadata: missing,
        log_followers: empirical_cdf(&fol),
        log_followings: empirical_cdf(&fing),
        pct_anti: empirical_cdf(&anti),
        pct_pro: empirical_cdf(&pro),
    }
}

/// Compares the changed users with every user who posted at least
/// `active_threshold` labeled tweets.
pub fn representativeness_report(
    changed: &BTreeSet<String>,
    counts: &BTreeMap<String, LabelCounts>,
    metadata: &BTreeMap<String, SocialMetadata>,
    active_threshold: usize,
) -> [CohortCdfs; 2] {
    let active: BTreeSet<String> =
        counts.iter().filter(|(_, c)| c.total() >= active_threshold).map(|(u, _)| u.clone()).collect();
    [cohort_cdfs("stance_changed", changed, counts, metadata), cohort_cdfs("active", &active, counts, metadata)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGroup {
    pub name: String,
    pub description: String,
    /// Period in which the group's members were Anti-Vaxxers.
    pub anti_period: String,
    pub users: Vec<String>,
}

fn sample_users(pool: &[String], n: usize, seed: u64) -> Vec<String> {
    if pool.len() <= n {
        return pool.to_vec();
    }
    let mut idx = sample(&mut rng(seed), pool.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

/// The five study groups over the first two consecutive period pairs,
/// restricted to `retained` users:
///
/// * G1: all Anti→Pro changers of the first pair;
/// * G2: a sample of Anti→Pro changers of the second pair;
/// * G3: a sample of Pro→Anti changers of the first pair;
/// * G4: a sample of Pro→Anti changers of the second pair;
/// * G5: all users going Pro→Anti→Pro across both pairs.
pub fn define_groups(
    matrices: &[TransitionMatrix],
    retained: &BTreeSet<String>,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<UserGroup>, StanceChangeError> {
    if matrices.len() < 2 {
        return Err(StanceChangeError::TooFewPairs(matrices.len()));
    }
    let keep = |v: &[String]| -> Vec<String> { v.iter().filter(|u| retained.contains(*u)).cloned().collect() };
    let (m0, m1) = (&matrices[0], &matrices[1]);
    let a2p_1 = keep(m1.anti_to_pro());
    let p2a_0 = keep(m0.pro_to_anti());
    let p2a_1 = keep(m1.pro_to_anti());
    let a2p_1_set: BTreeSet<&String> = a2p_1.iter().collect();
    let flip_back: Vec<String> = p2a_0.iter().filter(|u| a2p_1_set.contains(u)).cloned().collect();
    let g = |name: &str, description: String, anti_period: &str, users: Vec<String>| UserGroup {
        name: name.into(),
        description,
        anti_period: anti_period.into(),
        users,
    };
    Ok(vec![
        g("G1", format!("Anti ({}) to Pro ({})", m0.period_a, m0.period_b), &m0.period_a, keep(m0.anti_to_pro())),
        g(
            "G2",
            format!("Anti ({}) to Pro ({})", m1.period_a, m1.period_b),
            &m1.period_a,
            sample_users(&a2p_1, sample_size, derive_seed(seed, "G2")),
        ),
        g(
            "G3",
            format!("Pro ({}) to Anti ({})", m0.period_a, m0.period_b),
            &m0.period_b,
            sample_users(&p2a_0, sample_size, derive_seed(seed, "G3")),
        ),
        g(
            "G4",
            format!("Pro ({}) to Anti ({})", m1.period_a, m1.period_b),
            &m1.period_b,
            sample_users(&p2a_1, sample_size, derive_seed(seed, "G4")),
        ),
        g(
            "G5",
            format!("Pro ({}) to Anti ({}) to Pro ({})", m0.period_a, m0.period_b, m1.period_b),
            &m0.period_b,
            flip_back,
        ),
    ])
}

/// Fraction of group users with at least one of `tweets` assigned to each
/// merged topic, in report topic order.
pub fn group_topic_profile(users: &[String], tweets: &[Tweet], report: &TopicReport) -> Vec<(String, f64)> {
    let topic_of: HashMap<&str, usize> =
        report.assignments.iter().filter_map(|a| a.topic.map(|t| (a.doc_id.as_str(), t))).collect();
    let members: BTreeSet<&str> = users.iter().map(String::as_str).collect();
    let mut posted: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); report.topics.len()];
    for t in tweets {
        if members.contains(t.user_id.as_str()) {
            if let Some(&k) = topic_of.get(t.id.as_str()) {
                posted[k].insert(t.user_id.as_str());
            }
        }
    }
    report
        .topics
        .iter()
        .zip(posted)
        .map(|(topic, who)| {
            let frac = if members.is_empty() { 0.0 } else { who.len() as f64 / members.len() as f64 };
            (topic.name.clone(), frac)
        })
        .collect()
}

pub fn write_matrix_csv<W: Write>(matrices: &[TransitionMatrix], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["period_a", "period_b", "stance_a", "stance_b", "users"])?;
    let names = ["anti", "pro"];
    for m in matrices {
        let c = m.counts();
        for a in 0..2 {
            for b in 0..2 {
                w.write_record([m.period_a.as_str(), m.period_b.as_str(), names[a], names[b], &c[a][b].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_changed_users_csv<W: Write>(records: &[StanceChangeRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "stances", "changes"])?;
    for r in records {
        let stances: Vec<String> = r.stances.iter().map(|(p, s)| format!("{p}:{s}")).collect();
        let changes: Vec<String> = r.changes.iter().map(|(a, b)| format!("{a}->{b}")).collect();
        w.write_record([r.user_id.as_str(), &stances.join(";"), &changes.join(";")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timeline_csv<W: Write>(timeline: &[MonthCount], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["month", "pro", "anti"])?;
    for m in timeline {
        w.write_record([m.month.clone(), m.pro.to_string(), m.anti.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf_csv<W: Write>(cohorts: &[CohortCdfs], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cohort", "quantity", "value", "cumulative_fraction"])?;
    for c in cohorts {
        for (q, cdf) in [
            ("log10_followers", &c.log_followers),
            ("log10_followings", &c.log_followings),
            ("pct_anti", &c.pct_anti),
            ("pct_pro", &c.pct_pro),
        ] {
            for (v, f) in cdf {
                w.write_record([c.cohort.as_str(), q, &format!("{v:.6}"), &format!("{f:.6}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_group_profile_csv<W: Write>(
    profiles: &[(UserGroup, Vec<(String, f64)>)],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "topic", "fraction_of_users", "n_users"])?;
    for (g, rows) in profiles {
        for (topic, frac) in rows {
            w.write_record([g.name.as_str(), topic.as_str(), &format!("{frac:.6}"), &g.users.len().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Prediction;
    use crate::corpus::parse_timestamp;
    use crate::topics::{DocAssignment, MergedTopic};
    use proptest::prelude::*;
    use UserStance::*;

    fn profile(user: &str, period: &str, stance: UserStance) -> UserPeriodProfile {
        UserPeriodProfile { user_id: user.into(), period: period.into(), counts: LabelCounts::default(), stance }
    }

    fn periods() -> Vec<String> {
        vec!["pre".into(), "covid".into(), "vax".into()]
    }

    #[test]
    fn one_user_per_cell() {
        let p = vec![
            profile("aa", "pre", AntiVaxxer),
            profile("aa", "covid", AntiVaxxer),
            profile("ap", "pre", AntiVaxxer),
            profile("ap", "covid", ProVaxxer),
            profile("pa", "pre", ProVaxxer),
            profile("pa", "covid", AntiVaxxer),
            profile("pp", "pre", ProVaxxer),
            profile("pp", "covid", ProVaxxer),
            profile("xu", "pre", ProVaxxer),
            profile("xu", "covid", Unidentified),
            profile("only", "covid", ProVaxxer),
        ];
        let m = stance_change_matrix(&p, "pre", "covid").unwrap();
        assert_eq!(m.counts(), [[1, 1], [1, 1]]);
        assert_eq!(m.total(), 4);
        assert_eq!(m.anti_to_pro(), &["ap".to_string()]);
        assert!(matches!(stance_change_matrix(&p, "pre", "pre"), Err(StanceChangeError::SamePeriod(_))));
        assert_eq!(stance_change_matrix(&p, "pre", "vax").unwrap().total(), 0);
    }

    #[test]
    fn distinct_changer_accounting() {
        // three single-pair changers and one double changer
        let p = vec![
            profile("s1", "pre", AntiVaxxer),
            profile("s1", "covid", ProVaxxer),
            profile("s2", "pre", ProVaxxer),
            profile("s2", "covid", AntiVaxxer),
            profile("s3", "covid", ProVaxxer),
            profile("s3", "vax", AntiVaxxer),
            profile("d", "pre", ProVaxxer),
            profile("d", "covid", AntiVaxxer),
            profile("d", "vax", ProVaxxer),
        ];
        let ms = consecutive_matrices(&p, &periods()).unwrap();
        let acc = distinct_changed_users(&ms);
        assert_eq!((acc.distinct.len(), acc.pair_total, acc.overlap), (4, 5, 1));
        assert_eq!(acc.multi_changers, BTreeSet::from(["d".to_string()]));

        let records = change_records(&p, &periods(), &acc.distinct);
        let d = records.iter().find(|r| r.user_id == "d").unwrap();
        assert_eq!(d.changes.len(), 2);
    }

    #[test]
    fn reported_accounting_identity() {
        // 218 + 21 + 121 + 329 - 14 = 675
        let mut p = Vec::new();
        let mut add = |prefix: &str, n: usize, stances: [Option<UserStance>; 3]| {
            for i in 0..n {
                for (period, s) in periods().iter().zip(stances) {
                    if let Some(s) = s {
                        p.push(profile(&format!("{prefix}{i}"), period, s));
                    }
                }
            }
        };
        add("pa0-", 218 - 14, [Some(ProVaxxer), Some(AntiVaxxer), None]);
        add("both-", 14, [Some(ProVaxxer), Some(AntiVaxxer), Some(ProVaxxer)]);
        add("ap0-", 21, [Some(AntiVaxxer), Some(ProVaxxer), None]);
        add("ap1-", 329 - 14, [None, Some(AntiVaxxer), Some(ProVaxxer)]);
        add("pa1-", 121, [None, Some(ProVaxxer), Some(AntiVaxxer)]);
        let acc = distinct_changed_users(&consecutive_matrices(&p, &periods()).unwrap());
        assert_eq!(acc.pair_total, 218 + 21 + 121 + 329);
        assert_eq!(acc.overlap, 14);
        assert_eq!(acc.distinct.len(), 675);
    }

    proptest! {
        #[test]
        fn accounting_identity_holds(stances in proptest::collection::vec(proptest::array::uniform3(0u8..3), 0..40)) {
            let map = |s: u8| [AntiVaxxer, ProVaxxer, Unidentified][s as usize];
            let p: Vec<UserPeriodProfile> = stances
                .iter()
                .enumerate()
                .flat_map(|(u, ss)| periods().into_iter().zip(*ss).map(move |(per, s)| profile(&format!("u{u}"), &per, map(s))))
                .collect();
            let ms = consecutive_matrices(&p, &periods()).unwrap();
            let acc = distinct_changed_users(&ms);
            prop_assert_eq!(acc.distinct.len() + acc.overlap, acc.pair_total);
            for m in &ms {
                let c = m.counts();
                prop_assert_eq!(c[0][1] + c[1][0], m.changers().len());
            }
        }

        #[test]
        fn bot_filter_partition(scores in proptest::collection::vec(proptest::option::of(0.0f64..=1.0), 0..30), wl in proptest::collection::vec(any::<bool>(), 30)) {
            let users: BTreeSet<String> = (0..scores.len()).map(|i| format!("u{i:02}")).collect();
            let mut bots = BotScores::default();
            for (i, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    bots.scores.insert(format!("u{i:02}"), *s);
                }
                if wl[i] {
                    bots.whitelist.insert(format!("u{i:02}"));
                }
            }
            let out = filter_bots(&users, &bots, 0.5).unwrap();
            let union: BTreeSet<String> = out.retained.union(&out.removed()).cloned().collect();
            prop_assert_eq!(union, users.clone());
            prop_assert!(out.retained.is_disjoint(&out.removed()));
            let no_wl = filter_bots(&users, &BotScores { whitelist: BTreeSet::new(), ..bots.clone() }, 0.5).unwrap();
            prop_assert!(no_wl.retained.is_subset(&out.retained));
        }

        #[test]
        fn cdf_is_monotone(values in proptest::collection::vec(0.0f64..100.0, 1..50)) {
            let cdf = empirical_cdf(&values);
            prop_assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        }
    }

    #[test]
    fn bot_threshold_is_inclusive() {
        let users: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut bots = BotScores::from_csv_reader("user_id,score\na,0.5\nb,0.49\nc,0.9\n".as_bytes(), "mem").unwrap();
        bots.whitelist = BotScores::parse_whitelist("# reviewed\nc\n");
        let out = filter_bots(&users, &bots, DEFAULT_BOT_THRESHOLD).unwrap();
        assert_eq!(out.flagged, BTreeSet::from(["a".to_string(), "c".to_string()]));
        assert_eq!(out.removed(), BTreeSet::from(["a".to_string()]));
        assert_eq!(out.unscored, BTreeSet::from(["d".to_string()]));
        assert_eq!(out.retained.len(), 3);
        assert!(BotScores::from_csv_reader("user_id,score\na,1.5\n".as_bytes(), "mem").is_err());
        assert!(filter_bots(&users, &bots, 1.5).is_err());
    }

    fn tweet(id: &str, user: &str, day: &str, text: &str) -> Tweet {
        Tweet {
            id: id.into(),
            user_id: user.into(),
            created_at: parse_timestamp(day).unwrap(),
            text: text.into(),
            retweet_count: 0,
        }
    }

    fn pred(label: StanceLabel) -> Prediction {
        let mut probs = [0.1; 3];
        probs[label.index()] = 0.8;
        Prediction::from_probs(probs)
    }

    #[test]
    fn vaccine_preference() {
        let lex = VaccineLexicon::default_set();
        let tweets = vec![
            tweet("1", "u", "2021-02-01", "I am declining Pfizer, no thanks"),
            tweet("2", "u", "2021-02-02", "trust the Oxford one #astrazeneca"),
            tweet("3", "v", "2021-02-01", "Pfizer is poison"),
            tweet("4", "v", "2021-02-02", "got my pfizer shot"),
            tweet("5", "w", "2021-02-02", "modern times, #Moderna and #sputnikv"),
        ];
        let preds: Predictions = [
            ("1", StanceLabel::Anti),
            ("2", StanceLabel::Pro),
            ("3", StanceLabel::Anti),
            ("4", StanceLabel::Pro),
            ("5", StanceLabel::Neutral),
        ]
        .iter()
        .map(|(id, l)| (id.to_string(), pred(*l)))
        .collect();
        let report = vaccine_preference_check(&tweets, &preds, &lex);
        let u = &report.users[0];
        assert!(u.flagged);
        assert_eq!(u.evidence[0].opposed, "Pfizer");
        assert_eq!(u.evidence[0].preferred, "AstraZeneca");
        assert!(!report.users[1].flagged);
        assert_eq!(report.users[2].mentioned.len(), 2);
        assert_eq!((report.flagged_users(), report.multi_vaccine_users()), (1, 2));
        assert!(VaccineLexicon::from_toml_str(
            "[[vaccine]]\nname='a'\naliases=['x']\n[[vaccine]]\nname='b'\naliases=['x']\n"
        )
        .is_err());
    }

    #[test]
    fn timeline_examples() {
        assert!(monthly_timeline(Vec::new()).is_empty());
        let ts = |s: &str| parse_timestamp(s).unwrap();
        let t = monthly_timeline(vec![
            (ts("2020-03-02"), StanceLabel::Anti),
            (ts("2020-03-20"), StanceLabel::Anti),
            (ts("2020-05-01"), StanceLabel::Pro),
            (ts("2020-07-01"), StanceLabel::Neutral),
        ]);
        assert_eq!(
            t,
            vec![
                MonthCount { month: "2020-03".into(), pro: 0, anti: 2 },
                MonthCount { month: "2020-04".into(), pro: 0, anti: 0 },
                MonthCount { month: "2020-05".into(), pro: 1, anti: 0 },
            ]
        );
        let wrap = monthly_timeline(vec![(ts("2020-12-02"), StanceLabel::Pro), (ts("2021-01-20"), StanceLabel::Anti)]);
        assert_eq!(wrap.iter().map(|m| m.month.as_str()).collect::<Vec<_>>(), vec!["2020-12", "2021-01"]);
    }

    #[test]
    fn cohort_cdf_examples() {
        let users = BTreeSet::from(["a".to_string()]);
        let counts = BTreeMap::from([("a".to_string(), LabelCounts { anti: 1, pro: 3, neutral: 0 })]);
        let meta = BTreeMap::from([("a".to_string(), SocialMetadata { followers: 99, followings: 9 })]);
        let c = cohort_cdfs("one", &users, &counts, &meta);
        assert_eq!(c.log_followers, vec![(2.0, 1.0)]);
        assert_eq!(c.log_followings, vec![(1.0, 1.0)]);
        assert_eq!(c.pct_pro, vec![(75.0, 1.0)]);

        // planted cohort: percentages 0, 0, 50, 100 and one user without metadata
        let users: BTreeSet<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let counts: BTreeMap<String, LabelCounts> = [
            ("a", LabelCounts { anti: 0, pro: 2, neutral: 0 }),
            ("b", LabelCounts { anti: 0, pro: 1, neutral: 1 }),
            ("c", LabelCounts { anti: 1, pro: 1, neutral: 0 }),
            ("d", LabelCounts { anti: 4, pro: 0, neutral: 0 }),
            ("e", LabelCounts { anti: 1, pro: 0, neutral: 0 }),
        ]
        .iter()
        .map(|(u, c)| (u.to_string(), *c))
        .collect();
        let meta: BTreeMap<String, SocialMetadata> = ["a", "b", "c", "d"]
            .iter()
            .map(|u| (u.to_string(), SocialMetadata { followers: 0, followings: 0 }))
            .collect();
        let c = cohort_cdfs("planted", &users, &counts, &meta);
        assert_eq!(c.missing_metadata, 1);
        assert_eq!(c.pct_anti, vec![(0.0, 0.5), (50.0, 0.75), (100.0, 1.0)]);
        let [changed, active] = representativeness_report(&users, &counts, &meta, 2);
        assert_eq!(changed.n_users, 4);
        assert_eq!(active.n_users, 4);
    }

    fn matrices_for_groups() -> Vec<TransitionMatrix> {
        let mut p = Vec::new();
        for i in 0..80 {
            p.push(profile(&format!("pa{i:02}"), "pre", ProVaxxer));
            p.push(profile(&format!("pa{i:02}"), "covid", AntiVaxxer));
        }
        for i in 0..5 {
            p.push(profile(&format!("ap{i}"), "pre", AntiVaxxer));
            p.push(profile(&format!("ap{i}"), "covid", ProVaxxer));
        }
        p.push(profile("pa00", "vax", ProVaxxer));
        p.push(profile("pa01", "vax", ProVaxxer));
        consecutive_matrices(&p, &periods()).unwrap()
    }

    #[test]
    fn group_definitions() {
        let ms = matrices_for_groups();
        let all: BTreeSet<String> = ms.iter().flat_map(|m| m.changers()).map(String::from).collect();
        let groups = define_groups(&ms, &all, 50, 7).unwrap();
        let sizes: Vec<usize> = groups.iter().map(|g| g.users.len()).collect();
        assert_eq!(sizes, vec![5, 2, 50, 0, 2]);
        assert_eq!(groups[4].users, vec!["pa00".to_string(), "pa01".to_string()]);
        assert_eq!(groups[0].anti_period, "pre");
        assert_eq!(groups, define_groups(&ms, &all, 50, 7).unwrap());
        assert_ne!(groups[2].users, define_groups(&ms, &all, 50, 8).unwrap()[2].users);
        let mut retained = all.clone();
        retained.remove("ap0");
        assert_eq!(define_groups(&ms, &retained, 50, 7).unwrap()[0].users.len(), 4);
        assert!(define_groups(&ms[..1], &all, 50, 7).is_err());
    }

    #[test]
    fn topic_profile_fractions() {
        let report = TopicReport {
            topics: (0..4)
                .map(|i| MergedTopic { name: format!("T{i}"), members: vec![i], top_words: vec![] })
                .collect(),
            assignments: vec![
                DocAssignment { doc_id: "1".into(), topic: Some(1), mass: 0.9 },
                DocAssignment { doc_id: "2".into(), topic: Some(3), mass: 0.9 },
                DocAssignment { doc_id: "3".into(), topic: None, mass: 0.2 },
                DocAssignment { doc_id: "4".into(), topic: Some(1), mass: 0.9 },
            ],
            assign_threshold: 0.4,
        };
        let tweets = vec![
            tweet("1", "u", "2020-01-01", ""),
            tweet("2", "u", "2020-01-02", ""),
            tweet("3", "v", "2020-01-02", ""),
            tweet("4", "w", "2020-01-02", ""),
        ];
        let one = group_topic_profile(&["u".to_string()], &tweets, &report);
        assert_eq!(one.iter().map(|(_, f)| *f).collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 1.0]);
        let two = group_topic_profile(&["u".to_string(), "v".to_string()], &tweets, &report);
        assert_eq!(two.iter().map(|(_, f)| *f).collect::<Vec<_>>(), vec![0.0, 0.5, 0.0, 0.5]);
    }
}
