//! Stance composition of the accounts a user follows.
//!
//! A single following snapshot is applied to every period. For each user
//! and period the fraction of followings that were Pro- and Anti-Vaxxers
//! is computed, then compared across period pairs with percentile
//! bootstrap confidence intervals.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_indexed, rng};
use crate::userstance::{UserPeriodProfile, UserStance};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const MIN_RESAMPLES: usize = 1_000;

#[derive(Debug, Error)]
pub enum NeighborError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("need at least 2 users with defined ratios, got {0}")]
    TooFewRatios(usize),
    #[error("bootstrap needs at least {MIN_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
}

/// Who each user follows. Self-follows and repeated edges are dropped on
/// load and counted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowingSnapshot {
    pub follows: BTreeMap<String, BTreeSet<String>>,
    pub self_follows_dropped: usize,
    pub duplicates_dropped: usize,
}

impl FollowingSnapshot {
    pub fn from_edges<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut snap = Self::default();
        for (u, v) in edges {
            snap.insert(u.into(), v.into());
        }
        snap
    }

    fn insert(&mut self, user: String, followed: String) {
        if user == followed {
            self.self_follows_dropped += 1;
        } else if !self.follows.entry(user).or_default().insert(followed) {
            self.duplicates_dropped += 1;
        }
    }

    /// CSV with header `user_id,followed_id`.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self, NeighborError> {
        #[derive(Deserialize)]
        struct Row {
            user_id: String,
            followed_id: String,
        }
        let mut snap = Self::default();
        for row in csv::Reader::from_reader(reader).deserialize::<Row>() {
            let row = row.map_err(|e| NeighborError::Parse {
                path: source.into(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            snap.insert(row.user_id, row.followed_id);
        }
        if snap.self_follows_dropped + snap.duplicates_dropped > 0 {
            warn!(
                "{source}: dropped {} self-follows and {} duplicate edges",
                snap.self_follows_dropped, snap.duplicates_dropped
            );
        }
        Ok(snap)
    }

    pub fn from_csv(path: &Path) -> Result<Self, NeighborError> {
        let f = std::fs::File::open(path)
            .map_err(|source| NeighborError::Io { path: path.display().to_string(), source })?;
        Self::from_csv_reader(f, &path.display().to_string())
    }

    pub fn followings(&self, user: &str) -> Option<&BTreeSet<String>> {
        self.follows.get(user)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// Divide by every followed account.
    #[default]
    AllFollowings,
    /// Divide by the followed accounts that are Anti or Pro in the period.
    ClassifiedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowingFractions {
    pub frac_pro: f64,
    pub frac_anti: f64,
    pub n_followings: usize,
    pub n_classified: usize,
}

/// Stances of every user in one period.
pub type PeriodStances = HashMap<String, UserStance>;

pub fn period_stances(profiles: &[UserPeriodProfile], period: &str) -> PeriodStances {
    profiles.iter().filter(|p| p.period == period).map(|p| (p.user_id.clone(), p.stance)).collect()
}

/// `None` when the user follows nobody, or has no classified followings
/// under [`DenominatorMode::ClassifiedOnly`].
pub fn following_stance_fractions(
    user: &str,
    snapshot: &FollowingSnapshot,
    stances: &PeriodStances,
    mode: DenominatorMode,
) -> Option<FollowingFractions> {
    let followings = snapshot.followings(user).filter(|f| !f.is_empty())?;
    let (mut pro, mut anti) = (0usize, 0usize);
    for f in followings {
        match stances.get(f) {
            Some(UserStance::ProVaxxer) => pro += 1,
            Some(UserStance::AntiVaxxer) => anti += 1,
            _ => {}
        }
    }
    let n_classified = pro + anti;
    let denom = match mode {
        DenominatorMode::AllFollowings => followings.len(),
        DenominatorMode::ClassifiedOnly if n_classified == 0 => return None,
        DenominatorMode::ClassifiedOnly => n_classified,
    };
    Some(FollowingFractions {
        frac_pro: pro as f64 / denom as f64,
        frac_anti: anti as f64 / denom as f64,
        n_followings: followings.len(),
        n_classified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ratio {
    Defined(f64),
    /// The earlier fraction was zero and the later one positive.
    Undefined,
}

impl Ratio {
    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Defined(v) => Some(v),
            Ratio::Undefined => None,
        }
    }
}

/// `b / a`, with `0 / 0 = 1`.
pub fn fraction_change_ratio(a: f64, b: f64) -> Ratio {
    if a == 0.0 {
        if b == 0.0 {
            Ratio::Defined(1.0)
        } else {
            Ratio::Undefined
        }
    } else {
        Ratio::Defined(b / a)
    }
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub resamples: usize,
}

/// Percentile bootstrap of `statistic` over `n` units resampled with
/// replacement. Resamples whose statistic is undefined are discarded.
fn bootstrap<F>(n: usize, resamples: usize, seed: u64, statistic: F) -> Result<BootstrapCi, NeighborError>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n < 2 {
        return Err(NeighborError::TooFewRatios(n));
    }
    if resamples < MIN_RESAMPLES {
        return Err(NeighborError::TooFewResamples(resamples));
    }
    let all: Vec<usize> = (0..n).collect();
    let estimate = statistic(&all).ok_or(NeighborError::TooFewRatios(0))?;
    let mut stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|r| {
            let mut g = rng(derive_indexed(seed, "resample", r as u64));
            let idx: Vec<usize> = (0..n).map(|_| g.gen_range(0..n)).collect();
            statistic(&idx)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let (ci_low, ci_high) =
        if stats.is_empty() { (estimate, estimate) } else { (quantile(&stats, 0.025), quantile(&stats, 0.975)) };
    Ok(BootstrapCi { estimate, ci_low, ci_high, n, resamples })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    s / c as f64
}

/// Mean of per-user ratios with a percentile bootstrap interval.
pub fn group_ratio_with_ci(ratios: &[f64], resamples: usize, seed: u64) -> Result<BootstrapCi, NeighborError> {
    bootstrap(ratios.len(), resamples, seed, |idx| Some(mean(idx.iter().map(|&i| ratios[i]))))
}

/// Ratio of the mean later fraction to the mean earlier fraction, with a
/// percentile bootstrap interval over users.
pub fn ratio_of_means_with_ci(pairs: &[(f64, f64)], resamples: usize, seed: u64) -> Result<BootstrapCi, NeighborError> {
    bootstrap(pairs.len(), resamples, seed, |idx| {
        let a = mean(idx.iter().map(|&i| pairs[i].0));
        let b = mean(idx.iter().map(|&i| pairs[i].1));
        fraction_change_ratio(a, b).value()
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    MeanOfRatios,
    RatioOfMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowedStance {
    Pro,
    Anti,
}

impl FollowedStance {
    pub fn of(self, f: &FollowingFractions) -> f64 {
        match self {
            FollowedStance::Pro => f.frac_pro,
            FollowedStance::Anti => f.frac_anti,
        }
    }
}

impl fmt::Display for FollowedStance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FollowedStance::Pro => "pro",
            FollowedStance::Anti => "anti",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborOptions {
    pub denominator: DenominatorMode,
    pub averaging: Averaging,
    pub resamples: usize,
}

impl Default for NeighborOptions {
    fn default() -> Self {
        Self { denominator: DenominatorMode::default(), averaging: Averaging::default(), resamples: DEFAULT_RESAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRatioRow {
    pub group: String,
    pub pair: String,
    pub stance: FollowedStance,
    /// `None` when fewer than two users had a defined ratio.
    pub ci: Option<BootstrapCi>,
    pub n_users: usize,
    pub n_excluded: usize,
}

/// Per-stance following-fraction ratios between `period_a` and `period_b`
/// for one group.
#[allow(clippy::too_many_arguments)]
pub fn group_neighborhood_ratios(
    group: &str,
    users: &[String],
    snapshot: &FollowingSnapshot,
    stances_a: &PeriodStances,
    stances_b: &PeriodStances,
    pair: &str,
    options: &NeighborOptions,
    seed: u64,
) -> Vec<GroupRatioRow> {
    let fractions: Vec<Option<(FollowingFractions, FollowingFractions)>> = users
        .iter()
        .map(|u| {
            let a = following_stance_fractions(u, snapshot, stances_a, options.denominator)?;
            let b = following_stance_fractions(u, snapshot, stances_b, options.denominator)?;
            Some((a, b))
        })
        .collect();
    let no_fractions = fractions.iter().filter(|f| f.is_none()).count();
    if no_fractions > 0 {
        warn!("group {group}, {pair}: {no_fractions} users without usable followings excluded");
    }
    [FollowedStance::Pro, FollowedStance::Anti]
        .into_iter()
        .map(|stance| {
            let pairs: Vec<(f64, f64)> =
                fractions.iter().flatten().map(|(a, b)| (stance.of(a), stance.of(b))).collect();
            let stance_seed = derive_indexed(seed, &format!("{group}/{pair}/{stance}"), 0);
            let (ci, used) = match options.averaging {
                Averaging::MeanOfRatios => {
                    let ratios: Vec<f64> =
                        pairs.iter().filter_map(|&(a, b)| fraction_change_ratio(a, b).value()).collect();
                    (group_ratio_with_ci(&ratios, options.resamples, stance_seed).ok(), ratios.len())
                }
                Averaging::RatioOfMeans => {
                    (ratio_of_means_with_ci(&pairs, options.resamples, stance_seed).ok(), pairs.len())
                }
            };
            GroupRatioRow {
                group: group.into(),
                pair: pair.into(),
                stance,
                ci,
                n_users: used,
                n_excluded: users.len() - used,
            }
        })
        .collect()
}

/// Users classified with `stance` in every one of `periods`.
pub fn never_changers(profiles: &[UserPeriodProfile], periods: &[String], stance: UserStance) -> Vec<String> {
    let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
    for p in profiles {
        if p.stance == stance && periods.contains(&p.period) {
            *hits.entry(p.user_id.as_str()).or_default() += 1;
        }
    }
    hits.into_iter().filter(|(_, n)| *n == periods.len()).map(|(u, _)| u.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub stance: UserStance,
    pub period: String,
    pub mean_same: f64,
    pub mean_opposite: f64,
    pub ratio: Ratio,
    pub n_users: usize,
}

/// For users who kept `stance` throughout, the ratio of the mean fraction
/// of same-stance followings to the mean fraction of opposite-stance
/// followings, per period.
pub fn constant_stance_contrast(
    users: &[String],
    stance: UserStance,
    snapshot: &FollowingSnapshot,
    periods: &[(String, PeriodStances)],
    mode: DenominatorMode,
) -> Vec<ContrastRow> {
    let (same, opposite) = match stance {
        UserStance::ProVaxxer => (FollowedStance::Pro, FollowedStance::Anti),
        _ => (FollowedStance::Anti, FollowedStance::Pro),
    };
    periods
        .iter()
        .map(|(period, stances)| {
            let fr: Vec<FollowingFractions> =
                users.iter().filter_map(|u| following_stance_fractions(u, snapshot, stances, mode)).collect();
            let (mean_same, mean_opposite) = if fr.is_empty() {
                (0.0, 0.0)
            } else {
                (mean(fr.iter().map(|f| same.of(f))), mean(fr.iter().map(|f| opposite.of(f))))
            };
            ContrastRow {
                stance,
                period: period.clone(),
                mean_same,
                mean_opposite,
                ratio: fraction_change_ratio(mean_opposite, mean_same),
                n_users: fr.len(),
            }
        })
        .collect()
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_group_ratios_csv<W: Write>(rows: &[GroupRatioRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "pair", "stance", "ratio", "ci_low", "ci_high", "n_users", "n_excluded"])?;
    for r in rows {
        let (ratio, lo, hi) = match r.ci {
            Some(ci) => (f6(ci.estimate), f6(ci.ci_low), f6(ci.ci_high)),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.group.clone(),
            r.pair.clone(),
            r.stance.to_string(),
            ratio,
            lo,
            hi,
            r.n_users.to_string(),
            r.n_excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_contrast_csv<W: Write>(rows: &[ContrastRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stance", "period", "mean_same", "mean_opposite", "ratio", "n_users"])?;
    for r in rows {
        w.write_record([
            r.stance.to_string(),
            r.period.clone(),
            f6(r.mean_same),
            f6(r.mean_opposite),
            r.ratio.value().map(f6).unwrap_or_default(),
            r.n_users.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stances(pairs: &[(&str, UserStance)]) -> PeriodStances {
        pairs.iter().map(|(u, s)| (u.to_string(), *s)).collect()
    }

    fn ten_followings() -> (FollowingSnapshot, PeriodStances) {
        let snap = FollowingSnapshot::from_edges((0..10).map(|i| ("u".to_string(), format!("f{i}"))));
        let mut st = PeriodStances::new();
        for i in 0..10 {
            let s = match i {
                0..=3 => UserStance::ProVaxxer,
                4 | 5 => UserStance::AntiVaxxer,
                6 | 7 => UserStance::Unidentified,
                _ => continue,
            };
            st.insert(format!("f{i}"), s);
        }
        (snap, st)
    }

    #[test]
    fn fraction_examples() {
        let (snap, st) = ten_followings();
        let all = following_stance_fractions("u", &snap, &st, DenominatorMode::AllFollowings).unwrap();
        assert_eq!((all.frac_pro, all.frac_anti, all.n_followings, all.n_classified), (0.4, 0.2, 10, 6));
        let cls = following_stance_fractions("u", &snap, &st, DenominatorMode::ClassifiedOnly).unwrap();
        assert_eq!((cls.frac_pro, cls.frac_anti), (4.0 / 6.0, 2.0 / 6.0));
        let empty =
            following_stance_fractions("u", &snap, &PeriodStances::new(), DenominatorMode::AllFollowings).unwrap();
        assert_eq!((empty.frac_pro, empty.frac_anti), (0.0, 0.0));
        assert!(
            following_stance_fractions("u", &snap, &PeriodStances::new(), DenominatorMode::ClassifiedOnly).is_none()
        );
        assert!(following_stance_fractions("nobody", &snap, &st, DenominatorMode::AllFollowings).is_none());
    }

    #[test]
    fn snapshot_cleaning() {
        let csv = "user_id,followed_id\na,b\na,b\na,a\nb,a\n";
        let s = FollowingSnapshot::from_csv_reader(csv.as_bytes(), "mem").unwrap();
        assert_eq!((s.self_follows_dropped, s.duplicates_dropped), (1, 1));
        assert_eq!(s.followings("a").unwrap().len(), 1);
        assert!(FollowingSnapshot::from_csv_reader("user_id,followed_id\na\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(fraction_change_ratio(0.25, 0.25), Ratio::Defined(1.0));
        assert_eq!(fraction_change_ratio(0.0, 0.0), Ratio::Defined(1.0));
        assert_eq!(fraction_change_ratio(0.0, 0.1), Ratio::Undefined);
        assert_eq!(fraction_change_ratio(0.5, 0.0), Ratio::Defined(0.0));
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        let ci = group_ratio_with_ci(&[1.0; 12], DEFAULT_RESAMPLES, 3).unwrap();
        assert_eq!((ci.estimate, ci.ci_low, ci.ci_high), (1.0, 1.0, 1.0));

        let planted: Vec<f64> = (0..20).map(|i| 0.5 + 0.1 * i as f64).collect();
        let hand = planted.iter().sum::<f64>() / 20.0;
        let a = group_ratio_with_ci(&planted, DEFAULT_RESAMPLES, 11).unwrap();
        assert_eq!(a.estimate, hand);
        assert!(a.ci_low <= a.estimate && a.estimate <= a.ci_high);
        let b = group_ratio_with_ci(&planted, DEFAULT_RESAMPLES, 11).unwrap();
        assert_eq!(a.ci_low.to_bits(), b.ci_low.to_bits());
        assert_eq!(a.ci_high.to_bits(), b.ci_high.to_bits());

        assert!(matches!(group_ratio_with_ci(&[1.0], DEFAULT_RESAMPLES, 0), Err(NeighborError::TooFewRatios(1))));
        assert!(matches!(group_ratio_with_ci(&[1.0, 2.0], 999, 0), Err(NeighborError::TooFewResamples(999))));
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!((quantile(&v, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn ci_width_shrinks_with_group_size() {
        let mut narrower = 0;
        for seed in 0..10u64 {
            let mut g = rng(seed);
            let mut width = |n: usize| {
                let r: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut g, 0.5..2.0)).collect();
                let ci = group_ratio_with_ci(&r, MIN_RESAMPLES, seed).unwrap();
                ci.ci_high - ci.ci_low
            };
            let small = width(10);
            let large = width(200);
            narrower += usize::from(large < small);
        }
        assert!(narrower >= 8, "{narrower}/10");
    }

    #[test]
    fn identical_periods_give_unit_ratios() {
        let (snap, st) = ten_followings();
        let rows = group_neighborhood_ratios(
            "G",
            &["u".to_string(), "v".to_string()],
            &FollowingSnapshot::from_edges(
                snap.follows["u"].iter().flat_map(|f| [("u", f.as_str()), ("v", f.as_str())]),
            ),
            &st,
            &st,
            "a->b",
            &NeighborOptions { resamples: MIN_RESAMPLES, ..Default::default() },
            1,
        );
        for r in &rows {
            let ci = r.ci.unwrap();
            assert_eq!((ci.estimate, ci.ci_low, ci.ci_high), (1.0, 1.0, 1.0));
            assert_eq!((r.n_users, r.n_excluded), (2, 0));
        }
        let rom = group_neighborhood_ratios(
            "G",
            &["u".to_string(), "nobody".to_string(), "u".to_string()],
            &snap,
            &st,
            &st,
            "a->b",
            &NeighborOptions { resamples: MIN_RESAMPLES, averaging: Averaging::RatioOfMeans, ..Default::default() },
            1,
        );
        assert_eq!(rom[0].ci.unwrap().estimate, 1.0);
        assert_eq!(rom[0].n_excluded, 1);
    }

    #[test]
    fn undefined_ratios_are_excluded() {
        let snap = FollowingSnapshot::from_edges([("a", "x"), ("b", "y"), ("c", "z")]);
        let before = stances(&[("x", UserStance::ProVaxxer), ("y", UserStance::ProVaxxer)]);
        let after =
            stances(&[("x", UserStance::ProVaxxer), ("y", UserStance::ProVaxxer), ("z", UserStance::ProVaxxer)]);
        let users = ["a", "b", "c"].map(String::from);
        let rows = group_neighborhood_ratios(
            "G",
            &users,
            &snap,
            &before,
            &after,
            "p",
            &NeighborOptions { resamples: MIN_RESAMPLES, ..Default::default() },
            0,
        );
        let pro = &rows[0];
        assert_eq!((pro.n_users, pro.n_excluded), (2, 1));
        let mut out = Vec::new();
        write_group_ratios_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("group,pair,stance,ratio,ci_low,ci_high,n_users,n_excluded\nG,p,pro,1.000000,"));
    }

    #[test]
    fn contrast_for_constant_users() {
        let snap = FollowingSnapshot::from_edges([("p", "a1"), ("p", "b1"), ("p", "b2"), ("q", "a1"), ("q", "b1")]);
        let st =
            stances(&[("a1", UserStance::AntiVaxxer), ("b1", UserStance::ProVaxxer), ("b2", UserStance::ProVaxxer)]);
        let rows = constant_stance_contrast(
            &["p".to_string(), "q".to_string()],
            UserStance::ProVaxxer,
            &snap,
            &[("x".to_string(), st.clone())],
            DenominatorMode::AllFollowings,
        );
        // same: (2/3 + 1/2)/2, opposite: (1/3 + 1/2)/2
        let Ratio::Defined(r) = rows[0].ratio else { panic!() };
        assert!((r - (7.0 / 6.0) / (5.0 / 6.0)).abs() < 1e-12);
        let sym = FollowingSnapshot::from_edges([("p", "a1"), ("p", "b1")]);
        let rows = constant_stance_contrast(
            &["p".to_string()],
            UserStance::AntiVaxxer,
            &sym,
            &[("x".to_string(), st)],
            DenominatorMode::AllFollowings,
        );
        assert_eq!(rows[0].ratio, Ratio::Defined(1.0));
    }

    #[test]
    fn never_changer_selection() {
        let prof = |u: &str, p: &str, s| UserPeriodProfile {
            user_id: u.into(),
            period: p.into(),
            counts: Default::default(),
            stance: s,
        };
        let periods = vec!["a".to_string(), "b".to_string()];
        let ps = vec![
            prof("x", "a", UserStance::ProVaxxer),
            prof("x", "b", UserStance::ProVaxxer),
            prof("y", "a", UserStance::ProVaxxer),
            prof("y", "b", UserStance::AntiVaxxer),
            prof("z", "a", UserStance::ProVaxxer),
        ];
        assert_eq!(never_changers(&ps, &periods, UserStance::ProVaxxer), vec!["x".to_string()]);
    }

    proptest! {
        #[test]
        fn fractions_are_bounded(labels in proptest::collection::vec(0u8..4, 1..40)) {
            let snap = FollowingSnapshot::from_edges((0..labels.len()).map(|i| ("u".to_string(), format!("f{i}"))));
            let st: PeriodStances = labels.iter().enumerate().filter_map(|(i, l)| {
                let s = match l { 0 => UserStance::ProVaxxer, 1 => UserStance::AntiVaxxer, 2 => UserStance::Unidentified, _ => return None };
                Some((format!("f{i}"), s))
            }).collect();
            let all = following_stance_fractions("u", &snap, &st, DenominatorMode::AllFollowings).unwrap();
            prop_assert!(all.frac_pro + all.frac_anti <= 1.0 + 1e-12);
            if let Some(c) = following_stance_fractions("u", &snap, &st, DenominatorMode::ClassifiedOnly) {
                prop_assert!((c.frac_pro + c.frac_anti - 1.0).abs() < 1e-12);
            }
        }
    }
}
