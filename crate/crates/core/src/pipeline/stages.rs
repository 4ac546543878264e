use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    load_external_scores, train, warm_start_train, LabeledDataset, LinearModel, Predictions, StanceLabel,
};
use crate::corpus::{
    audit_popularity_bias, audit_temporal_coverage, filter_by_keywords, ingest_tweets, partition_by_period,
    popularity_shares, Corpus, KeywordLexicon, Partition, Provenance, Tweet,
};
use crate::evaluation::{
    cross_dataset_eval, cross_validate, spcpd_word_audit, write_fold_csv, write_word_audit_csv, CvSummary,
    LinearTrainer,
};
use crate::neighbors::{
    constant_stance_contrast, group_neighborhood_ratios, never_changers, period_stances, write_contrast_csv,
    write_group_ratios_csv, FollowingSnapshot, GroupRatioRow, NeighborOptions,
};
use crate::seed::derive_seed;
use crate::stancechange::{
    change_records, consecutive_matrices, define_groups, distinct_changed_users, filter_bots, group_topic_profile,
    monthly_timeline, read_metadata_csv, representativeness_report, user_label_counts, vaccine_preference_check,
    write_cdf_csv, write_changed_users_csv, write_group_profile_csv, write_matrix_csv, BotScores, ChangeAccounting,
    TransitionMatrix, UserGroup, VaccineLexicon,
};
use crate::textproc::{tokenize, StopWords};
use crate::topics::{
    apply_merge, labeled_lda, period_topic_distribution, select_topic_count, umass_coherence, write_assignments_csv,
    write_period_table_csv, MergeConfig, SeedWordConfig, TopicCorpus, TopicReport,
};
use crate::userstance::{
    build_profiles, sample_for_review, stance_index, stance_summary, write_profiles_csv, write_summary_csv,
    StanceSummaryRow, UserPeriodProfile, UserStance,
};

use super::emit::{f6, read_json, Emitter};
use super::{runtime, PipelineConfig, PipelineError, Stage};

const REVIEW_SAMPLE: usize = 10;

pub(super) fn run(
    stage: Stage,
    cfg: &PipelineConfig,
    out: &Path,
    seed: u64,
    emit: &Emitter,
) -> Result<(), PipelineError> {
    match stage {
        Stage::Ingest => ingest(cfg, emit),
        Stage::Classify => classify(cfg, out, seed, emit),
        Stage::Eval => eval(cfg, seed, emit),
        Stage::AuditBias => audit_bias(cfg, out, emit),
        Stage::Users => users(cfg, out, seed, emit),
        Stage::Topics => topics(cfg, out, seed, emit),
        Stage::Changes => changes(cfg, out, seed, emit),
        Stage::Neighbors => neighbors(cfg, out, seed, emit),
        Stage::Report => report(cfg, out, emit),
    }
}

fn load_corpus(out: &Path) -> Result<Corpus, PipelineError> {
    let tweets: Vec<Tweet> = read_json(&out.join("ingest/corpus.json"))?;
    Ok(Corpus::new(tweets, Provenance { source: "ingest/corpus.json".into(), filters: Vec::new() }))
}

fn load_partition(cfg: &PipelineConfig, corpus: &Corpus) -> Result<Partition, PipelineError> {
    Ok(partition_by_period(corpus, &cfg.period_set()?))
}

fn period_names(cfg: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    Ok(cfg.period_set()?.names())
}

fn load_predictions(out: &Path) -> Result<Predictions, PipelineError> {
    read_json(&out.join("classify/predictions.json"))
}

fn load_profiles(out: &Path) -> Result<Vec<UserPeriodProfile>, PipelineError> {
    read_json(&out.join("users/profiles.json"))
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(buf)
}

#[derive(Serialize, Deserialize)]
struct IngestSummary {
    lines_read: usize,
    accepted: usize,
    duplicate_ids: usize,
    malformed: usize,
    after_keyword_filter: usize,
    per_period: BTreeMap<String, usize>,
    unassigned: usize,
}

fn ingest(cfg: &PipelineConfig, emit: &Emitter) -> Result<(), PipelineError> {
    let report = ingest_tweets(&cfg.inputs.tweets, cfg.inputs.format).map_err(runtime)?;
    let accepted = report.corpus.len();
    let corpus = match &cfg.inputs.keywords {
        Some(path) => {
            let lexicon = KeywordLexicon::from_file(path).map_err(runtime)?;
            filter_by_keywords(&report.corpus, &lexicon).map_err(runtime)?
        }
        None => report.corpus,
    };
    let partition = load_partition(cfg, &corpus)?;
    emit.json("corpus.json", &corpus.tweets())?;
    emit.csv("malformed.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["line", "reason"])?;
        for m in &report.malformed {
            w.write_record([m.line.to_string(), m.reason.clone()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    emit.csv("period_counts.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["period", "tweets", "users"])?;
        for (name, c) in &partition.periods {
            let users: BTreeSet<&str> = c.tweets().iter().map(|t| t.user_id.as_str()).collect();
            w.write_record([name.clone(), c.len().to_string(), users.len().to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    emit.json(
        "summary.json",
        &IngestSummary {
            lines_read: report.lines_read,
            accepted,
            duplicate_ids: report.duplicate_ids.len(),
            malformed: report.malformed.len(),
            after_keyword_filter: corpus.len(),
            per_period: partition.periods.iter().map(|(n, c)| (n.clone(), c.len())).collect(),
            unassigned: partition.unassigned,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct TrainingSummary {
    source: String,
    train_records: usize,
    warm_start_records: usize,
    vocabulary: usize,
    loss_history: Vec<f64>,
}

fn classify(cfg: &PipelineConfig, out: &Path, seed: u64, emit: &Emitter) -> Result<(), PipelineError> {
    let corpus = load_corpus(out)?;
    let predictions = if let Some(path) = &cfg.inputs.external_scores {
        let scores = load_external_scores(path).map_err(runtime)?;
        emit.json(
            "training.json",
            &TrainingSummary {
                source: "external".into(),
                train_records: 0,
                warm_start_records: 0,
                vocabulary: 0,
                loss_history: Vec::new(),
            },
        )?;
        scores.into_predictions()
    } else {
        let labels = cfg.inputs.labels.as_ref().expect("validated: labels or external scores");
        let ds = LabeledDataset::from_csv(labels).map_err(runtime)?;
        let mut model = train(&ds, &cfg.classifier.hyperparams(), derive_seed(seed, "train")).map_err(runtime)?;
        let mut warm_records = 0;
        if let Some(path) = &cfg.inputs.warm_start_labels {
            let extra = LabeledDataset::from_csv(path).map_err(runtime)?;
            warm_records = extra.len();
            model = warm_start_train(
                &model,
                &extra,
                &cfg.classifier.warm_start_hyperparams(),
                derive_seed(seed, "warm-start"),
            )
            .map_err(runtime)?;
        }
        emit.json("model.json", &model)?;
        emit.json(
            "training.json",
            &TrainingSummary {
                source: "trained".into(),
                train_records: ds.len(),
                warm_start_records: warm_records,
                vocabulary: model.vocabulary().len(),
                loss_history: model.loss_history().to_vec(),
            },
        )?;
        model.predict_tweets(corpus.tweets())
    };
    let missing = corpus.tweets().iter().filter(|t| !predictions.contains_key(&t.id)).count();
    if missing > 0 {
        return Err(PipelineError::Runtime(format!("{missing} ingested tweets have no stance prediction")));
    }
    let ids: BTreeSet<&str> = corpus.tweets().iter().map(|t| t.id.as_str()).collect();
    let predictions: Predictions = predictions.into_iter().filter(|(id, _)| ids.contains(id.as_str())).collect();
    emit.json("predictions.json", &predictions)?;
    emit.csv("predictions.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["tweet_id", "label", "p_anti", "p_pro", "p_neutral"])?;
        for (id, p) in &predictions {
            w.write_record([id.as_str(), p.label.as_str(), &f6(p.probs[0]), &f6(p.probs[1]), &f6(p.probs[2])])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let partition = load_partition(cfg, &corpus)?;
    emit.csv("label_counts.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["period", "anti", "pro", "neutral"])?;
        for (name, c) in &partition.periods {
            let mut n = [0usize; 3];
            for t in c.tweets() {
                n[predictions[&t.id].label.index()] += 1;
            }
            w.write_record([name.clone(), n[0].to_string(), n[1].to_string(), n[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn eval(cfg: &PipelineConfig, seed: u64, emit: &Emitter) -> Result<(), PipelineError> {
    let labels =
        cfg.inputs.labels.as_ref().ok_or_else(|| PipelineError::Validation("eval needs inputs.labels".into()))?;
    let ds = LabeledDataset::from_csv(labels).map_err(runtime)?;
    let trainer = LinearTrainer { hyperparams: cfg.classifier.hyperparams() };
    let cv = cross_validate(&ds, cfg.classifier.cv_folds, derive_seed(seed, "cv"), &trainer).map_err(runtime)?;
    emit.csv("folds.csv", |buf| write_fold_csv(&cv, buf))?;
    emit.json("cv_summary.json", &CvSummary::from(&cv))?;
    if let Some(path) = &cfg.inputs.warm_start_labels {
        let other = LabeledDataset::from_csv(path).map_err(runtime)?;
        let there = cross_dataset_eval(&ds, &other, &trainer, derive_seed(seed, "cross/0")).map_err(runtime)?;
        let back = cross_dataset_eval(&other, &ds, &trainer, derive_seed(seed, "cross/1")).map_err(runtime)?;
        emit.csv("cross_dataset.csv", |buf| {
            let mut w = csv_writer(buf);
            w.write_record(["train", "test", "macro_f1"])?;
            for r in [&there, &back] {
                w.write_record([r.train.as_str(), r.test.as_str(), &f6(r.macro_f1)])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn audit_bias(cfg: &PipelineConfig, out: &Path, emit: &Emitter) -> Result<(), PipelineError> {
    let model_path = out.join("classify/model.json");
    if model_path.exists() {
        let model: LinearModel = read_json(&model_path)?;
        let audit = spcpd_word_audit(&model, model.vocabulary().terms());
        emit.csv("spcpd_words.csv", |buf| write_word_audit_csv(&audit, buf))?;
    } else {
        warn!("audit-bias: predictions came from external scores, skipping the single-word audit");
    }
    let corpus = load_corpus(out)?;
    let thresholds = &cfg.audit.popularity_thresholds;
    let shares: Vec<(String, u64, f64)> = match &cfg.inputs.reference_tweets {
        Some(path) => {
            let reference = ingest_tweets(path, cfg.inputs.format).map_err(runtime)?.corpus;
            let temporal = audit_temporal_coverage(&corpus, &reference).map_err(runtime)?;
            emit.csv("temporal_coverage.csv", |buf| {
                let mut w = csv_writer(buf);
                w.write_record(["day", "fraction"])?;
                for (day, f) in &temporal.per_day_fraction {
                    w.write_record([day.to_string(), f6(*f)])?;
                }
                w.flush()?;
                Ok(())
            })?;
            audit_popularity_bias(&corpus, &reference, thresholds)
                .map_err(runtime)?
                .shares
                .into_iter()
                .map(|s| (s.source, s.threshold, s.share))
                .collect()
        }
        None => thresholds
            .iter()
            .zip(popularity_shares(&corpus, thresholds).map_err(runtime)?)
            .map(|(&t, s)| ("subsample".to_string(), t, s))
            .collect(),
    };
    emit.csv("popularity.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["source", "threshold", "share_below"])?;
        for (src, t, s) in &shares {
            w.write_record([src.clone(), t.to_string(), f6(*s)])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn users(cfg: &PipelineConfig, out: &Path, seed: u64, emit: &Emitter) -> Result<(), PipelineError> {
    let corpus = load_corpus(out)?;
    let partition = load_partition(cfg, &corpus)?;
    let predictions = load_predictions(out)?;
    let profiles = build_profiles(&partition, &predictions, &cfg.users).map_err(runtime)?;
    let names = period_names(cfg)?;
    let summary = stance_summary(&profiles, &names, &cfg.users);
    emit.json("profiles.json", &profiles)?;
    emit.csv("profiles.csv", |buf| write_profiles_csv(&profiles, buf))?;
    emit.csv("summary.csv", |buf| write_summary_csv(&summary, buf))?;
    for stance in [UserStance::AntiVaxxer, UserStance::ProVaxxer] {
        let bundles = sample_for_review(
            &profiles,
            &partition,
            stance,
            None,
            REVIEW_SAMPLE,
            derive_seed(seed, &format!("review/{stance}")),
        );
        emit.json(&format!("review/{stance}.json"), &bundles)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TopicSideSummary {
    side: String,
    documents: usize,
    dropped_documents: usize,
    vocabulary: usize,
    coverage: f64,
    chosen_k: Option<usize>,
}

fn topics(cfg: &PipelineConfig, out: &Path, seed: u64, emit: &Emitter) -> Result<(), PipelineError> {
    let corpus = load_corpus(out)?;
    let partition = load_partition(cfg, &corpus)?;
    let profiles = load_profiles(out)?;
    let stances = stance_index(&profiles);
    let period_of = partition.period_of();
    let names = period_names(cfg)?;
    let inputs = &cfg.inputs;
    let load_seeds = |p: &Option<std::path::PathBuf>, fallback: fn() -> SeedWordConfig| match p {
        Some(p) => SeedWordConfig::from_file(p).map_err(runtime),
        None => Ok(fallback()),
    };
    let load_merge = |p: &Option<std::path::PathBuf>, fallback: fn() -> MergeConfig| match p {
        Some(p) => MergeConfig::from_file(p).map_err(runtime),
        None => Ok(fallback()),
    };
    let sides = [
        (
            "anti",
            UserStance::AntiVaxxer,
            load_seeds(&inputs.anti_seeds, SeedWordConfig::default_anti)?,
            load_merge(&inputs.anti_merge, MergeConfig::default_anti)?,
        ),
        (
            "pro",
            UserStance::ProVaxxer,
            load_seeds(&inputs.pro_seeds, SeedWordConfig::default_pro)?,
            load_merge(&inputs.pro_merge, MergeConfig::default_pro)?,
        ),
    ];
    let mut summaries = Vec::new();
    for (side, stance, seeds, merge) in sides {
        let docs: Vec<(&str, Vec<String>)> = corpus
            .tweets()
            .iter()
            .filter(|t| {
                period_of
                    .get(t.id.as_str())
                    .is_some_and(|p| stances.get(&(t.user_id.clone(), p.to_string())) == Some(&stance))
            })
            .map(|t| (t.id.as_str(), tokenize(&t.text)))
            .collect();
        if docs.is_empty() {
            warn!("topics: no tweets from {stance} users, skipping the {side} side");
            continue;
        }
        let seed_words: BTreeSet<&str> = seeds.topics.iter().flat_map(|t| t.words.iter().map(String::as_str)).collect();
        let stop: StopWords =
            StopWords::english().terms().into_iter().filter(|w| !seed_words.contains(w.as_str())).collect();
        let tc = TopicCorpus::from_tokens(&docs, cfg.topics.min_df, &stop).map_err(runtime)?;
        let mut chosen_k = None;
        if !cfg.topics.select_k.is_empty() {
            let template = cfg.topics.params(derive_seed(seed, &format!("{side}/select")));
            let sel =
                select_topic_count(&tc, &cfg.topics.select_k, cfg.topics.selection_metric, &template, cfg.topics.top_n)
                    .map_err(runtime)?;
            chosen_k = Some(sel.chosen_k);
            emit.csv(&format!("{side}_k_selection.csv"), |buf| {
                let mut w = csv_writer(buf);
                w.write_record(["k", "score", "chosen"])?;
                for s in &sel.scores {
                    w.write_record([s.k.to_string(), f6(s.score), (s.k == sel.chosen_k).to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
        let model = labeled_lda(&tc, &seeds, &cfg.topics.params(derive_seed(seed, side))).map_err(runtime)?;
        let report = apply_merge(&model, &merge, cfg.topics.top_n).map_err(runtime)?;
        let table = period_topic_distribution(&report, &period_of, &names).map_err(runtime)?;
        let coherence = umass_coherence(&model, &tc, cfg.topics.top_n).map_err(runtime)?;
        emit.json(&format!("{side}_report.json"), &report)?;
        emit.csv(&format!("{side}_assignments.csv"), |buf| write_assignments_csv(&report, buf))?;
        emit.csv(&format!("{side}_period_topics.csv"), |buf| write_period_table_csv(&table, buf))?;
        emit.csv(&format!("{side}_topics.csv"), |buf| {
            let mut w = csv_writer(buf);
            w.write_record(["topic", "top_words"])?;
            for t in &report.topics {
                w.write_record([t.name.clone(), t.top_words.join(" ")])?;
            }
            w.flush()?;
            Ok(())
        })?;
        emit.csv(&format!("{side}_coherence.csv"), |buf| {
            let mut w = csv_writer(buf);
            w.write_record(["topic", "umass"])?;
            for (name, c) in model.topic_names.iter().zip(&coherence.per_topic) {
                w.write_record([name.clone(), f6(*c)])?;
            }
            w.flush()?;
            Ok(())
        })?;
        summaries.push(TopicSideSummary {
            side: side.into(),
            documents: tc.len(),
            dropped_documents: docs.len() - tc.len(),
            vocabulary: tc.n_terms(),
            coverage: report.coverage(),
            chosen_k,
        });
    }
    emit.json("summary.json", &summaries)
}

#[derive(Serialize, Deserialize)]
struct ChangesSummary {
    accounting: ChangeAccounting,
    flagged_bots: usize,
    whitelisted: usize,
    removed: usize,
    unscored: usize,
    retained: usize,
    multi_vaccine_users: usize,
    vaccine_preference_users: usize,
    cdfs_written: bool,
}

fn changes(cfg: &PipelineConfig, out: &Path, seed: u64, emit: &Emitter) -> Result<(), PipelineError> {
    let corpus = load_corpus(out)?;
    let partition = load_partition(cfg, &corpus)?;
    let predictions = load_predictions(out)?;
    let profiles = load_profiles(out)?;
    let names = period_names(cfg)?;
    let matrices: Vec<TransitionMatrix> = consecutive_matrices(&profiles, &names).map_err(runtime)?;
    let accounting = distinct_changed_users(&matrices);

    let mut bots = match &cfg.inputs.bot_scores {
        Some(p) => BotScores::from_csv(p).map_err(runtime)?,
        None => BotScores::default(),
    };
    if let Some(p) = &cfg.inputs.whitelist {
        let text = std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
        bots.whitelist = BotScores::parse_whitelist(&text);
    }
    let filtered = filter_bots(&accounting.distinct, &bots, cfg.changes.bot_threshold).map_err(runtime)?;
    let retained = &filtered.retained;

    let records = change_records(&profiles, &names, retained);
    let changed_tweets: Vec<Tweet> =
        corpus.tweets().iter().filter(|t| retained.contains(&t.user_id)).cloned().collect();
    let lexicon = match &cfg.inputs.vaccines {
        Some(p) => VaccineLexicon::from_file(p).map_err(runtime)?,
        None => VaccineLexicon::default_set(),
    };
    let preference = vaccine_preference_check(&changed_tweets, &predictions, &lexicon);

    emit.csv("matrices.csv", |buf| write_matrix_csv(&matrices, buf))?;
    emit.csv("changed_users.csv", |buf| write_changed_users_csv(&records, buf))?;
    emit.json("bots.json", &filtered)?;
    emit.csv("vaccine_preference.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["user_id", "vaccines", "flagged", "opposed", "anti_tweet", "preferred", "pro_tweet"])?;
        for u in &preference.users {
            let mentioned: Vec<&str> = u.mentioned.iter().map(String::as_str).collect();
            let first = u.evidence.first();
            w.write_record([
                u.user_id.as_str(),
                &mentioned.join(";"),
                &u.flagged.to_string(),
                first.map_or("", |e| e.opposed.as_str()),
                first.map_or("", |e| e.anti_tweet.as_str()),
                first.map_or("", |e| e.preferred.as_str()),
                first.map_or("", |e| e.pro_tweet.as_str()),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let labeled = |tweets: &mut dyn Iterator<Item = &Tweet>| -> Vec<_> {
        tweets.filter_map(|t| predictions.get(&t.id).map(|p| (t.created_at, p.label))).collect()
    };
    let overall = monthly_timeline(labeled(&mut corpus.tweets().iter()));
    let mut by_user: BTreeMap<&str, Vec<&Tweet>> = BTreeMap::new();
    for t in &changed_tweets {
        by_user.entry(t.user_id.as_str()).or_default().push(t);
    }
    emit.csv("timeline_all.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["month", "pro", "anti"])?;
        for m in &overall {
            w.write_record([m.month.clone(), m.pro.to_string(), m.anti.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    emit.csv("timeline_users.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["user_id", "month", "pro", "anti"])?;
        for (user, tweets) in &by_user {
            for m in monthly_timeline(labeled(&mut tweets.iter().copied())) {
                w.write_record([user.to_string(), m.month, m.pro.to_string(), m.anti.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;

    let cdfs_written = match &cfg.inputs.metadata {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| PipelineError::io(p, e))?;
            let meta = read_metadata_csv(f, &p.display().to_string()).map_err(runtime)?;
            let counts = user_label_counts(corpus.tweets(), &predictions);
            let cohorts = representativeness_report(retained, &counts, &meta, cfg.changes.active_threshold);
            emit.csv("cdf.csv", |buf| write_cdf_csv(&cohorts, buf))?;
            true
        }
        None => {
            warn!("changes: no metadata file, skipping representativeness CDFs");
            false
        }
    };

    if matrices.len() >= 2 {
        let groups = define_groups(&matrices, retained, cfg.changes.group_sample, derive_seed(seed, "groups"))
            .map_err(runtime)?;
        emit.json("groups.json", &groups)?;
        emit.csv("groups.csv", |buf| {
            let mut w = csv_writer(buf);
            w.write_record(["group", "description", "user_id"])?;
            for g in &groups {
                for u in &g.users {
                    w.write_record([g.name.as_str(), g.description.as_str(), u.as_str()])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
        let anti_report = out.join("topics/anti_report.json");
        if anti_report.exists() {
            let report: TopicReport = read_json(&anti_report)?;
            let profiles: Vec<_> = groups
                .iter()
                .map(|g| {
                    let tweets: &[Tweet] = partition.get(&g.anti_period).map_or(&[], |c| c.tweets());
                    (g.clone(), group_topic_profile(&g.users, tweets, &report))
                })
                .collect();
            emit.csv("group_topics.csv", |buf| write_group_profile_csv(&profiles, buf))?;
        }
    } else {
        warn!("changes: fewer than three periods, no user groups defined");
    }

    emit.json(
        "summary.json",
        &ChangesSummary {
            flagged_bots: filtered.flagged.len(),
            whitelisted: filtered.whitelisted.len(),
            removed: filtered.removed().len(),
            unscored: filtered.unscored.len(),
            retained: retained.len(),
            multi_vaccine_users: preference.multi_vaccine_users(),
            vaccine_preference_users: preference.flagged_users(),
            cdfs_written,
            accounting,
        },
    )
}

fn neighbors(cfg: &PipelineConfig, out: &Path, seed: u64, emit: &Emitter) -> Result<(), PipelineError> {
    let Some(path) = &cfg.inputs.following else {
        warn!("neighbors: no following snapshot configured, nothing to do");
        return emit.json("group_ratios.json", &Vec::<GroupRatioRow>::new());
    };
    let snapshot = FollowingSnapshot::from_csv(path).map_err(runtime)?;
    let profiles = load_profiles(out)?;
    let names = period_names(cfg)?;
    let per_period: Vec<(String, HashMap<String, UserStance>)> =
        names.iter().map(|n| (n.clone(), period_stances(&profiles, n))).collect();
    let groups_path = out.join("changes/groups.json");
    let groups: Vec<UserGroup> = if groups_path.exists() { read_json(&groups_path)? } else { Vec::new() };
    let options = NeighborOptions {
        denominator: cfg.neighbors.denominator,
        averaging: cfg.neighbors.averaging,
        resamples: cfg.neighbors.resamples,
    };
    let mut rows = Vec::new();
    for g in &groups {
        for w in per_period.windows(2) {
            let pair = format!("{}->{}", w[0].0, w[1].0);
            rows.extend(group_neighborhood_ratios(
                &g.name, &g.users, &snapshot, &w[0].1, &w[1].1, &pair, &options, seed,
            ));
        }
    }
    emit.json("group_ratios.json", &rows)?;
    emit.csv("group_ratios.csv", |buf| write_group_ratios_csv(&rows, buf))?;
    let mut contrast = Vec::new();
    for stance in [UserStance::ProVaxxer, UserStance::AntiVaxxer] {
        let users = never_changers(&profiles, &names, stance);
        contrast.extend(constant_stance_contrast(&users, stance, &snapshot, &per_period, cfg.neighbors.denominator));
    }
    emit.csv("constant_stance.csv", |buf| write_contrast_csv(&contrast, buf))
}

#[derive(Serialize)]
struct RunReport {
    master_seed: u64,
    periods: Vec<String>,
    tweets: BTreeMap<String, usize>,
    stance_summary: Vec<StanceSummaryRow>,
    label_totals: BTreeMap<String, usize>,
    transitions: Vec<TransitionRow>,
    distinct_changers: usize,
    changers_retained: usize,
    group_sizes: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct TransitionRow {
    from: String,
    to: String,
    counts: [[usize; 2]; 2],
}

fn report(cfg: &PipelineConfig, out: &Path, emit: &Emitter) -> Result<(), PipelineError> {
    let corpus = load_corpus(out)?;
    let partition = load_partition(cfg, &corpus)?;
    let predictions = load_predictions(out)?;
    let profiles = load_profiles(out)?;
    let names = period_names(cfg)?;
    let summary = stance_summary(&profiles, &names, &cfg.users);
    let matrices = consecutive_matrices(&profiles, &names).map_err(runtime)?;
    let changes: serde_json::Value = read_json(&out.join("changes/summary.json"))?;
    let groups_path = out.join("changes/groups.json");
    let groups: Vec<UserGroup> = if groups_path.exists() { read_json(&groups_path)? } else { Vec::new() };

    emit.csv("stance_summary.csv", |buf| write_summary_csv(&summary, buf))?;
    for (i, m) in matrices.iter().enumerate() {
        let c = m.counts();
        emit.csv(&format!("transition_{i}.csv"), |buf| {
            let mut w = csv_writer(buf);
            w.write_record([format!("{} \\ {}", m.period_a, m.period_b), "anti".into(), "pro".into()])?;
            w.write_record(["anti".to_string(), c[0][0].to_string(), c[0][1].to_string()])?;
            w.write_record(["pro".to_string(), c[1][0].to_string(), c[1][1].to_string()])?;
            w.flush()?;
            Ok(())
        })?;
    }
    let mut label_totals = BTreeMap::new();
    for l in StanceLabel::ALL {
        label_totals.insert(l.as_str().to_string(), predictions.values().filter(|p| p.label == l).count());
    }
    let count = |key: &str| changes.get(key).and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let distinct =
        changes.get("accounting").and_then(|a| a.get("distinct")).and_then(|d| d.as_array()).map_or(0, Vec::len);
    emit.json(
        "summary.json",
        &RunReport {
            master_seed: cfg.master_seed,
            periods: names.clone(),
            tweets: partition.periods.iter().map(|(n, c)| (n.clone(), c.len())).collect(),
            stance_summary: summary,
            label_totals,
            transitions: matrices
                .iter()
                .map(|m| TransitionRow { from: m.period_a.clone(), to: m.period_b.clone(), counts: m.counts() })
                .collect(),
            distinct_changers: distinct,
            changers_retained: count("retained"),
            group_sizes: groups.iter().map(|g| (g.name.clone(), g.users.len())).collect(),
        },
    )
}
