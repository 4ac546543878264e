use vaxstance::classifier::{train, warm_start_train, Hyperparams};
use vaxstance::evaluation::{
    confusion_on, cross_dataset_eval, cross_validate, macro_f1, stratified_kfold, LinearTrainer,
};
use vaxstance::synth::{keyword_corpus, KeywordCorpusConfig};

#[test]
fn clean_keyword_corpus_held_out_macro_f1() {
    let cfg = KeywordCorpusConfig { n_docs: 3000, label_noise: 0.0, ..KeywordCorpusConfig::default() };
    let ds = keyword_corpus(&cfg, 12);
    let plan = stratified_kfold(&ds, 5, 3).unwrap();
    let model = train(&ds.subset("train", &plan.train_indices(0)), &Hyperparams::default(), 3).unwrap();
    let f1 = macro_f1(&confusion_on(&model, &ds.subset("test", &plan.test_indices(0)))).unwrap();
    assert!(f1 >= 0.95, "held-out macro-F1 {f1}");
}

/// Base model on a large corpus whose keyword pools partly overlap the
/// target's; the target training set is small.
#[test]
fn warm_start_beats_cold_start_on_small_target() {
    let hp = Hyperparams::default();
    let base_cfg = KeywordCorpusConfig { name: "related".into(), n_docs: 3000, ..KeywordCorpusConfig::default() };
    let base = train(&keyword_corpus(&base_cfg, 100), &hp, 100).unwrap();

    let target = |name: &str, n_docs| KeywordCorpusConfig {
        name: name.into(),
        n_docs,
        pool_offset: 10,
        ..KeywordCorpusConfig::default()
    };
    let (mut warm_sum, mut cold_sum) = (0.0, 0.0);
    for seed in 0..5u64 {
        let small = keyword_corpus(&target("target-train", 60), 200 + seed);
        let test = keyword_corpus(&target("target-test", 900), 300 + seed);
        let cold = train(&small, &hp, seed).unwrap();
        let warm = warm_start_train(&base, &small, &hp, seed).unwrap();
        let cold_f1 = macro_f1(&confusion_on(&cold, &test)).unwrap();
        let warm_f1 = macro_f1(&confusion_on(&warm, &test)).unwrap();
        eprintln!("seed {seed}: warm {warm_f1:.4} cold {cold_f1:.4}");
        warm_sum += warm_f1;
        cold_sum += cold_f1;
    }
    assert!(warm_sum >= cold_sum, "mean warm {} < mean cold {}", warm_sum / 5.0, cold_sum / 5.0);
}

#[test]
fn shifted_vocabulary_scores_below_in_distribution_cv() {
    let source = keyword_corpus(&KeywordCorpusConfig { name: "source".into(), ..KeywordCorpusConfig::default() }, 1);
    let shifted_cfg = KeywordCorpusConfig { name: "shifted".into(), pool_offset: 20, ..KeywordCorpusConfig::default() };
    let shifted = keyword_corpus(&shifted_cfg, 2);
    let trainer = LinearTrainer::default();
    let cv = cross_validate(&source, 5, 9, &trainer).unwrap();
    let cross = cross_dataset_eval(&source, &shifted, &trainer, 9).unwrap();
    assert!(cross.macro_f1 < cv.mean, "cross {} vs cv {}", cross.macro_f1, cv.mean);
    assert_eq!((cross.train.as_str(), cross.test.as_str()), ("source", "shifted"));
}
