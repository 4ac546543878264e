//! Writes the small synthetic corpus under `fixtures/demo/`.
//!
//! ```text
//! cargo run -p vaxstance --example make_demo_fixture -- fixtures/demo
//! ```
//!
//! Users follow planted stance trajectories across the three study
//! periods, so every downstream stage has something to find.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_210_401;

const CONFIG: &str = r#"# Demo pipeline over the synthetic fixture in this directory.
master_seed = 20210401
out_dir = "out"

[inputs]
tweets = "tweets.jsonl"
format = "jsonl"
keywords = "keywords.txt"
labels = "labels.csv"
warm_start_labels = "labels_extra.csv"
bot_scores = "bot_scores.csv"
whitelist = "whitelist.txt"
metadata = "metadata.csv"
following = "following.csv"

[classifier]
epochs = 30
cv_folds = 5

[users]
min_tweets = 3
tau = 0.7

[topics]
iterations = 300
burn_in = 100
sample_lag = 10
top_n = 10

[changes]
bot_threshold = 0.5
active_threshold = 6
group_sample = 50

[neighbors]
resamples = 2000
"#;

const ANTI_TOPICS: &[&[&str]] = &[
    &["die", "reaction", "kill", "danger", "health"],
    &["force", "mandatory", "body", "mandate", "passport", "refuse"],
    &["big", "company", "pharma", "money", "drug", "manufacture"],
    &["trump", "govern", "lie", "gates", "bill", "fda"],
    &["work", "stop", "lockdown", "mutate"],
    &["experiment", "trial", "rush", "study", "approve"],
    &["shed", "flu", "mrna", "spread", "sick"],
    &["control", "believe", "population", "death"],
];
const PRO_TOPICS: &[&[&str]] = &[
    &["shot", "feel", "thing", "soon"],
    &["dose", "second", "schedule", "global", "free"],
    &["people", "mask", "risk", "wait", "pandemic"],
    &["vaccineswork", "help", "leader", "thank", "polio", "support"],
];
const ANTI_MARKERS: &[&str] = &["poison", "scam", "toxic", "harm", "novax"];
const PRO_MARKERS: &[&str] = &["grateful", "science", "protected", "glad", "relief"];
const NEUTRAL_WORDS: &[&str] = &["news", "report", "clinic", "appointment", "update", "week", "question", "data"];
const FILLER: &[&str] = &["today", "really", "just", "still", "city", "morning", "family", "friend", "line"];
const KEYWORDS: &[&str] = &["vaccine", "vaccination", "vaccinated", "jab", "#vaccine"];
const VACCINES: &[&str] = &["pfizer", "oxford", "moderna", "sputnik", "sinovac", "covaxin"];
/// Accounts given a bot score above the threshold. One of the changers is
/// whitelisted after review.
const BOTS: &[&str] = &["ppp05", "ap-01", "-pa02", "mix03"];
const WHITELISTED: &str = "-pa02";
const OFF_TOPIC: &[&str] = &["football tonight was great", "new phone day", "coffee then work", "rainy weekend again"];

#[derive(Clone, Copy, PartialEq)]
enum S {
    Anti,
    Pro,
    Mixed,
    Absent,
}

fn trajectories() -> Vec<(&'static str, [S; 3], usize)> {
    use S::*;
    vec![
        ("ppp", [Pro, Pro, Pro], 40),
        ("aaa", [Anti, Anti, Anti], 20),
        ("ap-", [Anti, Pro, Absent], 6),
        ("app", [Anti, Pro, Pro], 4),
        ("pa-", [Pro, Anti, Absent], 6),
        ("paa", [Pro, Anti, Anti], 4),
        ("-ap", [Absent, Anti, Pro], 8),
        ("-pa", [Absent, Pro, Anti], 8),
        ("pap", [Pro, Anti, Pro], 3),
        ("mix", [Mixed, Mixed, Mixed], 10),
        ("one", [Absent, Pro, Absent], 6),
    ]
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

/// One tweet text with the given stance (`None` for neutral).
fn text(rng: &mut ChaCha8Rng, stance: Option<bool>) -> String {
    let mut w: Vec<&str> = vec![pick(rng, KEYWORDS)];
    match stance {
        Some(anti) => {
            let (topics, markers) = if anti { (ANTI_TOPICS, ANTI_MARKERS) } else { (PRO_TOPICS, PRO_MARKERS) };
            let topic = topics[rng.gen_range(0..topics.len())];
            for _ in 0..rng.gen_range(2..=3) {
                w.push(pick(rng, topic));
            }
            w.push(pick(rng, markers));
        }
        None => {
            for _ in 0..rng.gen_range(2..=3) {
                w.push(pick(rng, NEUTRAL_WORDS));
            }
        }
    }
    if rng.gen_bool(0.15) {
        w.push(pick(rng, VACCINES));
    }
    for _ in 0..rng.gen_range(1..=3) {
        w.push(pick(rng, FILLER));
    }
    w[1..].shuffle(rng);
    w.join(" ")
}

fn stance_draw(rng: &mut ChaCha8Rng, s: S) -> Option<bool> {
    match s {
        S::Anti if rng.gen_bool(0.92) => Some(true),
        S::Pro if rng.gen_bool(0.92) => Some(false),
        S::Mixed => [Some(true), Some(false), None][rng.gen_range(0..3)],
        _ => None,
    }
}

fn periods() -> [(DateTime<Utc>, i64); 3] {
    let d = |y, m| Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0).unwrap();
    [(d(2018, 1), 730), (d(2020, 1), 366), (d(2021, 1), 90)]
}

fn csv_line(fields: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).unwrap();
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/demo".into()));
    fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut users: Vec<(String, [S; 3])> = Vec::new();
    for (tag, traj, n) in trajectories() {
        for i in 0..n {
            users.push((format!("{tag}{i:02}"), traj));
        }
    }

    let mut tweets = String::new();
    let mut next_id = 1u64;
    for (user, traj) in &users {
        for (p, &s) in traj.iter().enumerate() {
            if s == S::Absent {
                continue;
            }
            let (start, days) = periods()[p];
            for _ in 0..rng.gen_range(5..=8) {
                let ts = start + Duration::seconds(rng.gen_range(0..days * 86_400));
                let body = if rng.gen_bool(0.05) {
                    pick(&mut rng, OFF_TOPIC).to_string()
                } else {
                    let stance = stance_draw(&mut rng, s);
                    text(&mut rng, stance)
                };
                let rec = serde_json::json!({
                    "id": format!("t{next_id:06}"),
                    "user_id": user,
                    "created_at": ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    "text": body,
                    "retweet_count": rng.gen_range(0..40u64).pow(2) / 40,
                });
                next_id += 1;
                writeln!(tweets, "{rec}").unwrap();
            }
        }
    }
    tweets.push_str("{\"id\": \"broken\", \"user_id\": \n");
    fs::write(dir.join("tweets.jsonl"), tweets).unwrap();

    for (name, n) in [("labels.csv", 600), ("labels_extra.csv", 150)] {
        let mut out = String::from("id,text,label\n");
        for i in 0..n {
            let (stance, label) = [(Some(true), "anti"), (Some(false), "pro"), (None, "neutral")][i % 3];
            let id = format!("{}{i:04}", &name[..name.len() - 4]);
            out.push_str(&csv_line(&[&id, &text(&mut rng, stance), label]));
        }
        fs::write(dir.join(name), out).unwrap();
    }

    let mut bots = String::from("user_id,score\n");
    let mut meta = String::from("user_id,followers,followings\n");
    for (user, _) in &users {
        let score =
            if BOTS.contains(&user.as_str()) { 0.5 + rng.gen_range(0.0..0.5) } else { rng.gen_range(0.0..0.45) };
        bots.push_str(&format!("{user},{score:.3}\n"));
        let followers = (10f64.powf(rng.gen_range(0.5..4.5))) as u64;
        let followings = (10f64.powf(rng.gen_range(1.0..3.5))) as u64;
        meta.push_str(&format!("{user},{followers},{followings}\n"));
    }
    fs::write(dir.join("bot_scores.csv"), bots).unwrap();
    fs::write(dir.join("metadata.csv"), meta).unwrap();
    fs::write(dir.join("whitelist.txt"), format!("# reviewed by hand\n{WHITELISTED}\n")).unwrap();

    let mut following = String::from("user_id,followed_id\n");
    for (user, traj) in &users {
        let leaning = traj.iter().rev().find(|s| **s == S::Anti || **s == S::Pro).copied();
        for _ in 0..rng.gen_range(8..=20) {
            let (other, other_traj) = &users[rng.gen_range(0..users.len())];
            let same = leaning.is_some_and(|l| other_traj.contains(&l));
            if same || rng.gen_bool(0.4) {
                following.push_str(&format!("{user},{other}\n"));
            }
        }
    }
    fs::write(dir.join("following.csv"), following).unwrap();

    fs::write(dir.join("config.toml"), CONFIG).unwrap();
    fs::write(dir.join("keywords.txt"), "# vaccine keyword lexicon\nvaccine\nvaccination\nvaccinated\njab\n#vaccine\n")
        .unwrap();
    println!("wrote {} users and {} tweets to {}", users.len(), next_id - 1, dir.display());
}
