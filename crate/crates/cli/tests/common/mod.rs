//! Seeded synthetic corpora shared by the integration suites.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dupscout_core::corpus::write_jsonl;
use dupscout_core::{BugReport, ReportCollection};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ru", "te", "zan", "po", "vi", "sel", "dor", "bu", "qen", "fa", "ni", "gro", "hex", "ju", "wel",
    "ta", "sor", "ple", "cri", "mon", "dax",
];
const COMPONENTS: [&str; 8] = [
    "ui", "network", "storage", "kernel", "printing", "audio", "graphics", "auth",
];
const OSES: [&str; 3] = ["linux", "windows", "macos"];

pub fn vocabulary(size: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    while seen.len() < size {
        let n = rng.gen_range(2..=4);
        let word: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        seen.insert(word);
    }
    let mut words: Vec<String> = seen.into_iter().collect();
    words.shuffle(rng);
    words
}

fn sample_words(vocab: &[String], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n).map(|_| vocab.choose(rng).unwrap().clone()).collect()
}

/// Permutes `words` and drops each with probability `dropout`, keeping at least one.
fn perturb(words: &str, dropout: f64, rng: &mut ChaCha8Rng) -> String {
    let mut tokens: Vec<&str> = words.split_whitespace().collect();
    tokens.shuffle(rng);
    let mut kept: Vec<&str> = tokens.iter().copied().filter(|_| !rng.gen_bool(dropout)).collect();
    if kept.is_empty() {
        kept.push(tokens[0]);
    }
    kept.join(" ")
}

/// `n_originals` random reports followed by `n_children` duplicates, each a
/// token-permuted copy of a distinct random original with `dropout` token loss.
pub fn synthetic_corpus(n_originals: usize, n_children: usize, dropout: f64, seed: u64) -> ReportCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(3000, &mut rng);
    let mut reports: Vec<BugReport> = (0..n_originals)
        .map(|i| {
            let n_summary = rng.gen_range(6..=12);
            let n_description = rng.gen_range(20..=40);
            let mut r = BugReport::new(format!("R{i:04}"), sample_words(&vocab, n_summary, &mut rng).join(" "));
            r.description = sample_words(&vocab, n_description, &mut rng).join(" ");
            r.component = COMPONENTS.choose(&mut rng).unwrap().to_string();
            r.platform = BTreeMap::from([("os".to_string(), OSES.choose(&mut rng).unwrap().to_string())]);
            r
        })
        .collect();
    let mut parents: Vec<usize> = (0..n_originals).collect();
    parents.shuffle(&mut rng);
    for (j, &p) in parents.iter().take(n_children).enumerate() {
        let parent = reports[p].clone();
        let mut child = BugReport::new(format!("D{j:04}"), perturb(&parent.summary, dropout, &mut rng));
        child.description = perturb(&parent.description, dropout, &mut rng);
        child.component = parent.component.clone();
        child.platform = parent.platform.clone();
        child.dup_of = Some(parent.id.clone());
        reports.push(child);
    }
    ReportCollection::new(reports).expect("synthetic ids are unique").0
}

pub fn write_corpus(collection: &ReportCollection, path: &Path) {
    write_jsonl(collection, path).expect("write synthetic corpus");
}
