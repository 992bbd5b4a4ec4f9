//! Builds the meta-length-token fine-tuning corpus from `(input, output)` pairs.
//!
//! Each response is word-counted and matched against the nine token ranges.
//! Matching pairs become `(x, mlt, y)` triples until that token reaches its
//! cap; everything else is dropped.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::length::{mlt_for_length, parse_leading_mlt, MetaLengthToken};
use crate::metrics::word_count;
use crate::template::ChatTemplate;

pub const DEFAULT_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub x: String,
    pub y: String,
    pub source: String,
}

impl RawPair {
    pub fn new(x: impl Into<String>, y: impl Into<String>, source: impl Into<String>) -> Self {
        RawPair {
            x: x.into(),
            y: y.into(),
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MltTriple {
    pub x: String,
    pub mlt: MetaLengthToken,
    pub y: String,
}

#[derive(Debug, Clone, Copy)]
pub struct DmltOptions {
    /// Maximum number of triples per token.
    pub cap: usize,
    pub seed: u64,
    /// Shuffle the input with `seed` before capping. Off by default, in which
    /// case pairs are kept first-come in input order.
    pub shuffle: bool,
}

impl Default for DmltOptions {
    fn default() -> Self {
        DmltOptions {
            cap: DEFAULT_CAP,
            seed: 0,
            shuffle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmltSummary {
    pub total: usize,
    pub counts: BTreeMap<MetaLengthToken, usize>,
    /// Response length fell between token ranges.
    pub dropped_unmatched: usize,
    /// Matched a token that had already reached the cap.
    pub dropped_over_cap: usize,
    /// Empty input or output.
    pub dropped_invalid: usize,
}

#[derive(Debug, Clone)]
pub struct DmltBuild {
    pub triples: Vec<MltTriple>,
    pub summary: DmltSummary,
}

pub fn build_dmlt(pairs: impl IntoIterator<Item = RawPair>, options: DmltOptions) -> Result<DmltBuild> {
    if options.cap == 0 {
        return Err(Error::InvalidConfig("cap must be positive".into()));
    }
    let mut ordered: Box<dyn Iterator<Item = RawPair>> = Box::new(pairs.into_iter());
    if options.shuffle {
        let mut all: Vec<RawPair> = ordered.collect();
        all.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
        ordered = Box::new(all.into_iter());
    }

    let mut counts = empty_histogram();
    let mut triples = Vec::new();
    let (mut unmatched, mut over_cap, mut invalid) = (0, 0, 0);
    for pair in ordered {
        if pair.x.trim().is_empty() || pair.y.trim().is_empty() {
            invalid += 1;
            continue;
        }
        let Some(mlt) = mlt_for_length(word_count(&pair.y)) else {
            unmatched += 1;
            continue;
        };
        let count = counts.get_mut(&mlt).expect("histogram has every token");
        if *count >= options.cap {
            over_cap += 1;
            continue;
        }
        *count += 1;
        triples.push(MltTriple {
            x: pair.x,
            mlt,
            y: pair.y,
        });
    }

    Ok(DmltBuild {
        summary: DmltSummary {
            total: triples.len(),
            counts,
            dropped_unmatched: unmatched,
            dropped_over_cap: over_cap,
            dropped_invalid: invalid,
        },
        triples,
    })
}

fn empty_histogram() -> BTreeMap<MetaLengthToken, usize> {
    MetaLengthToken::ALL.into_iter().map(|t| (t, 0)).collect()
}

/// Per-token counts; every token is present, zero if unused.
pub fn mlt_histogram(triples: &[MltTriple]) -> BTreeMap<MetaLengthToken, usize> {
    let mut counts = empty_histogram();
    for t in triples {
        *counts.get_mut(&t.mlt).expect("histogram has every token") += 1;
    }
    counts
}

/// The answer with the most words; the first one wins ties.
pub fn select_longest_answer<S: AsRef<str>>(answers: &[S]) -> Result<&str> {
    let mut best: Option<(&str, usize)> = None;
    for a in answers {
        let a = a.as_ref();
        let n = word_count(a);
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((a, n));
        }
    }
    best.map(|(a, _)| a).ok_or(Error::NoAnswers)
}

/// Renders a triple as a full training sequence: the token is glued directly
/// to the front of the response, and the template's primary EOS follows it.
pub fn format_training_example(triple: &MltTriple, template: &ChatTemplate) -> String {
    let mut assistant = String::with_capacity(triple.mlt.surface().len() + triple.y.len());
    assistant.push_str(triple.mlt.surface());
    assistant.push_str(&triple.y);
    let mut out = template.render(&triple.x, &assistant);
    out.push_str(template.primary_eos());
    out
}

/// Recovers `(mlt, y)` from the assistant span of a rendered example.
pub fn split_assistant_content(content: &str) -> Option<(MetaLengthToken, &str)> {
    match parse_leading_mlt(content) {
        (Some(mlt), rest) => Some((mlt, rest)),
        (None, _) => None,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Outputs {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(alias = "instruction", alias = "x")]
    input: String,
    #[serde(alias = "outputs", alias = "answers", alias = "y")]
    output: Outputs,
    #[serde(default)]
    source: Option<String>,
}

/// Reads one corpus file of `{"input", "output" | "outputs", "source"}` lines.
///
/// Records with several outputs keep the longest one. A missing `source`
/// defaults to the file stem.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<RawPair>> {
    let path = path.as_ref();
    let default_source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    jsonl::read_with(path, |line, line_no| {
        let raw: RawRecord = serde_json::from_str(line)?;
        let y = match &raw.output {
            Outputs::One(s) => s.clone(),
            Outputs::Many(list) => select_longest_answer(list)
                .map_err(|_| Error::malformed(path, line_no, "empty output list"))?
                .to_string(),
        };
        Ok(RawPair {
            x: raw.input,
            y,
            source: raw.source.unwrap_or_else(|| default_source.clone()),
        })
    })
}

/// Concatenates several corpus files in the given order.
pub fn load_sources<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<RawPair>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_pairs(p)?);
    }
    Ok(all)
}

pub fn save_triples(triples: &[MltTriple], path: impl AsRef<Path>) -> Result<()> {
    jsonl::write(path.as_ref(), triples)
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<MltTriple>> {
    jsonl::read(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::length::TargetLength;
    use crate::template::builtin;

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    fn pair(len: usize) -> RawPair {
        RawPair::new("question", words(len), "synthetic")
    }

    #[test]
    fn matches_and_drops() {
        let build = build_dmlt([pair(12), pair(20)], DmltOptions::default()).unwrap();
        assert_eq!(build.triples.len(), 1);
        assert_eq!(build.triples[0].mlt.surface(), "[MLT:10]");
        assert_eq!(build.summary.dropped_unmatched, 1);
    }

    #[test]
    fn cap_is_first_come() {
        let pairs = (0..25_000).map(|i| RawPair::new(format!("q{i}"), words(30), "s"));
        let build = build_dmlt(pairs, DmltOptions::default()).unwrap();
        assert_eq!(build.triples.len(), 20_000);
        assert!(build.triples.iter().all(|t| t.mlt.target() == TargetLength::T30));
        assert_eq!(build.triples.last().unwrap().x, "q19999");
        assert_eq!(build.summary.dropped_over_cap, 5_000);
        let hist = mlt_histogram(&build.triples);
        assert_eq!(hist[&TargetLength::T30.mlt()], 20_000);
        assert_eq!(hist.values().sum::<usize>(), 20_000);
        assert_eq!(hist, build.summary.counts);
    }

    #[test]
    fn zero_cap_rejected() {
        let options = DmltOptions { cap: 0, ..Default::default() };
        assert!(build_dmlt([pair(12)], options).is_err());
    }

    #[test]
    fn shuffle_mode_is_seeded() {
        let pairs: Vec<_> = (0..100).map(|i| RawPair::new(format!("q{i}"), words(12), "s")).collect();
        let options = DmltOptions { cap: 10, seed: 3, shuffle: true };
        let a = build_dmlt(pairs.clone(), options).unwrap();
        let b = build_dmlt(pairs.clone(), options).unwrap();
        assert_eq!(a.triples, b.triples);
        let first_ten: Vec<_> = (0..10).map(|i| format!("q{i}")).collect();
        let kept: Vec<_> = a.triples.iter().map(|t| t.x.clone()).collect();
        assert_ne!(kept, first_ten);
    }

    #[test]
    fn empty_histogram_is_all_zero() {
        let hist = mlt_histogram(&[]);
        assert_eq!(hist.len(), 9);
        assert!(hist.values().all(|&c| c == 0));
    }

    #[test]
    fn longest_answer() {
        assert_eq!(select_longest_answer(&["a b", "a b c"]).unwrap(), "a b c");
        assert_eq!(select_longest_answer(&["x y", "p q"]).unwrap(), "x y");
        assert_eq!(select_longest_answer(&["only"]).unwrap(), "only");
        let none: [&str; 0] = [];
        assert!(matches!(select_longest_answer(&none), Err(Error::NoAnswers)));
    }

    #[test]
    fn training_example() {
        let triple = MltTriple {
            x: "Hi".into(),
            mlt: TargetLength::T10.mlt(),
            y: "Hello there…".into(),
        };
        let deepseek = builtin("deepseek").unwrap();
        let rendered = format_training_example(&triple, &deepseek);
        assert_eq!(
            rendered,
            "<|begin_of_sentence|>User: Hi\n\nAssistant:[MLT:10]Hello there…<|end_of_sentence|>"
        );
        assert_eq!(rendered, format_training_example(&triple, &deepseek));

        let content = rendered
            .strip_prefix(&deepseek.render("Hi", ""))
            .and_then(|s| s.strip_suffix(deepseek.primary_eos()))
            .unwrap();
        assert_eq!(split_assistant_content(content), Some((triple.mlt, triple.y.as_str())));
    }

    #[test]
    fn loads_corpus_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eli5.jsonl");
        std::fs::write(
            &path,
            "{\"input\":\"why?\",\"outputs\":[\"short\",\"a longer one\"]}\n\
             {\"input\":\"what?\",\"output\":\"answer\",\"source\":\"custom\"}\n",
        )
        .unwrap();
        let pairs = load_pairs(&path).unwrap();
        assert_eq!(pairs[0], RawPair::new("why?", "a longer one", "eli5"));
        assert_eq!(pairs[1].source, "custom");
    }
}
