//! The target-length benchmark dataset: sampling, prompt augmentation and
//! the line-delimited `{"id", "Instruction", "TargetLength"}` file format.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::length::TargetLength;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlgEntry {
    pub id: String,
    #[serde(rename = "Instruction")]
    pub instruction: String,
    #[serde(rename = "TargetLength")]
    pub target_length: TargetLength,
}

/// Samples `n` distinct questions and pairs each with a uniformly drawn target.
///
/// Duplicate questions are collapsed (first occurrence wins) before sampling.
/// Ids are `"0"..n-1` in output order. The result depends only on
/// `(questions, n, seed)`.
pub fn build_tlg<S: AsRef<str>>(questions: &[S], n: usize, seed: u64) -> Result<Vec<TlgEntry>> {
    if n == 0 {
        return Err(Error::EmptyRequest);
    }
    let mut seen = HashSet::new();
    let distinct: Vec<&str> = questions
        .iter()
        .map(|q| q.as_ref())
        .filter(|q| !q.trim().is_empty())
        .filter(|q| seen.insert(*q))
        .collect();
    if n > distinct.len() {
        return Err(Error::InsufficientSource {
            requested: n,
            available: distinct.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, distinct.len(), n);
    let entries = picked
        .into_iter()
        .enumerate()
        .map(|(id, idx)| TlgEntry {
            id: id.to_string(),
            instruction: distinct[idx].to_string(),
            target_length: TargetLength::ALL[rng.random_range(0..TargetLength::ALL.len())],
        })
        .collect();
    Ok(entries)
}

/// Appends the word-count constraint sentence after the question.
pub fn augment_instruction(instruction: &str, target: TargetLength) -> String {
    let amount = match target.center() {
        Some(words) => words.to_string(),
        None => "more than 800".to_string(),
    };
    format!("{instruction} The response should have a word count of {amount} words.")
}

pub fn save_tlg(entries: &[TlgEntry], path: impl AsRef<Path>) -> Result<()> {
    jsonl::write(path.as_ref(), entries)
}

#[derive(Deserialize)]
struct RawEntry {
    id: String,
    #[serde(rename = "Instruction")]
    instruction: String,
    #[serde(rename = "TargetLength")]
    target_length: String,
}

/// Loads a dataset file, rejecting unknown targets, empty instructions and
/// duplicate ids.
pub fn load_tlg(path: impl AsRef<Path>) -> Result<Vec<TlgEntry>> {
    let path = path.as_ref();
    let mut ids = HashSet::new();
    jsonl::read_with(path, |line, line_no| {
        let raw: RawEntry = serde_json::from_str(line)?;
        let target_length = raw.target_length.parse()?;
        if raw.instruction.trim().is_empty() {
            return Err(Error::malformed(path, line_no, "empty Instruction"));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(Error::malformed(path, line_no, format!("duplicate id {:?}", raw.id)));
        }
        Ok(TlgEntry {
            id: raw.id,
            instruction: raw.instruction,
            target_length,
        })
    })
}

/// Reads a question source file.
///
/// Each non-blank line is one question. Lines that look like JSON are decoded:
/// a JSON string is taken as-is, and an object contributes its first field
/// among `Instruction`, `instruction`, `question`, `input`, `prompt`.
pub fn read_questions(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let question = if trimmed.starts_with('{') || trimmed.starts_with('"') {
            let value: serde_json::Value =
                serde_json::from_str(trimmed).map_err(|e| Error::malformed(path, idx + 1, e))?;
            question_from_json(&value)
                .ok_or_else(|| Error::malformed(path, idx + 1, "no question field"))?
        } else {
            line.to_string()
        };
        out.push(question);
    }
    Ok(out)
}

fn question_from_json(value: &serde_json::Value) -> Option<String> {
    if let Some(s) = value.as_str() {
        return Some(s.to_string());
    }
    ["Instruction", "instruction", "question", "input", "prompt"]
        .iter()
        .find_map(|k| value.get(k).and_then(|v| v.as_str()))
        .map(str::to_string)
}
