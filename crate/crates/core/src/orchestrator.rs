//! Runs a backend over a dataset under the three generation protocols.
//!
//! * [`run_prompt_tlg`]: the target is stated in the prompt text.
//! * [`run_forced_mlt`]: the target's meta length token is appended after the
//!   assistant marker and the model continues from it.
//! * [`run_non_tlg`]: bare questions; the model is expected to open its reply
//!   with a token of its own choosing.
//!
//! Requests run with bounded parallelism but records always come back in
//! input order. Transport failures are retried, then recorded on the record
//! itself; they never abort a run.

use std::path::Path;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, GenerationRequest, RunLimits};
use crate::dataset::{augment_instruction, TlgEntry};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::length::{parse_leading_mlt, MetaLengthToken, TargetLength};
use crate::metrics::{word_count, ScoreReport, ScoredItem};
use crate::template::ChatTemplate;

/// Error code stored on records whose request never succeeded.
pub const BACKEND_FAILURE: &str = "BACKEND_FAILURE";

const MAX_BACKOFF: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    PromptTlg,
    ForcedMlt,
    NonTlg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub entry_id: String,
    pub target: Option<TargetLength>,
    pub mode: Mode,
    pub raw_text: String,
    pub parsed_mlt: Option<MetaLengthToken>,
    /// Generated text with EOS markers and any leading token removed.
    pub response_text: String,
    /// Word count of `response_text`.
    pub length: usize,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

impl GenerationRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

struct Job {
    entry_id: String,
    target: Option<TargetLength>,
    forced: Option<MetaLengthToken>,
    request: GenerationRequest,
}

async fn generate_with_retry<B: Backend + ?Sized>(
    backend: &B,
    request: &GenerationRequest,
    limits: RunLimits,
) -> Result<String> {
    let mut attempt = 0;
    loop {
        match backend.generate(request).await {
            Ok(text) => return Ok(text),
            Err(err) if attempt >= limits.retry_limit => return Err(err),
            Err(err) => {
                tracing::debug!(attempt, %err, "generation failed, retrying");
                let delay = limits.retry_backoff.saturating_mul(1 << attempt.min(16)).min(MAX_BACKOFF);
                tokio::time::sleep(delay).await;
                attempt += 1;
            }
        }
    }
}

async fn execute<B: Backend + ?Sized>(backend: &B, jobs: Vec<Job>) -> Vec<(Job, Result<String>)> {
    let limits = backend.limits();
    stream::iter(jobs)
        .map(|job| async move {
            let out = generate_with_retry(backend, &job.request, limits).await;
            (job, out)
        })
        .buffered(limits.max_parallel.max(1))
        .collect()
        .await
}

/// Removes every leading meta length token, returning the first one seen.
fn strip_leading_mlts(text: &str) -> (Option<MetaLengthToken>, &str) {
    let (first, mut rest) = parse_leading_mlt(text);
    while let (Some(_), next) = parse_leading_mlt(rest) {
        rest = next;
    }
    (first, rest.trim())
}

fn assemble(mode: Mode, template: &ChatTemplate, job: Job, outcome: Result<String>) -> GenerationRecord {
    match outcome {
        Ok(raw) => {
            let (leading, response) = strip_leading_mlts(template.strip_eos(&raw));
            let parsed_mlt = match mode {
                Mode::ForcedMlt => job.forced,
                Mode::NonTlg => leading,
                Mode::PromptTlg => None,
            };
            let target = match mode {
                Mode::NonTlg => parsed_mlt.map(|t| t.target()),
                _ => job.target,
            };
            GenerationRecord {
                entry_id: job.entry_id,
                target,
                mode,
                length: word_count(response),
                response_text: response.to_string(),
                raw_text: raw,
                parsed_mlt,
                error: None,
                error_detail: None,
            }
        }
        Err(err) => GenerationRecord {
            entry_id: job.entry_id,
            target: job.target,
            mode,
            raw_text: String::new(),
            parsed_mlt: job.forced,
            response_text: String::new(),
            length: 0,
            error: Some(BACKEND_FAILURE.to_string()),
            error_detail: Some(err.to_string()),
        },
    }
}

async fn run_jobs<B: Backend + ?Sized>(
    mode: Mode,
    backend: &B,
    template: &ChatTemplate,
    jobs: Vec<Job>,
) -> Vec<GenerationRecord> {
    execute(backend, jobs)
        .await
        .into_iter()
        .map(|(job, outcome)| assemble(mode, template, job, outcome))
        .collect()
}

/// Baseline protocol: the word-count sentence is appended to each question.
pub async fn run_prompt_tlg<B: Backend + ?Sized>(
    entries: &[TlgEntry],
    backend: &B,
    template: &ChatTemplate,
) -> Result<Vec<GenerationRecord>> {
    let jobs = entries
        .iter()
        .map(|e| {
            let instruction = augment_instruction(&e.instruction, e.target_length);
            Job {
                entry_id: e.id.clone(),
                target: Some(e.target_length),
                forced: None,
                request: GenerationRequest {
                    prompt: template.render(&instruction, ""),
                    instruction,
                    assistant_prefix: String::new(),
                },
            }
        })
        .collect();
    Ok(run_jobs(Mode::PromptTlg, backend, template, jobs).await)
}

/// Bare question, with the target's token placed right after the assistant marker.
pub async fn run_forced_mlt<B: Backend + ?Sized>(
    entries: &[TlgEntry],
    backend: &B,
    template: &ChatTemplate,
) -> Result<Vec<GenerationRecord>> {
    if !backend.supports_prefill() {
        return Err(Error::PrefillUnsupported);
    }
    let jobs = entries
        .iter()
        .map(|e| {
            let mlt = e.target_length.mlt();
            Job {
                entry_id: e.id.clone(),
                target: Some(e.target_length),
                forced: Some(mlt),
                request: GenerationRequest {
                    prompt: template.render(&e.instruction, mlt.surface()),
                    instruction: e.instruction.clone(),
                    assistant_prefix: mlt.surface().to_string(),
                },
            }
        })
        .collect();
    Ok(run_jobs(Mode::ForcedMlt, backend, template, jobs).await)
}

/// Bare questions with no target. Each record's target is the center of the
/// token the model produced, or `None` when it produced none.
pub async fn run_non_tlg<B: Backend + ?Sized, S: AsRef<str>>(
    questions: &[S],
    backend: &B,
    template: &ChatTemplate,
) -> Result<Vec<GenerationRecord>> {
    let jobs = questions
        .iter()
        .enumerate()
        .map(|(i, q)| Job {
            entry_id: i.to_string(),
            target: None,
            forced: None,
            request: GenerationRequest {
                prompt: template.render(q.as_ref(), ""),
                instruction: q.as_ref().to_string(),
                assistant_prefix: String::new(),
            },
        })
        .collect();
    Ok(run_jobs(Mode::NonTlg, backend, template, jobs).await)
}

/// Every question crossed with all nine targets, question-major, then run
/// with forced tokens. Entry ids are `"{question index}/{target}"`.
pub fn multi_mlt_entries<S: AsRef<str>>(questions: &[S]) -> Vec<TlgEntry> {
    questions
        .iter()
        .enumerate()
        .flat_map(|(i, q)| {
            TargetLength::ALL.into_iter().map(move |t| TlgEntry {
                id: format!("{i}/{t}"),
                instruction: q.as_ref().to_string(),
                target_length: t,
            })
        })
        .collect()
}

pub async fn run_multi_mlt<B: Backend + ?Sized, S: AsRef<str>>(
    questions: &[S],
    backend: &B,
    template: &ChatTemplate,
) -> Result<Vec<GenerationRecord>> {
    if questions.is_empty() {
        return Err(Error::EmptyRequest);
    }
    run_forced_mlt(&multi_mlt_entries(questions), backend, template).await
}

/// Scoring summary for a batch of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScores {
    pub report: ScoreReport,
    pub scored: usize,
    pub failed: usize,
    /// Records without error but also without a target (non-TLG replies that
    /// carried no token).
    pub unparsed: usize,
}

/// Scores records that succeeded and have a target; the rest are tallied.
pub fn score_records(records: &[GenerationRecord]) -> Result<RecordScores> {
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    let unparsed = records.iter().filter(|r| r.is_ok() && r.target.is_none()).count();
    let items: Vec<ScoredItem> = records
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| r.target.map(|t| ScoredItem::new(t, r.length)))
        .collect();
    let report = ScoreReport::from_items(&items)?;
    Ok(RecordScores {
        report,
        scored: items.len(),
        failed,
        unparsed,
    })
}

pub fn save_records(records: &[GenerationRecord], path: impl AsRef<Path>) -> Result<()> {
    jsonl::write(path.as_ref(), records)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<GenerationRecord>> {
    jsonl::read(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::builtin;
    use async_trait::async_trait;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    /// Backend driven by a closure over the request.
    struct FnBackend<F> {
        f: F,
        prefill: bool,
        limits: RunLimits,
    }

    #[async_trait]
    impl<F> Backend for FnBackend<F>
    where
        F: Fn(&GenerationRequest) -> Result<String> + Send + Sync,
    {
        fn supports_prefill(&self) -> bool {
            self.prefill
        }
        fn limits(&self) -> RunLimits {
            self.limits
        }
        async fn generate(&self, request: &GenerationRequest) -> Result<String> {
            (self.f)(request)
        }
    }

    fn backend<F>(f: F) -> FnBackend<F>
    where
        F: Fn(&GenerationRequest) -> Result<String> + Send + Sync,
    {
        FnBackend {
            f,
            prefill: true,
            limits: RunLimits::default(),
        }
    }

    fn entries(targets: &[TargetLength]) -> Vec<TlgEntry> {
        targets
            .iter()
            .enumerate()
            .map(|(i, &t)| TlgEntry {
                id: i.to_string(),
                instruction: format!("Question {i}"),
                target_length: t,
            })
            .collect()
    }

    #[tokio::test]
    async fn prompt_protocol_renders_constraint() {
        let seen = Mutex::new(Vec::new());
        let b = backend(|r| {
            seen.lock().unwrap().push(r.prompt.clone());
            Ok("one two three</s>".into())
        });
        let mistral = builtin("mistral").unwrap();
        let recs = run_prompt_tlg(&entries(&[TargetLength::Over800, TargetLength::T10]), &b, &mistral)
            .await
            .unwrap();
        let prompts = seen.into_inner().unwrap();
        assert_eq!(
            prompts[0],
            "<s>[INST] Question 0 The response should have a word count of more than 800 words. [/INST]"
        );
        assert_eq!(recs[1].response_text, "one two three");
        assert_eq!(recs[1].length, 3);
        assert_eq!(recs[1].raw_text, "one two three</s>");
        assert_eq!(recs[1].mode, Mode::PromptTlg);
        assert_eq!(recs[1].parsed_mlt, None);
    }

    #[tokio::test]
    async fn forced_protocol_appends_token_and_strips_echo() {
        let seen = Mutex::new(Vec::new());
        let b = backend(|r| {
            seen.lock().unwrap().push(r.prompt.clone());
            Ok(format!("{} alpha beta<|end_of_sentence|>", r.assistant_prefix))
        });
        let deepseek = builtin("deepseek").unwrap();
        let recs = run_forced_mlt(&entries(&[TargetLength::T50]), &b, &deepseek).await.unwrap();
        assert!(seen.into_inner().unwrap()[0].ends_with("Assistant:[MLT:50]"));
        assert_eq!(recs[0].parsed_mlt, Some(TargetLength::T50.mlt()));
        assert_eq!(recs[0].response_text, "alpha beta");
        assert_eq!(recs[0].length, 2);
        assert_eq!(parse_leading_mlt(&recs[0].response_text).0, None);
    }

    #[tokio::test]
    async fn forced_protocol_needs_prefill() {
        let mut b = backend(|_| Ok(String::new()));
        b.prefill = false;
        let t = builtin("yi").unwrap();
        let err = run_forced_mlt(&entries(&[TargetLength::T50]), &b, &t).await.unwrap_err();
        assert!(matches!(err, Error::PrefillUnsupported));
    }

    #[tokio::test]
    async fn non_tlg_parses_self_token() {
        let b = backend(|r| {
            if r.instruction.contains("first") {
                Ok("[MLT:150] a b c".into())
            } else {
                Ok("no token here".into())
            }
        });
        let t = builtin("qwen").unwrap();
        let recs = run_non_tlg(&["first q", "second q"], &b, &t).await.unwrap();
        assert_eq!(recs[0].parsed_mlt, Some(TargetLength::T150.mlt()));
        assert_eq!(recs[0].target, Some(TargetLength::T150));
        assert_eq!(recs[0].response_text, "a b c");
        assert_eq!(recs[1].parsed_mlt, None);
        assert_eq!(recs[1].target, None);
        assert_eq!(recs[1].length, 3);

        let scores = score_records(&recs).unwrap();
        assert_eq!(scores.scored, 1);
        assert_eq!(scores.unparsed, 1);
    }

    #[tokio::test]
    async fn repeated_tokens_are_fully_stripped() {
        let b = backend(|_| Ok("[MLT:30] [MLT:30]\nword".into()));
        let t = builtin("gemma").unwrap();
        let recs = run_non_tlg(&["q"], &b, &t).await.unwrap();
        assert_eq!(recs[0].response_text, "word");
        assert_eq!(recs[0].parsed_mlt, Some(TargetLength::T30.mlt()));
    }

    #[tokio::test]
    async fn multi_cross_product() {
        let b = backend(|_| Ok("x".into()));
        let t = builtin("llama3").unwrap();
        let recs = run_multi_mlt(&["only question"], &b, &t).await.unwrap();
        assert_eq!(recs.len(), 9);
        let targets: Vec<_> = recs.iter().map(|r| r.target.unwrap()).collect();
        assert_eq!(targets, TargetLength::ALL.to_vec());
        assert_eq!(recs[8].entry_id, "0/>800");
        let empty: [&str; 0] = [];
        assert!(run_multi_mlt(&empty, &b, &t).await.is_err());
    }

    #[tokio::test]
    async fn failures_are_recorded_and_retried() {
        let calls = AtomicUsize::new(0);
        let mut b = backend(|r| {
            calls.fetch_add(1, Ordering::SeqCst);
            if r.instruction.starts_with("Question 1") {
                Err(Error::Backend("connection refused".into()))
            } else {
                Ok("fine".into())
            }
        });
        b.limits.retry_limit = 2;
        let t = builtin("mistral").unwrap();
        let recs = run_prompt_tlg(&entries(&[TargetLength::T10, TargetLength::T30]), &b, &t)
            .await
            .unwrap();
        assert!(recs[0].is_ok());
        assert_eq!(recs[1].error.as_deref(), Some("BACKEND_FAILURE"));
        assert!(recs[1].error_detail.as_deref().unwrap().contains("connection refused"));
        // one call for the good record, 1 + 2 retries for the failing one
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[tokio::test]
    async fn transient_failure_recovers() {
        let calls = AtomicUsize::new(0);
        let mut b = backend(|_| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(Error::Backend("503".into()))
            } else {
                Ok("ok now".into())
            }
        });
        b.limits.retry_limit = 3;
        let t = builtin("mistral").unwrap();
        let recs = run_prompt_tlg(&entries(&[TargetLength::T10]), &b, &t).await.unwrap();
        assert!(recs[0].is_ok());
        assert_eq!(recs[0].length, 2);
    }

    #[tokio::test]
    async fn all_failed_cannot_be_scored() {
        let b = backend(|_| Err(Error::Backend("down".into())));
        let t = builtin("mistral").unwrap();
        let recs = run_prompt_tlg(&entries(&[TargetLength::T10; 5]), &b, &t).await.unwrap();
        assert!(recs.iter().all(|r| r.error.is_some()));
        assert!(matches!(score_records(&recs), Err(Error::EmptyEvaluation)));
    }

    struct SlowBackend {
        in_flight: AtomicUsize,
        peak: AtomicUsize,
        max_parallel: usize,
    }

    #[async_trait]
    impl Backend for SlowBackend {
        fn supports_prefill(&self) -> bool {
            true
        }
        fn limits(&self) -> RunLimits {
            RunLimits {
                max_parallel: self.max_parallel,
                ..RunLimits::default()
            }
        }
        async fn generate(&self, request: &GenerationRequest) -> Result<String> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            // later entries finish first
            let n: u64 = request.instruction[9..].split(' ').next().unwrap().parse().unwrap();
            tokio::time::sleep(Duration::from_millis(30 - n)).await;
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            Ok(format!("reply {n}"))
        }
    }

    #[tokio::test]
    async fn bounded_parallelism_keeps_order() {
        let b = SlowBackend {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            max_parallel: 3,
        };
        let t = builtin("mistral").unwrap();
        let recs = run_prompt_tlg(&entries(&[TargetLength::T10; 12]), &b, &t).await.unwrap();
        assert!(b.peak.load(Ordering::SeqCst) <= 3);
        assert!(b.peak.load(Ordering::SeqCst) >= 2);
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.entry_id, i.to_string());
            assert_eq!(r.response_text, format!("reply {i}"));
        }
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recs.jsonl");
        let recs = vec![GenerationRecord {
            entry_id: "0".into(),
            target: Some(TargetLength::Over800),
            mode: Mode::ForcedMlt,
            raw_text: "a b".into(),
            parsed_mlt: Some(TargetLength::Over800.mlt()),
            response_text: "a b".into(),
            length: 2,
            error: None,
            error_detail: None,
        }];
        save_records(&recs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"mode\":\"FORCED_MLT\""));
        assert!(text.contains("\"parsed_mlt\":\"[MLT:>800]\""));
        assert_eq!(load_records(&path).unwrap(), recs);
    }
}
