//! Model client interface and the scripted mock used by tests and replay.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Which prompt template a model call was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageTag {
    AnalyzeInit,
    AnalyzeFollowup,
    Plan,
    PlanWithError,
    Generate,
    GenerateWithError,
    UpdateDsl,
    EditDsl,
    UpdateIntent,
    Summarize,
}

impl StageTag {
    pub const ALL: [StageTag; 10] = [
        StageTag::AnalyzeInit,
        StageTag::AnalyzeFollowup,
        StageTag::Plan,
        StageTag::PlanWithError,
        StageTag::Generate,
        StageTag::GenerateWithError,
        StageTag::UpdateDsl,
        StageTag::EditDsl,
        StageTag::UpdateIntent,
        StageTag::Summarize,
    ];
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transcript expected stage {expected}, but the agent asked for {got}")]
    StageMismatch { expected: StageTag, got: StageTag },
    #[error("transcript exhausted at stage {0}")]
    Exhausted(StageTag),
    #[error("invalid transcript: {0}")]
    BadTranscript(String),
    #[error("model transport failed: {0}")]
    Transport(String),
}

/// A chat-completion backend. One call per prompt; no streaming.
pub trait LlmClient: Send + Sync {
    fn complete(&self, stage: StageTag, prompt: &str) -> Result<String, LlmError>;
}

/// One scripted model turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: StageTag,
    /// Raw model text. Transcript files may give a JSON value instead of a
    /// string; it is serialized compactly.
    #[serde(deserialize_with = "text_or_json")]
    pub response: String,
}

fn text_or_json<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::String(s) => s,
        other => other.to_string(),
    })
}

/// Replays a fixed transcript in order, failing on a stage mismatch.
#[derive(Debug, Default)]
pub struct MockLlm {
    queue: Mutex<VecDeque<TranscriptEntry>>,
    prompts: Mutex<Vec<(StageTag, String)>>,
}

impl MockLlm {
    pub fn new(entries: Vec<TranscriptEntry>) -> MockLlm {
        MockLlm { queue: Mutex::new(entries.into()), prompts: Mutex::default() }
    }

    /// Parses a transcript file: a JSON array of `{stage, response}`.
    pub fn from_json(text: &str) -> Result<MockLlm, LlmError> {
        let entries: Vec<TranscriptEntry> =
            serde_json::from_str(text).map_err(|e| LlmError::BadTranscript(e.to_string()))?;
        Ok(MockLlm::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("mock queue").len()
    }

    /// Every prompt received so far, in order.
    pub fn prompts(&self) -> Vec<(StageTag, String)> {
        self.prompts.lock().expect("mock prompts").clone()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, stage: StageTag, prompt: &str) -> Result<String, LlmError> {
        self.prompts.lock().expect("mock prompts").push((stage, prompt.to_string()));
        let mut queue = self.queue.lock().expect("mock queue");
        let next = queue.front().ok_or(LlmError::Exhausted(stage))?;
        if next.stage != stage {
            return Err(LlmError::StageMismatch { expected: next.stage, got: stage });
        }
        Ok(queue.pop_front().expect("checked non-empty").response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_in_order_and_rejects_mismatch() {
        let mock = MockLlm::from_json(
            r#"[{"stage":"Plan","response":[{"function":"drop","description":"d"}]},
                {"stage":"Generate","response":"x"}]"#,
        )
        .unwrap();
        assert_eq!(mock.complete(StageTag::Plan, "p").unwrap(), r#"[{"function":"drop","description":"d"}]"#);
        assert_eq!(
            mock.complete(StageTag::Summarize, "p"),
            Err(LlmError::StageMismatch { expected: StageTag::Generate, got: StageTag::Summarize })
        );
        assert_eq!(mock.complete(StageTag::Generate, "q").unwrap(), "x");
        assert_eq!(mock.complete(StageTag::Generate, "q"), Err(LlmError::Exhausted(StageTag::Generate)));
        assert_eq!(mock.prompts().len(), 4);
    }
}
