//! The model-facing pipeline: intent analysis, planning, synthesis with a
//! syntax-repair loop, step-based refinement and intent re-summarization.
//!
//! Every program the agent hands back has passed [`check_program`] against
//! the store it will run on.

pub mod llm;
pub mod prompts;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use llm::{LlmClient, LlmError, MockLlm, StageTag, TranscriptEntry};
pub use prompts::{assemble_prompt, sheet_information, PromptLibrary, Sections};

use crate::demo::{serialize_diff, TableDiff};
use crate::dsl::{
    check_program, parse_program_value, render_diagnostics, DslFunction, DslProgram, ProgramError,
    SyntaxDiagnostic,
};
use crate::explain::{explain_program, ExplainedStep};
use crate::table::VersionedStore;

pub const DEFAULT_MAX_REPAIRS: usize = 3;

/// Label shown for the trailing free-text choice.
pub const OTHER_LABEL: &str = "Other (please specify)";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("model output for {stage} could not be used: {reason}")]
    BadModelOutput { stage: StageTag, reason: String },
    #[error("synthesis failed after {repairs} repair round(s): {message}")]
    SynthesisFailed { repairs: usize, message: String, diagnostics: Vec<SyntaxDiagnostic> },
    #[error("prompt section {0:?} is missing")]
    TemplateHole(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarificationQuestion {
    pub summary: String,
    pub question: String,
    /// Always ends with `"other"`.
    pub choices: Vec<String>,
}

impl ClarificationQuestion {
    /// Builds a question, moving or appending the `"other"` choice to the end.
    pub fn new(summary: String, question: String, choices: Vec<String>) -> Result<Self, String> {
        let mut choices: Vec<String> = choices.into_iter().filter(|c| !c.eq_ignore_ascii_case("other")).collect();
        if choices.is_empty() {
            return Err("a question needs at least one choice besides \"other\"".into());
        }
        choices.push("other".into());
        Ok(ClarificationQuestion { summary, question, choices })
    }

    /// Choices as shown to the user.
    pub fn rendered_choices(&self) -> Vec<String> {
        let last = self.choices.len() - 1;
        self.choices
            .iter()
            .enumerate()
            .map(|(i, c)| if i == last { OTHER_LABEL.to_string() } else { c.clone() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSummary {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub function: DslFunction,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyzeOutcome {
    Question(ClarificationQuestion),
    Summary(IntentSummary),
}

/// How an edited step list was turned back into a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineRoute {
    Add,
    Edit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub program: DslProgram,
    /// Model calls made after the first one.
    pub repairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionState {
    pub chat_history: Vec<ChatMessage>,
    /// Index of the first chat message of the current round.
    pub round_start: usize,
    pub diff: TableDiff,
    pub summary: Option<IntentSummary>,
    pub plan: Option<Vec<PlanStep>>,
    pub program: Option<DslProgram>,
    pub steps: Option<Vec<ExplainedStep>>,
}

impl SessionState {
    pub fn new() -> SessionState {
        SessionState::default()
    }

    pub fn push_user(&mut self, text: impl Into<String>) {
        self.chat_history.push(ChatMessage { role: Role::User, text: text.into() });
    }

    pub fn push_assistant(&mut self, text: impl Into<String>) {
        self.chat_history.push(ChatMessage { role: Role::Assistant, text: text.into() });
    }

    /// Starts a fresh intent round: later analysis ignores earlier chat and
    /// demonstrations. The summary and program are kept for refinement.
    pub fn begin_round(&mut self) {
        self.round_start = self.chat_history.len();
        self.diff.clear_events();
        self.plan = None;
    }

    pub fn round(&self) -> &[ChatMessage] {
        &self.chat_history[self.round_start.min(self.chat_history.len())..]
    }

    /// Installs `program` and its explanation.
    pub fn set_program(&mut self, program: DslProgram) {
        self.steps = Some(explain_program(&program));
        self.program = Some(program);
    }

    fn user_instruction(&self) -> String {
        self.round()
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.clone())
            .unwrap_or_default()
    }
}

fn render_chat(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| {
            let who = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            format!("{who}: {}", m.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Pulls a JSON value out of model text, tolerating code fences and prose
/// around the payload.
pub fn extract_json(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    if let Some(start) = trimmed.find("```") {
        let body = &trimmed[start + 3..];
        let body = body.strip_prefix("json").unwrap_or(body);
        if let Some(end) = body.find("```") {
            if let Ok(v) = serde_json::from_str(body[..end].trim()) {
                return Some(v);
            }
        }
    }
    for (open, close) in [('[', ']'), ('{', '}')] {
        if let (Some(i), Some(j)) = (trimmed.find(open), trimmed.rfind(close)) {
            if i < j {
                if let Ok(v) = serde_json::from_str(&trimmed[i..=j]) {
                    return Some(v);
                }
            }
        }
    }
    None
}

enum Unusable {
    /// Worth one re-ask.
    Retry(String),
    Fatal(String),
}

fn str_field(obj: &Value, key: &str) -> Result<String, Unusable> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Unusable::Retry(format!("missing string field {key:?}")))
}

fn parse_analysis(text: &str) -> Result<AnalyzeOutcome, Unusable> {
    let value = extract_json(text).ok_or_else(|| Unusable::Retry("output is not JSON".into()))?;
    let obj = match value {
        Value::Array(mut items) if !items.is_empty() => items.swap_remove(0),
        v @ Value::Object(_) => v,
        _ => return Err(Unusable::Retry("expected a JSON object".into())),
    };
    match str_field(&obj, "type")?.as_str() {
        "finish" => {
            let summary = str_field(&obj, "summary")?;
            if summary.trim().is_empty() {
                return Err(Unusable::Retry("empty summary".into()));
            }
            Ok(AnalyzeOutcome::Summary(IntentSummary { text: summary }))
        }
        "question" => {
            let choices = obj
                .get("choices")
                .and_then(Value::as_array)
                .ok_or_else(|| Unusable::Retry("question without a choices list".into()))?
                .iter()
                .map(|c| c.as_str().map(str::to_string).unwrap_or_else(|| c.to_string()))
                .collect::<Vec<_>>();
            if !choices.iter().any(|c| c.eq_ignore_ascii_case("other")) {
                log::warn!("clarification question lacked an \"other\" choice; appending it");
            }
            let summary = obj.get("summary").and_then(Value::as_str).unwrap_or_default().to_string();
            ClarificationQuestion::new(summary, str_field(&obj, "question")?, choices)
                .map(AnalyzeOutcome::Question)
                .map_err(Unusable::Retry)
        }
        other => Err(Unusable::Retry(format!("unknown output type {other:?}"))),
    }
}

fn parse_plan(text: &str) -> Result<Vec<PlanStep>, Unusable> {
    let value = extract_json(text).ok_or_else(|| Unusable::Retry("output is not JSON".into()))?;
    let items = match value {
        Value::Array(items) => items,
        v @ Value::Object(_) => vec![v],
        _ => return Err(Unusable::Retry("expected a JSON list of steps".into())),
    };
    if items.is_empty() {
        return Err(Unusable::Retry("the plan is empty".into()));
    }
    items
        .iter()
        .map(|item| {
            let name = str_field(item, "function")?;
            let function = DslFunction::from_name(&name)
                .ok_or_else(|| Unusable::Fatal(format!("plan uses unknown function {name:?}")))?;
            Ok(PlanStep { function, description: str_field(item, "description")? })
        })
        .collect()
}

fn parse_intent(text: &str) -> Result<IntentSummary, Unusable> {
    let from_json = extract_json(text).and_then(|v| match v {
        Value::String(s) => Some(s),
        Value::Object(_) => v.get("summary").and_then(Value::as_str).map(str::to_string),
        _ => None,
    });
    let text = from_json.unwrap_or_else(|| text.trim().to_string());
    if text.trim().is_empty() {
        return Err(Unusable::Retry("empty intent summary".into()));
    }
    Ok(IntentSummary { text })
}

/// Why a synthesized document was rejected, as model-facing text plus the
/// structured diagnostics when there are any.
fn program_problems(
    text: &str,
    previous_tables: Option<&[String]>,
    store: &VersionedStore,
) -> Result<DslProgram, (String, Vec<SyntaxDiagnostic>)> {
    let value = extract_json(text).ok_or_else(|| ("output is not a JSON program document".to_string(), vec![]))?;
    let value = match (value, previous_tables) {
        (Value::Array(calls), Some(tables)) => serde_json::json!({ "required_tables": tables, "program": calls }),
        (v, _) => v,
    };
    let program = parse_program_value(&value).map_err(|e| match e {
        ProgramError::Diagnostics(ds) => (render_diagnostics(&ds), ds),
        ProgramError::Malformed(m) => (format!("malformed program document: {m}"), vec![]),
    })?;
    let ds = check_program(&program, store);
    if ds.is_empty() {
        Ok(program)
    } else {
        Err((render_diagnostics(&ds), ds))
    }
}

fn plan_json(plan: &[PlanStep]) -> String {
    serde_json::to_string(plan).expect("plan serializes")
}

fn calls_json(program: &DslProgram) -> String {
    program.to_json()["program"].to_string()
}

fn section(name: &str, value: impl Into<String>) -> (String, String) {
    (name.to_string(), value.into())
}

pub struct Agent {
    llm: Arc<dyn LlmClient>,
    prompts: PromptLibrary,
    max_repairs: usize,
}

impl Agent {
    pub fn new(llm: Arc<dyn LlmClient>) -> Agent {
        Agent { llm, prompts: PromptLibrary::default(), max_repairs: DEFAULT_MAX_REPAIRS }
    }

    pub fn with_prompts(mut self, prompts: PromptLibrary) -> Agent {
        self.prompts = prompts;
        self
    }

    pub fn with_max_repairs(mut self, max_repairs: usize) -> Agent {
        self.max_repairs = max_repairs;
        self
    }

    pub fn max_repairs(&self) -> usize {
        self.max_repairs
    }

    pub fn prompts(&self) -> &PromptLibrary {
        &self.prompts
    }

    fn call(&self, stage: StageTag, sections: &Sections) -> Result<String, AgentError> {
        let prompt = self.prompts.assemble(stage, sections)?;
        log::debug!("model call {stage}, {} prompt bytes", prompt.len());
        Ok(self.llm.complete(stage, &prompt)?)
    }

    /// Calls the model and parses its answer, re-asking once with the
    /// parse failure appended when the output is unusable.
    fn call_parsed<T>(
        &self,
        stage: StageTag,
        sections: &Sections,
        parse: impl Fn(&str) -> Result<T, Unusable>,
    ) -> Result<T, AgentError> {
        let prompt = self.prompts.assemble(stage, sections)?;
        let first = self.llm.complete(stage, &prompt)?;
        let reason = match parse(&first) {
            Ok(v) => return Ok(v),
            Err(Unusable::Fatal(reason)) => return Err(AgentError::BadModelOutput { stage, reason }),
            Err(Unusable::Retry(reason)) => reason,
        };
        log::info!("re-asking {stage}: {reason}");
        let retry = format!(
            "{prompt}\nYour previous output could not be used ({reason}). Answer again following the OUTPUT format exactly.\n"
        );
        let second = self.llm.complete(stage, &retry)?;
        parse(&second).map_err(|u| match u {
            Unusable::Retry(reason) | Unusable::Fatal(reason) => AgentError::BadModelOutput { stage, reason },
        })
    }

    /// Asks a clarification question or settles on an intent summary.
    pub fn analyze(&self, state: &mut SessionState, sheet_info: &str) -> Result<AnalyzeOutcome, AgentError> {
        let instruction = state.user_instruction();
        if state.diff.is_empty() && instruction.is_empty() {
            return Err(AgentError::Precondition("analysis needs a demonstration or a user message".into()));
        }
        let round = state.round();
        let followup = round.len() > 1;
        let mut sections: Sections = [
            section(prompts::SHEET_INFORMATION, sheet_info),
            section(prompts::TABLE_DIFF, serialize_diff(&state.diff)),
            section(prompts::USER_INSTRUCTION, instruction),
        ]
        .into();
        let stage = if followup {
            sections.extend([section(prompts::CHAT_HISTORY, render_chat(round))]);
            StageTag::AnalyzeFollowup
        } else {
            StageTag::AnalyzeInit
        };
        let outcome = self.call_parsed(stage, &sections, parse_analysis)?;
        match &outcome {
            AnalyzeOutcome::Question(q) => state.push_assistant(q.question.clone()),
            AnalyzeOutcome::Summary(s) => {
                state.push_assistant(s.text.clone());
                state.summary = Some(s.clone());
            }
        }
        Ok(outcome)
    }

    /// A step-by-step plan for `summary`; `prior` carries the previous plan
    /// and the error it led to.
    pub fn plan(
        &self,
        summary: &IntentSummary,
        sheet_info: &str,
        prior: Option<(&[PlanStep], &str)>,
    ) -> Result<Vec<PlanStep>, AgentError> {
        let mut sections: Sections =
            [section(prompts::SHEET_INFORMATION, sheet_info), section(prompts::USER_INTENT, summary.text.clone())]
                .into();
        let stage = match prior {
            Some((last, error)) => {
                sections.extend([section(prompts::LAST_PLAN, plan_json(last)), section(prompts::ERROR_MESSAGE, error)]);
                StageTag::PlanWithError
            }
            None => StageTag::Plan,
        };
        self.call_parsed(stage, &sections, parse_plan)
    }

    /// Generate, check and repair until the program is clean or the repair
    /// budget runs out.
    pub fn synthesize(
        &self,
        plan: &[PlanStep],
        sheet_info: &str,
        store: &VersionedStore,
    ) -> Result<Synthesis, AgentError> {
        if plan.is_empty() {
            return Err(AgentError::Precondition("cannot synthesize from an empty plan".into()));
        }
        let base: Sections =
            [section(prompts::SHEET_INFORMATION, sheet_info), section(prompts::PLAN, plan_json(plan))].into();
        self.repair_loop(store, None, |error| match error {
            None => (StageTag::Generate, base.clone()),
            Some(e) => {
                let mut s = base.clone();
                s.extend([section(prompts::ERROR_MESSAGE, e)]);
                (StageTag::GenerateWithError, s)
            }
        })
    }

    fn repair_loop(
        &self,
        store: &VersionedStore,
        previous_tables: Option<&[String]>,
        prompt_for: impl Fn(Option<&str>) -> (StageTag, Sections),
    ) -> Result<Synthesis, AgentError> {
        let mut last: Option<(String, Vec<SyntaxDiagnostic>)> = None;
        for attempt in 0..=self.max_repairs {
            let (stage, sections) = prompt_for(last.as_ref().map(|(m, _)| m.as_str()));
            let text = self.call(stage, &sections)?;
            match program_problems(&text, previous_tables, store) {
                Ok(program) => return Ok(Synthesis { program, repairs: attempt }),
                Err(problem) => {
                    log::info!("synthesis attempt {attempt} rejected: {}", problem.0);
                    last = Some(problem);
                }
            }
        }
        let (message, diagnostics) = last.expect("at least one attempt");
        Err(AgentError::SynthesisFailed { repairs: self.max_repairs, message, diagnostics })
    }

    fn refine(
        &self,
        state: &mut SessionState,
        store: &VersionedStore,
        stage: StageTag,
        instruction: String,
    ) -> Result<DslProgram, AgentError> {
        let previous = state
            .program
            .clone()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| AgentError::Precondition("there is no program to refine".into()))?;
        let base: Sections =
            [section(prompts::PREVIOUS_DSL, calls_json(&previous)), section(prompts::NEW_INSTRUCTION, instruction)]
                .into();
        let synthesis = self.repair_loop(store, Some(&previous.required_tables), |error| {
            let mut s = base.clone();
            if let Some(e) = error {
                s.extend([section(prompts::ERROR_MESSAGE, e)]);
            }
            (stage, s)
        })?;
        state.set_program(synthesis.program.clone());
        self.resummarize(state)?;
        Ok(synthesis.program)
    }

    /// Extends the program with one newly described step.
    pub fn refine_add(
        &self,
        state: &mut SessionState,
        store: &VersionedStore,
        new_step_text: &str,
    ) -> Result<DslProgram, AgentError> {
        self.refine(state, store, StageTag::UpdateDsl, new_step_text.to_string())
    }

    /// Regenerates the program from a user-edited step list.
    pub fn refine_edit(
        &self,
        state: &mut SessionState,
        store: &VersionedStore,
        edited_steps: &[ExplainedStep],
    ) -> Result<DslProgram, AgentError> {
        let current: Vec<&str> = state.steps.iter().flatten().map(|s| s.text.as_str()).collect();
        let edited: Vec<&str> = edited_steps.iter().map(|s| s.text.as_str()).collect();
        if current == edited {
            return Err(AgentError::Precondition("the steps were not changed".into()));
        }
        let listing = edited_steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s.text))
            .collect::<Vec<_>>()
            .join("\n");
        self.refine(state, store, StageTag::EditDsl, listing)
    }

    /// Routes a new step list: a pure append of steps keeps every existing
    /// text and goes through `refine_add`; anything else is an edit.
    pub fn update_steps(
        &self,
        state: &mut SessionState,
        store: &VersionedStore,
        texts: &[String],
    ) -> Result<(DslProgram, RefineRoute), AgentError> {
        let current: Vec<String> = state.steps.iter().flatten().map(|s| s.text.clone()).collect();
        if texts.len() > current.len() && texts[..current.len()] == current[..] {
            let added = texts[current.len()..].join("\n");
            return Ok((self.refine_add(state, store, &added)?, RefineRoute::Add));
        }
        let edited: Vec<ExplainedStep> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ExplainedStep { index: i + 1, text: t.clone(), call_ref: i })
            .collect();
        Ok((self.refine_edit(state, store, &edited)?, RefineRoute::Edit))
    }

    /// Replaces the stored intent summary with one derived from the program.
    pub fn resummarize(&self, state: &mut SessionState) -> Result<IntentSummary, AgentError> {
        let program = state
            .program
            .as_ref()
            .ok_or_else(|| AgentError::Precondition("there is no program to summarize".into()))?;
        let mut sections: Sections = [section(prompts::NEW_DSL, calls_json(program))].into();
        if let Some(prev) = &state.summary {
            sections.extend([section(prompts::PREVIOUS_INTENT, prev.text.clone())]);
        }
        let summary = self.call_parsed(StageTag::UpdateIntent, &sections, parse_intent)?;
        state.summary = Some(summary.clone());
        Ok(summary)
    }

    /// Free-text model description of `program`, returned verbatim.
    pub fn summarize_nl(&self, program: &DslProgram) -> Result<String, AgentError> {
        let sections: Sections = [section(prompts::DSL_SCRIPT, calls_json(program))].into();
        self.call(StageTag::Summarize, &sections)
    }

    /// Plans and synthesizes from the stored summary, installing the plan,
    /// program and steps in `state`.
    pub fn build_program(
        &self,
        state: &mut SessionState,
        sheet_info: &str,
        store: &VersionedStore,
    ) -> Result<Synthesis, AgentError> {
        let summary =
            state.summary.clone().ok_or_else(|| AgentError::Precondition("no intent summary yet".into()))?;
        let plan = self.plan(&summary, sheet_info, None)?;
        state.plan = Some(plan.clone());
        let synthesis = self.synthesize(&plan, sheet_info, store)?;
        state.set_program(synthesis.program.clone());
        Ok(synthesis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Table;

    fn agent(entries: serde_json::Value) -> (Agent, Arc<MockLlm>) {
        let mock = Arc::new(MockLlm::from_json(&entries.to_string()).unwrap());
        (Agent::new(mock.clone()), mock)
    }

    fn store() -> VersionedStore {
        let mut s = VersionedStore::new();
        s.store_version("people", Table::from_strs("people.csv", &["Name", "Gender"], &[&["a", "F"], &["b", "M"]]).unwrap());
        s
    }

    #[test]
    fn analyze_finish_stores_summary() {
        let (a, _) = agent(serde_json::json!([{"stage":"AnalyzeInit","response":{"type":"finish","summary":"Drop Gender and reorder"}}]));
        let mut st = SessionState::new();
        st.push_user("remove gender");
        let out = a.analyze(&mut st, "info").unwrap();
        assert_eq!(out, AnalyzeOutcome::Summary(IntentSummary { text: "Drop Gender and reorder".into() }));
        assert_eq!(st.summary.unwrap().text, "Drop Gender and reorder");
    }

    #[test]
    fn question_repairs_other_and_followup_carries_chat() {
        let (a, mock) = agent(serde_json::json!([
            {"stage":"AnalyzeInit","response":[{"type":"question","summary":"s","question":"Drop it?","choices":["Yes","No"]}]},
            {"stage":"AnalyzeFollowup","response":{"type":"finish","summary":"Drop it"}}
        ]));
        let mut st = SessionState::new();
        st.push_user("clean");
        let AnalyzeOutcome::Question(q) = a.analyze(&mut st, "info").unwrap() else { panic!() };
        assert_eq!(q.choices, vec!["Yes", "No", "other"]);
        assert_eq!(q.rendered_choices().last().unwrap(), OTHER_LABEL);
        st.push_user("Yes");
        a.analyze(&mut st, "info").unwrap();
        let prompts = mock.prompts();
        assert!(prompts[1].1.contains("- Chat History:\nuser: clean\nassistant: Drop it?\nuser: Yes"));
    }

    #[test]
    fn unparseable_output_is_reasked_once() {
        let (a, mock) = agent(serde_json::json!([
            {"stage":"AnalyzeInit","response":"nope"},
            {"stage":"AnalyzeInit","response":"still nope"}
        ]));
        let mut st = SessionState::new();
        st.push_user("x");
        assert!(matches!(a.analyze(&mut st, "i"), Err(AgentError::BadModelOutput { .. })));
        assert_eq!(mock.remaining(), 0);
    }

    #[test]
    fn plan_rejects_unknown_function() {
        let (a, _) = agent(serde_json::json!([{"stage":"Plan","response":[{"function":"sort_rows","description":"d"}]}]));
        let s = IntentSummary { text: "t".into() };
        assert!(matches!(a.plan(&s, "i", None), Err(AgentError::BadModelOutput { .. })));
    }

    #[test]
    fn one_repair_round_sends_diagnostic() {
        let (a, mock) = agent(serde_json::json!([
            {"stage":"Generate","response":{"required_tables":["people.csv"],"program":[{"function":"drop","table":"people.csv","axis":1}]}},
            {"stage":"GenerateWithError","response":{"required_tables":["people.csv"],"program":[{"function":"drop","table":"people.csv","label":"Gender","axis":1}]}}
        ]));
        let plan = [PlanStep { function: DslFunction::Drop, description: "d".into() }];
        let s = a.synthesize(&plan, "i", &store()).unwrap();
        assert_eq!(s.repairs, 1);
        assert!(mock.prompts()[1].1.contains("step 0: BadArity"));
    }

    #[test]
    fn repairs_are_bounded() {
        let garbage: Vec<_> = std::iter::once(serde_json::json!({"stage":"Generate","response":"garbage"}))
            .chain((0..3).map(|_| serde_json::json!({"stage":"GenerateWithError","response":"garbage"})))
            .collect();
        let (a, mock) = agent(serde_json::Value::Array(garbage));
        let plan = [PlanStep { function: DslFunction::Drop, description: "d".into() }];
        assert!(matches!(a.synthesize(&plan, "i", &store()), Err(AgentError::SynthesisFailed { .. })));
        assert_eq!(mock.remaining(), 0);
    }

    #[test]
    fn refine_needs_a_program_and_a_change() {
        let (a, _) = agent(serde_json::json!([]));
        let mut st = SessionState::new();
        assert!(matches!(a.refine_add(&mut st, &store(), "x"), Err(AgentError::Precondition(_))));
        let p = crate::dsl::parse_program(
            r#"{"required_tables":["people.csv"],"program":[{"function":"transpose","table":"people.csv"}]}"#,
        )
        .unwrap();
        st.set_program(p);
        let steps = st.steps.clone().unwrap();
        assert!(matches!(a.refine_edit(&mut st, &store(), &steps), Err(AgentError::Precondition(_))));
    }

    #[test]
    fn bare_list_refinement_keeps_tables_and_resummarizes() {
        let (a, _) = agent(serde_json::json!([
            {"stage":"UpdateDsl","response":[{"function":"transpose","table":"people.csv"},{"function":"rearrange","table":"people.csv","by_values":"Name","by_array":null,"axis":0}]},
            {"stage":"UpdateIntent","response":"Transpose and sort"}
        ]));
        let mut st = SessionState::new();
        st.set_program(
            crate::dsl::parse_program(
                r#"{"required_tables":["people.csv"],"program":[{"function":"transpose","table":"people.csv"}]}"#,
            )
            .unwrap(),
        );
        let mut texts: Vec<String> = st.steps.clone().unwrap().into_iter().map(|s| s.text).collect();
        texts.push("Sort the table alphabetically by the values in the column Name".into());
        let (p, route) = a.update_steps(&mut st, &store(), &texts).unwrap();
        assert_eq!(route, RefineRoute::Add);
        assert_eq!(p.required_tables, vec!["people.csv"]);
        assert_eq!(p.calls[1].function, DslFunction::Rearrange);
        assert_eq!(st.summary.unwrap().text, "Transpose and sort");
        assert_eq!(st.steps.unwrap().len(), 2);
    }

    #[test]
    fn extract_json_handles_fences() {
        assert_eq!(extract_json("```json\n[1]\n```"), Some(serde_json::json!([1])));
        assert_eq!(extract_json("Here: {\"a\":1} done"), Some(serde_json::json!({"a":1})));
        assert_eq!(extract_json("none"), None);
    }
}
