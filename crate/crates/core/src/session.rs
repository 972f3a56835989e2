//! One user's working session: uploaded tables, demonstrations, chat,
//! scripts and their runs. The HTTP service and the CLI replay both drive
//! this type.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::{
    sheet_information, Agent, AgentError, AnalyzeOutcome, ClarificationQuestion, RefineRoute, SessionState,
    OTHER_LABEL,
};
use crate::demo::{DemoError, DemoEvent};
use crate::dsl::{check_program, render_diagnostics, DslProgram, SyntaxDiagnostic};
use crate::explain::{explain_program, ExplainedStep};
use crate::interp::{run_program, ExecError, ScalarEnv};
use crate::provenance::ProvenanceGraph;
use crate::table::{emit_csv, ingest_csv, IngestError, VersionedStore};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{message}")]
    Conflict { message: String, diagnostics: Vec<SyntaxDiagnostic> },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("{0}")]
    Io(String),
}

impl SessionError {
    fn conflict(message: impl Into<String>) -> SessionError {
        SessionError::Conflict { message: message.into(), diagnostics: vec![] }
    }

    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "not_found",
            SessionError::BadRequest(_) | SessionError::Demo(_) => "bad_request",
            SessionError::Ingest(_) => "bad_csv",
            SessionError::Conflict { diagnostics, .. } if !diagnostics.is_empty() => "check_failed",
            SessionError::Conflict { .. } => "conflict",
            SessionError::Agent(AgentError::SynthesisFailed { .. }) => "synthesis_failed",
            SessionError::Agent(AgentError::Precondition(_)) => "conflict",
            SessionError::Agent(_) => "model_error",
            SessionError::Exec(_) => "execution_failed",
            SessionError::Io(_) => "internal",
        }
    }

    /// HTTP status for this error.
    pub fn status(&self) -> u16 {
        match self {
            SessionError::NotFound(_) => 404,
            SessionError::BadRequest(_) | SessionError::Demo(_) | SessionError::Ingest(_) => 400,
            SessionError::Conflict { .. } | SessionError::Exec(_) => 409,
            SessionError::Agent(AgentError::SynthesisFailed { .. } | AgentError::Precondition(_)) => 409,
            SessionError::Agent(_) | SessionError::Io(_) => 500,
        }
    }

    pub fn diagnostics(&self) -> &[SyntaxDiagnostic] {
        match self {
            SessionError::Conflict { diagnostics, .. } => diagnostics,
            SessionError::Agent(AgentError::SynthesisFailed { diagnostics, .. }) => diagnostics,
            _ => &[],
        }
    }

    /// `{code, message, diagnostics?}`.
    pub fn body(&self) -> Value {
        let mut body = json!({ "code": self.code(), "message": self.to_string() });
        if !self.diagnostics().is_empty() {
            body["diagnostics"] = serde_json::to_value(self.diagnostics()).expect("diagnostics serialize");
        }
        body
    }
}

/// What the chat endpoints return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChatReply {
    Question { question: String, choices: Vec<String> },
    Steps { script_id: u64, steps: Vec<ExplainedStep> },
    Summary { text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub id: u64,
    pub program: DslProgram,
    pub steps: Vec<ExplainedStep>,
    pub saved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Versions written, in execution order.
    pub outputs: Vec<String>,
    pub scalars: ScalarEnv,
}

pub struct Session {
    agent: Arc<Agent>,
    pub state: SessionState,
    pub store: VersionedStore,
    pub graph: ProvenanceGraph,
    scripts: BTreeMap<u64, Script>,
    next_script: u64,
    recording: bool,
    pending: Option<ClarificationQuestion>,
}

fn base_from_filename(filename: &str) -> Result<String, SessionError> {
    let file = Path::new(filename).file_name().and_then(|f| f.to_str()).unwrap_or(filename);
    let stem = file.strip_suffix(".csv").unwrap_or(file);
    if stem.is_empty() || !stem.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
        return Err(SessionError::BadRequest(format!("unusable table file name {filename:?}")));
    }
    Ok(stem.to_string())
}

impl Session {
    pub fn new(agent: Arc<Agent>) -> Session {
        Session {
            agent,
            state: SessionState::new(),
            store: VersionedStore::new(),
            graph: ProvenanceGraph::new(),
            scripts: BTreeMap::new(),
            next_script: 1,
            recording: false,
            pending: None,
        }
    }

    /// Stores an uploaded CSV as version 0 of a new base.
    pub fn upload_csv(&mut self, filename: &str, bytes: &[u8]) -> Result<String, SessionError> {
        let base = base_from_filename(filename)?;
        if self.store.contains_base(&base) {
            return Err(SessionError::conflict(format!("a table named {base} already exists")));
        }
        let table = ingest_csv(bytes, &format!("{base}.csv"))?;
        let name = self.store.store_version(&base, table).rendered();
        self.graph.add_node(name.clone());
        self.state.diff.register_table(self.store.fetch(&name).expect("just stored"));
        Ok(name)
    }

    pub fn table_csv(&self, rendered: &str) -> Result<Vec<u8>, SessionError> {
        self.store
            .fetch(rendered)
            .map(emit_csv)
            .ok_or_else(|| SessionError::NotFound(format!("table {rendered}")))
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn recording(&self) -> bool {
        self.recording
    }

    /// Logs a demonstration event; returns the merged diff length.
    pub fn demo_event(&mut self, event: DemoEvent) -> Result<usize, SessionError> {
        if !self.recording {
            return Err(SessionError::conflict("demonstration recording is off"));
        }
        if !self.state.diff.has_table(&event.table) {
            if let Some(t) = self.store.fetch(&event.table) {
                self.state.diff.register_table(t);
            }
        }
        self.state.diff.log_event(event)?;
        Ok(self.state.diff.events().len())
    }

    pub fn sheet_info(&self) -> String {
        sheet_information(self.store.latest_tables())
    }

    pub fn pending_question(&self) -> Option<&ClarificationQuestion> {
        self.pending.as_ref()
    }

    /// A user chat message. Empty text asks about the demonstration alone.
    pub fn chat(&mut self, text: &str) -> Result<ChatReply, SessionError> {
        self.pending = None;
        if !text.trim().is_empty() {
            self.state.push_user(text);
        }
        self.advance()
    }

    /// Answers the pending clarification question with one of its choices
    /// or with free text for the "other" option.
    pub fn answer(&mut self, choice: Option<&str>, other_text: Option<&str>) -> Result<ChatReply, SessionError> {
        let q = self.pending.as_ref().ok_or_else(|| SessionError::conflict("no clarification question is pending"))?;
        let text = match (other_text.filter(|t| !t.trim().is_empty()), choice) {
            (Some(t), _) => t.to_string(),
            (None, Some(c)) if c == "other" || c == OTHER_LABEL => {
                return Err(SessionError::BadRequest("the other choice needs other_text".into()));
            }
            (None, Some(c)) if q.choices.iter().any(|x| x == c) => c.to_string(),
            (None, Some(c)) => return Err(SessionError::BadRequest(format!("{c:?} is not one of the choices"))),
            (None, None) => return Err(SessionError::BadRequest("an answer needs choice or other_text".into())),
        };
        self.pending = None;
        self.state.push_user(text);
        self.advance()
    }

    fn advance(&mut self) -> Result<ChatReply, SessionError> {
        let sheet = self.sheet_info();
        match self.agent.analyze(&mut self.state, &sheet)? {
            AnalyzeOutcome::Question(q) => {
                let reply = ChatReply::Question { question: q.question.clone(), choices: q.rendered_choices() };
                self.pending = Some(q);
                Ok(reply)
            }
            AnalyzeOutcome::Summary(s) if self.store.is_empty() => Ok(ChatReply::Summary { text: s.text }),
            AnalyzeOutcome::Summary(_) => {
                let synthesis = self.agent.build_program(&mut self.state, &sheet, &self.store)?;
                let id = self.add_script(synthesis.program);
                self.state.begin_round();
                Ok(ChatReply::Steps { script_id: id, steps: self.scripts[&id].steps.clone() })
            }
        }
    }

    fn add_script(&mut self, program: DslProgram) -> u64 {
        let id = self.next_script;
        self.next_script += 1;
        let steps = explain_program(&program);
        self.scripts.insert(id, Script { id, program, steps, saved: false });
        id
    }

    pub fn script(&self, id: u64) -> Result<&Script, SessionError> {
        self.scripts.get(&id).ok_or_else(|| SessionError::NotFound(format!("script {id}")))
    }

    pub fn scripts(&self) -> impl Iterator<Item = &Script> {
        self.scripts.values()
    }

    pub fn last_script_id(&self) -> Option<u64> {
        self.scripts.keys().next_back().copied()
    }

    fn focus(&mut self, id: u64) -> Result<(), SessionError> {
        let script = self.script(id)?.clone();
        self.state.program = Some(script.program);
        self.state.steps = Some(script.steps);
        Ok(())
    }

    fn absorb(&mut self, id: u64) -> Vec<ExplainedStep> {
        let script = self.scripts.get_mut(&id).expect("focused script exists");
        script.program = self.state.program.clone().unwrap_or_default();
        script.steps = self.state.steps.clone().unwrap_or_default();
        script.steps.clone()
    }

    /// Replaces a script's step list, refining the program to match.
    pub fn update_steps(&mut self, id: u64, texts: &[String]) -> Result<(Vec<ExplainedStep>, RefineRoute), SessionError> {
        if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
            return Err(SessionError::BadRequest("a script needs at least one non-empty step".into()));
        }
        self.focus(id)?;
        let (_, route) = self.agent.update_steps(&mut self.state, &self.store, texts)?;
        Ok((self.absorb(id), route))
    }

    /// Re-plans and re-synthesizes a script from the current intent summary.
    pub fn regenerate(&mut self, id: u64) -> Result<Vec<ExplainedStep>, SessionError> {
        self.focus(id)?;
        let sheet = self.sheet_info();
        self.agent.build_program(&mut self.state, &sheet, &self.store)?;
        Ok(self.absorb(id))
    }

    pub fn save(&mut self, id: u64) -> Result<(), SessionError> {
        self.scripts.get_mut(&id).ok_or_else(|| SessionError::NotFound(format!("script {id}")))?.saved = true;
        Ok(())
    }

    pub fn remove(&mut self, id: u64) -> Result<(), SessionError> {
        self.scripts.remove(&id).map(|_| ()).ok_or_else(|| SessionError::NotFound(format!("script {id}")))
    }

    /// Executes a script over the latest versions and records provenance.
    /// The program is re-checked first since the store may have moved on.
    pub fn run(&mut self, id: u64) -> Result<RunReport, SessionError> {
        let program = self.script(id)?.program.clone();
        let diagnostics = check_program(&program, &self.store);
        if !diagnostics.is_empty() {
            return Err(SessionError::Conflict { message: render_diagnostics(&diagnostics), diagnostics });
        }
        match run_program(&program, &mut self.store) {
            Ok((effects, scalars)) => {
                self.graph.record_effects(&effects);
                let outputs = effects.iter().filter(|e| !e.skipped).flat_map(|e| e.outputs.clone()).collect();
                Ok(RunReport { outputs, scalars })
            }
            Err(e) => {
                self.graph.record_effects(&e.completed);
                Err(e.into())
            }
        }
    }

    pub fn provenance(&self) -> Value {
        self.graph.to_json()
    }

    /// JSON image of the session for shutdown snapshots.
    pub fn snapshot(&self) -> Value {
        json!({
            "store": self.store,
            "graph": self.graph,
            "chat_history": self.state.chat_history,
            "scripts": self.scripts.values().map(|s| json!({
                "id": s.id,
                "saved": s.saved,
                "program": s.program.to_json(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// One scripted user action for headless replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SessionAction {
    Upload { file: String },
    Record { on: bool },
    Event { event: DemoEvent },
    Chat { text: String },
    Answer {
        #[serde(default)]
        choice: Option<String>,
        #[serde(default)]
        other_text: Option<String>,
    },
    /// Replaces the 1-based step `step` of a script.
    EditStep {
        #[serde(default)]
        script: Option<u64>,
        step: usize,
        text: String,
    },
    AddStep {
        #[serde(default)]
        script: Option<u64>,
        text: String,
    },
    DeleteStep {
        #[serde(default)]
        script: Option<u64>,
        step: usize,
    },
    Run {
        #[serde(default)]
        script: Option<u64>,
    },
    Save {
        #[serde(default)]
        script: Option<u64>,
    },
    Regenerate {
        #[serde(default)]
        script: Option<u64>,
    },
}

/// A replay fixture: actions plus the table whose final version is compared
/// to the golden CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub actions: Vec<SessionAction>,
    /// Base name whose latest version is the replay result.
    pub final_table: String,
}

impl Session {
    fn target(&self, script: Option<u64>) -> Result<u64, SessionError> {
        script
            .or_else(|| self.last_script_id())
            .ok_or_else(|| SessionError::conflict("no script has been generated yet"))
    }

    fn step_texts(&self, id: u64) -> Result<Vec<String>, SessionError> {
        Ok(self.script(id)?.steps.iter().map(|s| s.text.clone()).collect())
    }

    /// Applies one action; `dir` resolves upload paths. Returns the
    /// response payload the service would send.
    pub fn apply(&mut self, action: &SessionAction, dir: &Path) -> Result<Value, SessionError> {
        Ok(match action {
            SessionAction::Upload { file } => {
                let path: PathBuf = dir.join(file);
                let bytes = std::fs::read(&path).map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
                json!({ "name": self.upload_csv(file, &bytes)? })
            }
            SessionAction::Record { on } => {
                self.set_recording(*on);
                json!({})
            }
            SessionAction::Event { event } => json!({ "merged_diff_len": self.demo_event(event.clone())? }),
            SessionAction::Chat { text } => to_value(&self.chat(text)?),
            SessionAction::Answer { choice, other_text } => {
                to_value(&self.answer(choice.as_deref(), other_text.as_deref())?)
            }
            SessionAction::EditStep { script, step, text } => {
                let id = self.target(*script)?;
                let mut texts = self.step_texts(id)?;
                let slot = step
                    .checked_sub(1)
                    .and_then(|i| texts.get_mut(i))
                    .ok_or_else(|| SessionError::BadRequest(format!("no step {step}")))?;
                *slot = text.clone();
                self.steps_value(id, &texts)?
            }
            SessionAction::AddStep { script, text } => {
                let id = self.target(*script)?;
                let mut texts = self.step_texts(id)?;
                texts.push(text.clone());
                self.steps_value(id, &texts)?
            }
            SessionAction::DeleteStep { script, step } => {
                let id = self.target(*script)?;
                let mut texts = self.step_texts(id)?;
                if *step == 0 || *step > texts.len() {
                    return Err(SessionError::BadRequest(format!("no step {step}")));
                }
                texts.remove(step - 1);
                self.steps_value(id, &texts)?
            }
            SessionAction::Run { script } => {
                let id = self.target(*script)?;
                to_value(&self.run(id)?)
            }
            SessionAction::Save { script } => {
                let id = self.target(*script)?;
                self.save(id)?;
                json!({ "script_id": id, "saved": true })
            }
            SessionAction::Regenerate { script } => {
                let id = self.target(*script)?;
                json!({ "script_id": id, "steps": self.regenerate(id)? })
            }
        })
    }

    /// Applies every action in order, stopping at the first failure with the
    /// index of the failing action. Returns the response of each action.
    pub fn replay(&mut self, script: &ReplayScript, dir: &Path) -> Result<Vec<Value>, (usize, SessionError)> {
        script.actions.iter().enumerate().map(|(i, a)| self.apply(a, dir).map_err(|e| (i, e))).collect()
    }

    /// CSV bytes of the latest version of `base`.
    pub fn latest_csv(&self, base: &str) -> Result<Vec<u8>, SessionError> {
        let r = self.store.latest_ref(base).ok_or_else(|| SessionError::NotFound(format!("table {base}")))?;
        self.table_csv(&r.rendered())
    }

    fn steps_value(&mut self, id: u64, texts: &[String]) -> Result<Value, SessionError> {
        let (steps, route) = self.update_steps(id, texts)?;
        Ok(json!({ "steps": steps, "route": route }))
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("reply serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::MockLlm;

    fn session(transcript: Value) -> Session {
        let mock = Arc::new(MockLlm::from_json(&transcript.to_string()).unwrap());
        let mut s = Session::new(Arc::new(Agent::new(mock)));
        s.upload_csv("people.csv", b"Name,Gender\na,F\nb,M\n").unwrap();
        s
    }

    #[test]
    fn upload_stores_v0_and_rejects_duplicates() {
        let mut s = session(json!([]));
        assert_eq!(s.store.names().collect::<Vec<_>>(), vec!["people_v0.csv"]);
        assert_eq!(s.upload_csv("people.csv", b"a\n1\n").unwrap_err().status(), 409);
        assert_eq!(s.provenance()["nodes"], json!(["people_v0.csv"]));
    }

    #[test]
    fn chat_to_steps_and_run() {
        let mut s = session(json!([
            {"stage":"AnalyzeInit","response":{"type":"finish","summary":"Drop Gender"}},
            {"stage":"Plan","response":[{"function":"drop","description":"Drop Gender"}]},
            {"stage":"Generate","response":{"required_tables":["people.csv"],"program":[{"function":"drop","table":"people.csv","label":"Gender","axis":1}]}}
        ]));
        let reply = s.chat("remove gender").unwrap();
        let ChatReply::Steps { script_id, steps } = reply else { panic!("{reply:?}") };
        assert_eq!(steps[0].text, "Drop the column Gender in the given table(s)");
        let report = s.run(script_id).unwrap();
        assert_eq!(report.outputs, vec!["people_v1.csv"]);
        // Gender is gone from the latest version, so a second run faults.
        assert_eq!(s.run(script_id).unwrap_err().code(), "execution_failed");
        assert_eq!(s.table_csv("people_v0.csv").unwrap(), b"Name,Gender\na,F\nb,M\n");
    }

    #[test]
    fn answer_requires_pending_question_and_valid_choice() {
        let mut s = session(json!([
            {"stage":"AnalyzeInit","response":{"type":"question","summary":"","question":"Which?","choices":["A","B","other"]}}
        ]));
        assert_eq!(s.answer(Some("A"), None).unwrap_err().status(), 409);
        let reply = s.chat("clean").unwrap();
        assert_eq!(reply, ChatReply::Question { question: "Which?".into(), choices: vec!["A".into(), "B".into(), OTHER_LABEL.into()] });
        assert_eq!(s.answer(Some("C"), None).unwrap_err().status(), 400);
        assert_eq!(s.answer(Some("other"), None).unwrap_err().status(), 400);
        assert!(s.pending_question().is_some());
    }

    #[test]
    fn events_need_recording() {
        let mut s = session(json!([]));
        let ev = DemoEvent::delete_column("people_v0.csv", "B");
        assert_eq!(s.demo_event(ev.clone()).unwrap_err().status(), 409);
        s.set_recording(true);
        assert_eq!(s.demo_event(ev).unwrap(), 1);
    }

    #[test]
    fn error_body_shape() {
        let e = SessionError::Conflict {
            message: "m".into(),
            diagnostics: vec![SyntaxDiagnostic::new(0, crate::dsl::DiagnosticCode::BadArity, "x")],
        };
        let b = e.body();
        assert_eq!(b["code"], "check_failed");
        assert_eq!(b["diagnostics"][0]["call_index"], 0);
    }
}
