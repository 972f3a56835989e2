//! Mixed-initiative data wrangling engine.
//!
//! The crate is organised bottom-up:
//!
//! * [`table`] holds typed tables, CSV I/O and the append-only version store.
//! * [`dsl`] defines wrangling programs, their JSON exchange format and the
//!   static checker used to drive model repair.
//! * [`interp`] executes programs over the store and reports dataflow effects.
//! * [`explain`] renders each call as a fixed natural-language step.
//! * [`provenance`] builds the table-version lineage graph.
//! * [`demo`] records spreadsheet demonstrations and serializes table diffs.
//! * [`agent`] assembles prompts and talks to a pluggable model client.
//! * [`session`] ties everything together for the CLI and HTTP service.

pub mod agent;
pub mod demo;
pub mod dsl;
pub mod explain;
pub mod interp;
pub mod provenance;
pub mod session;
pub mod table;

pub use agent::{
    Agent, AgentError, AnalyzeOutcome, ClarificationQuestion, IntentSummary, LlmClient, LlmError,
    MockLlm, PlanStep, RefineRoute, SessionState, StageTag,
};
pub use demo::{DemoEvent, DemoKind, TableDiff};
pub use dsl::{
    check_program, parse_program, render_diagnostics, Arg, ConditionExpr, DiagnosticCode,
    DslCall, DslFunction, DslProgram, ProgramError, SyntaxDiagnostic,
};
pub use explain::{explain_call, explain_program, render_condition, ExplainedStep};
pub use interp::{run_program, Effect, ExecError, ScalarEnv, TestResult};
pub use provenance::ProvenanceGraph;
pub use session::{ChatReply, ReplayScript, RunReport, Session, SessionAction, SessionError};
pub use table::{Axis, CellValue, IngestError, Selector, Table, TableRef, VersionedStore};
