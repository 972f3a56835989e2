//! Prompt templates and their assembly.
//!
//! Templates and few-shot blocks ship as text files under `prompts/`. A
//! template has `{{DSL_GRAMMAR}}` and `{{EXAMPLES}}` holes; the caller's
//! input sections are appended after it in the order the template's INPUT
//! heading lists them.

use std::collections::BTreeMap;
use std::path::Path;

use super::{AgentError, StageTag};
use crate::table::Table;

pub type Sections = BTreeMap<String, String>;

pub const SHEET_INFORMATION: &str = "Sheet Information";
pub const TABLE_DIFF: &str = "Table Diff";
pub const USER_INSTRUCTION: &str = "User Instruction";
pub const CHAT_HISTORY: &str = "Chat History";
pub const USER_INTENT: &str = "User Intent";
pub const LAST_PLAN: &str = "Last step-by-step plan";
pub const ERROR_MESSAGE: &str = "Error Message";
pub const PLAN: &str = "Step-by-step Plan";
pub const PREVIOUS_DSL: &str = "Previous generated DSL";
pub const NEW_INSTRUCTION: &str = "New Instruction";
pub const NEW_DSL: &str = "New DSL Script";
pub const PREVIOUS_INTENT: &str = "Previous User Intent";
pub const DSL_SCRIPT: &str = "DSL Script";

/// `(section, required)` in output order.
pub fn stage_sections(stage: StageTag) -> &'static [(&'static str, bool)] {
    use StageTag::*;
    match stage {
        AnalyzeInit => &[(SHEET_INFORMATION, true), (TABLE_DIFF, true), (USER_INSTRUCTION, true)],
        AnalyzeFollowup => &[
            (SHEET_INFORMATION, true),
            (TABLE_DIFF, true),
            (USER_INSTRUCTION, true),
            (CHAT_HISTORY, true),
        ],
        Plan => &[(SHEET_INFORMATION, true), (USER_INTENT, true)],
        PlanWithError => &[
            (SHEET_INFORMATION, true),
            (USER_INTENT, true),
            (LAST_PLAN, true),
            (ERROR_MESSAGE, true),
        ],
        Generate => &[(SHEET_INFORMATION, true), (PLAN, true)],
        GenerateWithError => &[(SHEET_INFORMATION, true), (PLAN, true), (ERROR_MESSAGE, true)],
        UpdateDsl | EditDsl => &[(PREVIOUS_DSL, true), (NEW_INSTRUCTION, true), (ERROR_MESSAGE, false)],
        UpdateIntent => &[(NEW_DSL, true), (PREVIOUS_INTENT, false)],
        Summarize => &[(DSL_SCRIPT, true)],
    }
}

fn file_stem(stage: StageTag) -> &'static str {
    use StageTag::*;
    match stage {
        AnalyzeInit => "analyze_init",
        AnalyzeFollowup => "analyze_followup",
        Plan => "plan",
        PlanWithError => "plan_with_error",
        Generate => "generate",
        GenerateWithError => "generate_with_error",
        UpdateDsl => "update_dsl",
        EditDsl => "edit_dsl",
        UpdateIntent => "update_intent",
        Summarize => "summarize",
    }
}

fn builtin_template(stage: StageTag) -> &'static str {
    use StageTag::*;
    match stage {
        AnalyzeInit => include_str!("../../prompts/analyze_init.txt"),
        AnalyzeFollowup => include_str!("../../prompts/analyze_followup.txt"),
        Plan => include_str!("../../prompts/plan.txt"),
        PlanWithError => include_str!("../../prompts/plan_with_error.txt"),
        Generate => include_str!("../../prompts/generate.txt"),
        GenerateWithError => include_str!("../../prompts/generate_with_error.txt"),
        UpdateDsl => include_str!("../../prompts/update_dsl.txt"),
        EditDsl => include_str!("../../prompts/edit_dsl.txt"),
        UpdateIntent => include_str!("../../prompts/update_intent.txt"),
        Summarize => include_str!("../../prompts/summarize.txt"),
    }
}

fn builtin_examples(stage: StageTag) -> &'static str {
    use StageTag::*;
    match stage {
        AnalyzeInit => include_str!("../../prompts/examples/analyze_init.txt"),
        AnalyzeFollowup => include_str!("../../prompts/examples/analyze_followup.txt"),
        Plan => include_str!("../../prompts/examples/plan.txt"),
        PlanWithError => include_str!("../../prompts/examples/plan_with_error.txt"),
        Generate => include_str!("../../prompts/examples/generate.txt"),
        GenerateWithError => include_str!("../../prompts/examples/generate_with_error.txt"),
        UpdateDsl => include_str!("../../prompts/examples/update_dsl.txt"),
        EditDsl => include_str!("../../prompts/examples/edit_dsl.txt"),
        UpdateIntent => include_str!("../../prompts/examples/update_intent.txt"),
        Summarize => include_str!("../../prompts/examples/summarize.txt"),
    }
}

/// Host-code template kept for reference; native execution never sends it.
pub const EXECUTE_TEMPLATE: &str = include_str!("../../prompts/execute.txt");

const BUILTIN_GRAMMAR: &str = include_str!("../../prompts/dsl_grammar.txt");

/// Templates, few-shot blocks and the grammar text for every stage.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<StageTag, String>,
    examples: BTreeMap<StageTag, String>,
    grammar: String,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        PromptLibrary {
            templates: StageTag::ALL.iter().map(|&s| (s, builtin_template(s).to_string())).collect(),
            examples: StageTag::ALL.iter().map(|&s| (s, builtin_examples(s).to_string())).collect(),
            grammar: BUILTIN_GRAMMAR.to_string(),
        }
    }
}

impl PromptLibrary {
    /// Built-in templates with few-shot blocks replaced by any
    /// `examples/<stage>.txt` found under `dir`.
    pub fn with_examples_dir(dir: &Path) -> std::io::Result<PromptLibrary> {
        let mut lib = PromptLibrary::default();
        for stage in StageTag::ALL {
            let path = dir.join("examples").join(format!("{}.txt", file_stem(stage)));
            if path.exists() {
                lib.examples.insert(stage, std::fs::read_to_string(path)?);
            }
        }
        Ok(lib)
    }

    pub fn template(&self, stage: StageTag) -> &str {
        &self.templates[&stage]
    }

    pub fn examples(&self, stage: StageTag) -> &str {
        &self.examples[&stage]
    }

    /// Fills `stage`'s template and appends the input sections.
    pub fn assemble(&self, stage: StageTag, sections: &Sections) -> Result<String, AgentError> {
        let mut out = self
            .template(stage)
            .replace("{{DSL_GRAMMAR}}", self.grammar.trim_end())
            .replace("{{EXAMPLES}}", self.examples(stage).trim_end());
        if !out.ends_with('\n') {
            out.push('\n');
        }
        out.push('\n');
        for &(name, required) in stage_sections(stage) {
            match sections.get(name) {
                Some(value) => out.push_str(&format!("- {name}:\n{value}\n")),
                None if required => return Err(AgentError::TemplateHole(name.to_string())),
                None => {}
            }
        }
        Ok(out)
    }
}

/// Assembles with the built-in library.
pub fn assemble_prompt(stage: StageTag, sections: &Sections) -> Result<String, AgentError> {
    PromptLibrary::default().assemble(stage, sections)
}

/// One block per table: name, headers and data row count.
pub fn sheet_information<'a>(tables: impl IntoIterator<Item = &'a Table>) -> String {
    tables
        .into_iter()
        .map(|t| format!("Sheet: {}\nHeaders: {}\nRows: {}", t.name(), t.columns().join(", "), t.nrows()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sections(names: &[&str]) -> Sections {
        names.iter().map(|n| (n.to_string(), format!("<{n}>"))).collect()
    }

    #[test]
    fn analyze_init_has_schema_and_inputs_in_order() {
        let p = assemble_prompt(StageTag::AnalyzeInit, &sections(&[USER_INSTRUCTION, TABLE_DIFF, SHEET_INFORMATION]))
            .unwrap();
        assert!(p.starts_with("CONTEXT\nYou are a professional data scientist."));
        assert!(p.contains("\"type\": \"question\""));
        let i = p.find("- Sheet Information:\n<Sheet Information>").unwrap();
        let j = p.find("- Table Diff:\n<Table Diff>").unwrap();
        let k = p.find("- User Instruction:\n<User Instruction>").unwrap();
        assert!(i < j && j < k);
        assert!(!p.contains("{{"));
    }

    #[test]
    fn missing_section_is_a_hole() {
        let err = assemble_prompt(StageTag::AnalyzeInit, &sections(&[TABLE_DIFF, USER_INSTRUCTION])).unwrap_err();
        assert_eq!(err, AgentError::TemplateHole(SHEET_INFORMATION.into()));
    }

    #[test]
    fn headings_appear_in_template_order() {
        for stage in StageTag::ALL {
            let t = PromptLibrary::default().template(stage).to_string();
            let order: Vec<usize> = ["CONTEXT", "OBJECTIVE", "INPUT", "OUTPUT", "EXAMPLES"]
                .iter()
                .map(|h| t.find(&format!("{h}\n")).unwrap_or_else(|| panic!("{stage} lacks {h}")))
                .collect();
            assert!(order.windows(2).all(|w| w[0] < w[1]), "{stage}");
        }
    }

    #[test]
    fn generate_with_error_carries_error_section() {
        let p = assemble_prompt(StageTag::GenerateWithError, &sections(&[SHEET_INFORMATION, PLAN, ERROR_MESSAGE]))
            .unwrap();
        assert!(p.contains("- Error Message: The error message from the last generation."));
        assert!(p.contains("- Error Message:\n<Error Message>"));
        assert!(p.contains("- drop(table, label, axis)"));
    }

    #[test]
    fn execute_template_is_retained() {
        assert!(EXECUTE_TEMPLATE.contains("save_table"));
    }
}
