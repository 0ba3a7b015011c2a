//! Prompt text handed to agents. The per-variant tool instructions ship as
//! markdown assets and are delivered byte for byte.

use botboard_core::model::Variant;
use botboard_core::runlog::PromptRecord;

use crate::problem::Problem;

pub const JOURNAL_INSTRUCTIONS: &str = include_str!("../assets/journal.md");
pub const SOCIAL_INSTRUCTIONS: &str = include_str!("../assets/social.md");
pub const COMBINED_INSTRUCTIONS: &str = include_str!("../assets/journal-social.md");

/// The reminder appended to the task for tool variants. Identical across phases.
pub const TOOL_REMINDER: &str = "You have collaborative tools available; use them if they are relevant.";

pub fn instructions(variant: Variant) -> Option<&'static str> {
    match variant {
        Variant::Baseline => None,
        Variant::Journal => Some(JOURNAL_INSTRUCTIONS),
        Variant::Social => Some(SOCIAL_INSTRUCTIONS),
        Variant::JournalSocial => Some(COMBINED_INSTRUCTIONS),
    }
}

pub fn task_prompt(problem: &Problem, variant: Variant) -> String {
    let mut task = format!(
        "Solve the coding challenge \"{}\" in the current directory.\n\n{}\n\n\
         The test cases are listed in problem.json. Write your answers to solution.json as \
         {{\"answers\": {{\"<test name>\": <value>}}}} and run the tests until they pass.",
        problem.id,
        problem.description.trim()
    );
    if variant.uses_tools() {
        task.push_str("\n\n");
        task.push_str(TOOL_REMINDER);
    }
    task
}

pub fn prompt_record(problem: &Problem, variant: Variant, instructions: Option<String>) -> PromptRecord {
    PromptRecord {
        task: task_prompt(problem, variant),
        tool_instructions: instructions,
    }
}
