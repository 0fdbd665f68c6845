//! Prompt skeletons for SQL instantiation and semantic-aware repair.
//! Building is pure: identical inputs yield byte-identical prompts.

use serde::{Deserialize, Serialize};

use crate::case::TestCase;
use crate::schema::SchemaContext;

use super::{Prompt, PromptError, PromptKind, PromptPayload};

const INSTANTIATION_HEADER: &str = "Here we initialize a database test_db by executing the \
                                    initialization SQL statements:";
const INSTANTIATION_TASK: &str = "Please instantiate the following SQL statements using the \
                                  guidance of the given SQL templates:";
const OUTPUT_FORMAT: &str = "Output the result in JSON format.\n\nExample response:\n[\"SQL1;\", \"SQL2;\", ...]";

/// Error context attached to one marked statement of a repair prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairAnnotation {
    pub index: usize,
    pub error_message: String,
    pub suggestion: Option<String>,
}

/// Build the instantiation prompt, truncating the oldest INSERT statements
/// from the schema block when the rendered prompt would exceed `max_chars`.
/// Returns the prompt and how many statements were dropped.
pub fn build_instantiation_prompt_bounded(
    context: &SchemaContext,
    templates: &[String],
    dialect: &str,
    max_chars: Option<usize>,
) -> Result<(Prompt, usize), PromptError> {
    if templates.is_empty() {
        return Err(PromptError::EmptyTemplates);
    }
    let mut schema_statements: Vec<String> = context.init_statements().to_vec();
    let mut truncated = 0usize;
    let mut text = render_instantiation(&schema_statements, templates, dialect);
    if let Some(budget) = max_chars {
        while text.len() > budget {
            let Some(pos) = schema_statements
                .iter()
                .position(|s| s.trim_start().to_ascii_uppercase().starts_with("INSERT"))
            else {
                break;
            };
            schema_statements.remove(pos);
            truncated += 1;
            text = render_instantiation(&schema_statements, templates, dialect);
        }
    }
    let schema_block = schema_statements.join("\n");
    Ok((
        Prompt {
            kind: PromptKind::Instantiation,
            text,
            target_dialect: dialect.to_string(),
            payload: PromptPayload::Instantiation {
                schema_block,
                templates: templates.to_vec(),
            },
        },
        truncated,
    ))
}

pub fn build_instantiation_prompt(
    context: &SchemaContext,
    templates: &[String],
    dialect: &str,
) -> Result<Prompt, PromptError> {
    build_instantiation_prompt_bounded(context, templates, dialect, None).map(|(p, _)| p)
}

fn render_instantiation(schema: &[String], templates: &[String], dialect: &str) -> String {
    let mut out = String::new();
    out.push_str(INSTANTIATION_HEADER);
    out.push('\n');
    out.push_str(&schema.join("\n"));
    out.push_str("\n\n");
    out.push_str(INSTANTIATION_TASK);
    out.push('\n');
    out.push_str(&templates.join("\n"));
    out.push_str("\n\n");
    out.push_str("The generated SQL statements must satisfy the following requirements:\n");
    out.push_str("- They must be syntactically and semantically correct.\n");
    out.push_str(&format!("- They must be executable in {dialect}.\n"));
    out.push_str(
        "- Each subsequent statement must reference only objects created by previous statements \
         (e.g., tables, views, or columns).\n\n",
    );
    out.push_str("You are allowed to complete the necessary parts of the templates.\n");
    out.push_str("Return only the SQL statements generated from the templates.\n");
    out.push_str(
        "Do not repeat the initialization SQL statements or include any other content.\n\n",
    );
    out.push_str(
        "Before output, correct any syntax or semantic errors in the generated SQL statements.\n",
    );
    out.push_str(OUTPUT_FORMAT);
    out
}

/// Build the repair prompt: faulty statements are wrapped in
/// `-- [Need to repair<` ... `-- >Need to repair]` markers with the error
/// message and optional suggestion as comment lines.
pub fn build_repair_prompt(
    testcase: &TestCase,
    annotations: &[RepairAnnotation],
    dialect: &str,
) -> Result<Prompt, PromptError> {
    if annotations.is_empty() {
        return Err(PromptError::EmptyErrors);
    }
    let len = testcase.statement_count();
    let mut by_index: Vec<Option<&RepairAnnotation>> = vec![None; len];
    for ann in annotations {
        if ann.index >= len {
            return Err(PromptError::IndexOutOfRange { index: ann.index, len });
        }
        // first record per statement wins; tagging produces one each
        by_index[ann.index].get_or_insert(ann);
    }

    let statements: Vec<String> =
        testcase.all_statements().map(|s| s.text.clone()).collect();
    let mut case_content = String::new();
    for (idx, stmt) in statements.iter().enumerate() {
        match by_index[idx] {
            Some(ann) => {
                case_content.push_str("-- [Need to repair<\n");
                case_content.push_str(stmt.trim_end());
                case_content.push('\n');
                case_content.push_str(&format!("-- {}\n", ann.error_message));
                if let Some(hint) = &ann.suggestion {
                    case_content.push_str(&format!("-- ({hint})\n"));
                }
                case_content.push_str("-- >Need to repair]\n");
            }
            None => {
                case_content.push_str(stmt.trim_end());
                case_content.push('\n');
            }
        }
    }

    let mut text = String::new();
    text.push_str("We need you to fix a SQL test case that contains erroneous SQL statements.\n\n");
    text.push_str(
        "The input test case contains multiple SQL statements. SQL statements that require \
         repair are explicitly marked using the following format:\n\n",
    );
    text.push_str("-- [Need to repair<\n<SQL statement>\n-- <error message>\n-- (repair suggestion)\n-- >Need to repair]\n\n");
    text.push_str("Here is the input test case:\n");
    text.push_str(&case_content);
    text.push('\n');
    text.push_str("You should fix each erroneous SQL statement using:\n");
    text.push_str("- the surrounding SQL context,\n");
    text.push_str("- the error message, and\n");
    text.push_str("- the repair suggestion if provided.\n\n");
    text.push_str(&format!("Target database: {dialect}.\n\n"));
    text.push_str("Do not output anything other than SQL statements.\n");
    text.push_str("Output the fully fixed test case in JSON format.\n\n");
    text.push_str("Example response:\n[\"SQL1;\", \"SQL2;\", ...]");

    Ok(Prompt {
        kind: PromptKind::Repair,
        text,
        target_dialect: dialect.to_string(),
        payload: PromptPayload::Repair {
            statements,
            marked: annotations.to_vec(),
        },
    })
}
