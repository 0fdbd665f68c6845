//! Deterministic mock clients: scripted replay and a rule-based placeholder
//! filler. Everything offline runs on these.

use std::sync::Mutex;

use regex::Regex;
use serde::Deserialize;

use super::{ClientError, ModelClient, ModelParams, Prompt, PromptKind, PromptPayload};
use crate::sqltext::{tokenize, TokenKind};

/// Script file: an ordered list of entries; the first entry whose kind and
/// matcher fit the prompt supplies the response. Entries are reusable.
#[derive(Debug, Clone, Deserialize)]
pub struct MockScript {
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptEntry {
    #[serde(default)]
    pub kind: Option<PromptKind>,
    /// Substring the prompt text must contain.
    #[serde(default, rename = "match")]
    pub matcher: Option<String>,
    pub response: ScriptResponse,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScriptResponse {
    Text(String),
    Statements(Vec<String>),
}

impl ScriptResponse {
    fn render(&self) -> String {
        match self {
            ScriptResponse::Text(t) => t.clone(),
            ScriptResponse::Statements(list) => {
                serde_json::to_string(list).expect("statement list serializes")
            }
        }
    }
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        // accept either a bare entry array or {"entries": [...]}
        if let Ok(entries) = serde_json::from_str::<Vec<ScriptEntry>>(text) {
            return Ok(MockScript { entries });
        }
        serde_json::from_str(text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Transport(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| ClientError::MalformedResponse(e.to_string()))
    }
}

#[derive(Default)]
pub struct CallLog {
    calls: Mutex<Vec<PromptKind>>,
}

impl CallLog {
    fn record(&self, kind: PromptKind) {
        self.calls.lock().expect("call log").push(kind);
    }

    pub fn count(&self) -> usize {
        self.calls.lock().expect("call log").len()
    }

    pub fn count_of(&self, kind: PromptKind) -> usize {
        self.calls.lock().expect("call log").iter().filter(|k| **k == kind).count()
    }
}

/// Replays scripted responses keyed by prompt kind and substring matchers.
pub struct ScriptedClient {
    script: MockScript,
    pub log: CallLog,
}

impl ScriptedClient {
    pub fn new(script: MockScript) -> Self {
        ScriptedClient { script, log: CallLog::default() }
    }

    pub fn single(response: &str) -> Self {
        Self::new(MockScript {
            entries: vec![ScriptEntry {
                kind: None,
                matcher: None,
                response: ScriptResponse::Text(response.to_string()),
            }],
        })
    }
}

impl ModelClient for ScriptedClient {
    fn complete(&self, prompt: &Prompt, _params: &ModelParams) -> Result<String, ClientError> {
        self.log.record(prompt.kind);
        for entry in &self.script.entries {
            if entry.kind.is_some_and(|k| k != prompt.kind) {
                continue;
            }
            if let Some(m) = &entry.matcher {
                if !prompt.text.contains(m.as_str()) {
                    continue;
                }
            }
            return Ok(entry.response.render());
        }
        Err(ClientError::NoScript(format!("{:?} prompt", prompt.kind)))
    }
}

/// Rule-based filler: instantiates templates by substituting placeholders
/// with schema-consistent values, and answers repair prompts by inserting
/// creation statements for missing objects.
pub struct FillerClient {
    pub log: CallLog,
}

impl Default for FillerClient {
    fn default() -> Self {
        Self::new()
    }
}

impl FillerClient {
    pub fn new() -> Self {
        FillerClient { log: CallLog::default() }
    }
}

const EXPRESSION_CYCLE: &[&str] = &["c0 = 1", "c0 > 0", "c0 IS NOT NULL", "1 = 1"];

fn first_created_table(schema_block: &str) -> Option<String> {
    let re = Regex::new(r"(?i)CREATE\s+TABLE\s+(?:IF\s+NOT\s+EXISTS\s+)?([A-Za-z_][A-Za-z0-9_]*)")
        .expect("static regex");
    re.captures(schema_block).map(|c| c[1].to_string())
}

/// Substitute every `[name]` placeholder in a template.
fn fill_template(template: &str, table: &str) -> String {
    let mut out = String::new();
    let mut cursor = 0;
    let mut alias_count = 0usize;
    let mut expr_count = 0usize;
    for tok in tokenize(template) {
        if tok.kind != TokenKind::Bracketed {
            continue;
        }
        out.push_str(&template[cursor..tok.start]);
        let name = template[tok.start..tok.end].trim_matches(['[', ']']);
        let filled: String = match name {
            "tableName" => table.to_string(),
            "viewName" => "v0".into(),
            "indexName" => "i0".into(),
            "columnName" => "c0".into(),
            "tableAlias" => {
                alias_count += 1;
                format!("a{}", alias_count - 1)
            }
            "expression" => {
                expr_count += 1;
                EXPRESSION_CYCLE[(expr_count - 1) % EXPRESSION_CYCLE.len()].to_string()
            }
            "literalValue" => "1".into(),
            "columnDef" => "c9 INT".into(),
            "columnDefList" => "c0 INT, c1 TEXT".into(),
            "pragmaName" => "user_version".into(),
            "pragmaValue" => "1".into(),
            "savepointName" => "sp0".into(),
            "schemaName" => "aux0".into(),
            "dbFileName" => "':memory:'".into(),
            "alterSpecification" => "ADD COLUMN c9 INT".into(),
            "partitionDefinitions" => String::new(),
            "processId" => "1".into(),
            "componentName" => "'file://component0'".into(),
            "procName" => "p0".into(),
            "paramList" => String::new(),
            "procBody" => "SELECT 1;".into(),
            "variableName" => "var0".into(),
            "bucketCount" => "8".into(),
            "formatName" => "JSON".into(),
            _ => "1".into(),
        };
        out.push_str(&filled);
        cursor = tok.end;
    }
    out.push_str(&template[cursor..]);
    // tidy whitespace left by empty substitutions
    let tidied = out.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut stmt = tidied.trim().to_string();
    if !stmt.ends_with(';') {
        stmt.push(';');
    }
    stmt
}

/// Creation statement for an object a repair error says is missing.
fn creation_for(message: &str, fallback_table: &str) -> Option<String> {
    let table = Regex::new(r"no such table: ([A-Za-z_][A-Za-z0-9_]*)").expect("static");
    let view = Regex::new(r"no such view: ([A-Za-z_][A-Za-z0-9_]*)").expect("static");
    let index = Regex::new(r"no such index: ([A-Za-z_][A-Za-z0-9_]*)").expect("static");
    if let Some(c) = table.captures(message) {
        return Some(format!("CREATE TABLE {} (c0 INT);", &c[1]));
    }
    if let Some(c) = view.captures(message) {
        return Some(format!("CREATE VIEW {} AS SELECT 1;", &c[1]));
    }
    if let Some(c) = index.captures(message) {
        return Some(format!("CREATE INDEX {} ON {fallback_table} (c0);", &c[1]));
    }
    None
}

impl ModelClient for FillerClient {
    fn complete(&self, prompt: &Prompt, _params: &ModelParams) -> Result<String, ClientError> {
        self.log.record(prompt.kind);
        match &prompt.payload {
            PromptPayload::Instantiation { schema_block, templates } => {
                let table = first_created_table(schema_block).unwrap_or_else(|| "t0".into());
                let filled: Vec<String> =
                    templates.iter().map(|t| fill_template(t, &table)).collect();
                Ok(serde_json::to_string(&filled).expect("statements serialize"))
            }
            PromptPayload::Repair { statements, marked } => {
                let joined = statements.join("\n");
                let fallback = first_created_table(&joined).unwrap_or_else(|| "t0".into());
                let mut fixed: Vec<(usize, String)> =
                    statements.iter().cloned().enumerate().collect();
                let mut insertions: Vec<(usize, String)> = Vec::new();
                for ann in marked {
                    if let Some(create) = creation_for(&ann.error_message, &fallback) {
                        insertions.push((ann.index, create));
                    }
                }
                insertions.sort_by_key(|(idx, _)| *idx);
                let mut output = Vec::new();
                for (idx, stmt) in fixed.drain(..) {
                    for (at, create) in &insertions {
                        if *at == idx {
                            output.push(create.clone());
                        }
                    }
                    output.push(stmt);
                }
                Ok(serde_json::to_string(&output).expect("statements serialize"))
            }
        }
    }
}
