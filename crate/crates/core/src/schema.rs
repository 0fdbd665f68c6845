//! Randomized schema initialization and the dynamic schema context consulted
//! by instantiation and repair.
//!
//! Identifiers follow the unified naming convention (`t<k>`, `c<k>`, `v<k>`)
//! so that downstream stages can resolve object references without parsing.

use std::fmt;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-dialect type pool and literal tables, loaded from `dialects/<id>.toml`.
#[derive(Debug, Clone, Deserialize)]
pub struct Dialect {
    pub name: String,
    pub types: Vec<TypeSpec>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    pub literals: Vec<String>,
}

const SQLITE_DIALECT: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../dialects/sqlite.toml"));
const MYSQL_SUBSET_DIALECT: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../dialects/mysql_subset.toml"));

impl Dialect {
    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let dialect: Dialect =
            toml::from_str(text).map_err(|e| SchemaError::BadDialectFile(e.to_string()))?;
        if dialect.types.is_empty() {
            return Err(SchemaError::BadDialectFile("empty type pool".into()));
        }
        if dialect.types.iter().any(|t| t.literals.is_empty()) {
            return Err(SchemaError::BadDialectFile("type without literals".into()));
        }
        Ok(dialect)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::BadDialectFile(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The two dialects shipped with the repo.
    pub fn builtin(id: &str) -> Result<Self, SchemaError> {
        match id {
            "sqlite" => Self::from_toml(SQLITE_DIALECT),
            "mysql_subset" => Self::from_toml(MYSQL_SUBSET_DIALECT),
            other => Err(SchemaError::UnknownDialect(other.to_string())),
        }
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(|t| t.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Table,
    View,
    Procedure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnConstraint {
    NotNull,
    Unique,
    PrimaryKey,
    Default(String),
}

impl fmt::Display for ColumnConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnConstraint::NotNull => write!(f, "NOT NULL"),
            ColumnConstraint::Unique => write!(f, "UNIQUE"),
            ColumnConstraint::PrimaryKey => write!(f, "PRIMARY KEY"),
            ColumnConstraint::Default(v) => write!(f, "DEFAULT {v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub data_type: String,
    pub constraints: Vec<ColumnConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaObject {
    pub name: String,
    pub kind: ObjectKind,
    pub columns: Vec<ColumnDef>,
    pub create_text: String,
}

/// Ordered view of every schema object and initialization statement emitted
/// so far. Owned by a single fuzzing session.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaContext {
    objects: IndexMap<String, SchemaObject>,
    init_statements: Vec<String>,
}

impl SchemaContext {
    pub fn objects(&self) -> impl Iterator<Item = &SchemaObject> {
        self.objects.values()
    }

    pub fn object(&self, name: &str) -> Option<&SchemaObject> {
        self.objects.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.objects.contains_key(name)
    }

    pub fn init_statements(&self) -> &[String] {
        &self.init_statements
    }

    pub fn first_table(&self) -> Option<&SchemaObject> {
        self.objects.values().find(|o| o.kind == ObjectKind::Table)
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Join all initialization statements for prompt interpolation.
    pub fn render(&self) -> String {
        self.init_statements.join("\n")
    }

    /// Feed a statement through the shallow recognizer. CREATE adds an
    /// object, DROP removes one (and its init statements); anything
    /// unrecognized leaves the context unchanged and returns `false`.
    pub fn register(&mut self, statement: &str) -> bool {
        let words = crate::sqltext::keywords(statement);
        match words.first().map(String::as_str) {
            Some("CREATE") => {
                let Some((kind, name_idx)) = create_target(&words) else { return false };
                let Some(name) = ident_at(statement, &words, name_idx) else { return false };
                let columns = if kind == ObjectKind::Table {
                    parse_column_defs(statement)
                } else {
                    Vec::new()
                };
                let create_text = ensure_terminated(statement);
                self.objects.insert(
                    name.clone(),
                    SchemaObject { name, kind, columns, create_text: create_text.clone() },
                );
                self.init_statements.push(create_text);
                true
            }
            Some("DROP") => {
                let target = match words.get(1).map(String::as_str) {
                    Some("TABLE") | Some("VIEW") | Some("PROCEDURE") | Some("INDEX") => 2,
                    _ => return false,
                };
                let mut idx = target;
                if words.get(idx).map(String::as_str) == Some("IF") {
                    idx += 2; // IF EXISTS
                }
                let Some(name) = ident_at(statement, &words, idx) else { return false };
                if self.objects.shift_remove(&name).is_some() {
                    let prefix = name.to_ascii_lowercase();
                    self.init_statements.retain(|s| {
                        !statement_targets(s).is_some_and(|t| t.eq_ignore_ascii_case(&prefix))
                    });
                    true
                } else {
                    false
                }
            }
            _ => false,
        }
    }

    fn push_insert(&mut self, statement: String) {
        self.init_statements.push(statement);
    }
}

fn ensure_terminated(stmt: &str) -> String {
    let trimmed = stmt.trim();
    if trimmed.ends_with(';') {
        trimmed.to_string()
    } else {
        format!("{trimmed};")
    }
}

/// (kind, index of the name word) for CREATE statements, skipping modifiers
/// like TEMP/TEMPORARY/UNIQUE and IF NOT EXISTS.
fn create_target(words: &[String]) -> Option<(ObjectKind, usize)> {
    let mut idx = 1;
    while matches!(words.get(idx).map(String::as_str), Some("TEMP") | Some("TEMPORARY")) {
        idx += 1;
    }
    let kind = match words.get(idx).map(String::as_str) {
        Some("TABLE") => ObjectKind::Table,
        Some("VIEW") => ObjectKind::View,
        Some("PROCEDURE") => ObjectKind::Procedure,
        _ => return None,
    };
    idx += 1;
    if words.get(idx).map(String::as_str) == Some("IF") {
        idx += 3; // IF NOT EXISTS
    }
    Some((kind, idx))
}

/// Fetch the identifier at keyword position `idx`, preserving original case.
fn ident_at(statement: &str, words: &[String], idx: usize) -> Option<String> {
    let upper = words.get(idx)?;
    let toks = crate::sqltext::tokenize(statement);
    let mut word_pos = 0;
    for t in toks {
        if t.kind == crate::sqltext::TokenKind::Word {
            if word_pos == idx {
                let text = t.text(statement);
                if text.to_ascii_uppercase() == *upper {
                    return Some(text.to_string());
                }
                return None;
            }
            word_pos += 1;
        }
    }
    None
}

/// Shallow column-def extraction from `CREATE TABLE name (...)`: split the
/// outer parens on top-level commas, first word is the column name.
fn parse_column_defs(statement: &str) -> Vec<ColumnDef> {
    let open = match statement.find('(') {
        Some(i) => i,
        None => return Vec::new(),
    };
    let close = match statement.rfind(')') {
        Some(i) if i > open => i,
        _ => return Vec::new(),
    };
    let body = &statement[open + 1..close];
    let mut defs = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let toks = crate::sqltext::tokenize(body);
    let mut pieces = Vec::new();
    for t in &toks {
        match t.text(body) {
            "(" => depth += 1,
            ")" => depth = depth.saturating_sub(1),
            "," if depth == 0 => {
                pieces.push(body[start..t.start].trim());
                start = t.end;
            }
            _ => {}
        }
    }
    pieces.push(body[start..].trim());
    for piece in pieces {
        let mut parts = piece.split_whitespace();
        let Some(name) = parts.next() else { continue };
        if name.to_ascii_uppercase() == "PRIMARY" || name.to_ascii_uppercase() == "CHECK" {
            continue; // table-level constraint, not a column
        }
        let data_type = parts.collect::<Vec<_>>().join(" ");
        defs.push(ColumnDef { name: name.to_string(), data_type, constraints: Vec::new() });
    }
    defs
}

/// Table the init statements target, for DROP cleanup.
fn statement_targets(stmt: &str) -> Option<String> {
    let words = crate::sqltext::keywords(stmt);
    match (words.first().map(String::as_str), words.get(1).map(String::as_str)) {
        (Some("INSERT"), Some("INTO")) => words.get(2).map(|w| w.to_ascii_lowercase()),
        (Some("CREATE"), _) => {
            let (_, idx) = create_target(&words)?;
            words.get(idx).map(|w| w.to_ascii_lowercase())
        }
        _ => None,
    }
}

/// Size knobs for schema generation; all ranges are inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaGenConfig {
    pub tables: (usize, usize),
    pub columns: (usize, usize),
    pub rows: (usize, usize),
}

impl Default for SchemaGenConfig {
    fn default() -> Self {
        SchemaGenConfig { tables: (1, 3), columns: (2, 5), rows: (1, 3) }
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown dialect: {0}")]
    UnknownDialect(String),
    #[error("invalid dialect file: {0}")]
    BadDialectFile(String),
    #[error("invalid schema config: {0}")]
    InvalidConfig(String),
}

fn sample(rng: &mut impl Rng, range: (usize, usize)) -> usize {
    rng.random_range(range.0..=range.1)
}

/// Generate schema-initialization statements with broad type coverage.
/// Every table gets at least one INSERT with type-compatible literals, and
/// every INSERT follows its table's CREATE.
pub fn generate_schema(
    dialect: &Dialect,
    config: &SchemaGenConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<String>, SchemaContext), SchemaError> {
    if config.tables.0 < 1 || config.columns.0 < 1 {
        return Err(SchemaError::InvalidConfig("need at least 1 table and 1 column".into()));
    }
    if config.tables.0 > config.tables.1
        || config.columns.0 > config.columns.1
        || config.rows.0 > config.rows.1
    {
        return Err(SchemaError::InvalidConfig("range lower bound exceeds upper bound".into()));
    }
    let mut context = SchemaContext::default();
    let mut statements = Vec::new();
    let n_tables = sample(rng, config.tables);
    for t in 0..n_tables {
        let table = format!("t{t}");
        let n_cols = sample(rng, config.columns);
        let mut columns = Vec::with_capacity(n_cols);
        for c in 0..n_cols {
            let spec = &dialect.types[rng.random_range(0..dialect.types.len())];
            let mut constraints = Vec::new();
            if c == 0 && rng.random_bool(0.15) {
                constraints.push(ColumnConstraint::PrimaryKey);
            } else {
                if rng.random_bool(0.2) {
                    constraints.push(ColumnConstraint::NotNull);
                }
                if rng.random_bool(0.1) {
                    constraints.push(ColumnConstraint::Unique);
                }
                if rng.random_bool(0.1) {
                    let lit = spec.literals[rng.random_range(0..spec.literals.len())].clone();
                    constraints.push(ColumnConstraint::Default(lit));
                }
            }
            columns.push(ColumnDef {
                name: format!("c{c}"),
                data_type: spec.name.clone(),
                constraints,
            });
        }
        let col_defs: Vec<String> = columns
            .iter()
            .map(|c| {
                let mut def = format!("{} {}", c.name, c.data_type);
                for con in &c.constraints {
                    def.push(' ');
                    def.push_str(&con.to_string());
                }
                def
            })
            .collect();
        let create = format!("CREATE TABLE {table} ({});", col_defs.join(", "));
        statements.push(create.clone());
        context.objects.insert(
            table.clone(),
            SchemaObject {
                name: table.clone(),
                kind: ObjectKind::Table,
                columns: columns.clone(),
                create_text: create.clone(),
            },
        );
        context.init_statements.push(create);

        let n_rows = sample(rng, config.rows).max(1);
        // avoid duplicate literals per column across rows where the pool allows,
        // so UNIQUE/PRIMARY KEY columns stay insertable
        let mut used: Vec<Vec<usize>> = vec![Vec::new(); columns.len()];
        for _ in 0..n_rows {
            let mut values = Vec::with_capacity(columns.len());
            for (ci, col) in columns.iter().enumerate() {
                let spec = dialect
                    .types
                    .iter()
                    .find(|s| s.name == col.data_type)
                    .expect("column type from pool");
                let fresh: Vec<usize> =
                    (0..spec.literals.len()).filter(|i| !used[ci].contains(i)).collect();
                let pick = if fresh.is_empty() {
                    rng.random_range(0..spec.literals.len())
                } else {
                    fresh[rng.random_range(0..fresh.len())]
                };
                used[ci].push(pick);
                values.push(spec.literals[pick].clone());
            }
            let col_names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
            let insert = format!(
                "INSERT INTO {table} ({}) VALUES ({});",
                col_names.join(", "),
                values.join(", ")
            );
            statements.push(insert.clone());
            context.push_insert(insert);
        }
    }
    Ok((statements, context))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqltext::split_statements;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generates_convention_names_and_inserts() {
        let dialect = Dialect::builtin("sqlite").unwrap();
        let config = SchemaGenConfig { tables: (2, 2), columns: (3, 3), rows: (1, 3) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (stmts, ctx) = generate_schema(&dialect, &config, &mut rng).unwrap();
        let creates: Vec<&String> =
            stmts.iter().filter(|s| s.starts_with("CREATE TABLE")).collect();
        assert_eq!(creates.len(), 2);
        assert!(creates[0].contains("t0 (c0 "));
        assert!(creates[1].contains("t1 (c0 "));
        assert!(stmts.iter().filter(|s| s.starts_with("INSERT INTO")).count() >= 2);
        assert_eq!(ctx.objects().count(), 2);
    }

    #[test]
    fn geometry_columns_use_constructor_literals() {
        let dialect = Dialect::builtin("mysql_subset").unwrap();
        let config = SchemaGenConfig { tables: (3, 3), columns: (5, 5), rows: (2, 2) };
        // run a few seeds so at least one GEOMETRY column appears
        let mut saw_geometry = false;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (stmts, ctx) = generate_schema(&dialect, &config, &mut rng).unwrap();
            for obj in ctx.objects() {
                for (ci, col) in obj.columns.iter().enumerate() {
                    if col.data_type == "GEOMETRY" {
                        saw_geometry = true;
                        for insert in
                            stmts.iter().filter(|s| s.starts_with(&format!("INSERT INTO {}", obj.name)))
                        {
                            let values = insert.split("VALUES").nth(1).unwrap();
                            let items = top_level_values(values);
                            assert!(
                                items[ci].trim().starts_with("ST_GeomFromText("),
                                "geometry literal must use the constructor form: {insert}"
                            );
                        }
                    }
                }
            }
        }
        assert!(saw_geometry, "type pool sampling never produced GEOMETRY in 20 seeds");
    }

    fn top_level_values(values: &str) -> Vec<String> {
        let inner = values.trim().trim_start_matches('(').trim_end_matches([')', ';']);
        let mut out = Vec::new();
        let mut depth = 0i32;
        let mut cur = String::new();
        let mut in_str = false;
        for ch in inner.chars() {
            match ch {
                '\'' => {
                    in_str = !in_str;
                    cur.push(ch);
                }
                '(' if !in_str => {
                    depth += 1;
                    cur.push(ch);
                }
                ')' if !in_str => {
                    depth -= 1;
                    cur.push(ch);
                }
                ',' if !in_str && depth == 0 => {
                    out.push(cur.trim().to_string());
                    cur = String::new();
                }
                _ => cur.push(ch),
            }
        }
        out.push(cur.trim().to_string());
        out
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let dialect = Dialect::builtin("sqlite").unwrap();
        let config = SchemaGenConfig { tables: (1, 1), columns: (1, 1), rows: (1, 1) };
        let a = generate_schema(&dialect, &config, &mut ChaCha8Rng::seed_from_u64(7)).unwrap().0;
        let b = generate_schema(&dialect, &config, &mut ChaCha8Rng::seed_from_u64(7)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn register_handles_create_select_drop() {
        let mut ctx = SchemaContext::default();
        assert!(ctx.register("CREATE TABLE t5 (c0 INT);"));
        assert!(ctx.contains("t5"));
        assert_eq!(ctx.object("t5").unwrap().columns.len(), 1);
        assert!(!ctx.register("SELECT 1;"));
        assert!(ctx.contains("t5"));
        assert!(ctx.register("DROP TABLE t5;"));
        assert!(!ctx.contains("t5"));
        assert!(ctx.init_statements().is_empty());
    }

    #[test]
    fn render_round_trips_through_statement_split() {
        let dialect = Dialect::builtin("sqlite").unwrap();
        let config = SchemaGenConfig::default();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, ctx) = generate_schema(&dialect, &config, &mut rng).unwrap();
            let rendered = ctx.render();
            let split = split_statements(&rendered);
            assert_eq!(split, ctx.init_statements(), "seed {seed}");
        }
    }

    #[test]
    fn empty_context_renders_empty() {
        assert_eq!(SchemaContext::default().render(), "");
    }

    #[test]
    fn definition_before_use_over_many_seeds() {
        let dialect = Dialect::builtin("sqlite").unwrap();
        let config = SchemaGenConfig::default();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (stmts, _) = generate_schema(&dialect, &config, &mut rng).unwrap();
            let mut created = std::collections::HashSet::new();
            for s in &stmts {
                if let Some(rest) = s.strip_prefix("CREATE TABLE ") {
                    created.insert(rest.split_whitespace().next().unwrap().to_string());
                } else if let Some(rest) = s.strip_prefix("INSERT INTO ") {
                    let table = rest.split_whitespace().next().unwrap();
                    assert!(created.contains(table), "INSERT before CREATE for {table}");
                }
            }
        }
    }
}
