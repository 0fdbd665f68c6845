//! Rule-based repair: localized, pattern-driven statement adjustments for
//! predictable error shapes. No parsing, no model calls; anything these
//! rules cannot fix escalates to semantic repair.

use regex::Regex;

use super::{route, ErrorCategory, ErrorRecord, Route};
use crate::case::Statement;

/// Documented defaults for settings the fuzzer commonly knocks out of range.
const SETTING_DEFAULTS: &[(&str, &str)] = &[
    ("sort_buffer_size", "262144"),
    ("max_connections", "151"),
    ("max_allowed_packet", "67108864"),
    ("wait_timeout", "28800"),
];

const KNOWN_GOOD_COMPONENT: &str = "'file://component_validate_password'";

fn regex(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static pattern compiles")
}

/// Attempt a localized fix. Returns the repaired statement, or None when no
/// rule applies (the record then escalates to semantic repair).
pub fn rule_repair(record: &ErrorRecord, stmt: &Statement, dialect: &str) -> Option<Statement> {
    if route(record.category) != Route::Rbr {
        return None;
    }
    let text = &stmt.text;
    let fixed: Option<String> = match record.category {
        ErrorCategory::Formattable => fix_formattable(record, text, dialect),
        ErrorCategory::InappropriateSetting => fix_setting(record, text),
        ErrorCategory::PluginComponent => fix_component(record, text),
        _ => None,
    };
    let fixed = fixed?;
    if fixed == *text {
        return None;
    }
    Some(Statement::new(fixed))
}

fn fix_formattable(record: &ErrorRecord, text: &str, dialect: &str) -> Option<String> {
    if record.message.contains("Cannot get geometry object") {
        let constructor = match dialect {
            "mysql_subset" => "ST_GeomFromText('POINT(1 1)')",
            _ => "ST_GeomFromText('POINT(1 1)')",
        };
        // swap the first literal fed to the VALUES list
        let values_at = text.to_ascii_uppercase().find("VALUES")?;
        let head = &text[..values_at];
        let tail = &text[values_at..];
        let re = regex(r"'[^']*'|0x[0-9a-fA-F]+");
        if re.is_match(tail) {
            return Some(format!("{head}{}", re.replace(tail, constructor)));
        }
        return None;
    }
    if let Some(capture) = regex(r"Incorrect datetime value: '([^']*)'")
        .captures(&record.message)
        .and_then(|c| c.get(1))
    {
        let bad = format!("'{}'", capture.as_str());
        if text.contains(&bad) {
            return Some(text.replacen(&bad, "'2024-01-01 00:00:00'", 1));
        }
        return None;
    }
    if let Some(capture) = regex(r"Incorrect integer value: '([^']*)'")
        .captures(&record.message)
        .and_then(|c| c.get(1))
    {
        let bad = format!("'{}'", capture.as_str());
        if text.contains(&bad) {
            return Some(text.replacen(&bad, "1", 1));
        }
        return None;
    }
    if record.message.contains("Data too long for column") {
        // shorten the longest string literal in the statement
        let re = regex(r"'[^']{9,}'");
        if re.is_match(text) {
            return Some(re.replace(text, "'a'").into_owned());
        }
        return None;
    }
    None
}

fn fix_setting(record: &ErrorRecord, text: &str) -> Option<String> {
    let variable = regex(r"[Vv]ariable '(\w+)'")
        .captures(&record.message)
        .map(|c| c[1].to_string());
    let assign = regex(r"(?s)(=\s*)('[^']*'|[\w.-]+)");
    let caps = assign.captures(text)?;
    let replacement = variable
        .as_deref()
        .and_then(|v| {
            SETTING_DEFAULTS.iter().find(|(name, _)| *name == v).map(|(_, def)| *def)
        })
        .unwrap_or("1");
    let prefix = caps.get(1).expect("capture 1").as_str();
    let whole = caps.get(0).expect("capture 0");
    let mut out = String::with_capacity(text.len());
    out.push_str(&text[..whole.start()]);
    out.push_str(prefix);
    out.push_str(replacement);
    out.push_str(&text[whole.end()..]);
    Some(out)
}

fn fix_component(record: &ErrorRecord, text: &str) -> Option<String> {
    let upper = text.to_ascii_uppercase();
    if !upper.contains("INSTALL") && !upper.contains("UNINSTALL") {
        return None;
    }
    if !(record.message.contains("Cannot load component")
        || record.message.contains("was not loaded")
        || record.message.contains("Can't open shared library"))
    {
        return None;
    }
    let re = regex(r"'[^']*'");
    if re.is_match(text) {
        return Some(re.replace(text, KNOWN_GOOD_COMPONENT).into_owned());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(category: ErrorCategory, message: &str) -> ErrorRecord {
        ErrorRecord {
            statement_index: 0,
            code: None,
            message: message.into(),
            category,
            suggestion: None,
        }
    }

    #[test]
    fn geometry_literal_replaced_with_constructor() {
        let stmt = Statement::new("INSERT INTO t0 (c0) VALUES ('garbage');");
        let rec = record(
            ErrorCategory::Formattable,
            "Cannot get geometry object from data you send to the GEOMETRY field",
        );
        let fixed = rule_repair(&rec, &stmt, "mysql_subset").expect("fix applies");
        assert_eq!(
            fixed.text,
            "INSERT INTO t0 (c0) VALUES (ST_GeomFromText('POINT(1 1)'));"
        );
    }

    #[test]
    fn out_of_range_setting_clamped_to_documented_default() {
        let stmt = Statement::new("SET GLOBAL sort_buffer_size = -1;");
        let rec = record(
            ErrorCategory::InappropriateSetting,
            "Variable 'sort_buffer_size' can't be set to the value of '-1'",
        );
        let fixed = rule_repair(&rec, &stmt, "mysql_subset").expect("fix applies");
        assert_eq!(fixed.text, "SET GLOBAL sort_buffer_size = 262144;");
    }

    #[test]
    fn unknown_setting_clamps_to_one() {
        let stmt = Statement::new("SET GLOBAL var0 = 99999999;");
        let rec = record(
            ErrorCategory::InappropriateSetting,
            "Variable 'var0' can't be set to the value of '99999999'",
        );
        let fixed = rule_repair(&rec, &stmt, "mysql_subset").expect("fix applies");
        assert_eq!(fixed.text, "SET GLOBAL var0 = 1;");
    }

    #[test]
    fn component_urn_replaced_with_known_good() {
        let stmt = Statement::new("INSTALL COMPONENT 'file://component_xyz';");
        let rec = record(
            ErrorCategory::PluginComponent,
            "Cannot load component from specified URN: 'file://component_xyz'.",
        );
        let fixed = rule_repair(&rec, &stmt, "mysql_subset").expect("fix applies");
        assert_eq!(fixed.text, "INSTALL COMPONENT 'file://component_validate_password';");
    }

    #[test]
    fn no_matching_rule_escalates() {
        let stmt = Statement::new("SELECT 1;");
        let rec = record(ErrorCategory::Formattable, "some formattable thing with no rule");
        assert!(rule_repair(&rec, &stmt, "sqlite").is_none());
        // wrong route is never touched
        let rec = record(ErrorCategory::ViolateConstraints, "NOT NULL constraint failed");
        assert!(rule_repair(&rec, &stmt, "sqlite").is_none());
    }

    #[test]
    fn datetime_literal_reformatted() {
        let stmt = Statement::new("INSERT INTO t0 (c3) VALUES ('2024-13-45');");
        let rec = record(
            ErrorCategory::Formattable,
            "Incorrect datetime value: '2024-13-45' for column 'c3' at row 1",
        );
        let fixed = rule_repair(&rec, &stmt, "mysql_subset").expect("fix applies");
        assert!(fixed.text.contains("'2024-01-01 00:00:00'"));
    }
}
