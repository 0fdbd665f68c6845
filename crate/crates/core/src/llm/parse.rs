//! Extract the JSON array of SQL statements from a completion, tolerating
//! surrounding prose, code fences, and junk arrays.

use super::NoJsonArray;

/// Return the elements of the first JSON array of strings found anywhere in
/// the response, trimmed, with empty elements dropped.
pub fn parse_sql_array(response: &str) -> Result<Vec<String>, NoJsonArray> {
    let bytes = response.as_bytes();
    for (pos, b) in bytes.iter().enumerate() {
        if *b != b'[' {
            continue;
        }
        let mut stream =
            serde_json::Deserializer::from_str(&response[pos..]).into_iter::<Vec<String>>();
        if let Some(Ok(items)) = stream.next() {
            return Ok(items
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect());
        }
    }
    Err(NoJsonArray)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plain_array_parses() {
        let got = parse_sql_array(r#"["SELECT 1;", "COMMIT;"]"#).unwrap();
        assert_eq!(got, vec!["SELECT 1;", "COMMIT;"]);
    }

    #[test]
    fn array_with_surrounding_prose() {
        let resp = "Sure! Here are the statements:\n```json\n[\"SELECT 1;\"]\n```\nHope that helps.";
        assert_eq!(parse_sql_array(resp).unwrap(), vec!["SELECT 1;"]);
    }

    #[test]
    fn refusal_without_array_is_error() {
        assert!(parse_sql_array("Sorry, I cannot help with that.").is_err());
    }

    #[test]
    fn junk_array_before_real_one_is_skipped() {
        let resp = r#"scores [1, 2, 3] then ["DELETE FROM t0;"]"#;
        assert_eq!(parse_sql_array(resp).unwrap(), vec!["DELETE FROM t0;"]);
    }

    #[test]
    fn elements_trimmed_and_empties_dropped() {
        let got = parse_sql_array(r#"["  SELECT 1;  ", "", "   "]"#).unwrap();
        assert_eq!(got, vec!["SELECT 1;"]);
    }

    #[test]
    fn repair_marker_brackets_do_not_confuse_the_scanner() {
        let resp = "-- [Need to repair<\nnot json\n-- >Need to repair]\n[\"SELECT 2;\"]";
        assert_eq!(parse_sql_array(resp).unwrap(), vec!["SELECT 2;"]);
    }

    #[test]
    fn random_wrappings_never_break_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let payload = r#"["SELECT a FROM t0;", "UPDATE t0 SET c0 = 1;"]"#;
        let fragments = [
            "Sure thing. ",
            "```json\n",
            "```\n",
            "Response:\n",
            "[note] ",
            "{\"meta\": 1} ",
            "...",
            "\n\n",
            "<answer>",
        ];
        for _ in 0..1000 {
            let mut s = String::new();
            for _ in 0..rng.random_range(0..4) {
                s.push_str(fragments[rng.random_range(0..fragments.len())]);
            }
            s.push_str(payload);
            for _ in 0..rng.random_range(0..3) {
                s.push_str(fragments[rng.random_range(0..fragments.len())]);
            }
            let got = parse_sql_array(&s).unwrap();
            assert_eq!(got, vec!["SELECT a FROM t0;", "UPDATE t0 SET c0 = 1;"]);
        }
    }
}
