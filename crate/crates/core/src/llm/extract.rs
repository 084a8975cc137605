//! Pulling `test_*` functions out of free-form model replies.
//!
//! Fenced code blocks are searched first; when none of them holds a test
//! function the whole reply is searched instead. Every top-level
//! `func test_...` is cut out by brace matching and parsed on its own.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::minilang::{parse, FunctionKind, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTest {
    pub name: String,
    pub source: String,
    /// Hash of the prompt that produced the reply.
    pub origin: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub tests: Vec<GeneratedTest>,
    pub diagnostics: Vec<String>,
}

fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(String::new()),
            }
        } else if let Some(block) = current.as_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    blocks
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Byte ranges of top-level `func test_` definitions; `Err` holds the
/// start of a definition whose braces never close.
fn test_spans(text: &str) -> Vec<Result<(usize, usize), usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    let mut open: Option<usize> = None;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => {
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'{' => depth += 1,
            b'}' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    if let Some(start) = open.take() {
                        spans.push(Ok((start, i + 1)));
                    }
                }
            }
            b'f' if depth == 0
                && text[i..].starts_with("func")
                && (i == 0 || !is_ident(bytes[i - 1]))
                && text[i + 4..].trim_start().starts_with("test_")
                && bytes.get(i + 4).is_some_and(|b| b.is_ascii_whitespace()) =>
            {
                if let Some(start) = open.replace(i) {
                    spans.push(Err(start));
                }
            }
            _ => {}
        }
        i += 1;
    }
    if let Some(start) = open {
        spans.push(Err(start));
    }
    spans
}

fn name_at(text: &str) -> String {
    text.trim_start_matches("func").trim_start().chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect()
}

fn extract_from(region: &str, origin: &str, out: &mut Extraction, seen: &mut HashSet<String>) {
    for span in test_spans(region) {
        let (start, end) = match span {
            Ok(range) => range,
            Err(start) => {
                out.diagnostics.push(format!("dropped `{}`: unbalanced braces", name_at(&region[start..])));
                continue;
            }
        };
        let fragment = region[start..end].trim();
        let name = name_at(fragment);
        let unit = match parse(name.clone(), fragment, Role::Test) {
            Ok(unit) => unit,
            Err(err) => {
                out.diagnostics.push(format!("dropped `{name}`: {err}"));
                continue;
            }
        };
        if unit.functions.len() != 1 || unit.functions[0].kind != FunctionKind::Test {
            out.diagnostics.push(format!("dropped `{name}`: not a single test function"));
            continue;
        }
        if !seen.insert(name.clone()) {
            out.diagnostics.push(format!("dropped duplicate `{name}`"));
            continue;
        }
        out.tests.push(GeneratedTest { name, source: fragment.to_string(), origin: origin.to_string() });
    }
}

pub fn extract_tests(response: &str, origin: &str) -> Extraction {
    let mut out = Extraction::default();
    let mut seen = HashSet::new();
    let blocks: Vec<String> =
        fenced_blocks(response).into_iter().filter(|b| !test_spans(b).is_empty()).collect();
    if blocks.is_empty() {
        extract_from(response, origin, &mut out, &mut seen);
    } else {
        for block in &blocks {
            extract_from(block, origin, &mut out, &mut seen);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_block_two_tests() {
        let reply = "Here you go:\n```minilang\nfunc test_a() {\n    assert(f(1) == 2);\n}\n\nfunc test_b() {\n    assert(f(2) == 3);\n}\n```\nDone.";
        let ex = extract_tests(reply, "h");
        let names: Vec<&str> = ex.tests.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["test_a", "test_b"]);
        assert!(ex.diagnostics.is_empty());
        assert_eq!(ex.tests[0].source, "func test_a() {\n    assert(f(1) == 2);\n}");
        assert_eq!(ex.tests[0].origin, "h");
    }

    #[test]
    fn prose_only_yields_nothing() {
        let ex = extract_tests("I am unable to help with that request.", "h");
        assert!(ex.tests.is_empty() && ex.diagnostics.is_empty());
    }

    #[test]
    fn broken_sibling_is_dropped_with_diagnostic() {
        let reply = "```\nfunc test_ok() { assert(f(1) == 1); }\nfunc test_bad() { assert(f(1) == ; }\n```";
        let ex = extract_tests(reply, "h");
        assert_eq!(ex.tests.len(), 1);
        assert_eq!(ex.tests[0].name, "test_ok");
        assert_eq!(ex.diagnostics.len(), 1);
        assert!(ex.diagnostics[0].contains("test_bad"));
    }

    #[test]
    fn unfenced_fallback_and_duplicates() {
        let reply = "func test_a() { assert(true); }\nfunc test_a() { assert(false); }\nfunc helper() {}";
        let ex = extract_tests(reply, "h");
        assert_eq!(ex.tests.len(), 1);
        assert_eq!(ex.tests[0].source, "func test_a() { assert(true); }");
        assert_eq!(ex.diagnostics, ["dropped duplicate `test_a`"]);
    }

    #[test]
    fn braces_in_strings_and_comments() {
        let reply = "```\nfunc test_s() {\n    // } not a close\n    assert(g(\"}{\") == 1);\n}\n```";
        let ex = extract_tests(reply, "h");
        assert_eq!(ex.tests.len(), 1, "{:?}", ex.diagnostics);
        assert!(ex.tests[0].source.ends_with("== 1);\n}"));
    }

    #[test]
    fn unterminated_test_reported() {
        let ex = extract_tests("```\nfunc test_x() {\n    assert(true);\n```", "h");
        assert!(ex.tests.is_empty());
        assert_eq!(ex.diagnostics, ["dropped `test_x`: unbalanced braces"]);
    }

    #[test]
    fn re_extraction_is_stable() {
        let reply = "```\nfunc test_a() { assert(f(1) == 1); }\nfunc test_b() { assert(f(2) == 2); }\n```";
        let first = extract_tests(reply, "h");
        let joined: Vec<&str> = first.tests.iter().map(|t| t.source.as_str()).collect();
        let second = extract_tests(&joined.join("\n"), "h");
        assert_eq!(first.tests, second.tests);
    }
}
