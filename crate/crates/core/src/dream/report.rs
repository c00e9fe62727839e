//! Markdown rendering of dream reports and the opaque cursor token.

use std::fmt::Write;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chrono::DateTime;

use super::{ActionRecord, DreamReport};

/// Base64 of `{"cursor":"N"}`.
pub fn cursor_token(cursor: u64) -> String {
    STANDARD.encode(serde_json::json!({ "cursor": cursor.to_string() }).to_string())
}

pub fn parse_cursor_token(token: &str) -> Option<u64> {
    let raw = STANDARD.decode(token.trim()).ok()?;
    let v: serde_json::Value = serde_json::from_slice(&raw).ok()?;
    v.get("cursor")?.as_str()?.parse().ok()
}

fn section(out: &mut String, title: &str, items: &[ActionRecord]) {
    let _ = writeln!(out, "\n### {title} ({})\n", items.len());
    for a in items {
        if a.detail.is_empty() {
            let _ = writeln!(out, "- {}", a.target);
        } else {
            let _ = writeln!(out, "- {} -- {}", a.target, a.detail);
        }
    }
}

pub fn render_markdown(r: &DreamReport) -> String {
    let when = DateTime::from_timestamp_millis(r.started_at.millis())
        .map(|t| t.format("%Y-%m-%dT%H:%MZ").to_string())
        .unwrap_or_else(|| r.started_at.millis().to_string());
    let mut out = String::new();
    let _ = writeln!(out, "# Dream State Report -- {when}\n");
    let _ = writeln!(
        out,
        "**Events:** {} | **Assessed:** {}",
        r.events_processed, r.memories_assessed
    );
    let _ = writeln!(out, "**Duration:** {}ms", r.duration_ms);
    if r.dry_run {
        let _ = writeln!(out, "\n> Dry run: nothing below was applied.");
    }
    let _ = writeln!(out, "\n## Actions Taken");
    section(&mut out, "Deprecated", &r.deprecated);
    section(&mut out, "Metadata Updated", &r.metadata_updated);
    section(&mut out, "Tags Added", &r.tags_added);
    let _ = writeln!(
        out,
        "\n### Relationships Created ({})\n",
        r.relationships_created.len()
    );
    for e in &r.relationships_created {
        let _ = writeln!(out, "- {} -> {} ({})", e.source, e.target, e.edge_type);
    }
    if r.circuit_breaker_tripped {
        let _ = writeln!(
            out,
            "\n## Circuit Breaker\n\nDeprecation recommendations exceeded the configured ratio; \
             {} were capped and need review.",
            r.capped.len()
        );
        section(&mut out, "Capped", &r.capped);
    }
    if !r.published_overrides.is_empty() {
        let _ = writeln!(out, "\n## Published Override\n");
        for k in &r.published_overrides {
            let _ = writeln!(out, "- {k} -- published item deprecated by explicit override");
        }
    }
    if !r.skipped.is_empty() {
        section(&mut out, "Skipped", &r.skipped);
    }
    if !r.failed.is_empty() {
        section(&mut out, "Failed", &r.failed);
    }
    let _ = writeln!(out, "\n## Cursor\n\n`{}`", cursor_token(r.new_cursor));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::Timestamp;

    #[test]
    fn cursor_token_round_trip() {
        let t = cursor_token(17);
        assert_eq!(t, "eyJjdXJzb3IiOiIxNyJ9");
        assert_eq!(parse_cursor_token(&t), Some(17));
        assert_eq!(parse_cursor_token("not base64!"), None);
    }

    #[test]
    fn header_and_sections() {
        let mut r = DreamReport::new("p", Timestamp(1_760_000_000_000), false);
        r.events_processed = 3;
        r.memories_assessed = 2;
        r.new_cursor = 4;
        let md = render_markdown(&r);
        assert!(md.starts_with("# Dream State Report -- 2025-10-09T08:53Z"));
        assert!(md.contains("**Events:** 3 | **Assessed:** 2"));
        assert!(md.contains("### Deprecated (0)"));
        assert!(md.contains("### Relationships Created (0)"));
        assert!(md.trim_end().ends_with(&format!("`{}`", cursor_token(4))));
    }
}
