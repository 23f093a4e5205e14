//! Lexical scanning of embedded SPARQL text.
//!
//! The interpreter never parses SPARQL itself; it only needs to find
//! `QVALUES(...)` sites, capture balanced parentheses and substitute variable
//! tokens. All of that must ignore string literals (short and long forms),
//! `#` comments and `<...>` IRI references, which is what this module does.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScanError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unbalanced parentheses: no match for '{open}' at byte {pos}")]
    Unbalanced { open: char, pos: usize },
    #[error("malformed QVALUES at byte {pos}: {reason}")]
    MalformedQvalues { pos: usize, reason: &'static str },
}

/// A `QVALUES(var)` occurrence: the byte range of the whole token (inclusive
/// of the closing parenthesis) and the referenced solution variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QvaluesSite {
    pub range: Range<usize>,
    pub variable: String,
}

/// Returns the end (exclusive) of the inert region starting at `i`, if one
/// starts there: a comment, a string literal or an IRI reference.
///
/// A `<` only opens an IRI when everything up to the next `>` is legal inside
/// one; otherwise it is an ordinary character (e.g. a less-than operator).
fn inert_end(bytes: &[u8], i: usize) -> Result<Option<usize>, ScanError> {
    match bytes[i] {
        b'#' => {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j] != b'\n' {
                j += 1;
            }
            Ok(Some(j))
        }
        q @ (b'\'' | b'"') => {
            let long = bytes[i..].starts_with(&[q, q, q]);
            let (quote_len, terminator): (usize, &[u8]) = if long {
                (3, &bytes[i..i + 3])
            } else {
                (1, &bytes[i..i + 1])
            };
            let mut j = i + quote_len;
            while j < bytes.len() {
                if bytes[j] == b'\\' {
                    j += 2;
                    continue;
                }
                if bytes[j..].starts_with(terminator) {
                    return Ok(Some(j + quote_len));
                }
                if !long && bytes[j] == b'\n' {
                    return Err(ScanError::UnterminatedString(i));
                }
                j += 1;
            }
            Err(ScanError::UnterminatedString(i))
        }
        b'<' => {
            let mut j = i + 1;
            while j < bytes.len() {
                match bytes[j] {
                    b'>' => return Ok(Some(j + 1)),
                    0x00..=0x20 | b'<' | b'"' | b'{' | b'}' | b'|' | b'^' | b'`' | b'\\' => {
                        return Ok(None)
                    }
                    _ => j += 1,
                }
            }
            Ok(None)
        }
        _ => Ok(None),
    }
}

/// Walks `text` from `start`, invoking `visit` for every significant byte
/// (outside strings, comments and IRIs). `visit` may return `Some(r)` to stop
/// early. Returns the early result, if any.
fn walk<T>(
    text: &str,
    start: usize,
    mut visit: impl FnMut(usize, u8) -> Option<T>,
) -> Result<Option<T>, ScanError> {
    let bytes = text.as_bytes();
    let mut i = start;
    while i < bytes.len() {
        if let Some(end) = inert_end(bytes, i)? {
            i = end;
            continue;
        }
        if let Some(r) = visit(i, bytes[i]) {
            return Ok(Some(r));
        }
        i += 1;
    }
    Ok(None)
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Given the position of an opening delimiter in `text`, returns the position
/// of its matching closer, respecting strings, comments and IRIs. All three
/// bracket kinds are tracked jointly, so `( ... { ... )` is reported as
/// unbalanced rather than silently captured.
pub fn find_balanced_end(text: &str, open_pos: usize) -> Result<usize, ScanError> {
    let bytes = text.as_bytes();
    debug_assert!(matches!(bytes[open_pos], b'(' | b'[' | b'{'));
    let mut stack: Vec<(u8, usize)> = Vec::new();
    let found = walk(text, open_pos, |i, b| {
        match b {
            b'(' | b'[' | b'{' => stack.push((b, i)),
            b')' | b']' | b'}' => {
                let expected = match b {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                match stack.pop() {
                    Some((open, _)) if open == expected => {
                        if stack.is_empty() {
                            return Some(Ok(i));
                        }
                    }
                    Some((open, pos)) => {
                        return Some(Err(ScanError::Unbalanced {
                            open: open as char,
                            pos,
                        }))
                    }
                    None => {
                        return Some(Err(ScanError::Unbalanced {
                            open: b as char,
                            pos: i,
                        }))
                    }
                }
            }
            _ => {}
        }
        None
    })?;
    match found {
        Some(result) => result,
        None => {
            let (open, pos) = stack.last().copied().unwrap_or((bytes[open_pos], open_pos));
            Err(ScanError::Unbalanced {
                open: open as char,
                pos,
            })
        }
    }
}

/// Scans `text` for `QVALUES(name)` tokens outside strings, comments and
/// IRIs, returning one site per occurrence in order.
pub fn scan_qvalues(text: &str) -> Result<Vec<QvaluesSite>, ScanError> {
    let bytes = text.as_bytes();
    let mut sites = Vec::new();
    let mut skip_until = 0usize;
    walk(text, 0, |i, b| -> Option<ScanError> {
        if i < skip_until || !(b == b'Q' || b == b'q') {
            return None;
        }
        if bytes.len() - i < 7 || !bytes[i..i + 7].eq_ignore_ascii_case(b"QVALUES") {
            return None;
        }
        // Word boundary: not part of a longer identifier, variable or
        // prefixed name.
        if i > 0 {
            let prev = bytes[i - 1];
            if is_ident_byte(prev) || prev == b'?' || prev == b'$' || prev == b':' {
                return None;
            }
        }
        if i + 7 < bytes.len() && (is_ident_byte(bytes[i + 7]) || bytes[i + 7] == b':') {
            return None;
        }
        match parse_qvalues_args(bytes, i) {
            Ok((var, end)) => {
                sites.push(QvaluesSite {
                    range: i..end,
                    variable: var,
                });
                skip_until = end;
                None
            }
            Err(e) => Some(e),
        }
    })?
    .map_or(Ok(()), Err)?;
    Ok(sites)
}

fn parse_qvalues_args(bytes: &[u8], token_start: usize) -> Result<(String, usize), ScanError> {
    let mut j = token_start + 7;
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    if j >= bytes.len() || bytes[j] != b'(' {
        return Err(ScanError::MalformedQvalues {
            pos: token_start,
            reason: "expected '(' after QVALUES",
        });
    }
    j += 1;
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    let name_start = j;
    if j >= bytes.len() || !is_ident_start(bytes[j]) {
        return Err(ScanError::MalformedQvalues {
            pos: token_start,
            reason: "expected a solution variable name",
        });
    }
    while j < bytes.len() && is_ident_byte(bytes[j]) {
        j += 1;
    }
    let name = std::str::from_utf8(&bytes[name_start..j]).unwrap().to_string();
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    if j >= bytes.len() || bytes[j] != b')' {
        return Err(ScanError::MalformedQvalues {
            pos: token_start,
            reason: "expected ')' closing QVALUES",
        });
    }
    Ok((name, j + 1))
}

/// Replaces every occurrence of the SPARQL variable `?name` (or `$name`)
/// outside strings, comments and IRIs with `replacement`.
pub fn replace_variable(text: &str, name: &str, replacement: &str) -> Result<String, ScanError> {
    let bytes = text.as_bytes();
    let mut ranges: Vec<Range<usize>> = Vec::new();
    walk(text, 0, |i, b| -> Option<()> {
        if b != b'?' && b != b'$' {
            return None;
        }
        let start = i + 1;
        let end = start + name.len();
        if end > bytes.len() || &bytes[start..end] != name.as_bytes() {
            return None;
        }
        if end < bytes.len() && is_ident_byte(bytes[end]) {
            return None;
        }
        ranges.push(i..end);
        None
    })?;
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for r in ranges {
        out.push_str(&text[last..r.start]);
        out.push_str(replacement);
        last = r.end;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Finds the first significant keyword-like token at or after `start`,
/// returning it upper-cased with its position.
pub fn first_keyword(text: &str, start: usize) -> Result<Option<(usize, String)>, ScanError> {
    let bytes = text.as_bytes();
    let found = walk(text, start, |i, b| {
        if b.is_ascii_whitespace() {
            None
        } else if is_ident_start(b) {
            let mut j = i;
            while j < bytes.len() && is_ident_byte(bytes[j]) {
                j += 1;
            }
            Some((i, text[i..j].to_ascii_uppercase()))
        } else {
            Some((i, String::new()))
        }
    })?;
    Ok(found.filter(|(_, w)| !w.is_empty()))
}

/// Splits a selector list body (the text after `[`) on `|` at bracket depth
/// zero. Returns the byte range of each selector and the position of the
/// closing `]`.
pub fn split_selector_list(text: &str, after_bracket: usize) -> Result<(Vec<Range<usize>>, usize), ScanError> {
    let mut depth = 0usize;
    let mut parts = Vec::new();
    let mut part_start = after_bracket;
    let end = walk(text, after_bracket, |i, b| {
        match b {
            b'(' | b'{' | b'[' => depth += 1,
            b')' | b'}' => depth = depth.saturating_sub(1),
            b']' => {
                if depth == 0 {
                    return Some(i);
                }
                depth -= 1;
            }
            b'|' if depth == 0 => {
                parts.push(part_start..i);
                part_start = i + 1;
            }
            _ => {}
        }
        None
    })?
    .ok_or(ScanError::Unbalanced {
        open: '[',
        pos: after_bracket.saturating_sub(1),
    })?;
    parts.push(part_start..end);
    Ok((parts, end))
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, pos: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in text.char_indices() {
        if i >= pos {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sites_in_plain_text() {
        let sites = scan_qvalues("SELECT ?s WHERE { { QVALUES(a) } UNION { QVALUES(b) } }").unwrap();
        let names: Vec<_> = sites.iter().map(|s| s.variable.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn ignores_sites_in_strings_and_comments() {
        let text = "SELECT ?s WHERE { ?s ?p \"QVALUES(x)\" . # QVALUES(y)\n ?s ?q 'QVALUES(z)' }";
        assert!(scan_qvalues(text).unwrap().is_empty());
        let long = "SELECT ?s WHERE { ?s ?p \"\"\"multi\nQVALUES(x)\n\"\"\" }";
        assert!(scan_qvalues(long).unwrap().is_empty());
    }

    #[test]
    fn hash_inside_iri_is_not_a_comment() {
        let text = "SELECT ?s WHERE { ?s <http://e/p#frag> ?o . QVALUES(r) }";
        assert_eq!(scan_qvalues(text).unwrap().len(), 1);
    }

    #[test]
    fn less_than_operator_is_not_an_iri() {
        // If `<` were treated as an IRI opener the site would be hidden.
        let text = "SELECT ?s WHERE { FILTER(?x < 3) QVALUES(r) }";
        assert_eq!(scan_qvalues(text).unwrap().len(), 1);
    }

    #[test]
    fn word_boundaries_respected() {
        assert!(scan_qvalues("SELECT ?s WHERE { ?s ?p ?XQVALUES }").unwrap().is_empty());
        assert!(scan_qvalues("SELECT ?s WHERE { ?s :QVALUES ?o }").unwrap().is_empty());
    }

    #[test]
    fn whitespace_inside_token_allowed() {
        let sites = scan_qvalues("{ QVALUES ( reachable ) }").unwrap();
        assert_eq!(sites[0].variable, "reachable");
    }

    #[test]
    fn malformed_sites_error() {
        assert!(matches!(
            scan_qvalues("{ QVALUES }"),
            Err(ScanError::MalformedQvalues { .. })
        ));
        assert!(matches!(
            scan_qvalues("{ QVALUES() }"),
            Err(ScanError::MalformedQvalues { .. })
        ));
        assert!(matches!(
            scan_qvalues("{ QVALUES(a b }"),
            Err(ScanError::MalformedQvalues { .. })
        ));
    }

    #[test]
    fn balanced_capture_skips_inert_regions() {
        let text = "(SELECT ?s WHERE { ?s ?p \") ) )\" . # )\n ?s <http://e/a)???> ?o })";
        // The IRI candidate contains '?' which is legal inside IRIs; the
        // parens inside the string and comment must not count.
        let end = find_balanced_end(text, 0).unwrap();
        assert_eq!(end, text.len() - 1);
    }

    #[test]
    fn unbalanced_reports_innermost_open_position() {
        let err = find_balanced_end("(SELECT ?s WHERE { (", 0).unwrap_err();
        assert_eq!(err, ScanError::Unbalanced { open: '(', pos: 19 });
        let err = find_balanced_end("(SELECT ?s WHERE { ?s ?p ?o )", 0).unwrap_err();
        assert_eq!(err, ScanError::Unbalanced { open: '{', pos: 17 });
    }

    #[test]
    fn replace_variable_respects_boundaries() {
        let out = replace_variable(
            "SELECT ?node WHERE { ?node ?p ?cite . ?cite2 ?q \"?cite\" # ?cite\n }",
            "cite",
            "<http://e/a1>",
        )
        .unwrap();
        assert_eq!(
            out,
            "SELECT ?node WHERE { ?node ?p <http://e/a1> . ?cite2 ?q \"?cite\" # ?cite\n }"
        );
    }

    #[test]
    fn selector_list_split_ignores_nested_pipes() {
        let text = "SELECT ?n WHERE { ?n a|b ?x } | SELECT ?m WHERE { ?m ?p ?x } ] trailing";
        let (parts, end) = split_selector_list(text, 0).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(text[parts[0].clone()].trim(), "SELECT ?n WHERE { ?n a|b ?x }");
        assert_eq!(text[parts[1].clone()].trim(), "SELECT ?m WHERE { ?m ?p ?x }");
        assert_eq!(text.as_bytes()[end], b']');
    }

    #[test]
    fn scan_concatenation_equals_concatenated_scans() {
        let a = "SELECT ?s WHERE { QVALUES(x) ";
        let b = " { QVALUES(y) } }";
        let whole = format!("{a}{b}");
        let mut combined = scan_qvalues(a).unwrap();
        for mut site in scan_qvalues(b).unwrap() {
            site.range = site.range.start + a.len()..site.range.end + a.len();
            combined.push(site);
        }
        assert_eq!(scan_qvalues(&whole).unwrap(), combined);
    }
}
