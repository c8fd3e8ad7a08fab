//! Tolerant HTML-to-text conversion by linear scan. No DOM is built;
//! malformed markup is skipped rather than rejected.

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details",
    "dialog", "div", "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1",
    "h2", "h3", "h4", "h5", "h6", "head", "header", "hr", "html", "li", "main", "nav", "ol",
    "option", "p", "pre", "section", "summary", "table", "tbody", "td", "tfoot", "th", "thead",
    "title", "tr", "ul",
];

/// Elements whose content is dropped entirely.
const RAW_TEXT_TAGS: &[&str] = &["script", "style"];

/// Strips tags, drops script and style bodies, turns block boundaries into a
/// single space and decodes character entities.
pub fn strip_html(input: &str) -> String {
    let bytes = input.as_bytes();
    let mut out = String::with_capacity(input.len());
    let mut pending_space = false;
    let mut text_start = 0;
    let mut i = 0;

    let flush = |out: &mut String, pending: &mut bool, text: &str| {
        if text.is_empty() {
            return;
        }
        if *pending {
            if !out.is_empty() && !out.ends_with(char::is_whitespace) && !text.starts_with(char::is_whitespace) {
                out.push(' ');
            }
            *pending = false;
        }
        decode_entities_into(text, out);
    };

    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let Some(tag) = scan_markup(input, i) else {
            i += 1;
            continue;
        };
        flush(&mut out, &mut pending_space, &input[text_start..i]);
        match tag.kind {
            Markup::Element { ref name, closing } => {
                if BLOCK_TAGS.contains(&name.as_str()) {
                    pending_space = true;
                }
                if !closing && !tag.self_closing && RAW_TEXT_TAGS.contains(&name.as_str()) {
                    i = skip_raw_text(input, tag.end, name);
                    text_start = i;
                    continue;
                }
            }
            Markup::Other => {}
        }
        i = tag.end;
        text_start = i;
    }
    flush(&mut out, &mut pending_space, &input[text_start..]);
    out
}

enum Markup {
    Element { name: String, closing: bool },
    /// Comments, doctype, processing instructions.
    Other,
}

struct Tag {
    kind: Markup,
    self_closing: bool,
    /// Byte offset just past the markup.
    end: usize,
}

/// Recognizes markup starting at `start` (which holds `<`). Returns `None`
/// when the `<` is literal text, e.g. `a < b`.
fn scan_markup(s: &str, start: usize) -> Option<Tag> {
    let rest = &s[start + 1..];
    let next = rest.chars().next()?;
    if rest.starts_with("!--") {
        let end = rest[3..]
            .find("-->")
            .map(|p| start + 1 + 3 + p + 3)
            .unwrap_or(s.len());
        return Some(Tag {
            kind: Markup::Other,
            self_closing: false,
            end,
        });
    }
    if next == '!' || next == '?' {
        let end = rest.find('>').map(|p| start + 1 + p + 1).unwrap_or(s.len());
        return Some(Tag {
            kind: Markup::Other,
            self_closing: false,
            end,
        });
    }
    let (closing, name_start) = if next == '/' { (true, 1) } else { (false, 0) };
    let after = &rest[name_start..];
    if !after.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return None;
    }
    let name_len = after
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == ':'))
        .unwrap_or(after.len());
    let name = after[..name_len].to_ascii_lowercase();

    // Scan to the closing `>`, skipping quoted attribute values. An
    // unterminated quote falls back to the first `>` after it.
    let body_start = start + 1 + name_start + name_len;
    let body = s[body_start..].as_bytes();
    let mut j = 0;
    let mut end = None;
    while j < body.len() {
        match body[j] {
            b'>' => {
                end = Some(j);
                break;
            }
            q @ (b'"' | b'\'') => match body[j + 1..].iter().position(|&c| c == q) {
                Some(p) => j += p + 2,
                None => j += 1,
            },
            _ => j += 1,
        }
    }
    let (end, self_closing) = match end {
        Some(j) => (body_start + j + 1, j > 0 && body[j - 1] == b'/'),
        None => (s.len(), false),
    };
    Some(Tag {
        kind: Markup::Element { name, closing },
        self_closing,
        end,
    })
}

/// Returns the offset just past `</name ...>`, or the end of input.
fn skip_raw_text(s: &str, from: usize, name: &str) -> usize {
    let lower = s[from..].to_ascii_lowercase();
    let needle = format!("</{name}");
    let mut search = 0;
    while let Some(p) = lower[search..].find(&needle) {
        let at = search + p;
        let after = lower.as_bytes().get(at + needle.len()).copied();
        if matches!(after, None | Some(b'>' | b' ' | b'\t' | b'\n' | b'\r' | b'/')) {
            return match lower[at..].find('>') {
                Some(q) => from + at + q + 1,
                None => s.len(),
            };
        }
        search = at + needle.len();
    }
    s.len()
}

/// Decodes `&amp; &lt; &gt; &quot; &apos; &nbsp;` and numeric references.
/// Anything else starting with `&` is kept literally.
pub fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    decode_entities_into(text, &mut out);
    out
}

fn decode_entities_into(text: &str, out: &mut String) {
    let mut rest = text;
    while let Some(p) = rest.find('&') {
        out.push_str(&rest[..p]);
        let tail = &rest[p..];
        match parse_entity(tail) {
            Some((c, len)) => {
                out.push(c);
                rest = &tail[len..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
}

fn parse_entity(s: &str) -> Option<(char, usize)> {
    let semi = s.bytes().take(12).position(|b| b == b';')?;
    let body = &s[1..semi];
    let c = match body {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        _ => {
            let code = if let Some(hex) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok()?
            } else if let Some(dec) = body.strip_prefix('#') {
                dec.parse::<u32>().ok()?
            } else {
                return None;
            };
            char::from_u32(code).filter(|&c| c != '\0').unwrap_or('\u{fffd}')
        }
    };
    Some((c, semi + 1))
}
