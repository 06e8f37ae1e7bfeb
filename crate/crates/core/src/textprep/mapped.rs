//! Text-level stages that rewrite characters while remembering, for every
//! output character, the span of original characters it came from.

use regex::Regex;
use unicode_normalization::char::{canonical_combining_class, compose};
use unicode_normalization::{is_nfc, UnicodeNormalization};

/// Text plus a per-character origin map into the raw input.
///
/// `spans[i]` is the half-open range of raw character offsets that produced
/// the `i`-th character of `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedText {
    chars: Vec<char>,
    spans: Vec<(usize, usize)>,
}

impl MappedText {
    pub fn new(raw: &str) -> Self {
        let chars: Vec<char> = raw.chars().collect();
        let spans = (0..chars.len()).map(|i| (i, i + 1)).collect();
        MappedText { chars, spans }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    fn with_capacity(n: usize) -> Self {
        MappedText {
            chars: Vec::with_capacity(n),
            spans: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, c: char, span: (usize, usize)) {
        self.chars.push(c);
        self.spans.push(span);
    }
}

fn is_line_break(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{85}' | '\u{2028}' | '\u{2029}')
}

/// Drops pattern matches and control characters, then collapses space runs.
///
/// Tabs count as spaces. Line-break characters survive so that normalization
/// can fold them to `\n`.
pub fn remove_noise(input: &MappedText, patterns: &[Regex]) -> MappedText {
    let mut keep = vec![true; input.len()];
    if !patterns.is_empty() {
        let text = input.text();
        // byte offset -> char index
        let mut char_at = vec![0usize; text.len() + 1];
        for (ci, (bi, _)) in text.char_indices().enumerate() {
            char_at[bi] = ci;
        }
        char_at[text.len()] = input.len();
        for pattern in patterns {
            for m in pattern.find_iter(&text) {
                for k in keep.iter_mut().take(char_at[m.end()]).skip(char_at[m.start()]) {
                    *k = false;
                }
            }
        }
    }

    let mut out = MappedText::with_capacity(input.len());
    let mut last_space = false;
    for (i, &c) in input.chars.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let c = if c == '\t' { ' ' } else { c };
        if c.is_control() && !is_line_break(c) {
            continue;
        }
        if c == ' ' {
            if last_space {
                continue;
            }
            last_space = true;
        } else {
            last_space = false;
        }
        out.push(c, input.spans[i]);
    }
    out
}

fn fold_quote(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{02BC}' => '\'',
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => '"',
        other => other,
    }
}

/// NFC, curly quotes to ASCII, and every newline convention to `\n`.
pub fn normalize(input: &MappedText) -> MappedText {
    let composed = nfc(input);
    let mut out = MappedText::with_capacity(composed.len());
    let mut i = 0;
    while i < composed.len() {
        let c = composed.chars[i];
        let span = composed.spans[i];
        if c == '\r' && composed.chars.get(i + 1) == Some(&'\n') {
            out.push('\n', (span.0, composed.spans[i + 1].1));
            i += 2;
            continue;
        }
        let c = if is_line_break(c) { '\n' } else { fold_quote(c) };
        out.push(c, span);
        i += 1;
    }
    out
}

/// NFC composition applied cluster by cluster so each output character can
/// inherit the union span of the cluster it was composed from.
fn nfc(input: &MappedText) -> MappedText {
    let text = input.text();
    if is_nfc(&text) {
        return input.clone();
    }
    let mut out = MappedText::with_capacity(input.len());
    let mut start = 0;
    while start < input.len() {
        let mut end = start + 1;
        let mut cluster: String = input.chars[start].to_string();
        while end < input.len() {
            let next = input.chars[end];
            let last = cluster.nfc().last().unwrap_or(next);
            if canonical_combining_class(next) != 0 || compose(last, next).is_some() {
                cluster.push(next);
                end += 1;
            } else {
                break;
            }
        }
        let span = (input.spans[start].0, input.spans[end - 1].1);
        for c in cluster.nfc() {
            out.push(c, span);
        }
        start = end;
    }
    out
}
