use super::EvalError;

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const PREFIXES: [&str; 5] = ["final answer:", "the answer is", "answer is", "answer:", "option"];

/// Lowercase, punctuation to spaces, articles dropped, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_prefixes(text: &str) -> &str {
    let mut t = text.trim();
    loop {
        let lower = t.to_ascii_lowercase();
        let Some(p) = PREFIXES.iter().find(|p| lower.starts_with(*p)) else {
            return t;
        };
        t = t[p.len()..].trim_start();
    }
}

fn letter_index(c: char, n: usize) -> Option<usize> {
    let i = (c.to_ascii_uppercase() as u8).checked_sub(b'A')? as usize;
    (c.is_ascii_alphabetic() && i < n).then_some(i)
}

/// `(X)`, `X.`, `X)`, `X:` at the start, or a reply that is just a letter.
fn leading_letter(text: &str, n: usize) -> Option<usize> {
    let t = strip_prefixes(text);
    let chars: Vec<char> = t.chars().take(3).collect();
    match chars.as_slice() {
        ['(', c, ')', ..] => letter_index(*c, n),
        [c, d, ..] if c.is_ascii_uppercase() && matches!(d, '.' | ')' | ':') => letter_index(*c, n),
        _ => {
            let bare = t.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
            let mut it = bare.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => letter_index(c, n),
                _ => None,
            }
        }
    }
}

/// Map an LLM reply onto an option index.
///
/// Rules in order: normalized exact match, leading option letter, then
/// containment of exactly one option's normalized text.
pub fn match_answer(reply: &str, options: &[String]) -> Result<usize, EvalError> {
    if options.is_empty() {
        return Err(EvalError::Validation("no options to match against".into()));
    }
    let norm = normalize(reply);
    let opts: Vec<String> = options.iter().map(|o| normalize(o)).collect();

    let exact: Vec<usize> = (0..opts.len())
        .filter(|&i| !norm.is_empty() && opts[i] == norm)
        .collect();
    match exact.as_slice() {
        [i] => return Ok(*i),
        [] => {}
        _ => return Err(EvalError::AmbiguousAnswer(reply.to_string())),
    }

    if let Some(i) = leading_letter(reply, options.len()) {
        return Ok(i);
    }

    let padded = format!(" {norm} ");
    let contained: Vec<usize> = (0..opts.len())
        .filter(|&i| !opts[i].is_empty() && padded.contains(&format!(" {} ", opts[i])))
        .collect();
    match contained.as_slice() {
        [i] => Ok(*i),
        _ => Err(EvalError::AmbiguousAnswer(reply.to_string())),
    }
}
