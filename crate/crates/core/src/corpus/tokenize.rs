//! Word-level tokenization shared by segmentation, vocabulary building,
//! ROUGE scoring and trigram blocking.

/// Punctuation that attaches to the preceding token when detokenizing.
const CLOSING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '%'];
/// Punctuation that attaches to the following token when detokenizing.
const OPENING: &[char] = &['(', '[', '{'];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

/// True when every character of the token is punctuation.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punct)
}

/// Lowercases, splits on whitespace and detaches leading and trailing
/// punctuation characters as single-character tokens.
///
/// `"Hello, world."` becomes `["hello", ",", "world", "."]`. Punctuation
/// inside a word (`"don't"`, `"3.5"`) stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut start = 0;
        while start < chars.len() && is_punct(chars[start]) {
            start += 1;
        }
        if start == chars.len() {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let mut end = chars.len();
        while end > start && is_punct(chars[end - 1]) {
            end -= 1;
        }
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

/// Inverse of [`tokenize`] up to case and whitespace:
/// `tokenize(&detokenize(&t)) == t` for every token list `t` produced by
/// `tokenize`.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for tok in tokens {
        let tok = tok.as_ref();
        let single = {
            let mut it = tok.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            }
        };
        let closes = single.is_some_and(|c| CLOSING.contains(&c));
        if !glue_next && !closes {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = single.is_some_and(|c| OPENING.contains(&c));
    }
    out
}

/// Tokens used for ROUGE and trigram matching: lowercase words with
/// punctuation-only tokens removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_punctuation_token(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detaches_trailing_punctuation() {
        assert_eq!(tokenize("Hello."), vec!["hello", "."]);
        assert_eq!(tokenize("(a, b)"), vec!["(", "a", ",", "b", ")"]);
        assert_eq!(tokenize("don't 3.5"), vec!["don't", "3.5"]);
        assert_eq!(tokenize("..."), vec![".", ".", "."]);
    }

    #[test]
    fn content_tokens_drop_punctuation() {
        assert_eq!(content_tokens("The cat, sat."), vec!["the", "cat", "sat"]);
    }

    #[test]
    fn detokenize_glues_punctuation() {
        assert_eq!(detokenize(&["a", "(", "b", ")", "."]), "a (b).");
    }

    proptest! {
        #[test]
        fn tokenize_detokenize_round_trip(s in "[a-zA-Z .,;:!?()'-]{0,60}") {
            let toks = tokenize(&s);
            prop_assert_eq!(tokenize(&detokenize(&toks)), toks);
        }
    }
}
