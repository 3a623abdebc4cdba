use std::collections::HashSet;
use std::sync::OnceLock;

const STOPWORDS_RAW: &str = include_str!("../../data/stopwords.txt");

/// Lowercases `text`, splits on Unicode whitespace and peels leading and
/// trailing ASCII punctuation off every chunk, one token per character.
///
/// Inner punctuation ("don't", "e-mail") stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let lowered = chunk.to_lowercase();
        let chars: Vec<char> = lowered.chars().collect();
        let start = chars
            .iter()
            .position(|c| !c.is_ascii_punctuation())
            .unwrap_or(chars.len());
        let end = chars
            .iter()
            .rposition(|c| !c.is_ascii_punctuation())
            .map_or(start, |i| i + 1);
        for c in &chars[..start] {
            tokens.push(c.to_string());
        }
        if start < end {
            tokens.push(chars[start..end].iter().collect());
        }
        for c in &chars[end.max(start)..] {
            tokens.push(c.to_string());
        }
    }
    tokens
}

/// The shipped English stopword list (function words plus ASCII punctuation).
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

pub fn remove_stopwords<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_stopword(t))
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_trailing_question_mark() {
        assert_eq!(
            tokenize("How do you start a bakery?"),
            ["how", "do", "you", "start", "a", "bakery", "?"]
        );
    }

    #[test]
    fn empty_and_single() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n").is_empty());
        assert_eq!(tokenize("Bakery"), ["bakery"]);
    }

    #[test]
    fn punctuation_edges() {
        assert_eq!(tokenize("(hello),"), ["(", "hello", ")", ","]);
        assert_eq!(tokenize("don't"), ["don't"]);
        assert_eq!(tokenize("..."), [".", ".", "."]);
        assert_eq!(tokenize("  A   b "), ["a", "b"]);
    }

    #[test]
    fn stopword_removal() {
        let toks = ["how", "do", "you", "start", "a", "bakery"];
        assert_eq!(remove_stopwords(&toks), ["start", "bakery"]);
        assert!(remove_stopwords::<&str>(&[]).is_empty());
        assert_eq!(remove_stopwords(&["bakery", "bakery"]), ["bakery", "bakery"]);
    }

    #[test]
    fn stopword_list_size() {
        let n = stopwords().len();
        assert!((140..=200).contains(&n), "{n}");
        assert!(is_stopword("?"));
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(s in "[ a-zA-Z0-9?!.,'()-]{0,40}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn stopword_removal_idempotent(words in proptest::collection::vec("[a-z]{1,5}", 0..12)) {
            let once = remove_stopwords(&words);
            prop_assert_eq!(remove_stopwords(&once), once);
        }
    }
}
