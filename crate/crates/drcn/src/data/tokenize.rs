//! Tokenization: lowercase, split on whitespace, and separate punctuation
//! from alphanumeric runs. Pure — no locale, no external resources — so the
//! same string yields the same tokens on every platform.

pub fn tokenize(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in s.chars() {
        if c.is_whitespace() {
            flush(&mut current, &mut tokens);
        } else if c.is_alphanumeric() || c == '\'' {
            // keep apostrophes inside contractions ("don't")
            current.extend(c.to_lowercase());
        } else {
            flush(&mut current, &mut tokens);
            let mut p = String::new();
            p.extend(c.to_lowercase());
            tokens.push(p);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("Two bicyclists, in spandex!"),
            vec!["two", "bicyclists", ",", "in", "spandex", "!"]
        );
    }

    #[test]
    fn keeps_contractions_together() {
        assert_eq!(tokenize("Don't stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn pure_and_idempotent_on_repeats() {
        let s = "A man, riding his bike - fast.";
        let a = tokenize(s);
        let b = tokenize(s);
        assert_eq!(a, b);
        assert_eq!(a, tokenize(&a.join(" ")));
    }

    #[test]
    fn empty_and_whitespace_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n").is_empty());
    }
}
