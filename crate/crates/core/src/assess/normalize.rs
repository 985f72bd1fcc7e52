//! Exact-match extraction for Yes-No and multiple-choice responses.

use serde::{Deserialize, Serialize};

use crate::qgen::Letter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YesNo {
    Yes,
    No,
    Unparseable,
}

fn words(raw: &str) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Reads a Yes/No answer. A response naming both, or neither, is
/// unparseable.
pub fn normalize_yesno(raw: &str) -> YesNo {
    let words = words(raw);
    let yes = words.iter().any(|w| w == "yes");
    let no = words.iter().any(|w| w == "no");
    match (yes, no) {
        (true, false) => YesNo::Yes,
        (false, true) => YesNo::No,
        _ => YesNo::Unparseable,
    }
}

/// Finds the chosen option letter.
///
/// Upper-case standalone A-D tokens are read anywhere ("The answer is B.").
/// Lower-case letters only count when they are the whole answer or follow
/// "option"/"answer", so the article "a" is not mistaken for a choice.
/// Several distinct letters make the response unparseable.
pub fn extract_mc_letter(raw: &str) -> Option<Letter> {
    let tokens: Vec<&str> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let mut found: Option<Letter> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let mut chars = tok.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            continue;
        };
        let Some(letter) = Letter::from_char(c) else {
            continue;
        };
        let counts = c.is_ascii_uppercase()
            || tokens.len() == 1
            || (i > 0 && matches!(tokens[i - 1].to_lowercase().as_str(), "option" | "answer" | "choice"));
        if !counts {
            continue;
        }
        match found {
            None => found = Some(letter),
            Some(prev) if prev == letter => {}
            Some(_) => return None,
        }
    }
    found
}
