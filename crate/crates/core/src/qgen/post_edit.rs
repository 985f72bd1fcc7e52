//! Optional grammar filtering and rewriting of generated questions.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Question;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostEditMode {
    #[default]
    None,
    Filter,
    Rewrite,
}

#[derive(Debug, Error)]
#[error("post-edit provider failed: {0}")]
pub struct ProviderError(pub String);

pub trait GrammarChecker {
    /// Human-readable descriptions of every problem found; empty means clean.
    fn issues(&self, text: &str) -> Result<Vec<String>, ProviderError>;
}

pub trait Rewriter {
    fn rewrite(&self, text: &str) -> Result<String, ProviderError>;
}

/// Instruction sent along with each question when rewriting.
pub const REWRITE_INSTRUCTION: &str = "Rewrite the following question so that it is grammatical and reads naturally. \
Do not change its meaning, do not add or remove any entity, and keep it a single question ending with '?'. \
Reply with the rewritten question only.";

/// Lightweight offline checker for the mistakes template filling can
/// introduce.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleChecker;

impl GrammarChecker for RuleChecker {
    fn issues(&self, text: &str) -> Result<Vec<String>, ProviderError> {
        let mut found = Vec::new();
        if !text.ends_with('?') {
            found.push("missing question mark".to_string());
        }
        if text.chars().next().is_some_and(|c| c.is_lowercase()) {
            found.push("sentence starts in lowercase".to_string());
        }
        if text.contains("  ") {
            found.push("repeated whitespace".to_string());
        }
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .collect();
        for pair in words.windows(2) {
            if !pair[0].is_empty() && pair[0] == pair[1] {
                found.push(format!("repeated word `{}`", pair[0]));
            }
        }
        if text.matches('?').count() > 1 {
            found.push("several question marks".to_string());
        }
        Ok(found)
    }
}

/// Returned alongside the edited question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOutcome {
    Unchanged,
    Rewritten,
    /// The rewrite was structurally invalid; the original text was kept.
    RewriteRejected,
    /// The provider failed; the question passed through with a warning flag.
    ProviderFailed,
    Filtered,
}

pub const FLAG_POST_EDIT_FAILED: &str = "post_edit_provider_failed";

fn rewrite_is_valid(original: &Question, text: &str) -> bool {
    let text = text.trim();
    !text.is_empty()
        && text.ends_with('?')
        && !text.contains('\n')
        && text.matches('?').count() == 1
        && (original.options.is_none() || !mentions_option_letters(text))
}

// The stem of a multiple-choice question must not absorb the options.
fn mentions_option_letters(text: &str) -> bool {
    ["A.", "B.", "C.", "D."].iter().filter(|l| text.contains(*l)).count() >= 2
}

pub fn post_edit(
    mut question: Question,
    mode: PostEditMode,
    checker: Option<&dyn GrammarChecker>,
    rewriter: Option<&dyn Rewriter>,
) -> (Option<Question>, EditOutcome) {
    match mode {
        PostEditMode::None => (Some(question), EditOutcome::Unchanged),
        PostEditMode::Filter => {
            let checker = checker.unwrap_or(&RuleChecker);
            match checker.issues(&question.text) {
                Ok(issues) if issues.is_empty() => (Some(question), EditOutcome::Unchanged),
                Ok(_) => (None, EditOutcome::Filtered),
                Err(e) => {
                    warn!("grammar check failed for {}: {e}", question.id);
                    question.flag(FLAG_POST_EDIT_FAILED);
                    (Some(question), EditOutcome::ProviderFailed)
                }
            }
        }
        PostEditMode::Rewrite => {
            let Some(rewriter) = rewriter else {
                question.flag(FLAG_POST_EDIT_FAILED);
                return (Some(question), EditOutcome::ProviderFailed);
            };
            match rewriter.rewrite(&question.text) {
                Ok(text) if text.trim() == question.text => (Some(question), EditOutcome::Unchanged),
                Ok(text) if rewrite_is_valid(&question, &text) => {
                    question.text = text.trim().to_string();
                    (Some(question), EditOutcome::Rewritten)
                }
                Ok(_) => (Some(question), EditOutcome::RewriteRejected),
                Err(e) => {
                    warn!("rewrite failed for {}: {e}", question.id);
                    question.flag(FLAG_POST_EDIT_FAILED);
                    (Some(question), EditOutcome::ProviderFailed)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triplet;
    use crate::qgen::{Gold, QuestionKind};

    fn q(text: &str) -> Question {
        Question {
            id: "q1".into(),
            kind: QuestionKind::YesNo,
            hops: 1,
            topic: "Country".into(),
            domain: "Place".into(),
            text: text.into(),
            options: None,
            gold: Gold::YesNo(true),
            provenance: vec![Triplet::new("Q30", "capital", "Q61")],
            negative_substitute: None,
            target: None,
            flags: Vec::new(),
        }
    }

    struct Always(Vec<String>);
    impl GrammarChecker for Always {
        fn issues(&self, _: &str) -> Result<Vec<String>, ProviderError> {
            Ok(self.0.clone())
        }
    }

    struct Echo;
    impl Rewriter for Echo {
        fn rewrite(&self, text: &str) -> Result<String, ProviderError> {
            Ok(text.to_string())
        }
    }

    struct Fixed(&'static str);
    impl Rewriter for Fixed {
        fn rewrite(&self, _: &str) -> Result<String, ProviderError> {
            Ok(self.0.to_string())
        }
    }

    struct Broken;
    impl Rewriter for Broken {
        fn rewrite(&self, _: &str) -> Result<String, ProviderError> {
            Err(ProviderError("down".into()))
        }
    }

    #[test]
    fn grammatical_question_survives_filter() {
        let original = q("Is Washington D.C. the capital of USA?");
        let (out, outcome) = post_edit(original.clone(), PostEditMode::Filter, None, None);
        assert_eq!(out, Some(original));
        assert_eq!(outcome, EditOutcome::Unchanged);
    }

    #[test]
    fn flagged_question_is_dropped() {
        let checker = Always(vec!["agreement".into()]);
        let (out, outcome) = post_edit(q("Is it?"), PostEditMode::Filter, Some(&checker), None);
        assert!(out.is_none());
        assert_eq!(outcome, EditOutcome::Filtered);
    }

    #[test]
    fn rule_checker_catches_template_slips() {
        let issues = RuleChecker.issues("is the the capital of USA").unwrap();
        assert_eq!(issues.len(), 3, "{issues:?}");
    }

    #[test]
    fn identity_rewrite() {
        let original = q("Is Washington D.C. the capital of USA?");
        let (out, outcome) = post_edit(original.clone(), PostEditMode::Rewrite, None, Some(&Echo));
        assert_eq!(out, Some(original));
        assert_eq!(outcome, EditOutcome::Unchanged);
    }

    #[test]
    fn rewrite_keeps_answer_and_provenance() {
        let original = q("Is Washington D.C. the capital of USA?");
        let (out, outcome) = post_edit(
            original.clone(),
            PostEditMode::Rewrite,
            None,
            Some(&Fixed("Is Washington D.C. the capital city of the USA?")),
        );
        let out = out.unwrap();
        assert_eq!(outcome, EditOutcome::Rewritten);
        assert_eq!(out.text, "Is Washington D.C. the capital city of the USA?");
        assert_eq!(out.gold, original.gold);
        assert_eq!(out.provenance, original.provenance);
    }

    #[test]
    fn invalid_rewrite_falls_back() {
        let original = q("Is Washington D.C. the capital of USA?");
        let (out, outcome) =
            post_edit(original.clone(), PostEditMode::Rewrite, None, Some(&Fixed("Sure! Here it is.")));
        assert_eq!(out.unwrap().text, original.text);
        assert_eq!(outcome, EditOutcome::RewriteRejected);
    }

    #[test]
    fn provider_failure_passes_through_flagged() {
        let (out, outcome) = post_edit(q("Is it?"), PostEditMode::Rewrite, None, Some(&Broken));
        let out = out.unwrap();
        assert_eq!(outcome, EditOutcome::ProviderFailed);
        assert_eq!(out.flags, [FLAG_POST_EDIT_FAILED]);
    }
}
