//! Relation classification, interrogative selection and the sentence
//! templates for every (kind, target, category) combination.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{Lexicon, RelationCategory, RelationSpec};
use crate::kg::EntityClass;

/// A relation's grammar, either looked up or guessed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedRelation {
    pub spec: RelationSpec,
    /// `false` when the heuristic fallback produced `spec`.
    pub from_lexicon: bool,
    pub low_confidence: bool,
}

impl ResolvedRelation {
    pub fn category(&self) -> RelationCategory {
        self.spec.category
    }

    /// Passive relations describe completed events and take the past
    /// auxiliary; everything else takes the present one.
    pub fn aux(&self) -> &str {
        match self.spec.category {
            RelationCategory::VerbPassive => &self.spec.aux_past,
            _ => &self.spec.aux_present,
        }
    }

    pub fn passive_surface(&self) -> &str {
        self.spec.surface_passive.as_deref().unwrap_or(&self.spec.label)
    }

    /// Whether the relation places its object somewhere ("educated at",
    /// "located in", "place of birth").
    pub fn is_locative(&self) -> bool {
        let l = self.spec.label.as_str();
        let surface = self.passive_surface();
        LOCATIVE_ENDINGS
            .iter()
            .any(|end| l.ends_with(end) || surface.ends_with(end))
            || l.starts_with("place of")
            || l == "location"
            || l == "venue"
    }
}

const LOCATIVE_ENDINGS: [&str; 3] = [" at", " in", " on"];

const PASSIVE_PREPOSITIONS: [&str; 8] = ["by", "at", "in", "on", "from", "to", "with", "for"];

// Closed list; anything else defaults to a noun.
const ACTIVE_VERBS: [&str; 20] = [
    "follows", "replaces", "depicts", "owns", "contains", "uses", "produces", "plays", "speaks",
    "employs", "manufactures", "operates", "publishes", "affects", "treats", "causes", "has",
    "includes", "represents", "borders",
];

/// Looks `label` up in the lexicon, falling back to a suffix heuristic.
pub fn resolve_relation(label: &str, lexicon: &Lexicon) -> ResolvedRelation {
    if let Some(spec) = lexicon.get(label) {
        return ResolvedRelation {
            spec: spec.clone(),
            from_lexicon: true,
            low_confidence: false,
        };
    }
    let trimmed = label.trim();
    let words: Vec<&str> = trimmed.split_whitespace().collect();
    let mut spec = RelationSpec {
        label: label.to_string(),
        category: RelationCategory::Noun,
        aux_present: "is".into(),
        aux_past: "was".into(),
        surface_passive: None,
        object_class_hint: None,
        subject_class_hint: None,
    };
    let passive = match words.as_slice() {
        [.., verb, prep] => verb.ends_with("ed") && PASSIVE_PREPOSITIONS.contains(prep),
        [verb] => verb.ends_with("ed"),
        [] => false,
    };
    if passive {
        spec.category = RelationCategory::VerbPassive;
        spec.surface_passive = Some(trimmed.to_string());
    } else if words.first().is_some_and(|w| ACTIVE_VERBS.contains(w)) {
        spec.category = RelationCategory::VerbActive;
        spec.aux_present = "does".into();
        spec.aux_past = "did".into();
    }
    ResolvedRelation {
        spec,
        from_lexicon: false,
        low_confidence: trimmed.is_empty(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Subject,
    Object,
}

/// Interrogative pronoun table. The default follows the entity class; any
/// class can be overridden.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interrogatives {
    #[serde(default)]
    pub overrides: HashMap<EntityClass, String>,
}

impl Interrogatives {
    pub fn pronoun(&self, class: EntityClass, relation: &ResolvedRelation, position: Target) -> String {
        if let Some(p) = self.overrides.get(&class) {
            return p.clone();
        }
        interrogative_for(class, relation, position).to_string()
    }
}

/// Question word for an entity of `class` sitting at `position` of `relation`.
///
/// When the object is asked about through a noun relation the noun already
/// names the kind of answer ("What is the capital of USA?"), so only persons
/// get a distinct pronoun there.
pub fn interrogative_for(class: EntityClass, relation: &ResolvedRelation, position: Target) -> &'static str {
    use EntityClass::*;
    if class == Person {
        return "Who";
    }
    let noun = relation.category() == RelationCategory::Noun;
    match position {
        Target::Object if noun => "What",
        Target::Object => match class {
            Date => "When",
            City | Place | Country | Organization if relation.is_locative() => "Where",
            Country => "Which country",
            City => "Which city",
            Place => "What place",
            _ => "What",
        },
        Target::Subject => match class {
            Country => "Which country",
            City => "Which city",
            Place => "Which place",
            Organization => "Which organization",
            CreativeWork => "Which work",
            Date => "When",
            _ => "What",
        },
    }
}

/// Bare verb from a third-person label ("follows" -> "follow").
pub fn base_form(verb_phrase: &str) -> String {
    let mut words = verb_phrase.split_whitespace();
    let Some(head) = words.next() else {
        return String::new();
    };
    let base = if head == "has" {
        "have".to_string()
    } else if let Some(stem) = head.strip_suffix("ies") {
        format!("{stem}y")
    } else if ["sses", "shes", "ches", "xes", "zes"].iter().any(|s| head.ends_with(s)) {
        head[..head.len() - 2].to_string()
    } else if head.ends_with("ss") {
        head.to_string()
    } else if let Some(stem) = head.strip_suffix('s') {
        stem.to_string()
    } else {
        head.to_string()
    };
    std::iter::once(base.as_str())
        .chain(words)
        .collect::<Vec<_>>()
        .join(" ")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn possessive(pronoun: &str) -> String {
    if pronoun == "Who" {
        "Whose".to_string()
    } else {
        format!("{pronoun}'s")
    }
}

/// Yes-No question asserting `(subject, relation, object)`.
pub fn yes_no_text(subject: &str, relation: &ResolvedRelation, object: &str) -> String {
    let aux = capitalize(relation.aux());
    let label = &relation.spec.label;
    match relation.category() {
        RelationCategory::Noun => format!("{aux} {object} the {label} of {subject}?"),
        RelationCategory::VerbActive => format!("{aux} {subject} {} {object}?", base_form(label)),
        RelationCategory::VerbPassive => {
            format!("{aux} {subject} {} {object}?", relation.passive_surface())
        }
    }
}

/// Stem asking for the subject, given the object.
pub fn subject_query_text(pronoun: &str, relation: &ResolvedRelation, object: &str) -> String {
    let aux = relation.aux();
    let label = &relation.spec.label;
    match relation.category() {
        RelationCategory::Noun => format!("{} {label} {aux} {object}?", possessive(pronoun)),
        RelationCategory::VerbActive => format!("{pronoun} {label} {object}?"),
        RelationCategory::VerbPassive => {
            format!("{pronoun} {aux} {} {object}?", relation.passive_surface())
        }
    }
}

/// Stem asking for the object, given the subject.
pub fn object_query_text(pronoun: &str, relation: &ResolvedRelation, subject: &str) -> String {
    let aux = relation.aux();
    let label = &relation.spec.label;
    match relation.category() {
        RelationCategory::Noun => format!("{pronoun} {aux} the {label} of {subject}?"),
        RelationCategory::VerbActive => format!("{pronoun} {aux} {subject} {}?", base_form(label)),
        RelationCategory::VerbPassive => {
            format!("{pronoun} {aux} {subject} {}?", relation.passive_surface())
        }
    }
}

/// "Michelle Obama's spouse"
pub fn composite_subject(subject: &str, noun_relation: &str) -> String {
    format!("{subject}'s {noun_relation}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::default_lexicon;

    fn rel(label: &str) -> ResolvedRelation {
        resolve_relation(label, &default_lexicon())
    }

    #[test]
    fn lexicon_hits() {
        let capital = rel("capital");
        assert!(capital.from_lexicon);
        assert_eq!(capital.category(), RelationCategory::Noun);
        assert_eq!(capital.aux(), "is");
        let edu = rel("educated at");
        assert_eq!(edu.category(), RelationCategory::VerbPassive);
        assert_eq!(edu.aux(), "was");
    }

    #[test]
    fn heuristic_fallback() {
        let empty = resolve_relation("", &Lexicon::new());
        assert_eq!(empty.category(), RelationCategory::Noun);
        assert!(empty.low_confidence);
        assert!(!empty.from_lexicon);

        let lex = Lexicon::new();
        assert_eq!(resolve_relation("founded by", &lex).category(), RelationCategory::VerbPassive);
        assert_eq!(resolve_relation("buried in", &lex).category(), RelationCategory::VerbPassive);
        assert_eq!(resolve_relation("replaces", &lex).category(), RelationCategory::VerbActive);
        assert_eq!(resolve_relation("head coach", &lex).category(), RelationCategory::Noun);
        assert_eq!(resolve_relation("replaces", &lex).aux(), "does");
    }

    #[test]
    fn pronouns() {
        let capital = rel("capital");
        assert_eq!(interrogative_for(EntityClass::Country, &capital, Target::Subject), "Which country");
        assert_eq!(interrogative_for(EntityClass::Person, &rel("child"), Target::Object), "Who");
        assert_eq!(interrogative_for(EntityClass::Other, &capital, Target::Object), "What");
        assert_eq!(interrogative_for(EntityClass::Other, &capital, Target::Subject), "What");
        assert_eq!(
            interrogative_for(EntityClass::Organization, &rel("educated at"), Target::Object),
            "Where"
        );
        assert_eq!(interrogative_for(EntityClass::City, &capital, Target::Object), "What");
    }

    #[test]
    fn every_class_position_category_has_a_pronoun() {
        let lex = Lexicon::new();
        for label in ["capital", "replaces", "founded by"] {
            let r = resolve_relation(label, &lex);
            for class in EntityClass::ALL {
                for pos in [Target::Subject, Target::Object] {
                    assert!(!interrogative_for(class, &r, pos).is_empty());
                }
            }
        }
        let mut table = Interrogatives::default();
        table.overrides.insert(EntityClass::City, "Which town".into());
        assert_eq!(table.pronoun(EntityClass::City, &rel("capital"), Target::Subject), "Which town");
    }

    #[test]
    fn base_forms() {
        assert_eq!(base_form("follows"), "follow");
        assert_eq!(base_form("replaces"), "replace");
        assert_eq!(base_form("carries"), "carry");
        assert_eq!(base_form("watches over"), "watch over");
        assert_eq!(base_form("has"), "have");
        assert_eq!(base_form("depicts"), "depict");
    }

    #[test]
    fn templates_per_category() {
        let capital = rel("capital");
        assert_eq!(
            yes_no_text("the USA", &capital, "Washington D.C."),
            "Is Washington D.C. the capital of the USA?"
        );
        assert_eq!(
            subject_query_text("Which country", &capital, "Washington D.C."),
            "Which country's capital is Washington D.C.?"
        );
        assert_eq!(object_query_text("What", &capital, "USA"), "What is the capital of USA?");
        assert_eq!(subject_query_text("Who", &rel("child"), "Ivanka Trump"), "Whose child is Ivanka Trump?");

        let edu = rel("educated at");
        let who = composite_subject("Michelle Obama", "spouse");
        assert_eq!(
            yes_no_text(&who, &edu, "Harvard University"),
            "Was Michelle Obama's spouse educated at Harvard University?"
        );
        assert_eq!(
            object_query_text("Where", &edu, &who),
            "Where was Michelle Obama's spouse educated at?"
        );
        assert_eq!(subject_query_text("Who", &edu, "MIT"), "Who was educated at MIT?");

        let follows = rel("follows");
        assert_eq!(yes_no_text("Windows 8", &follows, "Windows 7"), "Does Windows 8 follow Windows 7?");
        assert_eq!(subject_query_text("What", &follows, "Windows 7"), "What follows Windows 7?");
        assert_eq!(object_query_text("What", &follows, "Windows 8"), "What does Windows 8 follow?");
    }
}
