//! Fact triples and claim patterns.
//!
//! All knowledge in the kernel is expressed as `(subject, relation, object)`
//! string triples. Requirement predicates, callback match predicates, and
//! confirm coverage declarations are patterns over those triples, where any
//! position may be the wildcard `"*"`.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A concrete knowledge claim: `(subject, relation, object)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl FactTriple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for FactTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

/// One position of a claim pattern: an exact string or the wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    Any,
    Exact(String),
}

impl PatternTerm {
    pub fn matches(&self, value: &str) -> bool {
        match self {
            PatternTerm::Any => true,
            PatternTerm::Exact(s) => s == value,
        }
    }

    /// True when the two terms can match a common value.
    pub fn overlaps(&self, other: &PatternTerm) -> bool {
        match (self, other) {
            (PatternTerm::Any, _) | (_, PatternTerm::Any) => true,
            (PatternTerm::Exact(a), PatternTerm::Exact(b)) => a == b,
        }
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Any => write!(f, "*"),
            PatternTerm::Exact(s) => write!(f, "{s}"),
        }
    }
}

// Serialized as a bare string; "*" is the wildcard.
impl Serialize for PatternTerm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PatternTerm::Any => serializer.serialize_str("*"),
            PatternTerm::Exact(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for PatternTerm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(if s == "*" {
            PatternTerm::Any
        } else {
            PatternTerm::Exact(s)
        })
    }
}

/// A pattern over fact triples, wildcardable in every position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClaimPattern {
    pub subject: PatternTerm,
    pub relation: PatternTerm,
    pub object: PatternTerm,
}

impl ClaimPattern {
    pub fn exact(subject: &str, relation: &str, object: &str) -> Self {
        Self {
            subject: PatternTerm::Exact(subject.to_string()),
            relation: PatternTerm::Exact(relation.to_string()),
            object: PatternTerm::Exact(object.to_string()),
        }
    }

    /// Pattern `(subject, relation, *)`.
    pub fn with_any_object(subject: &str, relation: &str) -> Self {
        Self {
            subject: PatternTerm::Exact(subject.to_string()),
            relation: PatternTerm::Exact(relation.to_string()),
            object: PatternTerm::Any,
        }
    }

    pub fn matches(&self, fact: &FactTriple) -> bool {
        self.subject.matches(&fact.subject)
            && self.relation.matches(&fact.relation)
            && self.object.matches(&fact.object)
    }

    /// True when some concrete triple satisfies both patterns.
    pub fn overlaps(&self, other: &ClaimPattern) -> bool {
        self.subject.overlaps(&other.subject)
            && self.relation.overlaps(&other.relation)
            && self.object.overlaps(&other.object)
    }
}

impl fmt::Display for ClaimPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

/// A fact stored in a lexical domain, carrying its retrieval tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedFact {
    pub fact: FactTriple,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_matches_everything() {
        let p = ClaimPattern {
            subject: PatternTerm::Any,
            relation: PatternTerm::Any,
            object: PatternTerm::Any,
        };
        assert!(p.matches(&FactTriple::new("a", "b", "c")));
    }

    #[test]
    fn exact_pattern_requires_equality() {
        let p = ClaimPattern::exact("trip", "rail", "booked");
        assert!(p.matches(&FactTriple::new("trip", "rail", "booked")));
        assert!(!p.matches(&FactTriple::new("trip", "rail", "cancelled")));
    }

    #[test]
    fn overlap_is_symmetric_and_respects_exact_terms() {
        let a = ClaimPattern::with_any_object("trip", "rail");
        let b = ClaimPattern::exact("trip", "rail", "booked");
        let c = ClaimPattern::exact("trip", "hotel", "booked");
        assert!(a.overlaps(&b));
        assert!(b.overlaps(&a));
        assert!(!b.overlaps(&c));
    }

    #[test]
    fn pattern_term_round_trips_through_json() {
        let p = ClaimPattern::with_any_object("x", "y");
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"*\""));
        let back: ClaimPattern = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }
}
