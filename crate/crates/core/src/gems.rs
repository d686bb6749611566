//! The 27-term GEMS taxonomy used for static (whole-item) emotion labels.
//!
//! Terms group into nine categories, which in turn group into three
//! superfactors. Multi-word terms keep their spaces; lookup is
//! case-insensitive on the canonical spelling.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Superfactor {
    Sublimity,
    Vitality,
    Unease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Wonder,
    Transcendence,
    Peacefulness,
    Tenderness,
    Nostalgia,
    Power,
    JoyfulActivation,
    Sadness,
    Tension,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Wonder,
        Category::Transcendence,
        Category::Peacefulness,
        Category::Tenderness,
        Category::Nostalgia,
        Category::Power,
        Category::JoyfulActivation,
        Category::Sadness,
        Category::Tension,
    ];

    pub fn superfactor(self) -> Superfactor {
        match self {
            Category::Wonder
            | Category::Transcendence
            | Category::Peacefulness
            | Category::Tenderness
            | Category::Nostalgia => Superfactor::Sublimity,
            Category::Power | Category::JoyfulActivation => Superfactor::Vitality,
            Category::Sadness | Category::Tension => Superfactor::Unease,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Wonder => "Wonder",
            Category::Transcendence => "Transcendence",
            Category::Peacefulness => "Peacefulness",
            Category::Tenderness => "Tenderness",
            Category::Nostalgia => "Nostalgia",
            Category::Power => "Power",
            Category::JoyfulActivation => "Joyful Activation",
            Category::Sadness => "Sadness",
            Category::Tension => "Tension",
        }
    }
}

/// (term, category) in canonical order. The index into this table is the
/// label's identity.
const TERMS: [(&str, Category); 27] = [
    ("Moved", Category::Wonder),
    ("Allured", Category::Wonder),
    ("Filled with wonder", Category::Wonder),
    ("Fascinated", Category::Transcendence),
    ("Overwhelmed", Category::Transcendence),
    ("Feeling of transcendence", Category::Transcendence),
    ("Serene", Category::Peacefulness),
    ("Calm", Category::Peacefulness),
    ("Soothed", Category::Peacefulness),
    ("Tender", Category::Tenderness),
    ("Affectionate", Category::Tenderness),
    ("Mellow", Category::Tenderness),
    ("Nostalgic", Category::Nostalgia),
    ("Sentimental", Category::Nostalgia),
    ("Dreamy", Category::Nostalgia),
    ("Strong", Category::Power),
    ("Energetic", Category::Power),
    ("Triumphant", Category::Power),
    ("Animated", Category::JoyfulActivation),
    ("Bouncy", Category::JoyfulActivation),
    ("Joyful", Category::JoyfulActivation),
    ("Sad", Category::Sadness),
    ("Tearful", Category::Sadness),
    ("Blue", Category::Sadness),
    ("Tense", Category::Tension),
    ("Agitated", Category::Tension),
    ("Nervous", Category::Tension),
];

/// Number of terms in the taxonomy.
pub const NUM_LABELS: usize = TERMS.len();

/// One GEMS term. Cheap to copy; serializes as its canonical spelling.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GemsLabel(u8);

impl GemsLabel {
    pub fn all() -> impl Iterator<Item = GemsLabel> {
        (0..NUM_LABELS as u8).map(GemsLabel)
    }

    pub fn from_index(index: usize) -> Option<GemsLabel> {
        (index < NUM_LABELS).then_some(GemsLabel(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn term(self) -> &'static str {
        TERMS[self.index()].0
    }

    pub fn category(self) -> Category {
        TERMS[self.index()].1
    }

    pub fn superfactor(self) -> Superfactor {
        self.category().superfactor()
    }
}

impl fmt::Debug for GemsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GemsLabel({})", self.term())
    }
}

impl fmt::Display for GemsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.term())
    }
}

/// Resolves a term to its label, ignoring ASCII case and surrounding whitespace.
pub fn gems_lookup(term: &str) -> Result<GemsLabel> {
    let wanted = term.trim();
    TERMS
        .iter()
        .position(|(t, _)| t.eq_ignore_ascii_case(wanted))
        .map(|i| GemsLabel(i as u8))
        .ok_or_else(|| Error::UnknownLabel(term.to_string()))
}

impl std::str::FromStr for GemsLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        gems_lookup(s)
    }
}

impl Serialize for GemsLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.term())
    }
}

impl<'de> Deserialize<'de> for GemsLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        gems_lookup(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn taxonomy_shape() {
        assert_eq!(GemsLabel::all().count(), 27);
        let terms: HashSet<_> = GemsLabel::all().map(|l| l.term().to_lowercase()).collect();
        assert_eq!(terms.len(), 27);
        let cats: HashSet<_> = GemsLabel::all().map(|l| l.category()).collect();
        assert_eq!(cats.len(), 9);
        let sup: HashSet<_> = GemsLabel::all().map(|l| l.superfactor()).collect();
        assert_eq!(sup.len(), 3);
        for c in Category::ALL {
            assert_eq!(GemsLabel::all().filter(|l| l.category() == c).count(), 3);
        }
    }

    #[test]
    fn lookup_examples() {
        let l = gems_lookup("Nostalgic").unwrap();
        assert_eq!(
            (l.term(), l.category(), l.superfactor()),
            ("Nostalgic", Category::Nostalgia, Superfactor::Sublimity)
        );
        let l = gems_lookup("Energetic").unwrap();
        assert_eq!(
            (l.term(), l.category(), l.superfactor()),
            ("Energetic", Category::Power, Superfactor::Vitality)
        );
        assert!(matches!(gems_lookup("Excited"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let l = gems_lookup("feeling OF transcendence").unwrap();
        assert_eq!(l.term(), "Feeling of transcendence");
        assert_eq!(l.superfactor(), Superfactor::Sublimity);
        assert_eq!(gems_lookup("filled with wonder").unwrap().category(), Category::Wonder);
        assert_eq!(gems_lookup("TEARFUL").unwrap().superfactor(), Superfactor::Unease);
    }

    #[test]
    fn serde_uses_term() {
        let l = gems_lookup("joyful").unwrap();
        assert_eq!(serde_json::to_string(&l).unwrap(), "\"Joyful\"");
        let back: GemsLabel = serde_json::from_str("\"joyful\"").unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<GemsLabel>("\"Happy\"").is_err());
    }
}
