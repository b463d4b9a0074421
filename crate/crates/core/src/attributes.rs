//! Attribute vocabulary, label vectors, attribute similarity and query text.
//!
//! A label vector holds one slot per attribute type (color, shape). Slot
//! values are 1-based positions into the matching vocabulary list, and 0
//! marks an unspecified attribute. Token ids used by the text encoder live in
//! a single space: colors first, then shapes, then object names, so that
//! appending a name never renumbers an existing token.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of attribute slots in a label (color, shape).
pub const LABEL_SLOTS: usize = 2;

pub const COLOR_SLOT: usize = 0;
pub const SHAPE_SLOT: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeVocabulary {
    pub colors: Vec<String>,
    pub shapes: Vec<String>,
    #[serde(default)]
    pub names: Vec<String>,
}

impl Default for AttributeVocabulary {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            colors: owned(&["red", "green", "blue", "yellow", "black"]),
            shapes: owned(&["cube", "cuboid", "cylinder", "sphere"]),
            names: Vec::new(),
        }
    }
}

/// Classification of a single vocabulary token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// 1-based color id.
    Color(u32),
    /// 1-based shape id.
    Shape(u32),
    /// 1-based name id.
    Name(u32),
}

impl AttributeVocabulary {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for tok in self.colors.iter().chain(&self.shapes).chain(&self.names) {
            if !seen.insert(tok.as_str()) {
                return Err(Error::DuplicateToken(tok.clone()));
            }
        }
        Ok(())
    }

    pub fn token_count(&self) -> usize {
        self.colors.len() + self.shapes.len() + self.names.len()
    }

    pub fn color_id(&self, name: &str) -> Option<u32> {
        position(&self.colors, name)
    }

    pub fn shape_id(&self, name: &str) -> Option<u32> {
        position(&self.shapes, name)
    }

    pub fn name_id(&self, name: &str) -> Option<u32> {
        position(&self.names, name)
    }

    pub fn color_name(&self, id: u32) -> Option<&str> {
        nth(&self.colors, id)
    }

    pub fn shape_name(&self, id: u32) -> Option<&str> {
        nth(&self.shapes, id)
    }

    pub fn object_name(&self, id: u32) -> Option<&str> {
        nth(&self.names, id)
    }

    /// Global token id of a token string.
    pub fn token_id(&self, token: &str) -> Option<usize> {
        let (nc, ns) = (self.colors.len(), self.shapes.len());
        if let Some(i) = self.color_id(token) {
            Some(i as usize - 1)
        } else if let Some(i) = self.shape_id(token) {
            Some(nc + i as usize - 1)
        } else {
            self.name_id(token).map(|i| nc + ns + i as usize - 1)
        }
    }

    pub fn token_kind(&self, id: usize) -> Option<TokenKind> {
        let (nc, ns) = (self.colors.len(), self.shapes.len());
        if id < nc {
            Some(TokenKind::Color(id as u32 + 1))
        } else if id < nc + ns {
            Some(TokenKind::Shape((id - nc) as u32 + 1))
        } else if id < self.token_count() {
            Some(TokenKind::Name((id - nc - ns) as u32 + 1))
        } else {
            None
        }
    }

    pub fn token_str(&self, id: usize) -> Option<&str> {
        match self.token_kind(id)? {
            TokenKind::Color(i) => self.color_name(i),
            TokenKind::Shape(i) => self.shape_name(i),
            TokenKind::Name(i) => self.object_name(i),
        }
    }

    /// Appends a name token and returns its global token id.
    pub fn register_name(&mut self, name: &str) -> Result<usize> {
        let name = name.trim().to_lowercase();
        if self.token_id(&name).is_some() {
            return Err(Error::DuplicateToken(name));
        }
        if name.is_empty() || name.chars().any(|c| !c.is_alphanumeric()) {
            return Err(Error::UnknownToken(name));
        }
        self.names.push(name);
        Ok(self.token_count() - 1)
    }

    /// Lowercases, strips punctuation, splits on whitespace and maps tokens
    /// to global ids.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        normalize(text)
            .split_whitespace()
            .map(|tok| self.token_id(tok).ok_or_else(|| Error::UnknownToken(tok.to_string())))
            .collect()
    }

    pub fn label_of_tokens(&self, tokens: &[usize]) -> Result<AttributeLabel> {
        let mut slots = [0u32; LABEL_SLOTS];
        for &t in tokens {
            match self.token_kind(t).ok_or(Error::UnknownTokenId(t))? {
                TokenKind::Color(i) => slots[COLOR_SLOT] = i,
                TokenKind::Shape(i) => slots[SHAPE_SLOT] = i,
                TokenKind::Name(_) => {}
            }
        }
        Ok(AttributeLabel::new(slots.to_vec()))
    }

    pub fn label_of(&self, text: &str) -> Result<AttributeLabel> {
        self.label_of_tokens(&self.tokenize(text)?)
    }

    /// Builds a query from explicit parts, in the fixed `<name,>? <color>? <shape>?` order.
    pub fn query_from_parts(
        &self,
        name: Option<u32>,
        color: Option<u32>,
        shape: Option<u32>,
    ) -> Result<QueryText> {
        let mut words = Vec::new();
        if let Some(n) = name {
            let n = self.object_name(n).ok_or(Error::MissingName)?;
            words.push(format!("{n},"));
        }
        if let Some(c) = color {
            words.push(self.color_name(c).ok_or(Error::UnknownTokenId(c as usize))?.to_string());
        }
        if let Some(s) = shape {
            words.push(self.shape_name(s).ok_or(Error::UnknownTokenId(s as usize))?.to_string());
        }
        QueryText::parse(self, &words.join(" "))
    }

    /// Query text describing an object with the given label in the requested mode.
    pub fn make_query(&self, label: &AttributeLabel, name: Option<u32>, mode: QueryMode) -> Result<QueryText> {
        let color = label.slot(COLOR_SLOT);
        let shape = label.slot(SHAPE_SLOT);
        match mode {
            QueryMode::Both => self.query_from_parts(None, color, shape),
            QueryMode::ColorOnly => self.query_from_parts(None, color, None),
            QueryMode::ShapeOnly => self.query_from_parts(None, None, shape),
            QueryMode::Named => {
                let name = name.ok_or(Error::MissingName)?;
                if self.object_name(name).is_none() {
                    return Err(Error::MissingName);
                }
                self.query_from_parts(Some(name), color, shape)
            }
        }
    }
}

fn position(list: &[String], token: &str) -> Option<u32> {
    list.iter().position(|t| t == token).map(|i| i as u32 + 1)
}

fn nth(list: &[String], id: u32) -> Option<&str> {
    if id == 0 {
        return None;
    }
    list.get(id as usize - 1).map(String::as_str)
}

fn normalize(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect()
}

/// Integer attribute vector; 0 marks a null attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeLabel(pub Vec<u32>);

impl AttributeLabel {
    pub fn new(slots: Vec<u32>) -> Self {
        Self(slots)
    }

    pub fn full(color: u32, shape: u32) -> Self {
        Self(vec![color, shape])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn slot(&self, i: usize) -> Option<u32> {
        self.0.get(i).copied().filter(|&v| v != 0)
    }

    pub fn specified(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0).count()
    }
}

impl fmt::Display for AttributeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// How the label-similarity sum is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityNorm {
    /// Divide by the label length n, so partial queries give graded scores.
    #[default]
    Literal,
    /// Divide by the number of nonzero slots in the first argument.
    Specified,
}

/// Fraction of slots where both labels agree on a nonzero value.
pub fn similarity(a: &AttributeLabel, b: &AttributeLabel) -> Result<f64> {
    similarity_with(a, b, SimilarityNorm::Literal)
}

pub fn similarity_with(a: &AttributeLabel, b: &AttributeLabel, norm: SimilarityNorm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LabelLength(a.len(), b.len()));
    }
    let hits = a.0.iter().zip(&b.0).filter(|(x, y)| x == y && **x != 0).count();
    let denom = match norm {
        SimilarityNorm::Literal => a.len(),
        SimilarityNorm::Specified => a.specified(),
    };
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(hits as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    ColorOnly,
    ShapeOnly,
    Both,
    Named,
}

impl QueryMode {
    /// Modes drawn during data collection.
    pub const COLLECTION: [QueryMode; 3] = [QueryMode::Both, QueryMode::ColorOnly, QueryMode::ShapeOnly];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryText {
    pub text: String,
    pub tokens: Vec<usize>,
    pub label: AttributeLabel,
}

impl QueryText {
    pub fn parse(vocab: &AttributeVocabulary, text: &str) -> Result<Self> {
        let tokens = vocab.tokenize(text)?;
        let label = vocab.label_of_tokens(&tokens)?;
        Ok(Self { text: text.to_string(), tokens, label })
    }
}

impl fmt::Display for QueryText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> AttributeVocabulary {
        AttributeVocabulary::default()
    }

    #[test]
    fn worked_similarity_values() {
        let s = |a: [u32; 2], b: [u32; 2]| similarity(&AttributeLabel::new(a.to_vec()), &AttributeLabel::new(b.to_vec())).unwrap();
        assert_eq!(s([1, 3], [2, 3]), 0.5);
        assert_eq!(s([1, 0], [2, 0]), 0.0);
        assert_eq!(s([2, 4], [2, 4]), 1.0);
        assert_eq!(s([1, 0], [1, 0]), 0.5);
    }

    #[test]
    fn similarity_rejects_length_mismatch() {
        let a = AttributeLabel::new(vec![1, 2]);
        let b = AttributeLabel::new(vec![1, 2, 3]);
        assert!(matches!(similarity(&a, &b), Err(Error::LabelLength(2, 3))));
    }

    #[test]
    fn specified_normalization() {
        let q = AttributeLabel::new(vec![1, 0]);
        let o = AttributeLabel::new(vec![1, 3]);
        assert_eq!(similarity_with(&q, &o, SimilarityNorm::Specified).unwrap(), 1.0);
        assert_eq!(similarity_with(&q, &o, SimilarityNorm::Literal).unwrap(), 0.5);
    }

    #[test]
    fn label_of_queries() {
        let v = vocab();
        let red = v.color_id("red").unwrap();
        let cuboid = v.shape_id("cuboid").unwrap();
        assert_eq!(v.label_of("red cuboid").unwrap(), AttributeLabel::full(red, cuboid));
        assert_eq!(v.label_of("red").unwrap(), AttributeLabel::full(red, 0));
        assert!(matches!(v.label_of("purple cube"), Err(Error::UnknownToken(t)) if t == "purple"));

        let mut v = v;
        v.register_name("apple").unwrap();
        let sphere = v.shape_id("sphere").unwrap();
        assert_eq!(v.label_of("apple, red sphere").unwrap(), AttributeLabel::full(red, sphere));
    }

    #[test]
    fn tokenize_folds_case_and_punctuation() {
        let mut v = vocab();
        assert_eq!(
            v.tokenize("Red Cuboid").unwrap(),
            vec![v.token_id("red").unwrap(), v.token_id("cuboid").unwrap()]
        );
        assert!(v.tokenize("").unwrap().is_empty());
        let apple = v.register_name("apple").unwrap();
        assert_eq!(apple, 9);
        assert_eq!(
            v.tokenize("apple, red sphere").unwrap(),
            vec![apple, v.token_id("red").unwrap(), v.token_id("sphere").unwrap()]
        );
    }

    #[test]
    fn make_query_modes() {
        let mut v = vocab();
        let label = AttributeLabel::full(v.color_id("red").unwrap(), v.shape_id("sphere").unwrap());
        assert_eq!(v.make_query(&label, None, QueryMode::Both).unwrap().text, "red sphere");
        assert_eq!(v.make_query(&label, None, QueryMode::ColorOnly).unwrap().text, "red");
        assert_eq!(v.make_query(&label, None, QueryMode::ShapeOnly).unwrap().text, "sphere");
        assert!(matches!(v.make_query(&label, None, QueryMode::Named), Err(Error::MissingName)));
        assert!(matches!(v.make_query(&label, Some(1), QueryMode::Named), Err(Error::MissingName)));
        v.register_name("apple").unwrap();
        let q = v.make_query(&label, Some(1), QueryMode::Named).unwrap();
        assert_eq!(q.text, "apple, red sphere");
        assert_eq!(q.label, label);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut v = vocab();
        assert!(v.register_name("red").is_err());
        v.register_name("apple").unwrap();
        assert!(matches!(v.register_name("Apple"), Err(Error::DuplicateToken(_))));
    }

    #[test]
    fn vocabulary_json_round_trip_keeps_ids() {
        let mut v = vocab();
        v.register_name("apple").unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.starts_with(r#"{"colors":["red","#));
        let back: AttributeVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.token_id("apple"), v.token_id("apple"));
        assert_eq!(back, v);
    }
}
