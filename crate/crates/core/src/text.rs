//! Corpus data model, tokenization and dataset ingestion.
//!
//! Dataset files are line-delimited JSON, one record per line:
//!
//! ```text
//! {"id": "doc-1", "article_sentences": ["the cat sat .", ...], "highlights": ["a cat sat .", ...]}
//! ```
//!
//! Sentence strings are already tokenized with spaces; ingestion lowercases
//! and splits on whitespace.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// A single normalized token: lowercase, non-empty, no whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    /// Normalizes `raw` into a token. Returns `None` when the input is empty
    /// or contains whitespace.
    pub fn new(raw: &str) -> Option<Token> {
        let text = raw.to_lowercase();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Token {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        Token::new(&value).ok_or_else(|| format!("invalid token {value:?}"))
    }
}

impl From<Token> for String {
    fn from(token: Token) -> String {
        token.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases `raw` and splits it on whitespace runs.
///
/// Punctuation is not split off: the corpus is expected to be tokenized with
/// spaces already, so `"sat ."` yields `["sat", "."]` while `"sat."` stays a
/// single token.
pub fn tokenize(raw: &str) -> Vec<Token> {
    raw.split_whitespace()
        .map(|piece| Token(piece.to_lowercase()))
        // lowercasing can only introduce whitespace for exotic code points
        .filter(|t| !t.0.is_empty() && !t.0.chars().any(char::is_whitespace))
        .collect()
}

/// Joins tokens with single spaces.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    id: String,
    sentences: Vec<Sentence>,
}

impl Document {
    /// Builds a document from tokenized sentences, assigning indices `0..N`.
    pub fn new(id: impl Into<String>, sentences: Vec<Vec<Token>>) -> Result<Document> {
        if sentences.is_empty() {
            return Err(Error::invalid("document", "no sentences"));
        }
        if let Some(pos) = sentences.iter().position(Vec::is_empty) {
            return Err(Error::invalid("document", format!("sentence {pos} is empty")));
        }
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(index, tokens)| Sentence { index, tokens })
            .collect();
        Ok(Document {
            id: id.into(),
            sentences,
        })
    }

    /// Convenience constructor from space-separated sentence strings.
    pub fn from_texts<S: AsRef<str>>(id: impl Into<String>, texts: &[S]) -> Result<Document> {
        Document::new(id, texts.iter().map(|s| tokenize(s.as_ref())).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    /// Always false; a document has at least one sentence.
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn tokens(&self, index: usize) -> Result<&[Token]> {
        self.sentences
            .get(index)
            .map(|s| s.tokens.as_slice())
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.sentences.len(),
            })
    }

    /// Returns a copy with sentence `index` replaced by `tokens`.
    pub fn with_replaced(&self, index: usize, tokens: Vec<Token>) -> Result<Document> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange { index, len: self.len() });
        }
        if tokens.is_empty() {
            return Err(Error::invalid("sentence", "replacement is empty"));
        }
        let mut doc = self.clone();
        doc.sentences[index].tokens = tokens;
        Ok(doc)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceSummary {
    sentences: Vec<Vec<Token>>,
}

impl ReferenceSummary {
    pub fn new(sentences: Vec<Vec<Token>>) -> Result<ReferenceSummary> {
        if sentences.is_empty() {
            return Err(Error::invalid("reference", "no sentences"));
        }
        if let Some(pos) = sentences.iter().position(Vec::is_empty) {
            return Err(Error::invalid("reference", format!("sentence {pos} is empty")));
        }
        Ok(ReferenceSummary { sentences })
    }

    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<ReferenceSummary> {
        ReferenceSummary::new(texts.iter().map(|s| tokenize(s.as_ref())).collect())
    }

    pub fn sentences(&self) -> &[Vec<Token>] {
        &self.sentences
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub document: Document,
    pub reference: ReferenceSummary,
}

impl Example {
    pub fn id(&self) -> &str {
        self.document.id()
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    article_sentences: Vec<String>,
    highlights: Vec<String>,
}

/// A record that failed validation during ingestion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

/// Result of a lenient pass over a dataset file.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub examples: Vec<Example>,
    pub rejects: Vec<Reject>,
}

fn string_list(obj: &serde_json::Map<String, Value>, field: &str) -> std::result::Result<Vec<String>, String> {
    match obj.get(field) {
        None => Err(format!("missing field `{field}`")),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| format!("field `{field}` must contain only strings"))
            })
            .collect(),
        Some(_) => Err(format!("field `{field}` must be an array of strings")),
    }
}

fn parse_record(text: &str) -> std::result::Result<Example, (Option<String>, String)> {
    let value: Value = serde_json::from_str(text).map_err(|e| (None, format!("malformed JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| (None, "record is not a JSON object".to_owned()))?;
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err((None, "field `id` must be a string".to_owned())),
        None => return Err((None, "missing field `id`".to_owned())),
    };
    let tag = |msg: String| (Some(id.clone()), msg);
    let article = string_list(obj, "article_sentences").map_err(tag)?;
    let highlights = string_list(obj, "highlights").map_err(tag)?;
    if article.is_empty() {
        return Err(tag("empty article".to_owned()));
    }
    if highlights.is_empty() {
        return Err(tag("empty highlights".to_owned()));
    }
    let article: Vec<Vec<Token>> = article.iter().map(|s| tokenize(s)).collect();
    let highlights: Vec<Vec<Token>> = highlights.iter().map(|s| tokenize(s)).collect();
    if let Some(pos) = article.iter().position(Vec::is_empty) {
        return Err(tag(format!("article sentence {pos} is empty")));
    }
    if let Some(pos) = highlights.iter().position(Vec::is_empty) {
        return Err(tag(format!("highlight {pos} is empty")));
    }
    let document = Document::new(id.clone(), article).map_err(|e| tag(e.to_string()))?;
    let reference = ReferenceSummary::new(highlights).map_err(|e| tag(e.to_string()))?;
    Ok(Example { document, reference })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Reads a dataset, collecting invalid records instead of failing on them.
/// Blank lines are ignored. Line numbers are 1-based.
pub fn ingest_dataset(path: &Path) -> Result<Ingested> {
    let mut out = Ingested::default();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line) {
            Ok(example) => out.examples.push(example),
            Err((id, reason)) => out.rejects.push(Reject {
                line: i + 1,
                id,
                reason,
            }),
        }
    }
    Ok(out)
}

/// Loads a dataset, failing on the first invalid record.
pub fn load_dataset(path: &Path) -> Result<Vec<Example>> {
    let ingested = ingest_dataset(path)?;
    if let Some(reject) = ingested.rejects.into_iter().next() {
        return Err(Error::Record {
            line: reject.line,
            message: reject.reason,
        });
    }
    Ok(ingested.examples)
}

/// Serializes one example as a canonical dataset line (no trailing newline).
pub fn record_line(example: &Example) -> Result<String> {
    let record = RecordOut {
        id: example.id(),
        article_sentences: example
            .document
            .sentences()
            .iter()
            .map(|s| detokenize(&s.tokens))
            .collect(),
        highlights: example.reference.sentences().iter().map(|s| detokenize(s)).collect(),
    };
    Ok(serde_json::to_string(&record)?)
}

/// Writes examples in canonical dataset form.
pub fn write_dataset(path: &Path, examples: &[Example]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        writeln!(w, "{}", record_line(ex)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(words(&tokenize("The cat SAT .")), ["the", "cat", "sat", "."]);
        assert_eq!(
            words(&tokenize("crash took place sunday")),
            ["crash", "took", "place", "sunday"]
        );
        assert_eq!(words(&tokenize("  a \t b\n( ) -  ")), ["a", "b", "(", ")", "-"]);
    }

    #[test]
    fn token_rejects_whitespace_and_empty() {
        assert!(Token::new("").is_none());
        assert!(Token::new("a b").is_none());
        assert_eq!(Token::new("ABC").unwrap().as_str(), "abc");
        assert!(serde_json::from_str::<Token>("\"x y\"").is_err());
    }

    #[test]
    fn document_indices_are_contiguous() {
        let doc = Document::from_texts("d", &["a b", "c", "d e f"]).unwrap();
        let idx: Vec<usize> = doc.sentences().iter().map(|s| s.index).collect();
        assert_eq!(idx, [0, 1, 2]);
        assert!(Document::from_texts("d", &["a", ""]).is_err());
        assert!(Document::new("d", vec![]).is_err());
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_two_records_in_order() {
        let f = write_lines(&[
            r#"{"id":"x","article_sentences":["A b .","c d ."],"highlights":["a b ."]}"#,
            r#"{"id":"y","article_sentences":["e f g"],"highlights":["e"]}"#,
        ]);
        let examples = load_dataset(f.path()).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].id(), "x");
        assert_eq!(examples[1].id(), "y");
        assert_eq!(words(&examples[0].document.sentences()[0].tokens), ["a", "b", "."]);
    }

    #[test]
    fn three_sentence_article() {
        let f = write_lines(&[r#"{"id":"z","article_sentences":["a","b","c"],"highlights":["a"]}"#]);
        let examples = load_dataset(f.path()).unwrap();
        let doc = &examples[0].document;
        assert_eq!(doc.len(), 3);
        let idx: Vec<usize> = doc.sentences().iter().map(|s| s.index).collect();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn missing_field_names_line() {
        let f = write_lines(&[
            r#"{"id":"x","article_sentences":["a"],"highlights":["a"]}"#,
            r#"{"id":"y","article_sentences":["a"]}"#,
        ]);
        let err = load_dataset(f.path()).unwrap_err().to_string();
        assert_eq!(err, "line 2: missing field `highlights`");
    }

    #[test]
    fn empty_fields_are_rejected_with_reason() {
        let f = write_lines(&[
            r#"{"id":"x","article_sentences":[],"highlights":["a"]}"#,
            r#"{"id":"y","article_sentences":["a"],"highlights":[]}"#,
            "not json",
            r#"{"id":"z","article_sentences":["a"],"highlights":["a"]}"#,
        ]);
        let ingested = ingest_dataset(f.path()).unwrap();
        assert_eq!(ingested.examples.len(), 1);
        let reasons: Vec<(usize, &str)> = ingested.rejects.iter().map(|r| (r.line, r.reason.as_str())).collect();
        assert_eq!(reasons[0], (1, "empty article"));
        assert_eq!(reasons[1], (2, "empty highlights"));
        assert_eq!(reasons[2].0, 3);
        assert!(reasons[2].1.starts_with("malformed JSON"));
        assert!(load_dataset(f.path()).is_err());
    }

    fn token_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z0-9]{1,6}",
            Just(".".to_owned()),
            Just(",".to_owned()),
            Just("'s".to_owned())
        ]
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(raw in "[ a-zA-Z.,;!?\\t\\n-]{0,40}") {
            let once = tokenize(&raw);
            let twice = tokenize(&detokenize(&once));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn dataset_round_trips(
            docs in prop::collection::vec(
                (
                    prop::collection::vec(prop::collection::vec(token_strategy(), 1..6), 1..5),
                    prop::collection::vec(prop::collection::vec(token_strategy(), 1..6), 1..3),
                ),
                0..4,
            )
        ) {
            let examples: Vec<Example> = docs
                .iter()
                .enumerate()
                .map(|(i, (article, highlights))| {
                    let join = |s: &Vec<String>| s.join(" ");
                    Example {
                        document: Document::from_texts(format!("d{i}"), &article.iter().map(join).collect::<Vec<_>>()).unwrap(),
                        reference: ReferenceSummary::from_texts(&highlights.iter().map(join).collect::<Vec<_>>()).unwrap(),
                    }
                })
                .collect();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_dataset(f.path(), &examples).unwrap();
            let back = load_dataset(f.path()).unwrap();
            prop_assert_eq!(back, examples);
        }
    }
}
