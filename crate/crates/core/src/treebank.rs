//! CoNLL-U sentences, gold dependency trees and tree distances.
//!
//! Token indices are 1-based as in CoNLL-U, and [`Edge`] carries 1-based
//! endpoints. Matrices ([`TreeDistances`], and the probe's distance
//! matrices) are indexed by 0-based position, so token `i` lives at row
//! `i - 1`.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

/// UPOS tag used to identify punctuation tokens.
pub const PUNCT: &str = "PUNCT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub upos: String,
    /// 0 for the root, otherwise the 1-based index of the head token.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.upos == PUNCT
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub sent_id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// 1-based index of the root token.
    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().find(|t| t.head == 0).map(|t| t.index)
    }

    /// Token with the given 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Builds a sentence from a head vector (`heads[i]` is the head of token
    /// `i + 1`), checking the tree invariants.
    pub fn from_heads(sent_id: &str, heads: &[usize]) -> Result<Self, ParseError> {
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &head)| Token {
                index: i + 1,
                form: format!("w{}", i + 1),
                upos: "X".to_string(),
                head,
                deprel: "dep".to_string(),
            })
            .collect();
        let sentence = Sentence {
            sent_id: sent_id.to_string(),
            tokens,
        };
        let lines: Vec<usize> = (1..=heads.len()).collect();
        validate_tree(&sentence, &lines)?;
        Ok(sentence)
    }
}

/// Undirected dependency edge between two 1-based token indices, stored
/// with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(pub usize, pub usize);

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn touches(&self, index: usize) -> bool {
        self.0 == index || self.1 == index
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sentence {sent_id}, line {line}: {kind}")]
pub struct ParseError {
    pub sent_id: String,
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("expected 10 tab-separated columns, found {0}")]
    ColumnCount(usize),
    #[error("invalid token id {0:?}")]
    BadId(String),
    #[error("token id {found} out of sequence, expected {expected}")]
    OutOfSequence { expected: usize, found: usize },
    #[error("non-integer head {0:?}")]
    BadHead(String),
    #[error("token {0} is its own head")]
    SelfLoop(usize),
    #[error("head {head} exceeds sentence length {len}")]
    HeadOutOfRange { head: usize, len: usize },
    #[error("no root token")]
    NoRoot,
    #[error("multiple root tokens ({0} and {1})")]
    MultipleRoots(usize, usize),
    #[error("head links of token {0} form a cycle")]
    Cycle(usize),
}

/// Parses CoNLL-U text into sentences.
///
/// Comment lines start with `#`; a `# sent_id = ...` comment names the
/// sentence, otherwise sentences are named `s<ordinal>`. Multi-word range
/// lines (`3-4`) and empty nodes (`3.1`) are skipped. Both LF and CRLF line
/// endings are accepted.
pub fn parse_conllu(text: &str) -> Result<Vec<Sentence>, ParseError> {
    let mut sentences = Vec::new();
    let mut builder = SentenceBuilder::default();

    for (line_no, raw) in text.split('\n').enumerate() {
        let line_no = line_no + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);

        if line.trim().is_empty() {
            if let Some(sentence) = builder.finish(sentences.len() + 1)? {
                sentences.push(sentence);
            }
            continue;
        }

        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    builder.sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }

        builder.push_line(line, line_no, sentences.len() + 1)?;
    }
    if let Some(sentence) = builder.finish(sentences.len() + 1)? {
        sentences.push(sentence);
    }
    Ok(sentences)
}

#[derive(Default)]
struct SentenceBuilder {
    sent_id: Option<String>,
    tokens: Vec<Token>,
    lines: Vec<usize>,
}

impl SentenceBuilder {
    fn current_id(&self, ordinal: usize) -> String {
        self.sent_id
            .clone()
            .unwrap_or_else(|| format!("s{ordinal}"))
    }

    fn push_line(&mut self, line: &str, line_no: usize, ordinal: usize) -> Result<(), ParseError> {
        let err = |kind| ParseError {
            sent_id: self.current_id(ordinal),
            line: line_no,
            kind,
        };

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(err(ParseErrorKind::ColumnCount(cols.len())));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            return Ok(());
        }
        let index: usize = id
            .parse()
            .map_err(|_| err(ParseErrorKind::BadId(id.to_string())))?;
        let expected = self.tokens.len() + 1;
        if index != expected {
            return Err(err(ParseErrorKind::OutOfSequence {
                expected,
                found: index,
            }));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(ParseErrorKind::BadHead(cols[6].to_string())))?;
        if head == index {
            return Err(err(ParseErrorKind::SelfLoop(index)));
        }

        self.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
        self.lines.push(line_no);
        Ok(())
    }

    fn finish(&mut self, ordinal: usize) -> Result<Option<Sentence>, ParseError> {
        let sent_id = self.current_id(ordinal);
        let tokens = core::mem::take(&mut self.tokens);
        let lines = core::mem::take(&mut self.lines);
        self.sent_id = None;
        if tokens.is_empty() {
            return Ok(None);
        }
        let sentence = Sentence { sent_id, tokens };
        validate_tree(&sentence, &lines)?;
        Ok(Some(sentence))
    }
}

/// Checks single-root, range and acyclicity of the head links. `lines`
/// gives the source line of each token for error reporting.
fn validate_tree(sentence: &Sentence, lines: &[usize]) -> Result<(), ParseError> {
    let n = sentence.len();
    let err = |pos: usize, kind| ParseError {
        sent_id: sentence.sent_id.clone(),
        line: lines.get(pos).copied().unwrap_or(0),
        kind,
    };

    let mut root: Option<usize> = None;
    for (pos, token) in sentence.tokens.iter().enumerate() {
        if token.head == token.index {
            return Err(err(pos, ParseErrorKind::SelfLoop(token.index)));
        }
        if token.head > n {
            return Err(err(
                pos,
                ParseErrorKind::HeadOutOfRange {
                    head: token.head,
                    len: n,
                },
            ));
        }
        if token.head == 0 {
            if let Some(first) = root {
                return Err(err(pos, ParseErrorKind::MultipleRoots(first, token.index)));
            }
            root = Some(token.index);
        }
    }
    if root.is_none() {
        return Err(err(0, ParseErrorKind::NoRoot));
    }

    // 0 = unvisited, 1 = on current walk, 2 = known to reach the root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut walk = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            walk.push(cur);
            cur = sentence.tokens[cur - 1].head;
        }
        if state[cur] == 1 {
            return Err(err(cur - 1, ParseErrorKind::Cycle(cur)));
        }
        for w in walk {
            state[w] = 2;
        }
    }
    Ok(())
}

/// Serializes sentences back to CoNLL-U, keeping id, form, upos, head and
/// deprel; the remaining columns are written as `_`.
pub fn write_conllu(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for sentence in sentences {
        let _ = writeln!(out, "# sent_id = {}", sentence.sent_id);
        for t in &sentence.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.form, t.upos, t.head, t.deprel
            );
        }
        out.push('\n');
    }
    out
}

/// All-pairs path lengths in a gold tree, indexed by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDistances {
    n: usize,
    d: Vec<u32>,
}

impl TreeDistances {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Path length between positions `i` and `j` (0-based).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.d
    }

    /// Builds a distance table directly; used by tests and synthetic data.
    /// `d` must be row-major `n × n`.
    pub fn from_raw(n: usize, d: Vec<u32>) -> Self {
        assert_eq!(d.len(), n * n, "distance table must be n x n");
        Self { n, d }
    }
}

/// Computes the number of edges on the tree path between every pair of
/// tokens, by a breadth-first search from each token.
pub fn tree_distances(sentence: &Sentence) -> TreeDistances {
    let n = sentence.len();
    let mut adjacency = vec![Vec::new(); n];
    for t in &sentence.tokens {
        if t.head != 0 {
            adjacency[t.index - 1].push(t.head - 1);
            adjacency[t.head - 1].push(t.index - 1);
        }
    }

    let mut d = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for source in 0..n {
        let row = &mut d[source * n..(source + 1) * n];
        row[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = row[u] + 1;
            for &v in &adjacency[u] {
                if row[v] == u32::MAX {
                    row[v] = next;
                    queue.push_back(v);
                }
            }
        }
    }
    TreeDistances { n, d }
}

/// Gold edges `(min(i, h), max(i, h))` for every non-root token. With
/// `exclude_punct`, edges touching a `PUNCT` token are dropped.
pub fn gold_edges(sentence: &Sentence, exclude_punct: bool) -> BTreeSet<Edge> {
    sentence
        .tokens
        .iter()
        .filter(|t| t.head != 0)
        .map(|t| Edge::new(t.index, t.head))
        .filter(|e| !exclude_punct || !edge_touches_punct(sentence, *e))
        .collect()
}

pub(crate) fn edge_touches_punct(sentence: &Sentence, edge: Edge) -> bool {
    [edge.0, edge.1]
        .iter()
        .any(|&i| sentence.token(i).is_some_and(Token::is_punct))
}
