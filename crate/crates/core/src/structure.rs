//! The dependency-tree stand-in over the question tokens.
//!
//! Structures come from the built-in heuristic parser ([`SemanticStructure::parse`])
//! or from externally produced CoNLL-U ([`SemanticStructure::from_conllu`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("CoNLL-U parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("head links do not form a single-rooted tree: {0}")]
    InvalidTree(String),
    #[error("token spans do not match the question: {0}")]
    Misaligned(String),
}

/// A token with its governing head. `head == None` marks the root.
///
/// `start`/`end` are UTF-8 byte offsets into the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub head: Option<usize>,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticStructure {
    pub question: String,
    pub tokens: Vec<Token>,
}

const EN_WH_WORDS: &[&str] = &["what", "which", "who", "whom", "whose", "where", "when", "how"];
const ZH_WH_WORDS: &[&str] = &["什么", "哪个", "哪些", "哪里", "哪", "谁", "多少", "几"];

const EN_STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "is", "are", "was", "were", "be", "been", "being", "to", "in", "on",
    "at", "by", "for", "with", "and", "or", "does", "do", "did", "has", "have", "had", "that",
    "this", "these", "those", "it", "its", "as", "from", "than", "there",
];

const EN_VERBS: &[&str] = &[
    "directed", "direct", "directs", "wrote", "write", "writes", "composed", "composes",
    "produced", "produces", "played", "plays", "starred", "stars", "acted", "acts", "won",
    "wins", "married", "marries", "founded", "founds", "created", "creates", "invented",
    "invents", "discovered", "discovers", "died", "lives", "lived", "painted", "sang", "sings",
    "released", "releases", "published", "publishes", "designed", "designs", "built", "builds",
    "developed", "develops", "owns", "owned", "eat", "eats", "ate", "live", "feed", "feeds",
];

/// Interrogative words per language tag.
pub fn wh_words(language: &str) -> &'static [&'static str] {
    match primary_subtag(language) {
        "zh" => ZH_WH_WORDS,
        _ => EN_WH_WORDS,
    }
}

fn stopwords(language: &str) -> &'static [&'static str] {
    match primary_subtag(language) {
        "en" => EN_STOPWORDS,
        _ => &[],
    }
}

fn verbs(language: &str) -> &'static [&'static str] {
    match primary_subtag(language) {
        "en" => EN_VERBS,
        _ => &[],
    }
}

fn primary_subtag(language: &str) -> &str {
    language.split(['-', '_']).next().unwrap_or(language)
}

pub(crate) fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF
        | 0xAC00..=0xD7AF | 0x20000..=0x2FA1F)
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || c == '_') && !is_cjk(c)
}

/// Splits on whitespace and punctuation. Ideographs become single tokens;
/// `'` and `-` may join letters, `.` and `,` may join digits.
pub fn tokenize(question: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = question.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !is_word_char(c) {
            spans.push((start, start + c.len_utf8()));
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if is_word_char(c) {
                j += 1;
                continue;
            }
            let (prev, next) = (chars[j - 1].1, chars.get(j + 1).map(|x| x.1));
            let joins = match (c, next) {
                ('\'' | '-', Some(n)) => prev.is_alphabetic() && n.is_alphabetic() && !is_cjk(n),
                ('.' | ',', Some(n)) => prev.is_ascii_digit() && n.is_ascii_digit(),
                _ => false,
            };
            if joins {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(question.len(), |x| x.0);
        spans.push((start, end));
        i = j;
    }
    spans
}

impl SemanticStructure {
    /// Validating constructor.
    pub fn new(question: impl Into<String>, tokens: Vec<Token>) -> Result<Self, StructureError> {
        let structure = SemanticStructure {
            question: question.into(),
            tokens,
        };
        structure.validate()?;
        Ok(structure)
    }

    /// Heuristic parse: root is the first main verb from the language's verb
    /// list, else the first wh-word, else token 0; every other token hangs
    /// from the nearest preceding content token, or from the root.
    pub fn parse(question: &str, language: &str) -> Result<Self, StructureError> {
        let spans = tokenize(question);
        if spans.is_empty() {
            return Err(StructureError::EmptyQuestion);
        }
        let texts: Vec<&str> = spans.iter().map(|&(s, e)| &question[s..e]).collect();
        let norm: Vec<String> = texts.iter().map(|t| normalize(t)).collect();
        let wh = wh_words(language);
        let starts_wh = |i: usize| {
            (1..=3).any(|n| {
                i + n <= norm.len() && wh.contains(&norm[i..i + n].concat().as_str())
                    && (n == 1 || norm[i..i + n].iter().all(|t| t.chars().all(is_cjk)))
            })
        };
        let verb_list = verbs(language);
        let root = (0..spans.len())
            .find(|&i| verb_list.contains(&norm[i].as_str()))
            .or_else(|| (0..spans.len()).find(|&i| starts_wh(i)))
            .unwrap_or(0);
        let stop = stopwords(language);
        let is_content = |i: usize| {
            !norm[i].is_empty() && !stop.contains(&norm[i].as_str())
        };
        let mut tokens = Vec::with_capacity(spans.len());
        let mut last_content: Option<usize> = None;
        for (i, &(start, end)) in spans.iter().enumerate() {
            let head = if i == root {
                None
            } else {
                Some(last_content.unwrap_or(root))
            };
            tokens.push(Token {
                index: i,
                text: texts[i].to_string(),
                head,
                start,
                end,
            });
            if is_content(i) {
                last_content = Some(i);
            }
        }
        SemanticStructure::new(question, tokens)
    }

    /// Reads a single-sentence CoNLL-U document. The question text is the
    /// `# text =` comment when present, otherwise the forms joined by spaces
    /// (honouring `SpaceAfter=No`).
    pub fn from_conllu(source: &str) -> Result<Self, StructureError> {
        let mut sentences = parse_conllu_sentences(source)?;
        match sentences.len() {
            0 => Err(StructureError::Parse {
                line: 1,
                message: "no sentence found".into(),
            }),
            1 => sentences.pop().expect("one sentence").into_structure(None),
            _ => Err(StructureError::Parse {
                line: sentences[1].first_line,
                message: "more than one sentence".into(),
            }),
        }
    }

    /// Like [`from_conllu`](Self::from_conllu), but aligns the forms against
    /// `question` instead of the embedded text.
    pub fn from_conllu_for(source: &str, question: &str) -> Result<Self, StructureError> {
        let structure = Self::from_conllu(source)?;
        structure.realign(question)
    }

    /// Re-anchors the token texts in another rendering of the same question.
    pub fn realign(&self, question: &str) -> Result<Self, StructureError> {
        let forms: Vec<&str> = self.tokens.iter().map(|t| t.text.as_str()).collect();
        let spans = align(question, &forms)?;
        let tokens = self
            .tokens
            .iter()
            .zip(spans)
            .map(|(t, (start, end))| Token {
                start,
                end,
                ..t.clone()
            })
            .collect();
        SemanticStructure::new(question, tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn root(&self) -> usize {
        self.tokens
            .iter()
            .position(|t| t.head.is_none())
            .expect("validated tree has a root")
    }

    pub fn head(&self, index: usize) -> Option<usize> {
        self.tokens[index].head
    }

    /// Dependents of `index`, ascending.
    pub fn children(&self, index: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .filter(|t| t.head == Some(index))
            .map(|t| t.index)
            .collect()
    }

    /// Head and dependents of `index`, ascending.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let mut out = self.children(index);
        if let Some(head) = self.tokens[index].head {
            out.push(head);
        }
        out.sort_unstable();
        out
    }

    pub fn depth(&self, mut index: usize) -> usize {
        let mut depth = 0;
        while let Some(head) = self.tokens[index].head {
            index = head;
            depth += 1;
        }
        depth
    }

    /// Tokens overlapping the byte range `[start, end)`.
    pub fn tokens_in(&self, start: usize, end: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .filter(|t| t.start < end && start < t.end)
            .map(|t| t.index)
            .collect()
    }

    /// The head-most token of a set (smallest depth, then leftmost).
    pub fn head_most(&self, indexes: &[usize]) -> Option<usize> {
        indexes.iter().copied().min_by_key(|&i| (self.depth(i), i))
    }

    pub fn lowest_common_ancestor(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        while da > db {
            a = self.tokens[a].head.expect("non-root has a head");
            da -= 1;
        }
        while db > da {
            b = self.tokens[b].head.expect("non-root has a head");
            db -= 1;
        }
        while a != b {
            a = self.tokens[a].head.expect("non-root has a head");
            b = self.tokens[b].head.expect("non-root has a head");
        }
        a
    }

    /// The unique path between `a` and `b` in the undirected tree, both
    /// endpoints included.
    pub fn tree_path(&self, a: usize, b: usize) -> Vec<usize> {
        let lca = self.lowest_common_ancestor(a, b);
        let mut up = vec![a];
        let mut cursor = a;
        while cursor != lca {
            cursor = self.tokens[cursor].head.expect("below lca");
            up.push(cursor);
        }
        let mut down = Vec::new();
        let mut cursor = b;
        while cursor != lca {
            down.push(cursor);
            cursor = self.tokens[cursor].head.expect("below lca");
        }
        up.extend(down.into_iter().rev());
        up
    }

    pub fn validate(&self) -> Result<(), StructureError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(StructureError::EmptyQuestion);
        }
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(StructureError::InvalidTree(format!(
                    "token {i} carries index {}",
                    t.index
                )));
            }
            match t.head {
                None => roots += 1,
                Some(h) if h >= n => {
                    return Err(StructureError::InvalidTree(format!("head {h} out of range")))
                }
                Some(h) if h == i => {
                    return Err(StructureError::InvalidTree(format!("token {i} heads itself")))
                }
                Some(_) => {}
            }
        }
        if roots != 1 {
            return Err(StructureError::InvalidTree(format!("{roots} roots")));
        }
        for start in 0..n {
            let mut cursor = start;
            let mut steps = 0;
            while let Some(h) = self.tokens[cursor].head {
                cursor = h;
                steps += 1;
                if steps > n {
                    return Err(StructureError::InvalidTree(format!(
                        "cycle through token {start}"
                    )));
                }
            }
        }
        let mut covered = 0;
        for t in &self.tokens {
            if t.start < covered || t.end <= t.start || t.end > self.question.len() {
                return Err(StructureError::Misaligned(format!("token {} span", t.index)));
            }
            if self.question.get(t.start..t.end) != Some(t.text.as_str()) {
                return Err(StructureError::Misaligned(format!(
                    "token {} text {:?}",
                    t.index, t.text
                )));
            }
            if !self.question[covered..t.start].trim().is_empty() {
                return Err(StructureError::Misaligned(format!(
                    "uncovered text before token {}",
                    t.index
                )));
            }
            covered = t.end;
        }
        if !self.question[covered..].trim().is_empty() {
            return Err(StructureError::Misaligned("uncovered trailing text".into()));
        }
        Ok(())
    }
}

fn align(question: &str, forms: &[&str]) -> Result<Vec<(usize, usize)>, StructureError> {
    let mut spans = Vec::with_capacity(forms.len());
    let mut cursor = 0;
    for form in forms {
        let rest = &question[cursor..];
        let skipped = rest.len() - rest.trim_start().len();
        let start = cursor + skipped;
        if !question[start..].starts_with(form) || form.is_empty() {
            return Err(StructureError::Misaligned(format!(
                "form {form:?} not found at byte {start}"
            )));
        }
        spans.push((start, start + form.len()));
        cursor = start + form.len();
    }
    if !question[cursor..].trim().is_empty() {
        return Err(StructureError::Misaligned("question has text beyond the forms".into()));
    }
    Ok(spans)
}

struct ConlluSentence {
    first_line: usize,
    text: Option<String>,
    /// (form, head, space_after)
    rows: Vec<(String, usize, bool)>,
    head_lines: Vec<usize>,
}

impl ConlluSentence {
    fn into_structure(self, question: Option<&str>) -> Result<SemanticStructure, StructureError> {
        let question = match (question, &self.text) {
            (Some(q), _) => q.to_string(),
            (None, Some(text)) => text.clone(),
            (None, None) => {
                let mut joined = String::new();
                for (form, _, space_after) in &self.rows {
                    joined.push_str(form);
                    if *space_after {
                        joined.push(' ');
                    }
                }
                joined.trim_end().to_string()
            }
        };
        let forms: Vec<&str> = self.rows.iter().map(|r| r.0.as_str()).collect();
        let spans = align(&question, &forms)?;
        let tokens: Vec<Token> = self
            .rows
            .iter()
            .zip(spans)
            .enumerate()
            .map(|(i, ((form, head, _), (start, end)))| Token {
                index: i,
                text: form.clone(),
                head: (*head > 0).then(|| head - 1),
                start,
                end,
            })
            .collect();
        SemanticStructure::new(question, tokens).map_err(|e| match e {
            StructureError::InvalidTree(message) => StructureError::Parse {
                line: self.head_lines.first().copied().unwrap_or(self.first_line),
                message,
            },
            other => other,
        })
    }
}

fn parse_conllu_sentences(source: &str) -> Result<Vec<ConlluSentence>, StructureError> {
    let mut sentences = Vec::new();
    let mut current: Option<ConlluSentence> = None;
    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(s) = current.take() {
                sentences.push(s);
            }
            continue;
        }
        let sentence = current.get_or_insert_with(|| ConlluSentence {
            first_line: line_no,
            text: None,
            rows: Vec::new(),
            head_lines: Vec::new(),
        });
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(text) = comment.trim_start().strip_prefix("text") {
                if let Some(value) = text.trim_start().strip_prefix('=') {
                    sentence.text = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(StructureError::Parse {
                line: line_no,
                message: format!("expected 10 columns, found {}", columns.len()),
            });
        }
        let id = columns[0];
        if id.contains('-') || id.contains('.') {
            // Multiword ranges and empty nodes carry no head of their own.
            continue;
        }
        let id: usize = id.parse().map_err(|_| StructureError::Parse {
            line: line_no,
            message: format!("bad ID {id:?}"),
        })?;
        if id != sentence.rows.len() + 1 {
            return Err(StructureError::Parse {
                line: line_no,
                message: format!("expected ID {}, found {id}", sentence.rows.len() + 1),
            });
        }
        let head: usize = columns[6].parse().map_err(|_| StructureError::Parse {
            line: line_no,
            message: format!("bad HEAD {:?}", columns[6]),
        })?;
        let space_after = !columns[9].split('|').any(|m| m == "SpaceAfter=No");
        sentence.rows.push((columns[1].to_string(), head, space_after));
        sentence.head_lines.push(line_no);
    }
    if let Some(s) = current.take() {
        sentences.push(s);
    }
    sentences.retain(|s| !s.rows.is_empty());
    for s in &sentences {
        let n = s.rows.len();
        if let Some((k, _)) = s.rows.iter().enumerate().find(|(_, r)| r.1 > n) {
            return Err(StructureError::Parse {
                line: s.head_lines[k],
                message: format!("HEAD {} beyond sentence length {n}", s.rows[k].1),
            });
        }
    }
    Ok(sentences)
}

/// A collection of pre-parsed questions keyed by normalized question text.
#[derive(Debug, Clone, Default)]
pub struct ParseBank {
    entries: BTreeMap<String, SemanticStructure>,
}

impl ParseBank {
    /// Reads a multi-sentence CoNLL-U document.
    pub fn from_conllu(source: &str) -> Result<Self, StructureError> {
        let mut entries = BTreeMap::new();
        for sentence in parse_conllu_sentences(source)? {
            let structure = sentence.into_structure(None)?;
            entries.insert(normalize(&structure.question), structure);
        }
        Ok(ParseBank { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The stored structure for `question`, re-aligned to its exact text.
    pub fn lookup(&self, question: &str) -> Option<SemanticStructure> {
        self.entries
            .get(&normalize(question))
            .and_then(|s| s.realign(question).ok())
    }
}
