//! Corpus ingestion.
//!
//! Entailment files are tab-separated with columns
//! `label, sentence1, sentence2[, parse1, parse2]`; definition files use
//! `word, definition[, parse]`. Parses are bracketed binary trees such as
//! `( ( a b ) c )`. Blank lines and lines starting with `#` are skipped; any
//! other malformed line is an error carrying its line number.

use std::fs;
use std::path::Path;

use crate::encoders::BinaryTree;
use crate::error::{Error, Result};
use crate::heads::Label;

/// Splits on runs of ASCII whitespace and lowercases.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_ascii_whitespace().map(str::to_lowercase).collect()
}

/// A bracketed tree together with the words at its leaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTree {
    pub tree: BinaryTree,
    pub tokens: Vec<String>,
}

impl ParsedTree {
    pub fn to_bracketed(&self) -> String {
        self.tree.to_bracketed(&self.tokens)
    }
}

#[derive(Debug)]
enum Lexeme<'a> {
    Open,
    Close,
    Word(&'a str),
}

fn lex(s: &str) -> Vec<(usize, Lexeme<'_>)> {
    let mut out = Vec::new();
    let mut word_start = None;
    for (i, ch) in s.char_indices() {
        let boundary = ch.is_ascii_whitespace() || ch == '(' || ch == ')';
        if boundary {
            if let Some(st) = word_start.take() {
                out.push((st, Lexeme::Word(&s[st..i])));
            }
            match ch {
                '(' => out.push((i, Lexeme::Open)),
                ')' => out.push((i, Lexeme::Close)),
                _ => {}
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(st) = word_start {
        out.push((st, Lexeme::Word(&s[st..])));
    }
    out
}

/// Parses `( ( a b ) c )`-style binary trees. Leaf words are lowercased;
/// positions in errors are byte offsets into `s`.
pub fn parse_bracketed(s: &str) -> Result<ParsedTree> {
    let lexemes = lex(s);
    let mut tokens = Vec::new();
    let mut pos = 0;
    let tree = parse_node(&lexemes, &mut pos, &mut tokens, s.len())?;
    if let Some((at, lexeme)) = lexemes.get(pos) {
        let msg = match lexeme {
            Lexeme::Close => "unbalanced parentheses",
            _ => "trailing input after tree",
        };
        return Err(Error::Bracketed {
            msg: msg.into(),
            pos: *at,
        });
    }
    Ok(ParsedTree { tree, tokens })
}

fn parse_node(lexemes: &[(usize, Lexeme<'_>)], pos: &mut usize, tokens: &mut Vec<String>, end: usize) -> Result<BinaryTree> {
    let Some((at, lexeme)) = lexemes.get(*pos) else {
        return Err(Error::Bracketed {
            msg: "unexpected end of input".into(),
            pos: end,
        });
    };
    *pos += 1;
    match lexeme {
        Lexeme::Word(w) => {
            tokens.push(w.to_lowercase());
            Ok(BinaryTree::Leaf(tokens.len() - 1))
        }
        Lexeme::Close => Err(Error::Bracketed {
            msg: "unbalanced parentheses".into(),
            pos: *at,
        }),
        Lexeme::Open => {
            let mut children = Vec::new();
            loop {
                match lexemes.get(*pos) {
                    None => {
                        return Err(Error::Bracketed {
                            msg: "unbalanced parentheses".into(),
                            pos: *at,
                        })
                    }
                    Some((_, Lexeme::Close)) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => children.push(parse_node(lexemes, pos, tokens, end)?),
                }
            }
            if children.len() != 2 {
                return Err(Error::Bracketed {
                    msg: format!("binary trees only, node has {} children", children.len()),
                    pos: *at,
                });
            }
            let right = children.pop().expect("two children");
            let left = children.pop().expect("two children");
            Ok(BinaryTree::branch(left, right))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntailmentExample {
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub label: Label,
    pub premise_tree: Option<BinaryTree>,
    pub hypothesis_tree: Option<BinaryTree>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefinitionExample {
    /// The word being defined, normalized like any other token.
    pub word: String,
    pub definition: Vec<String>,
    pub tree: Option<BinaryTree>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn sentence(field: &str, shown: &str, line: usize, what: &str) -> Result<Vec<String>> {
    let tokens = tokenize(field);
    if tokens.is_empty() {
        return Err(Error::data(shown, line, format!("empty {what}")));
    }
    Ok(tokens)
}

fn tree_for(field: &str, tokens: &[String], shown: &str, line: usize) -> Result<BinaryTree> {
    let parsed = parse_bracketed(field).map_err(|e| Error::data(shown, line, e.to_string()))?;
    if parsed.tokens.len() != tokens.len() {
        return Err(Error::data(
            shown,
            line,
            format!("tree has {} leaves but sentence has {} tokens", parsed.tokens.len(), tokens.len()),
        ));
    }
    Ok(parsed.tree)
}

pub fn load_entailment(path: impl AsRef<Path>) -> Result<Vec<EntailmentExample>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = read(path)?;
    let mut out = Vec::new();
    for (line, content) in content_lines(&text) {
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.len() != 3 && cols.len() != 5 {
            return Err(Error::data(&shown, line, format!("expected 3 or 5 tab-separated columns, found {}", cols.len())));
        }
        let label = cols[0]
            .trim()
            .parse::<Label>()
            .map_err(|e| Error::data(&shown, line, e))?;
        let premise = sentence(cols[1], &shown, line, "premise")?;
        let hypothesis = sentence(cols[2], &shown, line, "hypothesis")?;
        let (premise_tree, hypothesis_tree) = if cols.len() == 5 {
            (
                Some(tree_for(cols[3], &premise, &shown, line)?),
                Some(tree_for(cols[4], &hypothesis, &shown, line)?),
            )
        } else {
            (None, None)
        };
        out.push(EntailmentExample {
            premise,
            hypothesis,
            label,
            premise_tree,
            hypothesis_tree,
        });
    }
    Ok(out)
}

pub fn load_definitions(path: impl AsRef<Path>) -> Result<Vec<DefinitionExample>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = read(path)?;
    let mut out = Vec::new();
    for (line, content) in content_lines(&text) {
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.len() != 2 && cols.len() != 3 {
            return Err(Error::data(&shown, line, format!("expected 2 or 3 tab-separated columns, found {}", cols.len())));
        }
        let word = tokenize(cols[0]);
        if word.len() != 1 {
            return Err(Error::data(&shown, line, "first column must be a single word"));
        }
        let definition = sentence(cols[1], &shown, line, "definition")?;
        let tree = match cols.get(2) {
            Some(field) => Some(tree_for(field, &definition, &shown, line)?),
            None => None,
        };
        out.push(DefinitionExample {
            word: word.into_iter().next().expect("one word"),
            definition,
            tree,
        });
    }
    Ok(out)
}

/// One normalized word per line.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = read(path)?;
    content_lines(&text)
        .map(|(line, l)| {
            let mut toks = tokenize(l);
            if toks.len() != 1 {
                return Err(Error::data(&shown, line, "expected exactly one word"));
            }
            Ok(toks.remove(0))
        })
        .collect()
}

/// One tokenized sentence per non-blank line.
pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    Ok(read(path)?
        .lines()
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect())
}
