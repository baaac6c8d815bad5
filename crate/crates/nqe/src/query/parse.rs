//! S-expression query parser.
//!
//! Grammar:
//!
//! ```text
//! query := expr
//! expr  := proj | conj | disj | neg
//! proj  := "(P" INT "(f" slot (REL slot)* "))"
//! slot  := LABEL | "?" | "(var" expr ")"
//! conj  := "(and" expr expr+ ")"
//! disj  := "(or" expr expr+ ")"
//! neg   := "(not" expr ")"
//! ```
//!
//! `INT` is the 1-based entity position of `?` in the skeleton and must
//! agree with where `?` actually sits. Labels may be double-quoted (with
//! backslash escapes) when they contain whitespace, parentheses, or are
//! literally `?`. Errors carry the byte offset of the offending token.

use super::ast::{EntitySlot, QueryAst};
use crate::error::{NqeError, Result};
use crate::store::HyperGraph;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, msg: impl Into<String>) -> NqeError {
    NqeError::Syntax {
        offset,
        msg: msg.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                toks.push(Token {
                    tok: Tok::Open,
                    offset: i,
                });
                i += 1;
            }
            ')' => {
                toks.push(Token {
                    tok: Tok::Close,
                    offset: i,
                });
                i += 1;
            }
            '"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(syntax(start, "unterminated string"));
                    }
                    match bytes[i] as char {
                        '"' => {
                            i += 1;
                            break;
                        }
                        '\\' => {
                            if i + 1 >= bytes.len() {
                                return Err(syntax(start, "unterminated escape"));
                            }
                            s.push(bytes[i + 1] as char);
                            i += 2;
                        }
                        c => {
                            s.push(c);
                            i += 1;
                        }
                    }
                }
                toks.push(Token {
                    tok: Tok::Atom(s),
                    offset: start,
                });
            }
            _ => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_whitespace() || matches!(c, '(' | ')' | '"') {
                        break;
                    }
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Atom(text[start..i].to_string()),
                    offset: start,
                });
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    graph: &'a HyperGraph,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<&Token> {
        let tok = self
            .toks
            .get(self.pos)
            .ok_or_else(|| syntax(self.end, "unexpected end of query"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect_open(&mut self) -> Result<usize> {
        let tok = self.next()?;
        match tok.tok {
            Tok::Open => Ok(tok.offset),
            _ => Err(syntax(tok.offset, "expected `(`")),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        let tok = self.next()?;
        match tok.tok {
            Tok::Close => Ok(()),
            _ => Err(syntax(tok.offset, "expected `)`")),
        }
    }

    fn expect_atom(&mut self) -> Result<(String, usize)> {
        let tok = self.next()?;
        match &tok.tok {
            Tok::Atom(s) => Ok((s.clone(), tok.offset)),
            _ => Err(syntax(tok.offset, "expected an atom")),
        }
    }

    fn parse_expr(&mut self) -> Result<QueryAst> {
        let open = self.expect_open()?;
        let (head, head_off) = self.expect_atom()?;
        match head.as_str() {
            "P" => self.parse_proj_body(open),
            "and" | "or" => {
                let mut children = Vec::new();
                while !matches!(self.peek().map(|t| &t.tok), Some(Tok::Close)) {
                    children.push(self.parse_expr()?);
                }
                self.expect_close()?;
                if children.len() < 2 {
                    return Err(syntax(
                        open,
                        format!("`{head}` needs at least two operands"),
                    ));
                }
                Ok(if head == "and" {
                    QueryAst::And(children)
                } else {
                    QueryAst::Or(children)
                })
            }
            "not" => {
                let child = self.parse_expr()?;
                self.expect_close()?;
                Ok(QueryAst::Not(Box::new(child)))
            }
            other => Err(syntax(
                head_off,
                format!("expected P, and, or, not; found `{other}`"),
            )),
        }
    }

    fn parse_proj_body(&mut self, open: usize) -> Result<QueryAst> {
        let (int_text, int_off) = self.expect_atom()?;
        let target_pos: usize = int_text
            .parse()
            .map_err(|_| syntax(int_off, format!("expected a position, found `{int_text}`")))?;
        self.expect_open()?;
        let (f, f_off) = self.expect_atom()?;
        if f != "f" {
            return Err(syntax(f_off, format!("expected `f`, found `{f}`")));
        }

        let mut slots = Vec::new();
        let mut relations = Vec::new();
        slots.push(self.parse_slot()?);
        while !matches!(self.peek().map(|t| &t.tok), Some(Tok::Close)) {
            let (rel, rel_off) = self.expect_atom()?;
            let rel = self
                .graph
                .relation(&rel)
                .map_err(|e| label_error(e, rel_off))?;
            relations.push(rel);
            slots.push(self.parse_slot()?);
        }
        self.expect_close()?;
        self.expect_close()?;

        let targets: Vec<usize> = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, EntitySlot::Target))
            .map(|(i, _)| i + 1)
            .collect();
        match targets.as_slice() {
            [] => Err(syntax(open, "projection skeleton has no `?`")),
            [pos] if *pos == target_pos => {
                Ok(QueryAst::projection(slots, relations, target_pos))
            }
            [pos] => Err(syntax(
                int_off,
                format!("position {target_pos} does not point at `?` (entity position {pos})"),
            )),
            _ => Err(syntax(open, "projection skeleton has multiple `?` targets")),
        }
    }

    fn parse_slot(&mut self) -> Result<EntitySlot> {
        let tok = self.next()?;
        match &tok.tok {
            Tok::Atom(s) if s == "?" => Ok(EntitySlot::Target),
            Tok::Atom(s) => {
                let offset = tok.offset;
                let label = s.clone();
                let e = self
                    .graph
                    .entity(&label)
                    .map_err(|e| label_error(e, offset))?;
                Ok(EntitySlot::Anchor(e))
            }
            Tok::Open => {
                let (kw, kw_off) = self.expect_atom()?;
                if kw != "var" {
                    return Err(syntax(kw_off, format!("expected `var`, found `{kw}`")));
                }
                let child = self.parse_expr()?;
                self.expect_close()?;
                Ok(EntitySlot::Var(Box::new(child)))
            }
            Tok::Close => Err(syntax(tok.offset, "expected a slot, found `)`")),
        }
    }
}

fn label_error(e: NqeError, _offset: usize) -> NqeError {
    // unknown labels keep their own error kind (data error, not syntax)
    e
}

/// Parse a query against a graph's symbol tables.
pub fn parse(text: &str, graph: &HyperGraph) -> Result<QueryAst> {
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        graph,
        end: text.len(),
    };
    let ast = parser.parse_expr()?;
    if let Some(tok) = parser.peek() {
        return Err(syntax(tok.offset, "trailing input after query"));
    }
    ast.validate()?;
    Ok(ast)
}
