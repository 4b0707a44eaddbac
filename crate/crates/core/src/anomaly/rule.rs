//! Declarative cell predicates for custom detectors.
//!
//! ```text
//! expr    := or
//! or      := and ('or' and)*
//! and     := unary ('and' unary)*
//! unary   := 'not' unary | atom
//! atom    := '(' expr ')' | 'value' 'is' 'missing' | operand cmp operand
//! operand := number | 'value' | 'group_mean'
//! cmp     := '<' | '<=' | '>' | '>=' | '==' | '!='
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groups::GroupStats;
use crate::table::{format_number, parse_numeric_cell, CellValue};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleError {
    #[error("syntax error at offset {position}: expected one of {}", expected.join(", "))]
    Syntax {
        position: usize,
        expected: Vec<String>,
    },
    #[error("type error at offset {position}: {message}")]
    Type { position: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Value,
    GroupMean,
    Number(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleExpr {
    IsMissing,
    Cmp(Operand, CmpOp, Operand),
    Not(Box<RuleExpr>),
    And(Box<RuleExpr>, Box<RuleExpr>),
    Or(Box<RuleExpr>, Box<RuleExpr>),
}

impl RuleExpr {
    pub fn eval(&self, cell: &CellValue, stats: &GroupStats) -> bool {
        eval_rule(self, cell, stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Value,
    GroupMean,
    And,
    Or,
    Not,
    Is,
    Missing,
    LParen,
    RParen,
    Cmp(CmpOp),
    End,
}

const OPERAND: &[&str] = &["number", "value", "group_mean"];

fn syntax(position: usize, expected: &[&str]) -> RuleError {
    RuleError::Syntax {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, RuleError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'<' | b'>' | b'=' | b'!' => {
                let two = b.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'<', true) => CmpOp::Le,
                    (b'<', false) => CmpOp::Lt,
                    (b'>', true) => CmpOp::Ge,
                    (b'>', false) => CmpOp::Gt,
                    (b'=', true) => CmpOp::Eq,
                    (b'!', true) => CmpOp::Ne,
                    _ => return Err(syntax(i, &["==", "!="])),
                };
                i += if two { 2 } else { 1 };
                Tok::Cmp(op)
            }
            b'0'..=b'9' | b'.' | b'-' | b'+' => {
                i += 1;
                while i < b.len() {
                    let d = b[i];
                    let exp_sign = matches!(d, b'+' | b'-') && matches!(b[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                match parse_numeric_cell(&src[start..i]) {
                    Some(v) => Tok::Num(v),
                    None => return Err(syntax(start, &["number"])),
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                match &src[start..i] {
                    "value" => Tok::Value,
                    "group_mean" => Tok::GroupMean,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    "is" => Tok::Is,
                    "missing" => Tok::Missing,
                    _ => return Err(syntax(start, &["not", "(", "number", "value", "group_mean"])),
                }
            }
            _ => return Err(syntax(start, &["not", "(", "number", "value", "group_mean"])),
        };
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Tok {
        self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn or(&mut self) -> Result<RuleExpr, RuleError> {
        let mut lhs = self.and()?;
        while self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = RuleExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<RuleExpr, RuleError> {
        let mut lhs = self.unary()?;
        while self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = RuleExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RuleExpr, RuleError> {
        if self.peek() == Tok::Not {
            self.bump();
            return Ok(RuleExpr::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    /// A boolean atom directly followed by a comparison is ill-typed.
    fn reject_trailing_cmp(&self) -> Result<(), RuleError> {
        if let Tok::Cmp(op) = self.peek() {
            return Err(RuleError::Type {
                position: self.offset(),
                message: format!("`{}` needs numeric operands, found a boolean", op.symbol()),
            });
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<RuleExpr, RuleError> {
        let at = self.offset();
        let lhs = match self.bump() {
            Tok::LParen => {
                let inner = self.or()?;
                if self.peek() != Tok::RParen {
                    return Err(syntax(self.offset(), &[")", "and", "or"]));
                }
                self.bump();
                self.reject_trailing_cmp()?;
                return Ok(inner);
            }
            Tok::Value => Operand::Value,
            Tok::GroupMean => Operand::GroupMean,
            Tok::Num(v) => Operand::Number(v),
            _ => return Err(syntax(at, &["not", "(", "number", "value", "group_mean"])),
        };
        if self.peek() == Tok::Is {
            if lhs != Operand::Value {
                return Err(RuleError::Type {
                    position: self.offset(),
                    message: "`is missing` applies only to `value`".into(),
                });
            }
            self.bump();
            if self.peek() != Tok::Missing {
                return Err(syntax(self.offset(), &["missing"]));
            }
            self.bump();
            self.reject_trailing_cmp()?;
            return Ok(RuleExpr::IsMissing);
        }
        let op = match self.peek() {
            Tok::Cmp(op) => op,
            _ => {
                let mut expected = vec!["<", "<=", ">", ">=", "==", "!="];
                if lhs == Operand::Value {
                    expected.push("is");
                }
                return Err(syntax(self.offset(), &expected));
            }
        };
        self.bump();
        let rhs_at = self.offset();
        let rhs = match self.bump() {
            Tok::Value => Operand::Value,
            Tok::GroupMean => Operand::GroupMean,
            Tok::Num(v) => Operand::Number(v),
            Tok::LParen | Tok::Not => {
                return Err(RuleError::Type {
                    position: rhs_at,
                    message: format!("`{}` needs numeric operands, found a boolean", op.symbol()),
                })
            }
            _ => return Err(syntax(rhs_at, OPERAND)),
        };
        self.reject_trailing_cmp()?;
        Ok(RuleExpr::Cmp(lhs, op, rhs))
    }
}

pub fn parse_rule(source: &str) -> Result<RuleExpr, RuleError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let expr = p.or()?;
    if p.peek() != Tok::End {
        return Err(syntax(p.offset(), &["and", "or", "end of input"]));
    }
    Ok(expr)
}

/// Numeric comparisons against a missing or textual cell, or against an
/// undefined group mean, are false.
pub fn eval_rule(rule: &RuleExpr, cell: &CellValue, stats: &GroupStats) -> bool {
    match rule {
        RuleExpr::IsMissing => cell.is_missing(),
        RuleExpr::Cmp(a, op, b) => {
            let resolve = |o: &Operand| match o {
                Operand::Value => cell.as_number(),
                Operand::GroupMean => stats.mean,
                Operand::Number(v) => Some(*v),
            };
            match (resolve(a), resolve(b)) {
                (Some(x), Some(y)) => op.apply(x, y),
                _ => false,
            }
        }
        RuleExpr::Not(e) => !eval_rule(e, cell, stats),
        RuleExpr::And(a, b) => eval_rule(a, cell, stats) && eval_rule(b, cell, stats),
        RuleExpr::Or(a, b) => eval_rule(a, cell, stats) || eval_rule(b, cell, stats),
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, o: &Operand) -> fmt::Result {
    match o {
        Operand::Value => f.write_str("value"),
        Operand::GroupMean => f.write_str("group_mean"),
        Operand::Number(v) => f.write_str(&format_number(*v)),
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &RuleExpr, min_prec: u8) -> fmt::Result {
    let prec = match e {
        RuleExpr::Or(..) => 1,
        RuleExpr::And(..) => 2,
        RuleExpr::Not(_) => 3,
        _ => 4,
    };
    if prec < min_prec {
        f.write_str("(")?;
    }
    match e {
        RuleExpr::IsMissing => f.write_str("value is missing")?,
        RuleExpr::Cmp(a, op, b) => {
            write_operand(f, a)?;
            write!(f, " {} ", op.symbol())?;
            write_operand(f, b)?;
        }
        RuleExpr::Not(x) => {
            f.write_str("not ")?;
            write_expr(f, x, 3)?;
        }
        RuleExpr::And(a, b) => {
            write_expr(f, a, 2)?;
            f.write_str(" and ")?;
            write_expr(f, b, 3)?;
        }
        RuleExpr::Or(a, b) => {
            write_expr(f, a, 1)?;
            f.write_str(" or ")?;
            write_expr(f, b, 2)?;
        }
    }
    if prec < min_prec {
        f.write_str(")")?;
    }
    Ok(())
}

/// Canonical form: single spaces, minimal parentheses.
impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}
