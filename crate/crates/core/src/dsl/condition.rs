//! Per-call condition mini-language.
//!
//! ```text
//! expr := cmp (("and" | "or") cmp)*
//! cmp  := term relop term
//! term := number | identifier | missing_ratio
//! ```
//!
//! `and` binds tighter than `or`; there are no parentheses.

use std::collections::BTreeMap;
use std::fmt;

/// Scalar names the interpreter may bind.
pub const KNOWN_SCALARS: [&str; 3] = ["statistic", "p_value", "count"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Gt => a > b,
            RelOp::Ge => a >= b,
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Numeric literal with its source spelling.
    Number(f64, String),
    Ident(String),
    MissingRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub lhs: Term,
    pub op: RelOp,
    pub rhs: Term,
}

/// A parsed condition in disjunctive form: any clause whose comparisons all
/// hold makes the condition true.
#[derive(Debug, Clone)]
pub struct ConditionExpr {
    source: String,
    clauses: Vec<Vec<Comparison>>,
}

impl PartialEq for ConditionExpr {
    fn eq(&self, other: &Self) -> bool {
        self.clauses == other.clauses
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CondError {
    #[error("condition {text:?}: {reason}")]
    Syntax { text: String, reason: String },
    #[error("unbound scalar {0:?} in condition")]
    Unbound(String),
    #[error("missing_ratio is only available in per-item conditions")]
    NoMissingRatio,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64, String),
    Ident(String),
    Op(RelOp),
    And,
    Or,
}

fn lex(src: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| format!("bad number {text:?}"))?;
            out.push(Token::Num(value, text));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.to_ascii_lowercase().as_str() {
                "and" => out.push(Token::And),
                "or" => out.push(Token::Or),
                _ => out.push(Token::Ident(word)),
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (op, width) = match two.as_str() {
                "<=" => (RelOp::Le, 2),
                ">=" => (RelOp::Ge, 2),
                "==" => (RelOp::Eq, 2),
                "!=" => (RelOp::Ne, 2),
                _ => match c {
                    '<' => (RelOp::Lt, 1),
                    '>' => (RelOp::Gt, 1),
                    _ => return Err(format!("unexpected character {c:?}")),
                },
            };
            out.push(Token::Op(op));
            i += width;
        }
    }
    Ok(out)
}

impl ConditionExpr {
    pub fn parse(src: &str) -> Result<ConditionExpr, CondError> {
        let syntax = |reason: String| CondError::Syntax { text: src.to_string(), reason };
        let tokens = lex(src).map_err(syntax)?;
        if tokens.is_empty() {
            return Err(syntax("empty condition".into()));
        }
        let term = |t: &Token| -> Option<Term> {
            match t {
                Token::Num(v, s) => Some(Term::Number(*v, s.clone())),
                Token::Ident(name) if name == "missing_ratio" => Some(Term::MissingRatio),
                Token::Ident(name) => Some(Term::Ident(name.clone())),
                _ => None,
            }
        };
        let mut clauses = vec![Vec::new()];
        let mut pos = 0;
        loop {
            let window = tokens.get(pos..pos + 3).ok_or_else(|| syntax("incomplete comparison".into()))?;
            let lhs = term(&window[0]).ok_or_else(|| syntax("expected a term".into()))?;
            let op = match &window[1] {
                Token::Op(op) => *op,
                _ => return Err(syntax("expected a comparison operator".into())),
            };
            let rhs = term(&window[2]).ok_or_else(|| syntax("expected a term".into()))?;
            clauses.last_mut().expect("non-empty").push(Comparison { lhs, op, rhs });
            pos += 3;
            match tokens.get(pos) {
                None => break,
                Some(Token::And) => {}
                Some(Token::Or) => clauses.push(Vec::new()),
                Some(_) => return Err(syntax("expected \"and\" or \"or\"".into())),
            }
            pos += 1;
        }
        Ok(ConditionExpr { source: src.trim().to_string(), clauses })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn clauses(&self) -> &[Vec<Comparison>] {
        &self.clauses
    }

    fn terms(&self) -> impl Iterator<Item = &Term> {
        self.clauses.iter().flatten().flat_map(|c| [&c.lhs, &c.rhs])
    }

    pub fn uses_missing_ratio(&self) -> bool {
        self.terms().any(|t| matches!(t, Term::MissingRatio))
    }

    pub fn identifiers(&self) -> Vec<&str> {
        self.terms()
            .filter_map(|t| match t {
                Term::Ident(s) => Some(s.as_str()),
                _ => None,
            })
            .collect()
    }

    /// The single comparison when the condition has exactly one.
    pub fn single(&self) -> Option<&Comparison> {
        match self.clauses.as_slice() {
            [clause] if clause.len() == 1 => clause.first(),
            _ => None,
        }
    }

    pub fn eval(&self, env: &BTreeMap<String, f64>, missing_ratio: Option<f64>) -> Result<bool, CondError> {
        let value = |t: &Term| -> Result<f64, CondError> {
            match t {
                Term::Number(v, _) => Ok(*v),
                Term::Ident(name) => env.get(name).copied().ok_or_else(|| CondError::Unbound(name.clone())),
                Term::MissingRatio => missing_ratio.ok_or(CondError::NoMissingRatio),
            }
        };
        for clause in &self.clauses {
            let mut all = true;
            for cmp in clause {
                if !cmp.op.apply(value(&cmp.lhs)?, value(&cmp.rhs)?) {
                    all = false;
                    break;
                }
            }
            if all {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn parses_missing_ratio_threshold() {
        let c = ConditionExpr::parse("missing_ratio > 0.3").unwrap();
        assert!(c.uses_missing_ratio());
        assert!(c.eval(&env(&[]), Some(0.67)).unwrap());
        assert!(!c.eval(&env(&[]), Some(0.25)).unwrap());
    }

    #[test]
    fn and_binds_tighter_than_or() {
        // false and false or true == (false and false) or true
        let c = ConditionExpr::parse("1 > 2 and 2 > 3 or 0 < 1").unwrap();
        assert!(c.eval(&env(&[]), None).unwrap());
        // true or false and false == true or (false and false)
        let c = ConditionExpr::parse("0 < 1 or 1 > 2 and 2 > 3").unwrap();
        assert!(c.eval(&env(&[]), None).unwrap());
        let c = ConditionExpr::parse("0 < 1 and 1 > 2 or 2 > 3").unwrap();
        assert!(!c.eval(&env(&[]), None).unwrap());
    }

    #[test]
    fn scalars_resolve_from_env() {
        let c = ConditionExpr::parse("p_value < 0.05").unwrap();
        assert!(c.eval(&env(&[("p_value", 0.01)]), None).unwrap());
        assert!(!c.eval(&env(&[("p_value", 0.2)]), None).unwrap());
        assert_eq!(c.eval(&env(&[]), None), Err(CondError::Unbound("p_value".into())));
        assert_eq!(c.identifiers(), vec!["p_value"]);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "p_value <", "a b c", "1 < 2 xor 3 < 4", "(1 < 2)", "1 = 2", "1 < 2 and"] {
            assert!(ConditionExpr::parse(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn negative_and_exponent_literals() {
        let c = ConditionExpr::parse("statistic >= -1.5e0").unwrap();
        assert!(c.eval(&env(&[("statistic", -1.0)]), None).unwrap());
    }

    #[test]
    fn missing_ratio_outside_items_is_an_error() {
        let c = ConditionExpr::parse("missing_ratio > 0.3").unwrap();
        assert_eq!(c.eval(&env(&[]), None), Err(CondError::NoMissingRatio));
    }
}
