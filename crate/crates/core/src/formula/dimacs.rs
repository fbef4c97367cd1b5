//! DIMACS CNF reading and writing.
//!
//! Besides the standard format, two comment directives are understood so
//! that Tseitin-encoded formulas survive a round trip:
//!
//! * `c ind v1 v2 ... 0` lists the original (sampling) variables.
//! * `c defs k` marks the first `k` clauses as auxiliary definitions.

use std::fmt::Write as _;

use thiserror::Error;

use super::{CnfFormula, FormulaError, Lit};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("line {line}: malformed header")]
    MalformedHeader { line: usize },
    #[error("line {line}: duplicate header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: invalid token {token:?}")]
    InvalidToken { line: usize, token: String },
    #[error("line {line}: literal {lit} out of range 1..={num_vars}")]
    LiteralOutOfRange { line: usize, lit: i64, num_vars: usize },
    #[error("line {line}: empty clause")]
    EmptyClause { line: usize },
    #[error("line {line}: last clause is not terminated by 0")]
    UnterminatedClause { line: usize },
    #[error("line {line}: header declares {expected} clauses, found {found}")]
    ClauseCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: malformed directive")]
    MalformedDirective { line: usize },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

fn parse_int(line: usize, tok: &str) -> Result<i64, ParseError> {
    tok.parse::<i64>().map_err(|_| ParseError::InvalidToken {
        line,
        token: tok.to_string(),
    })
}

/// Parses DIMACS CNF text.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, ParseError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    let mut independent: Option<Vec<u32>> = None;
    let mut num_defs = 0usize;
    let mut last_line = 0;
    let mut pending_ind: Vec<(usize, i64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('%') {
            break;
        }
        if let Some(rest) = trimmed.strip_prefix('c') {
            let mut words = rest.split_whitespace();
            match words.next() {
                Some("ind") => {
                    let mut terminated = false;
                    for tok in words {
                        let v = parse_int(line, tok)?;
                        if v == 0 {
                            terminated = true;
                            break;
                        }
                        pending_ind.push((line, v));
                    }
                    if !terminated {
                        return Err(ParseError::MalformedDirective { line });
                    }
                    independent.get_or_insert_with(Vec::new);
                }
                Some("defs") => {
                    let k = words
                        .next()
                        .and_then(|t| t.parse::<usize>().ok())
                        .ok_or(ParseError::MalformedDirective { line })?;
                    num_defs = k;
                }
                _ => {}
            }
            continue;
        }
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(ParseError::DuplicateHeader { line });
            }
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(ParseError::MalformedHeader { line });
            }
            let n = parts[2]
                .parse::<usize>()
                .map_err(|_| ParseError::MalformedHeader { line })?;
            let m = parts[3]
                .parse::<usize>()
                .map_err(|_| ParseError::MalformedHeader { line })?;
            header = Some((n, m));
            continue;
        }
        let (n, _) = header.ok_or(ParseError::MissingHeader)?;
        for tok in trimmed.split_whitespace() {
            let v = parse_int(line, tok)?;
            if v == 0 {
                if current.is_empty() {
                    return Err(ParseError::EmptyClause { line });
                }
                clauses.push(std::mem::take(&mut current));
            } else {
                if v.unsigned_abs() as usize > n || v.unsigned_abs() > i32::MAX as u64 {
                    return Err(ParseError::LiteralOutOfRange {
                        line,
                        lit: v,
                        num_vars: n,
                    });
                }
                current.push(Lit::from_dimacs(v as i32));
            }
        }
    }

    let (n, m) = header.ok_or(ParseError::MissingHeader)?;
    if !current.is_empty() {
        return Err(ParseError::UnterminatedClause { line: last_line });
    }
    if clauses.len() != m {
        return Err(ParseError::ClauseCountMismatch {
            line: last_line,
            expected: m,
            found: clauses.len(),
        });
    }
    let original = match independent {
        None => vec![true; n],
        Some(_) => {
            let mut original = vec![false; n];
            for (line, v) in pending_ind {
                if v <= 0 || v as usize > n {
                    return Err(ParseError::LiteralOutOfRange {
                        line,
                        lit: v,
                        num_vars: n,
                    });
                }
                original[v as usize - 1] = true;
            }
            original
        }
    };
    Ok(CnfFormula::from_parts(n, clauses, num_defs, original)?)
}

/// Serializes a formula as DIMACS CNF text.
pub fn write_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    if formula.has_auxiliary() {
        out.push_str("c ind");
        for v in formula.original_vars() {
            let _ = write!(out, " {v}");
        }
        out.push_str(" 0\n");
    }
    if formula.num_definitions() > 0 {
        let _ = writeln!(out, "c defs {}", formula.num_definitions());
    }
    let _ = writeln!(out, "p cnf {} {}", formula.num_vars(), formula.num_clauses());
    for clause in formula.clauses() {
        for lit in clause {
            let _ = write!(out, "{} ", lit.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_input() {
        let f = parse_dimacs("p cnf 2 1\n1 2 0").unwrap();
        assert_eq!(f.num_vars(), 2);
        assert_eq!(f.clauses(), &[vec![Lit::pos(1), Lit::pos(2)]]);
        assert_eq!(f.original_vars(), vec![1, 2]);
    }

    #[test]
    fn comments_and_multiline_clauses() {
        let f = parse_dimacs("c hello\np cnf 3 2\n1 -2\n 3 0 -1 0\n").unwrap();
        assert_eq!(f.num_clauses(), 2);
        assert_eq!(f.clauses()[1], vec![Lit::neg(1)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse_dimacs("p cnf 2 1\n3 0"),
            Err(ParseError::LiteralOutOfRange {
                line: 2,
                lit: 3,
                num_vars: 2
            })
        );
        assert_eq!(
            parse_dimacs("p cnf x 1\n1 0"),
            Err(ParseError::MalformedHeader { line: 1 })
        );
        assert_eq!(
            parse_dimacs("p cnf 2 2\n1 0\n"),
            Err(ParseError::ClauseCountMismatch {
                line: 2,
                expected: 2,
                found: 1
            })
        );
        assert_eq!(parse_dimacs("1 2 0"), Err(ParseError::MissingHeader));
        assert_eq!(
            parse_dimacs("p cnf 2 1\n1 2"),
            Err(ParseError::UnterminatedClause { line: 2 })
        );
        assert_eq!(
            parse_dimacs("p cnf 2 1\n1 a 0"),
            Err(ParseError::InvalidToken {
                line: 2,
                token: "a".into()
            })
        );
    }

    #[test]
    fn tautologies_dropped_duplicates_merged() {
        let f = parse_dimacs("p cnf 2 2\n1 -1 0\n2 2 0\n").unwrap();
        assert_eq!(f.clauses(), &[vec![Lit::pos(2)]]);
    }

    #[test]
    fn structure_survives_round_trip() {
        let f = parse_dimacs("p cnf 3 2\n1 -2 0\n2 3 0\n").unwrap();
        let n = f.negate();
        let back = parse_dimacs(&write_dimacs(&n)).unwrap();
        assert_eq!(back, n);
    }

    fn arb_formula() -> impl Strategy<Value = CnfFormula> {
        (1usize..8).prop_flat_map(|n| {
            let lit = (1..=n as i32, any::<bool>())
                .prop_map(|(v, s)| Lit::from_dimacs(if s { v } else { -v }));
            prop::collection::vec(prop::collection::vec(lit, 1..5), 0..10)
                .prop_map(move |cs| CnfFormula::new(n, cs).unwrap())
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(f in arb_formula()) {
            let text = write_dimacs(&f);
            let back = parse_dimacs(&text).unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(write_dimacs(&back), text);
        }
    }
}
