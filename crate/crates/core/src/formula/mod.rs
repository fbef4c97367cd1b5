//! Propositional core: literals, ternary assignments and CNF formulas.
//!
//! Variables are 1-indexed as in DIMACS. A formula distinguishes its
//! *original* variables from auxiliary ones introduced by Tseitin encodings;
//! every probability and every diversity count is taken over the projection
//! of a model onto the original variables.
//!
//! Clauses are split into a prefix of *definition* clauses and the remaining
//! *constraint* clauses. Definition clauses only ever define auxiliary
//! variables as total functions of other variables, so each assignment of the
//! original variables has exactly one extension satisfying them. Negation
//! keeps the definitions and negates the constraints, which is what makes
//! `negate(negate(f))` project back onto the models of `f`.

mod dimacs;

use std::fmt;
use std::ops::Not;
use std::str::FromStr;

use thiserror::Error;

pub use dimacs::{parse_dimacs, write_dimacs, ParseError};

/// A signed variable reference, stored in DIMACS form (`-3` is `¬f₃`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(i32);

impl Lit {
    pub fn new(var: u32, positive: bool) -> Self {
        assert!(var >= 1 && var <= i32::MAX as u32, "variable index out of range");
        let v = var as i32;
        Lit(if positive { v } else { -v })
    }

    pub fn pos(var: u32) -> Self {
        Self::new(var, true)
    }

    pub fn neg(var: u32) -> Self {
        Self::new(var, false)
    }

    /// Panics on `0`, which DIMACS reserves as the clause terminator.
    pub fn from_dimacs(code: i32) -> Self {
        assert!(code != 0 && code != i32::MIN, "invalid DIMACS literal {code}");
        Lit(code)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    pub fn var(self) -> u32 {
        self.0.unsigned_abs()
    }

    /// Zero-based position of the variable.
    pub fn index(self) -> usize {
        self.var() as usize - 1
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ternary value of a single variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Value {
    False,
    True,
    #[default]
    Unassigned,
}

impl Value {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Value::True
        } else {
            Value::False
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::False => Some(false),
            Value::True => Some(true),
            Value::Unassigned => None,
        }
    }

    pub fn is_assigned(self) -> bool {
        self != Value::Unassigned
    }
}

/// A map from variables to `{0, 1, ?}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Assignment {
    values: Vec<Value>,
}

impl Assignment {
    /// The empty assignment over `n` variables.
    pub fn unassigned(n: usize) -> Self {
        Assignment {
            values: vec![Value::Unassigned; n],
        }
    }

    pub fn from_values(values: Vec<Value>) -> Self {
        Assignment { values }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Assignment {
            values: bits.iter().map(|&b| Value::from_bool(b)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    /// Value of the 1-indexed variable `var`.
    pub fn get(&self, var: u32) -> Value {
        self.values[var as usize - 1]
    }

    pub fn set(&mut self, var: u32, value: Value) {
        self.values[var as usize - 1] = value;
    }

    pub fn assign(&mut self, var: u32, value: bool) {
        self.set(var, Value::from_bool(value));
    }

    /// Copy of `self` with one more variable assigned.
    pub fn extended(&self, var: u32, value: bool) -> Self {
        let mut next = self.clone();
        next.assign(var, value);
        next
    }

    pub fn lit_value(&self, lit: Lit) -> Value {
        match self.values[lit.index()] {
            Value::Unassigned => Value::Unassigned,
            v => Value::from_bool((v == Value::True) == lit.is_positive()),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_assigned())
    }

    pub fn num_assigned(&self) -> usize {
        self.values.iter().filter(|v| v.is_assigned()).count()
    }

    pub fn unassigned_vars(&self) -> impl Iterator<Item = u32> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_assigned())
            .map(|(i, _)| i as u32 + 1)
    }

    /// Whether every assigned variable of `other` has the same value here.
    pub fn extends(&self, other: &Assignment) -> bool {
        self.len() == other.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| !b.is_assigned() || a == b)
    }

    pub fn to_bools(&self) -> Option<Vec<bool>> {
        self.values.iter().map(|v| v.as_bool()).collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.values {
            let c = match v {
                Value::False => '0',
                Value::True => '1',
                Value::Unassigned => '?',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Assignment {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '0' => Ok(Value::False),
                '1' => Ok(Value::True),
                '?' => Ok(Value::Unassigned),
                other => Err(FormulaError::BadAssignmentChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Assignment::from_values)
    }
}

/// A complete assignment of the original variables of some formula,
/// in increasing variable order. Explanation sets hold these.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct World(pub Vec<bool>);

impl World {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl FromStr for World {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let a: Assignment = s.parse()?;
        a.to_bools().map(World).ok_or(FormulaError::PartialAssignment)
    }
}

/// How a partial assignment relates to the clauses of a formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClauseStatus {
    /// Every clause already has a true literal.
    Satisfied,
    /// Some clause has all of its literals false.
    Conflicting,
    Undetermined,
}

/// Result of unit propagation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Propagation {
    pub assignment: Assignment,
    /// Set when propagation falsified a clause; `assignment` is then the
    /// state reached when the conflict was detected.
    pub conflict: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("clause {clause} is empty")]
    EmptyClause { clause: usize },
    #[error("literal {lit} refers to variable outside 1..={num_vars}")]
    VariableOutOfRange { lit: i32, num_vars: usize },
    #[error("assignment has {got} variables, formula has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("assignment is partial")]
    PartialAssignment,
    #[error("invalid assignment character {0:?}")]
    BadAssignmentChar(char),
    #[error("definition clause count {defs} exceeds clause count {clauses}")]
    BadDefinitionPrefix { defs: usize, clauses: usize },
}

/// An immutable CNF formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<Lit>>,
    num_definitions: usize,
    original: Vec<bool>,
}

impl CnfFormula {
    /// Builds a formula whose variables are all original and whose clauses
    /// are all constraints.
    ///
    /// Duplicate literals inside a clause are merged and tautological
    /// clauses are dropped with a warning.
    pub fn new(num_vars: usize, clauses: Vec<Vec<Lit>>) -> Result<Self, FormulaError> {
        Self::with_structure(num_vars, Vec::new(), clauses, num_vars)
    }

    /// Builds a formula from definition clauses for auxiliary variables,
    /// constraint clauses, and the number of leading original variables.
    pub fn with_structure(
        num_vars: usize,
        definitions: Vec<Vec<Lit>>,
        constraints: Vec<Vec<Lit>>,
        num_original: usize,
    ) -> Result<Self, FormulaError> {
        let num_definitions = definitions.len();
        let mut all = definitions;
        all.extend(constraints);
        let mut original = vec![false; num_vars];
        original[..num_original.min(num_vars)]
            .iter_mut()
            .for_each(|o| *o = true);
        Self::from_parts(num_vars, all, num_definitions, original)
    }

    pub(crate) fn from_parts(
        num_vars: usize,
        clauses: Vec<Vec<Lit>>,
        num_definitions: usize,
        original: Vec<bool>,
    ) -> Result<Self, FormulaError> {
        if num_definitions > clauses.len() {
            return Err(FormulaError::BadDefinitionPrefix {
                defs: num_definitions,
                clauses: clauses.len(),
            });
        }
        let mut kept = Vec::with_capacity(clauses.len());
        let mut kept_defs = 0;
        for (i, clause) in clauses.into_iter().enumerate() {
            if clause.is_empty() {
                return Err(FormulaError::EmptyClause { clause: i });
            }
            for &lit in &clause {
                if lit.var() as usize > num_vars {
                    return Err(FormulaError::VariableOutOfRange {
                        lit: lit.to_dimacs(),
                        num_vars,
                    });
                }
            }
            let mut clause = clause;
            clause.sort_by_key(|l| (l.var(), l.is_positive()));
            clause.dedup();
            if clause.windows(2).any(|w| w[0].var() == w[1].var()) {
                log::warn!("dropping tautological clause {i}");
                continue;
            }
            if i < num_definitions {
                kept_defs += 1;
            }
            kept.push(clause);
        }
        Ok(CnfFormula {
            num_vars,
            clauses: kept,
            num_definitions: kept_defs,
            original,
        })
    }

    /// Replaces the set of original variables.
    pub fn with_original_vars(mut self, vars: &[u32]) -> Result<Self, FormulaError> {
        let mut original = vec![false; self.num_vars];
        for &v in vars {
            if v == 0 || v as usize > self.num_vars {
                return Err(FormulaError::VariableOutOfRange {
                    lit: v as i32,
                    num_vars: self.num_vars,
                });
            }
            original[v as usize - 1] = true;
        }
        self.original = original;
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn num_definitions(&self) -> usize {
        self.num_definitions
    }

    pub fn definitions(&self) -> &[Vec<Lit>] {
        &self.clauses[..self.num_definitions]
    }

    pub fn constraints(&self) -> &[Vec<Lit>] {
        &self.clauses[self.num_definitions..]
    }

    pub fn is_original(&self, var: u32) -> bool {
        self.original[var as usize - 1]
    }

    pub fn original_vars(&self) -> Vec<u32> {
        (1..=self.num_vars as u32)
            .filter(|&v| self.is_original(v))
            .collect()
    }

    pub fn num_original(&self) -> usize {
        self.original.iter().filter(|&&o| o).count()
    }

    pub fn has_auxiliary(&self) -> bool {
        self.original.iter().any(|&o| !o)
    }

    fn check_len(&self, mu: &Assignment) -> Result<(), FormulaError> {
        if mu.len() != self.num_vars {
            return Err(FormulaError::LengthMismatch {
                expected: self.num_vars,
                got: mu.len(),
            });
        }
        Ok(())
    }

    /// Truth value of the formula under a complete assignment.
    pub fn evaluate(&self, f: &Assignment) -> Result<bool, FormulaError> {
        self.check_len(f)?;
        if !f.is_complete() {
            return Err(FormulaError::PartialAssignment);
        }
        Ok(self
            .clauses
            .iter()
            .all(|c| c.iter().any(|&l| f.lit_value(l) == Value::True)))
    }

    /// Same as [`evaluate`](Self::evaluate) on a plain bit vector over all
    /// variables.
    pub fn evaluate_bits(&self, bits: &[bool]) -> bool {
        self.clauses.iter().all(|c| {
            c.iter()
                .any(|&l| bits[l.index()] == l.is_positive())
        })
    }

    /// Syntactic status of `mu`. Panics if the length does not match.
    pub fn status(&self, mu: &Assignment) -> ClauseStatus {
        assert_eq!(mu.len(), self.num_vars, "assignment length mismatch");
        let mut all_sat = true;
        for clause in &self.clauses {
            let mut sat = false;
            let mut open = false;
            for &l in clause {
                match mu.lit_value(l) {
                    Value::True => {
                        sat = true;
                        break;
                    }
                    Value::Unassigned => open = true,
                    Value::False => {}
                }
            }
            if !sat {
                if !open {
                    return ClauseStatus::Conflicting;
                }
                all_sat = false;
            }
        }
        if all_sat {
            ClauseStatus::Satisfied
        } else {
            ClauseStatus::Undetermined
        }
    }

    /// Unit propagation to a fixpoint.
    pub fn propagate(&self, mu: &Assignment) -> Propagation {
        assert_eq!(mu.len(), self.num_vars, "assignment length mismatch");
        let mut a = mu.clone();
        loop {
            let mut changed = false;
            for clause in &self.clauses {
                let mut unit = None;
                let mut open = 0;
                let mut sat = false;
                for &l in clause {
                    match a.lit_value(l) {
                        Value::True => {
                            sat = true;
                            break;
                        }
                        Value::Unassigned => {
                            open += 1;
                            unit = Some(l);
                        }
                        Value::False => {}
                    }
                }
                if sat {
                    continue;
                }
                match open {
                    0 => {
                        return Propagation {
                            assignment: a,
                            conflict: true,
                        }
                    }
                    1 => {
                        let l = unit.expect("one open literal");
                        a.assign(l.var(), l.is_positive());
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return Propagation {
                    assignment: a,
                    conflict: false,
                };
            }
        }
    }

    /// Projection of a complete assignment onto the original variables.
    pub fn project(&self, f: &Assignment) -> Result<World, FormulaError> {
        self.check_len(f)?;
        let mut bits = Vec::with_capacity(self.num_original());
        for (i, v) in f.values().iter().enumerate() {
            if self.original[i] {
                bits.push(v.as_bool().ok_or(FormulaError::PartialAssignment)?);
            }
        }
        Ok(World(bits))
    }

    /// The assignment fixing the original variables to `world` and leaving
    /// auxiliary variables open.
    pub fn lift(&self, world: &World) -> Result<Assignment, FormulaError> {
        if world.len() != self.num_original() {
            return Err(FormulaError::LengthMismatch {
                expected: self.num_original(),
                got: world.len(),
            });
        }
        let mut a = Assignment::unassigned(self.num_vars);
        let mut bits = world.bits().iter();
        for v in 1..=self.num_vars as u32 {
            if self.is_original(v) {
                a.assign(v, *bits.next().expect("length checked"));
            }
        }
        Ok(a)
    }

    /// Whether some extension of `mu` satisfies the formula (complete search).
    pub fn has_model_extending(&self, mu: &Assignment) -> bool {
        let p = self.propagate(mu);
        if p.conflict {
            return false;
        }
        match self.status(&p.assignment) {
            ClauseStatus::Satisfied => true,
            ClauseStatus::Conflicting => false,
            ClauseStatus::Undetermined => {
                let var = p
                    .assignment
                    .unassigned_vars()
                    .next()
                    .expect("undetermined status implies an open variable");
                self.has_model_extending(&p.assignment.extended(var, true))
                    || self.has_model_extending(&p.assignment.extended(var, false))
            }
        }
    }

    /// Whether `world`, a complete assignment of the original variables,
    /// extends to a model.
    pub fn satisfied_by_world(&self, world: &World) -> bool {
        match self.lift(world) {
            Ok(a) => self.has_model_extending(&a),
            Err(_) => false,
        }
    }

    /// Tseitin negation.
    ///
    /// Each constraint clause `C` gets an auxiliary `a ⇔ ¬C`, and the single
    /// new constraint is the disjunction of these auxiliaries. Definition
    /// clauses are kept unchanged, and the original variables stay the same.
    pub fn negate(&self) -> CnfFormula {
        let mut next_var = self.num_vars as u32;
        let mut defs: Vec<Vec<Lit>> = self.definitions().to_vec();
        let constraints = self.constraints();
        let mut top = Vec::with_capacity(constraints.len());
        for clause in constraints {
            next_var += 1;
            let a = Lit::pos(next_var);
            // a -> ¬l for every literal
            for &l in clause {
                defs.push(vec![!a, !l]);
            }
            // (∧ ¬l) -> a
            let mut back: Vec<Lit> = clause.clone();
            back.push(a);
            defs.push(back);
            top.push(a);
        }
        let mut constraints_out = Vec::new();
        if top.is_empty() {
            // The original is a tautology; its negation has no model.
            next_var += 1;
            constraints_out.push(vec![Lit::pos(next_var)]);
            constraints_out.push(vec![Lit::neg(next_var)]);
        } else {
            constraints_out.push(top);
        }
        let num_vars = next_var as usize;
        let mut original = self.original.clone();
        original.resize(num_vars, false);
        let num_defs = defs.len();
        defs.extend(constraints_out);
        CnfFormula::from_parts(num_vars, defs, num_defs, original)
            .expect("negation of a valid formula is valid")
    }
}
