//! Parser for the predicate text format.
//!
//! ```text
//! program   = { predicate } ;
//! predicate = name "(" term { "," term } ")" "." ;
//! term      = number | atom | string ;
//! atom      = [a-z] { [a-zA-Z0-9_] } ;
//! number    = [ "-" ] digits [ "." digits ] [ ("e"|"E") [ "+"|"-" ] digits ] ;
//! string    = '"' { char | '\"' | '\\' } '"' ;
//! ```
//!
//! `%` starts a comment that runs to the end of the line. Capitalised
//! identifiers (logic variables) are rejected.

use std::collections::HashSet;

use thiserror::Error;

use super::facts::{EgoFacts, ObjectFact, SceneFacts, Suggestion};
use super::vocab::{Action, Attribute, Category, NavCommand, RelativePos, RuleType, Slot, SpeedSymbol, Symbol};

/// Structured parse failure with a source position where one exists.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("input is not valid UTF-8 (byte {offset})")]
    InvalidUtf8 { offset: usize },
    #[error("{line}:{col}: syntax error, expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("{line}:{col}: atom {atom:?} is not a valid {slot}")]
    Vocabulary {
        atom: String,
        slot: Slot,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: duplicate object id {id}")]
    DuplicateId { id: u32, line: usize, col: usize },
    #[error("{line}:{col}: {predicate}/{expected} called with {found} arguments")]
    Arity {
        predicate: String,
        expected: String,
        found: usize,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: invalid {field}: {reason}")]
    Value {
        field: &'static str,
        reason: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: unknown predicate {name:?}")]
    UnknownPredicate { name: String, line: usize, col: usize },
    #[error("{line}:{col}: predicate {name:?} may appear only once")]
    Repeated { name: String, line: usize, col: usize },
    #[error("no ego(...) predicate")]
    MissingEgo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TermKind {
    Number { value: f64, integral: bool },
    Atom(String),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Term {
    pub kind: TermKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Predicate {
    pub name: String,
    pub args: Vec<Term>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number { value: f64, integral: bool },
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn syntax(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col,
            expected: expected.to_string(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '%' {
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn digits(&mut self, out: &mut String) -> usize {
        let mut n = 0;
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_digit() {
                out.push(c);
                self.bump();
                n += 1;
            } else {
                break;
            }
        }
        n
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let mut text = String::new();
        let mut integral = true;
        if self.chars.peek() == Some(&'-') {
            text.push('-');
            self.bump();
        }
        if self.digits(&mut text) == 0 {
            return Err(self.syntax("digit"));
        }
        // A '.' is a decimal point only when a digit follows; otherwise it
        // terminates the predicate.
        let mut look = self.chars.clone();
        if look.next() == Some('.') && look.next().is_some_and(|c| c.is_ascii_digit()) {
            text.push('.');
            self.bump();
            self.digits(&mut text);
            integral = false;
        }
        if matches!(self.chars.peek(), Some('e') | Some('E')) {
            text.push('e');
            self.bump();
            if let Some(&c) = self.chars.peek() {
                if c == '+' || c == '-' {
                    text.push(c);
                    self.bump();
                }
            }
            if self.digits(&mut text) == 0 {
                return Err(self.syntax("exponent digits"));
            }
            integral = false;
        }
        let value: f64 = text.parse().map_err(|_| self.syntax("number"))?;
        Ok(Tok::Number { value, integral })
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        self.bump(); // opening quote
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.syntax("closing '\"'")),
                Some('"') => return Ok(Tok::Str(out)),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    _ => return Err(self.syntax("escape sequence \\\" \\\\ or \\n")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<(Tok, Pos)>, ParseError> {
        self.skip_trivia();
        let pos = self.pos();
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => {
                self.bump();
                Tok::LParen
            }
            ')' => {
                self.bump();
                Tok::RParen
            }
            ',' => {
                self.bump();
                Tok::Comma
            }
            '.' => {
                self.bump();
                Tok::Dot
            }
            '"' => self.string()?,
            '-' | '0'..='9' => self.number()?,
            'a'..='z' => {
                let mut name = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        name.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(name)
            }
            'A'..='Z' | '_' => return Err(self.syntax("ground term (variables are not supported)")),
            _ => return Err(self.syntax("predicate, term or punctuation")),
        };
        Ok(Some((tok, pos)))
    }
}

fn syntax_at(pos: Pos, expected: &str) -> ParseError {
    ParseError::Syntax {
        line: pos.line,
        col: pos.col,
        expected: expected.to_string(),
    }
}

/// Tokenise and group into untyped predicates.
pub(crate) fn parse_program(text: &str) -> Result<Vec<Predicate>, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut out = Vec::new();
    while let Some((tok, pos)) = lexer.next_token()? {
        let Tok::Ident(name) = tok else {
            return Err(syntax_at(pos, "predicate name"));
        };
        match lexer.next_token()? {
            Some((Tok::LParen, _)) => {}
            Some((_, p)) => return Err(syntax_at(p, "'('")),
            None => return Err(lexer.syntax("'('")),
        }
        let mut args = Vec::new();
        loop {
            let (tok, p) = lexer.next_token()?.ok_or_else(|| lexer.syntax("term"))?;
            let kind = match tok {
                Tok::Ident(a) => TermKind::Atom(a),
                Tok::Number { value, integral } => TermKind::Number { value, integral },
                Tok::Str(s) => TermKind::Str(s),
                _ => return Err(syntax_at(p, "term")),
            };
            args.push(Term { kind, pos: p });
            match lexer.next_token()? {
                Some((Tok::Comma, _)) => continue,
                Some((Tok::RParen, _)) => break,
                Some((_, p)) => return Err(syntax_at(p, "',' or ')'")),
                None => return Err(lexer.syntax("',' or ')'")),
            }
        }
        match lexer.next_token()? {
            Some((Tok::Dot, _)) => {}
            Some((_, p)) => return Err(syntax_at(p, "'.'")),
            None => return Err(lexer.syntax("'.'")),
        }
        out.push(Predicate { name, args, pos });
    }
    Ok(out)
}

fn value_err(term: &Term, field: &'static str, reason: impl Into<String>) -> ParseError {
    ParseError::Value {
        field,
        reason: reason.into(),
        line: term.pos.line,
        col: term.pos.col,
    }
}

fn symbol<S: Symbol>(term: &Term) -> Result<S, ParseError> {
    match &term.kind {
        TermKind::Atom(a) => S::from_atom(a).ok_or_else(|| ParseError::Vocabulary {
            atom: a.clone(),
            slot: S::SLOT,
            line: term.pos.line,
            col: term.pos.col,
        }),
        TermKind::Number { .. } | TermKind::Str(_) => Err(syntax_at(term.pos, "atom")),
    }
}

fn real(term: &Term, field: &'static str) -> Result<f64, ParseError> {
    match term.kind {
        TermKind::Number { value, .. } if value.is_finite() => Ok(value),
        TermKind::Number { .. } => Err(value_err(term, field, "not finite")),
        _ => Err(syntax_at(term.pos, "number")),
    }
}

fn non_negative(term: &Term, field: &'static str) -> Result<f64, ParseError> {
    let v = real(term, field)?;
    if v < 0.0 {
        return Err(value_err(term, field, format!("{v} < 0")));
    }
    Ok(v)
}

fn heading(term: &Term, field: &'static str) -> Result<f64, ParseError> {
    let v = real(term, field)?;
    if !(v > -std::f64::consts::PI && v <= std::f64::consts::PI) {
        return Err(value_err(term, field, format!("{v} outside (-pi, pi]")));
    }
    Ok(v)
}

fn integer(term: &Term, field: &'static str, min: i64, max: i64) -> Result<i64, ParseError> {
    match term.kind {
        TermKind::Number {
            value,
            integral: true,
        } => {
            if value < min as f64 || value > max as f64 {
                return Err(value_err(term, field, format!("{value} out of range")));
            }
            Ok(value as i64)
        }
        _ => Err(syntax_at(term.pos, "integer")),
    }
}

fn ttc(term: &Term) -> Result<f64, ParseError> {
    if let TermKind::Atom(a) = &term.kind {
        if a == "inf" {
            return Ok(f64::INFINITY);
        }
        return Err(syntax_at(term.pos, "number or 'inf'"));
    }
    let v = real(term, "ttc")?;
    if v <= 0.0 {
        return Err(value_err(term, "ttc", format!("{v} <= 0")));
    }
    Ok(v)
}

fn arity(p: &Predicate, allowed: &[usize], label: &str) -> Result<(), ParseError> {
    if allowed.contains(&p.args.len()) {
        Ok(())
    } else {
        Err(ParseError::Arity {
            predicate: p.name.clone(),
            expected: label.to_string(),
            found: p.args.len(),
            line: p.pos.line,
            col: p.pos.col,
        })
    }
}

fn once(seen: &mut bool, p: &Predicate) -> Result<(), ParseError> {
    if std::mem::replace(seen, true) {
        return Err(ParseError::Repeated {
            name: p.name.clone(),
            line: p.pos.line,
            col: p.pos.col,
        });
    }
    Ok(())
}

/// Parse a facts document: one `ego/3` or `ego/4`, optional `frame/1` and
/// `history/N`, and any number of `object/8`.
pub fn parse_facts(text: &str) -> Result<SceneFacts, ParseError> {
    let preds = parse_program(text)?;
    let mut frame_id = String::new();
    let mut ego: Option<EgoFacts> = None;
    let mut history: Vec<f64> = Vec::new();
    let (mut seen_frame, mut seen_history) = (false, false);
    let mut objects = Vec::new();
    let mut ids = HashSet::new();

    for p in &preds {
        match p.name.as_str() {
            "frame" => {
                once(&mut seen_frame, p)?;
                arity(p, &[1], "1")?;
                frame_id = match &p.args[0].kind {
                    TermKind::Str(s) | TermKind::Atom(s) => s.clone(),
                    TermKind::Number { .. } => return Err(syntax_at(p.args[0].pos, "string or atom")),
                };
            }
            "ego" => {
                if ego.is_some() {
                    return Err(ParseError::Repeated {
                        name: p.name.clone(),
                        line: p.pos.line,
                        col: p.pos.col,
                    });
                }
                arity(p, &[3, 4], "3 or 4")?;
                let a = &p.args;
                let mut e = EgoFacts::new(
                    non_negative(&a[0], "ego speed")?,
                    heading(&a[1], "ego heading")?,
                    symbol::<NavCommand>(&a[2])?,
                );
                if let Some(lane) = a.get(3) {
                    e.lane_id = integer(lane, "lane id", i32::MIN as i64, i32::MAX as i64)? as i32;
                }
                ego = Some(e);
            }
            "history" => {
                once(&mut seen_history, p)?;
                history = p
                    .args
                    .iter()
                    .map(|t| non_negative(t, "history speed"))
                    .collect::<Result<_, _>>()?;
            }
            "object" => {
                arity(p, &[8], "8")?;
                let a = &p.args;
                let id = integer(&a[0], "object id", 0, u32::MAX as i64)? as u32;
                let obj = ObjectFact {
                    id,
                    category: symbol::<Category>(&a[1])?,
                    distance: non_negative(&a[2], "distance")?,
                    speed: non_negative(&a[3], "speed")?,
                    heading: heading(&a[4], "heading")?,
                    relative_pos: symbol::<RelativePos>(&a[5])?,
                    attribute: symbol::<Attribute>(&a[6])?,
                    ttc: ttc(&a[7])?,
                };
                if !ids.insert(id) {
                    return Err(ParseError::DuplicateId {
                        id,
                        line: p.pos.line,
                        col: p.pos.col,
                    });
                }
                objects.push(obj);
            }
            _ => {
                return Err(ParseError::UnknownPredicate {
                    name: p.name.clone(),
                    line: p.pos.line,
                    col: p.pos.col,
                })
            }
        }
    }

    let mut ego = ego.ok_or(ParseError::MissingEgo)?;
    ego.history_speeds = history;
    Ok(SceneFacts {
        frame_id,
        ego,
        objects,
    })
}

/// Byte-level entry point; invalid UTF-8 becomes a structured error.
pub fn parse_facts_bytes(bytes: &[u8]) -> Result<SceneFacts, ParseError> {
    parse_facts(utf8(bytes)?)
}

fn utf8(bytes: &[u8]) -> Result<&str, ParseError> {
    std::str::from_utf8(bytes).map_err(|e| ParseError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })
}

fn suggestion_from(p: &Predicate, source: &str) -> Result<Suggestion, ParseError> {
    if p.name != "suggestion" {
        return Err(ParseError::UnknownPredicate {
            name: p.name.clone(),
            line: p.pos.line,
            col: p.pos.col,
        });
    }
    arity(p, &[3], "3")?;
    Ok(Suggestion::new(
        symbol::<Action>(&p.args[0])?,
        symbol::<SpeedSymbol>(&p.args[1])?,
        symbol::<RuleType>(&p.args[2])?,
        source,
    ))
}

/// Parse `suggestion(Action, TargetSpeed, Type).` lines. Provenance is set
/// to `"input"`.
pub fn parse_suggestions(text: &str) -> Result<Vec<Suggestion>, ParseError> {
    parse_suggestions_from(text, "input")
}

/// As [`parse_suggestions`], tagging every suggestion with `source`.
pub fn parse_suggestions_from(text: &str, source: &str) -> Result<Vec<Suggestion>, ParseError> {
    parse_program(text)?
        .iter()
        .map(|p| suggestion_from(p, source))
        .collect()
}

pub fn parse_suggestions_bytes(bytes: &[u8]) -> Result<Vec<Suggestion>, ParseError> {
    parse_suggestions(utf8(bytes)?)
}

/// Lenient variant for untrusted generator output: syntactically valid
/// predicates that fail vocabulary or arity checks are discarded one by one
/// and returned alongside the accepted suggestions. A syntax error still
/// fails the whole document.
pub fn parse_suggestions_lenient(
    text: &str,
    source: &str,
) -> Result<(Vec<Suggestion>, Vec<ParseError>), ParseError> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for p in parse_program(text)? {
        match suggestion_from(&p, source) {
            Ok(s) => kept.push(s),
            Err(e) => dropped.push(e),
        }
    }
    Ok((kept, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE_STUDY: &str =
        "ego(6.9, 0.0, straight). object(3, pedestrian, 4.5, 1.2, 1.57, front, crossing, 0.89).";

    #[test]
    fn case_study_facts() {
        let f = parse_facts(CASE_STUDY).unwrap();
        assert_eq!(f.ego.speed, 6.9);
        assert_eq!(f.ego.nav, NavCommand::Straight);
        assert_eq!(f.objects.len(), 1);
        let o = &f.objects[0];
        assert_eq!(o.id, 3);
        assert_eq!(o.category, Category::Pedestrian);
        assert_eq!(o.distance, 4.5);
        assert_eq!(o.attribute, Attribute::Crossing);
        assert_eq!(o.ttc, 0.89);
    }

    #[test]
    fn ego_only() {
        let f = parse_facts("ego(0.0, 0.0, straight).").unwrap();
        assert_eq!(f.ego.speed, 0.0);
        assert!(f.objects.is_empty());
        assert!(f.frame_id.is_empty());
    }

    #[test]
    fn duplicate_object_id() {
        let text = "ego(1.0, 0.0, straight).\n\
                    object(1, vehicle, 10, 5, 0, front, moving, 0.89).\n\
                    object(1, vehicle, 12, 5, 0, front, moving, 2.0).";
        assert!(matches!(
            parse_facts(text),
            Err(ParseError::DuplicateId { id: 1, line: 3, .. })
        ));
    }

    #[test]
    fn comments_frame_history_lane() {
        let text = "% header\nframe(\"scn-1/t8\").\nego(5, -1.5, left, 2). % trailing\nhistory(4.0, 4.5, 5).";
        let f = parse_facts(text).unwrap();
        assert_eq!(f.frame_id, "scn-1/t8");
        assert_eq!(f.ego.lane_id, 2);
        assert_eq!(f.ego.history_speeds, vec![4.0, 4.5, 5.0]);
        assert_eq!(f.ego.heading, -1.5);
    }

    #[test]
    fn infinite_ttc_atom() {
        let f = parse_facts("ego(1,0,straight). object(0, barrier, 3, 0, 0, rear, stationary, inf).").unwrap();
        assert_eq!(f.objects[0].ttc, f64::INFINITY);
    }

    #[test]
    fn errors_carry_positions() {
        match parse_facts("ego(1.0, 0.0, straight)\nobject(") {
            Err(ParseError::Syntax { line: 2, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_facts("ego(1.0, 0.0, sideways).") {
            Err(ParseError::Vocabulary { atom, slot: Slot::Nav, line: 1, col: 15 }) => {
                assert_eq!(atom, "sideways")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_predicate_reported() {
        assert!(matches!(
            parse_facts("ego(1,0,straight). weather(rain)."),
            Err(ParseError::UnknownPredicate { ref name, .. }) if name == "weather"
        ));
    }

    #[test]
    fn range_checks() {
        for bad in [
            "ego(-1, 0, straight).",
            "ego(1, 3.5, straight).",
            "ego(1, -3.14159266, straight).",
            "ego(1, 0, straight). object(0, vehicle, 1, 1, 0, front, moving, 0).",
            "ego(1, 0, straight). object(-2, vehicle, 1, 1, 0, front, moving, 1).",
            "ego(1, 0, straight). object(2.5, vehicle, 1, 1, 0, front, moving, 1).",
        ] {
            assert!(parse_facts(bad).is_err(), "{bad}");
        }
        assert!(parse_facts("ego(1, 3.141592653589793, straight).").is_ok());
    }

    #[test]
    fn missing_and_repeated_ego() {
        assert_eq!(parse_facts("% nothing"), Err(ParseError::MissingEgo));
        assert!(matches!(
            parse_facts("ego(1,0,left). ego(1,0,left)."),
            Err(ParseError::Repeated { .. })
        ));
    }

    #[test]
    fn variables_rejected() {
        assert!(matches!(
            parse_suggestions("suggestion(A, zero, safety)."),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn suggestions_basic() {
        let s = parse_suggestions("suggestion(yield, zero, safety).").unwrap();
        assert_eq!(s, vec![Suggestion::new(Action::Yield, SpeedSymbol::Zero, RuleType::Safety, "input")]);
        let s = parse_suggestions("suggestion(keep_lane, current, efficiency).").unwrap();
        assert_eq!(s[0].speed, SpeedSymbol::Current);
        assert_eq!(s[0].rule_type, RuleType::Efficiency);
    }

    #[test]
    fn suggestion_vocabulary_error() {
        match parse_suggestions("suggestion(swerve, zero, safety).") {
            Err(ParseError::Vocabulary { atom, slot: Slot::Action, .. }) => assert_eq!(atom, "swerve"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lenient_discards_per_suggestion() {
        let text = "suggestion(yield, zero, safety).\n\
                    suggestion(swerve, zero, safety).\n\
                    suggestion(keep_lane, warp, efficiency).\n\
                    suggestion(keep_lane, slow).\n\
                    suggestion(turn_left, slow, legal).";
        let (kept, dropped) = parse_suggestions_lenient(text, "llm").unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped.len(), 3);
        assert!(kept.iter().all(|s| s.provenance == "llm"));
        assert!(parse_suggestions_lenient("suggestion(yield zero).", "x").is_err());
    }

    #[test]
    fn dot_after_integer_terminates() {
        let p = parse_program("p(10).q(1.5).").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].args[0].kind, TermKind::Number { value: 10.0, integral: true });
    }

    #[test]
    fn invalid_utf8() {
        assert_eq!(
            parse_facts_bytes(b"ego(1,0,\xff)."),
            Err(ParseError::InvalidUtf8 { offset: 8 })
        );
    }
}
