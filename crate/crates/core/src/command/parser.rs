//! Recursive-descent parser for the command grammar. Expected-token sets are
//! collected at the furthest position reached, so diagnostics name every
//! alternative that would have been accepted there.

use std::collections::BTreeSet;

use nalgebra::Vector3;

use super::lexer::{number_word, tokenize, Token, TokenKind};
use super::{Diagnostic, Goal, Target, TuneValue, XrfParam, DEFAULT_INTEGRATION_S};

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const EFFECTORS: [&str; 3] = ["gripper", "arm", "end effector"];
const PARAMS: [(&str, XrfParam); 3] =
    [("tube voltage", XrfParam::TubeVoltage), ("tube current", XrfParam::TubeCurrent), ("integration time", XrfParam::IntegrationTime)];
const NUMBER: &str = "<number>";
const LABEL: &str = "<label>";

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    furthest: usize,
    expected: BTreeSet<String>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn note(&mut self, what: &str) {
        if self.pos > self.furthest {
            self.furthest = self.pos;
            self.expected.clear();
        }
        if self.pos == self.furthest {
            self.expected.insert(what.to_string());
        }
    }

    fn word_at(&self, i: usize) -> Option<&str> {
        match self.tokens.get(i).map(|t| &t.kind) {
            Some(TokenKind::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn at_phrase(&self, phrase: &str) -> bool {
        phrase.split(' ').enumerate().all(|(k, w)| self.word_at(self.pos + k) == Some(w))
    }

    fn eat(&mut self, phrase: &str) -> bool {
        if self.at_phrase(phrase) {
            self.pos += phrase.split(' ').count();
            true
        } else {
            self.note(phrase);
            false
        }
    }

    fn eat_any<'a>(&mut self, alts: &[&'a str]) -> Option<&'a str> {
        alts.iter().copied().find(|a| self.eat(a))
    }

    fn fail<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(Diagnostic { position: self.furthest + 1, expected: self.expected.iter().cloned().collect(), message: message.into() })
    }

    fn require(&mut self, alts: &[&str]) -> PResult<()> {
        if self.eat_any(alts).is_some() {
            Ok(())
        } else {
            self.unexpected()
        }
    }

    fn unexpected<T>(&self) -> PResult<T> {
        match self.tokens.get(self.furthest) {
            Some(t) => self.fail(format!("unexpected '{}'", t.text)),
            None => self.fail("unexpected end of command"),
        }
    }

    fn is_symbol(&self, kind: fn(&TokenKind) -> bool) -> bool {
        self.tokens.get(self.pos).is_some_and(|t| kind(&t.kind))
    }

    fn eat_symbol(&mut self, name: &str, kind: fn(&TokenKind) -> bool) -> PResult<()> {
        if self.is_symbol(kind) {
            self.pos += 1;
            Ok(())
        } else {
            self.note(name);
            self.unexpected()
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let value = match self.tokens.get(self.pos).map(|t| &t.kind) {
            Some(TokenKind::Number(v)) => Some(*v),
            Some(TokenKind::Word(w)) => number_word(w).map(f64::from),
            _ => None,
        };
        match value {
            Some(v) => {
                self.pos += 1;
                Ok(v)
            }
            None => {
                self.note(NUMBER);
                self.unexpected()
            }
        }
    }

    fn article(&mut self) {
        self.eat_any(&ARTICLES);
    }

    /// One or more word/number tokens, stopping before any word in `stop`.
    /// Number words are normalized to digits.
    fn label(&mut self, stop: &[&str]) -> PResult<String> {
        let mut parts = Vec::new();
        while let Some(t) = self.tokens.get(self.pos) {
            let part = match &t.kind {
                TokenKind::Word(w) if stop.contains(&w.as_str()) => break,
                TokenKind::Word(w) => number_word(w).map_or_else(|| w.clone(), |n| n.to_string()),
                TokenKind::Number(_) => t.text.clone(),
                _ => break,
            };
            parts.push(part);
            self.pos += 1;
        }
        if parts.is_empty() {
            self.note(LABEL);
            return self.unexpected();
        }
        Ok(parts.join(" "))
    }

    fn point(&mut self) -> PResult<Vector3<f64>> {
        self.eat_symbol("(", |k| matches!(k, TokenKind::LParen))?;
        let x = self.number()?;
        self.eat_symbol(",", |k| matches!(k, TokenKind::Comma))?;
        let y = self.number()?;
        self.eat_symbol(",", |k| matches!(k, TokenKind::Comma))?;
        let z = self.number()?;
        self.eat_symbol(")", |k| matches!(k, TokenKind::RParen))?;
        let scale = match self.eat_any(&["m", "cm"]) {
            Some("cm") => 0.01,
            _ => 1.0,
        };
        Ok(Vector3::new(x, y, z) * scale)
    }

    fn target(&mut self, stop: &[&str]) -> PResult<Target> {
        if self.eat_any(&["there", "here"]).is_some() {
            return Ok(Target::Deictic);
        }
        if self.is_symbol(|k| matches!(k, TokenKind::LParen)) {
            return self.point().map(Target::Point);
        }
        self.note("(");
        self.article();
        self.label(stop).map(Target::Label)
    }

    /// `(("there"|"here") | "at" target)?`, absent meaning the gestured spot.
    fn location(&mut self, stop: &[&str]) -> PResult<Target> {
        if self.eat_any(&["there", "here"]).is_some() {
            return Ok(Target::Deictic);
        }
        if self.eat("at") {
            return self.target(stop);
        }
        Ok(Target::Deictic)
    }

    fn command(&mut self) -> PResult<Goal> {
        if self.eat_any(&["move", "go"]).is_some() {
            self.article();
            self.eat_any(&EFFECTORS);
            self.require(&["to"])?;
            return Ok(Goal::MoveTo { target: self.target(&[])? });
        }
        if self.eat_any(&["grab", "grasp", "pick up"]).is_some() {
            self.article();
            return Ok(Goal::GraspTool { target: Target::Label(self.label(&[])?) });
        }
        if self.eat("start") {
            self.article();
            return self.xrf_rest();
        }
        if self.eat("take") {
            self.article();
            if self.at_phrase("xrf") {
                return self.xrf_rest();
            }
            self.note("xrf");
            return self.core_rest();
        }
        if self.eat("collect") {
            self.article();
            return self.core_rest();
        }
        if let Some(verb) = self.eat_any(&["set", "increase", "decrease"]) {
            return self.tune_rest(verb);
        }
        if self.eat("stow") {
            self.article();
            self.require(&["arm", "gripper"])?;
            return Ok(Goal::Stow);
        }
        if self.eat_any(&["stop", "abort", "freeze"]).is_some() {
            return Ok(Goal::Abort);
        }
        self.unexpected()
    }

    fn xrf_rest(&mut self) -> PResult<Goal> {
        self.require(&["xrf"])?;
        self.require(&["measurement", "reading"])?;
        let target = self.location(&["for"])?;
        let mut integration_s = DEFAULT_INTEGRATION_S;
        if self.eat("for") {
            let at = self.pos;
            integration_s = self.number()?;
            self.require(&["seconds", "s"])?;
            if integration_s <= 0.0 {
                self.pos = at;
                self.furthest = at;
                self.expected.clear();
                return self.fail("integration time must be positive");
            }
        }
        Ok(Goal::XrfMeasure { target, integration_s })
    }

    fn core_rest(&mut self) -> PResult<Goal> {
        self.require(&["push core", "core sample"])?;
        Ok(Goal::PushCore { target: self.location(&[])? })
    }

    fn tune_rest(&mut self, verb: &str) -> PResult<Goal> {
        let param = match PARAMS.iter().find(|(p, _)| self.eat(p)) {
            Some((_, param)) => *param,
            None => return self.unexpected(),
        };
        let absolute = match self.eat_any(&["to", "by"]) {
            Some(w) => w == "to",
            None => return self.unexpected(),
        };
        let value = self.number()?;
        let unit_pos = self.pos;
        if let Some(unit) = self.eat_any(&["kv", "ua", "s", "cm", "m"]) {
            if unit != param.unit() {
                self.furthest = unit_pos;
                self.expected = [param.unit().to_string()].into();
                return self.fail(format!("unit '{unit}' does not apply to {}", param.name()));
            }
        }
        let value = if absolute {
            TuneValue::To(value)
        } else if verb == "decrease" {
            TuneValue::By(-value)
        } else {
            TuneValue::By(value)
        };
        Ok(Goal::TuneXrf { param, value })
    }
}

/// Parses a transcript into a goal with symbolic referents.
pub fn parse_command(text: &str) -> Result<Goal, Diagnostic> {
    let mut p = Parser { tokens: tokenize(text), pos: 0, furthest: 0, expected: BTreeSet::new() };
    let goal = p.command()?;
    if p.pos < p.tokens.len() {
        if p.furthest < p.pos {
            p.furthest = p.pos;
            p.expected.clear();
        }
        p.expected.insert("<end>".into());
        return p.unexpected();
    }
    Ok(goal)
}
