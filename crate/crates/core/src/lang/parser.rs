//! Recursive-descent parser for the specification grammar.
//!
//! Syntax errors stop the parse at the first offending token. Structural
//! problems that do not derail the grammar (duplicate sections, duplicate
//! agent names, missing mandatory sections) are collected and reported
//! together.

use std::collections::HashSet;

use num_rational::Ratio;

use super::ast::*;
use super::diag::{Diagnostic, Diagnostics};
use super::lexer::{tokenize, Tok, Token};

/// Parses a complete specification.
pub fn parse_spec(src: &str) -> Result<SpecAst, Diagnostics> {
    let toks = tokenize(src).map_err(|d| Diagnostics(vec![d]))?;
    let mut p = Parser {
        toks,
        pos: 0,
        diags: Vec::new(),
    };
    match p.spec() {
        Ok(ast) if p.diags.is_empty() => Ok(ast),
        Ok(_) => Err(Diagnostics(p.diags)),
        Err(d) => {
            p.diags.push(d);
            Err(Diagnostics(p.diags))
        }
    }
}

/// Parses a single atom such as `on(a,b)` or `done`.
pub fn parse_atom(src: &str) -> Result<Atom, Diagnostic> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        diags: Vec::new(),
    };
    let atom = p.atom()?;
    p.expect(Tok::Eof)?;
    Ok(atom)
}

/// Parses a comma-separated literal list such as `clear(X), not block(X)`.
pub fn parse_literals(src: &str) -> Result<Vec<Literal>, Diagnostic> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        diags: Vec::new(),
    };
    let mut out = Vec::new();
    if *p.peek() != Tok::Eof {
        out.push(p.literal()?);
        while *p.peek() == Tok::Comma {
            p.bump();
            out.push(p.literal()?);
        }
    }
    p.expect(Tok::Eof)?;
    Ok(out)
}

/// Parses a decimal literal into an exact rational.
pub fn parse_decimal(text: &str) -> Option<Weight> {
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 15 {
        return None;
    }
    let denom = 10i64.checked_pow(frac.len() as u32)?;
    let int: i64 = int.parse().ok()?;
    let frac_val: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let numer = int.checked_mul(denom)?.checked_add(frac_val)?;
    Some(Ratio::new(numer, denom))
}

const SECTIONS: [&str; 6] = ["domains", "knowledge", "actions", "rules", "comms", "safety"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].span.end
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        Diagnostic::new(
            self.span(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().span)),
            _ => Err(self.unexpected(what)),
        }
    }

    fn var(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Var(s) => Ok((s, self.bump().span)),
            _ => Err(self.unexpected(what)),
        }
    }

    fn close(&self, mut span: Span) -> Span {
        span.end = self.prev_end().max(span.start);
        span
    }

    fn spec(&mut self) -> PResult<SpecAst> {
        let mut ast = SpecAst::default();
        self.system(&mut ast)?;
        let mut names = HashSet::new();
        while self.is_kw("agent") {
            let agent = self.agent()?;
            if !names.insert(agent.name.clone()) {
                self.diags.push(Diagnostic::new(
                    agent.span,
                    format!("duplicate agent name `{}`", agent.name),
                ));
            }
            ast.agents.push(agent);
        }
        if *self.peek() != Tok::Eof {
            return Err(self.unexpected("`agent` or end of input"));
        }
        if ast.agents.is_empty() {
            self.diags.push(Diagnostic::new(
                self.span(),
                "expected at least one `agent` declaration",
            ));
        }
        Ok(ast)
    }

    fn system(&mut self, ast: &mut SpecAst) -> PResult<()> {
        let start = self.expect_kw("system")?;
        self.expect(Tok::LBrace)?;
        let mut seen: Vec<&str> = Vec::new();
        while let Tok::Ident(name) = self.peek().clone() {
            let Some(section) = SECTIONS.iter().copied().find(|s| *s == name) else {
                break;
            };
            let sspan = self.span();
            if seen.contains(&section) {
                self.diags.push(Diagnostic::new(
                    sspan,
                    format!("duplicate section `{section}`"),
                ));
            }
            seen.push(section);
            self.bump();
            self.expect(Tok::LBrace)?;
            match section {
                "domains" => self.domains(ast)?,
                "knowledge" => self.knowledge(ast)?,
                "actions" => self.actions(ast)?,
                "rules" => self.rules(ast)?,
                "comms" => self.comms(ast)?,
                _ => self.safety(ast)?,
            }
            self.expect(Tok::RBrace)?;
        }
        if *self.peek() != Tok::RBrace {
            return Err(self.unexpected("a section name or `}`"));
        }
        let end = self.bump().span;
        let span = Span {
            end: end.end,
            ..start
        };
        for required in ["domains", "actions", "rules"] {
            if !seen.contains(&required) {
                self.diags.push(Diagnostic::new(
                    span,
                    format!("missing mandatory section `{required}`"),
                ));
            }
        }
        Ok(())
    }

    fn domains(&mut self, ast: &mut SpecAst) -> PResult<()> {
        while let Tok::Ident(_) = self.peek() {
            let (name, span) = self.ident("domain name")?;
            self.expect(Tok::Eq)?;
            self.expect(Tok::LBrace)?;
            let mut constants = vec![self.ident("constant")?.0];
            while *self.peek() == Tok::Comma {
                self.bump();
                constants.push(self.ident("constant")?.0);
            }
            self.expect(Tok::RBrace)?;
            self.expect(Tok::Semi)?;
            ast.domains.push(Domain {
                name,
                constants,
                span: self.close(span),
            });
        }
        Ok(())
    }

    fn knowledge(&mut self, ast: &mut SpecAst) -> PResult<()> {
        while let Tok::Ident(_) = self.peek() {
            let span = self.span();
            let head = self.atom()?;
            let mut body = Vec::new();
            if *self.peek() == Tok::ColonDash {
                self.bump();
                body.push(self.literal()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    body.push(self.literal()?);
                }
            }
            self.expect(Tok::Dot)?;
            ast.knowledge.push(Rule {
                head,
                body,
                span: self.close(span),
            });
        }
        Ok(())
    }

    fn literal(&mut self) -> PResult<Literal> {
        let negated = self.is_kw("not") && matches!(self.peek_at(1), Tok::Ident(_));
        if negated {
            self.bump();
        }
        Ok(Literal {
            negated,
            atom: self.atom()?,
        })
    }

    fn atom(&mut self) -> PResult<Atom> {
        let (pred, mut span) = self.ident("predicate name")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            args.push(self.term()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.term()?);
            }
            self.expect(Tok::RParen)?;
        }
        span = self.close(span);
        Ok(Atom { pred, args, span })
    }

    fn term(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Term::Const(s))
            }
            Tok::Var(s) => {
                self.bump();
                Ok(Term::Var(s))
            }
            _ => Err(self.unexpected("a constant or variable")),
        }
    }

    fn actions(&mut self, ast: &mut SpecAst) -> PResult<()> {
        while self.is_kw("action") {
            let span = self.bump().span;
            let (name, _) = self.ident("action name")?;
            self.expect(Tok::LParen)?;
            let mut params = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    let (var, pspan) = self.var("parameter variable")?;
                    self.expect(Tok::Colon)?;
                    let (domain, _) = self.ident("domain name")?;
                    params.push(Param {
                        var,
                        domain,
                        span: self.close(pspan),
                    });
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            self.expect(Tok::LBrace)?;
            let mut duration = 1;
            if self.eat_kw("duration") {
                let dspan = self.span();
                match self.peek().clone() {
                    Tok::Number(n) if !n.contains('.') => {
                        self.bump();
                        duration = n.parse().map_err(|_| {
                            Diagnostic::new(dspan, format!("duration `{n}` out of range"))
                        })?;
                    }
                    _ => return Err(self.unexpected("an integer duration")),
                }
                self.expect(Tok::Semi)?;
            }
            self.expect_kw("pre")?;
            let precondition = if *self.peek() == Tok::Semi {
                Vec::new()
            } else {
                self.condition()?
            };
            self.expect(Tok::Semi)?;
            let mut outcomes = Vec::new();
            while self.is_kw("effect") {
                outcomes.push(self.outcome()?);
            }
            if outcomes.is_empty() {
                return Err(self.unexpected("`effect`"));
            }
            self.expect(Tok::RBrace)?;
            ast.actions.push(ActionDecl {
                name,
                params,
                duration,
                precondition,
                outcomes,
                span: self.close(span),
            });
        }
        Ok(())
    }

    fn outcome(&mut self) -> PResult<Outcome> {
        let span = self.expect_kw("effect")?;
        self.expect(Tok::LBracket)?;
        let wspan = self.span();
        let weight = match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                parse_decimal(&n).ok_or_else(|| {
                    Diagnostic::new(wspan, format!("weight `{n}` has too many digits"))
                })?
            }
            _ => return Err(self.unexpected("a weight")),
        };
        self.expect(Tok::RBracket)?;
        self.expect(Tok::LBrace)?;
        let mut effects = Vec::new();
        loop {
            let op = if self.eat_kw("insert") {
                EffectOp::Insert
            } else if self.eat_kw("delete") {
                EffectOp::Delete
            } else {
                break;
            };
            let atom = self.atom()?;
            self.expect(Tok::Semi)?;
            effects.push(Effect { op, atom });
        }
        self.expect(Tok::RBrace)?;
        Ok(Outcome {
            weight,
            effects,
            span: self.close(span),
        })
    }

    fn condition(&mut self) -> PResult<Condition> {
        let mut out = vec![self.mental_literal()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.mental_literal()?);
        }
        Ok(out)
    }

    fn mental_literal(&mut self) -> PResult<MentalLiteral> {
        let span = self.span();
        let negated = self.eat_kw("not");
        let modality = if self.eat_kw("bel") {
            Modality::Bel
        } else if self.eat_kw("goal") {
            Modality::Goal
        } else {
            return Err(self.unexpected("`bel` or `goal`"));
        };
        self.expect(Tok::LParen)?;
        let mut atoms = vec![self.atom()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            atoms.push(self.atom()?);
        }
        self.expect(Tok::RParen)?;
        Ok(MentalLiteral {
            negated,
            modality,
            atoms,
            span: self.close(span),
        })
    }

    fn rules(&mut self, ast: &mut SpecAst) -> PResult<()> {
        while self.is_kw("if") {
            let span = self.bump().span;
            let condition = self.condition()?;
            self.expect_kw("then")?;
            let (action, _) = self.ident("action name")?;
            let mut args = Vec::new();
            if *self.peek() == Tok::LParen {
                self.bump();
                if *self.peek() != Tok::RParen {
                    args.push(self.term()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.term()?);
                    }
                }
                self.expect(Tok::RParen)?;
            }
            self.expect(Tok::Semi)?;
            ast.decision_rules.push(DecisionRule {
                condition,
                action,
                args,
                span: self.close(span),
            });
        }
        Ok(())
    }

    fn effect_op(&mut self) -> PResult<EffectOp> {
        if self.eat_kw("insert") {
            Ok(EffectOp::Insert)
        } else if self.eat_kw("delete") {
            Ok(EffectOp::Delete)
        } else {
            Err(self.unexpected("`insert` or `delete`"))
        }
    }

    fn comms(&mut self, ast: &mut SpecAst) -> PResult<()> {
        while self.is_kw("on") {
            let span = self.bump().span;
            if self.eat_kw("received") {
                let pattern = self.atom()?;
                let from = if self.eat_kw("from") {
                    Some(self.ident("agent name")?.0)
                } else {
                    None
                };
                self.expect_kw("do")?;
                let op = self.effect_op()?;
                let atom = self.atom()?;
                self.expect(Tok::Semi)?;
                ast.recv_rules.push(RecvRule {
                    pattern,
                    from,
                    op,
                    atom,
                    span: self.close(span),
                });
            } else {
                let condition = self.condition()?;
                self.expect_kw("send")?;
                let message = self.atom()?;
                self.expect_kw("to")?;
                let to = if self.eat_kw("all") {
                    Recipient::All
                } else {
                    Recipient::Agent(self.ident("`all` or an agent name")?.0)
                };
                self.expect(Tok::Semi)?;
                ast.send_rules.push(SendRule {
                    condition,
                    message,
                    to,
                    span: self.close(span),
                });
            }
        }
        Ok(())
    }

    fn safety(&mut self, ast: &mut SpecAst) -> PResult<()> {
        while self.is_kw("always") {
            let span = self.bump().span;
            let mut literals = vec![self.safety_literal()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                literals.push(self.safety_literal()?);
            }
            self.expect(Tok::Semi)?;
            ast.safety.push(SafetyConstraint {
                literals,
                span: self.close(span),
            });
        }
        Ok(())
    }

    fn safety_literal(&mut self) -> PResult<Literal> {
        let negated = self.eat_kw("not");
        self.expect_kw("bel")?;
        self.expect(Tok::LParen)?;
        let atom = self.atom()?;
        self.expect(Tok::RParen)?;
        Ok(Literal { negated, atom })
    }

    fn agent(&mut self) -> PResult<AgentDecl> {
        let span = self.expect_kw("agent")?;
        let (name, _) = self.ident("agent name")?;
        self.expect(Tok::LBrace)?;
        self.expect_kw("beliefs")?;
        self.expect(Tok::LBrace)?;
        let mut beliefs = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            beliefs.push(self.atom()?);
            self.expect(Tok::Dot)?;
        }
        self.expect(Tok::RBrace)?;
        self.expect_kw("goals")?;
        self.expect(Tok::LBrace)?;
        let mut goals = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            let mut conj = vec![self.atom()?];
            while *self.peek() == Tok::Amp {
                self.bump();
                conj.push(self.atom()?);
            }
            self.expect(Tok::Semi)?;
            goals.push(conj);
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::RBrace)?;
        Ok(AgentDecl {
            name,
            beliefs,
            goals,
            span: self.close(span),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
        system {
          domains { obj = {a, b}; }
          knowledge { p(X) :- q(X), not r(X). q(a). }
          actions {
            action go(X: obj) { duration 2; pre bel(q(X)), not goal(r(X)); effect [0.5] { insert r(X); } effect [0.5] { delete q(X); } }
          }
          rules { if bel(q(X)) then go(X); }
          comms {
            on bel(r(X)) send done(X) to all;
            on received done(X) from r2 do insert r(X);
          }
          safety { always not bel(r(b)), bel(q(a)); }
        }
        agent r1 { beliefs { q(b). } goals { r(a) & r(b); r(b); } }
        agent r2 { beliefs { } goals { } }
    "#;

    #[test]
    fn parses_all_sections() {
        let ast = parse_spec(MINI).unwrap();
        assert_eq!(ast.domains[0].constants, vec!["a", "b"]);
        assert_eq!(ast.knowledge.len(), 2);
        assert!(ast.knowledge[0].body[1].negated);
        let act = &ast.actions[0];
        assert_eq!(act.duration, 2);
        assert_eq!(act.outcomes[0].weight, Ratio::new(1, 2));
        assert_eq!(act.precondition[1].modality, Modality::Goal);
        assert!(act.precondition[1].negated);
        assert_eq!(ast.send_rules[0].to, Recipient::All);
        assert_eq!(ast.recv_rules[0].from.as_deref(), Some("r2"));
        assert_eq!(ast.safety[0].literals.len(), 2);
        assert_eq!(ast.agents[0].goals.len(), 2);
        assert_eq!(ast.agents[0].goals[0].len(), 2);
    }

    #[test]
    fn empty_system_reports_missing_sections() {
        let err = parse_spec("system { }").unwrap_err();
        assert!(err.contains_message("missing mandatory section `domains`"));
        assert!(err.contains_message("missing mandatory section `actions`"));
    }

    #[test]
    fn duplicate_agent() {
        let src = "system { domains { } actions { } rules { } } \
                   agent r1 { beliefs { } goals { } } agent r1 { beliefs { } goals { } }";
        let err = parse_spec(src).unwrap_err();
        assert!(err.contains_message("duplicate agent name"));
    }

    #[test]
    fn duplicate_section() {
        let src = "system { domains { } domains { } actions { } rules { } } \
                   agent r1 { beliefs { } goals { } }";
        let err = parse_spec(src).unwrap_err();
        assert!(err.contains_message("duplicate section `domains`"));
    }

    #[test]
    fn syntax_error_location() {
        let src = "system {\n  domains { obj = {a b}; }\n}";
        let err = parse_spec(src).unwrap_err();
        let d = &err.0[0];
        assert_eq!((d.span.line, d.span.col), (2, 22));
        assert!(d.message.contains("expected"), "{}", d.message);
    }

    #[test]
    fn decimals() {
        assert_eq!(parse_decimal("0.9"), Some(Ratio::new(9, 10)));
        assert_eq!(parse_decimal("1"), Some(Ratio::new(1, 1)));
        assert_eq!(parse_decimal("0.125"), Some(Ratio::new(1, 8)));
        assert_eq!(parse_decimal("x"), None);
    }

    #[test]
    fn atom_parsing() {
        let a = parse_atom("on(a, b)").unwrap();
        assert_eq!(a.to_string(), "on(a,b)");
        assert!(parse_atom("on(a,").is_err());
        assert_eq!(parse_atom("done").unwrap().args.len(), 0);
    }
}
