//! Prism MDP emission and a checker for the emitted subset.
//!
//! The model uses one module with a single state variable `s`:
//!
//! ```text
//! mdp
//!
//! module agents
//!   s : [0..N-1] init 0;
//!   // state i: summary
//!   [label] s=i -> p1:(s'=t1) + p2:(s'=t2);
//! endmodule
//!
//! label "safe" = s=0 | s=2;
//! label "goal" = false;
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::lang::{format_ratio, Weight};
use crate::mental::Engine;
use crate::ts::{transition_labels, TransitionSystem};

pub const PROPERTIES: &str = "Pmin=? [ F \"goal\" ]\nPmax=? [ F \"goal\" ]\nPmax=? [ F !\"safe\" ]\n";

const STATE_VAR: &str = "s";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrismArtifacts {
    pub model_text: String,
    pub properties_text: String,
    /// Summary comment emitted above each state's commands.
    pub state_comments: BTreeMap<usize, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("transition system has no states")]
    Empty,
}

/// Probability literal: exact when the decimal expansion terminates within
/// 17 digits, truncated otherwise.
pub fn format_probability(w: Weight) -> String {
    format_ratio(*w.numer(), *w.denom())
}

/// Outcomes with equal targets summed, in order of first appearance.
pub fn merged_outcomes(outcomes: &[(Weight, usize)]) -> Vec<(Weight, usize)> {
    let mut out: Vec<(Weight, usize)> = Vec::with_capacity(outcomes.len());
    for &(w, t) in outcomes {
        match out.iter_mut().find(|(_, u)| *u == t) {
            Some((acc, _)) => *acc += w,
            None => out.push((w, t)),
        }
    }
    out
}

fn state_summary(engine: &Engine, ts: &TransitionSystem, id: usize) -> String {
    let index = engine.index();
    let mut parts = Vec::new();
    for (a, ms) in ts.states[id].agents.iter().enumerate() {
        let mut s = format!("{}: {{{}}}", engine.agent_name(a), ms.beliefs.to_strings(index).join(", "));
        if !ms.goals.is_empty() {
            let goals: Vec<String> = ms.goals.iter().map(|g| g.to_strings(index).join(" & ")).collect();
            let _ = write!(s, " goals [{}]", goals.join("; "));
        }
        if let Some(b) = &ms.busy {
            let _ = write!(
                s,
                " busy {} ({} left)",
                b.instance.display(engine.program(), index),
                b.remaining
            );
        }
        parts.push(s);
    }
    parts.join(" | ")
}

fn disjunction(ids: impl Iterator<Item = usize>) -> String {
    let terms: Vec<String> = ids.map(|i| format!("{STATE_VAR}={i}")).collect();
    if terms.is_empty() {
        "false".to_string()
    } else {
        terms.join(" | ")
    }
}

pub fn encode_prism(engine: &Engine, ts: &TransitionSystem) -> Result<PrismArtifacts, EncodeError> {
    if ts.states.is_empty() {
        return Err(EncodeError::Empty);
    }
    let labels = transition_labels(engine, ts);
    let mut state_comments = BTreeMap::new();
    let mut m = String::new();
    m.push_str("mdp\n\nmodule agents\n");
    let _ = writeln!(m, "  {STATE_VAR} : [0..{}] init {};", ts.states.len() - 1, ts.initial());
    let mut last = None;
    for (t, label) in ts.transitions.iter().zip(&labels) {
        if last != Some(t.source) {
            let summary = state_summary(engine, ts, t.source);
            let _ = writeln!(m, "  // state {}: {}", t.source, summary);
            state_comments.insert(t.source, summary);
            last = Some(t.source);
        }
        let updates: Vec<String> = merged_outcomes(&t.outcomes)
            .into_iter()
            .map(|(w, target)| format!("{}:({STATE_VAR}'={target})", format_probability(w)))
            .collect();
        let _ = writeln!(m, "  [{label}] {STATE_VAR}={} -> {};", t.source, updates.join(" + "));
    }
    m.push_str("endmodule\n\n");
    let _ = writeln!(
        m,
        "label \"safe\" = {};",
        disjunction(ts.labels.iter().enumerate().filter(|(_, l)| l.safe).map(|(i, _)| i))
    );
    let _ = writeln!(
        m,
        "label \"goal\" = {};",
        disjunction(ts.labels.iter().enumerate().filter(|(_, l)| l.goal).map(|(i, _)| i))
    );
    Ok(PrismArtifacts {
        model_text: m,
        properties_text: encode_properties(),
        state_comments,
    })
}

/// The fixed property template: goal reachability under every and some
/// scheduler, and the worst-case probability of leaving the safe states.
pub fn encode_properties() -> String {
    PROPERTIES.to_string()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrismDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for PrismDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct PrismErrors(pub Vec<PrismDiagnostic>);

impl fmt::Display for PrismErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCommand {
    pub label: String,
    pub source: usize,
    pub updates: Vec<(f64, usize)>,
}

/// A model reconstructed by [`check_prism_syntax`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedModel {
    pub states: usize,
    pub initial: usize,
    pub commands: Vec<ParsedCommand>,
    pub labels: BTreeMap<String, Vec<usize>>,
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { rest: s.trim() }
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn eat(&mut self, tok: &str) -> Result<(), String> {
        self.skip_ws();
        match self.rest.strip_prefix(tok) {
            Some(r) => {
                self.rest = r;
                Ok(())
            }
            None => Err(format!("expected `{tok}`, found `{}`", self.peek_word())),
        }
    }

    fn try_eat(&mut self, tok: &str) -> bool {
        self.eat(tok).is_ok()
    }

    fn peek_word(&self) -> &'a str {
        let r = self.rest.trim_start();
        let end = r.find(char::is_whitespace).unwrap_or(r.len());
        if end == 0 {
            "end of line"
        } else {
            &r[..end]
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        self.skip_ws();
        let end = self.rest.find(|c| !f(c)).unwrap_or(self.rest.len());
        let (tok, r) = self.rest.split_at(end);
        self.rest = r;
        tok
    }

    fn ident(&mut self) -> Result<&'a str, String> {
        let id = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        if id.is_empty() || id.starts_with(|c: char| c.is_ascii_digit()) {
            Err(format!("expected identifier, found `{}`", self.peek_word()))
        } else {
            Ok(id)
        }
    }

    fn int(&mut self) -> Result<usize, String> {
        let n = self.take_while(|c| c.is_ascii_digit());
        n.parse()
            .map_err(|_| format!("expected integer, found `{}`", self.peek_word()))
    }

    fn prob(&mut self) -> Result<f64, String> {
        let n = self.take_while(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == '-');
        n.parse()
            .map_err(|_| format!("expected probability, found `{}`", self.peek_word()))
    }

    fn end(&mut self) -> Result<(), String> {
        self.skip_ws();
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(format!("unexpected `{}`", self.peek_word()))
        }
    }
}

fn state_eq(c: &mut Cursor, var: &str) -> Result<usize, String> {
    let v = c.ident()?;
    if v != var {
        return Err(format!("unknown variable `{v}`"));
    }
    c.eat("=")?;
    c.int()
}

/// Validates `text` against the emitted subset and reconstructs the model.
pub fn check_prism_syntax(text: &str) -> Result<ParsedModel, PrismErrors> {
    #[derive(PartialEq)]
    enum Phase {
        Header,
        Module,
        Var,
        Commands,
        Labels,
    }
    let mut diags = Vec::new();
    let mut phase = Phase::Header;
    let mut var = String::new();
    let mut model = ParsedModel {
        states: 0,
        initial: 0,
        commands: Vec::new(),
        labels: BTreeMap::new(),
    };
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap_or("").trim();
        if !line.is_empty() {
            lines.push((i + 1, line));
        }
    }
    for &(ln, line) in &lines {
        let mut c = Cursor::new(line);
        let res: Result<(), String> = (|| match phase {
            Phase::Header => {
                c.eat("mdp")?;
                c.end()?;
                phase = Phase::Module;
                Ok(())
            }
            Phase::Module => {
                c.eat("module")?;
                c.ident()?;
                c.end()?;
                phase = Phase::Var;
                Ok(())
            }
            Phase::Var => {
                var = c.ident()?.to_string();
                c.eat(":")?;
                c.eat("[")?;
                let lo = c.int()?;
                c.eat("..")?;
                let hi = c.int()?;
                c.eat("]")?;
                c.eat("init")?;
                let init = c.int()?;
                c.eat(";")?;
                c.end()?;
                if lo != 0 || hi < lo {
                    return Err(format!("state range must be [0..N-1], found [{lo}..{hi}]"));
                }
                if init > hi {
                    return Err(format!("initial state {init} out of range"));
                }
                model.states = hi + 1;
                model.initial = init;
                phase = Phase::Commands;
                Ok(())
            }
            Phase::Commands => {
                if c.try_eat("endmodule") {
                    c.end()?;
                    phase = Phase::Labels;
                    return Ok(());
                }
                c.eat("[")?;
                let label = c.take_while(|ch| ch.is_ascii_alphanumeric() || ch == '_').to_string();
                c.eat("]")?;
                let source = state_eq(&mut c, &var)?;
                c.eat("->")?;
                let mut updates = Vec::new();
                loop {
                    let p = c.prob()?;
                    c.eat(":")?;
                    c.eat("(")?;
                    let v = c.ident()?;
                    if v != var {
                        return Err(format!("unknown variable `{v}`"));
                    }
                    c.eat("'")?;
                    c.eat("=")?;
                    let t = c.int()?;
                    c.eat(")")?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(format!("probability {p} outside [0, 1]"));
                    }
                    if t >= model.states {
                        return Err(format!("target state {t} out of range"));
                    }
                    updates.push((p, t));
                    if !c.try_eat("+") {
                        break;
                    }
                }
                c.eat(";")?;
                c.end()?;
                if source >= model.states {
                    return Err(format!("source state {source} out of range"));
                }
                let sum: f64 = updates.iter().map(|(p, _)| p).sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(format!("command probabilities sum to {sum}, not 1"));
                }
                model.commands.push(ParsedCommand {
                    label,
                    source,
                    updates,
                });
                Ok(())
            }
            Phase::Labels => {
                c.eat("label")?;
                c.eat("\"")?;
                let name = c.ident()?.to_string();
                c.eat("\"")?;
                c.eat("=")?;
                let mut ids = Vec::new();
                if !c.try_eat("false") {
                    loop {
                        let i = state_eq(&mut c, &var)?;
                        if i >= model.states {
                            return Err(format!("state {i} out of range"));
                        }
                        ids.push(i);
                        if !c.try_eat("|") {
                            break;
                        }
                    }
                }
                c.eat(";")?;
                c.end()?;
                if model.labels.insert(name.clone(), ids).is_some() {
                    return Err(format!("duplicate label \"{name}\""));
                }
                Ok(())
            }
        })();
        if let Err(message) = res {
            diags.push(PrismDiagnostic { line: ln, message });
        }
    }
    let last = lines.last().map_or(1, |(l, _)| *l);
    let missing = match phase {
        Phase::Header => Some("missing `mdp` header"),
        Phase::Module => Some("missing module declaration"),
        Phase::Var => Some("missing state variable declaration"),
        Phase::Commands => Some("missing `endmodule`"),
        Phase::Labels => None,
    };
    if let Some(m) = missing {
        diags.push(PrismDiagnostic {
            line: last,
            message: m.to_string(),
        });
    }
    if diags.is_empty() {
        Ok(model)
    } else {
        Err(PrismErrors(diags))
    }
}
