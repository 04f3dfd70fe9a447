//! Canonical source rendering of a [`SpecAst`].

use std::fmt::Write;

use super::ast::*;

/// Formats an exact weight as a decimal. Weights read from source always
/// have a power-of-ten denominator, so this is lossless for parsed specs.
pub fn format_weight(w: &Weight) -> String {
    format_ratio(*w.numer(), *w.denom())
}

pub(crate) fn format_ratio(numer: i64, denom: i64) -> String {
    let int = numer / denom;
    let mut rem = numer % denom;
    let mut out = int.to_string();
    if rem == 0 {
        out.push_str(".0");
        return out;
    }
    out.push('.');
    let mut digits = 0;
    while rem != 0 && digits < 17 {
        rem *= 10;
        out.push(char::from(b'0' + (rem / denom) as u8));
        rem %= denom;
        digits += 1;
    }
    out
}

fn join<T: std::fmt::Display>(items: &[T], sep: &str) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

fn literal(l: &Literal) -> String {
    if l.negated {
        format!("not {}", l.atom)
    } else {
        l.atom.to_string()
    }
}

fn condition(c: &Condition) -> String {
    c.iter()
        .map(|m| {
            let op = match m.modality {
                Modality::Bel => "bel",
                Modality::Goal => "goal",
            };
            let neg = if m.negated { "not " } else { "" };
            format!("{neg}{op}({})", join(&m.atoms, ", "))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn op(o: EffectOp) -> &'static str {
    match o {
        EffectOp::Insert => "insert",
        EffectOp::Delete => "delete",
    }
}

/// Renders the spec in canonical section order.
pub fn pretty_print(ast: &SpecAst) -> String {
    let mut s = String::new();
    s.push_str("system {\n  domains {\n");
    for d in &ast.domains {
        let _ = writeln!(s, "    {} = {{{}}};", d.name, d.constants.join(", "));
    }
    s.push_str("  }\n");
    if !ast.knowledge.is_empty() {
        s.push_str("  knowledge {\n");
        for r in &ast.knowledge {
            if r.body.is_empty() {
                let _ = writeln!(s, "    {}.", r.head);
            } else {
                let body: Vec<_> = r.body.iter().map(literal).collect();
                let _ = writeln!(s, "    {} :- {}.", r.head, body.join(", "));
            }
        }
        s.push_str("  }\n");
    }
    s.push_str("  actions {\n");
    for a in &ast.actions {
        let params: Vec<_> = a
            .params
            .iter()
            .map(|p| format!("{}: {}", p.var, p.domain))
            .collect();
        let _ = writeln!(s, "    action {}({}) {{", a.name, params.join(", "));
        if a.duration != 1 {
            let _ = writeln!(s, "      duration {};", a.duration);
        }
        if a.precondition.is_empty() {
            s.push_str("      pre ;\n");
        } else {
            let _ = writeln!(s, "      pre {};", condition(&a.precondition));
        }
        for o in &a.outcomes {
            let _ = write!(s, "      effect [{}] {{", format_weight(&o.weight));
            for e in &o.effects {
                let _ = write!(s, " {} {};", op(e.op), e.atom);
            }
            s.push_str(" }\n");
        }
        s.push_str("    }\n");
    }
    s.push_str("  }\n  rules {\n");
    for r in &ast.decision_rules {
        let _ = writeln!(
            s,
            "    if {} then {}({});",
            condition(&r.condition),
            r.action,
            join(&r.args, ", ")
        );
    }
    s.push_str("  }\n");
    if !ast.send_rules.is_empty() || !ast.recv_rules.is_empty() {
        s.push_str("  comms {\n");
        for r in &ast.send_rules {
            let to = match &r.to {
                Recipient::All => "all",
                Recipient::Agent(a) => a.as_str(),
            };
            let _ = writeln!(
                s,
                "    on {} send {} to {};",
                condition(&r.condition),
                r.message,
                to
            );
        }
        for r in &ast.recv_rules {
            let from = r
                .from
                .as_ref()
                .map(|f| format!(" from {f}"))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "    on received {}{} do {} {};",
                r.pattern,
                from,
                op(r.op),
                r.atom
            );
        }
        s.push_str("  }\n");
    }
    if !ast.safety.is_empty() {
        s.push_str("  safety {\n");
        for c in &ast.safety {
            let lits: Vec<_> = c
                .literals
                .iter()
                .map(|l| {
                    let neg = if l.negated { "not " } else { "" };
                    format!("{neg}bel({})", l.atom)
                })
                .collect();
            let _ = writeln!(s, "    always {};", lits.join(", "));
        }
        s.push_str("  }\n");
    }
    s.push_str("}\n");
    for a in &ast.agents {
        let _ = writeln!(s, "agent {} {{", a.name);
        s.push_str("  beliefs {");
        for b in &a.beliefs {
            let _ = write!(s, " {b}.");
        }
        s.push_str(" }\n  goals {");
        for g in &a.goals {
            let _ = write!(s, " {};", join(g, " & "));
        }
        s.push_str(" }\n}\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_render_exactly() {
        assert_eq!(format_ratio(9, 10), "0.9");
        assert_eq!(format_ratio(1, 1), "1.0");
        assert_eq!(format_ratio(1, 8), "0.125");
        assert_eq!(format_ratio(3, 1000), "0.003");
    }
}
