//! Stratification of the knowledge base.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::ast::SpecAst;

/// Predicate → 0-based stratum. Predicates not mentioned by any knowledge
/// rule live in stratum 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StrataAssignment {
    strata: BTreeMap<String, usize>,
}

impl StrataAssignment {
    pub fn stratum(&self, pred: &str) -> usize {
        self.strata.get(pred).copied().unwrap_or(0)
    }

    pub fn max_stratum(&self) -> usize {
        self.strata.values().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.strata.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, usize)> for StrataAssignment {
    fn from_iter<T: IntoIterator<Item = (S, usize)>>(iter: T) -> Self {
        StrataAssignment {
            strata: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// The knowledge base depends negatively on itself through `path`
/// (first and last element coincide).
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("knowledge base is not stratifiable: negative cycle {}", path.join(" -> "))]
pub struct CycleError {
    pub path: Vec<String>,
}

/// One dependency edge `head -> body` of a rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dependency {
    pub head: String,
    pub body: String,
    pub negative: bool,
}

/// Computes the least stratification of the knowledge rules.
pub fn check_stratification(ast: &SpecAst) -> Result<StrataAssignment, CycleError> {
    let mut deps = Vec::new();
    let mut preds = Vec::new();
    for rule in &ast.knowledge {
        preds.push(rule.head.pred.clone());
        for lit in &rule.body {
            preds.push(lit.atom.pred.clone());
            deps.push(Dependency {
                head: rule.head.pred.clone(),
                body: lit.atom.pred.clone(),
                negative: lit.negated,
            });
        }
    }
    stratify(&preds, &deps)
}

/// Stratifies an explicit dependency graph. `preds` fixes node order (and
/// thus which cycle is reported); duplicates are ignored.
pub fn stratify(preds: &[String], deps: &[Dependency]) -> Result<StrataAssignment, CycleError> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<&str> = Vec::new();
    for p in preds
        .iter()
        .map(String::as_str)
        .chain(deps.iter().flat_map(|d| [d.head.as_str(), d.body.as_str()]))
    {
        if !ids.contains_key(p) {
            ids.insert(p, names.len());
            names.push(p);
        }
    }
    let n = names.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let edges: Vec<(usize, usize, bool)> = deps
        .iter()
        .map(|d| (ids[d.head.as_str()], ids[d.body.as_str()], d.negative))
        .collect();
    for &(h, b, _) in &edges {
        if !succ[h].contains(&b) {
            succ[h].push(b);
        }
    }

    for &(h, b, neg) in &edges {
        if !neg {
            continue;
        }
        if let Some(mut path) = find_path(&succ, b, h) {
            // path runs b ..= h; the cycle reads h -> b -> .. -> h
            path.insert(0, h);
            return Err(CycleError {
                path: path.into_iter().map(|i| names[i].to_string()).collect(),
            });
        }
    }

    // Without negative cycles this relaxation reaches a fixpoint within n rounds.
    let mut stratum = vec![0usize; n];
    loop {
        let mut changed = false;
        for &(h, b, neg) in &edges {
            let need = stratum[b] + usize::from(neg);
            if stratum[h] < need {
                stratum[h] = need;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(names
        .iter()
        .zip(stratum)
        .map(|(name, s)| (name.to_string(), s))
        .collect())
}

fn find_path(succ: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; succ.len()];
    let mut seen = vec![false; succ.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![v];
            let mut cur = v;
            while cur != from {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &w in &succ[v] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::parse_spec;

    fn knowledge(rules: &str) -> SpecAst {
        parse_spec(&format!(
            "system {{ domains {{ obj = {{a, b, c}}; }} knowledge {{ {rules} }} actions {{ }} rules {{ }} }} \
             agent r1 {{ beliefs {{ }} goals {{ }} }}"
        ))
        .unwrap()
    }

    #[test]
    fn positive_program_is_single_stratum() {
        let s = check_stratification(&knowledge("p :- q. q :- r.")).unwrap();
        assert_eq!(s.stratum("p"), 0);
        assert_eq!(s.stratum("q"), 0);
        assert_eq!(s.stratum("r"), 0);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn negation_raises_stratum() {
        let s = check_stratification(&knowledge(
            "clear(X) :- block(X), not occupied(X). occupied(Y) :- on(X,Y).",
        ))
        .unwrap();
        assert_eq!(s.stratum("occupied"), 0);
        assert_eq!(s.stratum("on"), 0);
        assert_eq!(s.stratum("block"), 0);
        assert_eq!(s.stratum("clear"), 1);
    }

    #[test]
    fn negative_cycle_is_reported() {
        let e = check_stratification(&knowledge("p :- not q. q :- not p.")).unwrap_err();
        assert_eq!(e.path, vec!["p", "q", "p"]);
        assert!(e.to_string().contains("p -> q -> p"));
    }

    #[test]
    fn negative_self_loop() {
        let e = check_stratification(&knowledge("p(X) :- q(X), not p(X).")).unwrap_err();
        assert_eq!(e.path, vec!["p", "p"]);
    }

    #[test]
    fn positive_cycle_with_negation_below() {
        let s = check_stratification(&knowledge(
            "p(X) :- q(X). q(X) :- p(X), not r(X). r(X) :- s(X).",
        ))
        .unwrap();
        assert_eq!(s.stratum("p"), 1);
        assert_eq!(s.stratum("q"), 1);
        assert_eq!(s.stratum("r"), 0);
    }
}
