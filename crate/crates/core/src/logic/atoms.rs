//! The finite Herbrand base of a validated spec.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use crate::lang::{parse_atom, Term, ValidatedSpec};

/// Index into the globally name-sorted constant table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredId(pub u32);

/// Dense id of a ground atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomId(pub u32);

impl AtomId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Default cap on the number of ground atoms.
pub const DEFAULT_ATOM_LIMIT: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("Herbrand base has {size} atoms, exceeding the limit of {limit}")]
pub struct CapacityError {
    pub size: u128,
    pub limit: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AtomError {
    #[error("malformed atom `{0}`")]
    Syntax(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("`{pred}` takes {expected} arguments, got {got}")]
    Arity {
        pred: String,
        expected: usize,
        got: usize,
    },
    #[error("atom `{0}` is not ground")]
    NotGround(String),
    #[error("constant `{constant}` is not a valid argument {position} of `{pred}`")]
    BadArgument {
        pred: String,
        position: usize,
        constant: String,
    },
}

#[derive(Clone, Debug)]
struct PredInfo {
    name: String,
    domains: Vec<usize>,
    offset: usize,
    size: usize,
    /// Mixed-radix strides, first argument most significant.
    strides: Vec<usize>,
}

/// Bijection between ground atoms and dense ids.
///
/// Ids are assigned predicate by predicate (declaration order), and within a
/// predicate in lexicographic order of the argument tuple.
#[derive(Clone, Debug)]
pub struct AtomIndex {
    constants: Vec<String>,
    const_lookup: HashMap<String, ConstId>,
    /// Domain of each constant and its position inside that domain.
    const_home: Vec<(usize, usize)>,
    domains: Vec<Vec<ConstId>>,
    preds: Vec<PredInfo>,
    pred_lookup: HashMap<String, PredId>,
    len: usize,
}

impl AtomIndex {
    pub fn build(spec: &ValidatedSpec) -> Result<Self, CapacityError> {
        Self::with_limit(spec, DEFAULT_ATOM_LIMIT)
    }

    pub fn with_limit(spec: &ValidatedSpec, limit: usize) -> Result<Self, CapacityError> {
        let mut constants: Vec<String> = spec
            .domains
            .iter()
            .flat_map(|d| d.constants.iter().cloned())
            .collect();
        constants.sort();
        let const_lookup: HashMap<String, ConstId> = constants
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), ConstId(i as u32)))
            .collect();
        let mut const_home = vec![(0, 0); constants.len()];
        let domains: Vec<Vec<ConstId>> = spec
            .domains
            .iter()
            .enumerate()
            .map(|(di, d)| {
                d.constants
                    .iter()
                    .enumerate()
                    .map(|(pos, c)| {
                        let id = const_lookup[c];
                        const_home[id.0 as usize] = (di, pos);
                        id
                    })
                    .collect()
            })
            .collect();

        let mut preds = Vec::new();
        let mut offset: u128 = 0;
        for sig in &spec.predicates {
            let sizes: Vec<usize> = sig.domains.iter().map(|&d| domains[d].len()).collect();
            let size: u128 = sizes.iter().map(|&s| s as u128).product();
            let mut strides = vec![1usize; sizes.len()];
            for i in (0..sizes.len().saturating_sub(1)).rev() {
                strides[i] = strides[i + 1].saturating_mul(sizes[i + 1]);
            }
            if offset + size > limit as u128 {
                let total: u128 = offset
                    + spec
                        .predicates
                        .iter()
                        .skip(preds.len())
                        .map(|s| {
                            s.domains
                                .iter()
                                .map(|&d| domains[d].len() as u128)
                                .product::<u128>()
                        })
                        .sum::<u128>();
                return Err(CapacityError { size: total, limit });
            }
            preds.push(PredInfo {
                name: sig.name.clone(),
                domains: sig.domains.clone(),
                offset: offset as usize,
                size: size as usize,
                strides,
            });
            offset += size;
        }
        let pred_lookup = preds
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), PredId(i as u32)))
            .collect();
        Ok(AtomIndex {
            constants,
            const_lookup,
            const_home,
            domains,
            preds,
            pred_lookup,
            len: offset as usize,
        })
    }

    /// Number of ground atoms.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn predicate_count(&self) -> usize {
        self.preds.len()
    }

    pub fn predicate(&self, name: &str) -> Option<PredId> {
        self.pred_lookup.get(name).copied()
    }

    pub fn predicate_name(&self, p: PredId) -> &str {
        &self.preds[p.0 as usize].name
    }

    pub fn arity(&self, p: PredId) -> usize {
        self.preds[p.0 as usize].domains.len()
    }

    pub fn arg_domain(&self, p: PredId, pos: usize) -> usize {
        self.preds[p.0 as usize].domains[pos]
    }

    /// Ids of the atoms of `p`.
    pub fn range(&self, p: PredId) -> Range<usize> {
        let info = &self.preds[p.0 as usize];
        info.offset..info.offset + info.size
    }

    pub fn constant(&self, name: &str) -> Option<ConstId> {
        self.const_lookup.get(name).copied()
    }

    pub fn constant_name(&self, c: ConstId) -> &str {
        &self.constants[c.0 as usize]
    }

    pub fn constant_count(&self) -> usize {
        self.constants.len()
    }

    /// Members of a domain in name order.
    pub fn domain(&self, d: usize) -> &[ConstId] {
        &self.domains[d]
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    /// Id of `p(args)`, or `None` when an argument lies outside its domain.
    pub fn atom_id(&self, p: PredId, args: &[ConstId]) -> Option<AtomId> {
        let info = &self.preds[p.0 as usize];
        if args.len() != info.domains.len() {
            return None;
        }
        let mut id = info.offset;
        for ((c, &d), &stride) in args.iter().zip(&info.domains).zip(&info.strides) {
            let (home, pos) = self.const_home[c.0 as usize];
            if home != d {
                return None;
            }
            id += pos * stride;
        }
        Some(AtomId(id as u32))
    }

    /// Predicate owning atom `id`.
    pub fn predicate_of(&self, id: AtomId) -> PredId {
        let i = id.index();
        let p = self.preds.partition_point(|info| info.offset + info.size <= i);
        PredId(p as u32)
    }

    /// Writes the arguments of `id` (an atom of `p`) into `out`.
    pub fn decode_into(&self, p: PredId, id: AtomId, out: &mut Vec<ConstId>) {
        let info = &self.preds[p.0 as usize];
        out.clear();
        let mut rest = id.index() - info.offset;
        for (&d, &stride) in info.domains.iter().zip(&info.strides) {
            out.push(self.domains[d][rest / stride]);
            rest %= stride;
        }
    }

    pub fn decode(&self, id: AtomId) -> (PredId, Vec<ConstId>) {
        let p = self.predicate_of(id);
        let mut args = Vec::new();
        self.decode_into(p, id, &mut args);
        (p, args)
    }

    pub fn display(&self, id: AtomId) -> AtomDisplay<'_> {
        AtomDisplay { index: self, id }
    }

    /// Resolves textual ground atom such as `on(a,b)`.
    pub fn parse(&self, text: &str) -> Result<AtomId, AtomError> {
        let atom = parse_atom(text).map_err(|_| AtomError::Syntax(text.to_string()))?;
        let p = self
            .predicate(&atom.pred)
            .ok_or_else(|| AtomError::UnknownPredicate(atom.pred.clone()))?;
        if atom.args.len() != self.arity(p) {
            return Err(AtomError::Arity {
                pred: atom.pred,
                expected: self.arity(p),
                got: atom.args.len(),
            });
        }
        let mut args = Vec::with_capacity(atom.args.len());
        for (i, t) in atom.args.iter().enumerate() {
            let Term::Const(c) = t else {
                return Err(AtomError::NotGround(text.to_string()));
            };
            let bad = || AtomError::BadArgument {
                pred: atom.pred.clone(),
                position: i + 1,
                constant: c.clone(),
            };
            let id = self.constant(c).ok_or_else(bad)?;
            if self.const_home[id.0 as usize].0 != self.arg_domain(p, i) {
                return Err(bad());
            }
            args.push(id);
        }
        Ok(self.atom_id(p, &args).expect("arguments checked against domains"))
    }
}

pub struct AtomDisplay<'a> {
    index: &'a AtomIndex,
    id: AtomId,
}

impl fmt::Display for AtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, args) = self.index.decode(self.id);
        f.write_str(self.index.predicate_name(p))?;
        if !args.is_empty() {
            f.write_str("(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                f.write_str(self.index.constant_name(*a))?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::load_spec;

    fn index(system: &str) -> AtomIndex {
        let spec = load_spec(&format!(
            "system {{ {system} actions {{ }} rules {{ }} }} agent r1 {{ beliefs {{ }} goals {{ }} }}"
        ))
        .unwrap();
        AtomIndex::build(&spec).unwrap()
    }

    #[test]
    fn product_of_domains() {
        // block = {a,b,c}, place = {p,q,r,table}: on(block, place) has 3 x 4 atoms
        let idx = index(
            "domains { block = {a, b, c}; place = {p, q, r, table}; } \
             knowledge { on(a, table). }",
        );
        let on = idx.predicate("on").unwrap();
        assert_eq!(idx.range(on).len(), 12);
    }

    #[test]
    fn nullary_predicate() {
        let idx = index("domains { o = {a}; } knowledge { done. }");
        assert_eq!(idx.range(idx.predicate("done").unwrap()).len(), 1);
        assert_eq!(idx.display(AtomId(0)).to_string(), "done");
    }

    #[test]
    fn ids_are_lexicographic() {
        let idx = index("domains { o = {c, a, b}; } knowledge { p(a, a). q(a). }");
        let names: Vec<String> = (0..idx.len())
            .map(|i| idx.display(AtomId(i as u32)).to_string())
            .collect();
        assert_eq!(
            names,
            vec![
                "p(a,a)", "p(a,b)", "p(a,c)", "p(b,a)", "p(b,b)", "p(b,c)", "p(c,a)", "p(c,b)",
                "p(c,c)", "q(a)", "q(b)", "q(c)"
            ]
        );
    }

    #[test]
    fn round_trip_ids() {
        let idx = index(
            "domains { o = {a, b}; t = {x, y, z}; } knowledge { p(a, x). r(y). s. }",
        );
        for i in 0..idx.len() {
            let id = AtomId(i as u32);
            let (p, args) = idx.decode(id);
            assert_eq!(idx.atom_id(p, &args), Some(id));
            assert_eq!(idx.parse(&idx.display(id).to_string()), Ok(id));
        }
    }

    #[test]
    fn parse_errors() {
        let idx = index("domains { o = {a}; t = {x}; } knowledge { p(a). }");
        assert!(matches!(idx.parse("ghost(a)"), Err(AtomError::UnknownPredicate(_))));
        assert!(matches!(idx.parse("p(x)"), Err(AtomError::BadArgument { .. })));
        assert!(matches!(idx.parse("p(a,a)"), Err(AtomError::Arity { .. })));
        assert!(matches!(idx.parse("p(X)"), Err(AtomError::NotGround(_))));
        assert!(matches!(idx.parse("p(("), Err(AtomError::Syntax(_))));
    }

    #[test]
    fn capacity_limit() {
        let spec = load_spec(
            "system { domains { o = {a, b, c, d}; } knowledge { p(a, a, a). } actions { } rules { } } \
             agent r1 { beliefs { } goals { } }",
        )
        .unwrap();
        let err = AtomIndex::with_limit(&spec, 10).unwrap_err();
        assert_eq!(err.size, 64);
    }
}
