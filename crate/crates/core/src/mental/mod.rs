//! Agent mental states: substate properties, condition evaluation, goal
//! dropping and belief updates.

mod compile;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::lang::{EffectOp, Modality, ValidatedSpec};
use crate::logic::{
    holds, minimal_model, solve, AtomError, AtomId, AtomIndex, CapacityError, ConstId,
    Interpretation, RuleSet, Substitution,
};

pub use compile::{
    ActionInstance, CompileError, CompiledAction, CompiledCondition, CompiledDecisionRule,
    CompiledEffect, CompiledOutcome, CompiledRecvRule, CompiledSendRule, CondLiteral,
    GroundConstraint, InstanceDisplay, Program,
};

/// An action in progress; `remaining` counts the steps still to run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Busy {
    pub instance: ActionInstance,
    pub remaining: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MentalState {
    /// Facts only; the knowledge base is applied by [`Engine::property`].
    pub beliefs: Interpretation,
    /// Each goal is a nonempty conjunction of ground atoms.
    pub goals: Vec<Interpretation>,
    /// Pending messages as (sender, atom).
    pub mailbox: Vec<(usize, AtomId)>,
    pub busy: Option<Busy>,
}

impl MentalState {
    pub fn new(beliefs: Interpretation, goals: Vec<Interpretation>) -> Self {
        MentalState {
            beliefs,
            goals,
            mailbox: Vec::new(),
            busy: None,
        }
    }

    /// Appends the single-atom goal `{atom}`.
    pub fn adopt_goal(&mut self, atom: AtomId) {
        let mut g = Interpretation::empty(self.beliefs.base_size());
        g.insert(atom);
        self.goals.push(g);
    }

    /// Removes every goal conjunction mentioning `atom`.
    pub fn drop_goals_with(&mut self, atom: AtomId) {
        self.goals.retain(|g| !g.contains(atom));
    }
}

/// Closed models an agent's conditions are evaluated against.
#[derive(Clone, Debug)]
pub struct AgentView {
    pub property: Arc<Interpretation>,
    pub goals: Vec<Arc<Interpretation>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub constraint: usize,
    pub binding: Substitution,
    pub agent: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub safe: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("agent `{agent}`: {source}")]
    Agent { agent: String, source: AtomError },
}

const CACHE_LIMIT: usize = 1 << 16;

/// A validated spec bound to its atom index, compiled program and a
/// memo of knowledge-base closures.
#[derive(Debug)]
pub struct Engine {
    spec: ValidatedSpec,
    index: AtomIndex,
    rules: RuleSet,
    program: Program,
    initial: Vec<MentalState>,
    cache: Mutex<HashMap<Interpretation, Arc<Interpretation>>>,
}

impl Engine {
    pub fn new(spec: ValidatedSpec) -> Result<Self, EngineError> {
        let index = AtomIndex::build(&spec)?;
        Self::with_index(spec, index)
    }

    pub fn with_index(spec: ValidatedSpec, index: AtomIndex) -> Result<Self, EngineError> {
        let rules = RuleSet::compile(&spec, &index).map_err(CompileError::from)?;
        let program = Program::compile(&spec, &index)?;
        let mut engine = Engine {
            spec,
            index,
            rules,
            program,
            initial: Vec::new(),
            cache: Mutex::new(HashMap::new()),
        };
        let mut initial = Vec::with_capacity(engine.spec.ast.agents.len());
        for agent in &engine.spec.ast.agents {
            let err = |source| EngineError::Agent {
                agent: agent.name.clone(),
                source,
            };
            let ground = |a: &crate::lang::Atom| engine.index.parse(&a.to_string()).map_err(err);
            let beliefs = agent
                .beliefs
                .iter()
                .map(ground)
                .collect::<Result<Vec<_>, _>>()?;
            let beliefs = Interpretation::from_ids(engine.index.len(), beliefs);
            let mut goals = Vec::with_capacity(agent.goals.len());
            for g in &agent.goals {
                let ids = g.iter().map(ground).collect::<Result<Vec<_>, _>>()?;
                goals.push(Interpretation::from_ids(engine.index.len(), ids));
            }
            initial.push(engine.update_goals(MentalState::new(beliefs, goals)));
        }
        engine.initial = initial;
        Ok(engine)
    }

    pub fn spec(&self) -> &ValidatedSpec {
        &self.spec
    }

    pub fn index(&self) -> &AtomIndex {
        &self.index
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn agent_count(&self) -> usize {
        self.initial.len()
    }

    pub fn agent_name(&self, agent: usize) -> &str {
        &self.spec.ast.agents[agent].name
    }

    pub fn agent_names(&self) -> Vec<String> {
        self.spec.agent_names().map(str::to_string).collect()
    }

    /// Declared mental states with achieved goals already dropped.
    pub fn initial_states(&self) -> &[MentalState] {
        &self.initial
    }

    /// Minimal model of `facts` together with the knowledge base.
    pub fn closure(&self, facts: &Interpretation) -> Arc<Interpretation> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(facts) {
            return hit.clone();
        }
        let model = Arc::new(minimal_model(&self.index, facts, &self.rules));
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.entry(facts.clone()).or_insert(model).clone()
    }

    /// The substate property of `ms`.
    pub fn property(&self, ms: &MentalState) -> Arc<Interpretation> {
        self.closure(&ms.beliefs)
    }

    pub fn view(&self, ms: &MentalState) -> AgentView {
        AgentView {
            property: self.property(ms),
            goals: ms.goals.iter().map(|g| self.closure(g)).collect(),
        }
    }

    /// Drops every goal the substate property already entails.
    pub fn update_goals(&self, mut ms: MentalState) -> MentalState {
        let property = self.property(&ms);
        ms.goals.retain(|g| !property.is_superset(g));
        ms
    }

    /// Applies deletes, then inserts, then drops achieved goals.
    pub fn apply_effects(&self, mut ms: MentalState, effects: &[(EffectOp, AtomId)]) -> MentalState {
        for &(op, atom) in effects {
            if op == EffectOp::Delete {
                ms.beliefs.remove(atom);
            }
        }
        for &(op, atom) in effects {
            if op == EffectOp::Insert {
                ms.beliefs.insert(atom);
            }
        }
        self.update_goals(ms)
    }

    /// Ground effects of outcome `k` of a bound action.
    pub fn outcome_effects(&self, inst: &ActionInstance, k: usize) -> Vec<(EffectOp, AtomId)> {
        let slots: Vec<Option<ConstId>> = inst.binding.iter().copied().map(Some).collect();
        self.program.actions[inst.action].outcomes[k]
            .effects
            .iter()
            .map(|e| {
                let id = e
                    .atom
                    .ground(&self.index, &slots)
                    .flatten()
                    .expect("effect atoms are bound and typed");
                (e.op, id)
            })
            .collect()
    }

    /// Every substitution satisfying `cond` in `ms`, in lexicographic order.
    pub fn eval_msc(&self, ms: &MentalState, cond: &CompiledCondition) -> Vec<Substitution> {
        let view = self.view(ms);
        self.solutions(&view, cond, vec![None; cond.vars.len()])
            .iter()
            .map(|row| cond.substitution(row))
            .collect()
    }

    /// Complete slot assignments extending `init` that satisfy `cond`,
    /// sorted and deduplicated.
    pub fn solutions(
        &self,
        view: &AgentView,
        cond: &CompiledCondition,
        mut init: Vec<Option<ConstId>>,
    ) -> Vec<Vec<ConstId>> {
        let pos: Vec<&CondLiteral> = cond.literals.iter().filter(|l| !l.negated).collect();
        let neg: Vec<&CondLiteral> = cond.literals.iter().filter(|l| l.negated).collect();
        let mut out = Vec::new();
        self.search(view, &pos, &neg, &mut init, &mut out);
        out.sort();
        out.dedup();
        out
    }

    fn search(
        &self,
        view: &AgentView,
        pos: &[&CondLiteral],
        neg: &[&CondLiteral],
        slots: &mut Vec<Option<ConstId>>,
        out: &mut Vec<Vec<ConstId>>,
    ) {
        let Some((lit, rest)) = pos.split_first() else {
            if neg.iter().all(|l| !self.literal_holds(view, l, slots)) {
                out.push(slots.iter().map(|s| s.expect("condition binds every variable")).collect());
            }
            return;
        };
        let sources: Vec<&Interpretation> = match lit.modality {
            Modality::Bel => vec![&view.property],
            Modality::Goal => view.goals.iter().map(|g| &**g).collect(),
        };
        for src in sources {
            let positives: Vec<_> = lit.atoms.iter().map(|a| (a, src)).collect();
            solve(&self.index, &positives, &[], slots, &mut |s| {
                let mut next = s.to_vec();
                self.search(view, rest, neg, &mut next, out);
            });
        }
    }

    /// Whether a literal's atoms (ignoring its sign) hold under fully
    /// bound `slots`.
    fn literal_holds(&self, view: &AgentView, lit: &CondLiteral, slots: &[Option<ConstId>]) -> bool {
        let mut ids = Vec::with_capacity(lit.atoms.len());
        for a in &lit.atoms {
            match a.ground(&self.index, slots).expect("negated literal is bound") {
                Some(id) => ids.push(id),
                None => return false,
            }
        }
        let all_in = |m: &Interpretation| ids.iter().all(|&id| m.contains(id));
        match lit.modality {
            Modality::Bel => all_in(&view.property),
            Modality::Goal => view.goals.iter().any(|g| all_in(g)),
        }
    }

    /// Checks every grounded safety constraint against every agent's
    /// property.
    pub fn safety_check(&self, properties: &[Arc<Interpretation>]) -> Verdict {
        let mut violations = Vec::new();
        for g in &self.program.safety {
            for (agent, p) in properties.iter().enumerate() {
                if !holds(p, &g.literals) {
                    violations.push(Violation {
                        constraint: g.constraint,
                        binding: g.binding.clone(),
                        agent,
                    });
                }
            }
        }
        Verdict {
            safe: violations.is_empty(),
            violations,
        }
    }

    /// Safety verdict without collecting violations.
    pub fn is_safe(&self, properties: &[Arc<Interpretation>]) -> bool {
        self.program
            .safety
            .iter()
            .all(|g| properties.iter().all(|p| holds(p, &g.literals)))
    }
}
