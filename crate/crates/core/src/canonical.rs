//! The canonical bundling operator and its iteration from `Θ`.
//!
//! Inside a set `E`, player `i`'s types are bundled whenever one of them is
//! tempted to mimic the other. Stage sets grow from `{θ}` by absorbing every
//! state that is `∼_i`-related to some member for all players at once; the
//! cell is the union of the stages. For SOD the relation at stage `n` reads
//! each state's own stage-`n` set, so all stages of `E` are advanced together.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Environment, Others, PlayerId, State, StateSet};
use crate::notions::{rho, NotionError, NotionId};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error(transparent)]
    Notion(#[from] NotionError),
    #[error("iteration from {state} did not reach a fixed point within {limit} rounds")]
    RoundLimit { state: String, limit: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// A map `(E, θ) ↦ cell` whose cells for `θ ∈ E` partition `E`.
pub trait Operator {
    fn cell(&self, e: &StateSet, theta: &State) -> StateSet;
}

/// An explicit operator table. Sets without an entry map to themselves.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperatorTable {
    cells: BTreeMap<StateSet, BTreeMap<State, StateSet>>,
}

impl OperatorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a partition of `e`; blocks must be disjoint and cover `e`.
    pub fn insert_partition(&mut self, e: StateSet, blocks: &[StateSet]) -> Result<(), CanonicalError> {
        let mut cells = BTreeMap::new();
        for block in blocks {
            for s in block.iter() {
                if !e.contains(s) || cells.insert(s.clone(), block.clone()).is_some() {
                    return Err(CanonicalError::Precondition("blocks must be disjoint subsets of E".into()));
                }
            }
        }
        if cells.len() != e.len() {
            return Err(CanonicalError::Precondition("blocks must cover E".into()));
        }
        self.cells.insert(e, cells);
        Ok(())
    }

    pub fn sets(&self) -> impl Iterator<Item = &StateSet> {
        self.cells.keys()
    }
}

impl Operator for OperatorTable {
    fn cell(&self, e: &StateSet, theta: &State) -> StateSet {
        self.cells.get(e).and_then(|m| m.get(theta)).cloned().unwrap_or_else(|| e.clone())
    }
}

/// The canonical computation on one set `E`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalPartition {
    /// `stages[n - 1][θ]` is the stage-`n` set of `θ`; the last entry is stable.
    pub stages: Vec<BTreeMap<State, StateSet>>,
}

impl CanonicalPartition {
    pub fn cell(&self, theta: &State) -> Option<&StateSet> {
        self.stages.last().and_then(|m| m.get(theta))
    }

    pub fn stages_of(&self, theta: &State) -> Vec<StateSet> {
        self.stages.iter().filter_map(|m| m.get(theta).cloned()).collect()
    }

    /// The distinct cells.
    pub fn blocks(&self) -> BTreeSet<StateSet> {
        self.stages.last().map(|m| m.values().cloned().collect()).unwrap_or_default()
    }
}

/// Memoized canonical operator for one notion on one environment.
pub struct CanonicalOperator<'a, S> {
    id: NotionId,
    env: &'a Environment<S>,
    memo: RwLock<HashMap<StateSet, Arc<CanonicalPartition>>>,
}

impl<'a, S: Scalar> CanonicalOperator<'a, S> {
    pub fn new(id: NotionId, env: &'a Environment<S>) -> Result<Self, CanonicalError> {
        if id.needs_prior() && env.prior().is_none() {
            return Err(NotionError::MissingPrior.into());
        }
        Ok(CanonicalOperator { id, env, memo: RwLock::new(HashMap::new()) })
    }

    pub fn notion(&self) -> NotionId {
        self.id
    }

    pub fn env(&self) -> &'a Environment<S> {
        self.env
    }

    pub fn partition(&self, e: &StateSet) -> Arc<CanonicalPartition> {
        if let Some(p) = self.memo.read().expect("memo lock").get(e) {
            return Arc::clone(p);
        }
        let computed = Arc::new(compute_partition(self.id, self.env, e));
        let mut memo = self.memo.write().expect("memo lock");
        Arc::clone(memo.entry(e.clone()).or_insert(computed))
    }

    /// Every `(E, partition)` computed so far.
    pub fn touched(&self) -> Vec<(StateSet, Arc<CanonicalPartition>)> {
        let memo = self.memo.read().expect("memo lock");
        let mut all: Vec<_> = memo.iter().map(|(e, p)| (e.clone(), Arc::clone(p))).collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all
    }

    /// Iterates `E_n = γ[E_{n-1}, θ]` from `Θ`.
    pub fn iterate(&self, theta: &State, max_rounds: usize) -> Result<IterationTrace, CanonicalError> {
        iterate_operator(self, self.env, theta, max_rounds)
    }

    /// Runs [`CanonicalOperator::iterate`] for every state.
    pub fn all_traces(&self) -> Result<BTreeMap<State, IterationTrace>, CanonicalError> {
        let limit = default_max_rounds(self.env);
        self.env.states().iter().map(|s| Ok((s.clone(), self.iterate(s, limit)?))).collect()
    }
}

impl<S: Scalar> Operator for CanonicalOperator<'_, S> {
    fn cell(&self, e: &StateSet, theta: &State) -> StateSet {
        if !e.contains(theta) {
            return e.clone();
        }
        self.partition(e).cell(theta).cloned().expect("every member has a cell")
    }
}

/// `(i, own, mimic, SOD projection)`.
type TemptationKey = (PlayerId, usize, usize, Option<BTreeSet<usize>>);

/// Caches `ρ = 0` answers on one set. The key carries the SOD projection.
struct Temptations<'e, S> {
    id: NotionId,
    env: &'e Environment<S>,
    others: Vec<BTreeSet<Others>>,
    cache: HashMap<TemptationKey, bool>,
}

impl<'e, S: Scalar> Temptations<'e, S> {
    fn new(id: NotionId, env: &'e Environment<S>, e: &StateSet) -> Self {
        let others = (0..env.num_players()).map(|i| e.others(i)).collect();
        Temptations { id, env, others, cache: HashMap::new() }
    }

    /// `a >_i b`: `a_i` is tempted to mimic `b_i`.
    fn tempted(&mut self, a: &State, b: &State, i: PlayerId, stage_of_a: &StateSet) -> bool {
        let proj = (self.id == NotionId::Sod).then(|| stage_of_a.projection(i).clone());
        let key = (i, a.component(i), b.component(i), proj);
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        let holds = rho(self.id, self.env, i, key.1, key.2, &self.others[i], key.3.as_ref())
            .expect("prior checked at construction");
        self.cache.insert(key, !holds);
        !holds
    }

    fn similar(&mut self, a: &State, b: &State, i: PlayerId, stage: &BTreeMap<State, StateSet>) -> bool {
        a.component(i) == b.component(i) || self.tempted(a, b, i, &stage[a]) || self.tempted(b, a, i, &stage[b])
    }
}

fn compute_partition<S: Scalar>(id: NotionId, env: &Environment<S>, e: &StateSet) -> CanonicalPartition {
    let mut relation = Temptations::new(id, env, e);
    let n = env.num_players();
    let mut stage: BTreeMap<State, StateSet> = e.iter().map(|s| (s.clone(), StateSet::singleton(s.clone()))).collect();
    let mut stages = vec![stage.clone()];
    loop {
        // Which pairs are ∼-related for every player at this stage.
        let members: Vec<&State> = e.iter().collect();
        let mut linked: BTreeMap<&State, Vec<&State>> = BTreeMap::new();
        for &a in &members {
            let row = members
                .iter()
                .copied()
                .filter(|&b| (0..n).all(|i| relation.similar(a, b, i, &stage)))
                .collect();
            linked.insert(a, row);
        }
        let next: BTreeMap<State, StateSet> = stage
            .iter()
            .map(|(theta, current)| {
                let grown = current.iter().flat_map(|t| linked[t].iter().map(|&s| s.clone()));
                (theta.clone(), StateSet::new(grown).expect("contains θ"))
            })
            .collect();
        if next == stage {
            return CanonicalPartition { stages };
        }
        stages.push(next.clone());
        stage = next;
    }
}

/// `γ[E, θ]` for the canonical operator.
pub fn canonical_cell<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    e: &StateSet,
    theta: &State,
) -> Result<StateSet, CanonicalError> {
    Ok(CanonicalOperator::new(id, env)?.cell(e, theta))
}

fn stage_or_self(stage_cell: Option<&StateSet>, theta: &State) -> StateSet {
    stage_cell.cloned().unwrap_or_else(|| StateSet::singleton(theta.clone()))
}

/// `θ >_i θ′` on `E`. For SOD `stage_cell` is `θ`'s current stage set
/// (defaults to `{θ}`); other notions ignore it.
pub fn tempted<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    e: &StateSet,
    stage_cell: Option<&StateSet>,
    theta: &State,
    theta_prime: &State,
    i: PlayerId,
) -> Result<bool, CanonicalError> {
    if !e.contains(theta) || !e.contains(theta_prime) {
        return Err(CanonicalError::Precondition("both states must lie in E".into()));
    }
    let cell = stage_or_self(stage_cell, theta);
    if !cell.contains(theta) {
        return Err(CanonicalError::Precondition("the stage set must contain θ".into()));
    }
    let proj = (id == NotionId::Sod).then(|| cell.projection(i));
    Ok(!rho(id, env, i, theta.component(i), theta_prime.component(i), &e.others(i), proj)?)
}

/// `θ ∼_i θ′` on `E`, with each side's SOD stage set.
#[allow(clippy::too_many_arguments)]
pub fn similar<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    e: &StateSet,
    stage_theta: Option<&StateSet>,
    stage_theta_prime: Option<&StateSet>,
    theta: &State,
    theta_prime: &State,
    i: PlayerId,
) -> Result<bool, CanonicalError> {
    if theta.component(i) == theta_prime.component(i) {
        return Ok(true);
    }
    Ok(tempted(id, env, e, stage_theta, theta, theta_prime, i)?
        || tempted(id, env, e, stage_theta_prime, theta_prime, theta, i)?)
}

/// `Θ = E_0 ⊇ E_1 ⊇ ...` for one state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationTrace {
    pub state: State,
    /// `E_0 ..= E_n` with `n` the fixed-point round.
    pub sets: Vec<StateSet>,
    /// The least `n ≥ 1` with `E_{n+1} = E_n`.
    pub fixed_point_round: usize,
}

impl IterationTrace {
    pub fn fixed_point(&self) -> &StateSet {
        self.sets.last().expect("trace holds E_0")
    }

    pub fn reaches_singleton(&self) -> bool {
        self.fixed_point().is_singleton()
    }

    /// `E_n`, constant past the fixed point.
    pub fn at(&self, n: usize) -> &StateSet {
        &self.sets[n.min(self.sets.len() - 1)]
    }
}

pub fn default_max_rounds<S>(env: &Environment<S>) -> usize
where
    S: Scalar,
{
    env.state_count() + 1
}

/// Iterates any operator from `Θ`.
pub fn iterate_operator<S: Scalar, O: Operator + ?Sized>(
    op: &O,
    env: &Environment<S>,
    theta: &State,
    max_rounds: usize,
) -> Result<IterationTrace, CanonicalError> {
    if max_rounds == 0 {
        return Err(CanonicalError::Precondition("max_rounds must be at least 1".into()));
    }
    let mut sets = vec![env.full_set()];
    let mut current = op.cell(&sets[0], theta);
    for round in 1..=max_rounds {
        let next = op.cell(&current, theta);
        sets.push(current.clone());
        if next == current {
            return Ok(IterationTrace { state: theta.clone(), sets, fixed_point_round: round });
        }
        current = next;
    }
    Err(CanonicalError::RoundLimit { state: env.state_label(theta), limit: max_rounds })
}

pub fn iterate<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    theta: &State,
    max_rounds: usize,
) -> Result<IterationTrace, CanonicalError> {
    CanonicalOperator::new(id, env)?.iterate(theta, max_rounds)
}

/// A bundling that keeps a state's fixed point from shrinking.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Merge {
    pub player: PlayerId,
    /// Type that is tempted.
    pub tempted_type: usize,
    /// Type it would mimic.
    pub mimicked_type: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refutation {
    pub state: State,
    pub fixed_point: StateSet,
    pub round: usize,
    pub earliest_merge: Option<Merge>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Achievability {
    pub notion: NotionId,
    pub achievable: bool,
    /// Largest fixed-point round when achievable.
    pub rounds: Option<usize>,
    pub traces: BTreeMap<State, IterationTrace>,
    pub refutation: Option<Refutation>,
}

pub fn check_achievable<S: Scalar>(id: NotionId, env: &Environment<S>) -> Result<Achievability, CanonicalError> {
    let op = CanonicalOperator::new(id, env)?;
    achievability_of(&op)
}

pub fn achievability_of<S: Scalar>(op: &CanonicalOperator<'_, S>) -> Result<Achievability, CanonicalError> {
    let traces = op.all_traces()?;
    let failing = traces.values().find(|t| !t.reaches_singleton());
    let refutation = failing.map(|t| {
        let fixed = t.fixed_point().clone();
        Refutation {
            state: t.state.clone(),
            earliest_merge: earliest_merge(op, &fixed, &t.state),
            fixed_point: fixed,
            round: t.fixed_point_round,
        }
    });
    let achievable = refutation.is_none();
    let rounds = achievable.then(|| traces.values().map(|t| t.fixed_point_round).max().unwrap_or(1));
    Ok(Achievability { notion: op.notion(), achievable, rounds, traces, refutation })
}

/// The first temptation that links `θ` to another member of its cell in `E`.
fn earliest_merge<S: Scalar>(op: &CanonicalOperator<'_, S>, e: &StateSet, theta: &State) -> Option<Merge> {
    let part = op.partition(e);
    let first = part.stages.first()?;
    let second = part.stages.get(1)?;
    let joined = second[theta].iter().find(|s| *s != theta)?;
    let mut rel = Temptations::new(op.notion(), op.env(), e);
    for i in 0..op.env().num_players() {
        if theta.component(i) == joined.component(i) {
            continue;
        }
        if rel.tempted(theta, joined, i, &first[theta]) {
            return Some(Merge { player: i, tempted_type: theta.component(i), mimicked_type: joined.component(i) });
        }
        if rel.tempted(joined, theta, i, &first[joined]) {
            return Some(Merge { player: i, tempted_type: joined.component(i), mimicked_type: theta.component(i) });
        }
    }
    None
}

/// True iff every fixed point is `f`-constant.
pub fn check_f_achievable<S: Scalar>(id: NotionId, env: &Environment<S>) -> Result<bool, CanonicalError> {
    let op = CanonicalOperator::new(id, env)?;
    Ok(op.all_traces()?.values().all(|t| env.is_scf_constant_on(t.fixed_point())))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConsistencyVerdict {
    Consistent { checked: usize },
    Violation { set: StateSet, theta: State, theta_prime: State, player: PlayerId },
}

impl ConsistencyVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ConsistencyVerdict::Consistent { .. })
    }
}

/// `ρ(θ, θ′, i, ϑ(E)) = 0 ⇒ θ′_i ∈ γ_i[E, θ]` over the given domain.
pub fn check_consistency<S: Scalar, O: Operator + ?Sized>(
    id: NotionId,
    env: &Environment<S>,
    table: &O,
    vartheta: &dyn Fn(&StateSet) -> StateSet,
    domain: &[(StateSet, State)],
) -> Result<ConsistencyVerdict, CanonicalError> {
    if id.needs_prior() && env.prior().is_none() {
        return Err(NotionError::MissingPrior.into());
    }
    let mut checked = 0;
    for (e, theta) in domain {
        if !e.contains(theta) {
            continue;
        }
        let cell = table.cell(e, theta);
        let belief = vartheta(e);
        for i in 0..env.num_players() {
            let others = belief.others(i);
            let proj = cell.projection(i);
            // Nearest deviations first, so a violation names the smallest change.
            let mut candidates: Vec<&State> = e.iter().collect();
            candidates.sort_by_key(|s| s.0.iter().zip(&theta.0).filter(|(a, b)| a != b).count());
            for theta_prime in candidates {
                checked += 1;
                if proj.contains(&theta_prime.component(i)) {
                    continue;
                }
                let gamma = (id == NotionId::Sod).then_some(proj);
                if !rho(id, env, i, theta.component(i), theta_prime.component(i), &others, gamma)? {
                    return Ok(ConsistencyVerdict::Violation {
                        set: e.clone(),
                        theta: theta.clone(),
                        theta_prime: theta_prime.clone(),
                        player: i,
                    });
                }
            }
        }
    }
    Ok(ConsistencyVerdict::Consistent { checked })
}

/// `(E_n, θ)` for every set along every trace.
pub fn trace_domain(traces: &BTreeMap<State, IterationTrace>) -> Vec<(StateSet, State)> {
    let mut domain = BTreeSet::new();
    for t in traces.values() {
        for e in &t.sets {
            for s in e.iter() {
                domain.insert((e.clone(), s.clone()));
            }
        }
    }
    domain.into_iter().collect()
}

/// Non-rectangular cells met along the traces.
pub fn non_rectangular_cells(traces: &BTreeMap<State, IterationTrace>) -> Vec<StateSet> {
    let found: BTreeSet<StateSet> =
        traces.values().flat_map(|t| t.sets.iter()).filter(|e| !e.is_rectangle()).cloned().collect();
    found.into_iter().collect()
}

/// One `θ | n | E_n` line per trace entry.
pub fn render_traces<S: Scalar>(env: &Environment<S>, traces: &BTreeMap<State, IterationTrace>) -> String {
    let mut out = String::new();
    for t in traces.values() {
        for (n, e) in t.sets.iter().enumerate() {
            out.push_str(&format!("{} | {} | {}\n", env.state_label(&t.state), n, env.set_label(e)));
        }
    }
    out
}
