//! Building mechanisms: the round-based disclosure game driven by the
//! canonical iteration, and the sequentialized direct mechanism.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::canonical::{CanonicalError, CanonicalOperator, IterationTrace};
use crate::deciders::{additive_violation, InequalityViolation};
use crate::game::{Behavior, GameError, TreeShape, GameTree, StrategyProfile};
use crate::model::{Environment, PlayerId, State, StateSet};
use crate::notions::{NotionError, NotionId};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("{notion} is not achievable: the cell {cell} of {state} never shrinks to an f-constant set")]
    NotAchievable { notion: NotionId, state: String, cell: String },
    #[error("cell {0} is not a product of per-player blocks")]
    NonProduct(String),
    #[error("the {notion} inequalities fail: {violation}")]
    InequalitiesFail { notion: NotionId, violation: Box<InequalityViolation> },
    #[error("{0} has no direct mechanism route")]
    NotAdditive(NotionId),
    #[error(transparent)]
    Notion(#[from] NotionError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// One player's announcement in one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Announcement {
    pub player: PlayerId,
    pub types: BTreeSet<usize>,
}

/// For each state, the active players of rounds `1..=N_θ` and what they announce.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DisclosureSchedule {
    pub rounds: BTreeMap<State, Vec<Vec<Announcement>>>,
}

impl DisclosureSchedule {
    /// `N_θ`.
    pub fn rounds_of(&self, theta: &State) -> usize {
        self.rounds.get(theta).map_or(0, Vec::len)
    }

    pub fn max_rounds(&self) -> usize {
        self.rounds.values().map(Vec::len).max().unwrap_or(0)
    }

    /// Active players of round `n` (1-based) at `θ`.
    pub fn active(&self, theta: &State, n: usize) -> Vec<PlayerId> {
        self.rounds
            .get(theta)
            .and_then(|r| r.get(n.checked_sub(1)?))
            .map(|a| a.iter().map(|x| x.player).collect())
            .unwrap_or_default()
    }

    pub fn render<S: Scalar>(&self, env: &Environment<S>) -> String {
        let mut out = String::new();
        for (theta, rounds) in &self.rounds {
            for (n, round) in rounds.iter().enumerate() {
                let moves: Vec<String> = round
                    .iter()
                    .map(|a| format!("{} announces {}", env.players()[a.player], env.type_set_label(a.player, &a.types)))
                    .collect();
                out.push_str(&format!("{} | round {} | {}\n", env.state_label(theta), n + 1, moves.join("; ")));
            }
        }
        out
    }
}

/// Player `i` is active at round `n` for `θ` when the round-`n` cells of the
/// states in `E_{n-1}(θ)` do not all share `θ`'s `i`-projection. Rounds stop
/// at the last one with an active player.
pub fn active_players<S: Scalar>(
    env: &Environment<S>,
    traces: &BTreeMap<State, IterationTrace>,
) -> DisclosureSchedule {
    let mut rounds = BTreeMap::new();
    for (theta, trace) in traces {
        let mut per_round = Vec::new();
        for n in 1..trace.sets.len() {
            let current = trace.at(n);
            let mut active = Vec::new();
            for i in 0..env.num_players() {
                let own = current.projection(i);
                let differs = trace.at(n - 1).iter().any(|other| {
                    traces.get(other).is_some_and(|t| t.at(n).projection(i) != own)
                });
                if differs {
                    active.push(Announcement { player: i, types: own.clone() });
                }
            }
            per_round.push(active);
        }
        while per_round.last().is_some_and(Vec::is_empty) {
            per_round.pop();
        }
        rounds.insert(theta.clone(), per_round);
    }
    DisclosureSchedule { rounds }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthesizedGame {
    pub tree: GameTree,
    pub profile: StrategyProfile,
    pub schedule: DisclosureSchedule,
    /// Notes such as leaves whose reach set is f-constant but not a singleton.
    pub diagnostics: Vec<String>,
}

struct Builder<'a, 'e, S> {
    env: &'e Environment<S>,
    op: &'a CanonicalOperator<'e, S>,
    /// Info label of each decision, with the announced blocks in action order.
    labels: Vec<(PlayerId, String, Vec<BTreeSet<usize>>)>,
    diagnostics: Vec<String>,
}

impl<S: Scalar> Builder<'_, '_, S> {
    fn build(&mut self, e: &StateSet, round: usize, prefix: &str) -> Result<TreeShape, SynthesisError> {
        let blocks = self.op.partition(e).blocks();
        if blocks.len() == 1 {
            let first = e.iter().next().expect("nonempty cell");
            if !self.env.is_scf_constant_on(e) {
                return Err(SynthesisError::NotAchievable {
                    notion: self.op.notion(),
                    state: self.env.state_label(first),
                    cell: self.env.set_label(e),
                });
            }
            if e.len() > 1 {
                self.diagnostics.push(format!("leaf {} holds the f-constant set {}", prefix, self.env.set_label(e)));
            }
            return Ok(TreeShape::Leaf(self.env.scf(first)));
        }
        let n = self.env.num_players();
        let per_player: Vec<Vec<BTreeSet<usize>>> = (0..n)
            .map(|i| {
                let found: BTreeSet<BTreeSet<usize>> = blocks.iter().map(|b| b.projection(i).clone()).collect();
                found.into_iter().collect()
            })
            .collect();
        let is_product = blocks.iter().all(StateSet::is_rectangle)
            && per_player.iter().enumerate().all(|(i, bs)| bs.iter().map(BTreeSet::len).sum::<usize>() == e.projection(i).len())
            && per_player.iter().map(Vec::len).product::<usize>() == blocks.len();
        if !is_product {
            return Err(SynthesisError::NonProduct(self.env.set_label(e)));
        }
        let active: Vec<PlayerId> = (0..n).filter(|&i| per_player[i].len() >= 2).collect();
        let mut chosen: Vec<BTreeSet<usize>> = (0..n).map(|i| e.projection(i).clone()).collect();
        self.announce(&active, 0, &per_player, &mut chosen, round, prefix, prefix)
    }

    #[allow(clippy::too_many_arguments)]
    fn announce(
        &mut self,
        active: &[PlayerId],
        k: usize,
        per_player: &[Vec<BTreeSet<usize>>],
        chosen: &mut Vec<BTreeSet<usize>>,
        round: usize,
        round_start: &str,
        path: &str,
    ) -> Result<TreeShape, SynthesisError> {
        if k == active.len() {
            let cell = StateSet::product(chosen).map_err(|e| GameError::Precondition(e.to_string()))?;
            return self.build(&cell, round + 1, path);
        }
        let i = active[k];
        let label = format!("{round}|{round_start}|{}", self.env.players()[i]);
        if !self.labels.iter().any(|(p, l, _)| *p == i && *l == label) {
            self.labels.push((i, label.clone(), per_player[i].clone()));
        }
        let mut children = Vec::with_capacity(per_player[i].len());
        for block in &per_player[i] {
            let action = self.env.type_set_label(i, block);
            let saved = std::mem::replace(&mut chosen[i], block.clone());
            let next = if path.is_empty() { action.clone() } else { format!("{path}/{action}") };
            let child = self.announce(active, k + 1, per_player, chosen, round, round_start, &next)?;
            chosen[i] = saved;
            children.push((action, child));
        }
        Ok(TreeShape::Decision { mover: i, label, children })
    }
}

/// Players announce their canonical block each round, in input order within
/// a round, each unable to see the others' moves of that round. Leaves carry
/// `f`. Types off the path pick the first action.
pub fn synthesize_disclosure_game<S: Scalar>(
    env: &Environment<S>,
    id: NotionId,
) -> Result<SynthesizedGame, SynthesisError> {
    let op = CanonicalOperator::new(id, env)?;
    synthesize_with(&op)
}

pub fn synthesize_with<S: Scalar>(op: &CanonicalOperator<'_, S>) -> Result<SynthesizedGame, SynthesisError> {
    let env = op.env();
    let traces = op.all_traces()?;
    let mut b = Builder { env, op, labels: Vec::new(), diagnostics: Vec::new() };
    let shape = b.build(&env.full_set(), 1, "")?;
    let tree = GameTree::from_shape(&shape, env.num_players(), env.outcomes().len())?;
    let mut choices: Vec<Vec<Behavior>> = (0..env.num_players()).map(|i| vec![Behavior::new(); env.type_count(i)]).collect();
    for (i, label, blocks) in &b.labels {
        for (t, behavior) in choices[*i].iter_mut().enumerate() {
            let block = blocks.iter().find(|bl| bl.contains(&t)).unwrap_or(&blocks[0]);
            behavior.insert(label.clone(), env.type_set_label(*i, block));
        }
    }
    let profile = StrategyProfile::new(choices);
    profile.validate(&tree, env)?;
    Ok(SynthesizedGame { tree, profile, schedule: active_players(env, &traces), diagnostics: b.diagnostics })
}

/// Every player with at least two types announces one, in input order, none
/// seeing the others; leaves carry `f`.
pub fn direct_mechanism<S: Scalar>(env: &Environment<S>) -> Result<(GameTree, StrategyProfile), SynthesisError> {
    let movers: Vec<PlayerId> = (0..env.num_players()).filter(|&i| env.type_count(i) >= 2).collect();
    fn build<S: Scalar>(env: &Environment<S>, movers: &[PlayerId], k: usize, state: &mut Vec<usize>) -> TreeShape {
        if k == movers.len() {
            return TreeShape::Leaf(env.scf(&State(state.clone())));
        }
        let i = movers[k];
        let children = (0..env.type_count(i))
            .map(|t| {
                state[i] = t;
                (env.type_labels(i)[t].clone(), build(env, movers, k + 1, state))
            })
            .collect();
        state[i] = 0;
        TreeShape::Decision { mover: i, label: direct_label(env, i), children }
    }
    let shape = build(env, &movers, 0, &mut vec![0; env.num_players()]);
    let tree = GameTree::from_shape(&shape, env.num_players(), env.outcomes().len())?;
    let choices = (0..env.num_players())
        .map(|i| {
            (0..env.type_count(i))
                .map(|t| {
                    let mut b = Behavior::new();
                    if movers.contains(&i) {
                        b.insert(direct_label(env, i), env.type_labels(i)[t].clone());
                    }
                    b
                })
                .collect()
        })
        .collect();
    Ok((tree, StrategyProfile::new(choices)))
}

fn direct_label<S: Scalar>(env: &Environment<S>, i: PlayerId) -> String {
    format!("direct|{}", env.players()[i])
}

/// The direct mechanism, provided the notion's inequality system holds.
pub fn synthesize_direct_mechanism<S: Scalar>(
    env: &Environment<S>,
    id: NotionId,
) -> Result<(GameTree, StrategyProfile), SynthesisError> {
    if matches!(id, NotionId::Od | NotionId::Sod) {
        return Err(SynthesisError::NotAdditive(id));
    }
    if let Some(violation) = additive_violation(env, id)? {
        return Err(SynthesisError::InequalitiesFail { notion: id, violation: Box::new(violation) });
    }
    direct_mechanism(env)
}
