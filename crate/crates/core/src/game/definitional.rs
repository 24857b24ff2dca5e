//! The game-theoretic conditions checked directly on a tree.
//!
//! Behavior strategies are arbitrary functions of information labels, so the
//! terminals some profile `B` can reach are exactly the root paths on which
//! no player picks two actions under one label. Dominance conditions are
//! checked over those paths; PBE and max-min enumerate the deviator's
//! strategy explicitly, which is why both take a budget.

use std::collections::BTreeSet;

use serde::Serialize;

use super::tree::{terminal_of, Behavior, GameTree, InfoSet, Node, NodeId, StrategyProfile};
use super::GameError;
use crate::model::{conditional_belief, Environment, Others, PlayerId, State};
use crate::notions::{NotionError, NotionId};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DefinitionalLimits {
    /// Bound on `Σ_h |A(h)|`.
    pub max_actions: usize,
    /// Bound on deviator strategies enumerated per information set.
    pub max_strategies: usize,
}

impl Default for DefinitionalLimits {
    fn default() -> Self {
        DefinitionalLimits { max_actions: 20_000, max_strategies: 200_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub player: PlayerId,
    pub own_type: usize,
    pub info_label: String,
    pub honest_terminal: Option<NodeId>,
    pub deviation_terminal: Option<NodeId>,
    pub honest_value: String,
    pub deviation_value: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DefinitionalVerdict {
    Holds { checked: usize },
    Fails(Box<Counterexample>),
}

impl DefinitionalVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, DefinitionalVerdict::Holds { .. })
    }
}

#[derive(Clone, Debug)]
struct Step {
    node: NodeId,
    player: PlayerId,
    label: String,
    action: String,
}

struct Paths {
    terminals: Vec<NodeId>,
    steps: Vec<Vec<Step>>,
    /// Per path and player: the label map, or `None` if the player is inconsistent.
    maps: Vec<Vec<Option<Behavior>>>,
}

impl Paths {
    fn new(tree: &GameTree) -> Self {
        let terminals: Vec<NodeId> = tree.leaves().collect();
        let mut steps = Vec::with_capacity(terminals.len());
        let mut maps = Vec::with_capacity(terminals.len());
        for &z in &terminals {
            let path: Vec<Step> = tree
                .path_to(z)
                .into_iter()
                .map(|(node, k)| {
                    let info = tree.info_set(node).expect("decision node");
                    Step { node, player: info.player, label: info.label, action: tree.action_labels(node)[k].to_string() }
                })
                .collect();
            let mut per_player: Vec<Option<Behavior>> = vec![Some(Behavior::new()); tree.num_players()];
            for s in &path {
                if let Some(m) = &mut per_player[s.player] {
                    match m.get(&s.label) {
                        Some(a) if *a != s.action => per_player[s.player] = None,
                        Some(_) => {}
                        None => {
                            m.insert(s.label.clone(), s.action.clone());
                        }
                    }
                }
            }
            steps.push(path);
            maps.push(per_player);
        }
        Paths { terminals, steps, maps }
    }

    fn len(&self) -> usize {
        self.terminals.len()
    }

    fn at<'p>(&'p self, k: usize, info: &InfoSet) -> Option<&'p Step> {
        self.steps[k].iter().find(|s| s.player == info.player && s.label == info.label)
    }

    fn consistent_except(&self, k: usize, i: PlayerId) -> bool {
        self.maps[k].iter().enumerate().all(|(p, m)| p == i || m.is_some())
    }

    fn consistent(&self, k: usize) -> bool {
        self.maps[k].iter().all(Option::is_some)
    }

    /// Every move of `i` on the path follows `behavior`.
    fn follows(&self, k: usize, i: PlayerId, behavior: &Behavior) -> bool {
        self.steps[k].iter().filter(|s| s.player == i).all(|s| behavior.get(&s.label) == Some(&s.action))
    }

    /// The opponents' label maps of two paths agree wherever both are defined.
    fn opponents_merge(&self, a: usize, b: usize, i: PlayerId) -> bool {
        (0..self.maps[a].len()).filter(|&p| p != i).all(|p| match (&self.maps[a][p], &self.maps[b][p]) {
            (Some(x), Some(y)) => x.iter().all(|(l, act)| y.get(l).is_none_or(|o| o == act)),
            _ => false,
        })
    }
}

struct Checker<'a, S> {
    env: &'a Environment<S>,
    tree: &'a GameTree,
    profile: &'a StrategyProfile,
    paths: Paths,
    limits: DefinitionalLimits,
    checked: usize,
}

impl<'a, S: Scalar> Checker<'a, S> {
    fn value(&self, i: PlayerId, t: usize, k: usize) -> &'a S {
        let z = self.paths.terminals[k];
        self.env.utility(i, t, self.tree.outcome(z).expect("leaf"))
    }

    fn value_at(&self, i: PlayerId, t: usize, z: NodeId) -> &'a S {
        self.env.utility(i, t, self.tree.outcome(z).expect("leaf"))
    }

    fn honest(&self, i: PlayerId, t: usize) -> &'a Behavior {
        self.profile.behavior(i, t)
    }

    /// Paths through `info` where `i` plays `S_i(t)` and the others are consistent.
    fn honest_paths(&self, i: PlayerId, t: usize, info: &InfoSet) -> Vec<usize> {
        let b = self.honest(i, t);
        (0..self.paths.len())
            .filter(|&k| self.paths.at(k, info).is_some() && self.paths.follows(k, i, b) && self.paths.consistent_except(k, i))
            .collect()
    }

    /// Consistent paths through `info` whose move there differs from `S_i(t)`.
    fn deviation_paths(&self, t: usize, info: &InfoSet) -> Vec<usize> {
        let honest = &self.honest(info.player, t)[&info.label];
        (0..self.paths.len())
            .filter(|&k| self.paths.consistent(k) && self.paths.at(k, info).is_some_and(|s| s.action != *honest))
            .collect()
    }

    fn argmin(&self, i: PlayerId, t: usize, ks: &[usize]) -> Option<usize> {
        ks.iter().copied().min_by(|&a, &b| self.value(i, t, a).cmp(self.value(i, t, b)))
    }

    fn argmax(&self, i: PlayerId, t: usize, ks: &[usize]) -> Option<usize> {
        ks.iter().copied().max_by(|&a, &b| self.value(i, t, a).cmp(self.value(i, t, b)))
    }

    fn counterexample(&self, i: PlayerId, t: usize, info: &InfoSet, honest: usize, dev: usize, what: &str) -> Counterexample {
        let (zh, zd) = (self.paths.terminals[honest], self.paths.terminals[dev]);
        let (hv, dv) = (self.value(i, t, honest).render(), self.value(i, t, dev).render());
        Counterexample {
            player: i,
            own_type: t,
            info_label: info.label.clone(),
            honest_terminal: Some(zh),
            deviation_terminal: Some(zd),
            detail: format!(
                "player {} type {} at {:?}: {what} {hv} (terminal {}) is below deviation payoff {dv} (terminal {})",
                self.env.players()[i],
                self.env.type_labels(i)[t],
                info.label,
                self.tree.history_label(zh),
                self.tree.history_label(zd),
            ),
            honest_value: hv,
            deviation_value: dv,
        }
    }

    fn od(&mut self, i: PlayerId, t: usize, info: &InfoSet) -> Option<Counterexample> {
        let h = self.honest_paths(i, t, info);
        let d = self.deviation_paths(t, info);
        self.checked += 1;
        let (lo, hi) = (self.argmin(i, t, &h)?, self.argmax(i, t, &d)?);
        (self.value(i, t, lo) < self.value(i, t, hi)).then(|| self.counterexample(i, t, info, lo, hi, "honest worst case"))
    }

    fn sod(&mut self, i: PlayerId, t: usize, info: &InfoSet) -> Option<Counterexample> {
        let h = self.honest_paths(i, t, info);
        let reached: BTreeSet<NodeId> = h.iter().filter_map(|&k| self.paths.at(k, info)).map(|s| s.node).collect();
        let honest = &self.honest(i, t)[&info.label];
        let same: Vec<usize> = (0..self.paths.len())
            .filter(|&k| {
                self.paths.consistent(k)
                    && self.paths.at(k, info).is_some_and(|s| reached.contains(&s.node) && s.action == *honest)
            })
            .collect();
        let d = self.deviation_paths(t, info);
        self.checked += 1;
        let (lo, hi) = (self.argmin(i, t, &same)?, self.argmax(i, t, &d)?);
        (self.value(i, t, lo) < self.value(i, t, hi))
            .then(|| self.counterexample(i, t, info, lo, hi, "worst case after the honest move"))
    }

    fn wd(&mut self, i: PlayerId, t: usize, info: &InfoSet) -> Option<Counterexample> {
        let h = self.honest_paths(i, t, info);
        let all: Vec<usize> = (0..self.paths.len())
            .filter(|&k| self.paths.consistent(k) && self.paths.at(k, info).is_some())
            .collect();
        for &a in &h {
            for &b in &all {
                self.checked += 1;
                if self.paths.opponents_merge(a, b, i) && self.value(i, t, a) < self.value(i, t, b) {
                    return Some(self.counterexample(i, t, info, a, b, "honest payoff"));
                }
            }
        }
        None
    }

    fn mm(&mut self, i: PlayerId, t: usize, info: &InfoSet) -> Result<Option<Counterexample>, GameError> {
        let h = self.honest_paths(i, t, info);
        let Some(lo) = self.argmin(i, t, &h) else { return Ok(None) };
        let through: Vec<usize> = (0..self.paths.len()).filter(|&k| self.paths.at(k, info).is_some()).collect();
        let labels: BTreeSet<&String> = through
            .iter()
            .flat_map(|&k| self.paths.steps[k].iter().filter(|s| s.player == i).map(|s| &s.label))
            .collect();
        let labels: Vec<(String, Vec<String>)> = labels
            .into_iter()
            .map(|l| {
                let acts = self.tree.actions_at(&InfoSet { player: i, label: l.clone() });
                (l.clone(), acts.into_iter().map(String::from).collect())
            })
            .collect();
        let total = labels.iter().try_fold(1usize, |acc, (_, a)| acc.checked_mul(a.len()));
        if total.is_none_or(|n| n > self.limits.max_strategies) {
            return Err(GameError::BudgetExceeded { what: "max-min deviations", limit: self.limits.max_strategies });
        }
        let honest = &self.honest(i, t)[&info.label];
        let mut digits = vec![0usize; labels.len()];
        loop {
            let b: Behavior = labels.iter().zip(&digits).map(|((l, acts), &d)| (l.clone(), acts[d].clone())).collect();
            if b[&info.label] != *honest {
                self.checked += 1;
                let r: Vec<usize> = through
                    .iter()
                    .copied()
                    .filter(|&k| self.paths.follows(k, i, &b) && self.paths.consistent_except(k, i))
                    .collect();
                if let Some(worst) = self.argmin(i, t, &r) {
                    if self.value(i, t, lo) < self.value(i, t, worst) {
                        return Ok(Some(self.counterexample(i, t, info, lo, worst, "honest worst case")));
                    }
                }
            }
            let mut pos = 0;
            loop {
                if pos == digits.len() {
                    return Ok(None);
                }
                digits[pos] += 1;
                if digits[pos] < labels[pos].1.len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Opponent types `Θ_{-i}^{(S,h)}` that truthfully reach the information set.
    fn reaching_others(&self, info: &InfoSet) -> Result<BTreeSet<Others>, GameError> {
        let members: BTreeSet<NodeId> = self.tree.info_sets()[info].iter().copied().collect();
        let mut out = BTreeSet::new();
        for s in self.env.states() {
            let z = terminal_of(self.tree, &self.profile.profile_at(s))?;
            if self.tree.path_to(z).iter().any(|(n, _)| members.contains(n)) {
                out.insert(s.others(info.player));
            }
        }
        Ok(out)
    }

    fn pbe(&mut self, i: PlayerId, t: usize, info: &InfoSet, others: &BTreeSet<Others>) -> Result<Option<Counterexample>, GameError> {
        let belief = conditional_belief(self.env, i, t).map_err(|e| GameError::Precondition(e.to_string()))?;
        let weights: Vec<(&Others, S)> = others
            .iter()
            .map(|o| (o, belief.weights.get(o).cloned().unwrap_or_else(S::zero)))
            .collect();
        if weights.iter().all(|(_, w)| w.is_zero()) {
            return Ok(None);
        }
        let honest = self.honest(i, t);
        // Moves recalled on the way to the information set stay as `S_i(t)`.
        let first = self.tree.info_sets()[info][0];
        let mut fixed = Behavior::new();
        for (node, _) in self.tree.path_to(first) {
            let at = self.tree.info_set(node).expect("decision node");
            if at.player == i {
                fixed.insert(at.label.clone(), honest[&at.label].clone());
            }
        }
        let mut truthful = S::zero();
        for (o, w) in &weights {
            let z = terminal_of(self.tree, &self.profile.profile_at(&State::splice(o, i, t)))?;
            truthful = truthful + self.value_at(i, t, z).clone() * w.clone();
        }
        for alt in self.tree.actions_at(info) {
            if alt == honest[&info.label] {
                continue;
            }
            let mut b = fixed.clone();
            b.insert(info.label.clone(), alt.to_string());
            let mut count = 0usize;
            if let Some(cx) = self.pbe_search(i, t, info, &weights, &truthful, &mut b, &mut count)? {
                return Ok(Some(cx));
            }
        }
        Ok(None)
    }

    /// Branches on `i`'s labels lazily, only when some play first needs one.
    #[allow(clippy::too_many_arguments)]
    fn pbe_search(
        &mut self,
        i: PlayerId,
        t: usize,
        info: &InfoSet,
        weights: &[(&Others, S)],
        truthful: &S,
        b: &mut Behavior,
        count: &mut usize,
    ) -> Result<Option<Counterexample>, GameError> {
        let mut total = S::zero();
        for (o, w) in weights {
            let state = State::splice(o, i, t);
            let mut cur = 0;
            loop {
                match self.tree.node(cur) {
                    Node::Leaf { .. } => break,
                    Node::Decision { mover, info_label, actions } => {
                        let action = if *mover == i {
                            match b.get(info_label) {
                                Some(a) => a.clone(),
                                None => {
                                    let label = info_label.clone();
                                    let choices: Vec<String> = actions.iter().map(|(a, _)| a.clone()).collect();
                                    for a in choices {
                                        b.insert(label.clone(), a);
                                        let found = self.pbe_search(i, t, info, weights, truthful, b, count)?;
                                        if found.is_some() {
                                            return Ok(found);
                                        }
                                    }
                                    b.remove(&label);
                                    return Ok(None);
                                }
                            }
                        } else {
                            self.profile.behavior(*mover, state.component(*mover))[info_label].clone()
                        };
                        cur = self.tree.child(cur, &action).expect("validated profile");
                    }
                }
            }
            total = total + self.value_at(i, t, cur).clone() * w.clone();
        }
        *count += 1;
        self.checked += 1;
        if *count > self.limits.max_strategies {
            return Err(GameError::BudgetExceeded { what: "PBE deviations", limit: self.limits.max_strategies });
        }
        if total > *truthful {
            let deviation: Vec<String> = b.iter().map(|(l, a)| format!("{l}->{a}")).collect();
            return Ok(Some(Counterexample {
                player: i,
                own_type: t,
                info_label: info.label.clone(),
                honest_terminal: None,
                deviation_terminal: None,
                honest_value: truthful.render(),
                deviation_value: total.render(),
                detail: format!(
                    "player {} type {} at {:?}: deviating to [{}] raises the weighted payoff from {} to {}",
                    self.env.players()[i],
                    self.env.type_labels(i)[t],
                    info.label,
                    deviation.join(", "),
                    truthful.render(),
                    total.render()
                ),
            }));
        }
        Ok(None)
    }
}

/// Checks that `S` satisfies the notion in `G` at every information set.
pub fn check_definitional<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    tree: &GameTree,
    profile: &StrategyProfile,
    limits: DefinitionalLimits,
) -> Result<DefinitionalVerdict, GameError> {
    profile.validate(tree, env)?;
    if id.needs_prior() && env.prior().is_none() {
        return Err(GameError::Notion(NotionError::MissingPrior));
    }
    if tree.total_actions() > limits.max_actions {
        return Err(GameError::BudgetExceeded { what: "total actions", limit: limits.max_actions });
    }
    let mut c = Checker { env, tree, profile, paths: Paths::new(tree), limits, checked: 0 };
    let infos: Vec<InfoSet> = tree.info_sets().keys().cloned().collect();
    for info in &infos {
        let i = info.player;
        let others = if id == NotionId::Pbe { c.reaching_others(info)? } else { BTreeSet::new() };
        let reaching_types: BTreeSet<usize> = if id == NotionId::Pbe {
            let mut ts = BTreeSet::new();
            let members: BTreeSet<NodeId> = tree.info_sets()[info].iter().copied().collect();
            for s in env.states() {
                let z = terminal_of(tree, &profile.profile_at(s))?;
                if tree.path_to(z).iter().any(|(n, _)| members.contains(n)) {
                    ts.insert(s.component(i));
                }
            }
            ts
        } else {
            (0..env.type_count(i)).collect()
        };
        for t in reaching_types {
            let found = match id {
                NotionId::Od => c.od(i, t, info),
                NotionId::Sod => c.sod(i, t, info),
                NotionId::Wd => c.wd(i, t, info),
                NotionId::Mm => c.mm(i, t, info)?,
                NotionId::Pbe => c.pbe(i, t, info, &others)?,
            };
            if let Some(cx) = found {
                return Ok(DefinitionalVerdict::Fails(Box::new(cx)));
            }
        }
    }
    Ok(DefinitionalVerdict::Holds { checked: c.checked })
}

