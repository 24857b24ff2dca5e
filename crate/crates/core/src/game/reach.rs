use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::tree::{play, GameTree, InfoSet, NodeId, StrategyProfile};
use super::GameError;
use crate::canonical::Operator;
use crate::model::{Environment, PlayerId, State, StateSet};
use crate::scalar::Scalar;

/// `E^h` for every history: the states whose truthful play passes through it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachMap {
    sets: Vec<Option<StateSet>>,
}

impl ReachMap {
    pub fn get(&self, node: NodeId) -> Option<&StateSet> {
        self.sets[node].as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &StateSet)> {
        self.sets.iter().enumerate().filter_map(|(id, s)| s.as_ref().map(|s| (id, s)))
    }
}

pub fn reach_map<S: Scalar>(
    env: &Environment<S>,
    tree: &GameTree,
    profile: &StrategyProfile,
) -> Result<ReachMap, GameError> {
    let mut members: Vec<Vec<State>> = vec![Vec::new(); tree.len()];
    for s in env.states() {
        let z = play(tree, profile, s)?;
        members[z].push(s.clone());
        for (node, _) in tree.path_to(z) {
            members[node].push(s.clone());
        }
    }
    let sets = members
        .into_iter()
        .map(|m| if m.is_empty() { None } else { Some(StateSet::new(m).expect("states share one arity")) })
        .collect();
    Ok(ReachMap { sets })
}

/// The three structural conditions on a (game, strategy) pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GspcReport {
    pub perfect_recall: bool,
    pub all_terminals_reached: bool,
    pub distinct_reach_sets: bool,
    pub problems: Vec<String>,
}

impl GspcReport {
    pub fn passes(&self) -> bool {
        self.perfect_recall && self.all_terminals_reached && self.distinct_reach_sets
    }
}

/// For `h, h′, h″` of one player with `h′ ∼ h″` and `[h, a]` on the path to
/// `h′`, some `h̃ ∼ h` has `[h̃, a]` on the path to `h″`.
pub fn has_perfect_recall(tree: &GameTree) -> Result<(), String> {
    for members in tree.info_sets().values() {
        let player = tree.info_set(members[0]).expect("decision node").player;
        let paths: Vec<BTreeSet<(InfoSet, String)>> = members
            .iter()
            .map(|&m| {
                tree.path_to(m)
                    .into_iter()
                    .filter_map(|(p, k)| {
                        let info = tree.info_set(p)?;
                        (info.player == player).then(|| (info, tree.action_labels(p)[k].to_string()))
                    })
                    .collect()
            })
            .collect();
        for (a, pa) in members.iter().zip(&paths) {
            for (b, pb) in members.iter().zip(&paths) {
                if let Some(missing) = pa.difference(pb).next() {
                    return Err(format!(
                        "histories {} and {} share information set {:?} but player {} remembers \
                         playing {:?} at {:?} only on the first",
                        tree.history_label(*a),
                        tree.history_label(*b),
                        tree.info_set(*a).expect("decision node").label,
                        player,
                        missing.1,
                        missing.0.label
                    ));
                }
            }
        }
    }
    Ok(())
}

pub fn check_gspc<S: Scalar>(
    env: &Environment<S>,
    tree: &GameTree,
    profile: &StrategyProfile,
) -> Result<GspcReport, GameError> {
    let reach = reach_map(env, tree, profile)?;
    let mut problems = Vec::new();
    let perfect_recall = match has_perfect_recall(tree) {
        Ok(()) => true,
        Err(p) => {
            problems.push(p);
            false
        }
    };
    let unreached: Vec<NodeId> = tree.leaves().filter(|&z| reach.get(z).is_none()).collect();
    if let Some(&z) = unreached.first() {
        problems.push(format!("terminal {} is not reached by any truthful play", tree.history_label(z)));
    }
    let mut seen: HashMap<&StateSet, NodeId> = HashMap::new();
    let mut distinct_reach_sets = true;
    for (id, set) in reach.iter() {
        if let Some(&other) = seen.get(set) {
            if distinct_reach_sets {
                problems.push(format!(
                    "histories {} and {} have the same reach set {}",
                    tree.history_label(other),
                    tree.history_label(id),
                    env.set_label(set)
                ));
            }
            distinct_reach_sets = false;
        } else {
            seen.insert(set, id);
        }
    }
    Ok(GspcReport { perfect_recall, all_terminals_reached: unreached.is_empty(), distinct_reach_sets, problems })
}

/// The operator `γ^[G,S]` together with `ϑ^[G]`. Sets that are not the reach
/// set of a non-terminal history, and states outside them, map to `E`.
#[derive(Clone, Debug)]
pub struct InducedOperator {
    tree: GameTree,
    profile: StrategyProfile,
    reach: ReachMap,
    by_set: HashMap<StateSet, NodeId>,
}

impl InducedOperator {
    /// Requires distinct reach sets so that each `E ∈ Ω` names one history.
    pub fn new<S: Scalar>(env: &Environment<S>, tree: &GameTree, profile: &StrategyProfile) -> Result<Self, GameError> {
        let reach = reach_map(env, tree, profile)?;
        let mut by_set = HashMap::new();
        for (id, set) in reach.iter() {
            if by_set.insert(set.clone(), id).is_some() {
                return Err(GameError::Precondition("two histories share a reach set".into()));
            }
        }
        by_set.retain(|_, id| !tree.is_leaf(*id));
        Ok(InducedOperator { tree: tree.clone(), profile: profile.clone(), reach, by_set })
    }

    pub fn reach(&self) -> &ReachMap {
        &self.reach
    }

    pub fn tree(&self) -> &GameTree {
        &self.tree
    }

    /// `Ω`: reach sets of non-terminal histories.
    pub fn omega(&self) -> BTreeSet<StateSet> {
        self.by_set.keys().cloned().collect()
    }

    pub fn node_of(&self, e: &StateSet) -> Option<NodeId> {
        self.by_set.get(e).copied()
    }

    /// `ϑ(E)`: union of reach sets across the information set of `h^E`.
    pub fn vartheta(&self, e: &StateSet) -> StateSet {
        let Some(h) = self.node_of(e) else { return e.clone() };
        let info = self.tree.info_set(h).expect("decision node");
        self.tree.info_sets()[&info]
            .iter()
            .filter_map(|&m| self.reach.get(m))
            .fold(e.clone(), |acc, s| acc.union(s))
    }

    /// Every `(E, θ)` with `E ∈ Ω` and `θ ∈ E`.
    pub fn domain(&self) -> Vec<(StateSet, State)> {
        let mut out: Vec<(StateSet, State)> =
            self.by_set.keys().flat_map(|e| e.iter().map(move |s| (e.clone(), s.clone()))).collect();
        out.sort();
        out
    }

    /// The player moving at the history with reach set `e`.
    pub fn mover(&self, e: &StateSet) -> Option<PlayerId> {
        self.node_of(e).and_then(|h| self.tree.info_set(h)).map(|i| i.player)
    }
}

impl Operator for InducedOperator {
    fn cell(&self, e: &StateSet, theta: &State) -> StateSet {
        let Some(h) = self.node_of(e) else { return e.clone() };
        if !e.contains(theta) {
            return e.clone();
        }
        let info = self.tree.info_set(h).expect("decision node");
        let action = &self.profile.behavior(info.player, theta.component(info.player))[&info.label];
        let child = self.tree.child(h, action).expect("validated profile");
        self.reach.get(child).cloned().expect("θ reaches the child it plays into")
    }
}

/// Reach sets keyed by history label, for display.
pub fn reach_table<S: Scalar>(env: &Environment<S>, tree: &GameTree, reach: &ReachMap) -> BTreeMap<NodeId, String> {
    (0..tree.len())
        .map(|id| (id, reach.get(id).map(|s| env.set_label(s)).unwrap_or_else(|| "unreached".into())))
        .collect()
}
