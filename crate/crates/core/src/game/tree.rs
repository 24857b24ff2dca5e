use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::GameError;
use crate::model::{Environment, PlayerId, State};
use crate::scalar::Scalar;

pub type NodeId = usize;

/// An information set: the mover and the label `ζ_i` shared by its histories.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct InfoSet {
    pub player: PlayerId,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Decision { mover: PlayerId, info_label: String, actions: Vec<(String, NodeId)> },
    Leaf { outcome: usize },
}

/// A recursive description from which [`GameTree`] assigns depth-first ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeShape {
    Leaf(usize),
    Decision { mover: PlayerId, label: String, children: Vec<(String, TreeShape)> },
}

/// A finite extensive-form mechanism. Node 0 is the empty history; ids are
/// depth-first preorder with children in action order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameTree {
    nodes: Vec<Node>,
    parent: Vec<Option<(NodeId, usize)>>,
    depth: Vec<usize>,
    info_sets: BTreeMap<InfoSet, Vec<NodeId>>,
    num_players: usize,
    num_outcomes: usize,
}

impl GameTree {
    pub fn from_shape(shape: &TreeShape, num_players: usize, num_outcomes: usize) -> Result<Self, GameError> {
        let mut nodes = Vec::new();
        let mut parent = Vec::new();
        let mut depth = Vec::new();
        fn walk(
            shape: &TreeShape,
            from: Option<(NodeId, usize)>,
            d: usize,
            nodes: &mut Vec<Node>,
            parent: &mut Vec<Option<(NodeId, usize)>>,
            depth: &mut Vec<usize>,
        ) -> NodeId {
            let id = nodes.len();
            parent.push(from);
            depth.push(d);
            match shape {
                TreeShape::Leaf(x) => nodes.push(Node::Leaf { outcome: *x }),
                TreeShape::Decision { mover, label, children } => {
                    nodes.push(Node::Decision { mover: *mover, info_label: label.clone(), actions: Vec::new() });
                    let mut actions = Vec::with_capacity(children.len());
                    for (k, (action, child)) in children.iter().enumerate() {
                        let c = walk(child, Some((id, k)), d + 1, nodes, parent, depth);
                        actions.push((action.clone(), c));
                    }
                    if let Node::Decision { actions: slot, .. } = &mut nodes[id] {
                        *slot = actions;
                    }
                }
            }
            id
        }
        walk(shape, None, 0, &mut nodes, &mut parent, &mut depth);
        let mut tree = GameTree { nodes, parent, depth, info_sets: BTreeMap::new(), num_players, num_outcomes };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&mut self) -> Result<(), GameError> {
        let mut info_sets: BTreeMap<InfoSet, Vec<NodeId>> = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { outcome } => {
                    if *outcome >= self.num_outcomes {
                        return Err(GameError::Malformed(format!("leaf {id} has unknown outcome {outcome}")));
                    }
                }
                Node::Decision { mover, info_label, actions } => {
                    if *mover >= self.num_players {
                        return Err(GameError::Malformed(format!("node {id} has unknown mover {mover}")));
                    }
                    if actions.is_empty() {
                        return Err(GameError::Malformed(format!("node {id} has no actions")));
                    }
                    let distinct: BTreeSet<&String> = actions.iter().map(|(a, _)| a).collect();
                    if distinct.len() != actions.len() {
                        return Err(GameError::Malformed(format!("node {id} repeats an action label")));
                    }
                    info_sets.entry(InfoSet { player: *mover, label: info_label.clone() }).or_default().push(id);
                }
            }
        }
        for (info, members) in &info_sets {
            let first = self.action_labels(members[0]);
            for &m in &members[1..] {
                if self.action_labels(m) != first {
                    return Err(GameError::Malformed(format!(
                        "information set {:?} of player {} has histories with different actions",
                        info.label, info.player
                    )));
                }
            }
        }
        self.info_sets = info_sets;
        Ok(())
    }

    pub fn to_shape(&self) -> TreeShape {
        self.shape_at(0)
    }

    fn shape_at(&self, id: NodeId) -> TreeShape {
        match &self.nodes[id] {
            Node::Leaf { outcome } => TreeShape::Leaf(*outcome),
            Node::Decision { mover, info_label, actions } => TreeShape::Decision {
                mover: *mover,
                label: info_label.clone(),
                children: actions.iter().map(|(a, c)| (a.clone(), self.shape_at(*c))).collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id], Node::Leaf { .. })
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&id| self.is_leaf(id))
    }

    pub fn decision_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&id| !self.is_leaf(id))
    }

    pub fn outcome(&self, id: NodeId) -> Option<usize> {
        match self.nodes[id] {
            Node::Leaf { outcome } => Some(outcome),
            Node::Decision { .. } => None,
        }
    }

    pub fn info_set(&self, id: NodeId) -> Option<InfoSet> {
        match &self.nodes[id] {
            Node::Decision { mover, info_label, .. } => Some(InfoSet { player: *mover, label: info_label.clone() }),
            Node::Leaf { .. } => None,
        }
    }

    pub fn info_sets(&self) -> &BTreeMap<InfoSet, Vec<NodeId>> {
        &self.info_sets
    }

    pub fn info_sets_of(&self, i: PlayerId) -> impl Iterator<Item = (&InfoSet, &Vec<NodeId>)> {
        self.info_sets.iter().filter(move |(k, _)| k.player == i)
    }

    pub fn action_labels(&self, id: NodeId) -> Vec<&str> {
        match &self.nodes[id] {
            Node::Decision { actions, .. } => actions.iter().map(|(a, _)| a.as_str()).collect(),
            Node::Leaf { .. } => Vec::new(),
        }
    }

    /// Actions available at an information set.
    pub fn actions_at(&self, info: &InfoSet) -> Vec<&str> {
        self.info_sets.get(info).map(|m| self.action_labels(m[0])).unwrap_or_default()
    }

    pub fn child(&self, id: NodeId, action: &str) -> Option<NodeId> {
        match &self.nodes[id] {
            Node::Decision { actions, .. } => actions.iter().find(|(a, _)| a == action).map(|(_, c)| *c),
            Node::Leaf { .. } => None,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<(NodeId, usize)> {
        self.parent[id]
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.depth[id]
    }

    /// The bound `K` on history length.
    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// `(node, action index)` pairs from the root down to `id`, excluding `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<(NodeId, usize)> {
        let mut steps = Vec::new();
        let mut cur = id;
        while let Some((p, k)) = self.parent[cur] {
            steps.push((p, k));
            cur = p;
        }
        steps.reverse();
        steps
    }

    /// The action sequence naming a history, e.g. `"{3}/{1}"`; the root is `"()"`.
    pub fn history_label(&self, id: NodeId) -> String {
        let steps = self.path_to(id);
        if steps.is_empty() {
            return "()".into();
        }
        steps
            .iter()
            .map(|&(p, k)| match &self.nodes[p] {
                Node::Decision { actions, .. } => actions[k].0.clone(),
                Node::Leaf { .. } => unreachable!("leaves have no children"),
            })
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn total_actions(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Decision { actions, .. } => actions.len(),
                Node::Leaf { .. } => 0,
            })
            .sum()
    }

    pub fn is_perfect_information(&self) -> bool {
        self.info_sets.values().all(|m| m.len() == 1)
    }

    /// The same tree with every history in its own information set.
    pub fn perfect_information(&self) -> GameTree {
        let mut tree = self.clone();
        for (id, node) in tree.nodes.iter_mut().enumerate() {
            if let Node::Decision { info_label, .. } = node {
                *info_label = format!("{info_label}#{id}");
            }
        }
        tree.validate().expect("refining information sets keeps the tree valid");
        tree
    }
}

/// Per player and type, the behavior strategy: information label to action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyProfile {
    choices: Vec<Vec<BTreeMap<String, String>>>,
}

pub type Behavior = BTreeMap<String, String>;

impl StrategyProfile {
    pub fn new(choices: Vec<Vec<Behavior>>) -> Self {
        StrategyProfile { choices }
    }

    pub fn behavior(&self, i: PlayerId, own_type: usize) -> &Behavior {
        &self.choices[i][own_type]
    }

    /// `S(θ)`.
    pub fn profile_at(&self, state: &State) -> Vec<&Behavior> {
        state.0.iter().enumerate().map(|(i, &t)| self.behavior(i, t)).collect()
    }

    pub fn choices(&self) -> &[Vec<Behavior>] {
        &self.choices
    }

    /// Checks totality and legality against the tree and the type sets.
    pub fn validate<S: Scalar>(&self, tree: &GameTree, env: &Environment<S>) -> Result<(), GameError> {
        if self.choices.len() != env.num_players() || tree.num_players() != env.num_players() {
            return Err(GameError::Strategy("one strategy per player is required".into()));
        }
        for (i, per_type) in self.choices.iter().enumerate() {
            if per_type.len() != env.type_count(i) {
                return Err(GameError::Strategy(format!(
                    "player {} needs a behavior for each of {} types",
                    env.players()[i],
                    env.type_count(i)
                )));
            }
            for (t, behavior) in per_type.iter().enumerate() {
                let who = format!("player {} type {}", env.players()[i], env.type_labels(i)[t]);
                for (info, _) in tree.info_sets_of(i) {
                    let Some(action) = behavior.get(&info.label) else {
                        return Err(GameError::Strategy(format!("{who} has no action at {:?}", info.label)));
                    };
                    if !tree.actions_at(info).contains(&action.as_str()) {
                        return Err(GameError::Strategy(format!(
                            "{who} picks unavailable action {action:?} at {:?}",
                            info.label
                        )));
                    }
                }
                for label in behavior.keys() {
                    let info = InfoSet { player: i, label: label.clone() };
                    if !tree.info_sets().contains_key(&info) {
                        return Err(GameError::Strategy(format!("{who} names unknown information set {label:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Carries the profile over to `original.perfect_information()`.
    pub fn for_perfect_information(&self, original: &GameTree) -> StrategyProfile {
        let mut choices: Vec<Vec<Behavior>> =
            self.choices.iter().map(|per_type| vec![Behavior::new(); per_type.len()]).collect();
        for id in original.decision_nodes() {
            let info = original.info_set(id).expect("decision node");
            for (t, behavior) in self.choices[info.player].iter().enumerate() {
                if let Some(a) = behavior.get(&info.label) {
                    choices[info.player][t].insert(format!("{}#{id}", info.label), a.clone());
                }
            }
        }
        StrategyProfile { choices }
    }
}

/// `T^G(B)`: follows the behavior profile from the root.
pub fn terminal_of(tree: &GameTree, behaviors: &[&Behavior]) -> Result<NodeId, GameError> {
    let mut cur = 0;
    loop {
        match tree.node(cur) {
            Node::Leaf { .. } => return Ok(cur),
            Node::Decision { mover, info_label, .. } => {
                let action = behaviors
                    .get(*mover)
                    .and_then(|b| b.get(info_label))
                    .ok_or_else(|| GameError::Strategy(format!("no action for player {mover} at {info_label:?}")))?;
                cur = tree.child(cur, action).ok_or_else(|| GameError::ActionUnavailable {
                    label: info_label.clone(),
                    action: action.clone(),
                })?;
            }
        }
    }
}

/// The terminal reached by `S(θ)`.
pub fn play(tree: &GameTree, profile: &StrategyProfile, state: &State) -> Result<NodeId, GameError> {
    terminal_of(tree, &profile.profile_at(state))
}

/// `g(T^G(S(θ))) = f(θ)` for every `θ`.
pub fn check_implements<S: Scalar>(
    env: &Environment<S>,
    tree: &GameTree,
    profile: &StrategyProfile,
) -> Result<bool, GameError> {
    for s in env.states() {
        let z = play(tree, profile, s)?;
        if tree.outcome(z) != Some(env.scf(s)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    pub action: String,
    pub child: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    pub mover: String,
    pub info_label: String,
    pub actions: Vec<ActionRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafRecord {
    pub id: NodeId,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyRecord {
    pub player: String,
    #[serde(rename = "type")]
    pub own_type: String,
    pub info_label: String,
    pub action: String,
}

/// The on-disk game document: decision nodes, leaves and the strategy profile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub nodes: Vec<NodeRecord>,
    pub leaves: Vec<LeafRecord>,
    pub strategy: Vec<StrategyRecord>,
}

impl GameFile {
    pub fn from_game<S: Scalar>(env: &Environment<S>, tree: &GameTree, profile: &StrategyProfile) -> Self {
        let mut nodes = Vec::new();
        let mut leaves = Vec::new();
        for (id, node) in tree.nodes().iter().enumerate() {
            match node {
                Node::Leaf { outcome } => leaves.push(LeafRecord { id, outcome: env.outcomes()[*outcome].clone() }),
                Node::Decision { mover, info_label, actions } => nodes.push(NodeRecord {
                    id,
                    mover: env.players()[*mover].clone(),
                    info_label: info_label.clone(),
                    actions: actions.iter().map(|(a, c)| ActionRecord { action: a.clone(), child: *c }).collect(),
                }),
            }
        }
        let mut strategy = Vec::new();
        for (i, per_type) in profile.choices().iter().enumerate() {
            for (t, behavior) in per_type.iter().enumerate() {
                for (label, action) in behavior {
                    strategy.push(StrategyRecord {
                        player: env.players()[i].clone(),
                        own_type: env.type_labels(i)[t].clone(),
                        info_label: label.clone(),
                        action: action.clone(),
                    });
                }
            }
        }
        GameFile { nodes, leaves, strategy }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game files serialize")
    }

    /// Rebuilds and validates the tree and profile. The root is the one node
    /// that is nobody's child; ids are renumbered depth-first.
    pub fn to_game<S: Scalar>(&self, env: &Environment<S>) -> Result<(GameTree, StrategyProfile), GameError> {
        let mut decisions = BTreeMap::new();
        let mut leaves = BTreeMap::new();
        for n in &self.nodes {
            let mover = env.player_index(&n.mover).map_err(|e| GameError::Malformed(e.to_string()))?;
            if decisions.insert(n.id, (mover, n)).is_some() {
                return Err(GameError::Malformed(format!("node id {} appears twice", n.id)));
            }
        }
        for l in &self.leaves {
            let x = env
                .outcome_index(&l.outcome)
                .ok_or_else(|| GameError::Malformed(format!("leaf {} has unknown outcome {:?}", l.id, l.outcome)))?;
            if decisions.contains_key(&l.id) || leaves.insert(l.id, x).is_some() {
                return Err(GameError::Malformed(format!("node id {} appears twice", l.id)));
            }
        }
        let mut is_child = BTreeSet::new();
        for (_, n) in decisions.values() {
            for a in &n.actions {
                if !decisions.contains_key(&a.child) && !leaves.contains_key(&a.child) {
                    return Err(GameError::Malformed(format!("node {} points at missing node {}", n.id, a.child)));
                }
                if !is_child.insert(a.child) {
                    return Err(GameError::Malformed(format!("node {} has more than one parent", a.child)));
                }
            }
        }
        let roots: Vec<NodeId> =
            decisions.keys().chain(leaves.keys()).copied().filter(|id| !is_child.contains(id)).collect();
        let [root] = roots[..] else {
            return Err(GameError::Malformed(format!("expected exactly one root, found {}", roots.len())));
        };
        fn build(
            id: NodeId,
            decisions: &BTreeMap<NodeId, (PlayerId, &NodeRecord)>,
            leaves: &BTreeMap<NodeId, usize>,
            seen: &mut usize,
            limit: usize,
        ) -> Result<TreeShape, GameError> {
            *seen += 1;
            if *seen > limit {
                return Err(GameError::Malformed("node graph has a cycle".into()));
            }
            if let Some(&x) = leaves.get(&id) {
                return Ok(TreeShape::Leaf(x));
            }
            let (mover, rec) = decisions[&id];
            let children = rec
                .actions
                .iter()
                .map(|a| Ok((a.action.clone(), build(a.child, decisions, leaves, seen, limit)?)))
                .collect::<Result<Vec<_>, GameError>>()?;
            Ok(TreeShape::Decision { mover, label: rec.info_label.clone(), children })
        }
        let mut seen = 0;
        let total = decisions.len() + leaves.len();
        let shape = build(root, &decisions, &leaves, &mut seen, total)?;
        if seen != total {
            return Err(GameError::Malformed("some nodes are not connected to the root".into()));
        }
        let tree = GameTree::from_shape(&shape, env.num_players(), env.outcomes().len())?;

        let mut choices: Vec<Vec<Behavior>> =
            (0..env.num_players()).map(|i| vec![Behavior::new(); env.type_count(i)]).collect();
        for r in &self.strategy {
            let i = env.player_index(&r.player).map_err(|e| GameError::Strategy(e.to_string()))?;
            let t = env.type_index(i, &r.own_type).map_err(|e| GameError::Strategy(e.to_string()))?;
            if choices[i][t].insert(r.info_label.clone(), r.action.clone()).is_some() {
                return Err(GameError::Strategy(format!(
                    "player {} type {} has two actions at {:?}",
                    r.player, r.own_type, r.info_label
                )));
            }
        }
        let profile = StrategyProfile::new(choices);
        profile.validate(&tree, env)?;
        Ok((tree, profile))
    }
}
