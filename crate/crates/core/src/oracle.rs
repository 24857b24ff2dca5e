//! Brute-force referees for the monotonic deciders.
//!
//! `protocol_search` enumerates perfect-information protocols in which one
//! player at a time splits the current cell by partitioning their own
//! projection. A split is accepted when the chooser never prefers a type in
//! another block, judged with the current cell as belief. The search is
//! memoized per cell.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::deciders::{decide_with_limits, DeciderError};
use crate::game::{
    check_definitional, check_gspc, check_implements, Behavior, DefinitionalLimits, DefinitionalVerdict, GameError,
    TreeShape, GameTree, GspcReport, StrategyProfile,
};
use crate::model::{Environment, EnvironmentFile, PlayerId, StateSet};
use crate::notions::{rho, set_partitions, NotionError, NotionId};
use crate::scalar::Scalar;
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{states} states exceed the search limit of {limit}")]
    LimitExceeded { states: usize, limit: usize },
    #[error("protocol search covers OD and SOD only, not {0}")]
    UnsupportedNotion(NotionId),
    #[error(transparent)]
    Notion(#[from] NotionError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Decider(#[from] DeciderError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolLimits {
    pub max_states: usize,
}

impl Default for ProtocolLimits {
    fn default() -> Self {
        ProtocolLimits { max_states: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolNode {
    Leaf { cell: StateSet, outcome: usize },
    Split { cell: StateSet, chooser: PlayerId, blocks: Vec<BTreeSet<usize>>, children: Vec<ProtocolNode> },
}

impl ProtocolNode {
    pub fn cell(&self) -> &StateSet {
        match self {
            ProtocolNode::Leaf { cell, .. } | ProtocolNode::Split { cell, .. } => cell,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ProtocolNode::Leaf { .. } => 0,
            ProtocolNode::Split { children, .. } => 1 + children.iter().map(ProtocolNode::depth).max().unwrap_or(0),
        }
    }

    /// The chooser sequence along the path of `θ`.
    pub fn choosers_at(&self, theta: &crate::State) -> Vec<PlayerId> {
        let mut out = Vec::new();
        let mut cur = self;
        while let ProtocolNode::Split { chooser, children, .. } = cur {
            out.push(*chooser);
            match children.iter().find(|c| c.cell().contains(theta)) {
                Some(c) => cur = c,
                None => break,
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchOutcome {
    pub found: bool,
    pub witness: Option<ProtocolNode>,
    /// The whole space was decided within the limits.
    pub exhausted: bool,
    /// Distinct cells examined.
    pub cells: usize,
}

/// The chooser and blocks of a solved cell.
type Split = (PlayerId, Vec<BTreeSet<usize>>);

struct Search<'a, S> {
    env: &'a Environment<S>,
    id: NotionId,
    memo: HashMap<StateSet, Option<Split>>,
    partitions: HashMap<usize, Vec<Vec<usize>>>,
}

impl<S: Scalar> Search<'_, S> {
    /// Whether `e` can be split down to f-constant cells; the chosen split is memoized.
    fn solve(&mut self, e: &StateSet) -> Result<bool, NotionError> {
        if self.env.is_scf_constant_on(e) {
            return Ok(true);
        }
        if let Some(found) = self.memo.get(e) {
            return Ok(found.is_some());
        }
        // Provisional entry; cells only shrink, so no cycle can read it.
        self.memo.insert(e.clone(), None);
        for i in 0..self.env.num_players() {
            let types: Vec<usize> = e.projection(i).iter().copied().collect();
            if types.len() < 2 {
                continue;
            }
            let parts = self.partitions.entry(types.len()).or_insert_with(|| set_partitions(types.len())).clone();
            for labels in parts {
                let count = labels.iter().max().map_or(0, |m| m + 1);
                if count < 2 {
                    continue;
                }
                let mut blocks = vec![BTreeSet::new(); count];
                for (k, &b) in labels.iter().enumerate() {
                    blocks[b].insert(types[k]);
                }
                if !self.accepts(e, i, &blocks)? {
                    continue;
                }
                let mut all = true;
                for block in &blocks {
                    let child = e.filter(|s| block.contains(&s.component(i))).expect("blocks are nonempty");
                    if !self.solve(&child)? {
                        all = false;
                        break;
                    }
                }
                if all {
                    self.memo.insert(e.clone(), Some((i, blocks)));
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn accepts(&self, e: &StateSet, i: PlayerId, blocks: &[BTreeSet<usize>]) -> Result<bool, NotionError> {
        let others = e.others(i);
        for own_block in blocks {
            let gamma = (self.id == NotionId::Sod).then_some(own_block);
            for &own in own_block {
                for other in blocks.iter().filter(|b| *b != own_block) {
                    for &mimic in other {
                        if !rho(self.id, self.env, i, own, mimic, &others, gamma)? {
                            return Ok(false);
                        }
                    }
                }
            }
        }
        Ok(true)
    }

    fn witness(&self, e: &StateSet) -> ProtocolNode {
        if self.env.is_scf_constant_on(e) {
            let first = e.iter().next().expect("nonempty cell");
            return ProtocolNode::Leaf { cell: e.clone(), outcome: self.env.scf(first) };
        }
        let (chooser, blocks) = self.memo[e].clone().expect("solved cell");
        let children = blocks
            .iter()
            .map(|b| self.witness(&e.filter(|s| b.contains(&s.component(chooser))).expect("nonempty block")))
            .collect();
        ProtocolNode::Split { cell: e.clone(), chooser, blocks, children }
    }
}

pub fn protocol_search<S: Scalar>(
    env: &Environment<S>,
    id: NotionId,
    limits: ProtocolLimits,
) -> Result<SearchOutcome, OracleError> {
    if !matches!(id, NotionId::Od | NotionId::Sod) {
        return Err(OracleError::UnsupportedNotion(id));
    }
    if env.state_count() > limits.max_states {
        return Err(OracleError::LimitExceeded { states: env.state_count(), limit: limits.max_states });
    }
    let mut search = Search { env, id, memo: HashMap::new(), partitions: HashMap::new() };
    let full = env.full_set();
    let found = search.solve(&full)?;
    let witness = found.then(|| search.witness(&full));
    Ok(SearchOutcome { found, witness, exhausted: true, cells: search.memo.len() })
}

/// A perfect-information game for a protocol, with the truthful profile.
/// Types off the path pick the first block.
pub fn protocol_game<S: Scalar>(env: &Environment<S>, root: &ProtocolNode) -> Result<(GameTree, StrategyProfile), GameError> {
    let mut labels: Vec<(PlayerId, String, Vec<BTreeSet<usize>>)> = Vec::new();
    fn build<S: Scalar>(
        env: &Environment<S>,
        node: &ProtocolNode,
        path: &str,
        labels: &mut Vec<(PlayerId, String, Vec<BTreeSet<usize>>)>,
    ) -> TreeShape {
        match node {
            ProtocolNode::Leaf { outcome, .. } => TreeShape::Leaf(*outcome),
            ProtocolNode::Split { chooser, blocks, children, .. } => {
                let label = format!("{}|{}", if path.is_empty() { "()" } else { path }, env.players()[*chooser]);
                labels.push((*chooser, label.clone(), blocks.clone()));
                let children = blocks
                    .iter()
                    .zip(children)
                    .map(|(b, c)| {
                        let action = env.type_set_label(*chooser, b);
                        let next = if path.is_empty() { action.clone() } else { format!("{path}/{action}") };
                        (action, build(env, c, &next, labels))
                    })
                    .collect();
                TreeShape::Decision { mover: *chooser, label, children }
            }
        }
    }
    let shape = build(env, root, "", &mut labels);
    let tree = GameTree::from_shape(&shape, env.num_players(), env.outcomes().len())?;
    let mut choices: Vec<Vec<Behavior>> = (0..env.num_players()).map(|i| vec![Behavior::new(); env.type_count(i)]).collect();
    for (i, label, blocks) in &labels {
        for (t, b) in choices[*i].iter_mut().enumerate() {
            let block = blocks.iter().find(|bl| bl.contains(&t)).unwrap_or(&blocks[0]);
            b.insert(label.clone(), env.type_set_label(*i, block));
        }
    }
    Ok((tree, StrategyProfile::new(choices)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameVerdict {
    pub implements: bool,
    pub gspc: GspcReport,
    pub definitional: DefinitionalVerdict,
}

impl GameVerdict {
    pub fn holds(&self) -> bool {
        self.implements && self.definitional.holds()
    }
}

pub fn verify_game<S: Scalar>(
    env: &Environment<S>,
    id: NotionId,
    tree: &GameTree,
    profile: &StrategyProfile,
    limits: DefinitionalLimits,
) -> Result<GameVerdict, GameError> {
    Ok(GameVerdict {
        implements: check_implements(env, tree, profile)?,
        gspc: check_gspc(env, tree, profile)?,
        definitional: check_definitional(id, env, tree, profile, limits)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossCheck {
    pub agree: bool,
    pub decider: bool,
    pub oracle: bool,
    /// Whether the oracle's witness passed the definitional checker.
    pub witness_verified: Option<bool>,
    pub details: String,
}

pub fn cross_check<S: Scalar>(env: &Environment<S>, id: NotionId, limits: ProtocolLimits) -> Result<CrossCheck, OracleError> {
    let search = protocol_search(env, id, limits)?;
    let verdict = decide_with_limits(env, id, DefinitionalLimits::default())?;
    let witness_verified = match &search.witness {
        Some(w) => {
            let (tree, profile) = protocol_game(env, w)?;
            Some(verify_game(env, id, &tree, &profile, DefinitionalLimits::default())?.holds())
        }
        None => None,
    };
    let agree = verdict.implementable == search.found;
    let mut details = format!(
        "{}: decider {}, oracle {}",
        id.concept(),
        if verdict.implementable { "implementable" } else { "not implementable" },
        if search.found { "found a protocol" } else { "found no protocol" }
    );
    if !agree {
        details.push_str(&format!("\ndecider:\n{}", verdict.render(env)));
        if let Some(w) = &search.witness {
            let (tree, profile) = protocol_game(env, w)?;
            details.push_str(&format!("oracle witness:\n{}\n", crate::game::GameFile::from_game(env, &tree, &profile).to_json()));
        }
    }
    Ok(CrossCheck { agree, decider: verdict.implementable, oracle: search.found, witness_verified, details })
}

/// Shape of the seeded random environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomShape {
    pub players: usize,
    pub min_types: usize,
    pub max_types: usize,
    pub min_outcomes: usize,
    pub max_outcomes: usize,
    /// Utilities are `n/d` with `|n| ≤ max_numerator` and `1 ≤ d ≤ max_denominator`.
    pub max_numerator: i64,
    pub max_denominator: i64,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            players: 2,
            min_types: 2,
            max_types: 3,
            min_outcomes: 2,
            max_outcomes: 4,
            max_numerator: 3,
            max_denominator: 3,
        }
    }
}

impl RandomShape {
    /// Few outcomes and 0/1 utilities, where positive verdicts are common.
    pub fn coarse() -> Self {
        RandomShape { max_outcomes: 3, max_numerator: 1, max_denominator: 1, ..Self::default() }
    }
}

/// A reproducible environment: small rational utilities, a uniformly drawn
/// `f` and a positive prior.
pub fn random_environment(seed: u64, shape: RandomShape) -> Environment<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let players: Vec<String> = (1..=shape.players).map(|p| p.to_string()).collect();
    let types: BTreeMap<String, Vec<String>> = players
        .iter()
        .map(|p| {
            let n = rng.gen_range(shape.min_types..=shape.max_types);
            (p.clone(), (0..n).map(|k| ((b'a' + k as u8) as char).to_string()).collect())
        })
        .collect();
    let outcomes: Vec<String> = (0..rng.gen_range(shape.min_outcomes..=shape.max_outcomes)).map(|k| format!("x{k}")).collect();
    let mut utilities = BTreeMap::new();
    for p in &players {
        for t in &types[p] {
            for x in &outcomes {
                let num: i64 = rng.gen_range(-shape.max_numerator..=shape.max_numerator);
                let den: i64 = rng.gen_range(1..=shape.max_denominator);
                utilities.insert(format!("{p}|{t}|{x}"), format!("{num}/{den}"));
            }
        }
    }
    let mut profiles: Vec<Vec<String>> = vec![Vec::new()];
    for p in &players {
        profiles = profiles
            .into_iter()
            .flat_map(|prefix| {
                types[p].iter().map(move |t| {
                    let mut next = prefix.clone();
                    next.push(t.clone());
                    next
                })
            })
            .collect();
    }
    let mut scf = BTreeMap::new();
    let mut weights = Vec::new();
    for profile in &profiles {
        scf.insert(profile.join(","), outcomes[rng.gen_range(0..outcomes.len())].clone());
        weights.push(rng.gen_range(1..=4i64));
    }
    let total: i64 = weights.iter().sum();
    let prior = profiles.iter().zip(&weights).map(|(p, w)| (p.join(","), format!("{w}/{total}"))).collect();
    let file = EnvironmentFile { players, types, outcomes, utilities, scf, prior: Some(prior) };
    Environment::from_file(&file).expect("generated environments are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn named_searches() {
        let spa = fixtures::spa();
        let out = protocol_search(&spa, NotionId::Od, ProtocolLimits::default()).unwrap();
        assert!(out.found && out.exhausted);
        let w = out.witness.unwrap();
        assert_eq!(w.choosers_at(&spa.state(&["3", "3"]).unwrap()), vec![1, 0]);
        let (tree, profile) = protocol_game(&spa, &w).unwrap();
        assert!(verify_game(&spa, NotionId::Od, &tree, &profile, DefinitionalLimits::default()).unwrap().holds());

        let xor = fixtures::xor();
        let out = protocol_search(&xor, NotionId::Od, ProtocolLimits::default()).unwrap();
        assert!(!out.found && out.exhausted);

        let c = fixtures::constant();
        let out = protocol_search(&c, NotionId::Od, ProtocolLimits::default()).unwrap();
        assert!(matches!(out.witness, Some(ProtocolNode::Leaf { .. })));
    }

    #[test]
    fn cross_checks_agree_on_fixtures() {
        for env in [fixtures::spa(), fixtures::xor(), fixtures::constant()] {
            for id in [NotionId::Od, NotionId::Sod] {
                let c = cross_check(&env, id, ProtocolLimits::default()).unwrap();
                assert!(c.agree, "{}", c.details);
            }
        }
    }

    #[test]
    fn limits_and_notions() {
        let spa = fixtures::spa();
        assert!(matches!(
            protocol_search(&spa, NotionId::Od, ProtocolLimits { max_states: 3 }),
            Err(OracleError::LimitExceeded { states: 4, limit: 3 })
        ));
        assert!(matches!(
            protocol_search(&spa, NotionId::Wd, ProtocolLimits::default()),
            Err(OracleError::UnsupportedNotion(NotionId::Wd))
        ));
    }

    #[test]
    fn random_environments_are_reproducible() {
        let a = random_environment(7, RandomShape::default());
        let b = random_environment(7, RandomShape::default());
        assert_eq!(a.to_file(), b.to_file());
        assert!(a.prior().is_some());
        assert!((2..=3).contains(&a.type_count(0)));
    }
}
