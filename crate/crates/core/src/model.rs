//! Environments, type profiles and state sets.
//!
//! A [`State`] is a type profile `θ = (θ_1, ..., θ_n)` stored as per-player
//! indices into the input-ordered type lists. A [`StateSet`] is an immutable
//! nonempty set of states together with its componentwise projections; every
//! operator in this crate consumes and produces state sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub type PlayerId = usize;

/// A profile of opponents' types: a [`State`] with one component removed.
pub type Others = Vec<usize>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid environment: {}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("state sets must be nonempty")]
    EmptyStateSet,
    #[error("state has {found} components, expected {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("environment has no prior")]
    NoPrior,
    #[error("player {player} type {own_type} has zero prior marginal; the conditional belief is undefined")]
    ZeroMarginal { player: String, own_type: String },
    #[error("unknown player {0:?}")]
    UnknownPlayer(String),
    #[error("unknown type {label:?} for player {player:?}")]
    UnknownType { player: String, label: String },
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// One violated environment invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    NoPlayers,
    DuplicatePlayer(String),
    MissingTypes { player: String },
    UnknownPlayerInTypes(String),
    EmptyTypeSet { player: String },
    DuplicateType { player: String, label: String },
    ReservedCharacter { label: String },
    NoOutcomes,
    DuplicateOutcome(String),
    MalformedUtilityKey(String),
    UnknownUtilityKey(String),
    MalformedRational { key: String, value: String },
    MissingUtility { player: String, own_type: String, outcome: String },
    MalformedStateKey(String),
    UnknownOutcome { state: String, outcome: String },
    MissingScf { state: String },
    MissingPrior { state: String },
    NegativePrior { state: String, value: String },
    PriorSum { sum: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Diagnostic::*;
        match self {
            NoPlayers => write!(f, "no players"),
            DuplicatePlayer(p) => write!(f, "duplicate player {p:?}"),
            MissingTypes { player } => write!(f, "no type list for player {player:?}"),
            UnknownPlayerInTypes(p) => write!(f, "type list given for unknown player {p:?}"),
            EmptyTypeSet { player } => write!(f, "player {player:?} has an empty type set"),
            DuplicateType { player, label } => {
                write!(f, "player {player:?} lists type {label:?} twice")
            }
            ReservedCharacter { label } => {
                write!(f, "label {label:?} contains a reserved character (',' or '|')")
            }
            NoOutcomes => write!(f, "no outcomes"),
            DuplicateOutcome(x) => write!(f, "duplicate outcome {x:?}"),
            MalformedUtilityKey(k) => write!(f, "utility key {k:?} is not player|type|outcome"),
            UnknownUtilityKey(k) => write!(f, "utility key {k:?} names an unknown player, type or outcome"),
            MalformedRational { key, value } => write!(f, "{key:?}: {value:?} is not a rational p/q"),
            MissingUtility { player, own_type, outcome } => {
                write!(f, "missing utility for {player}|{own_type}|{outcome}")
            }
            MalformedStateKey(k) => write!(f, "state key {k:?} is not a comma-separated type profile"),
            UnknownOutcome { state, outcome } => {
                write!(f, "scf maps {state} to unknown outcome {outcome:?}")
            }
            MissingScf { state } => write!(f, "scf undefined at {state}"),
            MissingPrior { state } => write!(f, "prior undefined at {state}"),
            NegativePrior { state, value } => write!(f, "prior weight {value} at {state} is negative"),
            PriorSum { sum } => write!(f, "prior weights sum to {sum}, not 1"),
        }
    }
}

/// A type profile, one type index per player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn component(&self, i: PlayerId) -> usize {
        self.0[i]
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// The opponents' part `θ_{-i}`.
    pub fn others(&self, i: PlayerId) -> Others {
        let mut rest = self.0.clone();
        rest.remove(i);
        rest
    }

    /// Reassembles `(t, rest)` with `t` in position `i`.
    pub fn splice(rest: &[usize], i: PlayerId, t: usize) -> State {
        let mut v = Vec::with_capacity(rest.len() + 1);
        v.extend_from_slice(&rest[..i]);
        v.push(t);
        v.extend_from_slice(&rest[i..]);
        State(v)
    }

    pub fn with_component(&self, i: PlayerId, t: usize) -> State {
        let mut v = self.0.clone();
        v[i] = t;
        State(v)
    }
}

/// A nonempty set of states with its per-player projections `E_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateSet {
    members: BTreeSet<State>,
    projections: Vec<BTreeSet<usize>>,
}

impl StateSet {
    pub fn new(states: impl IntoIterator<Item = State>) -> Result<Self, ModelError> {
        let members: BTreeSet<State> = states.into_iter().collect();
        let first = members.iter().next().ok_or(ModelError::EmptyStateSet)?;
        let n = first.arity();
        let mut projections = vec![BTreeSet::new(); n];
        for s in &members {
            if s.arity() != n {
                return Err(ModelError::ArityMismatch { expected: n, found: s.arity() });
            }
            for (i, &t) in s.0.iter().enumerate() {
                projections[i].insert(t);
            }
        }
        Ok(StateSet { members, projections })
    }

    pub fn singleton(state: State) -> Self {
        StateSet::new([state]).expect("singleton is nonempty")
    }

    /// The rectangle `×_i components[i]`.
    pub fn product(components: &[BTreeSet<usize>]) -> Result<Self, ModelError> {
        let mut states = vec![Vec::new()];
        for comp in components {
            if comp.is_empty() {
                return Err(ModelError::EmptyStateSet);
            }
            states = states
                .into_iter()
                .flat_map(|prefix| {
                    comp.iter().map(move |&t| {
                        let mut p = prefix.clone();
                        p.push(t);
                        p
                    })
                })
                .collect();
        }
        StateSet::new(states.into_iter().map(State))
    }

    pub fn members(&self) -> &BTreeSet<State> {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = &State> {
        self.members.iter()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_players(&self) -> usize {
        self.projections.len()
    }

    pub fn contains(&self, state: &State) -> bool {
        self.members.contains(state)
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    /// `E_i`, in type order.
    pub fn projection(&self, i: PlayerId) -> &BTreeSet<usize> {
        &self.projections[i]
    }

    /// `E_{-i}`: the opponents' profiles appearing in the set.
    pub fn others(&self, i: PlayerId) -> BTreeSet<Others> {
        self.members.iter().map(|s| s.others(i)).collect()
    }

    /// True iff the set equals the product of its projections.
    pub fn is_rectangle(&self) -> bool {
        let size: usize = self.projections.iter().map(BTreeSet::len).product();
        size == self.members.len()
    }

    pub fn rectangle_hull(&self) -> StateSet {
        StateSet::product(&self.projections).expect("projections of a nonempty set are nonempty")
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        StateSet::new(self.members.iter().chain(other.members.iter()).cloned())
            .expect("union of nonempty sets")
    }

    pub fn filter(&self, mut keep: impl FnMut(&State) -> bool) -> Option<StateSet> {
        StateSet::new(self.members.iter().filter(|s| keep(s)).cloned()).ok()
    }
}

/// A finite mechanism-design environment with exact utilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Environment<S> {
    players: Vec<String>,
    types: Vec<Vec<String>>,
    outcomes: Vec<String>,
    /// `utilities[i][t][x] = u_i^t(x)`.
    utilities: Vec<Vec<Vec<S>>>,
    /// `scf[index(θ)] = f(θ)`.
    scf: Vec<usize>,
    prior: Option<Vec<S>>,
    all_states: Vec<State>,
}

impl<S: Scalar> Environment<S> {
    /// Builds an environment from index-based tables; `scf` and `prior` are
    /// indexed by [`Environment::state_index`] (player 0 most significant).
    pub fn from_parts(
        players: Vec<String>,
        types: Vec<Vec<String>>,
        outcomes: Vec<String>,
        utilities: Vec<Vec<Vec<S>>>,
        scf: Vec<usize>,
        prior: Option<Vec<S>>,
    ) -> Result<Self, ModelError> {
        let mut diags = Vec::new();
        check_labels(&players, &types, &outcomes, &mut diags);
        if types.len() != players.len() {
            for p in players.iter().skip(types.len()) {
                diags.push(Diagnostic::MissingTypes { player: p.clone() });
            }
        }
        if !diags.is_empty() {
            return Err(ModelError::Invalid(diags));
        }
        let all_states = enumerate_states(&types);
        for (i, p) in players.iter().enumerate() {
            for (t, tl) in types[i].iter().enumerate() {
                for (x, xl) in outcomes.iter().enumerate() {
                    let present = utilities
                        .get(i)
                        .and_then(|u| u.get(t))
                        .and_then(|u| u.get(x))
                        .is_some();
                    if !present {
                        diags.push(Diagnostic::MissingUtility {
                            player: p.clone(),
                            own_type: tl.clone(),
                            outcome: xl.clone(),
                        });
                    }
                }
            }
        }
        for (k, s) in all_states.iter().enumerate() {
            match scf.get(k) {
                None => diags.push(Diagnostic::MissingScf { state: profile_label(&types, s) }),
                Some(&x) if x >= outcomes.len() => diags.push(Diagnostic::UnknownOutcome {
                    state: profile_label(&types, s),
                    outcome: x.to_string(),
                }),
                _ => {}
            }
        }
        if let Some(prior) = &prior {
            check_prior(prior, &all_states, &types, &mut diags);
        }
        if !diags.is_empty() {
            return Err(ModelError::Invalid(diags));
        }
        Ok(Environment { players, types, outcomes, utilities, scf, prior, all_states })
    }

    /// Parses and validates an environment document.
    pub fn from_file(file: &EnvironmentFile) -> Result<Self, ModelError> {
        let (parsed, diags) = parse_file::<S>(file);
        match parsed {
            Some(env) if diags.is_empty() => Ok(env),
            _ => Err(ModelError::Invalid(diags)),
        }
    }

    pub fn to_file(&self) -> EnvironmentFile {
        let types = self
            .players
            .iter()
            .zip(&self.types)
            .map(|(p, ts)| (p.clone(), ts.clone()))
            .collect();
        let mut utilities = BTreeMap::new();
        for (i, p) in self.players.iter().enumerate() {
            for (t, tl) in self.types[i].iter().enumerate() {
                for (x, xl) in self.outcomes.iter().enumerate() {
                    utilities.insert(format!("{p}|{tl}|{xl}"), self.utilities[i][t][x].render());
                }
            }
        }
        let scf = self
            .all_states
            .iter()
            .map(|s| (self.state_key(s), self.outcomes[self.scf(s)].clone()))
            .collect();
        let prior = self.prior.as_ref().map(|prior| {
            self.all_states
                .iter()
                .zip(prior)
                .map(|(s, w)| (self.state_key(s), w.render()))
                .collect()
        });
        EnvironmentFile {
            players: self.players.clone(),
            types,
            outcomes: self.outcomes.clone(),
            utilities,
            scf,
            prior,
        }
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    pub fn player_index(&self, name: &str) -> Result<PlayerId, ModelError> {
        self.players
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| ModelError::UnknownPlayer(name.to_string()))
    }

    pub fn type_labels(&self, i: PlayerId) -> &[String] {
        &self.types[i]
    }

    pub fn type_count(&self, i: PlayerId) -> usize {
        self.types[i].len()
    }

    pub fn type_index(&self, i: PlayerId, label: &str) -> Result<usize, ModelError> {
        self.types[i].iter().position(|t| t == label).ok_or_else(|| ModelError::UnknownType {
            player: self.players[i].clone(),
            label: label.to_string(),
        })
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|x| x == label)
    }

    /// All of `Θ` in canonical (lexicographic, input) order.
    pub fn states(&self) -> &[State] {
        &self.all_states
    }

    pub fn state_count(&self) -> usize {
        self.all_states.len()
    }

    pub fn full_set(&self) -> StateSet {
        StateSet::new(self.all_states.iter().cloned()).expect("type sets are nonempty")
    }

    pub fn state_index(&self, state: &State) -> usize {
        state
            .0
            .iter()
            .zip(&self.types)
            .fold(0, |acc, (&t, ts)| acc * ts.len() + t)
    }

    /// Looks a state up by its type labels.
    pub fn state(&self, labels: &[&str]) -> Result<State, ModelError> {
        if labels.len() != self.players.len() {
            return Err(ModelError::ArityMismatch { expected: self.players.len(), found: labels.len() });
        }
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| self.type_index(i, l))
            .collect::<Result<Vec<_>, _>>()
            .map(State)
    }

    /// `f(θ)` as an outcome index.
    pub fn scf(&self, state: &State) -> usize {
        self.scf[self.state_index(state)]
    }

    pub fn utility(&self, i: PlayerId, own_type: usize, outcome: usize) -> &S {
        &self.utilities[i][own_type][outcome]
    }

    /// `u_i^{own_type}(f(state))`.
    pub fn payoff(&self, i: PlayerId, own_type: usize, state: &State) -> &S {
        self.utility(i, own_type, self.scf(state))
    }

    pub fn prior(&self) -> Option<&[S]> {
        self.prior.as_deref()
    }

    pub fn prior_of(&self, state: &State) -> Option<&S> {
        self.prior.as_ref().map(|p| &p[self.state_index(state)])
    }

    pub fn with_prior(&self, prior: Vec<S>) -> Result<Self, ModelError> {
        Environment::from_parts(
            self.players.clone(),
            self.types.clone(),
            self.outcomes.clone(),
            self.utilities.clone(),
            self.scf.clone(),
            Some(prior),
        )
    }

    pub fn uniform_prior(&self) -> Self {
        let n = self.all_states.len() as i64;
        self.with_prior(vec![S::from_ratio(1, n); n as usize]).expect("uniform prior is valid")
    }

    pub fn is_scf_constant_on(&self, set: &StateSet) -> bool {
        let mut outcomes = set.iter().map(|s| self.scf(s));
        let first = outcomes.next();
        outcomes.all(|x| Some(x) == first)
    }

    /// `"(a,b)"`.
    pub fn state_label(&self, state: &State) -> String {
        profile_label(&self.types, state)
    }

    /// `"a,b"`, the key format used by environment files.
    pub fn state_key(&self, state: &State) -> String {
        state.0.iter().enumerate().map(|(i, &t)| self.types[i][t].as_str()).collect::<Vec<_>>().join(",")
    }

    pub fn set_label(&self, set: &StateSet) -> String {
        let inner: Vec<String> = set.iter().map(|s| self.state_label(s)).collect();
        format!("[{}]", inner.join(" "))
    }

    /// `"{a,b}"` for a set of player `i`'s types.
    pub fn type_set_label(&self, i: PlayerId, types: &BTreeSet<usize>) -> String {
        let inner: Vec<&str> = types.iter().map(|&t| self.types[i][t].as_str()).collect();
        format!("{{{}}}", inner.join(","))
    }
}

fn profile_label(types: &[Vec<String>], state: &State) -> String {
    let inner: Vec<&str> = state.0.iter().enumerate().map(|(i, &t)| types[i][t].as_str()).collect();
    format!("({})", inner.join(","))
}

fn enumerate_states(types: &[Vec<String>]) -> Vec<State> {
    let mut states = vec![Vec::new()];
    for ts in types {
        states = states
            .into_iter()
            .flat_map(|prefix| {
                (0..ts.len()).map(move |t| {
                    let mut p = prefix.clone();
                    p.push(t);
                    p
                })
            })
            .collect();
    }
    states.into_iter().map(State).collect()
}

fn check_labels(players: &[String], types: &[Vec<String>], outcomes: &[String], diags: &mut Vec<Diagnostic>) {
    if players.is_empty() {
        diags.push(Diagnostic::NoPlayers);
    }
    let mut seen = BTreeSet::new();
    for p in players {
        if !seen.insert(p) {
            diags.push(Diagnostic::DuplicatePlayer(p.clone()));
        }
        if p.contains('|') || p.contains(',') {
            diags.push(Diagnostic::ReservedCharacter { label: p.clone() });
        }
    }
    for (i, ts) in types.iter().enumerate() {
        let player = players.get(i).cloned().unwrap_or_default();
        if ts.is_empty() {
            diags.push(Diagnostic::EmptyTypeSet { player: player.clone() });
        }
        let mut seen = BTreeSet::new();
        for t in ts {
            if !seen.insert(t) {
                diags.push(Diagnostic::DuplicateType { player: player.clone(), label: t.clone() });
            }
            if t.contains('|') || t.contains(',') {
                diags.push(Diagnostic::ReservedCharacter { label: t.clone() });
            }
        }
    }
    if outcomes.is_empty() {
        diags.push(Diagnostic::NoOutcomes);
    }
    let mut seen = BTreeSet::new();
    for x in outcomes {
        if !seen.insert(x) {
            diags.push(Diagnostic::DuplicateOutcome(x.clone()));
        }
        if x.contains('|') {
            diags.push(Diagnostic::ReservedCharacter { label: x.clone() });
        }
    }
}

fn check_prior<S: Scalar>(prior: &[S], states: &[State], types: &[Vec<String>], diags: &mut Vec<Diagnostic>) {
    let mut sum = S::zero();
    for (k, s) in states.iter().enumerate() {
        match prior.get(k) {
            None => diags.push(Diagnostic::MissingPrior { state: profile_label(types, s) }),
            Some(w) => {
                if *w < S::zero() {
                    diags.push(Diagnostic::NegativePrior { state: profile_label(types, s), value: w.render() });
                }
                sum = sum + w.clone();
            }
        }
    }
    if prior.len() >= states.len() && sum != S::one() {
        diags.push(Diagnostic::PriorSum { sum: sum.render() });
    }
}

/// The environment document: string-keyed so it survives any JSON tooling.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentFile {
    pub players: Vec<String>,
    pub types: BTreeMap<String, Vec<String>>,
    pub outcomes: Vec<String>,
    /// `"player|type|outcome" -> "p/q"`.
    pub utilities: BTreeMap<String, String>,
    /// `"t1,...,tn" -> outcome`.
    pub scf: BTreeMap<String, String>,
    /// `"t1,...,tn" -> "p/q"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BTreeMap<String, String>>,
}

impl EnvironmentFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment files serialize")
    }
}

/// Checks every environment invariant on a document, one diagnostic per violation.
pub fn validate_environment<S: Scalar>(file: &EnvironmentFile) -> Vec<Diagnostic> {
    parse_file::<S>(file).1
}

fn parse_file<S: Scalar>(file: &EnvironmentFile) -> (Option<Environment<S>>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let players = file.players.clone();
    let mut types = Vec::new();
    for p in &players {
        match file.types.get(p) {
            Some(ts) => types.push(ts.clone()),
            None => {
                diags.push(Diagnostic::MissingTypes { player: p.clone() });
                types.push(Vec::new());
            }
        }
    }
    for p in file.types.keys() {
        if !players.contains(p) {
            diags.push(Diagnostic::UnknownPlayerInTypes(p.clone()));
        }
    }
    check_labels(&players, &types, &file.outcomes, &mut diags);
    if !diags.is_empty() {
        return (None, diags);
    }

    let player_ix = |name: &str| players.iter().position(|p| p == name);
    let type_ix = |i: usize, label: &str| types[i].iter().position(|t| t == label);
    let outcome_ix = |label: &str| file.outcomes.iter().position(|x| x == label);

    let mut utilities: Vec<Vec<Vec<Option<S>>>> =
        types.iter().map(|ts| vec![vec![None; file.outcomes.len()]; ts.len()]).collect();
    let mut malformed = BTreeSet::new();
    for (key, value) in &file.utilities {
        let parts: Vec<&str> = key.split('|').collect();
        if parts.len() != 3 {
            diags.push(Diagnostic::MalformedUtilityKey(key.clone()));
            continue;
        }
        let Some(i) = player_ix(parts[0]) else {
            diags.push(Diagnostic::UnknownUtilityKey(key.clone()));
            continue;
        };
        let (Some(t), Some(x)) = (type_ix(i, parts[1]), outcome_ix(parts[2])) else {
            diags.push(Diagnostic::UnknownUtilityKey(key.clone()));
            continue;
        };
        match S::parse_exact(value) {
            Some(v) => utilities[i][t][x] = Some(v),
            None => {
                malformed.insert((i, t, x));
                diags.push(Diagnostic::MalformedRational { key: key.clone(), value: value.clone() });
            }
        }
    }
    for (i, p) in players.iter().enumerate() {
        for (t, tl) in types[i].iter().enumerate() {
            for (x, xl) in file.outcomes.iter().enumerate() {
                if utilities[i][t][x].is_none() && !malformed.contains(&(i, t, x)) {
                    diags.push(Diagnostic::MissingUtility {
                        player: p.clone(),
                        own_type: tl.clone(),
                        outcome: xl.clone(),
                    });
                }
            }
        }
    }

    let all_states = enumerate_states(&types);
    let index_of = |key: &str| -> Option<usize> {
        let parts: Vec<&str> = key.split(',').map(str::trim).collect();
        if parts.len() != players.len() {
            return None;
        }
        let mut idx = 0;
        for (i, part) in parts.iter().enumerate() {
            idx = idx * types[i].len() + type_ix(i, part)?;
        }
        Some(idx)
    };

    let mut scf = vec![None; all_states.len()];
    for (key, outcome) in &file.scf {
        let Some(k) = index_of(key) else {
            diags.push(Diagnostic::MalformedStateKey(key.clone()));
            continue;
        };
        match outcome_ix(outcome) {
            Some(x) => scf[k] = Some(x),
            None => diags.push(Diagnostic::UnknownOutcome {
                state: profile_label(&types, &all_states[k]),
                outcome: outcome.clone(),
            }),
        }
    }
    for (k, s) in all_states.iter().enumerate() {
        if scf[k].is_none() && !diags.iter().any(|d| matches!(d, Diagnostic::UnknownOutcome { state, .. } if *state == profile_label(&types, s))) {
            diags.push(Diagnostic::MissingScf { state: profile_label(&types, s) });
        }
    }

    let mut prior = None;
    if let Some(pmap) = &file.prior {
        let mut weights = vec![None; all_states.len()];
        let mut bad_weight = BTreeSet::new();
        for (key, value) in pmap {
            let Some(k) = index_of(key) else {
                diags.push(Diagnostic::MalformedStateKey(key.clone()));
                continue;
            };
            match S::parse_exact(value) {
                Some(v) => weights[k] = Some(v),
                None => {
                    bad_weight.insert(k);
                    diags.push(Diagnostic::MalformedRational { key: key.clone(), value: value.clone() });
                }
            }
        }
        let mut sum = S::zero();
        let mut complete = true;
        for (k, s) in all_states.iter().enumerate() {
            match &weights[k] {
                None => {
                    complete = false;
                    if !bad_weight.contains(&k) {
                        diags.push(Diagnostic::MissingPrior { state: profile_label(&types, s) });
                    }
                }
                Some(w) => {
                    if *w < S::zero() {
                        diags.push(Diagnostic::NegativePrior {
                            state: profile_label(&types, s),
                            value: w.render(),
                        });
                    }
                    sum = sum + w.clone();
                }
            }
        }
        if complete && sum != S::one() {
            diags.push(Diagnostic::PriorSum { sum: sum.render() });
        }
        prior = Some(weights);
    }

    if !diags.is_empty() {
        return (None, diags);
    }
    let utilities = utilities
        .into_iter()
        .map(|u| u.into_iter().map(|u| u.into_iter().map(Option::unwrap).collect()).collect())
        .collect();
    let scf = scf.into_iter().map(Option::unwrap).collect();
    let prior = prior.map(|w| w.into_iter().map(Option::unwrap).collect());
    let env = Environment::from_parts(players, types, file.outcomes.clone(), utilities, scf, prior);
    match env {
        Ok(env) => (Some(env), diags),
        Err(ModelError::Invalid(d)) => (None, d),
        Err(e) => unreachable!("from_parts only reports diagnostics: {e}"),
    }
}

/// `μ^{θ_i}`, the conditional distribution over opponents' profiles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionalBelief<S> {
    pub player: PlayerId,
    pub own_type: usize,
    pub weights: BTreeMap<Others, S>,
}

pub fn conditional_belief<S: Scalar>(
    env: &Environment<S>,
    i: PlayerId,
    own_type: usize,
) -> Result<ConditionalBelief<S>, ModelError> {
    let prior = env.prior().ok_or(ModelError::NoPrior)?;
    let mut joint = BTreeMap::new();
    let mut marginal = S::zero();
    for (s, w) in env.states().iter().zip(prior) {
        if s.component(i) == own_type {
            marginal = marginal + w.clone();
            joint.insert(s.others(i), w.clone());
        }
    }
    if marginal.is_zero() {
        return Err(ModelError::ZeroMarginal {
            player: env.players()[i].clone(),
            own_type: env.type_labels(i)[own_type].clone(),
        });
    }
    let weights = joint.into_iter().map(|(k, w)| (k, w / marginal.clone())).collect();
    Ok(ConditionalBelief { player: i, own_type, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::Rational;
    use num_traits::Zero;

    fn st(v: &[usize]) -> State {
        State(v.to_vec())
    }

    #[test]
    fn constant_environment_is_clean() {
        let file = EnvironmentFile::from_json(fixtures::ENV_CONST).unwrap();
        assert_eq!(validate_environment::<Rational>(&file), vec![]);
    }

    #[test]
    fn deleted_utility_is_reported() {
        let mut file = EnvironmentFile::from_json(fixtures::ENV_SPA).unwrap();
        file.utilities.remove("1|3|w1p1");
        let diags = validate_environment::<Rational>(&file);
        assert_eq!(
            diags,
            vec![Diagnostic::MissingUtility {
                player: "1".into(),
                own_type: "3".into(),
                outcome: "w1p1".into()
            }]
        );
    }

    #[test]
    fn prior_not_summing_to_one_is_reported() {
        let mut file = EnvironmentFile::from_json(fixtures::ENV_SPA).unwrap();
        let keys: Vec<String> = file.scf.keys().cloned().collect();
        file.prior = Some(keys.into_iter().map(|k| (k, "1/3".to_string())).collect());
        assert_eq!(
            validate_environment::<Rational>(&file),
            vec![Diagnostic::PriorSum { sum: "4/3".into() }]
        );
    }

    #[test]
    fn duplicate_types_and_bad_rationals_are_reported() {
        let mut file = EnvironmentFile::from_json(fixtures::ENV_CONST).unwrap();
        file.types.insert("1".into(), vec!["a1".into(), "a1".into()]);
        let diags = validate_environment::<Rational>(&file);
        assert!(diags.contains(&Diagnostic::DuplicateType { player: "1".into(), label: "a1".into() }));

        let mut file = EnvironmentFile::from_json(fixtures::ENV_CONST).unwrap();
        file.utilities.insert("1|a1|x0".into(), "1/0".into());
        let diags = validate_environment::<Rational>(&file);
        assert_eq!(diags.len(), 1);
        assert!(matches!(diags[0], Diagnostic::MalformedRational { .. }));
    }

    #[test]
    fn conditional_belief_of_uniform_prior_is_uniform() {
        let env = fixtures::spa().uniform_prior();
        for t in 0..2 {
            let b = conditional_belief(&env, 0, t).unwrap();
            assert_eq!(b.weights.len(), 2);
            for w in b.weights.values() {
                assert_eq!(*w, Rational::from_ratio(1, 2));
            }
        }
    }

    #[test]
    fn conditional_belief_of_point_mass() {
        let env = fixtures::spa();
        let mut prior = vec![Rational::zero(); 4];
        prior[0] = Rational::from_ratio(1, 1);
        let env = env.with_prior(prior).unwrap();
        let b = conditional_belief(&env, 0, 0).unwrap();
        assert_eq!(b.weights.get(&vec![0]), Some(&Rational::from_ratio(1, 1)));
        assert_eq!(b.weights.get(&vec![1]), Some(&Rational::zero()));
        assert!(matches!(conditional_belief(&env, 0, 1), Err(ModelError::ZeroMarginal { .. })));
        assert!(matches!(conditional_belief(&fixtures::spa(), 0, 0), Err(ModelError::NoPrior)));
    }

    #[test]
    fn projections_and_rectangles() {
        let col = StateSet::new([st(&[0, 0]), st(&[0, 1])]).unwrap();
        assert_eq!(col.projection(0), &BTreeSet::from([0]));
        assert!(col.is_rectangle());
        let diag = StateSet::new([st(&[0, 0]), st(&[1, 1])]).unwrap();
        assert_eq!(diag.projection(1), &BTreeSet::from([0, 1]));
        assert!(!diag.is_rectangle());
        assert_eq!(diag.rectangle_hull().len(), 4);
        let full = fixtures::spa().full_set();
        assert!(full.is_rectangle());
        assert_eq!(full.projection(0), &BTreeSet::from([0, 1]));
        assert!(StateSet::new(Vec::<State>::new()).is_err());
    }

    #[test]
    fn splice_inverts_others() {
        let s = st(&[2, 0, 1]);
        for i in 0..3 {
            assert_eq!(State::splice(&s.others(i), i, s.component(i)), s);
        }
    }

    #[test]
    fn environment_round_trips_through_file() {
        for text in [fixtures::ENV_CONST, fixtures::ENV_SPA, fixtures::ENV_XOR] {
            let env = Environment::<Rational>::from_file(&EnvironmentFile::from_json(text).unwrap()).unwrap();
            let again = Environment::<Rational>::from_file(&env.to_file()).unwrap();
            assert_eq!(env, again);
            let json = env.to_file().to_json();
            assert_eq!(EnvironmentFile::from_json(&json).unwrap(), env.to_file());
        }
        let env = fixtures::spa().uniform_prior();
        assert_eq!(Environment::<Rational>::from_file(&env.to_file()).unwrap(), env);
    }
}
