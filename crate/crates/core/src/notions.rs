//! The five solution notions as executable predicates `ρ(θ, θ′, i, Ê)`.
//!
//! Every notion compares what type `θ_i` gets from reporting honestly against
//! what it gets from mimicking `θ′_i`, with opponents ranging over the
//! belief set `Ê_{-i}`. Only `θ_i`, `θ′_i`, `Ê_{-i}` and (for SOD) the
//! player's projection of the current operator cell enter the value.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Environment, Others, PlayerId, State, StateSet};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NotionId {
    Pbe,
    Wd,
    Mm,
    Od,
    Sod,
}

impl NotionId {
    pub const ALL: [NotionId; 5] = [NotionId::Pbe, NotionId::Wd, NotionId::Mm, NotionId::Od, NotionId::Sod];

    pub fn name(self) -> &'static str {
        match self {
            NotionId::Pbe => "PBE",
            NotionId::Wd => "WD",
            NotionId::Mm => "MM",
            NotionId::Od => "OD",
            NotionId::Sod => "SOD",
        }
    }

    /// The implementability concept this notion induces.
    pub fn concept(self) -> &'static str {
        match self {
            NotionId::Pbe => "pbe",
            NotionId::Wd => "sp",
            NotionId::Mm => "mm",
            NotionId::Od => "osp",
            NotionId::Sod => "sosp",
        }
    }

    pub fn needs_prior(self) -> bool {
        self == NotionId::Pbe
    }
}

impl fmt::Display for NotionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NotionId {
    type Err = NotionError;

    /// Accepts notion names (`od`) and concept names (`osp`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pbe" => Ok(NotionId::Pbe),
            "wd" | "sp" => Ok(NotionId::Wd),
            "mm" | "maxmin" => Ok(NotionId::Mm),
            "od" | "osp" => Ok(NotionId::Od),
            "sod" | "sosp" => Ok(NotionId::Sod),
            _ => Err(NotionError::UnknownNotion(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotionError {
    #[error("PBE needs a prior, and the environment has none")]
    MissingPrior,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported property check: {0}")]
    Unsupported(String),
    #[error("unknown notion {0:?}")]
    UnknownNotion(String),
}

/// Arguments of `ρ` besides the compared states.
#[derive(Clone, Copy, Debug)]
pub struct NotionContext<'a, S> {
    pub env: &'a Environment<S>,
    /// `γ[E, θ]`; read only by SOD.
    pub gamma_cell: Option<&'a StateSet>,
    /// `E`.
    pub ambient: &'a StateSet,
    /// `Ê`.
    pub belief: &'a StateSet,
}

/// `ρ(θ, θ′, i)` in the given context.
pub fn eval_notion<S: Scalar>(
    id: NotionId,
    ctx: &NotionContext<'_, S>,
    theta: &State,
    theta_prime: &State,
    i: PlayerId,
) -> Result<bool, NotionError> {
    if !ctx.ambient.contains(theta) || !ctx.ambient.contains(theta_prime) {
        return Err(NotionError::Precondition("compared states must lie in the ambient set".into()));
    }
    if i >= ctx.env.num_players() {
        return Err(NotionError::Precondition(format!("no player {i}")));
    }
    let gamma_proj = match (id, ctx.gamma_cell) {
        (NotionId::Sod, None) => {
            return Err(NotionError::Precondition("SOD needs the current operator cell".into()))
        }
        (NotionId::Sod, Some(cell)) if !cell.contains(theta) => {
            return Err(NotionError::Precondition("SOD needs θ inside the operator cell".into()))
        }
        (_, cell) => cell.map(|c| c.projection(i)),
    };
    rho(
        id,
        ctx.env,
        i,
        theta.component(i),
        theta_prime.component(i),
        &ctx.belief.others(i),
        gamma_proj,
    )
}

/// The reduced form of `ρ`: own type, mimicked type, opponents' belief
/// profiles and (SOD only) the cell projection `γ_i[E, θ]`.
pub fn rho<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    i: PlayerId,
    own: usize,
    mimic: usize,
    others: &BTreeSet<Others>,
    gamma_proj: Option<&BTreeSet<usize>>,
) -> Result<bool, NotionError> {
    let pay = |report: usize, rest: &Others| env.payoff(i, own, &State::splice(rest, i, report)).clone();
    let min_of = |report: usize| others.iter().map(|r| pay(report, r)).min();
    let max_of = |report: usize| others.iter().map(|r| pay(report, r)).max();
    let holds = match id {
        NotionId::Pbe => {
            let prior = env.prior().ok_or(NotionError::MissingPrior)?;
            let marginal = env
                .states()
                .iter()
                .zip(prior)
                .filter(|(s, _)| s.component(i) == own)
                .fold(S::zero(), |acc, (_, w)| acc + w.clone());
            if marginal.is_zero() {
                // μ^{θ_i} is undefined for a null type; nothing to lose.
                return Ok(true);
            }
            let mut total = S::zero();
            for rest in others {
                let weight = env.prior_of(&State::splice(rest, i, own)).expect("prior present").clone();
                total = total + (pay(own, rest) - pay(mimic, rest)) * weight / marginal.clone();
            }
            total >= S::zero()
        }
        NotionId::Wd => others.iter().all(|r| pay(own, r) >= pay(mimic, r)),
        NotionId::Mm => min_of(own) >= min_of(mimic),
        NotionId::Od => min_of(own) >= max_of(mimic),
        NotionId::Sod => {
            let proj = gamma_proj
                .ok_or_else(|| NotionError::Precondition("SOD needs the current operator cell".into()))?;
            let worst = proj.iter().filter_map(|&t| min_of(t)).min();
            worst >= max_of(mimic)
        }
    };
    Ok(holds)
}

/// Declared properties. `monotonic` is `None` where it is not asserted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NotionProperties {
    pub regular: bool,
    pub dissectible: bool,
    pub normal: bool,
    pub additive: bool,
    pub monotonic: Option<bool>,
}

pub fn properties_of(id: NotionId) -> NotionProperties {
    match id {
        NotionId::Pbe | NotionId::Wd | NotionId::Mm => NotionProperties {
            regular: true,
            dissectible: true,
            normal: true,
            additive: true,
            monotonic: None,
        },
        NotionId::Od => NotionProperties {
            regular: true,
            dissectible: true,
            normal: true,
            additive: false,
            monotonic: Some(true),
        },
        NotionId::Sod => NotionProperties {
            regular: false,
            dissectible: true,
            normal: true,
            additive: false,
            monotonic: Some(true),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Property {
    Regular,
    Dissectible,
    Normal,
    Additive,
    Monotonic,
}

impl FromStr for Property {
    type Err = NotionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regular" => Ok(Property::Regular),
            "dissectible" => Ok(Property::Dissectible),
            "normal" => Ok(Property::Normal),
            "additive" => Ok(Property::Additive),
            "monotonic" => Ok(Property::Monotonic),
            _ => Err(NotionError::Unsupported(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PropertyVerdict {
    Consistent { cases: usize, exhaustive: bool },
    Counterexample(String),
}

impl PropertyVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, PropertyVerdict::Consistent { .. })
    }
}

const EXHAUSTIVE_STATES: usize = 6;

/// Tests a property's defining implication on one environment.
///
/// Exhaustive when `|Θ| ≤ 6`; otherwise `samples` random instances drawn from
/// a fixed seed.
pub fn check_property_sampled<S: Scalar>(
    id: NotionId,
    env: &Environment<S>,
    property: Property,
    samples: usize,
) -> Result<PropertyVerdict, NotionError> {
    if id.needs_prior() && env.prior().is_none() {
        return Err(NotionError::MissingPrior);
    }
    let exhaustive = env.state_count() <= EXHAUSTIVE_STATES;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let states = env.states();
    let n = env.num_players();
    let mut cases = 0usize;
    let fail = |msg: String| -> Result<PropertyVerdict, NotionError> { Ok(PropertyVerdict::Counterexample(msg)) };

    // Candidate gamma projections for SOD: every nonempty subset of Θ_i containing θ_i.
    let gamma_projs = |i: PlayerId, own: usize| -> Vec<BTreeSet<usize>> {
        nonempty_subsets(env.type_count(i)).into_iter().filter(|s| s.contains(&own)).collect()
    };

    match property {
        Property::Dissectible => {
            return Err(NotionError::Unsupported(
                "dissectibility quantifies over every semi-operator and is not checked".into(),
            ))
        }
        Property::Regular => {
            let beliefs = candidate_sets(env, exhaustive, samples, &mut rng);
            for e_hat in &beliefs {
                for i in 0..n {
                    let others = e_hat.others(i);
                    for own in 0..env.type_count(i) {
                        for mimic in 0..env.type_count(i) {
                            let mut seen: Option<(bool, BTreeSet<usize>)> = None;
                            for g in gamma_projs(i, own) {
                                cases += 1;
                                let v = rho(id, env, i, own, mimic, &others, Some(&g))?;
                                match &seen {
                                    None => seen = Some((v, g)),
                                    Some((w, g0)) if *w != v => {
                                        return fail(format!(
                                            "player {} type {} vs {} on {}: value {} with cell projection {} but {} with {}",
                                            env.players()[i],
                                            env.type_labels(i)[own],
                                            env.type_labels(i)[mimic],
                                            env.set_label(e_hat),
                                            *w as u8,
                                            env.type_set_label(i, g0),
                                            v as u8,
                                            env.type_set_label(i, &g)
                                        ))
                                    }
                                    _ => {}
                                }
                            }
                        }
                    }
                }
            }
        }
        Property::Normal => {
            for e in candidate_rectangles(env) {
                if !env.is_scf_constant_on(&e) {
                    continue;
                }
                for theta in e.iter() {
                    for theta_prime in e.iter() {
                        for i in 0..n {
                            cases += 1;
                            let ctx = NotionContext { env, gamma_cell: Some(&e), ambient: &e, belief: &e };
                            if !eval_notion(id, &ctx, theta, theta_prime, i)? {
                                return fail(format!(
                                    "f constant on {} yet ρ = 0 at {} vs {} for player {}",
                                    env.set_label(&e),
                                    env.state_label(theta),
                                    env.state_label(theta_prime),
                                    env.players()[i]
                                ));
                            }
                        }
                    }
                }
            }
        }
        Property::Additive => {
            let full = env.full_set();
            let partitions: Vec<Vec<StateSet>> = if exhaustive {
                set_partitions(states.len())
                    .into_iter()
                    .map(|p| blocks_to_sets(states, &p))
                    .collect()
            } else {
                (0..samples).map(|_| blocks_to_sets(states, &random_partition(states.len(), &mut rng))).collect()
            };
            for part in &partitions {
                for i in 0..n {
                    for own in 0..env.type_count(i) {
                        let proj = BTreeSet::from([own]);
                        for mimic in 0..env.type_count(i) {
                            cases += 1;
                            let mut all_blocks = true;
                            for block in part {
                                if !rho(id, env, i, own, mimic, &block.others(i), Some(&proj))? {
                                    all_blocks = false;
                                    break;
                                }
                            }
                            if all_blocks && !rho(id, env, i, own, mimic, &full.others(i), Some(&proj))? {
                                let blocks: Vec<String> = part.iter().map(|b| env.set_label(b)).collect();
                                return fail(format!(
                                    "player {} type {} vs {}: ρ = 1 on every block of {} but 0 on Θ",
                                    env.players()[i],
                                    env.type_labels(i)[own],
                                    env.type_labels(i)[mimic],
                                    blocks.join(" | ")
                                ));
                            }
                        }
                    }
                }
            }
        }
        Property::Monotonic => {
            let sets = candidate_sets(env, exhaustive, samples, &mut rng);
            for small in &sets {
                for large in &sets {
                    if !small.is_subset(large) {
                        continue;
                    }
                    for i in 0..n {
                        let (so, lo) = (small.others(i), large.others(i));
                        for own in 0..env.type_count(i) {
                            for g in gamma_projs(i, own) {
                                for mimic in 0..env.type_count(i) {
                                    cases += 1;
                                    let before = rho(id, env, i, own, mimic, &so, Some(&g))?;
                                    if !before && rho(id, env, i, own, mimic, &lo, Some(&g))? {
                                        return fail(format!(
                                            "player {} type {} vs {}: ρ = 0 on {} but 1 on {}",
                                            env.players()[i],
                                            env.type_labels(i)[own],
                                            env.type_labels(i)[mimic],
                                            env.set_label(small),
                                            env.set_label(large)
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(PropertyVerdict::Consistent { cases, exhaustive })
}

fn candidate_sets<S: Scalar>(env: &Environment<S>, exhaustive: bool, samples: usize, rng: &mut ChaCha8Rng) -> Vec<StateSet> {
    let states = env.states();
    if exhaustive {
        return nonempty_subsets(states.len())
            .into_iter()
            .map(|ix| StateSet::new(ix.into_iter().map(|k| states[k].clone())).expect("nonempty"))
            .collect();
    }
    let mut out: Vec<StateSet> = (0..samples)
        .map(|_| {
            let mut picked: Vec<State> = states.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
            if picked.is_empty() {
                picked.push(states.choose(rng).expect("Θ nonempty").clone());
            }
            StateSet::new(picked).expect("nonempty")
        })
        .collect();
    out.push(env.full_set());
    out
}

fn candidate_rectangles<S: Scalar>(env: &Environment<S>) -> Vec<StateSet> {
    let mut rects = vec![Vec::new()];
    for i in 0..env.num_players() {
        let subsets = nonempty_subsets(env.type_count(i));
        rects = rects
            .into_iter()
            .flat_map(|prefix: Vec<BTreeSet<usize>>| {
                subsets.iter().map(move |s| {
                    let mut p = prefix.clone();
                    p.push(s.clone());
                    p
                })
            })
            .collect();
        if rects.len() > 4096 {
            break;
        }
    }
    rects
        .into_iter()
        .filter(|r| r.len() == env.num_players())
        .map(|r| StateSet::product(&r).expect("nonempty components"))
        .collect()
}

/// All nonempty subsets of `{0, .., n-1}`.
pub fn nonempty_subsets(n: usize) -> Vec<BTreeSet<usize>> {
    (1u64..(1u64 << n)).map(|mask| (0..n).filter(|k| mask >> k & 1 == 1).collect()).collect()
}

/// All set partitions of `{0, .., n-1}` as block-index vectors in restricted
/// growth form.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if k == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            go(k + 1, n, cur, max.max(b), out);
            cur.pop();
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut cur = vec![0];
    go(1, n, &mut cur, 0, &mut out);
    out
}

fn random_partition(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let blocks = rng.gen_range(1..=n);
    (0..n).map(|_| rng.gen_range(0..blocks)).collect()
}

fn blocks_to_sets(states: &[State], assignment: &[usize]) -> Vec<StateSet> {
    let count = assignment.iter().max().map_or(0, |m| m + 1);
    (0..count)
        .filter_map(|b| {
            StateSet::new(states.iter().zip(assignment).filter(|(_, &a)| a == b).map(|(s, _)| s.clone())).ok()
        })
        .collect()
}
