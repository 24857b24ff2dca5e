#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::Zero;
use seqmech::oracle::{random_environment, RandomShape};
use seqmech::{fixtures, Environment, NotionId, PlayerId, Rational, State, StateSet};

pub struct Instance {
    pub name: String,
    pub env: Environment<Rational>,
}

/// 150 default-shape and 150 coarse-shape seeded environments.
pub fn random_instances() -> Vec<Instance> {
    let mut out = Vec::new();
    for seed in 0..150u64 {
        out.push(Instance { name: format!("seed {seed}"), env: random_environment(seed, RandomShape::default()) });
    }
    for seed in 150..300u64 {
        out.push(Instance { name: format!("coarse seed {seed}"), env: random_environment(seed, RandomShape::coarse()) });
    }
    out
}

/// The three fixtures, each with a uniform prior.
pub fn named_instances() -> Vec<Instance> {
    vec![
        Instance { name: "ENV-CONST".into(), env: fixtures::constant().uniform_prior() },
        Instance { name: "ENV-SPA".into(), env: fixtures::spa().uniform_prior() },
        Instance { name: "ENV-XOR".into(), env: fixtures::xor().uniform_prior() },
    ]
}

pub fn all_instances() -> Vec<Instance> {
    let mut v = random_instances();
    v.extend(named_instances());
    v
}

pub const ALL_NOTIONS: [NotionId; 5] = [NotionId::Pbe, NotionId::Wd, NotionId::Mm, NotionId::Od, NotionId::Sod];

fn u(env: &Environment<Rational>, i: PlayerId, own: usize, s: &State) -> Rational {
    env.utility(i, own, env.scf(s)).clone()
}

/// Opponent profiles of `i` in the full type space.
fn rests(env: &Environment<Rational>, i: PlayerId) -> BTreeSet<Vec<usize>> {
    env.states().iter().map(|s| s.others(i)).collect()
}

/// Truth-telling is weakly dominant in the direct mechanism.
pub fn brute_sp(env: &Environment<Rational>) -> bool {
    env.states().iter().all(|s| {
        (0..env.num_players()).all(|i| {
            (0..env.type_count(i)).all(|t| u(env, i, s.0[i], s) >= u(env, i, s.0[i], &s.with_component(i, t)))
        })
    })
}

/// Truth-telling maximizes each type's worst case over opponent profiles.
pub fn brute_mm(env: &Environment<Rational>) -> bool {
    (0..env.num_players()).all(|i| {
        let rs = rests(env, i);
        (0..env.type_count(i)).all(|own| {
            let worst = |report: usize| rs.iter().map(|r| u(env, i, own, &State::splice(r, i, report))).min();
            (0..env.type_count(i)).all(|m| worst(own) >= worst(m))
        })
    })
}

/// Bayesian incentive compatibility under the prior, unnormalized.
pub fn brute_pbe(env: &Environment<Rational>) -> bool {
    let prior = env.prior().expect("prior");
    (0..env.num_players()).all(|i| {
        (0..env.type_count(i)).all(|own| {
            (0..env.type_count(i)).all(|m| {
                let mut gain = Rational::zero();
                for (s, w) in env.states().iter().zip(prior) {
                    if s.0[i] == own {
                        gain += (u(env, i, own, s) - u(env, i, own, &s.with_component(i, m))) * w.clone();
                    }
                }
                gain >= Rational::zero()
            })
        })
    })
}

/// `ρ` recomputed from raw utilities with belief `E`.
pub fn local_rho(
    id: NotionId,
    env: &Environment<Rational>,
    e: &StateSet,
    i: PlayerId,
    own: usize,
    mimic: usize,
    own_block: &BTreeSet<usize>,
) -> bool {
    let rs: Vec<Vec<usize>> = e.iter().map(|s| s.others(i)).collect::<BTreeSet<_>>().into_iter().collect();
    let vals = |report: usize| -> Vec<Rational> { rs.iter().map(|r| u(env, i, own, &State::splice(r, i, report))).collect() };
    let min = |v: Vec<Rational>| v.into_iter().min().expect("nonempty");
    let max = |v: Vec<Rational>| v.into_iter().max().expect("nonempty");
    match id {
        NotionId::Wd => vals(own).iter().zip(vals(mimic)).all(|(a, b)| *a >= b),
        NotionId::Mm => min(vals(own)) >= min(vals(mimic)),
        NotionId::Od => min(vals(own)) >= max(vals(mimic)),
        NotionId::Sod => own_block.iter().map(|&t| min(vals(t))).min().expect("nonempty") >= max(vals(mimic)),
        NotionId::Pbe => {
            let prior = |s: &State| env.prior_of(s).expect("prior").clone();
            let marginal: Rational = env.states().iter().filter(|s| s.0[i] == own).map(prior).sum();
            if marginal.is_zero() {
                return true;
            }
            let gain: Rational = rs
                .iter()
                .map(|r| {
                    let s = State::splice(r, i, own);
                    (u(env, i, own, &s) - u(env, i, own, &s.with_component(i, mimic))) * prior(&s)
                })
                .sum();
            gain >= Rational::zero()
        }
    }
}

/// States reachable from `theta` within `steps` moves of player `i`'s
/// similarity relation at the given stage, staying inside `e`.
pub fn bfs_within(
    id: NotionId,
    env: &Environment<Rational>,
    e: &StateSet,
    stage: &BTreeMap<State, StateSet>,
    theta: &State,
    i: PlayerId,
    steps: usize,
) -> BTreeSet<State> {
    let tempted = |a: &State, b: &State| {
        !local_rho(id, env, e, i, a.0[i], b.0[i], stage[a].projection(i))
    };
    let related = |a: &State, b: &State| a.0[i] == b.0[i] || tempted(a, b) || tempted(b, a);
    let mut dist: BTreeMap<State, usize> = BTreeMap::from([(theta.clone(), 0)]);
    let mut queue = VecDeque::from([theta.clone()]);
    while let Some(a) = queue.pop_front() {
        let d = dist[&a];
        if d == steps {
            continue;
        }
        for b in e.iter() {
            if !dist.contains_key(b) && related(&a, b) {
                dist.insert(b.clone(), d + 1);
                queue.push_back(b.clone());
            }
        }
    }
    dist.into_keys().collect()
}

/// All product subsets of the type space.
pub fn rectangles(env: &Environment<Rational>) -> Vec<StateSet> {
    let mut choices: Vec<Vec<BTreeSet<usize>>> = Vec::new();
    for i in 0..env.num_players() {
        let n = env.type_count(i);
        choices.push((1..(1usize << n)).map(|m| (0..n).filter(|t| m >> t & 1 == 1).collect()).collect());
    }
    let mut out = vec![Vec::new()];
    for opts in &choices {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<BTreeSet<usize>>| {
                opts.iter().map(move |o| {
                    let mut p = prefix.clone();
                    p.push(o.clone());
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(|c| StateSet::product(&c).expect("nonempty")).collect()
}
