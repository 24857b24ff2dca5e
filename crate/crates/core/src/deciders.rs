//! Implementability verdicts with re-verified certificates.
//!
//! Additive notions (WD, PBE, MM) are decided by their inequality system on
//! the full type space and certified by the direct mechanism. Monotonic
//! notions (OD, SOD) are decided by achievability of the canonical operator
//! and certified by the synthesized disclosure game. A positive verdict is
//! only returned after the certificate passes the definitional checker.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::canonical::{CanonicalError, CanonicalOperator, Merge};
use crate::game::{check_definitional, check_gspc, check_implements, DefinitionalLimits, DefinitionalVerdict, GameError, GameTree, StrategyProfile};
use crate::model::{Environment, PlayerId, State, StateSet};
use crate::notions::{properties_of, rho, NotionError, NotionId};
use crate::scalar::Scalar;
use crate::synthesis::{direct_mechanism, synthesize_with, SynthesisError, SynthesizedGame};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeciderError {
    #[error(transparent)]
    Notion(#[from] NotionError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("{0} has neither an additive nor a monotonic route")]
    NoRoute(NotionId),
    #[error("certificate rejected for {notion}: {reason}")]
    CertificateRejected { notion: NotionId, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Additive,
    Monotonic,
}

/// One `(i, θ_i, θ′_i)` comparison on the full type space. `lhs` and `rhs`
/// are the two compared quantities: honest minus mimic margin against zero
/// (WD worst case, PBE expectation) or honest against mimic minimum (MM).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InequalityRow {
    pub player: PlayerId,
    pub own_type: usize,
    pub mimic: usize,
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InequalityViolation {
    pub player: String,
    pub own_type: String,
    pub mimic: String,
    pub lhs: String,
    pub rhs: String,
}

impl fmt::Display for InequalityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "player {} type {} gains by reporting {} ({} < {})",
            self.player, self.own_type, self.mimic, self.lhs, self.rhs
        )
    }
}

/// The additive inequality system at `(Θ, Θ)`.
pub fn inequality_table<S: Scalar>(env: &Environment<S>, id: NotionId) -> Result<Vec<InequalityRow>, NotionError> {
    if matches!(id, NotionId::Od | NotionId::Sod) {
        return Err(NotionError::Precondition(format!("{id} has no additive inequality system")));
    }
    let full = env.full_set();
    let mut rows = Vec::new();
    for i in 0..env.num_players() {
        let others = full.others(i);
        for own in 0..env.type_count(i) {
            for mimic in 0..env.type_count(i) {
                if own == mimic {
                    continue;
                }
                let holds = rho(id, env, i, own, mimic, &others, None)?;
                let pay = |report: usize, rest: &Vec<usize>| env.payoff(i, own, &State::splice(rest, i, report)).clone();
                let (lhs, rhs) = match id {
                    NotionId::Wd => {
                        let worst = others.iter().map(|r| pay(own, r) - pay(mimic, r)).min().unwrap_or_else(S::zero);
                        (worst, S::zero())
                    }
                    NotionId::Mm => (
                        others.iter().map(|r| pay(own, r)).min().unwrap_or_else(S::zero),
                        others.iter().map(|r| pay(mimic, r)).min().unwrap_or_else(S::zero),
                    ),
                    _ => {
                        let mut total = S::zero();
                        for r in &others {
                            let w = env.prior_of(&State::splice(r, i, own)).expect("prior present").clone();
                            total = total + (pay(own, r) - pay(mimic, r)) * w;
                        }
                        (total, S::zero())
                    }
                };
                rows.push(InequalityRow { player: i, own_type: own, mimic, lhs: lhs.render(), rhs: rhs.render(), holds });
            }
        }
    }
    Ok(rows)
}

/// The first failing row of the additive system, if any.
pub fn additive_violation<S: Scalar>(env: &Environment<S>, id: NotionId) -> Result<Option<InequalityViolation>, NotionError> {
    Ok(inequality_table(env, id)?.into_iter().find(|r| !r.holds).map(|r| InequalityViolation {
        player: env.players()[r.player].clone(),
        own_type: env.type_labels(r.player)[r.own_type].clone(),
        mimic: env.type_labels(r.player)[r.mimic].clone(),
        lhs: r.lhs,
        rhs: r.rhs,
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certificate {
    /// The satisfied inequality system and the direct mechanism that passed.
    InequalityTable { rows: Vec<InequalityRow>, tree: GameTree, profile: StrategyProfile },
    /// The disclosure game; `rounds` is the largest fixed-point round.
    Disclosure { game: Box<SynthesizedGame>, rounds: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Refutation {
    Inequality(InequalityViolation),
    FixedPoint { state: State, fixed_point: StateSet, round: usize, earliest_merge: Option<Merge> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub notion: NotionId,
    pub route: Route,
    pub implementable: bool,
    pub certificate: Option<Certificate>,
    pub refutation: Option<Refutation>,
}

impl Verdict {
    /// `"within perfect-recall games"` for the notions whose route is only
    /// known to be exact there.
    pub fn scope(&self) -> Option<&'static str> {
        matches!(self.notion, NotionId::Pbe | NotionId::Mm).then_some("within perfect-recall games")
    }

    /// Largest fixed-point round of the disclosure certificate.
    pub fn rounds(&self) -> Option<usize> {
        match &self.certificate {
            Some(Certificate::Disclosure { rounds, .. }) => Some(*rounds),
            _ => None,
        }
    }

    pub fn route_description(&self) -> String {
        match (self.route, &self.certificate) {
            (Route::Additive, _) => format!(
                "additive route: {} inequalities on the full type space {}",
                self.notion,
                if self.implementable { "hold, direct mechanism verified" } else { "fail" }
            ),
            (Route::Monotonic, Some(Certificate::Disclosure { rounds, .. })) => {
                format!("monotonic route: canonical {} operator achievable, N={rounds}", self.notion)
            }
            (Route::Monotonic, _) => format!("monotonic route: canonical {} operator not achievable", self.notion),
        }
    }

    pub fn render<S: Scalar>(&self, env: &Environment<S>) -> String {
        let mut out = format!(
            "{} ({}): {}\n  {}\n",
            self.notion.concept(),
            self.notion,
            if self.implementable { "implementable" } else { "not implementable" },
            self.route_description()
        );
        if let Some(scope) = self.scope() {
            out.push_str(&format!("  scope: {scope}\n"));
        }
        match &self.refutation {
            Some(Refutation::Inequality(v)) => out.push_str(&format!("  refutation: {v}\n")),
            Some(Refutation::FixedPoint { state, fixed_point, round, earliest_merge }) => {
                out.push_str(&format!(
                    "  refutation: {} stops at {} after round {}\n",
                    env.state_label(state),
                    env.set_label(fixed_point),
                    round
                ));
                if let Some(m) = earliest_merge {
                    out.push_str(&format!(
                        "  earliest merge: player {} type {} is tempted by type {}\n",
                        env.players()[m.player],
                        env.type_labels(m.player)[m.tempted_type],
                        env.type_labels(m.player)[m.mimicked_type]
                    ));
                }
            }
            None => {}
        }
        if let Some(Certificate::Disclosure { game, .. }) = &self.certificate {
            let theta = env.states().last().expect("nonempty type space");
            let order: Vec<String> = (1..=game.schedule.rounds_of(theta))
                .map(|n| {
                    let names: Vec<&str> = game.schedule.active(theta, n).iter().map(|&i| env.players()[i].as_str()).collect();
                    names.join(" and ")
                })
                .collect();
            out.push_str(&format!("  round order at {}: {}\n", env.state_label(theta), order.join(", then ")));
        }
        out
    }
}

pub fn route_of(id: NotionId) -> Result<Route, DeciderError> {
    let p = properties_of(id);
    if p.additive {
        Ok(Route::Additive)
    } else if p.monotonic == Some(true) {
        Ok(Route::Monotonic)
    } else {
        Err(DeciderError::NoRoute(id))
    }
}

fn reject(notion: NotionId, reason: impl Into<String>) -> DeciderError {
    DeciderError::CertificateRejected { notion, reason: reason.into() }
}

/// Definitional and structural re-check of a certificate game.
pub fn verify_certificate<S: Scalar>(
    env: &Environment<S>,
    id: NotionId,
    tree: &GameTree,
    profile: &StrategyProfile,
    limits: DefinitionalLimits,
) -> Result<(), DeciderError> {
    if !check_implements(env, tree, profile)? {
        return Err(reject(id, "the game does not implement f"));
    }
    let report = check_gspc(env, tree, profile)?;
    if !report.perfect_recall || !report.all_terminals_reached {
        return Err(reject(id, report.problems.join("; ")));
    }
    match check_definitional(id, env, tree, profile, limits)? {
        DefinitionalVerdict::Holds { .. } => Ok(()),
        DefinitionalVerdict::Fails(cx) => Err(reject(id, cx.detail)),
    }
}

pub fn decide_generic<S: Scalar>(env: &Environment<S>, id: NotionId) -> Result<Verdict, DeciderError> {
    decide_with_limits(env, id, DefinitionalLimits::default())
}

pub fn decide_with_limits<S: Scalar>(
    env: &Environment<S>,
    id: NotionId,
    limits: DefinitionalLimits,
) -> Result<Verdict, DeciderError> {
    match route_of(id)? {
        Route::Additive => decide_additive(env, id, limits),
        Route::Monotonic => decide_monotonic(env, id, limits),
    }
}

fn decide_additive<S: Scalar>(env: &Environment<S>, id: NotionId, limits: DefinitionalLimits) -> Result<Verdict, DeciderError> {
    let rows = inequality_table(env, id)?;
    if let Some(v) = additive_violation(env, id)? {
        return Ok(Verdict {
            notion: id,
            route: Route::Additive,
            implementable: false,
            certificate: None,
            refutation: Some(Refutation::Inequality(v)),
        });
    }
    let (tree, profile) = direct_mechanism(env)?;
    verify_certificate(env, id, &tree, &profile, limits)?;
    Ok(Verdict {
        notion: id,
        route: Route::Additive,
        implementable: true,
        certificate: Some(Certificate::InequalityTable { rows, tree, profile }),
        refutation: None,
    })
}

fn decide_monotonic<S: Scalar>(env: &Environment<S>, id: NotionId, limits: DefinitionalLimits) -> Result<Verdict, DeciderError> {
    let op = CanonicalOperator::new(id, env)?;
    let ach = crate::canonical::achievability_of(&op)?;
    if let Some(r) = ach.refutation {
        return Ok(Verdict {
            notion: id,
            route: Route::Monotonic,
            implementable: false,
            certificate: None,
            refutation: Some(Refutation::FixedPoint {
                state: r.state,
                fixed_point: r.fixed_point,
                round: r.round,
                earliest_merge: r.earliest_merge,
            }),
        });
    }
    let game = synthesize_with(&op)?;
    verify_certificate(env, id, &game.tree, &game.profile, limits)?;
    Ok(Verdict {
        notion: id,
        route: Route::Monotonic,
        implementable: true,
        certificate: Some(Certificate::Disclosure { game: Box::new(game), rounds: ach.rounds.unwrap_or(1) }),
        refutation: None,
    })
}

pub fn decide_sp<S: Scalar>(env: &Environment<S>) -> Result<Verdict, DeciderError> {
    decide_generic(env, NotionId::Wd)
}

pub fn decide_pbe<S: Scalar>(env: &Environment<S>) -> Result<Verdict, DeciderError> {
    decide_generic(env, NotionId::Pbe)
}

pub fn decide_maxmin<S: Scalar>(env: &Environment<S>) -> Result<Verdict, DeciderError> {
    decide_generic(env, NotionId::Mm)
}

pub fn decide_osp<S: Scalar>(env: &Environment<S>) -> Result<Verdict, DeciderError> {
    decide_generic(env, NotionId::Od)
}

pub fn decide_sosp<S: Scalar>(env: &Environment<S>) -> Result<Verdict, DeciderError> {
    decide_generic(env, NotionId::Sod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn named_verdicts() {
        let spa = fixtures::spa();
        assert!(decide_sp(&spa).unwrap().implementable);
        assert!(decide_maxmin(&spa).unwrap().implementable);
        assert!(decide_pbe(&spa.uniform_prior()).unwrap().implementable);
        let osp = decide_osp(&spa).unwrap();
        assert!(osp.implementable);
        assert_eq!(osp.rounds(), Some(2));
        assert_eq!(inequality_table(&spa, NotionId::Wd).unwrap().len(), 4);

        let xor = fixtures::xor();
        assert!(decide_sp(&xor).unwrap().implementable);
        assert!(decide_maxmin(&xor).unwrap().implementable);
        let osp = decide_osp(&xor).unwrap();
        assert!(!osp.implementable);
        match osp.refutation {
            Some(Refutation::FixedPoint { fixed_point, .. }) => assert_eq!(fixed_point, xor.full_set()),
            r => panic!("unexpected refutation {r:?}"),
        }
        assert!(!decide_sosp(&xor).unwrap().implementable);

        let c = fixtures::constant();
        for id in NotionId::ALL {
            assert!(decide_generic(&c, id).unwrap().implementable, "{id}");
        }
        assert_eq!(decide_osp(&c).unwrap().rounds(), Some(1));
    }

    #[test]
    fn perturbed_spa_fails_bic() {
        let spa = fixtures::spa().uniform_prior();
        let mut file = spa.to_file();
        // Type 3 of player 1 now loves losing at price 1.
        file.utilities.insert("1|3|w2p1".into(), "5".into());
        let env: Environment<crate::Rational> = Environment::from_file(&file).unwrap();
        let v = decide_pbe(&env).unwrap();
        assert!(!v.implementable);
        match v.refutation {
            Some(Refutation::Inequality(r)) => assert_eq!((r.player.as_str(), r.own_type.as_str(), r.mimic.as_str()), ("1", "3", "1")),
            r => panic!("unexpected refutation {r:?}"),
        }
    }

    #[test]
    fn missing_prior_is_an_error() {
        let spa = fixtures::spa();
        if spa.prior().is_none() {
            assert!(matches!(decide_pbe(&spa), Err(DeciderError::Notion(NotionError::MissingPrior))));
        }
    }
}
