//! Three small named environments used by the tests, docs and CLI examples.

use crate::model::{Environment, EnvironmentFile};
use crate::Rational;

/// Two players, two types each, one outcome, all utilities zero.
pub const ENV_CONST: &str = include_str!("../fixtures/env-const.json");
/// Second-price auction with values {1,3}; ties go to player 1.
pub const ENV_SPA: &str = include_str!("../fixtures/env-spa.json");
/// Strategyproof but with every player tempted at the full type space.
pub const ENV_XOR: &str = include_str!("../fixtures/env-xor.json");

fn load(text: &str) -> Environment<Rational> {
    let file = EnvironmentFile::from_json(text).expect("fixture parses");
    Environment::from_file(&file).expect("fixture is valid")
}

pub fn constant() -> Environment<Rational> {
    load(ENV_CONST)
}

pub fn spa() -> Environment<Rational> {
    load(ENV_SPA)
}

pub fn xor() -> Environment<Rational> {
    load(ENV_XOR)
}
