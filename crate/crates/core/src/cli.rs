//! The `seqmech` command line.
//!
//! Exit codes: 0 affirmative, 1 negative verdict, 2 input error or exceeded
//! limit, 3 internal disagreement between a decider and its referee.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::canonical::{render_traces, CanonicalOperator};
use crate::deciders::{decide_generic, inequality_table, Certificate, DeciderError, Refutation, Verdict};
use crate::game::{DefinitionalLimits, DefinitionalVerdict, GameError, GameFile};
use crate::model::{Environment, EnvironmentFile};
use crate::notions::{properties_of, rho, NotionError, NotionId};
use crate::oracle::{cross_check, protocol_game, protocol_search, random_environment, verify_game, OracleError, ProtocolLimits, RandomShape};
use crate::synthesis::{synthesize_direct_mechanism, synthesize_with, SynthesisError};
use crate::Rational;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "seqmech", version, about = "Implementability of social choice functions by sequential mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide implementability for one notion or all of them.
    Check {
        env: PathBuf,
        #[arg(long, default_value = "all")]
        notion: String,
        #[command(flatten)]
        output: Output,
    },
    /// Build an implementing mechanism and write it as a game file.
    Synthesize {
        env: PathBuf,
        #[arg(long)]
        notion: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Check a game and strategy profile against a notion's definition.
    Verify {
        env: PathBuf,
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        notion: String,
        #[arg(long)]
        json: bool,
    },
    /// Exhaustive protocol search, cross-checked against the decider.
    Oracle {
        /// Environment file; omit when generating one with --seed.
        env: Option<PathBuf>,
        #[arg(long)]
        notion: String,
        #[arg(long, default_value_t = 12)]
        limit: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Temptation table on the full type space and canonical traces.
    Explain {
        env: PathBuf,
        #[arg(long)]
        notion: String,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
struct Output {
    #[arg(long)]
    json: bool,
    #[arg(long)]
    trace: bool,
}

/// A failure that ends the command with a given exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<NotionError> for Failure {
    fn from(e: NotionError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<DeciderError> for Failure {
    fn from(e: DeciderError) -> Self {
        let code = if matches!(e, DeciderError::CertificateRejected { .. }) { 3 } else { 2 };
        Failure { code, message: e.to_string() }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Decider(d) => d.into(),
            other => Failure::input(other.to_string()),
        }
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::NotAchievable { .. } | SynthesisError::InequalitiesFail { .. } => {
                Failure { code: 1, message: e.to_string() }
            }
            other => Failure::input(other.to_string()),
        }
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Check { env, notion, output } => check(&env, &notion, &output, out),
        Command::Synthesize { env, notion, out: path, json } => synthesize(&env, &notion, path.as_deref(), json, out),
        Command::Verify { env, game, notion, json } => verify(&env, &game, &notion, json, out),
        Command::Oracle { env, notion, limit, seed, json } => oracle(env.as_deref(), &notion, limit, seed, json, out),
        Command::Explain { env, notion, output } => explain(&env, &notion, &output, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn load_environment(path: &Path) -> Result<Environment<Rational>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file = EnvironmentFile::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Environment::from_file(&file).map_err(|e| format!("{}: {e}", path.display()))
}

fn environment(path: &Path) -> Result<Environment<Rational>, Failure> {
    load_environment(path).map_err(Failure::input)
}

fn parse_notion(s: &str) -> Result<NotionId, Failure> {
    s.parse::<NotionId>().map_err(Failure::from)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure::input(format!("cannot write output: {e}")))
}

fn emit_json(out: &mut dyn Write, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    emit(out, &format!("{text}\n"))
}

fn verdict_json(env: &Environment<Rational>, v: &Verdict) -> Value {
    let refutation = match &v.refutation {
        None => Value::Null,
        Some(Refutation::Inequality(i)) => json!({
            "kind": "inequality",
            "player": i.player,
            "type": i.own_type,
            "mimic": i.mimic,
            "lhs": i.lhs,
            "rhs": i.rhs,
        }),
        Some(Refutation::FixedPoint { state, fixed_point, round, earliest_merge }) => json!({
            "kind": "fixed_point",
            "state": env.state_label(state),
            "fixed_point": env.set_label(fixed_point),
            "round": round,
            "earliest_merge": earliest_merge.as_ref().map(|m| json!({
                "player": env.players()[m.player],
                "tempted_type": env.type_labels(m.player)[m.tempted_type],
                "mimicked_type": env.type_labels(m.player)[m.mimicked_type],
            })),
        }),
    };
    let certificate = match &v.certificate {
        None => Value::Null,
        Some(Certificate::InequalityTable { rows, tree, .. }) => json!({
            "kind": "inequality_table",
            "rows": rows.iter().map(|r| json!({
                "player": env.players()[r.player],
                "type": env.type_labels(r.player)[r.own_type],
                "mimic": env.type_labels(r.player)[r.mimic],
                "lhs": r.lhs,
                "rhs": r.rhs,
                "holds": r.holds,
            })).collect::<Vec<_>>(),
            "direct_mechanism_nodes": tree.len(),
        }),
        Some(Certificate::Disclosure { game, rounds }) => json!({
            "kind": "disclosure_game",
            "rounds": rounds,
            "nodes": game.tree.len(),
            "schedule": game.schedule.rounds.iter().map(|(s, rs)| json!({
                "state": env.state_label(s),
                "rounds": rs.iter().map(|r| r.iter().map(|a| json!({
                    "player": env.players()[a.player],
                    "announces": env.type_set_label(a.player, &a.types),
                })).collect::<Vec<_>>()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "diagnostics": game.diagnostics,
        }),
    };
    json!({
        "notion": v.notion.name(),
        "concept": v.notion.concept(),
        "implementable": v.implementable,
        "route": v.route,
        "route_description": v.route_description(),
        "scope": v.scope(),
        "refutation": refutation,
        "certificate": certificate,
    })
}

fn requested_notions(s: &str) -> Result<Vec<NotionId>, Failure> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(vec![NotionId::Wd, NotionId::Pbe, NotionId::Mm, NotionId::Od, NotionId::Sod]);
    }
    s.split(',').map(|p| parse_notion(p.trim())).collect()
}

fn check(path: &Path, notion: &str, output: &Output, out: &mut dyn Write) -> Result<i32, Failure> {
    let all = notion.eq_ignore_ascii_case("all");
    let notions = requested_notions(notion)?;
    let env = environment(path)?;
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    for id in notions {
        if id.needs_prior() && env.prior().is_none() && all {
            skipped.push(id);
            continue;
        }
        verdicts.push(decide_generic(&env, id)?);
    }
    let code = if verdicts.iter().all(|v| v.implementable) { 0 } else { 1 };
    if output.json {
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "check",
            "verdicts": verdicts.iter().map(|v| verdict_json(&env, v)).collect::<Vec<_>>(),
            "skipped": skipped.iter().map(|id| json!({"notion": id.name(), "reason": "no prior"})).collect::<Vec<_>>(),
        });
        if output.trace {
            doc["traces"] = traces_json(&env, &verdicts)?;
        }
        emit_json(out, &doc)?;
        return Ok(code);
    }
    let mut text = String::new();
    for v in &verdicts {
        text.push_str(&v.render(&env));
        if output.trace {
            if let Some(Certificate::Disclosure { game, .. }) = &v.certificate {
                text.push_str(&indent(&game.schedule.render(&env)));
            }
            if v.route == crate::deciders::Route::Monotonic {
                let op = CanonicalOperator::new(v.notion, &env).map_err(|e| Failure::input(e.to_string()))?;
                let traces = op.all_traces().map_err(|e| Failure::input(e.to_string()))?;
                text.push_str(&indent(&render_traces(&env, &traces)));
            }
        }
    }
    for id in skipped {
        text.push_str(&format!("{} ({}): skipped, the environment has no prior\n", id.concept(), id));
    }
    emit(out, &text)?;
    Ok(code)
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}\n")).collect()
}

fn traces_json(env: &Environment<Rational>, verdicts: &[Verdict]) -> Result<Value, Failure> {
    let mut doc = serde_json::Map::new();
    for v in verdicts.iter().filter(|v| v.route == crate::deciders::Route::Monotonic) {
        let op = CanonicalOperator::new(v.notion, env).map_err(|e| Failure::input(e.to_string()))?;
        let traces = op.all_traces().map_err(|e| Failure::input(e.to_string()))?;
        let rows: Vec<Value> = traces
            .values()
            .map(|t| {
                json!({
                    "state": env.state_label(&t.state),
                    "fixed_point_round": t.fixed_point_round,
                    "sets": t.sets.iter().map(|e| env.set_label(e)).collect::<Vec<_>>(),
                })
            })
            .collect();
        doc.insert(v.notion.name().to_string(), Value::Array(rows));
    }
    Ok(Value::Object(doc))
}

fn synthesize(path: &Path, notion: &str, target: Option<&Path>, json_out: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let id = parse_notion(notion)?;
    let env = environment(path)?;
    let (tree, profile, diagnostics) = match id {
        NotionId::Od | NotionId::Sod => {
            let op = CanonicalOperator::new(id, &env).map_err(|e| Failure::input(e.to_string()))?;
            let game = synthesize_with(&op)?;
            (game.tree, game.profile, game.diagnostics)
        }
        _ => {
            let (tree, profile) = synthesize_direct_mechanism(&env, id)?;
            (tree, profile, Vec::new())
        }
    };
    let file = GameFile::from_game(&env, &tree, &profile);
    match target {
        Some(p) => {
            fs::write(p, file.to_json() + "\n").map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            if json_out {
                emit_json(
                    out,
                    &json!({
                        "schema_version": SCHEMA_VERSION,
                        "command": "synthesize",
                        "notion": id.name(),
                        "out": p.display().to_string(),
                        "nodes": tree.len(),
                        "depth": tree.max_depth(),
                        "diagnostics": diagnostics,
                    }),
                )?;
            } else {
                let mut text = format!(
                    "{} game with {} nodes and depth {} written to {}\n",
                    id.concept(),
                    tree.len(),
                    tree.max_depth(),
                    p.display()
                );
                for d in diagnostics {
                    text.push_str(&format!("note: {d}\n"));
                }
                emit(out, &text)?;
            }
        }
        None => emit(out, &(file.to_json() + "\n"))?,
    }
    Ok(0)
}

fn definitional_json(v: &DefinitionalVerdict) -> Value {
    match v {
        DefinitionalVerdict::Holds { checked } => json!({"holds": true, "checked": checked}),
        DefinitionalVerdict::Fails(cx) => json!({
            "holds": false,
            "counterexample": {
                "player": cx.player,
                "type": cx.own_type,
                "info_label": cx.info_label,
                "honest_value": cx.honest_value,
                "deviation_value": cx.deviation_value,
                "detail": cx.detail,
            }
        }),
    }
}

fn verify(path: &Path, game: &Path, notion: &str, json_out: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let id = parse_notion(notion)?;
    let env = environment(path)?;
    let text = read(game)?;
    let file = GameFile::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", game.display())))?;
    let (tree, profile) = file.to_game(&env).map_err(|e| Failure::input(format!("{}: {e}", game.display())))?;
    let verdict = verify_game(&env, id, &tree, &profile, DefinitionalLimits::default())?;
    let code = if verdict.holds() { 0 } else { 1 };
    if json_out {
        emit_json(
            out,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "command": "verify",
                "notion": id.name(),
                "implements": verdict.implements,
                "gspc": verdict.gspc,
                "definitional": definitional_json(&verdict.definitional),
                "holds": verdict.holds(),
            }),
        )?;
        return Ok(code);
    }
    let mut text = format!(
        "{} in the given game: {}\n  implements f: {}\n  perfect recall: {}, all terminals reached: {}, distinct reach sets: {}\n",
        id,
        if verdict.holds() { "holds" } else { "fails" },
        verdict.implements,
        verdict.gspc.perfect_recall,
        verdict.gspc.all_terminals_reached,
        verdict.gspc.distinct_reach_sets
    );
    for p in &verdict.gspc.problems {
        text.push_str(&format!("  note: {p}\n"));
    }
    if let DefinitionalVerdict::Fails(cx) = &verdict.definitional {
        text.push_str(&format!("  counterexample: {}\n", cx.detail));
    }
    emit(out, &text)?;
    Ok(code)
}

fn oracle(
    path: Option<&Path>,
    notion: &str,
    limit: usize,
    seed: Option<u64>,
    json_out: bool,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let id = parse_notion(notion)?;
    let env = match (path, seed) {
        (Some(p), None) => environment(p)?,
        (None, Some(s)) => random_environment(s, RandomShape::default()),
        _ => return Err(Failure::input("give either an environment file or --seed")),
    };
    let limits = ProtocolLimits { max_states: limit };
    let search = match protocol_search(&env, id, limits) {
        Err(OracleError::LimitExceeded { states, limit }) => {
            if json_out {
                emit_json(
                    out,
                    &json!({"schema_version": SCHEMA_VERSION, "command": "oracle", "result": "limit-exceeded", "states": states, "limit": limit}),
                )?;
            } else {
                emit(out, &format!("limit-exceeded: {states} states, limit {limit}\n"))?;
            }
            return Ok(2);
        }
        r => r?,
    };
    let check = cross_check(&env, id, limits)?;
    let witness = match &search.witness {
        Some(w) => {
            let (tree, profile) = protocol_game(&env, w)?;
            Some(GameFile::from_game(&env, &tree, &profile))
        }
        None => None,
    };
    let code = if !check.agree || check.witness_verified == Some(false) {
        3
    } else if search.found {
        0
    } else {
        1
    };
    if json_out {
        emit_json(
            out,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "command": "oracle",
                "notion": id.name(),
                "seed": seed,
                "environment": seed.map(|_| serde_json::to_value(env.to_file()).expect("environment serializes")),
                "result": if search.found { "found" } else { "not-found" },
                "exhausted": search.exhausted,
                "cells": search.cells,
                "decider": check.decider,
                "agree": check.agree,
                "witness_verified": check.witness_verified,
                "witness": witness.map(|w| serde_json::to_value(w).expect("game serializes")),
            }),
        )?;
        return Ok(code);
    }
    let mut text = String::new();
    if let Some(s) = seed {
        text.push_str(&format!("environment: generated from seed {s}\n{}\n", env.to_file().to_json()));
    }
    text.push_str(&format!(
        "{}: {} ({} cells searched, exhausted: {})\n",
        id.concept(),
        if search.found { "found" } else { "not-found" },
        search.cells,
        search.exhausted
    ));
    text.push_str(&format!("cross-check: {}\n", if check.agree { "agree" } else { "DISAGREE" }));
    if !check.agree {
        text.push_str(&check.details);
        text.push('\n');
    }
    if check.witness_verified == Some(false) {
        text.push_str("witness protocol fails the definitional check\n");
    }
    if let Some(w) = witness {
        text.push_str("witness:\n");
        text.push_str(&w.to_json());
        text.push('\n');
    }
    emit(out, &text)?;
    Ok(code)
}

fn explain(path: &Path, notion: &str, output: &Output, out: &mut dyn Write) -> Result<i32, Failure> {
    let id = parse_notion(notion)?;
    let env = environment(path)?;
    if id.needs_prior() && env.prior().is_none() {
        return Err(NotionError::MissingPrior.into());
    }
    let full = env.full_set();
    let mut rows = Vec::new();
    for i in 0..env.num_players() {
        let others = full.others(i);
        for own in 0..env.type_count(i) {
            let gamma = std::collections::BTreeSet::from([own]);
            for mimic in 0..env.type_count(i) {
                if own != mimic {
                    let value = rho(id, &env, i, own, mimic, &others, Some(&gamma))?;
                    rows.push((i, own, mimic, value));
                }
            }
        }
    }
    let props = properties_of(id);
    let op = CanonicalOperator::new(id, &env).map_err(|e| Failure::input(e.to_string()))?;
    let traces = op.all_traces().map_err(|e| Failure::input(e.to_string()))?;
    let table = match id {
        NotionId::Od | NotionId::Sod => None,
        _ => Some(inequality_table(&env, id)?),
    };
    if output.json {
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "explain",
            "notion": id.name(),
            "properties": props,
            "rho": rows.iter().map(|&(i, own, mimic, value)| json!({
                "player": env.players()[i],
                "type": env.type_labels(i)[own],
                "mimic": env.type_labels(i)[mimic],
                "rho": u8::from(value),
            })).collect::<Vec<_>>(),
            "traces": traces.values().map(|t| json!({
                "state": env.state_label(&t.state),
                "fixed_point_round": t.fixed_point_round,
                "sets": t.sets.iter().map(|e| env.set_label(e)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        });
        if let Some(table) = &table {
            doc["inequalities"] = serde_json::to_value(table).expect("rows serialize");
        }
        if output.trace {
            doc["stages"] = stages_json(&env, &op);
        }
        emit_json(out, &doc)?;
        return Ok(0);
    }
    let mut text = format!(
        "{} ({}): regular {}, normal {}, additive {}, monotonic {}\n",
        id,
        id.concept(),
        props.regular,
        props.normal,
        props.additive,
        props.monotonic.map_or("unset".to_string(), |m| m.to_string())
    );
    text.push_str("rho on the full type space (player | type | mimic | rho):\n");
    for (i, own, mimic, value) in rows {
        text.push_str(&format!(
            "  {} | {} | {} | {}\n",
            env.players()[i],
            env.type_labels(i)[own],
            env.type_labels(i)[mimic],
            u8::from(value)
        ));
    }
    if let Some(table) = table {
        text.push_str("inequalities (player | type | mimic | lhs >= rhs):\n");
        for r in table {
            text.push_str(&format!(
                "  {} | {} | {} | {} >= {} {}\n",
                env.players()[r.player],
                env.type_labels(r.player)[r.own_type],
                env.type_labels(r.player)[r.mimic],
                r.lhs,
                r.rhs,
                if r.holds { "ok" } else { "FAILS" }
            ));
        }
    }
    text.push_str("canonical traces (state | n | E_n):\n");
    text.push_str(&indent(&render_traces(&env, &traces)));
    if output.trace {
        text.push_str("stage sets (E | state | stages):\n");
        for (e, part) in op.touched() {
            for s in e.iter() {
                let stages: Vec<String> = part.stages_of(s).iter().map(|x| env.set_label(x)).collect();
                text.push_str(&format!("  {} | {} | {}\n", env.set_label(&e), env.state_label(s), stages.join(" ")));
            }
        }
    }
    emit(out, &text)?;
    Ok(0)
}

fn stages_json(env: &Environment<Rational>, op: &CanonicalOperator<'_, Rational>) -> Value {
    op.touched()
        .iter()
        .flat_map(|(e, part)| {
            e.iter().map(move |s| {
                json!({
                    "set": env.set_label(e),
                    "state": env.state_label(s),
                    "stages": part.stages_of(s).iter().map(|x| env.set_label(x)).collect::<Vec<_>>(),
                })
            })
        })
        .collect()
}
