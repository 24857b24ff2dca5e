//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; the process fails if any line fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{bfs_within, brute_mm, brute_pbe, brute_sp, named_instances, random_instances, rectangles, Instance, ALL_NOTIONS};
use seqmech::canonical::{achievability_of, check_consistency, CanonicalOperator, Operator};
use seqmech::deciders::{additive_violation, decide_generic, Certificate, Verdict};
use seqmech::game::{
    check_definitional, check_gspc, check_implements, has_perfect_recall, reach_map, DefinitionalLimits, GameTree,
    InducedOperator, StrategyProfile,
};
use seqmech::notions::rho;
use seqmech::oracle::{protocol_game, protocol_search, ProtocolLimits, ProtocolNode};
use seqmech::synthesis::{direct_mechanism, SynthesizedGame};
use seqmech::{Environment, NotionId, Rational, State, StateSet};

const SHOWN: usize = 5;

#[derive(Default)]
struct Outcome {
    checked: usize,
    failures: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn report(n: usize, title: &str, out: &Outcome, extra: &str) -> bool {
    let status = if out.passed() { "PASS" } else { "FAIL" };
    println!("criterion {n} [{status}] {title}: {} checks, {} violations{extra}", out.checked, out.failures.len());
    for f in out.failures.iter().take(SHOWN) {
        println!("    {f}");
    }
    out.passed()
}

/// Everything computed once for one instance.
struct Run {
    name: String,
    env: Environment<Rational>,
    verdicts: BTreeMap<NotionId, Verdict>,
    witnesses: BTreeMap<NotionId, Option<ProtocolNode>>,
}

fn decide(env: &Environment<Rational>, id: NotionId) -> Verdict {
    decide_generic(env, id).unwrap_or_else(|e| panic!("{id}: {e}"))
}

/// Decider against the exhaustive oracle for one monotonic notion.
fn equivalence(runs: &mut [Run], id: NotionId, budget: Duration) -> (Outcome, Duration) {
    let mut out = Outcome::default();
    let start = Instant::now();
    for run in runs.iter_mut() {
        let verdict = decide(&run.env, id);
        let search = protocol_search(&run.env, id, ProtocolLimits::default()).expect("within limits");
        out.check(verdict.implementable == search.found && search.exhausted, || {
            format!("{}: decider {} oracle {}", run.name, verdict.implementable, search.found)
        });
        run.verdicts.insert(id, verdict);
        run.witnesses.insert(id, search.witness);
    }
    let elapsed = start.elapsed();
    out.check(elapsed < budget, || format!("took {elapsed:?}, budget {budget:?}"));
    (out, elapsed)
}

fn criterion_3(named: &mut [Run]) -> Outcome {
    let mut out = Outcome::default();
    for run in named.iter_mut() {
        for id in ALL_NOTIONS {
            let v = decide(&run.env, id);
            run.verdicts.insert(id, v);
        }
        for id in [NotionId::Od, NotionId::Sod] {
            let search = protocol_search(&run.env, id, ProtocolLimits::default()).expect("within limits");
            run.witnesses.insert(id, search.witness);
        }
    }
    // Frozen after confirming each value against the independent enumerations below.
    let frozen: [(&str, &[(NotionId, bool)]); 3] = [
        (
            "ENV-CONST",
            &[(NotionId::Wd, true), (NotionId::Pbe, true), (NotionId::Mm, true), (NotionId::Od, true), (NotionId::Sod, true)],
        ),
        ("ENV-SPA", &[(NotionId::Wd, true), (NotionId::Pbe, true), (NotionId::Mm, true), (NotionId::Od, true)]),
        ("ENV-XOR", &[(NotionId::Wd, true), (NotionId::Mm, true), (NotionId::Od, false), (NotionId::Sod, false)]),
    ];
    for (name, expected) in frozen {
        let run = named.iter().find(|r| r.name == name).expect("named instance");
        for &(id, want) in expected {
            let got = run.verdicts[&id].implementable;
            out.check(got == want, || format!("{name} {}: got {got}, frozen {want}", id.concept()));
            let independent = match id {
                NotionId::Wd => brute_sp(&run.env),
                NotionId::Mm => brute_mm(&run.env),
                NotionId::Pbe => brute_pbe(&run.env),
                _ => run.witnesses[&id].is_some(),
            };
            out.check(independent == want, || format!("{name} {}: independent enumeration says {independent}", id.concept()));
        }
    }

    let by_name = |n: &str| named.iter().find(|r| r.name == n).expect("named instance");
    let constant = by_name("ENV-CONST");
    let rounds = constant.verdicts[&NotionId::Od].rounds();
    out.check(rounds == Some(1), || format!("ENV-CONST OSP rounds {rounds:?}, expected 1"));

    let spa = by_name("ENV-SPA");
    let od = &spa.verdicts[&NotionId::Od];
    out.check(od.rounds() == Some(2), || format!("ENV-SPA OSP rounds {:?}, expected 2", od.rounds()));
    let (p1, p2) = (spa.env.player_index("1").unwrap(), spa.env.player_index("2").unwrap());
    if let Some(Certificate::Disclosure { game, .. }) = &od.certificate {
        for theta in spa.env.states() {
            let order: Vec<Vec<usize>> = (1..=game.schedule.rounds_of(theta)).map(|n| game.schedule.active(theta, n)).collect();
            let ok = order.first() == Some(&vec![p2]) && order.get(1).is_none_or(|r| r == &vec![p1]) && order.len() <= 2;
            out.check(ok, || format!("ENV-SPA round order at {} is {order:?}", spa.env.state_label(theta)));
        }
        let deepest = spa.env.states().iter().any(|t| game.schedule.rounds_of(t) == 2);
        out.check(deepest, || "ENV-SPA: no state needs two rounds".into());
    } else {
        out.check(false, || "ENV-SPA OSP verdict carries no disclosure game".into());
    }
    if let Some(Some(w)) = spa.witnesses.get(&NotionId::Od) {
        let theta = spa.env.state(&["3", "3"]).unwrap();
        let choosers = w.choosers_at(&theta);
        out.check(choosers == vec![p2, p1], || format!("ENV-SPA oracle chooser order {choosers:?}"));
    }
    out
}

/// Synthesized disclosure games of every positive OSP/SOSP verdict.
fn disclosure_games(runs: &[Run]) -> Vec<(&Run, NotionId, &SynthesizedGame)> {
    let mut out = Vec::new();
    for run in runs {
        for id in [NotionId::Od, NotionId::Sod] {
            if let Some(Certificate::Disclosure { game, .. }) = run.verdicts.get(&id).and_then(|v| v.certificate.as_ref()) {
                out.push((run, id, game.as_ref()));
            }
        }
    }
    out
}

fn criterion_4(runs: &[Run]) -> Outcome {
    let mut out = Outcome::default();
    for run in runs {
        for id in [NotionId::Od, NotionId::Sod] {
            if let Some(v) = run.verdicts.get(&id) {
                if v.implementable {
                    out.check(matches!(v.certificate, Some(Certificate::Disclosure { .. })), || {
                        format!("{} {id}: positive verdict without a disclosure game", run.name)
                    });
                }
            }
        }
    }
    for (run, id, game) in disclosure_games(runs) {
        let env = &run.env;
        let gspc = check_gspc(env, &game.tree, &game.profile).expect("valid game");
        out.check(gspc.passes(), || format!("{} {id}: {}", run.name, gspc.problems.join("; ")));
        out.check(check_implements(env, &game.tree, &game.profile).expect("valid game"), || {
            format!("{} {id}: does not implement f", run.name)
        });
        let def = check_definitional(id, env, &game.tree, &game.profile, DefinitionalLimits::default()).expect("within limits");
        out.check(def.holds(), || format!("{} {id}: definitional check failed: {def:?}", run.name));

        // Reach set after the k-th round along θ's path equals E_k(θ).
        let op = CanonicalOperator::new(id, env).expect("prior present");
        let traces = op.all_traces().expect("converges");
        let reach = reach_map(env, &game.tree, &game.profile).expect("valid game");
        for (theta, trace) in &traces {
            let path: Vec<usize> = path_of(&game.tree, &game.profile, theta);
            let mut depth = 0;
            out.check(reach.get(path[0]) == Some(trace.at(0)), || format!("{} {id}: root reach set", run.name));
            for k in 1..=game.schedule.rounds_of(theta) {
                depth += game.schedule.active(theta, k).len();
                let node = path[depth.min(path.len() - 1)];
                out.check(reach.get(node) == Some(trace.at(k)), || {
                    format!("{} {id}: reach set after round {k} at {} differs from E_{k}", run.name, env.state_label(theta))
                });
            }
            out.check(depth == path.len() - 1, || format!("{} {id}: path length at {}", run.name, env.state_label(theta)));
            let leaf = *path.last().expect("nonempty");
            out.check(reach.get(leaf) == Some(trace.fixed_point()), || {
                format!("{} {id}: leaf reach set at {} is not the fixed point", run.name, env.state_label(theta))
            });
        }
    }
    out
}

/// Node ids from the root to θ's terminal under truthful play.
fn path_of(tree: &GameTree, profile: &StrategyProfile, theta: &State) -> Vec<usize> {
    let leaf = seqmech::game::play(tree, profile, theta).expect("valid profile");
    let mut path: Vec<usize> = tree.path_to(leaf).into_iter().map(|(n, _)| n).collect();
    path.push(leaf);
    path
}

/// Canonical operators of every notion with their traces run, per instance.
struct Touched<'a> {
    run: &'a Run,
    ops: Vec<CanonicalOperator<'a, Rational>>,
}

fn touch(runs: &[Run]) -> Vec<Touched<'_>> {
    runs.iter()
        .map(|run| {
            let ops = ALL_NOTIONS
                .iter()
                .map(|&id| {
                    let op = CanonicalOperator::new(id, &run.env).expect("prior present");
                    op.all_traces().expect("converges");
                    op
                })
                .collect();
            Touched { run, ops }
        })
        .collect()
}

/// Games to test the game-side lemmas on: disclosure games, oracle
/// witnesses and direct mechanisms.
fn lemma_games(run: &Run) -> Vec<(String, GameTree, StrategyProfile)> {
    let mut games = Vec::new();
    for id in [NotionId::Od, NotionId::Sod] {
        if let Some(Certificate::Disclosure { game, .. }) = run.verdicts.get(&id).and_then(|v| v.certificate.as_ref()) {
            games.push((format!("{id} disclosure game"), game.tree.clone(), game.profile.clone()));
        }
        if let Some(Some(w)) = run.witnesses.get(&id) {
            let (t, p) = protocol_game(&run.env, w).expect("witness game");
            games.push((format!("{id} oracle witness"), t, p));
        }
    }
    let (t, p) = direct_mechanism(&run.env).expect("direct mechanism");
    games.push(("direct mechanism".into(), t, p));
    games
}

fn criterion_5(runs: &[Run]) -> Vec<(&'static str, Outcome)> {
    let touched = touch(runs);
    let mut partition = Outcome::default();
    let mut stages = Outcome::default();
    let mut chain = Outcome::default();
    let mut increasing = Outcome::default();
    let mut lower = Outcome::default();
    let mut normal = Outcome::default();
    let mut recall = Outcome::default();

    for t in &touched {
        let env = &t.run.env;
        for op in &t.ops {
            let id = op.notion();
            for (e, part) in op.touched() {
                let tag = || format!("{} {id} E={}", t.run.name, env.set_label(&e));
                // Partition property.
                let cells: BTreeSet<StateSet> = e.iter().map(|s| part.cell(s).expect("member").clone()).collect();
                let cover: BTreeSet<State> = cells.iter().flat_map(|c| c.iter().cloned()).collect();
                let total: usize = cells.iter().map(StateSet::len).sum();
                partition.check(
                    e.iter().all(|s| part.cell(s).is_some_and(|c| c.contains(s) && c.is_subset(&e)))
                        && cover == e.members().clone()
                        && total == e.len(),
                    || format!("{}: cells do not partition E", tag()),
                );
                for theta in e.iter() {
                    // Stage monotonicity.
                    let st = part.stages_of(theta);
                    let ok = st.first() == Some(&StateSet::singleton(theta.clone()))
                        && st.windows(2).all(|w| w[0].is_subset(&w[1]))
                        && st.last().is_some_and(|l| l.is_subset(&e));
                    stages.check(ok, || format!("{} at {}", tag(), env.state_label(theta)));
                    // Chain characterization against per-player BFS.
                    for n in 1..=part.stages.len() {
                        let stage = &part.stages[n - 1];
                        let next = &part.stages[n.min(part.stages.len() - 1)];
                        let reach: Vec<BTreeSet<State>> =
                            (0..env.num_players()).map(|i| bfs_within(id, env, &e, stage, theta, i, n)).collect();
                        let expected: BTreeSet<State> =
                            e.iter().filter(|s| reach.iter().all(|r| r.contains(*s))).cloned().collect();
                        chain.check(&expected == next[theta].members(), || {
                            format!(
                                "{} at {} stage {}: BFS {:?} vs {}",
                                tag(),
                                env.state_label(theta),
                                n + 1,
                                expected.iter().map(|s| env.state_label(s)).collect::<Vec<_>>(),
                                env.set_label(&next[theta])
                            )
                        });
                    }
                }
            }
            // Achievable iff f-achievable.
            let ach = achievability_of(op).expect("converges");
            let f_ach = ach.traces.values().all(|tr| env.is_scf_constant_on(tr.fixed_point()));
            normal.check(ach.achievable == f_ach, || {
                format!("{} {id}: achievable {} but f-achievable {f_ach}", t.run.name, ach.achievable)
            });
        }

        // Increasing property on nested rectangles, for OD and SOD.
        let rects = rectangles(env);
        for op in t.ops.iter().filter(|o| matches!(o.notion(), NotionId::Od | NotionId::Sod)) {
            for small in &rects {
                for big in rects.iter().filter(|b| small.is_subset(b)) {
                    for theta in small.iter() {
                        let (a, b) = (op.cell(small, theta), op.cell(big, theta));
                        increasing.check(a.is_subset(&b), || {
                            format!(
                                "{} {}: cell({}, {}) not inside cell({})",
                                t.run.name,
                                op.notion(),
                                env.set_label(small),
                                env.state_label(theta),
                                env.set_label(big)
                            )
                        });
                    }
                }
            }
        }

        // Game-side lemmas.
        for (what, tree, profile) in lemma_games(t.run) {
            if has_perfect_recall(&tree).is_ok() {
                let reach = reach_map(env, &tree, &profile).expect("valid game");
                for (info, members) in tree.info_sets() {
                    let projections: BTreeSet<BTreeSet<usize>> = members
                        .iter()
                        .filter_map(|&h| reach.get(h))
                        .filter(|s| !s.is_empty())
                        .map(|s| s.projection(info.player).clone())
                        .collect();
                    recall.check(projections.len() <= 1, || {
                        format!("{} {what}: info set {} has {} distinct own projections", t.run.name, info.label, projections.len())
                    });
                }
            }
            let gspc = check_gspc(env, &tree, &profile).expect("valid game");
            if !gspc.passes() {
                continue;
            }
            let induced = InducedOperator::new(env, &tree, &profile).expect("distinct reach sets");
            for op in t.ops.iter().filter(|o| matches!(o.notion(), NotionId::Od | NotionId::Sod)) {
                let id = op.notion();
                let consistent = check_consistency(id, env, &induced, &|e| induced.vartheta(e), &induced.domain())
                    .expect("prior present")
                    .is_consistent();
                if !consistent {
                    continue;
                }
                for (e, theta) in induced.domain() {
                    let (c, g) = (op.cell(&e, &theta), induced.cell(&e, &theta));
                    lower.check(c.is_subset(&g), || {
                        format!(
                            "{} {what} {id}: canonical {} not inside induced {} at E={}",
                            t.run.name,
                            env.set_label(&c),
                            env.set_label(&g),
                            env.set_label(&e)
                        )
                    });
                }
            }
        }
    }
    vec![
        ("partition property", partition),
        ("stage monotonicity", stages),
        ("chain characterization vs BFS", chain),
        ("increasing operator", increasing),
        ("lower bound vs induced operators", lower),
        ("achievable iff f-achievable", normal),
        ("perfect-recall projection", recall),
    ]
}

fn criterion_6(runs: &[Run]) -> Outcome {
    let mut out = Outcome::default();
    for run in runs {
        let (tree, profile) = direct_mechanism(&run.env).expect("direct mechanism");
        for id in [NotionId::Wd, NotionId::Pbe, NotionId::Mm] {
            let ineq = additive_violation(&run.env, id).expect("prior present").is_none();
            let def = check_definitional(id, &run.env, &tree, &profile, DefinitionalLimits::default())
                .expect("within limits")
                .holds();
            out.check(ineq == def, || format!("{} {id}: inequalities {ineq}, definitional {def}", run.name));
        }
    }
    out
}

fn criterion_7(runs: &[Run]) -> Outcome {
    let mut out = Outcome::default();
    for run in runs {
        let v = |id: NotionId| run.verdicts.get(&id).map(|v| v.implementable).unwrap_or_else(|| decide(&run.env, id).implementable);
        let (sosp, osp, sp) = (v(NotionId::Sod), v(NotionId::Od), v(NotionId::Wd));
        out.check((!sosp || osp) && (!osp || sp), || format!("{}: SOSP {sosp} OSP {osp} SP {sp}", run.name));
    }
    for t in touch(runs) {
        let env = &t.run.env;
        let mut contexts: BTreeSet<StateSet> = BTreeSet::new();
        for op in &t.ops {
            contexts.extend(op.touched().into_iter().map(|(e, _)| e));
        }
        for e in &contexts {
            for i in 0..env.num_players() {
                let others = e.others(i);
                for &own in e.projection(i) {
                    for &mimic in e.projection(i) {
                        let r = |id| rho(id, env, i, own, mimic, &others, None).expect("prior present");
                        let (od, wd, mm) = (r(NotionId::Od), r(NotionId::Wd), r(NotionId::Mm));
                        out.check((!od || wd) && (!wd || mm), || {
                            format!("{} E={} player {i} {own}->{mimic}: OD {od} WD {wd} MM {mm}", t.run.name, env.set_label(e))
                        });
                    }
                }
            }
        }
    }
    out
}

fn main() -> ExitCode {
    let into_run = |i: Instance| Run { name: i.name, env: i.env, verdicts: BTreeMap::new(), witnesses: BTreeMap::new() };
    let mut random: Vec<Run> = random_instances().into_iter().map(into_run).collect();
    let mut named: Vec<Run> = named_instances().into_iter().map(into_run).collect();
    let mut ok = true;

    let (c1, t1) = equivalence(&mut random, NotionId::Od, Duration::from_secs(60));
    ok &= report(1, "OSP decider vs protocol oracle", &c1, &format!(", {} instances in {:.2?}", random.len(), t1));
    let (c2, t2) = equivalence(&mut random, NotionId::Sod, Duration::from_secs(120));
    ok &= report(2, "SOSP decider vs protocol oracle", &c2, &format!(", {} instances in {:.2?}", random.len(), t2));
    let c3 = criterion_3(&mut named);
    ok &= report(3, "named instances", &c3, "");

    let mut runs = random;
    runs.append(&mut named);
    let c4 = criterion_4(&runs);
    let games = disclosure_games(&runs).len();
    ok &= report(4, "synthesis soundness", &c4, &format!(", {games} disclosure games"));

    let lemmas = criterion_5(&runs);
    let mut c5 = Outcome::default();
    let mut parts = Vec::new();
    for (name, o) in &lemmas {
        c5.checked += o.checked;
        c5.failures.extend(o.failures.iter().map(|f| format!("{name}: {f}")));
        parts.push(format!("{name} {}/{}", o.checked - o.failures.len(), o.checked));
    }
    ok &= report(5, "lemma suite", &c5, &format!(" ({})", parts.join(", ")));

    let c6 = criterion_6(&runs);
    ok &= report(6, "inequality verdicts vs definitional direct mechanism", &c6, "");
    let c7 = criterion_7(&runs);
    ok &= report(7, "notion-strength chain", &c7, "");

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
