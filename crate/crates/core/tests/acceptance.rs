//! Acceptance suite for the simulation engine. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use hopes_core::assistants::describe_stats;
use hopes_core::gateway::{
    ChatBackend, ChatRequest, Completion, GatewayError, ScriptBook, ScriptEntry, ScriptedBackend,
    Usage,
};
use hopes_core::institution::{parse_decision, render_decision, AgentId, PolicyDecision};
use hopes_core::land::{
    step, validate_afts, Accounts, AftId, AftSpec, Cell, LandParams, LandState, PolicyLevers,
    ServiceId, ServiceMap,
};
use hopes_core::protocol::{
    is_legal, EventKind, NextStep, ProtocolError, ProtocolEvent, ProtocolPhase, ProtocolState,
};
use hopes_core::session::{
    replay, EventBody, RunStatus, Scenario, Session, SessionConfig, TickRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const SUPPLIER: &str = "research_supplier";
const HIGH_LEVEL: &str = "high_level";

/// Implemented decisions of the four activation rounds of the reported
/// research-supplier run: (agri share, env share, meat goal adj, PA goal adj).
const REPORTED_DECISIONS: [[f64; 4]; 4] = [
    [0.45, 0.55, 0.05, 0.10],
    [0.55, 0.45, 0.20, 0.20],
    [0.60, 0.40, 0.25, 0.25],
    [0.45, 0.55, 0.10, 0.12],
];

fn default_book() -> ScriptBook {
    ScriptBook::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/default_script.toml"))
        .expect("bundled script")
}

fn observer_run(cfg: SessionConfig) -> Result<Session, String> {
    let mut s = Session::create("acceptance", cfg).map_err(err)?;
    s.begin(Some("observer")).map_err(err)?;
    let status = s.run_until_pause().map_err(err)?;
    ensure!(
        status == RunStatus::Completed,
        "observer run ended in {status:?}"
    );
    Ok(s)
}

/// Runs with the supplier as human, submitting `text(phase)` at each turn.
fn supplier_run(
    cfg: SessionConfig,
    backend: Box<dyn ChatBackend>,
    text: impl Fn(u32) -> String,
) -> Result<Session, String> {
    let cfg = SessionConfig {
        human_role: Some(SUPPLIER.into()),
        ..cfg
    };
    let mut s =
        Session::with_backend("acceptance", cfg, Scenario::bundled(), backend).map_err(err)?;
    s.begin(None).map_err(err)?;
    let mut status = s.run_until_pause().map_err(err)?;
    let mut turns = 0;
    while let RunStatus::AwaitingHuman { .. } = status {
        turns += 1;
        status = s.submit_human_decision(&text(turns)).map_err(err)?;
    }
    ensure!(
        status == RunStatus::Completed,
        "supplier run ended in {status:?}"
    );
    Ok(s)
}

// ---- 1 ----

fn structural_run() -> Outcome {
    let started = Instant::now();
    let s = observer_run(SessionConfig {
        phases: 5,
        lag: 15,
        ..Default::default()
    })?;
    let elapsed = started.elapsed();
    ensure!(
        s.tick() == 75 && s.records().len() == 75,
        "ticks {} records {}",
        s.tick(),
        s.records().len()
    );
    let round_phases: BTreeSet<u32> = s.messages().iter().map(|m| m.phase).collect();
    ensure!(
        round_phases == BTreeSet::from([1, 2, 3, 4]),
        "rounds in phases {round_phases:?}"
    );
    ensure!(
        s.messages().len() == 28,
        "{} agent messages",
        s.messages().len()
    );
    let applied: Vec<(u32, u64)> = s.decisions().iter().map(|d| (d.phase, d.tick)).collect();
    ensure!(
        applied == [(1, 15), (2, 30), (3, 45), (4, 60)],
        "decisions applied at {applied:?}"
    );
    let events = s.events().len();
    ensure!(events == 75 + 28 + 4 + 1, "{events} events");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "75 ticks, 4 rounds, 28 messages, 4 decisions, {events} events in {:.3} s",
        elapsed.as_secs_f64()
    ))
}

// ---- 2 ----

fn check_budget_identity(records: &[TickRecord]) -> Result<(), String> {
    let (mut prev_agri, mut prev_env) = (0.0, 0.0);
    for r in records {
        let d_agri = (r.surplus_agri - prev_agri) - (r.inflow_agri - r.expenditure_agri);
        let d_env = (r.surplus_env - prev_env) - (r.inflow_env - r.expenditure_env);
        ensure!(
            d_agri.abs() <= 1e-9 && d_env.abs() <= 1e-9,
            "tick {}: identity off by {d_agri:e}/{d_env:e}",
            r.tick
        );
        ensure!(
            (r.share_agri + r.share_env - 1.0).abs() <= 1e-9,
            "tick {}: shares sum {}",
            r.tick,
            r.share_agri + r.share_env
        );
        if r.phase == 0 {
            ensure!(
                r.share_agri == 0.5 && r.share_env == 0.5,
                "tick {}: phase 0 shares {}/{}",
                r.tick,
                r.share_agri,
                r.share_env
            );
        }
        (prev_agri, prev_env) = (r.surplus_agri, r.surplus_env);
    }
    Ok(())
}

fn reported_book() -> ScriptBook {
    let mut book = default_book();
    for (i, d) in REPORTED_DECISIONS.iter().enumerate() {
        let text = format!(
            "Decision for this phase.\n{}",
            render_decision(&common::decision(*d))
        );
        book.insert(HIGH_LEVEL, i as u32 + 1, 1, ScriptEntry::Text(text));
    }
    book
}

fn budget_identity() -> Outcome {
    let mut runs: Vec<(String, Session)> = Vec::new();
    for seed in 1..=3 {
        runs.push((
            format!("observer seed {seed}"),
            observer_run(SessionConfig {
                seed,
                ..Default::default()
            })?,
        ));
    }
    runs.push((
        "supplier, reported decisions".into(),
        supplier_run(
            SessionConfig::default(),
            Box::new(ScriptedBackend::new(reported_book())),
            |p| format!("Phase {p} briefing from the human supplier."),
        )?,
    ));
    let mut rows = 0;
    for (name, s) in &runs {
        check_budget_identity(s.records()).map_err(|e| format!("{name}: {e}"))?;
        rows += s.records().len();
    }
    let varied = &runs[3].1;
    let shares: Vec<f64> = varied
        .decisions()
        .iter()
        .map(|d| d.decision.share_agri)
        .collect();
    ensure!(
        shares == [0.45, 0.55, 0.60, 0.45],
        "reported decisions applied as {shares:?}"
    );
    Ok(format!(
        "{rows} rows over {} runs within 1e-9; phase 0 shares 0.50/0.50",
        runs.len()
    ))
}

// ---- 3 ----

const ORACLE_SERVICES: usize = 4;

/// An AFT recipe in plain arrays, for the independent utility oracle.
struct Recipe {
    efficiency: [f64; ORACLE_SERVICES],
    weights: [[f64; 2]; ORACLE_SERVICES],
    base_cost: f64,
    restricted: bool,
}

fn oracle_utility(
    r: &Recipe,
    capitals: &[f64],
    price: &[f64; ORACLE_SERVICES],
    subsidy: &[f64; ORACLE_SERVICES],
) -> f64 {
    let mut u = -r.base_cost;
    for s in 0..ORACLE_SERVICES {
        let produced =
            r.efficiency[s] * (r.weights[s][0] * capitals[0] + r.weights[s][1] * capitals[1]);
        u += (price[s] + subsidy[s]) * produced;
    }
    u
}

fn service_map(v: &[f64; ORACLE_SERVICES]) -> ServiceMap {
    let mut m = ServiceMap::default();
    for (s, x) in ServiceId::ALL.iter().zip(v) {
        m[*s] = *x;
    }
    m
}

/// Returns (cells checked, violations).
fn oracle_instance(seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_afts = rng.random_range(3..=4);
    let recipes: Vec<Recipe> = (0..n_afts)
        .map(|i| {
            let mut efficiency = [0.0; ORACLE_SERVICES];
            for e in efficiency.iter_mut() {
                if rng.random_bool(0.5) {
                    *e = rng.random_range(0.0..2.0);
                }
            }
            efficiency[rng.random_range(0..ORACLE_SERVICES)] = rng.random_range(0.5..3.0);
            let weights = std::array::from_fn(|_| {
                let w: f64 = rng.random_range(0.0..=1.0);
                [w, 1.0 - w]
            });
            Recipe {
                efficiency,
                weights,
                base_cost: rng.random_range(0.0..0.05),
                restricted: i > 0 && rng.random_bool(0.5),
            }
        })
        .collect();
    let price: [f64; ORACLE_SERVICES] = std::array::from_fn(|_| rng.random_range(0.5..1.5));
    let subsidy: [f64; ORACLE_SERVICES] = std::array::from_fn(|_| rng.random_range(0.0..0.5));

    let afts: Vec<AftSpec> = recipes
        .iter()
        .enumerate()
        .map(|(i, r)| AftSpec {
            id: AftId(i as u16),
            name: format!("t{i}"),
            efficiency: service_map(&r.efficiency),
            capital_weights: std::array::from_fn(|s| r.weights[s].to_vec()),
            restricted_on_protected: r.restricted,
            base_cost: r.base_cost,
        })
        .collect();
    validate_afts(&afts, 2).map_err(err)?;
    let cells: Vec<Cell> = (0..64)
        .map(|_| {
            let capitals = vec![rng.random_range(0.2..=1.0), rng.random_range(0.2..=1.0)];
            let protected = rng.random_bool(0.2);
            let eligible: Vec<usize> = (0..n_afts)
                .filter(|&a| !(protected && recipes[a].restricted))
                .collect();
            let aft = AftId(eligible[rng.random_range(0..eligible.len())] as u16);
            Cell {
                capitals,
                aft,
                protected,
            }
        })
        .collect();
    let mut land = LandState::new(8, 8, cells, &afts).map_err(err)?;
    // zero goals keep both controllers idle, so the levers stay static
    let levers = PolicyLevers {
        subsidy: service_map(&subsidy),
        goal_meat: 0.0,
        goal_pa: 0.0,
    };
    let params = LandParams::default();
    let mut accounts = Accounts::even(params.budget_rate);
    for _ in 0..50 {
        (land, accounts, _) = step(
            &land,
            &levers,
            &accounts,
            &service_map(&price),
            &params,
            &afts,
        );
    }

    let mut violations = 0;
    for cell in &land.cells {
        let incumbent = &recipes[cell.aft.0 as usize];
        ensure!(
            !(cell.protected && incumbent.restricted),
            "seed {seed}: restricted type on protected cell"
        );
        let u_inc = oracle_utility(incumbent, &cell.capitals, &price, &subsidy);
        ensure!(
            u_inc > 0.0,
            "seed {seed}: generator produced non-positive utility {u_inc}"
        );
        let best_other = (0..n_afts)
            .filter(|&a| a != cell.aft.0 as usize && !(cell.protected && recipes[a].restricted))
            .map(|a| oracle_utility(&recipes[a], &cell.capitals, &price, &subsidy))
            .fold(f64::NEG_INFINITY, f64::max);
        if u_inc < best_other / (1.0 + params.eps_takeover) {
            violations += 1;
        }
    }
    Ok((land.cells.len(), violations))
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let (mut cells, mut violations) = (0, 0);
    for seed in 0..100 {
        let (c, v) = oracle_instance(seed)?;
        cells += c;
        violations += v;
    }
    let elapsed = started.elapsed();
    ensure!(violations == 0, "{violations} violations in {cells} cells");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "100 instances, {cells} cells, 0 violations in {:.3} s",
        elapsed.as_secs_f64()
    ))
}

// ---- 4 ----

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn surplus_dip_pattern() -> Outcome {
    // the bundled script's high-level agent splits evenly and raises both goals by 5%
    let mut s = Session::create("surplus-dip", SessionConfig::default()).map_err(err)?;
    s.begin(Some("observer")).map_err(err)?;
    let initial_meat = s.land().supply.meat;
    ensure!(
        s.run_until_pause().map_err(err)? == RunStatus::Completed,
        "run incomplete"
    );
    for d in s.decisions() {
        ensure!(
            d.decision
                == PolicyDecision {
                    share_agri: 0.5,
                    share_env: 0.5,
                    adj_meat: 0.05,
                    adj_pa: 0.05
                },
            "not conservative: {d:?}"
        );
    }
    let r = s.records();
    ensure!(
        initial_meat < r[0].goal_meat,
        "initial meat supply {initial_meat} is not below goal {}",
        r[0].goal_meat
    );
    let dip = r
        .iter()
        .position(|x| x.surplus_agri < 0.0)
        .ok_or("agricultural surplus never negative")?;
    let recovered = r[dip..]
        .iter()
        .position(|x| x.surplus_agri >= 0.0)
        .map(|i| i + dip);
    let recovered = recovered.ok_or("agricultural surplus never recovers")?;
    ensure!(
        r.last().unwrap().surplus_agri > 0.0,
        "final agricultural surplus {}",
        r.last().unwrap().surplus_agri
    );
    let mut slopes = Vec::new();
    for phase in 2..=4 {
        let rows: Vec<&TickRecord> = r.iter().filter(|x| x.phase == phase).collect();
        let agri = ols_slope(
            &rows
                .iter()
                .map(|x| (x.tick as f64, x.surplus_agri))
                .collect::<Vec<_>>(),
        );
        let env = ols_slope(
            &rows
                .iter()
                .map(|x| (x.tick as f64, x.surplus_env))
                .collect::<Vec<_>>(),
        );
        ensure!(
            agri > 0.0 && env > 0.0,
            "phase {phase}: surplus slopes agri {agri:.3} env {env:.3}"
        );
        slopes.push(format!("p{phase} {agri:.2}/{env:.2}"));
    }
    Ok(format!(
        "agri surplus negative from tick {}, back above zero at tick {}; slopes {}",
        r[dip].tick,
        r[recovered].tick,
        slopes.join(", ")
    ))
}

// ---- 5 ----

fn random_decision(rng: &mut ChaCha8Rng) -> PolicyDecision {
    let share_agri: f64 = rng.random_range(0.0..=1.0);
    PolicyDecision {
        share_agri,
        share_env: 1.0 - share_agri,
        adj_meat: rng.random_range(-1.0..=1.0),
        adj_pa: rng.random_range(-1.0..=1.0),
    }
}

fn parser_corpus() -> Outcome {
    let cases = common::decision_corpus();
    ensure!(cases.len() >= 20, "only {} golden cases", cases.len());
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| common::check_case(c).err())
        .collect();
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    let reported = cases
        .iter()
        .filter_map(|c| c.expect)
        .filter(|e| REPORTED_DECISIONS.contains(e))
        .map(|e| REPORTED_DECISIONS.iter().position(|d| *d == e).unwrap())
        .collect::<BTreeSet<_>>();
    ensure!(
        reported.len() == 4,
        "reported decisions covered: {reported:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let d = random_decision(&mut rng);
        let back =
            parse_decision(&render_decision(&d)).map_err(|e| format!("decision {i} {d:?}: {e}"))?;
        ensure!(back == d, "decision {i}: {d:?} came back as {back:?}");
    }
    Ok(format!(
        "{} golden cases (all 8 reported rows), 1000 round-trips",
        cases.len()
    ))
}

// ---- 6 ----

fn sample_event(kind: EventKind) -> ProtocolEvent {
    match kind {
        EventKind::BeginSimulation => ProtocolEvent::BeginSimulation {
            role: "observer".into(),
        },
        EventKind::SimulationEnded => ProtocolEvent::SimulationEnded,
        EventKind::CompleteReflection => ProtocolEvent::CompleteReflection {
            next: NextStep::Integrate,
        },
        EventKind::UserMessage => ProtocolEvent::UserMessage {
            text: "a thought".into(),
        },
        EventKind::CompleteIntegration => ProtocolEvent::CompleteIntegration,
    }
}

fn state_in(phase: ProtocolPhase) -> ProtocolState {
    let mut s = ProtocolState::new(None);
    let path: &[ProtocolEvent] = match phase {
        ProtocolPhase::Contextualization => &[],
        ProtocolPhase::PerspectiveTaking => &[ProtocolEvent::BeginSimulation {
            role: "observer".into(),
        }],
        ProtocolPhase::Reflection => &[
            ProtocolEvent::BeginSimulation {
                role: "observer".into(),
            },
            ProtocolEvent::SimulationEnded,
        ],
        ProtocolPhase::Transition => &[
            ProtocolEvent::BeginSimulation {
                role: "observer".into(),
            },
            ProtocolEvent::SimulationEnded,
            ProtocolEvent::CompleteReflection {
                next: NextStep::NewRole(SUPPLIER.into()),
            },
        ],
        ProtocolPhase::Integration => &[
            ProtocolEvent::BeginSimulation {
                role: "observer".into(),
            },
            ProtocolEvent::SimulationEnded,
            ProtocolEvent::CompleteReflection {
                next: NextStep::Integrate,
            },
        ],
        ProtocolPhase::Completion => &[
            ProtocolEvent::BeginSimulation {
                role: "observer".into(),
            },
            ProtocolEvent::SimulationEnded,
            ProtocolEvent::CompleteReflection {
                next: NextStep::Integrate,
            },
            ProtocolEvent::CompleteIntegration,
        ],
    };
    for e in path {
        s.advance(e.clone()).expect("setup path is legal");
    }
    assert_eq!(s.phase, phase);
    s
}

fn protocol_walk() -> Outcome {
    use EventKind as E;
    use ProtocolPhase as P;
    let edges = [
        (
            P::Contextualization,
            E::BeginSimulation,
            P::PerspectiveTaking,
        ),
        (P::PerspectiveTaking, E::SimulationEnded, P::Reflection),
        (P::Reflection, E::CompleteReflection, P::Integration),
        (P::Reflection, E::UserMessage, P::Reflection),
        (P::Transition, E::UserMessage, P::Transition),
        (P::Transition, E::BeginSimulation, P::PerspectiveTaking),
        (P::Integration, E::UserMessage, P::Integration),
        (P::Integration, E::CompleteIntegration, P::Completion),
    ];
    let mut pairs = 0;
    for phase in P::ALL {
        for kind in E::ALL {
            pairs += 1;
            let expected = edges
                .iter()
                .find(|(p, k, _)| *p == phase && *k == kind)
                .map(|e| e.2);
            ensure!(
                is_legal(phase, kind) == expected.is_some(),
                "table disagrees on ({phase:?}, {kind:?})"
            );
            let mut s = state_in(phase);
            let before = s.clone();
            match (s.advance(sample_event(kind)), expected) {
                (Ok(()), Some(to)) => {
                    ensure!(s.phase == to, "({phase:?}, {kind:?}) went to {:?}", s.phase)
                }
                (Err(ProtocolError::IllegalTransition { .. }), None) => {
                    ensure!(
                        s == before,
                        "rejected ({phase:?}, {kind:?}) changed the state"
                    )
                }
                (got, _) => return Err(format!("({phase:?}, {kind:?}): {got:?}")),
            }
        }
    }

    // observer, then research supplier, then integration
    let dir = tempfile::tempdir().map_err(err)?;
    let mut s = Session::create(
        "walk",
        SessionConfig {
            out_dir: Some(dir.path().into()),
            ..Default::default()
        },
    )
    .map_err(err)?;
    let mut walk = 0;
    s.begin(Some("observer")).map_err(err)?;
    walk += 1;
    ensure!(
        s.run_until_pause().map_err(err)? == RunStatus::Completed,
        "observer run incomplete"
    );
    walk += 1; // simulation ended
    ensure!(
        s.protocol().phase == P::Reflection,
        "after observer run: {:?}",
        s.protocol().phase
    );
    s.reflection_open().map_err(err)?;
    s.reflection_message("I saw the agricultural budget dip before it recovered.")
        .map_err(err)?;
    walk += 1;
    s.complete_reflection(NextStep::NewRole(SUPPLIER.into()))
        .map_err(err)?;
    walk += 1;
    s.begin(None).map_err(err)?;
    walk += 1;
    ensure!(
        s.protocol().current_role == SUPPLIER,
        "began as {}",
        s.protocol().current_role
    );
    let mut status = s.run_until_pause().map_err(err)?;
    while let RunStatus::AwaitingHuman { .. } = status {
        status = s
            .submit_human_decision("Recommend 60% to agriculture and 40% to the environment.")
            .map_err(err)?;
    }
    walk += 1;
    ensure!(
        status == RunStatus::Completed,
        "supplier run ended in {status:?}"
    );
    s.reflection_message("Being the data gatekeeper gave me influence but not control.\nThe decision maker compromised.").map_err(err)?;
    walk += 1;
    s.complete_reflection(NextStep::Integrate).map_err(err)?;
    walk += 1;
    s.reflection_message("Both perspectives show why incremental policy persists.")
        .map_err(err)?;
    walk += 1;
    s.complete_integration().map_err(err)?;
    walk += 1;
    ensure!(
        s.protocol().phase == P::Completion,
        "walk ended in {:?}",
        s.protocol().phase
    );
    let export = s.export().map_err(err)?;
    let on_disk = fs::read_to_string(dir.path().join("reflection.md")).map_err(err)?;
    ensure!(
        on_disk == export.markdown,
        "exported file differs from export"
    );
    let mut lines = 0;
    for entry in &s.protocol().responses {
        for line in entry.text.lines().filter(|l| !l.trim().is_empty()) {
            lines += 1;
            ensure!(
                export.markdown.contains(line),
                "export lacks logged line {line:?}"
            );
        }
    }
    ensure!(lines >= 4, "only {lines} logged lines");
    Ok(format!("{pairs} pairs, {} edges; {walk}-event walk reached Completion, {lines} logged lines exported", edges.len()))
}

// ---- 7 ----

/// Answers with fresh random content on every call.
struct Nondeterministic;

impl ChatBackend for Nondeterministic {
    fn complete(
        &mut self,
        request: &ChatRequest,
        _attempt: u32,
    ) -> Result<Completion, GatewayError> {
        let mut rng = rand::rng();
        let text = if request.caller.tag == HIGH_LEVEL {
            let a = f64::from(rng.random_range(20..=80_u32)) / 100.0;
            let d = PolicyDecision {
                share_agri: a,
                share_env: 1.0 - a,
                adj_meat: rng.random_range(-0.2..0.3),
                adj_pa: rng.random_range(-0.2..0.3),
            };
            format!("Decision {}.\n{}", rng.random::<u64>(), render_decision(&d))
        } else {
            format!("Statement {} from {}.", rng.random::<u64>(), request.caller)
        };
        Ok(Completion {
            text,
            usage: Usage {
                prompt_tokens: 10,
                completion_tokens: 5,
            },
        })
    }

    fn describe(&self) -> String {
        "nondeterministic".into()
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn determinism_and_replay() -> Outcome {
    let (a, b) = (
        tempfile::tempdir().map_err(err)?,
        tempfile::tempdir().map_err(err)?,
    );
    for dir in [&a, &b] {
        observer_run(SessionConfig {
            seed: 11,
            out_dir: Some(dir.path().into()),
            ..Default::default()
        })?;
    }
    let files = ["series.csv", "transcript.jsonl", "gateway.jsonl"];
    for f in files {
        let (x, y) = (
            read(&a.path().join("run-1").join(f))?,
            read(&b.path().join("run-1").join(f))?,
        );
        ensure!(
            !x.is_empty() && x == y,
            "{f} differs between identical runs"
        );
    }

    let mut replays = 0;
    for (name, backend) in [
        (
            "stub",
            Box::new(ScriptedBackend::new(default_book())) as Box<dyn ChatBackend>,
        ),
        ("nondeterministic", Box::new(Nondeterministic)),
    ] {
        let (rec, rep) = (
            tempfile::tempdir().map_err(err)?,
            tempfile::tempdir().map_err(err)?,
        );
        let cfg = SessionConfig {
            seed: 5,
            out_dir: Some(rec.path().into()),
            ..Default::default()
        };
        let original = supplier_run(cfg, backend, |p| {
            format!("Human briefing {p}: keep an eye on the deficit.")
        })?;
        let run_dir = rec.path().join("run-1");
        let replayed =
            replay(&run_dir, Some(rep.path().into())).map_err(|e| format!("{name}: {e}"))?;
        let recorded = read(&run_dir.join("series.csv"))?;
        ensure!(
            original.series_csv().as_bytes() == recorded,
            "{name}: in-memory and written CSV differ"
        );
        ensure!(
            read(&rep.path().join("run-1/series.csv"))? == recorded,
            "{name}: replayed CSV differs"
        );
        ensure!(
            replayed.series_csv().as_bytes() == recorded,
            "{name}: replayed session CSV differs"
        );
        ensure!(
            read(&rep.path().join("run-1/transcript.jsonl"))?
                == read(&run_dir.join("transcript.jsonl"))?,
            "{name}: replayed transcript differs"
        );
        replays += 1;
    }
    Ok(format!(
        "{} artifacts byte-identical across runs; {replays} record/replay pairs byte-identical",
        files.len()
    ))
}

// ---- 8 ----

fn human_takeover() -> Outcome {
    let marker =
        "Recommendation from the human supplier: shift to 60% agricultural and 40% environmental, \
                  raise the meat goal by 15% to 25% (ref HT-7731).";
    let cfg = SessionConfig {
        human_role: Some(SUPPLIER.into()),
        ..Default::default()
    };
    let mut s = Session::create("takeover", cfg).map_err(err)?;
    s.begin(None).map_err(err)?;
    let status = s.run_until_pause().map_err(err)?;
    ensure!(
        status
            == RunStatus::AwaitingHuman {
                agent: AgentId::from(SUPPLIER)
            },
        "status {status:?}"
    );
    ensure!(s.tick() == 15, "suspended at tick {}", s.tick());
    let first = s
        .network()
        .schedule
        .order
        .first()
        .map(|a| a.as_str().to_string());
    ensure!(
        first.as_deref() == Some(SUPPLIER) && s.messages().is_empty(),
        "not in the supplier's slot"
    );
    ensure!(
        s.snapshot().human_prompt.is_some(),
        "no prompt shown to the human"
    );

    let cursor = s.events().len() as u64;
    for _ in 0..3 {
        ensure!(
            s.run_until_pause().map_err(err)? == status,
            "status changed while suspended"
        );
    }
    s.focus(&["meat_supply".into()]).map_err(err)?;
    s.assistant_message("What is the trend in meat supply?")
        .map_err(err)?;
    ensure!(s.tick() == 15, "tick moved to {} while suspended", s.tick());
    let ticked = s
        .events()
        .since(cursor)
        .iter()
        .any(|e| matches!(e.body, EventBody::TickAdvanced { .. }));
    ensure!(!ticked, "tick event while suspended");

    let status = s.submit_human_decision(marker).map_err(err)?;
    ensure!(
        matches!(status, RunStatus::AwaitingHuman { .. }) && s.tick() == 30,
        "after submit: {status:?} at tick {}",
        s.tick()
    );
    let prompt = s
        .gateway()
        .log()
        .iter()
        .find(|c| c.tag == HIGH_LEVEL && c.index == 1)
        .map(|c| {
            format!(
                "{}\n{}",
                c.system,
                c.messages
                    .iter()
                    .map(|m| m.content.as_str())
                    .collect::<Vec<_>>()
                    .join("\n")
            )
        })
        .ok_or("no high-level call in phase 1")?;
    ensure!(
        prompt.contains(marker),
        "high-level prompt lacks the submitted text"
    );
    let supplier_msg = s
        .messages()
        .iter()
        .find(|m| m.authored_by_human)
        .ok_or("no human message")?;
    ensure!(supplier_msg.text == marker, "transcript altered the text");
    Ok("suspended at tick 15 in the supplier slot, no ticks while suspended, text verbatim in high-level prompt".into())
}

// ---- 9 ----

fn assistant_numerics() -> Outcome {
    for (c, n) in [(5.0, 1), (-2.25, 7), (1e6, 30)] {
        let pts: Vec<(u64, f64)> = (0..n).map(|t| (t as u64, c)).collect();
        let s = describe_stats("c", &pts).map_err(err)?;
        ensure!(
            s.mean == c && s.min == c && s.max == c && s.std == 0.0 && s.slope == 0.0,
            "constant {c}: {s:?}"
        );
    }
    // y = a + b t on t = 0..n-1: mean a + b(n-1)/2, population std |b| sqrt((n^2-1)/12), slope b
    for (a, b, n) in [(2.0, 3.0, 10_u64), (-1.0, -0.5, 16), (0.0, 0.25, 4)] {
        let pts: Vec<(u64, f64)> = (0..n).map(|t| (t, a + b * t as f64)).collect();
        let s = describe_stats("l", &pts).map_err(err)?;
        let nf = n as f64;
        let (mean, std) = (
            a + b * (nf - 1.0) / 2.0,
            b.abs() * ((nf * nf - 1.0) / 12.0).sqrt(),
        );
        ensure!(s.mean == mean && s.slope == b, "linear {a}+{b}t: {s:?}");
        ensure!(
            s.min == a.min(a + b * (nf - 1.0)) && s.max == a.max(a + b * (nf - 1.0)),
            "linear extremes {s:?}"
        );
        ensure!(
            (s.std - std).abs() <= 1e-12 * std,
            "linear std {} vs {std}",
            s.std
        );
    }

    let mut s = Session::create(
        "saa",
        SessionConfig {
            human_role: Some(SUPPLIER.into()),
            ..Default::default()
        },
    )
    .map_err(err)?;
    s.begin(None).map_err(err)?;
    s.run_until_pause().map_err(err)?;
    let columns = ["meat_supply".to_string(), "surplus_agri".to_string()];
    let out = s.focus(&columns).map_err(err)?.ok_or("no analysis")?;
    let text = out.text();
    let csv_text = s.series_csv();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(err)?.clone();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(err)?;
    for col in &columns {
        let idx = headers
            .iter()
            .position(|h| h == col)
            .ok_or("missing column")?;
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r[0].parse().unwrap(), r[idx].parse().unwrap()))
            .collect();
        let n = pts.len() as f64;
        let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let std = (pts.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let slope = ols_slope(&pts);
        let block = format!(
            "| {col} | value |\n|---|---|\n| count | {} |\n| mean | {mean:.6} |\n| min | {min:.6} |\n| max | {max:.6} |\n| std | {std:.6} |\n| slope | {slope:.6} |\n",
            pts.len()
        );
        ensure!(
            text.contains(&block),
            "analysis lacks the table for {col}:\n{block}"
        );
    }
    Ok("closed forms hold on constant and linear series; analysis quotes its statistics table verbatim".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("structural run", structural_run),
        ("budget identity", budget_identity),
        ("oracle equivalence", oracle_equivalence),
        ("surplus dip and recovery", surplus_dip_pattern),
        ("parser corpus", parser_corpus),
        ("protocol exhaustiveness", protocol_walk),
        ("determinism and replay", determinism_and_replay),
        ("human takeover", human_takeover),
        ("assistant numerics", assistant_numerics),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
