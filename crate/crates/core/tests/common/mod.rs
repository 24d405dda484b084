//! Consultation drivers shared by the integration tests: the two-task
//! golden consultation and a seeded random consultant.

#![allow(dead_code)]

use idcoach_core::board::Blackboard;
use idcoach_core::engine::{self, agenda, Choice, MenuOption, StepOutcome};
use idcoach_core::idiag::{Cpt, Diagram, NodeId, NodeKind, Possibility, Unit, VariableType};
use idcoach_core::ks::{Answer, Answers, DialogProgram, InputSpec};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn by_name(bb: &Blackboard, name: &str) -> NodeId {
    let found = bb.diagram().find_by_name(name);
    assert_eq!(found.len(), 1, "expected exactly one node named {name}");
    found[0]
}

pub fn answers(xs: &[(&str, Answer)]) -> Answers {
    xs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// A step of a scripted consultation; nodes are named, not numbered.
#[derive(Debug, Clone)]
pub enum Pick {
    Node(&'static str),
    Option(MenuOption),
}

impl Pick {
    pub fn resolve(&self, bb: &Blackboard) -> Choice {
        match self {
            Pick::Node(name) => Choice::Node(by_name(bb, name)),
            Pick::Option(o) => Choice::Option(*o),
        }
    }
}

pub use idcoach_core::idiag::{CONTRIBUTION_NAME as CORE_CONTRIBUTION, INVESTMENT_NAME as CORE_INVESTMENT, TECHNICAL_NAME as CORE_TA};

/// Golden inputs.
pub const HURDLES_A: [f64; 2] = [0.9, 0.8];
pub const HURDLES_B: [f64; 2] = [0.7, 0.6];
pub const RESIDUALS: [f64; 2] = [0.85, 1.0];
pub const PROFIT_PER_PERIOD: f64 = 50.0;
pub const PROFIT_START: u32 = 2;
pub const PROFIT_PERIODS: u32 = 5;
pub const INVESTMENT_PV: f64 = 20.0;

fn decompose(prefix: &str, hurdles: &[&str]) -> Answers {
    answers(&[
        (&format!("{prefix}.method"), Answer::text("decompose")),
        (&format!("{prefix}.hurdles"), Answer::names(hurdles)),
        (&format!("{prefix}.performance"), Answer::Numbers(vec![])),
        (&format!("{prefix}.uncertainties"), Answer::Numbers(vec![])),
    ])
}

fn hurdle(p: f64) -> Answers {
    answers(&[("hurdle.method", Answer::text("direct")), ("hurdle.probability", Answer::Number(p))])
}

/// Two parallel tasks, both required, each with two hurdles; contribution
/// from a constant profit stream, investment as a certain total.
pub fn golden_script() -> Vec<(Pick, Answers)> {
    vec![
        (
            Pick::Node(CORE_TA),
            answers(&[
                ("ta.structure", Answer::text("multiple")),
                ("ta.tasks", Answer::names(&["A", "B"])),
                ("ta.requirement", Answer::text("all-required")),
                ("ta.schedule", Answer::text("parallel")),
            ]),
        ),
        (Pick::Node("A"), decompose("task", &["A1", "A2"])),
        (Pick::Node("A1"), hurdle(HURDLES_A[0])),
        (Pick::Node("A2"), hurdle(HURDLES_A[1])),
        (Pick::Node("A"), answers(&[("task.residual", Answer::Number(RESIDUALS[0]))])),
        (Pick::Node("B"), decompose("task", &["B1", "B2"])),
        (Pick::Node("B1"), hurdle(HURDLES_B[0])),
        (Pick::Node("B2"), hurdle(HURDLES_B[1])),
        (Pick::Node("B"), answers(&[("task.residual", Answer::Number(RESIDUALS[1]))])),
        (
            Pick::Node(CORE_CONTRIBUTION),
            answers(&[
                ("contribution.method", Answer::text("components")),
                ("contribution.related", Answer::text("no")),
                ("contribution.capital", Answer::text("no")),
            ]),
        ),
        (
            Pick::Node("Profit"),
            answers(&[
                ("profit.method", Answer::text("series")),
                ("series.form", Answer::text("constant")),
                ("series.start", Answer::Number(PROFIT_START as f64)),
                ("series.duration", Answer::Number(PROFIT_PERIODS as f64)),
                ("series.amount.mode", Answer::text("certain")),
                ("series.amount.value", Answer::Number(PROFIT_PER_PERIOD)),
            ]),
        ),
        (
            Pick::Node(CORE_INVESTMENT),
            answers(&[
                ("investment.method", Answer::text("total")),
                ("investment.mode", Answer::text("certain")),
                ("investment.value", Answer::Number(INVESTMENT_PV)),
            ]),
        ),
    ]
}

/// Run the golden consultation, calling `observe` after every step.
pub fn run_golden(mut observe: impl FnMut(usize, &Blackboard, &StepOutcome)) -> Blackboard {
    let mut bb = Blackboard::new(Default::default()).unwrap();
    for (i, (pick, a)) in golden_script().into_iter().enumerate() {
        let choice = pick.resolve(&bb);
        let out = engine::step(&mut bb, choice, &a).unwrap_or_else(|e| panic!("golden step {i}: {e}"));
        observe(i, &bb, &out);
    }
    bb
}

/// Closed-form P(TA) for the golden inputs.
pub fn golden_p_ta() -> f64 {
    RESIDUALS[0] * HURDLES_A[0] * HURDLES_A[1] * RESIDUALS[1] * HURDLES_B[0] * HURDLES_B[1]
}

/// Closed-form expected NPV of funding for the golden inputs at 10%.
pub fn golden_e_npv() -> f64 {
    let pv: f64 = (PROFIT_START..PROFIT_START + PROFIT_PERIODS)
        .map(|t| PROFIT_PER_PERIOD / 1.1f64.powi(t as i32))
        .sum();
    golden_p_ta() * pv - INVESTMENT_PV
}

/// Valid random answers to every prompt the program asks.
pub fn random_answers(program: &DialogProgram, bb: &Blackboard, rng: &mut ChaCha8Rng, counter: &mut u32) -> Answers {
    let mut out = Answers::new();
    while let Some(step) = program.next_prompt(&out) {
        let answer = match &step.input {
            InputSpec::Choice { options } => Answer::Text(options.choose(rng).expect("options").id.clone()),
            InputSpec::Names { min, max } => {
                let n = rng.gen_range(*min..=(*max).min(min + 2));
                Answer::Texts(
                    (0..n)
                        .map(|_| {
                            *counter += 1;
                            format!("n{counter}")
                        })
                        .collect(),
                )
            }
            InputSpec::Number { min, max, integer, .. } => {
                let lo = min.unwrap_or(0.0).max(0.0);
                let v = if *integer { lo.ceil() + rng.gen_range(0..3) as f64 } else { lo + rng.gen_range(0.0..10.0) };
                Answer::Number(max.map_or(v, |m| v.min(m)).max(min.unwrap_or(f64::MIN)))
            }
            InputSpec::Probability => Answer::Number((rng.gen_range(0.0..=1.0f64) * 100.0).round() / 100.0),
            InputSpec::ThreePoint { .. } => {
                let mut xs: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..100.0f64).round()).collect();
                xs.sort_by(f64::total_cmp);
                Answer::Numbers(xs)
            }
            InputSpec::Distribution { over } => {
                let n = out.get(over).and_then(Answer::as_names).map_or(0, |v| v.len());
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = w.iter().sum();
                let mut ps: Vec<f64> = w.iter().map(|x| x / total).collect();
                if n > 0 {
                    let rest: f64 = ps[..n - 1].iter().sum();
                    ps[n - 1] = (1.0 - rest).max(0.0);
                }
                Answer::Numbers(ps)
            }
            InputSpec::Subset { of } => {
                let pool = out.get(of).and_then(Answer::as_names).unwrap_or_default();
                Answer::Texts(pool.into_iter().filter(|_| rng.gen_bool(0.5)).collect())
            }
            InputSpec::Text => {
                *counter += 1;
                Answer::Text(format!("t{counter}"))
            }
            InputSpec::Nodes => Answer::Numbers(bb.focus().as_slice().iter().map(|n| n.0 as f64).collect()),
        };
        out.insert(step.id.clone(), answer);
    }
    out
}

/// A consultation step taken by the random consultant.
pub struct Taken {
    pub choice: Choice,
    pub answers: Answers,
    pub accepted: bool,
}

/// Drive a consultation with random choices and answers. Node choices
/// dominate; menu commands are mixed in occasionally.
pub fn random_consultation(
    seed: u64,
    max_steps: usize,
    mut observe: impl FnMut(&Blackboard, &Blackboard, &Taken),
) -> Blackboard {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counter = 0;
    let mut bb = Blackboard::new(Default::default()).unwrap();
    for _ in 0..max_steps {
        let ag = agenda(&bb);
        let choice = if !ag.eligible.is_empty() && rng.gen_bool(0.9) {
            Choice::Node(ag.eligible.choose(&mut rng).unwrap().id)
        } else {
            let menu = [MenuOption::EvaluateTa, MenuOption::UserProfile, MenuOption::ProjectGlobals, MenuOption::Backtrack];
            let enabled: Vec<MenuOption> =
                menu.into_iter().filter(|o| ag.offers(Choice::Option(*o))).collect();
            match enabled.choose(&mut rng) {
                Some(o) => Choice::Option(*o),
                None if ag.eligible.is_empty() => break,
                None => continue,
            }
        };
        let program = engine::program_for(&bb, choice).unwrap();
        let a = random_answers(&program, &bb, &mut rng, &mut counter);
        let before = bb.clone();
        let accepted = engine::step(&mut bb, choice, &a).is_ok();
        observe(&before, &bb, &Taken { choice, answers: a, accepted });
        if engine::is_complete(&bb) {
            break;
        }
    }
    bb
}

fn random_rows(d: &Diagram, parents: &[NodeId], card: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let rows: usize = parents.iter().map(|p| d.node(*p).unwrap().possibilities.len()).product();
    (0..rows)
        .map(|_| {
            let w: Vec<f64> = (0..card).map(|_| rng.gen_range(0.0..1.0f64) + 1e-3).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
        .collect()
}

fn random_parents(pool: &[NodeId], rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    pool.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
}

/// A fully assessed core diagram with up to six chance variables of at most
/// three outcomes each, wired and quantified at random.
pub fn random_assessed_diagram(rng: &mut ChaCha8Rng) -> Diagram {
    random_scaled_diagram(rng, 1.0)
}

/// As [`random_assessed_diagram`], with every money amount multiplied by `k`.
pub fn random_scaled_diagram(rng: &mut ChaCha8Rng, k: f64) -> Diagram {
    let mut d = Diagram::new_core();
    let core = d.core().unwrap();
    let mut extras = Vec::new();
    for i in 0..rng.gen_range(0..=3) {
        let card = rng.gen_range(2..=3);
        let poss = (0..card).map(|s| Possibility::label(format!("s{s}"))).collect();
        let id = d
            .add_node(NodeKind::Chance, VariableType::GeneralUncertainty, &format!("X{i}"), poss, Unit::dimensionless())
            .unwrap();
        let parents = random_parents(&extras, rng);
        for p in &parents {
            d.add_arc(*p, id).unwrap();
        }
        let rows = random_rows(&d, &parents, card, rng);
        d.set_cpt(id, Cpt::new(parents, rows)).unwrap();
        extras.push(id);
    }
    let ta_parents = random_parents(&extras, rng);
    for p in &ta_parents {
        d.add_arc(*p, core.technical).unwrap();
    }
    let rows = random_rows(&d, &ta_parents, 2, rng);
    d.set_cpt(core.technical, Cpt::new(ta_parents, rows)).unwrap();

    let mut amount_pool = extras.clone();
    amount_pool.push(core.technical);
    for id in [core.contribution, core.investment] {
        let card = rng.gen_range(1..=3);
        let poss = (0..card).map(|s| Possibility::valued(format!("v{s}"), k * rng.gen_range(-50.0..150.0f64).round())).collect();
        d.set_possibilities(id, poss).unwrap();
        let parents = random_parents(&amount_pool, rng);
        for p in &parents {
            d.add_arc(*p, id).unwrap();
        }
        let rows = random_rows(&d, &parents, card, rng);
        d.set_cpt(id, Cpt::new(parents, rows)).unwrap();
    }
    d
}
