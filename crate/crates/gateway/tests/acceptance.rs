//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use idcoach_core::board::Blackboard;
use idcoach_core::engine::{self, agenda, is_complete, Choice};
use idcoach_core::idiag::{Cpt, Diagram, NodeId, NodeKind, Possibility, Unit, VariableType};
use idcoach_core::ks::{build_task_cpt, Answer};
use idcoach_core::solve::{self, enumerated_expectations, evaluate_core, joint_enumeration, npv, prob_ta, Discounting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::common::{self, golden_script, random_consultation, run_golden, CORE_CONTRIBUTION, CORE_TA};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core_diagram() -> Outcome {
    let d = Diagram::new_core();
    let value = d.value_node().ok_or("no value node")?;
    let contributors = d.contributors(value).map_err(|e| e.to_string())?;
    ensure(d.node_count() == 5, || format!("{} nodes", d.node_count()))?;
    ensure(contributors.len() == 5, || format!("{} contributors", contributors.len()))?;
    Ok("5 nodes, 5 contributors of the value node".into())
}

fn binary(d: &mut Diagram, name: &str, p: f64) -> NodeId {
    let id = d.add_node(NodeKind::Chance, VariableType::Hurdle, name, vec![], Unit::dimensionless()).unwrap();
    d.set_cpt(id, Cpt::marginal(vec![p, 1.0 - p])).unwrap();
    id
}

fn two_hurdle_task() -> Outcome {
    let mut d = Diagram::new_core();
    let core = d.core().unwrap();
    let h1 = binary(&mut d, "H1", 0.9);
    let h2 = binary(&mut d, "H2", 0.8);
    let cpt = build_task_cpt(&[h1, h2], 0.85).map_err(|e| e.to_string())?;
    for (states, expected) in [([0, 0], 0.85), ([0, 1], 0.0), ([1, 0], 0.0), ([1, 1], 0.0)] {
        let got = cpt.row(&states, &[2, 2])[0];
        ensure(got == expected, || format!("P(success | {states:?}) = {got}"))?;
    }
    let task = d.add_node(NodeKind::Chance, VariableType::Task, "Task", vec![], Unit::dimensionless()).unwrap();
    d.add_arc(h1, task).unwrap();
    d.add_arc(h2, task).unwrap();
    d.set_cpt(task, cpt).unwrap();
    d.add_arc(task, core.technical).unwrap();
    d.set_cpt(core.technical, Cpt::new(vec![task], vec![vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
    for id in [core.contribution, core.investment] {
        d.set_possibilities(id, vec![Possibility::valued("only", 1.0)]).unwrap();
        d.set_cpt(id, Cpt::marginal(vec![1.0])).unwrap();
    }
    let reduced = prob_ta(&d).map_err(|e| e.to_string())?;
    let oracle = joint_enumeration(&d).map_err(|e| e.to_string())?.marginal(core.technical, 2).ok_or("no marginal")?[0];
    ensure((reduced - 0.612).abs() <= 1e-9, || format!("prob_ta = {reduced}"))?;
    ensure((reduced - oracle).abs() <= 1e-9, || format!("reduction {reduced} vs enumeration {oracle}"))?;
    Ok(format!("prob_ta = {reduced:.12}, enumeration = {oracle:.12}"))
}

fn names(bb: &Blackboard, ids: &[NodeId]) -> Vec<String> {
    ids.iter().map(|id| bb.diagram().node(*id).unwrap().name.clone()).collect()
}

fn eligibility() -> Outcome {
    let fresh = Blackboard::new(Default::default()).unwrap();
    let mut first = names(&fresh, &agenda(&fresh).eligible_ids());
    first.sort();
    let mut want = vec![CORE_TA.to_string(), CORE_CONTRIBUTION.to_string()];
    want.sort();
    ensure(first == want, || format!("fresh agenda {first:?}"))?;
    let (mut technical_done, mut investment_seen) = (None, None);
    run_golden(|i, bb, out| {
        let core = bb.diagram().core().unwrap();
        if technical_done.is_none() && bb.fully_assessed(core.technical) {
            technical_done = Some(i);
        }
        if investment_seen.is_none() && out.agenda.eligible_ids().contains(&core.investment) {
            investment_seen = Some(i);
        }
    });
    ensure(technical_done.is_some() && technical_done == investment_seen, || {
        format!("technical model done at step {technical_done:?}, investment first eligible at {investment_seen:?}")
    })?;
    Ok(format!("fresh agenda {first:?}; investment eligible right after step {}", technical_done.unwrap() + 1))
}

fn focus_stack() -> Outcome {
    let mut depths = Vec::new();
    let mut tops = Vec::new();
    run_golden(|_, bb, _| {
        depths.push(bb.focus().as_slice().len());
        tops.push(names(bb, &[*bb.focus().as_slice().last().unwrap()])[0].clone());
    });
    ensure(depths[0] == 2, || format!("depth {} after decomposing the technical node", depths[0]))?;
    ensure(tops[1] == "A", || format!("focus after opening A is {}", tops[1]))?;
    ensure(tops[4] == CORE_TA && depths[4] == 2, || format!("A not popped: focus top {} depth {}", tops[4], depths[4]))?;
    Ok(format!("depths per step {depths:?}"))
}

fn reduction_soundness() -> Outcome {
    let disc = Discounting::default();
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = common::random_assessed_diagram(&mut rng);
        let ev = evaluate_core(&d, &disc).map_err(|e| format!("seed {seed}: {e}"))?;
        let oracle = enumerated_expectations(&d, &disc).map_err(|e| format!("seed {seed}: {e}"))?;
        let err = [
            (ev.p_ta - oracle.p_ta).abs(),
            (ev.e_invest_pv - oracle.e_invest_pv).abs(),
            (ev.e_npv_fund - oracle.e_npv_fund()).abs(),
            (ev.p_ta * ev.e_contrib_pv_given_success - oracle.e_contrib_pv_joint).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        ensure(err <= 1e-9, || format!("seed {seed}: error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("200 diagrams, largest error {worst:.1e}"))
}

fn golden_end_to_end() -> Outcome {
    let mut complete = Vec::new();
    let bb = run_golden(|_, bb, _| complete.push(is_complete(bb)));
    let last = complete.len() - 1;
    ensure(complete[..last].iter().all(|c| !c) && complete[last], || format!("completion flags {complete:?}"))?;
    let ev = solve::evaluate(bb.diagram(), &bb.globals().discounting()).map_err(|e| e.to_string())?;
    let ta = bb.diagram().core().unwrap().technical;
    let oracle = joint_enumeration(bb.diagram()).map_err(|e| e.to_string())?.marginal(ta, 2).ok_or("no marginal")?[0];
    ensure((ev.p_ta - 0.25704).abs() <= 1e-9, || format!("p_ta = {}", ev.p_ta))?;
    ensure((ev.p_ta - oracle).abs() <= 1e-9, || format!("p_ta {} vs enumeration {oracle}", ev.p_ta))?;
    let hand = common::golden_e_npv();
    ensure((ev.e_npv_fund - hand).abs() <= 1e-6, || format!("e_npv_fund {} vs hand {hand}", ev.e_npv_fund))?;
    Ok(format!("p_ta = {:.5}, e_npv_fund = {:.6} (hand {hand:.6})", ev.p_ta, ev.e_npv_fund))
}

fn replay_determinism() -> Outcome {
    let mut checked = 0;
    let mut redone = 0;
    for seed in 0..50u64 {
        let mut states: Vec<Blackboard> = vec![Blackboard::new(Default::default()).unwrap()];
        let mut steps = Vec::new();
        let mut failure = None;
        let fin = random_consultation(seed, 80, |_, after, taken| {
            if !taken.accepted {
                return;
            }
            checked += 1;
            if failure.is_none() && Blackboard::replay(after.log()).as_ref() != Ok(after) {
                failure = Some(format!("seed {seed}: replay differs after step {}", steps.len() + 1));
            }
            states.push(after.clone());
            steps.push((taken.choice, taken.answers.clone()));
        });
        if let Some(f) = failure {
            return Err(f);
        }
        let checkpoints = fin.checkpoints();
        let (seq, _) = checkpoints[checkpoints.len() / 2].clone();
        let k = (0..states.len())
            .rev()
            .find(|k| states[*k].log().last().map(|e| e.seq) == Some(seq))
            .ok_or_else(|| format!("seed {seed}: no step ends at checkpoint {seq}"))?;
        let mut bb = fin.truncate_to(seq).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(bb == states[k], || format!("seed {seed}: truncation to {seq} differs from the live state"))?;
        for (choice, answers) in &steps[k..] {
            engine::step(&mut bb, *choice, answers).map_err(|e| format!("seed {seed}: redo failed: {e}"))?;
        }
        ensure(bb == fin, || format!("seed {seed}: redo does not reproduce the final state"))?;
        redone += steps.len() - k;
    }
    Ok(format!("50 consultations, {checked} replays checked, {redone} steps redone"))
}

fn invalid_candidates() -> Vec<Answer> {
    vec![
        Answer::Text("\u{1}not-an-option".into()),
        Answer::Number(f64::NAN),
        Answer::Number(-1.0),
        Answer::Number(1.5),
        Answer::Numbers(vec![f64::NAN]),
        Answer::Texts(vec![]),
        Answer::Texts(vec![String::new()]),
    ]
}

fn atomicity() -> Outcome {
    let mut bb = Blackboard::new(Default::default()).unwrap();
    let mut injected = 0;
    for (i, (pick, answers)) in golden_script().into_iter().enumerate() {
        let choice: Choice = pick.resolve(&bb);
        for key in answers.keys() {
            let len = bb.log().len();
            let mut rejected = false;
            for bad in invalid_candidates() {
                let mut tampered = answers.clone();
                tampered.insert(key.clone(), bad);
                let mut trial = bb.clone();
                if engine::step(&mut trial, choice, &tampered).is_err() {
                    ensure(trial.log().len() == len && trial == bb, || format!("step {}: `{key}` changed the board", i + 1))?;
                    rejected = true;
                    injected += 1;
                    break;
                }
            }
            ensure(rejected, || format!("step {}: no invalid answer found for `{key}`", i + 1))?;
        }
        engine::step(&mut bb, choice, &answers).map_err(|e| e.to_string())?;
    }
    Ok(format!("{injected} injections, log unchanged at each"))
}

fn npv_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let flows: Vec<f64> = (0..rng.gen_range(0..20)).map(|_| rng.gen_range(-1e6..1e6)).collect();
        let sum: f64 = flows.iter().sum();
        let pv = npv(&flows, 0.0).map_err(|e| e.to_string())?;
        ensure(pv == sum, || format!("rate 0: {pv} vs sum {sum}"))?;
    }
    let hand = npv(&[-100.0, 60.0, 60.0], 0.1).map_err(|e| e.to_string())?;
    ensure((hand - 3.756).abs() <= 1e-3, || format!("[-100, 60, 60] at 10% = {hand}"))?;
    let disc = Discounting::default();
    for seed in 0..50u64 {
        let base = evaluate_core(&common::random_scaled_diagram(&mut ChaCha8Rng::seed_from_u64(seed), 1.0), &disc)
            .map_err(|e| e.to_string())?;
        for k in [0.01, 1.0, 1000.0] {
            let ev = evaluate_core(&common::random_scaled_diagram(&mut ChaCha8Rng::seed_from_u64(seed), k), &disc)
                .map_err(|e| e.to_string())?;
            ensure(ev.decision == base.decision, || format!("seed {seed}: decision changes at scale {k}"))?;
            ensure((ev.e_npv_fund - k * base.e_npv_fund).abs() <= 1e-9 * k.max(1.0) * base.e_npv_fund.abs().max(1.0), || {
                format!("seed {seed}: npv does not scale by {k}")
            })?;
        }
    }
    Ok(format!("rate-0 identity exact, [-100, 60, 60] at 10% = {hand:.4}, decisions scale-invariant"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("core diagram", core_diagram, Duration::from_millis(1)),
        ("task table and single-task probability", two_hurdle_task, Duration::from_millis(10)),
        ("agenda eligibility", eligibility, Duration::from_secs(1)),
        ("focus stack", focus_stack, Duration::from_secs(1)),
        ("reduction soundness", reduction_soundness, Duration::from_secs(5)),
        ("golden consultation end to end", golden_end_to_end, Duration::from_secs(1)),
        ("replay determinism", replay_determinism, Duration::from_secs(10)),
        ("atomicity of rejected answers", atomicity, Duration::from_secs(1)),
        ("NPV properties", npv_properties, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("took {elapsed:?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1} ms]", elapsed.as_secs_f64() * 1e3),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.1} ms]", elapsed.as_secs_f64() * 1e3);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
