use proptest::prelude::*;

use super::*;
use crate::board::ProjectGlobals;
use crate::idiag::{NodeKind, Payload, VariableType};

fn fresh() -> Blackboard {
    Blackboard::new(ProjectGlobals::default()).unwrap()
}

fn answers(xs: &[(&str, Answer)]) -> Answers {
    xs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn run(bb: &mut Blackboard, target: NodeId, a: &[(&str, Answer)]) -> Result<Delta, KsError> {
    let ks = specialist_for(bb, target).ok_or(KsError::NoSource(target))?;
    execute_ks(bb, ks, Some(target), &answers(a))
}

fn ids(xs: &[u32]) -> Vec<NodeId> {
    xs.iter().map(|x| NodeId(*x)).collect()
}

fn by_name(bb: &Blackboard, name: &str) -> NodeId {
    bb.diagram().find_by_name(name)[0]
}

/// TA split into tasks A and B, all required, in parallel.
fn two_tasks() -> Blackboard {
    let mut bb = fresh();
    let ta = bb.diagram().core().unwrap().technical;
    run(
        &mut bb,
        ta,
        &[
            ("ta.structure", Answer::text("multiple")),
            ("ta.tasks", Answer::names(&["A", "B"])),
            ("ta.requirement", Answer::text("all-required")),
            ("ta.schedule", Answer::text("parallel")),
        ],
    )
    .unwrap();
    bb
}

fn decompose(bb: &mut Blackboard, task: NodeId, hurdles: &[&str]) {
    run(
        bb,
        task,
        &[
            ("task.method", Answer::text("decompose")),
            ("task.hurdles", Answer::names(hurdles)),
            ("task.performance", Answer::Numbers(vec![])),
            ("task.uncertainties", Answer::Numbers(vec![])),
        ],
    )
    .unwrap();
}

#[test]
fn three_point_discretization() {
    let mean = |tp| discretize_three_point(&tp).unwrap().iter().map(|(v, p)| v * p).sum::<f64>();
    assert_eq!(mean(ThreePoint::certain(10.0)), 10.0);
    assert_eq!(mean(ThreePoint::new(8.0, 10.0, 12.0)), 10.0);
    assert_eq!(mean(ThreePoint::new(0.0, 10.0, 40.0)), 0.25 * 0.0 + 0.5 * 10.0 + 0.25 * 40.0);
    assert!(discretize_three_point(&ThreePoint::new(3.0, 2.0, 1.0)).is_err());
}

#[test]
fn performance_threshold_probabilities() {
    let tp = ThreePoint::new(400.0, 500.0, 600.0);
    assert_eq!(performance_to_hurdle(450.0, Comparison::AtLeast, &tp).unwrap(), 0.75);
    assert_eq!(performance_to_hurdle(300.0, Comparison::AtLeast, &tp).unwrap(), 1.0);
    assert_eq!(performance_to_hurdle(700.0, Comparison::AtLeast, &tp).unwrap(), 0.0);
    // ties pass
    assert_eq!(performance_to_hurdle(500.0, Comparison::AtLeast, &tp).unwrap(), 0.75);
    assert_eq!(performance_to_hurdle(500.0, Comparison::AtMost, &tp).unwrap(), 0.75);
}

#[test]
fn task_tables() {
    let cpt = build_task_cpt(&ids(&[1, 2]), 0.85).unwrap();
    assert_eq!(cpt.rows, vec![vec![0.85, 0.15000000000000002], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
    let and = build_task_cpt(&ids(&[1, 2]), 1.0).unwrap();
    assert_eq!(and.rows[0], vec![1.0, 0.0]);
    let three = build_task_cpt(&ids(&[1, 2, 3]), 0.5).unwrap();
    assert_eq!(three.rows.len(), 8);
    assert_eq!(three.rows.iter().filter(|r| r[0] == 0.5).count(), 1);
    assert_eq!(three.rows.iter().filter(|r| r[0] == 0.0).count(), 7);
    assert!(three.rows.iter().all(|r| r[0] + r[1] == 1.0));
    assert!(build_task_cpt(&ids(&[1]), 1.2).is_err());
    assert!(build_task_cpt(&[], 0.5).is_err());
}

#[test]
fn technical_achievement_tables() {
    let and = combine_tasks_cpt(&ids(&[1, 2]), Requirement::AllRequired).unwrap();
    assert_eq!(and.rows, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
    let or = combine_tasks_cpt(&ids(&[1, 2]), Requirement::AtLeastOne).unwrap();
    assert_eq!(or.rows, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    for mode in [Requirement::AllRequired, Requirement::AtLeastOne] {
        let one = combine_tasks_cpt(&ids(&[1]), mode).unwrap();
        assert_eq!(one.rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
}

#[test]
fn units_reconcile_examples() {
    let thousands = Unit::items().scaled(1000.0);
    let price = Unit::currency() / Unit::items();
    assert_eq!(
        units_reconcile(UnitOp::Multiply, &[thousands, price], &Unit::currency()),
        Ok(Conversion::Factor(1000.0))
    );
    let rate = Unit::items() / Unit::periods();
    assert_eq!(
        units_reconcile(UnitOp::Multiply, &[rate, price], &Unit::currency_per_period()),
        Ok(Conversion::Factor(1.0))
    );
    assert!(units_reconcile(UnitOp::Add, &[Unit::currency(), Unit::items()], &Unit::currency()).is_err());
}

#[test]
fn eligible_sources_by_target() {
    let bb = fresh();
    let core = bb.diagram().core().unwrap();
    let ks: Vec<&str> = eligible_ks(&bb, Some(core.technical)).iter().map(|k| k.id).collect();
    assert_eq!(ks, vec!["technical-achievement"]);
    assert!(eligible_ks(&bb, Some(core.value)).is_empty());
    assert!(eligible_ks(&bb, Some(core.decision)).is_empty());

    let bb = two_tasks();
    assert!(eligible_ks(&bb, Some(core.technical)).is_empty());

    let mut bb = two_tasks();
    let a = by_name(&bb, "A");
    decompose(&mut bb, a, &["H1", "H2"]);
    // criteria pending: nothing applies to A yet
    assert!(eligible_ks(&bb, Some(a)).is_empty());
    for h in ["H1", "H2"] {
        let id = by_name(&bb, h);
        run(&mut bb, id, &[("hurdle.method", Answer::text("direct")), ("hurdle.probability", Answer::Number(0.9))])
            .unwrap();
    }
    let ks = eligible_ks(&bb, Some(a));
    assert_eq!(ks.len(), 1);
    assert_eq!(ks[0].id, "task");
    let prompts: Vec<String> = ks[0].program(&bb, Some(a)).steps.into_iter().map(|s| s.id).collect();
    assert_eq!(prompts, vec!["task.residual"]);
}

#[test]
fn conditions_are_pure() {
    let mut bb = two_tasks();
    let a = by_name(&bb, "A");
    decompose(&mut bb, a, &["H1"]);
    let before = bb.clone();
    for id in bb.diagram().node_ids().collect::<Vec<_>>() {
        let first: Vec<&str> = eligible_ks(&bb, Some(id)).iter().map(|k| k.id).collect();
        let second: Vec<&str> = eligible_ks(&bb, Some(id)).iter().map(|k| k.id).collect();
        assert_eq!(first, second);
    }
    let _ = eligible_ks(&bb, None);
    assert_eq!(bb, before);
}

#[test]
fn ta_specialist_adds_tasks_and_focuses() {
    let bb = two_tasks();
    let core = bb.diagram().core().unwrap();
    let (a, b) = (by_name(&bb, "A"), by_name(&bb, "B"));
    assert_eq!(bb.diagram().parents(core.technical), vec![a, b]);
    assert_eq!(bb.focus().depth(), 2);
    assert_eq!(bb.focus().top(), core.technical);
    assert_eq!(bb.status(core.technical), Some(AssessmentStatus::Assessed));
    assert_eq!(bb.status(a), Some(AssessmentStatus::Unassessed));
}

#[test]
fn ta_specialist_checks_task_count() {
    let mut bb = fresh();
    let ta = bb.diagram().core().unwrap().technical;
    let before = bb.clone();
    let err = run(&mut bb, ta, &[("ta.structure", Answer::text("single")), ("ta.tasks", Answer::names(&["A", "B"]))]);
    assert!(matches!(err, Err(KsError::Rejected(_))));
    let err = run(
        &mut bb,
        ta,
        &[
            ("ta.structure", Answer::text("multiple")),
            ("ta.tasks", Answer::names(&["A"])),
            ("ta.requirement", Answer::text("all-required")),
            ("ta.schedule", Answer::text("parallel")),
        ],
    );
    assert!(matches!(err, Err(KsError::Rejected(_))));
    assert_eq!(bb, before);
    run(&mut bb, ta, &[("ta.structure", Answer::text("single")), ("ta.tasks", Answer::names(&["Only"]))]).unwrap();
    let only = by_name(&bb, "Only");
    assert_eq!(bb.diagram().node(ta).unwrap().cpt().unwrap().rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(bb.diagram().parents(ta), vec![only]);
}

#[test]
fn hurdle_probability_and_rejection() {
    let mut bb = two_tasks();
    let a = by_name(&bb, "A");
    decompose(&mut bb, a, &["H1"]);
    let h = by_name(&bb, "H1");
    let before = bb.clone();
    let err = run(&mut bb, h, &[("hurdle.method", Answer::text("direct")), ("hurdle.probability", Answer::Number(1.3))]);
    assert!(matches!(err, Err(KsError::Answer(AnswerError::Invalid { .. }))));
    assert_eq!(bb, before);
    run(&mut bb, h, &[("hurdle.method", Answer::text("direct")), ("hurdle.probability", Answer::Number(0.9))]).unwrap();
    let cpt = bb.diagram().node(h).unwrap().cpt().unwrap();
    assert_eq!(cpt.rows[0][0], 0.9);
    assert!((cpt.rows[0][1] - 0.1).abs() < 1e-15);
    assert_eq!(bb.status(h), Some(AssessmentStatus::Assessed));
}

#[test]
fn task_visits_structure_then_residual() {
    let mut bb = two_tasks();
    let a = by_name(&bb, "A");
    let delta = run(
        &mut bb,
        a,
        &[
            ("task.method", Answer::text("decompose")),
            ("task.hurdles", Answer::names(&["H1", "H2"])),
            ("task.performance", Answer::Numbers(vec![])),
            ("task.uncertainties", Answer::Numbers(vec![])),
        ],
    )
    .unwrap();
    assert!(delta.iter().any(|c| matches!(c, Change::NodeAdded { .. })));
    assert!(!delta.iter().any(|c| matches!(c, Change::PayloadSet { .. })));
    assert_eq!(bb.status(a), Some(AssessmentStatus::Defined));
    assert_eq!(bb.focus().top(), a);
    for (h, p) in [("H1", 0.9), ("H2", 0.8)] {
        let id = by_name(&bb, h);
        run(&mut bb, id, &[("hurdle.method", Answer::text("direct")), ("hurdle.probability", Answer::Number(p))]).unwrap();
    }
    let delta = run(&mut bb, a, &[("task.residual", Answer::Number(0.85))]).unwrap();
    assert!(delta.iter().any(|c| matches!(c, Change::PayloadSet { payload: Payload::Cpt(_), .. })));
    assert!(!delta.iter().any(|c| matches!(c, Change::NodeAdded { .. })));
    let cpt = bb.diagram().node(a).unwrap().cpt().unwrap();
    assert_eq!(cpt.rows[0][0], 0.85);
    assert!(cpt.rows[1..].iter().all(|r| r == &vec![0.0, 1.0]));
    assert_eq!(bb.status(a), Some(AssessmentStatus::Assessed));
}

#[test]
fn mixed_criteria_table() {
    let mut bb = two_tasks();
    let a = by_name(&bb, "A");
    run(
        &mut bb,
        a,
        &[
            ("task.method", Answer::text("decompose")),
            ("task.hurdles", Answer::names(&["H"])),
            ("task.performance", Answer::names(&["Temperature"])),
            ("task.uncertainties", Answer::names(&["Regulation"])),
        ],
    )
    .unwrap();
    let (h, t, r) = (by_name(&bb, "H"), by_name(&bb, "Temperature"), by_name(&bb, "Regulation"));
    run(&mut bb, h, &[("hurdle.method", Answer::text("direct")), ("hurdle.probability", Answer::Number(0.5))]).unwrap();
    run(
        &mut bb,
        t,
        &[
            ("performance.threshold", Answer::Number(450.0)),
            ("performance.direction", Answer::text("at-least")),
            ("performance.estimate", Answer::Numbers(vec![400.0, 500.0, 600.0])),
        ],
    )
    .unwrap();
    assert_eq!(bb.diagram().node(t).unwrap().cpt().unwrap().rows[0], vec![0.75, 0.25]);
    run(
        &mut bb,
        r,
        &[
            ("uncertainty.outcomes", Answer::names(&["strict", "moderate", "lax"])),
            ("uncertainty.distribution", Answer::Numbers(vec![0.2, 0.5, 0.3])),
            ("uncertainty.passing", Answer::names(&["moderate", "lax"])),
        ],
    )
    .unwrap();
    run(&mut bb, a, &[("task.residual", Answer::Number(0.9))]).unwrap();
    let cpt = bb.diagram().node(a).unwrap().cpt().unwrap();
    assert_eq!(cpt.rows.len(), 2 * 2 * 3);
    // (H success, T success, Regulation moderate) and (.., lax) pass
    let passing: Vec<usize> = cpt.rows.iter().enumerate().filter(|(_, r)| r[0] > 0.0).map(|(i, _)| i).collect();
    assert_eq!(passing, vec![1, 2]);
}

#[test]
fn decomposition_depth_is_limited() {
    let mut bb = two_tasks();
    let mut current = by_name(&bb, "A");
    for level in 2..=MAX_CRITERIA_DEPTH {
        let name = format!("L{level}");
        let (p, ks_prefix) = if level == 2 { ("task", "task") } else { ("hurdle", "hurdle") };
        let _ = ks_prefix;
        run(
            &mut bb,
            current,
            &[
                (&format!("{p}.method"), Answer::text("decompose")),
                (&format!("{p}.hurdles"), Answer::names(&[name.as_str()])),
                (&format!("{p}.performance"), Answer::Numbers(vec![])),
                (&format!("{p}.uncertainties"), Answer::Numbers(vec![])),
            ],
        )
        .unwrap();
        current = by_name(&bb, &name);
    }
    let before = bb.clone();
    let err = run(
        &mut bb,
        current,
        &[
            ("hurdle.method", Answer::text("decompose")),
            ("hurdle.hurdles", Answer::names(&["too deep"])),
            ("hurdle.performance", Answer::Numbers(vec![])),
            ("hurdle.uncertainties", Answer::Numbers(vec![])),
        ],
    );
    assert!(matches!(err, Err(KsError::Rejected(_))));
    assert_eq!(bb, before);
}

#[test]
fn every_presentable_type_has_a_specialist() {
    use VariableType::*;
    let bb = fresh();
    let core = bb.diagram().core().unwrap();
    assert!(specialist_for(&bb, core.technical).is_some());
    assert!(specialist_for(&bb, core.investment).is_some());
    assert!(specialist_for(&bb, core.contribution).is_some());
    let types = [
        Task, Hurdle, GeneralUncertainty, PerformanceVariable, TaskInvestment, Parameter, Profit, Revenue, Cost, UnitsSold,
        Price, CapitalInvestment, RelatedProductProfit, Generic,
    ];
    for vtype in types {
        let mut bb = fresh();
        let id = bb.diagram().next_id();
        let (kind, poss) = match vtype {
            Task | Hurdle | PerformanceVariable => (NodeKind::Chance, crate::idiag::success_failure()),
            GeneralUncertainty | Parameter => (NodeKind::Chance, vec![]),
            _ => (NodeKind::Deterministic, vec![]),
        };
        bb.apply(vec![Change::NodeAdded {
            id,
            node_kind: kind,
            vtype,
            name: "x".into(),
            possibilities: poss,
            unit: Unit::dimensionless(),
        }])
        .unwrap();
        assert!(specialist_for(&bb, id).is_some(), "{vtype:?}");
    }
}

#[test]
fn prompt_catalog_is_complete() {
    let catalog = prompt_catalog();
    for id in ["ta.structure", "task.residual", "hurdle.method", "series.amount.estimate", "revenue.sales-unit", "backtrack.checkpoint"] {
        assert!(catalog.contains(id), "{id}");
    }
}

#[test]
fn revenue_from_units_and_price_gets_conversion_factor() {
    let mut bb = fresh();
    let contribution = bb.diagram().core().unwrap().contribution;
    run(
        &mut bb,
        contribution,
        &[
            ("contribution.method", Answer::text("components")),
            ("contribution.related", Answer::text("no")),
            ("contribution.capital", Answer::text("yes")),
        ],
    )
    .unwrap();
    let profit = by_name(&bb, "Profit");
    run(&mut bb, profit, &[("profit.method", Answer::text("revenue-cost"))]).unwrap();
    let revenue = by_name(&bb, "Revenue");
    run(
        &mut bb,
        revenue,
        &[("revenue.method", Answer::text("units-price")), ("revenue.sales-unit", Answer::text("thousands"))],
    )
    .unwrap();
    let Some(Payload::Function(f)) = &bb.diagram().node(revenue).unwrap().payload else { panic!() };
    assert!(matches!(&f.expr, crate::idiag::Expr::Product(xs) if xs[0] == crate::idiag::Expr::Const(1000.0)));
    assert!(bb.units().contains_key("Thousands of items"));
    assert!(bb.diagram().check_units().is_empty());
    assert_eq!(bb.focus().as_slice().len(), 4);
}

#[test]
fn series_with_uncertain_parameter_creates_parameter_node() {
    let mut bb = fresh();
    let contribution = bb.diagram().core().unwrap().contribution;
    run(
        &mut bb,
        contribution,
        &[
            ("contribution.method", Answer::text("components")),
            ("contribution.related", Answer::text("no")),
            ("contribution.capital", Answer::text("no")),
        ],
    )
    .unwrap();
    let profit = by_name(&bb, "Profit");
    run(
        &mut bb,
        profit,
        &[
            ("profit.method", Answer::text("series")),
            ("series.form", Answer::text("constant")),
            ("series.start", Answer::Number(2.0)),
            ("series.duration", Answer::Number(5.0)),
            ("series.amount.mode", Answer::text("uncertain")),
            ("series.amount.estimate", Answer::Numbers(vec![10.0, 20.0, 40.0])),
        ],
    )
    .unwrap();
    let param = by_name(&bb, "Profit amount");
    assert_eq!(bb.status(param), Some(AssessmentStatus::Assessed));
    assert_eq!(bb.diagram().parents(profit), vec![param]);
    assert_eq!(crate::solve::sensitivity_variables(bb.diagram()), vec![param]);
    assert_eq!(bb.status(profit), Some(AssessmentStatus::Assessed));
    // profit and its parameter are done, so nothing is left under the focus
    assert!(bb.fully_assessed(contribution));
}

#[test]
fn utilities_and_control() {
    let bb = fresh();
    let ids: Vec<&str> = eligible_ks(&bb, None).iter().map(|k| k.id).collect();
    assert_eq!(ids, vec!["units-manager", "assessment-coach", "revision-manager"]);
    let mut bb = fresh();
    let coach = find("assessment-coach").unwrap();
    execute_ks(
        &mut bb,
        coach,
        None,
        &answers(&[("profile.expertise", Answer::text("expert")), ("profile.bypass", Answer::text("on"))]),
    )
    .unwrap();
    assert!(bb.settings().auto_bypass);
    let units = find("units-manager").unwrap();
    let before = bb.clone();
    let bad = answers(&[
        ("units.name", Answer::text("crates")),
        ("units.dimension", Answer::text("items")),
        ("units.scale", Answer::Number(0.0)),
    ]);
    assert!(execute_ks(&mut bb, units, None, &bad).is_err());
    assert_eq!(bb, before);
}

#[test]
fn focus_control_pops_finished_nodes() {
    let mut bb = fresh();
    let ta = bb.diagram().core().unwrap().technical;
    run(&mut bb, ta, &[("ta.structure", Answer::text("single")), ("ta.tasks", Answer::names(&["A"]))]).unwrap();
    assert!(control_pops(&bb).is_empty());
    let a = by_name(&bb, "A");
    run(&mut bb, a, &[("task.method", Answer::text("direct")), ("task.probability", Answer::Number(0.6))]).unwrap();
    assert_eq!(control_pops(&bb), vec![Change::FocusPopped]);
    let ctl = eligible_ks(&bb, None).into_iter().find(|k| k.kind == KsKind::ControlSpecialist).unwrap();
    assert_eq!(ctl.id, "focus-control");
    execute_ks(&mut bb, ctl, None, &Answers::new()).unwrap();
    assert_eq!(bb.focus().depth(), 1);
}

fn arb_answer() -> impl Strategy<Value = Answer> {
    prop_oneof![
        (-2.0f64..2.0).prop_map(Answer::Number),
        "[a-z-]{0,12}".prop_map(Answer::Text),
        proptest::collection::vec(-1.0f64..2.0, 0..4).prop_map(Answer::Numbers),
        proptest::collection::vec("[A-C ]{0,2}", 0..4).prop_map(Answer::Texts),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_answers_never_half_apply(raw in proptest::collection::btree_map("(task|hurdle|ta)\\.(method|probability|hurdles|structure|tasks|residual)", arb_answer(), 0..6)) {
        let mut bb = two_tasks();
        let a = by_name(&bb, "A");
        for target in [a, bb.diagram().core().unwrap().technical] {
            let before = bb.clone();
            let result = specialist_for(&bb, target).map(|ks| execute_ks(&mut bb, ks, Some(target), &raw));
            if !matches!(result, Some(Ok(_))) {
                prop_assert_eq!(&bb, &before);
            }
        }
    }
}
