use std::collections::{BTreeSet, VecDeque};

use crate::board::{AssessmentStatus, Blackboard, ControlSettings, Change, Delta, Expertise, ProjectGlobals};
use crate::idiag::{
    success_failure, Annotations, Comparison, Conversion, Cpt, DetFunction, Expr, NodeId, NodeKind, ParamSource,
    Payload, PerformanceCriterion, Possibility, Requirement, Schedule, SeriesForm, ThreePoint, TimeSeries, Unit,
    UnitOp, VariableType, FAILURE, SUCCESS,
};

use super::dialog::{Answer, Answers, DialogProgram, DialogStep, Guard, InputSpec};
use super::{
    build_criteria_cpt, combine_tasks_cpt, control_pops, discretize_three_point, is_open, performance_to_hurdle,
    units_reconcile, KnowledgeSource, KsError, KsKind,
};

/// Deepest level a success criterion may sit at, counting tasks as 1.
pub const MAX_CRITERIA_DEPTH: usize = 5;
const MAX_TASKS: usize = 12;
const CRITERIA_PER_KIND: usize = 8;

pub(super) static REGISTRY: &[KnowledgeSource] = &[
    KnowledgeSource {
        id: "technical-achievement",
        kind: KsKind::Specialist,
        title: "Technical achievement",
        condition: |bb, t| unassessed_of(bb, t, &[VariableType::TechnicalAchievement]),
        program: ta_program,
        action: ta_action,
    },
    KnowledgeSource {
        id: "task",
        kind: KsKind::Specialist,
        title: "Technical task",
        condition: |bb, t| criteria_node_open(bb, t, VariableType::Task),
        program: |bb, t| criteria_program(bb, t, "task"),
        action: |bb, t, a| criteria_action(bb, t, a, "task"),
    },
    KnowledgeSource {
        id: "hurdle",
        kind: KsKind::Specialist,
        title: "Technical hurdle",
        condition: |bb, t| criteria_node_open(bb, t, VariableType::Hurdle),
        program: |bb, t| criteria_program(bb, t, "hurdle"),
        action: |bb, t, a| criteria_action(bb, t, a, "hurdle"),
    },
    KnowledgeSource {
        id: "performance-variable",
        kind: KsKind::Specialist,
        title: "Performance variable",
        condition: |bb, t| open_of(bb, t, &[VariableType::PerformanceVariable]),
        program: performance_program,
        action: performance_action,
    },
    KnowledgeSource {
        id: "general-uncertainty",
        kind: KsKind::Specialist,
        title: "General uncertainty",
        condition: |bb, t| open_of(bb, t, &[VariableType::GeneralUncertainty]),
        program: uncertainty_program,
        action: uncertainty_action,
    },
    KnowledgeSource {
        id: "parameter",
        kind: KsKind::Specialist,
        title: "Uncertain parameter",
        condition: |bb, t| open_of(bb, t, &[VariableType::Parameter]),
        program: parameter_program,
        action: parameter_action,
    },
    KnowledgeSource {
        id: "investment",
        kind: KsKind::Specialist,
        title: "R&D investment",
        condition: |bb, t| core_open(bb, t, |c| c.investment),
        program: investment_program,
        action: investment_action,
    },
    KnowledgeSource {
        id: "contribution",
        kind: KsKind::Specialist,
        title: "Contribution",
        condition: |bb, t| core_open(bb, t, |c| c.contribution),
        program: contribution_program,
        action: contribution_action,
    },
    KnowledgeSource {
        id: "profit",
        kind: KsKind::Specialist,
        title: "Profit",
        condition: |bb, t| unassessed_of(bb, t, &[VariableType::Profit]),
        program: profit_program,
        action: profit_action,
    },
    KnowledgeSource {
        id: "revenue",
        kind: KsKind::Specialist,
        title: "Revenue",
        condition: |bb, t| unassessed_of(bb, t, &[VariableType::Revenue]),
        program: revenue_program,
        action: revenue_action,
    },
    KnowledgeSource {
        id: "units-sold",
        kind: KsKind::Specialist,
        title: "Units sold",
        condition: |bb, t| unassessed_of(bb, t, &[VariableType::UnitsSold]),
        program: units_sold_program,
        action: units_sold_action,
    },
    KnowledgeSource {
        id: "time-series",
        kind: KsKind::Specialist,
        title: "Time series",
        condition: series_condition,
        program: |_, _| DialogProgram::new(series_steps(&[])),
        action: |bb, t, a| {
            let mut b = Build::new(bb);
            let target = t.expect("condition checked");
            b.series(target, a)?;
            Ok(b.done())
        },
    },
    KnowledgeSource {
        id: "units-manager",
        kind: KsKind::Utility,
        title: "Units manager",
        condition: |_, t| t.is_none(),
        program: units_program,
        action: units_action,
    },
    KnowledgeSource {
        id: "assessment-coach",
        kind: KsKind::Utility,
        title: "Assessment coach",
        condition: |_, t| t.is_none(),
        program: profile_program,
        action: profile_action,
    },
    KnowledgeSource {
        id: "revision-manager",
        kind: KsKind::Utility,
        title: "Revision manager",
        condition: |_, t| t.is_none(),
        program: backtrack_program,
        // selection only; the engine rebuilds the blackboard from the log
        action: |_, _, _| Ok(Vec::new()),
    },
    KnowledgeSource {
        id: "focus-control",
        kind: KsKind::ControlSpecialist,
        title: "Focus control",
        condition: |bb, t| t.is_none() && !control_pops(bb).is_empty(),
        program: |_, _| DialogProgram::default(),
        action: |bb, _, _| Ok(control_pops(bb)),
    },
    KnowledgeSource {
        id: "completion",
        kind: KsKind::ControlSpecialist,
        title: "Completion check",
        condition: |bb, t| t.is_none() && bb.focus().depth() == 1 && bb.fully_assessed(bb.focus().bottom()),
        program: |_, _| DialogProgram::default(),
        action: |_, _, _| Ok(Vec::new()),
    },
];

pub(super) fn all_prompt_ids() -> BTreeSet<String> {
    let bb = Blackboard::new(ProjectGlobals::default()).expect("default globals");
    REGISTRY.iter().flat_map(|k| k.program(&bb, None).steps.into_iter().map(|s| s.id)).collect()
}

// ---- conditions ----

fn vtype_of(bb: &Blackboard, t: Option<NodeId>) -> Option<VariableType> {
    bb.diagram().node(t?).ok().map(|n| n.vtype)
}

fn is_core(bb: &Blackboard, id: NodeId) -> bool {
    bb.diagram().core().is_some_and(|c| c.contains(id))
}

fn unassessed_of(bb: &Blackboard, t: Option<NodeId>, types: &[VariableType]) -> bool {
    t.is_some_and(|id| bb.status(id) == Some(AssessmentStatus::Unassessed))
        && vtype_of(bb, t).is_some_and(|v| types.contains(&v))
}

fn open_of(bb: &Blackboard, t: Option<NodeId>, types: &[VariableType]) -> bool {
    t.is_some_and(|id| is_open(bb, id)) && vtype_of(bb, t).is_some_and(|v| types.contains(&v))
}

fn core_open(bb: &Blackboard, t: Option<NodeId>, pick: fn(crate::idiag::CoreNodes) -> NodeId) -> bool {
    match (t, bb.diagram().core()) {
        (Some(id), Some(core)) => pick(core) == id && bb.status(id) == Some(AssessmentStatus::Unassessed),
        _ => false,
    }
}

fn series_condition(bb: &Blackboard, t: Option<NodeId>) -> bool {
    const SERIES_TYPES: [VariableType; 6] = [
        VariableType::TaskInvestment,
        VariableType::Price,
        VariableType::Cost,
        VariableType::CapitalInvestment,
        VariableType::RelatedProductProfit,
        VariableType::Generic,
    ];
    open_of(bb, t, &SERIES_TYPES) && t.is_some_and(|id| !is_core(bb, id))
}

/// All criteria of `id` are present and assessed.
fn criteria_ready(bb: &Blackboard, id: NodeId) -> bool {
    let parents = bb.diagram().parents(id);
    !parents.is_empty() && parents.iter().all(|p| bb.status(*p) == Some(AssessmentStatus::Assessed))
}

fn criteria_node_open(bb: &Blackboard, t: Option<NodeId>, vtype: VariableType) -> bool {
    if vtype_of(bb, t) != Some(vtype) {
        return false;
    }
    let id = t.expect("typed");
    match bb.status(id) {
        Some(AssessmentStatus::Unassessed) => true,
        Some(AssessmentStatus::Defined) => criteria_ready(bb, id),
        _ => false,
    }
}

// ---- answers ----

fn choice<'a>(a: &'a Answers, id: &str) -> &'a str {
    a.get(id).and_then(Answer::as_str).unwrap_or_default()
}

fn number(a: &Answers, id: &str) -> f64 {
    a.get(id).and_then(Answer::as_number).unwrap_or_default()
}

fn names(a: &Answers, id: &str) -> Vec<String> {
    a.get(id).and_then(Answer::as_names).unwrap_or_default().into_iter().map(|s| s.trim().to_string()).collect()
}

fn estimate(a: &Answers, id: &str) -> ThreePoint {
    a.get(id).and_then(Answer::as_three_point).unwrap_or(ThreePoint::certain(0.0))
}

fn name_of(bb: &Blackboard, t: Option<NodeId>) -> String {
    t.and_then(|id| bb.diagram().node(id).ok()).map(|n| n.name.clone()).unwrap_or_else(|| "this variable".into())
}

// ---- delta construction ----

struct Build<'a> {
    bb: &'a Blackboard,
    next: u32,
    delta: Delta,
}

impl<'a> Build<'a> {
    fn new(bb: &'a Blackboard) -> Self {
        Build { bb, next: bb.diagram().next_id().0, delta: Vec::new() }
    }

    fn node(&mut self, kind: NodeKind, vtype: VariableType, name: &str, possibilities: Vec<Possibility>, unit: Unit) -> NodeId {
        let id = NodeId(self.next);
        self.next += 1;
        self.delta.push(Change::NodeAdded { id, node_kind: kind, vtype, name: name.into(), possibilities, unit });
        id
    }

    fn arc(&mut self, from: NodeId, to: NodeId) {
        self.delta.push(Change::ArcAdded { from, to });
    }

    fn payload(&mut self, id: NodeId, payload: Payload) {
        self.delta.push(Change::PayloadSet { id, payload });
    }

    fn status(&mut self, id: NodeId, status: AssessmentStatus) {
        self.delta.push(Change::StatusChanged { id, status });
    }

    fn annotate(&mut self, id: NodeId, annotations: Annotations) {
        self.delta.push(Change::AnnotationsSet { id, annotations });
    }

    fn possibilities(&mut self, id: NodeId, possibilities: Vec<Possibility>) {
        self.delta.push(Change::PossibilitiesSet { id, possibilities });
    }

    fn push(&mut self, id: NodeId) {
        self.delta.push(Change::FocusPushed { id });
    }

    fn annotations_of(&self, id: NodeId) -> Annotations {
        self.bb.diagram().node(id).map(|n| n.annotations.clone()).unwrap_or_default()
    }

    fn done(self) -> Delta {
        self.delta
    }

    /// Give a quantity node discrete numeric outcomes from a certain value
    /// or a three-point estimate.
    fn quantity(&mut self, id: NodeId, a: &Answers, prefix: &str) -> Result<(), KsError> {
        let mut ann = self.annotations_of(id);
        if choice(a, &format!("{prefix}.mode")) == "certain" {
            let v = number(a, &format!("{prefix}.value"));
            self.possibilities(id, vec![Possibility::valued("certain", v)]);
            self.payload(id, Payload::Cpt(Cpt::marginal(vec![1.0])));
            ann.estimate = None;
        } else {
            let tp = estimate(a, &format!("{prefix}.estimate"));
            let points = discretize_three_point(&tp)?;
            let labels = ["low", "base", "high"];
            self.possibilities(id, labels.iter().zip(points).map(|(l, (v, _))| Possibility::valued(*l, v)).collect());
            self.payload(id, Payload::Cpt(Cpt::marginal(points.iter().map(|(_, p)| *p).collect())));
            ann.estimate = Some(tp);
        }
        self.annotate(id, ann);
        self.status(id, AssessmentStatus::Assessed);
        Ok(())
    }

    /// Time-series payload for `target`, creating parameter nodes for the
    /// uncertain parameters.
    fn series(&mut self, target: NodeId, a: &Answers) -> Result<(), KsError> {
        let node = self.bb.diagram().node(target).map_err(crate::board::BoardError::from)?;
        let (unit, name) = (node.unit, node.name.clone());
        let form = SeriesForm::from_name(choice(a, "series.form"))
            .ok_or_else(|| KsError::Rejected("unknown series form".into()))?;
        let start = number(a, "series.start") as u32;
        let duration = if form == SeriesForm::SinglePulse { 1 } else { number(a, "series.duration") as u32 };
        let mut ts = TimeSeries::new(form, start, duration);
        for param in form.parameters() {
            let prefix = format!("series.{param}");
            let source = if choice(a, &format!("{prefix}.mode")) == "certain" {
                ParamSource::Fixed(number(a, &format!("{prefix}.value")))
            } else {
                let param_unit = if form.parameter_is_amount(param) { unit } else { Unit::dimensionless() };
                let p = self.node(NodeKind::Chance, VariableType::Parameter, &format!("{name} {param}"), vec![], param_unit);
                self.quantity(p, a, &prefix)?;
                self.arc(p, target);
                ParamSource::Node(p)
            };
            ts = ts.with(param, source);
        }
        ts.follows = self.predecessor_in_sequence(target);
        self.payload(target, Payload::Series(ts));
        self.status(target, AssessmentStatus::Assessed);
        Ok(())
    }

    /// For a task's investment when tasks run in sequence: the previous
    /// task's investment series.
    fn predecessor_in_sequence(&self, target: NodeId) -> Option<NodeId> {
        let d = self.bb.diagram();
        let node = d.node(target).ok()?;
        let task = node.annotations.task?;
        let ta = d.node(d.core()?.technical).ok()?;
        if ta.annotations.schedule != Some(Schedule::Sequence) {
            return None;
        }
        let pos = ta.annotations.ordered.iter().position(|t| *t == task)?;
        let prev = *ta.annotations.ordered.get(pos.checked_sub(1)?)?;
        d.nodes()
            .find(|n| n.vtype == VariableType::TaskInvestment && n.annotations.task == Some(prev))
            .map(|n| n.id)
    }
}

// ---- shared prompt fragments ----

const MODE_CHOICES: &[(&str, &str)] = &[("certain", "Known with certainty"), ("uncertain", "Uncertain")];

/// Certain value or low/base/high estimate.
fn quantity_steps(prefix: &str, what: &str, unit: Option<&str>, guards: &[Guard]) -> Vec<DialogStep> {
    let mode = format!("{prefix}.mode");
    vec![
        DialogStep::new(
            &mode,
            format!("Is {what} known with certainty, or uncertain?"),
            "Uncertain quantities are assessed as a 10th/50th/90th percentile triple and appear in the sensitivity analysis.",
            InputSpec::choice(MODE_CHOICES),
        )
        .when_all(guards),
        DialogStep::new(&format!("{prefix}.value"), format!("What is {what}?"), "", InputSpec::number(unit))
            .when_all(guards)
            .when(Guard::is(&mode, "certain")),
        DialogStep::new(
            &format!("{prefix}.estimate"),
            format!("Give low, base and high estimates for {what}."),
            "Low and high are values you would be surprised to fall outside one time in ten; base is the median.",
            InputSpec::ThreePoint { unit: unit.map(String::from) },
        )
        .when_all(guards)
        .when(Guard::is(&mode, "uncertain")),
    ]
}

fn series_steps(guards: &[Guard]) -> Vec<DialogStep> {
    let forms: Vec<(&str, &str)> = vec![
        ("constant", "The same amount every period"),
        ("linear-ramp", "Changes by a fixed increment each period"),
        ("geometric-growth", "Grows at a constant rate"),
        ("single-pulse", "A single amount in one period"),
        ("ramp-then-flat", "Rises to a peak, then holds"),
    ];
    let mut steps = vec![
        DialogStep::new(
            "series.form",
            "Which pattern best describes this quantity over time?",
            "Each pattern is described by one or two parameters, asked next.",
            InputSpec::choice(&forms),
        )
        .when_all(guards),
        DialogStep::new("series.start", "In which period does it begin?", "Periods are numbered from 1.", InputSpec::periods(1.0))
            .when_all(guards),
        DialogStep::new("series.duration", "For how many periods does it last?", "", InputSpec::periods(1.0))
            .when_all(guards)
            .when(Guard::any("series.form", &["constant", "linear-ramp", "geometric-growth", "ramp-then-flat"])),
    ];
    let params: [(&str, &str, &[&str]); 7] = [
        ("amount", "the amount per period", &["constant", "single-pulse"]),
        ("initial", "the first-period amount", &["linear-ramp"]),
        ("increment", "the change per period", &["linear-ramp"]),
        ("base", "the first-period amount", &["geometric-growth"]),
        ("rate", "the growth rate per period", &["geometric-growth"]),
        ("peak", "the peak amount", &["ramp-then-flat"]),
        ("ramp", "the number of periods to reach the peak", &["ramp-then-flat"]),
    ];
    for (param, what, used_by) in params {
        let mut g = guards.to_vec();
        g.push(Guard::any("series.form", used_by));
        steps.extend(quantity_steps(&format!("series.{param}"), what, None, &g));
    }
    steps
}

// ---- technical achievement ----

fn ta_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    let name = name_of(bb, t);
    let multiple = Guard::is("ta.structure", "multiple");
    DialogProgram::new(vec![
        DialogStep::new(
            "ta.structure",
            format!("Does {name} depend on a single technical task or on several?"),
            "A task is a distinct piece of technical work whose success can be judged on its own.",
            InputSpec::choice(&[("single", "A single task"), ("multiple", "Several tasks")]),
        ),
        DialogStep::new(
            "ta.tasks",
            "Name the technical tasks.",
            "Give one name for a single task, two or more otherwise.",
            InputSpec::Names { min: 1, max: MAX_TASKS },
        ),
        DialogStep::new(
            "ta.requirement",
            "Does technical success require all of the tasks, or at least one of them?",
            "Alternative approaches to the same goal usually need only one success.",
            InputSpec::choice(&[("all-required", "All tasks must succeed"), ("at-least-one", "Any one success suffices")]),
        )
        .when(multiple.clone()),
        DialogStep::new(
            "ta.schedule",
            "Are the tasks carried out in parallel or in sequence?",
            "The schedule determines when each task's investment is incurred.",
            InputSpec::choice(&[("parallel", "In parallel"), ("sequence", "One after another")]),
        )
        .when(multiple),
    ])
}

fn ta_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let ta = t.expect("condition checked");
    let tasks = names(a, "ta.tasks");
    let multiple = choice(a, "ta.structure") == "multiple";
    match (multiple, tasks.len()) {
        (false, 1) => {}
        (false, _) => return Err(KsError::Rejected("a single-task project takes exactly one task name".into())),
        (true, n) if n < 2 => return Err(KsError::Rejected("name at least two tasks".into())),
        _ => {}
    }
    let requirement =
        if choice(a, "ta.requirement") == "at-least-one" { Requirement::AtLeastOne } else { Requirement::AllRequired };
    let schedule = if choice(a, "ta.schedule") == "sequence" { Schedule::Sequence } else { Schedule::Parallel };
    let mut b = Build::new(bb);
    let ids: Vec<NodeId> = tasks
        .iter()
        .map(|n| b.node(NodeKind::Chance, VariableType::Task, n, success_failure(), Unit::dimensionless()))
        .collect();
    for id in &ids {
        b.arc(*id, ta);
    }
    b.payload(ta, Payload::Cpt(combine_tasks_cpt(&ids, requirement)?));
    let mut ann = b.annotations_of(ta);
    ann.requirement = Some(requirement);
    ann.schedule = Some(schedule);
    ann.ordered = ids;
    b.annotate(ta, ann);
    b.status(ta, AssessmentStatus::Assessed);
    b.push(ta);
    Ok(b.done())
}

// ---- tasks and hurdles ----

/// Distance from `id` down to the technical achievement node.
fn level(bb: &Blackboard, id: NodeId) -> Option<usize> {
    let ta = bb.diagram().core()?.technical;
    let mut queue = VecDeque::from([(id, 0usize)]);
    let mut seen = BTreeSet::from([id]);
    while let Some((n, dist)) = queue.pop_front() {
        if n == ta {
            return Some(dist);
        }
        for c in bb.diagram().children(n) {
            if seen.insert(c) {
                queue.push_back((c, dist + 1));
            }
        }
    }
    None
}

fn criteria_structure_steps(p: &str, name: &str) -> Vec<DialogStep> {
    let decompose = Guard::is(&format!("{p}.method"), "decompose");
    let list = InputSpec::Names { min: 0, max: CRITERIA_PER_KIND };
    vec![
        DialogStep::new(
            &format!("{p}.method"),
            format!("How should the chance of success of {name} be assessed?"),
            "Decomposing into hurdles makes the assessment easier when success depends on several distinct technical problems.",
            InputSpec::choice(&[
                ("direct", "State its probability of success directly"),
                ("decompose", "Break it down into hurdles and other success criteria"),
            ]),
        ),
        DialogStep::new(
            &format!("{p}.probability"),
            format!("What is the probability that {name} succeeds?"),
            "",
            InputSpec::Probability,
        )
        .when(Guard::is(&format!("{p}.method"), "direct")),
        DialogStep::new(
            &format!("{p}.hurdles"),
            format!("Name the hurdles that {name} must overcome."),
            "A hurdle either succeeds or fails, for example achieving a required yield.",
            list.clone(),
        )
        .when(decompose.clone()),
        DialogStep::new(
            &format!("{p}.performance"),
            format!("Name any continuous performance measures that {name} must meet."),
            "A performance variable is a measured quantity with a pass threshold, for example no cracking below 450 degrees.",
            list.clone(),
        )
        .when(decompose.clone()),
        DialogStep::new(
            &format!("{p}.uncertainties"),
            format!("Name any other uncertainties that determine whether {name} succeeds."),
            "General uncertainties may have any number of outcomes; you will say which of them allow success.",
            list,
        )
        .when(decompose),
    ]
}

fn criteria_residual_step(p: &str, name: &str) -> DialogStep {
    DialogStep::new(
        &format!("{p}.residual"),
        format!("If every success criterion of {name} is met, what is the probability that {name} succeeds?"),
        "Failure is certain when any criterion fails. Answer 1 if meeting every criterion guarantees success.",
        InputSpec::Probability,
    )
}

fn criteria_program(bb: &Blackboard, t: Option<NodeId>, p: &str) -> DialogProgram {
    let name = name_of(bb, t);
    match t.and_then(|id| bb.status(id)) {
        Some(AssessmentStatus::Defined) => DialogProgram::new(vec![criteria_residual_step(p, &name)]),
        Some(_) => DialogProgram::new(criteria_structure_steps(p, &name)),
        None => {
            let mut steps = criteria_structure_steps(p, &name);
            steps.push(criteria_residual_step(p, &name));
            DialogProgram::new(steps)
        }
    }
}

fn criteria_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers, p: &str) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let mut b = Build::new(bb);
    let d = bb.diagram();
    if bb.status(target) == Some(AssessmentStatus::Defined) {
        let parents = d.parents(target);
        let mut cards = Vec::new();
        let mut passing = Vec::new();
        for q in &parents {
            let n = d.node(*q).map_err(crate::board::BoardError::from)?;
            cards.push(n.possibilities.len());
            let ok: Vec<usize> = match &n.annotations.passing {
                Some(labels) => labels.iter().filter_map(|l| n.possibility_index(l)).collect(),
                None => n.possibility_index(SUCCESS).into_iter().collect(),
            };
            passing.push(ok);
        }
        let cpt = build_criteria_cpt(&parents, &cards, &passing, number(a, &format!("{p}.residual")))?;
        b.payload(target, Payload::Cpt(cpt));
        b.status(target, AssessmentStatus::Assessed);
        return Ok(b.done());
    }
    if choice(a, &format!("{p}.method")) == "direct" {
        let prob = number(a, &format!("{p}.probability"));
        b.payload(target, Payload::Cpt(Cpt::marginal(vec![prob, 1.0 - prob])));
        b.status(target, AssessmentStatus::Assessed);
        return Ok(b.done());
    }
    let hurdles = names(a, &format!("{p}.hurdles"));
    let performance = names(a, &format!("{p}.performance"));
    let uncertainties = names(a, &format!("{p}.uncertainties"));
    if hurdles.len() + performance.len() + uncertainties.len() == 0 {
        return Err(KsError::Rejected("name at least one hurdle, performance measure or uncertainty".into()));
    }
    let depth = level(bb, target).unwrap_or(0) + 1;
    if depth > MAX_CRITERIA_DEPTH {
        return Err(KsError::Rejected(format!(
            "criteria can be nested at most {MAX_CRITERIA_DEPTH} levels below technical achievement"
        )));
    }
    let mut ordered = Vec::new();
    for n in &hurdles {
        ordered.push(b.node(NodeKind::Chance, VariableType::Hurdle, n, success_failure(), Unit::dimensionless()));
    }
    for n in &performance {
        ordered.push(b.node(NodeKind::Chance, VariableType::PerformanceVariable, n, success_failure(), Unit::dimensionless()));
    }
    for n in &uncertainties {
        ordered.push(b.node(NodeKind::Chance, VariableType::GeneralUncertainty, n, vec![], Unit::dimensionless()));
    }
    for id in &ordered {
        b.arc(*id, target);
    }
    let mut ann = b.annotations_of(target);
    ann.ordered = ordered;
    b.annotate(target, ann);
    b.status(target, AssessmentStatus::Defined);
    b.push(target);
    Ok(b.done())
}

// ---- performance variables and general uncertainties ----

fn performance_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    let name = name_of(bb, t);
    DialogProgram::new(vec![
        DialogStep::new(
            "performance.threshold",
            format!("What value of {name} separates success from failure?"),
            "",
            InputSpec::number(None),
        ),
        DialogStep::new(
            "performance.direction",
            "Does success require reaching at least the threshold, or staying at or below it?",
            "A value exactly at the threshold counts as success.",
            InputSpec::choice(&[("at-least", "At least the threshold"), ("at-most", "At most the threshold")]),
        ),
        DialogStep::new(
            "performance.estimate",
            format!("Give low, base and high estimates of the {name} that will be achieved."),
            "",
            InputSpec::ThreePoint { unit: None },
        ),
    ])
}

fn performance_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let threshold = number(a, "performance.threshold");
    let direction = if choice(a, "performance.direction") == "at-most" { Comparison::AtMost } else { Comparison::AtLeast };
    let tp = estimate(a, "performance.estimate");
    let p = performance_to_hurdle(threshold, direction, &tp)?;
    let mut b = Build::new(bb);
    let mut ann = b.annotations_of(target);
    ann.performance = Some(PerformanceCriterion { threshold, direction });
    ann.estimate = Some(tp);
    b.annotate(target, ann);
    b.payload(target, Payload::Cpt(Cpt::marginal(vec![p, 1.0 - p])));
    b.status(target, AssessmentStatus::Assessed);
    Ok(b.done())
}

fn uncertainty_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    let name = name_of(bb, t);
    DialogProgram::new(vec![
        DialogStep::new(
            "uncertainty.outcomes",
            format!("List the possible outcomes of {name}."),
            "Outcomes must be mutually exclusive and together cover every possibility.",
            InputSpec::Names { min: 2, max: CRITERIA_PER_KIND },
        ),
        DialogStep::new(
            "uncertainty.distribution",
            "Give the probability of each outcome, in the order listed.",
            "",
            InputSpec::Distribution { over: "uncertainty.outcomes".into() },
        ),
        DialogStep::new(
            "uncertainty.passing",
            "Which outcomes allow technical success?",
            "",
            InputSpec::Subset { of: "uncertainty.outcomes".into() },
        ),
    ])
}

fn uncertainty_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let outcomes = names(a, "uncertainty.outcomes");
    if outcomes.iter().any(|o| o == SUCCESS || o == FAILURE) && outcomes.len() != 2 {
        return Err(KsError::Rejected("outcome labels clash with success/failure".into()));
    }
    let dist = a.get("uncertainty.distribution").and_then(Answer::as_numbers).unwrap_or_default();
    let mut b = Build::new(bb);
    b.possibilities(target, outcomes.iter().map(Possibility::label).collect());
    b.payload(target, Payload::Cpt(Cpt::marginal(dist)));
    let mut ann = b.annotations_of(target);
    ann.passing = Some(names(a, "uncertainty.passing"));
    b.annotate(target, ann);
    b.status(target, AssessmentStatus::Assessed);
    Ok(b.done())
}

fn parameter_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    DialogProgram::new(quantity_steps("parameter", &name_of(bb, t), None, &[]))
}

fn parameter_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let mut b = Build::new(bb);
    b.quantity(t.expect("condition checked"), a, "parameter")?;
    Ok(b.done())
}

// ---- investment ----

fn investment_program(bb: &Blackboard, _t: Option<NodeId>) -> DialogProgram {
    let currency = bb.globals().currency.clone();
    let total = Guard::is("investment.method", "total");
    let mut steps = vec![DialogStep::new(
        "investment.method",
        "How should the R&D investment be assessed?",
        "Investment per task lets the schedule of the tasks determine when money is spent.",
        InputSpec::choice(&[
            ("total", "As a single present-value total"),
            ("per-task", "As a spending profile for each technical task"),
        ]),
    )];
    steps.extend(quantity_steps("investment", "the present value of the R&D investment", Some(&currency), &[total]));
    DialogProgram::new(steps)
}

fn investment_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let mut b = Build::new(bb);
    if choice(a, "investment.method") == "total" {
        b.quantity(target, a, "investment")?;
        return Ok(b.done());
    }
    let d = bb.diagram();
    let ta = d.node(d.core().expect("core").technical).map_err(crate::board::BoardError::from)?;
    let tasks = if ta.annotations.ordered.is_empty() { d.parents(ta.id) } else { ta.annotations.ordered.clone() };
    if tasks.is_empty() {
        return Err(KsError::Rejected("define the technical tasks before investing per task".into()));
    }
    let mut parts = Vec::new();
    for task in tasks {
        let task_name = d.node(task).map_err(crate::board::BoardError::from)?.name.clone();
        let id = b.node(
            NodeKind::Deterministic,
            VariableType::TaskInvestment,
            &format!("{task_name} investment"),
            vec![],
            Unit::currency_per_period(),
        );
        b.annotate(id, Annotations { task: Some(task), ..Annotations::default() });
        b.arc(id, target);
        parts.push(id);
    }
    b.payload(target, Payload::Function(DetFunction::new(Expr::pv(Expr::sum_of(parts)))));
    b.status(target, AssessmentStatus::Assessed);
    b.push(target);
    Ok(b.done())
}

// ---- contribution and its components ----

fn contribution_program(bb: &Blackboard, _t: Option<NodeId>) -> DialogProgram {
    let currency = bb.globals().currency.clone();
    let yes_no = [("yes", "Yes"), ("no", "No")];
    let components = Guard::is("contribution.method", "components");
    let mut steps = vec![DialogStep::new(
        "contribution.method",
        "How should the contribution of a technically successful project be assessed?",
        "Building it from profit over time lets you reason about prices, costs and sales separately.",
        InputSpec::choice(&[
            ("direct", "As a single present-value amount"),
            ("components", "From profit over time and related cash flows"),
        ]),
    )];
    steps.extend(quantity_steps(
        "contribution",
        "the present value of the contribution",
        Some(&currency),
        &[Guard::is("contribution.method", "direct")],
    ));
    steps.push(
        DialogStep::new(
            "contribution.related",
            "Will success change the profit of related products?",
            "For example, a new process may lower the cost of existing products.",
            InputSpec::choice(&yes_no),
        )
        .when(components.clone()),
    );
    steps.push(
        DialogStep::new(
            "contribution.capital",
            "Does commercialisation require capital investment?",
            "",
            InputSpec::choice(&yes_no),
        )
        .when(components),
    );
    DialogProgram::new(steps)
}

fn contribution_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let mut b = Build::new(bb);
    if choice(a, "contribution.method") == "direct" {
        b.quantity(target, a, "contribution")?;
        return Ok(b.done());
    }
    let flow = Unit::currency_per_period();
    let profit = b.node(NodeKind::Deterministic, VariableType::Profit, "Profit", vec![], flow);
    let mut inflows = vec![profit];
    if choice(a, "contribution.related") == "yes" {
        inflows.push(b.node(NodeKind::Deterministic, VariableType::RelatedProductProfit, "Related Product Profit", vec![], flow));
    }
    let capital = (choice(a, "contribution.capital") == "yes")
        .then(|| b.node(NodeKind::Deterministic, VariableType::CapitalInvestment, "Capital Investment", vec![], flow));
    for id in inflows.iter().chain(&capital) {
        b.arc(*id, target);
    }
    let inflow = Expr::sum_of(inflows);
    let net = match capital {
        Some(c) => Expr::Difference(Box::new(inflow), Box::new(Expr::Var(c))),
        None => inflow,
    };
    b.payload(target, Payload::Function(DetFunction::new(Expr::pv(net))));
    b.status(target, AssessmentStatus::Assessed);
    b.push(target);
    Ok(b.done())
}

fn with_series_option(method: &str, question: String, other: (&str, &str)) -> DialogProgram {
    let mut steps = vec![DialogStep::new(
        method,
        question,
        "",
        InputSpec::choice(&[("series", "Directly, as a pattern over time"), other]),
    )];
    steps.extend(series_steps(&[Guard::is(method, "series")]));
    DialogProgram::new(steps)
}

fn profit_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    with_series_option(
        "profit.method",
        format!("How should {} be assessed?", name_of(bb, t)),
        ("revenue-cost", "As revenue minus cost"),
    )
}

fn profit_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let mut b = Build::new(bb);
    if choice(a, "profit.method") == "series" {
        b.series(target, a)?;
        return Ok(b.done());
    }
    let flow = Unit::currency_per_period();
    let revenue = b.node(NodeKind::Deterministic, VariableType::Revenue, "Revenue", vec![], flow);
    let cost = b.node(NodeKind::Deterministic, VariableType::Cost, "Cost", vec![], flow);
    b.arc(revenue, target);
    b.arc(cost, target);
    b.payload(
        target,
        Payload::Function(DetFunction::new(Expr::Difference(Box::new(Expr::Var(revenue)), Box::new(Expr::Var(cost))))),
    );
    b.status(target, AssessmentStatus::Assessed);
    b.push(target);
    Ok(b.done())
}

const SALES_UNITS: [(&str, &str, f64); 3] =
    [("items", "Single items", 1.0), ("thousands", "Thousands of items", 1e3), ("millions", "Millions of items", 1e6)];

fn revenue_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    let mut p = with_series_option(
        "revenue.method",
        format!("How should {} be assessed?", name_of(bb, t)),
        ("units-price", "As units sold times unit price"),
    );
    let options: Vec<(&str, &str)> = SALES_UNITS.iter().map(|(id, label, _)| (*id, *label)).collect();
    p.steps.push(
        DialogStep::new(
            "revenue.sales-unit",
            "In what unit will you state sales volumes?",
            "The units manager inserts the conversion factor between sales volumes and unit prices.",
            InputSpec::choice(&options),
        )
        .when(Guard::is("revenue.method", "units-price")),
    );
    p
}

fn revenue_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let mut b = Build::new(bb);
    if choice(a, "revenue.method") == "series" {
        b.series(target, a)?;
        return Ok(b.done());
    }
    let (unit_id, label, scale) = SALES_UNITS
        .iter()
        .find(|(id, _, _)| *id == choice(a, "revenue.sales-unit"))
        .copied()
        .unwrap_or(SALES_UNITS[0]);
    let sales_unit = Unit::items().scaled(scale) / Unit::periods();
    let price_unit = Unit::currency() / Unit::items();
    let factor = match units_reconcile(UnitOp::Multiply, &[sales_unit, price_unit], &Unit::currency_per_period()) {
        Ok(Conversion::Factor(f)) => f,
        Ok(Conversion::PerOperand(_)) | Err(_) => return Err(KsError::Rejected("sales and price units do not combine".into())),
    };
    if unit_id != "items" && !bb.units().contains_key(label) {
        b.delta.push(Change::UnitRegistered { name: label.into(), unit: Unit::items().scaled(scale) });
    }
    let units = b.node(NodeKind::Deterministic, VariableType::UnitsSold, "Units Sold", vec![], sales_unit);
    let price = b.node(NodeKind::Deterministic, VariableType::Price, "Price", vec![], price_unit);
    b.arc(units, target);
    b.arc(price, target);
    let mut factors = Vec::new();
    if factor != 1.0 {
        factors.push(Expr::Const(factor));
    }
    factors.extend([Expr::Var(units), Expr::Var(price)]);
    b.payload(target, Payload::Function(DetFunction::new(Expr::Product(factors))));
    b.status(target, AssessmentStatus::Assessed);
    b.push(target);
    Ok(b.done())
}

fn units_sold_program(bb: &Blackboard, t: Option<NodeId>) -> DialogProgram {
    with_series_option(
        "units-sold.method",
        format!("How should {} be assessed?", name_of(bb, t)),
        ("market-share", "As market size times market share"),
    )
}

fn units_sold_action(bb: &Blackboard, t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let target = t.expect("condition checked");
    let mut b = Build::new(bb);
    if choice(a, "units-sold.method") == "series" {
        b.series(target, a)?;
        return Ok(b.done());
    }
    let unit = bb.diagram().node(target).map_err(crate::board::BoardError::from)?.unit;
    let size = b.node(NodeKind::Deterministic, VariableType::Generic, "Market Size", vec![], unit);
    let share = b.node(NodeKind::Deterministic, VariableType::Generic, "Market Share", vec![], Unit::dimensionless());
    b.arc(size, target);
    b.arc(share, target);
    b.payload(target, Payload::Function(DetFunction::new(Expr::Product(vec![Expr::Var(size), Expr::Var(share)]))));
    b.status(target, AssessmentStatus::Assessed);
    b.push(target);
    Ok(b.done())
}

// ---- utilities ----

const DIMENSIONS: [(&str, &str); 5] = [
    ("currency", "Money"),
    ("items", "Items"),
    ("periods", "Time periods"),
    ("currency-per-period", "Money per period"),
    ("dimensionless", "A pure number"),
];

fn units_program(_bb: &Blackboard, _t: Option<NodeId>) -> DialogProgram {
    DialogProgram::new(vec![
        DialogStep::new("units.name", "Name the unit.", "", InputSpec::Text),
        DialogStep::new("units.dimension", "What does it measure?", "", InputSpec::choice(&DIMENSIONS)),
        DialogStep::new(
            "units.scale",
            "How many base units does one of it represent?",
            "For example 1000 for thousands of items.",
            InputSpec::Number { unit: None, min: Some(f64::MIN_POSITIVE), max: None, integer: false },
        ),
    ])
}

fn units_action(_bb: &Blackboard, _t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let base = match choice(a, "units.dimension") {
        "currency" => Unit::currency(),
        "items" => Unit::items(),
        "periods" => Unit::periods(),
        "currency-per-period" => Unit::currency_per_period(),
        _ => Unit::dimensionless(),
    };
    let name = a.get("units.name").and_then(Answer::as_str).unwrap_or_default().trim().to_string();
    Ok(vec![Change::UnitRegistered { name, unit: base.scaled(number(a, "units.scale")) }])
}

fn profile_program(_bb: &Blackboard, _t: Option<NodeId>) -> DialogProgram {
    DialogProgram::new(vec![
        DialogStep::new(
            "profile.expertise",
            "How familiar are you with decision analysis?",
            "Experts see fewer explanations.",
            InputSpec::choice(&[("novice", "New to it"), ("expert", "Experienced")]),
        ),
        DialogStep::new(
            "profile.bypass",
            "When only one item can be assessed next, should the coach go straight to it?",
            "",
            InputSpec::choice(&[("on", "Yes"), ("off", "No, always ask")]),
        ),
    ])
}

fn profile_action(_bb: &Blackboard, _t: Option<NodeId>, a: &Answers) -> Result<Delta, KsError> {
    let expertise = if choice(a, "profile.expertise") == "expert" { Expertise::Expert } else { Expertise::Novice };
    let settings = ControlSettings { expertise, auto_bypass: choice(a, "profile.bypass") == "on" };
    Ok(vec![Change::SettingChanged { settings }])
}

fn backtrack_program(bb: &Blackboard, _t: Option<NodeId>) -> DialogProgram {
    let options: Vec<(String, String)> = bb.checkpoints().into_iter().map(|(seq, label)| (seq.to_string(), label)).collect();
    DialogProgram::new(vec![DialogStep::new(
        "backtrack.checkpoint",
        "Return to which point in the consultation?",
        "Everything after the chosen point is discarded.",
        InputSpec::Choice {
            options: options.into_iter().map(|(id, label)| super::ChoiceOption::new(id, label)).collect(),
        },
    )])
}
