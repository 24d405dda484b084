#![allow(dead_code)]

#[path = "../../../core/tests/common/mod.rs"]
pub mod common;

use idcoach_core::board::Blackboard;
use idcoach_core::engine;
use idcoach_gateway::{ConsultationScript, ScriptStep};

pub const GOLDEN_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/two_task_golden.json");

/// The golden consultation as a script, with node names resolved to ids.
pub fn golden_consultation() -> ConsultationScript {
    let mut bb = Blackboard::new(Default::default()).unwrap();
    let mut steps = Vec::new();
    for (pick, answers) in common::golden_script() {
        let choice = pick.resolve(&bb);
        engine::step(&mut bb, choice, &answers).unwrap();
        steps.push(ScriptStep { choice, answers });
    }
    ConsultationScript { globals: None, steps }
}
