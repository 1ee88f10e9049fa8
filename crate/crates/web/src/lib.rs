//! Browser bindings for the hanger demo page.
//!
//! Every export returns a JSON string that the page renders as-is. The plain
//! `*_json` functions do the work and are what the native tests call.

use std::sync::OnceLock;

use hanger_core::agent::{Agent, AgentSettings};
use hanger_core::goal::PlanMode;
use hanger_core::parts::{train_detector, DetectorModel, DetectorRegistry, DEFAULT_PATCH_RADIUS, DEFAULT_TAU};
use hanger_core::planner::{plan_support, DEFAULT_HORIZON};
use hanger_core::support::builtin_ruleset;
use hanger_core::world::{asset, load_scenario, Frame, Scenario, FLOOR};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_TICKS: u32 = 60;

fn scenario(name: &str) -> Result<Scenario, String> {
    let file = format!("{}.json", name.trim_end_matches(".json"));
    let text = asset(&file).ok_or_else(|| format!("no scenario named `{name}`"))?;
    load_scenario(text).map_err(|e| e.to_string())
}

/// Which glyph `Frame::to_ascii` uses for each object.
fn legend(frame: &Frame) -> Value {
    let map: serde_json::Map<String, Value> = frame
        .masks
        .keys()
        .enumerate()
        .map(|(i, id)| {
            let glyph = if id == FLOOR { '#' } else { char::from(b'a' + (i % 26) as u8) };
            (glyph.to_string(), Value::from(id.as_str()))
        })
        .collect();
    Value::Object(map)
}

pub fn episode_json(name: &str, max_ticks: u32) -> Result<String, String> {
    let settings = AgentSettings {
        max_ticks: u64::from(max_ticks.clamp(1, MAX_TICKS)),
        ..AgentSettings::default()
    };
    let agent = Agent::new(scenario(name)?, builtin_ruleset(), settings).map_err(|e| e.to_string())?;
    let episode = agent.run().map_err(|e| e.to_string())?;
    let ticks: Vec<Value> = episode
        .ticks
        .iter()
        .map(|t| {
            json!({
                "tick": t.tick,
                "ascii": t.frame.to_ascii(),
                "legend": legend(&t.frame),
                "supports": t.supports().into_iter().map(|(e, r)| format!("{e} on {r}")).collect::<Vec<_>>(),
                "percepts": t.report.triples.len(),
                "exemplars": t.exemplars.len(),
                "plans": t.plans.iter().map(|p| p.to_text()).collect::<Vec<_>>(),
                "queries": t.queries.iter().map(ToString::to_string).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({ "halt": episode.halt, "ticks": ticks }).to_string())
}

/// A detector trained on the handles seen while the mug hangs.
fn hanging_detector() -> Result<&'static DetectorModel, String> {
    static MODEL: OnceLock<Result<DetectorModel, String>> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let agent = Agent::new(scenario("mug_on_hook")?, builtin_ruleset(), AgentSettings::default())
                .map_err(|e| e.to_string())?;
            let episode = agent.run().map_err(|e| e.to_string())?;
            let exemplars: Vec<_> = episode.ticks.iter().flat_map(|t| t.exemplars.clone()).collect();
            train_detector(&exemplars, DEFAULT_PATCH_RADIUS, DEFAULT_TAU).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(Clone::clone)
}

pub fn census_json(mode: &str) -> Result<String, String> {
    let mode: PlanMode = mode.parse()?;
    let mut registry = DetectorRegistry::new();
    registry.insert(hanging_detector()?.clone());
    let world = scenario("mug_on_floor")?.world;
    let plan = plan_support(&world, "mug1", "hook1", mode, &registry, DEFAULT_HORIZON).map_err(|e| e.to_string())?;
    let chosen = match plan.pose {
        Some(pose) => {
            let mut placed = world.clone();
            placed.set_pose("mug1", pose).map_err(|e| e.to_string())?;
            Some(placed.render().to_ascii())
        }
        None => None,
    };
    let candidates: Vec<Value> = plan
        .candidates
        .iter()
        .map(|v| json!({ "row": v.pose.row, "col": v.pose.col, "stable": v.stable }))
        .collect();
    Ok(json!({
        "mode": mode.to_string(),
        "candidates": candidates,
        "stable": plan.stable_count(),
        "chosen": chosen,
    })
    .to_string())
}

pub fn detection_json(drow: i32, dcol: i32) -> Result<String, String> {
    let mut world = scenario("mug_on_floor")?.world;
    let pose = world.pose("mug1").map_err(|e| e.to_string())?.offset(drow, dcol);
    world.set_pose("mug1", pose).map_err(|e| e.to_string())?;
    let frame = world.render();
    let found = hanging_detector()?.detect(&frame, "mug1").map_err(|e| e.to_string())?;
    let truth = world
        .body("mug1")
        .map_err(|e| e.to_string())?
        .spec
        .annotation_at("handle_contact", pose);
    let mut rows: Vec<Vec<char>> = frame.to_ascii().lines().map(|l| l.chars().collect()).collect();
    for cell in found.iter() {
        rows[cell.row as usize][cell.col as usize] = '*';
    }
    let ascii: String = rows.into_iter().map(|r| r.into_iter().collect::<String>() + "\n").collect();
    Ok(json!({
        "ascii": ascii,
        "legend": legend(&frame),
        "cells": found.len(),
        "iou": truth.map(|t| found.iou(&t)),
    })
    .to_string())
}

/// Runs the agent on a shipped scenario and returns one entry per tick.
#[wasm_bindgen]
pub fn run_episode(scenario: &str, max_ticks: u32) -> Result<String, JsError> {
    episode_json(scenario, max_ticks).map_err(|e| JsError::new(&e))
}

/// Candidate resting poses for hanging the floor mug, searched with the
/// whole mug (`whole`) or only its detected handle (`part`).
#[wasm_bindgen]
pub fn placement_census(mode: &str) -> Result<String, JsError> {
    census_json(mode).map_err(|e| JsError::new(&e))
}

/// Moves the floor mug by an offset and marks the detected handle with `*`.
#[wasm_bindgen]
pub fn detect_handle(drow: i32, dcol: i32) -> Result<String, JsError> {
    detection_json(drow, dcol).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn episode_reports_the_hanging_mug() {
        let v = parse(episode_json("mug_on_hook", 4).unwrap());
        let ticks = v["ticks"].as_array().unwrap();
        assert_eq!(ticks.len(), 4);
        assert_eq!(ticks[2]["supports"][0], "mug1 on hook1");
        assert!(ticks[0]["ascii"].as_str().unwrap().contains('#'));
        assert_eq!(ticks[0]["legend"]["#"], "floor");
    }

    #[test]
    fn unknown_scenario_is_an_error() {
        assert!(episode_json("teapot", 3).unwrap_err().contains("teapot"));
    }

    #[test]
    fn part_census_is_smaller_and_all_stable() {
        let whole = parse(census_json("whole").unwrap());
        let part = parse(census_json("part").unwrap());
        let n_whole = whole["candidates"].as_array().unwrap().len();
        let n_part = part["candidates"].as_array().unwrap().len();
        assert!(n_part < n_whole);
        assert_eq!(part["stable"].as_u64().unwrap() as usize, n_part);
        assert!(part["chosen"].as_str().is_some());
        assert!(census_json("sideways").is_err());
    }

    #[test]
    fn detection_follows_the_mug() {
        let here = parse(detection_json(0, 0).unwrap());
        let moved = parse(detection_json(0, -2).unwrap());
        assert_eq!(here["cells"], moved["cells"]);
        assert!(here["iou"].as_f64().unwrap() >= 0.5);
        assert!(here["ascii"].as_str().unwrap().contains('*'));
        assert!(detection_json(-40, 0).is_err());
    }
}
