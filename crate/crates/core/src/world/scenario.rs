//! Scenario files: the initial world, its script, the standing attention
//! queries and any goals for the agent, as JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ObjectSpec, Pose, ScriptEntry, World, WorldError};
use crate::geometry::Cell;
use crate::goal::ScheduledGoal;
use crate::support::PerceptionQuery;

/// The shipped scenarios, by file name.
pub const ASSETS: [(&str, &str); 3] = [
    ("mug_on_hook.json", include_str!("../../assets/scenarios/mug_on_hook.json")),
    ("mug_on_floor.json", include_str!("../../assets/scenarios/mug_on_floor.json")),
    ("block_stack.json", include_str!("../../assets/scenarios/block_stack.json")),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub class: String,
    pub cells: Vec<[i32; 2]>,
    #[serde(default)]
    pub fixed: bool,
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, Vec<[i32; 2]>>,
}

/// The on-disk shape of a scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub grid: [i32; 2],
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default)]
    pub standing_queries: Vec<PerceptionQuery>,
    #[serde(default)]
    pub goals: Vec<ScheduledGoal>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub world: World,
    pub standing_queries: Vec<PerceptionQuery>,
    pub goals: Vec<ScheduledGoal>,
}

fn cells(list: &[[i32; 2]]) -> Vec<Cell> {
    list.iter().map(|&[r, c]| Cell::new(r, c)).collect()
}

pub fn load_scenario(text: &str) -> Result<Scenario, WorldError> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
    let objects = file
        .objects
        .into_iter()
        .map(|o| {
            let spec = ObjectSpec {
                id: o.id,
                class: o.class,
                cells: cells(&o.cells),
                fixed: o.fixed,
                annotations: o
                    .annotations
                    .iter()
                    .map(|(k, v)| (k.clone(), cells(v)))
                    .collect(),
            };
            (spec, o.pose)
        })
        .collect();
    let world = World::new(file.grid[0], file.grid[1], objects, file.script)?;
    for q in &file.standing_queries {
        world.body(q.subject.as_str())?;
    }
    for g in &file.goals {
        world.body(g.goal.object())?;
    }
    Ok(Scenario {
        world,
        standing_queries: file.standing_queries,
        goals: file.goals,
    })
}

pub fn asset(name: &str) -> Option<&'static str> {
    ASSETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Reads a scenario file. A path that does not exist but names a shipped
/// scenario (with or without `.json`) loads that scenario instead.
pub fn scenario_text(path: &Path) -> std::io::Result<String> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let name = path.to_string_lossy();
            asset(&name)
                .or_else(|| asset(&format!("{name}.json")))
                .map(str::to_string)
                .ok_or(e)
        }
        Err(e) => Err(e),
    }
}
