//! Placement planning for support goals.
//!
//! Candidate poses come from an exhaustive scan of every in-bounds
//! translation of the moving object. Each candidate is then checked by
//! simulating a copy of the world with the object dropped there.

use serde::Serialize;

use crate::geometry::Mask;
use crate::goal::{Goal, PlanMode};
use crate::parts::DetectorRegistry;
use crate::perception::{is_below, touching};
use crate::store::{BeliefStore, EntityId};
use crate::support::support_descriptions;
use crate::world::{Motion, Pose, ScriptEntry, World, WorldError};

pub const DEFAULT_HORIZON: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("focus mask of `{0}` is empty")]
    EmptyFocus(String),
    #[error("focus mask is not part of `{0}`")]
    FocusOutsideObject(String),
    #[error("part mode needs a trained detector for class `{0}`")]
    NoDetector(String),
    #[error("no pose puts `{object}` on `{target}`")]
    NoCandidates { object: String, target: String },
    #[error("`{0}` is not believed to be supported")]
    NotSupported(String),
    #[error("`{0}` cannot be lifted clear of its supporter")]
    CannotLift(String),
}

/// Where the moving object must touch the target, as cells in its own
/// local frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementConstraint {
    pub moving: String,
    pub focus: Mask,
    pub target: String,
}

impl PlacementConstraint {
    pub fn whole(world: &World, moving: &str, target: &str) -> Result<Self, PlanError> {
        Ok(Self {
            moving: moving.to_string(),
            focus: world.body(moving)?.spec.local_mask(),
            target: target.to_string(),
        })
    }

    /// A focus given in world coordinates at the object's current pose.
    pub fn from_world_mask(world: &World, moving: &str, target: &str, mask: &Mask) -> Result<Self, PlanError> {
        let pose = world.pose(moving)?;
        Ok(Self {
            moving: moving.to_string(),
            focus: mask.translate(-pose.row, -pose.col),
            target: target.to_string(),
        })
    }
}

/// Whether the object at `pose` meets the constraint: no overlap, the target
/// below it by majority, and some focus cell resting directly on the target.
pub fn satisfies(world: &World, c: &PlacementConstraint, pose: Pose) -> Result<bool, PlanError> {
    let body = world.body(&c.moving)?;
    let mask = body.spec.mask_at(pose);
    if !world.in_bounds(&mask) || world.collides(&c.moving, &mask).is_some() {
        return Ok(false);
    }
    let target = world.body(&c.target)?.mask();
    let focus = c.focus.translate(pose.row, pose.col);
    let rests_on = focus.iter().any(|f| target.contains(f.offset(1, 0)));
    Ok(rests_on && touching(&focus, &target) && is_below(&target, &mask))
}

pub fn candidate_poses(world: &World, c: &PlacementConstraint) -> Result<Vec<Pose>, PlanError> {
    let body = world.body(&c.moving)?;
    world.body(&c.target)?;
    if c.focus.is_empty() {
        return Err(PlanError::EmptyFocus(c.moving.clone()));
    }
    if !c.focus.is_subset(&body.spec.local_mask()) {
        return Err(PlanError::FocusOutsideObject(c.moving.clone()));
    }
    let (r0, c0, r1, c1) = body.spec.local_mask().bounds().expect("objects are non-empty");
    let mut out = Vec::new();
    for row in -r0..world.rows() - r1 {
        for col in -c0..world.cols() - c1 {
            let pose = Pose::new(row, col);
            if satisfies(world, c, pose)? {
                out.push(pose);
            }
        }
    }
    Ok(out)
}

/// The world with `id` at `pose`, released, and no script left to run.
fn dropped_at(world: &World, id: &str, pose: Pose) -> Result<World, PlanError> {
    let mut w = world.clone();
    w.clear_script();
    for b in world.bodies() {
        w.set_held(&b.spec.id, false);
    }
    w.set_pose(id, pose)?;
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub pose: Pose,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub goal: Goal,
    pub mode: PlanMode,
    pub pose: Option<Pose>,
    pub stable: bool,
    pub candidates: Vec<Verdict>,
    pub script: Vec<ScriptEntry>,
}

impl Plan {
    pub fn stable_count(&self) -> usize {
        self.candidates.iter().filter(|v| v.stable).count()
    }

    /// Script entries shifted so the first one runs at `tick`.
    pub fn scheduled(&self, tick: u64) -> Vec<ScriptEntry> {
        let base = self.script.iter().map(|e| e.tick).min().unwrap_or(0);
        self.script
            .iter()
            .cloned()
            .map(|mut e| {
                e.tick = e.tick - base + tick;
                e
            })
            .collect()
    }

    /// Census and verdict table as line-oriented text.
    pub fn to_text(&self) -> String {
        let mut out = format!("goal {}\nmode {}\n", self.goal, self.mode);
        out += &format!("candidates {}\nstable {}\n", self.candidates.len(), self.stable_count());
        match self.pose {
            Some(p) => out += &format!("chosen {} {} {}\n", p.row, p.col, if self.stable { "stable" } else { "unstable" }),
            None => out += "chosen none\n",
        }
        for v in &self.candidates {
            out += &format!(
                "verdict {} {} {}\n",
                v.pose.row,
                v.pose.col,
                if v.stable { "stable" } else { "unstable" }
            );
        }
        for e in &self.script {
            let motion = e.motion.map_or("none".to_string(), |m| format!("{m:?}").to_lowercase());
            let to = e.to.map_or(String::new(), |p| format!(" {} {}", p.row, p.col));
            out += &format!("script {} {} {motion}{to} hold={}\n", e.tick, e.object, e.hold);
        }
        out
    }
}

/// Plans putting `object` onto `target`. In part mode the focus is the
/// part that a trained detector finds on the object in the current world.
pub fn plan_support(
    world: &World,
    object: &str,
    target: &str,
    mode: PlanMode,
    registry: &DetectorRegistry,
    horizon: usize,
) -> Result<Plan, PlanError> {
    let constraint = match mode {
        PlanMode::Whole => PlacementConstraint::whole(world, object, target)?,
        PlanMode::Part => {
            let body = world.body(object)?;
            let model = registry
                .for_class(&body.spec.class)
                .next()
                .ok_or_else(|| PlanError::NoDetector(body.spec.class.clone()))?;
            let part = model.detect_mask(&body.mask());
            PlacementConstraint::from_world_mask(world, object, target, &part)?
        }
    };
    let poses = candidate_poses(world, &constraint)?;
    if poses.is_empty() {
        return Err(PlanError::NoCandidates {
            object: object.to_string(),
            target: target.to_string(),
        });
    }
    let mut candidates = Vec::with_capacity(poses.len());
    for pose in poses {
        let stable = dropped_at(world, object, pose)?.is_settled(object, horizon)?;
        candidates.push(Verdict { pose, stable });
    }
    let chosen = candidates.iter().find(|v| v.stable).copied();
    let pose = chosen.map_or(candidates[0].pose, |v| v.pose);
    let script = vec![ScriptEntry {
        tick: world.tick(),
        object: object.to_string(),
        motion: Some(Motion::Place),
        to: Some(pose),
        hold: false,
    }];
    log::info!(
        "support plan for {object} on {target}: {} candidates, {} stable",
        candidates.len(),
        candidates.iter().filter(|v| v.stable).count()
    );
    Ok(Plan {
        goal: Goal::Support {
            object: object.to_string(),
            target: target.to_string(),
        },
        mode,
        pose: Some(pose),
        stable: chosen.is_some(),
        candidates,
        script,
    })
}

fn col_span(mask: &Mask) -> (i32, i32) {
    let (_, c0, _, c1) = mask.bounds().expect("non-empty");
    (c0, c1)
}

/// Plans breaking every believed support of `object`: lift it until it no
/// longer touches its supporter, slide it sideways until their columns no
/// longer overlap, then let go. When no sideways position clears the
/// supporter (a floor, say) the object is lifted and kept held.
pub fn plan_unsupport(world: &World, store: &BeliefStore, object: &str, horizon: usize) -> Result<Plan, PlanError> {
    let body = world.body(object)?;
    let id = EntityId::new(object);
    let suppers: Vec<String> = support_descriptions(store)
        .into_iter()
        .filter(|(_, e, _)| *e == id)
        .map(|(_, _, r)| r.as_str().to_string())
        .collect();
    if suppers.is_empty() {
        return Err(PlanError::NotSupported(object.to_string()));
    }
    let mut supper_masks = Vec::new();
    for r in &suppers {
        supper_masks.push(world.body(r)?.mask());
    }
    let fits = |pose: Pose| {
        let m = body.spec.mask_at(pose);
        world.in_bounds(&m) && world.collides(object, &m).is_none()
    };
    let clear = |pose: Pose| {
        let m = body.spec.mask_at(pose);
        supper_masks.iter().all(|s| !touching(&m, s))
    };

    let tick = world.tick();
    let mut pose = body.pose;
    let mut script = Vec::new();
    while !clear(pose) {
        let up = pose.offset(-1, 0);
        if !fits(up) {
            return Err(PlanError::CannotLift(object.to_string()));
        }
        pose = up;
        script.push(ScriptEntry {
            tick: tick + script.len() as u64,
            object: object.to_string(),
            motion: Some(Motion::Up),
            to: None,
            hold: true,
        });
    }

    let disjoint = |p: Pose| {
        let (a0, a1) = col_span(&body.spec.mask_at(p));
        supper_masks.iter().all(|s| {
            let (b0, b1) = col_span(s);
            a1 < b0 || b1 < a0
        })
    };
    let lateral = (1..world.cols())
        .flat_map(|d| [-d, d])
        .map(|d| pose.offset(0, d))
        .find(|&p| fits(p) && disjoint(p));
    if let Some(p) = lateral {
        pose = p;
        script.push(ScriptEntry {
            tick: tick + script.len() as u64,
            object: object.to_string(),
            motion: Some(Motion::Place),
            to: Some(p),
            hold: true,
        });
        script.push(ScriptEntry {
            tick: tick + script.len() as u64,
            object: object.to_string(),
            motion: None,
            to: None,
            hold: false,
        });
    }

    // Run the script and let things settle, then check the object ended up
    // clear of every old supporter.
    let mut w = world.clone();
    w.extend_script(script.iter().cloned());
    for _ in 0..script.len() + horizon {
        w = w.step();
    }
    let end = w.body(object)?.mask();
    let stable = supper_masks.iter().all(|s| !touching(&end, s));
    Ok(Plan {
        goal: Goal::Unsupport {
            object: object.to_string(),
        },
        mode: PlanMode::Whole,
        pose: Some(pose),
        stable,
        candidates: Vec::new(),
        script,
    })
}
