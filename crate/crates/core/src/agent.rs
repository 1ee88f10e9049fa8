//! The perception-action loop.
//!
//! Each tick the agent perceives with the queries it emitted last tick,
//! rebuilds its belief state from those percepts plus whatever support
//! descriptions survive, saturates it, captures part exemplars, plans for
//! goals that fall due, emits next tick's queries and steps the world.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::goal::{Goal, ScheduledGoal};
use crate::parts::{
    capture_exemplar, train_detector, ConceptDef, DetectorModel, DetectorRegistry, Exemplar, ExemplarStore,
    PartError, DEFAULT_PATCH_RADIUS, DEFAULT_TAU,
};
use crate::perception::{Perception, PerceptReport, PerceptionError, DEFAULT_CONTACT_RADIUS};
use crate::planner::{plan_support, plan_unsupport, Plan, DEFAULT_HORIZON};
use crate::rules::{run_to_fixpoint, EngineConfig, EngineError, FixpointReport, ParseError, Rule};
use crate::store::{BeliefStore, EntityId, EntityKind, Provenance, Statement, StoreError, Vocabulary, ISA};
use crate::support::{builtin_ruleset, emit_queries, naf_scope, persist_schemas, support_descriptions, Persistence, PerceptionQuery};
use crate::world::{load_scenario, scenario_text, Frame, Scenario, World, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] WorldError),
    #[error("rule file: {0}")]
    Rules(#[from] ParseError),
    #[error("tick {tick}: {source}")]
    Perception { tick: u64, source: PerceptionError },
    #[error("tick {tick}: {source}")]
    Engine { tick: u64, source: EngineError },
    #[error("tick {tick}: {source}")]
    Store { tick: u64, source: StoreError },
    #[error("tick {tick}: {source}")]
    World { tick: u64, source: WorldError },
    #[error(transparent)]
    Part(#[from] PartError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> AgentError + '_ {
    move |source| AgentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Numeric parameters and concept choices of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentSettings {
    pub concepts: Vec<ConceptDef>,
    pub patch_radius: i32,
    pub tau: u32,
    pub contact_radius: i32,
    pub stability_horizon: usize,
    pub reification_depth: u32,
    pub max_ticks: u64,
    /// Replaces the scenario's standing queries when set.
    pub standing_queries: Option<Vec<PerceptionQuery>>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            concepts: vec![ConceptDef::mug_supp_by_hook()],
            patch_radius: DEFAULT_PATCH_RADIUS,
            tau: DEFAULT_TAU,
            contact_radius: DEFAULT_CONTACT_RADIUS,
            stability_horizon: DEFAULT_HORIZON,
            reification_depth: 2,
            max_ticks: 30,
            standing_queries: None,
        }
    }
}

/// A run configuration read from a flat `key = value` file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgentConfig {
    pub scenario: PathBuf,
    pub rules: Option<PathBuf>,
    pub detector: Option<PathBuf>,
    pub exemplar_dir: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub settings: AgentSettings,
}

fn parse_queries(value: &str) -> Result<Vec<PerceptionQuery>, String> {
    if value.trim() == "none" {
        return Ok(Vec::new());
    }
    value
        .split(';')
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .map(str::parse)
        .collect()
}

fn positive<T: FromStr + PartialOrd + Default>(value: &str) -> Result<T, String> {
    match value.parse::<T>() {
        Ok(v) if v > T::default() => Ok(v),
        _ => Err(format!("expected a positive number, got `{value}`")),
    }
}

impl FromStr for AgentConfig {
    type Err = AgentError;

    /// Keys: `scenario` (required), `rules`, `detector`, `exemplar_dir`,
    /// `log`, `concept` (comma-separated names), `patch_radius`, `tau`,
    /// `contact_radius`, `stability_horizon`, `reification_depth`,
    /// `max_ticks` and `standing_queries` (`;`-separated, or `none`).
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut config = AgentConfig::default();
        let mut scenario = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |message: String| AgentError::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let s = &mut config.settings;
            match key {
                "scenario" => scenario = Some(PathBuf::from(value)),
                "rules" if value != "default" => config.rules = Some(value.into()),
                "rules" => config.rules = None,
                "detector" => config.detector = Some(value.into()),
                "exemplar_dir" => config.exemplar_dir = Some(value.into()),
                "log" => config.log = Some(value.into()),
                "concept" => {
                    s.concepts = value
                        .split(',')
                        .map(str::trim)
                        .filter(|c| !c.is_empty())
                        .map(|c| ConceptDef::builtin(c).ok_or_else(|| fail(format!("unknown concept `{c}`"))))
                        .collect::<Result<_, _>>()?
                }
                "patch_radius" => s.patch_radius = positive(value).map_err(fail)?,
                "tau" => s.tau = value.parse().map_err(|_| fail(format!("bad tau `{value}`")))?,
                "contact_radius" => s.contact_radius = positive(value).map_err(fail)?,
                "stability_horizon" => s.stability_horizon = positive(value).map_err(fail)?,
                "reification_depth" => s.reification_depth = positive(value).map_err(fail)?,
                "max_ticks" => s.max_ticks = positive(value).map_err(fail)?,
                "standing_queries" => s.standing_queries = Some(parse_queries(value).map_err(fail)?),
                other => return Err(fail(format!("unknown key `{other}`"))),
            }
        }
        config.scenario = scenario.ok_or(AgentError::Config {
            line: 0,
            message: "missing `scenario`".into(),
        })?;
        Ok(config)
    }
}

impl AgentConfig {
    pub fn read(path: &Path) -> Result<Self, AgentError> {
        fs::read_to_string(path).map_err(io_error(path))?.parse()
    }

    /// Loads every file the configuration names and builds the agent.
    pub fn build(&self) -> Result<Agent, AgentError> {
        let text = scenario_text(&self.scenario).map_err(io_error(&self.scenario))?;
        let scenario = load_scenario(&text)?;
        let rules = match &self.rules {
            Some(path) => crate::rules::parse_rules(&fs::read_to_string(path).map_err(io_error(path))?)?,
            None => builtin_ruleset(),
        };
        let mut agent = Agent::new(scenario, rules, self.settings.clone())?;
        if let Some(path) = &self.detector {
            let text = fs::read_to_string(path).map_err(io_error(path))?;
            let model = DetectorModel::from_text(&text).map_err(|message| PartError::Format {
                path: path.display().to_string(),
                message,
            })?;
            agent.perception.registry.insert(model);
        }
        if let Some(dir) = &self.exemplar_dir {
            agent.exemplar_store = Some(ExemplarStore::open(dir)?);
        }
        Ok(agent)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogRecord {
    pub tick: u64,
    pub kind: String,
    pub payload: Value,
}

/// One record per event, in the order they happened.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
}

impl EpisodeLog {
    fn push(&mut self, tick: u64, kind: &str, payload: Value) {
        self.records.push(LogRecord {
            tick,
            kind: kind.to_string(),
            payload,
        });
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out += &serde_json::to_string(r).expect("log records serialize");
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), AgentError> {
        fs::write(path, self.to_jsonl()).map_err(io_error(path))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    MaxTicks,
    Quiescent,
}

/// Everything that happened in one tick, kept for inspection.
#[derive(Clone, Debug)]
pub struct TickOutcome {
    pub tick: u64,
    pub frame: Frame,
    pub report: PerceptReport,
    pub persistence: Persistence,
    pub store: BeliefStore,
    pub fixpoint: FixpointReport,
    pub exemplars: Vec<Exemplar>,
    pub plans: Vec<Plan>,
    pub queries: BTreeSet<PerceptionQuery>,
}

impl TickOutcome {
    /// Believed support descriptions as (suppee, supporter) pairs.
    pub fn supports(&self) -> BTreeSet<(String, String)> {
        support_descriptions(&self.store)
            .into_iter()
            .map(|(_, e, r)| (e.as_str().to_string(), r.as_str().to_string()))
            .collect()
    }
}

pub struct Episode {
    pub log: EpisodeLog,
    pub ticks: Vec<TickOutcome>,
    pub halt: HaltReason,
    pub world: World,
}

type Signature = (BTreeSet<PerceptionQuery>, BTreeSet<(String, String)>, BTreeMap<String, crate::world::Pose>);

pub struct Agent {
    pub settings: AgentSettings,
    rules: Vec<Rule>,
    standing: Vec<PerceptionQuery>,
    world: World,
    goals: Vec<ScheduledGoal>,
    pub perception: Perception,
    prev_frame: Option<Frame>,
    prev_store: Option<BeliefStore>,
    exemplars: Vec<Exemplar>,
    pub exemplar_store: Option<ExemplarStore>,
    log: EpisodeLog,
    signature: Option<Signature>,
}

fn triple_strings<'a>(triples: impl IntoIterator<Item = &'a crate::store::Triple>) -> Value {
    Value::from(triples.into_iter().map(ToString::to_string).collect::<Vec<_>>())
}

fn mask_map(masks: &BTreeMap<(String, String), crate::geometry::Mask>) -> Value {
    let map: serde_json::Map<String, Value> = masks
        .iter()
        .map(|((a, b), m)| (format!("{a} {b}"), Value::from(m.to_rle())))
        .collect();
    Value::Object(map)
}

impl Agent {
    pub fn new(scenario: Scenario, rules: Vec<Rule>, settings: AgentSettings) -> Result<Self, AgentError> {
        let vocab = Vocabulary::support_theory();
        for c in &settings.concepts {
            c.validate(&vocab)?;
        }
        let standing = settings
            .standing_queries
            .clone()
            .unwrap_or_else(|| scenario.standing_queries.clone());
        let mut goals = scenario.goals;
        goals.sort_by_key(|g| g.tick);
        Ok(Self {
            perception: Perception::new(DetectorRegistry::new(), settings.contact_radius),
            settings,
            rules,
            standing,
            world: scenario.world,
            goals,
            prev_frame: None,
            prev_store: None,
            exemplars: Vec::new(),
            exemplar_store: None,
            log: EpisodeLog::default(),
            signature: None,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    /// Class facts for every object in the world.
    fn base_store(&self, report: &PerceptReport, tick: u64) -> Result<BeliefStore, AgentError> {
        let fail = |source| AgentError::Store { tick, source };
        let mut store = BeliefStore::new(Vocabulary::support_theory());
        for b in self.world.bodies() {
            let id = b.spec.id.as_str();
            if !store.contains_entity(&EntityId::new(id)) {
                store.register(id, EntityKind::Object).map_err(fail)?;
            }
            let kind = if b.spec.fixed { "Fixed" } else { "Obj" };
            for class in [kind, b.spec.class.as_str()] {
                store
                    .assert_triple(Statement::pos(ISA, id, class).with(Provenance::Asserted))
                    .map_err(fail)?;
            }
        }
        for k in report.mask_entities() {
            store.register(k.as_str(), EntityKind::MaskRef).map_err(fail)?;
        }
        Ok(store)
    }

    fn due_goals(&self, tick: u64) -> Vec<ScheduledGoal> {
        self.goals.iter().filter(|g| g.tick == tick).cloned().collect()
    }

    pub fn step_tick(&mut self) -> Result<TickOutcome, AgentError> {
        let tick = self.world.tick();
        let frame = self.world.render();
        self.log.push(tick, "world", json!({ "poses": frame.poses, "held": self.world.bodies().filter(|b| self.world.is_held(&b.spec.id)).map(|b| b.spec.id.clone()).collect::<Vec<_>>() }));

        // Perceive with last tick's queries.
        let report = match &self.prev_frame {
            Some(prev) => self
                .perception
                .perceive(prev, &frame)
                .map_err(|source| AgentError::Perception { tick, source })?,
            None => PerceptReport::empty(tick),
        };
        self.log.push(
            tick,
            "percepts",
            json!({
                "triples": triple_strings(&report.triples),
                "contact_masks": mask_map(&report.contact_masks),
                "detections": mask_map(&report.detections),
            }),
        );

        // Rebuild the belief state.
        let mut store = self.base_store(&report, tick)?;
        let fail = |source| AgentError::Store { tick, source };
        for t in &report.triples {
            store.assert_triple(t.clone()).map_err(fail)?;
        }
        let persistence = match &self.prev_store {
            Some(prev) => persist_schemas(prev, &report.triples),
            None => Persistence::default(),
        };
        for c in &persistence.carried {
            c.inject(&mut store).map_err(fail)?;
        }
        self.log.push(
            tick,
            "persisted",
            json!({
                "carried": persistence.carried.iter().map(|c| json!([c.record.id, c.suppee, c.supper])).collect::<Vec<_>>(),
                "dropped": persistence.dropped,
            }),
        );
        let due = self.due_goals(tick);
        for g in &due {
            let st = match &g.goal {
                Goal::Support { object, target } => Statement::pos("supportGoal", object, target),
                Goal::Unsupport { object } => Statement::pos("unsupportGoal", object, "none"),
            };
            store.assert_triple(st.with(Provenance::Asserted)).map_err(fail)?;
        }

        // Saturate.
        let before: BTreeSet<String> = store.triples().iter().map(|t| t.statement().to_string()).collect();
        let config = EngineConfig {
            reification_depth: self.settings.reification_depth,
            tick,
            ..EngineConfig::default()
        };
        let fixpoint = run_to_fixpoint(&mut store, &self.rules, &naf_scope(self.perception.pending()), &config)
            .map_err(|source| AgentError::Engine { tick, source })?;
        let derived: Vec<_> = store
            .triples()
            .into_iter()
            .filter(|t| !before.contains(&t.statement().to_string()))
            .collect();
        self.log.push(
            tick,
            "fixpoint",
            json!({
                "iterations": fixpoint.iterations,
                "derived": fixpoint.derived,
                "minted": fixpoint.minted,
                "firings": fixpoint.firings.len(),
                "conflicts": triple_strings(&fixpoint.conflicts),
                "depth_capped": fixpoint.depth_capped,
                "reached_fixpoint": fixpoint.reached_fixpoint,
            }),
        );
        self.log.push(tick, "derived", triple_strings(&derived));

        // Capture exemplars and retrain.
        let mut captured = Vec::new();
        for concept in self.settings.concepts.clone() {
            let Some(ex) = capture_exemplar(&store, &report, &frame, &concept) else {
                continue;
            };
            if let Some(dir) = &self.exemplar_store {
                dir.append(&ex)?;
            }
            self.log.push(
                tick,
                "exemplar",
                json!({ "concept": ex.concept, "object": ex.object, "part": ex.part.to_rle() }),
            );
            self.exemplars.push(ex.clone());
            let same: Vec<Exemplar> = self.exemplars.iter().filter(|e| e.concept == concept.name).cloned().collect();
            let model = train_detector(&same, self.settings.patch_radius, self.settings.tau)?;
            self.log.push(
                tick,
                "detector",
                json!({ "concept": model.concept, "exemplars": same.len(), "positives": model.positives.len(), "negatives": model.negatives.len() }),
            );
            self.perception.registry.insert(model);
            captured.push(ex);
        }

        // Plan for goals read back from the belief state.
        let mut plans = Vec::new();
        for g in &due {
            let planned = match &g.goal {
                Goal::Support { object, target }
                    if store.has_pos("supportGoal", &EntityId::new(object.as_str()), &EntityId::new(target.as_str())) =>
                {
                    plan_support(&self.world, object, target, g.mode, &self.perception.registry, self.settings.stability_horizon)
                }
                Goal::Unsupport { object } => plan_unsupport(&self.world, &store, object, self.settings.stability_horizon),
                Goal::Support { .. } => continue,
            };
            match planned {
                Ok(plan) => {
                    self.log.push(tick, "plan", serde_json::to_value(&plan).expect("plans serialize"));
                    self.world.extend_script(plan.scheduled(tick));
                    plans.push(plan);
                }
                Err(e) => {
                    log::warn!("tick {tick}: cannot plan {}: {e}", g.goal);
                    self.log.push(tick, "plan_failed", json!({ "goal": g.goal, "error": e.to_string() }));
                }
            }
        }

        // Ask perception for next tick.
        let queries = emit_queries(&store, &self.standing);
        self.log.push(
            tick,
            "queries",
            Value::from(queries.iter().map(ToString::to_string).collect::<Vec<_>>()),
        );
        self.perception.submit_queries(queries.iter().cloned());

        self.world = self.world.step();
        self.prev_frame = Some(frame.clone());
        self.prev_store = Some(store.clone());
        Ok(TickOutcome {
            tick,
            frame,
            report,
            persistence,
            store,
            fixpoint,
            exemplars: captured,
            plans,
            queries,
        })
    }

    /// Quiet when nothing is scheduled, nothing moves, and neither the
    /// poses, the queries nor the believed supports changed since last tick.
    fn quiescent(&mut self, outcome: &TickOutcome) -> bool {
        let signature = (outcome.queries.clone(), outcome.supports(), outcome.frame.poses.clone());
        let unchanged = self.signature.as_ref() == Some(&signature);
        self.signature = Some(signature);
        let now = self.world.tick();
        unchanged
            && self.world.pending_script().next().is_none()
            && !self.goals.iter().any(|g| g.tick >= now)
            && self.world.all_settled()
    }

    pub fn run(mut self) -> Result<Episode, AgentError> {
        let mut ticks = Vec::new();
        let mut halt = HaltReason::MaxTicks;
        while (ticks.len() as u64) < self.settings.max_ticks {
            let outcome = self.step_tick()?;
            let quiet = self.quiescent(&outcome);
            ticks.push(outcome);
            if quiet {
                halt = HaltReason::Quiescent;
                break;
            }
        }
        let last = ticks.last().map_or(0, |t| t.tick);
        self.log.push(last, "halt", json!({ "reason": halt, "ticks": ticks.len() }));
        let dump = ticks.last().map(|t| t.store.dump()).unwrap_or_default();
        self.log.push(last, "store", Value::from(dump));
        Ok(Episode {
            log: self.log,
            ticks,
            halt,
            world: self.world,
        })
    }
}

/// Runs a configured episode and writes its log when a log path is set.
pub fn run_loop(config: &AgentConfig) -> Result<Episode, AgentError> {
    let episode = config.build()?.run()?;
    if let Some(path) = &config.log {
        episode.log.write(path)?;
    }
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::asset;

    fn agent(name: &str, settings: AgentSettings) -> Agent {
        let scenario = load_scenario(asset(name).unwrap()).unwrap();
        Agent::new(scenario, builtin_ruleset(), settings).unwrap()
    }

    #[test]
    fn config_parses_every_key() {
        let text = "\
# demo
scenario = assets/scenarios/mug_on_hook.json
rules = default
concept = MugSuppByHook
patch_radius = 2
tau = 3
contact_radius = 1
stability_horizon = 25
reification_depth = 2
max_ticks = 40
standing_queries = contact(mug1, _); relativeMovement(mug1, floor)
exemplar_dir = out/ex
log = out/log.jsonl
";
        let c: AgentConfig = text.parse().unwrap();
        assert_eq!(c.scenario, PathBuf::from("assets/scenarios/mug_on_hook.json"));
        assert_eq!(c.rules, None);
        assert_eq!(c.settings.tau, 3);
        assert_eq!(c.settings.max_ticks, 40);
        assert_eq!(c.settings.standing_queries.as_ref().unwrap().len(), 2);
        assert_eq!(c.log, Some(PathBuf::from("out/log.jsonl")));
    }

    #[test]
    fn config_rejects_bad_values() {
        for bad in [
            "max_ticks = 5",
            "scenario = x\nmax_ticks = 0",
            "scenario = x\ncolour = red",
            "scenario = x\nconcept = Teapot",
            "scenario = x\nstanding_queries = look(mug1)",
            "scenario = x\njust words",
        ] {
            assert!(bad.parse::<AgentConfig>().is_err(), "{bad}");
        }
        let none: AgentConfig = "scenario = x\nstanding_queries = none".parse().unwrap();
        assert_eq!(none.settings.standing_queries, Some(vec![]));
    }

    #[test]
    fn hanging_mug_is_diagnosed_on_the_second_tick() {
        let mut a = agent("mug_on_hook.json", AgentSettings::default());
        let t0 = a.step_tick().unwrap();
        assert!(t0.report.is_empty());
        let t1 = a.step_tick().unwrap();
        assert!(t1.report.has(crate::store::Polarity::Pos, "movDir", "mug1", "down"));
        assert!(t1.supports().is_empty());
        let t2 = a.step_tick().unwrap();
        assert_eq!(t2.supports(), BTreeSet::from([("mug1".to_string(), "hook1".to_string())]));
        assert_eq!(t2.exemplars.len(), 1);
    }

    #[test]
    fn no_queries_means_no_percepts() {
        let settings = AgentSettings {
            standing_queries: Some(vec![]),
            ..AgentSettings::default()
        };
        let ep = agent("mug_on_floor.json", settings).run().unwrap();
        assert!(ep.ticks.iter().all(|t| t.report.is_empty()));
        assert_eq!(ep.halt, HaltReason::Quiescent);
    }
}
