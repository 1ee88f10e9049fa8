use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hanger_core::agent::{Agent, AgentConfig};
use hanger_core::goal::{Goal, PlanMode};
use hanger_core::parts::{train_detector, ConceptDef, DetectorModel, DetectorRegistry, ExemplarStore};
use hanger_core::planner::{plan_support, plan_unsupport};
use hanger_core::rules::{explain, run_to_fixpoint, EngineConfig, NafScope};
use hanger_core::store::{BeliefStore, EntityId, Provenance, Statement, Vocabulary};
use hanger_core::support::{load_ruleset, naf_scope, PerceptionQuery};
use hanger_core::world::{load_scenario, scenario_text, Scenario};

#[derive(Parser)]
#[command(name = "hanger", version, about = "Perceive, reason about and plan support in a grid microworld")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the episode log (JSON lines).
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    /// Directory to write one percept report per tick into.
    #[arg(long, global = true)]
    dump_percepts: Option<PathBuf>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the perception-action loop on a scenario.
    Run(RunArgs),
    /// Saturate a triple file under a rule set and print what was derived.
    Saturate(SaturateArgs),
    /// Plan a support or unsupport goal.
    Plan(PlanArgs),
    /// Train a part detector from a directory of exemplars.
    TrainPart(TrainArgs),
    /// Run a part detector on an object of a scenario.
    DetectPart(DetectArgs),
    /// Entities lying on every path between two entities of a belief file.
    Deps(DepsArgs),
    /// Show how a triple was derived.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file, or the name of a shipped scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Stop after this many ticks even if the world has not gone quiet.
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Directory to append captured exemplars to.
    #[arg(long)]
    exemplar_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RulesArg {
    /// Rule file, or `default` for the built-in theory of support.
    #[arg(long, default_value = "default")]
    rules: String,
}

#[derive(Args)]
struct SaturateArgs {
    /// Fact file in dump format.
    facts: PathBuf,
    #[command(flatten)]
    rules: RulesArg,
    /// Queries perception is taken to have answered, `;`-separated.
    /// Without it negation is closed-world over every perceived predicate.
    #[arg(long)]
    answered: Option<String>,
    /// Print the whole saturated store instead of only derived triples.
    #[arg(long)]
    all: bool,
    /// Deepest chain of minted entities allowed.
    #[arg(long, default_value_t = 2)]
    reification_depth: u32,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// `support:<object>:<target>` or `unsupport:<object>`.
    #[arg(long)]
    goal: Goal,
    /// `whole` searches with every cell of the object, `part` only with its detected part.
    #[arg(long, default_value = "whole")]
    mode: PlanMode,
    /// Detector model for part mode; otherwise one trained while settling is used.
    #[arg(long)]
    detector: Option<PathBuf>,
    /// Ticks a placed object must stay put to count as stable.
    #[arg(long, default_value_t = 20)]
    horizon: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of `.exemplar` files.
    #[arg(long)]
    exemplars: PathBuf,
    /// Concept whose exemplars to train on.
    #[arg(long, default_value = "MugSuppByHook")]
    concept: String,
    /// Patch radius; patches are (2r+1) cells on a side.
    #[arg(long, default_value_t = 2)]
    radius: i32,
    /// Largest Hamming distance at which a patch still matches.
    #[arg(long, default_value_t = 2)]
    tau: u32,
    /// Where to write the detector model.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Detector model written by `train-part`.
    #[arg(long)]
    model: PathBuf,
    /// Object to look for the part on.
    #[arg(long)]
    object: String,
    /// Simulate this many ticks before looking.
    #[arg(long, default_value_t = 0)]
    ticks: u64,
    /// Annotation to score the detection against.
    #[arg(long, default_value = "handle_contact")]
    annotation: String,
}

#[derive(Args)]
struct DepsArgs {
    /// First entity.
    a: String,
    /// Second entity.
    b: String,
    /// Belief file in dump format.
    #[arg(long)]
    beliefs: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    /// A triple such as `pos aff _:force-0123456789abcdef mug1`.
    triple: String,
    /// Fact file to saturate before explaining.
    #[arg(long)]
    facts: PathBuf,
    #[command(flatten)]
    rules: RulesArg,
    /// Queries taken as answered, as for `saturate`.
    #[arg(long)]
    answered: Option<String>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn config(cli: &Cli) -> Result<Option<AgentConfig>> {
    cli.config
        .as_deref()
        .map(|p| AgentConfig::read(p).with_context(|| format!("config {}", p.display())))
        .transpose()
}

fn scenario_path(arg: &ScenarioArg, config: Option<&AgentConfig>) -> Result<PathBuf> {
    match (&arg.scenario, config) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(c)) => Ok(c.scenario.clone()),
        (None, None) => bail!("no scenario; pass --scenario or --config"),
    }
}

fn scenario(path: &Path) -> Result<Scenario> {
    let text = scenario_text(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(load_scenario(&text)?)
}

fn rules(arg: &RulesArg) -> Result<Vec<hanger_core::rules::Rule>> {
    if arg.rules == "default" {
        return Ok(load_ruleset(None)?);
    }
    Ok(load_ruleset(Some(&read(Path::new(&arg.rules))?))?)
}

fn scope(answered: Option<&str>, vocab: &Vocabulary) -> Result<NafScope> {
    match answered {
        None => {
            let mut scope = NafScope::new();
            for p in vocab.predicates().filter(|p| vocab.is_perceived(p)) {
                scope.answer_all(p);
            }
            Ok(scope)
        }
        Some(text) => {
            let queries: Vec<PerceptionQuery> = text
                .split(';')
                .map(str::trim)
                .filter(|q| !q.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(anyhow::Error::msg)?;
            Ok(naf_scope(&queries))
        }
    }
}

fn saturated(facts: &Path, rules_arg: &RulesArg, answered: Option<&str>, depth: u32) -> Result<(BeliefStore, BeliefStore)> {
    let vocab = Vocabulary::support_theory();
    let mut store = BeliefStore::load(&read(facts)?, vocab.clone())?;
    let before = store.clone();
    let rules = rules(rules_arg)?;
    let config = EngineConfig {
        reification_depth: depth,
        ..EngineConfig::default()
    };
    let report = run_to_fixpoint(&mut store, &rules, &scope(answered, &vocab)?, &config)?;
    for c in &report.conflicts {
        eprintln!("conflict: {c}");
    }
    Ok((before, store))
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let mut config = match config(cli)? {
        Some(c) => c,
        None => AgentConfig {
            scenario: scenario_path(&args.scenario, None)?,
            ..AgentConfig::default()
        },
    };
    if let Some(p) = &args.scenario.scenario {
        config.scenario = p.clone();
    }
    if let Some(n) = args.max_ticks {
        config.settings.max_ticks = n;
    }
    if let Some(dir) = &args.exemplar_dir {
        config.exemplar_dir = Some(dir.clone());
    }
    if let Some(log) = &cli.log {
        config.log = Some(log.clone());
    }
    let episode = hanger_core::agent::run_loop(&config)?;
    if let Some(dir) = &cli.dump_percepts {
        fs::create_dir_all(dir)?;
        for t in &episode.ticks {
            fs::write(dir.join(format!("tick-{:04}.percepts", t.tick)), t.report.to_text())?;
        }
    }
    for t in &episode.ticks {
        let supports: Vec<String> = t.supports().into_iter().map(|(e, r)| format!("{e} on {r}")).collect();
        writeln!(out, 
            "tick {:>3}  percepts {:>3}  derived {:>3}  exemplars {}  plans {}  supports [{}]",
            t.tick,
            t.report.triples.len(),
            t.fixpoint.derived,
            t.exemplars.len(),
            t.plans.len(),
            supports.join(", ")
        )?;
    }
    writeln!(out, "halted after {} ticks ({:?})", episode.ticks.len(), episode.halt)?;
    if let Some(log) = &config.log {
        writeln!(out, "log written to {}", log.display())?;
    }
    Ok(())
}

fn cmd_saturate(args: &SaturateArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let (before, after) = saturated(&args.facts, &args.rules, args.answered.as_deref(), args.reification_depth)?;
    if args.all {
        write!(out, "{}", after.dump())?;
        return Ok(());
    }
    let mut lines: Vec<String> = after
        .triples()
        .into_iter()
        .filter(|t| !before.contains(&t.statement()) && matches!(t.provenance, Provenance::Inferred { .. }))
        .map(|t| t.to_string())
        .collect();
    lines.sort();
    for l in lines {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

fn cmd_plan(cli: &Cli, args: &PlanArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let cfg = config(cli)?;
    let path = scenario_path(&args.scenario, cfg.as_ref())?;
    let mut scenario = scenario(&path)?;
    scenario.goals.clear();
    let mut settings = cfg.map(|c| c.settings).unwrap_or_default();
    settings.stability_horizon = args.horizon;
    let (radius, tau) = (settings.patch_radius, settings.tau);
    // Let the scene settle so the belief state matches the world the plan starts from.
    let episode = Agent::new(scenario, load_ruleset(None)?, settings)?.run()?;
    let last = episode.ticks.last().context("episode ran no ticks")?;
    let mut registry = DetectorRegistry::new();
    if let Some(p) = &args.detector {
        registry.insert(DetectorModel::from_text(&read(p)?).map_err(anyhow::Error::msg)?);
    } else {
        let exemplars: Vec<_> = episode.ticks.iter().flat_map(|t| t.exemplars.clone()).collect();
        if !exemplars.is_empty() {
            registry.insert(train_detector(&exemplars, radius, tau)?);
        }
    }
    if args.mode == PlanMode::Part && registry.is_empty() {
        bail!("no part exemplars were seen while the scene settled; pass --detector with a model from `train-part`");
    }
    let plan = match &args.goal {
        Goal::Support { object, target } => {
            plan_support(&episode.world, object, target, args.mode, &registry, args.horizon)?
        }
        Goal::Unsupport { object } => plan_unsupport(&episode.world, &last.store, object, args.horizon)?,
    };
    write!(out, "{}", plan.to_text())?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let concept = ConceptDef::builtin(&args.concept).with_context(|| format!("unknown concept `{}`", args.concept))?;
    let store = ExemplarStore::open(&args.exemplars)?;
    let exemplars = store.load_concept(&concept.name)?;
    let model = train_detector(&exemplars, args.radius, args.tau)?;
    fs::write(&args.out, model.to_text()).with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(out, 
        "trained {} on {} exemplars: {} positive, {} negative descriptors -> {}",
        model.concept,
        exemplars.len(),
        model.positives.len(),
        model.negatives.len(),
        args.out.display()
    )?;
    Ok(())
}

fn cmd_detect(cli: &Cli, args: &DetectArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let cfg = config(cli)?;
    let mut world = scenario(&scenario_path(&args.scenario, cfg.as_ref())?)?.world;
    for _ in 0..args.ticks {
        world = world.step();
    }
    let model = DetectorModel::from_text(&read(&args.model)?).map_err(anyhow::Error::msg)?;
    let frame = world.render();
    let found = model.detect(&frame, &args.object)?;
    writeln!(out, "{} on {}: {} cells", model.concept, args.object, found.len())?;
    writeln!(out, "mask {}", found.to_rle())?;
    let body = world.body(&args.object)?;
    if let Some(truth) = body.spec.annotation_at(&args.annotation, body.pose) {
        writeln!(out, "iou vs {} {:.3}", args.annotation, found.iou(&truth))?;
    }
    Ok(())
}

fn cmd_deps(args: &DepsArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let store = BeliefStore::load(&read(&args.beliefs)?, Vocabulary::support_theory())?;
    let nodes = store.dependency_query(&EntityId::new(args.a.as_str()), &EntityId::new(args.b.as_str()))?;
    for n in nodes {
        writeln!(out, "{n}")?;
    }
    Ok(())
}

fn cmd_explain(args: &ExplainArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let statement: Statement = args.triple.parse().map_err(anyhow::Error::msg)?;
    let (_, store) = saturated(&args.facts, &args.rules, args.answered.as_deref(), 2)?;
    let tree = explain(&store, &statement)?;
    write!(out, "{}", tree.render())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(&cli, a),
        Command::Saturate(a) => cmd_saturate(a),
        Command::Plan(a) => cmd_plan(&cli, a),
        Command::TrainPart(a) => cmd_train(a),
        Command::DetectPart(a) => cmd_detect(&cli, a),
        Command::Deps(a) => cmd_deps(a),
        Command::Explain(a) => cmd_explain(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
