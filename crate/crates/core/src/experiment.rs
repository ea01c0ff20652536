//! Experiment commands: run a scenario, train, the ablation matrix and log
//! replay. Every command writes into its own output directory with a
//! manifest sufficient to reproduce it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::agents::{checkpoint, rollout, train, Actors, EpisodeStats, Exploration, Maddpg, Session};
use crate::analysis::{write_csv, MetricTables};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::game::log::{read_records, write_records};
use crate::game::TickRecord;
use crate::planner::{HttpChatClient, Planner, PlannerConfig, PlannerMode, PlannerStats, API_KEY_ENV};
use crate::radio::JamKind;

pub const MANIFEST_VERSION: u32 = 1;
/// Smoothing window, in ticks, for exported reward series.
pub const DEFAULT_SMOOTHING: usize = 100;

/// How planners reach a language model: a real endpoint with a key, a
/// local mock, or not at all.
#[derive(Clone, Debug, Default)]
pub struct PlannerFactory {
    pub api_key: Option<String>,
    /// Overrides the configured endpoint and waives the key requirement.
    pub mock_endpoint: Option<String>,
}

impl PlannerFactory {
    /// Reads the API key from the environment.
    pub fn from_env() -> Self {
        Self { api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()), mock_endpoint: None }
    }

    pub fn with_mock(mut self, endpoint: impl Into<String>) -> Self {
        self.mock_endpoint = Some(endpoint.into());
        self
    }

    /// Fails early when an LLM planner is requested with no way to reach one.
    pub fn check(&self, cfg: &PlannerConfig) -> Result<()> {
        if cfg.mode == PlannerMode::Llm && self.api_key.is_none() && self.mock_endpoint.is_none() {
            return Err(Error::Argument(format!(
                "planner mode `llm` needs {API_KEY_ENV} to be set or a mock fixture (--mock-llm)"
            )));
        }
        Ok(())
    }

    /// `None` in pattern mode; an offline heuristic planner in heuristic mode.
    pub fn build(&self, cfg: &PlannerConfig, seed: u64) -> Result<Option<Planner>> {
        self.check(cfg)?;
        Ok(match cfg.mode {
            PlannerMode::Pattern => None,
            PlannerMode::Heuristic => Some(Planner::offline(cfg.clone(), seed)),
            PlannerMode::Llm => {
                let mut http_cfg = cfg.clone();
                if let Some(ep) = &self.mock_endpoint {
                    http_cfg.endpoint = ep.clone();
                }
                let client = HttpChatClient::new(&http_cfg, self.api_key.clone());
                Some(Planner::with_transport(cfg.clone(), Box::new(client), seed))
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    pub crate_version: String,
    pub created: String,
    pub seed: u64,
    pub steps: u64,
    pub config_hash: String,
    pub planner_mode: PlannerMode,
    pub planner: Option<PlannerStats>,
    pub files: Vec<String>,
}

impl Manifest {
    fn new(command: &str, scenario: &ScenarioConfig, steps: u64) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            command: command.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            seed: scenario.seed,
            steps,
            config_hash: scenario.hash(),
            planner_mode: scenario.planner.mode,
            planner: None,
            files: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

/// Creates `root/<prefix>-<UTC timestamp>`, adding a counter on collision.
pub fn timestamped_dir(root: &Path, prefix: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = root.join(format!("{prefix}-{stamp}"));
    let mut dir = base.clone();
    let mut k = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                k += 1;
                dir = PathBuf::from(format!("{}-{k}", base.display()));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn steps_or_default(scenario: &ScenarioConfig, steps: Option<u64>) -> u64 {
    steps.unwrap_or(scenario.world.total_steps)
}

/// Summary of a finished run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub steps: u64,
    pub tables: MetricTables,
    pub curves: Vec<EpisodeStats>,
    pub planner: Option<PlannerStats>,
}

impl RunReport {
    pub fn mean_r_ally(&self) -> f64 {
        self.tables.r_ally.0.values().sum::<f64>() / self.steps.max(1) as f64
    }

    pub fn mean_r_opponent(&self) -> f64 {
        self.tables.r_opponent.0.values().sum::<f64>() / self.steps.max(1) as f64
    }
}

/// Learned agents for `run`: from a checkpoint, or freshly initialized from
/// the seed when none is given.
fn learned_agents(scenario: &ScenarioConfig, ckpt: Option<&Path>) -> Result<Option<Maddpg>> {
    use crate::agents::{AllyKind, OpponentKind};
    let (la, lo) = (scenario.agents.ally == AllyKind::Maddpg, scenario.agents.opponent == OpponentKind::Maddpg);
    if !la && !lo {
        return Ok(None);
    }
    let cfg = scenario.agents.maddpg.clone();
    Ok(Some(match ckpt {
        Some(p) => Maddpg::from_networks(cfg, checkpoint::load(p)?, la, lo)?,
        None => {
            log::warn!("no checkpoint given; learned agents act with untrained networks");
            Maddpg::new(cfg, la, lo, scenario.seed)?
        }
    }))
}

/// Plays `steps` ticks (default `world.total_steps`) and writes `log.jsonl`,
/// metric tables, `config.toml` and `manifest.json` into `dir`.
pub fn run_in(
    scenario: &ScenarioConfig,
    factory: &PlannerFactory,
    steps: Option<u64>,
    checkpoint: Option<&Path>,
    dir: &Path,
) -> Result<RunReport> {
    scenario.validate()?;
    std::fs::create_dir_all(dir)?;
    let steps = steps_or_default(scenario, steps);
    let planner = factory.build(&scenario.planner, scenario.seed)?;
    let maddpg = learned_agents(scenario, checkpoint)?;
    let actors = maddpg.as_ref().map(Actors::from_maddpg).unwrap_or_default();
    let mut session = Session::new(scenario, planner, scenario.seed)?;

    let mut log = BufWriter::new(File::create(dir.join("log.jsonl"))?);
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let (_, out) = session.step(&actors, Exploration::GREEDY)?;
        writeln!(log, "{}", out.record.to_line())?;
        records.push(out.record);
    }
    log.flush()?;
    let planner = session.planner_stats();
    let curves = session.finish();

    let tables = finish_outputs(scenario, "run", steps, planner, &records, &curves, dir)?;
    Ok(RunReport { dir: dir.to_path_buf(), steps, tables, curves, planner })
}

/// [`run_in`] inside a fresh timestamped directory under `root`.
pub fn run(
    scenario: &ScenarioConfig,
    factory: &PlannerFactory,
    steps: Option<u64>,
    checkpoint: Option<&Path>,
    root: &Path,
) -> Result<RunReport> {
    factory.check(&scenario.planner)?;
    scenario.validate()?;
    let dir = timestamped_dir(root, "run")?;
    run_in(scenario, factory, steps, checkpoint, &dir)
}

fn finish_outputs(
    scenario: &ScenarioConfig,
    command: &str,
    steps: u64,
    planner: Option<PlannerStats>,
    records: &[TickRecord],
    curves: &[EpisodeStats],
    dir: &Path,
) -> Result<MetricTables> {
    let mut files = vec!["config.toml".to_string(), "curves.csv".into()];
    std::fs::write(dir.join("config.toml"), scenario.to_toml_string())?;
    write_csv(File::create(dir.join("curves.csv"))?, curves)?;
    let tables = if records.is_empty() {
        None
    } else {
        let t = MetricTables::compute(records, scenario.costs.snr_threshold_db, DEFAULT_SMOOTHING)?;
        t.write_dir(dir)?;
        files.extend(["episodes.csv", "stages.csv", "rewards.csv"].map(String::from));
        Some(t)
    };
    if dir.join("log.jsonl").exists() {
        files.insert(0, "log.jsonl".into());
    }
    let mut manifest = Manifest::new(command, scenario, steps);
    manifest.planner = planner;
    manifest.files = files;
    manifest.write(dir)?;
    tables.ok_or(Error::EmptyWindow)
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub dir: PathBuf,
    pub maddpg: Maddpg,
    pub curves: Vec<EpisodeStats>,
    pub updates: u64,
}

/// Trains the learned agents and writes `checkpoint.bin`, the training log,
/// learning curves and metrics into a timestamped directory under `root`.
pub fn train_cmd(
    scenario: &ScenarioConfig,
    factory: &PlannerFactory,
    steps: Option<u64>,
    root: &Path,
) -> Result<TrainReport> {
    scenario.validate()?;
    factory.check(&scenario.planner)?;
    let steps = steps.unwrap_or(scenario.agents.maddpg.total_steps);
    let planner = factory.build(&scenario.planner, scenario.seed)?;
    let dir = timestamped_dir(root, "train")?;
    let out = train(scenario, planner, steps, scenario.seed, true)?;
    let mut log = BufWriter::new(File::create(dir.join("log.jsonl"))?);
    write_records(&mut log, &out.records)?;
    log.flush()?;
    checkpoint::save(&dir.join("checkpoint.bin"), &out.maddpg.networks())?;
    if !out.records.is_empty() {
        finish_outputs(scenario, "train", steps, out.planner, &out.records, &out.curves, &dir)?;
    } else {
        let mut m = Manifest::new("train", scenario, steps);
        m.files = vec!["config.toml".into(), "checkpoint.bin".into()];
        std::fs::write(dir.join("config.toml"), scenario.to_toml_string())?;
        m.write(&dir)?;
    }
    Ok(TrainReport { dir, maddpg: out.maddpg, curves: out.curves, updates: out.updates })
}

/// One cell of the ablation matrix: a named modification of the base
/// scenario.
#[derive(Clone, Debug)]
pub struct AblationCell {
    pub name: String,
    pub scenario: ScenarioConfig,
}

/// Baseline, the four single-jam cells, no knowledge base, and heuristic
/// planner in place of the language model.
pub fn ablation_cells(base: &ScenarioConfig) -> Vec<AblationCell> {
    let cell = |name: &str, f: &dyn Fn(&mut ScenarioConfig)| {
        let mut s = base.clone();
        f(&mut s);
        AblationCell { name: name.into(), scenario: s }
    };
    let mut cells = vec![cell("baseline", &|_| {})];
    for kind in JamKind::ALL {
        cells.push(cell(&format!("single_jam_{}", kind.slug()), &|s| s.agents.jam_type_lock = Some(kind)));
    }
    cells.push(cell("no_kb", &|s| s.kb.enabled = false));
    cells.push(cell("no_llm", &|s| s.planner.mode = PlannerMode::Heuristic));
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub cell: String,
    pub jam_type_lock: Option<JamKind>,
    pub kb_enabled: bool,
    pub planner_mode: PlannerMode,
    pub seeds: usize,
    pub mean_r_ally: f64,
    pub mean_r_opponent: f64,
    pub overlap_pct: f64,
    pub success_pct: f64,
    pub error: Option<String>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs every cell for each seed in `seeds` (each cell sees the same
/// seeds) and writes per-cell run directories plus `ablation.csv`. A failing
/// cell gets an error row; the others continue.
pub fn ablate(
    base: &ScenarioConfig,
    factory: &PlannerFactory,
    seeds: &[u64],
    steps: Option<u64>,
    root: &Path,
) -> Result<(PathBuf, Vec<AblationRow>)> {
    base.validate()?;
    let dir = timestamped_dir(root, "ablate")?;
    let mut rows = Vec::new();
    for cell in ablation_cells(base) {
        let result: Result<Vec<RunReport>> = seeds
            .iter()
            .map(|&seed| {
                let mut s = cell.scenario.clone();
                s.seed = seed;
                run_in(&s, factory, steps, None, &dir.join(&cell.name).join(format!("seed-{seed}")))
            })
            .collect();
        let s = &cell.scenario;
        let mut row = AblationRow {
            cell: cell.name.clone(),
            jam_type_lock: s.agents.jam_type_lock,
            kb_enabled: s.kb.enabled,
            planner_mode: s.planner.mode,
            seeds: seeds.len(),
            mean_r_ally: f64::NAN,
            mean_r_opponent: f64::NAN,
            overlap_pct: f64::NAN,
            success_pct: f64::NAN,
            error: None,
        };
        match result {
            Ok(reports) => {
                let col = |f: &dyn Fn(&RunReport) -> f64| mean(&reports.iter().map(f).collect::<Vec<_>>());
                row.mean_r_ally = col(&|r| r.mean_r_ally());
                row.mean_r_opponent = col(&|r| r.mean_r_opponent());
                row.overlap_pct = col(&|r| r.tables.overlap_pct);
                row.success_pct = col(&|r| r.tables.success_pct);
            }
            Err(e) => {
                log::error!("ablation cell `{}` failed: {e}", cell.name);
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    write_csv(File::create(dir.join("ablation.csv"))?, &rows)?;
    let mut manifest = Manifest::new("ablate", base, steps_or_default(base, steps));
    manifest.files = vec!["ablation.csv".into()];
    manifest.write(&dir)?;
    Ok((dir, rows))
}

pub fn read_log(path: &Path) -> Result<Vec<TickRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

/// Recomputes the metric tables of a stored log without re-simulating and
/// writes them into `out`. `m_db` is the SNR threshold used for success.
pub fn replay(log_path: &Path, m_db: f64, out: &Path) -> Result<MetricTables> {
    let records = read_log(log_path)?;
    let tables = MetricTables::compute(&records, m_db, DEFAULT_SMOOTHING)?;
    std::fs::create_dir_all(out)?;
    tables.write_dir(out)?;
    Ok(tables)
}

/// Evaluation rollout of scripted agents only, no files written.
pub fn evaluate(scenario: &ScenarioConfig, steps: u64, seed: u64) -> Result<Vec<TickRecord>> {
    Ok(rollout(scenario, None, None, steps, seed)?.records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut s = ScenarioConfig::default();
        s.world.episode_length = 40;
        s
    }

    #[test]
    fn llm_mode_without_key_or_mock_is_refused() {
        let mut s = small();
        s.planner.mode = PlannerMode::Llm;
        let f = PlannerFactory::default();
        let err = f.build(&s.planner, 0).err().unwrap();
        assert!(err.to_string().contains(API_KEY_ENV), "{err}");
        assert!(f.clone().with_mock("http://127.0.0.1:9/v1/chat/completions").build(&s.planner, 0).unwrap().is_some());
    }

    #[test]
    fn run_writes_exact_log_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let r = run(&small(), &PlannerFactory::default(), Some(100), None, tmp.path()).unwrap();
        let log = std::fs::read_to_string(r.dir.join("log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 100);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(r.dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 42);
        assert_eq!(manifest["config_hash"], small().hash());
        let back = ScenarioConfig::load(&r.dir.join("config.toml")).unwrap();
        assert_eq!(back, small());
    }

    #[test]
    fn replay_matches_run_tables() {
        let tmp = tempfile::tempdir().unwrap();
        let s = small();
        let r = run(&s, &PlannerFactory::default(), Some(120), None, tmp.path()).unwrap();
        let t = replay(&r.dir.join("log.jsonl"), s.costs.snr_threshold_db, &tmp.path().join("re")).unwrap();
        assert_eq!(t, r.tables);
        for f in ["episodes.csv", "stages.csv", "rewards.csv"] {
            assert_eq!(std::fs::read(r.dir.join(f)).unwrap(), std::fs::read(tmp.path().join("re").join(f)).unwrap());
        }
    }

    #[test]
    fn ablation_cells_differ_from_baseline_in_one_setting() {
        let base = small();
        let cells = ablation_cells(&base);
        assert_eq!(cells.len(), 7);
        assert_eq!(cells.iter().filter(|c| c.name.starts_with("single_jam_")).count(), 4);
        let no_kb = &cells.iter().find(|c| c.name == "no_kb").unwrap().scenario;
        let mut expect = base.clone();
        expect.kb.enabled = false;
        assert_eq!(no_kb, &expect);
    }
}
