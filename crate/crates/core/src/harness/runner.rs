//! Running experiments, persisting their logs, summarizing and replaying.
//!
//! Layout of an experiment directory:
//!
//! ```text
//! manifest.json          resolved spec, per-run seeds, instances and agents
//! runs/r000_aiad.jsonl   one file per (run, mode): header, records, queries, curve
//! summary.json           per-mode curves, final values and paired tests
//! summary.csv            the same curves in long format
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::spec::{BiasAssumption, DomainKind, ExperimentSpec, ModeSpec};
use super::stats::{mean_se, wilcoxon_signed_rank, MeanSe, WilcoxonResult};
use crate::belief::Belief;
use crate::daytrip::DaytripEnv;
use crate::decision::InteractionRecord;
use crate::error::{Error, Result};
use crate::inventory::InventoryEnv;
use crate::modes::{run_mode, run_pl_automation, AssistDomain, CurvePoint, ModeKind, Params, QueryRecord, RunOutput};
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};

/// Version of the on-disk formats.
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub index: usize,
    pub seed: u64,
    /// The generated problem instance (POIs or demand schedule).
    pub instance: serde_json::Value,
    /// The simulated agent's parameters.
    pub truth: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub engine_version: String,
    pub spec: ExperimentSpec,
    pub runs: Vec<RunManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub version: String,
    pub run: usize,
    pub mode: String,
    pub mode_kind: ModeKind,
    pub seed: u64,
    pub belief_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine<S, A> {
    Header(RunHeader),
    Record(InteractionRecord<S, A>),
    Query(QueryRecord<S>),
    Point(CurvePoint),
}

/// A domain the harness can instantiate from a spec.
trait ExperimentDomain: AssistDomain + Sized {
    fn build(spec: &ExperimentSpec, rng: &mut SimRng) -> Result<Self>;
    fn instance(&self) -> Result<serde_json::Value>;
    fn sample_truth(&self, spec: &ExperimentSpec, index: usize, rng: &mut SimRng) -> Params<Self>;
    fn belief(&self, spec: &ExperimentSpec, bias: BiasAssumption, rng: &mut SimRng) -> Result<Belief<Params<Self>>>;

    fn run_pl(
        &self,
        _truth: &Params<Self>,
        _belief: Belief<Params<Self>>,
        _cfg: &crate::modes::ModeConfig,
        _seed: u64,
    ) -> Result<RunOutput<Self::State, Self::Action>> {
        Err(Error::InvalidArgument("preference queries are not available in this domain".into()))
    }
}

impl ExperimentDomain for DaytripEnv {
    fn build(spec: &ExperimentSpec, rng: &mut SimRng) -> Result<Self> {
        DaytripEnv::generate(spec.daytrip.clone(), rng)
    }

    fn instance(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.pois())?)
    }

    fn sample_truth(&self, spec: &ExperimentSpec, index: usize, rng: &mut SimRng) -> Params<Self> {
        self.sample_agent(rng, spec.anchoring.for_run(index))
    }

    fn belief(&self, spec: &ExperimentSpec, bias: BiasAssumption, rng: &mut SimRng) -> Result<Belief<Params<Self>>> {
        let anchoring = bias.anchoring()?;
        Belief::from_prior(spec.particles, rng, |r| self.sample_particle(r, anchoring, &spec.temperatures))
    }

    fn run_pl(
        &self,
        truth: &Params<Self>,
        belief: Belief<Params<Self>>,
        cfg: &crate::modes::ModeConfig,
        seed: u64,
    ) -> Result<RunOutput<Self::State, Self::Action>> {
        run_pl_automation(self, truth, belief, cfg.pl_queries, cfg, seed)
    }
}

impl ExperimentDomain for InventoryEnv {
    fn build(spec: &ExperimentSpec, rng: &mut SimRng) -> Result<Self> {
        InventoryEnv::generate(spec.inventory.clone(), rng)
    }

    fn instance(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.schedule())?)
    }

    fn sample_truth(&self, _spec: &ExperimentSpec, _index: usize, rng: &mut SimRng) -> Params<Self> {
        self.sample_agent(rng)
    }

    fn belief(&self, spec: &ExperimentSpec, bias: BiasAssumption, rng: &mut SimRng) -> Result<Belief<Params<Self>>> {
        let demand = bias.demand()?;
        Belief::from_prior(spec.particles, rng, |r| self.sample_particle(r, demand, &spec.temperatures))
    }
}

/// Seed of run `index` under seed base `base`.
pub fn run_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, Stream::Instance, index as u64)
}

pub fn run_file_name(index: usize, mode: &str) -> String {
    format!("r{index:03}_{mode}.jsonl")
}

struct RunPlan<D: ExperimentDomain> {
    seed: u64,
    env: D,
    truth: Params<D>,
}

fn plan_run<D: ExperimentDomain>(spec: &ExperimentSpec, index: usize) -> Result<RunPlan<D>> {
    let seed = run_seed(spec.seed, index);
    let env = D::build(spec, &mut stream_rng(seed, Stream::Instance, 1))?;
    let truth = env.sample_truth(spec, index, &mut stream_rng(seed, Stream::Truth, 0));
    Ok(RunPlan { seed, env, truth })
}

/// Runs one mode and renders its log.
fn execute_mode<D: ExperimentDomain>(
    spec: &ExperimentSpec,
    plan: &RunPlan<D>,
    index: usize,
    mode: &ModeSpec,
) -> Result<(String, RunOutput<D::State, D::Action>)> {
    let cfg = mode.config(&spec.settings, spec.domain);
    let belief = if mode.kind.needs_belief() {
        Some(plan.env.belief(spec, mode.bias, &mut stream_rng(plan.seed, Stream::Belief, 0))?)
    } else {
        None
    };
    let output = match mode.kind {
        ModeKind::PlAutomation => plan.env.run_pl(
            &plan.truth,
            belief.expect("preference learning keeps a belief"),
            &cfg,
            plan.seed,
        )?,
        kind => run_mode(kind, &plan.env, &plan.truth, belief, &cfg, plan.seed)?,
    };
    let header = RunHeader {
        version: FORMAT_VERSION.into(),
        run: index,
        mode: mode.name.clone(),
        mode_kind: mode.kind,
        seed: plan.seed,
        belief_updates: output.belief_updates,
    };
    let mut text = String::new();
    let mut push = |line: &LogLine<D::State, D::Action>| -> Result<()> {
        text.push_str(&serde_json::to_string(line)?);
        text.push('\n');
        Ok(())
    };
    push(&LogLine::Header(header))?;
    for r in &output.records {
        push(&LogLine::Record(r.clone()))?;
    }
    for q in &output.queries {
        push(&LogLine::Query(q.clone()))?;
    }
    for p in &output.curve {
        push(&LogLine::Point(p.clone()))?;
    }
    Ok((text, output))
}

fn execute_run<D: ExperimentDomain>(spec: &ExperimentSpec, index: usize, runs_dir: &Path) -> Result<RunManifest> {
    let plan = plan_run::<D>(spec, index)?;
    for mode in &spec.modes {
        let started = Instant::now();
        let (text, output) = execute_mode(spec, &plan, index, mode)?;
        fs::write(runs_dir.join(run_file_name(index, &mode.name)), text)?;
        log::info!(
            "run {index} {}: return {:.3} after {} interactions ({:.1}s)",
            mode.name,
            output.final_point().discounted_return,
            output.curve.len() - 1,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(RunManifest {
        index,
        seed: plan.seed,
        instance: plan.env.instance()?,
        truth: serde_json::to_value(&plan.truth)?,
    })
}

fn execute_run_any(spec: &ExperimentSpec, index: usize, runs_dir: &Path) -> Result<RunManifest> {
    match spec.domain {
        DomainKind::Daytrip => execute_run::<DaytripEnv>(spec, index, runs_dir),
        DomainKind::Inventory => execute_run::<InventoryEnv>(spec, index, runs_dir),
    }
}

/// Executes every (run, mode) pair of `spec`, writes the experiment
/// directory and returns the loaded results.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let runs_dir = spec.output.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let next = AtomicUsize::new(0);
    let manifests: Mutex<Vec<Option<Result<RunManifest>>>> = Mutex::new((0..spec.runs).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= spec.runs {
            break;
        }
        let m = execute_run_any(spec, i, &runs_dir);
        manifests.lock().unwrap()[i] = Some(m);
    };
    let threads = spec.threads.min(spec.runs);
    if threads <= 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(worker);
            }
        });
    }
    let runs = manifests
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|m| m.expect("every run index is claimed"))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: FORMAT_VERSION.into(),
        engine_version: env!("CARGO_PKG_VERSION").into(),
        spec: spec.clone(),
        runs,
    };
    fs::write(spec.output.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let results = load_results(&spec.output)?;
    write_summary(&spec.output, &summarize(&results))?;
    Ok(results)
}

/// Everything needed for summaries and acceptance checks.
#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub manifest: Manifest,
    /// Per mode name, one curve per run index.
    pub curves: BTreeMap<String, Vec<Vec<CurvePoint>>>,
}

impl ExperimentResults {
    pub fn curve(&self, mode: &str) -> Result<&[Vec<CurvePoint>]> {
        self.curves
            .get(mode)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::NotFound(format!("mode {mode}")))
    }

    /// Per-run value of `metric` at `interactions` (or the last point if the
    /// curve is shorter).
    pub fn values_at(&self, mode: &str, interactions: usize, metric: impl Fn(&CurvePoint) -> Option<f64>) -> Result<Vec<Option<f64>>> {
        Ok(self
            .curve(mode)?
            .iter()
            .map(|c| c.get(interactions).or(c.last()).and_then(&metric))
            .collect())
    }

    pub fn final_returns(&self, mode: &str) -> Result<Vec<f64>> {
        Ok(self
            .curve(mode)?
            .iter()
            .map(|c| c.last().map_or(0.0, |p| p.discounted_return))
            .collect())
    }
}

/// Reads `manifest.json` and the curve lines of every run log.
pub fn load_results(dir: &Path) -> Result<ExperimentResults> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut curves = BTreeMap::new();
    for mode in &manifest.spec.modes {
        let mut per_run = Vec::with_capacity(manifest.runs.len());
        for run in &manifest.runs {
            let path = dir.join("runs").join(run_file_name(run.index, &mode.name));
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
            let mut points = Vec::new();
            for line in text.lines() {
                let v: serde_json::Value = serde_json::from_str(line)?;
                if v.get("kind").and_then(|k| k.as_str()) == Some("point") {
                    points.push(serde_json::from_value(v)?);
                }
            }
            per_run.push(points);
        }
        curves.insert(mode.name.clone(), per_run);
    }
    Ok(ExperimentResults { manifest, curves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub interactions: usize,
    pub objective: Option<MeanSe>,
    pub discounted_return: Option<MeanSe>,
    pub entropy: Option<MeanSe>,
    pub error: Option<MeanSe>,
    /// Fraction of runs that followed the advice at this interaction, over
    /// runs that received advice.
    pub acceptance_rate: Option<MeanSe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub name: String,
    pub kind: ModeKind,
    pub final_return: Option<MeanSe>,
    pub final_objective: Option<MeanSe>,
    pub curve: Vec<CurveSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: String,
    pub second: String,
    pub metric: String,
    pub mean_difference: f64,
    pub test: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub name: String,
    pub domain: DomainKind,
    pub runs: usize,
    pub modes: Vec<ModeSummary>,
    pub comparisons: Vec<Comparison>,
}

fn column(curves: &[Vec<CurvePoint>], k: usize, metric: impl Fn(&CurvePoint) -> Option<f64>) -> Option<MeanSe> {
    let values: Vec<f64> = curves.iter().filter_map(|c| c.get(k).and_then(&metric)).collect();
    mean_se(&values)
}

pub fn summarize(results: &ExperimentResults) -> Summary {
    let spec = &results.manifest.spec;
    let mut modes = Vec::new();
    let mut finals: Vec<(String, Vec<f64>, Option<Vec<f64>>)> = Vec::new();
    for m in &spec.modes {
        let curves = &results.curves[&m.name];
        let len = curves.iter().map(Vec::len).max().unwrap_or(0);
        let curve = (0..len)
            .map(|k| CurveSummary {
                interactions: k,
                objective: column(curves, k, |p| p.objective),
                discounted_return: column(curves, k, |p| Some(p.discounted_return)),
                entropy: column(curves, k, |p| p.entropy),
                error: column(curves, k, |p| p.error),
                acceptance_rate: column(curves, k, |p| p.accepted.map(|a| f64::from(u8::from(a)))),
            })
            .collect();
        let last = |f: &dyn Fn(&CurvePoint) -> Option<f64>| -> Vec<f64> {
            curves.iter().filter_map(|c| c.last().and_then(f)).collect()
        };
        let returns = last(&|p| Some(p.discounted_return));
        let objectives = last(&|p| p.objective);
        let objectives = (objectives.len() == curves.len() && !objectives.is_empty()).then_some(objectives);
        modes.push(ModeSummary {
            name: m.name.clone(),
            kind: m.kind,
            final_return: mean_se(&returns),
            final_objective: objectives.as_deref().and_then(mean_se),
            curve,
        });
        finals.push((m.name.clone(), returns, objectives));
    }
    let mut comparisons = Vec::new();
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            let (a, ra, oa) = &finals[i];
            let (b, rb, ob) = &finals[j];
            let mut compare = |metric: &str, x: &[f64], y: &[f64]| {
                if x.len() == y.len() && !x.is_empty() {
                    let diff = x.iter().zip(y).map(|(p, q)| p - q).sum::<f64>() / x.len() as f64;
                    comparisons.push(Comparison {
                        first: a.clone(),
                        second: b.clone(),
                        metric: metric.into(),
                        mean_difference: diff,
                        test: wilcoxon_signed_rank(x, y),
                    });
                }
            };
            compare("final_return", ra, rb);
            if let (Some(x), Some(y)) = (oa, ob) {
                compare("final_objective", x, y);
            }
        }
    }
    Summary {
        version: FORMAT_VERSION.into(),
        name: spec.name.clone(),
        domain: spec.domain,
        runs: results.manifest.runs.len(),
        modes,
        comparisons,
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    mode: &'a str,
    interactions: usize,
    metric: &'a str,
    mean: f64,
    se: f64,
    n: usize,
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    let mut csv = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_error)?;
    for m in &summary.modes {
        for c in &m.curve {
            let metrics = [
                ("objective", c.objective),
                ("discounted_return", c.discounted_return),
                ("entropy", c.entropy),
                ("error", c.error),
                ("acceptance_rate", c.acceptance_rate),
            ];
            for (metric, value) in metrics {
                if let Some(v) = value {
                    csv.serialize(CsvRow {
                        mode: &m.name,
                        interactions: c.interactions,
                        metric,
                        mean: v.mean,
                        se: v.se,
                        n: v.n,
                    })
                    .map_err(csv_error)?;
                }
            }
        }
    }
    csv.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Recomputes `summary.json` and `summary.csv` from an experiment directory.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let summary = summarize(&load_results(dir)?);
    write_summary(dir, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub file: PathBuf,
    pub identical: bool,
    /// 1-based number of the first differing line.
    pub first_difference: Option<usize>,
}

/// Re-executes the run logged in `run_file` from its experiment's manifest
/// and compares the regenerated log byte for byte.
pub fn replay(run_file: &Path) -> Result<ReplayReport> {
    let text = fs::read_to_string(run_file)?;
    let first = text
        .lines()
        .next()
        .ok_or_else(|| Error::Contract(format!("{} is empty", run_file.display())))?;
    let header_value: serde_json::Value = serde_json::from_str(first)?;
    let header: RunHeader = serde_json::from_value(header_value)?;
    let dir = run_file
        .parent()
        .and_then(Path::parent)
        .ok_or_else(|| Error::NotFound("experiment directory".into()))?;
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let mode = manifest
        .spec
        .modes
        .iter()
        .find(|m| m.name == header.mode)
        .ok_or_else(|| Error::NotFound(format!("mode {} in manifest", header.mode)))?;
    let run = manifest
        .runs
        .iter()
        .find(|r| r.index == header.run)
        .ok_or_else(|| Error::NotFound(format!("run {} in manifest", header.run)))?;
    let regenerated = match manifest.spec.domain {
        DomainKind::Daytrip => replay_text::<DaytripEnv>(&manifest.spec, run, mode)?,
        DomainKind::Inventory => replay_text::<InventoryEnv>(&manifest.spec, run, mode)?,
    };
    let first_difference = text
        .lines()
        .zip(regenerated.lines())
        .position(|(a, b)| a != b)
        .or_else(|| (text.lines().count() != regenerated.lines().count()).then(|| text.lines().count().min(regenerated.lines().count())))
        .map(|i| i + 1);
    Ok(ReplayReport {
        file: run_file.to_path_buf(),
        identical: text == regenerated,
        first_difference,
    })
}

fn replay_text<D: ExperimentDomain>(spec: &ExperimentSpec, run: &RunManifest, mode: &ModeSpec) -> Result<String> {
    let plan = plan_run::<D>(spec, run.index)?;
    if plan.seed != run.seed || plan.env.instance()? != run.instance || serde_json::to_value(&plan.truth)? != run.truth {
        return Err(Error::Contract(format!(
            "run {} no longer regenerates the instance recorded in the manifest",
            run.index
        )));
    }
    Ok(execute_mode(spec, &plan, run.index, mode)?.0)
}
