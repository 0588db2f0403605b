use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use isn_core::coco::{self, ResultRecord};
use isn_core::eval::{self, EvalConfig, EvalResult};
use isn_core::pyramid::stage_histogram;
use isn_core::sampling::{
    isn_partition_pyramid, resized_scale_distributions, snip_partition, Partition, SamplingPolicy,
    ScaleHistogram,
};
use isn_core::search::{greedy_range_search, LookupOracle, SearchOutcome};
use isn_core::sim::{self, Strategy};
use isn_core::{Dataset, Detection, ScaleRange};
use serde::Serialize;

use crate::config::AppConfig;
use crate::output;

/// Shared context of one invocation.
pub struct Run {
    pub config: AppConfig,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a AppConfig,
    #[serde(flatten)]
    body: T,
}

impl Run {
    fn report<T: Serialize>(&self, body: T) -> Result<Vec<u8>> {
        output::to_json(&Report {
            config: &self.config,
            body,
        })
    }

    fn write_sidecar(&self) -> Result<()> {
        if let Some(out) = &self.out {
            output::write_json(&output::config_sidecar(out), &self.config)?;
        }
        Ok(())
    }

    /// JSON report to `--out` (or stdout) and, with `--out`, CSV next to it.
    fn emit_report(&self, json: &[u8], csv: Option<Vec<u8>>) -> Result<()> {
        output::emit(self.out.as_deref(), json)?;
        if let (Some(out), Some(csv)) = (&self.out, csv) {
            output::write_atomic(&output::sibling(out, "csv"), &csv)?;
        }
        Ok(())
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    coco::ingest_path(path).with_context(|| format!("reading annotations {}", path.display()))
}

fn read_results(paths: &[PathBuf]) -> Result<Vec<coco::TaggedDetection>> {
    let mut all = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading detections {}", path.display()))?;
        let dets = coco::parse_results(&text)
            .with_context(|| format!("reading detections {}", path.display()))?;
        all.extend(dets);
    }
    Ok(all)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArg {
    Isn,
    Snip,
}

#[derive(Serialize)]
struct PartitionLevel {
    resolution_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution: Option<(u32, u32)>,
    valid_count: usize,
    ignored_count: usize,
    valid_ids: Vec<u64>,
    ignored_ids: Vec<u64>,
}

impl PartitionLevel {
    fn new(p: &Partition, omega: Option<f64>, resolution: Option<(u32, u32)>) -> Self {
        let ids = |v: &[isn_core::Instance]| v.iter().map(|i| i.id).collect::<Vec<_>>();
        Self {
            resolution_index: p.resolution_index,
            omega,
            resolution,
            valid_count: p.valid.len(),
            ignored_count: p.ignored.len(),
            valid_ids: ids(&p.valid),
            ignored_ids: ids(&p.ignored),
        }
    }
}

pub fn partition(run: &Run, annotations: &Path, policy: PolicyArg) -> Result<()> {
    let dataset = load_dataset(annotations)?;
    let cfg = &run.config;
    let levels: Vec<PartitionLevel> = match policy {
        PolicyArg::Isn => isn_partition_pyramid(dataset.instances(), &cfg.omegas, &cfg.isn_range)
            .iter()
            .zip(cfg.omegas.omegas())
            .map(|(p, &w)| PartitionLevel::new(p, Some(w), None))
            .collect(),
        PolicyArg::Snip => (0..cfg.snip_table.entries().len())
            .map(|i| {
                let p = snip_partition(dataset.instances(), i, &cfg.snip_table)?;
                let entry = &cfg.snip_table.entries()[i];
                Ok(PartitionLevel::new(&p, entry.omega, Some(entry.resolution)))
            })
            .collect::<Result<_>>()?,
    };
    #[derive(Serialize)]
    struct Body {
        policy: PolicyArg,
        resolutions: Vec<PartitionLevel>,
    }
    let json = run.report(Body {
        policy,
        resolutions: levels,
    })?;
    run.emit_report(&json, None)
}

#[derive(Serialize)]
struct PolicyAnalysis {
    overlap: f64,
    trained: ScaleHistogram,
    ignored: ScaleHistogram,
}

#[derive(Serialize)]
struct HistogramRow {
    policy: &'static str,
    bin_lower: f64,
    bin_upper: f64,
    trained: f64,
    ignored: f64,
}

fn histogram_rows(policy: &'static str, a: &PolicyAnalysis) -> Vec<HistogramRow> {
    let edges = a.trained.binning().edges();
    (0..=edges.len())
        .map(|k| HistogramRow {
            policy,
            bin_lower: if k == 0 { 0.0 } else { edges[k - 1] },
            bin_upper: edges.get(k).copied().unwrap_or(f64::INFINITY),
            trained: a.trained.mass()[k],
            ignored: a.ignored.mass()[k],
        })
        .collect()
}

pub struct PopulationArgs {
    pub size: usize,
    pub median: f64,
    pub sigma: f64,
}

pub fn analyze_snip(
    run: &Run,
    annotations: Option<&Path>,
    population: PopulationArgs,
) -> Result<()> {
    let cfg = &run.config;
    let (dataset, source) = match annotations {
        Some(path) => (
            load_dataset(path)?,
            serde_json::json!({ "annotations": path }),
        ),
        None => (
            sim::lognormal_population(
                population.size,
                population.median,
                population.sigma,
                cfg.seed,
            )?,
            serde_json::json!({
                "lognormal_population": {
                    "size": population.size,
                    "median": population.median,
                    "sigma": population.sigma,
                }
            }),
        ),
    };
    let binning = cfg.histogram.binning()?;
    let analyse = |policy: SamplingPolicy| {
        let d = resized_scale_distributions(&dataset, &policy, &binning);
        PolicyAnalysis {
            overlap: d.overlap(),
            trained: d.trained,
            ignored: d.ignored,
        }
    };
    let isn = analyse(SamplingPolicy::Isn {
        pyramid: cfg.omegas.clone(),
        range: cfg.isn_range,
    });
    let snip = analyse(SamplingPolicy::Snip {
        table: cfg.snip_table.clone(),
    });
    let mut rows = histogram_rows("isn", &isn);
    rows.extend(histogram_rows("snip", &snip));
    let csv = output::to_csv(
        &["policy", "bin_lower", "bin_upper", "trained", "ignored"],
        rows,
    )?;

    #[derive(Serialize)]
    struct Body {
        source: serde_json::Value,
        isn: PolicyAnalysis,
        snip: PolicyAnalysis,
    }
    let json = run.report(Body { source, isn, snip })?;
    run.emit_report(&json, Some(csv))
}

pub fn fuse(run: &Run, detections: &[PathBuf], naive: bool) -> Result<()> {
    let cfg = &run.config;
    let mut tagged = read_results(detections)?;
    // Records tagged only by resolution index take their factor from the pyramid.
    for (index, t) in tagged.iter_mut().enumerate() {
        if t.omega.is_none() {
            let i = t.detection.resolution_index.with_context(|| {
                format!("detection #{index}: needs an omega or resolution_index tag")
            })?;
            let w = cfg.omegas.omegas().get(i).copied().with_context(|| {
                format!("detection #{index}: resolution_index {i} outside the configured pyramid")
            })?;
            t.omega = Some(w);
        }
    }
    let per_resolution = coco::group_by_omega(tagged)?;
    let strategy = if naive {
        Strategy::NaiveMultiScale
    } else {
        Strategy::Isn
    };
    let fused = sim::apply_strategy(
        &per_resolution,
        &cfg.isn_range,
        strategy,
        &cfg.soft_nms,
        cfg.top_k,
    )?;
    output::emit(
        run.out.as_deref(),
        &output::to_json(&coco::to_results(&fused, None))?,
    )?;
    run.write_sidecar()
}

#[derive(Serialize)]
struct EvalRow<'a> {
    scope: &'a str,
    category: String,
    metric: &'static str,
    value: f64,
}

fn eval_rows<'a>(scope: &'a str, r: &EvalResult) -> impl Iterator<Item = EvalRow<'a>> {
    r.csv_rows()
        .into_iter()
        .map(move |(category, metric, value)| EvalRow {
            scope,
            category,
            metric,
            value,
        })
}

pub fn evaluate(
    run: &Run,
    annotations: &Path,
    detections: &[PathBuf],
    scale_range: Option<ScaleRange>,
) -> Result<()> {
    let dataset = load_dataset(annotations)?;
    let dets: Vec<Detection> = read_results(detections)?
        .into_iter()
        .map(|t| t.detection)
        .collect();
    let eval_cfg = EvalConfig {
        category_ids: run
            .config
            .eval
            .category_ids
            .clone()
            .or_else(|| Some(dataset.category_ids())),
        ..run.config.eval.clone()
    };
    let (result, restricted) = match scale_range {
        Some(range) => {
            let (all, within) =
                eval::ap_by_scale_report(dataset.instances(), &dets, &eval_cfg, &range)?;
            (all, Some(within))
        }
        None => (eval::evaluate(dataset.instances(), &dets, &eval_cfg)?, None),
    };
    let mut rows: Vec<EvalRow> = eval_rows("unrestricted", &result).collect();
    if let Some(r) = &restricted {
        rows.extend(eval_rows("restricted", r));
    }
    let csv = output::to_csv(&["scope", "category", "metric", "value"], rows)?;

    #[derive(Serialize)]
    struct Restricted {
        range: ScaleRange,
        result: EvalResult,
    }
    #[derive(Serialize)]
    struct Body {
        result: EvalResult,
        #[serde(skip_serializing_if = "Option::is_none")]
        restricted: Option<Restricted>,
    }
    let json = run.report(Body {
        result,
        restricted: scale_range
            .zip(restricted)
            .map(|(range, result)| Restricted { range, result }),
    })?;
    run.emit_report(&json, Some(csv))
}

pub fn search(run: &Run, lookup: Option<&Path>) -> Result<()> {
    let cfg = &run.config;
    let outcome: SearchOutcome = match lookup {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading lookup table {}", path.display()))?;
            let mut oracle: LookupOracle = serde_json::from_str(&text)
                .with_context(|| format!("parsing lookup table {}", path.display()))?;
            greedy_range_search(&cfg.search, &mut oracle)?
        }
        None => {
            let dataset = sim::generate_dataset(&cfg.sim.dataset, cfg.seed)?;
            let per_resolution = sim::simulate_detections(&dataset, &cfg.omegas, &cfg.sim.profile)?;
            let eval_cfg = EvalConfig {
                category_ids: Some(dataset.category_ids()),
                ..cfg.eval.clone()
            };
            let mut oracle = |range: &ScaleRange| -> Result<f64, String> {
                let dets = sim::apply_strategy(
                    &per_resolution,
                    range,
                    Strategy::Isn,
                    &cfg.soft_nms,
                    cfg.top_k,
                )
                .map_err(|e| e.to_string())?;
                eval::evaluate(dataset.instances(), &dets, &eval_cfg)
                    .map(|r| r.ap)
                    .map_err(|e| e.to_string())
            };
            greedy_range_search(&cfg.search, &mut oracle)?
        }
    };
    let summary = format!("best {} ap {}\n", outcome.best, outcome.best_ap);
    let json = run.report(&outcome)?;
    output::emit(run.out.as_deref(), &json)?;
    if run.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

pub fn simulate(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let Some(dir) = run.out.as_deref() else {
        bail!("simulate needs --out DIR");
    };
    let dataset = sim::generate_dataset(&cfg.sim.dataset, cfg.seed)?;
    let per_resolution = sim::simulate_detections(&dataset, &cfg.omegas, &cfg.sim.profile)?;
    let records: Vec<ResultRecord> = per_resolution
        .iter()
        .flat_map(|(_, dets)| coco::to_results(dets, Some(&cfg.omegas)))
        .collect();
    output::write_json(&dir.join("annotations.json"), &coco::to_coco(&dataset))?;
    output::write_json(&dir.join("detections.json"), &records)?;
    output::write_json(&dir.join("config.json"), cfg)
}

pub fn stage_hist(run: &Run, annotations: &Path) -> Result<()> {
    let cfg = &run.config;
    let dataset = load_dataset(annotations)?;
    let counts = stage_histogram(dataset.instances(), &cfg.omegas, &cfg.isn_range, &cfg.fpn);
    let level_names: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(l, c)| (format!("P{l}"), c))
        .collect();
    output::emit(
        run.out.as_deref(),
        &output::to_csv(&["level", "count"], level_names)?,
    )?;
    run.write_sidecar()
}
