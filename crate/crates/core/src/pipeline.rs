//! End-to-end model building: ingest, clean, resample, cluster and fit.
//!
//! The run is a pure function of the trajectory file and the configuration,
//! so the same inputs always give a byte-identical bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{
    cluster_corpus, labeling_from_csv, CategoryKey, ClusterLabeling, ClusterParams, CorpusLabeling,
};
use crate::error::{Error, Result};
use crate::flowmodel::{
    build_flow, build_outlier_density, chi2_exponential, day_index, estimate_arrival_rates,
    lateral_vertical_correlation, proportion_rates, summarize_correlations, CellGrid, CorrelationSummary, Flow,
    GofTestResult, OutlierMode, TLocationScale, TimedTrack, DEFAULT_ALPHA, DEFAULT_BIN_WIDTH, DEFAULT_TAU,
    SECONDS_PER_DAY,
};
use crate::geometry::PointEnu;
use crate::ingest::{
    clean_trajectories, parse_trajectories, resample, CleaningThresholds, Projection, RawTrajectory,
    ResampledTrajectory, DEFAULT_POINTS,
};
use crate::model::{sha256_hex, ModelBundle, Provenance, BUNDLE_VERSION};

pub const PIPELINE_VERSION: &str = "flowmap-pipeline/1";
/// Fewest inter-arrival gaps for which a flow's arrival test is reported.
const MIN_GAPS: usize = 20;

fn default_version() -> String {
    PIPELINE_VERSION.to_owned()
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

fn default_tau() -> i64 {
    DEFAULT_TAU
}

fn default_mode() -> OutlierMode {
    OutlierMode::Occupancy
}

fn default_cell() -> [f64; 3] {
    [1.0, 1.0, 1000.0]
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Pipeline configuration, read from TOML. Every key is optional.
///
/// ```toml
/// version = "flowmap-pipeline/1"
/// input = "trajectories.csv"   # relative to the configuration file
/// resample_points = 8
/// tau_s = 900
/// outlier_mode = "occupancy"   # or "paper" (counts rescaled to max 1)
/// outlier_cell = [1.0, 1.0, 1000.0]
/// alpha = 0.05
/// origin = [41.5, -81.7]       # default: centre of the data
///
/// [cleaning]
/// max_ground_speed = 700.0
///
/// [clustering]
/// eps = 0.5
/// min_pts = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default = "default_points")]
    pub resample_points: usize,
    #[serde(default)]
    pub cleaning: CleaningThresholds,
    #[serde(default)]
    pub clustering: ClusterParams,
    #[serde(default = "default_tau")]
    pub tau_s: i64,
    #[serde(default = "default_mode")]
    pub outlier_mode: OutlierMode,
    #[serde(default = "default_cell")]
    pub outlier_cell: [f64; 3],
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Projection origin `[lat, lon]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 2]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: default_version(),
            input: None,
            resample_points: DEFAULT_POINTS,
            cleaning: CleaningThresholds::default(),
            clustering: ClusterParams::default(),
            tau_s: DEFAULT_TAU,
            outlier_mode: OutlierMode::Occupancy,
            outlier_cell: default_cell(),
            alpha: DEFAULT_ALPHA,
            origin: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Load a configuration; a relative `input` is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(input), Some(dir)) = (&c.input, path.parent()) {
            if input.is_relative() {
                c.input = Some(dir.join(input));
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PIPELINE_VERSION {
            return Err(Error::Format(format!(
                "unsupported pipeline config version `{}` (expected `{PIPELINE_VERSION}`)",
                self.version
            )));
        }
        if self.resample_points < 2 {
            return Err(Error::invalid("resample_points must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.outlier_cell.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid("outlier_cell sizes must be positive"));
        }
        self.clustering.validate()
    }

    /// The parameter record stored in a bundle: everything but the input path.
    pub fn parameter_record(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(Self { input: None, ..self.clone() })?)
    }
}

/// Cleaned and resampled trajectories with the counts of what was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    /// sha256 of the trajectory file.
    pub corpus_hash: String,
    pub projection: Projection,
    /// Clean raw trajectories; `resampled[k]` comes from `clean[k]`.
    pub clean: Vec<RawTrajectory>,
    pub resampled: Vec<ResampledTrajectory>,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub data_lines: usize,
    pub malformed_lines: usize,
    pub short_flights: usize,
    pub parsed_flights: usize,
    pub rejected: BTreeMap<String, usize>,
    /// Clean flights with zero horizontal path length.
    pub degenerate: usize,
    pub clean_flights: usize,
}

fn stage(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage { stage, message: other.to_string() },
    }
}

/// Parse, clean, project and resample a trajectory file's contents.
pub fn ingest_text(text: &str, config: &PipelineConfig) -> Result<Ingested> {
    let parsed = parse_trajectories(text).map_err(stage("ingest"))?;
    let mut report = IngestReport {
        data_lines: parsed.data_lines,
        malformed_lines: parsed.malformed_lines,
        short_flights: parsed.short_flights,
        parsed_flights: parsed.trajectories.len(),
        ..IngestReport::default()
    };
    let outcome = clean_trajectories(parsed.trajectories, &config.cleaning);
    for (_, reason) in &outcome.rejected {
        *report.rejected.entry(reason.to_string()).or_default() += 1;
    }
    let projection = match config.origin {
        Some([lat, lon]) => Projection { origin_lat: lat, origin_lon: lon },
        None => Projection::centered_on(&outcome.clean).unwrap_or(Projection { origin_lat: 0.0, origin_lon: 0.0 }),
    };
    let mut clean = Vec::with_capacity(outcome.clean.len());
    let mut resampled = Vec::with_capacity(outcome.clean.len());
    for t in outcome.clean {
        match resample(&t, config.resample_points, &projection) {
            Ok(r) => {
                resampled.push(r);
                clean.push(t);
            }
            Err(Error::DegenerateTrajectory(_)) => report.degenerate += 1,
            Err(e) => return Err(stage("ingest")(e)),
        }
    }
    report.clean_flights = clean.len();
    if clean.is_empty() {
        return Err(Error::Stage {
            stage: "ingest",
            message: format!(
                "no clean trajectories ({} parsed, {} rejected, {} degenerate, {} malformed lines)",
                report.parsed_flights,
                report.rejected.values().sum::<usize>(),
                report.degenerate,
                report.malformed_lines
            ),
        });
    }
    Ok(Ingested { corpus_hash: sha256_hex(text.as_bytes()), projection, clean, resampled, report })
}

pub fn cluster_stage(ingested: &Ingested, config: &PipelineConfig) -> Result<CorpusLabeling> {
    cluster_corpus(&ingested.resampled, &config.clustering).map_err(stage("cluster"))
}

/// Rebuild a corpus labeling from its CSV form, checking that it covers the
/// ingested flights in order.
pub fn labeling_for(ingested: &Ingested, csv: &str) -> Result<CorpusLabeling> {
    let rows = labeling_from_csv(csv)?;
    if rows.len() != ingested.resampled.len() {
        return Err(Error::invalid(format!(
            "labeling has {} rows for {} ingested flights",
            rows.len(),
            ingested.resampled.len()
        )));
    }
    let mut cluster_categories: Vec<Option<CategoryKey>> = Vec::new();
    let mut labels = Vec::with_capacity(rows.len());
    let mut categories = Vec::with_capacity(rows.len());
    for ((id, cat, label), t) in rows.into_iter().zip(&ingested.resampled) {
        if id != t.flight_id {
            return Err(Error::invalid(format!("labeling row `{id}` does not match ingested flight `{}`", t.flight_id)));
        }
        if let Some(c) = label {
            if c >= cluster_categories.len() {
                cluster_categories.resize(c + 1, None);
            }
            match cluster_categories[c] {
                Some(k) if k != cat => {
                    return Err(Error::invalid(format!("cluster {c} spans categories {k} and {cat}")));
                }
                _ => cluster_categories[c] = Some(cat),
            }
        }
        labels.push(label);
        categories.push(cat);
    }
    let cluster_categories = cluster_categories
        .into_iter()
        .enumerate()
        .map(|(c, k)| k.ok_or_else(|| Error::invalid(format!("cluster ids must be contiguous; {c} is unused"))))
        .collect::<Result<Vec<_>>>()?;
    let mut cluster_sizes = vec![0; cluster_categories.len()];
    for c in labels.iter().flatten() {
        cluster_sizes[*c] += 1;
    }
    Ok(CorpusLabeling { categories, labeling: ClusterLabeling { labels, cluster_sizes }, cluster_categories })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub id: usize,
    pub category: CategoryKey,
    pub members: usize,
    pub speed: TLocationScale,
    /// Mean gap between consecutive entries, s.
    pub mean_inter_arrival_s: Option<f64>,
    /// Exponential fit of the gaps at the estimated rate.
    pub inter_arrival_test: Option<GofTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub ingest: IngestReport,
    pub categories: usize,
    pub clusters: usize,
    pub outliers: usize,
    pub outlier_fraction: f64,
    pub flows: Vec<FlowReport>,
    /// Flows whose arrival test rejected the exponential law.
    pub rejected_arrival_tests: usize,
    pub correlation: CorrelationSummary,
    pub outlier_mode: OutlierMode,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = &self.ingest;
        writeln!(f, "ingest")?;
        writeln!(f, "  data lines        {} ({} malformed)", i.data_lines, i.malformed_lines)?;
        writeln!(f, "  flights parsed    {} ({} with fewer than two fixes dropped)", i.parsed_flights, i.short_flights)?;
        let rejected: Vec<String> = i.rejected.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        writeln!(f, "  rejected          {} [{}]", i.rejected.values().sum::<usize>(), rejected.join(", "))?;
        writeln!(f, "  degenerate        {}", i.degenerate)?;
        writeln!(f, "  clean             {}", i.clean_flights)?;
        writeln!(f, "clustering")?;
        writeln!(f, "  categories        {}", self.categories)?;
        writeln!(f, "  clusters          {}", self.clusters)?;
        writeln!(f, "  outliers          {} ({:.1}%)", self.outliers, 100.0 * self.outlier_fraction)?;
        writeln!(f, "flows")?;
        for fl in &self.flows {
            let test = match &fl.inter_arrival_test {
                Some(t) if t.inconclusive => "inconclusive".to_owned(),
                Some(t) => format!(
                    "chi2 {:.2} dof {} p {:.3} {}",
                    t.statistic,
                    t.dof,
                    t.p_value,
                    if t.reject { "reject" } else { "accept" }
                ),
                None => "too few arrivals".to_owned(),
            };
            writeln!(
                f,
                "  flow {:>3} {:<16} members {:>5}  speed t({:.1}, {:.1}, {:.1})  arrivals: {}",
                fl.id, fl.category.to_string(), fl.members, fl.speed.mu, fl.speed.sigma, fl.speed.nu, test
            )?;
        }
        writeln!(f, "  exponential arrivals rejected for {} of {} flows", self.rejected_arrival_tests, self.flows.len())?;
        writeln!(f, "lateral/vertical correlation")?;
        writeln!(
            f,
            "  90th percentile |r| {:.3} over {} windows ({} degenerate)",
            self.correlation.p90_abs, self.correlation.windows, self.correlation.degenerate
        )?;
        writeln!(f, "outlier density mode  {:?}", self.outlier_mode)
    }
}

fn timed_track(t: &RawTrajectory, proj: &Projection) -> Result<TimedTrack> {
    t.samples.iter().map(|s| Ok((s.timestamp as f64, proj.point(s)?))).collect()
}

fn inter_arrival_test(entries: &mut [i64], alpha: f64) -> (Option<f64>, Option<GofTestResult>) {
    entries.sort_unstable();
    let gaps: Vec<f64> = entries.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    if gaps.is_empty() {
        return (None, None);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if gaps.len() < MIN_GAPS || !(mean > 0.0) {
        return (Some(mean), None);
    }
    (Some(mean), chi2_exponential(&gaps, 1.0 / mean, DEFAULT_BIN_WIDTH, alpha).ok())
}

/// Build flows, rates and the outlier density from a labeling.
pub fn fit_stage(
    ingested: &Ingested,
    corpus: &CorpusLabeling,
    config: &PipelineConfig,
) -> Result<(ModelBundle, PipelineReport)> {
    let labels = &corpus.labeling.labels;
    if labels.len() != ingested.resampled.len() {
        return Err(Error::Stage {
            stage: "fit",
            message: format!("{} labels for {} trajectories", labels.len(), ingested.resampled.len()),
        });
    }
    let n_flows = corpus.labeling.n_clusters();
    let mut members: Vec<Vec<ResampledTrajectory>> = vec![Vec::new(); n_flows];
    for (t, l) in ingested.resampled.iter().zip(labels) {
        if let Some(c) = l {
            members[*c].push(t.clone());
        }
    }
    let mut flows: Vec<Flow> = members
        .iter()
        .enumerate()
        .map(|(id, m)| build_flow(id, m))
        .collect::<Result<_>>()
        .map_err(stage("fit"))?;

    let entries: Vec<i64> = ingested.resampled.iter().map(|t| t.entry_time).collect();
    let schedule = estimate_arrival_rates(&entries, labels, n_flows, config.tau_s).map_err(stage("fit"))?;
    let shares = proportion_rates(&schedule);
    for (flow, share) in flows.iter_mut().zip(shares.flows) {
        flow.rate_share = share;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut outlier_tracks = Vec::new();
    for (t, l) in ingested.clean.iter().zip(labels) {
        let track = timed_track(t, &ingested.projection).map_err(stage("fit"))?;
        for (_, p) in &track {
            for (a, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        if l.is_none() {
            outlier_tracks.push(track);
        }
    }
    for a in 0..3 {
        if !(hi[a] > lo[a]) {
            hi[a] = lo[a] + config.outlier_cell[a];
        }
    }
    let grid = CellGrid::covering(
        PointEnu::new(lo[0], lo[1], lo[2]),
        PointEnu::new(hi[0], hi[1], hi[2]),
        config.outlier_cell,
    )
    .map_err(stage("fit"))?;
    let days = match (entries.iter().map(|&t| day_index(t)).min(), entries.iter().map(|&t| day_index(t)).max()) {
        (Some(a), Some(b)) => (b - a + 1) as f64,
        _ => 1.0,
    };
    let outliers = build_outlier_density(&outlier_tracks, grid, config.outlier_mode, days * SECONDS_PER_DAY as f64)
        .map_err(stage("fit"))?;

    let mut correlations = Vec::new();
    let mut flow_reports = Vec::with_capacity(n_flows);
    for (flow, m) in flows.iter().zip(&members) {
        if let Ok(c) = lateral_vertical_correlation(flow, m) {
            correlations.extend(c);
        }
        let mut e: Vec<i64> = m.iter().map(|t| t.entry_time).collect();
        let (mean, test) = inter_arrival_test(&mut e, config.alpha);
        flow_reports.push(FlowReport {
            id: flow.id,
            category: corpus.cluster_categories[flow.id],
            members: m.len(),
            speed: flow.speed,
            mean_inter_arrival_s: mean,
            inter_arrival_test: test,
        });
    }

    let n = labels.len();
    let outlier_count = labels.iter().filter(|l| l.is_none()).count();
    let report = PipelineReport {
        ingest: ingested.report.clone(),
        categories: corpus.categories.iter().collect::<std::collections::BTreeSet<_>>().len(),
        clusters: n_flows,
        outliers: outlier_count,
        outlier_fraction: if n > 0 { outlier_count as f64 / n as f64 } else { 0.0 },
        rejected_arrival_tests: flow_reports
            .iter()
            .filter(|f| f.inter_arrival_test.is_some_and(|t| t.reject))
            .count(),
        flows: flow_reports,
        correlation: summarize_correlations(&correlations),
        outlier_mode: config.outlier_mode,
    };
    let bundle = ModelBundle {
        version: BUNDLE_VERSION.to_owned(),
        projection: ingested.projection,
        flows,
        schedule,
        outlier_share: shares.outliers,
        outliers,
        provenance: Provenance {
            corpus_hash: ingested.corpus_hash.clone(),
            parameters: config.parameter_record()?,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        },
    };
    bundle.validate().map_err(stage("fit"))?;
    Ok((bundle, report))
}

/// Run every stage on a trajectory file's contents.
pub fn run_pipeline_text(text: &str, config: &PipelineConfig) -> Result<(ModelBundle, PipelineReport)> {
    config.validate()?;
    let ingested = ingest_text(text, config)?;
    let corpus = cluster_stage(&ingested, config)?;
    fit_stage(&ingested, &corpus, config)
}

/// Run every stage on `config.input`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(ModelBundle, PipelineReport)> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::invalid("no input trajectory file configured"))?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::invalid(format!("cannot read trajectory file {}: {e}", input.display())))?;
    run_pipeline_text(&text, config)
}
