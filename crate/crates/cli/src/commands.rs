//! Subcommands of the `flowmap` binary.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use flowmap_core::clustering::labeling_to_csv;
use flowmap_core::flowmodel::TimeBin;
use flowmap_core::ingest::serialize_trajectories;
use flowmap_core::model::ModelBundle;
use flowmap_core::pipeline::{cluster_stage, fit_stage, ingest_text, labeling_for, Ingested, PipelineConfig};
use flowmap_core::proximity::{
    generate_map, map_slice_csv, DistanceParams, MapKind, MapRegion, MapRequest, Parallelism, WhatIfOverrides,
};
use flowmap_core::simulate::{generate_scenario, scenario_model, ScenarioSpec};

use crate::error::{internal, CliError, CliResult};
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "flowmap", version, about = "Airspace flow models and proximity maps")]
pub struct Cli {
    /// Configuration file of the subcommand (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, clean and resample a trajectory file.
    Ingest {
        /// Trajectory file; overrides `input` of the pipeline configuration.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cluster an ingested corpus into flows and outliers.
    Cluster {
        /// Output of `flowmap ingest`.
        #[arg(long)]
        ingested: PathBuf,
    },
    /// Fit the flow model of a clustered corpus.
    Fit {
        #[arg(long)]
        ingested: PathBuf,
        /// Output of `flowmap cluster`.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Run ingest, cluster and fit in one go.
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compute a presence, conflict or outlier map from a model bundle.
    Map(MapArgs),
    /// Generate a synthetic trajectory file, its true flow labels
    /// (`<stem>.truth.csv`) and its generating model (`<stem>.model.json`).
    Simulate,
    /// Serve a model bundle over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Horizontal lattice spacing of served slices, NM.
        #[arg(long, default_value_t = 1.0)]
        step_nm: f64,
    },
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// presence, conflict or outlier.
    #[arg(long)]
    pub kind: Option<MapKind>,
    /// Horizontal region `x0,y0,x1,y1` in NM (default: around the flows).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub region: Option<Vec<f64>>,
    /// Flight-level range `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub step_nm: Option<f64>,
    #[arg(long)]
    pub step_ft: Option<f64>,
    /// Weekday, 0 = Monday (default: the busiest bin of the model).
    #[arg(long)]
    pub weekday: Option<u8>,
    /// 15-minute bin of the day.
    #[arg(long)]
    pub bin: Option<usize>,
    /// JSON file with what-if overrides.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Also write one CSV per flight level next to the output.
    #[arg(long)]
    pub csv: bool,
    /// Evaluate lattice points on one thread.
    #[arg(long)]
    pub sequential: bool,
}

/// Map job file: every key is optional and command-line flags win.
///
/// ```toml
/// kind = "conflict"
/// region = [-200.0, -200.0, 200.0, 200.0]
/// levels = [310.0, 350.0]
/// step_nm = 1.0
/// step_ft = 1000.0
/// weekday = 0
/// bin = 56
/// [distance]
/// mode = "product"
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub kind: Option<MapKind>,
    pub region: Option<[f64; 4]>,
    pub levels: Option<[f64; 2]>,
    pub step_nm: Option<f64>,
    pub step_ft: Option<f64>,
    pub weekday: Option<u8>,
    pub bin: Option<usize>,
    #[serde(default)]
    pub distance: DistanceParams,
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(internal)?;
    }
    std::fs::write(path, contents).map_err(|e| internal(format!("cannot write {}: {e}", path.display())))
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn pipeline_config(cli: &Cli, input: &Option<PathBuf>) -> CliResult<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if input.is_some() {
        c.input.clone_from(input);
    }
    Ok(c)
}

fn input_text(config: &PipelineConfig) -> CliResult<String> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Input("no trajectory file: pass --input or set `input` in the config".into()))?;
    read(input)
}

fn load_ingested(path: &Path) -> CliResult<Ingested> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_bundle(out: &Path, bundle: &ModelBundle, report: &impl std::fmt::Display) -> CliResult<()> {
    write(out, &bundle.to_json().map_err(internal)?)?;
    let report = report.to_string();
    write(&sibling(out, "report.txt"), &report)?;
    print!("{report}");
    println!("model {} written to {}", bundle.model_hash().map_err(internal)?, out.display());
    Ok(())
}

/// Build the map request from the job file, flags and model defaults.
pub fn map_request(args: &MapArgs, job: MapConfig, model: &ModelBundle) -> CliResult<MapRequest> {
    if args.region.as_ref().is_some_and(|r| r.len() != 4) {
        return Err(CliError::Input("--region takes four values x0,y0,x1,y1".into()));
    }
    if args.levels.as_ref().is_some_and(|l| l.len() != 2) {
        return Err(CliError::Input("--levels takes two flight levels lo,hi".into()));
    }
    let kind = args.kind.or(job.kind).unwrap_or(MapKind::Presence);
    let step_nm = args.step_nm.or(job.step_nm).unwrap_or(1.0);
    let step_ft = args.step_ft.or(job.step_ft).unwrap_or(1000.0);
    let levels = match (&args.levels, job.levels) {
        (Some(l), _) => [l[0], l[1]],
        (None, Some(l)) => l,
        (None, None) => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for f in &model.flows {
                let (l, h) = f.bounds();
                lo = lo.min(l[2]);
                hi = hi.max(h[2]);
            }
            if lo.is_finite() {
                [(lo / step_ft).round() * step_ft / 100.0, (hi / step_ft).round() * step_ft / 100.0]
            } else {
                [350.0, 350.0]
            }
        }
    };
    let region = match (&args.region, job.region) {
        (Some(r), _) => Some([r[0], r[1], r[2], r[3]]),
        (None, r) => r,
    };
    let region = match region {
        Some([x0, y0, x1, y1]) => MapRegion {
            lo: flowmap_core::geometry::PointEnu::new(x0, y0, levels[0] * 100.0),
            hi: flowmap_core::geometry::PointEnu::new(x1, y1, levels[1] * 100.0),
        },
        None => MapRegion::around_model(model, 10.0, step_nm, levels[0] * 100.0, levels[1] * 100.0),
    };
    let default_bin = model.schedule.busiest_bin().unwrap_or(TimeBin { weekday: 0, bin: 0 });
    let time_bin = TimeBin {
        weekday: args.weekday.or(job.weekday).unwrap_or(default_bin.weekday),
        bin: args.bin.or(job.bin).unwrap_or(default_bin.bin),
    };
    Ok(MapRequest { kind, region, steps: [step_nm, step_nm, step_ft], time_bin, distance: job.distance })
}

fn cmd_map(cli: &Cli, args: &MapArgs) -> CliResult<()> {
    let model = ModelBundle::load(&args.bundle)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.bundle.display())))?;
    let job = match &cli.config {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => MapConfig::default(),
    };
    let request = map_request(args, job, &model)?;
    let overrides: WhatIfOverrides = match &args.overrides {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => WhatIfOverrides::default(),
    };
    let parallelism = if args.sequential { Parallelism::Sequential } else { Parallelism::Parallel };
    let grid = generate_map(&model, &request, &overrides, parallelism)?;
    let out = out_path(cli, "map.json");
    write(&out, &grid.to_json().map_err(internal)?)?;
    if args.csv {
        for k in 0..grid.dims[2] {
            let fl = grid.slice(k).map_err(internal)?.flight_level;
            write(&sibling(&out, &format!("FL{fl:03}.csv")), &map_slice_csv(&grid, k).map_err(internal)?)?;
        }
    }
    println!(
        "{:?} map {}x{}x{} max {:.6} ({} clip events) written to {}",
        grid.kind,
        grid.dims[0],
        grid.dims[1],
        grid.dims[2],
        grid.max(),
        grid.clip_events,
        out.display()
    );
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Ingest { input } => {
            let config = pipeline_config(&cli, input)?;
            let ingested = ingest_text(&input_text(&config)?, &config)?;
            let out = out_path(&cli, "ingested.json");
            write(&out, &serde_json::to_string(&ingested).map_err(internal)?)?;
            println!("{} clean trajectories written to {}", ingested.resampled.len(), out.display());
        }
        Command::Cluster { ingested } => {
            let config = pipeline_config(&cli, &None)?;
            let ing = load_ingested(ingested)?;
            let corpus = cluster_stage(&ing, &config)?;
            let out = out_path(&cli, "labels.csv");
            write(&out, &labeling_to_csv(&ing.resampled, &corpus))?;
            println!(
                "{} clusters, {} outliers written to {}",
                corpus.labeling.n_clusters(),
                corpus.labeling.outlier_count(),
                out.display()
            );
        }
        Command::Fit { ingested, labels } => {
            let config = pipeline_config(&cli, &None)?;
            let ing = load_ingested(ingested)?;
            let corpus = labeling_for(&ing, &read(labels)?)?;
            let (bundle, report) = fit_stage(&ing, &corpus, &config)?;
            write_bundle(&out_path(&cli, "bundle.json"), &bundle, &report)?;
        }
        Command::Pipeline { input } => {
            let config = pipeline_config(&cli, input)?;
            let ingested = ingest_text(&input_text(&config)?, &config)?;
            let corpus = cluster_stage(&ingested, &config)?;
            let (bundle, report) = fit_stage(&ingested, &corpus, &config)?;
            write_bundle(&out_path(&cli, "bundle.json"), &bundle, &report)?;
        }
        Command::Map(args) => cmd_map(&cli, args)?,
        Command::Simulate => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::Input("simulate needs --config <scenario.toml>".into()))?;
            let spec = ScenarioSpec::from_toml(&read(path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let scenario = generate_scenario(&spec, cli.seed.unwrap_or(spec.seed))?;
            let out = out_path(&cli, "trajectories.csv");
            write(&out, &serialize_trajectories(&scenario.trajectories))?;
            write(&sibling(&out, "truth.csv"), &scenario.truth_csv())?;
            // the generating model, for maps without a fitting step
            write(&sibling(&out, "model.json"), &scenario_model(&spec)?.to_json().map_err(internal)?)?;
            println!("{} flights written to {}", scenario.trajectories.len(), out.display());
        }
        Command::Serve { bundle, port, host, step_nm } => {
            let model =
                ModelBundle::load(bundle).map_err(|e| CliError::Input(format!("{}: {e}", bundle.display())))?;
            let config = ServiceConfig { step_nm: *step_nm, ..ServiceConfig::default() };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::Input(format!("bad listen address {host}:{port}: {e}")))?;
            let app = service::router(model, config)?;
            let rt = tokio::runtime::Runtime::new().map_err(internal)?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.map_err(internal)?;
                println!("serving on http://{addr}");
                axum::serve(listener, app).await.map_err(internal)
            })?;
        }
    }
    Ok(())
}
