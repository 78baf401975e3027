use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;
use stationcast::baselines::{window_rows, BaselineKind, ClimatologyForecast, Forecaster, LinearDirect, LinearMode, Persistence, DEFAULT_RIDGE};
use stationcast::config::{GapFillerKind, RunConfig};
use stationcast::dataset::{chronological_split, DatasetError, compute_stats, make_windows, ClimateStats, Dataset, SplitRanges, Standardizer};
use stationcast::dynamics::station_climatologies;
use stationcast::ingest::scan_archive;
use stationcast::metrics::{
    collect_forecasts, evaluate, paper_table, read_forecast_file, write_forecast_file, ComplexityReport, ForecastSet, MetricReport,
};
use stationcast::model::{load_model, save_model, train, PhysicsFormer, LOSS_CURVE_FILE};
use stationcast::parallel::Execution;
use stationcast::qc::{align_to_hours, run_stations, ClimatologyFiller, GapFiller, QcReport, TableFiller};
use stationcast::synth::{synthesize, write_raw_archive, SynthConfig};
use stationcast::time::{format_utc, parse_utc, HourGrid};

use crate::plot;
use crate::{Cli, CliError, Command, EvaluateArgs, PlotArgs, PredictArgs, SynthArgs};

const EXEC: Execution = Execution::Parallel;

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(stationcast::Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    let ctx = Ctx { cfg, out: cli.out_dir };
    match cli.command {
        Command::Ingest { archive } => ingest(&ctx, archive),
        Command::Qc { input } => qc(&ctx, input),
        Command::Stats(a) => stats(&ctx, a.data),
        Command::Train(a) => train_cmd(&ctx, a.data),
        Command::Predict(a) => predict(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Plot(a) => plot_cmd(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Config => {
            print!("{}", ctx.cfg.to_json());
            Ok(())
        }
    }
}

impl Ctx {
    fn data_dir(&self, arg: Option<PathBuf>) -> PathBuf {
        arg.unwrap_or_else(|| self.out.join("clean"))
    }

    fn load_data(&self, arg: Option<PathBuf>) -> Result<(Dataset, SplitRanges)> {
        let mut ds = Dataset::open(&self.data_dir(arg), EXEC)?;
        ds.catalog.stats_preset = self.cfg.dataset.stats;
        let splits = chronological_split(&ds.grid(), self.cfg.dataset.split)?;
        Ok((ds, splits))
    }
}

fn round_to_hour(ts: i64) -> i64 {
    (ts + 1800).div_euclid(3600) * 3600
}

fn ingest(ctx: &Ctx, archive: Option<PathBuf>) -> Result<()> {
    let cfg = &ctx.cfg;
    let path = archive
        .or_else(|| cfg.ingest.archive.clone())
        .ok_or_else(|| CliError::Usage("no archive given and ingest.archive is unset".into()))?;
    let open = || File::open(&path).map(BufReader::new).map_err(io_err(&path));
    let (schema, quality) = (&cfg.ingest.schema, &cfg.ingest.quality);

    let start = match &cfg.ingest.start {
        Some(s) => Some(parse_utc(s).ok_or_else(|| CliError::Usage(format!("ingest.start `{s}` is not a UTC timestamp")))?),
        None => None,
    };
    let grid = match (start, cfg.ingest.hours) {
        (Some(start), Some(hours)) => HourGrid::new(start, hours),
        _ => {
            // first pass: span of all timestamps, rounded to the nearest hour
            let mut span: Option<(i64, i64)> = None;
            for block in scan_archive(open()?, schema, quality) {
                for obs in block?.observations {
                    let ts = obs.timestamp.timestamp();
                    span = Some(span.map_or((ts, ts), |(lo, hi)| (lo.min(ts), hi.max(ts))));
                }
            }
            let (lo, hi) = span.ok_or_else(|| {
                CliError::from(DatasetError::Invalid(format!("{} holds no observations", path.display())))
            })?;
            let first = start.map_or(round_to_hour(lo), |s| s.timestamp());
            let hours = cfg.ingest.hours.unwrap_or(((round_to_hour(hi) - first) / 3600 + 1).max(1) as usize);
            let first = chrono::DateTime::from_timestamp(first, 0).expect("in range");
            HourGrid::new(first, hours)
        }
    };

    let mut scanner = scan_archive(open()?, schema, quality);
    let mut series = Vec::new();
    for block in scanner.by_ref() {
        let mut block = block?;
        block.observations.sort_by_key(|o| o.timestamp);
        series.push(align_to_hours(block.meta, &block.observations, grid, cfg.qc.window_minutes)?);
    }
    let report = scanner.into_report();
    let dir = ctx.out.join("aligned");
    let ds = Dataset::from_series(series, &dir)?;
    ds.save()?;
    write_json(&ctx.out.join("ingest_report.json"), &report)?;
    println!(
        "ingest: {} stations, {} lines read, {} rejected; grid {} + {} h -> {}",
        ds.num_stations(),
        report.lines_read,
        report.lines_rejected,
        format_utc(grid.start),
        grid.len,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct QcSummary<'a> {
    accepted: usize,
    rejected: usize,
    stations: &'a [QcReport],
}

fn qc(ctx: &Ctx, input: Option<PathBuf>) -> Result<()> {
    let cfg = &ctx.cfg;
    let input = input.unwrap_or_else(|| ctx.out.join("aligned"));
    let ds = Dataset::open(&input, EXEC)?;
    let filler: Box<dyn GapFiller> = match cfg.qc.gap_filler {
        GapFillerKind::Climatology => Box::new(ClimatologyFiller),
        GapFillerKind::Table => {
            let dir = cfg.qc.gap_fill_dir.as_ref().expect("validated with the config");
            let table = Dataset::open(dir, EXEC)?;
            Box::new(TableFiller::new(table.series).with_climatology_fallback())
        }
    };
    let mut accepted = Vec::new();
    let mut reports = Vec::new();
    for result in run_stations(ds.series, &cfg.qc.qc_config(), filler.as_ref(), EXEC) {
        let (series, report) = result?;
        if report.accepted {
            accepted.push(series);
        }
        reports.push(report);
    }
    let summary = QcSummary {
        accepted: accepted.len(),
        rejected: reports.len() - accepted.len(),
        stations: &reports,
    };
    create_dir(&ctx.out)?;
    write_json(&ctx.out.join("qc_report.json"), &summary)?;
    for r in reports.iter().filter(|r| !r.accepted) {
        println!(
            "qc: rejected {} (observed {:.1}%)",
            r.station_id,
            100.0 * r.hourly_coverage_before
        );
    }
    if accepted.is_empty() {
        println!("qc: no station passed; nothing written to {}", ctx.out.join("clean").display());
        return Ok(());
    }
    let clean = Dataset::from_series(accepted, ctx.out.join("clean"))?;
    clean.save()?;
    println!(
        "qc: {} accepted, {} rejected -> {}",
        summary.accepted,
        summary.rejected,
        clean.catalog.root.display()
    );
    Ok(())
}

fn stats(ctx: &Ctx, data: Option<PathBuf>) -> Result<()> {
    let (ds, splits) = ctx.load_data(data)?;
    let stats = compute_stats(&ds, splits.train.clone(), EXEC)?;
    create_dir(&ctx.out)?;
    let path = ctx.out.join("stats.json");
    stats.save(&path)?;
    println!(
        "stats: {} stations, train hours {}..{} -> {}",
        ds.num_stations(),
        splits.train.start,
        splits.train.end,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    parameters: usize,
    iterations_run: u64,
    best_iteration: u64,
    stopped_early: bool,
    final_loss: Option<f64>,
    best_validation_loss: Option<f64>,
    validation: Vec<(u64, f64)>,
}

fn train_cmd(ctx: &Ctx, data: Option<PathBuf>) -> Result<()> {
    let (ds, splits) = ctx.load_data(data)?;
    let stats = compute_stats(&ds, splits.train.clone(), EXEC)?;
    let outcome = train(
        &ds,
        stats.standardizer(),
        &splits,
        ctx.cfg.model_config(),
        &ctx.cfg.train_config(),
        EXEC,
    )?;
    let dir = ctx.cfg.train.checkpoint_dir.clone().unwrap_or_else(|| ctx.out.join("model"));
    save_model(&outcome.model, &dir)?;
    outcome.write_loss_curve(&dir.join(LOSS_CURVE_FILE))?;
    let summary = TrainSummary {
        parameters: outcome.model.num_parameters(),
        iterations_run: outcome.iterations_run,
        best_iteration: outcome.best_iteration,
        stopped_early: outcome.stopped_early,
        final_loss: outcome.curve.last().map(|r| r.total),
        best_validation_loss: outcome.validation.iter().map(|v| v.1).reduce(f64::min),
        validation: outcome.validation.clone(),
    };
    write_json(&dir.join("train_summary.json"), &summary)?;
    println!(
        "train: {} parameters, {} iterations (best {}), final loss {:.6} -> {}",
        summary.parameters,
        summary.iterations_run,
        summary.best_iteration,
        summary.final_loss.unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(())
}

enum Source {
    Model(PathBuf),
    Baseline(BaselineKind),
}

/// Run a forecaster over every complete window of `split`.
fn forecast_split(ctx: &Ctx, ds: &Dataset, splits: &SplitRanges, source: &Source, split: &str) -> Result<ForecastSet> {
    let range = splits
        .get(split)
        .ok_or_else(|| CliError::Usage(format!("unknown split `{split}` (expected train, val or test)")))?;
    let spec = ctx.cfg.dataset.window_spec();
    let (forecaster, standardizer): (Box<dyn Forecaster>, Standardizer) = match source {
        Source::Model(dir) => {
            let model: PhysicsFormer = load_model(dir)?;
            let standardizer = model.standardizer;
            (Box::new(model), standardizer)
        }
        Source::Baseline(kind) => {
            let standardizer = compute_stats(ds, splits.train.clone(), EXEC)?.standardizer();
            let f: Box<dyn Forecaster> = match kind {
                BaselineKind::Persistence => Box::new(Persistence),
                BaselineKind::Climatology => Box::new(ClimatologyForecast {
                    climatology: station_climatologies(&ds.series, splits.train.clone())?,
                    standardizer,
                }),
                BaselineKind::LinearDirect => {
                    let iter = make_windows(ds, &standardizer, splits.train.clone(), spec, None)?;
                    let rows = window_rows(&iter, iter.starts());
                    Box::new(LinearDirect::fit(&rows, spec.lookback, spec.horizon, LinearMode::PerVariable, DEFAULT_RIDGE)?)
                }
            };
            (f, standardizer)
        }
    };
    let iter = make_windows(ds, &standardizer, range, spec, None)?;
    let ids = ds.series.iter().map(|s| s.meta.station_id.clone()).collect();
    Ok(collect_forecasts(forecaster.as_ref(), &iter, &standardizer, ids, ctx.cfg.eval.batch_size, EXEC)?)
}

fn predict(ctx: &Ctx, args: PredictArgs) -> Result<()> {
    let source = match (&args.baseline, args.model) {
        (Some(name), _) => Source::Baseline(name.parse().map_err(CliError::Usage)?),
        (None, dir) => Source::Model(dir.unwrap_or_else(|| ctx.out.join("model"))),
    };
    let (ds, splits) = ctx.load_data(args.data.data)?;
    let set = forecast_split(ctx, &ds, &splits, &source, &args.split)?;
    let name = set.model.clone().unwrap_or_else(|| "forecast".into());
    let path = args.output.unwrap_or_else(|| ctx.out.join("forecasts").join(format!("{name}.csv")));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_forecast_file(&set, &path)?;
    println!(
        "predict: {name}, {} windows x {} stations x {} h -> {}",
        set.samples,
        set.num_stations(),
        set.horizon,
        path.display()
    );
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, args: EvaluateArgs) -> Result<()> {
    let mut sets = Vec::new();
    for path in &args.forecasts {
        let mut set = read_forecast_file(path)?;
        if set.model.is_none() {
            set.model = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        sets.push(set);
    }
    let data = args.data.data;
    let loaded = if sets.is_empty() || args.stats.is_none() {
        Some(ctx.load_data(data)?)
    } else {
        None
    };
    let stats: ClimateStats = match (&args.stats, &loaded) {
        (Some(path), _) => ClimateStats::load(path)?,
        (None, Some((ds, splits))) => compute_stats(ds, splits.train.clone(), EXEC)?,
        (None, None) => unreachable!("data loaded when no stats file is given"),
    };
    if sets.is_empty() {
        let (ds, splits) = loaded.as_ref().expect("loaded above");
        sets.push(forecast_split(ctx, ds, splits, &Source::Model(ctx.out.join("model")), "test")?);
    }

    let dir = ctx.out.join("reports");
    create_dir(&dir)?;
    let mut reports: Vec<MetricReport> = Vec::new();
    for set in &sets {
        let mut name = set.model.clone().unwrap_or_else(|| "forecast".into());
        let base = name.clone();
        let mut k = 2;
        while reports.iter().any(|r| r.model == name) {
            name = format!("{base}-{k}");
            k += 1;
        }
        let complexity = ComplexityReport::from_count(set.parameters.unwrap_or(0));
        let report = evaluate(set, &stats, &ctx.cfg.eval, &name, complexity, EXEC)?;
        report.save(&dir.join(format!("{name}.json")))?;
        report.write_csv(&dir.join(format!("{name}.csv")))?;
        report.write_table(&dir.join(format!("{name}.txt")))?;
        print!("{}", report.to_table());
        reports.push(report);
    }
    if args.paper_table {
        let refs: Vec<&MetricReport> = reports.iter().collect();
        let table = paper_table(&refs);
        let path = dir.join("paper_table.txt");
        std::fs::write(&path, &table).map_err(io_err(&path))?;
        print!("\n{table}");
    }
    Ok(())
}

fn plot_cmd(ctx: &Ctx, args: PlotArgs) -> Result<()> {
    if args.forecast.is_none() && args.loss_curve.is_none() {
        return Err(CliError::Usage("plot needs --forecast and/or --loss-curve".into()));
    }
    let dir = ctx.out.join("plots");
    create_dir(&dir)?;
    if let Some(path) = &args.forecast {
        let set = read_forecast_file(path)?;
        if args.sample >= set.samples {
            return Err(CliError::Usage(format!(
                "--sample {} out of range (file has {} samples)",
                args.sample, set.samples
            )));
        }
        let stem = path.file_stem().map_or("forecast".into(), |s| s.to_string_lossy().into_owned());
        for (n, id) in set.station_ids.iter().enumerate() {
            let out = dir.join(format!("{stem}-{id}.svg"));
            std::fs::write(&out, plot::forecast_chart(&set, n, args.sample)).map_err(io_err(&out))?;
            println!("plot: {}", out.display());
        }
    }
    if let Some(path) = &args.loss_curve {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let curve = plot::parse_loss_curve(&text).map_err(|m| {
            CliError::Data(stationcast::Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, m)))
        })?;
        let out = dir.join("loss_curve.svg");
        std::fs::write(&out, plot::loss_chart(&curve)).map_err(io_err(&out))?;
        println!("plot: {}", out.display());
    }
    Ok(())
}

fn synth(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let mut sc = SynthConfig::new(args.preset, args.stations, args.hours);
    sc.seed = ctx.cfg.train.seed;
    sc.noise = args.noise;
    let series = synthesize(&sc)?;
    if let Some(raw) = &args.raw {
        if let Some(parent) = raw.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        let file = File::create(raw).map_err(io_err(raw))?;
        write_raw_archive(&series, BufWriter::new(file), sc.seed).map_err(io_err(raw))?;
    }
    let ds = Dataset::from_series(series, ctx.out.join("clean"))?;
    ds.save()?;
    println!(
        "synth: {:?} preset, {} stations x {} h -> {}",
        args.preset,
        args.stations,
        args.hours,
        ds.catalog.root.display()
    );
    Ok(())
}
