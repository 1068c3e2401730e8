use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use colloc_core::catalog::{self, SelectionCriteria};
use colloc_core::compliance::{self, ReportFormat, ThresholdSet};
use colloc_core::data::{self, AlignedPanel, DeploymentConfig, Interval};
use colloc_core::granular::{self, BinBasis, BinSettings};
use colloc_core::metrics::{self, PairedSeries};
use colloc_core::regression::{self, Orientation, OutlierPolicy, RegressionFit, Transform};

use crate::manifest::Run;
use crate::UsageError;

#[derive(Parser)]
#[command(name = "colloc-eval", version, about = "Collocation evaluation of low-cost PM2.5 sensors against a reference monitor")]
pub struct Cli {
    /// Decimal places in CSV, JSON and Markdown outputs
    #[arg(long, global = true, default_value_t = colloc_core::output::DEFAULT_PRECISION)]
    precision: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Raw readings: timestamp,device_id,pm25,temperature,humidity
    #[arg(long)]
    input: PathBuf,
    /// Deployment config (reference id and unit groups), JSON
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct Out {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Avg {
    Hourly,
    Daily,
}

impl From<Avg> for Interval {
    fn from(a: Avg) -> Self {
        match a {
            Avg::Hourly => Interval::Hourly,
            Avg::Daily => Interval::Daily,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Reference,
    Sensor,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy and precision metrics with a compliance report
    Evaluate {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "daily")]
        avg: Avg,
        /// JSON file overriding individual performance targets
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Metrics per PM x RH bin on hourly data
    Bins {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = granular::DEFAULT_PM_WIDTH)]
        pm_width: f64,
        #[arg(long, default_value_t = granular::DEFAULT_RH_WIDTH)]
        rh_width: f64,
        /// Bins with fewer hours are listed in bins_excluded.csv
        #[arg(long, default_value_t = granular::DEFAULT_MIN_HOURS)]
        min_hours: usize,
        /// Which concentration places a pair in a bin
        #[arg(long, value_enum, default_value = "reference")]
        basis: Basis,
        /// PM bin width of the reference data distribution table
        #[arg(long, default_value_t = granular::DISTRIBUTION_PM_WIDTH)]
        dist_pm_width: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Confidence and prediction intervals for sensor readings
    Intervals {
        /// Fitted model (model.json from an earlier run)
        #[arg(long, conflicts_with_all = ["input", "config", "unit"])]
        fit: Option<PathBuf>,
        #[arg(long, requires = "config")]
        input: Option<PathBuf>,
        #[arg(long, requires = "input")]
        config: Option<PathBuf>,
        /// Unit to calibrate when fitting from --input
        #[arg(long, requires = "input")]
        unit: Option<String>,
        #[arg(long, value_enum, default_value = "hourly")]
        avg: Avg,
        /// Repeat outlier removal until nothing more is removed
        #[arg(long)]
        iterate: bool,
        /// Raw sensor readings, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Does adding humidity to the calibration model help?
    Significance {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        unit: String,
        #[arg(long, value_enum, default_value = "hourly")]
        avg: Avg,
        #[command(flatten)]
        out: Out,
    },
    /// Train/test evaluation of a linear correction
    Correct {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        unit: String,
        #[arg(long, value_enum, default_value = "hourly")]
        avg: Avg,
        /// Training share
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Out,
    },
    /// Hour-of-day profile of PM, temperature, humidity and MAE
    Diurnal {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        out: Out,
    },
    /// Per-month R² and mean conditions
    Monthly {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "hourly")]
        avg: Avg,
        #[command(flatten)]
        out: Out,
    },
    /// Filter a sensor catalog by selection criteria
    Select {
        /// Catalog CSV; the bundled datasheet table when omitted
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        no_fan_requirement: bool,
        #[arg(long)]
        no_laser_requirement: bool,
        /// µg/m³; 0 disables
        #[arg(long, default_value_t = 1000.0)]
        min_pm_range: f64,
        /// %; 0 disables
        #[arg(long, default_value_t = 90.0)]
        min_rh_upper: f64,
        /// USD; no cap when omitted
        #[arg(long)]
        max_price: Option<f64>,
        /// Model exempt from the price cap (repeatable)
        #[arg(long = "price-exception")]
        price_exceptions: Vec<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Saturation plateaus, group drift and data gaps
    Quality {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "hourly")]
        avg: Avg,
        /// Minimum run of cells at the ceiling to flag
        #[arg(long, default_value_t = 3)]
        saturation_run: usize,
        /// Fixed ceiling (µg/m³); each device's observed maximum when omitted
        #[arg(long)]
        ceiling: Option<f64>,
        /// Window length in periods for the drift screen
        #[arg(long, default_value_t = 24)]
        drift_window: usize,
        /// Flag a unit whose window mean is below this fraction of its siblings'
        #[arg(long, default_value_t = 0.5)]
        drift_ratio: f64,
        #[command(flatten)]
        out: Out,
    },
}

struct Loaded {
    config: DeploymentConfig,
    panel: AlignedPanel,
}

fn load(run: &mut Run, source: &Source, interval: Interval) -> Result<Loaded> {
    let config_bytes = run.input("config", &source.config)?;
    let config_text = String::from_utf8(config_bytes)
        .map_err(|_| UsageError(format!("{} is not UTF-8", source.config.display())))?;
    let config = DeploymentConfig::from_json_str(&config_text)
        .with_context(|| format!("loading config {}", source.config.display()))?;
    let input = run.input("input", &source.input)?;
    let ingested = data::ingest_reader(input.as_slice(), &config)
        .with_context(|| format!("reading {}", source.input.display()))?;
    if !ingested.diagnostics.is_empty() {
        eprintln!(
            "warning: {} of {} rows rejected (see rejected_rows.csv)",
            ingested.diagnostics.len(),
            ingested.total_rows()
        );
    }
    let mut rejected = String::from("line,reason\n");
    for d in &ingested.diagnostics {
        rejected.push_str(&format!("{},\"{}\"\n", d.line, d.reason.replace('"', "\"\"")));
    }
    run.write("rejected_rows.csv", rejected)?;
    run.param("avg", interval.as_str());
    let panel = data::align_and_average(&ingested.records, &config, interval)?;
    Ok(Loaded { config, panel })
}

fn unit_pairs(loaded: &Loaded, unit: &str) -> Result<PairedSeries> {
    if loaded.config.group_of(unit).is_none() {
        return Err(colloc_core::Error::UnknownDevice(unit.to_string()).into());
    }
    Ok(PairedSeries::from_panel(&loaded.panel, unit)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let p = cli.precision;
    match cli.command {
        Command::Evaluate {
            source,
            avg,
            thresholds,
            out,
        } => {
            let mut run = Run::new("evaluate", &out.out)?;
            let thresholds = match thresholds {
                Some(path) => {
                    let bytes = run.input("thresholds", &path)?;
                    ThresholdSet::from_json_str(&String::from_utf8_lossy(&bytes))
                        .with_context(|| format!("loading thresholds {}", path.display()))?
                }
                None => ThresholdSet::default(),
            };
            let loaded = load(&mut run, &source, avg.into())?;
            run.param("thresholds", thresholds);
            let eval = metrics::evaluate_panel(&loaded.panel, &loaded.config)?;
            for unit in &eval.skipped_units {
                eprintln!("warning: {unit} has no period in common with the reference; skipped");
            }
            let report = compliance::grade(&eval.units, &eval.groups, &thresholds, avg.into());
            run.write("panel.csv", loaded.panel.to_csv(p)?)?;
            run.write("summary.csv", data::summary_csv(&data::panel_summary(&loaded.panel), p))?;
            run.write("metrics_units.csv", metrics::units_csv(&eval.units, p))?;
            run.write("metrics_groups.csv", metrics::groups_csv(&eval.groups, p))?;
            run.write("report.md", compliance::render_report(&report, ReportFormat::Markdown, p))?;
            run.write("report.json", compliance::render_report(&report, ReportFormat::Json, p))?;
            run.finish()
        }
        Command::Bins {
            source,
            pm_width,
            rh_width,
            min_hours,
            basis,
            dist_pm_width,
            out,
        } => {
            let mut run = Run::new("bins", &out.out)?;
            let loaded = load(&mut run, &source, Interval::Hourly)?;
            let settings = BinSettings {
                pm_width,
                rh_width,
                min_hours,
                basis: match basis {
                    Basis::Reference => BinBasis::Reference,
                    Basis::Sensor => BinBasis::Sensor,
                },
            };
            run.param("bins", settings);
            run.param("dist_pm_width", dist_pm_width);
            let report = granular::binned_metrics(&loaded.panel, &loaded.config, settings)?;
            if report.unbinned_periods > 0 {
                eprintln!("warning: {} periods lack humidity and were not binned", report.unbinned_periods);
            }
            let reference = loaded.config.reference_id.clone();
            let distribution = granular::data_distribution(&loaded.panel, &reference, dist_pm_width, rh_width)?;
            run.write("bins_long.csv", report.long_csv(p)?)?;
            run.write("bins_excluded.csv", report.excluded_csv()?)?;
            run.write("distribution.csv", granular::distribution_csv(&reference, &distribution, p)?)?;
            run.finish()
        }
        Command::Intervals {
            fit,
            input,
            config,
            unit,
            avg,
            iterate,
            values,
            confidence,
            out,
        } => {
            let mut run = Run::new("intervals", &out.out)?;
            let (model, fresh) = match (fit, input, config) {
                (Some(path), _, _) => {
                    let bytes = run.input("fit", &path)?;
                    let model = RegressionFit::from_json(&String::from_utf8_lossy(&bytes))
                        .with_context(|| format!("loading fit {}", path.display()))?;
                    (model, false)
                }
                (None, Some(input), Some(config)) => {
                    let unit = unit.ok_or_else(|| UsageError("--unit is required when fitting from --input".into()))?;
                    let loaded = load(&mut run, &Source { input, config }, avg.into())?;
                    let pairs = unit_pairs(&loaded, &unit)?;
                    run.param("unit", &unit);
                    run.param("iterate", iterate);
                    let model = if iterate {
                        regression::fit(
                            pairs.y(),
                            pairs.x(),
                            Transform::LogLog,
                            Orientation::ReferenceOnSensor,
                            Some(OutlierPolicy {
                                iterate: true,
                                ..Default::default()
                            }),
                        )?
                    } else {
                        regression::fit_loglog_with_outlier_removal(&pairs)?
                    };
                    (model, true)
                }
                _ => return Err(UsageError("give either --fit or --input with --config and --unit".into()).into()),
            };
            run.param("values", &values);
            run.param("confidence", confidence);
            let rows = values
                .iter()
                .map(|&v| regression::estimate(&model, v, confidence))
                .collect::<colloc_core::Result<Vec<_>>>()?;
            run.write("intervals.csv", regression::intervals_csv(&rows, p)?)?;
            if fresh {
                run.write_json("model.json", &model)?;
            }
            run.finish()
        }
        Command::Significance { source, unit, avg, out } => {
            let mut run = Run::new("significance", &out.out)?;
            let loaded = load(&mut run, &source, avg.into())?;
            run.param("unit", &unit);
            if loaded.config.group_of(&unit).is_none() {
                return Err(colloc_core::Error::UnknownDevice(unit).into());
            }
            let sensor = loaded.panel.column(&unit)?;
            let (mut x, mut y, mut rh) = (Vec::new(), Vec::new(), Vec::new());
            for ((r, s), h) in loaded.panel.reference().iter().zip(sensor).zip(loaded.panel.humidity()) {
                if let (Some(r), Some(s), Some(h)) = (r, s, h) {
                    x.push(*s);
                    y.push(*r);
                    rh.push(*h);
                }
            }
            let result = regression::humidity_significance(&x, &y, &rh)?;
            run.write("significance.csv", result.to_csv(p)?)?;
            run.finish()
        }
        Command::Correct {
            source,
            unit,
            avg,
            split,
            seed,
            out,
        } => {
            let mut run = Run::new("correct", &out.out)?;
            let loaded = load(&mut run, &source, avg.into())?;
            run.param("unit", &unit);
            run.param("split", split);
            run.param("seed", seed);
            let pairs = unit_pairs(&loaded, &unit)?;
            let result = regression::linear_correction_eval(pairs.y(), pairs.x(), split, seed)?;
            run.write("correction.csv", result.to_csv(p)?)?;
            run.finish()
        }
        Command::Diurnal { source, out } => {
            let mut run = Run::new("diurnal", &out.out)?;
            let loaded = load(&mut run, &source, Interval::Hourly)?;
            let rows = granular::diurnal_profile(&loaded.panel, &loaded.config)?;
            run.write("diurnal.csv", granular::diurnal_csv(&rows, p)?)?;
            run.finish()
        }
        Command::Monthly { source, avg, out } => {
            let mut run = Run::new("monthly", &out.out)?;
            let loaded = load(&mut run, &source, avg.into())?;
            let rows = granular::monthly_summary(&loaded.panel, &loaded.config)?;
            if rows.is_empty() {
                return Err(colloc_core::Error::NoCoPopulatedCells("every month".into()).into());
            }
            run.write("monthly.csv", granular::monthly_csv(&rows, p)?)?;
            run.finish()
        }
        Command::Select {
            catalog: catalog_path,
            no_fan_requirement,
            no_laser_requirement,
            min_pm_range,
            min_rh_upper,
            max_price,
            price_exceptions,
            out,
        } => {
            let mut run = Run::new("select", &out.out)?;
            let specs = match &catalog_path {
                Some(path) => {
                    let bytes = run.input("catalog", path)?;
                    catalog::read_catalog(bytes.as_slice()).with_context(|| format!("reading catalog {}", path.display()))?
                }
                None => catalog::bundled_catalog(),
            };
            let enabled = |v: f64| (v > 0.0).then_some(v);
            let criteria = SelectionCriteria {
                require_fan: !no_fan_requirement,
                require_laser: !no_laser_requirement,
                min_pm_range: enabled(min_pm_range),
                min_rh_upper: enabled(min_rh_upper),
                max_price_usd: max_price,
                price_exceptions,
            };
            run.param("criteria", &criteria);
            let selection = catalog::select_sensors(&specs, &criteria)?;
            run.write("selection.csv", selection.to_csv(&specs, p)?)?;
            run.write_json("selection.json", &selection)?;
            run.finish()
        }
        Command::Quality {
            source,
            avg,
            saturation_run,
            ceiling,
            drift_window,
            drift_ratio,
            out,
        } => {
            let mut run = Run::new("quality", &out.out)?;
            let loaded = load(&mut run, &source, avg.into())?;
            run.param("saturation_run", saturation_run);
            run.param("ceiling", ceiling);
            run.param("drift_window", drift_window);
            run.param("drift_ratio", drift_ratio);
            let mut flags = Vec::new();
            for device in loaded.config.device_order() {
                flags.extend(data::detect_saturation(&loaded.panel, &device, saturation_run, ceiling)?);
                flags.extend(data::gap_flags(&loaded.panel, &device)?);
            }
            for units in loaded.config.groups.values().filter(|u| u.len() > 1) {
                flags.extend(data::group_drift_screen(&loaded.panel, units, drift_window, drift_ratio)?);
            }
            run.write("quality_flags.csv", data::quality_csv(&flags)?)?;
            run.write("summary.csv", data::summary_csv(&data::panel_summary(&loaded.panel), p))?;
            run.finish()
        }
    }
}

