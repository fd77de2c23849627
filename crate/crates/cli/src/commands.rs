//! Subcommand implementations, callable without the argument parser.

use crate::config::{ControllerKind, RunConfig};
use crate::plot::{self, Chart, Series};
use crate::report::{self, MetricsRecord};
use crate::CliError;
use antiwindup::analysis::{compute_metrics, detect_instability, estimate_delay_margin, estimate_gain_margin, BenchmarkSetup, Execution, Margin, Metrics};
use antiwindup::sim::SimLog;
use antiwindup::Error;
use std::path::{Path, PathBuf};

/// Nominal run of one controller plus everything derived from it.
#[derive(Debug, Clone)]
pub struct ControllerResult {
    pub kind: ControllerKind,
    pub log: SimLog,
    pub unstable: bool,
    pub metrics: Option<Metrics>,
    pub gm: Option<Margin>,
    pub dm: Option<Margin>,
}

impl ControllerResult {
    pub fn record(&self) -> MetricsRecord {
        MetricsRecord::new(self.kind.name(), self.metrics, self.gm, self.dm)
    }
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub results: Vec<ControllerResult>,
    pub files: Vec<PathBuf>,
}

/// `None` when the nominal loop already fails the detector.
fn margin_or_none(r: antiwindup::Result<Margin>) -> Result<Option<Margin>, CliError> {
    match r {
        Ok(m) => Ok(Some(m)),
        Err(Error::NominalUnstable) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn margins(cfg: &RunConfig, setup: &BenchmarkSetup, exec: Execution) -> Result<(Option<Margin>, Option<Margin>), CliError> {
    let gm = margin_or_none(estimate_gain_margin(setup, cfg.margin.gain_cap, exec))?;
    let dm = margin_or_none(estimate_delay_margin(setup, cfg.margin.delay_cap, exec))?;
    Ok((gm, dm))
}

pub fn evaluate(cfg: &RunConfig, kind: ControllerKind, with_margins: bool, exec: Execution) -> Result<ControllerResult, CliError> {
    let setup = cfg.setup(kind)?;
    let log = setup.run()?;
    let unstable = detect_instability(&log, &setup.scenario, setup.actuator.amplitude_limit());
    let metrics = if log.diverged { None } else { Some(compute_metrics(&log)?) };
    let (gm, dm) = if with_margins && !unstable {
        margins(cfg, &setup, exec)?
    } else {
        (None, None)
    };
    Ok(ControllerResult {
        kind,
        log,
        unstable,
        metrics,
        gm,
        dm,
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs every configured controller, then writes `<controller>.csv`,
/// `metrics.json` and, when enabled, `tracking.svg` and `control.svg`.
pub fn compare(cfg: &RunConfig, exec: Execution) -> Result<CompareOutput, CliError> {
    create_dir(&cfg.out_dir)?;
    let mut results = Vec::with_capacity(cfg.controllers.len());
    let mut files = Vec::new();
    for &kind in &cfg.controllers {
        let res = evaluate(cfg, kind, cfg.margins, exec)?;
        let path = cfg.out_dir.join(format!("{}.csv", kind.name()));
        report::write_log_file(&res.log, &path)?;
        files.push(path);
        results.push(res);
    }
    let records: Vec<MetricsRecord> = results.iter().map(ControllerResult::record).collect();
    let path = cfg.out_dir.join("metrics.json");
    report::write_metrics_file(&records, &path)?;
    files.push(path);
    if cfg.plots {
        for (name, svg) in [("tracking.svg", tracking_chart(&results)), ("control.svg", control_chart(&results))] {
            let path = cfg.out_dir.join(name);
            std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
            files.push(path);
        }
    }
    Ok(CompareOutput { results, files })
}

fn tracking_chart(results: &[ControllerResult]) -> String {
    let mut series = Vec::new();
    if let Some(first) = results.first() {
        series.push(Series {
            label: "setpoint".into(),
            x: &first.log.t,
            y: &first.log.r,
            dashed: true,
        });
    }
    for r in results {
        series.push(Series {
            label: r.kind.name().into(),
            x: &r.log.t,
            y: &r.log.y,
            dashed: false,
        });
    }
    plot::render(&Chart {
        title: "Heading tracking".into(),
        x_label: "t [s]".into(),
        y_label: "heading [deg]".into(),
        series,
    })
}

fn control_chart(results: &[ControllerResult]) -> String {
    let series = results
        .iter()
        .map(|r| Series {
            label: r.kind.name().into(),
            x: &r.log.t,
            y: &r.log.u_ac,
            dashed: false,
        })
        .collect();
    plot::render(&Chart {
        title: "Rudder deflection".into(),
        x_label: "t [s]".into(),
        y_label: "u_ac [deg]".into(),
        series,
    })
}

/// Metrics of a previously written log.
pub fn metrics_of_file(path: &Path) -> Result<Metrics, CliError> {
    let log = report::read_log_file(path)?;
    Ok(compute_metrics(&log)?)
}
