//! CSV logs and the metrics summary.

use crate::CliError;
use antiwindup::analysis::{Margin, Metrics};
use antiwindup::sim::SimLog;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CSV_HEADER: [&str; 7] = ["t", "r", "y", "ydot", "u_c", "u_ac", "e"];

/// Writes one row per control tick. Values use 17 significant digits so a
/// read-back reproduces every sample bit for bit.
pub fn write_log<W: Write>(log: &SimLog, out: W) -> Result<(), CliError> {
    if log.is_empty() {
        return Err(CliError::Data("refusing to write an empty log".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for i in 0..log.len() {
        let row = [log.t[i], log.r[i], log.y[i], log.ydot[i], log.u_c[i], log.u_ac[i], log.e[i]];
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log_file(log: &SimLog, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_log(log, std::io::BufWriter::new(file))
}

/// Parses a log written by [`write_log`]. The control period is taken from
/// the first two time stamps.
pub fn read_log<R: Read>(input: R) -> Result<SimLog, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(CliError::Data(format!("unexpected header {header:?}, expected {CSV_HEADER:?}")));
    }
    let mut log = SimLog::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut v = [0.0; 7];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = rec
                .get(k)
                .ok_or_else(|| CliError::Data(format!("row {}: missing column {}", line + 2, CSV_HEADER[k])))?;
            *slot = field
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("row {}: bad number `{field}`", line + 2)))?;
        }
        log.t.push(v[0]);
        log.r.push(v[1]);
        log.y.push(v[2]);
        log.ydot.push(v[3]);
        log.u_c.push(v[4]);
        log.u_ac.push(v[5]);
        log.e.push(v[6]);
    }
    if log.is_empty() {
        return Err(CliError::Data("log has no samples".into()));
    }
    if log.t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Data("time stamps are not increasing".into()));
    }
    log.ts = if log.len() > 1 { log.t[1] - log.t[0] } else { 0.0 };
    log.diverged = [&log.y, &log.u_c, &log.u_ac].iter().any(|s| s.iter().any(|v| !v.is_finite()));
    Ok(log)
}

pub fn read_log_file(path: &Path) -> Result<SimLog, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_log(std::io::BufReader::new(file))
}

/// One entry of `metrics.json`. Metrics are null when the nominal run
/// diverged, margins when they were not requested or the nominal loop is
/// unstable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub controller: String,
    pub ise: Option<f64>,
    pub iace: Option<f64>,
    pub iacer: Option<f64>,
    pub gm: Option<f64>,
    pub gm_exceeds_cap: Option<bool>,
    pub dm: Option<f64>,
    pub dm_exceeds_cap: Option<bool>,
}

impl MetricsRecord {
    pub fn new(controller: &str, metrics: Option<Metrics>, gm: Option<Margin>, dm: Option<Margin>) -> Self {
        Self {
            controller: controller.to_owned(),
            ise: metrics.map(|m| m.ise),
            iace: metrics.map(|m| m.iace),
            iacer: metrics.map(|m| m.iacer),
            gm: gm.map(|m| m.value),
            gm_exceeds_cap: gm.map(|m| m.exceeds_cap),
            dm: dm.map(|m| m.value),
            dm_exceeds_cap: dm.map(|m| m.exceeds_cap),
        }
    }
}

pub fn write_metrics_file(records: &[MetricsRecord], path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(records)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Fixed-width table for the terminal.
pub fn format_table(records: &[MetricsRecord]) -> String {
    fn num(v: Option<f64>, prec: usize) -> String {
        v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
    }
    fn margin(v: Option<f64>, cap: Option<bool>, prec: usize) -> String {
        match (v, cap) {
            (Some(x), Some(true)) => format!(">{x:.prec$}"),
            _ => num(v, prec),
        }
    }
    let mut s = format!("{:<12} {:>12} {:>9} {:>9} {:>8} {:>8}\n", "controller", "ISE", "IACE", "IACER", "GM", "DM [s]");
    for r in records {
        s.push_str(&format!(
            "{:<12} {:>12} {:>9} {:>9} {:>8} {:>8}\n",
            r.controller,
            num(r.ise, 1),
            num(r.iace, 3),
            num(r.iacer, 3),
            margin(r.gm, r.gm_exceeds_cap, 2),
            margin(r.dm, r.dm_exceeds_cap, 2)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> SimLog {
        let mut log = SimLog { ts: 0.01, ..SimLog::default() };
        for i in 0..50 {
            let t = i as f64 * 0.01;
            log.t.push(t);
            log.r.push(150.0);
            log.y.push((t * 3.7).sin() * 1e-7 + 1.0 / 3.0);
            log.ydot.push(-t * std::f64::consts::PI);
            log.u_c.push(20.0 * (t * 11.0).cos());
            log.u_ac.push(f64::MIN_POSITIVE * i as f64);
            log.e.push(150.0 - log.y[i]);
        }
        log
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = sample_log();
        let mut buf = Vec::new();
        write_log(&log, &mut buf).unwrap();
        let back = read_log(buf.as_slice()).unwrap();
        assert_eq!(back.t, log.t);
        assert_eq!(back.y, log.y);
        assert_eq!(back.ydot, log.ydot);
        assert_eq!(back.u_c, log.u_c);
        assert_eq!(back.u_ac, log.u_ac);
        assert_eq!(back.e, log.e);
        assert!(!back.diverged);
        assert!((back.ts - 0.01).abs() < 1e-15);
    }

    #[test]
    fn header_line() {
        let mut buf = Vec::new();
        write_log(&sample_log(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,r,y,ydot,u_c,u_ac,e");
    }

    #[test]
    fn empty_log_rejected() {
        assert!(write_log(&SimLog::default(), Vec::new()).is_err());
        assert!(read_log("t,r,y,ydot,u_c,u_ac,e\n".as_bytes()).is_err());
    }

    #[test]
    fn malformed_input_rejected() {
        assert!(read_log("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_log("t,r,y,ydot,u_c,u_ac,e\n0,1,2,3,4,5,x\n".as_bytes()).is_err());
        assert!(read_log("t,r,y,ydot,u_c,u_ac,e\n1,0,0,0,0,0,0\n0,0,0,0,0,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn nulls_serialized() {
        let rec = MetricsRecord::new("pd_aw", None, None, None);
        let json = serde_json::to_value(&rec).unwrap();
        for key in ["ise", "iace", "iacer", "gm", "gm_exceeds_cap", "dm", "dm_exceeds_cap"] {
            assert!(json[key].is_null(), "{key}");
        }
        assert_eq!(json["controller"], "pd_aw");
    }

    #[test]
    fn table_marks_capped_margins() {
        let gm = Margin {
            value: 10.5,
            exceeds_cap: true,
            monotone: true,
            runs: 3,
        };
        let rec = MetricsRecord::new("lqi_aw", None, Some(gm), None);
        let table = format_table(&[rec]);
        assert!(table.contains(">10.50"), "{table}");
    }
}
