//! CSV and JSON writers, and the trajectory CSV reader.
//!
//! CSV files are comma-separated with a header row. Lines starting with `#`
//! carry `key = value` metadata and precede the header. Floats are written
//! with 17 significant digits so that reading a file back reproduces every
//! value bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Serialize;

use fgbif::model::{ParamName, ParameterSet, State};
use fgbif::odeint::{EventMarker, Perturbation, Segment, Trajectory};

use crate::config::{format_event, parse_events};
use crate::error::{CliError, CliResult};

/// Float formatted with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV document held in memory until written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { meta: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.header).expect("writing to memory");
        for row in &self.rows {
            writer.write_record(row).expect("writing to memory");
        }
        let bytes = writer.into_inner().expect("writing to memory");
        out.push_str(std::str::from_utf8(&bytes).expect("fields are UTF-8"));
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut meta = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            if let Some((k, v)) = body.split_once(" = ") {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| CliError::config(format!("malformed CSV header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::config(format!("malformed CSV row: {e}")))?;
        Ok(Self { meta, header, rows })
    }
}

/// Creates the output directory if needed.
pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

pub fn write_csv(dir: &Path, name: &str, table: &CsvTable) -> CliResult<PathBuf> {
    write_text(dir, name, &table.to_text())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_text(dir, name, &text)
}

/// `c=1 b=11 k=6.5 s=10 nu=0.2 h=0.5`, exact under [`parse_params`].
pub fn format_params(p: &ParameterSet) -> String {
    ParamName::ALL.iter().map(|&n| format!("{n}={}", p.get(n))).collect::<Vec<_>>().join(" ")
}

pub fn parse_params(text: &str) -> CliResult<ParameterSet> {
    let mut p = ParameterSet::default();
    for item in text.split_whitespace() {
        let bad = || CliError::config(format!("malformed parameter list '{text}'"));
        let (name, value) = item.split_once('=').ok_or_else(bad)?;
        let name: ParamName = name.parse().map_err(|_| bad())?;
        p.set(name, value.parse().map_err(|_| bad())?);
    }
    Ok(p)
}

const TRAJECTORY_HEADER: [&str; 8] = ["record", "segment", "t", "f", "x", "df", "dx", "detail"];

/// Every accepted step as a `point` row and every perturbation as a
/// `jump_from`/`jump_to` pair. Segment parameters and the validity flag go
/// into the metadata.
pub fn trajectory_table(traj: &Trajectory) -> CsvTable {
    let mut table = CsvTable::new(&TRAJECTORY_HEADER);
    table.meta("segments", traj.segments.len());
    for (i, seg) in traj.segments.iter().enumerate() {
        table.meta(&format!("segment.{i}.params"), format_params(&seg.params));
    }
    table.meta("left_valid_box", traj.left_valid_box);
    let mut events = traj.events.iter().peekable();
    for (i, seg) in traj.segments.iter().enumerate() {
        while let Some(ev) = events.next_if(|e| e.segment == i) {
            let detail = format_event(&ev.perturbation);
            for (record, s) in [("jump_from", ev.before), ("jump_to", ev.after)] {
                table.push(vec![
                    record.into(),
                    i.to_string(),
                    num(ev.time),
                    num(s.f),
                    num(s.x),
                    String::new(),
                    String::new(),
                    detail.clone(),
                ]);
            }
        }
        for ((t, s), d) in seg.times.iter().zip(&seg.states).zip(&seg.derivatives) {
            table.push(vec![
                "point".into(),
                i.to_string(),
                num(*t),
                num(s.f),
                num(s.x),
                num(d[0]),
                num(d[1]),
                String::new(),
            ]);
        }
    }
    table
}

fn field<T: std::str::FromStr>(row: &[String], i: usize) -> CliResult<T> {
    row.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::config(format!("malformed trajectory row {row:?}")))
}

/// Inverse of [`trajectory_table`].
pub fn parse_trajectory(text: &str) -> CliResult<Trajectory> {
    let table = CsvTable::parse(text)?;
    if table.header != TRAJECTORY_HEADER {
        return Err(CliError::config(format!("not a trajectory file: header {:?}", table.header)));
    }
    let count: usize = table
        .meta_value("segments")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::config("trajectory file lacks the segment count"))?;
    let mut segments = Vec::with_capacity(count);
    for i in 0..count {
        let params = table
            .meta_value(&format!("segment.{i}.params"))
            .ok_or_else(|| CliError::config(format!("trajectory file lacks parameters of segment {i}")))?;
        segments.push(Segment { params: parse_params(params)?, times: vec![], states: vec![], derivatives: vec![] });
    }
    let left_valid_box = table.meta_value("left_valid_box") == Some("true");

    let mut events = Vec::new();
    let mut pending: Option<(f64, State)> = None;
    for row in &table.rows {
        let segment: usize = field(row, 1)?;
        if segment >= count {
            return Err(CliError::config(format!("segment index {segment} out of range")));
        }
        let t: f64 = field(row, 2)?;
        let state = State::new(field(row, 3)?, field(row, 4)?);
        match row[0].as_str() {
            "point" => {
                let seg = &mut segments[segment];
                seg.times.push(t);
                seg.states.push(state);
                seg.derivatives.push(Vector2::new(field(row, 5)?, field(row, 6)?));
            }
            "jump_from" => pending = Some((t, state)),
            "jump_to" => {
                let (time, before) =
                    pending.take().ok_or_else(|| CliError::config("jump_to row without a jump_from row"))?;
                let perturbation: Perturbation = parse_events(&row[7])?
                    .pop()
                    .ok_or_else(|| CliError::config("event row without a perturbation"))?;
                events.push(EventMarker { time, segment, perturbation, before, after: state });
            }
            other => return Err(CliError::config(format!("unknown trajectory record '{other}'"))),
        }
    }
    if segments.iter().any(|s| s.times.is_empty()) {
        return Err(CliError::config("trajectory file has an empty segment"));
    }
    Ok(Trajectory { segments, events, left_valid_box })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fgbif::model::ForestGrass;
    use fgbif::odeint::{run_scenario, Scenario, Tolerances};

    #[test]
    fn numbers_keep_every_bit() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0] {
            let back: f64 = num(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v}");
        }
    }

    #[test]
    fn table_round_trips_with_quoted_fields() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.meta("model", "c=1 b=11");
        t.push(vec!["1".into(), "x,y".into()]);
        t.push(vec!["2".into(), "".into()]);
        assert_eq!(CsvTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn trajectory_round_trip() {
        let sc = Scenario {
            initial: State::new(0.65, 0.2),
            params: ParameterSet::default(),
            t_start: 0.0,
            horizon: 30.0,
            perturbations: parse_events("shift@10:f=0.02,x=-0.01; param@20:k=3").unwrap(),
        };
        let traj = run_scenario(&ForestGrass, &sc, &Tolerances::default()).unwrap();
        let text = trajectory_table(&traj).to_text();
        assert_eq!(parse_trajectory(&text).unwrap(), traj);
    }

    #[test]
    fn params_round_trip() {
        let p = ParameterSet { k: 4.57, nu: 1.0 / 3.0, h: -0.1, ..ParameterSet::default() };
        assert_eq!(parse_params(&format_params(&p)).unwrap(), p);
    }
}
