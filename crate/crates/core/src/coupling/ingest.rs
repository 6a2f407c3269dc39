//! Observation input: NDJSON records or a daily-counts CSV, from a file or a
//! line stream.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::smc::Observation;

/// Capacity of the queue between the reader thread and the filter.
const FEED_CAPACITY: usize = 256;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    day: u32,
    infected_count: Option<f64>,
    population: Option<f64>,
    infected_proportion: Option<f64>,
}

impl Record {
    fn proportion(&self) -> std::result::Result<f64, String> {
        match (self.infected_proportion, self.infected_count, self.population) {
            (Some(p), None, _) => Ok(p),
            (None, Some(c), Some(n)) if n > 0.0 && c >= 0.0 => Ok(c / n),
            (None, Some(_), Some(_)) => Err("needs infected_count >= 0 and population > 0".into()),
            (None, Some(_), None) => Err("infected_count requires population".into()),
            (None, None, _) => Err("missing infected_proportion or infected_count".into()),
            (Some(_), Some(_), _) => Err("give infected_proportion or infected_count, not both".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ndjson,
    Csv,
}

/// Stateful line parser shared by the file and stream readers.
struct LineParser {
    source: String,
    format: Option<Format>,
    last_day: Option<u32>,
}

impl LineParser {
    fn new(source: &str) -> Self {
        LineParser { source: source.to_string(), format: None, last_day: None }
    }

    fn error(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.source.clone(), line, msg: msg.into() }
    }

    fn parse(&mut self, line_no: usize, line: &str) -> Result<Option<Observation>> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(None);
        }
        let format = match self.format {
            Some(f) => f,
            None => {
                let f = if line.starts_with('{') { Format::Ndjson } else { Format::Csv };
                self.format = Some(f);
                if f == Format::Csv {
                    if !line.starts_with("day,s,i,r") {
                        return Err(self.error(line_no, "expected NDJSON records or a day,s,i,r CSV header"));
                    }
                    return Ok(None);
                }
                f
            }
        };
        let (day, proportion) = match format {
            Format::Ndjson => {
                let rec: Record =
                    serde_json::from_str(line).map_err(|e| self.error(line_no, e.to_string()))?;
                let p = rec.proportion().map_err(|m| self.error(line_no, m))?;
                (rec.day, p)
            }
            Format::Csv => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() < 4 {
                    return Err(self.error(line_no, "expected at least day,s,i,r"));
                }
                let num = |k: usize| {
                    fields[k]
                        .trim()
                        .parse::<u64>()
                        .map_err(|e| self.error(line_no, format!("field {}: {e}", k + 1)))
                };
                let day = u32::try_from(num(0)?).map_err(|_| self.error(line_no, "day out of range"))?;
                let (s, i, r) = (num(1)?, num(2)?, num(3)?);
                let n = s + i + r;
                if n == 0 {
                    return Err(self.error(line_no, "population is zero"));
                }
                (day, i as f64 / n as f64)
            }
        };
        if !(0.0..=1.0).contains(&proportion) {
            return Err(self.error(line_no, format!("day {day}: proportion {proportion} outside [0, 1]")));
        }
        if let Some(last) = self.last_day {
            if day <= last {
                return Err(self.error(line_no, format!("day {day} is out of order (follows day {last})")));
            }
        }
        self.last_day = Some(day);
        Ok(Some(Observation { day, infected_proportion: proportion }))
    }
}

/// Reads a whole observation file. An empty record set is an error.
pub fn ingest_observations(path: &Path) -> Result<Vec<Observation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut parser = LineParser::new(&source);
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(obs) = parser.parse(k + 1, &line)? {
            out.push(obs);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse { path: source, line: 0, msg: "no observations".into() });
    }
    Ok(out)
}

/// Observations parsed on a producer thread and handed over through a
/// bounded queue, so a slow filter applies back-pressure to the reader.
pub struct ObservationFeed {
    rx: Receiver<Result<Observation>>,
    done: bool,
}

impl ObservationFeed {
    pub fn spawn<R: BufRead + Send + 'static>(reader: R, source: &str) -> Self {
        let (tx, rx) = sync_channel(FEED_CAPACITY);
        let source = source.to_string();
        thread::spawn(move || {
            let mut parser = LineParser::new(&source);
            for (k, line) in reader.lines().enumerate() {
                let item = match line {
                    Ok(l) => parser.parse(k + 1, &l),
                    Err(e) => Err(Error::io(&source, e)),
                };
                let stop = item.is_err();
                match item {
                    Ok(None) => continue,
                    Ok(Some(obs)) => {
                        if tx.send(Ok(obs)).is_err() {
                            return;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                    }
                }
                if stop {
                    return;
                }
            }
        });
        ObservationFeed { rx, done: false }
    }

    /// Opens a file, or standard input for `-`.
    pub fn open(source: &str) -> Result<Self> {
        if source == "-" {
            return Ok(Self::spawn(BufReader::new(std::io::stdin()), "<stdin>"));
        }
        let file = File::open(source).map_err(|e| Error::io(source, e))?;
        Ok(Self::spawn(BufReader::new(file), source))
    }
}

impl Iterator for ObservationFeed {
    type Item = Result<Observation>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.rx.recv().ok();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}
