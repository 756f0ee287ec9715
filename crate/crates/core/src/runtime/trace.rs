//! Line-delimited execution trace: `time kind id device bytes`, tab
//! separated, time printed with six decimals.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: String,
    pub id: String,
    pub device: String,
    pub bytes: u64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}\t{}\t{}\t{}\t{}", self.time, self.kind, self.id, self.device, self.bytes)
    }
}

impl FromStr for TraceEvent {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(format!("expected 5 fields, got {}: {line:?}", f.len()));
        }
        Ok(Self {
            time: f[0].parse().map_err(|_| format!("bad time {:?}", f[0]))?,
            kind: f[1].to_string(),
            id: f[2].to_string(),
            device: f[3].to_string(),
            bytes: f[4].parse().map_err(|_| format!("bad byte count {:?}", f[4]))?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, time: f64, kind: &str, id: impl Into<String>, device: impl Into<String>, bytes: u64) {
        self.events.push(TraceEvent {
            time,
            kind: kind.to_string(),
            id: id.into(),
            device: device.into(),
            bytes,
        });
    }

    /// Stable sort by timestamp, for traces recorded partly ahead of time.
    pub fn sort_by_time(&mut self) {
        self.events.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("trace is UTF-8")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        Ok(Self {
            events: text.lines().filter(|l| !l.is_empty()).map(str::parse).collect::<Result<_, _>>()?,
        })
    }
}
