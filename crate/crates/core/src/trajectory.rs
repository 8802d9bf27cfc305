//! Time-stamped state sequences and their CSV / JSON encodings.
//!
//! CSV layout: `t`, then every state block in declaration order with
//! one-based column suffixes (`x1, x2, …, p1, …, u1, …`), then the channels in
//! alphabetical order. Values are written in Rust's shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block names recognised when reading CSV headers back. Everything else is a
/// channel.
pub const KNOWN_BLOCKS: &[&str] = &["x", "p", "u", "z", "p_z", "mu", "q"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateBlock {
    pub name: String,
    pub len: usize,
}

impl StateBlock {
    pub fn new(name: &str, len: usize) -> Self {
        Self {
            name: name.to_string(),
            len,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub blocks: Vec<StateBlock>,
    pub states: Vec<Vec<f64>>,
    pub channels: BTreeMap<String, Vec<f64>>,
}

impl Trajectory {
    pub fn new(blocks: Vec<StateBlock>) -> Self {
        Self {
            times: Vec::new(),
            blocks,
            states: Vec::new(),
            channels: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, state: Vec<f64>) {
        debug_assert_eq!(state.len(), self.width());
        self.times.push(t);
        self.states.push(state);
    }

    pub fn push_channel(&mut self, name: &str, value: f64) {
        self.channels.entry(name.to_string()).or_default().push(value);
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.blocks.iter().any(|b| b.name == name)
    }

    /// Column range of a named block inside each state row.
    pub fn block_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some(start..start + b.len);
            }
            start += b.len;
        }
        None
    }

    /// The named block of every row.
    pub fn block_rows(&self, name: &str) -> Result<Vec<&[f64]>> {
        let range = self
            .block_range(name)
            .ok_or_else(|| Error::invalid(format!("trajectory has no `{name}` block")))?;
        Ok(self.states.iter().map(|s| &s[range.clone()]).collect())
    }

    pub fn block_at(&self, row: usize, name: &str) -> Result<&[f64]> {
        let range = self
            .block_range(name)
            .ok_or_else(|| Error::invalid(format!("trajectory has no `{name}` block")))?;
        Ok(&self.states[row][range])
    }

    /// Uniform spacing of the time grid, if it has one (relative tolerance 1e-9).
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let n = self.times.len() - 1;
        let h = (self.times[n] - self.times[0]) / n as f64;
        let ok = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
        ok.then_some(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trajectory times must be strictly increasing"));
        }
        if self.states.len() != self.times.len() {
            return Err(Error::invalid(format!(
                "trajectory has {} times but {} state rows",
                self.times.len(),
                self.states.len()
            )));
        }
        let width = self.width();
        if let Some(i) = self.states.iter().position(|s| s.len() != width) {
            return Err(Error::invalid(format!(
                "state row {i} has {} values, expected {width}",
                self.states[i].len()
            )));
        }
        for (name, values) in &self.channels {
            if values.len() != self.times.len() {
                return Err(Error::invalid(format!(
                    "channel `{name}` has {} values, expected {}",
                    values.len(),
                    self.times.len()
                )));
            }
        }
        Ok(())
    }

    /// Linear interpolation of every state column and channel at `t`.
    pub fn interpolate(&self, t: f64) -> Option<(Vec<f64>, BTreeMap<String, f64>)> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let hi = self.times.partition_point(|&s| s < t).min(n - 1);
        if self.times[hi] == t || hi == 0 {
            let ch = self.channels.iter().map(|(k, v)| (k.clone(), v[hi])).collect();
            return Some((self.states[hi].clone(), ch));
        }
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        let lerp = |a: f64, b: f64| a + w * (b - a);
        let state = self.states[lo]
            .iter()
            .zip(&self.states[hi])
            .map(|(a, b)| lerp(*a, *b))
            .collect();
        let ch = self
            .channels
            .iter()
            .map(|(k, v)| (k.clone(), lerp(v[lo], v[hi])))
            .collect();
        Some((state, ch))
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for b in &self.blocks {
            h.extend((1..=b.len).map(|i| format!("{}{i}", b.name)));
        }
        h.extend(self.channels.keys().cloned());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.validate()?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = Vec::with_capacity(1 + self.width() + self.channels.len());
            rec.push(t.to_string());
            rec.extend(self.states[i].iter().map(f64::to_string));
            rec.extend(self.channels.values().map(|v| v[i].to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("t") {
            return Err(Error::invalid("trajectory CSV must start with a `t` column"));
        }
        let layout = parse_header(&header[1..])?;
        let mut traj = Trajectory::new(layout.blocks.clone());
        for name in &layout.channels {
            traj.channels.insert(name.clone(), Vec::new());
        }
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::invalid(format!(
                    "CSV row {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    header.len()
                )));
            }
            let values = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::invalid(format!("CSV row {}: `{f}` is not a number", line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let width = traj.width();
            traj.times.push(values[0]);
            traj.states.push(values[1..1 + width].to_vec());
            for (k, name) in layout.channels.iter().enumerate() {
                traj.channels
                    .get_mut(name)
                    .expect("inserted above")
                    .push(values[1 + width + k]);
            }
        }
        traj.validate()?;
        Ok(traj)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        self.validate()?;
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let traj: Trajectory = serde_json::from_reader(r)?;
        traj.validate()?;
        Ok(traj)
    }

    pub fn write_file(&self, path: &Path, format: Format) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match format {
            Format::Csv => self.write_csv(&mut w)?,
            Format::Json => self.write_json(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a trajectory, choosing the decoder from the file extension.
    pub fn read_file(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        match Format::from_path(path) {
            Format::Csv => Self::read_csv(r),
            Format::Json => Self::read_json(r),
        }
    }
}

struct Layout {
    blocks: Vec<StateBlock>,
    channels: Vec<String>,
}

fn split_column(name: &str) -> Option<(&str, usize)> {
    let digits = name.bytes().rev().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits == name.len() {
        return None;
    }
    let (base, idx) = name.split_at(name.len() - digits);
    let idx: usize = idx.parse().ok()?;
    KNOWN_BLOCKS.contains(&base).then_some((base, idx))
}

fn parse_header(cols: &[String]) -> Result<Layout> {
    let mut blocks: Vec<StateBlock> = Vec::new();
    let mut i = 0;
    while i < cols.len() {
        let Some((base, idx)) = split_column(&cols[i]) else {
            break;
        };
        if idx != 1 {
            return Err(Error::invalid(format!(
                "state column `{}` out of order (block must start at 1)",
                cols[i]
            )));
        }
        let mut len = 1;
        while i + len < cols.len() {
            match split_column(&cols[i + len]) {
                Some((b, k)) if b == base && k == len + 1 => len += 1,
                _ => break,
            }
        }
        if blocks.iter().any(|b| b.name == base) {
            return Err(Error::invalid(format!("duplicate state block `{base}`")));
        }
        blocks.push(StateBlock::new(base, len));
        i += len;
    }
    let channels: Vec<String> = cols[i..].to_vec();
    if let Some(c) = channels.iter().find(|c| split_column(c).is_some()) {
        return Err(Error::invalid(format!(
            "state column `{c}` appears after channel columns"
        )));
    }
    Ok(Layout { blocks, channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(vec![StateBlock::new("x", 2), StateBlock::new("p_z", 1)]);
        t.push(0.0, vec![1.0, 2.0, 3.0]);
        t.push(0.5, vec![0.1, -2.5e-17, 1e300]);
        t.push_channel("lambda3", 1.0);
        t.push_channel("lambda3", 1.0);
        t.push_channel("H", 0.5);
        t.push_channel("H", 0.25);
        t
    }

    #[test]
    fn header_order() {
        assert_eq!(sample().header(), vec!["t", "x1", "x2", "p_z1", "H", "lambda3"]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut t = sample();
        t.times[1] = 0.0;
        assert!(t.validate().is_err());
        let mut t = sample();
        t.channels.get_mut("H").unwrap().pop();
        assert!(t.validate().is_err());
        assert!(Trajectory::read_csv("x1,t\n1,2\n".as_bytes()).is_err());
        assert!(Trajectory::read_csv("t,x1\n0,abc\n".as_bytes()).is_err());
        assert!(Trajectory::read_csv("t,x2\n0,1\n".as_bytes()).is_err());
        assert!(Trajectory::read_csv("t,H,x1\n0,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn interpolation() {
        let t = sample();
        let (s, ch) = t.interpolate(0.25).unwrap();
        assert!((s[0] - 0.55).abs() < 1e-15);
        assert!((ch["H"] - 0.375).abs() < 1e-15);
        assert!(t.interpolate(0.6).is_none());
        assert_eq!(t.interpolate(0.5).unwrap().0, t.states[1]);
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 1..20)) {
            let mut t = Trajectory::new(vec![StateBlock::new("mu", 3)]);
            for (i, r) in rows.iter().enumerate() {
                t.push(i as f64 * 0.1, r[..3].to_vec());
                t.push_channel("h", r[3]);
            }
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = Trajectory::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &t);
            let mut buf = Vec::new();
            t.write_json(&mut buf).unwrap();
            prop_assert_eq!(Trajectory::read_json(buf.as_slice()).unwrap(), t);
        }
    }
}
