//! Raw per-neuron simulation output and its transposition into per-timestep frames.
//!
//! Raw layout under a dataset root:
//!
//! ```text
//! positions.txt                         id x y z area_name
//! <scenario>/neurons/<id>.csv           step;fired;calcium;target;axons;dendrites;syn_in;syn_out
//! <scenario>/network/step_<t>.txt       target_id source_id weight
//! ```

mod positions;
mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracing::warn;

pub use positions::parse_positions;
pub use synth::{
    generate_synthetic, generate_synthetic_scenarios, injury_step, SynthConfig, INJURED_AREA, SYNTH_JITTER_BOUND_MM,
};

use crate::aggregate::ConnectivityAccumulator;
use crate::error::{Error, Result};
use crate::model::{
    AreaConnectivity, ConnectivityStatus, FrameColumns, Scenario, Statics, TimestepFrame,
    FIRED_WINDOW,
};

pub const MONITOR_HEADER: &str = "step;fired;calcium;target;axons;dendrites;syn_in;syn_out";

/// Paths of a raw dataset rooted at one directory.
#[derive(Debug, Clone)]
pub struct RawDatasetLayout {
    root: PathBuf,
}

impl RawDatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RawDatasetLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn positions_path(&self) -> PathBuf {
        self.root.join("positions.txt")
    }

    pub fn scenario_dir(&self, scenario: Scenario) -> PathBuf {
        self.root.join(scenario.slug())
    }

    pub fn monitor_path(&self, scenario: Scenario, neuron_id: u32) -> PathBuf {
        self.scenario_dir(scenario)
            .join("neurons")
            .join(format!("{neuron_id}.csv"))
    }

    pub fn network_path(&self, scenario: Scenario, step: u32) -> PathBuf {
        self.scenario_dir(scenario)
            .join("network")
            .join(format!("step_{step}.txt"))
    }

    /// Canonical scenarios that have a directory under the root.
    pub fn scenarios(&self) -> Vec<Scenario> {
        Scenario::ALL
            .into_iter()
            .filter(|s| self.scenario_dir(*s).join("neurons").is_dir())
            .collect()
    }
}

/// One row of a monitor file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub step: u32,
    pub fired: bool,
    pub calcium: f32,
    pub target: f32,
    pub axons: f32,
    pub dendrites: f32,
    pub syn_in: u32,
    pub syn_out: u32,
}

impl MonitorRow {
    pub fn parse(line: &str) -> std::result::Result<MonitorRow, String> {
        let mut fields = line.split(';');
        let mut next = |name: &str| {
            fields
                .next()
                .map(str::trim)
                .ok_or_else(|| format!("missing field '{name}'"))
        };
        fn num<T: std::str::FromStr>(name: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad {name} value '{v}'"))
        }
        let step = num("step", next("step")?)?;
        let fired = match next("fired")? {
            "0" => false,
            "1" => true,
            other => return Err(format!("bad fired flag '{other}'")),
        };
        let row = MonitorRow {
            step,
            fired,
            calcium: num("calcium", next("calcium")?)?,
            target: num("target", next("target")?)?,
            axons: num("axons", next("axons")?)?,
            dendrites: num("dendrites", next("dendrites")?)?,
            syn_in: num("syn_in", next("syn_in")?)?,
            syn_out: num("syn_out", next("syn_out")?)?,
        };
        if fields.next().is_some() {
            return Err("more than 8 fields".into());
        }
        Ok(row)
    }

    pub fn format(&self) -> String {
        format!(
            "{};{};{};{};{};{};{};{}",
            self.step,
            self.fired as u8,
            self.calcium,
            self.target,
            self.axons,
            self.dendrites,
            self.syn_in,
            self.syn_out
        )
    }
}

/// Reads the next non-blank line; `Ok(None)` at end of file.
///
/// A final line without a newline terminator is rejected: it is the signature
/// of a truncated write.
fn next_line<R: BufRead>(
    reader: &mut R,
    buf: &mut String,
    path: &Path,
    line_no: &mut usize,
    consumed: &mut u64,
) -> Result<bool> {
    loop {
        buf.clear();
        let n = reader.read_line(buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(false);
        }
        *line_no += 1;
        *consumed += n as u64;
        if !buf.ends_with('\n') {
            return Err(Error::format(path, *line_no, "truncated final line"));
        }
        let trimmed = buf.trim_end_matches(['\n', '\r']).len();
        buf.truncate(trimmed);
        if !buf.trim().is_empty() {
            return Ok(true);
        }
    }
}

/// Resumable read position in one monitor file.
#[derive(Debug, Clone)]
struct MonitorCursor {
    neuron_id: u32,
    path: PathBuf,
    offset: u64,
    line_no: usize,
}

impl MonitorCursor {
    /// Reads up to `limit` rows starting where the previous call stopped.
    /// The file is reopened on every call so only one handle is open at a time.
    fn read_rows(&mut self, limit: usize, out: &mut Vec<MonitorRow>) -> Result<()> {
        out.clear();
        let file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let mut reader = BufReader::with_capacity(16 * 1024, file);
        reader
            .seek(SeekFrom::Start(self.offset))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut buf = String::new();
        let mut consumed = 0u64;
        if self.offset == 0 {
            let found = next_line(&mut reader, &mut buf, &self.path, &mut self.line_no, &mut consumed)?;
            if !found || buf.trim() != MONITOR_HEADER {
                return Err(Error::format(
                    &self.path,
                    self.line_no.max(1),
                    format!("expected header '{MONITOR_HEADER}'"),
                ));
            }
        }
        while out.len() < limit
            && next_line(&mut reader, &mut buf, &self.path, &mut self.line_no, &mut consumed)?
        {
            let row = MonitorRow::parse(&buf)
                .map_err(|m| Error::format(&self.path, self.line_no, m))?;
            out.push(row);
        }
        self.offset += consumed;
        Ok(())
    }
}

/// Order in which monitor files are visited within a block. Output does not
/// depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisitOrder {
    #[default]
    Ascending,
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct TransposeOptions {
    /// Timesteps read from each monitor file per pass; bounds in-flight frames.
    pub block_steps: usize,
    pub visit_order: VisitOrder,
}

impl Default for TransposeOptions {
    fn default() -> Self {
        TransposeOptions {
            block_steps: 32,
            visit_order: VisitOrder::Ascending,
        }
    }
}

/// Non-fatal condition noticed while transposing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestWarning {
    MissingNetworkFile { scenario: Scenario, step: u32, path: PathBuf },
}

impl std::fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestWarning::MissingNetworkFile { scenario, step, path } => write!(
                f,
                "{scenario} step {step}: network file {} missing, connectivity left empty",
                path.display()
            ),
        }
    }
}

/// Trailing fired history of one neuron; bit 0 is the most recent step.
#[derive(Debug, Clone, Copy, Default)]
struct FiredHistory {
    bits: u128,
    seen: usize,
}

impl FiredHistory {
    fn push(&mut self, fired: bool) -> f32 {
        self.bits = (self.bits << 1) | fired as u128;
        self.seen += 1;
        let window = self.seen.min(FIRED_WINDOW);
        let mask = if window >= 128 { u128::MAX } else { (1u128 << window) - 1 };
        (self.bits & mask).count_ones() as f32 / window as f32
    }
}

/// Frames of one scenario in ascending timestep order.
///
/// All monitor files are read in lockstep, `block_steps` rows at a time, so
/// memory stays proportional to the neuron count rather than to the length of
/// the run.
pub struct ScenarioFrames<'a> {
    layout: &'a RawDatasetLayout,
    statics: &'a Statics,
    scenario: Scenario,
    block_steps: usize,
    cursors: Vec<MonitorCursor>,
    visit: Vec<usize>,
    history: Vec<FiredHistory>,
    pending: std::collections::VecDeque<(u32, FrameColumns)>,
    last_step: Option<u32>,
    finished: bool,
    warnings: Vec<IngestWarning>,
}

/// Streams the frames of `scenario` with default options.
pub fn transpose_scenario<'a>(
    layout: &'a RawDatasetLayout,
    statics: &'a Statics,
    scenario: Scenario,
) -> ScenarioFrames<'a> {
    transpose_scenario_with(layout, statics, scenario, TransposeOptions::default())
}

pub fn transpose_scenario_with<'a>(
    layout: &'a RawDatasetLayout,
    statics: &'a Statics,
    scenario: Scenario,
    options: TransposeOptions,
) -> ScenarioFrames<'a> {
    let n = statics.len();
    let cursors = (0..n as u32)
        .map(|id| MonitorCursor {
            neuron_id: id,
            path: layout.monitor_path(scenario, id),
            offset: 0,
            line_no: 0,
        })
        .collect();
    // neuron 0 is the reference every other file is checked against
    let mut visit: Vec<usize> = (1..n).collect();
    if let VisitOrder::Shuffled(seed) = options.visit_order {
        visit.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    ScenarioFrames {
        layout,
        statics,
        scenario,
        block_steps: options.block_steps.max(1),
        cursors,
        visit,
        history: vec![FiredHistory::default(); n],
        pending: Default::default(),
        last_step: None,
        finished: n == 0,
        warnings: Vec::new(),
    }
}

impl ScenarioFrames<'_> {
    pub fn warnings(&self) -> &[IngestWarning] {
        &self.warnings
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    fn fill_block(&mut self) -> Result<()> {
        let n = self.statics.len();
        let mut rows = Vec::with_capacity(self.block_steps);
        self.cursors[0].read_rows(self.block_steps, &mut rows)?;
        let steps: Vec<u32> = rows.iter().map(|r| r.step).collect();
        for &s in &steps {
            if self.last_step.is_some_and(|prev| s <= prev) {
                return Err(Error::Inconsistent {
                    neuron_id: 0,
                    message: format!("step {s} does not ascend"),
                });
            }
            self.last_step = Some(s);
        }

        let mut block: Vec<FrameColumns> = steps.iter().map(|_| zeroed_columns(n)).collect();
        store_rows(&mut block, 0, &rows);

        for &idx in &self.visit {
            let cursor = &mut self.cursors[idx];
            cursor.read_rows(self.block_steps, &mut rows)?;
            let got: Vec<u32> = rows.iter().map(|r| r.step).collect();
            if got != steps {
                let detail = match got.iter().zip(&steps).position(|(a, b)| a != b) {
                    Some(i) => format!("step {} where neuron 0 has step {}", got[i], steps[i]),
                    None if got.len() < steps.len() => {
                        format!("ends before step {}", steps[got.len()])
                    }
                    None => format!("has extra step {}", got[steps.len()]),
                };
                return Err(Error::Inconsistent {
                    neuron_id: cursor.neuron_id,
                    message: format!("{} {detail}", cursor.path.display()),
                });
            }
            store_rows(&mut block, idx, &rows);
        }

        for (step, mut columns) in steps.into_iter().zip(block) {
            for (i, h) in self.history.iter_mut().enumerate() {
                columns.fired_fraction[i] = h.push(columns.fired[i]);
            }
            self.pending.push_back((step, columns));
        }
        if self.pending.is_empty() {
            self.finished = true;
        }
        Ok(())
    }

    fn connectivity(&mut self, step: u32) -> Result<(AreaConnectivity, ConnectivityStatus)> {
        let path = self.layout.network_path(self.scenario, step);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                warn!(scenario = %self.scenario, step, path = %path.display(), "network file missing");
                self.warnings.push(IngestWarning::MissingNetworkFile {
                    scenario: self.scenario,
                    step,
                    path,
                });
                return Ok((
                    AreaConnectivity::zeros(self.statics.area_count()),
                    ConnectivityStatus::Missing,
                ));
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        let matrix = read_network(BufReader::new(file), &path, self.statics)?;
        Ok((matrix, ConnectivityStatus::Present))
    }
}

/// Aggregates a network file (`target source weight` rows) by area.
pub fn read_network<R: BufRead>(mut reader: R, path: &Path, statics: &Statics) -> Result<AreaConnectivity> {
    let mut acc = ConnectivityAccumulator::new(statics);
    let mut buf = String::new();
    let mut line_no = 0;
    let mut consumed = 0;
    while next_line(&mut reader, &mut buf, path, &mut line_no, &mut consumed)? {
        let mut fields = buf.split_whitespace();
        let mut id = |name: &str| -> Result<u32> {
            let f = fields
                .next()
                .ok_or_else(|| Error::format(path, line_no, format!("missing {name}")))?;
            f.parse()
                .map_err(|_| Error::format(path, line_no, format!("bad {name} '{f}'")))
        };
        let target = id("target id")?;
        let source = id("source id")?;
        acc.push(target, source)
            .map_err(|e| Error::format(path, line_no, e.to_string()))?;
    }
    Ok(acc.finish())
}

fn zeroed_columns(n: usize) -> FrameColumns {
    FrameColumns {
        calcium: vec![0.0; n],
        calcium_target_delta: vec![0.0; n],
        fired: vec![false; n],
        fired_fraction: vec![0.0; n],
        grown_axons: vec![0.0; n],
        grown_dendrites: vec![0.0; n],
        synapses_out: vec![0; n],
        synapses_in: vec![0; n],
    }
}

fn store_rows(block: &mut [FrameColumns], neuron: usize, rows: &[MonitorRow]) {
    for (cols, row) in block.iter_mut().zip(rows) {
        cols.calcium[neuron] = row.calcium;
        cols.calcium_target_delta[neuron] = row.calcium - row.target;
        cols.fired[neuron] = row.fired;
        cols.grown_axons[neuron] = row.axons;
        cols.grown_dendrites[neuron] = row.dendrites;
        cols.synapses_in[neuron] = row.syn_in;
        cols.synapses_out[neuron] = row.syn_out;
    }
}

impl Iterator for ScenarioFrames<'_> {
    type Item = Result<TimestepFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pending.is_empty() && !self.finished {
            if let Err(e) = self.fill_block() {
                self.finished = true;
                self.pending.clear();
                return Some(Err(e));
            }
        }
        let (timestep, columns) = self.pending.pop_front()?;
        match self.connectivity(timestep) {
            Ok((connectivity, connectivity_status)) => Some(Ok(TimestepFrame {
                scenario: self.scenario,
                timestep,
                columns,
                connectivity,
                connectivity_status,
            })),
            Err(e) => {
                self.finished = true;
                self.pending.clear();
                Some(Err(e))
            }
        }
    }
}
