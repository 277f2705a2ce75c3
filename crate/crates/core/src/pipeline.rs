//! Raw dataset to frame store, scenario by scenario.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use tracing::info;

use crate::aggregate::{area_range, RangeAccumulator};
use crate::error::{Error, Result};
use crate::ingest::{
    parse_positions, transpose_scenario_with, IngestWarning, RawDatasetLayout, TransposeOptions,
};
use crate::model::{NeuronProperty, Scenario, ScenarioCatalog, ScenarioEntry, Statics};
use crate::store::FrameStore;

#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    /// `None` processes every scenario present in the input.
    pub scenarios: Option<Vec<Scenario>>,
    /// Scenarios processed concurrently; 0 means one per available core.
    pub jobs: usize,
    pub transpose: TransposeOptions,
}

#[derive(Debug, Clone)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub frames: usize,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Debug, Clone)]
pub struct PreprocessSummary {
    pub scenarios: Vec<ScenarioSummary>,
    /// Includes the positions file.
    pub bytes_in: u64,
    /// Includes statics and catalog.
    pub bytes_out: u64,
}

impl PreprocessSummary {
    pub fn frames_written(&self) -> usize {
        self.scenarios.iter().map(|s| s.frames).sum()
    }

    /// Output size over input size.
    pub fn compression_ratio(&self) -> f64 {
        if self.bytes_in == 0 {
            0.0
        } else {
            self.bytes_out as f64 / self.bytes_in as f64
        }
    }
}

fn tree_size(path: &Path) -> Result<u64> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(meta.len());
    }
    let mut total = 0;
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        total += tree_size(&entry.path())?;
    }
    Ok(total)
}

fn file_size(path: &Path) -> Result<u64> {
    fs::metadata(path).map(|m| m.len()).map_err(|e| Error::io(path, e))
}

struct ScenarioResult {
    summary: ScenarioSummary,
    entry: ScenarioEntry,
    ranges: RangeAccumulator,
}

fn process_scenario(
    layout: &RawDatasetLayout,
    statics: &Statics,
    store: &FrameStore,
    scenario: Scenario,
    transpose: TransposeOptions,
) -> Result<ScenarioResult> {
    let mut stream = transpose_scenario_with(layout, statics, scenario, transpose);
    let mut ranges = RangeAccumulator::default();
    let mut timesteps = Vec::new();
    let mut bytes_out = 0;
    for frame in stream.by_ref() {
        let frame = frame?;
        ranges.push(&frame)?;
        let locator = store.write_frame(&frame)?;
        bytes_out += locator.stored_bytes()?;
        timesteps.push(frame.timestep);
    }
    info!(%scenario, frames = timesteps.len(), bytes_out, "scenario written");
    Ok(ScenarioResult {
        summary: ScenarioSummary {
            scenario,
            frames: timesteps.len(),
            bytes_in: tree_size(&layout.scenario_dir(scenario))?,
            bytes_out,
            warnings: stream.warnings().to_vec(),
        },
        entry: ScenarioEntry {
            id: scenario,
            name: scenario.display_name().to_string(),
            timesteps,
        },
        ranges,
    })
}

/// Transposes every selected scenario into `output` and writes the catalog.
///
/// When `output` already has a catalog for the same neuron table, scenarios
/// not processed in this run are kept in it.
pub fn preprocess(input: &Path, output: &Path, options: &PreprocessOptions) -> Result<PreprocessSummary> {
    let layout = RawDatasetLayout::new(input);
    let statics = parse_positions(&layout.positions_path())?;
    let present = layout.scenarios();
    let selected = match &options.scenarios {
        None => present.clone(),
        Some(wanted) => {
            if let Some(missing) = wanted.iter().find(|s| !present.contains(s)) {
                return Err(Error::NotFound(format!(
                    "scenario {missing} has no directory under {}",
                    input.display()
                )));
            }
            Scenario::ALL.into_iter().filter(|s| wanted.contains(s)).collect()
        }
    };

    let store = FrameStore::new(output);
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    store.write_statics(&statics)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let results: Vec<ScenarioResult> = pool.install(|| {
        selected
            .par_iter()
            .map(|s| process_scenario(&layout, &statics, &store, *s, options.transpose))
            .collect::<Result<_>>()
    })?;

    let mut catalog = match store.read_catalog() {
        Ok(c) if c.neuron_count as usize == statics.len() && c.area_table == statics.areas => c,
        _ => ScenarioCatalog::default(),
    };
    catalog.neuron_count = statics.len() as u32;
    catalog.area_table = statics.areas.clone();
    let areas = area_range(&statics).ok();
    for r in &results {
        catalog.scenarios.retain(|e| e.id != r.entry.id);
        catalog.scenarios.push(r.entry.clone());
        let ranges = catalog.global_ranges.entry(r.entry.id).or_default();
        ranges.clear();
        if let Some(a) = areas {
            ranges.insert(NeuronProperty::Area, a);
        }
        for p in NeuronProperty::COLUMNS {
            if let Some(range) = r.ranges.get(p) {
                ranges.insert(p, range);
            }
        }
    }
    catalog.scenarios.sort_by_key(|e| e.id);
    store.write_catalog(&catalog)?;

    let scenarios: Vec<ScenarioSummary> = results.into_iter().map(|r| r.summary).collect();
    let bytes_in = file_size(&layout.positions_path())?
        + scenarios.iter().map(|s| s.bytes_in).sum::<u64>();
    let bytes_out = file_size(&store.statics_path())?
        + file_size(&store.catalog_path())?
        + scenarios.iter().map(|s| s.bytes_out).sum::<u64>();
    Ok(PreprocessSummary {
        scenarios,
        bytes_in,
        bytes_out,
    })
}
