//! Seeded generator for raw datasets shaped like the real simulation output:
//! clusters of ten jittered neurons, calcium-driven synapse growth and decay,
//! and the four canonical scenarios.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MonitorRow, RawDatasetLayout, MONITOR_HEADER};
use crate::error::{Error, Result};
use crate::model::{Scenario, CLUSTER_SIZE};

/// Per-axis offset of a neuron from its cluster location, in millimeters.
const JITTER_MM: f32 = 0.25;

/// Upper bound on the distance between two neurons of one cluster.
pub const SYNTH_JITTER_BOUND_MM: f64 = 2.0 * JITTER_MM as f64 * 1.732_050_807_568_877_3;

/// Area whose synapses are all removed at [`injury_step`] in the injury scenario.
pub const INJURED_AREA: u16 = 0;

const BRAIN_SEMI_AXES: [f32; 3] = [70.0, 85.0, 60.0];
const BASE_TARGET: f32 = 0.7;
const INITIAL_SYNAPSES_PER_NEURON: usize = 2;
const GROWTH_PROBABILITY: f64 = 0.03;
const DECAY_PROBABILITY: f64 = 0.01;
const OVERSHOOT_DECAY_PROBABILITY: f64 = 0.05;
const SAME_AREA_PROBABILITY: f64 = 0.7;
/// Monitor rows buffered per neuron before appending to its file.
const FLUSH_STEPS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_clusters: u32,
    pub n_areas: u16,
    pub n_timesteps: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clusters: 500,
            n_areas: 8,
            n_timesteps: 100,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn neuron_count(&self) -> u32 {
        self.n_clusters * CLUSTER_SIZE
    }

    fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_areas == 0 || self.n_timesteps == 0 {
            return Err(Error::Domain(
                "clusters, areas and timesteps must all be at least 1".into(),
            ));
        }
        if self.n_areas as u32 > self.n_clusters {
            return Err(Error::Domain(format!(
                "{} areas cannot all be populated by {} clusters",
                self.n_areas, self.n_clusters
            )));
        }
        Ok(())
    }
}

/// Output step at which the injury scenario loses [`INJURED_AREA`]'s synapses.
pub fn injury_step(n_timesteps: u32) -> u32 {
    n_timesteps / 2
}

fn scenario_seed(seed: u64, scenario: Scenario) -> u64 {
    seed ^ (scenario.code() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn inside_brain(rng: &mut ChaCha8Rng) -> [f32; 3] {
    loop {
        let u: [f32; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if u.iter().map(|x| x * x).sum::<f32>() <= 1.0 {
            return [
                u[0] * BRAIN_SEMI_AXES[0],
                u[1] * BRAIN_SEMI_AXES[1],
                u[2] * BRAIN_SEMI_AXES[2],
            ];
        }
    }
}

fn dist2(a: [f32; 3], b: [f32; 3]) -> f32 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Writes a complete raw dataset for all four scenarios under `root`.
///
/// The tree is a pure function of `config`: the same seed gives byte-identical files.
pub fn generate_synthetic(root: &Path, config: &SynthConfig) -> Result<RawDatasetLayout> {
    generate_synthetic_scenarios(root, config, &Scenario::ALL)
}

/// Like [`generate_synthetic`] but only writes `scenarios`. Each scenario has
/// its own random stream, so its files match those of a full run.
pub fn generate_synthetic_scenarios(
    root: &Path,
    config: &SynthConfig,
    scenarios: &[Scenario],
) -> Result<RawDatasetLayout> {
    config.validate()?;
    io(root, fs::create_dir_all(root))?;
    let layout = RawDatasetLayout::new(root);
    let areas = write_positions(&layout, config)?;
    for scenario in Scenario::ALL.into_iter().filter(|s| scenarios.contains(s)) {
        simulate_scenario(&layout, config, scenario, &areas)?;
    }
    Ok(layout)
}

/// Returns the area of every neuron.
fn write_positions(layout: &RawDatasetLayout, config: &SynthConfig) -> Result<Vec<u16>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers: Vec<[f32; 3]> = (0..config.n_areas).map(|_| inside_brain(&mut rng)).collect();

    // the first n_areas clusters seed one area each so none is empty
    let mut cluster_area = Vec::with_capacity(config.n_clusters as usize);
    let mut locations = Vec::with_capacity(config.n_clusters as usize);
    for c in 0..config.n_clusters {
        let loc = if (c as usize) < centers.len() {
            centers[c as usize]
        } else {
            inside_brain(&mut rng)
        };
        let area = centers
            .iter()
            .enumerate()
            .min_by(|a, b| dist2(*a.1, loc).total_cmp(&dist2(*b.1, loc)))
            .map(|(i, _)| i as u16)
            .unwrap_or(0);
        cluster_area.push(area);
        locations.push(loc);
    }

    let path = layout.positions_path();
    let mut out = BufWriter::new(io(&path, File::create(&path))?);
    let mut areas = Vec::with_capacity(config.neuron_count() as usize);
    for (c, (loc, area)) in locations.iter().zip(&cluster_area).enumerate() {
        for slot in 0..CLUSTER_SIZE {
            let id = c as u32 * CLUSTER_SIZE + slot;
            let p: Vec<f32> = loc
                .iter()
                .map(|x| x + rng.random_range(-JITTER_MM..=JITTER_MM))
                .collect();
            io(&path, writeln!(out, "{id} {} {} {} area_{area}", p[0], p[1], p[2]))?;
            areas.push(*area);
        }
    }
    io(&path, out.flush())?;
    Ok(areas)
}

struct NeuronState {
    calcium: f32,
    target: f32,
    axons: f32,
    dendrites: f32,
}

fn pick_partner(rng: &mut ChaCha8Rng, own_area: u16, by_area: &[Vec<u32>], n: u32) -> u32 {
    let same = &by_area[own_area as usize];
    if rng.random_bool(SAME_AREA_PROBABILITY) && !same.is_empty() {
        same[rng.random_range(0..same.len())]
    } else {
        rng.random_range(0..n)
    }
}

fn simulate_scenario(
    layout: &RawDatasetLayout,
    config: &SynthConfig,
    scenario: Scenario,
    areas: &[u16],
) -> Result<()> {
    let n = config.neuron_count();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(config.seed, scenario));
    let mut by_area: Vec<Vec<u32>> = vec![Vec::new(); config.n_areas as usize];
    for (id, a) in areas.iter().enumerate() {
        by_area[*a as usize].push(id as u32);
    }

    let neurons_dir = layout.scenario_dir(scenario).join("neurons");
    let network_dir = layout.scenario_dir(scenario).join("network");
    io(&neurons_dir, fs::create_dir_all(&neurons_dir))?;
    io(&network_dir, fs::create_dir_all(&network_dir))?;

    let mut state: Vec<NeuronState> = (0..n)
        .map(|_| NeuronState {
            calcium: rng.random_range(0.05..0.3),
            target: match scenario {
                Scenario::CalciumTargets => rng.random_range(0.5..0.9),
                _ => BASE_TARGET,
            },
            axons: rng.random_range(0.0..2.0),
            dendrites: rng.random_range(0.0..2.0),
        })
        .collect();

    // (target, source)
    let mut synapses: Vec<(u32, u32)> = Vec::new();
    if scenario != Scenario::NoInitialConnectivity {
        for _ in 0..n as usize * INITIAL_SYNAPSES_PER_NEURON {
            let source = rng.random_range(0..n);
            let target = pick_partner(&mut rng, areas[source as usize], &by_area, n);
            synapses.push((target, source));
        }
    }

    let mut buffers: Vec<String> = (0..n).map(|_| format!("{MONITOR_HEADER}\n")).collect();
    let mut created = vec![false; n as usize];
    let injury_at = injury_step(config.n_timesteps);

    for step in 0..config.n_timesteps {
        if scenario == Scenario::Injury && step == injury_at {
            synapses.retain(|(t, s)| {
                areas[*t as usize] != INJURED_AREA && areas[*s as usize] != INJURED_AREA
            });
            for &id in &by_area[INJURED_AREA as usize] {
                let st = &mut state[id as usize];
                st.axons = 0.0;
                st.dendrites = 0.0;
            }
        }

        let mut syn_in = vec![0u32; n as usize];
        let mut syn_out = vec![0u32; n as usize];
        for &(t, s) in &synapses {
            syn_in[t as usize] += 1;
            syn_out[s as usize] += 1;
        }

        for (id, st) in state.iter_mut().enumerate() {
            let p_fire = (0.05 + 0.2 * syn_in[id] as f64).min(0.9);
            let fired = rng.random_bool(p_fire);
            st.calcium = (st.calcium * 0.95
                + if fired { 0.06 } else { 0.0 }
                + rng.random_range(-0.005..0.005))
            .max(0.0);
            let drive = st.target - st.calcium;
            st.axons = (st.axons + 0.05 * drive + rng.random_range(-0.01..0.01)).max(0.0);
            st.dendrites = (st.dendrites + 0.05 * drive + rng.random_range(-0.01..0.01)).max(0.0);

            let row = MonitorRow {
                step,
                fired,
                calcium: st.calcium,
                target: st.target,
                axons: st.axons,
                dendrites: st.dendrites,
                syn_in: syn_in[id],
                syn_out: syn_out[id],
            };
            let buf = &mut buffers[id];
            buf.push_str(&row.format());
            buf.push('\n');
        }

        let path = network_dir.join(format!("step_{step}.txt"));
        let mut out = BufWriter::new(io(&path, File::create(&path))?);
        for (t, s) in &synapses {
            io(&path, writeln!(out, "{t} {s} 1"))?;
        }
        io(&path, out.flush())?;

        // plasticity for the next step
        synapses.retain(|(_, s)| {
            let st = &state[*s as usize];
            let p = if st.calcium > st.target + 0.05 {
                DECAY_PROBABILITY + OVERSHOOT_DECAY_PROBABILITY
            } else {
                DECAY_PROBABILITY
            };
            !rng.random_bool(p)
        });
        for id in 0..n {
            let st = &state[id as usize];
            if st.calcium < st.target && rng.random_bool(GROWTH_PROBABILITY) {
                let target = pick_partner(&mut rng, areas[id as usize], &by_area, n);
                synapses.push((target, id));
            }
        }

        let last = step + 1 == config.n_timesteps;
        if last || (step as usize + 1) % FLUSH_STEPS == 0 {
            for (id, buf) in buffers.iter_mut().enumerate() {
                let path = neurons_dir.join(format!("{id}.csv"));
                let mut f = if created[id] {
                    io(&path, OpenOptions::new().append(true).open(&path))?
                } else {
                    created[id] = true;
                    io(&path, File::create(&path))?
                };
                io(&path, f.write_all(buf.as_bytes()))?;
                buf.clear();
            }
        }
    }
    Ok(())
}
