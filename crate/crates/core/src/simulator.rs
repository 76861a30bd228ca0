//! Monte-Carlo execution of the single-letter scheme induced by a channel
//! over multi-hyperedges.
//!
//! Each sample draws `(x, y)` from the joint law, encodes `x` into a
//! multi-hyperedge `(w, zhat_Y)` with probability `p(w~|x)`, and decodes by
//! reading the recovery component at `y`. Only the distortion side is
//! exercised; the rate needs block coding and is not simulated.
//!
//! Samples are split into chunks of [`CHUNK_SAMPLES`]. Chunk `k` draws from
//! ChaCha8 seeded with `seed` on stream `k`, so results depend only on
//! `(spec, channel, n, seed)` and not on how many threads run the chunks.
//! Draws use inverse-CDF lookup over `(x, y)` in row-major order and over
//! atoms in channel order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{expected_distortion, AuxChannel};
use crate::model::ProblemSpec;

pub const CHUNK_SAMPLES: usize = 1 << 16;

pub const GENERATOR: &str = "ChaCha8 (rand_chacha), seed_from_u64(seed), stream = chunk index";

pub const SCOPE_NOTE: &str = "distortion only: the rate of the scheme requires block binning and is not simulated";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub empirical_distortion: f64,
    /// Analytic `E[d]` of the channel.
    pub target_distortion: f64,
    /// Sample standard deviation over `sqrt(n)`; `None` when `n = 1`.
    pub std_error: Option<f64>,
    /// Fraction of samples encoded into each atom.
    pub per_atom_frequency: Vec<f64>,
    /// Analytic `p(w~)` for comparison.
    pub atom_probability: Vec<f64>,
    pub rng_seed: u64,
    pub generator: String,
    pub note: String,
}

/// One simulated sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub x: usize,
    pub y: usize,
    pub atom: usize,
    pub zhat: usize,
    pub distortion: f64,
}

#[derive(Debug, Clone)]
struct ChunkStats {
    count: usize,
    mean: f64,
    m2: f64,
    atoms: Vec<u64>,
}

impl ChunkStats {
    fn new(atoms: usize) -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            atoms: vec![0; atoms],
        }
    }

    fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    fn merge(&mut self, other: &ChunkStats) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64) * (other.count as f64) / total as f64;
        self.count = total;
        for (a, b) in self.atoms.iter_mut().zip(&other.atoms) {
            *a += b;
        }
    }
}

struct Sampler<'a> {
    spec: &'a ProblemSpec,
    ch: &'a AuxChannel,
    cells: Vec<(usize, usize)>,
    cell_cdf: Vec<f64>,
    atom_cdf: Vec<Vec<f64>>,
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    weights
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Index of the first cumulative value exceeding `u * total`.
fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf.last().copied().unwrap_or(0.0);
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a ProblemSpec, ch: &'a AuxChannel) -> Result<Self> {
        ch.check_against(spec)?;
        for (u, label) in ch.labels().iter().enumerate() {
            if label.subset().is_none() {
                return Err(Error::UnannotatedChannel {
                    atom: u,
                    needed: "multi-hyperedge",
                });
            }
        }
        let cells: Vec<(usize, usize)> = (0..spec.nx())
            .flat_map(|x| (0..spec.ny()).map(move |y| (x, y)))
            .filter(|&(x, y)| spec.p(x, y) > 0.0)
            .collect();
        let cell_cdf = cumulative(cells.iter().map(|&(x, y)| spec.p(x, y)));
        let atom_cdf = (0..spec.nx())
            .map(|x| cumulative((0..ch.num_atoms()).map(|u| ch.prob(u, x))))
            .collect();
        Ok(Self {
            spec,
            ch,
            cells,
            cell_cdf,
            atom_cdf,
        })
    }

    fn run_chunk(
        &self,
        seed: u64,
        chunk: usize,
        range: std::ops::Range<usize>,
        mut record: impl FnMut(SampleRecord),
    ) -> Result<ChunkStats> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let mut stats = ChunkStats::new(self.ch.num_atoms());
        for sample in range {
            let (x, y) = self.cells[inverse_cdf(&self.cell_cdf, rng.random())];
            let atom = inverse_cdf(&self.atom_cdf[x], rng.random());
            let label = self.ch.label(atom);
            let edge = label.subset().expect("checked in constructor");
            if !edge.contains(x) {
                return Err(Error::MembershipViolation { sample, x, atom });
            }
            let zhat = label.recovery().expect("hyperedges carry recoveries").at(y);
            let distortion = self.spec.loss(x, y, zhat);
            stats.push(distortion);
            stats.atoms[atom] += 1;
            record(SampleRecord {
                x,
                y,
                atom,
                zhat,
                distortion,
            });
        }
        Ok(stats)
    }
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK_SAMPLES))
        .map(|k| k * CHUNK_SAMPLES..((k + 1) * CHUNK_SAMPLES).min(n))
        .collect()
}

fn report(
    spec: &ProblemSpec,
    ch: &AuxChannel,
    n: usize,
    seed: u64,
    chunks: Vec<ChunkStats>,
) -> Result<SimulationReport> {
    let mut total = ChunkStats::new(ch.num_atoms());
    for c in &chunks {
        total.merge(c);
    }
    let std_error = (n > 1).then(|| (total.m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt());
    Ok(SimulationReport {
        n,
        empirical_distortion: total.mean,
        target_distortion: expected_distortion(spec, ch, &ch.decoder()?)?,
        std_error,
        per_atom_frequency: total.atoms.iter().map(|&c| c as f64 / n as f64).collect(),
        atom_probability: ch.atom_mass(spec),
        rng_seed: seed,
        generator: GENERATOR.into(),
        note: SCOPE_NOTE.into(),
    })
}

/// Simulates `n` uses of the scheme described by `ch`.
pub fn simulate_scheme(spec: &ProblemSpec, ch: &AuxChannel, n: usize, seed: u64) -> Result<SimulationReport> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    let sampler = Sampler::new(spec, ch)?;
    let chunks = chunk_ranges(n)
        .into_par_iter()
        .enumerate()
        .map(|(k, range)| sampler.run_chunk(seed, k, range, |_| {}))
        .collect::<Result<Vec<_>>>()?;
    report(spec, ch, n, seed, chunks)
}

/// Same as [`simulate_scheme`], additionally writing one CSV line per sample
/// (`sample,x,y,atom,zhat,distortion`, symbols by label) to `trace`.
pub fn simulate_scheme_traced<W: Write>(
    spec: &ProblemSpec,
    ch: &AuxChannel,
    n: usize,
    seed: u64,
    trace: &mut W,
) -> Result<SimulationReport> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    let sampler = Sampler::new(spec, ch)?;
    let io_err = |e: std::io::Error| Error::Domain(format!("trace write failed: {e}"));
    writeln!(trace, "sample,x,y,atom,zhat,distortion").map_err(io_err)?;
    let mut chunks = Vec::new();
    let mut io_failure = None;
    for (k, range) in chunk_ranges(n).into_iter().enumerate() {
        let mut index = range.start;
        let stats = sampler.run_chunk(seed, k, range, |r| {
            if io_failure.is_none() {
                if let Err(e) = writeln!(
                    trace,
                    "{index},{},{},{},{},{}",
                    spec.x_alphabet().label(r.x),
                    spec.y_alphabet().label(r.y),
                    r.atom,
                    spec.zhat_alphabet().label(r.zhat),
                    r.distortion
                ) {
                    io_failure = Some(e);
                }
            }
            index += 1;
        })?;
        chunks.push(stats);
    }
    if let Some(e) = io_failure {
        return Err(io_err(e));
    }
    report(spec, ch, n, seed, chunks)
}
