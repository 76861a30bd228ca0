//! Brute-force reference values for small instances.
//!
//! The oracle minimizes `I(X; U | Y)` over channels on the candidate-recovery
//! alphabet under the hard constraint `E[d] <= D`. It shares no iteration
//! code with the solver: it runs projected gradient descent with an exact
//! Euclidean projection onto the feasible set (a product of simplices cut by
//! the distortion halfspace) and entropic mirror descent with a KL projection
//! onto the same set, each from many random starts, and adds a zooming grid
//! search when the reduced problem has at most three free parameters.
//! The objective is evaluated as `H(U|Y) - H(U|X)`.
//!
//! Before searching, every recovery component that is optimal for all source
//! symbols co-occurring with its `y` is fixed to that value. Replacing a
//! component by such a value never raises the distortion, and merging atoms
//! never raises the rate, so the restriction loses nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{enumerate_candidate_recoveries, recovery_count, CandidateRecovery, EnumerationCaps};
use crate::info::{conditional_mutual_information, expected_distortion};
use crate::model::{zero_rate_distortion, ProblemSpec};
use crate::solver::RDPoint;

/// Slack on the distortion constraint when judging feasibility.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Largest allowed `|solver - oracle|` in bits.
pub const RATE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Final cell width of the grid search.
    pub grid_resolution: f64,
    /// Starts for the Euclidean projected-gradient search.
    pub random_restarts: usize,
    /// Starts for the entropic mirror-descent search.
    pub mirror_restarts: usize,
    pub rng_seed: u64,
    /// Cap on `|X| * |Zhat|^|Y|`.
    pub max_alphabet_product: usize,
    /// Iterations per restart.
    pub descent_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 1e-3,
            random_restarts: 256,
            mirror_restarts: 16,
            rng_seed: 0x0AC1E,
            max_alphabet_product: 64,
            descent_iters: 1500,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 0.5) {
            return Err(Error::InvalidConfig("grid_resolution must be in (0, 0.5]".into()));
        }
        if self.random_restarts + self.mirror_restarts == 0 || self.max_alphabet_product == 0 || self.descent_iters == 0
        {
            return Err(Error::InvalidConfig("oracle caps and counts must be positive".into()));
        }
        Ok(())
    }
}

/// The reduced search problem: `nx` columns of `atoms` probabilities each,
/// stored column-major (`x * atoms + u`).
struct Search<'a> {
    spec: &'a ProblemSpec,
    atoms: usize,
    /// `sum_y p(x, y) d(f(x, y), zhat_u(y))` per entry.
    cost: Vec<f64>,
    budget: f64,
}

impl<'a> Search<'a> {
    fn new(spec: &'a ProblemSpec, recoveries: &[CandidateRecovery], budget: f64) -> Self {
        let atoms = recoveries.len();
        let mut cost = vec![0.0; spec.nx() * atoms];
        for x in 0..spec.nx() {
            for (u, r) in recoveries.iter().enumerate() {
                cost[x * atoms + u] = (0..spec.ny()).map(|y| spec.p(x, y) * spec.loss(x, y, r.at(y))).sum();
            }
        }
        Self {
            spec,
            atoms,
            cost,
            budget,
        }
    }

    fn len(&self) -> usize {
        self.cost.len()
    }

    fn distortion(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.cost).map(|(a, b)| a * b).sum()
    }

    /// `q(u|y)` as a `y * atoms + u` vector.
    fn posterior(&self, c: &[f64]) -> Vec<f64> {
        let (nx, ny, a) = (self.spec.nx(), self.spec.ny(), self.atoms);
        let mut q = vec![0.0; ny * a];
        for y in 0..ny {
            for x in 0..nx {
                let w = self.spec.p_x_given_y(x, y);
                if w > 0.0 {
                    for u in 0..a {
                        q[y * a + u] += w * c[x * a + u];
                    }
                }
            }
        }
        q
    }

    /// `H(U|Y) - H(U|X)` in bits.
    fn rate(&self, c: &[f64]) -> f64 {
        let q = self.posterior(c);
        let a = self.atoms;
        let mut h_u_y = 0.0;
        for y in 0..self.spec.ny() {
            let py = self.spec.p_y(y);
            h_u_y += py * q[y * a..(y + 1) * a].iter().map(|&v| neg_xlog2x(v)).sum::<f64>();
        }
        let mut h_u_x = 0.0;
        for x in 0..self.spec.nx() {
            h_u_x += self.spec.p_x(x) * c[x * a..(x + 1) * a].iter().map(|&v| neg_xlog2x(v)).sum::<f64>();
        }
        (h_u_y - h_u_x).max(0.0)
    }

    fn gradient(&self, c: &[f64], out: &mut [f64]) {
        const FLOOR: f64 = 1e-300;
        let q = self.posterior(c);
        let a = self.atoms;
        for x in 0..self.spec.nx() {
            let px = self.spec.p_x(x);
            for u in 0..a {
                let mut g = px * c[x * a + u].max(FLOOR).log2();
                for y in 0..self.spec.ny() {
                    let pxy = self.spec.p(x, y);
                    if pxy > 0.0 {
                        g -= pxy * q[y * a + u].max(FLOOR).log2();
                    }
                }
                out[x * a + u] = g;
            }
        }
    }

    /// Smallest achievable distortion; the feasible set is empty below it.
    fn min_distortion(&self) -> f64 {
        self.cost
            .chunks(self.atoms)
            .map(|col| col.iter().copied().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// Euclidean projection onto {columns in the simplex, distortion <= budget}.
    /// The halfspace is handled through its multiplier, found by bisection.
    fn project(&self, v: &[f64], out: &mut [f64]) {
        let a = self.atoms;
        let project_shifted = |mu: f64, out: &mut [f64]| {
            for (x, col) in out.chunks_mut(a).enumerate() {
                for u in 0..a {
                    col[u] = v[x * a + u] - mu * self.cost[x * a + u];
                }
                project_simplex(col);
            }
        };
        project_shifted(0.0, out);
        if self.distortion(out) <= self.budget {
            return;
        }
        let mut hi = 1.0;
        loop {
            project_shifted(hi, out);
            if self.distortion(out) <= self.budget || hi > 1e300 {
                break;
            }
            hi *= 4.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            project_shifted(mid, out);
            if self.distortion(out) <= self.budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        project_shifted(hi, out);
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a = self.atoms;
        let sparse = rng.random_bool(0.5);
        let mut v = vec![0.0; self.len()];
        for col in v.chunks_mut(a) {
            for e in col.iter_mut() {
                // exponential variates give a uniform point on the simplex
                let r: f64 = rng.random();
                *e = -(1.0 - r).ln();
                if sparse && rng.random_bool(0.5) {
                    *e = 0.0;
                }
            }
            let s: f64 = col.iter().sum();
            if s > 0.0 {
                col.iter_mut().for_each(|e| *e /= s);
            } else {
                col[rng.random_range(0..a)] = 1.0;
            }
        }
        let mut out = vec![0.0; self.len()];
        self.project(&v, &mut out);
        out
    }

    /// Projected gradient descent with backtracking.
    fn descend(&self, start: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
        let n = self.len();
        let mut c = start;
        let mut value = self.rate(&c);
        let mut grad = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut shifted = vec![0.0; n];
        let mut step = 1.0;
        for _ in 0..iters {
            self.gradient(&c, &mut grad);
            let mut accepted = false;
            let mut moved = 0.0;
            while step > 1e-18 {
                for i in 0..n {
                    shifted[i] = c[i] - step * grad[i];
                }
                self.project(&shifted, &mut trial);
                let mut linear = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    let d = trial[i] - c[i];
                    linear += grad[i] * d;
                    sq += d * d;
                }
                let next = self.rate(&trial);
                if next <= value + linear + sq / (2.0 * step) + 1e-15 {
                    accepted = next <= value;
                    moved = sq.sqrt();
                    if accepted {
                        std::mem::swap(&mut c, &mut trial);
                        value = next;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted || moved < 1e-13 {
                break;
            }
            step *= 2.0;
        }
        (value, c)
    }

    /// `out[x, u] ∝ c[x, u] exp(-eta g[x, u] - mu cost[x, u])` per column, with
    /// the smallest `mu >= 0` meeting the budget: the entropic step followed by
    /// the KL projection onto the distortion halfspace.
    fn tilt(&self, c: &[f64], g: &[f64], eta: f64, out: &mut [f64]) {
        let a = self.atoms;
        let tilted = |mu: f64, out: &mut [f64]| {
            for (x, col) in out.chunks_mut(a).enumerate() {
                let base = x * a;
                let mut top = f64::NEG_INFINITY;
                for u in 0..a {
                    col[u] = if c[base + u] > 0.0 {
                        c[base + u].ln() - eta * g[base + u] - mu * self.cost[base + u]
                    } else {
                        f64::NEG_INFINITY
                    };
                    top = top.max(col[u]);
                }
                let mut total = 0.0;
                for e in col.iter_mut() {
                    *e = (*e - top).exp();
                    total += *e;
                }
                col.iter_mut().for_each(|e| *e /= total);
            }
        };
        tilted(0.0, out);
        if self.distortion(out) <= self.budget {
            return;
        }
        let mut hi = 1.0;
        loop {
            tilted(hi, out);
            if self.distortion(out) <= self.budget || hi > 1e300 {
                break;
            }
            hi *= 4.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            tilted(mid, out);
            if self.distortion(out) <= self.budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        tilted(hi, out);
    }

    /// Dense random start, KL-projected onto the feasible set.
    fn interior_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.len())
            .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-6)
            .collect();
        for col in v.chunks_mut(self.atoms) {
            let s: f64 = col.iter().sum();
            col.iter_mut().for_each(|e| *e /= s);
        }
        let mut out = vec![0.0; self.len()];
        self.tilt(&v, &vec![0.0; self.len()], 0.0, &mut out);
        out
    }

    /// Entropic mirror descent with backtracking on the step size. Unlike the
    /// Euclidean method it does not stall when entries approach zero.
    fn mirror_descend(&self, start: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
        let n = self.len();
        let mut c = start;
        let mut value = self.rate(&c);
        let mut grad = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut eta = 1.0;
        let mut stalled = 0;
        for _ in 0..iters {
            self.gradient(&c, &mut grad);
            loop {
                self.tilt(&c, &grad, eta, &mut trial);
                let mut linear = 0.0;
                let mut kl = 0.0;
                for i in 0..n {
                    linear += grad[i] * (trial[i] - c[i]);
                    if trial[i] > 0.0 {
                        kl += trial[i] * (trial[i] / c[i]).ln();
                    }
                }
                let next = self.rate(&trial);
                if next <= value + linear + kl / eta + 1e-15 || eta < 1e-12 {
                    if next <= value {
                        stalled = if value - next < 1e-15 { stalled + 1 } else { 0 };
                        std::mem::swap(&mut c, &mut trial);
                        value = next;
                    } else {
                        stalled += 1;
                    }
                    break;
                }
                eta *= 0.5;
            }
            if stalled >= 20 {
                break;
            }
            eta *= 2.0;
        }
        (value, c)
    }

    /// Zooming grid over two-atom problems, one free parameter per source
    /// symbol. Returns the best feasible rate found.
    fn grid(&self, resolution: f64) -> Option<f64> {
        debug_assert_eq!(self.atoms, 2);
        let n = self.spec.nx();
        let mut lo = vec![0.0; n];
        let mut hi = vec![1.0; n];
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut points = if n <= 2 { 201 } else { 41 };
        loop {
            let h: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| (u - l) / (points - 1) as f64).collect();
            let mut idx = vec![0usize; n];
            let mut c = vec![0.0; 2 * n];
            let mut round_best: Option<(f64, Vec<f64>)> = None;
            loop {
                let p: Vec<f64> = (0..n).map(|x| lo[x] + h[x] * idx[x] as f64).collect();
                for x in 0..n {
                    c[2 * x] = p[x];
                    c[2 * x + 1] = 1.0 - p[x];
                }
                if self.distortion(&c) <= self.budget + FEASIBILITY_SLACK {
                    let r = self.rate(&c);
                    if round_best.as_ref().is_none_or(|b| r < b.0) {
                        round_best = Some((r, p));
                    }
                }
                let mut k = 0;
                loop {
                    if k == n {
                        break;
                    }
                    idx[k] += 1;
                    if idx[k] < points {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }
            let Some((r, p)) = round_best else {
                break;
            };
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, p.clone()));
            }
            if h.iter().all(|&w| w <= resolution) {
                break;
            }
            for x in 0..n {
                lo[x] = (p[x] - 2.0 * h[x]).max(0.0);
                hi[x] = (p[x] + 2.0 * h[x]).min(1.0);
            }
            points = 21;
        }
        best.map(|b| b.0)
    }
}

fn neg_xlog2x(v: f64) -> f64 {
    if v > 0.0 {
        -v * v.log2()
    } else {
        0.0
    }
}

/// In-place Euclidean projection onto the probability simplex (sort and
/// threshold).
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for e in v.iter_mut() {
        *e = (*e - theta).max(0.0);
    }
}

/// Recoveries with every forced component pinned.
fn reduced_recoveries(spec: &ProblemSpec, caps: &EnumerationCaps) -> Result<Vec<CandidateRecovery>> {
    let forced: Vec<Option<usize>> = (0..spec.ny())
        .map(|y| {
            if spec.p_y(y) <= 0.0 {
                return Some(0);
            }
            (0..spec.nzhat()).find(|&zhat| {
                (0..spec.nx()).filter(|&x| spec.p(x, y) > 0.0).all(|x| {
                    let best = (0..spec.nzhat())
                        .map(|z| spec.loss(x, y, z))
                        .fold(f64::INFINITY, f64::min);
                    spec.loss(x, y, zhat) <= best
                })
            })
        })
        .collect();
    Ok(enumerate_candidate_recoveries(spec, caps)?
        .into_iter()
        .filter(|r| forced.iter().enumerate().all(|(y, f)| f.is_none_or(|z| r.at(y) == z)))
        .collect())
}

/// Reference value of `R(D)` for small instances.
pub fn brute_force_rd(spec: &ProblemSpec, distortion: f64, cfg: &OracleConfig) -> Result<f64> {
    cfg.validate()?;
    if distortion.is_nan() || distortion < 0.0 {
        return Err(Error::Domain(format!("distortion must be >= 0, got {distortion}")));
    }
    let product = recovery_count(spec).saturating_mul(spec.nx() as u128);
    if product > cfg.max_alphabet_product as u128 {
        return Err(Error::InstanceTooLarge {
            product: usize::try_from(product).unwrap_or(usize::MAX),
            cap: cfg.max_alphabet_product,
        });
    }
    if distortion >= zero_rate_distortion(spec) {
        return Ok(0.0);
    }
    let caps = EnumerationCaps {
        max_recoveries: usize::MAX,
        ..Default::default()
    };
    let recoveries = reduced_recoveries(spec, &caps)?;
    let search = Search::new(spec, &recoveries, distortion);
    if search.min_distortion() > distortion + FEASIBILITY_SLACK {
        let x = (0..spec.nx()).next().unwrap_or(0);
        return Err(Error::Infeasible { x });
    }
    if recoveries.len() == 1 {
        return Ok(0.0);
    }

    let descents: Vec<f64> = (0..cfg.random_restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(k as u64);
            let start = search.random_start(&mut rng);
            let (value, c) = search.descend(start, cfg.descent_iters);
            if search.distortion(&c) <= distortion + FEASIBILITY_SLACK {
                value
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut best = descents.into_iter().fold(f64::INFINITY, f64::min);

    let mirrored: Vec<f64> = (0..cfg.mirror_restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x4D49_5252);
            rng.set_stream(k as u64);
            let start = search.interior_start(&mut rng);
            let (value, c) = search.mirror_descend(start, cfg.descent_iters);
            if search.distortion(&c) <= distortion + FEASIBILITY_SLACK {
                value
            } else {
                f64::INFINITY
            }
        })
        .collect();
    best = mirrored.into_iter().fold(best, f64::min);

    let free = spec.nx() * (recoveries.len() - 1);
    if free <= 3 && recoveries.len() == 2 {
        if let Some(g) = search.grid(cfg.grid_resolution) {
            best = best.min(g);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible { x: 0 })
    }
}

/// Solver-versus-oracle comparison for one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Distortion recorded in the point.
    pub reported_distortion: f64,
    /// Distortion recomputed from the channel and decoder.
    pub achieved_distortion: f64,
    /// `I(X; U | Y)` recomputed from the channel.
    pub solver_rate: f64,
    pub oracle_rate: f64,
    /// `solver_rate - oracle_rate`.
    pub gap: f64,
    pub column_sum_residual: f64,
    pub distortion_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Recomputes the point's rate and distortion and compares the rate with the
/// oracle at the achieved distortion.
pub fn verify_point(spec: &ProblemSpec, point: &RDPoint, cfg: &OracleConfig) -> Result<VerificationReport> {
    let achieved = expected_distortion(spec, &point.channel, &point.decoder)?;
    let solver_rate = conditional_mutual_information(spec, &point.channel)?;
    let oracle_rate = brute_force_rd(spec, achieved, cfg)?;
    let gap = solver_rate - oracle_rate;
    let column_sum_residual = point.channel.column_sum_residual();
    let distortion_residual = (achieved - point.distortion).abs();
    let passed = gap.abs() <= RATE_TOLERANCE && column_sum_residual <= 1e-9 && distortion_residual <= 1e-6;
    Ok(VerificationReport {
        reported_distortion: point.distortion,
        achieved_distortion: achieved,
        solver_rate,
        oracle_rate,
        gap,
        column_sum_residual,
        distortion_residual,
        tolerance: RATE_TOLERANCE,
        passed,
    })
}
