//! Rate-distortion computation by alternating minimization.
//!
//! For a multiplier `lambda >= 0` the solver minimizes the Lagrangian
//! `I(X; U | Y) + lambda * E[d]` over channels `p(u|x)` whose atoms are
//! candidate recoveries (or multi-hyperedges, which add a support
//! constraint). With the posterior `q(u|y)` as the second block of
//! variables the objective splits into two closed-form updates:
//!
//! ```text
//! p(u|x) ∝ exp{ sum_y p(y|x) [ ln q(u|y) - lambda ln2 d(f(x,y), zhat_u(y)) ] }
//! q(u|y) = sum_x p(x|y) p(u|x)
//! ```
//!
//! and each step can only lower the Lagrangian. A target distortion is met by
//! bisecting `lambda` and time-sharing between the two bracketing solutions.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{
    enumerate_candidate_recoveries, enumerate_gamma_d, epsilon_distortion, induced_values, zero_ball_center,
    CandidateRecovery, EnumerationCaps, Hyperedge, MultiHyperedge,
};
use crate::info::{
    cmi_with_posterior, conditional_mutual_information, expected_distortion, posterior, AtomLabel, AuxChannel,
    DecoderMap,
};
use crate::model::{best_constant_recovery, zero_rate_distortion, ProblemSpec};

/// Atoms whose marginal drops below this are removed from the iteration.
pub const FREEZE_MASS: f64 = 1e-12;

/// How close the achieved distortion must be to a target before bisection stops.
pub const DISTORTION_TOLERANCE: f64 = 1e-6;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Distortion multiplier, in bits per unit of distortion.
    pub lambda: f64,
    /// Stop once one step lowers the Lagrangian by less than this (bits).
    pub tol_objective: f64,
    pub max_iters: usize,
    /// Relative jitter of the uniform starting channel.
    pub init_jitter: f64,
    pub rng_seed: u64,
    pub restarts: usize,
    pub caps: EnumerationCaps,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol_objective: 1e-10,
            max_iters: 200_000,
            init_jitter: 1e-3,
            rng_seed: DEFAULT_SEED,
            restarts: 8,
            caps: EnumerationCaps::default(),
        }
    }
}

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_240_601;

impl SolverConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.tol_objective.is_nan() || self.tol_objective <= 0.0 {
            return Err(Error::InvalidConfig("tol_objective must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.init_jitter) {
            return Err(Error::InvalidConfig("init_jitter must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Which auxiliary alphabet to optimize over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphabetMode {
    /// All candidate recoveries, with the distortion penalty.
    Recoveries,
    /// Members of the zero-distortion family, each with its zero-distortion
    /// recovery; the multiplier is ignored.
    GammaD,
    /// Like `GammaD`, built from the thresholded measure `1{d > eps}`.
    GammaEps(f64),
}

/// One point of the rate-distortion trade-off together with the channel that
/// achieves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub distortion: f64,
    /// `I(X; U | Y)` in bits.
    pub rate: f64,
    /// Multiplier the point was computed at; `None` for zero-distortion
    /// family solves, which have no distortion term.
    pub lambda: Option<f64>,
    pub channel: AuxChannel,
    pub decoder: DecoderMap,
    pub converged: bool,
    pub iterations: usize,
}

impl RDPoint {
    pub fn support_size(&self, spec: &ProblemSpec) -> usize {
        self.channel.support_size(spec)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RDCurve {
    /// Sorted by distortion.
    pub points: Vec<RDPoint>,
    /// Multipliers whose solve failed.
    pub failures: Vec<(f64, Error)>,
}

impl RDCurve {
    /// Rates never increase with distortion, up to `slack`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.points.windows(2).all(|w| w[1].rate <= w[0].rate + slack)
    }

    /// Largest amount by which a point lies above the chord of its
    /// neighbours; non-positive for a convex curve.
    pub fn max_convexity_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for w in self.points.windows(3) {
            let (d0, d1, d2) = (w[0].distortion, w[1].distortion, w[2].distortion);
            if d2 - d0 <= 1e-12 {
                continue;
            }
            let chord = w[0].rate + (w[2].rate - w[0].rate) * (d1 - d0) / (d2 - d0);
            worst = worst.max(w[1].rate - chord);
        }
        worst
    }
}

/// The program solved by the alternating steps: which atoms may receive
/// which source symbols and what each pairing costs.
struct Program<'a> {
    spec: &'a ProblemSpec,
    lambda: f64,
    /// `lambda ln2 sum_y p(y|x) d(f(x,y), zhat_u(y))`, in nats.
    penalty: Array2<f64>,
    admits: Array2<bool>,
    /// `(y, p(y|x))` for every `y` with `p(x, y) > 0`.
    side: Vec<Vec<(usize, f64)>>,
}

impl<'a> Program<'a> {
    fn new(spec: &'a ProblemSpec, labels: &[AtomLabel], lambda: f64) -> Result<Self> {
        let (atoms, nx) = (labels.len(), spec.nx());
        let side: Vec<Vec<(usize, f64)>> = (0..nx)
            .map(|x| {
                (0..spec.ny())
                    .filter(|&y| spec.p(x, y) > 0.0)
                    .map(|y| (y, spec.p_y_given_x(x, y)))
                    .collect()
            })
            .collect();
        let mut penalty = Array2::zeros((atoms, nx));
        if lambda > 0.0 {
            for (u, label) in labels.iter().enumerate() {
                let r = label.recovery().ok_or(Error::UnannotatedChannel {
                    atom: u,
                    needed: "candidate recovery",
                })?;
                for x in 0..nx {
                    let expected: f64 = side[x].iter().map(|&(y, w)| w * spec.loss(x, y, r.at(y))).sum();
                    penalty[[u, x]] = lambda * std::f64::consts::LN_2 * expected;
                }
            }
        }
        let admits = Array2::from_shape_fn((atoms, nx), |(u, x)| labels[u].admits(x));
        Ok(Self {
            spec,
            lambda,
            penalty,
            admits,
            side,
        })
    }

    fn lagrangian(&self, ch: &AuxChannel, q: &Array2<f64>) -> f64 {
        let rate = cmi_with_posterior(self.spec, ch, q);
        if self.lambda > 0.0 {
            rate + self.lambda * self.mean_distortion(ch)
        } else {
            rate
        }
    }

    /// `E[d]` from the precomputed penalty table.
    fn mean_distortion(&self, ch: &AuxChannel) -> f64 {
        let scale = self.lambda * std::f64::consts::LN_2;
        let mut total = 0.0;
        for x in 0..self.spec.nx() {
            for u in 0..ch.num_atoms() {
                total += self.spec.p_x(x) * ch.prob(u, x) * self.penalty[[u, x]];
            }
        }
        total / scale
    }

    /// One channel update followed by the posterior update.
    fn step(&self, ch: &mut AuxChannel, q: &mut Array2<f64>) -> Result<()> {
        let atoms = ch.num_atoms();
        let log_q = q.mapv(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY });
        let mut weights = vec![0.0; atoms];
        let cond = ch.cond_mut();
        for x in 0..self.spec.nx() {
            let mut best = f64::NEG_INFINITY;
            for u in 0..atoms {
                let mut s = f64::NEG_INFINITY;
                if self.admits[[u, x]] {
                    s = -self.penalty[[u, x]];
                    for &(y, w) in &self.side[x] {
                        let lq = log_q[[u, y]];
                        if lq == f64::NEG_INFINITY {
                            s = f64::NEG_INFINITY;
                            break;
                        }
                        s += w * lq;
                    }
                }
                weights[u] = s;
                best = best.max(s);
            }
            if best == f64::NEG_INFINITY {
                return Err(Error::NumericalUnderflow { x });
            }
            let mut total = 0.0;
            for wt in weights.iter_mut() {
                *wt = (*wt - best).exp();
                total += *wt;
            }
            for u in 0..atoms {
                cond[[u, x]] = weights[u] / total;
            }
        }
        *q = posterior(self.spec, ch);
        Ok(())
    }

    /// Zeroes atoms whose marginal is positive but below [`FREEZE_MASS`].
    /// Returns whether anything changed.
    fn freeze(&self, ch: &mut AuxChannel) -> bool {
        let mass = ch.atom_mass(self.spec);
        let doomed: Vec<usize> = (0..ch.num_atoms())
            .filter(|&u| mass[u] > 0.0 && mass[u] < FREEZE_MASS)
            .collect();
        if doomed.is_empty() {
            return false;
        }
        let mut trial = ch.clone();
        for &u in &doomed {
            trial.cond_mut().row_mut(u).fill(0.0);
        }
        if trial.normalize_columns().is_err() {
            return false;
        }
        *ch = trial;
        true
    }
}

struct Run {
    channel: AuxChannel,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn iterate(program: &Program<'_>, start: AuxChannel, cfg: &SolverConfig) -> Result<Run> {
    let mut ch = start;
    let mut q = posterior(program.spec, &ch);
    let mut objective = program.lagrangian(&ch, &q);
    for it in 1..=cfg.max_iters {
        program.step(&mut ch, &mut q)?;
        let froze = program.freeze(&mut ch);
        if froze {
            q = posterior(program.spec, &ch);
        }
        let next = program.lagrangian(&ch, &q);
        let decrease = objective - next;
        objective = next;
        if !froze && decrease < cfg.tol_objective {
            return Ok(Run {
                channel: ch,
                objective,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(Run {
        channel: ch,
        objective,
        iterations: cfg.max_iters,
        converged: false,
    })
}

/// Uniform over admitted atoms with multiplicative jitter, renormalized.
fn jittered_start(nx: usize, labels: &[AtomLabel], jitter: f64, rng: &mut ChaCha8Rng) -> Result<AuxChannel> {
    let cond = Array2::from_shape_fn((labels.len(), nx), |(u, x)| {
        let r: f64 = rng.random();
        if labels[u].admits(x) {
            1.0 + jitter * r
        } else {
            0.0
        }
    });
    let mut ch = AuxChannel::from_parts(cond, labels.to_vec());
    ch.normalize_columns()?;
    Ok(ch)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Runs `cfg.restarts` jittered starts and keeps the lowest Lagrangian,
/// breaking ties by restart index.
fn solve_restarts(spec: &ProblemSpec, labels: &[AtomLabel], lambda: f64, cfg: &SolverConfig) -> Result<Run> {
    let program = Program::new(spec, labels, lambda)?;
    let runs: Vec<Result<Run>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = restart_rng(cfg.rng_seed, k);
            let start = jittered_start(spec.nx(), labels, cfg.init_jitter, &mut rng)?;
            iterate(&program, start, cfg)
        })
        .collect();
    let mut best: Option<Run> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn point_from_run(spec: &ProblemSpec, run: Run, lambda: Option<f64>) -> Result<RDPoint> {
    point_from_channel(spec, run.channel, lambda, run.converged, run.iterations)
}

fn point_from_channel(
    spec: &ProblemSpec,
    channel: AuxChannel,
    lambda: Option<f64>,
    converged: bool,
    iterations: usize,
) -> Result<RDPoint> {
    let decoder = channel.decoder()?;
    Ok(RDPoint {
        distortion: expected_distortion(spec, &channel, &decoder)?,
        rate: conditional_mutual_information(spec, &channel)?,
        lambda,
        channel,
        decoder,
        converged,
        iterations,
    })
}

fn recovery_labels(spec: &ProblemSpec, caps: &EnumerationCaps) -> Result<Vec<AtomLabel>> {
    Ok(enumerate_candidate_recoveries(spec, caps)?
        .into_iter()
        .map(AtomLabel::Recovery)
        .collect())
}

/// Rate-zero point over `labels`: all mass on the best constant recovery.
fn zero_rate_point(spec: &ProblemSpec, labels: &[AtomLabel]) -> Result<RDPoint> {
    let best = CandidateRecovery(best_constant_recovery(spec));
    let index = labels
        .iter()
        .position(|l| l.recovery() == Some(&best))
        .ok_or_else(|| Error::InvalidChannel("alphabet lacks the best constant recovery".into()))?;
    let cond = Array2::from_shape_fn((labels.len(), spec.nx()), |(u, _)| if u == index { 1.0 } else { 0.0 });
    point_from_channel(spec, AuxChannel::from_parts(cond, labels.to_vec()), Some(0.0), true, 0)
}

/// The zero-distortion family (of `spec` or its thresholded variant) as
/// channel atoms.
fn gamma_labels(spec: &ProblemSpec, mode: AlphabetMode, caps: &EnumerationCaps) -> Result<Vec<AtomLabel>> {
    let family_spec = match mode {
        AlphabetMode::GammaEps(eps) => spec.with_distortion(epsilon_distortion(spec, eps)?)?,
        _ => spec.clone(),
    };
    let family = enumerate_gamma_d(&family_spec, caps)?;
    if let Some(x) = (0..spec.nx()).find(|&x| !family.contains(&Hyperedge::singleton(x))) {
        return Err(Error::Infeasible { x });
    }
    family
        .iter()
        .map(|w| {
            Ok(AtomLabel::Hyperedge(MultiHyperedge {
                edge: w.clone(),
                recovery: zero_distortion_recovery(&family_spec, w)?,
            }))
        })
        .collect()
}

/// Minimizes the Lagrangian for `cfg.lambda` over the chosen alphabet.
///
/// In the zero-distortion family modes the multiplier is ignored and the
/// reported distortion is measured with the original `d`. At `lambda = 0`
/// in recovery mode every rate-zero channel is optimal; the one with the
/// smallest distortion is returned.
pub fn solve_lagrangian(spec: &ProblemSpec, cfg: &SolverConfig, mode: AlphabetMode) -> Result<RDPoint> {
    cfg.validate()?;
    match mode {
        AlphabetMode::Recoveries => {
            let labels = recovery_labels(spec, &cfg.caps)?;
            if cfg.lambda == 0.0 {
                return zero_rate_point(spec, &labels);
            }
            let run = solve_restarts(spec, &labels, cfg.lambda, cfg)?;
            point_from_run(spec, run, Some(cfg.lambda))
        }
        AlphabetMode::GammaD | AlphabetMode::GammaEps(_) => {
            let labels = gamma_labels(spec, mode, &cfg.caps)?;
            let run = solve_restarts(spec, &labels, 0.0, cfg)?;
            point_from_run(spec, run, None)
        }
    }
}

/// Minimizes the Lagrangian for `cfg.lambda` starting from `start`, over the
/// atoms of `start`. The start is blended with a jittered uniform channel of
/// weight `cfg.init_jitter` so atoms without mass can re-enter.
pub fn solve_from(spec: &ProblemSpec, cfg: &SolverConfig, start: &AuxChannel) -> Result<RDPoint> {
    cfg.validate()?;
    start.check_against(spec)?;
    let labels = start.labels();
    let mut rng = restart_rng(cfg.rng_seed, 0);
    let noise = jittered_start(spec.nx(), labels, cfg.init_jitter, &mut rng)?;
    let blended = AuxChannel::mix(&noise, start, cfg.init_jitter)?;
    let program = Program::new(spec, labels, cfg.lambda)?;
    let run = iterate(&program, blended, cfg)?;
    point_from_run(spec, run, Some(cfg.lambda))
}

/// Zero-distortion solve over candidate recoveries: each recovery may only
/// receive the source symbols it reconstructs exactly.
pub fn solve_exact_zero_distortion(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<RDPoint> {
    cfg.validate()?;
    let mut labels = Vec::new();
    for r in enumerate_candidate_recoveries(spec, &cfg.caps)? {
        let members: Vec<usize> = (0..spec.nx())
            .filter(|&x| (0..spec.ny()).all(|y| spec.p(x, y) <= 0.0 || spec.loss(x, y, r.at(y)) <= 0.0))
            .collect();
        if let Ok(edge) = Hyperedge::new(members) {
            labels.push(AtomLabel::Hyperedge(MultiHyperedge { edge, recovery: r }));
        }
    }
    if let Some(x) = (0..spec.nx()).find(|&x| !labels.iter().any(|l| l.admits(x))) {
        return Err(Error::Infeasible { x });
    }
    let run = solve_restarts(spec, &labels, 0.0, cfg)?;
    point_from_run(spec, run, None)
}

/// Time-shares two points over the same atoms so that the distortion equals
/// `target`, which must lie between theirs.
fn time_share(spec: &ProblemSpec, above: &RDPoint, below: &RDPoint, target: f64) -> Result<RDPoint> {
    let span = above.distortion - below.distortion;
    let t = if span > 0.0 {
        ((above.distortion - target) / span).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let channel = AuxChannel::mix(&below.channel, &above.channel, t)?;
    let lambda = if t >= 0.5 { below.lambda } else { above.lambda };
    point_from_channel(
        spec,
        channel,
        lambda,
        above.converged && below.converged,
        above.iterations + below.iterations,
    )
}

/// `R(D)` at a single distortion level.
///
/// At or above the zero-rate distortion the answer is the best constant
/// decoder. `D = 0` is solved over the zero-distortion family. Otherwise the
/// multiplier is bracketed and bisected until the achieved distortion is
/// within [`DISTORTION_TOLERANCE`] of `D`, and the bracketing solutions are
/// time-shared to meet `D` exactly.
pub fn solve_at_distortion(spec: &ProblemSpec, target: f64, cfg: &SolverConfig) -> Result<RDPoint> {
    cfg.validate()?;
    if !target.is_finite() || target < 0.0 {
        return Err(Error::Domain(format!(
            "distortion must be finite and >= 0, got {target}"
        )));
    }
    let d_max = zero_rate_distortion(spec);
    if target >= d_max {
        let single = [AtomLabel::Recovery(CandidateRecovery(best_constant_recovery(spec)))];
        return zero_rate_point(spec, &single);
    }
    if target == 0.0 {
        return solve_lagrangian(spec, cfg, AlphabetMode::GammaD);
    }

    let labels = recovery_labels(spec, &cfg.caps)?;
    let max_d = spec.dist().max_entry();
    let lambda_max = max_d * 64.0 / cfg.tol_objective;

    // `lo` has distortion above the target (smaller multiplier), `hi` below.
    let mut lo = zero_rate_point(spec, &labels)?;
    let mut lambda = 1.0 / max_d;
    let mut current = solve_lagrangian(spec, &cfg.with_lambda(lambda), AlphabetMode::Recoveries)?;
    let mut hi = loop {
        if (current.distortion - target).abs() <= DISTORTION_TOLERANCE {
            return finish(spec, current, Some(&lo), None, target);
        }
        if current.distortion < target {
            break current;
        }
        if lambda >= lambda_max {
            return Err(Error::NotConverged {
                target,
                achieved: current.distortion,
                lambda_max,
            });
        }
        lo = current;
        lambda = (lambda * 4.0).min(lambda_max);
        current = solve_from(spec, &cfg.with_lambda(lambda), &lo.channel)?;
    };

    for _ in 0..MAX_BISECTIONS {
        let (l_lo, l_hi) = (lo.lambda.unwrap_or(0.0), hi.lambda.unwrap_or(0.0));
        if l_lo > 0.0 && l_hi / l_lo - 1.0 < 1e-12 {
            break;
        }
        let mid = if l_lo > 0.0 { (l_lo * l_hi).sqrt() } else { 0.5 * l_hi };
        let warm = if lo.distortion - target < target - hi.distortion {
            &lo.channel
        } else {
            &hi.channel
        };
        let point = solve_from(spec, &cfg.with_lambda(mid), warm)?;
        if (point.distortion - target).abs() <= DISTORTION_TOLERANCE {
            return finish(spec, point, Some(&lo), Some(&hi), target);
        }
        if point.distortion > target {
            lo = point;
        } else {
            hi = point;
        }
    }
    time_share(spec, &lo, &hi, target)
}

/// Makes a near-target point exact by time-sharing with the bracket member on
/// the other side of the target, when there is one.
fn finish(
    spec: &ProblemSpec,
    point: RDPoint,
    lo: Option<&RDPoint>,
    hi: Option<&RDPoint>,
    target: f64,
) -> Result<RDPoint> {
    if point.distortion > target {
        match hi {
            Some(hi) => time_share(spec, &point, hi, target),
            None => Ok(point),
        }
    } else if point.distortion < target {
        match lo {
            Some(lo) => time_share(spec, lo, &point, target),
            None => Ok(point),
        }
    } else {
        Ok(point)
    }
}

/// Lagrangian solutions for each multiplier in order, each warm-started from
/// the previous channel; returned sorted by distortion.
pub fn sweep_curve(spec: &ProblemSpec, lambdas: &[f64], cfg: &SolverConfig) -> Result<RDCurve> {
    cfg.validate()?;
    let labels = recovery_labels(spec, &cfg.caps)?;
    let mut curve = RDCurve::default();
    let mut previous: Option<AuxChannel> = None;
    for &lambda in lambdas {
        let local = cfg.with_lambda(lambda);
        let result = if let Err(e) = local.validate() {
            Err(e)
        } else if lambda == 0.0 {
            zero_rate_point(spec, &labels)
        } else if let Some(start) = &previous {
            solve_from(spec, &local, start)
        } else {
            solve_lagrangian(spec, &local, AlphabetMode::Recoveries)
        };
        match result {
            Ok(point) => {
                previous = Some(point.channel.clone());
                curve.points.push(point);
            }
            Err(e) => curve.failures.push((lambda, e)),
        }
    }
    curve.points.sort_by(|a, b| {
        a.distortion
            .total_cmp(&b.distortion)
            .then(a.lambda.unwrap_or(0.0).total_cmp(&b.lambda.unwrap_or(0.0)))
    });
    Ok(curve)
}

/// Keeps the `k` atoms of largest marginal (ties by index), in their original
/// order, and renormalizes every column.
pub fn prune_support(spec: &ProblemSpec, ch: &AuxChannel, k: usize) -> Result<AuxChannel> {
    if k == 0 {
        return Err(Error::Domain("prune_support needs k >= 1".into()));
    }
    let mass = ch.atom_mass(spec);
    let mut order: Vec<usize> = (0..ch.num_atoms()).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_unstable();

    let cond = Array2::from_shape_fn((kept.len(), ch.nx()), |(i, x)| ch.prob(kept[i], x));
    let labels = kept.iter().map(|&u| ch.label(u).clone()).collect();
    let mut pruned = AuxChannel::from_parts(cond, labels);
    pruned.normalize_columns()?;
    Ok(pruned)
}

/// Replaces every atom `u` by the multi-hyperedge `(w(u), (g(u, y))_y)` with
/// `w(u) = {x : p(u, x) > 0}`, merging atoms that land on the same
/// multi-hyperedge. Atoms of zero probability are dropped.
pub fn lift_to_multihyperedge(spec: &ProblemSpec, ch: &AuxChannel, dec: &DecoderMap) -> Result<AuxChannel> {
    if ch.nx() != spec.nx() {
        return Err(Error::DimensionMismatch {
            what: "channel source alphabet".into(),
            expected: spec.nx(),
            found: ch.nx(),
        });
    }
    if dec.table().dim() != (ch.num_atoms(), spec.ny()) {
        return Err(Error::DimensionMismatch {
            what: "decoder table size (atoms*|Y|)".into(),
            expected: ch.num_atoms() * spec.ny(),
            found: dec.table().len(),
        });
    }
    let mut index: HashMap<MultiHyperedge, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for u in 0..ch.num_atoms() {
        let members: Vec<usize> = (0..ch.nx()).filter(|&x| ch.prob(u, x) > 0.0).collect();
        let Ok(edge) = Hyperedge::new(members) else {
            continue;
        };
        let key = MultiHyperedge {
            edge,
            recovery: dec.recovery(u),
        };
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            labels.push(AtomLabel::Hyperedge(key));
            rows.push(vec![0.0; ch.nx()]);
            rows.len() - 1
        });
        for (x, v) in rows[slot].iter_mut().enumerate() {
            *v += ch.prob(u, x);
        }
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let cond = Array2::from_shape_vec((labels.len(), ch.nx()), flat).expect("rows have nx entries");
    Ok(AuxChannel::from_parts(cond, labels))
}

/// Annotates each recovery atom with its support `{x : p(u, x) > 0}`, turning
/// it into a multi-hyperedge. Zero-probability atoms are dropped; nothing is
/// merged, so rate and distortion are unchanged.
pub fn attach_subset(spec: &ProblemSpec, ch: &AuxChannel) -> Result<AuxChannel> {
    ch.check_against(spec)?;
    let mut labels = Vec::new();
    let mut kept = Vec::new();
    for u in 0..ch.num_atoms() {
        let recovery = ch
            .label(u)
            .recovery()
            .ok_or(Error::UnannotatedChannel {
                atom: u,
                needed: "candidate recovery",
            })?
            .clone();
        let members: Vec<usize> = (0..ch.nx()).filter(|&x| ch.prob(u, x) > 0.0).collect();
        if let Ok(edge) = Hyperedge::new(members) {
            labels.push(AtomLabel::Hyperedge(MultiHyperedge { edge, recovery }));
            kept.push(u);
        }
    }
    let cond = Array2::from_shape_fn((kept.len(), ch.nx()), |(i, x)| ch.prob(kept[i], x));
    Ok(AuxChannel::from_parts(cond, labels))
}

/// For each `y`, the smallest reconstruction whose zero ball holds every
/// value `w` induces at `y` (index 0 when nothing is induced).
pub fn zero_distortion_recovery(spec: &ProblemSpec, w: &Hyperedge) -> Result<CandidateRecovery> {
    (0..spec.ny())
        .map(|y| {
            zero_ball_center(spec, &induced_values(spec, w, y)).ok_or_else(|| Error::NotInGammaD {
                members: w.members().to_vec(),
                y,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(CandidateRecovery)
}

/// Public form of one alternating step: updates the channel against the
/// posterior `q` and recomputes the posterior.
pub fn am_step(spec: &ProblemSpec, ch: &AuxChannel, q: &Array2<f64>, lambda: f64) -> Result<(AuxChannel, Array2<f64>)> {
    ch.check_against(spec)?;
    if q.dim() != (ch.num_atoms(), spec.ny()) {
        return Err(Error::DimensionMismatch {
            what: "posterior size (atoms*|Y|)".into(),
            expected: ch.num_atoms() * spec.ny(),
            found: q.len(),
        });
    }
    let program = Program::new(spec, ch.labels(), lambda)?;
    let mut next = ch.clone();
    let mut q_next = q.clone();
    program.step(&mut next, &mut q_next)?;
    Ok((next, q_next))
}

/// `I(X; U | Y) + lambda E[d]` with the decoder read from the atom labels.
pub fn lagrangian(spec: &ProblemSpec, ch: &AuxChannel, lambda: f64) -> Result<f64> {
    let rate = conditional_mutual_information(spec, ch)?;
    if lambda > 0.0 {
        Ok(rate + lambda * expected_distortion(spec, ch, &ch.decoder()?)?)
    } else {
        Ok(rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::binary_entropy;
    use crate::model::{card_game_spec, shannon_binary_spec};
    use approx::assert_abs_diff_eq;

    fn rec(v: &[usize]) -> AtomLabel {
        AtomLabel::Recovery(CandidateRecovery(v.to_vec()))
    }

    fn card_closed_form(d: f64) -> f64 {
        2.0 / 3.0 * (binary_entropy((1.0 + 6.0 * d) / 4.0).unwrap() - binary_entropy(3.0 * d).unwrap())
    }

    fn card_optimum(d: f64) -> AuxChannel {
        let p = [1.0 - 3.0 * d, 0.5, 3.0 * d];
        let cond = Array2::from_shape_fn((2, 3), |(u, x)| if u == 0 { p[x] } else { 1.0 - p[x] });
        AuxChannel::new(cond, vec![rec(&[1, 0, 0]), rec(&[1, 1, 0])]).unwrap()
    }

    #[test]
    fn single_atom_is_a_fixed_point() {
        let s = card_game_spec();
        let ch = AuxChannel::new(Array2::ones((1, 3)), vec![AtomLabel::Plain]).unwrap();
        let q = posterior(&s, &ch);
        let (next, q2) = am_step(&s, &ch, &q, 0.0).unwrap();
        assert_eq!(next, ch);
        assert_eq!(q2, q);
        assert_eq!(lagrangian(&s, &next, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn descent_over_many_steps() {
        let s = card_game_spec();
        let labels = recovery_labels(&s, &EnumerationCaps::default()).unwrap();
        let mut rng = restart_rng(7, 0);
        let mut ch = jittered_start(3, &labels, 0.9, &mut rng).unwrap();
        let mut q = posterior(&s, &ch);
        let mut last = lagrangian(&s, &ch, 3.0).unwrap();
        for _ in 0..100 {
            (ch, q) = am_step(&s, &ch, &q, 3.0).unwrap();
            let l = lagrangian(&s, &ch, 3.0).unwrap();
            assert!(l <= last + 1e-12, "{l} > {last}");
            last = l;
        }
    }

    #[test]
    fn closed_form_optimizer_is_stationary() {
        // At D the slope of the closed form is -lambda; the two-atom channel
        // embedded in the full alphabet should barely move.
        let s = card_game_spec();
        let d = 1.0 / 12.0;
        let h = 1e-6;
        let slope = (card_closed_form(d + h) - card_closed_form(d - h)) / (2.0 * h);
        let lambda = -slope;
        let ch = card_optimum(d);
        let q = posterior(&s, &ch);
        let (next, _) = am_step(&s, &ch, &q, lambda).unwrap();
        let drift = (&next.cond().view() - &ch.cond().view())
            .mapv(f64::abs)
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn gamma_d_mode_card_game() {
        let s = card_game_spec();
        let pt = solve_lagrangian(&s, &SolverConfig::default(), AlphabetMode::GammaD).unwrap();
        assert_abs_diff_eq!(pt.rate, card_closed_form(0.0), epsilon = 1e-4);
        assert_eq!(pt.distortion, 0.0);
        assert_eq!(pt.lambda, None);
    }

    #[test]
    fn zero_multiplier_gives_zero_rate() {
        for s in [card_game_spec(), shannon_binary_spec()] {
            let pt = solve_lagrangian(&s, &SolverConfig::default(), AlphabetMode::Recoveries).unwrap();
            assert_eq!(pt.rate, 0.0);
            assert!(pt.distortion <= zero_rate_distortion(&s) + 1e-9);
        }
    }

    #[test]
    fn solve_at_distortion_examples() {
        let s = card_game_spec();
        let cfg = SolverConfig::default();
        let pt = solve_at_distortion(&s, 1.0 / 6.0, &cfg).unwrap();
        assert_eq!(pt.rate, 0.0);
        let pt = solve_at_distortion(&s, 1.0 / 24.0, &cfg).unwrap();
        assert_abs_diff_eq!(pt.rate, 0.234983, epsilon = 5e-4);
        assert_abs_diff_eq!(pt.distortion, 1.0 / 24.0, epsilon = 1e-5);

        let sh = shannon_binary_spec();
        let pt = solve_at_distortion(&sh, 0.1, &cfg).unwrap();
        assert_abs_diff_eq!(pt.rate, 0.531004, epsilon = 5e-4);
    }

    #[test]
    fn negative_distortion_rejected() {
        let s = card_game_spec();
        assert!(matches!(
            solve_at_distortion(&s, -0.1, &SolverConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_distortion_infeasible_when_no_exact_reconstruction() {
        // Reconstruction "1" is never exact for z=0.
        let raw = crate::model::RawSpec {
            d: vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            ..card_game_spec().to_raw()
        };
        let s = crate::model::validate_spec(&raw).unwrap();
        assert!(matches!(
            solve_at_distortion(&s, 0.0, &SolverConfig::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn zero_distortion_recovery_examples() {
        let s = card_game_spec();
        let r = zero_distortion_recovery(&s, &Hyperedge::new(vec![1, 2]).unwrap()).unwrap();
        assert_eq!(r.0, vec![1, 1, 0]);
        let r = zero_distortion_recovery(&s, &Hyperedge::new(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(r.0, vec![1, 0, 0]);
        assert!(matches!(
            zero_distortion_recovery(&s, &Hyperedge::new(vec![0, 2]).unwrap()),
            Err(Error::NotInGammaD { y: 1, .. })
        ));
    }

    #[test]
    fn prune_examples() {
        let s = card_game_spec();
        let ch = card_optimum(1.0 / 12.0);
        let same = prune_support(&s, &ch, 4).unwrap();
        assert_eq!(same, ch);
        let one = prune_support(&s, &ch, 1).unwrap();
        assert_eq!(one.num_atoms(), 1);
        assert_eq!(conditional_mutual_information(&s, &one).unwrap(), 0.0);
        assert!(prune_support(&s, &ch, 0).is_err());

        // Atom 1 has all its mass on x=0; keeping only atom 0 leaves x=0 empty.
        let cond = Array2::from_shape_vec((2, 3), vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let lopsided = AuxChannel::new(cond, vec![rec(&[0, 0, 0]), rec(&[1, 1, 1])]).unwrap();
        assert!(matches!(
            prune_support(&s, &lopsided, 1),
            Err(Error::EmptySupport { x: 0 })
        ));
    }

    #[test]
    fn lift_merges_duplicates() {
        let s = card_game_spec();
        let cond = Array2::from_shape_vec((2, 3), vec![0.2, 0.5, 0.0, 0.8, 0.5, 1.0]).unwrap();
        let ch = AuxChannel::new(cond, vec![AtomLabel::Plain, AtomLabel::Plain]).unwrap();
        let dec = DecoderMap::new(Array2::from_shape_vec((2, 3), vec![1, 0, 0, 1, 0, 0]).unwrap());
        let lifted = lift_to_multihyperedge(&s, &ch, &dec).unwrap();
        // supports differ ({1,2} vs {1,2,3}), so two atoms remain
        assert_eq!(lifted.num_atoms(), 2);

        let cond = Array2::from_shape_vec((2, 3), vec![0.2, 0.5, 0.3, 0.8, 0.5, 0.7]).unwrap();
        let ch = AuxChannel::new(cond, vec![AtomLabel::Plain, AtomLabel::Plain]).unwrap();
        let lifted = lift_to_multihyperedge(&s, &ch, &dec).unwrap();
        assert_eq!(lifted.num_atoms(), 1);
        assert_abs_diff_eq!(lifted.column_sum_residual(), 0.0, epsilon = 1e-15);
        assert_eq!(conditional_mutual_information(&s, &lifted).unwrap(), 0.0);
    }

    #[test]
    fn lift_card_game_optimum() {
        let s = card_game_spec();
        let ch = card_optimum(1.0 / 12.0);
        let lifted = lift_to_multihyperedge(&s, &ch, &ch.decoder().unwrap()).unwrap();
        let atoms: Vec<(Vec<usize>, Vec<usize>)> = lifted
            .labels()
            .iter()
            .map(|l| (l.subset().unwrap().members().to_vec(), l.recovery().unwrap().0.clone()))
            .collect();
        assert_eq!(
            atoms,
            vec![(vec![0, 1, 2], vec![1, 0, 0]), (vec![0, 1, 2], vec![1, 1, 0])]
        );
    }

    #[test]
    fn attach_subset_preserves_measures() {
        let s = card_game_spec();
        let ch = card_optimum(1.0 / 12.0);
        let attached = attach_subset(&s, &ch).unwrap();
        for l in attached.labels() {
            assert_eq!(l.subset().unwrap().members(), &[0, 1, 2]);
        }
        let before = (
            conditional_mutual_information(&s, &ch).unwrap(),
            expected_distortion(&s, &ch, &ch.decoder().unwrap()).unwrap(),
        );
        let after = (
            conditional_mutual_information(&s, &attached).unwrap(),
            expected_distortion(&s, &attached, &attached.decoder().unwrap()).unwrap(),
        );
        assert_abs_diff_eq!(before.0, after.0, epsilon = 1e-12);
        assert_abs_diff_eq!(before.1, after.1, epsilon = 1e-12);

        let plain = AuxChannel::new(Array2::ones((1, 3)), vec![AtomLabel::Plain]).unwrap();
        assert!(matches!(
            attach_subset(&s, &plain),
            Err(Error::UnannotatedChannel { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let s = card_game_spec();
        let bad = SolverConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(matches!(
            solve_lagrangian(&s, &bad, AlphabetMode::Recoveries),
            Err(Error::InvalidConfig(_))
        ));
        let bad = SolverConfig::default().with_lambda(-1.0);
        assert!(bad.validate().is_err());
    }
}
