//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use lossycomp::model::ProblemSpec;
use lossycomp::{validate_spec, AtomLabel, AuxChannel, CandidateRecovery, RawSpec};
use ndarray::Array2;
use rand::Rng;
use std::ops::RangeInclusive;

/// Binary entropy in bits, evaluated independently of the library.
pub fn h2(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
}

/// `(2/3)(H((1+6D)/4) - H(3D))` for the card game, valid on `[0, 1/6]`.
pub fn card_closed_form(d: f64) -> f64 {
    2.0 / 3.0 * (h2((1.0 + 6.0 * d) / 4.0) - h2(3.0 * d))
}

/// Random positive weights normalized to one.
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// A random instance with full-support joint law, random function into a
/// `nz`-letter alphabet and random nonnegative distortion into `nzhat`
/// reconstructions.
pub fn random_spec<R: Rng>(rng: &mut R, nx: usize, ny: usize, nz: usize, nzhat: usize) -> ProblemSpec {
    let p = random_simplex(rng, nx * ny);
    let raw = RawSpec {
        x_alphabet: (0..nx).map(|i| format!("x{i}")).collect(),
        y_alphabet: (0..ny).map(|i| format!("y{i}")).collect(),
        z_alphabet: (0..nz).map(|i| format!("z{i}")).collect(),
        zhat_alphabet: (0..nzhat).map(|i| format!("r{i}")).collect(),
        p_xy: (0..nx).map(|x| p[x * ny..(x + 1) * ny].to_vec()).collect(),
        f: (0..nx)
            .map(|_| (0..ny).map(|_| rng.random_range(0..nz)).collect())
            .collect(),
        d: (0..nz)
            .map(|_| {
                (0..nzhat)
                    .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
                    .collect()
            })
            .collect(),
    };
    validate_spec(&raw).expect("generated spec is valid")
}

/// Smallest distortion any decoder reaches: each `(x, y)` reconstructed
/// with its own best letter.
pub fn min_distortion(spec: &ProblemSpec) -> f64 {
    let mut total = 0.0;
    for x in 0..spec.nx() {
        for y in 0..spec.ny() {
            let best = (0..spec.nzhat())
                .map(|r| spec.loss(x, y, r))
                .fold(f64::INFINITY, f64::min);
            total += spec.p(x, y) * best;
        }
    }
    total
}

/// A random channel over `atoms` random recoveries.
pub fn random_recovery_channel<R: Rng>(rng: &mut R, spec: &ProblemSpec, atoms: usize) -> AuxChannel {
    let labels: Vec<AtomLabel> = (0..atoms)
        .map(|_| {
            AtomLabel::Recovery(CandidateRecovery(
                (0..spec.ny()).map(|_| rng.random_range(0..spec.nzhat())).collect(),
            ))
        })
        .collect();
    let mut cond = Array2::zeros((atoms, spec.nx()));
    for x in 0..spec.nx() {
        let col = random_simplex(rng, atoms);
        for u in 0..atoms {
            // Some exact zeros so supports differ between atoms.
            cond[[u, x]] = if atoms > 1 && rng.random_bool(0.2) { 0.0 } else { col[u] };
        }
        let s: f64 = cond.column(x).sum();
        if s == 0.0 {
            cond[[0, x]] = 1.0;
        } else {
            cond.column_mut(x).mapv_inplace(|v| v / s);
        }
    }
    AuxChannel::new(cond, labels).unwrap()
}

/// [`random_spec`] with every alphabet size drawn from its range.
pub fn random_spec_in<R: Rng>(
    rng: &mut R,
    nx: RangeInclusive<usize>,
    ny: RangeInclusive<usize>,
    nz: RangeInclusive<usize>,
    nzhat: RangeInclusive<usize>,
) -> ProblemSpec {
    let sizes = (
        rng.random_range(nx),
        rng.random_range(ny),
        rng.random_range(nz),
        rng.random_range(nzhat),
    );
    random_spec(rng, sizes.0, sizes.1, sizes.2, sizes.3)
}

/// [`random_spec`] with roughly a third of the joint law set to zero; every
/// source symbol keeps at least one side-information partner.
pub fn random_sparse_spec<R: Rng>(rng: &mut R, nx: usize, ny: usize, nz: usize, nzhat: usize) -> ProblemSpec {
    let mut raw = random_spec(rng, nx, ny, nz, nzhat).to_raw();
    for row in raw.p_xy.iter_mut() {
        let keep = rng.random_range(0..ny);
        for (y, v) in row.iter_mut().enumerate() {
            if y != keep && rng.random_bool(0.35) {
                *v = 0.0;
            }
        }
    }
    let total: f64 = raw.p_xy.iter().flatten().sum();
    raw.p_xy.iter_mut().flatten().for_each(|v| *v /= total);
    validate_spec(&raw).expect("generated spec is valid")
}
