//! Problem instances: alphabets, the joint source law, the function to be
//! computed and the distortion measure.
//!
//! Symbols are always addressed by index; labels exist only for display and
//! for the on-disk format. A [`ProblemSpec`] can only be obtained through
//! [`validate_spec`] (or one of the built-in constructors, which go through it),
//! so every instance in circulation satisfies the invariants below:
//!
//! * all alphabets are nonempty with distinct nonempty labels,
//! * `p_xy` is `|X| x |Y|`, entries are in `[0, 1]`, they sum to 1 within
//!   [`PMF_TOLERANCE`] and every row has positive mass,
//! * `f` is `|X| x |Y|` with entries indexing `Z`,
//! * `d` is `|Z| x |Zhat|` with finite nonnegative entries.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of the total probability mass from 1.
pub const PMF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(name: &'static str, labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidAlphabet {
                name,
                reason: "alphabet is empty".into(),
            });
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(Error::InvalidAlphabet {
                    name,
                    reason: format!("label {i} is empty"),
                });
            }
            if labels[..i].contains(label) {
                return Err(Error::InvalidAlphabet {
                    name,
                    reason: format!("label {label:?} appears more than once"),
                });
            }
        }
        Ok(Self { labels })
    }

    /// Alphabet with labels `"0"`, `"1"`, ...
    pub fn numbered(name: &'static str, size: usize) -> Result<Self> {
        Self::new(name, (0..size).map(|i| i.to_string()).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Joint law `p(x, y)`, rows indexed by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf(Array2<f64>);

impl JointPmf {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Table of `f(x, y)` as indices into `Z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionTable(Array2<usize>);

impl FunctionTable {
    pub fn matrix(&self) -> &Array2<usize> {
        &self.0
    }
}

/// Distortion `d(z, zhat)`, rows indexed by `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionMeasure(Array2<f64>);

impl DistortionMeasure {
    /// Checks finiteness and nonnegativity; dimensions are checked against a
    /// spec when the measure is attached to one.
    pub fn new(d: Array2<f64>) -> Result<Self> {
        for ((z, zhat), &value) in d.indexed_iter() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidDistortion { z, zhat, value });
            }
        }
        Ok(Self(d))
    }

    /// Hamming distortion on an `n`-symbol alphabet.
    pub fn hamming(n: usize) -> Self {
        Self(Array2::from_shape_fn((n, n), |(a, b)| if a == b { 0.0 } else { 1.0 }))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn max_entry(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// Unvalidated problem description; this is exactly the JSON file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSpec {
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    pub z_alphabet: Vec<String>,
    pub zhat_alphabet: Vec<String>,
    pub p_xy: Vec<Vec<f64>>,
    pub f: Vec<Vec<usize>>,
    pub d: Vec<Vec<f64>>,
}

impl RawSpec {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("raw spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    z_alphabet: Alphabet,
    zhat_alphabet: Alphabet,
    pmf: JointPmf,
    func: FunctionTable,
    dist: DistortionMeasure,
    p_x: Vec<f64>,
    p_y: Vec<f64>,
}

fn to_matrix<T: Copy>(what: &str, rows: &[Vec<T>], nrows: usize, ncols: usize) -> Result<Array2<T>> {
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch {
            what: format!("{what} row count"),
            expected: nrows,
            found: rows.len(),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch {
                what: format!("{what} row {i} length"),
                expected: ncols,
                found: row.len(),
            });
        }
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((nrows, ncols), flat).expect("shape checked above"))
}

fn to_rows<T: Copy>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Checks every invariant of a problem description and builds the spec.
pub fn validate_spec(raw: &RawSpec) -> Result<ProblemSpec> {
    let x_alphabet = Alphabet::new("x_alphabet", raw.x_alphabet.clone())?;
    let y_alphabet = Alphabet::new("y_alphabet", raw.y_alphabet.clone())?;
    let z_alphabet = Alphabet::new("z_alphabet", raw.z_alphabet.clone())?;
    let zhat_alphabet = Alphabet::new("zhat_alphabet", raw.zhat_alphabet.clone())?;
    let (nx, ny, nz, nzhat) = (
        x_alphabet.size(),
        y_alphabet.size(),
        z_alphabet.size(),
        zhat_alphabet.size(),
    );

    let p = to_matrix("p_xy", &raw.p_xy, nx, ny)?;
    let f = to_matrix("f", &raw.f, nx, ny)?;
    let d = to_matrix("d", &raw.d, nz, nzhat)?;

    for ((x, y), &value) in p.indexed_iter() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NegativeProbability { x, y, value });
        }
    }
    let sum: f64 = p.sum();
    if (sum - 1.0).abs() > PMF_TOLERANCE {
        return Err(Error::PmfNotNormalized { sum });
    }
    let p_x: Vec<f64> = p.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(x) = p_x.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMarginalRow { x });
    }
    let p_y: Vec<f64> = p.columns().into_iter().map(|c| c.sum()).collect();

    for ((row, col), &index) in f.indexed_iter() {
        if index >= nz {
            return Err(Error::IndexOutOfRange {
                what: "f",
                row,
                col,
                index,
                size: nz,
            });
        }
    }
    let dist = DistortionMeasure::new(d)?;

    Ok(ProblemSpec {
        x_alphabet,
        y_alphabet,
        z_alphabet,
        zhat_alphabet,
        pmf: JointPmf(p),
        func: FunctionTable(f),
        dist,
        p_x,
        p_y,
    })
}

impl ProblemSpec {
    pub fn to_raw(&self) -> RawSpec {
        RawSpec {
            x_alphabet: self.x_alphabet.labels().to_vec(),
            y_alphabet: self.y_alphabet.labels().to_vec(),
            z_alphabet: self.z_alphabet.labels().to_vec(),
            zhat_alphabet: self.zhat_alphabet.labels().to_vec(),
            p_xy: to_rows(self.pmf.matrix()),
            f: to_rows(self.func.matrix()),
            d: to_rows(self.dist.matrix()),
        }
    }

    /// Same problem with a different distortion measure over the same alphabets.
    pub fn with_distortion(&self, dist: DistortionMeasure) -> Result<ProblemSpec> {
        let (nz, nzhat) = dist.matrix().dim();
        if nz != self.nz() || nzhat != self.nzhat() {
            return Err(Error::DimensionMismatch {
                what: "distortion matrix size (|Z|*|Zhat|)".into(),
                expected: self.nz() * self.nzhat(),
                found: nz * nzhat,
            });
        }
        Ok(ProblemSpec { dist, ..self.clone() })
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }
    pub fn y_alphabet(&self) -> &Alphabet {
        &self.y_alphabet
    }
    pub fn z_alphabet(&self) -> &Alphabet {
        &self.z_alphabet
    }
    pub fn zhat_alphabet(&self) -> &Alphabet {
        &self.zhat_alphabet
    }
    pub fn pmf(&self) -> &JointPmf {
        &self.pmf
    }
    pub fn func(&self) -> &FunctionTable {
        &self.func
    }
    pub fn dist(&self) -> &DistortionMeasure {
        &self.dist
    }

    pub fn nx(&self) -> usize {
        self.x_alphabet.size()
    }
    pub fn ny(&self) -> usize {
        self.y_alphabet.size()
    }
    pub fn nz(&self) -> usize {
        self.z_alphabet.size()
    }
    pub fn nzhat(&self) -> usize {
        self.zhat_alphabet.size()
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.pmf.0[[x, y]]
    }
    #[inline]
    pub fn p_x(&self, x: usize) -> f64 {
        self.p_x[x]
    }
    #[inline]
    pub fn p_y(&self, y: usize) -> f64 {
        self.p_y[y]
    }
    #[inline]
    pub fn p_y_given_x(&self, x: usize, y: usize) -> f64 {
        self.pmf.0[[x, y]] / self.p_x[x]
    }
    /// `p(x|y)`, or 0 for a side-information symbol of zero probability.
    #[inline]
    pub fn p_x_given_y(&self, x: usize, y: usize) -> f64 {
        if self.p_y[y] > 0.0 {
            self.pmf.0[[x, y]] / self.p_y[y]
        } else {
            0.0
        }
    }
    #[inline]
    pub fn f(&self, x: usize, y: usize) -> usize {
        self.func.0[[x, y]]
    }
    #[inline]
    pub fn d(&self, z: usize, zhat: usize) -> f64 {
        self.dist.0[[z, zhat]]
    }
    /// `d(f(x, y), zhat)`.
    #[inline]
    pub fn loss(&self, x: usize, y: usize, zhat: usize) -> f64 {
        self.dist.0[[self.func.0[[x, y]], zhat]]
    }
}

fn spec_from_parts(
    x: &[&str],
    y: &[&str],
    z: &[&str],
    zhat: &[&str],
    p: Array2<f64>,
    f: Array2<usize>,
    d: Array2<f64>,
) -> ProblemSpec {
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let raw = RawSpec {
        x_alphabet: owned(x),
        y_alphabet: owned(y),
        z_alphabet: owned(z),
        zhat_alphabet: owned(zhat),
        p_xy: to_rows(&p),
        f: to_rows(&f),
        d: to_rows(&d),
    };
    validate_spec(&raw).expect("built-in spec is valid")
}

/// Three cards dealt without replacement to Alice (`X`) and Bob (`Y`); Bob
/// wants to know whether Alice's card is larger, under Hamming distortion.
pub fn card_game_spec() -> ProblemSpec {
    let p = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 / 6.0 });
    let f = Array2::from_shape_fn((3, 3), |(i, j)| usize::from(i > j));
    spec_from_parts(
        &["1", "2", "3"],
        &["1", "2", "3"],
        &["0", "1"],
        &["0", "1"],
        p,
        f,
        DistortionMeasure::hamming(2).0,
    )
}

/// Uniform bit, constant side information, `f(x, y) = x`, Hamming distortion.
/// Its rate-distortion function is `1 - H(D)` on `[0, 1/2]`.
pub fn shannon_binary_spec() -> ProblemSpec {
    let p = Array2::from_shape_vec((2, 1), vec![0.5, 0.5]).unwrap();
    let f = Array2::from_shape_vec((2, 1), vec![0, 1]).unwrap();
    spec_from_parts(
        &["0", "1"],
        &["-"],
        &["0", "1"],
        &["0", "1"],
        p,
        f,
        DistortionMeasure::hamming(2).0,
    )
}

/// Crossover probability of the side-information channel in
/// [`wyner_ziv_identity_spec`].
pub const WYNER_ZIV_CROSSOVER: f64 = 0.25;

/// Uniform bit `X` observed by the decoder through a binary symmetric channel
/// with crossover [`WYNER_ZIV_CROSSOVER`]; `f(x, y) = x`, Hamming distortion.
pub fn wyner_ziv_identity_spec() -> ProblemSpec {
    let e = WYNER_ZIV_CROSSOVER;
    let p = Array2::from_shape_fn((2, 2), |(x, y)| if x == y { 0.5 * (1.0 - e) } else { 0.5 * e });
    let f = Array2::from_shape_fn((2, 2), |(x, _)| x);
    spec_from_parts(
        &["0", "1"],
        &["0", "1"],
        &["0", "1"],
        &["0", "1"],
        p,
        f,
        DistortionMeasure::hamming(2).0,
    )
}

pub const BUILTIN_NAMES: [&str; 3] = ["card-game", "shannon-binary", "wyner-ziv-identity"];

pub fn builtin(name: &str) -> Option<ProblemSpec> {
    match name {
        "card-game" => Some(card_game_spec()),
        "shannon-binary" => Some(shannon_binary_spec()),
        "wyner-ziv-identity" => Some(wyner_ziv_identity_spec()),
        _ => None,
    }
}

/// Best reconstruction per side-information symbol when nothing is sent:
/// for each `y`, the smallest-index `zhat` minimizing `sum_x p(x, y) d(f(x, y), zhat)`.
pub fn best_constant_recovery(spec: &ProblemSpec) -> Vec<usize> {
    (0..spec.ny())
        .map(|y| {
            let mut best = (0, f64::INFINITY);
            for zhat in 0..spec.nzhat() {
                let cost: f64 = (0..spec.nx()).map(|x| spec.p(x, y) * spec.loss(x, y, zhat)).sum();
                if cost < best.1 {
                    best = (zhat, cost);
                }
            }
            best.0
        })
        .collect()
}

/// Smallest distortion reachable at rate zero; `R(D) = 0` for every `D` at or
/// above this value.
pub fn zero_rate_distortion(spec: &ProblemSpec) -> f64 {
    let recovery = best_constant_recovery(spec);
    (0..spec.ny())
        .map(|y| {
            (0..spec.nx())
                .map(|x| spec.p(x, y) * spec.loss(x, y, recovery[y]))
                .sum::<f64>()
        })
        .sum()
}
