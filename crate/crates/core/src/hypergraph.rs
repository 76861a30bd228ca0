//! Building blocks of the characteristic multi-hypergraph.
//!
//! A hyperedge is a nonempty subset `w` of the source alphabet. A candidate
//! recovery assigns one reconstruction symbol to every side-information
//! symbol; the decoder reads off the component at the observed `y`. Pairing a
//! hyperedge with a candidate recovery gives a multi-hyperedge; the same
//! subset paired with different recoveries yields the repeated edges of the
//! multi-hypergraph, so no separate multiset structure is needed.
//!
//! For zero distortion only the family `Gamma_d` matters: subsets `w` such
//! that, for each `y`, the function values `w_y = {f(x, y) : x in w, p(x, y) > 0}`
//! fit inside a single zero-distortion ball `B(zhat, 0)`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DistortionMeasure, ProblemSpec};

/// Nonempty subset of source symbols, stored as a sorted member list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Hyperedge {
    members: Vec<usize>,
}

impl Hyperedge {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::Domain("a hyperedge must be nonempty".into()));
        }
        Ok(Self { members })
    }

    pub fn singleton(x: usize) -> Self {
        Self { members: vec![x] }
    }

    /// Subset encoded by the set bits of `mask`.
    pub fn from_mask(mask: u64) -> Result<Self> {
        Self::new((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    pub fn is_subset_of(&self, other: &Hyperedge) -> bool {
        self.members.iter().all(|&x| other.contains(x))
    }

    /// Renders members by their labels, e.g. `{1, 2}`.
    pub fn display<'a>(&'a self, spec: &'a ProblemSpec) -> impl fmt::Display + 'a {
        struct Labeled<'a>(&'a Hyperedge, &'a ProblemSpec);
        impl fmt::Display for Labeled<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let labels: Vec<&str> = self.0.members.iter().map(|&x| self.1.x_alphabet().label(x)).collect();
                write!(f, "{{{}}}", labels.join(", "))
            }
        }
        Labeled(self, spec)
    }
}

impl TryFrom<Vec<usize>> for Hyperedge {
    type Error = Error;
    fn try_from(members: Vec<usize>) -> Result<Self> {
        Self::new(members)
    }
}

impl From<Hyperedge> for Vec<usize> {
    fn from(w: Hyperedge) -> Self {
        w.members
    }
}

/// Canonical order: by size, then lexicographically.
impl Ord for Hyperedge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.members
            .len()
            .cmp(&other.members.len())
            .then_with(|| self.members.cmp(&other.members))
    }
}

impl PartialOrd for Hyperedge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One reconstruction index per side-information symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateRecovery(pub Vec<usize>);

impl CandidateRecovery {
    #[inline]
    pub fn at(&self, y: usize) -> usize {
        self.0[y]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A hyperedge of the characteristic multi-hypergraph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiHyperedge {
    pub edge: Hyperedge,
    pub recovery: CandidateRecovery,
}

/// Duplicate-free family of hyperedges in canonical order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HyperedgeFamily {
    edges: BTreeSet<Hyperedge>,
}

impl HyperedgeFamily {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, w: &Hyperedge) -> bool {
        self.edges.contains(w)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hyperedge> {
        self.edges.iter()
    }

    /// Every source symbol in `0..nx` belongs to some member.
    pub fn covers(&self, nx: usize) -> bool {
        (0..nx).all(|x| self.edges.iter().any(|w| w.contains(x)))
    }
}

impl FromIterator<Hyperedge> for HyperedgeFamily {
    fn from_iter<I: IntoIterator<Item = Hyperedge>>(iter: I) -> Self {
        Self {
            edges: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a HyperedgeFamily {
    type Item = &'a Hyperedge;
    type IntoIter = std::collections::btree_set::Iter<'a, Hyperedge>;
    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}

/// Limits on the exponential enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationCaps {
    /// Largest `|X|` for which all `2^|X| - 1` subsets are enumerated.
    pub max_source_symbols: usize,
    /// Largest `|Zhat|^|Y|`.
    pub max_recoveries: usize,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        Self {
            max_source_symbols: 20,
            max_recoveries: 4096,
        }
    }
}

/// `B(zhat, delta) = {z : d(z, zhat) <= delta}`.
pub fn distortion_ball(spec: &ProblemSpec, zhat: usize, delta: f64) -> BTreeSet<usize> {
    (0..spec.nz()).filter(|&z| spec.d(z, zhat) <= delta).collect()
}

/// `w_y = {f(x, y) : x in w, p(x, y) > 0}`; empty when no member of `w` can
/// co-occur with `y`.
pub fn induced_values(spec: &ProblemSpec, w: &Hyperedge, y: usize) -> BTreeSet<usize> {
    w.members()
        .iter()
        .filter(|&&x| spec.p(x, y) > 0.0)
        .map(|&x| spec.f(x, y))
        .collect()
}

/// Smallest `zhat` whose zero ball contains every value in `values`.
pub(crate) fn zero_ball_center(spec: &ProblemSpec, values: &BTreeSet<usize>) -> Option<usize> {
    (0..spec.nzhat()).find(|&zhat| values.iter().all(|&z| spec.d(z, zhat) <= 0.0))
}

/// Condition (ii) of the zero-distortion family, checked for every `y`.
pub fn in_gamma_d(spec: &ProblemSpec, w: &Hyperedge) -> bool {
    (0..spec.ny()).all(|y| zero_ball_center(spec, &induced_values(spec, w, y)).is_some())
}

/// All members of `Gamma_d`, enumerated over the `2^|X| - 1` nonempty subsets.
pub fn enumerate_gamma_d(spec: &ProblemSpec, caps: &EnumerationCaps) -> Result<HyperedgeFamily> {
    let nx = spec.nx();
    if nx > caps.max_source_symbols || nx >= 64 {
        return Err(Error::AlphabetTooLarge {
            size: nx,
            cap: caps.max_source_symbols.min(63),
        });
    }
    let members: Vec<Hyperedge> = (1u64..(1u64 << nx))
        .into_par_iter()
        .filter_map(|mask| {
            let w = Hyperedge::from_mask(mask).expect("mask is nonzero");
            in_gamma_d(spec, &w).then_some(w)
        })
        .collect();
    Ok(members.into_iter().collect())
}

/// Thresholded measure `1{d(z, zhat) > eps}`.
pub fn epsilon_distortion(spec: &ProblemSpec, eps: f64) -> Result<DistortionMeasure> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Domain(format!("epsilon must be >= 0, got {eps}")));
    }
    let d = spec.dist().matrix();
    DistortionMeasure::new(Array2::from_shape_fn(d.dim(), |ix| if d[ix] > eps { 1.0 } else { 0.0 }))
}

/// Number of candidate recoveries `|Zhat|^|Y|`, saturating.
pub fn recovery_count(spec: &ProblemSpec) -> u128 {
    (0..spec.ny()).fold(1u128, |acc, _| acc.saturating_mul(spec.nzhat() as u128))
}

/// All `|Zhat|^|Y|` candidate recoveries in lexicographic order (the first
/// component varies slowest).
pub fn enumerate_candidate_recoveries(spec: &ProblemSpec, caps: &EnumerationCaps) -> Result<Vec<CandidateRecovery>> {
    let count = recovery_count(spec);
    if count > caps.max_recoveries as u128 {
        return Err(Error::RecoverySpaceTooLarge {
            size: count,
            cap: caps.max_recoveries,
        });
    }
    let (ny, base) = (spec.ny(), spec.nzhat());
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; ny];
    loop {
        out.push(CandidateRecovery(digits.clone()));
        // odometer increment, last component fastest
        let mut pos = ny;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < base {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Members not strictly contained in another member.
pub fn maximal_members(family: &HyperedgeFamily) -> HyperedgeFamily {
    family
        .iter()
        .filter(|w| !family.iter().any(|v| v.len() > w.len() && w.is_subset_of(v)))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{card_game_spec, shannon_binary_spec, validate_spec, RawSpec};

    fn edge(m: &[usize]) -> Hyperedge {
        Hyperedge::new(m.to_vec()).unwrap()
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn balls_under_hamming() {
        let s = card_game_spec();
        assert_eq!(distortion_ball(&s, 1, 0.0), set(&[1]));
        assert_eq!(distortion_ball(&s, 1, 1.0), set(&[0, 1]));
        assert_eq!(distortion_ball(&s, 0, 0.0), set(&[0]));
    }

    #[test]
    fn induced_values_card_game() {
        let s = card_game_spec();
        // cards {2,3} against y=1
        assert_eq!(induced_values(&s, &edge(&[1, 2]), 0), set(&[1]));
        assert_eq!(induced_values(&s, &edge(&[0, 2]), 1), set(&[0, 1]));
        assert!(induced_values(&s, &edge(&[0]), 0).is_empty());
    }

    #[test]
    fn gamma_d_card_game() {
        let s = card_game_spec();
        let fam = enumerate_gamma_d(&s, &EnumerationCaps::default()).unwrap();
        let got: Vec<Vec<usize>> = fam.iter().map(|w| w.members().to_vec()).collect();
        assert_eq!(got, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2]]);
        assert!(!fam.contains(&edge(&[0, 1, 2])));
        assert!(!fam.contains(&edge(&[0, 2])));
        assert!(fam.covers(3));
    }

    #[test]
    fn maximal_members_examples() {
        let s = card_game_spec();
        let fam = enumerate_gamma_d(&s, &EnumerationCaps::default()).unwrap();
        let max: Vec<Vec<usize>> = maximal_members(&fam).iter().map(|w| w.members().to_vec()).collect();
        assert_eq!(max, vec![vec![0, 1], vec![1, 2]]);

        let singles: HyperedgeFamily = (0..4).map(Hyperedge::singleton).collect();
        assert_eq!(maximal_members(&singles), singles);

        let nested: HyperedgeFamily = [edge(&[0]), edge(&[0, 1])].into_iter().collect();
        assert_eq!(
            maximal_members(&nested),
            [edge(&[0, 1])].into_iter().collect::<HyperedgeFamily>()
        );
    }

    #[test]
    fn epsilon_thresholding() {
        let s = card_game_spec();
        assert_eq!(&epsilon_distortion(&s, 0.0).unwrap(), s.dist());
        let all_zero = epsilon_distortion(&s, 1.0).unwrap();
        assert!(all_zero.matrix().iter().all(|&v| v == 0.0));

        let raw = RawSpec {
            d: vec![vec![0.0, 0.3], vec![0.7, 0.0]],
            ..s.to_raw()
        };
        let s2 = validate_spec(&raw).unwrap();
        let de = epsilon_distortion(&s2, 0.5).unwrap();
        assert_eq!(de.matrix().as_slice().unwrap(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(epsilon_distortion(&s2, -0.1).is_err());
    }

    #[test]
    fn large_epsilon_admits_every_subset() {
        let s = card_game_spec();
        let s_eps = s.with_distortion(epsilon_distortion(&s, 2.0).unwrap()).unwrap();
        let fam = enumerate_gamma_d(&s_eps, &EnumerationCaps::default()).unwrap();
        assert_eq!(fam.len(), 7);
    }

    #[test]
    fn recovery_enumeration() {
        let s = card_game_spec();
        let all = enumerate_candidate_recoveries(&s, &EnumerationCaps::default()).unwrap();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].0, vec![0, 0, 0]);
        assert_eq!(all[1].0, vec![0, 0, 1]);
        assert_eq!(all[7].0, vec![1, 1, 1]);
        assert!(all.windows(2).all(|p| p[0] < p[1]));

        let one = shannon_binary_spec();
        assert_eq!(
            enumerate_candidate_recoveries(&one, &EnumerationCaps::default())
                .unwrap()
                .len(),
            2
        );

        let tight = EnumerationCaps {
            max_recoveries: 7,
            ..Default::default()
        };
        assert!(matches!(
            enumerate_candidate_recoveries(&s, &tight),
            Err(Error::RecoverySpaceTooLarge { size: 8, cap: 7 })
        ));
    }

    #[test]
    fn single_reconstruction_symbol_gives_one_recovery() {
        let raw = RawSpec {
            zhat_alphabet: vec!["c".into()],
            d: vec![vec![0.0], vec![1.0]],
            ..card_game_spec().to_raw()
        };
        let s = validate_spec(&raw).unwrap();
        let all = enumerate_candidate_recoveries(&s, &EnumerationCaps::default()).unwrap();
        assert_eq!(all, vec![CandidateRecovery(vec![0, 0, 0])]);
    }

    #[test]
    fn three_way_reconstruction_with_constant_side_info() {
        let raw = RawSpec {
            zhat_alphabet: vec!["a".into(), "b".into(), "c".into()],
            d: vec![vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.5]],
            ..shannon_binary_spec().to_raw()
        };
        let s = validate_spec(&raw).unwrap();
        assert_eq!(
            enumerate_candidate_recoveries(&s, &EnumerationCaps::default())
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn alphabet_cap_enforced() {
        let s = card_game_spec();
        let caps = EnumerationCaps {
            max_source_symbols: 2,
            ..Default::default()
        };
        assert!(matches!(
            enumerate_gamma_d(&s, &caps),
            Err(Error::AlphabetTooLarge { size: 3, cap: 2 })
        ));
    }

    #[test]
    fn hyperedge_order_and_serde() {
        assert!(edge(&[2]) < edge(&[0, 1]));
        assert!(edge(&[0, 2]) < edge(&[1, 2]));
        assert!(Hyperedge::new(vec![]).is_err());
        let w: Hyperedge = serde_json::from_str("[2, 0]").unwrap();
        assert_eq!(w.members(), &[0, 2]);
        assert!(serde_json::from_str::<Hyperedge>("[]").is_err());
    }
}
