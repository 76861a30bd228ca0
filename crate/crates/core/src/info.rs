//! Information measures in bits, auxiliary channels `p(u|x)` and decoders.
//!
//! Channels act on `X` alone, so the joint law `p(x, y) p(u|x)` satisfies the
//! Markov chain `U - X - Y` by construction.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{CandidateRecovery, Hyperedge, MultiHyperedge};
use crate::model::ProblemSpec;

/// Allowed deviation of each channel column sum from 1.
pub const COLUMN_TOLERANCE: f64 = 1e-9;

/// What an auxiliary atom stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AtomLabel {
    /// A bare auxiliary symbol; decoding needs an external [`DecoderMap`].
    Plain,
    /// A candidate recovery (the auxiliary alphabet of the recovery program).
    Recovery(CandidateRecovery),
    /// A full multi-hyperedge: the channel may only send `x` to it when
    /// `x` is a member of the subset part.
    Hyperedge(MultiHyperedge),
}

impl AtomLabel {
    pub fn recovery(&self) -> Option<&CandidateRecovery> {
        match self {
            AtomLabel::Plain => None,
            AtomLabel::Recovery(r) => Some(r),
            AtomLabel::Hyperedge(m) => Some(&m.recovery),
        }
    }

    pub fn subset(&self) -> Option<&Hyperedge> {
        match self {
            AtomLabel::Hyperedge(m) => Some(&m.edge),
            _ => None,
        }
    }

    /// Whether the support constraint lets `x` map to this atom.
    #[inline]
    pub fn admits(&self, x: usize) -> bool {
        match self {
            AtomLabel::Hyperedge(m) => m.edge.contains(x),
            _ => true,
        }
    }
}

/// Conditional law `p(u|x)` stored as an `atoms x |X|` matrix whose columns
/// sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelDoc", into = "ChannelDoc")]
pub struct AuxChannel {
    cond: Array2<f64>,
    labels: Vec<AtomLabel>,
}

impl AuxChannel {
    pub fn new(cond: Array2<f64>, labels: Vec<AtomLabel>) -> Result<Self> {
        let (atoms, nx) = cond.dim();
        if atoms == 0 || nx == 0 {
            return Err(Error::InvalidChannel(
                "channel needs at least one atom and one source symbol".into(),
            ));
        }
        if labels.len() != atoms {
            return Err(Error::DimensionMismatch {
                what: "channel atom labels".into(),
                expected: atoms,
                found: labels.len(),
            });
        }
        for ((u, x), &v) in cond.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidChannel(format!("p(u={u}|x={x}) = {v} is not in [0, 1]")));
            }
        }
        for (x, col) in cond.columns().into_iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > COLUMN_TOLERANCE {
                return Err(Error::InvalidChannel(format!("column x={x} sums to {s}")));
            }
        }
        Ok(Self { cond, labels })
    }

    /// Trusted constructor for matrices that were normalized in place.
    pub(crate) fn from_parts(cond: Array2<f64>, labels: Vec<AtomLabel>) -> Self {
        debug_assert_eq!(cond.nrows(), labels.len());
        Self { cond, labels }
    }

    /// Channel with every column uniform over the atoms that admit it.
    pub fn uniform(nx: usize, labels: Vec<AtomLabel>) -> Result<Self> {
        let cond = Array2::from_shape_fn((labels.len(), nx), |(u, x)| if labels[u].admits(x) { 1.0 } else { 0.0 });
        let mut ch = Self::from_parts(cond, labels);
        ch.normalize_columns()?;
        Ok(ch)
    }

    pub fn num_atoms(&self) -> usize {
        self.cond.nrows()
    }

    pub fn nx(&self) -> usize {
        self.cond.ncols()
    }

    #[inline]
    pub fn prob(&self, u: usize, x: usize) -> f64 {
        self.cond[[u, x]]
    }

    pub fn cond(&self) -> &Array2<f64> {
        &self.cond
    }

    pub fn labels(&self) -> &[AtomLabel] {
        &self.labels
    }

    pub fn label(&self, u: usize) -> &AtomLabel {
        &self.labels[u]
    }

    /// Largest `|sum_u p(u|x) - 1|` over source symbols.
    pub fn column_sum_residual(&self) -> f64 {
        self.cond
            .columns()
            .into_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Marginal `p(u) = sum_x p(x) p(u|x)`.
    pub fn atom_mass(&self, spec: &ProblemSpec) -> Vec<f64> {
        (0..self.num_atoms())
            .map(|u| (0..self.nx()).map(|x| spec.p_x(x) * self.cond[[u, x]]).sum())
            .collect()
    }

    /// Number of atoms with positive marginal probability.
    pub fn support_size(&self, spec: &ProblemSpec) -> usize {
        self.atom_mass(spec).iter().filter(|&&m| m > 0.0).count()
    }

    /// Decoder that reads the recovery annotation of each atom.
    pub fn decoder(&self) -> Result<DecoderMap> {
        let ny = self.labels.first().and_then(|l| l.recovery()).map_or(0, |r| r.len());
        let mut table = Array2::zeros((self.num_atoms(), ny));
        for (u, label) in self.labels.iter().enumerate() {
            let r = label.recovery().ok_or(Error::UnannotatedChannel {
                atom: u,
                needed: "candidate recovery",
            })?;
            if r.len() != ny {
                return Err(Error::DimensionMismatch {
                    what: format!("recovery length of atom {u}"),
                    expected: ny,
                    found: r.len(),
                });
            }
            for y in 0..ny {
                table[[u, y]] = r.at(y);
            }
        }
        Ok(DecoderMap { table })
    }

    /// Pointwise `t * a + (1 - t) * b` for channels over the same atoms.
    pub fn mix(a: &AuxChannel, b: &AuxChannel, t: f64) -> Result<AuxChannel> {
        if a.labels != b.labels || a.cond.dim() != b.cond.dim() {
            return Err(Error::InvalidChannel(
                "mixed channels must share their atom alphabet".into(),
            ));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("mixing weight {t} not in [0, 1]")));
        }
        let cond = &a.cond * t + &b.cond * (1.0 - t);
        Ok(Self::from_parts(cond, a.labels.clone()))
    }

    /// Rescales every column to sum to one; fails if a column has no mass.
    pub(crate) fn normalize_columns(&mut self) -> Result<()> {
        for (x, mut col) in self.cond.columns_mut().into_iter().enumerate() {
            let s = col.sum();
            if s.is_nan() || s <= 0.0 {
                return Err(Error::EmptySupport { x });
            }
            col /= s;
        }
        Ok(())
    }

    pub(crate) fn cond_mut(&mut self) -> &mut Array2<f64> {
        &mut self.cond
    }

    /// Checks that the channel fits `spec` (sizes, annotations, support
    /// constraint).
    pub fn check_against(&self, spec: &ProblemSpec) -> Result<()> {
        if self.nx() != spec.nx() {
            return Err(Error::DimensionMismatch {
                what: "channel source alphabet".into(),
                expected: spec.nx(),
                found: self.nx(),
            });
        }
        for (u, label) in self.labels.iter().enumerate() {
            if let Some(r) = label.recovery() {
                if r.len() != spec.ny() {
                    return Err(Error::DimensionMismatch {
                        what: format!("recovery length of atom {u}"),
                        expected: spec.ny(),
                        found: r.len(),
                    });
                }
                if let Some(y) = (0..spec.ny()).find(|&y| r.at(y) >= spec.nzhat()) {
                    return Err(Error::IndexOutOfRange {
                        what: "recovery",
                        row: u,
                        col: y,
                        index: r.at(y),
                        size: spec.nzhat(),
                    });
                }
            }
            if let Some(w) = label.subset() {
                if let Some(&x) = w.members().iter().find(|&&x| x >= spec.nx()) {
                    return Err(Error::IndexOutOfRange {
                        what: "hyperedge",
                        row: u,
                        col: 0,
                        index: x,
                        size: spec.nx(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AtomDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subset: Option<Hyperedge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recovery: Option<CandidateRecovery>,
    /// `p(u|x)` for each source symbol.
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ChannelDoc {
    atoms: Vec<AtomDoc>,
}

impl From<AuxChannel> for ChannelDoc {
    fn from(ch: AuxChannel) -> Self {
        let atoms = ch
            .labels
            .iter()
            .enumerate()
            .map(|(u, label)| AtomDoc {
                subset: label.subset().cloned(),
                recovery: label.recovery().cloned(),
                probs: ch.cond.row(u).to_vec(),
            })
            .collect();
        ChannelDoc { atoms }
    }
}

impl TryFrom<ChannelDoc> for AuxChannel {
    type Error = Error;
    fn try_from(doc: ChannelDoc) -> Result<Self> {
        let nx = doc.atoms.first().map_or(0, |a| a.probs.len());
        let mut flat = Vec::with_capacity(doc.atoms.len() * nx);
        let mut labels = Vec::with_capacity(doc.atoms.len());
        for (u, atom) in doc.atoms.into_iter().enumerate() {
            if atom.probs.len() != nx {
                return Err(Error::DimensionMismatch {
                    what: format!("probs length of atom {u}"),
                    expected: nx,
                    found: atom.probs.len(),
                });
            }
            flat.extend(atom.probs);
            labels.push(match (atom.subset, atom.recovery) {
                (None, None) => AtomLabel::Plain,
                (None, Some(r)) => AtomLabel::Recovery(r),
                (Some(edge), Some(recovery)) => AtomLabel::Hyperedge(MultiHyperedge { edge, recovery }),
                (Some(_), None) => return Err(Error::InvalidChannel(format!("atom {u} has a subset but no recovery"))),
            });
        }
        let cond =
            Array2::from_shape_vec((labels.len(), nx), flat).map_err(|e| Error::InvalidChannel(e.to_string()))?;
        AuxChannel::new(cond, labels)
    }
}

/// Decoder `g(u, y)` as a table of reconstruction indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderMap {
    table: Array2<usize>,
}

impl DecoderMap {
    pub fn new(table: Array2<usize>) -> Self {
        Self { table }
    }

    #[inline]
    pub fn at(&self, u: usize, y: usize) -> usize {
        self.table[[u, y]]
    }

    pub fn table(&self) -> &Array2<usize> {
        &self.table
    }

    /// The row of atom `u` as a candidate recovery.
    pub fn recovery(&self, u: usize) -> CandidateRecovery {
        CandidateRecovery(self.table.row(u).to_vec())
    }
}

/// `H(p)` in bits with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("binary entropy needs p in [0, 1], got {p}")));
    }
    Ok(xlog2x_neg(p) + xlog2x_neg(1.0 - p))
}

#[inline]
fn xlog2x_neg(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

fn check_dims(spec: &ProblemSpec, ch: &AuxChannel) -> Result<()> {
    if ch.nx() != spec.nx() {
        return Err(Error::DimensionMismatch {
            what: "channel source alphabet".into(),
            expected: spec.nx(),
            found: ch.nx(),
        });
    }
    Ok(())
}

/// Posterior `q(u|y) = sum_x p(x|y) p(u|x)`; rows of zero-probability `y` are 0.
pub fn posterior(spec: &ProblemSpec, ch: &AuxChannel) -> Array2<f64> {
    let mut q = Array2::zeros((ch.num_atoms(), spec.ny()));
    for y in 0..spec.ny() {
        for x in 0..spec.nx() {
            let w = spec.p_x_given_y(x, y);
            if w > 0.0 {
                for u in 0..ch.num_atoms() {
                    q[[u, y]] += w * ch.cond[[u, x]];
                }
            }
        }
    }
    q
}

/// `I(X; U | Y)` in bits.
pub fn conditional_mutual_information(spec: &ProblemSpec, ch: &AuxChannel) -> Result<f64> {
    check_dims(spec, ch)?;
    let q = posterior(spec, ch);
    Ok(cmi_with_posterior(spec, ch, &q))
}

pub(crate) fn cmi_with_posterior(spec: &ProblemSpec, ch: &AuxChannel, q: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for x in 0..spec.nx() {
        for y in 0..spec.ny() {
            let pxy = spec.p(x, y);
            if pxy <= 0.0 {
                continue;
            }
            for u in 0..ch.num_atoms() {
                let c = ch.cond[[u, x]];
                // q(u|y) >= p(x|y) c > 0 whenever c > 0 here
                if c > 0.0 {
                    total += pxy * c * (c / q[[u, y]]).log2();
                }
            }
        }
    }
    total.max(0.0)
}

/// `E[d(f(X, Y), g(U, Y))]`.
pub fn expected_distortion(spec: &ProblemSpec, ch: &AuxChannel, dec: &DecoderMap) -> Result<f64> {
    check_dims(spec, ch)?;
    let (rows, cols) = dec.table.dim();
    if rows != ch.num_atoms() || cols != spec.ny() {
        return Err(Error::DimensionMismatch {
            what: "decoder table size (atoms*|Y|)".into(),
            expected: ch.num_atoms() * spec.ny(),
            found: rows * cols,
        });
    }
    let mut total = 0.0;
    for x in 0..spec.nx() {
        for y in 0..spec.ny() {
            let pxy = spec.p(x, y);
            if pxy <= 0.0 {
                continue;
            }
            for u in 0..ch.num_atoms() {
                let c = ch.cond[[u, x]];
                if c > 0.0 {
                    total += pxy * c * spec.loss(x, y, dec.at(u, y));
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::card_game_spec;
    use approx::assert_abs_diff_eq;

    fn rec(v: &[usize]) -> AtomLabel {
        AtomLabel::Recovery(CandidateRecovery(v.to_vec()))
    }

    /// Two-atom card-game channel: atom 0 recovers (1,0,0) with probability
    /// `p[x]`, atom 1 recovers (1,1,0).
    fn card_channel(p: [f64; 3]) -> AuxChannel {
        let cond = Array2::from_shape_fn((2, 3), |(u, x)| if u == 0 { p[x] } else { 1.0 - p[x] });
        AuxChannel::new(cond, vec![rec(&[1, 0, 0]), rec(&[1, 1, 0])]).unwrap()
    }

    fn closed_form(d: f64) -> f64 {
        2.0 / 3.0 * (binary_entropy((1.0 + 6.0 * d) / 4.0).unwrap() - binary_entropy(3.0 * d).unwrap())
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.25).unwrap(), 0.811278, epsilon = 1e-6);
        assert!(matches!(binary_entropy(1.5), Err(Error::Domain(_))));
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn independent_channel_has_zero_information() {
        let s = card_game_spec();
        let ch = card_channel([0.3, 0.3, 0.3]);
        assert_abs_diff_eq!(conditional_mutual_information(&s, &ch).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn card_game_optimal_family() {
        let s = card_game_spec();
        for (d, expected) in [(1.0 / 12.0, 0.095437), (0.0, 0.540852)] {
            let ch = card_channel([1.0 - 3.0 * d, 0.5, 3.0 * d]);
            let rate = conditional_mutual_information(&s, &ch).unwrap();
            assert_abs_diff_eq!(rate, expected, epsilon = 1e-5);
            assert_abs_diff_eq!(rate, closed_form(d), epsilon = 1e-12);
            let dist = expected_distortion(&s, &ch, &ch.decoder().unwrap()).unwrap();
            let (p1, p3) = (1.0 - 3.0 * d, 3.0 * d);
            assert_abs_diff_eq!(dist, (1.0 - p1 + p3) / 6.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_atom_distortion_by_hand() {
        // Recovery (1,1,0) errs only where f differs from it on the support:
        // y=2 with x=1 (f=0). One cell of mass 1/6.
        let s = card_game_spec();
        let ch = AuxChannel::new(Array2::ones((1, 3)), vec![rec(&[1, 1, 0])]).unwrap();
        let dist = expected_distortion(&s, &ch, &ch.decoder().unwrap()).unwrap();
        assert_abs_diff_eq!(dist, 1.0 / 6.0, epsilon = 1e-15);
        // The perfect lookup per y: cards can't tie, so (1, *, 0) is always
        // right at y=1 and y=3.
        let ch = AuxChannel::new(Array2::ones((1, 3)), vec![rec(&[1, 0, 0])]).unwrap();
        assert_abs_diff_eq!(
            expected_distortion(&s, &ch, &ch.decoder().unwrap()).unwrap(),
            1.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_distortion_decoder() {
        // x=1 -> (1,0,0), x=3 -> (1,1,0), x=2 anywhere: always exact.
        let s = card_game_spec();
        let ch = card_channel([1.0, 0.5, 0.0]);
        assert_eq!(expected_distortion(&s, &ch, &ch.decoder().unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn dimension_checks() {
        let s = card_game_spec();
        let ch = AuxChannel::new(Array2::ones((1, 2)), vec![rec(&[0, 0, 0])]).unwrap();
        assert!(matches!(
            conditional_mutual_information(&s, &ch),
            Err(Error::DimensionMismatch { .. })
        ));
        let ch = card_channel([0.5; 3]);
        let dec = DecoderMap::new(Array2::zeros((2, 2)));
        assert!(matches!(
            expected_distortion(&s, &ch, &dec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn channel_validation() {
        assert!(AuxChannel::new(Array2::from_elem((2, 1), 0.6), vec![AtomLabel::Plain; 2]).is_err());
        assert!(AuxChannel::new(Array2::from_elem((1, 1), 1.0), vec![]).is_err());
        let plain = AuxChannel::new(Array2::from_elem((1, 1), 1.0), vec![AtomLabel::Plain]).unwrap();
        assert!(matches!(
            plain.decoder(),
            Err(Error::UnannotatedChannel { atom: 0, .. })
        ));
    }

    #[test]
    fn channel_json_round_trip() {
        let ch = card_channel([0.75, 0.5, 0.25]);
        let json = serde_json::to_string(&ch).unwrap();
        let back: AuxChannel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ch);
    }
}
