//! Electrode layout, the IIVV pattern universe and pattern masks.
//!
//! A probe has a small grid of inner voltage-sensing electrodes surrounded by
//! a ring of larger current-injection electrodes. One measurement pattern is
//! an unordered current pair (II, two outer electrodes) combined with an
//! unordered voltage pair (VV, two inner electrodes).
//!
//! Geometric masks are declared as rank bands: for every II pair in a class,
//! the inner electrodes are ordered by their distance to that pair and a
//! contiguous band of the ordering is kept; every VV pair inside the band is
//! part of the mask. Bands are data, so the registry of named masks lives in
//! configuration rather than code.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{math, Error, Result};

pub type ElectrodeId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Top,
    Right,
    Bottom,
    Left,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Top => Side::Bottom,
            Side::Bottom => Side::Top,
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerElectrode {
    pub id: ElectrodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterElectrode {
    pub id: ElectrodeId,
    pub x: f64,
    pub y: f64,
    pub side: Side,
    /// Position around the ring; consecutive indices are neighbours.
    pub ring_index: usize,
}

/// Electrode coordinates in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeArray {
    pub inner: Vec<InnerElectrode>,
    pub outer: Vec<OuterElectrode>,
    #[serde(default)]
    pub excluded: Vec<ElectrodeId>,
    pub inner_diameter_mm: f64,
    pub outer_diameter_mm: f64,
}

impl ElectrodeArray {
    /// Calibrated default probe: a 5 x 5 inner grid at 1 mm pitch with the
    /// centre cell (electrode 13) unused, and two injection electrodes per
    /// side, 1 mm either side of the axis and 3 mm from the centre.
    pub fn standard() -> Self {
        let mut inner = Vec::with_capacity(24);
        for row in 0..5u16 {
            for col in 0..5u16 {
                let id = row * 5 + col + 1;
                if id == 13 {
                    continue;
                }
                inner.push(InnerElectrode {
                    id,
                    x: f64::from(col) - 2.0,
                    y: 2.0 - f64::from(row),
                });
            }
        }
        let ring = [
            (26, -1.0, 3.0, Side::Top),
            (27, 1.0, 3.0, Side::Top),
            (28, 3.0, 1.0, Side::Right),
            (29, 3.0, -1.0, Side::Right),
            (30, 1.0, -3.0, Side::Bottom),
            (31, -1.0, -3.0, Side::Bottom),
            (32, -3.0, -1.0, Side::Left),
            (33, -3.0, 1.0, Side::Left),
        ];
        let outer = ring
            .iter()
            .enumerate()
            .map(|(ring_index, &(id, x, y, side))| OuterElectrode {
                id,
                x,
                y,
                side,
                ring_index,
            })
            .collect();
        ElectrodeArray {
            inner,
            outer,
            excluded: alloc::vec![13],
            inner_diameter_mm: 0.6,
            outer_diameter_mm: 1.5,
        }
    }

    /// Small probe for quick experiments: a 3 x 2 inner grid at 1 mm pitch
    /// and one injection electrode per side (90 patterns).
    pub fn compact() -> Self {
        let inner = (0..6u16)
            .map(|i| InnerElectrode {
                id: i + 1,
                x: f64::from(i % 3) - 1.0,
                y: if i < 3 { 0.5 } else { -0.5 },
            })
            .collect();
        let ring = [
            (7, 0.0, 2.0, Side::Top),
            (8, 2.5, 0.0, Side::Right),
            (9, 0.0, -2.0, Side::Bottom),
            (10, -2.5, 0.0, Side::Left),
        ];
        let outer = ring
            .iter()
            .enumerate()
            .map(|(ring_index, &(id, x, y, side))| OuterElectrode {
                id,
                x,
                y,
                side,
                ring_index,
            })
            .collect();
        ElectrodeArray {
            inner,
            outer,
            excluded: Vec::new(),
            inner_diameter_mm: 0.6,
            outer_diameter_mm: 1.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner.len() < 2 || self.outer.len() < 2 {
            return Err(Error::Geometry(format!(
                "need at least 2 inner and 2 outer electrodes (got {} / {})",
                self.inner.len(),
                self.outer.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for id in self.inner.iter().map(|e| e.id).chain(self.outer.iter().map(|e| e.id)) {
            if !ids.insert(id) {
                return Err(Error::Geometry(format!("duplicate electrode id {id}")));
            }
        }
        if let Some(id) = self.excluded.iter().find(|id| ids.contains(id)) {
            return Err(Error::Geometry(format!("excluded electrode {id} is also listed as active")));
        }
        let mut ring: Vec<usize> = self.outer.iter().map(|e| e.ring_index).collect();
        ring.sort_unstable();
        if ring.iter().enumerate().any(|(i, &r)| i != r) {
            return Err(Error::Geometry("outer ring indices must be a permutation of 0..n".into()));
        }
        let coords = self
            .inner
            .iter()
            .map(|e| (e.x, e.y))
            .chain(self.outer.iter().map(|e| (e.x, e.y)));
        for (x, y) in coords {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::NonFinite("electrode coordinates".into()));
            }
        }
        Ok(())
    }

    pub fn inner_position(&self, id: ElectrodeId) -> Option<(f64, f64)> {
        self.inner.iter().find(|e| e.id == id).map(|e| (e.x, e.y))
    }

    pub fn outer_electrode(&self, id: ElectrodeId) -> Option<&OuterElectrode> {
        self.outer.iter().find(|e| e.id == id)
    }

    fn position(&self, id: ElectrodeId) -> Option<(f64, f64)> {
        self.inner_position(id)
            .or_else(|| self.outer_electrode(id).map(|e| (e.x, e.y)))
    }

    /// Centre-to-centre distance between two electrodes.
    pub fn distance(&self, a: ElectrodeId, b: ElectrodeId) -> Option<f64> {
        let (ax, ay) = self.position(a)?;
        let (bx, by) = self.position(b)?;
        Some(math::hypot(ax - bx, ay - by))
    }

    /// Relationship between two outer electrodes around the ring.
    pub fn ii_class(&self, a: ElectrodeId, b: ElectrodeId) -> Option<IiClass> {
        let ea = self.outer_electrode(a)?;
        let eb = self.outer_electrode(b)?;
        let n = self.outer.len();
        let d = ea.ring_index.abs_diff(eb.ring_index);
        let step = d.min(n - d);
        Some(if n % 2 == 0 && step == n / 2 {
            IiClass::Opposite
        } else {
            match step {
                1 if ea.side == eb.side => IiClass::AdjacentSide,
                1 => IiClass::AdjacentCorner,
                2 => IiClass::Skip1,
                3 if ea.side.opposite() == eb.side => IiClass::Skip2Straight,
                3 => IiClass::Skip2Diagonal,
                s => IiClass::Step(s),
            }
        })
    }
}

/// Ring relationship of a current-injection pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IiClass {
    /// Neighbours on the same side of the array.
    AdjacentSide,
    /// Neighbours around a corner.
    AdjacentCorner,
    /// One ring position skipped.
    Skip1,
    /// Two skipped, facing each other straight across the array.
    Skip2Straight,
    /// Two skipped, not straight across.
    Skip2Diagonal,
    /// Diametrically opposite on the ring.
    Opposite,
    Step(usize),
}

/// One tetrapolar configuration. Both pairs are stored lower id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IivvPattern {
    pub ii: (ElectrodeId, ElectrodeId),
    pub vv: (ElectrodeId, ElectrodeId),
}

fn ordered(a: ElectrodeId, b: ElectrodeId) -> (ElectrodeId, ElectrodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl IivvPattern {
    pub fn new(ii: (ElectrodeId, ElectrodeId), vv: (ElectrodeId, ElectrodeId)) -> Self {
        IivvPattern {
            ii: ordered(ii.0, ii.1),
            vv: ordered(vv.0, vv.1),
        }
    }
}

/// Every IIVV pattern of an array in canonical order: II pairs
/// lexicographically by electrode id, then VV pairs likewise, with the VV
/// index varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternUniverse {
    ii_pairs: Vec<(ElectrodeId, ElectrodeId)>,
    vv_pairs: Vec<(ElectrodeId, ElectrodeId)>,
}

fn all_pairs(mut ids: Vec<ElectrodeId>) -> Vec<(ElectrodeId, ElectrodeId)> {
    ids.sort_unstable();
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

impl PatternUniverse {
    pub fn enumerate_all(array: &ElectrodeArray) -> Self {
        PatternUniverse {
            ii_pairs: all_pairs(array.outer.iter().map(|e| e.id).collect()),
            vv_pairs: all_pairs(array.inner.iter().map(|e| e.id).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.ii_pairs.len() * self.vv_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ii_pairs(&self) -> &[(ElectrodeId, ElectrodeId)] {
        &self.ii_pairs
    }

    pub fn vv_pairs(&self) -> &[(ElectrodeId, ElectrodeId)] {
        &self.vv_pairs
    }

    pub fn pattern(&self, index: usize) -> IivvPattern {
        let n_vv = self.vv_pairs.len();
        IivvPattern {
            ii: self.ii_pairs[index / n_vv],
            vv: self.vv_pairs[index % n_vv],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = IivvPattern> + '_ {
        (0..self.len()).map(|i| self.pattern(i))
    }

    pub fn index_of(&self, pattern: &IivvPattern) -> Option<usize> {
        let ii = self.ii_pairs.binary_search(&pattern.ii).ok()?;
        let vv = self.vv_pairs.binary_search(&pattern.vv).ok()?;
        Some(ii * self.vv_pairs.len() + vv)
    }
}

/// Which current pairs a mask rule applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IiSelector {
    Named(IiGroup),
    Pairs { pairs: Vec<[ElectrodeId; 2]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IiGroup {
    All,
    Adjacent,
    AdjacentSide,
    AdjacentCorner,
    Skip1,
    Skip2,
    Skip2Straight,
    Skip2Diagonal,
    Opposite,
    /// Pairs whose electrodes sit on opposite sides of the array.
    Across,
}

impl IiGroup {
    fn admits(self, class: IiClass, sides_opposite: bool) -> bool {
        use IiClass as C;
        match self {
            IiGroup::All => true,
            IiGroup::Adjacent => matches!(class, C::AdjacentSide | C::AdjacentCorner),
            IiGroup::AdjacentSide => class == C::AdjacentSide,
            IiGroup::AdjacentCorner => class == C::AdjacentCorner,
            IiGroup::Skip1 => class == C::Skip1,
            IiGroup::Skip2 => matches!(class, C::Skip2Straight | C::Skip2Diagonal),
            IiGroup::Skip2Straight => class == C::Skip2Straight,
            IiGroup::Skip2Diagonal => class == C::Skip2Diagonal,
            IiGroup::Opposite => class == C::Opposite,
            IiGroup::Across => sides_opposite,
        }
    }
}

/// Distance used to order inner electrodes relative to a current pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    /// Distance to the midpoint between the two current electrodes.
    Midpoint,
    /// Perpendicular distance to the line through the two current electrodes.
    Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRule {
    pub ii: IiSelector,
    pub metric: RankMetric,
    /// Half-open band `[lo, hi)` of the distance ordering (0 = closest).
    pub ranks: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDefinition {
    pub name: String,
    #[serde(default)]
    pub expected_count: Option<usize>,
    pub rules: Vec<MaskRule>,
}

/// A named subset of the pattern universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub name: String,
    /// Sorted, unique indices into the universe.
    pub indices: Vec<usize>,
    pub expected_count: Option<usize>,
}

impl MaskSet {
    pub fn from_indices(name: impl Into<String>, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        MaskSet {
            name: name.into(),
            indices,
            expected_count: None,
        }
    }

    pub fn full(name: impl Into<String>, universe_len: usize) -> Self {
        Self::from_indices(name, (0..universe_len).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        match self.expected_count {
            Some(expected) if expected != self.indices.len() => Err(Error::MaskCardinality {
                name: self.name.clone(),
                expected,
                found: self.indices.len(),
            }),
            _ => Ok(()),
        }
    }
}

fn quantize(d: f64) -> i64 {
    libm::round(d * 1e9) as i64
}

/// Inner electrode ids ordered by distance to a current pair, ties broken by
/// lower id.
pub fn rank_inner(array: &ElectrodeArray, ii: (ElectrodeId, ElectrodeId), metric: RankMetric) -> Result<Vec<ElectrodeId>> {
    let a = array
        .outer_electrode(ii.0)
        .ok_or_else(|| Error::Geometry(format!("{} is not an outer electrode", ii.0)))?;
    let b = array
        .outer_electrode(ii.1)
        .ok_or_else(|| Error::Geometry(format!("{} is not an outer electrode", ii.1)))?;
    let (mx, my) = ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = math::hypot(dx, dy);
    let mut keyed: Vec<(i64, ElectrodeId)> = array
        .inner
        .iter()
        .map(|e| {
            let d = match metric {
                RankMetric::Midpoint => math::hypot(e.x - mx, e.y - my),
                RankMetric::Axis => math::abs(dy * (e.x - a.x) - dx * (e.y - a.y)) / len,
            };
            (quantize(d), e.id)
        })
        .collect();
    keyed.sort_unstable();
    Ok(keyed.into_iter().map(|(_, id)| id).collect())
}

fn selected_ii_pairs(
    array: &ElectrodeArray,
    universe: &PatternUniverse,
    selector: &IiSelector,
) -> Result<Vec<usize>> {
    match selector {
        IiSelector::Named(group) => Ok(universe
            .ii_pairs()
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| {
                let class = array.ii_class(a, b).expect("universe built from this array");
                let sa = array.outer_electrode(a).map(|e| e.side);
                let sb = array.outer_electrode(b).map(|e| e.side);
                let across = matches!((sa, sb), (Some(x), Some(y)) if x.opposite() == y);
                group.admits(class, across)
            })
            .map(|(i, _)| i)
            .collect()),
        IiSelector::Pairs { pairs } => pairs
            .iter()
            .map(|&[a, b]| {
                universe
                    .ii_pairs()
                    .binary_search(&ordered(a, b))
                    .map_err(|_| Error::Geometry(format!("unknown current pair {a}-{b}")))
            })
            .collect(),
    }
}

/// Evaluates a mask definition against the array and checks the declared
/// cardinality.
pub fn build_geometric_mask(
    definition: &MaskDefinition,
    array: &ElectrodeArray,
    universe: &PatternUniverse,
) -> Result<MaskSet> {
    let n_vv = universe.vv_pairs().len();
    let n_inner = array.inner.len();
    let mut chosen = BTreeSet::new();
    for rule in &definition.rules {
        let [lo, hi] = rule.ranks;
        if lo > hi || hi > n_inner {
            return Err(Error::InvalidArgument(format!(
                "mask `{}`: rank band [{lo}, {hi}) outside 0..{n_inner}",
                definition.name
            )));
        }
        for ii_index in selected_ii_pairs(array, universe, &rule.ii)? {
            let ii = universe.ii_pairs()[ii_index];
            let mut band: Vec<ElectrodeId> = rank_inner(array, ii, rule.metric)?[lo..hi].to_vec();
            band.sort_unstable();
            for (i, &a) in band.iter().enumerate() {
                for &b in &band[i + 1..] {
                    let vv = universe
                        .vv_pairs()
                        .binary_search(&(a, b))
                        .expect("inner ids come from the array");
                    chosen.insert(ii_index * n_vv + vv);
                }
            }
        }
    }
    let mask = MaskSet {
        name: definition.name.clone(),
        indices: chosen.into_iter().collect(),
        expected_count: definition.expected_count,
    };
    mask.validate()?;
    Ok(mask)
}

/// Mean current-pair and voltage-pair electrode distances over a mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub mean_ii_mm: f64,
    pub mean_vv_mm: f64,
    pub n_ii_electrodes: usize,
    pub n_vv_electrodes: usize,
}

pub fn mask_stats(mask: &MaskSet, universe: &PatternUniverse, array: &ElectrodeArray) -> Result<MaskStats> {
    if mask.is_empty() {
        return Err(Error::EmptyMask(mask.name.clone()));
    }
    let mut ii_sum = 0.0;
    let mut vv_sum = 0.0;
    let mut ii_ids = BTreeSet::new();
    let mut vv_ids = BTreeSet::new();
    for &idx in &mask.indices {
        let p = universe.pattern(idx);
        ii_sum += array
            .distance(p.ii.0, p.ii.1)
            .ok_or_else(|| Error::Geometry("pattern outside array".into()))?;
        vv_sum += array
            .distance(p.vv.0, p.vv.1)
            .ok_or_else(|| Error::Geometry("pattern outside array".into()))?;
        ii_ids.extend([p.ii.0, p.ii.1]);
        vv_ids.extend([p.vv.0, p.vv.1]);
    }
    let n = mask.len() as f64;
    Ok(MaskStats {
        mean_ii_mm: ii_sum / n,
        mean_vv_mm: vv_sum / n,
        n_ii_electrodes: ii_ids.len(),
        n_vv_electrodes: vv_ids.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSide {
    Below,
    Above,
}

/// Patterns whose mean impedance magnitude lies on one side of a threshold.
///
/// `pattern_means` holds one value per universe pattern (NaN for patterns
/// never observed, which land on neither side). `Below` is strict, `Above`
/// inclusive, so the two sides partition the observed patterns.
pub fn build_zthreshold_mask(pattern_means: &[f64], threshold_ohm: f64, side: ThresholdSide) -> MaskSet {
    let indices = pattern_means
        .iter()
        .enumerate()
        .filter(|(_, m)| {
            !m.is_nan()
                && match side {
                    ThresholdSide::Below => **m < threshold_ohm,
                    ThresholdSide::Above => **m >= threshold_ohm,
                }
        })
        .map(|(i, _)| i)
        .collect();
    let side_name = match side {
        ThresholdSide::Below => "below",
        ThresholdSide::Above => "above",
    };
    MaskSet::from_indices(format!("z-threshold {side_name} {threshold_ohm}"), indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny(n_outer: usize, n_inner: usize) -> ElectrodeArray {
        let sides = [Side::Top, Side::Right, Side::Bottom, Side::Left];
        ElectrodeArray {
            inner: (0..n_inner)
                .map(|i| InnerElectrode {
                    id: i as u16 + 1,
                    x: i as f64 * 0.5,
                    y: 0.0,
                })
                .collect(),
            outer: (0..n_outer)
                .map(|i| {
                    let t = core::f64::consts::TAU * i as f64 / n_outer as f64;
                    OuterElectrode {
                        id: 100 + i as u16,
                        x: 4.0 * libm::cos(t),
                        y: 4.0 * libm::sin(t),
                        side: sides[(i * 4 / n_outer) % 4],
                        ring_index: i,
                    }
                })
                .collect(),
            excluded: vec![],
            inner_diameter_mm: 0.6,
            outer_diameter_mm: 1.5,
        }
    }

    #[test]
    fn standard_universe_size() {
        let array = ElectrodeArray::standard();
        array.validate().unwrap();
        let u = PatternUniverse::enumerate_all(&array);
        assert_eq!(u.ii_pairs().len(), 28);
        assert_eq!(u.vv_pairs().len(), 276);
        assert_eq!(u.len(), 7728);
    }

    #[test]
    fn compact_universe_size() {
        let array = ElectrodeArray::compact();
        array.validate().unwrap();
        assert_eq!(PatternUniverse::enumerate_all(&array).len(), 90);
    }

    #[test]
    fn small_array_combinatorics() {
        let u = PatternUniverse::enumerate_all(&tiny(4, 3));
        assert_eq!(u.len(), 18);
    }

    #[test]
    fn index_round_trip() {
        let u = PatternUniverse::enumerate_all(&ElectrodeArray::standard());
        for i in (0..u.len()).step_by(97) {
            assert_eq!(u.index_of(&u.pattern(i)), Some(i));
        }
        let reversed = IivvPattern::new((27, 26), (2, 1));
        assert_eq!(reversed.ii, (26, 27));
        assert_eq!(u.index_of(&reversed), Some(0));
    }

    #[test]
    fn ii_classes_of_standard_ring() {
        let a = ElectrodeArray::standard();
        assert_eq!(a.ii_class(26, 27), Some(IiClass::AdjacentSide));
        assert_eq!(a.ii_class(27, 28), Some(IiClass::AdjacentCorner));
        assert_eq!(a.ii_class(26, 28), Some(IiClass::Skip1));
        assert_eq!(a.ii_class(27, 30), Some(IiClass::Skip2Straight));
        assert_eq!(a.ii_class(26, 29), Some(IiClass::Skip2Diagonal));
        assert_eq!(a.ii_class(26, 30), Some(IiClass::Opposite));
        assert_eq!(a.ii_class(26, 1), None);
    }

    #[test]
    fn single_pattern_stats() {
        let mut array = tiny(4, 3);
        array.outer[0].x = 0.0;
        array.outer[0].y = 0.0;
        array.outer[1].x = 3.0;
        array.outer[1].y = 0.0;
        let u = PatternUniverse::enumerate_all(&array);
        let idx = u.index_of(&IivvPattern::new((100, 101), (1, 3))).unwrap();
        let mask = MaskSet::from_indices("one", vec![idx]);
        let s = mask_stats(&mask, &u, &array).unwrap();
        assert!((s.mean_ii_mm - 3.0).abs() < 1e-12);
        assert!((s.mean_vv_mm - 1.0).abs() < 1e-12);
        assert!(mask_stats(&MaskSet::from_indices("e", vec![]), &u, &array).is_err());
    }

    #[test]
    fn full_band_rule_yields_universe() {
        let array = ElectrodeArray::standard();
        let u = PatternUniverse::enumerate_all(&array);
        let def = MaskDefinition {
            name: "All".into(),
            expected_count: Some(7728),
            rules: vec![MaskRule {
                ii: IiSelector::Named(IiGroup::All),
                metric: RankMetric::Midpoint,
                ranks: [0, 24],
            }],
        };
        let m = build_geometric_mask(&def, &array, &u).unwrap();
        assert_eq!(m.len(), 7728);
        let s = mask_stats(&m, &u, &array).unwrap();
        assert!((s.mean_vv_mm - 2.71).abs() / 2.71 < 0.05);
        assert!((s.mean_ii_mm - 4.54).abs() / 4.54 < 0.05);
    }

    #[test]
    fn cardinality_mismatch_names_mask() {
        let array = ElectrodeArray::standard();
        let u = PatternUniverse::enumerate_all(&array);
        let def = MaskDefinition {
            name: "Broken".into(),
            expected_count: Some(17),
            rules: vec![MaskRule {
                ii: IiSelector::Named(IiGroup::AdjacentSide),
                metric: RankMetric::Midpoint,
                ranks: [0, 2],
            }],
        };
        match build_geometric_mask(&def, &array, &u) {
            Err(Error::MaskCardinality { name, expected, found }) => {
                assert_eq!(name, "Broken");
                assert_eq!(expected, 17);
                assert_eq!(found, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_band_rejected() {
        let array = ElectrodeArray::standard();
        let u = PatternUniverse::enumerate_all(&array);
        let def = MaskDefinition {
            name: "x".into(),
            expected_count: None,
            rules: vec![MaskRule {
                ii: IiSelector::Named(IiGroup::All),
                metric: RankMetric::Axis,
                ranks: [3, 25],
            }],
        };
        assert!(build_geometric_mask(&def, &array, &u).is_err());
    }

    #[test]
    fn zthreshold_boundaries() {
        let means = [5.0, 1.0, f64::NAN, 3.0];
        assert_eq!(build_zthreshold_mask(&means, 0.5, ThresholdSide::Above).indices, vec![0, 1, 3]);
        assert!(build_zthreshold_mask(&means, 9.0, ThresholdSide::Above).is_empty());
        assert_eq!(build_zthreshold_mask(&means, 3.0, ThresholdSide::Below).indices, vec![1]);
    }
}
