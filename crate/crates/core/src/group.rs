//! The acting group `Z^d`, finite windows and Følner sequences.
//!
//! Group elements are integer vectors under componentwise addition. Windows
//! are stored as sorted, deduplicated element vectors so set operations are
//! exact.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An element of `Z^rank`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Element(Vec<i64>);

impl Element {
    pub fn new(coords: Vec<i64>) -> Self {
        Self(coords)
    }

    pub fn identity(rank: usize) -> Self {
        Self(vec![0; rank])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn add(&self, other: &Element) -> Element {
        debug_assert_eq!(self.rank(), other.rank());
        Element(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn inverse(&self) -> Element {
        Element(self.0.iter().map(|c| -c).collect())
    }

    pub fn norm1(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn norm_inf(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<i64>> for Element {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

impl From<i64> for Element {
    fn from(v: i64) -> Self {
        Self(vec![v])
    }
}

/// The group `Z^rank`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub rank: usize,
}

impl GroupSpec {
    pub fn new(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Config("group rank must be positive".into()));
        }
        Ok(Self { rank })
    }

    pub fn identity(&self) -> Element {
        Element::identity(self.rank)
    }

    pub fn op(&self, a: &Element, b: &Element) -> Element {
        a.add(b)
    }

    pub fn inverse(&self, a: &Element) -> Element {
        a.inverse()
    }
}

/// A finite nonempty subset of the group.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Element>", into = "Vec<Element>")]
pub struct FiniteWindow {
    rank: usize,
    elements: Vec<Element>,
}

impl FiniteWindow {
    pub fn new(elements: impl IntoIterator<Item = Element>) -> Result<Self> {
        let set: BTreeSet<Element> = elements.into_iter().collect();
        let mut iter = set.iter();
        let rank = match iter.next() {
            Some(e) => e.rank(),
            None => return Err(Error::Config("window must be nonempty".into())),
        };
        if rank == 0 || iter.any(|e| e.rank() != rank) {
            return Err(Error::Config(
                "window elements must share a positive rank".into(),
            ));
        }
        Ok(Self {
            rank,
            elements: set.into_iter().collect(),
        })
    }

    pub fn singleton(e: Element) -> Self {
        Self {
            rank: e.rank(),
            elements: vec![e],
        }
    }

    /// The integer box `[0, n)^rank`.
    pub fn cube(rank: usize, n: usize) -> Result<Self> {
        Self::boxed(&vec![n; rank])
    }

    /// The integer box `[0, sides[0]) × … × [0, sides[d-1])`.
    pub fn boxed(sides: &[usize]) -> Result<Self> {
        if sides.is_empty() || sides.contains(&0) {
            return Err(Error::Config(format!(
                "box sides must be positive, got {sides:?}"
            )));
        }
        let mut elements = vec![Vec::with_capacity(sides.len())];
        for &side in sides {
            elements = elements
                .into_iter()
                .flat_map(|prefix| {
                    (0..side as i64).map(move |c| {
                        let mut v = prefix.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        Self::new(elements.into_iter().map(Element))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn iter(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter()
    }

    pub fn contains(&self, e: &Element) -> bool {
        self.elements.binary_search(e).is_ok()
    }

    pub fn index_of(&self, e: &Element) -> Option<usize> {
        self.elements.binary_search(e).ok()
    }

    /// `gF = {g + f : f ∈ F}`.
    pub fn translate(&self, g: &Element) -> FiniteWindow {
        // translation preserves the lexicographic order
        Self {
            rank: self.rank,
            elements: self.elements.iter().map(|f| g.add(f)).collect(),
        }
    }

    pub fn inverse(&self) -> FiniteWindow {
        let mut elements: Vec<Element> = self.elements.iter().map(Element::inverse).collect();
        elements.sort();
        Self {
            rank: self.rank,
            elements,
        }
    }

    pub fn is_subset(&self, other: &FiniteWindow) -> bool {
        self.elements.iter().all(|e| other.contains(e))
    }

    /// Side lengths when the window is exactly a box `[0, s_1) × … × [0, s_d)`.
    pub fn box_sides(&self) -> Option<Vec<usize>> {
        let mut sides = Vec::with_capacity(self.rank);
        for axis in 0..self.rank {
            let min = self.elements.iter().map(|e| e.0[axis]).min()?;
            let max = self.elements.iter().map(|e| e.0[axis]).max()?;
            if min != 0 {
                return None;
            }
            sides.push((max + 1) as usize);
        }
        (sides.iter().product::<usize>() == self.len()).then_some(sides)
    }
}

impl fmt::Debug for FiniteWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.elements.iter()).finish()
    }
}

impl TryFrom<Vec<Element>> for FiniteWindow {
    type Error = Error;

    fn try_from(v: Vec<Element>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FiniteWindow> for Vec<Element> {
    fn from(w: FiniteWindow) -> Self {
        w.elements
    }
}

/// `|F \ gF| / |F|`.
pub fn boundary_ratio(window: &FiniteWindow, g: &Element) -> f64 {
    let shifted = window.translate(g);
    let outside = window.iter().filter(|f| !shifted.contains(f)).count();
    outside as f64 / window.len() as f64
}

/// The sumset `SF = {s + f}`.
pub fn window_product(s: &FiniteWindow, f: &FiniteWindow) -> FiniteWindow {
    let set: BTreeSet<Element> = s
        .iter()
        .flat_map(|a| f.iter().map(move |b| a.add(b)))
        .collect();
    FiniteWindow {
        rank: f.rank,
        elements: set.into_iter().collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum FolnerShape {
    /// `F_n = [0, n)^rank`.
    Boxes,
    /// `F_n` is the n-th window of the list, counting from 1.
    Explicit { windows: Vec<FiniteWindow> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerSequence {
    rank: usize,
    shape: FolnerShape,
    n_min: usize,
    n_max: usize,
}

impl FolnerSequence {
    pub fn boxes(rank: usize, n_min: usize, n_max: usize) -> Result<Self> {
        if rank == 0 || n_min == 0 || n_min > n_max {
            return Err(Error::Config(format!(
                "box sequence needs rank ≥ 1 and 1 ≤ n_min ≤ n_max, got rank {rank}, {n_min}..={n_max}"
            )));
        }
        Ok(Self {
            rank,
            shape: FolnerShape::Boxes,
            n_min,
            n_max,
        })
    }

    pub fn explicit(windows: Vec<FiniteWindow>) -> Result<Self> {
        let rank = windows
            .first()
            .map(FiniteWindow::rank)
            .ok_or_else(|| Error::Config("explicit sequence needs at least one window".into()))?;
        if windows.iter().any(|w| w.rank() != rank) {
            return Err(Error::Config("explicit windows must share one rank".into()));
        }
        let n_max = windows.len();
        Ok(Self {
            rank,
            shape: FolnerShape::Explicit { windows },
            n_min: 1,
            n_max,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn shape(&self) -> &FolnerShape {
        &self.shape
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    pub fn is_boxes(&self) -> bool {
        matches!(self.shape, FolnerShape::Boxes)
    }

    /// `F_n`.
    pub fn window(&self, n: usize) -> Result<FiniteWindow> {
        if n < self.n_min || n > self.n_max {
            return Err(Error::Range {
                index: n,
                min: self.n_min,
                max: self.n_max,
            });
        }
        match &self.shape {
            FolnerShape::Boxes => FiniteWindow::cube(self.rank, n),
            FolnerShape::Explicit { windows } => Ok(windows[n - 1].clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperedReport {
    /// Smallest `C` with `|∪_{k<n} F_k^{-1} F_n| ≤ C |F_n|` over the checked range.
    pub constant: f64,
    /// `(n, ratio)` for every checked index.
    pub ratios: Vec<(usize, f64)>,
}

/// Empirical tempered constant `max_n |∪_{k<n} F_k^{-1} F_n| / |F_n|` for `n ≤ n_max`.
///
/// `element_budget` caps the size of the accumulated union.
pub fn check_tempered(
    seq: &FolnerSequence,
    n_max: usize,
    element_budget: usize,
) -> Result<TemperedReport> {
    if n_max < 2 {
        return Err(Error::Precondition("check_tempered needs n_max ≥ 2".into()));
    }
    let first = seq.n_min().max(1);
    let last = n_max.min(seq.n_max());
    let mut ratios = Vec::new();
    for n in (first + 1)..=last {
        let target = seq.window(n)?;
        let mut union: BTreeSet<Element> = BTreeSet::new();
        for k in first..n {
            let inv = seq.window(k)?.inverse();
            for e in window_product(&inv, &target).elements {
                union.insert(e);
            }
            if union.len() > element_budget {
                return Err(Error::Resource(format!(
                    "tempered union exceeds {element_budget} elements at n = {n}"
                )));
            }
        }
        ratios.push((n, union.len() as f64 / target.len() as f64));
    }
    let constant = ratios.iter().map(|&(_, r)| r).fold(0.0, f64::max);
    Ok(TemperedReport { constant, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1(v: &[i64]) -> FiniteWindow {
        FiniteWindow::new(v.iter().map(|&x| Element::from(x))).unwrap()
    }

    #[test]
    fn box_windows() {
        let seq = FolnerSequence::boxes(1, 1, 5).unwrap();
        assert_eq!(seq.window(3).unwrap(), w1(&[0, 1, 2]));
        let seq2 = FolnerSequence::boxes(2, 1, 5).unwrap();
        let f = seq2.window(2).unwrap();
        let expected = FiniteWindow::new(
            [[0, 0], [0, 1], [1, 0], [1, 1]]
                .iter()
                .map(|c| Element::new(c.to_vec())),
        )
        .unwrap();
        assert_eq!(f, expected);
        assert_eq!(f.box_sides(), Some(vec![2, 2]));
    }

    #[test]
    fn explicit_windows_pass_through() {
        let seq = FolnerSequence::explicit(vec![w1(&[0]), w1(&[0, 5])]).unwrap();
        assert_eq!(seq.window(2).unwrap(), w1(&[0, 5]));
        assert!(matches!(seq.window(3), Err(Error::Range { index: 3, .. })));
    }

    #[test]
    fn window_out_of_range() {
        let seq = FolnerSequence::boxes(1, 2, 4).unwrap();
        assert!(matches!(seq.window(1), Err(Error::Range { .. })));
        assert!(matches!(seq.window(5), Err(Error::Range { .. })));
    }

    #[test]
    fn boundary_ratios() {
        assert!((boundary_ratio(&w1(&[0, 1, 2]), &Element::from(1)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(boundary_ratio(&w1(&[0, 4, 9]), &Element::from(0)), 0.0);
        assert_eq!(boundary_ratio(&w1(&[0, 1, 2, 3]), &Element::from(2)), 0.5);
    }

    #[test]
    fn sumsets() {
        assert_eq!(window_product(&w1(&[0]), &w1(&[0, 1, 2])), w1(&[0, 1, 2]));
        assert_eq!(
            window_product(&w1(&[-1, 0, 1]), &w1(&[0, 1])),
            w1(&[-1, 0, 1, 2])
        );
        assert_eq!(window_product(&w1(&[0, 2]), &w1(&[0, 2])), w1(&[0, 2, 4]));
    }

    #[test]
    fn tempered_constants() {
        // F_k^{-1} F_n = [-(k-1), n-1]; the union over k < n is [-(n-2), n-1], size 2n-2.
        let seq = FolnerSequence::boxes(1, 1, 10).unwrap();
        let rep = check_tempered(&seq, 3, 1_000).unwrap();
        assert_eq!(rep.ratios, vec![(2, 1.0), (3, 4.0 / 3.0)]);
        assert!((rep.constant - 4.0 / 3.0).abs() < 1e-15);

        let seq2 = FolnerSequence::boxes(2, 1, 10).unwrap();
        let rep2 = check_tempered(&seq2, 2, 1_000).unwrap();
        assert_eq!(rep2.ratios, vec![(2, 1.0)]);

        let f = w1(&[0, 3]);
        let rep3 = check_tempered(
            &FolnerSequence::explicit(vec![f.clone(), f.clone()]).unwrap(),
            2,
            100,
        )
        .unwrap();
        // F^{-1}F = {-3, 0, 3}
        assert_eq!(rep3.constant, 1.5);
    }

    #[test]
    fn tempered_budget() {
        let seq = FolnerSequence::boxes(2, 1, 40).unwrap();
        assert!(matches!(
            check_tempered(&seq, 40, 100),
            Err(Error::Resource(_))
        ));
        assert!(matches!(
            check_tempered(&seq, 1, 100),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn box_boundary_ratio_bound() {
        let g = Element::new(vec![2, -1]);
        let seq = FolnerSequence::boxes(2, 1, 12).unwrap();
        let mut prev = f64::INFINITY;
        for n in 3..=12 {
            let r = boundary_ratio(&seq.window(n).unwrap(), &g);
            assert!(r <= 2.0 * g.norm_inf() as f64 / n as f64 + 1e-12);
            assert!(r <= prev + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn sumset_ratio_tends_to_one() {
        let s = w1(&[-1, 0, 1]);
        let seq = FolnerSequence::boxes(1, 1, 50).unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..=50 {
            let f = seq.window(n).unwrap();
            let ratio = window_product(&s, &f).len() as f64 / f.len() as f64;
            assert!(ratio <= prev);
            prev = ratio;
        }
        assert!(prev < 1.05);
    }

    #[test]
    fn window_serde_roundtrip() {
        let f = w1(&[3, 1, 1, 2]);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, "[[1],[2],[3]]");
        let back: FiniteWindow = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<FiniteWindow>("[]").is_err());
    }
}
