//! Group structures over the measurement domain and grouped random sampling.
//!
//! A [`GroupStructure`] partitions the `N` measurement indices into `N/g`
//! disjoint groups of size `g`. A [`SampleSet`] is a union of whole groups,
//! drawn either uniformly without replacement ([`draw_uniform`]) or by
//! independent per-group coin flips ([`draw_bernoulli`]).
//!
//! Indices are 0-based. Two-dimensional structures use row-major pixel
//! linearization (`r * cols + c`).

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureLabel {
    Strided1D,
    Contiguous1D,
    VLines2D,
    HLines2D,
    Rect2D,
    Spiral2D,
    CyclicSpiral2D,
    MaxManhattan2D,
    RandomGroups(u64),
    Singletons,
}

impl fmt::Display for StructureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureLabel::Strided1D => f.write_str("strided_1d"),
            StructureLabel::Contiguous1D => f.write_str("contiguous_1d"),
            StructureLabel::VLines2D => f.write_str("vlines_2d"),
            StructureLabel::HLines2D => f.write_str("hlines_2d"),
            StructureLabel::Rect2D => f.write_str("rect_2d"),
            StructureLabel::Spiral2D => f.write_str("spiral_2d"),
            StructureLabel::CyclicSpiral2D => f.write_str("cyclic_spiral_2d"),
            StructureLabel::MaxManhattan2D => f.write_str("max_manhattan_2d"),
            StructureLabel::RandomGroups(seed) => write!(f, "random_groups:{seed}"),
            StructureLabel::Singletons => f.write_str("singletons"),
        }
    }
}

impl std::str::FromStr for StructureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "strided_1d" => StructureLabel::Strided1D,
            "contiguous_1d" => StructureLabel::Contiguous1D,
            "vlines_2d" => StructureLabel::VLines2D,
            "hlines_2d" => StructureLabel::HLines2D,
            "rect_2d" => StructureLabel::Rect2D,
            "spiral_2d" => StructureLabel::Spiral2D,
            "cyclic_spiral_2d" => StructureLabel::CyclicSpiral2D,
            "max_manhattan_2d" => StructureLabel::MaxManhattan2D,
            "singletons" => StructureLabel::Singletons,
            other => match other.strip_prefix("random_groups:") {
                Some(seed) => StructureLabel::RandomGroups(
                    seed.parse().map_err(|_| Error::invalid(format!("bad structure label {other:?}")))?,
                ),
                None => return Err(Error::invalid(format!("unknown structure label {other:?}"))),
            },
        })
    }
}

/// A partition of `{0, …, n-1}` into `n/g` groups of exactly `g` indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStructure {
    n: usize,
    g: usize,
    groups: Vec<Vec<usize>>,
    label: StructureLabel,
}

impl GroupStructure {
    /// Validates the partition invariant.
    pub fn new(n: usize, g: usize, groups: Vec<Vec<usize>>, label: StructureLabel) -> Result<Self> {
        check_divides(n, g)?;
        if groups.len() != n / g {
            return Err(Error::DimensionMismatch { expected: n / g, found: groups.len() });
        }
        let mut seen = vec![false; n];
        for group in &groups {
            if group.len() != g {
                return Err(Error::DimensionMismatch { expected: g, found: group.len() });
            }
            for &i in group {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, bound: n });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::DuplicateIndex(i));
                }
            }
        }
        Ok(Self { n, g, groups, label })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn label(&self) -> StructureLabel {
        self.label
    }
}

fn check_divides(n: usize, g: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if g == 0 || !n.is_multiple_of(g) {
        return Err(Error::Divisibility { g, n });
    }
    Ok(())
}

fn chunked(order: &[usize], g: usize) -> Vec<Vec<usize>> {
    order.chunks(g).map(<[usize]>::to_vec).collect()
}

fn singleton_or(g: usize, label: StructureLabel) -> StructureLabel {
    if g == 1 {
        StructureLabel::Singletons
    } else {
        label
    }
}

/// `n` groups of one index each: classical independent sampling.
pub fn singletons(n: usize) -> Result<GroupStructure> {
    check_divides(n, 1)?;
    Ok(GroupStructure { n, g: 1, groups: (0..n).map(|i| vec![i]).collect(), label: StructureLabel::Singletons })
}

/// Group `i` is `{i, i + n/g, i + 2n/g, …}`.
pub fn strided_1d(n: usize, g: usize) -> Result<GroupStructure> {
    check_divides(n, g)?;
    let stride = n / g;
    let groups = (0..stride).map(|i| (0..g).map(|k| i + k * stride).collect()).collect();
    GroupStructure::new(n, g, groups, singleton_or(g, StructureLabel::Strided1D))
}

/// Group `i` is `{i·g, …, i·g + g − 1}`.
pub fn contiguous_1d(n: usize, g: usize) -> Result<GroupStructure> {
    check_divides(n, g)?;
    let order: Vec<usize> = (0..n).collect();
    GroupStructure::new(n, g, chunked(&order, g), singleton_or(g, StructureLabel::Contiguous1D))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Runs of `g` pixels down a column.
    Vertical,
    /// Runs of `g` pixels along a row.
    Horizontal,
}

/// Line segments of `g` pixels. Vertical groups are ordered column by
/// column, top to bottom; horizontal groups row by row, left to right.
pub fn lines_2d(rows: usize, cols: usize, g: usize, orientation: Orientation) -> Result<GroupStructure> {
    let n = rows * cols;
    let order: Vec<usize> = match orientation {
        Orientation::Vertical => {
            check_divides(rows, g)?;
            (0..cols).flat_map(|c| (0..rows).map(move |r| r * cols + c)).collect()
        }
        Orientation::Horizontal => {
            check_divides(cols, g)?;
            (0..n).collect()
        }
    };
    let label = match orientation {
        Orientation::Vertical => StructureLabel::VLines2D,
        Orientation::Horizontal => StructureLabel::HLines2D,
    };
    GroupStructure::new(n, g, chunked(&order, g), label)
}

/// Tiling by `g/2`-tall, 2-wide rectangles in row-major tile order.
pub fn rect_2d(rows: usize, cols: usize, g: usize) -> Result<GroupStructure> {
    if g == 0 || !g.is_multiple_of(2) {
        return Err(Error::invalid(format!("rectangle groups need an even size, got {g}")));
    }
    let h = g / 2;
    check_divides(rows, h)?;
    check_divides(cols, 2)?;
    let mut groups = Vec::with_capacity(rows * cols / g);
    for tr in 0..rows / h {
        for tc in 0..cols / 2 {
            let mut group = Vec::with_capacity(g);
            for r in tr * h..(tr + 1) * h {
                for c in 2 * tc..2 * tc + 2 {
                    group.push(r * cols + c);
                }
            }
            groups.push(group);
        }
    }
    GroupStructure::new(rows * cols, g, groups, StructureLabel::Rect2D)
}

/// Pixels along an inward clockwise rectangular spiral that starts at the
/// top-left pixel and first walks right along the top row.
pub fn spiral_order(rows: usize, cols: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(rows * cols);
    if rows == 0 || cols == 0 {
        return order;
    }
    let (mut top, mut bottom, mut left, mut right) = (0isize, rows as isize - 1, 0isize, cols as isize - 1);
    let idx = |r: isize, c: isize| r as usize * cols + c as usize;
    while top <= bottom && left <= right {
        for c in left..=right {
            order.push(idx(top, c));
        }
        for r in top + 1..=bottom {
            order.push(idx(r, right));
        }
        if top < bottom {
            for c in (left..right).rev() {
                order.push(idx(bottom, c));
            }
        }
        if left < right {
            for r in (top + 1..bottom).rev() {
                order.push(idx(r, left));
            }
        }
        top += 1;
        bottom -= 1;
        left += 1;
        right -= 1;
    }
    order
}

/// Spiral groups. With `cyclic = false` consecutive runs of `g` spiral
/// positions form a group; with `cyclic = true` spiral position `k` joins
/// group `k mod (n/g)`, spreading every group along the whole trajectory.
pub fn spiral_2d(rows: usize, cols: usize, g: usize, cyclic: bool) -> Result<GroupStructure> {
    let n = rows * cols;
    check_divides(n, g)?;
    let order = spiral_order(rows, cols);
    if !cyclic {
        return GroupStructure::new(n, g, chunked(&order, g), StructureLabel::Spiral2D);
    }
    let num = n / g;
    let mut groups = vec![Vec::with_capacity(g); num];
    for (k, &pixel) in order.iter().enumerate() {
        groups[k % num].push(pixel);
    }
    GroupStructure::new(n, g, groups, StructureLabel::CyclicSpiral2D)
}

/// Greedy maximal-Manhattan-distance groups.
///
/// Each group is seeded with the remaining pixel closest (Manhattan) to the
/// top-left corner; every further member is the remaining pixel with the
/// largest summed Manhattan distance to the members chosen so far. Ties go
/// to the smallest row-major index.
pub fn max_manhattan_2d(rows: usize, cols: usize, g: usize) -> Result<GroupStructure> {
    let n = rows * cols;
    check_divides(n, g)?;
    let coord = |i: usize| (i / cols, i % cols);
    let dist = |a: usize, b: usize| {
        let ((ra, ca), (rb, cb)) = (coord(a), coord(b));
        ra.abs_diff(rb) + ca.abs_diff(cb)
    };
    let mut remaining = vec![true; n];
    // summed distance from each pixel to the members of the current group
    let mut score = vec![0usize; n];
    let mut groups = Vec::with_capacity(n / g);
    for _ in 0..n / g {
        let seed = (0..n)
            .filter(|&i| remaining[i])
            .min_by_key(|&i| (coord(i).0 + coord(i).1, i))
            .expect("pixels remain while groups are unfilled");
        let mut group = Vec::with_capacity(g);
        score.iter_mut().for_each(|s| *s = 0);
        let add = |p: usize, group: &mut Vec<usize>, remaining: &mut [bool], score: &mut [usize]| {
            remaining[p] = false;
            group.push(p);
            for (i, s) in score.iter_mut().enumerate() {
                *s += dist(i, p);
            }
        };
        add(seed, &mut group, &mut remaining, &mut score);
        while group.len() < g {
            let mut best: Option<usize> = None;
            for i in (0..n).filter(|&i| remaining[i]) {
                // strict comparison keeps the smallest index on ties
                if best.is_none_or(|b| score[i] > score[b]) {
                    best = Some(i);
                }
            }
            add(best.expect("group cannot outgrow remaining pixels"), &mut group, &mut remaining, &mut score);
        }
        groups.push(group);
    }
    GroupStructure::new(n, g, groups, StructureLabel::MaxManhattan2D)
}

/// A uniformly random permutation of `0..n` (seeded) cut into groups of `g`.
pub fn random_groups(n: usize, g: usize, seed: u64) -> Result<GroupStructure> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    check_divides(n, g)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    GroupStructure::new(n, g, chunked(&order, g), StructureLabel::RandomGroups(seed))
}

/// A set of measurement indices made of whole groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    /// Sorted measurement indices.
    pub omega: Vec<usize>,
    /// Sorted indices of the selected groups.
    pub selected_groups: Vec<usize>,
    pub m: usize,
}

impl SampleSet {
    fn from_groups(gs: &GroupStructure, mut selected_groups: Vec<usize>) -> Self {
        selected_groups.sort_unstable();
        let mut omega: Vec<usize> = selected_groups.iter().flat_map(|&i| gs.group(i).iter().copied()).collect();
        omega.sort_unstable();
        let m = omega.len();
        Self { omega, selected_groups, m }
    }
}

/// Draws exactly `m/g` distinct groups uniformly without replacement
/// (Fisher–Yates prefix over group indices).
pub fn draw_uniform<R: Rng + ?Sized>(gs: &GroupStructure, m: usize, rng: &mut R) -> Result<SampleSet> {
    if m > gs.n() {
        return Err(Error::invalid(format!("m = {m} exceeds n = {}", gs.n())));
    }
    if !m.is_multiple_of(gs.g()) {
        return Err(Error::Divisibility { g: gs.g(), n: m });
    }
    let k = m / gs.g();
    let mut ids: Vec<usize> = (0..gs.num_groups()).collect();
    for i in 0..k {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(k);
    Ok(SampleSet::from_groups(gs, ids))
}

/// Includes each group independently with probability `m/n`, so the
/// expected number of samples is `m`.
pub fn draw_bernoulli<R: Rng + ?Sized>(gs: &GroupStructure, m: usize, rng: &mut R) -> Result<SampleSet> {
    if m > gs.n() {
        return Err(Error::invalid(format!("m = {m} exceeds n = {}", gs.n())));
    }
    let p = m as f64 / gs.n() as f64;
    let ids = (0..gs.num_groups()).filter(|_| rng.random::<f64>() < p).collect();
    Ok(SampleSet::from_groups(gs, ids))
}
