//! Grid-discretized beliefs over the unit interval, query regions and their
//! dyadic partitions.
//!
//! A [`GridPosterior`] with `n` cells stores the probability `a_i` of each
//! cell `((i-1)/n, i/n]`; the density is `a_i / Δ` on that cell. Query
//! boundaries that fall inside a cell split its mass in proportion to the
//! overlap length, so queries with arbitrary real endpoints are handled
//! without re-gridding.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum number of rectangles in a user-supplied query region.
pub const MAX_RECTANGLES: usize = 8;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Piecewise-constant probability over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    masses: Vec<f64>,
}

impl GridPosterior {
    /// Builds a posterior from nonnegative cell weights, normalizing them.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::GridTooSmall {
                min: 2,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMasses);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMasses);
        }
        Ok(GridPosterior {
            masses: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(cells: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; cells])
    }

    /// All mass in cell `index` (0-based).
    pub fn point_mass(cells: usize, index: usize) -> Result<Self> {
        let mut w = vec![0.0; cells];
        *w.get_mut(index).ok_or(Error::InvalidMasses)? = 1.0;
        Self::from_weights(w)
    }

    pub fn cells(&self) -> usize {
        self.masses.len()
    }

    /// Cell width Δ.
    pub fn delta(&self) -> f64 {
        1.0 / self.masses.len() as f64
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= NORMALIZATION_TOL
            && self.masses.iter().all(|&a| a >= 0.0)
    }

    /// Index of the cell containing `x`, using the `((i-1)Δ, iΔ]` convention
    /// (the first cell also holds 0).
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.cells();
        let s = x.clamp(0.0, 1.0) * n as f64;
        let c = s.ceil() as usize;
        c.saturating_sub(1).min(n - 1)
    }

    /// Center of cell `index`.
    pub fn midpoint(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.delta()
    }

    /// Cumulative distribution function; linear inside each cell.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.cells();
        let s = x.clamp(0.0, 1.0) * n as f64;
        let k = (s.floor() as usize).min(n);
        let head: f64 = self.masses[..k].iter().sum();
        if k == n {
            head
        } else {
            head + (s - k as f64) * self.masses[k]
        }
    }

    /// Posterior mass of `[a, b)`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Smallest `x` with `cdf(x) >= q`, interpolated linearly inside its cell.
    ///
    /// The running sum is compensated so that, e.g., the median of a uniform
    /// grid lands exactly on 1/2.
    pub fn quantile(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        let delta = self.delta();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        let mut last_positive = 0;
        for (k, &a) in self.masses.iter().enumerate() {
            if a > 0.0 {
                last_positive = k;
                let cum = sum + comp;
                if cum + a >= q {
                    let frac = ((q - cum) / a).clamp(0.0, 1.0);
                    return ((k as f64 + frac) * delta).min(1.0);
                }
            }
            let t = sum + a;
            comp += if sum.abs() >= a.abs() { (sum - t) + a } else { (a - t) + sum };
            sum = t;
        }
        // rounding left the total a hair below q
        (last_positive + 1) as f64 * delta
    }

    /// Posterior median.
    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Fraction of each cell covered by a 1-D region.
    pub fn cell_fractions(&self, region: &QueryRegion) -> Result<Vec<f64>> {
        grid_fractions(self.cells(), region)
    }

    /// Bayes update after a binary-symmetric-channel answer to "is the
    /// target in `query`?".
    ///
    /// `eps` may be anywhere in `[0, 1/2]`: `0` is a noiseless answer and
    /// `1/2` leaves the posterior unchanged.
    pub fn bayes_update(&self, query: &QueryRegion, response: bool, eps: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&eps) {
            return Err(Error::ProbabilityOutOfRange {
                value: eps,
                range: "[0, 1/2]",
            });
        }
        let frac = self.cell_fractions(query)?;
        let (l_in, l_out) = if response {
            (1.0 - eps, eps)
        } else {
            (eps, 1.0 - eps)
        };
        self.reweight(|i| frac[i] * l_in + (1.0 - frac[i]) * l_out)
    }

    /// Same as [`bayes_update`](Self::bayes_update) with the response given
    /// as a raw bit; anything but 0 or 1 is rejected.
    pub fn bayes_update_bit(&self, query: &QueryRegion, bit: u8, eps: f64) -> Result<Self> {
        self.bayes_update(query, response_from_bit(bit)?, eps)
    }

    /// Multiplies each cell by `factor(i)` and renormalizes.
    pub(crate) fn reweight(&self, factor: impl Fn(usize) -> f64) -> Result<Self> {
        let mut masses: Vec<f64> = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, &a)| a * factor(i))
            .collect();
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        masses.iter_mut().for_each(|a| *a /= total);
        Ok(GridPosterior { masses })
    }

    /// Equal-tailed credible interval holding `level` of the mass.
    pub fn credible_interval(&self, level: f64) -> (f64, f64) {
        let tail = (1.0 - level.clamp(0.0, 1.0)) / 2.0;
        (self.quantile(tail), self.quantile(1.0 - tail))
    }
}

impl Serialize for GridPosterior {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("GridPosterior", 2)?;
        s.serialize_field("delta", &self.delta())?;
        s.serialize_field("masses", &self.masses)?;
        s.end()
    }
}

/// Fraction of each of `n` equal cells of `[0, 1]` covered by a 1-D region.
pub(crate) fn grid_fractions(n: usize, region: &QueryRegion) -> Result<Vec<f64>> {
    region.expect_dim(1)?;
    let nf = n as f64;
    let mut frac = vec![0.0; n];
    for (a, b) in region.intervals_1d() {
        let (sa, sb) = (a * nf, b * nf);
        let first = (sa.floor() as usize).min(n - 1);
        let last = (sb.ceil() as usize).min(n);
        for (i, f) in frac.iter_mut().enumerate().take(last).skip(first) {
            let lo = sa.max(i as f64);
            let hi = sb.min(i as f64 + 1.0);
            if hi > lo {
                *f += hi - lo;
            }
        }
    }
    for f in &mut frac {
        *f = f.min(1.0);
    }
    Ok(frac)
}

/// Converts a raw response bit.
pub fn response_from_bit(bit: u8) -> Result<bool> {
    match bit {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::InvalidResponse(other)),
    }
}

/// A half-open axis-aligned box `[lo_1, hi_1) x ... x [lo_d, hi_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Rect { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).max(0.0))
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(x)
            .all(|((a, b), v)| *a <= *v && *v < *b)
    }
}

/// Finite union of half-open rectangles inside `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRegion {
    dim: usize,
    rects: Vec<Rect>,
}

impl QueryRegion {
    /// Validated constructor: consistent dimension, `lo <= hi`, inside the
    /// unit cube and at most [`MAX_RECTANGLES`] pieces.
    pub fn new(dim: usize, rects: Vec<Rect>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if rects.len() > MAX_RECTANGLES {
            return Err(Error::TooManyRectangles {
                max: MAX_RECTANGLES,
                got: rects.len(),
            });
        }
        for r in &rects {
            if r.lo.len() != dim || r.hi.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.lo.len().max(r.hi.len()),
                });
            }
            for (a, b) in r.lo.iter().zip(&r.hi) {
                if !(a.is_finite() && b.is_finite()) || a > b || *a < 0.0 || *b > 1.0 {
                    return Err(Error::InvalidRectangle(format!("[{a}, {b})")));
                }
            }
        }
        Ok(QueryRegion { dim, rects })
    }

    pub(crate) fn from_rects_unchecked(dim: usize, rects: Vec<Rect>) -> Self {
        QueryRegion { dim, rects }
    }

    pub fn empty(dim: usize) -> Self {
        QueryRegion {
            dim,
            rects: Vec::new(),
        }
    }

    /// The 1-D interval `[a, b)`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(1, vec![Rect::new(vec![a], vec![b])])
    }

    /// A union of 1-D intervals.
    pub fn intervals(pieces: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            1,
            pieces
                .iter()
                .map(|&(a, b)| Rect::new(vec![a], vec![b]))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.rects.iter().any(|r| r.contains(x))
    }

    /// Truth bit `I(x in A)` for a 1-D region.
    pub fn contains_point(&self, x: f64) -> bool {
        self.contains(&[x])
    }

    pub(crate) fn expect_dim(&self, dim: usize) -> Result<()> {
        if self.dim == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim,
            })
        }
    }

    /// Sorted, merged, nonempty intervals of a 1-D region.
    pub fn intervals_1d(&self) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = self
            .rects
            .iter()
            .filter(|r| r.dim() == 1 && r.hi[0] > r.lo[0])
            .map(|r| (r.lo[0].max(0.0), r.hi[0].min(1.0)))
            .collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }
}

/// Anything that assigns probability to query regions.
pub trait Measure {
    fn dim(&self) -> usize;
    fn measure(&self, region: &QueryRegion) -> Result<f64>;
}

impl Measure for GridPosterior {
    fn dim(&self) -> usize {
        1
    }

    fn measure(&self, region: &QueryRegion) -> Result<f64> {
        region.expect_dim(1)?;
        Ok(region
            .intervals_1d()
            .into_iter()
            .map(|(a, b)| self.interval_mass(a, b))
            .sum())
    }
}

/// Uniform probability on `[0, 1]^d`; measures are volumes of rectangle unions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformMeasure {
    pub dim: usize,
}

impl Measure for UniformMeasure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn measure(&self, region: &QueryRegion) -> Result<f64> {
        region.expect_dim(self.dim)?;
        Ok(elementary_boxes(self.dim, &[region])
            .into_iter()
            .filter(|b| region.contains(&b.center))
            .map(|b| b.rect.volume())
            .sum())
    }
}

/// Mass of `region` under `measure`.
pub fn mass<M: Measure + ?Sized>(measure: &M, region: &QueryRegion) -> Result<f64> {
    measure.measure(region)
}

struct ElementaryBox {
    rect: Rect,
    center: Vec<f64>,
}

/// Splits the unit cube along every rectangle edge of `regions`; each piece
/// lies wholly inside or outside every region.
fn elementary_boxes(dim: usize, regions: &[&QueryRegion]) -> Vec<ElementaryBox> {
    let mut cuts: Vec<Vec<f64>> = vec![vec![0.0, 1.0]; dim];
    for r in regions {
        for rect in &r.rects {
            for l in 0..dim {
                cuts[l].push(rect.lo[l].clamp(0.0, 1.0));
                cuts[l].push(rect.hi[l].clamp(0.0, 1.0));
            }
        }
    }
    for c in &mut cuts {
        c.sort_by(f64::total_cmp);
        c.dedup();
    }
    let mut boxes = vec![ElementaryBox {
        rect: Rect::new(Vec::new(), Vec::new()),
        center: Vec::new(),
    }];
    for axis in &cuts {
        let mut next = Vec::with_capacity(boxes.len() * axis.len());
        for b in &boxes {
            for w in axis.windows(2) {
                let mut rect = b.rect.clone();
                rect.lo.push(w[0]);
                rect.hi.push(w[1]);
                let mut center = b.center.clone();
                center.push(0.5 * (w[0] + w[1]));
                next.push(ElementaryBox { rect, center });
            }
        }
        boxes = next;
    }
    boxes
}

/// One cell `∩_m (A_m)^{i_m}` of a dyadic partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicCell {
    /// `membership[m]` is `i_m`: inside (`true`) or outside region `m`.
    pub membership: Vec<bool>,
    pub region: QueryRegion,
}

impl DyadicCell {
    /// Position of this cell in partition order: bit `m` holds `i_m`.
    pub fn index(&self) -> usize {
        self.membership
            .iter()
            .enumerate()
            .map(|(m, &b)| (b as usize) << m)
            .sum()
    }
}

/// The `2^M` cells induced by `M` query regions, in [`DyadicCell::index`]
/// order. Cells are disjoint, possibly empty, and cover the unit cube.
pub fn dyadic_partition(regions: &[QueryRegion]) -> Result<Vec<DyadicCell>> {
    let Some(first) = regions.first() else {
        return Err(Error::NoPlayers);
    };
    let dim = first.dim;
    for r in regions {
        r.expect_dim(dim)?;
    }
    if regions.len() > 16 {
        return Err(Error::TooManyPlayers {
            max: 16,
            got: regions.len(),
        });
    }
    let m = regions.len();
    let refs: Vec<&QueryRegion> = regions.iter().collect();
    let mut pieces: Vec<Vec<Rect>> = vec![Vec::new(); 1 << m];
    for b in elementary_boxes(dim, &refs) {
        if b.rect.volume() <= 0.0 {
            continue;
        }
        let idx: usize = regions
            .iter()
            .enumerate()
            .map(|(j, r)| (r.contains(&b.center) as usize) << j)
            .sum();
        pieces[idx].push(b.rect);
    }
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(idx, rects)| {
            let rects = if dim == 1 { merge_1d(rects) } else { rects };
            DyadicCell {
                membership: (0..m).map(|j| idx >> j & 1 == 1).collect(),
                region: QueryRegion::from_rects_unchecked(dim, rects),
            }
        })
        .collect())
}

fn merge_1d(mut rects: Vec<Rect>) -> Vec<Rect> {
    rects.sort_by(|a, b| a.lo[0].total_cmp(&b.lo[0]));
    let mut out: Vec<Rect> = Vec::with_capacity(rects.len());
    for r in rects {
        match out.last_mut() {
            Some(last) if r.lo[0] <= last.hi[0] => last.hi[0] = last.hi[0].max(r.hi[0]),
            _ => out.push(r),
        }
    }
    out
}

/// Result of checking the equal-mass condition over a dyadic partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalization {
    pub holds: bool,
    pub max_deviation: f64,
    /// Cell masses in partition order.
    pub cell_masses: Vec<f64>,
}

/// Checks that every dyadic cell of `regions` carries mass `2^{-M}` within `tol`.
pub fn verify_equalization<M: Measure + ?Sized>(
    measure: &M,
    regions: &[QueryRegion],
    tol: f64,
) -> Result<Equalization> {
    let target = 0.5f64.powi(regions.len() as i32);
    let cell_masses = dyadic_partition(regions)?
        .iter()
        .map(|c| measure.measure(&c.region))
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = cell_masses
        .iter()
        .map(|m| (m - target).abs())
        .fold(0.0, f64::max);
    Ok(Equalization {
        holds: max_deviation <= tol,
        max_deviation,
        cell_masses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::{grid_entropy, phi_gain, BinaryPmf};
    use proptest::prelude::*;

    fn iv(a: f64, b: f64) -> QueryRegion {
        QueryRegion::interval(a, b).unwrap()
    }

    #[test]
    fn mass_examples() {
        let u = GridPosterior::uniform(1024).unwrap();
        assert!((mass(&u, &iv(0.0, 0.5)).unwrap() - 0.5).abs() < 1e-15);
        assert!((mass(&u, &iv(0.125, 0.625)).unwrap() - 0.5).abs() < 1e-15);
        let p = GridPosterior::point_mass(10, 3).unwrap();
        assert!((mass(&p, &iv(0.25, 0.45)).unwrap() - 1.0).abs() < 1e-15);
        let sq = QueryRegion::new(2, vec![Rect::new(vec![0.0, 0.0], vec![0.5, 0.5])]).unwrap();
        assert!(matches!(
            mass(&u, &sq),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn straddled_cell_apportioned() {
        let u = GridPosterior::uniform(4).unwrap();
        // [0, 0.3) covers one full cell and 20% of the second
        assert!((mass(&u, &iv(0.0, 0.3)).unwrap() - 0.3).abs() < 1e-15);
        let w = GridPosterior::from_weights(vec![1.0, 3.0]).unwrap();
        assert!((w.interval_mass(0.5, 0.75) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn median_examples() {
        assert!((GridPosterior::uniform(1500).unwrap().median() - 0.5).abs() < 1e-12);
        let two = GridPosterior::from_weights(vec![0.25, 0.75]).unwrap();
        assert!((two.median() - 2.0 / 3.0).abs() < 1e-15);
        let p = GridPosterior::point_mass(8, 5).unwrap();
        let m = p.median();
        assert!(m > 5.0 / 8.0 && m <= 6.0 / 8.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = GridPosterior::from_weights(vec![1.0, 2.0, 0.0, 5.0, 2.0]).unwrap();
        for q in [0.01, 0.1, 0.3, 0.5, 0.77, 0.99] {
            assert!((p.cdf(p.quantile(q)) - q).abs() < 1e-14);
        }
        assert_eq!(p.cell_of(0.0), 0);
        assert_eq!(p.cell_of(0.2), 0);
        assert_eq!(p.cell_of(0.2000001), 1);
        assert_eq!(p.cell_of(1.0), 4);
    }

    #[test]
    fn bayes_update_examples() {
        let u = GridPosterior::uniform(64).unwrap();
        let a = iv(0.0, 0.5);
        let post = u.bayes_update(&a, true, 0.3).unwrap();
        assert!((mass(&post, &a).unwrap() - 0.7).abs() < 1e-15);
        let same = u.bayes_update(&a, true, 0.5).unwrap();
        for (x, y) in same.masses().iter().zip(u.masses()) {
            assert!((x - y).abs() < 1e-15);
        }
        let skew = GridPosterior::from_weights((1..=64).map(|i| i as f64).collect()).unwrap();
        let q = iv(0.125, 0.375);
        let back = skew
            .bayes_update(&q, true, 0.2)
            .unwrap()
            .bayes_update(&q, false, 0.2)
            .unwrap();
        for (x, y) in back.masses().iter().zip(skew.masses()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(u.bayes_update_bit(&a, 2, 0.3), Err(Error::InvalidResponse(2)));
        assert!(u.bayes_update(&a, true, 0.7).is_err());
    }

    #[test]
    fn contradictory_noiseless_answers_collapse() {
        let u = GridPosterior::uniform(8).unwrap();
        let a = iv(0.0, 0.5);
        let p = u.bayes_update(&a, true, 0.0).unwrap();
        let q = p.bayes_update(&iv(0.0, 0.5), false, 0.0);
        assert_eq!(q, Err(Error::DegeneratePosterior));
    }

    #[test]
    fn dyadic_partition_examples() {
        let parts = dyadic_partition(&[iv(0.0, 0.5)]).unwrap();
        assert_eq!(parts[1].region.intervals_1d(), vec![(0.0, 0.5)]);
        assert_eq!(parts[0].region.intervals_1d(), vec![(0.5, 1.0)]);

        let a1 = iv(0.125, 0.625);
        let a2 = iv(0.375, 0.875);
        let parts = dyadic_partition(&[a1, a2]).unwrap();
        let find = |m: [bool; 2]| {
            parts
                .iter()
                .find(|c| c.membership == m)
                .unwrap()
                .region
                .intervals_1d()
        };
        assert_eq!(find([true, true]), vec![(0.375, 0.625)]);
        assert_eq!(find([true, false]), vec![(0.125, 0.375)]);
        assert_eq!(find([false, true]), vec![(0.625, 0.875)]);
        assert_eq!(find([false, false]), vec![(0.0, 0.125), (0.875, 1.0)]);

        let disjoint = dyadic_partition(&[iv(0.0, 0.3), iv(0.5, 0.9)]).unwrap();
        assert!(disjoint[3].region.intervals_1d().is_empty());
        assert_eq!(disjoint[3].index(), 3);
    }

    fn fig3_two_player() -> Vec<QueryRegion> {
        let r = |x0: f64, y0: f64, x1: f64, y1: f64| Rect::new(vec![x0, y0], vec![x1, y1]);
        vec![
            QueryRegion::new(2, vec![r(0.0, 0.0, 0.75, 0.5), r(0.25, 0.5, 0.75, 0.75)]).unwrap(),
            QueryRegion::new(2, vec![r(0.25, 0.5, 1.0, 1.0), r(0.25, 0.25, 0.75, 0.5)]).unwrap(),
        ]
    }

    #[test]
    fn equalization_examples() {
        let u = GridPosterior::uniform(1024).unwrap();
        let eq = verify_equalization(&u, &[iv(0.125, 0.625), iv(0.375, 0.875)], 1e-12).unwrap();
        assert!(eq.holds && eq.max_deviation <= 1e-12);

        let plane = UniformMeasure { dim: 2 };
        let eq = verify_equalization(&plane, &fig3_two_player(), 1e-12).unwrap();
        assert!(eq.holds, "{eq:?}");
        for m in &eq.cell_masses {
            assert!((m - 0.25).abs() <= 1e-12);
        }

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let one = QueryRegion::new(2, vec![Rect::new(vec![0.0, 0.0], vec![s, s])]).unwrap();
        let eq = verify_equalization(&plane, &[one], 1e-12).unwrap();
        assert!(eq.holds, "{eq:?}");

        let bad = verify_equalization(&u, &[iv(0.2, 0.7), iv(0.375, 0.875)], 1e-6).unwrap();
        assert!(!bad.holds);
    }

    #[test]
    fn region_validation() {
        assert!(QueryRegion::interval(0.6, 0.2).is_err());
        assert!(QueryRegion::interval(-0.1, 0.2).is_err());
        let many: Vec<(f64, f64)> = (0..9).map(|i| (i as f64 * 0.1, i as f64 * 0.1 + 0.05)).collect();
        assert!(matches!(
            QueryRegion::intervals(&many),
            Err(Error::TooManyRectangles { .. })
        ));
        // degenerate rectangles are allowed
        assert!(QueryRegion::interval(0.3, 0.3).is_ok());
    }

    #[test]
    fn snapshot_json_shape() {
        let p = GridPosterior::uniform(2).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["delta"], 0.5);
        assert_eq!(v["masses"], serde_json::json!([0.5, 0.5]));
    }

    fn posterior(cells: usize) -> impl Strategy<Value = GridPosterior> {
        proptest::collection::vec(0.0..1.0f64, cells)
            .prop_filter("positive total", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|w| GridPosterior::from_weights(w).unwrap())
    }

    fn interval() -> impl Strategy<Value = QueryRegion> {
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| iv(a.min(b), a.max(b)))
    }

    /// Union of whole cells on a `cells`-grid.
    fn aligned_region(cells: usize) -> impl Strategy<Value = QueryRegion> {
        proptest::collection::vec((0..=cells, 0..=cells), 1..4).prop_map(move |pairs| {
            let n = cells as f64;
            let pieces: Vec<(f64, f64)> = pairs
                .into_iter()
                .map(|(i, j)| (i.min(j) as f64 / n, i.max(j) as f64 / n))
                .collect();
            QueryRegion::intervals(&pieces).unwrap()
        })
    }

    proptest! {
        #[test]
        fn updates_stay_normalized(
            p in posterior(32),
            steps in proptest::collection::vec((interval(), any::<bool>(), 0.01..0.49f64), 1..20),
        ) {
            let mut cur = p;
            for (q, y, eps) in steps {
                cur = cur.bayes_update(&q, y, eps).unwrap();
                prop_assert!(cur.is_normalized());
            }
        }

        #[test]
        fn dyadic_cells_disjoint_and_exhaustive(
            p in posterior(40),
            regions in proptest::collection::vec(interval(), 1..5),
        ) {
            let cells = dyadic_partition(&regions).unwrap();
            prop_assert_eq!(cells.len(), 1 << regions.len());
            let total: f64 = cells.iter().map(|c| mass(&p, &c.region).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            // each point lies in exactly one cell
            for k in 0..97 {
                let x = (k as f64 + 0.31) / 97.0;
                let hits = cells.iter().filter(|c| c.region.contains_point(x)).count();
                prop_assert_eq!(hits, 1);
            }
        }

        // exact one-step expected entropy loss equals phi(P(A)) for cell-aligned queries
        #[test]
        fn expected_entropy_loss_is_phi(
            p in posterior(24),
            a in aligned_region(24),
            eps in 0.01..0.49f64,
        ) {
            let h0 = grid_entropy(&p).0;
            let pa = mass(&p, &a).unwrap();
            let mut loss = 0.0;
            for y in [false, true] {
                let py = if y { (1.0 - eps) * pa + eps * (1.0 - pa) } else { eps * pa + (1.0 - eps) * (1.0 - pa) };
                let post = p.bayes_update(&a, y, eps).unwrap();
                loss += py * (h0 - grid_entropy(&post).0);
            }
            let (f0, f1) = BinaryPmf::bsc_pair(eps).unwrap();
            let phi = phi_gain(pa.clamp(0.0, 1.0), &f0, &f1).unwrap().0;
            prop_assert!((loss - phi).abs() < 1e-9, "{} vs {}", loss, phi);
        }

        // reversing the grid and mirroring the query commutes with the update
        #[test]
        fn update_commutes_with_reflection(
            p in posterior(16),
            a in aligned_region(16),
            y in any::<bool>(),
            eps in 0.01..0.49f64,
        ) {
            let mirrored: Vec<(f64, f64)> = a.intervals_1d().iter().map(|&(lo, hi)| (1.0 - hi, 1.0 - lo)).collect();
            let a_m = QueryRegion::intervals(&mirrored).unwrap();
            let rev = GridPosterior::from_weights(p.masses().iter().rev().copied().collect()).unwrap();
            let left = p.bayes_update(&a, y, eps).unwrap();
            let right = rev.bayes_update(&a_m, y, eps).unwrap();
            for (x, z) in left.masses().iter().zip(right.masses().iter().rev()) {
                prop_assert!((x - z).abs() < 1e-12);
            }
        }
    }
}
