//! Hexagonal lattice geometry.
//!
//! Cells are indexed by an integer pair `(a1, a2)`; BS `c` sits at
//! `a1 * (3r/2, sqrt(3)r/2) + a2 * (0, sqrt(3)r)`. Hexagons have circumradius
//! `r` and corners at 0, 60, ..., 300 degrees, so the six nearest neighbours
//! share full edges with the center cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::SUPPORTED_REUSE;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Relative slack used for boundary decisions.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub a1: i64,
    pub a2: i64,
}

impl CellIndex {
    pub const ORIGIN: CellIndex = CellIndex { a1: 0, a2: 0 };

    pub const fn new(a1: i64, a2: i64) -> Self {
        CellIndex { a1, a2 }
    }

    /// Number of cell hops to the origin; the origin is tier 0 and its six
    /// neighbours are tier 1.
    pub fn tier(self) -> usize {
        self.a1
            .abs()
            .max(self.a2.abs())
            .max((self.a1 + self.a2).abs()) as usize
    }

    /// Rotation by 60 degrees about the origin BS.
    pub fn rotate60(self) -> Self {
        CellIndex::new(-self.a2, self.a1 + self.a2)
    }

    /// Reflection across the line through the origin and BS (1, 0).
    pub fn reflect(self) -> Self {
        CellIndex::new(self.a1 + self.a2, -self.a2)
    }

    /// The twelve images of `self` under the dihedral symmetry group of the
    /// lattice (with repetitions for cells on symmetry axes).
    pub fn orbit(self) -> [CellIndex; 12] {
        let mut out = [self; 12];
        let mut c = self;
        for i in 0..6 {
            out[i] = c;
            out[i + 6] = c.reflect();
            c = c.rotate60();
        }
        out
    }

    /// Lexicographically smallest member of the orbit.
    pub fn orbit_representative(self) -> Self {
        self.orbit().into_iter().min().unwrap_or(self)
    }
}

impl std::ops::Add for CellIndex {
    type Output = CellIndex;
    fn add(self, o: CellIndex) -> CellIndex {
        CellIndex::new(self.a1 + o.a1, self.a2 + o.a2)
    }
}

impl std::ops::Sub for CellIndex {
    type Output = CellIndex;
    fn sub(self, o: CellIndex) -> CellIndex {
        CellIndex::new(self.a1 - o.a1, self.a2 - o.a2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn dist(self, o: Point2D) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point2D {
    type Output = Point2D;
    fn add(self, o: Point2D) -> Point2D {
        Point2D::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2D {
    type Output = Point2D;
    fn sub(self, o: Point2D) -> Point2D {
        Point2D::new(self.x - o.x, self.y - o.y)
    }
}

pub fn bs_position(c: CellIndex, r: f64) -> Point2D {
    let a1 = c.a1 as f64;
    let a2 = c.a2 as f64;
    Point2D::new(1.5 * r * a1, 0.5 * SQRT3 * r * a1 + SQRT3 * r * a2)
}

/// Outward unit normals of three of the six edges; the others are negatives.
const EDGE_NORMALS: [(f64, f64); 3] = [(0.5 * SQRT3, 0.5), (0.0, 1.0), (-0.5 * SQRT3, 0.5)];

fn hex_support(d: Point2D) -> f64 {
    EDGE_NORMALS
        .iter()
        .map(|&(nx, ny)| (d.x * nx + d.y * ny).abs())
        .fold(0.0, f64::max)
}

/// Membership in the closed hexagon of cell `c`.
pub fn contains(c: CellIndex, p: Point2D, r: f64) -> bool {
    let d = p - bs_position(c, r);
    hex_support(d) <= 0.5 * SQRT3 * r * (1.0 + EDGE_EPS)
}

/// The cell owning `p`. Points on shared edges go to the lexicographically
/// smallest index among the touching cells.
pub fn locate(p: Point2D, r: f64) -> CellIndex {
    let f1 = p.x / (1.5 * r);
    let f2 = (p.y - 0.5 * SQRT3 * r * f1) / (SQRT3 * r);
    let (c1, c2) = (f1.round() as i64, f2.round() as i64);
    let mut best: Option<(f64, CellIndex)> = None;
    for da in -2..=2 {
        for db in -2..=2 {
            let c = CellIndex::new(c1 + da, c2 + db);
            let d = p.dist(bs_position(c, r));
            best = match best {
                None => Some((d, c)),
                Some((bd, bc)) => {
                    let tol = EDGE_EPS * r;
                    if d < bd - tol || ((d - bd).abs() <= tol && c < bc) {
                        Some((d.min(bd), c))
                    } else {
                        Some((bd, bc))
                    }
                }
            };
        }
    }
    best.map(|(_, c)| c).unwrap_or(CellIndex::ORIGIN)
}

/// Corners of the hexagon of cell `c`, counter-clockwise from angle 0.
pub fn corners(c: CellIndex, r: f64) -> [Point2D; 6] {
    let b = bs_position(c, r);
    let mut out = [b; 6];
    for (k, p) in out.iter_mut().enumerate() {
        let (s, co) = (k as f64 * std::f64::consts::FRAC_PI_3).sin_cos();
        *p = Point2D::new(b.x + r * co, b.y + r * s);
    }
    out
}

/// Closest point to `p` on the boundary of the hexagon of cell `c`.
pub fn project_to_boundary(c: CellIndex, p: Point2D, r: f64) -> Point2D {
    let cs = corners(c, r);
    let mut best = cs[0];
    let mut best_d = f64::INFINITY;
    for k in 0..6 {
        let (a, b) = (cs[k], cs[(k + 1) % 6]);
        let ab = b - a;
        let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / (ab.x * ab.x + ab.y * ab.y))
            .clamp(0.0, 1.0);
        let q = Point2D::new(a.x + t * ab.x, a.y + t * ab.y);
        let d = q.dist(p);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Point of the interferer's hexagon boundary nearest to the victim BS.
pub fn worst_case_position(interferer: CellIndex, victim: CellIndex, r: f64) -> Result<Point2D> {
    if interferer == victim {
        return Err(Error::Domain(
            "worst-case position needs an interferer distinct from the victim cell".into(),
        ));
    }
    Ok(project_to_boundary(interferer, bs_position(victim, r), r))
}

/// Uniform position in the hexagon of `c` outside the disk of radius
/// `min_frac * r` around its BS (rejection sampling on the bounding box).
pub fn sample_ue_position<R: Rng + ?Sized>(
    c: CellIndex,
    r: f64,
    min_frac: f64,
    rng: &mut R,
) -> Point2D {
    let b = bs_position(c, r);
    let half_h = 0.5 * SQRT3 * r;
    let min_sq = (min_frac * r) * (min_frac * r);
    loop {
        let x = r * (2.0 * rng.gen::<f64>() - 1.0);
        let y = half_h * (2.0 * rng.gen::<f64>() - 1.0);
        let d = Point2D::new(x, y);
        if x * x + y * y < min_sq || hex_support(d) > half_h {
            continue;
        }
        return b + d;
    }
}

/// All cells with tier exactly `t` around the origin, in lexicographic order.
pub fn ring(t: usize) -> Vec<CellIndex> {
    let t = t as i64;
    let mut out = Vec::with_capacity((6 * t).max(1) as usize);
    for a1 in -t..=t {
        for a2 in -t..=t {
            let c = CellIndex::new(a1, a2);
            if c.tier() as i64 == t {
                out.push(c);
            }
        }
    }
    out
}

/// All cells up to and including tier `tiers`.
pub fn cells_within(tiers: usize) -> Vec<CellIndex> {
    (0..=tiers).flat_map(ring).collect()
}

/// Co-channel structure of a reuse-`beta` cluster.
///
/// Two cells share a pilot group iff their index difference lies in the
/// sublattice spanned by the columns of `[[i, -j], [j, i + j]]`, where
/// `beta = i^2 + i j + j^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReuseCluster {
    beta: u32,
    shift: (i64, i64),
    cosets: Vec<(i64, i64)>,
}

impl ReuseCluster {
    pub fn new(beta: u32) -> Result<Self> {
        let shift = match beta {
            1 => (1, 0),
            3 => (1, 1),
            4 => (2, 0),
            7 => (2, 1),
            _ => return Err(Error::UnsupportedReuse(beta)),
        };
        debug_assert!(SUPPORTED_REUSE.contains(&beta));
        let mut cluster = ReuseCluster {
            beta,
            shift,
            cosets: Vec::with_capacity(beta as usize),
        };
        // Enumerate cosets outward from the origin so that group 0 is the
        // origin's group and numbering is deterministic.
        'outer: for t in 0.. {
            for c in ring(t) {
                let key = cluster.coset_key(c);
                if !cluster.cosets.contains(&key) {
                    cluster.cosets.push(key);
                    if cluster.cosets.len() == beta as usize {
                        break 'outer;
                    }
                }
            }
        }
        Ok(cluster)
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    /// Generator matrix columns of the co-channel sublattice.
    pub fn generators(&self) -> (CellIndex, CellIndex) {
        let (i, j) = self.shift;
        (CellIndex::new(i, j), CellIndex::new(-j, i + j))
    }

    /// `adj(M) * c mod beta`; zero iff `M^-1 c` is an integer pair.
    fn coset_key(&self, c: CellIndex) -> (i64, i64) {
        let (i, j) = self.shift;
        let b = self.beta as i64;
        let u = (i + j) * c.a1 + j * c.a2;
        let v = -j * c.a1 + i * c.a2;
        (u.rem_euclid(b), v.rem_euclid(b))
    }

    pub fn in_sublattice(&self, diff: CellIndex) -> bool {
        self.coset_key(diff) == (0, 0)
    }

    pub fn group(&self, c: CellIndex) -> u32 {
        let key = self.coset_key(c);
        self.cosets
            .iter()
            .position(|&k| k == key)
            .expect("cosets enumerate the full quotient group") as u32
    }
}

/// Pilot group of cell `c` for reuse factor `beta`, in `0..beta`.
pub fn reuse_group(c: CellIndex, beta: u32) -> Result<u32> {
    Ok(ReuseCluster::new(beta)?.group(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn bs_positions() {
        let p = bs_position(CellIndex::new(0, 0), 1.0);
        assert_eq!((p.x, p.y), (0.0, 0.0));
        let p = bs_position(CellIndex::new(1, 0), 1.0);
        assert!(close(p.x, 1.5) && close(p.y, 3f64.sqrt() / 2.0));
        let p = bs_position(CellIndex::new(1, 1), 2.0);
        assert!(close(p.x, 3.0) && close(p.y, 3.0 * 3f64.sqrt()));
    }

    #[test]
    fn adjacent_bs_spacing() {
        for r in [1.0, 3.7] {
            for n in ring(1) {
                let d = bs_position(n, r).norm();
                assert!(close(d, 3f64.sqrt() * r), "{n:?}");
            }
        }
    }

    #[test]
    fn bs_map_is_injective() {
        let cells = cells_within(6);
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                assert!(bs_position(*a, 1.0).dist(bs_position(*b, 1.0)) > 1.0);
            }
        }
    }

    #[test]
    fn ring_sizes() {
        assert_eq!(ring(0), vec![CellIndex::ORIGIN]);
        for t in 1..8 {
            assert_eq!(ring(t).len(), 6 * t);
        }
        assert_eq!(cells_within(2).len(), 19);
    }

    #[test]
    fn membership() {
        let c = CellIndex::new(2, -1);
        let b = bs_position(c, 2.0);
        assert!(contains(c, b, 2.0));
        // Corner direction at 0 degrees.
        assert!(contains(c, Point2D::new(b.x + 1.99, b.y), 2.0));
        assert!(!contains(c, Point2D::new(b.x + 2.02, b.y), 2.0));
        // Apothem direction: inside at 0.86 r, outside at 0.87 r.
        assert!(contains(c, Point2D::new(b.x, b.y + 0.86 * 2.0), 2.0));
        assert!(!contains(c, Point2D::new(b.x, b.y + 0.87 * 2.0), 2.0));
    }

    #[test]
    fn shared_edge_midpoint_tie_rule() {
        let a = CellIndex::new(0, 0);
        let b = CellIndex::new(1, 0);
        let mid = Point2D::new(0.75, 3f64.sqrt() / 4.0);
        assert!(contains(a, mid, 1.0));
        assert!(contains(b, mid, 1.0));
        assert_eq!(locate(mid, 1.0), a);
        // Same edge seen from the other side of the lattice.
        let m2 = Point2D::new(-0.75, -(3f64.sqrt()) / 4.0);
        assert_eq!(locate(m2, 1.0), CellIndex::new(-1, 0));
    }

    #[test]
    fn locate_matches_contains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = Point2D::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0));
            let c = locate(p, 1.3);
            assert!(contains(c, p, 1.3));
        }
    }

    #[test]
    fn reuse_one_is_universal() {
        for c in cells_within(3) {
            assert_eq!(reuse_group(c, 1).unwrap(), 0);
        }
    }

    #[test]
    fn reuse_three_examples() {
        let o = CellIndex::ORIGIN;
        assert_eq!(
            reuse_group(o, 3).unwrap(),
            reuse_group(CellIndex::new(1, 1), 3).unwrap()
        );
        assert_ne!(
            reuse_group(o, 3).unwrap(),
            reuse_group(CellIndex::new(1, 0), 3).unwrap()
        );
        let g0 = reuse_group(o, 3).unwrap();
        let other = ring(1)
            .into_iter()
            .filter(|&c| reuse_group(c, 3).unwrap() != g0)
            .count();
        assert_eq!(other, 6);
    }

    #[test]
    fn reuse_rejects_unsupported() {
        assert_eq!(
            reuse_group(CellIndex::ORIGIN, 2),
            Err(Error::UnsupportedReuse(2))
        );
        assert!(ReuseCluster::new(9).is_err());
    }

    #[test]
    fn reuse_groups_partition_and_spacing() {
        for beta in SUPPORTED_REUSE {
            let cl = ReuseCluster::new(beta).unwrap();
            let cells = cells_within(6);
            let mut seen = vec![0usize; beta as usize];
            for &c in &cells {
                seen[cl.group(c) as usize] += 1;
            }
            assert!(seen.iter().all(|&n| n > 0), "beta {beta}: {seen:?}");
            // Nearest co-channel BS at sqrt(3 beta) r.
            let nearest = cells
                .iter()
                .filter(|&&c| c != CellIndex::ORIGIN && cl.group(c) == cl.group(CellIndex::ORIGIN))
                .map(|&c| bs_position(c, 1.0).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(
                close(nearest, (3.0 * beta as f64).sqrt()),
                "beta {beta}: {nearest}"
            );
        }
    }

    #[test]
    fn reuse_translation_invariance() {
        for beta in SUPPORTED_REUSE {
            let cl = ReuseCluster::new(beta).unwrap();
            let (g1, g2) = cl.generators();
            for c in cells_within(3) {
                for k1 in -2i64..=2 {
                    for k2 in -2i64..=2 {
                        let shift =
                            CellIndex::new(k1 * g1.a1 + k2 * g2.a1, k1 * g1.a2 + k2 * g2.a2);
                        assert_eq!(cl.group(c + shift), cl.group(c));
                    }
                }
            }
        }
    }

    #[test]
    fn sampler_respects_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = CellIndex::new(-1, 2);
        let b = bs_position(c, 2.5);
        for _ in 0..20_000 {
            let p = sample_ue_position(c, 2.5, 0.14, &mut rng);
            assert!(contains(c, p, 2.5));
            assert!(p.dist(b) >= 0.14 * 2.5);
        }
    }

    #[test]
    fn sampler_mean_is_bs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = CellIndex::new(1, 0);
        let b = bs_position(c, 1.0);
        let n = 1_000_000;
        let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let d = sample_ue_position(c, 1.0, 0.14, &mut rng) - b;
            sx += d.x;
            sy += d.y;
            sxx += d.x * d.x;
            syy += d.y * d.y;
        }
        let nf = n as f64;
        for (s, ss) in [(sx, sxx), (sy, syy)] {
            let mean = s / nf;
            let se = ((ss / nf - mean * mean) / nf).sqrt();
            assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
        }
    }

    #[test]
    fn sampler_sector_uniformity() {
        // Chi-squared over six 60-degree sectors, 5 dof, 1% critical value 15.086.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 100_000;
        let mut counts = [0f64; 6];
        for _ in 0..n {
            let p = sample_ue_position(CellIndex::ORIGIN, 1.0, 0.14, &mut rng);
            let ang = p.y.atan2(p.x).rem_euclid(std::f64::consts::TAU);
            counts[((ang / std::f64::consts::FRAC_PI_3) as usize).min(5)] += 1.0;
        }
        let e = n as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        assert!(chi2 < 15.086, "chi2 = {chi2}");
    }

    #[test]
    fn worst_case_adjacent_is_edge_midpoint() {
        let p = worst_case_position(CellIndex::new(1, 0), CellIndex::ORIGIN, 1.0).unwrap();
        let half = 3f64.sqrt() / 2.0;
        assert!(close(p.norm(), half));
        assert!(close(p.dist(bs_position(CellIndex::new(1, 0), 1.0)), half));
        assert!(worst_case_position(CellIndex::ORIGIN, CellIndex::ORIGIN, 1.0).is_err());
    }

    #[test]
    fn worst_case_properties() {
        let r = 1.7;
        for c in cells_within(4)
            .into_iter()
            .filter(|&c| c != CellIndex::ORIGIN)
        {
            let p = worst_case_position(c, CellIndex::ORIGIN, r).unwrap();
            let b = bs_position(c, r);
            // On the boundary: support function equals the apothem.
            assert!(close(hex_support(p - b), 0.5 * SQRT3 * r), "{c:?}");
            assert!(p.norm() < b.norm());
            // Projection is idempotent.
            let q = project_to_boundary(c, p, r);
            assert!(p.dist(q) < 1e-12 * r);
            // Nothing on the boundary is closer.
            for k in 0..600 {
                let corners = corners(c, r);
                let (a, e) = (corners[k / 100], corners[(k / 100 + 1) % 6]);
                let t = (k % 100) as f64 / 100.0;
                let s = Point2D::new(a.x + t * (e.x - a.x), a.y + t * (e.y - a.y));
                assert!(s.norm() >= p.norm() - 1e-12);
            }
        }
    }

    #[test]
    fn orbit_preserves_distance_and_tier() {
        for c in cells_within(4) {
            let d = bs_position(c, 1.0).norm();
            for img in c.orbit() {
                assert_eq!(img.tier(), c.tier());
                assert!(close(bs_position(img, 1.0).norm(), d));
            }
            assert_eq!(
                c.orbit_representative(),
                c.orbit_representative().orbit_representative()
            );
        }
        assert_eq!(
            CellIndex::new(1, 0)
                .orbit()
                .iter()
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            6
        );
    }
}
