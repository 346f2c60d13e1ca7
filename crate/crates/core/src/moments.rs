//! Interference coupling moments.
//!
//! For a UE in cell `l` and a victim BS `j`, the moment of order `gamma` is
//! `E[(|z - b_l| / |z - b_j|)^(kappa * gamma)]`. Only the offset `l - j`
//! matters on the infinite symmetric grid, so tables are keyed by offset
//! with the victim at the origin. Geometry is evaluated in units of the cell
//! radius; the reference value C and the radius r cancel from the ratio.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgeo::{self, CellIndex, Point2D};
use crate::netmodel::{InterferenceMode, NetworkConfig};
use crate::rng;

pub const TABLE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub mu1: f64,
    pub mu2: f64,
    /// Monte Carlo standard errors; zero for deterministic entries.
    pub se1: f64,
    pub se2: f64,
}

impl MomentEntry {
    pub const UNIT: MomentEntry = MomentEntry {
        mu1: 1.0,
        mu2: 1.0,
        se1: 0.0,
        se2: 0.0,
    };

    pub fn exact(mu1: f64, mu2: f64) -> Self {
        MomentEntry {
            mu1,
            mu2,
            se1: 0.0,
            se2: 0.0,
        }
    }

    /// mu2 - mu1^2, the variance of the gain ratio.
    pub fn spread(&self) -> f64 {
        self.mu2 - self.mu1 * self.mu1
    }

    pub fn get(&self, gamma: u8) -> (f64, f64) {
        if gamma == 1 {
            (self.mu1, self.se1)
        } else {
            (self.mu2, self.se2)
        }
    }
}

/// Adaptive truncation of the infinite grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierPolicy {
    /// Stop once a tier adds less than this share of the running sum of mu1.
    pub rel_tol: f64,
    pub max_tiers: usize,
}

impl Default for TierPolicy {
    fn default() -> Self {
        TierPolicy {
            rel_tol: 1e-4,
            max_tiers: 40,
        }
    }
}

/// UE positions relative to their own BS, in units of the cell radius.
#[derive(Debug, Clone)]
pub struct UeSamples {
    offsets: Vec<Point2D>,
    sq_norms: Vec<f64>,
}

impl UeSamples {
    pub fn draw<R: Rng + ?Sized>(n: usize, min_frac: f64, rng: &mut R) -> Self {
        Self::draw_scaled(n, 1.0, min_frac, rng)
    }

    fn draw_scaled<R: Rng + ?Sized>(n: usize, r: f64, min_frac: f64, rng: &mut R) -> Self {
        let offsets: Vec<Point2D> = (0..n)
            .map(|_| hexgeo::sample_ue_position(CellIndex::ORIGIN, r, min_frac, rng))
            .collect();
        let sq_norms = offsets.iter().map(|u| u.x * u.x + u.y * u.y).collect();
        UeSamples { offsets, sq_norms }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Sample-mean moments for interfering cell at `offset` from the victim.
    /// `r` must match the radius the samples were drawn at.
    fn moments_at(&self, offset: CellIndex, kappa: f64, r: f64) -> MomentEntry {
        if offset == CellIndex::ORIGIN {
            return MomentEntry::UNIT;
        }
        let b = hexgeo::bs_position(offset, r);
        let half_kappa = 0.5 * kappa;
        let values: Vec<f64> = self
            .offsets
            .iter()
            .zip(&self.sq_norms)
            .map(|(u, &own_sq)| {
                let (vx, vy) = (u.x + b.x, u.y + b.y);
                (own_sq / (vx * vx + vy * vy)).powf(half_kappa)
            })
            .collect();
        summarize(&values)
    }
}

/// Two-pass mean/variance; guarantees mu2 >= mu1^2 on the stored values.
fn summarize(values: &[f64]) -> MomentEntry {
    let n = values.len() as f64;
    let mu1 = values.iter().sum::<f64>() / n;
    let var1 = values.iter().map(|x| (x - mu1) * (x - mu1)).sum::<f64>() / n;
    let mu2 = mu1 * mu1 + var1;
    let var2 = values
        .iter()
        .map(|x| {
            let d = x * x - mu2;
            d * d
        })
        .sum::<f64>()
        / n;
    let dof = (n - 1.0).max(1.0);
    MomentEntry {
        mu1,
        mu2,
        se1: (var1 / dof).sqrt(),
        se2: (var2 / dof).sqrt(),
    }
}

fn worst_case_entry(offset: CellIndex, kappa: f64) -> Result<MomentEntry> {
    let p = hexgeo::worst_case_position(offset, CellIndex::ORIGIN, 1.0)?;
    let ratio = (p.dist(hexgeo::bs_position(offset, 1.0)) / p.norm()).powf(kappa);
    Ok(MomentEntry::exact(ratio, ratio * ratio))
}

/// One moment for a single offset, with its standard error.
///
/// Average mode draws `n_samples` UE positions at absolute radius `r`;
/// worst-case mode evaluates the deterministic cell-edge point.
#[allow(clippy::too_many_arguments)]
pub fn compute_moment<R: Rng + ?Sized>(
    offset: CellIndex,
    kappa: f64,
    gamma: u8,
    mode: InterferenceMode,
    n_samples: usize,
    min_frac: f64,
    r: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(kappa.is_finite() && kappa >= 2.0) {
        return Err(Error::Domain(format!(
            "pathloss exponent must be >= 2, got {kappa}"
        )));
    }
    if gamma != 1 && gamma != 2 {
        return Err(Error::Domain(format!(
            "moment order must be 1 or 2, got {gamma}"
        )));
    }
    match mode {
        InterferenceMode::WorstCase => Ok(worst_case_entry(offset, kappa)?.get(gamma)),
        InterferenceMode::Average => {
            if n_samples == 0 {
                return Err(Error::Domain(
                    "average mode needs at least one sample".into(),
                ));
            }
            if offset == CellIndex::ORIGIN {
                return Ok((1.0, 0.0));
            }
            let samples = UeSamples::draw_scaled(n_samples, r, min_frac, rng);
            Ok(samples.moments_at(offset, kappa, r).get(gamma))
        }
    }
}

/// Moments for every offset in a truncated grid around the victim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TableFile", try_from = "TableFile")]
pub struct MomentTable {
    pub mode: InterferenceMode,
    pub kappa: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub min_ue_distance_frac: f64,
    /// Largest tier present.
    pub tiers: usize,
    entries: BTreeMap<CellIndex, MomentEntry>,
}

impl MomentTable {
    /// Table from explicit entries (fixtures, cached files). The origin entry
    /// must be exactly one and every entry must satisfy mu2 >= mu1^2 >= 0.
    pub fn from_entries(
        mode: InterferenceMode,
        kappa: f64,
        entries: impl IntoIterator<Item = (CellIndex, MomentEntry)>,
    ) -> Result<Self> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        match entries.get(&CellIndex::ORIGIN) {
            Some(e) if e.mu1 == 1.0 && e.mu2 == 1.0 => {}
            _ => {
                return Err(Error::Domain(
                    "moment table needs the own-cell entry mu1 = mu2 = 1".into(),
                ))
            }
        }
        for (c, e) in &entries {
            let finite = e.mu1.is_finite() && e.mu2.is_finite();
            if !finite || e.mu1 < 0.0 || e.mu2 < e.mu1 * e.mu1 {
                return Err(Error::Domain(format!(
                    "invalid moments at ({}, {}): mu1 = {}, mu2 = {}",
                    c.a1, c.a2, e.mu1, e.mu2
                )));
            }
        }
        let tiers = entries.keys().map(|c| c.tier()).max().unwrap_or(0);
        Ok(MomentTable {
            mode,
            kappa,
            n_samples: 0,
            seed: 0,
            min_ue_distance_frac: 0.0,
            tiers,
            entries,
        })
    }

    pub fn get(&self, offset: CellIndex) -> Option<&MomentEntry> {
        self.entries.get(&offset)
    }

    pub fn entry(&self, offset: CellIndex) -> Result<&MomentEntry> {
        self.get(offset).ok_or(Error::MissingMoment(offset))
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellIndex, &MomentEntry)> {
        self.entries.iter().map(|(c, e)| (*c, e))
    }

    /// Cells covered by the table, victim included.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of mu1 over one tier.
    pub fn tier_sum(&self, tier: usize) -> f64 {
        self.iter()
            .filter(|(c, _)| c.tier() == tier)
            .map(|(_, e)| e.mu1)
            .sum()
    }

    /// Copy restricted to tiers `0..=tiers`.
    pub fn truncated(&self, tiers: usize) -> MomentTable {
        let mut out = self.clone();
        out.entries.retain(|c, _| c.tier() <= tiers);
        out.tiers = out.tiers.min(tiers);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moment tables serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Domain(format!("bad moment table file: {e}")))
    }
}

/// Builds a table by adding tiers around the victim until the newest tier
/// contributes less than `policy.rel_tol` of the running sum of mu1.
///
/// Average mode reuses one set of `n_samples` UE draws for every offset and
/// evaluates one representative per lattice-symmetry orbit.
pub fn build_table(
    kappa: f64,
    mode: InterferenceMode,
    policy: TierPolicy,
    n_samples: usize,
    min_frac: f64,
    seed: u64,
) -> Result<MomentTable> {
    if !(kappa.is_finite() && kappa >= 2.0) {
        return Err(Error::Domain(format!(
            "pathloss exponent must be >= 2, got {kappa}"
        )));
    }
    if mode == InterferenceMode::Average && n_samples == 0 {
        return Err(Error::Domain(
            "average mode needs at least one sample".into(),
        ));
    }
    if !(0.0..1.0).contains(&min_frac) {
        return Err(Error::Domain(format!(
            "min_frac must lie in [0, 1), got {min_frac}"
        )));
    }
    let samples = match mode {
        InterferenceMode::Average => {
            let mut rng = rng::stream(seed, rng::MOMENTS_AVERAGE);
            Some(UeSamples::draw(n_samples, min_frac, &mut rng))
        }
        InterferenceMode::WorstCase => None,
    };

    let mut entries = BTreeMap::new();
    entries.insert(CellIndex::ORIGIN, MomentEntry::UNIT);
    let mut by_orbit: HashMap<CellIndex, MomentEntry> = HashMap::new();
    let mut running = 1.0;
    let mut last_increment = f64::INFINITY;

    for tier in 1..=policy.max_tiers {
        let cells = hexgeo::ring(tier);
        let mut reps: Vec<CellIndex> = cells.iter().map(|c| c.orbit_representative()).collect();
        reps.sort();
        reps.dedup();
        let fresh: Vec<(CellIndex, MomentEntry)> = reps
            .par_iter()
            .map(|&rep| {
                let e = match &samples {
                    Some(s) => s.moments_at(rep, kappa, 1.0),
                    None => worst_case_entry(rep, kappa)?,
                };
                Ok((rep, e))
            })
            .collect::<Result<_>>()?;
        by_orbit.extend(fresh);

        let mut increment = 0.0;
        for c in cells {
            let e = by_orbit[&c.orbit_representative()];
            increment += e.mu1;
            entries.insert(c, e);
        }
        running += increment;
        last_increment = increment / running;
        if last_increment < policy.rel_tol {
            return Ok(MomentTable {
                mode,
                kappa,
                n_samples: if samples.is_some() { n_samples } else { 0 },
                seed,
                min_ue_distance_frac: min_frac,
                tiers: tier,
                entries,
            });
        }
    }
    Err(Error::Convergence {
        max_tiers: policy.max_tiers,
        last_increment,
        tolerance: policy.rel_tol,
    })
}

/// Table restricted to an explicit cell set around the victim (which is
/// always included), using the same sampling as [`build_table`].
pub fn table_for_cells(
    kappa: f64,
    mode: InterferenceMode,
    cells: &[CellIndex],
    n_samples: usize,
    min_frac: f64,
    seed: u64,
) -> Result<MomentTable> {
    if mode == InterferenceMode::Average && n_samples == 0 {
        return Err(Error::Domain(
            "average mode needs at least one sample".into(),
        ));
    }
    let samples = match mode {
        InterferenceMode::Average => {
            let mut rng = rng::stream(seed, rng::MOMENTS_AVERAGE);
            Some(UeSamples::draw(n_samples, min_frac, &mut rng))
        }
        InterferenceMode::WorstCase => None,
    };
    let mut entries = BTreeMap::new();
    entries.insert(CellIndex::ORIGIN, MomentEntry::UNIT);
    for &c in cells.iter().filter(|&&c| c != CellIndex::ORIGIN) {
        let e = match &samples {
            Some(s) => s.moments_at(c, kappa, 1.0),
            None => worst_case_entry(c, kappa)?,
        };
        entries.insert(c, e);
    }
    let tiers = entries.keys().map(|c| c.tier()).max().unwrap_or(0);
    Ok(MomentTable {
        mode,
        kappa,
        n_samples: if samples.is_some() { n_samples } else { 0 },
        seed,
        min_ue_distance_frac: min_frac,
        tiers,
        entries,
    })
}

/// [`build_table`] with kappa and the exclusion radius taken from `config`.
/// The cell radius and pathloss reference do not enter.
pub fn build_table_for(
    config: &NetworkConfig,
    mode: InterferenceMode,
    policy: TierPolicy,
    n_samples: usize,
    seed: u64,
) -> Result<MomentTable> {
    build_table(
        config.pathloss_exponent,
        mode,
        policy,
        n_samples,
        config.min_ue_distance_frac,
        seed,
    )
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    a1: i64,
    a2: i64,
    mu1: f64,
    mu2: f64,
    se1: f64,
    se2: f64,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format_version: u32,
    mode: InterferenceMode,
    kappa: f64,
    seed: u64,
    n_samples: usize,
    min_ue_distance_frac: f64,
    tiers: usize,
    entries: Vec<EntryRecord>,
}

impl From<MomentTable> for TableFile {
    fn from(t: MomentTable) -> Self {
        TableFile {
            format_version: TABLE_FORMAT_VERSION,
            mode: t.mode,
            kappa: t.kappa,
            seed: t.seed,
            n_samples: t.n_samples,
            min_ue_distance_frac: t.min_ue_distance_frac,
            tiers: t.tiers,
            entries: t
                .entries
                .into_iter()
                .map(|(c, e)| EntryRecord {
                    a1: c.a1,
                    a2: c.a2,
                    mu1: e.mu1,
                    mu2: e.mu2,
                    se1: e.se1,
                    se2: e.se2,
                })
                .collect(),
        }
    }
}

impl TryFrom<TableFile> for MomentTable {
    type Error = String;

    fn try_from(f: TableFile) -> std::result::Result<Self, String> {
        if f.format_version != TABLE_FORMAT_VERSION {
            return Err(format!(
                "unsupported moment table version {} (expected {TABLE_FORMAT_VERSION})",
                f.format_version
            ));
        }
        let entries = f.entries.into_iter().map(|e| {
            (
                CellIndex::new(e.a1, e.a2),
                MomentEntry {
                    mu1: e.mu1,
                    mu2: e.mu2,
                    se1: e.se1,
                    se2: e.se2,
                },
            )
        });
        let mut t =
            MomentTable::from_entries(f.mode, f.kappa, entries).map_err(|e| e.to_string())?;
        t.n_samples = f.n_samples;
        t.seed = f.seed;
        t.min_ue_distance_frac = f.min_ue_distance_frac;
        t.tiers = f.tiers;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const AVG: InterferenceMode = InterferenceMode::Average;
    const WORST: InterferenceMode = InterferenceMode::WorstCase;

    #[test]
    fn own_cell_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for gamma in [1, 2] {
            assert_eq!(
                compute_moment(CellIndex::ORIGIN, 3.5, gamma, AVG, 10, 0.14, 1.0, &mut rng)
                    .unwrap(),
                (1.0, 0.0)
            );
        }
        assert!(compute_moment(CellIndex::ORIGIN, 3.5, 1, WORST, 1, 0.14, 1.0, &mut rng).is_err());
    }

    #[test]
    fn worst_case_adjacent_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kappa in [2.0, 3.5, 4.0] {
            for n in hexgeo::ring(1) {
                for gamma in [1, 2] {
                    let (v, se) =
                        compute_moment(n, kappa, gamma, WORST, 1, 0.14, 1.0, &mut rng).unwrap();
                    assert!((v - 1.0).abs() < 1e-12, "{n:?} {v}");
                    assert_eq!(se, 0.0);
                }
            }
        }
    }

    #[test]
    fn average_adjacent_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (v, se) = compute_moment(
            CellIndex::new(1, 0),
            3.5,
            1,
            AVG,
            200_000,
            0.14,
            1.0,
            &mut rng,
        )
        .unwrap();
        assert!(v > 0.0 && v < 1.0 && se > 0.0 && se < 0.01 * v, "{v} {se}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let off = CellIndex::new(1, 0);
        assert!(compute_moment(off, 1.9, 1, AVG, 10, 0.14, 1.0, &mut rng).is_err());
        assert!(compute_moment(off, 3.0, 3, AVG, 10, 0.14, 1.0, &mut rng).is_err());
        assert!(compute_moment(off, 3.0, 1, AVG, 0, 0.14, 1.0, &mut rng).is_err());
        assert!(build_table(1.0, AVG, TierPolicy::default(), 10, 0.14, 0).is_err());
    }

    #[test]
    fn radius_doubling_is_bit_exact() {
        let off = CellIndex::new(2, -1);
        for gamma in [1, 2] {
            let a = compute_moment(
                off,
                3.5,
                gamma,
                AVG,
                20_000,
                0.14,
                1.0,
                &mut ChaCha8Rng::seed_from_u64(9),
            )
            .unwrap();
            let b = compute_moment(
                off,
                3.5,
                gamma,
                AVG,
                20_000,
                0.14,
                2.0,
                &mut ChaCha8Rng::seed_from_u64(9),
            )
            .unwrap();
            let c = compute_moment(
                off,
                3.5,
                gamma,
                AVG,
                20_000,
                0.14,
                250.0,
                &mut ChaCha8Rng::seed_from_u64(9),
            )
            .unwrap();
            assert_eq!(a, b);
            assert!((a.0 / c.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn table_ignores_radius_and_reference() {
        let c1 = NetworkConfig::default();
        let c2 = NetworkConfig {
            cell_radius: 250.0,
            pathloss_ref: 1e-3,
            ..c1.clone()
        };
        let policy = TierPolicy {
            rel_tol: 1e-2,
            max_tiers: 10,
        };
        let a = build_table_for(&c1, AVG, policy, 5_000, 5).unwrap();
        let b = build_table_for(&c2, AVG, policy, 5_000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_invariants() {
        let t = build_table(3.5, AVG, TierPolicy::default(), 50_000, 0.14, 3).unwrap();
        assert_eq!(t.get(CellIndex::ORIGIN), Some(&MomentEntry::UNIT));
        for (c, e) in t.iter() {
            assert!(e.mu1 > 0.0 && e.mu2 > 0.0, "{c:?}");
            assert!(e.mu2 >= e.mu1 * e.mu1, "{c:?}");
        }
        // Tier sums decay; tier 1 beats tier 2 well beyond noise.
        let t1: Vec<_> = t
            .iter()
            .filter(|(c, _)| c.tier() == 1)
            .map(|(_, e)| *e)
            .collect();
        let t2: Vec<_> = t
            .iter()
            .filter(|(c, _)| c.tier() == 2)
            .map(|(_, e)| *e)
            .collect();
        let lo1 = t1
            .iter()
            .map(|e| e.mu1 - 3.0 * e.se1)
            .fold(f64::INFINITY, f64::min);
        let hi2 = t2.iter().map(|e| e.mu1 + 3.0 * e.se1).fold(0.0, f64::max);
        assert!(lo1 > hi2);
        assert!(t.tiers > 5);
        let running = 1.0 + (1..=5).map(|k| t.tier_sum(k)).sum::<f64>();
        assert!(t.tier_sum(5) / running < 1e-2);
    }

    #[test]
    fn worst_case_table_is_deterministic_and_dominates() {
        let w = build_table(3.5, WORST, TierPolicy::default(), 0, 0.14, 0).unwrap();
        let a = build_table(3.5, AVG, TierPolicy::default(), 50_000, 0.14, 4).unwrap();
        for (c, e) in w.iter() {
            assert_eq!(e.se1, 0.0);
            assert!((e.mu2 - e.mu1 * e.mu1).abs() <= 1e-15 * e.mu2.max(1.0));
            if let Some(av) = a.get(c) {
                assert!(e.mu1 >= av.mu1 - 3.0 * av.se1, "{c:?}");
                assert!(e.mu2 >= av.mu2 - 3.0 * av.se2, "{c:?}");
            }
        }
    }

    #[test]
    fn convergence_error_when_capped() {
        let err = build_table(
            2.0,
            WORST,
            TierPolicy {
                rel_tol: 1e-6,
                max_tiers: 12,
            },
            0,
            0.14,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Convergence { max_tiers: 12, .. }));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let t = build_table(
            3.5,
            AVG,
            TierPolicy {
                rel_tol: 1e-2,
                max_tiers: 10,
            },
            2_000,
            0.14,
            8,
        )
        .unwrap();
        let back = MomentTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let bumped = t
            .to_json()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(MomentTable::from_json(&bumped).is_err());
    }

    #[test]
    fn from_entries_validates() {
        let ok = MomentTable::from_entries(
            AVG,
            3.5,
            [
                (CellIndex::ORIGIN, MomentEntry::UNIT),
                (CellIndex::new(1, 0), MomentEntry::exact(0.1, 0.02)),
            ],
        );
        assert!(ok.is_ok());
        let jensen = MomentTable::from_entries(
            AVG,
            3.5,
            [
                (CellIndex::ORIGIN, MomentEntry::UNIT),
                (CellIndex::new(1, 0), MomentEntry::exact(0.5, 0.2)),
            ],
        );
        assert!(jensen.is_err());
        assert!(MomentTable::from_entries(
            AVG,
            3.5,
            [(CellIndex::new(1, 0), MomentEntry::exact(0.1, 0.02))]
        )
        .is_err());
    }
}
