//! Closed-form uplink SINR and spectral efficiency for MRC and P-ZFC.
//!
//! Two evaluation routes are provided. [`sinr_mrc`] and [`sinr_pzfc`] walk
//! every UE of every cell in the moment table and weight each term by the
//! pilot inner product from the [`PilotPlan`], exactly as the sums are
//! written. [`CollapsedMoments`] pre-aggregates the table per reuse group,
//! which is what the optimizer uses; both routes must agree to rounding.
//!
//! The victim is the cell at the origin of the table; by symmetry every UE
//! there has the same SINR, so user 1 is evaluated.

use crate::error::{Error, Result};
use crate::hexgeo::CellIndex;
use crate::moments::MomentTable;
use crate::netmodel::{NetworkConfig, Scheme};
use crate::pilotplan::PilotPlan;

/// Everything a finite-N SINR evaluation needs.
#[derive(Debug, Clone, Copy)]
pub struct SinrInputs<'a> {
    pub config: &'a NetworkConfig,
    pub moments: &'a MomentTable,
    pub plan: &'a PilotPlan,
    pub scheme: Scheme,
}

impl<'a> SinrInputs<'a> {
    pub fn new(
        config: &'a NetworkConfig,
        moments: &'a MomentTable,
        plan: &'a PilotPlan,
        scheme: Scheme,
    ) -> Result<Self> {
        config.clone().validate(Some(scheme))?;
        if plan.n_users() != config.n_users || plan.reuse_factor() != config.reuse_factor {
            return Err(Error::Domain(format!(
                "pilot plan (K = {}, beta = {}) does not match config (K = {}, beta = {})",
                plan.n_users(),
                plan.reuse_factor(),
                config.n_users,
                config.reuse_factor
            )));
        }
        moments.entry(CellIndex::ORIGIN)?;
        Ok(SinrInputs {
            config,
            moments,
            plan,
            scheme,
        })
    }
}

/// SINR together with the resulting per-cell spectral efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeResult {
    /// Possibly `+inf` in contamination-free asymptotic settings.
    pub sinr: f64,
    /// bit/s/Hz/cell.
    pub se_per_cell: f64,
    /// 1 - B/T.
    pub prelog: f64,
}

impl SeResult {
    pub fn new(n_users: usize, pilot_len: usize, coherence_block: usize, sinr: f64) -> Self {
        let prelog = 1.0 - pilot_len as f64 / coherence_block as f64;
        let se_per_cell = if prelog <= 0.0 {
            0.0
        } else {
            n_users as f64 * prelog * (1.0 + sinr).log2()
        };
        SeResult {
            sinr,
            se_per_cell,
            prelog,
        }
    }

    pub fn se_per_user(&self, n_users: usize) -> f64 {
        self.se_per_cell / n_users as f64
    }
}

/// `b / denom`, with `+inf` for a vanishing denominator.
fn finish(b: f64, denom: f64) -> Result<f64> {
    if denom.abs() <= 1e-12 * b {
        Ok(f64::INFINITY)
    } else if denom > 0.0 {
        Ok(b / denom)
    } else {
        Err(Error::DegenerateDenominator(denom))
    }
}

/// Neumaier-compensated sum; the coherent terms cancel against `-B`.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + carry
}

/// One UE of the network as seen from the victim BS.
struct Ue {
    mu1: f64,
    mu2: f64,
    pilot: usize,
}

fn enumerate_ues(moments: &MomentTable, plan: &PilotPlan) -> Result<Vec<Ue>> {
    let mut out = Vec::with_capacity(moments.len() * plan.n_users());
    for (cell, e) in moments.iter() {
        for m in 1..=plan.n_users() {
            out.push(Ue {
                mu1: e.mu1,
                mu2: e.mu2,
                pilot: plan.pilot_of(cell, m)?,
            });
        }
    }
    Ok(out)
}

/// sum over (l, m) of `mu1_l * v_i^H v_{i_lm}`: the pilot-`i` contamination level.
fn contamination(ues: &[Ue], plan: &PilotPlan, pilot: usize) -> f64 {
    ues.iter()
        .map(|u| u.mu1 * plan.inner_product(pilot, u.pilot))
        .sum()
}

/// Finite-N SINR with maximum ratio combining, evaluated term by term.
pub fn sinr_mrc(inputs: &SinrInputs<'_>) -> Result<f64> {
    let SinrInputs {
        config,
        moments,
        plan,
        ..
    } = *inputs;
    let n = config.n_antennas as f64;
    let k = config.n_users as f64;
    let b = plan.pilot_len() as f64;
    let s = config.noise_over_snr();
    let own = plan.pilot_of(CellIndex::ORIGIN, 1)?;
    let ues = enumerate_ues(moments, plan)?;

    let sum_mu1: f64 = moments.iter().map(|(_, e)| e.mu1).sum();
    let own_contamination = contamination(&ues, plan, own);
    let coherent = compensated_sum(
        std::iter::once(-b).chain(
            ues.iter()
                .map(|u| (u.mu2 + (u.mu2 - u.mu1 * u.mu1) / n) * plan.inner_product(own, u.pilot)),
        ),
    );

    let denom = (sum_mu1 * k / n + s / n) * (own_contamination + s) + coherent;
    finish(b, denom)
}

/// Finite-N SINR with pilot-based zero-forcing combining, evaluated term by term.
pub fn sinr_pzfc(inputs: &SinrInputs<'_>) -> Result<f64> {
    let SinrInputs {
        config,
        moments,
        plan,
        ..
    } = *inputs;
    let b_len = plan.pilot_len();
    if config.n_antennas <= b_len {
        return Err(Error::InsufficientAntennas {
            n_antennas: config.n_antennas,
            pilot_len: b_len,
        });
    }
    let dof = (config.n_antennas - b_len) as f64;
    let b = b_len as f64;
    let s = config.noise_over_snr();
    let own = plan.pilot_of(CellIndex::ORIGIN, 1)?;
    let ues = enumerate_ues(moments, plan)?;

    let coherent =
        compensated_sum(std::iter::once(-b).chain(
            ues.iter().map(|u| {
                (u.mu2 + (u.mu2 - u.mu1 * u.mu1) / dof) * plan.inner_product(own, u.pilot)
            }),
        ));

    let mut per_pilot: Vec<Option<f64>> = vec![None; b_len + 1];
    let mut residual = 0.0;
    for u in &ues {
        let level = *per_pilot[u.pilot].get_or_insert_with(|| contamination(&ues, plan, u.pilot));
        residual += u.mu1 * (1.0 - b * u.mu1 / (level + s));
    }
    let own_contamination = per_pilot[own].unwrap_or_else(|| contamination(&ues, plan, own));

    let denom = coherent + (residual + s) * ((own_contamination + s) / dof);
    finish(b, denom)
}

pub fn sinr(inputs: &SinrInputs<'_>) -> Result<f64> {
    match inputs.scheme {
        Scheme::Mrc => sinr_mrc(inputs),
        Scheme::Pzfc => sinr_pzfc(inputs),
    }
}

/// Per-cell SE; all UEs of the symmetric network share one SINR.
pub fn se_per_cell(inputs: &SinrInputs<'_>) -> Result<SeResult> {
    let value = sinr(inputs)?;
    Ok(SeResult::new(
        inputs.config.n_users,
        inputs.plan.pilot_len(),
        inputs.config.coherence_block,
        value,
    ))
}

/// Large-N limit shared by both schemes, evaluated term by term. `+inf`
/// when the victim's pilots are not reused anywhere in the table.
pub fn asymptotic_sinr(moments: &MomentTable, plan: &PilotPlan) -> Result<f64> {
    let b = plan.pilot_len() as f64;
    let own = plan.pilot_of(CellIndex::ORIGIN, 1)?;
    let ues = enumerate_ues(moments, plan)?;
    let coherent = compensated_sum(
        std::iter::once(-b).chain(ues.iter().map(|u| u.mu2 * plan.inner_product(own, u.pilot))),
    );
    finish(b, coherent)
}

/// Asymptotically optimal K: the integer(s) next to T / (2 beta) maximizing
/// `K (1 - K beta / T)`.
pub fn kstar_asymptotic(coherence_block: usize, beta: u32) -> Result<Vec<usize>> {
    let beta = beta as usize;
    if beta == 0 || coherence_block < 2 * beta {
        return Err(Error::Domain(format!(
            "need T >= 2 beta, got T = {coherence_block} and beta = {beta}"
        )));
    }
    let lo = coherence_block / (2 * beta);
    let hi = coherence_block.div_ceil(2 * beta);
    // K (T - beta K) is the prelog scaled by T; compare in integers.
    let score = |k: usize| k * (coherence_block - beta * k);
    let best = score(lo).max(score(hi));
    let mut out: Vec<usize> = [lo, hi].into_iter().filter(|&k| score(k) == best).collect();
    out.dedup();
    Ok(out)
}

/// Large-N per-cell SE at the continuous optimum K = T / (2 beta):
/// `T / (4 beta) * log2(1 + asymptotic SINR)`.
pub fn asymptotic_se_optimized(coherence_block: usize, beta: u32, asymptotic_sinr: f64) -> f64 {
    coherence_block as f64 / (4.0 * beta as f64) * (1.0 + asymptotic_sinr).log2()
}

/// The moment table aggregated per reuse group for one beta. Evaluation is
/// then O(beta) per (N, K) point.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedMoments {
    pub beta: u32,
    /// sum of mu1 over all cells (victim included).
    pub sum_mu1: f64,
    /// Per group: sum of mu1.
    pub group_mu1: Vec<f64>,
    /// Per group: sum of mu1^2.
    pub group_mu1_sq: Vec<f64>,
    /// Victim's group index.
    pub own_group: usize,
    /// sum of mu2 over co-channel cells, victim excluded.
    pub copilot_mu2: f64,
    /// sum of (mu2 - mu1^2) over co-channel cells.
    pub copilot_spread: f64,
}

impl CollapsedMoments {
    pub fn new(moments: &MomentTable, beta: u32) -> Result<Self> {
        let plan = PilotPlan::new(1, beta)?;
        moments.entry(CellIndex::ORIGIN)?;
        let own_group = plan.group_of(CellIndex::ORIGIN) as usize;
        let mut out = CollapsedMoments {
            beta,
            sum_mu1: 0.0,
            group_mu1: vec![0.0; beta as usize],
            group_mu1_sq: vec![0.0; beta as usize],
            own_group,
            copilot_mu2: 0.0,
            copilot_spread: 0.0,
        };
        for (cell, e) in moments.iter() {
            let g = plan.group_of(cell) as usize;
            out.sum_mu1 += e.mu1;
            out.group_mu1[g] += e.mu1;
            out.group_mu1_sq[g] += e.mu1 * e.mu1;
            if g == own_group {
                out.copilot_spread += e.spread();
                if cell != CellIndex::ORIGIN {
                    out.copilot_mu2 += e.mu2;
                }
            }
        }
        Ok(out)
    }

    pub fn sinr_mrc(&self, n_antennas: usize, n_users: usize, noise_over_snr: f64) -> Result<f64> {
        let n = n_antennas as f64;
        let k = n_users as f64;
        let b = k * self.beta as f64;
        let s = noise_over_snr;
        let own = b * self.group_mu1[self.own_group] + s;
        let denom =
            (self.sum_mu1 * k / n + s / n) * own + b * (self.copilot_mu2 + self.copilot_spread / n);
        finish(b, denom)
    }

    pub fn sinr_pzfc(&self, n_antennas: usize, n_users: usize, noise_over_snr: f64) -> Result<f64> {
        let b_len = n_users * self.beta as usize;
        if n_antennas <= b_len {
            return Err(Error::InsufficientAntennas {
                n_antennas,
                pilot_len: b_len,
            });
        }
        let dof = (n_antennas - b_len) as f64;
        let k = n_users as f64;
        let b = b_len as f64;
        let s = noise_over_snr;
        let residual: f64 = self
            .group_mu1
            .iter()
            .zip(&self.group_mu1_sq)
            .map(|(&a, &q)| k * (a - b * q / (b * a + s)))
            .sum();
        let own = b * self.group_mu1[self.own_group] + s;
        let denom = b * (self.copilot_mu2 + self.copilot_spread / dof) + (residual + s) * own / dof;
        finish(b, denom)
    }

    pub fn sinr(
        &self,
        scheme: Scheme,
        n_antennas: usize,
        n_users: usize,
        noise_over_snr: f64,
    ) -> Result<f64> {
        match scheme {
            Scheme::Mrc => self.sinr_mrc(n_antennas, n_users, noise_over_snr),
            Scheme::Pzfc => self.sinr_pzfc(n_antennas, n_users, noise_over_snr),
        }
    }

    /// Large-N SINR, `1 / sum of co-channel mu2`.
    pub fn asymptotic_sinr(&self) -> f64 {
        if self.copilot_mu2 > 0.0 {
            1.0 / self.copilot_mu2
        } else {
            f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgeo::cells_within;
    use crate::moments::{MomentEntry, MomentTable};
    use crate::netmodel::{InterferenceMode, SUPPORTED_REUSE};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_cell() -> MomentTable {
        MomentTable::from_entries(
            InterferenceMode::Average,
            3.5,
            [(CellIndex::ORIGIN, MomentEntry::UNIT)],
        )
        .unwrap()
    }

    /// Random but Jensen-consistent moments on `tiers` tiers; cross-cell mu1
    /// decays with tier like a pathloss would.
    fn random_table(tiers: usize, seed: u64) -> MomentTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = cells_within(tiers).into_iter().map(|c| {
            if c == CellIndex::ORIGIN {
                (c, MomentEntry::UNIT)
            } else {
                let mu1 = rng.gen_range(0.01..0.3) / (c.tier() as f64).powi(3);
                let mu2 = mu1 * mu1 * rng.gen_range(1.0..3.0);
                (c, MomentEntry::exact(mu1, mu2))
            }
        });
        MomentTable::from_entries(InterferenceMode::Average, 3.5, entries).unwrap()
    }

    fn cfg(n: usize, k: usize, beta: u32, snr: f64) -> NetworkConfig {
        NetworkConfig {
            n_antennas: n,
            n_users: k,
            reuse_factor: beta,
            snr_linear: snr,
            ..NetworkConfig::default()
        }
    }

    fn eval(table: &MomentTable, c: &NetworkConfig, scheme: Scheme) -> f64 {
        let plan = PilotPlan::new(c.n_users, c.reuse_factor).unwrap();
        sinr(&SinrInputs::new(c, table, &plan, scheme).unwrap()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn single_cell_mrc_closed_form() {
        let t = single_cell();
        for (n, snr) in [(50usize, 10.0), (8, 1.0), (1000, 100.0)] {
            let s = 1.0 / snr;
            let expected = n as f64 / ((1.0 + s) * (1.0 + s));
            assert!(rel(eval(&t, &cfg(n, 1, 1, snr), Scheme::Mrc), expected) < 1e-12);
        }
        // Array gain N in the noiseless limit.
        assert!(rel(eval(&t, &cfg(64, 1, 1, 1e9), Scheme::Mrc), 64.0) < 1e-6);
    }

    #[test]
    fn single_cell_pzfc_closed_form() {
        let t = single_cell();
        for (n, snr) in [(50usize, 10.0), (2, 1.0), (1000, 3.0)] {
            let s = 1.0 / snr;
            let expected = (n - 1) as f64 / (s * (2.0 + s));
            assert!(rel(eval(&t, &cfg(n, 1, 1, snr), Scheme::Pzfc), expected) < 1e-12);
        }
    }

    #[test]
    fn pzfc_requires_more_antennas_than_pilots() {
        let t = single_cell();
        let c = cfg(20, 10, 3, 10.0);
        let plan = PilotPlan::new(10, 3).unwrap();
        assert!(matches!(
            SinrInputs::new(&c, &t, &plan, Scheme::Pzfc),
            Err(Error::InsufficientAntennas { .. })
        ));
        let inputs = SinrInputs {
            config: &c,
            moments: &t,
            plan: &plan,
            scheme: Scheme::Pzfc,
        };
        assert!(matches!(
            sinr_pzfc(&inputs),
            Err(Error::InsufficientAntennas { .. })
        ));
        assert!(CollapsedMoments::new(&t, 3)
            .unwrap()
            .sinr_pzfc(20, 10, 0.1)
            .is_err());
    }

    #[test]
    fn mismatched_plan_rejected() {
        let t = single_cell();
        let c = cfg(20, 2, 1, 10.0);
        let plan = PilotPlan::new(3, 1).unwrap();
        assert!(SinrInputs::new(&c, &t, &plan, Scheme::Mrc).is_err());
    }

    #[test]
    fn zero_cross_moments_reduce_to_single_cell() {
        let entries = cells_within(2).into_iter().map(|c| {
            (
                c,
                if c == CellIndex::ORIGIN {
                    MomentEntry::UNIT
                } else {
                    MomentEntry::exact(0.0, 0.0)
                },
            )
        });
        let t = MomentTable::from_entries(InterferenceMode::Average, 3.5, entries).unwrap();
        let s: f64 = 0.1;
        let expected = 50.0 / ((1.0 + s) * (1.0 + s));
        assert!(rel(eval(&t, &cfg(50, 1, 1, 10.0), Scheme::Mrc), expected) < 1e-12);
    }

    #[test]
    fn asymptotic_examples() {
        let plan = PilotPlan::new(3, 1).unwrap();
        assert_eq!(
            asymptotic_sinr(&single_cell(), &plan).unwrap(),
            f64::INFINITY
        );
        let t = MomentTable::from_entries(
            InterferenceMode::Average,
            3.5,
            [
                (CellIndex::ORIGIN, MomentEntry::UNIT),
                (CellIndex::new(1, 0), MomentEntry::exact(0.5, 0.25)),
                (CellIndex::new(2, 0), MomentEntry::exact(0.5, 0.25)),
            ],
        )
        .unwrap();
        assert!(rel(asymptotic_sinr(&t, &plan).unwrap(), 2.0) < 1e-14);
        assert!(rel(CollapsedMoments::new(&t, 1).unwrap().asymptotic_sinr(), 2.0) < 1e-14);
    }

    #[test]
    fn se_examples() {
        assert_eq!(SeResult::new(5, 1000, 1000, 123.0).se_per_cell, 0.0);
        assert_eq!(SeResult::new(5, 1000, 1000, f64::INFINITY).se_per_cell, 0.0);
        let r = SeResult::new(1, 2, 1000, 1.0);
        assert!((r.se_per_cell - 0.998).abs() < 1e-15);
        assert!((r.prelog - 0.998).abs() < 1e-15);
    }

    #[test]
    fn kstar_examples() {
        assert_eq!(kstar_asymptotic(1000, 1).unwrap(), vec![500]);
        // 166 * 502 = 83332 < 167 * 499 = 83333.
        assert_eq!(kstar_asymptotic(1000, 3).unwrap(), vec![167]);
        assert_eq!(kstar_asymptotic(4, 2).unwrap(), vec![1]);
        // Candidates {1, 2}: 1 * 6 = 6 beats 2 * 2 = 4.
        assert_eq!(kstar_asymptotic(10, 4).unwrap(), vec![1]);
        assert!(kstar_asymptotic(3, 2).is_err());
    }

    #[test]
    fn kstar_is_discrete_argmax() {
        for t in [10usize, 97, 500, 1000, 1001, 4096] {
            for beta in SUPPORTED_REUSE {
                if t < 2 * beta as usize {
                    continue;
                }
                let ks = kstar_asymptotic(t, beta).unwrap();
                let f = |k: usize| k as f64 * (1.0 - (k * beta as usize) as f64 / t as f64);
                let brute = (1..=t / beta as usize).map(f).fold(f64::MIN, f64::max);
                for &k in &ks {
                    assert!((f(k) - brute).abs() < 1e-9, "T {t} beta {beta}");
                    assert!(f(k) >= f(k + 1) - 1e-12 && (k == 1 || f(k) >= f(k - 1) - 1e-12));
                }
            }
        }
    }

    #[test]
    fn asymptotic_se_doubles_with_t() {
        let a = asymptotic_se_optimized(1000, 3, 2.5);
        let b = asymptotic_se_optimized(2000, 3, 2.5);
        assert_eq!(b, 2.0 * a);
        assert_eq!(asymptotic_se_optimized(1000, 1, 1.0), 250.0);
    }

    #[test]
    fn converges_to_common_limit() {
        let t = random_table(2, 5);
        for beta in SUPPORTED_REUSE {
            let plan = PilotPlan::new(4, beta).unwrap();
            let limit = asymptotic_sinr(&t, &plan).unwrap();
            if !limit.is_finite() {
                continue;
            }
            let c = cfg(1_000_000_000, 4, beta, 10.0);
            let m = eval(&t, &c, Scheme::Mrc);
            let z = eval(&t, &c, Scheme::Pzfc);
            assert!(
                rel(m, limit) < 1e-3 && rel(z, limit) < 1e-3,
                "beta {beta}: {m} {z} {limit}"
            );
            assert!((m - z).abs() / m < 1e-3);
        }
    }

    #[test]
    fn increasing_in_n_and_snr() {
        let t = random_table(3, 6);
        for scheme in Scheme::ALL {
            for beta in [1, 3] {
                let mut prev = 0.0;
                for n in [10usize, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000] {
                    let v = eval(&t, &cfg(n, 2, beta, 10.0), scheme);
                    assert!(v > prev, "{scheme} beta {beta} N {n}");
                    prev = v;
                }
                let mut prev = 0.0;
                for snr in [0.1, 1.0, 10.0, 100.0, 1000.0] {
                    let v = eval(&t, &cfg(100, 2, beta, snr), scheme);
                    assert!(v > prev, "{scheme} beta {beta} snr {snr}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn matches_asymptotic_limit_of_non_copilot_table() {
        // beta = 7 on a single tier: no co-channel cells, limit is unbounded.
        let t = random_table(1, 9);
        let plan = PilotPlan::new(2, 7).unwrap();
        assert_eq!(asymptotic_sinr(&t, &plan).unwrap(), f64::INFINITY);
        assert_eq!(
            CollapsedMoments::new(&t, 7).unwrap().asymptotic_sinr(),
            f64::INFINITY
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn collapsed_equals_generic(
            seed in 0u64..1000, beta_idx in 0usize..4, k in 1usize..6,
            extra in 1usize..400, snr_db in -5.0f64..30.0, tiers in 1usize..4,
        ) {
            let beta = SUPPORTED_REUSE[beta_idx];
            let t = random_table(tiers, seed);
            let n = k * beta as usize + extra;
            let snr = 10f64.powf(snr_db / 10.0);
            let c = cfg(n, k, beta, snr);
            let col = CollapsedMoments::new(&t, beta).unwrap();
            for scheme in Scheme::ALL {
                let g = eval(&t, &c, scheme);
                let f = col.sinr(scheme, n, k, 1.0 / snr).unwrap();
                prop_assert!(rel(f, g) < 1e-12, "{:?}: {} vs {}", scheme, f, g);
            }
            let plan = PilotPlan::new(k, beta).unwrap();
            let ga = asymptotic_sinr(&t, &plan).unwrap();
            let fa = col.asymptotic_sinr();
            prop_assert!((ga.is_infinite() && fa.is_infinite()) || rel(fa, ga) < 1e-12);
        }
    }
}
