//! Exhaustive schedule search over (K, beta) for each antenna count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentTable;
use crate::netmodel::{InterferenceMode, NetworkConfig, Scheme, SUPPORTED_REUSE};
use crate::se_analytic::{self, CollapsedMoments, SeResult};

/// Grid definition for [`sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_grid: Vec<usize>,
    /// Upper bound on K; the effective cap per beta is min(k_max, T / beta).
    pub k_max: usize,
    pub betas: Vec<u32>,
    pub schemes: Vec<Scheme>,
    pub modes: Vec<InterferenceMode>,
}

impl SweepSpec {
    /// The reference experiment: N log-spaced over [10, 10^4], K up to 500,
    /// every supported reuse factor, both schemes and both modes.
    pub fn reference() -> Self {
        SweepSpec {
            n_grid: log_spaced_grid(10, 10_000, 30),
            k_max: 500,
            betas: SUPPORTED_REUSE.to_vec(),
            schemes: Scheme::ALL.to_vec(),
            modes: InterferenceMode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub beta: u32,
    pub scheme: Scheme,
    pub mode: InterferenceMode,
    pub sinr: f64,
    pub se: f64,
}

/// Best row of one (N, scheme, mode) slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    #[serde(rename = "N")]
    pub n: usize,
    pub scheme: Scheme,
    pub mode: InterferenceMode,
    #[serde(rename = "K")]
    pub k: usize,
    pub beta: u32,
    pub sinr: f64,
    pub se: f64,
    pub se_per_user: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub optima: Vec<Optimum>,
    /// (N, K, beta, scheme, mode) points skipped because P-ZFC needs N > B.
    pub skipped: Vec<(usize, usize, u32, Scheme, InterferenceMode)>,
}

/// Integer grid of `points` values log-spaced over `[lo, hi]`, deduplicated.
pub fn log_spaced_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    if points <= 1 || lo >= hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    out[0] = lo;
    out[points - 1] = hi;
    out.dedup();
    out
}

/// Evaluates every feasible grid point and records the per-slice optimum.
///
/// `tables` must hold a moment table for every mode in `spec.modes`.
pub fn sweep(
    template: &NetworkConfig,
    spec: &SweepSpec,
    tables: &BTreeMap<InterferenceMode, MomentTable>,
) -> Result<SweepResult> {
    if spec.n_grid.is_empty()
        || spec.betas.is_empty()
        || spec.schemes.is_empty()
        || spec.modes.is_empty()
    {
        return Err(Error::Domain("sweep grids must be nonempty".into()));
    }
    if spec.k_max == 0 {
        return Err(Error::Domain("k_max must be positive".into()));
    }
    let t = template.coherence_block;
    let noise = template.noise_over_snr();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut optima = Vec::new();

    for &mode in &spec.modes {
        let table = tables
            .get(&mode)
            .ok_or_else(|| Error::NotFound(format!("moment table for mode {mode}")))?;
        let collapsed: Vec<CollapsedMoments> = spec
            .betas
            .iter()
            .map(|&beta| CollapsedMoments::new(table, beta))
            .collect::<Result<_>>()?;

        for &scheme in &spec.schemes {
            // Grid points are independent; collect per N in grid order.
            let per_n: Vec<Result<(Vec<SweepRow>, Vec<_>)>> = spec
                .n_grid
                .par_iter()
                .map(|&n| {
                    let mut slice = Vec::new();
                    let mut skip = Vec::new();
                    for col in &collapsed {
                        let beta = col.beta;
                        let k_cap = spec.k_max.min(t / beta as usize);
                        for k in 1..=k_cap {
                            let b = k * beta as usize;
                            if scheme == Scheme::Pzfc && n <= b {
                                skip.push((n, k, beta, scheme, mode));
                                continue;
                            }
                            let sinr = col.sinr(scheme, n, k, noise)?;
                            let se = SeResult::new(k, b, t, sinr).se_per_cell;
                            slice.push(SweepRow {
                                n,
                                k,
                                beta,
                                scheme,
                                mode,
                                sinr,
                                se,
                            });
                        }
                    }
                    Ok((slice, skip))
                })
                .collect();

            for (&n, res) in spec.n_grid.iter().zip(per_n) {
                let (slice, skip) = res?;
                let best = best_row(&slice).ok_or_else(|| Error::EmptyFeasibleSet {
                    n_antennas: n,
                    scheme: scheme.to_string(),
                    mode: mode.to_string(),
                })?;
                optima.push(Optimum {
                    n,
                    scheme,
                    mode,
                    k: best.k,
                    beta: best.beta,
                    sinr: best.sinr,
                    se: best.se,
                    se_per_user: best.se / best.k as f64,
                });
                rows.extend(slice);
                skipped.extend(skip);
            }
        }
    }
    Ok(SweepResult {
        rows,
        optima,
        skipped,
    })
}

/// Maximum SE; ties go to smaller K, then smaller beta.
fn best_row(rows: &[SweepRow]) -> Option<SweepRow> {
    rows.iter().copied().reduce(|best, r| {
        let better = r.se > best.se || (r.se == best.se && (r.k, r.beta) < (best.k, best.beta));
        if better {
            r
        } else {
            best
        }
    })
}

/// The argmax schedule (K*, beta*, SE*) for one slice of a sweep.
pub fn optimal_schedule(
    result: &SweepResult,
    n: usize,
    scheme: Scheme,
    mode: InterferenceMode,
) -> Result<Optimum> {
    result
        .optima
        .iter()
        .find(|o| o.n == n && o.scheme == scheme && o.mode == mode)
        .copied()
        .ok_or_else(|| Error::NotFound(format!("no optimum for N = {n}, {scheme}, {mode}")))
}

/// Large-N operating point for one reuse factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub mode: InterferenceMode,
    pub beta: u32,
    /// Space-separated when two values tie.
    pub kstar: String,
    /// T / (4 beta).
    pub prelog: f64,
    pub sinr: f64,
    /// prelog * log2(1 + sinr); scales linearly with T.
    pub se: f64,
    /// K (1 - K beta / T) log2(1 + sinr) at the first integer optimum.
    pub se_integer_k: f64,
}

pub fn asymptotic_rows(
    coherence_block: usize,
    betas: &[u32],
    table: &MomentTable,
) -> Result<Vec<AsymptoticRow>> {
    betas
        .iter()
        .map(|&beta| {
            let col = CollapsedMoments::new(table, beta)?;
            let sinr = col.asymptotic_sinr();
            let ks = se_analytic::kstar_asymptotic(coherence_block, beta)?;
            let k0 = ks[0];
            Ok(AsymptoticRow {
                mode: table.mode,
                beta,
                kstar: ks
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                prelog: coherence_block as f64 / (4.0 * beta as f64),
                sinr,
                se: se_analytic::asymptotic_se_optimized(coherence_block, beta, sinr),
                se_integer_k: SeResult::new(k0, k0 * beta as usize, coherence_block, sinr)
                    .se_per_cell,
            })
        })
        .collect()
}

fn write_csv<W: Write, T: Serialize>(items: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for it in items {
        w.serialize(it)
            .map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
    Ok(())
}

/// `N,K,beta,scheme,mode,sinr,se`
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

/// `N,scheme,mode,K,beta,sinr,se,se_per_user`
pub fn write_optima_csv<W: Write>(optima: &[Optimum], out: W) -> Result<()> {
    write_csv(optima, out)
}

/// `mode,beta,kstar,prelog,sinr,se,se_integer_k`
pub fn write_asymptotic_csv<W: Write>(rows: &[AsymptoticRow], out: W) -> Result<()> {
    write_csv(rows, out)
}
