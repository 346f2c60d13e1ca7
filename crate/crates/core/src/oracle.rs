//! Link-level Monte Carlo validator.
//!
//! Draws UE positions and i.i.d. Rayleigh channels, forms the received pilot
//! block with DFT pilots, runs LMMSE estimation, applies MRC or P-ZFC, and
//! estimates the expectations that make up the closed-form SINR bound:
//!
//! ```text
//! SINR = |E{g^H h_own}|^2 / (sum_all E{|g^H h|^2} - |E{g^H h_own}|^2 + sigma^2 E{|g|^2})
//! ```
//!
//! with expectations over channels, noise and UE positions. Only channels to
//! the victim BS (cell at the origin) are drawn. The data phase is not
//! simulated symbol by symbol; the bound only needs moments of `g^H h`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgeo::{self, cells_within, CellIndex, Point2D};
use crate::moments::{self, MomentTable};
use crate::netmodel::{pathloss, InterferenceMode, NetworkConfig, Scheme};
use crate::pilotplan::PilotPlan;
use crate::rng;
use crate::se_analytic::{self, SinrInputs};

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// A small network to simulate: the victim at the origin plus its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub config: NetworkConfig,
    pub cells: Vec<CellIndex>,
    pub mode: InterferenceMode,
}

impl Fixture {
    pub fn new(config: NetworkConfig, tiers: usize, mode: InterferenceMode) -> Result<Self> {
        let config = config.validate(None)?;
        Ok(Fixture {
            config,
            cells: cells_within(tiers),
            mode,
        })
    }

    pub fn plan(&self) -> Result<PilotPlan> {
        PilotPlan::new(self.config.n_users, self.config.reuse_factor)
    }

    pub fn n_ues(&self) -> usize {
        self.cells.len() * self.config.n_users
    }

    /// UE index of user `k` (1-based) in `cells[cell]`.
    pub fn ue_index(&self, cell: usize, k: usize) -> usize {
        cell * self.config.n_users + (k - 1)
    }

    fn victim_slot(&self) -> Result<usize> {
        self.cells
            .iter()
            .position(|&c| c == CellIndex::ORIGIN)
            .ok_or_else(|| {
                Error::Domain("fixture must contain the victim cell at the origin".into())
            })
    }

    /// Positions for every UE: uniform in the own cell, and uniform or at the
    /// worst-case edge point in other cells depending on the mode.
    pub fn sample_positions<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point2D> {
        let r = self.config.cell_radius;
        let mut out = Vec::with_capacity(self.n_ues());
        for &c in &self.cells {
            for _ in 0..self.config.n_users {
                let p = match self.mode {
                    InterferenceMode::WorstCase if c != CellIndex::ORIGIN => {
                        hexgeo::worst_case_position(c, CellIndex::ORIGIN, r)
                            .expect("interferer differs from the victim")
                    }
                    _ => hexgeo::sample_ue_position(c, r, self.config.min_ue_distance_frac, rng),
                };
                out.push(p);
            }
        }
        out
    }
}

/// Orthogonal pilot book: the columns of a B-point DFT matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    matrix: DMatrix<Complex64>,
}

impl PilotBook {
    pub fn dft(len: usize) -> Self {
        let matrix = DMatrix::from_fn(len, len, |t, b| {
            Complex64::from_polar(1.0, -std::f64::consts::TAU * (t * b) as f64 / len as f64)
        });
        PilotBook { matrix }
    }

    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    /// Pilot `i` (1-based).
    pub fn column(&self, i: usize) -> DVector<Complex64> {
        self.matrix.column(i - 1).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// One draw of positions, channels and pilot-phase noise at the victim BS.
#[derive(Debug, Clone)]
pub struct Realization {
    pub ue_positions: Vec<Point2D>,
    /// Pilot index (1-based) per UE.
    pub pilot: Vec<usize>,
    /// d_victim(z) / d_serving(z) per UE.
    pub gain_ratio: Vec<f64>,
    /// Transmit power rho / d_serving(z) per UE.
    pub power: Vec<f64>,
    /// Channels to the victim BS, element variance d_victim(z).
    pub channels: Vec<DVector<Complex64>>,
    pub pilots: PilotBook,
    /// Pilot-phase noise, N x B, CN(0, 1) entries.
    pub noise: DMatrix<Complex64>,
    /// Received pilot block, N x B.
    pub received_pilot: DMatrix<Complex64>,
    pub noise_over_snr: f64,
}

impl Realization {
    pub fn n_antennas(&self) -> usize {
        self.received_pilot.nrows()
    }

    pub fn effective_channel(&self, ue: usize) -> DVector<Complex64> {
        &self.channels[ue] * Complex64::from(self.power[ue].sqrt())
    }

    /// `sum over UEs of a_u v_i^H v_{i_u} + sigma^2 / rho`.
    pub fn pilot_contamination(&self, pilot: usize) -> f64 {
        let b = self.pilots.len();
        self.gain_ratio
            .iter()
            .zip(&self.pilot)
            .map(|(&a, &p)| a * crate::pilotplan::inner_product(pilot, p, b))
            .sum::<f64>()
            + self.noise_over_snr
    }
}

/// Draws a realization with UE positions from the fixture's mode.
pub fn generate<R: Rng + ?Sized>(
    fixture: &Fixture,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<Realization> {
    let positions = fixture.sample_positions(rng);
    generate_with_positions(fixture, plan, positions, rng)
}

/// Draws channels and noise for fixed UE positions.
pub fn generate_with_positions<R: Rng + ?Sized>(
    fixture: &Fixture,
    plan: &PilotPlan,
    positions: Vec<Point2D>,
    rng: &mut R,
) -> Result<Realization> {
    let cfg = &fixture.config;
    if positions.len() != fixture.n_ues() {
        return Err(Error::Domain(format!(
            "expected {} UE positions, got {}",
            fixture.n_ues(),
            positions.len()
        )));
    }
    let n = cfg.n_antennas;
    let b = plan.pilot_len();
    let (c, kappa, r) = (cfg.pathloss_ref, cfg.pathloss_exponent, cfg.cell_radius);
    let victim = hexgeo::bs_position(CellIndex::ORIGIN, r);
    let pilots = PilotBook::dft(b);

    let mut pilot = Vec::with_capacity(positions.len());
    let mut gain_ratio = Vec::with_capacity(positions.len());
    let mut power = Vec::with_capacity(positions.len());
    let mut channels = Vec::with_capacity(positions.len());
    for (slot, &cell) in fixture.cells.iter().enumerate() {
        let serving = hexgeo::bs_position(cell, r);
        for k in 1..=cfg.n_users {
            let z = positions[fixture.ue_index(slot, k)];
            let d_victim = pathloss(c, kappa, z.dist(victim));
            let d_serving = pathloss(c, kappa, z.dist(serving));
            pilot.push(plan.pilot_of(cell, k)?);
            gain_ratio.push(d_victim / d_serving);
            power.push(cfg.snr_linear / d_serving);
            channels.push(DVector::from_fn(n, |_, _| complex_gaussian(rng, d_victim)));
        }
    }
    let noise = DMatrix::from_fn(n, b, |_, _| complex_gaussian(rng, 1.0));
    let mut received_pilot = noise.clone();
    for u in 0..channels.len() {
        let h_eff = &channels[u] * Complex64::from(power[u].sqrt());
        let v = pilots.column(pilot[u]);
        received_pilot += h_eff * v.adjoint();
    }
    Ok(Realization {
        ue_positions: positions,
        pilot,
        gain_ratio,
        power,
        channels,
        pilots,
        noise,
        received_pilot,
        noise_over_snr: cfg.noise_over_snr(),
    })
}

/// LMMSE estimate of UE `ue`'s effective channel at the victim BS, using the
/// scalar form that orthogonal pilots allow:
/// `a_u * Y v_i / (sum_m a_m v_i^H v_{i_m} + sigma^2/rho)`.
pub fn lmmse_estimate(real: &Realization, ue: usize) -> DVector<Complex64> {
    let i = real.pilot[ue];
    let scale = real.gain_ratio[ue] / real.pilot_contamination(i);
    (&real.received_pilot * real.pilots.column(i)) * Complex64::from(scale)
}

/// Everything the BS derives from the pilot phase.
#[derive(Debug, Clone)]
pub struct EstimationOutput {
    /// B x B matrix `sum a v v^H + sigma^2/rho I`.
    pub psi: DMatrix<Complex64>,
    /// Eigenvalue of `psi` along each pilot (1-based index `i` at `i - 1`).
    pub psi_per_pilot: Vec<f64>,
    /// Per UE: the error covariance is this scalar times the identity.
    pub error_scale: Vec<f64>,
    /// N x B, column `i` is `Y psi^-1 v_i`.
    pub h_hat_book: DMatrix<Complex64>,
}

pub fn estimate(real: &Realization) -> EstimationOutput {
    let b = real.pilots.len();
    let mut psi = DMatrix::<Complex64>::identity(b, b) * Complex64::from(real.noise_over_snr);
    for (u, &a) in real.gain_ratio.iter().enumerate() {
        let v = real.pilots.column(real.pilot[u]);
        psi += (&v * v.adjoint()) * Complex64::from(a);
    }
    let psi_per_pilot: Vec<f64> = (1..=b).map(|i| real.pilot_contamination(i)).collect();
    let mut h_hat_book = &real.received_pilot * real.pilots.matrix();
    for (i, mut col) in h_hat_book.column_iter_mut().enumerate() {
        col /= Complex64::from(psi_per_pilot[i]);
    }
    let rho = 1.0 / real.noise_over_snr;
    let error_scale = real
        .gain_ratio
        .iter()
        .zip(&real.pilot)
        .map(|(&a, &i)| rho * a * (1.0 - a * b as f64 / psi_per_pilot[i - 1]))
        .collect();
    EstimationOutput {
        psi,
        psi_per_pilot,
        error_scale,
        h_hat_book,
    }
}

/// Receive combining vector for the victim UE on pilot `pilot`, built from
/// the estimated channel book `h_book` (N x B).
pub fn combine(
    h_book: &DMatrix<Complex64>,
    scheme: Scheme,
    pilot: usize,
) -> Result<DVector<Complex64>> {
    match scheme {
        Scheme::Mrc => Ok(h_book.column(pilot - 1).into_owned()),
        Scheme::Pzfc => {
            let b = h_book.ncols();
            if h_book.nrows() < b {
                return Err(Error::RankDeficient(f64::INFINITY));
            }
            let gram = h_book.adjoint() * h_book;
            let eig = gram.clone().symmetric_eigenvalues();
            let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
            let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if cond > MAX_CONDITION {
                return Err(Error::RankDeficient(cond));
            }
            let mut e = DVector::<Complex64>::zeros(b);
            e[pilot - 1] = Complex64::from(1.0);
            let x = gram.cholesky().ok_or(Error::RankDeficient(cond))?.solve(&e);
            Ok(h_book * x)
        }
    }
}

/// Normalization of the combining vector inside the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinerScaling {
    /// Columns of the pilot projection `Y V` without the position-dependent
    /// LMMSE scale; same directions as the estimates. P-ZFC keeps its unit
    /// response to the own column.
    PilotProjection,
    /// Columns of the LMMSE book, scaled by `1 / psi_i` per realization.
    Lmmse,
}

/// Interference-plus-noise terms relative to the coherent signal power.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermBreakdown {
    /// `E{|g^H h_own|^2} - |E{g^H h_own}|^2`: beamforming gain uncertainty
    /// caused by estimation error.
    pub gain_uncertainty: f64,
    pub intra_cell: f64,
    pub inter_cell: f64,
    pub noise: f64,
}

impl TermBreakdown {
    pub fn total(&self) -> f64 {
        self.gain_uncertainty + self.intra_cell + self.inter_cell + self.noise
    }

    pub fn sinr(&self) -> f64 {
        1.0 / self.total()
    }
}

/// Closed-form terms of the MRC bound (pilot-projection normalization),
/// each relative to the coherent signal power. They sum to `1 / SINR`.
pub fn analytic_mrc_terms(inputs: &SinrInputs<'_>) -> Result<TermBreakdown> {
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
    let own_group = plan.group_of(CellIndex::ORIGIN);
    let copilot_mu1: f64 = moments
        .iter()
        .filter(|(c, _)| plan.group_of(*c) == own_group)
        .map(|(_, e)| e.mu1)
        .sum();
    let base = (b * copilot_mu1 + s) / (b * n);

    let mut inter = 0.0;
    for (c, e) in moments.iter().filter(|(c, _)| *c != CellIndex::ORIGIN) {
        if plan.group_of(c) == own_group {
            // The co-pilot UE plus K - 1 UEs on other pilots.
            inter += e.mu1 * (b * (copilot_mu1 - e.mu1) + s) / (b * n) + (n + 1.0) * e.mu2 / n;
            inter += (k - 1.0) * e.mu1 * base;
        } else {
            inter += k * e.mu1 * base;
        }
    }
    Ok(TermBreakdown {
        gain_uncertainty: (b * (copilot_mu1 - 1.0) + s) / (b * n) + 1.0 / n,
        intra_cell: (k - 1.0) * base,
        inter_cell: inter,
        noise: s * base,
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Batch accumulator of the bound's expectations.
#[derive(Debug, Clone, Copy, Default)]
struct BoundSums {
    count: f64,
    signal_re: Compensated,
    signal_im: Compensated,
    signal_power: Compensated,
    intra: Compensated,
    inter: Compensated,
    noise: Compensated,
}

/// Plain means of a batch (or of all batches together).
#[derive(Debug, Clone, Copy, Default)]
struct BoundMeans {
    count: f64,
    signal_re: f64,
    signal_im: f64,
    signal_power: f64,
    intra: f64,
    inter: f64,
    noise: f64,
}

impl BoundSums {
    fn totals(&self) -> BoundMeans {
        BoundMeans {
            count: self.count,
            signal_re: self.signal_re.value(),
            signal_im: self.signal_im.value(),
            signal_power: self.signal_power.value(),
            intra: self.intra.value(),
            inter: self.inter.value(),
            noise: self.noise.value(),
        }
    }
}

impl BoundMeans {
    fn minus(&self, o: &BoundMeans) -> BoundMeans {
        BoundMeans {
            count: self.count - o.count,
            signal_re: self.signal_re - o.signal_re,
            signal_im: self.signal_im - o.signal_im,
            signal_power: self.signal_power - o.signal_power,
            intra: self.intra - o.intra,
            inter: self.inter - o.inter,
            noise: self.noise - o.noise,
        }
    }

    fn plus(&self, o: &BoundMeans) -> BoundMeans {
        BoundMeans {
            count: self.count + o.count,
            signal_re: self.signal_re + o.signal_re,
            signal_im: self.signal_im + o.signal_im,
            signal_power: self.signal_power + o.signal_power,
            intra: self.intra + o.intra,
            inter: self.inter + o.inter,
            noise: self.noise + o.noise,
        }
    }

    fn terms(&self) -> TermBreakdown {
        let n = self.count;
        let (re, im) = (self.signal_re / n, self.signal_im / n);
        let coherent = re * re + im * im;
        TermBreakdown {
            gain_uncertainty: (self.signal_power / n - coherent) / coherent,
            intra_cell: self.intra / n / coherent,
            inter_cell: self.inter / n / coherent,
            noise: self.noise / n / coherent,
        }
    }
}

/// Monte Carlo estimate of the effective SINR with jackknife standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrMeasurement {
    pub sinr: f64,
    pub std_error: f64,
    pub terms: TermBreakdown,
    pub term_std_errors: TermBreakdown,
    pub n_realizations: usize,
    pub scheme: Scheme,
    pub scaling: CombinerScaling,
}

fn jackknife(full: &BoundMeans, batches: &[BoundMeans], f: impl Fn(&BoundMeans) -> f64) -> f64 {
    let m = batches.len() as f64;
    if batches.len() < 2 {
        return f64::NAN;
    }
    let loo: Vec<f64> = batches.iter().map(|b| f(&full.minus(b))).collect();
    let mean = loo.iter().sum::<f64>() / m;
    ((m - 1.0) / m * loo.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()).sqrt()
}

fn accumulate_realization(
    fixture: &Fixture,
    real: &Realization,
    scheme: Scheme,
    scaling: CombinerScaling,
    victim_slot: usize,
    sums: &mut BoundSums,
) -> Result<()> {
    let book = match scaling {
        CombinerScaling::PilotProjection => &real.received_pilot * real.pilots.matrix(),
        CombinerScaling::Lmmse => estimate(real).h_hat_book,
    };
    let h_eff: Vec<DVector<Complex64>> = (0..real.channels.len())
        .map(|u| real.effective_channel(u))
        .collect();
    let k_users = fixture.config.n_users;
    for k in 1..=k_users {
        let own = fixture.ue_index(victim_slot, k);
        let g = combine(&book, scheme, real.pilot[own])?;
        let signal = g.dotc(&h_eff[own]);
        sums.count += 1.0;
        sums.signal_re.add(signal.re);
        sums.signal_im.add(signal.im);
        sums.signal_power.add(signal.norm_sqr());
        let (mut intra, mut inter) = (0.0, 0.0);
        for (u, h) in h_eff.iter().enumerate() {
            if u == own {
                continue;
            }
            let p = g.dotc(h).norm_sqr();
            if u / k_users == victim_slot {
                intra += p;
            } else {
                inter += p;
            }
        }
        sums.intra.add(intra);
        sums.inter.add(inter);
        sums.noise.add(g.norm_squared());
    }
    Ok(())
}

/// Estimates the effective SINR of the victim's UEs over `n_realizations`
/// independent draws of positions, channels and noise.
///
/// Draws are split into batches with their own RNG streams derived from
/// `seed` and `fixture_id`; results do not depend on thread count.
pub fn measure_sinr(
    fixture: &Fixture,
    scheme: Scheme,
    scaling: CombinerScaling,
    n_realizations: usize,
    seed: u64,
    fixture_id: u64,
) -> Result<SinrMeasurement> {
    if n_realizations < 2 {
        return Err(Error::Domain("need at least two realizations".into()));
    }
    let plan = fixture.plan()?;
    if scheme == Scheme::Pzfc && fixture.config.n_antennas < plan.pilot_len() {
        return Err(Error::InsufficientAntennas {
            n_antennas: fixture.config.n_antennas,
            pilot_len: plan.pilot_len(),
        });
    }
    let victim_slot = fixture.victim_slot()?;
    let n_batches = n_realizations.min(100);
    let batches: Vec<BoundMeans> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let size = n_realizations / n_batches + usize::from(b < n_realizations % n_batches);
            let mut rng = rng::oracle_batch(seed, fixture_id, b as u64);
            let mut sums = BoundSums::default();
            for _ in 0..size {
                let real = generate(fixture, &plan, &mut rng)?;
                accumulate_realization(fixture, &real, scheme, scaling, victim_slot, &mut sums)?;
            }
            Ok(sums.totals())
        })
        .collect::<Result<_>>()?;

    let full = batches
        .iter()
        .fold(BoundMeans::default(), |acc, b| acc.plus(b));
    let terms = full.terms();
    let se = |f: fn(&TermBreakdown) -> f64| jackknife(&full, &batches, |m| f(&m.terms()));
    Ok(SinrMeasurement {
        sinr: terms.sinr(),
        std_error: se(|t| t.sinr()),
        terms,
        term_std_errors: TermBreakdown {
            gain_uncertainty: se(|t| t.gain_uncertainty),
            intra_cell: se(|t| t.intra_cell),
            inter_cell: se(|t| t.inter_cell),
            noise: se(|t| t.noise),
        },
        n_realizations,
        scheme,
        scaling,
    })
}

/// Empirical LMMSE error energy for one UE at fixed positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCheck {
    pub ue: usize,
    pub empirical: f64,
    pub std_error: f64,
    /// `tr(C) = N * error_scale`.
    pub predicted: f64,
}

impl MseCheck {
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.predicted) / self.std_error
    }
}

pub fn lmmse_mse_check<R: Rng + ?Sized>(
    fixture: &Fixture,
    positions: &[Point2D],
    ue: usize,
    n_realizations: usize,
    rng: &mut R,
) -> Result<MseCheck> {
    let plan = fixture.plan()?;
    let mut sum = Compensated::default();
    let mut sum_sq = Compensated::default();
    let mut predicted = f64::NAN;
    for _ in 0..n_realizations {
        let real = generate_with_positions(fixture, &plan, positions.to_vec(), rng)?;
        if predicted.is_nan() {
            predicted = real.n_antennas() as f64 * estimate(&real).error_scale[ue];
        }
        let err = (real.effective_channel(ue) - lmmse_estimate(&real, ue)).norm_squared();
        sum.add(err);
        sum_sq.add(err * err);
    }
    let n = n_realizations as f64;
    let mean = sum.value() / n;
    let var = (sum_sq.value() / n - mean * mean) * n / (n - 1.0);
    Ok(MseCheck {
        ue,
        empirical: mean,
        std_error: (var / n).sqrt(),
        predicted,
    })
}

/// One row of the validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub name: String,
    pub scheme: Scheme,
    pub scaling: CombinerScaling,
    pub mode: InterferenceMode,
    pub n_antennas: usize,
    pub n_users: usize,
    pub reuse_factor: u32,
    pub n_cells: usize,
    pub realizations: usize,
    pub measured: f64,
    pub measured_se: f64,
    pub analytic: f64,
    pub asymptotic: f64,
    /// measured / analytic - 1.
    pub rel_gap: f64,
    pub criterion: String,
    /// `None` for report-only rows.
    pub passed: Option<bool>,
    pub measured_terms: TermBreakdown,
    pub measured_term_se: TermBreakdown,
    /// Closed-form per-term split (MRC with pilot-projection scaling only).
    pub analytic_terms: Option<TermBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub name: String,
    pub n_antennas: usize,
    pub n_cells: usize,
    pub n_users: usize,
    pub reuse_factor: u32,
    pub check: MseCheck,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub fixtures: Vec<FixtureReport>,
    pub lmmse: Vec<MseReport>,
    pub passed: bool,
}

/// Pass rule for a fixture comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// |measured - analytic| <= k standard errors.
    StdErrors(f64),
    /// |measured / analytic - 1| <= tol.
    Relative(f64),
    ReportOnly,
}

impl Criterion {
    fn describe(&self) -> String {
        match self {
            Criterion::StdErrors(k) => format!("|measured - analytic| <= {k} se"),
            Criterion::Relative(t) => format!("|measured / analytic - 1| <= {t}"),
            Criterion::ReportOnly => "report only".into(),
        }
    }

    fn check(&self, measured: f64, se: f64, analytic: f64) -> Option<bool> {
        match *self {
            Criterion::StdErrors(k) => Some((measured - analytic).abs() <= k * se),
            Criterion::Relative(t) => Some((measured / analytic - 1.0).abs() <= t),
            Criterion::ReportOnly => None,
        }
    }
}

/// A named oracle-vs-closed-form comparison.
#[derive(Debug, Clone)]
pub struct SinrFixtureSpec {
    pub name: String,
    pub fixture: Fixture,
    pub tiers: usize,
    pub scheme: Scheme,
    pub scaling: CombinerScaling,
    pub realizations: usize,
    pub criterion: Criterion,
}

/// Runs one comparison. `moment_samples` sets the Monte Carlo size of the
/// moment table used by the closed form.
pub fn compare_fixture(
    spec: &SinrFixtureSpec,
    moment_samples: usize,
    seed: u64,
    fixture_id: u64,
) -> Result<FixtureReport> {
    let fx = &spec.fixture;
    let cfg = &fx.config;
    let table: MomentTable = moments::table_for_cells(
        cfg.pathloss_exponent,
        fx.mode,
        &fx.cells,
        moment_samples,
        cfg.min_ue_distance_frac,
        seed,
    )?;
    let plan = fx.plan()?;
    let inputs = SinrInputs::new(cfg, &table, &plan, spec.scheme)?;
    let analytic = se_analytic::sinr(&inputs)?;
    let asymptotic = se_analytic::asymptotic_sinr(&table, &plan)?;
    let analytic_terms =
        if spec.scheme == Scheme::Mrc && spec.scaling == CombinerScaling::PilotProjection {
            Some(analytic_mrc_terms(&inputs)?)
        } else {
            None
        };
    let m = measure_sinr(
        fx,
        spec.scheme,
        spec.scaling,
        spec.realizations,
        seed,
        fixture_id,
    )?;
    Ok(FixtureReport {
        name: spec.name.clone(),
        scheme: spec.scheme,
        scaling: spec.scaling,
        mode: fx.mode,
        n_antennas: cfg.n_antennas,
        n_users: cfg.n_users,
        reuse_factor: cfg.reuse_factor,
        n_cells: fx.cells.len(),
        realizations: spec.realizations,
        measured: m.sinr,
        measured_se: m.std_error,
        analytic,
        asymptotic,
        rel_gap: m.sinr / analytic - 1.0,
        criterion: spec.criterion.describe(),
        passed: spec.criterion.check(m.sinr, m.std_error, analytic),
        measured_terms: m.terms,
        measured_term_se: m.term_std_errors,
        analytic_terms,
    })
}

fn config(n: usize, k: usize, beta: u32, snr: f64) -> NetworkConfig {
    NetworkConfig {
        n_antennas: n,
        n_users: k,
        reuse_factor: beta,
        snr_linear: snr,
        ..NetworkConfig::default()
    }
}

/// The standard SINR comparisons, each with `realizations` draws.
pub fn standard_fixtures(realizations: usize) -> Result<Vec<SinrFixtureSpec>> {
    let avg = InterferenceMode::Average;
    let pp = CombinerScaling::PilotProjection;
    let mk = |name: &str,
              cfg: NetworkConfig,
              tiers,
              scheme,
              scaling,
              criterion|
     -> Result<SinrFixtureSpec> {
        Ok(SinrFixtureSpec {
            name: name.into(),
            fixture: Fixture::new(cfg, tiers, avg)?,
            tiers,
            scheme,
            scaling,
            realizations,
            criterion,
        })
    };
    Ok(vec![
        mk(
            "single-cell-mrc-n50",
            config(50, 1, 1, 10.0),
            0,
            Scheme::Mrc,
            pp,
            Criterion::StdErrors(3.0),
        )?,
        mk(
            "seven-cell-mrc-n64",
            config(64, 2, 1, 10.0),
            1,
            Scheme::Mrc,
            pp,
            Criterion::Relative(0.05),
        )?,
        mk(
            "seven-cell-mrc-n512",
            config(512, 2, 1, 10.0),
            1,
            Scheme::Mrc,
            pp,
            Criterion::Relative(0.05),
        )?,
        mk(
            "seven-cell-mrc-n64-lmmse-scaled",
            config(64, 2, 1, 10.0),
            1,
            Scheme::Mrc,
            CombinerScaling::Lmmse,
            Criterion::ReportOnly,
        )?,
        mk(
            "single-cell-pzfc-n50",
            config(50, 1, 1, 10.0),
            0,
            Scheme::Pzfc,
            pp,
            Criterion::ReportOnly,
        )?,
        mk(
            "seven-cell-pzfc-n64",
            config(64, 2, 1, 10.0),
            1,
            Scheme::Pzfc,
            pp,
            Criterion::ReportOnly,
        )?,
        mk(
            "seven-cell-pzfc-n512",
            config(512, 2, 1, 10.0),
            1,
            Scheme::Pzfc,
            pp,
            Criterion::ReportOnly,
        )?,
    ])
}

/// Randomized LMMSE fixtures: N <= 32, one tier (7 cells), random K, beta,
/// SNR and UE positions; the target UE is random too.
pub fn lmmse_fixtures(count: usize, realizations: usize, seed: u64) -> Result<Vec<MseReport>> {
    let mut rng = rng::stream(seed, rng::ORACLE_BASE - 1);
    let mut out = Vec::with_capacity(count);
    for f in 0..count {
        let beta = [1u32, 3][rng.gen_range(0..2)];
        let k = rng.gen_range(1..=3usize);
        let n = rng.gen_range(4..=32usize);
        let snr = 10f64.powf(rng.gen_range(-0.5..2.0));
        let mut cfg = config(n, k, beta, snr);
        cfg.min_ue_distance_frac = 0.14;
        let fixture = Fixture::new(cfg, 1, InterferenceMode::Average)?;
        let positions = fixture.sample_positions(&mut rng);
        let ue = rng.gen_range(0..fixture.n_ues());
        let mut check_rng = rng::oracle_batch(seed, 1000 + f as u64, 0);
        let check = lmmse_mse_check(&fixture, &positions, ue, realizations, &mut check_rng)?;
        let passed = check.z_score().abs() <= 3.0;
        out.push(MseReport {
            name: format!("lmmse-{f}"),
            n_antennas: n,
            n_cells: fixture.cells.len(),
            n_users: k,
            reuse_factor: beta,
            check,
            passed,
        });
    }
    Ok(out)
}

/// Runs the standard SINR fixtures and ten LMMSE fixtures.
pub fn run_validation(
    seed: u64,
    realizations: usize,
    moment_samples: usize,
) -> Result<ValidationReport> {
    let specs = standard_fixtures(realizations)?;
    let fixtures = specs
        .iter()
        .enumerate()
        .map(|(i, s)| compare_fixture(s, moment_samples, seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let lmmse = lmmse_fixtures(10, 10_000, seed)?;
    let passed = fixtures.iter().all(|f| f.passed != Some(false)) && lmmse.iter().all(|m| m.passed);
    Ok(ValidationReport {
        seed,
        fixtures,
        lmmse,
        passed,
    })
}

/// Counts per UE class, handy for reports.
pub fn ue_census(fixture: &Fixture) -> Result<BTreeMap<&'static str, usize>> {
    let plan = fixture.plan()?;
    let own = plan.group_of(CellIndex::ORIGIN);
    let mut out = BTreeMap::new();
    for &c in &fixture.cells {
        let key = if c == CellIndex::ORIGIN {
            "own"
        } else if plan.group_of(c) == own {
            "copilot_cell"
        } else {
            "other_cell"
        };
        *out.entry(key).or_insert(0) += fixture.config.n_users;
    }
    Ok(out)
}
