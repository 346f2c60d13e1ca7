//! Command-line driver: config -> moment tables -> sweep -> CSV/JSON files.
//!
//! Exit codes: 0 success, 1 oracle validation failed, 2 bad configuration or
//! arguments, 3 any other error. On a nonzero exit other than 1 nothing
//! from the current run is left in the output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;
use crate::moments::{self, MomentTable, TierPolicy, DEFAULT_SAMPLES};
use crate::netmodel::{InterferenceMode, NetworkConfig, Scheme, SUPPORTED_REUSE};
use crate::optimizer::{self, log_spaced_grid, SweepSpec};
use crate::oracle;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_REALIZATIONS: usize = 100_000;

#[derive(Debug, Parser)]
#[command(
    name = "mimo-sched",
    version,
    about = "Optimize the number of scheduled users per massive MIMO cell"
)]
pub struct Args {
    /// JSON config: network parameters plus optional "sweep", "moments" and "oracle" sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "avg,worst")]
    pub modes: Vec<InterferenceMode>,
    #[arg(long, value_delimiter = ',', default_value = "mrc,pzfc")]
    pub schemes: Vec<Scheme>,
    /// Run the Monte Carlo oracle fixtures and write validation.json.
    #[arg(long)]
    pub validate: bool,
    /// Write asymptotic.csv with the large-N optimum per reuse factor.
    #[arg(long)]
    pub asymptotic: bool,
    /// Rerun from a manifest.json; every other option except --out is ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Reuse moments_<mode>.json files from this directory when they match.
    #[arg(long)]
    pub moments_from: Option<PathBuf>,
    /// Oracle realizations per fixture (overrides the config).
    #[arg(long)]
    pub realizations: Option<usize>,
    /// UE samples per moment (overrides the config).
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSettings {
    pub samples: usize,
    pub rel_tol: f64,
    pub max_tiers: usize,
}

impl Default for MomentSettings {
    fn default() -> Self {
        let p = TierPolicy::default();
        MomentSettings {
            samples: DEFAULT_SAMPLES,
            rel_tol: p.rel_tol,
            max_tiers: p.max_tiers,
        }
    }
}

impl MomentSettings {
    pub fn policy(&self) -> TierPolicy {
        TierPolicy {
            rel_tol: self.rel_tol,
            max_tiers: self.max_tiers,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_path: Option<PathBuf>,
    pub config: NetworkConfig,
    pub sweep: SweepSpec,
    pub moments: MomentSettings,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub validate: bool,
    pub oracle_realizations: usize,
    pub asymptotic: bool,
    /// Moment table file per mode, relative to `out_dir`.
    pub moment_tables: BTreeMap<InterferenceMode, PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    n_grid: Option<Vec<usize>>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    n_points: Option<usize>,
    k_max: Option<usize>,
    betas: Option<Vec<u32>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentSection {
    samples: Option<usize>,
    rel_tol: Option<f64>,
    max_tiers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    realizations: Option<usize>,
}

/// Parsed config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub network: NetworkConfig,
    pub n_grid: Vec<usize>,
    pub k_max: usize,
    pub betas: Vec<u32>,
    pub moments: MomentSettings,
    pub oracle_realizations: usize,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let r = SweepSpec::reference();
        ConfigFile {
            network: NetworkConfig::default(),
            n_grid: r.n_grid,
            k_max: r.k_max,
            betas: r.betas,
            moments: MomentSettings::default(),
            oracle_realizations: DEFAULT_REALIZATIONS,
        }
    }
}

fn section<T: for<'de> Deserialize<'de> + Default>(
    obj: &mut serde_json::Map<String, Value>,
    key: &str,
) -> Result<T, String> {
    match obj.remove(key) {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v).map_err(|e| format!("bad \"{key}\" section: {e}")),
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile, String> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
    let Value::Object(mut obj) = value else {
        return Err("config must be a JSON object".into());
    };
    let sweep: SweepSection = section(&mut obj, "sweep")?;
    let mom: MomentSection = section(&mut obj, "moments")?;
    let orc: OracleSection = section(&mut obj, "oracle")?;
    let network: NetworkConfig = serde_json::from_value(Value::Object(obj))
        .map_err(|e| format!("bad network parameters: {e}"))?;
    let network = network.validate(None).map_err(|e| e.to_string())?;

    let d = ConfigFile::default();
    let n_grid = match (sweep.n_grid, sweep.n_min, sweep.n_max, sweep.n_points) {
        (Some(_), Some(_), _, _) | (Some(_), _, Some(_), _) | (Some(_), _, _, Some(_)) => {
            return Err("give either sweep.n_grid or sweep.n_min/n_max/n_points".into())
        }
        (Some(g), None, None, None) => g,
        (None, lo, hi, pts) => {
            let lo = lo.unwrap_or(10);
            let hi = hi.unwrap_or(10_000);
            if lo == 0 || hi < lo {
                return Err(format!("bad antenna range [{lo}, {hi}]"));
            }
            log_spaced_grid(lo, hi, pts.unwrap_or(30))
        }
    };
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err("antenna grid must be nonempty and positive".into());
    }
    let betas = sweep.betas.unwrap_or(d.betas);
    if betas.is_empty() {
        return Err("sweep.betas must be nonempty".into());
    }
    if let Some(b) = betas.iter().find(|b| !SUPPORTED_REUSE.contains(b)) {
        return Err(Error::UnsupportedReuse(*b).to_string());
    }
    let k_max = sweep.k_max.unwrap_or(d.k_max);
    if k_max == 0 {
        return Err("sweep.k_max must be positive".into());
    }
    let moments = MomentSettings {
        samples: mom.samples.unwrap_or(d.moments.samples),
        rel_tol: mom.rel_tol.unwrap_or(d.moments.rel_tol),
        max_tiers: mom.max_tiers.unwrap_or(d.moments.max_tiers),
    };
    check_moments(&moments)?;
    let oracle_realizations = orc.realizations.unwrap_or(d.oracle_realizations);
    Ok(ConfigFile {
        network,
        n_grid,
        k_max,
        betas,
        moments,
        oracle_realizations,
    })
}

fn check_moments(m: &MomentSettings) -> Result<(), String> {
    if m.samples == 0 {
        return Err("moments.samples must be positive".into());
    }
    if !(m.rel_tol.is_finite() && m.rel_tol > 0.0) {
        return Err(format!(
            "moments.rel_tol must be positive, got {}",
            m.rel_tol
        ));
    }
    if m.max_tiers == 0 {
        return Err("moments.max_tiers must be positive".into());
    }
    Ok(())
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for &x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Builds the manifest for a fresh run from command-line arguments.
pub fn manifest_from_args(args: &Args) -> Result<RunManifest, String> {
    let cfg = match &args.config {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            parse_config(&text)?
        }
        None => ConfigFile::default(),
    };
    let modes = dedup(&args.modes);
    let schemes = dedup(&args.schemes);
    if modes.is_empty() || schemes.is_empty() {
        return Err("--modes and --schemes must be nonempty".into());
    }
    let mut moments = cfg.moments;
    if let Some(s) = args.samples {
        moments.samples = s;
    }
    check_moments(&moments)?;
    let oracle_realizations = args.realizations.unwrap_or(cfg.oracle_realizations);
    if args.validate && oracle_realizations < 2 {
        return Err("--realizations must be at least 2".into());
    }
    let moment_tables = modes
        .iter()
        .map(|&m| (m, PathBuf::from(format!("moments_{m}.json"))))
        .collect();
    Ok(RunManifest {
        format_version: MANIFEST_VERSION,
        config_path: args.config.clone(),
        config: cfg.network,
        sweep: SweepSpec {
            n_grid: cfg.n_grid,
            k_max: cfg.k_max,
            betas: cfg.betas,
            schemes,
            modes,
        },
        moments,
        seed: args.seed,
        out_dir: args.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        validate: args.validate,
        oracle_realizations,
        asymptotic: args.asymptotic,
        moment_tables,
    })
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| format!("bad manifest {}: {e}", path.display()))?;
    if m.format_version != MANIFEST_VERSION {
        return Err(format!("unsupported manifest version {}", m.format_version));
    }
    m.config.clone().validate(None).map_err(|e| e.to_string())?;
    check_moments(&m.moments)?;
    Ok(m)
}

/// In-memory results of a run, in write order.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub validation_passed: Option<bool>,
}

fn matches_settings(t: &MomentTable, m: &RunManifest, mode: InterferenceMode) -> bool {
    t.mode == mode
        && t.kappa == m.config.pathloss_exponent
        && t.min_ue_distance_frac == m.config.min_ue_distance_frac
        && t.seed == m.seed
        && (mode == InterferenceMode::WorstCase || t.n_samples == m.moments.samples)
}

fn obtain_table(
    m: &RunManifest,
    mode: InterferenceMode,
    cache: Option<&Path>,
) -> Result<MomentTable, String> {
    if let Some(dir) = cache {
        let path = dir.join(format!("moments_{mode}.json"));
        if path.exists() {
            let text = fs::read_to_string(&path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let table = MomentTable::from_json(&text).map_err(|e| e.to_string())?;
            if !matches_settings(&table, m, mode) {
                return Err(format!(
                    "{} does not match the run settings",
                    path.display()
                ));
            }
            return Ok(table);
        }
    }
    moments::build_table_for(
        &m.config,
        mode,
        m.moments.policy(),
        m.moments.samples,
        m.seed,
    )
    .map_err(|e| e.to_string())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| e.to_string())?;
    Ok(buf)
}

/// Computes every output of a run without touching the disk.
pub fn execute(m: &RunManifest, cache: Option<&Path>) -> Result<RunOutput, String> {
    let mut tables = BTreeMap::new();
    for &mode in &m.sweep.modes {
        tables.insert(mode, obtain_table(m, mode, cache)?);
    }
    let result = optimizer::sweep(&m.config, &m.sweep, &tables).map_err(|e| e.to_string())?;

    let mut out = RunOutput::default();
    out.files.push((
        "sweep.csv".into(),
        csv_bytes(|w| optimizer::write_sweep_csv(&result.rows, w))?,
    ));
    out.files.push((
        "optima.csv".into(),
        csv_bytes(|w| optimizer::write_optima_csv(&result.optima, w))?,
    ));
    for (mode, table) in &tables {
        let name = m
            .moment_tables
            .get(mode)
            .cloned()
            .unwrap_or_else(|| PathBuf::from(format!("moments_{mode}.json")));
        out.files.push((name, table.to_json().into_bytes()));
    }
    if m.asymptotic {
        let mut rows = Vec::new();
        for table in tables.values() {
            rows.extend(
                optimizer::asymptotic_rows(m.config.coherence_block, &m.sweep.betas, table)
                    .map_err(|e| e.to_string())?,
            );
        }
        out.files.push((
            "asymptotic.csv".into(),
            csv_bytes(|w| optimizer::write_asymptotic_csv(&rows, w))?,
        ));
    }
    if m.validate {
        let report = oracle::run_validation(m.seed, m.oracle_realizations, m.moments.samples)
            .map_err(|e| e.to_string())?;
        out.validation_passed = Some(report.passed);
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        out.files
            .push(("validation.json".into(), json.into_bytes()));
    }
    let manifest = serde_json::to_string_pretty(m).map_err(|e| e.to_string())?;
    out.files
        .push(("manifest.json".into(), manifest.into_bytes()));
    Ok(out)
}

/// Writes all files or none: anything written before a failure is removed.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), String> {
    let created_dir = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut written = Vec::new();
    for (name, bytes) in &out.files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if created_dir {
                let _ = fs::remove_dir(dir);
            }
            return Err(format!("cannot write {}: {e}", path.display()));
        }
        written.push(path);
    }
    Ok(())
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let manifest = match &args.manifest {
        Some(p) => load_manifest(p).map(|mut m| {
            if let Some(out) = &args.out {
                m.out_dir = out.clone();
            }
            m
        }),
        None => manifest_from_args(&args),
    };
    let manifest = match manifest {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let output = match execute(&manifest, args.moments_from.as_deref()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    if let Err(e) = write_outputs(&manifest.out_dir, &output) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    match output.validation_passed {
        Some(false) => {
            eprintln!(
                "validation failed, see {}",
                manifest.out_dir.join("validation.json").display()
            );
            EXIT_VALIDATION
        }
        _ => EXIT_OK,
    }
}
