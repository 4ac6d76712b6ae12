//! Command-line driver. Every artifact carries the resolved configuration,
//! the seed and the library version; CSV files carry them as `#` comment
//! lines ahead of the header row.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{c, fidelity, mcweeny_purify, r, DensityMatrix, Mat, Pauli, MCWEENY_MAX_ITER, MCWEENY_TOL};
use crate::mps::aklt_tensors;
use crate::noise::{
    comparison_model, fit_decay_length, flip_confusion, noisy_teleport, readout_mitigate, run_noisy, site_distribution,
    string_order_from_distribution, string_order_profile, NoiseModel,
};
use crate::observables::{
    boundary_filter, fit_correlation_length, memory_spectrum, memory_spectrum_shots, preparation_branches,
    sample_preparation, spectrum_rows, string_order_exact, string_order_shots, write_csv, PrepSpec, ShotRecord,
    StringOrderRow,
};
use crate::protocol::{
    correct_defects, enforce_boundary, fidelity_to_reference, prepare_fusion, prepare_sequential,
    projector_success_state, Boundary, BoundaryTarget, CorrectionMode, MemoryInit, MemoryMode, Method, OutcomePolicy,
    PreparationResult,
};
use crate::selftest::{run_criterion, CRITERIA};
use crate::sim::{stream_rng, BellState};
use crate::teleport::{teleport_prepared, SitePolicy};
use crate::variants::{prepare_fusion_variant, variant_fidelity, VariantKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// A computation failed or the self-test found a failing criterion.
    pub const FAILURE: i32 = 1;
    /// Bad flags or configuration.
    pub const INVALID_CONFIG: i32 = 2;
    /// A forced measurement outcome has zero probability.
    pub const ZERO_PROBABILITY: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "aklt", version, about = "Constant-depth AKLT preparation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prepare a chain and report depth, outcomes and fidelity.
    Prepare(Flags),
    /// String order versus window length (CSV).
    StringOrder(Flags),
    /// Conditioned edge-memory spectra and correlation-length fit.
    Spectrum(Flags),
    /// Teleport a qubit through the chain (JSON).
    Teleport(Flags),
    /// GHZ or cluster-state fusion preparation.
    Variants(Flags),
    /// Decay length, mitigated string order and teleport fidelity versus p2.
    NoiseSweep(Flags),
    /// Run the acceptance criteria.
    Selftest(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::StringOrder(_) => "string-order",
            Command::Spectrum(_) => "spectrum",
            Command::Teleport(_) => "teleport",
            Command::Variants(_) => "variants",
            Command::NoiseSweep(_) => "noise-sweep",
            Command::Selftest(_) => "selftest",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Prepare(f)
            | Command::StringOrder(f)
            | Command::Spectrum(f)
            | Command::Teleport(f)
            | Command::Variants(f)
            | Command::NoiseSweep(f)
            | Command::Selftest(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Number of spin-1 sites.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// sequential, fusion or projector.
    #[arg(long)]
    pub prep: Option<String>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON noise model {p1, p2, p_ro, idle_dephase}.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Exact expectations instead of sampled shots.
    #[arg(long)]
    pub exact: bool,
    /// Comma-separated Bell outcomes, e.g. "Phi+,Psi-".
    #[arg(long = "forced-outcomes")]
    pub forced_outcomes: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest chain length for spectra and decay fits.
    #[arg(long)]
    pub lmax: Option<usize>,
    /// ghz or cluster.
    #[arg(long)]
    pub kind: Option<String>,
    /// Teleport target polar angle.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Teleport target azimuth.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Comma-separated two-qubit error rates for the sweep.
    #[arg(long = "p2-values")]
    pub p2_values: Option<String>,
    /// Keep only shots whose site magnetisation matches the edge outcomes.
    #[arg(long = "boundary-filter")]
    pub boundary_filter: bool,
    /// Comma-separated criterion ids for `selftest`.
    #[arg(long)]
    pub only: Option<String>,
    /// JSON configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    #[serde(rename = "N")]
    pub n: usize,
    pub prep: Method,
    pub shots: usize,
    pub seed: u64,
    pub noise: Option<NoiseModel>,
    pub exact: bool,
    pub forced_outcomes: Option<Vec<String>>,
    /// Not embedded in artifacts, so reruns into another directory match.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub lmax: usize,
    pub kind: VariantKind,
    pub theta: f64,
    pub phi: f64,
    pub p2_values: Vec<f64>,
    pub boundary_filter: bool,
    pub only: Option<Vec<usize>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            n: 6,
            prep: Method::Fusion,
            shots: 10_000,
            seed: 7,
            noise: None,
            exact: false,
            forced_outcomes: None,
            out: PathBuf::from("out"),
            lmax: 8,
            kind: VariantKind::Ghz,
            theta: std::f64::consts::FRAC_PI_2,
            phi: std::f64::consts::FRAC_PI_4,
            p2_values: vec![0.0, 0.005, 0.01, 0.02],
            boundary_filter: false,
            only: None,
        }
    }
}

fn parse_method(s: &str) -> Result<Method> {
    match s {
        "sequential" => Ok(Method::Sequential),
        "fusion" => Ok(Method::Fusion),
        "projector" => Ok(Method::Projector),
        other => Err(Error::InvalidArgument(format!("unknown preparation '{other}' (sequential, fusion, projector)"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad {what} '{t}'"))))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Config file first, then flags on top.
pub fn resolve(command: &str, flags: &Flags) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &flags.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != command {
            return Err(Error::InvalidArgument(format!("config is for '{c}', not '{command}'")));
        }
    }
    cfg.command = Some(command.to_string());
    if let Some(n) = flags.n {
        cfg.n = n;
    }
    if let Some(p) = &flags.prep {
        cfg.prep = parse_method(p)?;
    }
    if let Some(s) = flags.shots {
        cfg.shots = s;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(p) = &flags.noise {
        cfg.noise = Some(read_json(p)?);
    }
    cfg.exact |= flags.exact;
    if let Some(list) = &flags.forced_outcomes {
        cfg.forced_outcomes = Some(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    if let Some(l) = flags.lmax {
        cfg.lmax = l;
    }
    if let Some(k) = &flags.kind {
        cfg.kind = VariantKind::parse(k)?;
    }
    if let Some(t) = flags.theta {
        cfg.theta = t;
    }
    if let Some(p) = flags.phi {
        cfg.phi = p;
    }
    if let Some(v) = &flags.p2_values {
        cfg.p2_values = parse_list(v, "p2 value")?;
    }
    cfg.boundary_filter |= flags.boundary_filter;
    if let Some(v) = &flags.only {
        cfg.only = Some(parse_list(v, "criterion id")?);
    }
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if self.shots == 0 {
            return Err(Error::InvalidArgument("shots must be positive".into()));
        }
        if self.lmax == 0 {
            return Err(Error::InvalidArgument("lmax must be positive".into()));
        }
        if let Some(m) = &self.noise {
            m.validate()?;
        }
        for &p in &self.p2_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("p2 = {p} is not a probability")));
            }
        }
        self.bell_outcomes()?;
        Ok(())
    }

    pub fn bell_outcomes(&self) -> Result<Option<Vec<BellState>>> {
        self.forced_outcomes.as_ref().map(|v| v.iter().map(|s| BellState::parse(s)).collect()).transpose()
    }

    fn policy(&self) -> Result<OutcomePolicy> {
        Ok(match self.bell_outcomes()? {
            Some(list) => OutcomePolicy::Forced(list),
            None => OutcomePolicy::seeded(self.seed),
        })
    }

    fn psi(&self) -> [C64; 2] {
        let (h, p) = (self.theta / 2.0, self.phi);
        [r(h.cos()), c(p.cos(), p.sin()) * h.sin()]
    }
}

/// Metadata block shared by every artifact.
fn provenance(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    Ok(json!({ "version": VERSION, "seed": cfg.seed, "config": serde_json::to_value(cfg)? }))
}

fn write_json(cfg: &ExperimentConfig, name: &str, body: serde_json::Value) -> Result<PathBuf> {
    let mut doc = provenance(cfg)?;
    if let (Some(d), serde_json::Value::Object(b)) = (doc.as_object_mut(), body) {
        d.extend(b);
    }
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(name);
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(path)
}

fn write_csv_file<T: Serialize>(cfg: &ExperimentConfig, name: &str, rows: &[T]) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(name);
    let mut buf = format!("# aklt {VERSION}\n# seed {}\n# config {}\n", cfg.seed, serde_json::to_string(cfg)?).into_bytes();
    write_csv(&mut buf, rows)?;
    fs::write(&path, buf)?;
    Ok(path)
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

// ---------------------------------------------------------------------------
// Subcommands

fn prepared(cfg: &ExperimentConfig) -> Result<PreparationResult> {
    match cfg.prep {
        Method::Sequential => prepare_sequential(cfg.n, MemoryMode::Single, &MemoryInit::default()),
        Method::Fusion => correct_defects(prepare_fusion(cfg.n, &cfg.policy()?)?, CorrectionMode::Unitary),
        Method::Projector => projector_success_state(cfg.n),
        Method::SwapFusion => Err(Error::InvalidArgument("swap-fusion is library-only".into())),
    }
}

fn cmd_prepare(cfg: &ExperimentConfig) -> Result<()> {
    let res = prepared(cfg)?;
    let outcomes: Vec<serde_json::Value> =
        res.defects.outcomes.iter().map(|(bond, b)| json!({ "bond": bond, "outcome": b.label() })).collect();
    let defects: Vec<serde_json::Value> =
        res.defects.defects.iter().map(|(bond, p)| json!({ "bond": bond, "pauli": p.label() })).collect();
    let depth = res.depth();
    let branch = res.probability;
    let pinned = enforce_boundary(res, BoundaryTarget::Sample(cfg.seed))?;
    let boundary = match pinned.boundary {
        Some(Boundary::Z { left, right }) => json!({ "left": left, "right": right }),
        _ => serde_json::Value::Null,
    };
    let fid = fidelity_to_reference(&pinned)?;
    println!("{} N={} depth={depth} qubits={} fidelity={fid:.12}", cfg.prep.tag(), cfg.n, pinned.num_qubits());
    let path = write_json(
        cfg,
        "prepare.json",
        json!({
            "N": cfg.n,
            "prep": cfg.prep.tag(),
            "depth": depth,
            "qubits": pinned.num_qubits(),
            "fusion_outcomes": outcomes,
            "defects": defects,
            "branch_probability": branch,
            "boundary": boundary,
            "fidelity_to_reference": fid,
        }),
    )?;
    report(&path);
    let circ = write_json(cfg, "circuit.json", json!({ "circuit": pinned.circuit.to_json() }))?;
    report(&circ);
    Ok(())
}

fn shots_for(cfg: &ExperimentConfig, n: usize) -> Result<ShotRecord> {
    let spec = PrepSpec::new(cfg.prep, n);
    let shots = match &cfg.noise {
        Some(m) => run_noisy(&spec, m, cfg.shots, cfg.seed)?,
        None => sample_preparation(&spec, cfg.shots, cfg.seed)?,
    };
    if cfg.boundary_filter {
        let (kept, rejection) = boundary_filter(&shots, &aklt_tensors())?;
        eprintln!("boundary filter rejected {:.2}% of shots", 100.0 * rejection);
        return Ok(kept);
    }
    Ok(shots)
}

fn cmd_string_order(cfg: &ExperimentConfig) -> Result<()> {
    let ch = aklt_tensors();
    let n = cfg.n;
    if n < 2 {
        return Err(Error::InvalidArgument("string order needs N >= 2".into()));
    }
    let mut rows = Vec::new();
    if cfg.exact {
        let branches = preparation_branches(&PrepSpec::new(cfg.prep, n))?;
        for ell in 2..=n {
            let mut value = 0.0;
            for b in &branches {
                value += b.probability * string_order_exact(&b.result, 0, ell)?;
            }
            let total: f64 = branches.iter().map(|b| b.probability).sum();
            rows.push(row(cfg, ell, value / total, 0.0, 0));
        }
    } else {
        let shots = shots_for(cfg, n)?;
        for ell in 2..=n {
            let est = string_order_shots(&shots, &ch, 0, ell)?;
            rows.push(row(cfg, ell, est.value, est.stderr, est.shots));
        }
    }
    let path = write_csv_file(cfg, "string_order.csv", &rows)?;
    report(&path);
    Ok(())
}

fn row(cfg: &ExperimentConfig, ell: usize, value: f64, stderr: f64, shots: usize) -> StringOrderRow {
    StringOrderRow { method: cfg.prep.tag().into(), n: cfg.n, i: 0, ell, value, stderr, shots, seed: cfg.seed }
}

fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<()> {
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for ell in 1..=cfg.lmax {
        let s = if cfg.exact {
            memory_spectrum(cfg.prep, ell)?
        } else {
            memory_spectrum_shots(cfg.prep, ell, cfg.shots as u64, cfg.seed.wrapping_add(ell as u64))?
        };
        points.extend(s.averaged.iter().map(|&v| (ell as f64, v)));
        rows.extend(spectrum_rows(cfg.prep.tag(), &s));
    }
    let path = write_csv_file(cfg, "spectrum.csv", &rows)?;
    report(&path);
    let fit = fit_correlation_length(&points)?;
    let xi_ref = 1.0 / 3f64.ln();
    println!("xi = {:.5} (1/ln 3 = {xi_ref:.5}, relative error {:.2e})", fit.xi, (fit.xi - xi_ref).abs() / xi_ref);
    let path = write_json(
        cfg,
        "spectrum_fit.json",
        json!({ "prep": cfg.prep.tag(), "lmax": cfg.lmax, "xi": fit.xi, "amplitude": fit.amplitude, "residual": fit.residual, "xi_reference": xi_ref }),
    )?;
    report(&path);
    Ok(())
}

fn cmd_teleport(cfg: &ExperimentConfig) -> Result<()> {
    if !matches!(cfg.prep, Method::Sequential | Method::Fusion) {
        return Err(Error::InvalidArgument("teleportation needs --prep sequential or fusion".into()));
    }
    let psi = cfg.psi();
    let body = match &cfg.noise {
        Some(model) if !model.is_noiseless() => {
            let t = noisy_teleport(cfg.n, psi, cfg.prep, model, cfg.shots, cfg.seed)?;
            json!({
                "raw_fidelity": t.raw_fidelity.value,
                "raw_fidelity_stderr": t.raw_fidelity.stderr,
                "purified_fidelity": t.purified_fidelity,
                "lambda_histogram": serde_json::Value::Null,
                "acceptance_rate": t.acceptance,
                "attempted": t.attempted,
            })
        }
        _ => {
            let forced = cfg.bell_outcomes()?;
            let mut hist: BTreeMap<&str, usize> = Pauli::ALL.iter().map(|p| (p.label(), 0)).collect();
            let (mut raw, mut acc) = (0.0, 0.0);
            let mut avg = Mat::zeros(2, 2);
            for k in 0..cfg.shots as u64 {
                let res = match cfg.prep {
                    Method::Fusion => {
                        let policy = match &forced {
                            Some(list) => OutcomePolicy::Forced(list.clone()),
                            None => OutcomePolicy::Sample { seed: cfg.seed, stream: 2 * k },
                        };
                        prepare_fusion(cfg.n, &policy)?
                    }
                    _ => prepare_sequential(cfg.n, MemoryMode::Single, &MemoryInit::default())?,
                };
                let mut rng = stream_rng(cfg.seed, 2 * k + 1);
                let rep = teleport_prepared(&res, psi, SitePolicy::Sample(&mut rng))?;
                *hist.get_mut(rep.byproduct.label()).expect("Pauli label") += 1;
                raw += rep.raw_fidelity;
                acc += rep.acceptance;
                avg += Mat::from_fn(2, 2, |i, j| rep.received[i][j]);
            }
            let shots = cfg.shots as f64;
            let rho = DensityMatrix::from_unnormalized(avg)?;
            let pure = mcweeny_purify(&rho, MCWEENY_TOL, MCWEENY_MAX_ITER)?;
            json!({
                "raw_fidelity": raw / shots,
                "purified_fidelity": fidelity(&pure.rho, &psi.to_vec())?,
                "lambda_histogram": hist,
                "acceptance_rate": acc / shots,
            })
        }
    };
    let mut doc = json!({ "N": cfg.n, "psi": { "theta": cfg.theta, "phi": cfg.phi }, "prep": cfg.prep.tag() });
    if let (Some(d), serde_json::Value::Object(b)) = (doc.as_object_mut(), body) {
        d.extend(b);
    }
    println!("raw fidelity {}, purified {}", doc["raw_fidelity"], doc["purified_fidelity"]);
    let path = write_json(cfg, "teleport.json", doc)?;
    report(&path);
    Ok(())
}

fn cmd_variants(cfg: &ExperimentConfig) -> Result<()> {
    let res = prepare_fusion_variant(cfg.kind, cfg.n, &cfg.policy()?)?;
    let fid = variant_fidelity(&res, cfg.kind)?;
    let outcomes: Vec<&str> = res.defects.outcomes.iter().map(|(_, b)| b.label()).collect();
    println!("{} N={} depth={} qubits={} fidelity={fid:.12}", cfg.kind.tag(), cfg.n, res.depth(), res.num_qubits());
    let path = write_json(
        cfg,
        "variants.json",
        json!({
            "kind": cfg.kind.tag(),
            "N": cfg.n,
            "depth": res.depth(),
            "qubits": res.num_qubits(),
            "fusion_outcomes": outcomes,
            "branch_probability": res.probability,
            "fidelity": fid,
        }),
    )?;
    report(&path);
    let circ = write_json(cfg, "circuit.json", json!({ "circuit": res.circuit.to_json() }))?;
    report(&circ);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    method: String,
    #[serde(rename = "N")]
    n: usize,
    p1: f64,
    p2: f64,
    p_ro: f64,
    idle_dephase: f64,
    decay_length: f64,
    string_order: f64,
    string_order_stderr: f64,
    string_order_mitigated: f64,
    teleport_raw_fidelity: f64,
    teleport_purified_fidelity: f64,
    shots: usize,
    seed: u64,
}

fn cmd_noise_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let ch = aklt_tensors();
    let base = cfg.noise.unwrap_or_else(comparison_model);
    let n = cfg.n;
    if n < 2 {
        return Err(Error::InvalidArgument("noise sweep needs N >= 2".into()));
    }
    let mut rows = Vec::new();
    for &p2 in &cfg.p2_values {
        let model = NoiseModel { p2, ..base };
        for method in [Method::Sequential, Method::Fusion] {
            let spec = PrepSpec::new(method, n);
            let shots = run_noisy(&spec, &model, cfg.shots, cfg.seed)?;
            let decay = fit_decay_length(&string_order_profile(&shots, &ch, cfg.lmax)?).unwrap_or(f64::NAN);
            let full = string_order_shots(&shots, &ch, 0, n)?;
            let mitigated = if n <= 8 {
                let dist = site_distribution(&shots)?;
                let fixed = readout_mitigate(&dist, &vec![flip_confusion(model.p_ro); 2 * n])?;
                string_order_from_distribution(&fixed, &ch, n, 0, n)?
            } else {
                f64::NAN
            };
            let tele = noisy_teleport(n, cfg.psi(), method, &model, cfg.shots, cfg.seed)?;
            println!(
                "p2={p2} {}: decay {decay:.2}, O(N) {:.4}, teleport {:.4}",
                method.tag(),
                full.value,
                tele.raw_fidelity.value
            );
            rows.push(SweepRow {
                method: method.tag().into(),
                n,
                p1: model.p1,
                p2,
                p_ro: model.p_ro,
                idle_dephase: model.idle_dephase,
                decay_length: decay,
                string_order: full.value,
                string_order_stderr: full.stderr,
                string_order_mitigated: mitigated,
                teleport_raw_fidelity: tele.raw_fidelity.value,
                teleport_purified_fidelity: tele.purified_fidelity,
                shots: cfg.shots,
                seed: cfg.seed,
            });
        }
    }
    let path = write_csv_file(cfg, "noise_sweep.csv", &rows)?;
    report(&path);
    Ok(())
}

/// Returns whether every selected criterion passed.
fn cmd_selftest(cfg: &ExperimentConfig, write: bool) -> Result<bool> {
    let ids = cfg.only.clone().unwrap_or_else(|| (1..=CRITERIA.len()).collect());
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_criterion(id)?;
        println!("{o}");
        outcomes.push(o);
    }
    let passed = outcomes.iter().all(|o| o.passed);
    println!("{} of {} criteria passed", outcomes.iter().filter(|o| o.passed).count(), outcomes.len());
    if write {
        let path = write_json(cfg, "selftest.json", json!({ "criteria": outcomes, "passed": passed }))?;
        report(&path);
    }
    Ok(passed)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ZeroProbability { .. } => exit::ZERO_PROBABILITY,
        Error::InvalidArgument(_) => exit::INVALID_CONFIG,
        _ => exit::FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID_CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve(cli.command.name(), cli.command.flags()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::INVALID_CONFIG;
        }
    };
    let result = match &cli.command {
        Command::Prepare(_) => cmd_prepare(&cfg),
        Command::StringOrder(_) => cmd_string_order(&cfg),
        Command::Spectrum(_) => cmd_spectrum(&cfg),
        Command::Teleport(_) => cmd_teleport(&cfg),
        Command::Variants(_) => cmd_variants(&cfg),
        Command::NoiseSweep(_) => cmd_noise_sweep(&cfg),
        Command::Selftest(f) => match cmd_selftest(&cfg, f.out.is_some()) {
            Ok(true) => Ok(()),
            Ok(false) => return exit::FAILURE,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            match e {
                Error::ZeroProbability { .. } => eprintln!("error: zero-probability forced outcome: {e}"),
                _ => eprintln!("error: {e}"),
            }
            exit_code(&e)
        }
    }
}
