//! Command-line front end: flat `key = value` configuration, validation and
//! artifact emission for the `mixheat` binary.
//!
//! Every flag `--key value` has a configuration-file counterpart `key = value`;
//! flags override the file. Exit codes: 0 success, 1 invalid configuration,
//! 2 numerical failure, 3 a property check failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fujita::{self, DatumSpec, SweepCell, SweepConfig, TestFunctionFamily};
use crate::io;
use crate::kernels::{self, KernelKind, KernelOptions, ModelParams};
use crate::mild::{self, Outcome, Scheme, SolverConfig};
use crate::spectral::{Field, GridSpec};
use crate::stochastic::{self, SamplerConfig};

pub const OUT_ENV: &str = "MIXHEAT_OUT";
pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_PROPERTY: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Kernel,
    Verify,
    Oracle,
    Solve,
    Schedule,
    Sweep,
    Certificate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Kernel,
        Command::Verify,
        Command::Oracle,
        Command::Solve,
        Command::Schedule,
        Command::Sweep,
        Command::Certificate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Verify => "verify",
            Command::Oracle => "oracle",
            Command::Solve => "solve",
            Command::Schedule => "schedule",
            Command::Sweep => "sweep",
            Command::Certificate => "certificate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatumKind {
    Uniform,
    Bump,
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau0 {
    Auto,
    Value(f64),
}

/// Fully validated configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub dim: usize,
    pub s: f64,
    pub half_length: f64,
    pub points: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub format_version: u32,
    pub kind: KernelKind,
    pub t: f64,
    pub tau: Option<f64>,
    pub padding: usize,
    pub samples: usize,
    pub bin_width: Option<f64>,
    pub p: f64,
    pub dt: f64,
    pub horizon: f64,
    pub blowup_threshold: f64,
    pub scheme: Scheme,
    pub datum: DatumKind,
    pub amplitude: f64,
    pub delta0: f64,
    pub tau0: Tau0,
    pub epsilon: f64,
    pub snapshot_stride: usize,
    pub record_stride: usize,
    pub n_max: usize,
    pub p_list: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub delta0_multiple: f64,
    pub radii: Vec<f64>,
}

/// Where each key's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Source>,
}

pub const KEYS: [&str; 31] = [
    "N", "s", "R", "n", "out", "seed", "format_version", "kind", "t", "tau", "padding",
    "samples", "bin_width", "p", "dt", "T", "U_max", "scheme", "datum", "amplitude", "delta0",
    "tau0", "epsilon", "snapshot_stride", "record_stride", "n_max", "p_list", "amplitudes",
    "delta0_multiple", "radii", "command",
];

pub fn usage() -> String {
    let mut s = String::from(
        "usage: mixheat <command> [--config FILE] [--key value ...]\n\ncommands:",
    );
    for c in Command::ALL {
        let _ = write!(s, " {}", c.name());
    }
    s.push_str("\n\nkeys (flags and config file):");
    for k in KEYS.iter().filter(|k| **k != "command") {
        let _ = write!(s, " {k}");
    }
    let _ = write!(s, "\n\ndefault output directory: ${OUT_ENV} or ./mixheat_out\n");
    s
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> std::result::Result<Vec<(String, String)>, Vec<String>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => out.push((k.trim().to_string(), v.trim().to_string())),
            None => errors.push(format!("config line {}: expected key = value", lineno + 1)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

struct Raw {
    values: BTreeMap<String, (String, Source)>,
    errors: Vec<String>,
}

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.get(key) {
            None => default,
            Some(v) => match v.parse::<T>() {
                Ok(x) => x,
                Err(_) => {
                    self.errors.push(format!("{key}: cannot parse {v:?}"));
                    default
                }
            },
        }
    }

    fn opt_num(&mut self, key: &str) -> Option<f64> {
        let v = self.get(key)?.to_string();
        match v.parse::<f64>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(format!("{key}: cannot parse {v:?}"));
                None
            }
        }
    }

    fn list(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        let Some(v) = self.get(key).map(str::to_string) else {
            return default.to_vec();
        };
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse::<f64>() {
                Ok(x) => out.push(x),
                Err(_) => self.errors.push(format!("{key}: cannot parse list item {item:?}")),
            }
        }
        out
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("mixheat_out"))
}

/// Parses `argv` (without the program name). All problems are reported
/// together.
pub fn parse_config(argv: &[String]) -> std::result::Result<ParsedConfig, Vec<String>> {
    let mut errors = Vec::new();
    let mut command = None;
    let mut flags: Vec<(String, String)> = Vec::new();
    let mut file: Option<String> = None;
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if let Some(key) = arg.strip_prefix("--") {
            let (key, inline) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), Some(v.to_string())),
                None => (key.to_string(), None),
            };
            let value = match inline.or_else(|| it.next().cloned()) {
                Some(v) => v,
                None => {
                    errors.push(format!("--{key}: missing value"));
                    continue;
                }
            };
            if key == "config" {
                file = Some(value);
            } else {
                flags.push((key, value));
            }
        } else if command.is_none() {
            match Command::parse(arg) {
                Some(c) => command = Some(c),
                None => errors.push(format!("unknown command {arg:?}")),
            }
        } else {
            errors.push(format!("unexpected argument {arg:?}"));
        }
    }

    let mut values: BTreeMap<String, (String, Source)> = BTreeMap::new();
    if let Some(path) = &file {
        match std::fs::read_to_string(path) {
            Ok(text) => match parse_config_text(&text) {
                Ok(pairs) => {
                    for (k, v) in pairs {
                        values.insert(k, (v, Source::File));
                    }
                }
                Err(e) => errors.extend(e),
            },
            Err(e) => errors.push(format!("cannot read config file {path}: {e}")),
        }
    }
    for (k, v) in flags {
        values.insert(k, (v, Source::Flag));
    }
    for k in values.keys() {
        if !KEYS.contains(&k.as_str()) {
            errors.push(format!("unknown key {k:?}"));
        }
    }
    if command.is_none() {
        if let Some((c, _)) = values.get("command") {
            command = Command::parse(c);
            if command.is_none() {
                errors.push(format!("unknown command {c:?}"));
            }
        }
    }
    let Some(command) = command else {
        errors.push("missing command".into());
        return Err(errors);
    };

    let mut raw = Raw { values, errors };
    let dim: usize = raw.num("N", 1);
    raw.check((1..=3).contains(&dim), format!("N: must be 1, 2 or 3, got {dim}"));
    let default_grid = GridSpec::default_for(dim.clamp(1, 3)).expect("default grid");
    let s: f64 = raw.num("s", 0.5);
    raw.check(s > 0.0 && s < 1.0, format!("s: must lie in (0, 1), got {s}"));
    let half_length: f64 = raw.num("R", default_grid.half_length());
    let points: usize = raw.num("n", default_grid.points());
    if let Err(e) = GridSpec::new(dim.clamp(1, 3), half_length, points) {
        raw.errors.push(format!("grid: {e}"));
    }
    let out_dir = raw.get("out").map(PathBuf::from).unwrap_or_else(default_out_dir);
    let seed: u64 = raw.num("seed", 0);
    let format_version: u32 = raw.num("format_version", FORMAT_VERSION);
    raw.check(format_version == FORMAT_VERSION, format!("format_version: only {FORMAT_VERSION} is supported"));
    let kind = match raw.get("kind").unwrap_or("mixed") {
        "mixed" => KernelKind::Mixed,
        "fractional" => KernelKind::Fractional,
        "gauss" => KernelKind::Gauss,
        other => {
            raw.errors.push(format!("kind: expected mixed, fractional or gauss, got {other:?}"));
            KernelKind::Mixed
        }
    };
    let t: f64 = raw.num("t", 1.0);
    raw.check(t > 0.0 && t.is_finite(), format!("t: must be > 0, got {t}"));
    let tau = raw.opt_num("tau");
    if let Some(v) = tau {
        raw.check(v > 0.0 && v.is_finite(), format!("tau: must be > 0, got {v}"));
    }
    let padding: usize = raw.num("padding", if command == Command::Oracle { 16 } else { 1 });
    raw.check(padding >= 1, "padding: must be >= 1");
    let samples: usize = raw.num("samples", 1_000_000);
    raw.check(samples >= 10_000, format!("samples: must be >= 10000, got {samples}"));
    let bin_width = raw.opt_num("bin_width");
    if let Some(w) = bin_width {
        raw.check(w > 0.0, format!("bin_width: must be > 0, got {w}"));
    }
    let p: f64 = raw.num("p", 2.0);
    raw.check(p > 1.0 && p.is_finite(), format!("p: must be > 1, got {p}"));
    let dt: f64 = raw.num("dt", 1e-3);
    raw.check(dt > 0.0 && dt.is_finite(), format!("dt: must be > 0, got {dt}"));
    let horizon: f64 = raw.num("T", 1.0);
    raw.check(horizon > 0.0 && horizon.is_finite(), format!("T: must be > 0, got {horizon}"));
    let blowup_threshold: f64 = raw.num("U_max", 1e6);
    raw.check(blowup_threshold > 0.0, "U_max: must be > 0");
    let scheme = match raw.get("scheme").unwrap_or("etd2").parse::<Scheme>() {
        Ok(s) => s,
        Err(e) => {
            raw.errors.push(e.to_string());
            Scheme::Etd2
        }
    };
    let datum = match raw.get("datum").unwrap_or("bump") {
        "uniform" => DatumKind::Uniform,
        "bump" => DatumKind::Bump,
        "small" => DatumKind::Small,
        other => {
            raw.errors.push(format!("datum: expected uniform, bump or small, got {other:?}"));
            DatumKind::Bump
        }
    };
    let amplitude: f64 = raw.num("amplitude", 1.0);
    raw.check(amplitude >= 0.0 && amplitude.is_finite(), format!("amplitude: must be >= 0, got {amplitude}"));
    raw.check(amplitude < blowup_threshold, "amplitude: must be below U_max");
    let delta0: f64 = raw.num("delta0", 0.1);
    raw.check(delta0 >= 0.0 && delta0.is_finite(), format!("delta0: must be >= 0, got {delta0}"));
    let tau0 = match raw.get("tau0") {
        None | Some("auto") => Tau0::Auto,
        Some(_) => Tau0::Value(raw.num("tau0", 1.0)),
    };
    if let Tau0::Value(v) = tau0 {
        raw.check(v > 0.0, format!("tau0: must be > 0 or auto, got {v}"));
    }
    let epsilon: f64 = raw.num("epsilon", 1e-3);
    raw.check((0.0..1.0).contains(&epsilon), "epsilon: must lie in [0, 1)");
    let snapshot_stride: usize = raw.num("snapshot_stride", 0);
    let record_stride: usize = raw.num("record_stride", 1);
    raw.check(record_stride >= 1, "record_stride: must be >= 1");
    let n_max: usize = raw.num("n_max", 100);
    let p_list = raw.list("p_list", &[1.5, 2.0, 3.0]);
    raw.check(!p_list.is_empty() && p_list.iter().all(|&v| v > 1.0), "p_list: entries must be > 1");
    let amplitudes = raw.list("amplitudes", &[0.5, 1.0, 2.0]);
    raw.check(amplitudes.iter().all(|&v| v >= 0.0), "amplitudes: entries must be >= 0");
    let delta0_multiple: f64 = raw.num("delta0_multiple", 0.5);
    raw.check(delta0_multiple > 0.0, "delta0_multiple: must be > 0");
    let radii = raw.list("radii", &[2.0, 4.0, 8.0, 16.0]);
    raw.check(radii.len() >= 3 && radii.iter().all(|&r| r > 1.0), "radii: need >= 3 values, all > 1");
    if command == Command::Certificate {
        let rmax = radii.iter().fold(0.0f64, |m, &r| m.max(r));
        raw.check(rmax < half_length, format!("radii: largest radius {rmax} must be below R = {half_length}"));
    }
    if command == Command::Solve && datum == DatumKind::Small {
        let pbar = 1.0 + 2.0 * s / dim.max(1) as f64;
        raw.check(
            delta0 > 0.0 && (tau0 != Tau0::Auto || p > pbar),
            format!("small datum: need delta0 > 0 and, for tau0 = auto, p > {pbar}"),
        );
    }
    if raw.get("command").is_some() {
        raw.values.remove("command");
    }

    if !raw.errors.is_empty() {
        return Err(raw.errors);
    }
    let mut provenance: BTreeMap<String, Source> =
        KEYS.iter().map(|k| (k.to_string(), Source::Default)).collect();
    provenance.remove("command");
    for (k, (_, src)) in &raw.values {
        provenance.insert(k.clone(), *src);
    }
    Ok(ParsedConfig {
        config: RunConfig {
            command,
            dim,
            s,
            half_length,
            points,
            out_dir,
            seed,
            format_version,
            kind,
            t,
            tau,
            padding,
            samples,
            bin_width,
            p,
            dt,
            horizon,
            blowup_threshold,
            scheme,
            datum,
            amplitude,
            delta0,
            tau0,
            epsilon,
            snapshot_stride,
            record_stride,
            n_max,
            p_list,
            amplitudes,
            delta0_multiple,
            radii,
        },
        provenance,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.half_length, self.points)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.dim, self.s)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            p: self.p,
            dt: self.dt,
            horizon: self.horizon,
            blowup_threshold: self.blowup_threshold,
            scheme: self.scheme,
            snapshot_stride: self.snapshot_stride,
            record_stride: self.record_stride,
            source: true,
        }
    }

    /// Flat `key = value` rendering that parses back to an equal config.
    pub fn to_config_text(&self) -> String {
        let kind = self.kind.as_str();
        let scheme = match self.scheme {
            Scheme::Etd1 => "etd1",
            Scheme::Etd2 => "etd2",
        };
        let datum = match self.datum {
            DatumKind::Uniform => "uniform",
            DatumKind::Bump => "bump",
            DatumKind::Small => "small",
        };
        let tau0 = match self.tau0 {
            Tau0::Auto => "auto".to_string(),
            Tau0::Value(v) => v.to_string(),
        };
        let mut pairs: Vec<(&str, String)> = vec![
            ("command", self.command.name().into()),
            ("N", self.dim.to_string()),
            ("s", self.s.to_string()),
            ("R", self.half_length.to_string()),
            ("n", self.points.to_string()),
            ("out", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("format_version", self.format_version.to_string()),
            ("kind", kind.into()),
            ("t", self.t.to_string()),
            ("padding", self.padding.to_string()),
            ("samples", self.samples.to_string()),
            ("p", self.p.to_string()),
            ("dt", self.dt.to_string()),
            ("T", self.horizon.to_string()),
            ("U_max", self.blowup_threshold.to_string()),
            ("scheme", scheme.into()),
            ("datum", datum.into()),
            ("amplitude", self.amplitude.to_string()),
            ("delta0", self.delta0.to_string()),
            ("tau0", tau0),
            ("epsilon", self.epsilon.to_string()),
            ("snapshot_stride", self.snapshot_stride.to_string()),
            ("record_stride", self.record_stride.to_string()),
            ("n_max", self.n_max.to_string()),
            ("p_list", join(&self.p_list)),
            ("amplitudes", join(&self.amplitudes)),
            ("delta0_multiple", self.delta0_multiple.to_string()),
            ("radii", join(&self.radii)),
        ];
        if let Some(v) = self.tau {
            pairs.push(("tau", v.to_string()));
        }
        if let Some(v) = self.bin_width {
            pairs.push(("bin_width", v.to_string()));
        }
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Result of [`execute`]: exit code, written files and a short summary.
#[derive(Debug, Clone)]
pub struct ExecReport {
    pub code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

struct Run<'a> {
    config: &'a RunConfig,
    artifacts: Vec<PathBuf>,
    extra: serde_json::Map<String, serde_json::Value>,
}

impl Run<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.config.out_dir.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.extra
            .insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } | Error::GridMismatch(_) | Error::Insufficient(_) => EXIT_INVALID,
        _ => EXIT_NUMERICAL,
    }
}

/// Runs a validated configuration, writing its artifacts and a manifest.
pub fn execute(parsed: &ParsedConfig) -> ExecReport {
    let start = Instant::now();
    let config = &parsed.config;
    let mut run = Run {
        config,
        artifacts: Vec::new(),
        extra: serde_json::Map::new(),
    };
    let outcome = match config.command {
        Command::Kernel => cmd_kernel(&mut run),
        Command::Verify => cmd_verify(&mut run),
        Command::Oracle => cmd_oracle(&mut run),
        Command::Solve => cmd_solve(&mut run),
        Command::Schedule => cmd_schedule(&mut run),
        Command::Sweep => cmd_sweep(&mut run),
        Command::Certificate => cmd_certificate(&mut run),
    };
    let (code, summary) = match outcome {
        Ok((code, summary)) => (code, summary),
        Err(e) => (exit_for(&e), e.to_string()),
    };
    let mut artifacts = Vec::new();
    for path in &run.artifacts {
        if let Ok(sum) = io::sha256_file(path) {
            artifacts.push(serde_json::json!({"path": path.display().to_string(), "sha256": sum}));
        }
    }
    let manifest = serde_json::json!({
        "command": config.command,
        "config": config,
        "config_text": config.to_config_text(),
        "provenance": parsed.provenance,
        "format_version": config.format_version,
        "versions": {
            "mixheat": env!("CARGO_PKG_VERSION"),
        },
        "exit_code": code,
        "summary": summary,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "artifacts": artifacts,
        "results": run.extra,
    });
    let manifest_path = config.out_dir.join(format!("{}_manifest.json", config.command.name()));
    let mut written = run.artifacts.clone();
    match io::write_json(&manifest_path, &manifest) {
        Ok(()) => written.push(manifest_path),
        Err(e) => {
            return ExecReport {
                code: EXIT_NUMERICAL.max(code),
                artifacts: written,
                summary: format!("{summary}; manifest not written: {e}"),
            }
        }
    }
    ExecReport {
        code,
        artifacts: written,
        summary,
    }
}

type CmdResult = Result<(i32, String)>;

fn build_kernel(config: &RunConfig, kind: KernelKind, t: f64, padding: usize) -> Result<kernels::KernelField> {
    let grid = config.grid()?;
    let params = config.params()?;
    let options = KernelOptions::free_space(padding);
    match kind {
        KernelKind::Gauss => kernels::gauss_kernel_with(&grid, t, &options),
        KernelKind::Fractional => kernels::fractional_kernel_with(&params, &grid, t, &options),
        KernelKind::Mixed => kernels::mixed_kernel_with(&params, &grid, t, &options),
    }
}

fn cmd_kernel(run: &mut Run) -> CmdResult {
    let c = run.config;
    let k = build_kernel(c, c.kind, c.t, c.padding)?;
    let (csv, json) = (run.path("kernel.csv"), run.path("kernel.json"));
    k.write(&csv, &json)?;
    run.note("mass_defect", k.mass_defect());
    run.note("diagnostics", &k.diagnostics);
    Ok((EXIT_OK, format!("{} kernel at t = {}: mass defect {:.3e}", c.kind.as_str(), c.t, k.mass_defect())))
}

fn cmd_verify(run: &mut Run) -> CmdResult {
    let c = run.config;
    let k = build_kernel(c, c.kind, c.t, 1)?;
    let second = match c.tau {
        Some(tau) => Some(build_kernel(c, c.kind, tau, 1)?),
        None => None,
    };
    let report = kernels::verify_kernel_properties(&k, second.as_ref())?;
    let route_ok = !k
        .diagnostics
        .iter()
        .any(|d| matches!(d, kernels::KernelDiagnostic::RouteDisagreement { .. }));
    let ok = report.within(1e-6, 1e-10, 1e-6) && route_ok;
    let path = run.path("verify.json");
    io::write_json(&path, &serde_json::json!({"report": report, "route_agreement": route_ok, "pass": ok}))?;
    run.note("pass", ok);
    let code = if ok { EXIT_OK } else { EXIT_PROPERTY };
    Ok((code, format!("kernel properties {}", if ok { "hold" } else { "FAIL" })))
}

fn cmd_oracle(run: &mut Run) -> CmdResult {
    let c = run.config;
    let grid = c.grid()?;
    let params = c.params()?;
    let sampler = SamplerConfig {
        s: c.s,
        t: c.t,
        samples: c.samples,
        seed: c.seed,
        bin_width: c.bin_width.unwrap_or(grid.spacing()),
    };
    let (density, report) = match c.dim {
        1 => {
            let e = stochastic::sample_mixed_process(&sampler, c.half_length)?;
            let k = kernels::mixed_kernel_with(&params, &grid, c.t, &KernelOptions::free_space(c.padding))?;
            let r = stochastic::compare_density(&e, &k)?;
            (e, r)
        }
        2 => {
            let r_max = c.half_length / 2.0;
            let e = stochastic::sample_mixed_process_2d(&sampler, r_max)?;
            let series = grid.extended(c.padding)?;
            let r = stochastic::compare_radial_density(&e, &params, &series, c.t)?;
            (e, r)
        }
        _ => return Err(Error::GridMismatch("the Monte Carlo oracle supports N = 1, 2".into())),
    };
    let (csv, json, rep) = (run.path("histogram.csv"), run.path("histogram.json"), run.path("oracle.json"));
    density.write(&csv, &json)?;
    let ok = report.ks_distance <= 0.01;
    io::write_json(&rep, &serde_json::json!({"comparison": report, "ks_threshold": 0.01, "pass": ok}))?;
    run.note("ks_distance", report.ks_distance);
    let code = if ok { EXIT_OK } else { EXIT_PROPERTY };
    Ok((code, format!("KS distance {:.4e} over {} bins", report.ks_distance, report.bins)))
}

fn resolve_tau0(c: &RunConfig, params: &ModelParams, grid: &GridSpec, run: &mut Run) -> Result<f64> {
    match c.tau0 {
        Tau0::Value(v) => Ok(v),
        Tau0::Auto => {
            let (constant, _) = fujita::empirical_kernel_constant(params, grid)?;
            let bound = fujita::tau0_lower_bound(params, c.p, constant)?;
            run.note("kernel_constant", constant);
            run.note("tau0_lower_bound", bound);
            Ok(2.0 * bound)
        }
    }
}

fn initial_datum(c: &RunConfig, run: &mut Run) -> Result<Field> {
    let grid = c.grid()?;
    let params = c.params()?;
    match c.datum {
        DatumKind::Uniform => Ok(Field::constant(grid, c.amplitude)),
        DatumKind::Bump => Field::from_fn(grid, |x| c.amplitude * (-x.iter().map(|v| v * v).sum::<f64>()).exp()),
        DatumKind::Small => {
            let tau0 = resolve_tau0(c, &params, &grid, run)?;
            run.note("tau0", tau0);
            fujita::small_initial_datum(&grid, &params, c.delta0, tau0, c.epsilon)
        }
    }
}

fn cmd_solve(run: &mut Run) -> CmdResult {
    let c = run.config;
    let params = c.params()?;
    let u0 = initial_datum(c, run)?;
    let traj = mild::run(&u0, &c.solver(), &params)?;
    let (csv, json) = (run.path("trajectory.csv"), run.path("trajectory.json"));
    traj.write(&csv, &json)?;
    let stem = csv.with_extension("");
    for k in 0..traj.snapshots.len() {
        let name = format!("trajectory_snap_{k:04}.csv");
        run.artifacts.push(stem.with_file_name(name));
    }
    run.note("outcome", traj.outcome.label());
    run.note("t_star", traj.outcome.t_star());
    let code = match traj.outcome {
        Outcome::NumericalFailureAt { .. } => EXIT_NUMERICAL,
        _ => EXIT_OK,
    };
    Ok((code, format!("outcome {:?}, max sup-norm {:.6e}", traj.outcome, traj.max_sup_norm())))
}

fn cmd_schedule(run: &mut Run) -> CmdResult {
    let c = run.config;
    let sch = fujita::delta_schedule(c.delta0, c.p, c.n_max)?;
    let rows: Vec<Vec<String>> = sch
        .deltas
        .iter()
        .enumerate()
        .map(|(n, d)| vec![n.to_string(), io::fmt_f64(*d)])
        .collect();
    let (csv, json) = (run.path("schedule.csv"), run.path("schedule.json"));
    io::write_csv(&csv, &["n", "delta"], &rows)?;
    io::write_json(
        &json,
        &serde_json::json!({
            "delta0": sch.delta0, "p": sch.p, "threshold": sch.threshold,
            "converged": sch.converged, "limit": sch.limit,
        }),
    )?;
    Ok((EXIT_OK, format!("converged: {}, limit {:?}", sch.converged, sch.limit)))
}

fn cmd_sweep(run: &mut Run) -> CmdResult {
    let c = run.config;
    let mut cells = Vec::new();
    for &p in &c.p_list {
        match c.datum {
            DatumKind::Small => cells.push(SweepCell {
                dim: c.dim,
                s: c.s,
                p,
                datum: DatumSpec::SmallKernel {
                    delta0_multiple: c.delta0_multiple,
                    tau0: match c.tau0 {
                        Tau0::Auto => None,
                        Tau0::Value(v) => Some(v),
                    },
                },
            }),
            _ => {
                for &amplitude in &c.amplitudes {
                    cells.push(SweepCell {
                        dim: c.dim,
                        s: c.s,
                        p,
                        datum: DatumSpec::Uniform { amplitude },
                    });
                }
            }
        }
    }
    let sweep = SweepConfig {
        solver: c.solver(),
        grid: Some(c.grid()?),
        ..SweepConfig::default()
    };
    let records = fujita::dichotomy_sweep(&cells, &sweep)?;
    let path = run.path("sweep.csv");
    fujita::write_sweep(&path, &records)?;
    run.note(
        "scope",
        "finite-horizon sweep: blow-up beyond the horizon for tiny data is not excluded",
    );
    let failures = records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::NumericalFailureAt { .. }))
        .count();
    let code = if failures > 0 { EXIT_NUMERICAL } else { EXIT_OK };
    Ok((code, format!("{} cells, {} numerical failures", records.len(), failures)))
}

fn cmd_certificate(run: &mut Run) -> CmdResult {
    let c = run.config;
    let params = c.params()?;
    let rmax = c.radii.iter().fold(0.0f64, |m, &r| m.max(r));
    let horizon = c.horizon.max(rmax.powf(2.0 * c.s));
    let stride = if c.snapshot_stride > 0 {
        c.snapshot_stride
    } else {
        ((0.05 / c.dt).round() as usize).max(1)
    };
    let solver = SolverConfig {
        horizon,
        snapshot_stride: stride,
        record_stride: stride,
        ..c.solver()
    };
    let u0 = initial_datum(c, run)?;
    let traj = mild::run(&u0, &solver, &params)?;
    if traj.outcome != Outcome::GlobalWithinHorizon {
        return Err(Error::Insufficient(format!(
            "certificate needs a solution on [0, {horizon}], got {:?}",
            traj.outcome
        )));
    }
    let report = fujita::nonexistence_certificate(&traj, &c.radii)?;
    let convexity_ok = report.convexity.iter().all(|r| r.holds(1e-8));
    let exponent_ok = if report.predicted_exponent == 0.0 {
        report.fitted_slope.abs() <= 0.1
    } else {
        report.sign_matches()
    };
    let (csv, json) = (run.path("certificate.csv"), run.path("certificate.json"));
    report.write(&csv)?;
    io::write_json(
        &json,
        &serde_json::json!({
            "report": report,
            "family": c.radii.iter().map(|&r| TestFunctionFamily::new(c.p, r).ok()).collect::<Vec<_>>(),
            "exponent_check": exponent_ok,
            "convexity_check": convexity_ok,
        }),
    )?;
    run.note("fitted_slope", report.fitted_slope);
    run.note("predicted_exponent", report.predicted_exponent);
    let code = if exponent_ok && convexity_ok { EXIT_OK } else { EXIT_PROPERTY };
    Ok((
        code,
        format!(
            "slope {:.4} vs exponent {:.4}; convexity {}",
            report.fitted_slope,
            report.predicted_exponent,
            if convexity_ok { "holds" } else { "FAILS" }
        ),
    ))
}

/// Entry point of the binary; returns the exit code.
pub fn main_with_args(argv: &[String]) -> i32 {
    if argv.is_empty() || argv.iter().any(|a| a == "--help" || a == "-h") {
        print!("{}", usage());
        return if argv.is_empty() { EXIT_INVALID } else { EXIT_OK };
    }
    let parsed = match parse_config(argv) {
        Ok(p) => p,
        Err(errors) => {
            for e in errors {
                eprintln!("error: {e}");
            }
            eprint!("{}", usage());
            return EXIT_INVALID;
        }
    };
    let report = execute(&parsed);
    if report.code == EXIT_OK {
        println!("{}", report.summary);
    } else {
        eprintln!("{}", report.summary);
    }
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
    report.code
}

/// Writes `text` to `path` as a config file (helper for scripted runs).
pub fn write_config_file(path: &Path, config: &RunConfig) -> Result<()> {
    std::fs::write(path, config.to_config_text())?;
    Ok(())
}
