//! Scripted recovery experiments over (row x sample-size x trial) grids.
//!
//! A sweep varies exactly one row axis — target functions, model variants,
//! or initialization scales — against a list of training-set sizes, with
//! several independently seeded trials per cell. Each cell draws its data,
//! initializes, trains, and measures a test error. Cells are scheduled on
//! a work queue; results are keyed by (row label, n, trial) with seeds
//! derived from the master seed, so neither worker count nor completion
//! order can change a single byte of the output.
//!
//! Outputs are CSV (per-cell and aggregate) and JSON, with the master seed
//! and crate version stamped into header comments and floats printed with
//! 17 significant digits.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::matrix::MatrixT;
use crate::model::{InputPointT, ModelSpec, ParamVectorT};
use crate::rank::{model_rank_numeric, stability_onset, tangent_over_inputs, DatasetT};
use crate::rng::{derive_seed, fnv1a64, Rng};
use crate::svd::{numerical_rank, singular_values};
use crate::targets::{
    complement_dataset, matrix_dataset, minimal_rank_factorization, nn_shift3, sampling_sequences,
    spectrum_masks, TargetLibrary, ToyCoeffs,
};
use crate::train::{init_params, train, TrainConfigT};
use crate::DEFAULT_REL_TOL;

/// Consecutive singular-value ratio that counts as the rank boundary when
/// reading a trained tangent spectrum. A trained minimizer is only
/// approximately low-rank — directions gradient descent barely moved keep
/// initialization-scale singular values — so a fixed relative threshold
/// cannot separate all spectra at once. Reading the first drop does:
/// within the genuine directions consecutive ratios stay below ~1.7,
/// while the drop at the rank boundary exceeds 4 in every observed trial.
pub const SPECTRUM_GAP_RATIO: f64 = 3.0;

/// Rank read at the first consecutive drop of at least
/// [`SPECTRUM_GAP_RATIO`]; a spectrum with no such drop is full rank.
pub fn spectral_gap_rank(sigma: &[f64]) -> usize {
    for k in 1..sigma.len() {
        if sigma[k] == 0.0 || sigma[k - 1] / sigma[k] >= SPECTRUM_GAP_RATIO {
            return k;
        }
    }
    sigma.len()
}

/// The empirical (n-column) and full tangent matrices carry the same rank
/// when the full spectrum's gap-read rank equals the sample count and the
/// empirical spectrum stays entirely above the full spectrum's residual
/// level — i.e. a common relative threshold separating both spectra at
/// that rank exists.
pub fn tangent_ranks_agree(emp_sigma: &[f64], full_sigma: &[f64]) -> bool {
    let n = emp_sigma.len();
    if spectral_gap_rank(full_sigma) != n {
        return false;
    }
    if n >= full_sigma.len() {
        return true;
    }
    let emp_floor = emp_sigma[n - 1] / emp_sigma[0];
    let residual = full_sigma[n] / full_sigma[0];
    emp_floor > residual
}

/// Attempts before the stable-only mask filter gives up and keeps the
/// last uniform draw.
const STABLE_MASK_ATTEMPTS: usize = 512;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPolicy {
    /// n distinct entries uniformly without replacement.
    Uniform,
    /// Uniform draws filtered by the linear-stability certificate at the
    /// target's minimal-rank factorization; below the model rank (where no
    /// stable mask exists) it degrades to a plain uniform draw.
    StableOnly,
    /// Prefix of a fixed sampling sequence.
    FixedSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSpec {
    /// Mean squared error over the unobserved entries (matrix completion).
    Unobserved,
    /// Mean squared error over all entries.
    AllEntries,
    /// Fresh standard-normal inputs of the given count.
    Normal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub models: Vec<ModelSpec>,
    pub targets: Vec<String>,
    pub init_stds: Vec<f64>,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub lr: f64,
    pub train_tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub mask: MaskPolicy,
    pub test: Option<TestSpec>,
    pub workers: usize,
    /// Named sampling sequences ([sequence] sections or the built-ins).
    pub sequences: Vec<(String, Vec<(usize, usize)>)>,
    /// Named masks for the spectrum experiment, keyed by n.
    pub masks: Vec<(usize, Vec<(usize, usize)>)>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            models: vec![],
            targets: vec![],
            init_stds: vec![1e-4],
            sizes: vec![],
            trials: 50,
            lr: 0.05,
            train_tol: 1e-9,
            max_steps: 10_000_000,
            seed: 1,
            mask: MaskPolicy::Uniform,
            test: None,
            workers: 0,
            sequences: vec![],
            masks: vec![],
        }
    }
}

impl SweepConfig {
    pub fn train_config(&self, init_std: f64, seed: u64) -> TrainConfigT<f64> {
        TrainConfigT {
            init_std,
            lr: self.lr,
            train_tol: self.train_tol,
            max_steps: self.max_steps,
            seed,
        }
    }

    fn validate_axes(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(invalid("config needs at least one model"));
        }
        if self.targets.is_empty() {
            return Err(invalid("config needs at least one target"));
        }
        if self.init_stds.is_empty() {
            return Err(invalid("config needs at least one init_std"));
        }
        let wide = [
            self.models.len() > 1,
            self.targets.len() > 1,
            self.init_stds.len() > 1,
        ];
        if wide.iter().filter(|&&w| w).count() > 1 {
            return Err(invalid(
                "only one of models/targets/init_stds may vary (the row axis)",
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        Ok(())
    }
}

/// Parse the flat key-value + repeated-section experiment config format.
///
/// ```text
/// # comments with '#'
/// model  = matfac:d=4          # or models = spec;spec;...
/// targets = M1,M2              # or target = M1
/// sizes  = 1..16               # comma list and a..b ranges
/// trials = 50
/// seed   = 1
/// init_std = 1e-4              # or init_stds = list (the row axis)
/// lr = 0.05
/// train_tol = 1e-9
/// max_steps = 1000000
/// mask = uniform | stable-only | fixed-sequence
/// test = unobserved | all | normal:1000
/// workers = 0
/// sequences = builtin          # load the six built-in sampling orders
/// masks = builtin              # load the built-in n = 7/12/15 masks
///
/// [sequence]                   # custom sampling order (1-based entries)
/// name = myorder
/// entries = (3,1),(4,3),(2,1),...
///
/// [mask]                       # custom spectrum mask (1-based entries)
/// n = 7
/// entries = (1,1),(1,2),...
/// ```
pub fn parse_config(text: &str) -> Result<SweepConfig> {
    let mut cfg = SweepConfig::default();
    let mut globals: Vec<(String, String)> = Vec::new();
    let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| invalid(format!("line {}: malformed section", lineno + 1)))?;
            sections.push((name.trim().to_string(), Vec::new()));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("line {}: expected key = value", lineno + 1)))?;
        let pair = (key.trim().to_string(), value.trim().to_string());
        match sections.last_mut() {
            Some((_, entries)) => entries.push(pair),
            None => globals.push(pair),
        }
    }

    for (key, value) in &globals {
        match key.as_str() {
            "model" => cfg.models = vec![ModelSpec::parse(value)?],
            "models" => {
                cfg.models = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(ModelSpec::parse)
                    .collect::<Result<_>>()?;
            }
            "target" => cfg.targets = vec![value.to_string()],
            "targets" => {
                cfg.targets = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "sizes" => cfg.sizes = parse_sizes(value)?,
            "trials" => cfg.trials = parse_int(key, value)?,
            "seed" => cfg.seed = parse_int::<u64>(key, value)?,
            "init_std" => cfg.init_stds = vec![parse_float(key, value)?],
            "init_stds" => {
                cfg.init_stds = value
                    .split(',')
                    .map(|s| parse_float(key, s))
                    .collect::<Result<_>>()?;
            }
            "lr" => cfg.lr = parse_float(key, value)?,
            "train_tol" => cfg.train_tol = parse_float(key, value)?,
            "max_steps" => cfg.max_steps = parse_int(key, value)?,
            "workers" => cfg.workers = parse_int(key, value)?,
            "mask" => {
                cfg.mask = match value.as_str() {
                    "uniform" => MaskPolicy::Uniform,
                    "stable-only" => MaskPolicy::StableOnly,
                    "fixed-sequence" => MaskPolicy::FixedSequence,
                    other => return Err(invalid(format!("unknown mask policy {other:?}"))),
                };
            }
            "test" => {
                cfg.test = Some(match value.as_str() {
                    "unobserved" => TestSpec::Unobserved,
                    "all" => TestSpec::AllEntries,
                    other => match other.strip_prefix("normal:") {
                        Some(count) => TestSpec::Normal(parse_int(key, count)?),
                        None => return Err(invalid(format!("unknown test spec {other:?}"))),
                    },
                });
            }
            "sequences" if value == "builtin" => {
                cfg.sequences = sampling_sequences()
                    .into_iter()
                    .enumerate()
                    .map(|(k, seq)| (format!("seq{}", k + 1), seq))
                    .collect();
            }
            "masks" if value == "builtin" => cfg.masks = spectrum_masks(),
            other => return Err(invalid(format!("unknown config key {other:?}"))),
        }
    }

    for (name, entries) in &sections {
        match name.as_str() {
            "sequence" => {
                let label = lookup(entries, "name")
                    .unwrap_or_else(|| format!("seq{}", cfg.sequences.len() + 1));
                let raw = lookup(entries, "entries")
                    .ok_or_else(|| invalid("[sequence] needs entries"))?;
                cfg.sequences.push((label, parse_entries(&raw)?));
            }
            "mask" => {
                let n: usize = parse_int(
                    "n",
                    &lookup(entries, "n").ok_or_else(|| invalid("[mask] needs n"))?,
                )?;
                let raw =
                    lookup(entries, "entries").ok_or_else(|| invalid("[mask] needs entries"))?;
                let entries = parse_entries(&raw)?;
                if entries.len() != n {
                    return Err(invalid(format!(
                        "[mask] n = {n} but {} entries given",
                        entries.len()
                    )));
                }
                cfg.masks.push((n, entries));
            }
            other => return Err(invalid(format!("unknown section [{other}]"))),
        }
    }
    Ok(cfg)
}

/// Canonical emission of the resolved config; `parse_config` of the result
/// reproduces the same `SweepConfig`.
pub fn render_config(cfg: &SweepConfig) -> String {
    let mut out = String::new();
    let models: Vec<String> = cfg.models.iter().map(|m| m.to_string()).collect();
    out.push_str(&format!("models = {}\n", models.join(";")));
    out.push_str(&format!("targets = {}\n", cfg.targets.join(",")));
    if !cfg.sizes.is_empty() {
        let sizes: Vec<String> = cfg.sizes.iter().map(|n| n.to_string()).collect();
        out.push_str(&format!("sizes = {}\n", sizes.join(",")));
    }
    out.push_str(&format!("trials = {}\n", cfg.trials));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    let stds: Vec<String> = cfg.init_stds.iter().map(|s| format!("{s:e}")).collect();
    out.push_str(&format!("init_stds = {}\n", stds.join(",")));
    out.push_str(&format!("lr = {:e}\n", cfg.lr));
    out.push_str(&format!("train_tol = {:e}\n", cfg.train_tol));
    out.push_str(&format!("max_steps = {}\n", cfg.max_steps));
    out.push_str(&format!(
        "mask = {}\n",
        match cfg.mask {
            MaskPolicy::Uniform => "uniform",
            MaskPolicy::StableOnly => "stable-only",
            MaskPolicy::FixedSequence => "fixed-sequence",
        }
    ));
    if let Some(test) = cfg.test {
        out.push_str(&format!(
            "test = {}\n",
            match test {
                TestSpec::Unobserved => "unobserved".to_string(),
                TestSpec::AllEntries => "all".to_string(),
                TestSpec::Normal(k) => format!("normal:{k}"),
            }
        ));
    }
    out.push_str(&format!("workers = {}\n", cfg.workers));
    for (name, seq) in &cfg.sequences {
        out.push_str("[sequence]\n");
        out.push_str(&format!("name = {name}\n"));
        out.push_str(&format!("entries = {}\n", render_entries(seq)));
    }
    for (n, mask) in &cfg.masks {
        out.push_str("[mask]\n");
        out.push_str(&format!("n = {n}\n"));
        out.push_str(&format!("entries = {}\n", render_entries(mask)));
    }
    out
}

fn lookup(entries: &[(String, String)], key: &str) -> Option<String> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.clone())
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| invalid(format!("key {key}: bad integer {value:?}")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| invalid(format!("key {key}: bad number {value:?}")))
}

fn parse_sizes(value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: usize = parse_int("sizes", lo)?;
                let hi: usize = parse_int("sizes", hi)?;
                if lo == 0 || hi < lo {
                    return Err(invalid(format!("bad size range {part:?}")));
                }
                out.extend(lo..=hi);
            }
            None => {
                let n: usize = parse_int("sizes", part)?;
                if n == 0 {
                    return Err(invalid("sizes must be >= 1"));
                }
                out.push(n);
            }
        }
    }
    Ok(out)
}

/// `(i,j),(k,l),...` with 1-based indices.
fn parse_entries(value: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let cleaned = value.replace(char::is_whitespace, "");
    let mut rest = cleaned.as_str();
    while !rest.is_empty() {
        let rest2 = rest
            .strip_prefix('(')
            .ok_or_else(|| invalid(format!("bad entry list near {rest:?}")))?;
        let close = rest2
            .find(')')
            .ok_or_else(|| invalid("unclosed entry parenthesis"))?;
        let (pair, tail) = rest2.split_at(close);
        let (i, j) = pair
            .split_once(',')
            .ok_or_else(|| invalid(format!("bad entry {pair:?}")))?;
        let i: usize = parse_int("entries", i)?;
        let j: usize = parse_int("entries", j)?;
        if i == 0 || j == 0 {
            return Err(invalid("entries are 1-based"));
        }
        out.push((i - 1, j - 1));
        rest = tail[1..].strip_prefix(',').unwrap_or(&tail[1..]);
    }
    if out.is_empty() {
        return Err(invalid("empty entry list"));
    }
    Ok(out)
}

fn render_entries(entries: &[(usize, usize)]) -> String {
    entries
        .iter()
        .map(|&(i, j)| format!("({},{})", i + 1, j + 1))
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    #[serde(rename = "target")]
    pub row: String,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub test_error: f64,
    pub train_loss: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub master_seed: u64,
    pub version: String,
    /// Row-major over (row, n, trial).
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    #[serde(rename = "target")]
    pub row: String,
    pub n: usize,
    pub mean_test_error: f64,
    pub success_fraction: f64,
}

impl SweepGrid {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut rows: Vec<AggregateRow> = Vec::new();
        for cell in &self.cells {
            match rows.iter_mut().find(|r| r.row == cell.row && r.n == cell.n) {
                Some(agg) => {
                    agg.mean_test_error += cell.test_error;
                    agg.success_fraction += f64::from(cell.converged);
                }
                None => rows.push(AggregateRow {
                    row: cell.row.clone(),
                    n: cell.n,
                    mean_test_error: cell.test_error,
                    success_fraction: f64::from(cell.converged),
                }),
            }
        }
        for agg in &mut rows {
            let count = self
                .cells
                .iter()
                .filter(|c| c.row == agg.row && c.n == agg.n)
                .count() as f64;
            agg.mean_test_error /= count;
            agg.success_fraction /= count;
        }
        rows
    }

    pub fn mean_test_error(&self, row: &str, n: usize) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.row == row && a.n == n)
            .map(|a| a.mean_test_error)
    }

    pub fn cells_csv(&self) -> String {
        let mut out = csv_header("cells", self.master_seed, &self.version);
        out.push_str("target,n,trial,seed,test_error,train_loss,converged\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_field(&c.row),
                c.n,
                c.trial,
                c.seed,
                fmt_f64(c.test_error),
                fmt_f64(c.train_loss),
                c.converged
            ));
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = csv_header("aggregate", self.master_seed, &self.version);
        out.push_str("target,n,mean_test_error,success_fraction\n");
        for a in self.aggregate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&a.row),
                a.n,
                fmt_f64(a.mean_test_error),
                fmt_f64(a.success_fraction)
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "sweep",
            "version": self.version,
            "master_seed": self.master_seed,
            "cells": self.cells,
            "aggregate": self.aggregate(),
        })
    }

    /// Inverse of [`SweepGrid::cells_csv`]; `export -> import -> export`
    /// is byte-identical.
    pub fn from_cells_csv(text: &str) -> Result<SweepGrid> {
        let mut master_seed = None;
        let mut version = None;
        let mut cells = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# master_seed = ") {
                master_seed = Some(parse_int::<u64>("master_seed", rest)?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("# version = ") {
                version = Some(rest.to_string());
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != "target,n,trial,seed,test_error,train_loss,converged" {
                    return Err(invalid(format!("unexpected csv header {line:?}")));
                }
                saw_header = true;
                continue;
            }
            let fields = split_csv_line(line)?;
            if fields.len() != 7 {
                return Err(invalid(format!(
                    "expected 7 csv fields, got {}",
                    fields.len()
                )));
            }
            cells.push(SweepCell {
                row: fields[0].clone(),
                n: parse_int("n", &fields[1])?,
                trial: parse_int("trial", &fields[2])?,
                seed: parse_int("seed", &fields[3])?,
                test_error: parse_float("test_error", &fields[4])?,
                train_loss: parse_float("train_loss", &fields[5])?,
                converged: match fields[6].as_str() {
                    "true" => true,
                    "false" => false,
                    other => return Err(invalid(format!("bad bool {other:?}"))),
                },
            });
        }
        Ok(SweepGrid {
            master_seed: master_seed.ok_or_else(|| invalid("missing master_seed comment"))?,
            version: version.ok_or_else(|| invalid("missing version comment"))?,
            cells,
        })
    }
}

fn csv_header(kind: &str, master_seed: u64, version: &str) -> String {
    format!("# rankstrat {kind}\n# master_seed = {master_seed}\n# version = {version}\n")
}

/// 17 significant digits; round-trips every finite f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv_line(line: &str) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        let mut field = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => {
                        if chars.peek() == Some(&'"') {
                            chars.next();
                            field.push('"');
                        } else {
                            break;
                        }
                    }
                    Some(c) => field.push(c),
                    None => return Err(invalid("unterminated quoted csv field")),
                }
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' {
                    break;
                }
                field.push(c);
                chars.next();
            }
        }
        fields.push(field);
        match chars.next() {
            Some(',') => continue,
            None => break,
            Some(c) => return Err(invalid(format!("unexpected {c:?} in csv line"))),
        }
    }
    Ok(fields)
}

/// Write with path context on failure.
pub fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.display().to_string(),
                message: e.to_string(),
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Rows and cells
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum RowKind {
    Matrix {
        target: MatrixT<f64>,
        /// Minimal-rank factorization and its model rank, for the
        /// stable-only mask filter.
        stable: Option<(ParamVectorT<f64>, usize)>,
        sequence: Option<Vec<(usize, usize)>>,
    },
    Toy(ToyCoeffs),
    NnShift3,
}

#[derive(Debug, Clone)]
struct RowCtx {
    label: String,
    model: ModelSpec,
    kind: RowKind,
    init_std: f64,
    test: TestSpec,
}

fn build_rows(cfg: &SweepConfig) -> Result<Vec<RowCtx>> {
    cfg.validate_axes()?;
    let lib = TargetLibrary::load()?;
    let mut rows = Vec::new();
    let axis_is_models = cfg.models.len() > 1;
    let axis_is_stds = cfg.init_stds.len() > 1;
    for model in &cfg.models {
        for target in &cfg.targets {
            for &init_std in &cfg.init_stds {
                let label = if axis_is_models {
                    model.to_string()
                } else if axis_is_stds {
                    format!("std={init_std:e}")
                } else {
                    target.clone()
                };
                rows.push(build_row(cfg, &lib, label, model, target, init_std)?);
            }
        }
    }
    Ok(rows)
}

fn build_row(
    cfg: &SweepConfig,
    lib: &TargetLibrary,
    label: String,
    model: &ModelSpec,
    target: &str,
    init_std: f64,
) -> Result<RowCtx> {
    model.validate()?;
    let (kind, default_test) = match model {
        ModelSpec::MatFac { d } => {
            let (matrix, _) = lib.matrix(target)?;
            if matrix.rows() != *d {
                return Err(invalid(format!(
                    "target {target} is {}x{} but the model has d={d}",
                    matrix.rows(),
                    matrix.cols()
                )));
            }
            let stable = if cfg.mask == MaskPolicy::StableOnly {
                let (_, theta_star) = minimal_rank_factorization(matrix)?;
                let rank = model_rank_numeric(model, &theta_star, DEFAULT_REL_TOL, 1, cfg.seed)?;
                Some((theta_star, rank))
            } else {
                None
            };
            let sequence = if cfg.mask == MaskPolicy::FixedSequence {
                let (_, seq) = cfg
                    .sequences
                    .first()
                    .ok_or_else(|| invalid("fixed-sequence mask needs a [sequence]"))?;
                Some(seq.clone())
            } else {
                None
            };
            (
                RowKind::Matrix {
                    target: matrix.clone(),
                    stable,
                    sequence,
                },
                TestSpec::Unobserved,
            )
        }
        ModelSpec::ToyNl | ModelSpec::ToyLinear => (
            RowKind::Toy(TargetLibrary::toy(target)?),
            TestSpec::Normal(1000),
        ),
        ModelSpec::Fc2 { d, .. } | ModelSpec::Cnn1d { d, .. } => {
            if target != "nn-shift3" {
                return Err(invalid(format!(
                    "network models support the nn-shift3 target, got {target:?}"
                )));
            }
            if *d != 5 {
                return Err(invalid("nn-shift3 needs input length d=5"));
            }
            (RowKind::NnShift3, TestSpec::Normal(1000))
        }
        ModelSpec::DeepFc { widths } => {
            if target != "nn-shift3" || widths[0] != 5 {
                return Err(invalid(
                    "deepfc sweeps support nn-shift3 with input width 5",
                ));
            }
            (RowKind::NnShift3, TestSpec::Normal(1000))
        }
        ModelSpec::Cnn2d { .. } => {
            return Err(invalid("no built-in sweep targets for 2-D models"));
        }
    };
    let test = cfg.test.unwrap_or(default_test);
    match (&kind, test) {
        (RowKind::Matrix { .. }, TestSpec::Normal(_)) => {
            return Err(invalid("matrix rows use test = unobserved or all"));
        }
        (RowKind::Toy(_) | RowKind::NnShift3, TestSpec::Unobserved | TestSpec::AllEntries) => {
            return Err(invalid("vector-input rows use test = normal:<count>"));
        }
        _ => {}
    }
    Ok(RowCtx {
        label,
        model: model.clone(),
        kind,
        init_std,
        test,
    })
}

fn uniform_mask(d: usize, n: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect();
    for k in 0..n {
        let pick = k + rng.below(all.len() - k);
        all.swap(k, pick);
    }
    all.truncate(n);
    all
}

fn draw_mask(row: &RowCtx, d: usize, n: usize, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    let RowKind::Matrix {
        stable, sequence, ..
    } = &row.kind
    else {
        unreachable!("mask drawing is matrix-only");
    };
    if n > d * d {
        return Err(invalid(format!(
            "sample size {n} exceeds the {} entries",
            d * d
        )));
    }
    if let Some(seq) = sequence {
        if n > seq.len() {
            return Err(invalid(format!(
                "sample size {n} exceeds the {}-entry sequence",
                seq.len()
            )));
        }
        return Ok(seq[..n].to_vec());
    }
    let mut mask = uniform_mask(d, n, rng);
    if let Some((theta_star, model_rank)) = stable {
        if n >= *model_rank {
            for _ in 0..STABLE_MASK_ATTEMPTS {
                let inputs: Vec<InputPointT<f64>> = mask
                    .iter()
                    .map(|&(i, j)| InputPointT::Entry { i, j })
                    .collect();
                let t = tangent_over_inputs(&row.model, theta_star, &inputs)?;
                if numerical_rank(&t.matrix, DEFAULT_REL_TOL)? == *model_rank {
                    break;
                }
                mask = uniform_mask(d, n, rng);
            }
        }
    }
    Ok(mask)
}

fn run_cell(row: &RowCtx, n: usize, trial: usize, cfg: &SweepConfig) -> Result<SweepCell> {
    let cell_seed = derive_seed(
        cfg.seed,
        &[fnv1a64(row.label.as_bytes()), n as u64, trial as u64],
    );
    let mut data_rng = Rng::new(derive_seed(cell_seed, &[0]));
    let init_seed = derive_seed(cell_seed, &[1]);

    let (train_data, test_data): (DatasetT<f64>, DatasetT<f64>) = match &row.kind {
        RowKind::Matrix { target, .. } => {
            let mask = draw_mask(row, target.rows(), n, &mut data_rng)?;
            let train_data = matrix_dataset(target, &mask)?;
            let test_data = match row.test {
                TestSpec::Unobserved => complement_dataset(target, &mask)?,
                TestSpec::AllEntries => complement_dataset(target, &[])?,
                TestSpec::Normal(_) => unreachable!("validated in build_row"),
            };
            (train_data, test_data)
        }
        RowKind::Toy(coeffs) => {
            let sample = |rng: &mut Rng, count: usize| -> DatasetT<f64> {
                let mut inputs = Vec::with_capacity(count);
                let mut labels = Vec::with_capacity(count);
                for _ in 0..count {
                    let x1 = rng.standard_normal();
                    let x2 = rng.standard_normal();
                    inputs.push(InputPointT::Vector(vec![x1, x2]));
                    labels.push(coeffs.eval(x1, x2));
                }
                DatasetT::new(inputs, labels).expect("nonempty toy dataset")
            };
            let TestSpec::Normal(count) = row.test else {
                unreachable!()
            };
            (sample(&mut data_rng, n), sample(&mut data_rng, count))
        }
        RowKind::NnShift3 => {
            let sample = |rng: &mut Rng, count: usize| -> DatasetT<f64> {
                let mut inputs = Vec::with_capacity(count);
                let mut labels = Vec::with_capacity(count);
                for _ in 0..count {
                    let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
                    labels.push(nn_shift3(&x));
                    inputs.push(InputPointT::Vector(x));
                }
                DatasetT::new(inputs, labels).expect("nonempty nn dataset")
            };
            let TestSpec::Normal(count) = row.test else {
                unreachable!()
            };
            (sample(&mut data_rng, n), sample(&mut data_rng, count))
        }
    };

    let theta0 = init_params(&row.model, row.init_std, init_seed);
    let train_cfg = cfg.train_config(row.init_std, cell_seed);
    let outcome = train(&row.model, &theta0, &train_data, &train_cfg)?;
    let test_error = crate::train::test_error(&row.model, &outcome.theta_final, &test_data)?;
    Ok(SweepCell {
        row: row.label.clone(),
        n,
        trial,
        seed: cell_seed,
        test_error,
        train_loss: outcome.final_train_loss,
        converged: outcome.converged,
    })
}

fn run_grid(cfg: &SweepConfig, rows: &[RowCtx]) -> Result<SweepGrid> {
    if cfg.sizes.is_empty() {
        return Err(invalid("sweep needs a nonempty sizes list"));
    }
    let jobs: Vec<(usize, usize, usize)> = rows
        .iter()
        .enumerate()
        .flat_map(|(r, _)| {
            cfg.sizes
                .iter()
                .flat_map(move |&n| (0..cfg.trials).map(move |t| (r, n, t)))
        })
        .collect();
    let cells = in_pool(cfg.workers, || {
        jobs.par_iter()
            .map(|&(r, n, t)| run_cell(&rows[r], n, t, cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepGrid {
        master_seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        cells,
    })
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(job)
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Phase-transition sweep: row axis = targets or model variants.
pub fn run_phase_sweep(cfg: &SweepConfig) -> Result<SweepGrid> {
    if cfg.init_stds.len() > 1 {
        return Err(invalid(
            "phase sweeps vary targets or models, not init_stds",
        ));
    }
    let rows = build_rows(cfg)?;
    run_grid(cfg, &rows)
}

/// Initialization-scale sweep: row axis = init_stds, single target.
pub fn run_variance_sweep(cfg: &SweepConfig) -> Result<SweepGrid> {
    if cfg.init_stds.len() < 2 {
        return Err(invalid("variance sweeps need an init_stds list"));
    }
    let rows = build_rows(cfg)?;
    run_grid(cfg, &rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceOnset {
    pub sequence: String,
    /// Smallest prefix length whose tangent rank reaches the model rank at
    /// the minimal-rank target factorization.
    pub n_t: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceReport {
    pub target: String,
    pub master_seed: u64,
    pub version: String,
    pub onsets: Vec<SequenceOnset>,
    pub grid: SweepGrid,
}

impl SequenceReport {
    pub fn aggregate_csv(&self) -> String {
        let mut out = csv_header("sequence aggregate", self.master_seed, &self.version);
        out.push_str("sequence,n,mean_test_error,success_fraction,n_t\n");
        for a in self.grid.aggregate() {
            let n_t = self
                .onsets
                .iter()
                .find(|o| o.sequence == a.row)
                .map(|o| o.n_t)
                .unwrap_or(0);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&a.row),
                a.n,
                fmt_f64(a.mean_test_error),
                fmt_f64(a.success_fraction),
                n_t
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "sequence",
            "version": self.version,
            "master_seed": self.master_seed,
            "target": self.target,
            "onsets": self.onsets,
            "cells": self.grid.cells,
            "aggregate": self.grid.aggregate(),
        })
    }
}

/// Sampling-order study: for each sequence, the stability onset n_t at the
/// target's minimal-rank factorization, and trained test error per prefix
/// length. Prefix lengths come from `cfg.sizes`, defaulting to the full
/// sequence.
pub fn run_sequence_experiment(target_name: &str, cfg: &SweepConfig) -> Result<SequenceReport> {
    let lib = TargetLibrary::load()?;
    let (target, _) = lib.matrix(target_name)?;
    let model = cfg
        .models
        .first()
        .cloned()
        .unwrap_or(ModelSpec::MatFac { d: target.rows() });
    if !matches!(model, ModelSpec::MatFac { .. }) {
        return Err(invalid(
            "sequence experiments use the matrix-factorization model",
        ));
    }
    if cfg.sequences.is_empty() {
        return Err(invalid(
            "sequence experiment needs sequences (try `sequences = builtin`)",
        ));
    }
    let (_, theta_star) = minimal_rank_factorization(target)?;

    let mut onsets = Vec::new();
    let mut all_cells = Vec::new();
    for (name, seq) in &cfg.sequences {
        let inputs: Vec<InputPointT<f64>> = seq
            .iter()
            .map(|&(i, j)| InputPointT::Entry { i, j })
            .collect();
        let n_t = stability_onset(&model, &theta_star, &inputs, DEFAULT_REL_TOL, cfg.seed)?;
        onsets.push(SequenceOnset {
            sequence: name.clone(),
            n_t,
        });

        let sizes: Vec<usize> = if cfg.sizes.is_empty() {
            (1..=seq.len()).collect()
        } else {
            cfg.sizes
                .iter()
                .copied()
                .filter(|&n| n <= seq.len())
                .collect()
        };
        let row = RowCtx {
            label: name.clone(),
            model: model.clone(),
            kind: RowKind::Matrix {
                target: target.clone(),
                stable: None,
                sequence: Some(seq.clone()),
            },
            init_std: cfg.init_stds[0],
            test: cfg.test.unwrap_or(TestSpec::Unobserved),
        };
        let sub = SweepConfig {
            sizes,
            ..cfg.clone()
        };
        let grid = run_grid(&sub, &[row])?;
        all_cells.extend(grid.cells);
    }
    Ok(SequenceReport {
        target: target_name.to_string(),
        master_seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        onsets,
        grid: SweepGrid {
            master_seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            cells: all_cells,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub n: usize,
    pub trials: usize,
    /// Mean ordered singular values of the learned completion A*B.
    pub completion_sigma: Vec<f64>,
    /// Mean ordered singular values of the M x n tangent matrix at the
    /// trained parameters.
    pub tangent_empirical_sigma: Vec<f64>,
    /// Mean ordered singular values of the full M x d^2 tangent matrix.
    pub tangent_full_sigma: Vec<f64>,
    /// Fraction of trials where the gap-read ranks of the empirical and
    /// full tangent matrices agree.
    pub rank_match_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub target: String,
    pub master_seed: u64,
    pub version: String,
    pub gap_ratio: f64,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumReport {
    pub fn csv(&self) -> String {
        let mut out = csv_header("spectra", self.master_seed, &self.version);
        out.push_str("n,kind,idx,mean_sigma\n");
        for row in &self.rows {
            for (kind, sigma) in [
                ("completion", &row.completion_sigma),
                ("tangent_empirical", &row.tangent_empirical_sigma),
                ("tangent_full", &row.tangent_full_sigma),
            ] {
                for (idx, &v) in sigma.iter().enumerate() {
                    out.push_str(&format!("{},{},{},{}\n", row.n, kind, idx + 1, fmt_f64(v)));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "spectrum",
            "version": self.version,
            "master_seed": self.master_seed,
            "target": self.target,
            "gap_ratio": self.gap_ratio,
            "rows": self.rows,
        })
    }
}

/// Spectrum study: train on the fixed masks, then average the ordered
/// singular values of the learned completion and of the empirical/full
/// tangent matrices at convergence.
pub fn run_spectrum_experiment(target_name: &str, cfg: &SweepConfig) -> Result<SpectrumReport> {
    let lib = TargetLibrary::load()?;
    let (target, _) = lib.matrix(target_name)?;
    let d = target.rows();
    let model = ModelSpec::MatFac { d };
    if cfg.masks.is_empty() {
        return Err(invalid(
            "spectrum experiment needs masks (try `masks = builtin`)",
        ));
    }
    let all_inputs: Vec<InputPointT<f64>> = (0..d)
        .flat_map(|i| (0..d).map(move |j| InputPointT::Entry { i, j }))
        .collect();

    let mut rows = Vec::new();
    for (n, mask) in &cfg.masks {
        let label = format!("n={n}");
        let trials: Vec<usize> = (0..cfg.trials).collect();
        let per_trial = in_pool(cfg.workers, || {
            trials
                .par_iter()
                .map(|&trial| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> {
                    let cell_seed = derive_seed(
                        cfg.seed,
                        &[fnv1a64(label.as_bytes()), *n as u64, trial as u64],
                    );
                    let init_seed = derive_seed(cell_seed, &[1]);
                    let train_data = matrix_dataset::<f64>(target, mask)?;
                    let theta0 = init_params(&model, cfg.init_stds[0], init_seed);
                    let train_cfg = cfg.train_config(cfg.init_stds[0], cell_seed);
                    let outcome = train(&model, &theta0, &train_data, &train_cfg)?;
                    let th = outcome.theta_final.as_slice();
                    let a = MatrixT::from_fn(d, d, |i, j| th[i * d + j]);
                    let b = MatrixT::from_fn(d, d, |i, j| th[d * d + i * d + j]);
                    let completion = singular_values(&a.matmul(&b))?;
                    let mask_inputs: Vec<InputPointT<f64>> = mask
                        .iter()
                        .map(|&(i, j)| InputPointT::Entry { i, j })
                        .collect();
                    let emp = tangent_over_inputs(&model, &outcome.theta_final, &mask_inputs)?;
                    let full = tangent_over_inputs(&model, &outcome.theta_final, &all_inputs)?;
                    let emp_sigma = singular_values(&emp.matrix)?;
                    let full_sigma = singular_values(&full.matrix)?;
                    let match_ok = tangent_ranks_agree(&emp_sigma, &full_sigma);
                    Ok((completion, emp_sigma, full_sigma, match_ok))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let trials_f = per_trial.len() as f64;
        let mut completion = vec![0.0; per_trial[0].0.len()];
        let mut emp = vec![0.0; per_trial[0].1.len()];
        let mut full = vec![0.0; per_trial[0].2.len()];
        let mut matches = 0usize;
        for (c, e, f, ok) in &per_trial {
            for (acc, v) in completion.iter_mut().zip(c) {
                *acc += v / trials_f;
            }
            for (acc, v) in emp.iter_mut().zip(e) {
                *acc += v / trials_f;
            }
            for (acc, v) in full.iter_mut().zip(f) {
                *acc += v / trials_f;
            }
            matches += usize::from(*ok);
        }
        rows.push(SpectrumRow {
            n: *n,
            trials: per_trial.len(),
            completion_sigma: completion,
            tangent_empirical_sigma: emp,
            tangent_full_sigma: full,
            rank_match_fraction: matches as f64 / trials_f,
        });
    }
    Ok(SpectrumReport {
        target: target_name.to_string(),
        master_seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        gap_ratio: SPECTRUM_GAP_RATIO,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::test_error as plain_test_error;

    fn tiny_cfg() -> SweepConfig {
        SweepConfig {
            models: vec![ModelSpec::MatFac { d: 4 }],
            targets: vec!["M1".into()],
            sizes: vec![7],
            trials: 1,
            max_steps: 400_000,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn config_parse_and_render_round_trip() {
        let text = "\
# demo
model = matfac:d=4
targets = M1,M2
sizes = 1..3,7
trials = 5
seed = 99
init_std = 1e-4
lr = 5e-2
train_tol = 1e-9
max_steps = 100000
mask = stable-only
test = unobserved
workers = 2
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.targets, vec!["M1", "M2"]);
        assert_eq!(cfg.sizes, vec![1, 2, 3, 7]);
        assert_eq!(cfg.mask, MaskPolicy::StableOnly);
        assert_eq!(cfg.seed, 99);
        let again = parse_config(&render_config(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn config_sections_parse() {
        let text = "\
model = matfac:d=4
target = M2
trials = 3
sequences = builtin
[sequence]
name = mine
entries = (1,1),(2,2),(3,3)
[mask]
n = 2
entries = (1,1),(4,4)
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sequences.len(), 7); // six built-ins + one custom
        assert_eq!(cfg.sequences[6].0, "mine");
        assert_eq!(cfg.sequences[6].1, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(cfg.masks.len(), 1);
        assert_eq!(cfg.masks[0], (2, vec![(0, 0), (3, 3)]));
        let again = parse_config(&render_config(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn config_rejects_garbage() {
        assert!(parse_config("nonsense = 1").is_err());
        assert!(parse_config("sizes = 0..3").is_err());
        assert!(parse_config("mask = sometimes").is_err());
        assert!(parse_config("[what]\nx = 1").is_err());
        // two row axes at once
        let cfg = parse_config("models = toynl;toylinear\ntargets = 1,x1\nsizes = 2").unwrap();
        assert!(cfg.validate_axes().is_err());
    }

    #[test]
    fn single_cell_sweep_equals_direct_training() {
        let cfg = tiny_cfg();
        let grid = run_phase_sweep(&cfg).unwrap();
        assert_eq!(grid.cells.len(), 1);
        let cell = &grid.cells[0];

        // replay the cell by hand with the same derived seeds
        let lib = TargetLibrary::load().unwrap();
        let (target, _) = lib.matrix("M1").unwrap();
        let cell_seed = derive_seed(cfg.seed, &[fnv1a64(b"M1"), 7, 0]);
        assert_eq!(cell.seed, cell_seed);
        let mut data_rng = Rng::new(derive_seed(cell_seed, &[0]));
        let mask = uniform_mask(4, 7, &mut data_rng);
        let train_data = matrix_dataset::<f64>(target, &mask).unwrap();
        let test_data = complement_dataset::<f64>(target, &mask).unwrap();
        let model = ModelSpec::MatFac { d: 4 };
        let theta0 = init_params(&model, 1e-4, derive_seed(cell_seed, &[1]));
        let outcome = train(
            &model,
            &theta0,
            &train_data,
            &cfg.train_config(1e-4, cell_seed),
        )
        .unwrap();
        let direct = plain_test_error(&model, &outcome.theta_final, &test_data).unwrap();
        assert_eq!(cell.test_error, direct);
        assert_eq!(cell.train_loss, outcome.final_train_loss);
    }

    #[test]
    fn export_counts_and_round_trip() {
        let mut cfg = tiny_cfg();
        cfg.targets = vec!["M1".into(), "M2".into()];
        cfg.sizes = vec![6, 7];
        cfg.trials = 1;
        cfg.max_steps = 50_000;
        let grid = run_phase_sweep(&cfg).unwrap();
        let csv = grid.cells_csv();
        let data_lines: Vec<&str> = csv
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("target,"))
            .collect();
        assert_eq!(data_lines.len(), 4); // 2 targets x 2 sizes x 1 trial

        let imported = SweepGrid::from_cells_csv(&csv).unwrap();
        assert_eq!(imported.cells_csv(), csv);

        // aggregate of a single-cell group is the cell itself
        let agg = grid.aggregate();
        assert_eq!(agg.len(), 4);
        for a in &agg {
            let cell = grid
                .cells
                .iter()
                .find(|c| c.row == a.row && c.n == a.n)
                .unwrap();
            assert_eq!(a.mean_test_error, cell.test_error);
        }
    }

    #[test]
    fn trial_order_cannot_change_cells() {
        let mut cfg = tiny_cfg();
        cfg.trials = 3;
        cfg.max_steps = 50_000;
        let grid = run_phase_sweep(&cfg).unwrap();
        // recompute each trial in reverse order, one cell at a time
        let rows = build_rows(&cfg).unwrap();
        for trial in (0..3).rev() {
            let cell = run_cell(&rows[0], 7, trial, &cfg).unwrap();
            let reference = grid.cells.iter().find(|c| c.trial == trial).unwrap();
            assert_eq!(&cell, reference);
        }
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        let mut cfg = tiny_cfg();
        cfg.trials = 2;
        cfg.sizes = vec![6, 7];
        cfg.max_steps = 50_000;
        let serial = {
            let mut c = cfg.clone();
            c.workers = 1;
            run_phase_sweep(&c).unwrap().cells_csv()
        };
        let parallel = {
            let mut c = cfg.clone();
            c.workers = 4;
            run_phase_sweep(&c).unwrap().cells_csv()
        };
        assert_eq!(serial, parallel);
    }

    #[test]
    fn uniform_masks_are_distinct_without_replacement() {
        let mut rng = Rng::new(5);
        for n in [1, 7, 16] {
            let mask = uniform_mask(4, n, &mut rng);
            assert_eq!(mask.len(), n);
            let mut sorted = mask.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), n);
        }
    }

    #[test]
    fn csv_quoting_round_trips_model_labels() {
        let grid = SweepGrid {
            master_seed: 7,
            version: "0.0.0".into(),
            cells: vec![SweepCell {
                row: "cnn1d:d=5,s=3,m=1,sharing,bias".into(),
                n: 3,
                trial: 0,
                seed: 1,
                test_error: 0.5,
                train_loss: 0.1,
                converged: true,
            }],
        };
        let csv = grid.cells_csv();
        let imported = SweepGrid::from_cells_csv(&csv).unwrap();
        assert_eq!(imported.cells[0].row, "cnn1d:d=5,s=3,m=1,sharing,bias");
        assert_eq!(imported.cells_csv(), csv);
    }

    #[test]
    fn zero_init_stays_at_the_saddle() {
        // at theta = 0 the gradient of the product pair vanishes
        // identically, so a target with an x2 component can never be fit:
        // the cell must come back non-converged.
        let cfg = SweepConfig {
            models: vec![ModelSpec::ToyNl],
            targets: vec!["x2".into()],
            init_stds: vec![0.0, 1e-4],
            sizes: vec![3],
            trials: 1,
            lr: 0.05,
            max_steps: 20_000,
            test: Some(TestSpec::Normal(50)),
            ..SweepConfig::default()
        };
        let grid = run_variance_sweep(&cfg).unwrap();
        assert_eq!(grid.cells.len(), 2);
        let zero_row = format!("std={:e}", 0.0);
        let cell = grid.cells.iter().find(|c| c.row == zero_row).unwrap();
        assert!(!cell.converged);
        assert!(cell.train_loss > 1e-3);
    }

    #[test]
    fn fixed_sequence_mask_is_a_prefix() {
        let mut cfg = tiny_cfg();
        cfg.targets = vec!["M2".into()];
        cfg.mask = MaskPolicy::FixedSequence;
        cfg.sequences = vec![("s".into(), sampling_sequences()[0].clone())];
        cfg.sizes = vec![3];
        cfg.max_steps = 10; // data only, no need to converge
        let rows = build_rows(&cfg).unwrap();
        let RowKind::Matrix {
            sequence: Some(seq),
            ..
        } = &rows[0].kind
        else {
            panic!("expected a sequence row");
        };
        let mut rng = Rng::new(1);
        let mask = draw_mask(&rows[0], 4, 3, &mut rng).unwrap();
        assert_eq!(mask, seq[..3].to_vec());
    }
}
