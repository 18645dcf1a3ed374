//! Rank analysis: empirical tangent matrices, numerical model rank by
//! probing, closed-form rank hierarchies, the linear-stability certificate,
//! and the stability onset of an ordered sampling sequence.
//!
//! The central quantity is the model rank of a parameter point — the
//! dimension of the span of the per-parameter derivative functions. It is
//! estimated numerically as the saturated rank of the tangent matrix over
//! generic probe inputs: standard-normal vectors (or images), or, for
//! matrix factorization, the exhaustive set of all d^2 entry indices.
//! An interpolating minimizer is linearly stable exactly when the rank of
//! its tangent matrix over the training inputs reaches its model rank.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::eval::{forward, grad_param};
use crate::matrix::{gamma_matrix, MatrixT};
use crate::model::{InputPointT, ModelSpec, ParamVectorT};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::svd::{numerical_rank, singular_values};

/// Loss threshold under which a parameter point counts as interpolating
/// its dataset (mean half-squared error, the trainer's convention).
pub const INTERPOLATION_LOSS_TOL: f64 = 1e-9;

/// Probe budget used when callers do not override it.
pub fn default_probe_budget(spec: &ModelSpec) -> usize {
    4 * spec.param_count()
}

// ---------------------------------------------------------------------------
// Datasets and tangent matrices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DatasetT<S> {
    inputs: Vec<InputPointT<S>>,
    labels: Vec<S>,
}

impl<S: Scalar> DatasetT<S> {
    pub fn new(inputs: Vec<InputPointT<S>>, labels: Vec<S>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(invalid("dataset must be nonempty"));
        }
        if inputs.len() != labels.len() {
            return Err(invalid(format!(
                "dataset has {} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(invalid("dataset labels must be finite"));
        }
        let entries: Vec<(usize, usize)> = inputs
            .iter()
            .filter_map(|x| match x {
                InputPointT::Entry { i, j } => Some((*i, *j)),
                _ => None,
            })
            .collect();
        if entries.len() == inputs.len() {
            let mut seen = entries.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != entries.len() {
                return Err(invalid("matrix-completion inputs must be distinct entries"));
            }
        }
        Ok(DatasetT { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[InputPointT<S>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[S] {
        &self.labels
    }

    /// First `n` samples as a new dataset.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(invalid(format!("prefix length {n} out of range")));
        }
        DatasetT::new(self.inputs[..n].to_vec(), self.labels[..n].to_vec())
    }
}

/// M x n matrix whose column j is the parameter gradient at input j.
#[derive(Debug, Clone)]
pub struct TangentMatrixT<S> {
    pub matrix: MatrixT<S>,
}

impl<S: Scalar> TangentMatrixT<S> {
    pub fn param_count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn sample_count(&self) -> usize {
        self.matrix.cols()
    }
}

/// Gradient columns at every dataset input.
pub fn tangent_matrix<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    data: &DatasetT<S>,
) -> Result<TangentMatrixT<S>> {
    tangent_over_inputs(spec, theta, data.inputs())
}

pub fn tangent_over_inputs<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    inputs: &[InputPointT<S>],
) -> Result<TangentMatrixT<S>> {
    if inputs.is_empty() {
        return Err(invalid("tangent matrix needs at least one input"));
    }
    let m = spec.param_count();
    let mut mat = MatrixT::zeros(m, inputs.len());
    for (j, x) in inputs.iter().enumerate() {
        let g = grad_param(spec, theta, x)?;
        for (i, v) in g.into_iter().enumerate() {
            mat.set(i, j, v);
        }
    }
    Ok(TangentMatrixT { matrix: mat })
}

/// Rank of the tangent matrix over the dataset inputs.
pub fn empirical_rank<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    data: &DatasetT<S>,
    rel_tol: S,
) -> Result<usize> {
    let t = tangent_matrix(spec, theta, data)?;
    numerical_rank(&t.matrix, rel_tol)
}

// ---------------------------------------------------------------------------
// Numerical model rank
// ---------------------------------------------------------------------------

/// Probe inputs for rank saturation. Matrix factorization has a finite
/// input space, so probing is exhaustive; everything else draws i.i.d.
/// standard-normal inputs from the seeded stream.
pub fn probe_inputs<S: Scalar>(
    spec: &ModelSpec,
    count: usize,
    rng: &mut Rng,
) -> Vec<InputPointT<S>> {
    if let ModelSpec::MatFac { d } = spec {
        let mut all = Vec::with_capacity(d * d);
        for i in 0..*d {
            for j in 0..*d {
                all.push(InputPointT::Entry { i, j });
            }
        }
        return all;
    }
    (0..count).map(|_| spec.sample_input(rng)).collect()
}

/// Rank estimates at the probe budget and at twice the budget. Matrix
/// factorization probes all entries exhaustively, so both agree there.
pub fn model_rank_saturation<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    rel_tol: S,
    probe_budget: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    if probe_budget == 0 {
        return Err(invalid("probe budget must be positive"));
    }
    let mut rng = Rng::new(seed);
    if matches!(spec, ModelSpec::MatFac { .. }) {
        // Exhaustive: all entries, saturated by construction.
        let inputs = probe_inputs::<S>(spec, 0, &mut rng);
        let t = tangent_over_inputs(spec, theta, &inputs)?;
        let r = numerical_rank(&t.matrix, rel_tol)?;
        return Ok((r, r));
    }
    let inputs = probe_inputs::<S>(spec, 2 * probe_budget, &mut rng);
    let t = tangent_over_inputs(spec, theta, &inputs)?;
    let first = submatrix_cols(&t.matrix, probe_budget);
    let r1 = numerical_rank(&first, rel_tol)?;
    let r2 = numerical_rank(&t.matrix, rel_tol)?;
    Ok((r1, r2))
}

/// Saturated empirical rank over generic probe inputs. The estimate is
/// accepted only if doubling the probe count leaves it unchanged; a
/// non-saturated estimate is a `NumericalWarning` carrying both values.
pub fn model_rank_numeric<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    rel_tol: S,
    probe_budget: usize,
    seed: u64,
) -> Result<usize> {
    let (r1, r2) = model_rank_saturation(spec, theta, rel_tol, probe_budget, seed)?;
    if r1 != r2 {
        return Err(Error::NumericalWarning(format!(
            "model rank did not saturate: {r1} with {probe_budget} probes, {r2} with {}",
            2 * probe_budget
        )));
    }
    Ok(r1)
}

fn submatrix_cols<S: Scalar>(m: &MatrixT<S>, cols: usize) -> MatrixT<S> {
    MatrixT::from_fn(m.rows(), cols.min(m.cols()), |i, j| m.get(i, j))
}

// ---------------------------------------------------------------------------
// Closed-form hierarchies
// ---------------------------------------------------------------------------

/// Names the function-space stratum whose closed-form rank is wanted.
/// For CNN-space functions the flags pick the architecture column of the
/// hierarchy (shared kernels, per-position kernels, or the fully-connected
/// counterpart); the model spec supplies the geometry (d, s, bias).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetDescriptor {
    /// Matrix target of matrix rank `r`.
    MatFacTarget { r: usize },
    /// Sum of `k` distinct effective tanh neurons.
    Fc2Target { k: usize },
    /// CNN-space function with `k` effective kernels and `m_null` zero
    /// output weights, evaluated in the architecture the flags select.
    CnnTarget {
        k: usize,
        m_null: usize,
        sharing: bool,
        fc: bool,
        bias: bool,
    },
    /// Toy-model function; `has_x2` marks a nonzero x2 coefficient.
    ToyTarget { has_x2: bool },
}

/// The hierarchy tables as integers.
pub fn closed_form_rank(spec: &ModelSpec, target: &TargetDescriptor) -> Result<usize> {
    spec.validate()?;
    match (spec, target) {
        (ModelSpec::ToyNl, TargetDescriptor::ToyTarget { has_x2 }) => {
            Ok(if *has_x2 { 3 } else { 2 })
        }
        (ModelSpec::ToyLinear, TargetDescriptor::ToyTarget { .. }) => Ok(3),
        (ModelSpec::MatFac { d }, TargetDescriptor::MatFacTarget { r }) => {
            if r > d {
                return Err(invalid(format!("matrix rank {r} exceeds side length {d}")));
            }
            Ok(2 * r * d - r * r)
        }
        (ModelSpec::Fc2 { d, m, bias }, TargetDescriptor::Fc2Target { k }) => {
            if k > m {
                return Err(invalid(format!(
                    "effective neuron count {k} exceeds width {m}"
                )));
            }
            Ok(k * (d + 1 + usize::from(*bias)))
        }
        (
            ModelSpec::Cnn1d {
                d,
                s,
                m,
                bias: spec_bias,
                ..
            },
            TargetDescriptor::CnnTarget {
                k,
                m_null,
                sharing,
                fc,
                bias,
            },
        ) => {
            if bias != spec_bias {
                return Err(invalid(
                    "descriptor bias flag disagrees with the model spec",
                ));
            }
            if k > m {
                return Err(invalid(format!("effective kernel count {k} exceeds m={m}")));
            }
            let p = d + 1 - s;
            check_m_null(*k, p, *m_null, *sharing)?;
            let rank = if *fc {
                if *bias {
                    k * (d + 2) * p - s * m_null
                } else {
                    k * (d + 1) * p - d * m_null
                }
            } else if *sharing {
                k * (d + 1 + usize::from(*bias))
            } else if *bias {
                k * (s + 2) * p - s * m_null
            } else {
                k * (s + 1) * p - s * m_null
            };
            Ok(rank)
        }
        (
            ModelSpec::Cnn2d { d, s, m, .. },
            TargetDescriptor::CnnTarget {
                k,
                m_null,
                sharing,
                fc,
                bias,
            },
        ) => {
            if *bias {
                return Err(invalid("the 2-D hierarchy has no bias variant"));
            }
            if k > m {
                return Err(invalid(format!("effective kernel count {k} exceeds m={m}")));
            }
            let p2 = (d + 1 - s) * (d + 1 - s);
            check_m_null(*k, p2, *m_null, *sharing)?;
            let rank = if *fc {
                k * (d * d + 1) * p2 - d * d * m_null
            } else if *sharing {
                k * (s * s + p2)
            } else {
                k * (s * s + 1) * p2 - s * s * m_null
            };
            Ok(rank)
        }
        (ModelSpec::DeepFc { .. }, _) => Err(invalid(
            "deep networks have upper bounds only; use stratify",
        )),
        _ => Err(invalid(format!(
            "target descriptor {target:?} does not match model {spec}"
        ))),
    }
}

fn check_m_null(k: usize, positions: usize, m_null: usize, sharing: bool) -> Result<()> {
    let cap = if sharing {
        // every kernel must keep at least one live output weight
        k * positions.saturating_sub(1)
    } else {
        k * positions
    };
    if m_null > cap {
        return Err(invalid(format!(
            "m_null = {m_null} exceeds the {cap} zeroable output weights"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stratum sampling (generic parameter points on a named stratum)
// ---------------------------------------------------------------------------

/// A generic parameter point on the stratum the descriptor names. Live
/// units get standard-normal weights (resampled away from zero so seeded
/// test runs never sit next to the rank threshold); dead units are zero.
pub fn sample_stratum_point<S: Scalar>(
    spec: &ModelSpec,
    target: &TargetDescriptor,
    rng: &mut Rng,
) -> Result<ParamVectorT<S>> {
    closed_form_rank(spec, target)?; // validates the combination
    let mut values = vec![S::zero(); spec.param_count()];
    match (spec, target) {
        (ModelSpec::MatFac { d }, TargetDescriptor::MatFacTarget { r }) => {
            let a = MatrixT::<S>::random_with_rank(*d, *r, rng);
            let b = MatrixT::<S>::random_with_rank(*d, *r, rng);
            values[..d * d].copy_from_slice(a.data());
            values[d * d..].copy_from_slice(b.data());
        }
        (ModelSpec::Fc2 { d, bias, .. }, TargetDescriptor::Fc2Target { k }) => {
            let block = d + 1 + usize::from(*bias);
            for unit in 0..*k {
                let base = unit * block;
                for t in 0..*d {
                    values[base + t] = away_from_zero(rng);
                }
                if *bias {
                    values[base + d] = away_from_zero(rng);
                }
                values[base + block - 1] = away_from_zero(rng);
            }
        }
        (
            ModelSpec::Cnn1d {
                d,
                s,
                sharing,
                bias,
                ..
            },
            TargetDescriptor::CnnTarget {
                k,
                m_null,
                sharing: desc_sharing,
                fc,
                ..
            },
        ) => {
            if *fc || sharing != desc_sharing {
                return Err(invalid(
                    "stratum sampling needs a descriptor matching the spec architecture",
                ));
            }
            let p = d + 1 - s;
            if *sharing {
                let block = s + usize::from(*bias) + p;
                let null_set = pick_null_positions(*k, p, *m_null, true, rng);
                for l in 0..*k {
                    let base = l * block;
                    for t in 0..*s {
                        values[base + t] = away_from_zero(rng);
                    }
                    if *bias {
                        values[base + s] = away_from_zero(rng);
                    }
                    let out_base = base + s + usize::from(*bias);
                    for pos in 0..p {
                        if !null_set.contains(&(l * p + pos)) {
                            values[out_base + pos] = away_from_zero(rng);
                        }
                    }
                }
            } else {
                let block = s + usize::from(*bias) + 1;
                let null_set = pick_null_positions(*k, p, *m_null, false, rng);
                for l in 0..*k {
                    for pos in 0..p {
                        let base = (l * p + pos) * block;
                        for t in 0..*s {
                            values[base + t] = away_from_zero(rng);
                        }
                        if *bias {
                            values[base + s] = away_from_zero(rng);
                        }
                        if !null_set.contains(&(l * p + pos)) {
                            values[base + block - 1] = away_from_zero(rng);
                        }
                    }
                }
            }
        }
        (
            ModelSpec::Cnn2d { d, s, sharing, .. },
            TargetDescriptor::CnnTarget {
                k,
                m_null,
                sharing: desc_sharing,
                fc,
                ..
            },
        ) => {
            if *fc || sharing != desc_sharing {
                return Err(invalid(
                    "stratum sampling needs a descriptor matching the spec architecture",
                ));
            }
            let p2 = (d + 1 - s) * (d + 1 - s);
            let ss = s * s;
            if *sharing {
                let block = ss + p2;
                let null_set = pick_null_positions(*k, p2, *m_null, true, rng);
                for l in 0..*k {
                    let base = l * block;
                    for t in 0..ss {
                        values[base + t] = away_from_zero(rng);
                    }
                    for pos in 0..p2 {
                        if !null_set.contains(&(l * p2 + pos)) {
                            values[base + ss + pos] = away_from_zero(rng);
                        }
                    }
                }
            } else {
                let block = ss + 1;
                let null_set = pick_null_positions(*k, p2, *m_null, false, rng);
                for l in 0..*k {
                    for pos in 0..p2 {
                        let base = (l * p2 + pos) * block;
                        for t in 0..ss {
                            values[base + t] = away_from_zero(rng);
                        }
                        if !null_set.contains(&(l * p2 + pos)) {
                            values[base + ss] = away_from_zero(rng);
                        }
                    }
                }
            }
        }
        (ModelSpec::ToyNl, TargetDescriptor::ToyTarget { has_x2 }) => {
            values[0] = away_from_zero(rng);
            values[1] = away_from_zero(rng);
            if *has_x2 {
                values[2] = away_from_zero(rng);
                values[3] = away_from_zero(rng);
            }
        }
        (ModelSpec::ToyLinear, TargetDescriptor::ToyTarget { has_x2 }) => {
            values[0] = away_from_zero(rng);
            values[1] = away_from_zero(rng);
            if *has_x2 {
                values[2] = away_from_zero(rng);
            }
        }
        _ => unreachable!("validated by closed_form_rank"),
    }
    Ok(ParamVectorT::from_raw(values))
}

fn away_from_zero<S: Scalar>(rng: &mut Rng) -> S {
    loop {
        let v = rng.standard_normal();
        if v.abs() >= 0.05 {
            return S::of(v);
        }
    }
}

/// Choose which output weights are zeroed. With sharing, each kernel keeps
/// its first output weight live.
fn pick_null_positions(
    k: usize,
    positions: usize,
    m_null: usize,
    sharing: bool,
    rng: &mut Rng,
) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..k * positions)
        .filter(|idx| !(sharing && idx % positions == 0))
        .collect();
    let mut chosen = Vec::with_capacity(m_null);
    for _ in 0..m_null {
        let pick = rng.below(candidates.len());
        chosen.push(candidates.swap_remove(pick));
    }
    chosen
}

// ---------------------------------------------------------------------------
// Linear stability
// ---------------------------------------------------------------------------

/// Everything a stability decision rests on, in auditable form.
#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub empirical_rank: usize,
    pub model_rank_numeric: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_rank_closed_form: Option<usize>,
    /// Ordered singular values of the empirical tangent matrix.
    pub singular_values: Vec<f64>,
    pub rel_tol: f64,
    pub probe_count: usize,
}

impl RankReport {
    pub fn with_closed_form(mut self, rank: usize) -> Self {
        self.model_rank_closed_form = Some(rank);
        self
    }
}

/// Mean half-squared training error; the interpolation criterion.
pub fn interpolation_loss<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    data: &DatasetT<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        let r = forward(spec, theta, x)? - y;
        acc += r * r;
    }
    Ok(acc / (S::of(2.0) * S::of(data.len() as f64)))
}

/// Lemma-style certificate: an interpolating minimizer is linearly stable
/// iff its empirical rank over the training inputs equals its model rank.
/// Non-interpolating points are rejected up front.
pub fn is_linearly_stable<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    data: &DatasetT<S>,
    rel_tol: S,
    probe_budget: usize,
    seed: u64,
) -> Result<(bool, RankReport)> {
    let loss = interpolation_loss(spec, theta, data)?.to_f64_lossy();
    if loss >= INTERPOLATION_LOSS_TOL {
        return Err(Error::PreconditionViolated(format!(
            "parameter point does not interpolate the data: training loss {loss:e} >= {INTERPOLATION_LOSS_TOL:e}"
        )));
    }
    let t = tangent_matrix(spec, theta, data)?;
    let sigma = singular_values(&t.matrix)?;
    let emp = count_above(&sigma, rel_tol);
    let model_rank = model_rank_numeric(spec, theta, rel_tol, probe_budget, seed)?;
    let probe_count = match spec {
        ModelSpec::MatFac { d } => d * d,
        _ => 2 * probe_budget,
    };
    debug_assert!(emp <= data.len().min(model_rank.max(emp)));
    let report = RankReport {
        empirical_rank: emp,
        model_rank_numeric: model_rank,
        model_rank_closed_form: None,
        singular_values: sigma.iter().map(|s| s.to_f64_lossy()).collect(),
        rel_tol: rel_tol.to_f64_lossy(),
        probe_count,
    };
    Ok((emp == model_rank, report))
}

fn count_above<S: Scalar>(sigma: &[S], rel_tol: S) -> usize {
    let max = sigma[0];
    if max == S::zero() {
        return 0;
    }
    let cut = rel_tol * max;
    sigma.iter().take_while(|&&s| s > cut).count()
}

/// Smallest prefix length of `ordered_inputs` whose tangent rank reaches
/// the model rank at `theta`. `NotFound` if the whole sequence never does.
pub fn stability_onset<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    ordered_inputs: &[InputPointT<S>],
    rel_tol: S,
    seed: u64,
) -> Result<usize> {
    if ordered_inputs.is_empty() {
        return Err(invalid("stability onset needs a nonempty input sequence"));
    }
    let model_rank = model_rank_numeric(spec, theta, rel_tol, default_probe_budget(spec), seed)?;
    let full = tangent_over_inputs(spec, theta, ordered_inputs)?;
    for n in 1..=ordered_inputs.len() {
        let sub = submatrix_cols(&full.matrix, n);
        if numerical_rank(&sub, rel_tol)? == model_rank {
            return Ok(n);
        }
    }
    Err(Error::NotFound(format!(
        "rank never reaches the model rank {model_rank} within {} samples",
        ordered_inputs.len()
    )))
}

// ---------------------------------------------------------------------------
// Printable hierarchies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub stratum: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankTable {
    pub model: String,
    /// Rows are upper bounds (deep networks) rather than exact ranks.
    pub upper_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub rows: Vec<RankRow>,
}

impl RankTable {
    pub fn render_text(&self) -> String {
        let header = if self.upper_bound {
            "rank bound"
        } else {
            "rank"
        };
        let width = self
            .rows
            .iter()
            .map(|r| r.rank.to_string().len())
            .chain([header.len()])
            .max()
            .unwrap_or(4);
        let mut out = format!("model: {}\n", self.model);
        if let Some(note) = &self.note {
            out.push_str(&format!("note: {note}\n"));
        }
        out.push_str(&format!("{header:>width$} | stratum\n"));
        out.push_str(&format!("{}-+--------\n", "-".repeat(width)));
        for row in &self.rows {
            out.push_str(&format!("{:>width$} | {}\n", row.rank, row.stratum));
        }
        out
    }
}

/// The rank hierarchy of a model family at its given dimensions.
pub fn stratify(spec: &ModelSpec) -> Result<RankTable> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut note = None;
    let mut upper_bound = false;
    match spec {
        ModelSpec::ToyNl => {
            rows.push(RankRow {
                rank: 2,
                stratum: "a0 + a1*x1".into(),
            });
            rows.push(RankRow {
                rank: 3,
                stratum: "a0 + a1*x1 + a2*x2, a2 != 0".into(),
            });
        }
        ModelSpec::ToyLinear => {
            rows.push(RankRow {
                rank: 3,
                stratum: "every f* = a0 + a1*x1 + a2*x2 (constant rank)".into(),
            });
        }
        ModelSpec::MatFac { d } => {
            for r in 0..=*d {
                rows.push(RankRow {
                    rank: closed_form_rank(spec, &TargetDescriptor::MatFacTarget { r })?,
                    stratum: if r == 0 {
                        "zero matrix".into()
                    } else {
                        format!("rank(f*) = {r}")
                    },
                });
            }
        }
        ModelSpec::Fc2 { m, .. } => {
            rows.push(RankRow {
                rank: 0,
                stratum: "zero function".into(),
            });
            for k in 1..=*m {
                rows.push(RankRow {
                    rank: closed_form_rank(spec, &TargetDescriptor::Fc2Target { k })?,
                    stratum: format!("{k} distinct effective neurons"),
                });
            }
        }
        ModelSpec::Cnn1d { m, sharing, .. } | ModelSpec::Cnn2d { m, sharing, .. } => {
            let bias = match spec {
                ModelSpec::Cnn1d { bias, .. } => *bias,
                _ => false,
            };
            if !*sharing {
                note = Some(
                    "ranks assume m_null = 0; each zero output weight lowers the rank \
                     by the kernel weight count"
                        .into(),
                );
            }
            rows.push(RankRow {
                rank: 0,
                stratum: "zero function".into(),
            });
            for k in 1..=*m {
                let desc = TargetDescriptor::CnnTarget {
                    k,
                    m_null: 0,
                    sharing: *sharing,
                    fc: false,
                    bias,
                };
                rows.push(RankRow {
                    rank: closed_form_rank(spec, &desc)?,
                    stratum: format!("{k} distinct effective kernels"),
                });
            }
        }
        ModelSpec::DeepFc { widths } => {
            upper_bound = true;
            note = Some("bounds from null-unit embeddings of narrower networks".into());
            let hidden = &widths[1..widths.len() - 1];
            let d = widths[0];
            let combos: usize = hidden.iter().product();
            if combos <= 512 {
                let mut active = vec![1usize; hidden.len()];
                loop {
                    rows.push(deep_fc_row(d, &active));
                    // odometer over active widths
                    let mut carry = true;
                    for (a, &cap) in active.iter_mut().zip(hidden) {
                        if !carry {
                            break;
                        }
                        if *a < cap {
                            *a += 1;
                            carry = false;
                        } else {
                            *a = 1;
                        }
                    }
                    if carry {
                        break;
                    }
                }
                rows.sort_by(|a, b| a.rank.cmp(&b.rank).then(a.stratum.cmp(&b.stratum)));
            } else {
                rows.push(deep_fc_row(d, &vec![1; hidden.len()]));
                rows.push(deep_fc_row(d, hidden));
            }
        }
    }
    Ok(RankTable {
        model: spec.to_string(),
        upper_bound,
        note,
        rows,
    })
}

fn deep_fc_row(d: usize, active: &[usize]) -> RankRow {
    let mut rank = d * active[0];
    for w in active.windows(2) {
        rank += w[0] * w[1];
    }
    rank += active[active.len() - 1];
    let widths: Vec<String> = active.iter().map(|w| w.to_string()).collect();
    RankRow {
        rank,
        stratum: format!("functions of hidden widths ({})", widths.join(", ")),
    }
}

// ---------------------------------------------------------------------------
// Tangent-space rank law for matrix factorization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GammaCell {
    pub rank_a: usize,
    pub rank_b: usize,
    pub expected: usize,
    pub trials: usize,
    pub mismatches: usize,
}

/// Sweep all (rank A, rank B) pairs for side length `d`, checking that the
/// numerical rank of `[I (x) B; A^T (x) I]` equals
/// `d^2 - (d - rank A)(d - rank B)` on `trials` random rank-constrained
/// pairs each.
pub fn gamma_rank_sweep(
    d: usize,
    trials: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<Vec<GammaCell>> {
    if d == 0 || trials == 0 {
        return Err(invalid("gamma sweep needs d >= 1 and trials >= 1"));
    }
    let mut rng = Rng::new(seed);
    let mut cells = Vec::new();
    for ra in 0..=d {
        for rb in 0..=d {
            let expected = d * d - (d - ra) * (d - rb);
            let mut mismatches = 0;
            for _ in 0..trials {
                let a = MatrixT::<f64>::random_with_rank(d, ra, &mut rng);
                let b = MatrixT::<f64>::random_with_rank(d, rb, &mut rng);
                let g = gamma_matrix(&a, &b)?;
                if numerical_rank(&g, rel_tol)? != expected {
                    mismatches += 1;
                }
            }
            cells.push(GammaCell {
                rank_a: ra,
                rank_b: rb,
                expected,
                trials,
                mismatches,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_REL_TOL;

    type Dataset = DatasetT<f64>;

    fn vecp(v: &[f64]) -> InputPointT<f64> {
        InputPointT::Vector(v.to_vec())
    }

    fn toynl_theta(vals: [f64; 4]) -> ParamVectorT<f64> {
        ParamVectorT::new(&ModelSpec::ToyNl, vals.to_vec()).unwrap()
    }

    #[test]
    fn toynl_tangent_has_zero_rows_on_degenerate_stratum() {
        let spec = ModelSpec::ToyNl;
        let theta = toynl_theta([1.0, 1.0, 0.0, 0.0]);
        let data =
            Dataset::new(vec![vecp(&[0.5, -1.0]), vecp(&[2.0, 0.3])], vec![1.5, 3.0]).unwrap();
        let t = tangent_matrix(&spec, &theta, &data).unwrap();
        assert_eq!((t.param_count(), t.sample_count()), (4, 2));
        for j in 0..2 {
            assert_eq!(t.matrix.get(2, j), 0.0);
            assert_eq!(t.matrix.get(3, j), 0.0);
        }
        assert_eq!(
            empirical_rank(&spec, &theta, &data, DEFAULT_REL_TOL).unwrap(),
            2
        );
    }

    #[test]
    fn single_input_tangent_is_the_gradient() {
        let spec = ModelSpec::ToyNl;
        let theta = toynl_theta([0.3, -0.2, 0.8, 1.1]);
        let x = vecp(&[2.0, -1.0]);
        let data = Dataset::new(vec![x.clone()], vec![0.0]).unwrap();
        let t = tangent_matrix(&spec, &theta, &data).unwrap();
        let g = grad_param(&spec, &theta, &x).unwrap();
        for i in 0..4 {
            assert_eq!(t.matrix.get(i, 0), g[i]);
        }
    }

    #[test]
    fn empirical_rank_is_bounded_by_sample_count() {
        let spec = ModelSpec::Fc2 {
            d: 3,
            m: 4,
            bias: false,
        };
        let mut rng = Rng::new(3);
        let theta = ParamVectorT::from_raw(
            (0..spec.param_count())
                .map(|_| rng.standard_normal())
                .collect(),
        );
        for n in 1..=5 {
            let inputs: Vec<_> = (0..n).map(|_| spec.sample_input(&mut rng)).collect();
            let data = Dataset::new(inputs, vec![0.0; n]).unwrap();
            assert!(empirical_rank(&spec, &theta, &data, DEFAULT_REL_TOL).unwrap() <= n);
        }
    }

    #[test]
    fn matfac_full_tangent_shape_and_rank() {
        let d = 4;
        let spec = ModelSpec::MatFac { d };
        let mut rng = Rng::new(7);
        // rank-(1,1) factorization: empirical rank over all entries is 7
        let theta =
            sample_stratum_point::<f64>(&spec, &TargetDescriptor::MatFacTarget { r: 1 }, &mut rng)
                .unwrap();
        let inputs = probe_inputs::<f64>(&spec, 0, &mut rng);
        let data = Dataset::new(inputs, vec![0.0; d * d]).unwrap();
        let t = tangent_matrix(&spec, &theta, &data).unwrap();
        assert_eq!((t.param_count(), t.sample_count()), (32, 16));
        assert_eq!(
            empirical_rank(&spec, &theta, &data, DEFAULT_REL_TOL).unwrap(),
            7
        );
    }

    #[test]
    fn toynl_model_rank_is_adaptive() {
        let spec = ModelSpec::ToyNl;
        let on = toynl_theta([0.2, 0.4, 0.7, -0.5]);
        let off = toynl_theta([0.2, 0.4, 0.0, 0.0]);
        assert_eq!(
            model_rank_numeric(&spec, &on, DEFAULT_REL_TOL, 16, 5).unwrap(),
            3
        );
        assert_eq!(
            model_rank_numeric(&spec, &off, DEFAULT_REL_TOL, 16, 5).unwrap(),
            2
        );
    }

    #[test]
    fn matfac_rank2_point_has_rank_12() {
        let spec = ModelSpec::MatFac { d: 4 };
        let mut rng = Rng::new(13);
        let theta =
            sample_stratum_point::<f64>(&spec, &TargetDescriptor::MatFacTarget { r: 2 }, &mut rng)
                .unwrap();
        assert_eq!(
            model_rank_numeric(&spec, &theta, DEFAULT_REL_TOL, 1, 0).unwrap(),
            12
        );
    }

    #[test]
    fn fc2_generic_stratum_matches_closed_form() {
        for (d, k) in [(3usize, 1usize), (3, 2), (5, 3)] {
            let spec = ModelSpec::Fc2 {
                d,
                m: 3,
                bias: false,
            };
            let desc = TargetDescriptor::Fc2Target { k };
            let expected = closed_form_rank(&spec, &desc).unwrap();
            assert_eq!(expected, k * (d + 1));
            let mut rng = Rng::new(100 + (d * 10 + k) as u64);
            let theta = sample_stratum_point::<f64>(&spec, &desc, &mut rng).unwrap();
            let got = model_rank_numeric(
                &spec,
                &theta,
                DEFAULT_REL_TOL,
                default_probe_budget(&spec),
                42,
            )
            .unwrap();
            assert_eq!(got, expected, "d={d} k={k}");
        }
    }

    #[test]
    fn closed_form_examples_from_the_tables() {
        let matfac = ModelSpec::MatFac { d: 4 };
        let ranks: Vec<usize> = (1..=4)
            .map(|r| closed_form_rank(&matfac, &TargetDescriptor::MatFacTarget { r }).unwrap())
            .collect();
        assert_eq!(ranks, vec![7, 12, 15, 16]);

        let cnn = ModelSpec::Cnn1d {
            d: 5,
            s: 3,
            m: 1,
            sharing: true,
            bias: true,
        };
        let sharing = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: true,
            fc: false,
            bias: true,
        };
        let nosharing = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: false,
            fc: false,
            bias: true,
        };
        let fc = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: false,
            fc: true,
            bias: true,
        };
        assert_eq!(closed_form_rank(&cnn, &sharing).unwrap(), 7);
        assert_eq!(closed_form_rank(&cnn, &nosharing).unwrap(), 15);
        assert_eq!(closed_form_rank(&cnn, &fc).unwrap(), 21);

        let big = ModelSpec::Cnn2d {
            d: 28,
            s: 3,
            m: 1,
            sharing: true,
        };
        let sharing2 = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: true,
            fc: false,
            bias: false,
        };
        let nosharing2 = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: false,
            fc: false,
            bias: false,
        };
        let fc2 = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: false,
            fc: true,
            bias: false,
        };
        assert_eq!(closed_form_rank(&big, &sharing2).unwrap(), 685);
        assert_eq!(closed_form_rank(&big, &nosharing2).unwrap(), 6760);
        assert_eq!(closed_form_rank(&big, &fc2).unwrap(), 530660);
    }

    #[test]
    fn closed_form_rejects_mismatches() {
        let matfac = ModelSpec::MatFac { d: 4 };
        assert!(closed_form_rank(&matfac, &TargetDescriptor::MatFacTarget { r: 5 }).is_err());
        assert!(closed_form_rank(&matfac, &TargetDescriptor::Fc2Target { k: 1 }).is_err());
        let deep = ModelSpec::DeepFc {
            widths: vec![3, 2, 1],
        };
        assert!(closed_form_rank(&deep, &TargetDescriptor::Fc2Target { k: 1 }).is_err());
        let cnn2d = ModelSpec::Cnn2d {
            d: 6,
            s: 3,
            m: 1,
            sharing: true,
        };
        let biased = TargetDescriptor::CnnTarget {
            k: 1,
            m_null: 0,
            sharing: true,
            fc: false,
            bias: true,
        };
        assert!(closed_form_rank(&cnn2d, &biased).is_err());
    }

    #[test]
    fn stability_certificate_on_the_toy_model() {
        let spec = ModelSpec::ToyNl;
        let theta = toynl_theta([1.0, 1.0, 0.0, 0.0]);
        // two generic points of the target 1 + x1
        let xs = [vecp(&[0.7, -0.4]), vecp(&[-1.3, 0.9])];
        let ys: Vec<f64> = [0.7, -1.3].iter().map(|x1| 1.0 + x1).collect();
        let data = Dataset::new(xs.to_vec(), ys.clone()).unwrap();
        let (stable, report) =
            is_linearly_stable(&spec, &theta, &data, DEFAULT_REL_TOL, 16, 3).unwrap();
        assert!(stable);
        assert_eq!(report.empirical_rank, 2);
        assert_eq!(report.model_rank_numeric, 2);

        // with a single point the empirical rank falls short
        let one = Dataset::new(vec![xs[0].clone()], vec![ys[0]]).unwrap();
        let (stable, report) =
            is_linearly_stable(&spec, &theta, &one, DEFAULT_REL_TOL, 16, 3).unwrap();
        assert!(!stable);
        assert_eq!(report.empirical_rank, 1);
    }

    #[test]
    fn stability_requires_interpolation() {
        let spec = ModelSpec::ToyNl;
        let theta = toynl_theta([1.0, 1.0, 0.0, 0.0]);
        let data = Dataset::new(vec![vecp(&[0.5, 0.5])], vec![99.0]).unwrap();
        let err = is_linearly_stable(&spec, &theta, &data, DEFAULT_REL_TOL, 16, 3).unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated(_)));
    }

    #[test]
    fn onset_is_bounded_below_by_model_rank() {
        let d = 4;
        let spec = ModelSpec::MatFac { d };
        let mut rng = Rng::new(19);
        let theta =
            sample_stratum_point::<f64>(&spec, &TargetDescriptor::MatFacTarget { r: 1 }, &mut rng)
                .unwrap();
        let inputs = probe_inputs::<f64>(&spec, 0, &mut rng); // row-major order
        let n_t = stability_onset(&spec, &theta, &inputs, DEFAULT_REL_TOL, 0).unwrap();
        let model_rank = model_rank_numeric(&spec, &theta, DEFAULT_REL_TOL, 1, 0).unwrap();
        assert!(n_t >= model_rank);
    }

    #[test]
    fn onset_not_found_when_sequence_is_too_poor() {
        let d = 3;
        let spec = ModelSpec::MatFac { d };
        let mut rng = Rng::new(23);
        let theta =
            sample_stratum_point::<f64>(&spec, &TargetDescriptor::MatFacTarget { r: 2 }, &mut rng)
                .unwrap();
        // only three entries: rank <= 3 < 2*2*3 - 4 = 8
        let inputs = vec![
            InputPointT::Entry { i: 0, j: 0 },
            InputPointT::Entry { i: 0, j: 1 },
            InputPointT::Entry { i: 1, j: 0 },
        ];
        let err = stability_onset(&spec, &theta, &inputs, DEFAULT_REL_TOL, 0).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn stratify_tables() {
        let t = stratify(&ModelSpec::MatFac { d: 4 }).unwrap();
        let ranks: Vec<usize> = t.rows.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, vec![0, 7, 12, 15, 16]);
        assert!(!t.upper_bound);

        let toy = stratify(&ModelSpec::ToyNl).unwrap();
        assert_eq!(toy.rows.len(), 2);
        assert_eq!(toy.rows[0].rank, 2);
        assert_eq!(toy.rows[1].rank, 3);

        let deep = stratify(&ModelSpec::DeepFc {
            widths: vec![4, 3, 1],
        })
        .unwrap();
        assert!(deep.upper_bound);
        // widths (4, m1', 1): bound 4*m1' + m1'
        let top = deep.rows.iter().map(|r| r.rank).max().unwrap();
        assert_eq!(top, 4 * 3 + 3);

        let text = t.render_text();
        assert!(text.contains("rank(f*) = 1"));
        assert!(text.contains('7'));
    }

    #[test]
    fn gamma_sweep_small_case_all_match() {
        let cells = gamma_rank_sweep(2, 5, DEFAULT_REL_TOL, 77).unwrap();
        assert_eq!(cells.len(), 9);
        for cell in cells {
            assert_eq!(cell.mismatches, 0, "({}, {})", cell.rank_a, cell.rank_b);
        }
    }

    #[test]
    fn dataset_rejects_duplicate_entries() {
        let inputs = vec![
            InputPointT::Entry { i: 0, j: 0 },
            InputPointT::Entry { i: 0, j: 0 },
        ];
        assert!(DatasetT::new(inputs, vec![1.0, 1.0]).is_err());
    }
}
