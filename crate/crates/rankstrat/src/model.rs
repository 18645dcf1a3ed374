//! Architecture descriptors, canonical parameter layouts, and inputs.
//!
//! Every model maps a flat parameter vector to a scalar-output function.
//! The flattening order is frozen here because tangent-matrix rows must
//! mean the same thing everywhere:
//!
//! * `ToyNl` — `[t0, t1, t2, t3]`, f = t0 + t1*x1 + t2*t3*x2.
//! * `ToyLinear` — `[t0, t1, t2]`, f = t0 + t1*x1 + t2*x2.
//! * `MatFac { d }` — A row-major, then B row-major; input is an entry
//!   index (i, j) and the output is (A B)_{ij}.
//! * `Fc2 { d, m, bias }` — per neuron: input weights (d), bias (if any),
//!   output weight. f = sum_i a_i tanh(w_i . x + b_i).
//! * `Cnn1d { d, s, m, sharing, bias }` — stride 1, no padding, so there
//!   are `p = d+1-s` positions. With sharing, per kernel: taps (s), shared
//!   bias (if any), output weights (p). Without sharing, per kernel and
//!   position: taps (s), bias (if any), output weight. Position `i` reads
//!   the window `x[i..i+s]` against reversed taps: tap 0 multiplies
//!   `x[i+s-1]`.
//! * `Cnn2d { d, s, m, sharing }` — the two-dimensional analogue on d x d
//!   images with s x s kernels and `(d+1-s)^2` positions, no bias.
//! * `DeepFc { widths }` — widths `[m0, .., mL]` with `mL = 1`; layer
//!   matrices row-major in order, tanh between layers, linear output.

use crate::error::{invalid, Result};
use crate::matrix::MatrixT;
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    ToyNl,
    ToyLinear,
    MatFac {
        d: usize,
    },
    Fc2 {
        d: usize,
        m: usize,
        bias: bool,
    },
    Cnn1d {
        d: usize,
        s: usize,
        m: usize,
        sharing: bool,
        bias: bool,
    },
    Cnn2d {
        d: usize,
        s: usize,
        m: usize,
        sharing: bool,
    },
    DeepFc {
        widths: Vec<usize>,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::ToyNl | ModelSpec::ToyLinear => Ok(()),
            ModelSpec::MatFac { d } => {
                if *d == 0 {
                    return Err(invalid("matfac: d must be >= 1"));
                }
                Ok(())
            }
            ModelSpec::Fc2 { d, m, .. } => {
                if *d == 0 || *m == 0 {
                    return Err(invalid("fc2: d and m must be >= 1"));
                }
                Ok(())
            }
            ModelSpec::Cnn1d { d, s, m, .. } | ModelSpec::Cnn2d { d, s, m, .. } => {
                if *d == 0 || *s == 0 || *m == 0 {
                    return Err(invalid("cnn: d, s and m must be >= 1"));
                }
                if s > d {
                    return Err(invalid(format!(
                        "cnn: kernel size {s} exceeds input size {d}"
                    )));
                }
                Ok(())
            }
            ModelSpec::DeepFc { widths } => {
                if widths.len() < 2 {
                    return Err(invalid("deepfc: need at least input and output widths"));
                }
                if widths.iter().any(|&w| w == 0) {
                    return Err(invalid("deepfc: widths must be >= 1"));
                }
                if *widths.last().unwrap() != 1 {
                    return Err(invalid("deepfc: output width must be 1"));
                }
                Ok(())
            }
        }
    }

    /// Number of convolution positions along one axis (`d + 1 - s`).
    pub fn conv_positions(&self) -> Option<usize> {
        match self {
            ModelSpec::Cnn1d { d, s, .. } | ModelSpec::Cnn2d { d, s, .. } => Some(d + 1 - s),
            _ => None,
        }
    }

    /// Exact parameter count for the canonical layout.
    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::ToyNl => 4,
            ModelSpec::ToyLinear => 3,
            ModelSpec::MatFac { d } => 2 * d * d,
            ModelSpec::Fc2 { d, m, bias } => m * (d + 1 + usize::from(*bias)),
            ModelSpec::Cnn1d {
                d,
                s,
                m,
                sharing,
                bias,
            } => {
                let p = d + 1 - s;
                if *sharing {
                    m * (s + usize::from(*bias) + p)
                } else {
                    m * p * (s + usize::from(*bias) + 1)
                }
            }
            ModelSpec::Cnn2d { d, s, m, sharing } => {
                let p2 = (d + 1 - s) * (d + 1 - s);
                if *sharing {
                    m * (s * s + p2)
                } else {
                    m * p2 * (s * s + 1)
                }
            }
            ModelSpec::DeepFc { widths } => widths.windows(2).map(|w| w[0] * w[1]).sum(),
        }
    }

    /// Dimension of a vector input, where applicable.
    pub fn input_len(&self) -> Option<usize> {
        match self {
            ModelSpec::ToyNl | ModelSpec::ToyLinear => Some(2),
            ModelSpec::Fc2 { d, .. } | ModelSpec::Cnn1d { d, .. } => Some(*d),
            ModelSpec::DeepFc { widths } => Some(widths[0]),
            ModelSpec::MatFac { .. } | ModelSpec::Cnn2d { .. } => None,
        }
    }

    /// A generic input for rank probing: standard-normal vector or image,
    /// or a uniform entry index for matrix factorization.
    pub fn sample_input<S: Scalar>(&self, rng: &mut Rng) -> InputPointT<S> {
        match self {
            ModelSpec::MatFac { d } => InputPointT::Entry {
                i: rng.below(*d),
                j: rng.below(*d),
            },
            ModelSpec::Cnn2d { d, .. } => InputPointT::Image(MatrixT::random_normal(*d, *d, rng)),
            _ => {
                let len = self.input_len().expect("vector-input family");
                InputPointT::Vector((0..len).map(|_| S::of(rng.standard_normal())).collect())
            }
        }
    }

    /// Parse the frozen spec-string grammar `family:key=val,key=val`.
    /// Boolean keys (`bias`, `sharing`) may appear bare. `deepfc` takes
    /// `widths=` with dash-separated layer sizes, e.g. `deepfc:widths=5-4-1`.
    pub fn parse(text: &str) -> Result<ModelSpec> {
        let text = text.trim();
        let (family, rest) = match text.split_once(':') {
            Some((f, r)) => (f.trim(), r.trim()),
            None => (text, ""),
        };
        let mut keys: Vec<(String, String)> = Vec::new();
        if !rest.is_empty() {
            for item in rest.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    continue;
                }
                match item.split_once('=') {
                    Some((k, v)) => keys.push((k.trim().to_string(), v.trim().to_string())),
                    None => keys.push((item.to_string(), "true".to_string())),
                }
            }
        }
        let get_usize = |name: &str| -> Result<Option<usize>> {
            for (k, v) in &keys {
                if k == name {
                    return v
                        .parse::<usize>()
                        .map(Some)
                        .map_err(|_| invalid(format!("spec key {name}: bad integer {v:?}")));
                }
            }
            Ok(None)
        };
        let need_usize = |name: &str| -> Result<usize> {
            get_usize(name)?.ok_or_else(|| invalid(format!("{family}: missing key {name}")))
        };
        let get_bool = |name: &str| -> Result<bool> {
            for (k, v) in &keys {
                if k == name {
                    return match v.as_str() {
                        "true" | "1" => Ok(true),
                        "false" | "0" => Ok(false),
                        other => Err(invalid(format!("spec key {name}: bad flag {other:?}"))),
                    };
                }
            }
            Ok(false)
        };
        let known = |allowed: &[&str]| -> Result<()> {
            for (k, _) in &keys {
                if !allowed.contains(&k.as_str()) {
                    return Err(invalid(format!("{family}: unknown key {k:?}")));
                }
            }
            Ok(())
        };
        let spec = match family {
            "toynl" => {
                known(&[])?;
                ModelSpec::ToyNl
            }
            "toylinear" => {
                known(&[])?;
                ModelSpec::ToyLinear
            }
            "matfac" => {
                known(&["d"])?;
                ModelSpec::MatFac {
                    d: need_usize("d")?,
                }
            }
            "fc2" => {
                known(&["d", "m", "bias"])?;
                ModelSpec::Fc2 {
                    d: need_usize("d")?,
                    m: need_usize("m")?,
                    bias: get_bool("bias")?,
                }
            }
            "cnn1d" => {
                known(&["d", "s", "m", "sharing", "bias"])?;
                ModelSpec::Cnn1d {
                    d: need_usize("d")?,
                    s: need_usize("s")?,
                    m: need_usize("m")?,
                    sharing: get_bool("sharing")?,
                    bias: get_bool("bias")?,
                }
            }
            "cnn2d" => {
                known(&["d", "s", "m", "sharing"])?;
                ModelSpec::Cnn2d {
                    d: need_usize("d")?,
                    s: need_usize("s")?,
                    m: need_usize("m")?,
                    sharing: get_bool("sharing")?,
                }
            }
            "deepfc" => {
                known(&["widths"])?;
                let raw = keys
                    .iter()
                    .find(|(k, _)| k == "widths")
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| invalid("deepfc: missing key widths"))?;
                let widths = raw
                    .split('-')
                    .map(|w| {
                        w.trim()
                            .parse::<usize>()
                            .map_err(|_| invalid(format!("deepfc: bad width {w:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ModelSpec::DeepFc { widths }
            }
            other => return Err(invalid(format!("unknown model family {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelSpec::ToyNl => write!(f, "toynl"),
            ModelSpec::ToyLinear => write!(f, "toylinear"),
            ModelSpec::MatFac { d } => write!(f, "matfac:d={d}"),
            ModelSpec::Fc2 { d, m, bias } => {
                write!(f, "fc2:d={d},m={m}")?;
                if *bias {
                    write!(f, ",bias")?;
                }
                Ok(())
            }
            ModelSpec::Cnn1d {
                d,
                s,
                m,
                sharing,
                bias,
            } => {
                write!(f, "cnn1d:d={d},s={s},m={m}")?;
                if *sharing {
                    write!(f, ",sharing")?;
                }
                if *bias {
                    write!(f, ",bias")?;
                }
                Ok(())
            }
            ModelSpec::Cnn2d { d, s, m, sharing } => {
                write!(f, "cnn2d:d={d},s={s},m={m}")?;
                if *sharing {
                    write!(f, ",sharing")?;
                }
                Ok(())
            }
            ModelSpec::DeepFc { widths } => {
                let joined: Vec<String> = widths.iter().map(|w| w.to_string()).collect();
                write!(f, "deepfc:widths={}", joined.join("-"))
            }
        }
    }
}

/// Flat parameter vector in the canonical layout of its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVectorT<S> {
    values: Vec<S>,
}

impl<S: Scalar> ParamVectorT<S> {
    pub fn new(spec: &ModelSpec, values: Vec<S>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(invalid(format!(
                "parameter vector for {spec} needs {} entries, got {}",
                spec.param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("parameter vector entries must be finite"));
        }
        Ok(ParamVectorT { values })
    }

    /// No shape/finiteness checks; internal hot paths only.
    pub fn from_raw(values: Vec<S>) -> Self {
        ParamVectorT { values }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamVectorT {
            values: vec![S::zero(); spec.param_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputPointT<S> {
    /// Vector input of the family's input length.
    Vector(Vec<S>),
    /// Square image input (2-D CNN).
    Image(MatrixT<S>),
    /// Zero-based entry index of a matrix-factorization output.
    Entry { i: usize, j: usize },
}

/// Null-neuron widening: hidden units added on top of the narrow model get
/// zero input weights, biases, and output weights, so the wide model's
/// output function equals the narrow model's everywhere.
pub fn embed_wider<S: Scalar>(
    narrow: &ModelSpec,
    theta: &ParamVectorT<S>,
    wide: &ModelSpec,
) -> Result<ParamVectorT<S>> {
    if theta.len() != narrow.param_count() {
        return Err(invalid("embed_wider: parameter length mismatch"));
    }
    let incompatible = || invalid(format!("embed_wider: cannot embed {narrow} into {wide}"));
    match (narrow, wide) {
        (
            ModelSpec::Fc2 { d, m, bias },
            ModelSpec::Fc2 {
                d: dw,
                m: mw,
                bias: bw,
            },
        ) if d == dw && bias == bw && mw >= m => Ok(pad_blocks(theta, wide.param_count())),
        (
            ModelSpec::Cnn1d {
                d,
                s,
                m,
                sharing,
                bias,
            },
            ModelSpec::Cnn1d {
                d: dw,
                s: sw,
                m: mw,
                sharing: shw,
                bias: bw,
            },
        ) if d == dw && s == sw && sharing == shw && bias == bw && mw >= m => {
            Ok(pad_blocks(theta, wide.param_count()))
        }
        (
            ModelSpec::Cnn2d { d, s, m, sharing },
            ModelSpec::Cnn2d {
                d: dw,
                s: sw,
                m: mw,
                sharing: shw,
            },
        ) if d == dw && s == sw && sharing == shw && mw >= m => {
            Ok(pad_blocks(theta, wide.param_count()))
        }
        (ModelSpec::DeepFc { widths: wn }, ModelSpec::DeepFc { widths: ww }) => {
            if wn.len() != ww.len()
                || wn[0] != ww[0]
                || wn.last() != ww.last()
                || wn.iter().zip(ww).any(|(a, b)| a > b)
            {
                return Err(incompatible());
            }
            let mut out = vec![S::zero(); wide.param_count()];
            let src = theta.as_slice();
            let mut src_off = 0;
            let mut dst_off = 0;
            for l in 1..wn.len() {
                let (rn, cn) = (wn[l], wn[l - 1]);
                let (rw, cw) = (ww[l], ww[l - 1]);
                for i in 0..rn {
                    for j in 0..cn {
                        out[dst_off + i * cw + j] = src[src_off + i * cn + j];
                    }
                }
                src_off += rn * cn;
                dst_off += rw * cw;
            }
            Ok(ParamVectorT::from_raw(out))
        }
        _ => Err(incompatible()),
    }
}

/// All per-unit layouts above are contiguous blocks in unit order, so
/// widening by null units is copy-then-zero-pad.
fn pad_blocks<S: Scalar>(theta: &ParamVectorT<S>, wide_len: usize) -> ParamVectorT<S> {
    let mut values = theta.as_slice().to_vec();
    values.resize(wide_len, S::zero());
    ParamVectorT::from_raw(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(ModelSpec::ToyNl.param_count(), 4);
        assert_eq!(ModelSpec::ToyLinear.param_count(), 3);
        assert_eq!(ModelSpec::MatFac { d: 4 }.param_count(), 32);
        assert_eq!(
            ModelSpec::Fc2 {
                d: 5,
                m: 3,
                bias: true
            }
            .param_count(),
            21
        );
        // 1x / 100x scaling of the three s5-style architectures.
        let cnn = ModelSpec::Cnn1d {
            d: 5,
            s: 3,
            m: 1,
            sharing: true,
            bias: true,
        };
        let nos = ModelSpec::Cnn1d {
            d: 5,
            s: 3,
            m: 1,
            sharing: false,
            bias: true,
        };
        assert_eq!(cnn.param_count(), 7);
        assert_eq!(nos.param_count(), 15);
        let cnn100 = ModelSpec::Cnn1d {
            d: 5,
            s: 3,
            m: 100,
            sharing: true,
            bias: true,
        };
        assert_eq!(cnn100.param_count(), 700);
        assert_eq!(
            ModelSpec::DeepFc {
                widths: vec![5, 4, 3, 1]
            }
            .param_count(),
            5 * 4 + 4 * 3 + 3
        );
    }

    #[test]
    fn parse_round_trips() {
        for text in [
            "toynl",
            "toylinear",
            "matfac:d=4",
            "fc2:d=5,m=3,bias",
            "fc2:d=3,m=2",
            "cnn1d:d=5,s=3,m=1,sharing,bias",
            "cnn1d:d=5,s=3,m=2",
            "cnn2d:d=6,s=3,m=1,sharing",
            "deepfc:widths=5-4-1",
        ] {
            let spec = ModelSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(ModelSpec::parse(&spec.to_string()).unwrap(), spec);
        }
    }

    #[test]
    fn parse_rejects_malformed_specs() {
        assert!(ModelSpec::parse("matfac").is_err());
        assert!(ModelSpec::parse("matfac:d=0").is_err());
        assert!(ModelSpec::parse("cnn1d:d=3,s=5,m=1").is_err());
        assert!(ModelSpec::parse("fc2:d=5,m=3,extra=1").is_err());
        assert!(ModelSpec::parse("deepfc:widths=5-4-2").is_err());
        assert!(ModelSpec::parse("mystery:d=1").is_err());
    }

    #[test]
    fn param_vector_checks_length_and_finiteness() {
        let spec = ModelSpec::ToyNl;
        assert!(ParamVectorT::<f64>::new(&spec, vec![0.0; 3]).is_err());
        assert!(ParamVectorT::new(&spec, vec![0.0, 0.0, f64::INFINITY, 0.0]).is_err());
        assert!(ParamVectorT::new(&spec, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn embed_rejects_fixed_size_families() {
        let spec = ModelSpec::MatFac { d: 4 };
        let theta = ParamVectorT::<f64>::zeros(&spec);
        assert!(embed_wider(&spec, &theta, &ModelSpec::MatFac { d: 5 }).is_err());
        assert!(embed_wider(
            &ModelSpec::ToyNl,
            &ParamVectorT::<f64>::zeros(&ModelSpec::ToyNl),
            &ModelSpec::ToyNl
        )
        .is_err());
    }

    #[test]
    fn embed_rejects_incompatible_geometry() {
        let narrow = ModelSpec::Fc2 {
            d: 5,
            m: 2,
            bias: false,
        };
        let theta = ParamVectorT::<f64>::zeros(&narrow);
        assert!(embed_wider(
            &narrow,
            &theta,
            &ModelSpec::Fc2 {
                d: 5,
                m: 1,
                bias: false
            }
        )
        .is_err());
        assert!(embed_wider(
            &narrow,
            &theta,
            &ModelSpec::Fc2 {
                d: 4,
                m: 3,
                bias: false
            }
        )
        .is_err());
        assert!(embed_wider(
            &narrow,
            &theta,
            &ModelSpec::Fc2 {
                d: 5,
                m: 3,
                bias: true
            }
        )
        .is_err());
    }
}
