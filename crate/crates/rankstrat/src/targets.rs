//! Built-in experiment targets: toy linear functions on R^2, eight 4x4
//! matrices of known exact rank, designed sampling sequences and masks for
//! the matrix-completion studies, and a three-neuron shift-structured
//! network target.
//!
//! Entry indices in the constant tables below are 1-based (the natural
//! convention for printed matrices); the loaders convert to 0-based
//! [`InputPointT::Entry`] indices and drop any repeated entry, keeping the
//! first occurrence.

use crate::error::{invalid, Result};
use crate::matrix::MatrixT;
use crate::model::{InputPointT, ModelSpec, ParamVectorT};
use crate::rank::DatasetT;
use crate::scalar::Scalar;
use crate::svd::{numerical_rank, svd};
use crate::DEFAULT_REL_TOL;

/// Coefficients of a toy target `a0 + a1*x1 + a2*x2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ToyCoeffs {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        self.a0 + self.a1 * x1 + self.a2 * x2
    }

    pub fn has_x2(&self) -> bool {
        self.a2 != 0.0
    }
}

const TOY_TARGETS: &[(&str, ToyCoeffs)] = &[
    (
        "1",
        ToyCoeffs {
            a0: 1.0,
            a1: 0.0,
            a2: 0.0,
        },
    ),
    (
        "x1",
        ToyCoeffs {
            a0: 0.0,
            a1: 1.0,
            a2: 0.0,
        },
    ),
    (
        "1+x1",
        ToyCoeffs {
            a0: 1.0,
            a1: 1.0,
            a2: 0.0,
        },
    ),
    (
        "x2",
        ToyCoeffs {
            a0: 0.0,
            a1: 0.0,
            a2: 1.0,
        },
    ),
    (
        "x1+x2",
        ToyCoeffs {
            a0: 0.0,
            a1: 1.0,
            a2: 1.0,
        },
    ),
    (
        "1+x2",
        ToyCoeffs {
            a0: 1.0,
            a1: 0.0,
            a2: 1.0,
        },
    ),
    (
        "1+x1+x2",
        ToyCoeffs {
            a0: 1.0,
            a1: 1.0,
            a2: 1.0,
        },
    ),
];

/// (name, expected matrix rank, entries)
const MATRIX_TARGETS: &[(&str, usize, [[f64; 4]; 4])] = &[
    (
        "M1",
        1,
        [
            [1.0, 0.3, 0.7, -0.4],
            [2.0, 0.6, 1.4, -0.8],
            [4.0, 1.2, 2.8, -1.6],
            [7.0, 2.1, 4.9, -2.8],
        ],
    ),
    (
        "M2",
        1,
        [
            [4.0, 0.6, 1.8, 0.8],
            [6.0, 0.9, 2.7, 1.2],
            [8.0, 1.2, 3.6, 1.6],
            [18.0, 2.7, 8.1, 3.6],
        ],
    ),
    (
        "M3",
        2,
        [
            [-1.8, 2.4, 7.7, -5.3],
            [0.4, 1.8, 5.4, -3.6],
            [3.2, 1.8, 4.8, -3.0],
            [6.6, 2.4, 5.9, -3.5],
        ],
    ),
    (
        "M4",
        2,
        [
            [7.6, 3.3, 19.8, -7.3],
            [7.6, 2.1, 10.7, -2.4],
            [8.8, 1.8, 7.6, -0.2],
            [19.2, 3.6, 14.1, 0.9],
        ],
    ),
    (
        "M5",
        3,
        [
            [-1.8, 2.4, 7.7, -5.3],
            [0.4, 1.8, 5.4, -3.6],
            [3.2, 1.8, 4.8, -3.0],
            [6.6, 2.4, 5.9, 3.5],
        ],
    ),
    (
        "M6",
        3,
        [
            [8.5, 9.3, 22.5, -6.1],
            [8.2, 6.1, 12.5, -1.6],
            [11.5, 19.8, 15.7, 3.4],
            [20.4, 11.6, 17.7, 2.5],
        ],
    ),
    (
        "M7",
        4,
        [
            [3.6, -1.2, 8.1, -3.5],
            [8.1, -3.5, 3.6, -1.2],
            [9.1, -1.7, 11.4, -0.6],
            [11.4, -0.6, 9.1, -1.7],
        ],
    ),
    (
        "M8",
        4,
        [
            [12.1, 17.3, 24.1, -4.9],
            [16.3, 24.1, 16.1, 1.1],
            [14.2, 25.8, 16.9, 4.3],
            [22.2, 15.6, 18.5, 3.1],
        ],
    ),
];

/// Six designed sampling orders over the 4x4 entry grid, 1-based. The
/// third lists one entry twice; the loader keeps its first occurrence,
/// leaving a 15-entry order.
const SAMPLING_SEQUENCES: &[&[(usize, usize)]] = &[
    &[
        (3, 1),
        (4, 3),
        (2, 1),
        (1, 3),
        (2, 4),
        (4, 1),
        (1, 1),
        (1, 2),
        (4, 2),
        (4, 4),
        (3, 2),
        (3, 4),
        (3, 3),
        (2, 2),
        (2, 3),
        (1, 4),
    ],
    &[
        (3, 4),
        (2, 1),
        (2, 3),
        (4, 3),
        (4, 1),
        (4, 4),
        (1, 1),
        (3, 3),
        (1, 2),
        (1, 4),
        (1, 3),
        (2, 4),
        (3, 2),
        (2, 2),
        (3, 1),
        (4, 2),
    ],
    &[
        (2, 4),
        (3, 3),
        (3, 1),
        (4, 4),
        (4, 3),
        (3, 4),
        (1, 3),
        (1, 4),
        (2, 3),
        (3, 3),
        (1, 1),
        (1, 2),
        (4, 2),
        (2, 2),
        (2, 1),
        (4, 1),
    ],
    &[
        (4, 4),
        (2, 3),
        (4, 2),
        (1, 2),
        (1, 4),
        (3, 2),
        (4, 1),
        (3, 1),
        (1, 1),
        (3, 4),
        (1, 3),
        (2, 2),
        (2, 4),
        (2, 1),
        (3, 3),
        (4, 3),
    ],
    &[
        (2, 4),
        (3, 4),
        (4, 1),
        (1, 2),
        (2, 2),
        (4, 4),
        (1, 1),
        (3, 1),
        (3, 2),
        (4, 2),
        (2, 1),
        (1, 3),
        (4, 3),
        (3, 3),
        (2, 3),
        (1, 4),
    ],
    &[
        (4, 3),
        (4, 4),
        (2, 1),
        (3, 4),
        (3, 3),
        (3, 1),
        (2, 3),
        (1, 1),
        (4, 1),
        (2, 4),
        (1, 4),
        (1, 3),
        (1, 2),
        (2, 2),
        (3, 2),
        (4, 2),
    ],
];

/// Fixed masks for the spectrum study, 1-based, for n = 7, 12, 15.
const SPECTRUM_MASKS: &[(usize, &[(usize, usize)])] = &[
    (7, &[(1, 1), (1, 2), (1, 3), (1, 4), (2, 2), (3, 3), (4, 4)]),
    (
        12,
        &[
            (1, 1),
            (1, 2),
            (1, 3),
            (1, 4),
            (2, 1),
            (2, 2),
            (2, 3),
            (2, 4),
            (3, 3),
            (3, 4),
            (4, 3),
            (4, 4),
        ],
    ),
    (
        15,
        &[
            (1, 1),
            (1, 2),
            (1, 3),
            (1, 4),
            (2, 1),
            (2, 2),
            (2, 3),
            (2, 4),
            (3, 1),
            (3, 2),
            (3, 3),
            (3, 4),
            (4, 2),
            (4, 3),
            (4, 4),
        ],
    ),
];

/// All built-in targets, with the matrix ranks verified numerically on
/// construction.
#[derive(Debug, Clone)]
pub struct TargetLibrary {
    matrices: Vec<(String, MatrixT<f64>, usize)>,
}

impl TargetLibrary {
    pub fn load() -> Result<Self> {
        let mut matrices = Vec::new();
        for (name, rank, entries) in MATRIX_TARGETS {
            let rows: Vec<Vec<f64>> = entries.iter().map(|r| r.to_vec()).collect();
            let m = MatrixT::from_rows(&rows)?;
            let got = numerical_rank(&m, DEFAULT_REL_TOL)?;
            if got != *rank {
                return Err(invalid(format!(
                    "target {name}: numerical rank {got} != declared rank {rank}"
                )));
            }
            matrices.push((name.to_string(), m, *rank));
        }
        Ok(TargetLibrary { matrices })
    }

    pub fn toy_names() -> Vec<&'static str> {
        TOY_TARGETS.iter().map(|(n, _)| *n).collect()
    }

    pub fn toy(name: &str) -> Result<ToyCoeffs> {
        TOY_TARGETS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, c)| *c)
            .ok_or_else(|| invalid(format!("unknown toy target {name:?}")))
    }

    pub fn matrix_names(&self) -> Vec<&str> {
        self.matrices.iter().map(|(n, _, _)| n.as_str()).collect()
    }

    /// The named matrix and its (verified) matrix rank.
    pub fn matrix(&self, name: &str) -> Result<(&MatrixT<f64>, usize)> {
        self.matrices
            .iter()
            .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, m, r)| (m, *r))
            .ok_or_else(|| invalid(format!("unknown matrix target {name:?}")))
    }
}

/// The designed sampling orders as 0-based entry inputs, deduplicated.
pub fn sampling_sequences() -> Vec<Vec<(usize, usize)>> {
    SAMPLING_SEQUENCES
        .iter()
        .map(|seq| {
            let mut seen = Vec::new();
            for &(i, j) in seq.iter() {
                let e = (i - 1, j - 1);
                if !seen.contains(&e) {
                    seen.push(e);
                }
            }
            seen
        })
        .collect()
}

/// The spectrum-study masks as (n, 0-based entries).
pub fn spectrum_masks() -> Vec<(usize, Vec<(usize, usize)>)> {
    SPECTRUM_MASKS
        .iter()
        .map(|(n, mask)| (*n, mask.iter().map(|&(i, j)| (i - 1, j - 1)).collect()))
        .collect()
}

/// The shift-structured network target: three tanh neurons whose input
/// rows slide the taps (0.6, 0.8, 1.0) across a length-5 input, summed
/// with unit output weights.
pub fn nn_shift3(x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), 5);
    (0.6 * x[0] + 0.8 * x[1] + x[2]).tanh()
        + (0.6 * x[1] + 0.8 * x[2] + x[3]).tanh()
        + (0.6 * x[2] + 0.8 * x[3] + x[4]).tanh()
}

/// The spec/parameters representing [`nn_shift3`] exactly inside the
/// single-kernel shared CNN with bias: taps (1.0, 0.8, 0.6) (tap 0 meets
/// the rightmost window input), zero bias, unit output weights.
pub fn nn_shift3_representative() -> (ModelSpec, ParamVectorT<f64>) {
    let spec = ModelSpec::Cnn1d {
        d: 5,
        s: 3,
        m: 1,
        sharing: true,
        bias: true,
    };
    let theta = ParamVectorT::from_raw(vec![1.0, 0.8, 0.6, 0.0, 1.0, 1.0, 1.0]);
    (spec, theta)
}

/// Matrix-completion dataset: the masked entries of `target` with their
/// values as labels.
pub fn matrix_dataset<S: Scalar>(
    target: &MatrixT<f64>,
    mask: &[(usize, usize)],
) -> Result<DatasetT<S>> {
    let mut inputs = Vec::with_capacity(mask.len());
    let mut labels = Vec::with_capacity(mask.len());
    for &(i, j) in mask {
        if i >= target.rows() || j >= target.cols() {
            return Err(invalid(format!("mask entry ({i},{j}) out of bounds")));
        }
        inputs.push(InputPointT::Entry { i, j });
        labels.push(S::of(target.get(i, j)));
    }
    DatasetT::new(inputs, labels)
}

/// Complement of a mask, as the test set over unobserved entries. With a
/// full mask the test set falls back to all entries.
pub fn complement_dataset<S: Scalar>(
    target: &MatrixT<f64>,
    mask: &[(usize, usize)],
) -> Result<DatasetT<S>> {
    let mut rest = Vec::new();
    for i in 0..target.rows() {
        for j in 0..target.cols() {
            if !mask.contains(&(i, j)) {
                rest.push((i, j));
            }
        }
    }
    if rest.is_empty() {
        let all: Vec<(usize, usize)> = (0..target.rows())
            .flat_map(|i| (0..target.cols()).map(move |j| (i, j)))
            .collect();
        return matrix_dataset(target, &all);
    }
    matrix_dataset(target, &rest)
}

/// Balanced minimal-rank factorization of a square matrix: with the SVD
/// `T = U S V^T` truncated to the numerical rank r, returns the
/// matrix-factorization parameters A = U S^(1/2), B = S^(1/2) V^T, each of
/// rank r, so A*B reproduces the target.
pub fn minimal_rank_factorization(target: &MatrixT<f64>) -> Result<(usize, ParamVectorT<f64>)> {
    if target.rows() != target.cols() {
        return Err(invalid("minimal factorization needs a square matrix"));
    }
    let d = target.rows();
    let dec = svd(target)?;
    let rank = {
        let max = dec.singular_values[0];
        if max == 0.0 {
            0
        } else {
            dec.singular_values
                .iter()
                .take_while(|&&s| s > DEFAULT_REL_TOL * max)
                .count()
        }
    };
    let mut values = vec![0.0; 2 * d * d];
    for r in 0..rank {
        let root = dec.singular_values[r].sqrt();
        for i in 0..d {
            values[i * d + r] = dec.left_vectors.get(i, r) * root;
            values[d * d + r * d + i] = root * dec.right_vectors.get(i, r);
        }
    }
    Ok((rank, ParamVectorT::from_raw(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::forward;
    use crate::rank::interpolation_loss;
    use crate::rng::Rng;

    #[test]
    fn library_loads_and_ranks_verify() {
        let lib = TargetLibrary::load().unwrap();
        let expected = [
            ("M1", 1),
            ("M2", 1),
            ("M3", 2),
            ("M4", 2),
            ("M5", 3),
            ("M6", 3),
            ("M7", 4),
            ("M8", 4),
        ];
        for (name, rank) in expected {
            let (_, r) = lib.matrix(name).unwrap();
            assert_eq!(r, rank, "{name}");
        }
        assert!(lib.matrix("M9").is_err());
    }

    #[test]
    fn toy_targets_resolve() {
        assert_eq!(TargetLibrary::toy("1+x1").unwrap().eval(2.0, 5.0), 3.0);
        assert!(TargetLibrary::toy("x1").unwrap().a2 == 0.0);
        assert!(TargetLibrary::toy("x2").unwrap().has_x2());
        assert!(TargetLibrary::toy("bogus").is_err());
    }

    #[test]
    fn sequences_cover_distinct_entries() {
        let seqs = sampling_sequences();
        assert_eq!(seqs.len(), 6);
        for (k, seq) in seqs.iter().enumerate() {
            let mut sorted = seq.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), seq.len(), "sequence {k} has duplicates");
            assert!(seq.iter().all(|&(i, j)| i < 4 && j < 4));
        }
        // all sequences except the third cover the full grid
        assert_eq!(seqs[0].len(), 16);
        assert_eq!(seqs[2].len(), 15);
    }

    #[test]
    fn spectrum_masks_have_declared_sizes() {
        for (n, mask) in spectrum_masks() {
            assert_eq!(mask.len(), n);
        }
    }

    #[test]
    fn shift_target_matches_its_cnn_representative() {
        let (spec, theta) = nn_shift3_representative();
        let mut rng = Rng::new(14);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
            let direct = nn_shift3(&x);
            let via_model = forward(&spec, &theta, &InputPointT::Vector(x)).unwrap();
            assert!((direct - via_model).abs() < 1e-14);
        }
    }

    #[test]
    fn minimal_factorization_interpolates_at_the_matrix_rank() {
        let lib = TargetLibrary::load().unwrap();
        for name in ["M1", "M3", "M6", "M8"] {
            let (target, rank) = lib.matrix(name).unwrap();
            let (r, theta) = minimal_rank_factorization(target).unwrap();
            assert_eq!(r, rank, "{name}");
            let spec = ModelSpec::MatFac { d: 4 };
            let all: Vec<(usize, usize)> =
                (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
            let data = matrix_dataset::<f64>(target, &all).unwrap();
            let loss = interpolation_loss(&spec, &theta, &data).unwrap();
            assert!(loss < 1e-18, "{name}: loss {loss}");
        }
    }

    #[test]
    fn short_designed_prefix_is_not_stable() {
        // the first designed order reaches the model rank only at its
        // onset (8 entries), so the length-7 prefix cannot certify
        use crate::rank::{is_linearly_stable, stability_onset};
        let lib = TargetLibrary::load().unwrap();
        let (target, _) = lib.matrix("M2").unwrap();
        let spec = ModelSpec::MatFac { d: 4 };
        let (_, theta_star) = minimal_rank_factorization(target).unwrap();
        let seq = &sampling_sequences()[0];
        let inputs: Vec<InputPointT<f64>> = seq
            .iter()
            .map(|&(i, j)| InputPointT::Entry { i, j })
            .collect();
        let n_t = stability_onset(&spec, &theta_star, &inputs, crate::DEFAULT_REL_TOL, 0).unwrap();
        assert!(n_t > 7, "onset {n_t}");
        let data = matrix_dataset::<f64>(target, &seq[..7]).unwrap();
        let (stable, report) =
            is_linearly_stable(&spec, &theta_star, &data, crate::DEFAULT_REL_TOL, 1, 0).unwrap();
        assert!(!stable);
        assert!(report.empirical_rank < report.model_rank_numeric);
    }

    #[test]
    fn complement_of_full_mask_is_all_entries() {
        let lib = TargetLibrary::load().unwrap();
        let (target, _) = lib.matrix("M1").unwrap();
        let all: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        let test = complement_dataset::<f64>(target, &all).unwrap();
        assert_eq!(test.len(), 16);
        let partial = complement_dataset::<f64>(target, &all[..7]).unwrap();
        assert_eq!(partial.len(), 9);
    }
}
