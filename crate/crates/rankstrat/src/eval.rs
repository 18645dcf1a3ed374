//! Model evaluation: `forward` and the exact parameter gradient
//! `grad_param`, plus the central-difference oracle `grad_fd`.
//!
//! Gradients are written out analytically per family and follow the
//! canonical layouts documented in [`crate::model`]. `grad_fd` touches
//! nothing but `forward`, so the pair forms an independent cross-check.

use crate::error::{invalid, Result};
use crate::model::{InputPointT, ModelSpec, ParamVectorT};
use crate::scalar::Scalar;

fn sech2<S: Scalar>(z: S) -> S {
    let t = z.tanh();
    S::one() - t * t
}

fn check_theta<S: Scalar>(spec: &ModelSpec, theta: &ParamVectorT<S>) -> Result<()> {
    if theta.len() != spec.param_count() {
        return Err(invalid(format!(
            "{spec}: expected {} parameters, got {}",
            spec.param_count(),
            theta.len()
        )));
    }
    Ok(())
}

fn vector_input<'a, S: Scalar>(spec: &ModelSpec, x: &'a InputPointT<S>) -> Result<&'a [S]> {
    let want = spec.input_len().expect("vector-input family");
    match x {
        InputPointT::Vector(v) if v.len() == want => Ok(v),
        InputPointT::Vector(v) => Err(invalid(format!(
            "{spec}: input length {} != {want}",
            v.len()
        ))),
        _ => Err(invalid(format!("{spec}: expected a vector input"))),
    }
}

pub fn forward<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    x: &InputPointT<S>,
) -> Result<S> {
    check_theta(spec, theta)?;
    let th = theta.as_slice();
    match spec {
        ModelSpec::ToyNl => {
            let v = vector_input(spec, x)?;
            Ok(th[0] + th[1] * v[0] + th[2] * th[3] * v[1])
        }
        ModelSpec::ToyLinear => {
            let v = vector_input(spec, x)?;
            Ok(th[0] + th[1] * v[0] + th[2] * v[1])
        }
        ModelSpec::MatFac { d } => {
            let (i, j) = entry_input(spec, *d, x)?;
            let mut acc = S::zero();
            for k in 0..*d {
                acc += th[i * d + k] * th[d * d + k * d + j];
            }
            Ok(acc)
        }
        ModelSpec::Fc2 { d, m, bias } => {
            let v = vector_input(spec, x)?;
            let block = d + 1 + usize::from(*bias);
            let mut out = S::zero();
            for unit in 0..*m {
                let base = unit * block;
                let mut z = S::zero();
                for t in 0..*d {
                    z += th[base + t] * v[t];
                }
                if *bias {
                    z += th[base + d];
                }
                let a = th[base + block - 1];
                out += a * z.tanh();
            }
            Ok(out)
        }
        ModelSpec::Cnn1d {
            d,
            s,
            m,
            sharing,
            bias,
        } => {
            let v = vector_input(spec, x)?;
            let p = d + 1 - s;
            let mut out = S::zero();
            if *sharing {
                let block = s + usize::from(*bias) + p;
                for l in 0..*m {
                    let base = l * block;
                    let taps = &th[base..base + s];
                    let b = if *bias { th[base + s] } else { S::zero() };
                    let outw = &th[base + s + usize::from(*bias)..base + block];
                    for pos in 0..p {
                        let z = window_dot(v, taps, pos, *s) + b;
                        out += outw[pos] * z.tanh();
                    }
                }
            } else {
                let block = s + usize::from(*bias) + 1;
                for l in 0..*m {
                    for pos in 0..p {
                        let base = (l * p + pos) * block;
                        let taps = &th[base..base + s];
                        let b = if *bias { th[base + s] } else { S::zero() };
                        let a = th[base + block - 1];
                        let z = window_dot(v, taps, pos, *s) + b;
                        out += a * z.tanh();
                    }
                }
            }
            Ok(out)
        }
        ModelSpec::Cnn2d { d, s, m, sharing } => {
            let img = image_input(spec, *d, x)?;
            let p = d + 1 - s;
            let mut out = S::zero();
            if *sharing {
                let block = s * s + p * p;
                for l in 0..*m {
                    let base = l * block;
                    let taps = &th[base..base + s * s];
                    let outw = &th[base + s * s..base + block];
                    for pi in 0..p {
                        for pj in 0..p {
                            let z = window_dot_2d(img, taps, pi, pj, *s);
                            out += outw[pi * p + pj] * z.tanh();
                        }
                    }
                }
            } else {
                let block = s * s + 1;
                for l in 0..*m {
                    for pi in 0..p {
                        for pj in 0..p {
                            let base = (l * p * p + pi * p + pj) * block;
                            let taps = &th[base..base + s * s];
                            let a = th[base + s * s];
                            let z = window_dot_2d(img, taps, pi, pj, *s);
                            out += a * z.tanh();
                        }
                    }
                }
            }
            Ok(out)
        }
        ModelSpec::DeepFc { widths } => {
            let v = vector_input(spec, x)?;
            let mut h: Vec<S> = v.to_vec();
            let mut off = 0;
            for l in 1..widths.len() {
                let (rows, cols) = (widths[l], widths[l - 1]);
                let mut z = vec![S::zero(); rows];
                for i in 0..rows {
                    let mut acc = S::zero();
                    for j in 0..cols {
                        acc += th[off + i * cols + j] * h[j];
                    }
                    z[i] = acc;
                }
                off += rows * cols;
                h = if l + 1 == widths.len() {
                    z
                } else {
                    z.into_iter().map(|u| u.tanh()).collect()
                };
            }
            Ok(h[0])
        }
    }
}

pub fn grad_param<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    x: &InputPointT<S>,
) -> Result<Vec<S>> {
    let mut g = vec![S::zero(); spec.param_count()];
    grad_param_into(spec, theta, x, &mut g)?;
    Ok(g)
}

/// `grad_param` writing into a caller-owned buffer; the trainer's hot path.
pub fn grad_param_into<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    x: &InputPointT<S>,
    g: &mut [S],
) -> Result<()> {
    check_theta(spec, theta)?;
    let th = theta.as_slice();
    if g.len() != th.len() {
        return Err(invalid("gradient buffer length mismatch"));
    }
    g.fill(S::zero());
    match spec {
        ModelSpec::ToyNl => {
            let v = vector_input(spec, x)?;
            g[0] = S::one();
            g[1] = v[0];
            g[2] = th[3] * v[1];
            g[3] = th[2] * v[1];
        }
        ModelSpec::ToyLinear => {
            let v = vector_input(spec, x)?;
            g[0] = S::one();
            g[1] = v[0];
            g[2] = v[1];
        }
        ModelSpec::MatFac { d } => {
            let (i, j) = entry_input(spec, *d, x)?;
            for k in 0..*d {
                g[i * d + k] = th[d * d + k * d + j];
                g[d * d + k * d + j] = th[i * d + k];
            }
        }
        ModelSpec::Fc2 { d, m, bias } => {
            let v = vector_input(spec, x)?;
            let block = d + 1 + usize::from(*bias);
            for unit in 0..*m {
                let base = unit * block;
                let mut z = S::zero();
                for t in 0..*d {
                    z += th[base + t] * v[t];
                }
                if *bias {
                    z += th[base + d];
                }
                let a = th[base + block - 1];
                let act = z.tanh();
                let slope = a * sech2(z);
                for t in 0..*d {
                    g[base + t] = slope * v[t];
                }
                if *bias {
                    g[base + d] = slope;
                }
                g[base + block - 1] = act;
            }
        }
        ModelSpec::Cnn1d {
            d,
            s,
            m,
            sharing,
            bias,
        } => {
            let v = vector_input(spec, x)?;
            let p = d + 1 - s;
            if *sharing {
                let block = s + usize::from(*bias) + p;
                for l in 0..*m {
                    let base = l * block;
                    let taps = &th[base..base + s];
                    let b = if *bias { th[base + s] } else { S::zero() };
                    let out_base = base + s + usize::from(*bias);
                    for pos in 0..p {
                        let z = window_dot(v, taps, pos, *s) + b;
                        let a = th[out_base + pos];
                        let slope = a * sech2(z);
                        for t in 0..*s {
                            g[base + t] += slope * v[pos + s - 1 - t];
                        }
                        if *bias {
                            g[base + s] += slope;
                        }
                        g[out_base + pos] = z.tanh();
                    }
                }
            } else {
                let block = s + usize::from(*bias) + 1;
                for l in 0..*m {
                    for pos in 0..p {
                        let base = (l * p + pos) * block;
                        let taps = &th[base..base + s];
                        let b = if *bias { th[base + s] } else { S::zero() };
                        let a = th[base + block - 1];
                        let z = window_dot(v, taps, pos, *s) + b;
                        let slope = a * sech2(z);
                        for t in 0..*s {
                            g[base + t] = slope * v[pos + s - 1 - t];
                        }
                        if *bias {
                            g[base + s] = slope;
                        }
                        g[base + block - 1] = z.tanh();
                    }
                }
            }
        }
        ModelSpec::Cnn2d { d, s, m, sharing } => {
            let img = image_input(spec, *d, x)?;
            let p = d + 1 - s;
            if *sharing {
                let block = s * s + p * p;
                for l in 0..*m {
                    let base = l * block;
                    let taps = &th[base..base + s * s];
                    let out_base = base + s * s;
                    for pi in 0..p {
                        for pj in 0..p {
                            let z = window_dot_2d(img, taps, pi, pj, *s);
                            let a = th[out_base + pi * p + pj];
                            let slope = a * sech2(z);
                            for ti in 0..*s {
                                for tj in 0..*s {
                                    g[base + ti * s + tj] +=
                                        slope * img.get(pi + s - 1 - ti, pj + s - 1 - tj);
                                }
                            }
                            g[out_base + pi * p + pj] = z.tanh();
                        }
                    }
                }
            } else {
                let block = s * s + 1;
                for l in 0..*m {
                    for pi in 0..p {
                        for pj in 0..p {
                            let base = (l * p * p + pi * p + pj) * block;
                            let taps = &th[base..base + s * s];
                            let a = th[base + s * s];
                            let z = window_dot_2d(img, taps, pi, pj, *s);
                            let slope = a * sech2(z);
                            for ti in 0..*s {
                                for tj in 0..*s {
                                    g[base + ti * s + tj] =
                                        slope * img.get(pi + s - 1 - ti, pj + s - 1 - tj);
                                }
                            }
                            g[base + s * s] = z.tanh();
                        }
                    }
                }
            }
        }
        ModelSpec::DeepFc { widths } => {
            let v = vector_input(spec, x)?;
            let depth = widths.len() - 1;
            // Forward pass, keeping activations and preactivations.
            let mut activations: Vec<Vec<S>> = vec![v.to_vec()];
            let mut preacts: Vec<Vec<S>> = Vec::with_capacity(depth);
            let mut offsets = Vec::with_capacity(depth);
            let mut off = 0;
            for l in 1..widths.len() {
                let (rows, cols) = (widths[l], widths[l - 1]);
                offsets.push(off);
                let prev = activations.last().unwrap();
                let mut z = vec![S::zero(); rows];
                for i in 0..rows {
                    let mut acc = S::zero();
                    for j in 0..cols {
                        acc += th[off + i * cols + j] * prev[j];
                    }
                    z[i] = acc;
                }
                off += rows * cols;
                let h = if l == depth {
                    z.clone()
                } else {
                    z.iter().map(|u| u.tanh()).collect()
                };
                preacts.push(z);
                activations.push(h);
            }
            // Backward pass: delta over preactivations, linear output layer.
            let mut delta = vec![S::one(); 1];
            for l in (1..=depth).rev() {
                let (rows, cols) = (widths[l], widths[l - 1]);
                let off = offsets[l - 1];
                let prev = &activations[l - 1];
                for i in 0..rows {
                    for j in 0..cols {
                        g[off + i * cols + j] = delta[i] * prev[j];
                    }
                }
                if l > 1 {
                    let mut next = vec![S::zero(); cols];
                    for j in 0..cols {
                        let mut acc = S::zero();
                        for i in 0..rows {
                            acc += th[off + i * cols + j] * delta[i];
                        }
                        next[j] = acc * sech2(preacts[l - 2][j]);
                    }
                    delta = next;
                }
            }
        }
    }
    Ok(())
}

/// Central finite differences, component by component. Oracle for
/// `grad_param`; calls only `forward`.
pub fn grad_fd<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    x: &InputPointT<S>,
    h: S,
) -> Result<Vec<S>> {
    if !(h > S::zero()) {
        return Err(invalid("grad_fd: step must be positive"));
    }
    check_theta(spec, theta)?;
    let mut work = theta.clone();
    let mut g = vec![S::zero(); theta.len()];
    for idx in 0..theta.len() {
        let orig = work.as_slice()[idx];
        work.as_mut_slice()[idx] = orig + h;
        let plus = forward(spec, &work, x)?;
        work.as_mut_slice()[idx] = orig - h;
        let minus = forward(spec, &work, x)?;
        work.as_mut_slice()[idx] = orig;
        g[idx] = (plus - minus) / (S::of(2.0) * h);
    }
    Ok(g)
}

/// Worst finite-difference discrepancy over `trials` random (theta, x)
/// pairs, scaled so that a component passes when its error is below
/// `1e-6 * |exact|` or below the absolute floor `1e-9`:
/// `err = |exact - fd| / max(|exact|, 1e-3)`.
pub fn gradient_check(spec: &ModelSpec, trials: usize, h: f64, seed: u64) -> Result<f64> {
    spec.validate()?;
    let mut rng = crate::rng::Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let theta = ParamVectorT::from_raw(
            (0..spec.param_count())
                .map(|_| rng.standard_normal())
                .collect(),
        );
        let x = spec.sample_input::<f64>(&mut rng);
        let exact = grad_param(spec, &theta, &x)?;
        let approx = grad_fd(spec, &theta, &x, h)?;
        for (e, a) in exact.iter().zip(&approx) {
            worst = worst.max((e - a).abs() / e.abs().max(1e-3));
        }
    }
    Ok(worst)
}

fn entry_input<S: Scalar>(
    spec: &ModelSpec,
    d: usize,
    x: &InputPointT<S>,
) -> Result<(usize, usize)> {
    match x {
        InputPointT::Entry { i, j } if *i < d && *j < d => Ok((*i, *j)),
        InputPointT::Entry { i, j } => Err(invalid(format!(
            "{spec}: entry index ({i},{j}) out of bounds for d={d}"
        ))),
        _ => Err(invalid(format!("{spec}: expected an entry-index input"))),
    }
}

fn image_input<'a, S: Scalar>(
    spec: &ModelSpec,
    d: usize,
    x: &'a InputPointT<S>,
) -> Result<&'a crate::matrix::MatrixT<S>> {
    match x {
        InputPointT::Image(img) if img.rows() == d && img.cols() == d => Ok(img),
        InputPointT::Image(img) => Err(invalid(format!(
            "{spec}: image shape {}x{} != {d}x{d}",
            img.rows(),
            img.cols()
        ))),
        _ => Err(invalid(format!("{spec}: expected an image input"))),
    }
}

/// Position `pos` reads `x[pos..pos+s]` against reversed taps.
fn window_dot<S: Scalar>(x: &[S], taps: &[S], pos: usize, s: usize) -> S {
    let mut acc = S::zero();
    for t in 0..s {
        acc += taps[t] * x[pos + s - 1 - t];
    }
    acc
}

fn window_dot_2d<S: Scalar>(
    img: &crate::matrix::MatrixT<S>,
    taps: &[S],
    pi: usize,
    pj: usize,
    s: usize,
) -> S {
    let mut acc = S::zero();
    for ti in 0..s {
        for tj in 0..s {
            acc += taps[ti * s + tj] * img.get(pi + s - 1 - ti, pj + s - 1 - tj);
        }
    }
    acc
}
