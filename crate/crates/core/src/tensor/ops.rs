//! Forward kernels and the adjoint helpers the graph uses for backward.
//!
//! Every kernel checks shapes and returns [`Error::Shape`] naming itself on
//! mismatch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f32 = 1e-12;
const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// C = A * B for a row-major m x k by k x n product with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (isize, isize),
    b: &[f32],
    (rsb, csb): (isize, isize),
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].fill(0.0);
        return;
    }
    // SAFETY: the strides describe in-bounds views of `a` (m x k), `b`
    // (k x n) and `c` (m x n, row-major), which the callers size-check.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product over the last two axes with optional transposes.
///
/// Both operands 2-D, or both N-D (N >= 3) with equal leading axes. A 3+-D
/// left operand against a 2-D right one is folded into one 2-D product.
pub fn matmul(a: &Tensor, b: &Tensor, trans_a: bool, trans_b: bool) -> Result<Tensor> {
    if a.ndim() < 2 || b.ndim() < 2 {
        return Err(shape_err("matmul", a, b));
    }
    if a.ndim() > 2 && b.ndim() == 2 && !trans_a {
        let k = *a.shape().last().unwrap();
        let folded = Tensor {
            shape: vec![a.numel() / k, k],
            data: a.data.clone(),
        };
        let out = matmul(&folded, b, false, trans_b)?;
        let mut shape = a.shape()[..a.ndim() - 1].to_vec();
        shape.push(out.shape[1]);
        return Ok(Tensor {
            shape,
            data: out.data,
        });
    }
    if a.ndim() != b.ndim() || a.shape()[..a.ndim() - 2] != b.shape()[..b.ndim() - 2] {
        return Err(shape_err("matmul", a, b));
    }
    let nd = a.ndim();
    let (ar, ac) = (a.shape()[nd - 2], a.shape()[nd - 1]);
    let (br, bc) = (b.shape()[nd - 2], b.shape()[nd - 1]);
    let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(shape_err("matmul", a, b));
    }
    let batch: usize = a.shape()[..nd - 2].iter().product();
    let a_strides = if trans_a { (1, ac as isize) } else { (ac as isize, 1) };
    let b_strides = if trans_b { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = vec![0.0f32; batch * m * n];
    for i in 0..batch {
        gemm(
            m,
            k,
            n,
            &a.data[i * ar * ac..(i + 1) * ar * ac],
            a_strides,
            &b.data[i * br * bc..(i + 1) * br * bc],
            b_strides,
            &mut out[i * m * n..(i + 1) * m * n],
        );
    }
    let mut shape = a.shape()[..nd - 2].to_vec();
    shape.extend([m, n]);
    Ok(Tensor { shape, data: out })
}

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Element strides of `shape` viewed inside `out`, zero along broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; out.len()];
    let offset = out.len() - shape.len();
    let mut s = 1;
    for i in (0..shape.len()).rev() {
        if shape[i] != 1 {
            strides[i + offset] = s;
        }
        s *= shape[i];
    }
    strides
}

/// Visits every index of `out` in row-major order, passing the matching
/// flat offsets into each of the broadcast operands.
fn for_each_broadcast<const N: usize>(
    out: &[usize],
    strides: [&[usize]; N],
    mut f: impl FnMut(usize, [usize; N]),
) {
    let total: usize = out.iter().product();
    if total == 0 {
        return;
    }
    let nd = out.len();
    let mut idx = vec![0usize; nd];
    let mut offs = [0usize; N];
    for flat in 0..total {
        f(flat, offs);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            for j in 0..N {
                offs[j] += strides[j][ax];
            }
            if idx[ax] < out[ax] {
                break;
            }
            for j in 0..N {
                offs[j] -= strides[j][ax] * out[ax];
            }
            idx[ax] = 0;
        }
    }
}

fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f32, f32) -> f32,
) -> Result<Tensor> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor {
            shape: a.shape.clone(),
            data,
        });
    }
    let shape = broadcast_shape(&a.shape, &b.shape).ok_or_else(|| shape_err(op, a, b))?;
    // Row-vector fast path: b is a suffix of a (bias add).
    if shape == a.shape && a.shape.ends_with(&b.shape) && !b.shape.is_empty() {
        let w = b.numel();
        let mut data = a.data.clone();
        for row in data.chunks_mut(w) {
            for (x, &y) in row.iter_mut().zip(&b.data) {
                *x = f(*x, y);
            }
        }
        return Ok(Tensor { shape, data });
    }
    let sa = broadcast_strides(&a.shape, &shape);
    let sb = broadcast_strides(&b.shape, &shape);
    let mut data = vec![0.0f32; shape.iter().product()];
    for_each_broadcast(&shape, [&sa, &sb], |i, [oa, ob]| {
        data[i] = f(a.data[oa], b.data[ob]);
    });
    Ok(Tensor { shape, data })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    broadcast_binary("add", a, b, |x, y| x + y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    broadcast_binary("mul", a, b, |x, y| x * y)
}

/// Sums `grad` (shaped like a broadcast result) down to `shape`.
pub fn reduce_to(grad: &Tensor, shape: &[usize]) -> Tensor {
    if grad.shape == shape {
        return grad.clone();
    }
    let mut out = Tensor::zeros(shape.to_vec());
    if grad.shape.ends_with(shape) && !shape.is_empty() {
        let w = out.numel();
        for row in grad.data.chunks(w) {
            for (o, &g) in out.data.iter_mut().zip(row) {
                *o += g;
            }
        }
        return out;
    }
    let s = broadcast_strides(shape, &grad.shape);
    for_each_broadcast(&grad.shape, [&s], |i, [o]| {
        out.data[o] += grad.data[i];
    });
    out
}

pub fn scale(a: &Tensor, c: f32) -> Tensor {
    map(a, |x| x * c)
}

pub fn map(a: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

/// GELU, tanh approximation.
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f32) -> f32 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Softmax along `axis`, max-subtracted.
pub fn softmax(a: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= a.ndim() {
        return Err(Error::Shape {
            op: "softmax",
            lhs: a.shape.clone(),
            rhs: vec![axis],
        });
    }
    let (outer, len, inner) = axis_split(&a.shape, axis);
    let mut data = a.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let max = (0..len).map(|j| data[at(j)]).fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (data[at(j)] - max).exp();
                data[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                data[at(j)] /= sum;
            }
        }
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// dx = y * (dy - sum(dy * y)) along `axis`.
pub fn softmax_backward(y: &Tensor, dy: &Tensor, axis: usize) -> Tensor {
    let (outer, len, inner) = axis_split(&y.shape, axis);
    let mut dx = vec![0.0f32; y.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let dot: f32 = (0..len).map(|j| dy.data[at(j)] * y.data[at(j)]).sum();
            for j in 0..len {
                dx[at(j)] = y.data[at(j)] * (dy.data[at(j)] - dot);
            }
        }
    }
    Tensor {
        shape: y.shape.clone(),
        data: dx,
    }
}

/// Normalized input and per-row inverse std, kept for backward.
pub struct LayerNormCache {
    pub xhat: Vec<f32>,
    pub inv_std: Vec<f32>,
}

/// Layer norm over the last axis: `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, LayerNormCache)> {
    let d = *x.shape.last().ok_or_else(|| shape_err("layer_norm", x, gamma))?;
    if gamma.shape != [d] {
        return Err(shape_err("layer_norm", x, gamma));
    }
    if beta.shape != [d] {
        return Err(shape_err("layer_norm", x, beta));
    }
    let rows = x.numel() / d.max(1);
    let mut xhat = vec![0.0f32; x.numel()];
    let mut inv_std = vec![0.0f32; rows];
    let mut out = vec![0.0f32; x.numel()];
    for r in 0..rows {
        let row = &x.data[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[r * d + j] = h;
            out[r * d + j] = gamma.data[j] * h + beta.data[j];
        }
    }
    Ok((
        Tensor {
            shape: x.shape.clone(),
            data: out,
        },
        LayerNormCache { xhat, inv_std },
    ))
}

/// Returns (dx, dgamma, dbeta).
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Tensor,
    dy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = gamma.numel();
    let rows = dy.numel() / d.max(1);
    let mut dx = vec![0.0f32; dy.numel()];
    let mut dg = vec![0.0f32; d];
    let mut db = vec![0.0f32; d];
    let mut dxhat = vec![0.0f32; d];
    for r in 0..rows {
        let g = &dy.data[r * d..(r + 1) * d];
        let h = &cache.xhat[r * d..(r + 1) * d];
        let mut sum = 0.0f32;
        let mut sum_h = 0.0f32;
        for j in 0..d {
            dg[j] += g[j] * h[j];
            db[j] += g[j];
            dxhat[j] = g[j] * gamma.data[j];
            sum += dxhat[j];
            sum_h += dxhat[j] * h[j];
        }
        let is = cache.inv_std[r];
        let n = d as f32;
        for j in 0..d {
            dx[r * d + j] = is / n * (n * dxhat[j] - sum - h[j] * sum_h);
        }
    }
    (
        Tensor {
            shape: dy.shape.clone(),
            data: dx,
        },
        Tensor {
            shape: vec![d],
            data: dg,
        },
        Tensor {
            shape: vec![d],
            data: db,
        },
    )
}

/// Gathers rows of a 2-D table.
pub fn embedding(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    if table.ndim() != 2 {
        return Err(Error::Shape {
            op: "embedding",
            lhs: table.shape.clone(),
            rhs: vec![ids.len()],
        });
    }
    let (v, d) = (table.shape[0], table.shape[1]);
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= v {
            return Err(Error::invalid(format!("embedding: id {id} out of range for {v} rows")));
        }
        data.extend_from_slice(&table.data[id * d..(id + 1) * d]);
    }
    Ok(Tensor {
        shape: vec![ids.len(), d],
        data,
    })
}

pub fn embedding_backward(table_shape: &[usize], ids: &[u32], dy: &Tensor) -> Tensor {
    let d = table_shape[1];
    let mut out = Tensor::zeros(table_shape.to_vec());
    for (r, &id) in ids.iter().enumerate() {
        let id = id as usize;
        for (o, &g) in out.data[id * d..(id + 1) * d]
            .iter_mut()
            .zip(&dy.data[r * d..(r + 1) * d])
        {
            *o += g;
        }
    }
    out
}

/// Inverted-dropout multiplier: 0 with probability `rate`, else 1/(1-rate).
pub fn dropout_mask(n: usize, rate: f32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f32>() < rate { 0.0 } else { keep })
        .collect()
}

/// Axis permutation: output axis i is input axis `perm[i]`.
pub fn permute(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let nd = a.ndim();
    let mut seen = vec![false; nd];
    if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Shape {
            op: "permute",
            lhs: a.shape.clone(),
            rhs: perm.to_vec(),
        });
    }
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * a.shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| a.shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut data = vec![0.0f32; a.numel()];
    for_each_broadcast(&out_shape, [&strides], |i, [o]| data[i] = a.data[o]);
    Ok(Tensor {
        shape: out_shape,
        data,
    })
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
