//! Dense row-major f64 tensors plus the reverse-mode tape built on top.

mod linalg;
mod tape;

pub use linalg::{sym_eig, truncated_svd, SymEig, TruncatedSvd};
pub use tape::{Grads, Tape, Tid};

use crate::error::{Result, StatError};
use serde::{Deserialize, Serialize};

/// Dense n-dimensional array, row-major, always f64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(StatError::Contract(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Row-major strides for this shape.
    fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Reshape without copying; total element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(StatError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Swap two axes (copying transpose).
    pub fn swap_axes(&self, a: usize, b: usize) -> Result<Tensor> {
        let r = self.rank();
        if a >= r || b >= r {
            return Err(StatError::Contract(format!(
                "swap_axes({a},{b}) on rank-{r} tensor"
            )));
        }
        if a == b {
            return Ok(self.clone());
        }
        let mut out_shape = self.shape.clone();
        out_shape.swap(a, b);
        let in_strides = self.strides();
        let mut perm_strides = in_strides.clone();
        perm_strides.swap(a, b);
        let mut out = Tensor::zeros(&out_shape);
        let mut idx = vec![0usize; r];
        for o in 0..out.data.len() {
            let mut src = 0;
            for (d, &i) in idx.iter().enumerate() {
                src += i * perm_strides[d];
            }
            out.data[o] = self.data[src];
            // increment mixed-radix counter over out_shape
            for d in (0..r).rev() {
                idx[d] += 1;
                if idx[d] < out_shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(out)
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape[axis] {
            return Err(StatError::Contract(format!(
                "narrow(axis={axis}, start={start}, len={len}) on shape {:?}",
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        let axis_full = self.shape[axis];
        for o in 0..outer {
            let base = o * axis_full * inner + start * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Tensor::new(&out_shape, data)
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(StatError::Contract("concat of zero tensors".into()));
        }
        let rank = parts[0].rank();
        if axis >= rank {
            return Err(StatError::Contract(format!("concat axis {axis} out of range")));
        }
        let mut out_shape = parts[0].shape.clone();
        let mut total = 0usize;
        for p in parts {
            if p.rank() != rank {
                return Err(StatError::ShapeMismatch {
                    op: "concat",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            for d in 0..rank {
                if d != axis && p.shape[d] != out_shape[d] {
                    return Err(StatError::ShapeMismatch {
                        op: "concat",
                        lhs: parts[0].shape.clone(),
                        rhs: p.shape.clone(),
                    });
                }
            }
            total += p.shape[axis];
        }
        out_shape[axis] = total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor::new(&out_shape, data)
    }

    /// Sum the gradient of a broadcast result back down to `target` shape.
    pub fn reduce_to_shape(&self, target: &[usize]) -> Tensor {
        if self.shape == target {
            return self.clone();
        }
        let extra = self.rank() - target.len();
        let mut out = Tensor::zeros(target);
        let t_strides = strides_of(target);
        let mut idx = vec![0usize; self.rank()];
        for (o, &v) in self.data.iter().enumerate() {
            let mut dst = 0;
            for (d, &t) in target.iter().enumerate() {
                let i = idx[extra + d];
                if t != 1 {
                    dst += i * t_strides[d];
                }
            }
            out.data[dst] += v;
            let r = self.rank();
            for d in (0..r).rev() {
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
            let _ = o;
        }
        out
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes (trailing alignment).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize], op: &'static str) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for d in 0..rank {
        let ea = if d < rank - a.len() { 1 } else { a[d - (rank - a.len())] };
        let eb = if d < rank - b.len() { 1 } else { b[d - (rank - b.len())] };
        out[d] = if ea == eb {
            ea
        } else if ea == 1 {
            eb
        } else if eb == 1 {
            ea
        } else {
            return Err(StatError::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Strides for reading `shape` as if broadcast to `out_shape` (0 on expanded axes).
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let native = strides_of(shape);
    let offset = out_shape.len() - shape.len();
    let mut s = vec![0usize; out_shape.len()];
    for d in 0..shape.len() {
        s[offset + d] = if shape[d] == 1 { 0 } else { native[d] };
    }
    s
}

/// Elementwise binary op with broadcasting.
pub(crate) fn broadcast_binary(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let out_shape = broadcast_shape(&a.shape, &b.shape, op)?;
    if a.shape == b.shape {
        // fast path: same shape, no index arithmetic
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(&out_shape, data);
    }
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let n: usize = out_shape.iter().product();
    let rank = out_shape.len();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off_a = 0usize;
    let mut off_b = 0usize;
    for _ in 0..n {
        data.push(f(a.data[off_a], b.data[off_b]));
        for d in (0..rank).rev() {
            idx[d] += 1;
            off_a += sa[d];
            off_b += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            off_a -= sa[d] * out_shape[d];
            off_b -= sb[d] * out_shape[d];
        }
    }
    Tensor::new(&out_shape, data)
}

/// Batched matrix product: (..., m, k) x (..., k, n) with broadcast leading dims.
pub(crate) fn matmul_value(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(StatError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (m, ka) = (a.shape[a.rank() - 2], a.shape[a.rank() - 1]);
    let (kb, n) = (b.shape[b.rank() - 2], b.shape[b.rank() - 1]);
    if ka != kb {
        return Err(StatError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let lead_a = &a.shape[..a.rank() - 2];
    let lead_b = &b.shape[..b.rank() - 2];
    let lead = broadcast_shape(lead_a, lead_b, "matmul")?;
    let batches: usize = lead.iter().product();
    let sa = broadcast_strides(lead_a, &lead);
    let sb = broadcast_strides(lead_b, &lead);
    // per-batch offsets measured in matrices, convert to elements below
    let mut out_shape = lead.clone();
    out_shape.push(m);
    out_shape.push(n);
    let mut out = Tensor::zeros(&out_shape);
    let a_mat = m * ka;
    let b_mat = kb * n;
    let o_mat = m * n;
    let mut idx = vec![0usize; lead.len()];
    for batch in 0..batches {
        let mut off_a = 0usize;
        let mut off_b = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            off_a += i * sa[d];
            off_b += i * sb[d];
        }
        let abuf = &a.data[off_a * a_mat..off_a * a_mat + a_mat];
        let bbuf = &b.data[off_b * b_mat..off_b * b_mat + b_mat];
        let obuf = &mut out.data[batch * o_mat..(batch + 1) * o_mat];
        // i-k-j loop order keeps b reads sequential
        for i in 0..m {
            for k in 0..ka {
                let av = abuf[i * ka + k];
                if av == 0.0 {
                    continue;
                }
                let brow = &bbuf[k * n..(k + 1) * n];
                let orow = &mut obuf[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        for d in (0..lead.len()).rev() {
            idx[d] += 1;
            if idx[d] < lead[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

/// Top-k indices by value, descending; ties keep the lower index first.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

/// Cosine similarity of two equal-length slices with a small floor on norms.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt()).max(1e-12)
}
