//! FIFO store of pooled patch embeddings, queried by cosine top-k.

use crate::tensor::{cosine_similarity, top_k_indices, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Serialize, Deserialize)]
pub struct MemoryBank {
    capacity: usize,
    dim: usize,
    slots: VecDeque<Vec<f64>>,
}

impl MemoryBank {
    pub fn new(capacity: usize, dim: usize) -> MemoryBank {
        assert!(capacity > 0, "bank capacity must be positive");
        MemoryBank {
            capacity,
            dim,
            slots: VecDeque::new(),
        }
    }

    pub fn fill(&self) -> usize {
        self.slots.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reset(&mut self) {
        self.slots.clear();
    }

    pub fn enqueue(&mut self, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim, "bank vector width mismatch");
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
        }
        self.slots.push_back(v);
    }

    /// Entries oldest first.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.slots.iter().map(|v| v.as_slice())
    }

    /// For each query row, average the top-k entries by cosine similarity,
    /// weighted by a softmax over their similarities. Ties on similarity go
    /// to the older entry. Queries are raw values: retrieval happens off the
    /// autodiff tape.
    pub fn retrieve(&self, queries: &Tensor, k: usize) -> Tensor {
        let shape = queries.shape().to_vec();
        let d = *shape.last().expect("query tensor has a last axis");
        assert_eq!(d, self.dim);
        let rows: Vec<&[f64]> = self.rows().collect();
        let mut out = vec![0.0; queries.data().len()];
        for (qi, q) in queries.data().chunks(d).enumerate() {
            let sims: Vec<f64> = rows.iter().map(|r| cosine_similarity(q, r)).collect();
            let top = top_k_indices(&sims, k.min(rows.len()));
            let hi = top
                .iter()
                .map(|&i| sims[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut ws: Vec<f64> = top.iter().map(|&i| (sims[i] - hi).exp()).collect();
            let z: f64 = ws.iter().sum();
            for w in &mut ws {
                *w /= z;
            }
            let dst = &mut out[qi * d..(qi + 1) * d];
            for (&i, w) in top.iter().zip(ws) {
                for (o, v) in dst.iter_mut().zip(rows[i]) {
                    *o += w * v;
                }
            }
        }
        Tensor::new(&shape, out).expect("retrieval preserves shape")
    }
}
