//! Named residual-stream channels and small builders for FFN/attention
//! matrices addressed by channel index.

use std::collections::BTreeMap;

use crate::tensor_ops::Matrix;
use crate::transformer_core::{AttentionWeights, AttnMode, FfnWeights, NormKind};

/// Allocates named channels of the residual stream in order.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    next: usize,
    map: BTreeMap<String, Vec<usize>>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// One fresh channel.
    pub fn ch(&mut self, name: &str) -> usize {
        self.block(name, 1)[0]
    }

    /// `n` consecutive fresh channels.
    pub fn block(&mut self, name: &str, n: usize) -> Vec<usize> {
        let v: Vec<usize> = (self.next..self.next + n).collect();
        self.next += n;
        self.map.insert(name.to_string(), v.clone());
        v
    }

    pub fn used(&self) -> usize {
        self.next
    }

    pub fn into_map(self) -> BTreeMap<String, Vec<usize>> {
        self.map
    }
}

/// FFN assembled row by row. `γ` and `β` are given per hidden row.
pub struct FfnBuilder {
    w1: Matrix,
    w2: Matrix,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    next: usize,
}

impl FfnBuilder {
    /// FFN on a `d`-dimensional stream with hidden width `h`.
    pub fn new(d: usize, h: usize) -> Self {
        Self { w1: Matrix::zeros(h, d), w2: Matrix::zeros(d, h), gamma: vec![0.0; h], beta: vec![0.0; h], next: 0 }
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    /// Adds hidden row `Σ coef·x[ch]` and returns its index.
    pub fn row(&mut self, lin: &[(usize, f64)], gamma: f64, beta: f64) -> usize {
        let r = self.next;
        assert!(r < self.w1.rows(), "FFN hidden width {} exhausted", self.w1.rows());
        for &(c, w) in lin {
            self.w1[(r, c)] += w;
        }
        self.gamma[r] = gamma;
        self.beta[r] = beta;
        self.next += 1;
        r
    }

    /// Routes hidden row `r` into output channel `ch` with weight `w`.
    pub fn out(&mut self, r: usize, ch: usize, w: f64) {
        self.w2[(ch, r)] += w;
    }

    pub fn finish(self) -> FfnWeights {
        FfnWeights { norm: NormKind::Rms, w1: self.w1, w2: self.w2, gamma: self.gamma, beta: self.beta }
    }
}

/// Square `d × d` attention weights filled entry by entry.
pub struct AttnBuilder {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

impl AttnBuilder {
    pub fn new(d: usize) -> Self {
        Self { wq: Matrix::zeros(d, d), wk: Matrix::zeros(d, d), wv: Matrix::zeros(d, d) }
    }

    /// Adds `Σ coef·x[src]` into output channel `dst` of the value map.
    pub fn value(&mut self, dst: usize, lin: &[(usize, f64)]) -> &mut Self {
        for &(c, w) in lin {
            self.wv[(dst, c)] += w;
        }
        self
    }

    pub fn finish(self, mode: AttnMode) -> AttentionWeights {
        AttentionWeights { mode, wq: self.wq, wk: self.wk, wv: self.wv, qk_norm: None }
    }
}
