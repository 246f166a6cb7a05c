//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records each operation together with a closure that maps the
//! output gradient back to parent gradients. Nodes are appended in evaluation
//! order, so walking the tape backwards is a reverse topological traversal.
//! Everything is `f64`; graphs here are small (one sample at a time), so ops
//! favour clarity over blocking/SIMD tricks.

use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

type BackFn = Box<dyn Fn(&[Matrix], &Matrix) -> Vec<(usize, Matrix)>>;

#[derive(Default)]
pub struct Tape {
    vals: Vec<Matrix>,
    backs: Vec<Option<BackFn>>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for `id`, or zeros of the given shape when the node was not
    /// reached by the backward pass.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> Matrix {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Matrix::zeros(rows, cols),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.vals[id.0]
    }

    fn push(&mut self, value: Matrix, back: Option<BackFn>) -> NodeId {
        self.vals.push(value);
        self.backs.push(back);
        NodeId(self.vals.len() - 1)
    }

    /// Leaf node: parameter or constant. Gradients accumulate here but do not
    /// propagate further.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, None)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.vals[a.0].matmul(&self.vals[b.0]);
        let back: BackFn = Box::new(move |vals, g| {
            let da = g.matmul(&vals[b.0].transpose());
            let db = vals[a.0].transpose().matmul(g);
            vec![(a.0, da), (b.0, db)]
        });
        self.push(value, Some(back))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.vals[a.0].add(&self.vals[b.0]);
        let back: BackFn = Box::new(move |_, g| vec![(a.0, g.clone()), (b.0, g.clone())]);
        self.push(value, Some(back))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.vals[a.0].sub(&self.vals[b.0]);
        let back: BackFn = Box::new(move |_, g| vec![(a.0, g.clone()), (b.0, g.scale(-1.0))]);
        self.push(value, Some(back))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.vals[a.0].hadamard(&self.vals[b.0]);
        let back: BackFn = Box::new(move |vals, g| {
            vec![
                (a.0, g.hadamard(&vals[b.0])),
                (b.0, g.hadamard(&vals[a.0])),
            ]
        });
        self.push(value, Some(back))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.vals[a.0].scale(k);
        let back: BackFn = Box::new(move |_, g| vec![(a.0, g.scale(k))]);
        self.push(value, Some(back))
    }

    /// `a + bias` where `bias` is a column vector broadcast over the columns
    /// of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let av = &self.vals[a.0];
        let bv = &self.vals[bias.0];
        assert_eq!(bv.cols(), 1, "bias must be a column vector");
        assert_eq!(av.rows(), bv.rows(), "bias rows mismatch");
        let value = Matrix::from_fn(av.rows(), av.cols(), |r, c| av.get(r, c) + bv.get(r, 0));
        let back: BackFn = Box::new(move |_, g| {
            let mut db = Matrix::zeros(g.rows(), 1);
            for r in 0..g.rows() {
                let mut s = 0.0;
                for c in 0..g.cols() {
                    s += g.get(r, c);
                }
                db.set(r, 0, s);
            }
            vec![(a.0, g.clone()), (bias.0, db)]
        });
        self.push(value, Some(back))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.vals[a.0].map(|v| v.max(0.0));
        let back: BackFn = Box::new(move |vals, g| {
            vec![(a.0, g.zip(&vals[a.0], |gv, x| if x > 0.0 { gv } else { 0.0 }))]
        });
        self.push(value, Some(back))
    }

    pub fn tanh_of(&mut self, a: NodeId) -> NodeId {
        let value = self.vals[a.0].map(f64::tanh);
        let out = self.push(value, None);
        self.backs[out.0] = Some(Box::new(move |vals, g| {
            vec![(a.0, g.zip(&vals[out.0], |gv, y| gv * (1.0 - y * y)))]
        }));
        out
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.vals[a.0].map(|v| 1.0 / (1.0 + (-v).exp()));
        let out = self.push(value, None);
        self.backs[out.0] = Some(Box::new(move |vals, g| {
            vec![(a.0, g.zip(&vals[out.0], |gv, y| gv * y * (1.0 - y)))]
        }));
        out
    }

    /// Softmax along each row.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = &self.vals[a.0];
        let mut value = Matrix::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            let row = av.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (c, e) in exps.iter().enumerate() {
                value.set(r, c, e / z);
            }
        }
        let out = self.push(value, None);
        self.backs[out.0] = Some(Box::new(move |vals, g| {
            let y = &vals[out.0];
            let mut dx = Matrix::zeros(g.rows(), g.cols());
            for r in 0..g.rows() {
                let dot: f64 = (0..g.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                for c in 0..g.cols() {
                    dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                }
            }
            vec![(a.0, dx)]
        }));
        out
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.vals[a.0].transpose();
        let back: BackFn = Box::new(move |_, g| vec![(a.0, g.transpose())]);
        self.push(value, Some(back))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.vals[parts[0].0].cols();
        let total_rows: usize = parts.iter().map(|p| self.vals[p.0].rows()).sum();
        let mut value = Matrix::zeros(total_rows, cols);
        let mut offsets = Vec::with_capacity(parts.len());
        let mut r0 = 0;
        for p in parts {
            let pv = &self.vals[p.0];
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            offsets.push((p.0, r0, pv.rows()));
            for r in 0..pv.rows() {
                for c in 0..cols {
                    value.set(r0 + r, c, pv.get(r, c));
                }
            }
            r0 += pv.rows();
        }
        let back: BackFn = Box::new(move |_, g| {
            offsets
                .iter()
                .map(|&(pid, start, nrows)| {
                    let mut part = Matrix::zeros(nrows, g.cols());
                    for r in 0..nrows {
                        for c in 0..g.cols() {
                            part.set(r, c, g.get(start + r, c));
                        }
                    }
                    (pid, part)
                })
                .collect()
        });
        self.push(value, Some(back))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.vals[parts[0].0].rows();
        let total_cols: usize = parts.iter().map(|p| self.vals[p.0].cols()).sum();
        let mut value = Matrix::zeros(rows, total_cols);
        let mut offsets = Vec::with_capacity(parts.len());
        let mut c0 = 0;
        for p in parts {
            let pv = &self.vals[p.0];
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            offsets.push((p.0, c0, pv.cols()));
            for r in 0..rows {
                for c in 0..pv.cols() {
                    value.set(r, c0 + c, pv.get(r, c));
                }
            }
            c0 += pv.cols();
        }
        let back: BackFn = Box::new(move |_, g| {
            offsets
                .iter()
                .map(|&(pid, start, ncols)| {
                    let mut part = Matrix::zeros(g.rows(), ncols);
                    for r in 0..g.rows() {
                        for c in 0..ncols {
                            part.set(r, c, g.get(r, start + c));
                        }
                    }
                    (pid, part)
                })
                .collect()
        });
        self.push(value, Some(back))
    }

    /// Rows `r0..r1` of `a`.
    pub fn slice_rows(&mut self, a: NodeId, r0: usize, r1: usize) -> NodeId {
        let av = &self.vals[a.0];
        assert!(r0 < r1 && r1 <= av.rows());
        let (rows, cols) = (av.rows(), av.cols());
        let value = Matrix::from_fn(r1 - r0, cols, |r, c| av.get(r0 + r, c));
        let back: BackFn = Box::new(move |_, g| {
            let mut da = Matrix::zeros(rows, cols);
            for r in 0..g.rows() {
                for c in 0..cols {
                    da.set(r0 + r, c, g.get(r, c));
                }
            }
            vec![(a.0, da)]
        });
        self.push(value, Some(back))
    }

    /// Columns `c0..c1` of `a`.
    pub fn slice_cols(&mut self, a: NodeId, c0: usize, c1: usize) -> NodeId {
        let av = &self.vals[a.0];
        assert!(c0 < c1 && c1 <= av.cols());
        let (rows, cols) = (av.rows(), av.cols());
        let value = Matrix::from_fn(rows, c1 - c0, |r, c| av.get(r, c0 + c));
        let back: BackFn = Box::new(move |_, g| {
            let mut da = Matrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..g.cols() {
                    da.set(r, c0 + c, g.get(r, c));
                }
            }
            vec![(a.0, da)]
        });
        self.push(value, Some(back))
    }

    /// Column-vector mean of the selected columns of `a`.
    pub fn mean_cols(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        assert!(!indices.is_empty(), "mean over empty column set");
        let av = &self.vals[a.0];
        let n = indices.len() as f64;
        let mut value = Matrix::zeros(av.rows(), 1);
        for &j in indices {
            for r in 0..av.rows() {
                value.add_at(r, 0, av.get(r, j) / n);
            }
        }
        let idx: Vec<usize> = indices.to_vec();
        let (rows, cols) = (av.rows(), av.cols());
        let back: BackFn = Box::new(move |_, g| {
            let mut da = Matrix::zeros(rows, cols);
            for &j in &idx {
                for r in 0..rows {
                    da.add_at(r, j, g.get(r, 0) / n);
                }
            }
            vec![(a.0, da)]
        });
        self.push(value, Some(back))
    }

    /// Repeat a column vector `n` times side by side.
    pub fn replicate_cols(&mut self, a: NodeId, n: usize) -> NodeId {
        let av = &self.vals[a.0];
        assert_eq!(av.cols(), 1, "replicate_cols expects a column vector");
        let value = Matrix::from_fn(av.rows(), n, |r, _| av.get(r, 0));
        let back: BackFn = Box::new(move |_, g| {
            let mut da = Matrix::zeros(g.rows(), 1);
            for r in 0..g.rows() {
                let mut s = 0.0;
                for c in 0..g.cols() {
                    s += g.get(r, c);
                }
                da.set(r, 0, s);
            }
            vec![(a.0, da)]
        });
        self.push(value, Some(back))
    }

    /// Normalize every column to unit l2 norm; exactly-zero columns pass
    /// through unchanged.
    pub fn l2_normalize_cols(&mut self, a: NodeId) -> NodeId {
        let av = &self.vals[a.0];
        let mut value = av.clone();
        let mut norms = vec![0.0; av.cols()];
        for c in 0..av.cols() {
            let n: f64 = (0..av.rows())
                .map(|r| av.get(r, c) * av.get(r, c))
                .sum::<f64>()
                .sqrt();
            norms[c] = n;
            if n > 0.0 {
                for r in 0..av.rows() {
                    value.set(r, c, av.get(r, c) / n);
                }
            }
        }
        let out = self.push(value, None);
        self.backs[out.0] = Some(Box::new(move |vals, g| {
            let y = &vals[out.0];
            let mut dx = Matrix::zeros(g.rows(), g.cols());
            for c in 0..g.cols() {
                let n = norms[c];
                if n == 0.0 {
                    continue;
                }
                let dot: f64 = (0..g.rows()).map(|r| g.get(r, c) * y.get(r, c)).sum();
                for r in 0..g.rows() {
                    dx.set(r, c, (g.get(r, c) - y.get(r, c) * dot) / n);
                }
            }
            vec![(a.0, dx)]
        }));
        out
    }

    /// Normalize the whole matrix by its Frobenius norm (zero matrix passes
    /// through).
    pub fn l2_normalize_global(&mut self, a: NodeId) -> NodeId {
        let av = &self.vals[a.0];
        let n = av.frobenius_norm();
        let value = if n > 0.0 { av.scale(1.0 / n) } else { av.clone() };
        let out = self.push(value, None);
        self.backs[out.0] = Some(Box::new(move |vals, g| {
            if n == 0.0 {
                return vec![(a.0, Matrix::zeros(g.rows(), g.cols()))];
            }
            let y = &vals[out.0];
            let dot: f64 = g
                .data()
                .iter()
                .zip(y.data().iter())
                .map(|(&gv, &yv)| gv * yv)
                .sum();
            let dx = g.zip(y, |gv, yv| (gv - yv * dot) / n);
            vec![(a.0, dx)]
        }));
        out
    }

    /// Same-length 1-D convolution over the column (time) axis.
    ///
    /// `x` is `[c_in x T]`, the kernel is stored flat as `[c_out x c_in*k]`
    /// with taps contiguous per input channel; `k` must be odd.
    pub fn conv1d_same(&mut self, x: NodeId, kernel: NodeId, k: usize) -> NodeId {
        assert!(k % 2 == 1, "kernel width must be odd");
        let xv = &self.vals[x.0];
        let kv = &self.vals[kernel.0];
        let c_in = xv.rows();
        let t = xv.cols();
        let c_out = kv.rows();
        assert_eq!(kv.cols(), c_in * k, "conv kernel shape mismatch");
        let pad = (k - 1) / 2;
        let mut value = Matrix::zeros(c_out, t);
        for o in 0..c_out {
            for tt in 0..t {
                let mut s = 0.0;
                for i in 0..c_in {
                    for d in 0..k {
                        let src = tt as isize + d as isize - pad as isize;
                        if src >= 0 && (src as usize) < t {
                            s += kv.get(o, i * k + d) * xv.get(i, src as usize);
                        }
                    }
                }
                value.set(o, tt, s);
            }
        }
        let back: BackFn = Box::new(move |vals, g| {
            let xv = &vals[x.0];
            let kv = &vals[kernel.0];
            let mut dk = Matrix::zeros(c_out, c_in * k);
            let mut dx = Matrix::zeros(c_in, t);
            for o in 0..c_out {
                for tt in 0..t {
                    let gv = g.get(o, tt);
                    if gv == 0.0 {
                        continue;
                    }
                    for i in 0..c_in {
                        for d in 0..k {
                            let src = tt as isize + d as isize - pad as isize;
                            if src >= 0 && (src as usize) < t {
                                dk.add_at(o, i * k + d, gv * xv.get(i, src as usize));
                                dx.add_at(i, src as usize, gv * kv.get(o, i * k + d));
                            }
                        }
                    }
                }
            }
            vec![(x.0, dx), (kernel.0, dk)]
        });
        self.push(value, Some(back))
    }

    /// Batch normalization over the time axis using the current input's
    /// per-channel statistics. Returns the node plus the batch mean/variance
    /// so the caller can fold them into running statistics.
    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> (NodeId, Vec<f64>, Vec<f64>) {
        let xv = &self.vals[x.0];
        let (c, t) = xv.shape();
        assert!(t >= 1);
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for r in 0..c {
            let mu: f64 = xv.row(r).iter().sum::<f64>() / t as f64;
            let v: f64 = xv.row(r).iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / t as f64;
            mean[r] = mu;
            var[r] = v;
        }
        let gv = &self.vals[gamma.0];
        let bv = &self.vals[beta.0];
        let mut value = Matrix::zeros(c, t);
        for r in 0..c {
            let inv = 1.0 / (var[r] + eps).sqrt();
            for col in 0..t {
                let xh = (xv.get(r, col) - mean[r]) * inv;
                value.set(r, col, gv.get(r, 0) * xh + bv.get(r, 0));
            }
        }
        let mean_c = mean.clone();
        let var_c = var.clone();
        let back: BackFn = Box::new(move |vals, g| {
            let xv = &vals[x.0];
            let gv = &vals[gamma.0];
            let mut dgamma = Matrix::zeros(c, 1);
            let mut dbeta = Matrix::zeros(c, 1);
            let mut dx = Matrix::zeros(c, t);
            for r in 0..c {
                let inv = 1.0 / (var_c[r] + eps).sqrt();
                let mut sum_g = 0.0;
                let mut sum_gxh = 0.0;
                for col in 0..t {
                    let xh = (xv.get(r, col) - mean_c[r]) * inv;
                    sum_g += g.get(r, col);
                    sum_gxh += g.get(r, col) * xh;
                }
                dbeta.set(r, 0, sum_g);
                dgamma.set(r, 0, sum_gxh);
                let mg = sum_g / t as f64;
                let mgxh = sum_gxh / t as f64;
                for col in 0..t {
                    let xh = (xv.get(r, col) - mean_c[r]) * inv;
                    dx.set(
                        r,
                        col,
                        gv.get(r, 0) * inv * (g.get(r, col) - mg - xh * mgxh),
                    );
                }
            }
            vec![(x.0, dx), (gamma.0, dgamma), (beta.0, dbeta)]
        });
        let node = self.push(value, Some(back));
        (node, mean, var)
    }

    /// Batch normalization with fixed (running) statistics: a per-channel
    /// affine map, so outputs do not depend on the batch.
    pub fn batchnorm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> NodeId {
        let xv = &self.vals[x.0];
        let (c, t) = xv.shape();
        assert_eq!(running_mean.len(), c);
        let gv = &self.vals[gamma.0];
        let bv = &self.vals[beta.0];
        let mut value = Matrix::zeros(c, t);
        for r in 0..c {
            let inv = 1.0 / (running_var[r] + eps).sqrt();
            for col in 0..t {
                let xh = (xv.get(r, col) - running_mean[r]) * inv;
                value.set(r, col, gv.get(r, 0) * xh + bv.get(r, 0));
            }
        }
        let rm: Vec<f64> = running_mean.to_vec();
        let rv: Vec<f64> = running_var.to_vec();
        let back: BackFn = Box::new(move |vals, g| {
            let xv = &vals[x.0];
            let gv = &vals[gamma.0];
            let mut dgamma = Matrix::zeros(c, 1);
            let mut dbeta = Matrix::zeros(c, 1);
            let mut dx = Matrix::zeros(c, t);
            for r in 0..c {
                let inv = 1.0 / (rv[r] + eps).sqrt();
                let mut sum_g = 0.0;
                let mut sum_gxh = 0.0;
                for col in 0..t {
                    let xh = (xv.get(r, col) - rm[r]) * inv;
                    sum_g += g.get(r, col);
                    sum_gxh += g.get(r, col) * xh;
                    dx.set(r, col, g.get(r, col) * gv.get(r, 0) * inv);
                }
                dbeta.set(r, 0, sum_g);
                dgamma.set(r, 0, sum_gxh);
            }
            vec![(x.0, dx), (gamma.0, dgamma), (beta.0, dbeta)]
        });
        self.push(value, Some(back))
    }

    /// Embedding lookup: `table` is `[vocab x d]`, output is `[d x len(ids)]`
    /// with one table row per output column.
    pub fn embed_cols(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let tv = &self.vals[table.0];
        let (vocab, d) = tv.shape();
        for &i in ids {
            assert!(i < vocab, "token id out of range");
        }
        let idv: Vec<usize> = ids.to_vec();
        let value = Matrix::from_fn(d, ids.len(), |r, c| tv.get(idv[c], r));
        let back: BackFn = Box::new(move |_, g| {
            let mut dt = Matrix::zeros(vocab, d);
            for (c, &row) in idv.iter().enumerate() {
                for r in 0..d {
                    dt.add_at(row, r, g.get(r, c));
                }
            }
            vec![(table.0, dt)]
        });
        self.push(value, Some(back))
    }

    pub fn abs_of(&mut self, a: NodeId) -> NodeId {
        let value = self.vals[a.0].map(f64::abs);
        let back: BackFn = Box::new(move |vals, g| {
            vec![(a.0, g.zip(&vals[a.0], |gv, x| gv * sign(x)))]
        });
        self.push(value, Some(back))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let av = &self.vals[a.0];
        let (rows, cols) = av.shape();
        let value = Matrix::scalar(av.sum());
        let back: BackFn = Box::new(move |_, g| {
            let gv = g.item();
            vec![(a.0, Matrix::from_fn(rows, cols, |_, _| gv))]
        });
        self.push(value, Some(back))
    }

    /// `ln(max(x, floor))`; gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, a: NodeId, floor: f64) -> NodeId {
        let value = self.vals[a.0].map(|v| v.max(floor).ln());
        let back: BackFn = Box::new(move |vals, g| {
            vec![(
                a.0,
                g.zip(&vals[a.0], |gv, x| if x > floor { gv / x } else { 0.0 }),
            )]
        });
        self.push(value, Some(back))
    }

    /// Reverse pass from `root`, seeded with ones. Returns gradients for every
    /// node reachable backwards from the root.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = vec![None; self.vals.len()];
        let rv = &self.vals[root.0];
        grads[root.0] = Some(Matrix::from_fn(rv.rows(), rv.cols(), |_, _| 1.0));
        for id in (0..=root.0).rev() {
            let g = match &grads[id] {
                Some(g) => g.clone(),
                None => continue,
            };
            if let Some(back) = &self.backs[id] {
                for (pid, contrib) in back(&self.vals, &g) {
                    match &mut grads[pid] {
                        Some(existing) => existing.add_assign(&contrib),
                        slot @ None => *slot = Some(contrib),
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Central finite differences of a scalar function of several matrices.
pub fn finite_diff(
    f: &mut dyn FnMut(&[Matrix]) -> f64,
    inputs: &[Matrix],
    step: f64,
) -> Vec<Matrix> {
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[i].rows(), inputs[i].cols());
        for idx in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[idx] += step;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[idx] -= step;
            g.data_mut()[idx] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
        grads.push(g);
    }
    grads
}

/// Largest elementwise relative error between two gradients.
pub fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
    assert!(a.same_shape(b));
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| (x - y).abs() / (x.abs() + y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}
