//! Minimal dense f32 kernels used by every model module.
//!
//! Everything here is deterministic and single-threaded; values are plain
//! row-major buffers. Accumulation is done in `f32` throughout, and the
//! composed-operation tolerance used by callers is 1e-5 relative.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Matrix::new",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Empty matrix with a fixed column count, ready for `push_row`.
    pub fn empty(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::Shape {
                op: "Matrix::push_row",
                lhs: (self.rows, self.cols),
                rhs: (1, row.len()),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// Copies rows `[start, end)` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        debug_assert!(start <= end && end <= self.rows);
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Stacks `below` under `self`; column counts must agree.
    pub fn vstack(&self, below: &Matrix) -> Result<Matrix> {
        if self.cols != below.cols {
            return Err(Error::Shape {
                op: "Matrix::vstack",
                lhs: self.shape(),
                rhs: below.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + below.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&below.data);
        Ok(Matrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reserve_rows(&mut self, additional: usize) {
        self.data.reserve(additional * self.cols);
    }
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = b.row(k);
            for (o, &bkj) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Applies an `[in, out]` weight matrix and bias to a single row vector.
pub fn linear(x: &[f32], w: &Matrix, bias: &[f32]) -> Result<Vec<f32>> {
    if x.len() != w.rows || bias.len() != w.cols {
        return Err(Error::Shape {
            op: "linear",
            lhs: (1, x.len()),
            rhs: w.shape(),
        });
    }
    let mut out = bias.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        let wrow = w.row(i);
        for (o, &wij) in out.iter_mut().zip(wrow.iter()) {
            *o += xi * wij;
        }
    }
    Ok(out)
}

/// Numerically stable softmax over one row: max-subtraction, then exp and
/// normalize. Output sums to 1 within 1e-6 and preserves ordering.
pub fn softmax_row(v: &[f32]) -> Result<Vec<f32>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("softmax_row"));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("softmax_row"));
    }
    let max = v.iter().fold(f32::NEG_INFINITY, |m, &x| m.max(x));
    let mut out: Vec<f32> = v.iter().map(|&x| libm::expf(x - max)).collect();
    let sum: f32 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(out)
}

/// Layer normalization: zero-mean unit-variance over the vector, then an
/// elementwise affine map.
pub fn layer_norm(x: &[f32], gain: &[f32], bias: &[f32], eps: f32) -> Result<Vec<f32>> {
    if x.len() != gain.len() || x.len() != bias.len() {
        return Err(Error::Shape {
            op: "layer_norm",
            lhs: (1, x.len()),
            rhs: (1, gain.len().max(bias.len())),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("layer_norm"));
    }
    if eps <= 0.0 {
        return Err(Error::Contract("layer_norm requires eps > 0"));
    }
    let n = x.len() as f32;
    let mean: f32 = x.iter().sum::<f32>() / n;
    let var: f32 = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv = 1.0 / libm::sqrtf(var + eps);
    Ok(x.iter()
        .zip(gain.iter().zip(bias.iter()))
        .map(|(&v, (&g, &b))| (v - mean) * inv * g + b)
        .collect())
}

// ---------------------------------------------------------------------------
// Convolutional subsampling front end
// ---------------------------------------------------------------------------
//
// Two 2-D convolution layers over (time x feature), kernel 3x3, stride 2x2,
// ReLU after each, followed by a linear map onto d_model. Padding is fixed at
// one leading zero row/column per layer with overhang at the trailing edge,
// so one layer maps length T to ceil(T/2) and the stack maps T frames to
// ceil(T/4) encoder positions -- a pure function of T. The fixed padding also
// makes the stack prefix-stable: output row q depends only on input frames
// <= 4q+3, so rows already emitted never change as more frames arrive.

/// Overall frame-to-state subsampling ratio of the front end.
pub const SUBSAMPLE_RATIO: usize = 4;

/// Minimum number of frames accepted by [`conv_subsample`]: one full output
/// position at the nominal ratio.
pub const MIN_FRAMES: usize = SUBSAMPLE_RATIO;

/// Output length of one stride-2 layer.
#[inline]
pub fn conv_stage_out_len(t: usize) -> usize {
    t.div_ceil(2)
}

/// Encoder positions produced from `t` input frames: ceil(ceil(t/2)/2).
#[inline]
pub fn conv_out_len(t: usize) -> usize {
    conv_stage_out_len(conv_stage_out_len(t))
}

/// Borrowed view of the front-end tensors.
///
/// Kernel matrices are `[out_ch, in_ch*9]` with column index
/// `(c_in*3 + kh)*3 + kw`, where `kh` walks the three time taps and `kw` the
/// three feature taps. The projection is `[ch*f_out, d_model]` over the
/// channel-major flattening of the last stage's output.
pub struct ConvSubsampleWeights<'a> {
    pub conv1_weight: &'a Matrix,
    pub conv1_bias: &'a [f32],
    pub conv2_weight: &'a Matrix,
    pub conv2_bias: &'a [f32],
    pub proj_weight: &'a Matrix,
    pub proj_bias: &'a [f32],
}

/// One stride-2 3x3 convolution layer driven row by row.
///
/// A time row is a channel-major `[ch * freq]` buffer. The stage buffers just
/// enough input rows to finalize output rows, so residency is O(1) in the
/// stream length.
struct ConvStage {
    in_ch: usize,
    in_f: usize,
    out_ch: usize,
    out_f: usize,
    /// Retained input rows; `buf[0]` has absolute time index `base`.
    buf: Vec<Vec<f32>>,
    base: usize,
    received: usize,
    produced: usize,
}

impl ConvStage {
    fn new(in_ch: usize, in_f: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            in_f,
            out_ch,
            out_f: conv_stage_out_len(in_f),
            buf: Vec::new(),
            base: 0,
            received: 0,
            produced: 0,
        }
    }

    fn abs_row(&self, t: isize) -> Option<&[f32]> {
        if t < 0 {
            return None;
        }
        let t = t as usize;
        if t < self.base || t >= self.received {
            return None;
        }
        Some(&self.buf[t - self.base])
    }

    /// Computes output row `j` from input rows 2j-1..2j+1; rows outside the
    /// received range act as zeros.
    fn compute_row(&self, j: usize, weight: &Matrix, bias: &[f32]) -> Vec<f32> {
        debug_assert_eq!(weight.rows(), self.out_ch);
        debug_assert_eq!(weight.cols(), self.in_ch * 9);
        let mut out = vec![0.0f32; self.out_ch * self.out_f];
        for co in 0..self.out_ch {
            let w = weight.row(co);
            for g in 0..self.out_f {
                let mut acc = bias[co];
                for kh in 0..3 {
                    let t = 2 * j as isize - 1 + kh as isize;
                    let Some(row) = self.abs_row(t) else { continue };
                    for ci in 0..self.in_ch {
                        let wbase = (ci * 3 + kh) * 3;
                        for kw in 0..3 {
                            let f = 2 * g as isize - 1 + kw as isize;
                            if f < 0 || f as usize >= self.in_f {
                                continue;
                            }
                            acc += w[wbase + kw] * row[ci * self.in_f + f as usize];
                        }
                    }
                }
                // ReLU
                out[co * self.out_f + g] = acc.max(0.0);
            }
        }
        out
    }

    fn push(&mut self, row: Vec<f32>, weight: &Matrix, bias: &[f32], out: &mut Vec<Vec<f32>>) {
        debug_assert_eq!(row.len(), self.in_ch * self.in_f);
        self.buf.push(row);
        self.received += 1;
        // Row j is final once input row 2j+1 has arrived.
        while 2 * self.produced + 1 < self.received {
            let j = self.produced;
            out.push(self.compute_row(j, weight, bias));
            self.produced += 1;
            // Future rows never need inputs before 2j+1.
            let keep_from = 2 * j + 1;
            if keep_from > self.base {
                self.buf.drain(0..keep_from - self.base);
                self.base = keep_from;
            }
        }
    }

    fn close(&mut self, weight: &Matrix, bias: &[f32], out: &mut Vec<Vec<f32>>) {
        let total = conv_stage_out_len(self.received);
        while self.produced < total {
            let j = self.produced;
            out.push(self.compute_row(j, weight, bias));
            self.produced += 1;
        }
        self.buf.clear();
        self.base = self.received;
    }
}

/// Streaming driver for the full front end: frames in, `d_model` rows out.
///
/// The batch entry point [`conv_subsample`] runs this same pipeline, so batch
/// and incremental use produce bit-identical rows.
pub struct ConvStream {
    d_feat: usize,
    stage1: ConvStage,
    stage2: ConvStage,
    frames_in: usize,
    rows_out: usize,
    closed: bool,
}

impl ConvStream {
    pub fn new(d_feat: usize, d_model: usize) -> Self {
        let stage1 = ConvStage::new(1, d_feat, d_model);
        let f1 = stage1.out_f;
        let stage2 = ConvStage::new(d_model, f1, d_model);
        Self {
            d_feat,
            stage1,
            stage2,
            frames_in: 0,
            rows_out: 0,
            closed: false,
        }
    }

    pub fn frames_in(&self) -> usize {
        self.frames_in
    }

    pub fn rows_out(&self) -> usize {
        self.rows_out
    }

    /// Rows retained across both stages (residency instrumentation).
    pub fn resident_rows(&self) -> usize {
        self.stage1.buf.len() + self.stage2.buf.len()
    }

    fn project(&self, rows: Vec<Vec<f32>>, w: &ConvSubsampleWeights, out: &mut Vec<Vec<f32>>) -> Result<()> {
        for row in rows {
            out.push(linear(&row, w.proj_weight, w.proj_bias)?);
        }
        Ok(())
    }

    /// Feeds one acoustic frame; finalized encoder-input rows are appended to
    /// `out`.
    pub fn push_frame(&mut self, frame: &[f32], w: &ConvSubsampleWeights, out: &mut Vec<Vec<f32>>) -> Result<()> {
        if self.closed {
            return Err(Error::Contract("ConvStream::push_frame after close"));
        }
        if frame.len() != self.d_feat {
            return Err(Error::Shape {
                op: "ConvStream::push_frame",
                lhs: (1, frame.len()),
                rhs: (1, self.d_feat),
            });
        }
        self.frames_in += 1;
        let mut mid = Vec::new();
        self.stage1.push(frame.to_vec(), w.conv1_weight, w.conv1_bias, &mut mid);
        let mut raw = Vec::new();
        for row in mid {
            self.stage2.push(row, w.conv2_weight, w.conv2_bias, &mut raw);
        }
        self.rows_out += raw.len();
        self.project(raw, w, out)
    }

    /// Marks the end of the stream and flushes the trailing rows.
    pub fn close(&mut self, w: &ConvSubsampleWeights, out: &mut Vec<Vec<f32>>) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let mut mid = Vec::new();
        self.stage1.close(w.conv1_weight, w.conv1_bias, &mut mid);
        let mut raw = Vec::new();
        for row in mid {
            self.stage2.push(row, w.conv2_weight, w.conv2_bias, &mut raw);
        }
        self.stage2.close(w.conv2_weight, w.conv2_bias, &mut raw);
        self.rows_out += raw.len();
        self.project(raw, w, out)
    }
}

/// Subsamples a whole `[T, d_feat]` feature matrix to `[ceil(T/4), d_model]`.
pub fn conv_subsample(features: &Matrix, w: &ConvSubsampleWeights) -> Result<Matrix> {
    if features.rows() < MIN_FRAMES {
        return Err(Error::InsufficientFrames {
            required: MIN_FRAMES,
            got: features.rows(),
        });
    }
    let d_model = w.proj_weight.cols();
    let mut stream = ConvStream::new(features.cols(), d_model);
    let mut rows = Vec::with_capacity(conv_out_len(features.rows()));
    for t in 0..features.rows() {
        stream.push_frame(features.row(t), w, &mut rows)?;
    }
    stream.close(w, &mut rows)?;
    let mut out = Matrix::empty(d_model);
    out.reserve_rows(rows.len());
    for row in &rows {
        out.push_row(row)?;
    }
    Ok(out)
}
