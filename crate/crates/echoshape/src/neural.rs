//! From-scratch convolutional network for coefficient prediction: tensor
//! primitives, forward pass, exact backpropagation, SGD with momentum, and
//! a little-endian model file format.
//!
//! The architecture is fixed at two convolution-ReLU-pool layers followed
//! by two fully connected hidden layers and an affine output map. The input
//! is the real part of the measurement matrix, recentered and rescaled by
//! scalar statistics of the training set. Full-aperture data is periodic in
//! both receiver and incidence angle, so the convolutions pad periodically;
//! limited-aperture data uses zero padding instead.
//!
//! All parameters live in one flat vector with a fixed layout, which keeps
//! the optimizer, the gradient accumulation, and the serialization code
//! independent of the layer structure.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::ScatterData;
use crate::geometry::StarCoeffs;
use crate::linalg::Mat;
use crate::rng;

/// Number of convolutional layers.
const CONV_LAYERS: usize = 2;
/// Number of fully connected hidden layers.
const FC_LAYERS: usize = 2;

const MAGIC: &[u8; 5] = b"ISNN1";

/// Border handling for the convolution padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Wrap both axes; appropriate for full-aperture data.
    Periodic,
    /// Fill the border with zeros; appropriate for limited apertures.
    Zero,
}

impl PadMode {
    fn to_u32(self) -> u32 {
        match self {
            PadMode::Periodic => 0,
            PadMode::Zero => 1,
        }
    }

    fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(PadMode::Periodic),
            1 => Ok(PadMode::Zero),
            other => Err(Error::Format(format!("unknown pad mode tag {other}"))),
        }
    }
}

/// Network shape: input dimensions, channel and kernel sizes, hidden layer
/// widths, and the output Fourier content.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnnArch {
    pub n_t: usize,
    pub n_d: usize,
    /// Maximal Fourier mode of the predicted radius, output length 2M+1.
    pub m: usize,
    /// Channels per convolutional layer.
    pub n_c: usize,
    /// Padding width; the kernel is (2p+1) x (2p+1).
    pub p: usize,
    /// Widths of the two hidden fully connected layers.
    pub n1: usize,
    pub n2: usize,
    pub pad_mode: PadMode,
}

impl CnnArch {
    pub fn kernel_width(&self) -> usize {
        2 * self.p + 1
    }

    /// Length of the flattened tensor after the convolutional stage.
    pub fn flatten_len(&self) -> usize {
        (self.n_t >> CONV_LAYERS) * (self.n_d >> CONV_LAYERS) * self.n_c
    }

    pub fn output_len(&self) -> usize {
        2 * self.m + 1
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1 << CONV_LAYERS;
        if self.n_t % div != 0 || self.n_d % div != 0 {
            return Err(Error::Config(format!(
                "input dims {}x{} must be divisible by {div}",
                self.n_t, self.n_d
            )));
        }
        if self.n_c == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Config("channel and hidden widths must be positive".into()));
        }
        // the deepest conv layer sees an input halved once per prior layer
        let smallest = (self.n_t >> (CONV_LAYERS - 1)).min(self.n_d >> (CONV_LAYERS - 1));
        if self.pad_mode == PadMode::Periodic && self.p > smallest {
            return Err(Error::Config(format!(
                "padding {} exceeds the deepest layer size {smallest}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Clone, Debug)]
struct ParamLayout {
    conv_w: [std::ops::Range<usize>; CONV_LAYERS],
    conv_b: [std::ops::Range<usize>; CONV_LAYERS],
    fc_w: [std::ops::Range<usize>; FC_LAYERS],
    fc_b: [std::ops::Range<usize>; FC_LAYERS],
    out_w: std::ops::Range<usize>,
    out_b: std::ops::Range<usize>,
    total: usize,
}

impl ParamLayout {
    fn new(arch: &CnnArch) -> Self {
        let kk = arch.kernel_width() * arch.kernel_width();
        let mut pos = 0;
        let mut take = |len: usize| {
            let r = pos..pos + len;
            pos += len;
            r
        };
        let conv_w = [take(arch.n_c * kk), take(arch.n_c * arch.n_c * kk)];
        // biases are interleaved after each weight block in file order, but
        // grouping them here simplifies nothing; keep declaration order
        let conv_b = [take(arch.n_c), take(arch.n_c)];
        let n0 = arch.flatten_len();
        let fc_w = [take(arch.n1 * n0), take(arch.n2 * arch.n1)];
        let fc_b = [take(arch.n1), take(arch.n2)];
        let out_w = take(arch.output_len() * arch.n2);
        let out_b = take(arch.output_len());
        ParamLayout { conv_w, conv_b, fc_w, fc_b, out_w, out_b, total: pos }
    }
}

/// Trained network: architecture, flat parameter vector, and the input
/// normalization constants baked in at training time.
#[derive(Clone, Debug)]
pub struct CnnModel {
    pub arch: CnnArch,
    params: Vec<f64>,
    pub mu: f64,
    pub sigma0: f64,
}

/// Pads a matrix by `p` on every side, wrapping or zero-filling.
pub fn pad(x: &Mat, p: usize, mode: PadMode) -> Result<Mat> {
    let (m, n) = (x.rows(), x.cols());
    if mode == PadMode::Periodic && (p > m || p > n) {
        return Err(Error::Dimension(format!(
            "periodic padding {p} exceeds matrix dims {m}x{n}"
        )));
    }
    let out = Mat::from_fn(m + 2 * p, n + 2 * p, |i, j| match mode {
        PadMode::Zero => {
            if i < p || j < p || i >= m + p || j >= n + p {
                0.0
            } else {
                x.at(i - p, j - p)
            }
        }
        PadMode::Periodic => x.at((i + m - p) % m, (j + n - p) % n),
    });
    Ok(out)
}

/// Valid cross-correlation of kernel `w` against `x`.
pub fn cross_correlate(w: &Mat, x: &Mat) -> Result<Mat> {
    let (km, kn) = (w.rows(), w.cols());
    let (m, n) = (x.rows(), x.cols());
    if km > m || kn > n {
        return Err(Error::Dimension(format!(
            "kernel {km}x{kn} larger than input {m}x{n}"
        )));
    }
    let mut out = Mat::zeros(m - km + 1, n - kn + 1);
    correlate_acc(w, x, &mut out);
    Ok(out)
}

/// out[i][j] += sum_{a,b} w[a][b] * x[i+a][j+b]; dims must already agree.
fn correlate_acc(w: &Mat, x: &Mat, out: &mut Mat) {
    let (om, on) = (out.rows(), out.cols());
    let (km, kn) = (w.rows(), w.cols());
    for i in 0..om {
        let orow = out.row_mut(i);
        for a in 0..km {
            let xrow = x.row(i + a);
            for b in 0..kn {
                let c = w.at(a, b);
                if c == 0.0 {
                    continue;
                }
                let xs = &xrow[b..b + on];
                for (o, v) in orow.iter_mut().zip(xs) {
                    *o += c * v;
                }
            }
        }
    }
}

/// Non-overlapping 2x2 average pooling; trailing odd row/column dropped.
pub fn avg_pool(x: &Mat) -> Mat {
    Mat::from_fn(x.rows() / 2, x.cols() / 2, |i, j| {
        0.25 * (x.at(2 * i, 2 * j) + x.at(2 * i, 2 * j + 1) + x.at(2 * i + 1, 2 * j) + x.at(2 * i + 1, 2 * j + 1))
    })
}

/// Everything the backward pass needs from one forward evaluation.
struct Trace {
    /// Padded inputs of each conv layer, one Mat per input channel.
    padded: [Vec<Mat>; CONV_LAYERS],
    /// Pre-activation outputs of each conv layer, per output channel.
    conv_pre: [Vec<Mat>; CONV_LAYERS],
    /// Flattened output of the convolutional stage.
    x0: Vec<f64>,
    /// Pre-activations of the fully connected layers.
    fc_pre: [Vec<f64>; FC_LAYERS],
    /// Post-activation hidden vectors.
    fc_act: [Vec<f64>; FC_LAYERS],
    output: Vec<f64>,
}

fn relu_mat(x: &Mat) -> Mat {
    Mat::from_fn(x.rows(), x.cols(), |i, j| x.at(i, j).max(0.0))
}

impl CnnModel {
    /// Fresh model with all parameters zero.
    pub fn zeroed(arch: CnnArch) -> Result<CnnModel> {
        arch.validate()?;
        let layout = ParamLayout::new(&arch);
        Ok(CnnModel { arch, params: vec![0.0; layout.total], mu: 0.0, sigma0: 1.0 })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Flat view of every weight and bias, in layout order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable flat view, for external optimizers and gradient checks.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.arch)
    }

    /// Kernel for conv layer `l`, output channel `k`, input channel `j`,
    /// viewed as a dense matrix.
    fn conv_kernel(&self, layout: &ParamLayout, l: usize, k: usize, j: usize) -> Mat {
        let nk = self.arch.kernel_width();
        let c_in = if l == 0 { 1 } else { self.arch.n_c };
        let base = layout.conv_w[l].start + (k * c_in + j) * nk * nk;
        let mut m = Mat::zeros(nk, nk);
        m.as_mut_slice().copy_from_slice(&self.params[base..base + nk * nk]);
        m
    }

    fn forward_trace(&self, input: &Mat) -> Result<Trace> {
        let arch = &self.arch;
        if input.rows() != arch.n_t || input.cols() != arch.n_d {
            return Err(Error::Dimension(format!(
                "input is {}x{}, architecture expects {}x{}",
                input.rows(),
                input.cols(),
                arch.n_t,
                arch.n_d
            )));
        }
        let layout = self.layout();
        let mut current: Vec<Mat> = vec![input.clone()];
        let mut padded_store: [Vec<Mat>; CONV_LAYERS] = [Vec::new(), Vec::new()];
        let mut pre_store: [Vec<Mat>; CONV_LAYERS] = [Vec::new(), Vec::new()];

        for l in 0..CONV_LAYERS {
            let padded: Vec<Mat> = current
                .iter()
                .map(|x| pad(x, arch.p, arch.pad_mode))
                .collect::<Result<_>>()?;
            let (m, n) = (current[0].rows(), current[0].cols());
            let mut pre = Vec::with_capacity(arch.n_c);
            for k in 0..arch.n_c {
                let bias = self.params[layout.conv_b[l].start + k];
                let mut acc = Mat::from_fn(m, n, |_, _| bias);
                for (j, xp) in padded.iter().enumerate() {
                    let w = self.conv_kernel(&layout, l, k, j);
                    correlate_acc(&w, xp, &mut acc);
                }
                pre.push(acc);
            }
            current = pre.iter().map(|x| avg_pool(&relu_mat(x))).collect();
            padded_store[l] = padded;
            pre_store[l] = pre;
        }

        // channel-major flatten: channel index outermost, then row, column
        let mut x0 = Vec::with_capacity(arch.flatten_len());
        for ch in &current {
            x0.extend_from_slice(ch.as_slice());
        }

        let mut fc_pre: [Vec<f64>; FC_LAYERS] = [Vec::new(), Vec::new()];
        let mut fc_act: [Vec<f64>; FC_LAYERS] = [Vec::new(), Vec::new()];
        let mut vec_in = x0.clone();
        for l in 0..FC_LAYERS {
            let (rows, cols) = if l == 0 {
                (arch.n1, arch.flatten_len())
            } else {
                (arch.n2, arch.n1)
            };
            let w = &self.params[layout.fc_w[l].clone()];
            let b = &self.params[layout.fc_b[l].clone()];
            let mut pre = vec![0.0; rows];
            for (r, pre_r) in pre.iter_mut().enumerate() {
                let wrow = &w[r * cols..(r + 1) * cols];
                let mut s = b[r];
                for (wv, xv) in wrow.iter().zip(&vec_in) {
                    s += wv * xv;
                }
                *pre_r = s;
            }
            let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
            vec_in = act.clone();
            fc_pre[l] = pre;
            fc_act[l] = act;
        }

        let out_len = arch.output_len();
        let w = &self.params[layout.out_w.clone()];
        let b = &self.params[layout.out_b.clone()];
        let mut output = vec![0.0; out_len];
        for (r, out_r) in output.iter_mut().enumerate() {
            let wrow = &w[r * arch.n2..(r + 1) * arch.n2];
            let mut s = b[r];
            for (wv, xv) in wrow.iter().zip(&fc_act[FC_LAYERS - 1]) {
                s += wv * xv;
            }
            *out_r = s;
        }
        Ok(Trace { padded: padded_store, conv_pre: pre_store, x0, fc_pre, fc_act, output })
    }

    /// Serializes to the ISNN1 little-endian format.
    pub fn save(&self, w: &mut impl Write) -> io::Result<()> {
        let a = &self.arch;
        w.write_all(MAGIC)?;
        for v in [
            CONV_LAYERS as u32,
            FC_LAYERS as u32,
            a.n_c as u32,
            a.p as u32,
            a.kernel_width() as u32,
            a.n_t as u32,
            a.n_d as u32,
            a.m as u32,
            a.n1 as u32,
            a.n2 as u32,
            a.pad_mode.to_u32(),
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.mu.to_le_bytes())?;
        w.write_all(&self.sigma0.to_le_bytes())?;

        let layout = self.layout();
        let nk = a.kernel_width() as u32;
        let blocks: Vec<(Vec<u32>, &std::ops::Range<usize>)> = vec![
            (vec![a.n_c as u32, 1, nk, nk], &layout.conv_w[0]),
            (vec![a.n_c as u32], &layout.conv_b[0]),
            (vec![a.n_c as u32, a.n_c as u32, nk, nk], &layout.conv_w[1]),
            (vec![a.n_c as u32], &layout.conv_b[1]),
            (vec![a.n1 as u32, a.flatten_len() as u32], &layout.fc_w[0]),
            (vec![a.n1 as u32], &layout.fc_b[0]),
            (vec![a.n2 as u32, a.n1 as u32], &layout.fc_w[1]),
            (vec![a.n2 as u32], &layout.fc_b[1]),
            (vec![a.output_len() as u32, a.n2 as u32], &layout.out_w),
            (vec![a.output_len() as u32], &layout.out_b),
        ];
        for (dims, range) in blocks {
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in dims {
                w.write_all(&d.to_le_bytes())?;
            }
            for v in &self.params[range.clone()] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)?;
        Ok(())
    }

    /// Reads a model back from the ISNN1 format, validating structure.
    pub fn load(r: &mut impl Read) -> Result<CnnModel> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic; not a model file".into()));
        }
        let mut u32s = [0u32; 11];
        for v in &mut u32s {
            *v = read_u32(r)?;
        }
        let [l, lp, n_c, p, n_k, n_t, n_d, m, n1, n2, pad_tag] = u32s;
        if l as usize != CONV_LAYERS || lp as usize != FC_LAYERS {
            return Err(Error::Format(format!(
                "unsupported layer counts {l}/{lp}; expected {CONV_LAYERS}/{FC_LAYERS}"
            )));
        }
        if n_k != 2 * p + 1 {
            return Err(Error::Format(format!("kernel width {n_k} inconsistent with padding {p}")));
        }
        let arch = CnnArch {
            n_t: n_t as usize,
            n_d: n_d as usize,
            m: m as usize,
            n_c: n_c as usize,
            p: p as usize,
            n1: n1 as usize,
            n2: n2 as usize,
            pad_mode: PadMode::from_u32(pad_tag)?,
        };
        arch.validate()?;
        let mu = read_f64(r)?;
        let sigma0 = read_f64(r)?;
        if !(sigma0 > 0.0) {
            return Err(Error::Format(format!("normalization scale {sigma0} must be positive")));
        }
        let mut model = CnnModel::zeroed(arch)?;
        model.mu = mu;
        model.sigma0 = sigma0;
        let a = model.arch.clone();
        let nk = a.kernel_width() as u32;
        let layout = model.layout();
        let expected: Vec<(Vec<u32>, std::ops::Range<usize>)> = vec![
            (vec![a.n_c as u32, 1, nk, nk], layout.conv_w[0].clone()),
            (vec![a.n_c as u32], layout.conv_b[0].clone()),
            (vec![a.n_c as u32, a.n_c as u32, nk, nk], layout.conv_w[1].clone()),
            (vec![a.n_c as u32], layout.conv_b[1].clone()),
            (vec![a.n1 as u32, a.flatten_len() as u32], layout.fc_w[0].clone()),
            (vec![a.n1 as u32], layout.fc_b[0].clone()),
            (vec![a.n2 as u32, a.n1 as u32], layout.fc_w[1].clone()),
            (vec![a.n2 as u32], layout.fc_b[1].clone()),
            (vec![a.output_len() as u32, a.n2 as u32], layout.out_w.clone()),
            (vec![a.output_len() as u32], layout.out_b.clone()),
        ];
        for (dims, range) in expected {
            let ndims = read_u32(r)? as usize;
            if ndims != dims.len() {
                return Err(Error::Format(format!(
                    "parameter block has {ndims} dims, expected {}",
                    dims.len()
                )));
            }
            for want in &dims {
                let got = read_u32(r)?;
                if got != *want {
                    return Err(Error::Format(format!(
                        "parameter dimension {got} does not match architecture ({want})"
                    )));
                }
            }
            for slot in &mut model.params[range] {
                *slot = read_f64(r)?;
            }
        }
        Ok(model)
    }

    pub fn load_from(path: impl AsRef<Path>) -> Result<CnnModel> {
        let mut f = io::BufReader::new(std::fs::File::open(path)?);
        CnnModel::load(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Runs the network on an already normalized input matrix.
pub fn cnn_forward(model: &CnnModel, input: &Mat) -> Result<Vec<f64>> {
    Ok(model.forward_trace(input)?.output)
}

/// Smallest absolute pre-activation over all ReLU units for this input.
/// Near-zero margins make finite-difference gradient checks unreliable, so
/// checks should resample when this is tiny.
pub fn activation_margin(model: &CnnModel, input: &Mat) -> Result<f64> {
    let trace = model.forward_trace(input)?;
    let mut margin = f64::INFINITY;
    for l in 0..CONV_LAYERS {
        for ch in &trace.conv_pre[l] {
            for v in ch.as_slice() {
                margin = margin.min(v.abs());
            }
        }
    }
    for l in 0..FC_LAYERS {
        for v in &trace.fc_pre[l] {
            margin = margin.min(v.abs());
        }
    }
    Ok(margin)
}

/// Gradient of the squared-error loss 0.5*||forward(input) - target||^2
/// with respect to every parameter, in flat layout order.
pub fn backprop(model: &CnnModel, input: &Mat, target: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.parameter_count()];
    backprop_into(model, input, target, &mut grad)?;
    Ok(grad)
}

/// Accumulates the loss gradient into `grad` and returns the sample loss.
fn backprop_into(
    model: &CnnModel,
    input: &Mat,
    target: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    let arch = &model.arch;
    if target.len() != arch.output_len() {
        return Err(Error::Dimension(format!(
            "target has {} entries, expected {}",
            target.len(),
            arch.output_len()
        )));
    }
    let layout = model.layout();
    let trace = model.forward_trace(input)?;

    let d_out: Vec<f64> = trace.output.iter().zip(target).map(|(o, t)| o - t).collect();
    let loss = 0.5 * d_out.iter().map(|v| v * v).sum::<f64>();

    // output affine layer
    let hidden = &trace.fc_act[FC_LAYERS - 1];
    let out_w = &model.params[layout.out_w.clone()];
    for (r, dr) in d_out.iter().enumerate() {
        grad[layout.out_b.start + r] += dr;
        let base = layout.out_w.start + r * arch.n2;
        for (c, h) in hidden.iter().enumerate() {
            grad[base + c] += dr * h;
        }
    }
    let mut d_vec = vec![0.0; arch.n2];
    for (r, dr) in d_out.iter().enumerate() {
        let wrow = &out_w[r * arch.n2..(r + 1) * arch.n2];
        for (c, wv) in wrow.iter().enumerate() {
            d_vec[c] += wv * dr;
        }
    }

    // fully connected layers, deepest first
    for l in (0..FC_LAYERS).rev() {
        let cols = if l == 0 { arch.flatten_len() } else { arch.n1 };
        let below: &[f64] = if l == 0 { &trace.x0 } else { &trace.fc_act[l - 1] };
        let mut d_pre = d_vec;
        for (r, dp) in d_pre.iter_mut().enumerate() {
            if trace.fc_pre[l][r] <= 0.0 {
                *dp = 0.0;
            }
        }
        let w = &model.params[layout.fc_w[l].clone()];
        for (r, dp) in d_pre.iter().enumerate() {
            if *dp == 0.0 {
                continue;
            }
            grad[layout.fc_b[l].start + r] += dp;
            let base = layout.fc_w[l].start + r * cols;
            for (c, xv) in below.iter().enumerate() {
                grad[base + c] += dp * xv;
            }
        }
        let mut d_below = vec![0.0; cols];
        for (r, dp) in d_pre.iter().enumerate() {
            if *dp == 0.0 {
                continue;
            }
            let wrow = &w[r * cols..(r + 1) * cols];
            for (c, wv) in wrow.iter().enumerate() {
                d_below[c] += wv * dp;
            }
        }
        d_vec = d_below;
    }

    // unflatten into per-channel grids of the last pooled output
    let (gh, gw) = (arch.n_t >> CONV_LAYERS, arch.n_d >> CONV_LAYERS);
    let mut d_pooled: Vec<Mat> = (0..arch.n_c)
        .map(|ch| {
            let base = ch * gh * gw;
            Mat::from_fn(gh, gw, |i, j| d_vec[base + i * gw + j])
        })
        .collect();

    // convolutional layers, deepest first
    for l in (0..CONV_LAYERS).rev() {
        let c_in = if l == 0 { 1 } else { arch.n_c };
        let pre = &trace.conv_pre[l];
        let padded = &trace.padded[l];
        let (m, n) = (pre[0].rows(), pre[0].cols());
        let nk = arch.kernel_width();

        // pool backward then ReLU mask, channel by channel
        let d_pre: Vec<Mat> = d_pooled
            .iter()
            .zip(pre)
            .map(|(dp, pr)| {
                Mat::from_fn(m, n, |i, j| {
                    if pr.at(i, j) <= 0.0 || i / 2 >= dp.rows() || j / 2 >= dp.cols() {
                        0.0
                    } else {
                        0.25 * dp.at(i / 2, j / 2)
                    }
                })
            })
            .collect();

        let mut d_padded: Vec<Mat> =
            (0..c_in).map(|_| Mat::zeros(m + 2 * arch.p, n + 2 * arch.p)).collect();
        for (k, dpk) in d_pre.iter().enumerate() {
            grad[layout.conv_b[l].start + k] += dpk.as_slice().iter().sum::<f64>();
            for (j, xp) in padded.iter().enumerate() {
                // kernel gradient is the correlation of the output gradient
                // over the padded input
                let base = layout.conv_w[l].start + (k * c_in + j) * nk * nk;
                for a in 0..nk {
                    for b in 0..nk {
                        let mut s = 0.0;
                        for i in 0..m {
                            let xrow = xp.row(i + a);
                            let drow = dpk.row(i);
                            for (xv, dv) in xrow[b..b + n].iter().zip(drow) {
                                s += xv * dv;
                            }
                        }
                        grad[base + a * nk + b] += s;
                    }
                }
                // the input gradient of the first layer is never used
                if l == 0 {
                    continue;
                }
                let w = model.conv_kernel(&layout, l, k, j);
                let dx = &mut d_padded[j];
                for a in 0..nk {
                    for b in 0..nk {
                        let c = w.at(a, b);
                        if c == 0.0 {
                            continue;
                        }
                        for i in 0..m {
                            let drow = dpk.row(i);
                            let xrow = dx.row_mut(i + a);
                            for (xv, dv) in xrow[b..b + n].iter_mut().zip(drow) {
                                *xv += c * dv;
                            }
                        }
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        // adjoint of the padding: fold the border back into the core
        let (ph, pw) = (m, n);
        d_pooled = d_padded
            .into_iter()
            .map(|dxp| {
                let mut core = Mat::zeros(ph, pw);
                match arch.pad_mode {
                    PadMode::Zero => {
                        for i in 0..ph {
                            for j in 0..pw {
                                core.set(i, j, dxp.at(i + arch.p, j + arch.p));
                            }
                        }
                    }
                    PadMode::Periodic => {
                        for i in 0..ph + 2 * arch.p {
                            for j in 0..pw + 2 * arch.p {
                                let ci = (i + 2 * ph - arch.p) % ph;
                                let cj = (j + 2 * pw - arch.p) % pw;
                                let v = core.at(ci, cj) + dxp.at(i, j);
                                core.set(ci, cj, v);
                            }
                        }
                    }
                }
                core
            })
            .collect();
    }
    Ok(loss)
}

/// Computes scalar normalization statistics over every entry of every
/// matrix and returns the normalized copies along with (mu, sigma0).
pub fn normalize(raw: &[Mat]) -> Result<(Vec<Mat>, f64, f64)> {
    if raw.is_empty() {
        return Err(Error::Dimension("cannot normalize an empty dataset".into()));
    }
    let count: usize = raw.iter().map(|m| m.as_slice().len()).sum();
    let mean = raw.iter().flat_map(|m| m.as_slice()).sum::<f64>() / count as f64;
    let var = raw
        .iter()
        .flat_map(|m| m.as_slice())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    let normalized = raw
        .iter()
        .map(|m| Mat::from_fn(m.rows(), m.cols(), |i, j| (m.at(i, j) - mean) / sd))
        .collect();
    Ok((normalized, mean, sd))
}

/// Normalized training inputs with their coefficient targets.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub inputs: Vec<Mat>,
    pub targets: Vec<Vec<f64>>,
    pub mu: f64,
    pub sigma0: f64,
}

impl TrainingSet {
    /// Builds a training set from raw (unnormalized) real input matrices.
    pub fn from_raw(raw: &[Mat], targets: Vec<Vec<f64>>) -> Result<TrainingSet> {
        if raw.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs vs {} targets",
                raw.len(),
                targets.len()
            )));
        }
        let (inputs, mu, sigma0) = normalize(raw)?;
        Ok(TrainingSet { inputs, targets, mu, sigma0 })
    }
}

/// SGD-with-momentum settings.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub n_epoch: usize,
    pub batch_size: usize,
    /// Learning rate for all but the final 100 epochs.
    pub lr_main: f64,
    /// Learning rate for the final 100 epochs.
    pub lr_tail: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_epoch: 1000,
            batch_size: 100,
            lr_main: 0.16,
            lr_tail: 0.08,
            momentum: 0.9,
            seed: 1,
        }
    }
}

/// Trains a fresh network on the given set. Initialization, shuffling, and
/// batching are all driven by the config seed, so equal inputs give
/// bitwise-equal models.
pub fn train(set: &TrainingSet, arch: &CnnArch, tc: &TrainConfig) -> Result<CnnModel> {
    arch.validate()?;
    if set.inputs.is_empty() {
        return Err(Error::Dimension("training set is empty".into()));
    }
    if tc.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    for t in &set.targets {
        if t.len() != arch.output_len() {
            return Err(Error::Dimension(format!(
                "target length {} does not match output {}",
                t.len(),
                arch.output_len()
            )));
        }
    }

    let mut model = CnnModel::zeroed(arch.clone())?;
    model.mu = set.mu;
    model.sigma0 = set.sigma0;
    init_glorot(&mut model, tc.seed);

    let n = set.inputs.len();
    let mut velocity = vec![0.0; model.parameter_count()];
    let mut grad = vec![0.0; model.parameter_count()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffler = rng::stream(tc.seed, "epoch-shuffle");

    for epoch in 0..tc.n_epoch {
        let lr = if epoch + 100 < tc.n_epoch { tc.lr_main } else { tc.lr_tail };
        rng::shuffle(&mut shuffler, &mut order);
        for batch in order.chunks(tc.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                backprop_into(&model, &set.inputs[idx], &set.targets[idx], &mut grad)?;
            }
            let inv = 1.0 / batch.len() as f64;
            for ((v, g), p) in velocity.iter_mut().zip(&grad).zip(model.params.iter_mut()) {
                *v = tc.momentum * *v - lr * g * inv;
                *p += *v;
            }
        }
    }
    Ok(model)
}

/// Uniform Glorot initialization over every parameter block, biases
/// included, driven by a dedicated seeded stream.
fn init_glorot(model: &mut CnnModel, seed: u64) {
    let arch = model.arch.clone();
    let layout = model.layout();
    let kk = arch.kernel_width() * arch.kernel_width();
    let n0 = arch.flatten_len();
    let out = arch.output_len();
    // (fan_in, fan_out) per layer; conv fans count kernel area times channels
    let fans: Vec<(std::ops::Range<usize>, f64, f64)> = vec![
        (layout.conv_w[0].clone(), kk as f64, (arch.n_c * kk) as f64),
        (layout.conv_b[0].clone(), kk as f64, (arch.n_c * kk) as f64),
        (layout.conv_w[1].clone(), (arch.n_c * kk) as f64, (arch.n_c * kk) as f64),
        (layout.conv_b[1].clone(), (arch.n_c * kk) as f64, (arch.n_c * kk) as f64),
        (layout.fc_w[0].clone(), n0 as f64, arch.n1 as f64),
        (layout.fc_b[0].clone(), n0 as f64, arch.n1 as f64),
        (layout.fc_w[1].clone(), arch.n1 as f64, arch.n2 as f64),
        (layout.fc_b[1].clone(), arch.n1 as f64, arch.n2 as f64),
        (layout.out_w.clone(), arch.n2 as f64, out as f64),
        (layout.out_b.clone(), arch.n2 as f64, out as f64),
    ];
    let mut r = rng::stream(seed, "glorot-init");
    for (range, fan_in, fan_out) in fans {
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        for slot in &mut model.params[range] {
            *slot = rng::uniform(&mut r, -bound, bound);
        }
    }
}

/// Applies the stored normalization to the real part of raw measurements
/// and runs the network; the result is packaged as radius coefficients.
pub fn predict(model: &CnnModel, raw: &ScatterData) -> Result<StarCoeffs> {
    let arch = &model.arch;
    if raw.n_receivers() != arch.n_t || raw.n_directions() != arch.n_d {
        return Err(Error::Dimension(format!(
            "measurements are {}x{} but the network expects {}x{}",
            raw.n_receivers(),
            raw.n_directions(),
            arch.n_t,
            arch.n_d
        )));
    }
    let input = Mat::from_fn(arch.n_t, arch.n_d, |i, j| {
        (raw.at(i, j).re - model.mu) / model.sigma0
    });
    StarCoeffs::new(cnn_forward(model, &input)?)
}
