//! Dense tensor substrate for channel attention.
//!
//! Feature maps are stored channel-major (`index = c·H·W + y·W + x`), which
//! keeps every per-channel reduction a contiguous slice. All types are
//! generic over the scalar so the same forward code runs in `f32` for
//! inference and in `f64` for finite-difference verification.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point scalar usable by the tensor types.
pub trait Real: Float + Debug + Default + Send + Sync + Sum + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

fn check_finite<T: Real>(data: &[T], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("{what}: element {i} is not finite"))),
        None => Ok(()),
    }
}

/// A `C×H×W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Real = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "feature map dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} feature map needs {expected} elements, got {}",
                data.len()
            )));
        }
        check_finite(&data, "feature map")?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(
            channels > 0 && height > 0 && width > 0,
            "dimensions must be positive"
        );
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    /// Builds a map without re-validating finiteness. Dimensions must already agree.
    pub(crate) fn from_raw(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The `H×W` slice of channel `c`.
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.plane_len())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Elementwise combination of two maps of identical shape.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_shape(other, "elementwise operands")?;
        Ok(self.zip_unchecked(other, f))
    }

    pub(crate) fn zip_unchecked(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self::from_raw(
            self.channels,
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Multiplies every element of channel `c` by `gains[c]`.
    pub fn scale_channels(&self, gains: &ChannelVector<T>) -> Result<Self> {
        if gains.len() != self.channels {
            return Err(Error::Shape(format!(
                "channel gains of length {} applied to {} channels",
                gains.len(),
                self.channels
            )));
        }
        let n = self.plane_len();
        let mut data = Vec::with_capacity(self.data.len());
        for (plane, &g) in self.data.chunks_exact(n).zip(gains.data()) {
            data.extend(plane.iter().map(|&v| v * g));
        }
        Ok(Self::from_raw(self.channels, self.height, self.width, data))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn cast<U: Real>(&self) -> FeatureMap<U> {
        FeatureMap::from_raw(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other, "comparison")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }
}

/// A length-`C` per-channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector<T: Real = f32> {
    data: Vec<T>,
}

impl<T: Real> ChannelVector<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Shape("channel vector must be non-empty".into()));
        }
        check_finite(&data, "channel vector")?;
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "channel vector must be non-empty");
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub(crate) fn from_raw(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "channel vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Self::from_raw(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn cast<U: Real>(&self) -> ChannelVector<U> {
        ChannelVector::from_raw(self.data.iter().map(|v| U::from_f64(v.as_f64())).collect())
    }
}

/// Dense affine map `v ↦ W·v + b`. A 1×1 convolution over a `C×1×1` input is
/// exactly this map.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer<T: Real = f32> {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> AffineLayer<T> {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape(format!(
                "affine layer dimensions must be positive, got {in_dim}->{out_dim}"
            )));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "{out_dim}x{in_dim} weight matrix needs {} elements, got {}",
                in_dim * out_dim,
                weights.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias of length {} for output dimension {out_dim}",
                bias.len()
            )));
        }
        check_finite(&weights, "affine weights")?;
        check_finite(&bias, "affine bias")?;
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "dimensions must be positive");
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut layer = Self::zeros(dim, dim);
        for i in 0..dim {
            layer.weights[i * dim + i] = T::one();
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim
    }

    pub fn apply(&self, v: &ChannelVector<T>) -> Result<ChannelVector<T>> {
        if v.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "affine layer expects input of length {}, got {}",
                self.in_dim,
                v.len()
            )));
        }
        Ok(ChannelVector::from_raw(self.apply_slice(v.data())))
    }

    /// `W·x + b` for a raw slice of length `in_dim`.
    pub(crate) fn apply_slice(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }

    /// Adjoint of [`AffineLayer::apply`]: returns the input gradient and
    /// accumulates weight/bias gradients into `grad`.
    pub fn backward(
        &self,
        input: &ChannelVector<T>,
        grad_out: &ChannelVector<T>,
        grad: &mut AffineLayer<T>,
    ) -> Result<ChannelVector<T>> {
        if input.len() != self.in_dim || grad_out.len() != self.out_dim || !grad.same_shape(self) {
            return Err(Error::Shape(format!(
                "affine backward: layer {}->{}, input {}, upstream {}, gradient {}->{}",
                self.in_dim,
                self.out_dim,
                input.len(),
                grad_out.len(),
                grad.in_dim,
                grad.out_dim
            )));
        }
        Ok(ChannelVector::from_raw(self.backward_slice(
            input.data(),
            grad_out.data(),
            grad,
        )))
    }

    pub(crate) fn backward_slice(&self, x: &[T], g: &[T], grad: &mut AffineLayer<T>) -> Vec<T> {
        let mut grad_in = vec![T::zero(); self.in_dim];
        for (o, &go) in g.iter().enumerate() {
            grad.bias[o] = grad.bias[o] + go;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] = grow[i] + go * x[i];
                grad_in[i] = grad_in[i] + row[i] * go;
            }
        }
        grad_in
    }

    pub fn cast<U: Real>(&self) -> AffineLayer<U> {
        AffineLayer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: self
                .weights
                .iter()
                .map(|v| U::from_f64(v.as_f64()))
                .collect(),
            bias: self.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Global average pooling: one mean per channel.
pub fn gap<T: Real>(m: &FeatureMap<T>) -> ChannelVector<T> {
    let n = T::from_f64(m.plane_len() as f64);
    ChannelVector::from_raw(
        m.planes()
            .map(|p| p.iter().copied().sum::<T>() / n)
            .collect(),
    )
}

/// Global max pooling: one maximum per channel.
pub fn gmp<T: Real>(m: &FeatureMap<T>) -> ChannelVector<T> {
    let idx = gmp_argmax(m);
    ChannelVector::from_raw(m.planes().zip(&idx).map(|(p, &i)| p[i]).collect())
}

/// In-plane index of each channel's maximum. Ties resolve to the first position.
pub fn gmp_argmax<T: Real>(m: &FeatureMap<T>) -> Vec<usize> {
    m.planes()
        .map(|p| {
            let mut best = 0;
            for (i, &v) in p.iter().enumerate().skip(1) {
                if v > p[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn gap_backward<T: Real>(
    grad: &ChannelVector<T>,
    height: usize,
    width: usize,
) -> FeatureMap<T> {
    let n = height * width;
    let inv = T::one() / T::from_f64(n as f64);
    let mut data = Vec::with_capacity(grad.len() * n);
    for &g in grad.data() {
        data.extend(std::iter::repeat_n(g * inv, n));
    }
    FeatureMap::from_raw(grad.len(), height, width, data)
}

/// Routes each channel's gradient to the position that produced its maximum.
pub fn gmp_backward<T: Real>(
    argmax: &[usize],
    grad: &ChannelVector<T>,
    height: usize,
    width: usize,
) -> FeatureMap<T> {
    let n = height * width;
    let mut data = vec![T::zero(); grad.len() * n];
    for (c, (&i, &g)) in argmax.iter().zip(grad.data()).enumerate() {
        data[c * n + i] = g;
    }
    FeatureMap::from_raw(grad.len(), height, width, data)
}

pub(crate) fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(v: &ChannelVector<T>) -> ChannelVector<T> {
    v.map(sigmoid_scalar)
}

/// Gradient through the sigmoid, given its output.
pub fn sigmoid_backward<T: Real>(
    out: &ChannelVector<T>,
    grad: &ChannelVector<T>,
) -> Result<ChannelVector<T>> {
    out.zip_with(grad, |s, g| g * s * (T::one() - s))
}

pub fn relu<T: Real>(v: &ChannelVector<T>) -> ChannelVector<T> {
    v.map(|x| x.max(T::zero()))
}

/// Gradient through ReLU, given its input. The kink at zero takes gradient 0.
pub fn relu_backward<T: Real>(
    input: &ChannelVector<T>,
    grad: &ChannelVector<T>,
) -> Result<ChannelVector<T>> {
    input.zip_with(grad, |x, g| if x > T::zero() { g } else { T::zero() })
}

/// Two-way softmax taken independently per channel: `(e^a, e^b) / (e^a + e^b)`.
pub fn softmax_pair<T: Real>(
    a: &ChannelVector<T>,
    b: &ChannelVector<T>,
) -> Result<(ChannelVector<T>, ChannelVector<T>)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "softmax pair of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut pa = Vec::with_capacity(a.len());
    let mut pb = Vec::with_capacity(a.len());
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let m = x.max(y);
        let ex = (x - m).exp();
        let ey = (y - m).exp();
        let total = ex + ey;
        pa.push(ex / total);
        pb.push(ey / total);
    }
    Ok((ChannelVector::from_raw(pa), ChannelVector::from_raw(pb)))
}

/// Gradient through [`softmax_pair`], given its outputs and the upstream
/// gradients on each output.
pub fn softmax_pair_backward<T: Real>(
    pa: &ChannelVector<T>,
    pb: &ChannelVector<T>,
    ga: &ChannelVector<T>,
    gb: &ChannelVector<T>,
) -> Result<(ChannelVector<T>, ChannelVector<T>)> {
    let n = pa.len();
    if pb.len() != n || ga.len() != n || gb.len() != n {
        return Err(Error::Shape(
            "softmax backward operands differ in length".into(),
        ));
    }
    let mut da = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    for c in 0..n {
        let t = pa.data()[c] * pb.data()[c] * (ga.data()[c] - gb.data()[c]);
        da.push(t);
        db.push(-t);
    }
    Ok((ChannelVector::from_raw(da), ChannelVector::from_raw(db)))
}
