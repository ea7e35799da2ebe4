//! The involution operator on small dense 4-D tensors.
//!
//! An involution kernel is spatial-specific and channel-shared: every pixel
//! `(i, j)` carries its own `K x K` window per channel group, generated from
//! that pixel's own channel vector by a reduce-nonlinearity-expand map.
//! Output pixel `(i, j)` of channel `k` is the zero-padded `K x K`
//! neighborhood of channel `k` weighted by group `floor(k G / C)`'s kernel
//! at `(i, j)`.
//!
//! Two forward paths are exposed on purpose: [`involute`] (windowed, skips
//! the padding region) and [`involute_reference`] (literal five-nested-loop
//! transcription). They are independent routes to the same sum and are
//! checked against each other by the verification command and the test
//! suites.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InvolutionError {
    #[error("data length {got} does not match dims {dims:?} ({want} elements)")]
    DataLength {
        dims: Vec<usize>,
        want: usize,
        got: usize,
    },
    #[error("all dims must be >= 1, got {0:?}")]
    ZeroDim(Vec<usize>),
    #[error("kernel size must be odd, got {0}")]
    EvenKernelSize(usize),
    #[error("kernel spatial dims ({kh}, {kw}) do not match input ({h}, {w})")]
    SpatialMismatch {
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    },
    #[error("channels ({c}) not divisible by groups ({g})")]
    ChannelsNotDivisible { c: usize, g: usize },
    #[error("channels ({c}) not divisible by reduction ({r})")]
    ReductionMismatch { c: usize, r: usize },
    #[error("kernel generation expects a single-item batch, got {0}")]
    BatchNotSingleton(usize),
    #[error("channel count {got} does not match generator ({want})")]
    ChannelMismatch { want: usize, got: usize },
    #[error("weight `{name}` has length {got}, expected {want}")]
    WeightLength {
        name: &'static str,
        want: usize,
        got: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic in tensor file (expected \"TNS4\")")]
    BadMagic,
}

/// Dense `(N, C, H, W)` tensor in row-major order, `f64` throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: (usize, usize, usize, usize), data: Vec<f64>) -> Result<Self, InvolutionError> {
        let (n, c, h, w) = dims;
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(InvolutionError::ZeroDim(vec![n, c, h, w]));
        }
        let want = n * c * h * w;
        if data.len() != want {
            return Err(InvolutionError::DataLength {
                dims: vec![n, c, h, w],
                want,
                got: data.len(),
            });
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn zeros(dims: (usize, usize, usize, usize)) -> Result<Self, InvolutionError> {
        let len = dims.0 * dims.1 * dims.2 * dims.3;
        Self::new(dims, vec![0.0; len])
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn idx(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.c + c) * self.h + i) * self.w + j
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(n, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, i: usize, j: usize, v: f64) {
        let k = self.idx(n, c, i, j);
        self.data[k] = v;
    }

    pub fn random(
        dims: (usize, usize, usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self, InvolutionError> {
        let len = dims.0 * dims.1 * dims.2 * dims.3;
        let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(dims, data)
    }

    /// Write in the fixture format: magic `TNS4`, four little-endian `u32`
    /// dims, then the data as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<(), InvolutionError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(b"TNS4")?;
        for d in [self.n, self.c, self.h, self.w] {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, InvolutionError> {
        let mut inp = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        inp.read_exact(&mut magic)?;
        if &magic != b"TNS4" {
            return Err(InvolutionError::BadMagic);
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let mut buf = [0u8; 4];
            inp.read_exact(&mut buf)?;
            *d = u32::from_le_bytes(buf) as usize;
        }
        let len = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            inp.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Self::new((dims[0], dims[1], dims[2], dims[3]), data)
    }
}

/// Per-pixel, per-group `K x K` kernels with layout `(H, W, K, K, G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionKernel {
    h: usize,
    w: usize,
    k: usize,
    g: usize,
    data: Vec<f64>,
}

impl InvolutionKernel {
    pub fn new(
        (h, w, k, g): (usize, usize, usize, usize),
        data: Vec<f64>,
    ) -> Result<Self, InvolutionError> {
        if h == 0 || w == 0 || k == 0 || g == 0 {
            return Err(InvolutionError::ZeroDim(vec![h, w, k, g]));
        }
        if k.is_multiple_of(2) {
            return Err(InvolutionError::EvenKernelSize(k));
        }
        let want = h * w * k * k * g;
        if data.len() != want {
            return Err(InvolutionError::DataLength {
                dims: vec![h, w, k, k, g],
                want,
                got: data.len(),
            });
        }
        Ok(Self { h, w, k, g, data })
    }

    /// Kernel that reproduces its input: 1 at the window center, 0 elsewhere.
    pub fn delta(h: usize, w: usize, k: usize, g: usize) -> Result<Self, InvolutionError> {
        let mut kernel = Self::new((h, w, k, g), vec![0.0; h * w * k * k * g])?;
        let mid = k / 2;
        for i in 0..h {
            for j in 0..w {
                for grp in 0..g {
                    kernel.set(i, j, mid, mid, grp, 1.0);
                }
            }
        }
        Ok(kernel)
    }

    pub fn random(
        dims: (usize, usize, usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self, InvolutionError> {
        let (h, w, k, g) = dims;
        let data = (0..h * w * k * k * g)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Self::new(dims, data)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.h, self.w, self.k, self.g)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, u: usize, v: usize, g: usize) -> usize {
        (((i * self.w + j) * self.k + u) * self.k + v) * self.g + g
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, u: usize, v: usize, g: usize) -> f64 {
        self.data[self.idx(i, j, u, v, g)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, u: usize, v: usize, g: usize, val: f64) {
        let k = self.idx(i, j, u, v, g);
        self.data[k] = val;
    }
}

fn check_apply(x: &Tensor4, kernel: &InvolutionKernel) -> Result<(), InvolutionError> {
    if kernel.h != x.h || kernel.w != x.w {
        return Err(InvolutionError::SpatialMismatch {
            kh: kernel.h,
            kw: kernel.w,
            h: x.h,
            w: x.w,
        });
    }
    if !x.c.is_multiple_of(kernel.g) {
        return Err(InvolutionError::ChannelsNotDivisible {
            c: x.c,
            g: kernel.g,
        });
    }
    Ok(())
}

/// Apply the involution kernel: same-shape output, zero padding of
/// `K/2` at the borders, group index `floor(k G / C)` with 0-based `k`.
pub fn involute(x: &Tensor4, kernel: &InvolutionKernel) -> Result<Tensor4, InvolutionError> {
    check_apply(x, kernel)?;
    let (n, c, h, w) = x.dims();
    let k = kernel.k;
    let half = k / 2;
    let mut out = Tensor4::zeros((n, c, h, w))?;
    for b in 0..n {
        for ch in 0..c {
            let grp = ch * kernel.g / c;
            for i in 0..h {
                // clip the window once per row; zero padding contributes nothing
                let u_lo = half.saturating_sub(i);
                let u_hi = (k - 1).min(h - 1 + half - i);
                for j in 0..w {
                    let v_lo = half.saturating_sub(j);
                    let v_hi = (k - 1).min(w - 1 + half - j);
                    let mut acc = 0.0;
                    for u in u_lo..=u_hi {
                        let src_i = i + u - half;
                        for v in v_lo..=v_hi {
                            let src_j = j + v - half;
                            acc += kernel.get(i, j, u, v, grp) * x.get(b, ch, src_i, src_j);
                        }
                    }
                    out.set(b, ch, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Literal transcription of the operator definition: five nested loops over
/// `(batch, channel, i, j, (u, v))` with an explicit bounds check standing in
/// for the zero padding. Kept as the independent route [`involute`] is
/// verified against.
pub fn involute_reference(
    x: &Tensor4,
    kernel: &InvolutionKernel,
) -> Result<Tensor4, InvolutionError> {
    check_apply(x, kernel)?;
    let (n, c, h, w) = x.dims();
    let k = kernel.k as isize;
    let half = k / 2;
    let mut out = Tensor4::zeros((n, c, h, w))?;
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for du in -half..=half {
                        for dv in -half..=half {
                            let si = i as isize + du;
                            let sj = j as isize + dv;
                            if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                                continue; // zero padding
                            }
                            let grp = ch * kernel.g / c;
                            acc += kernel.get(
                                i,
                                j,
                                (du + half) as usize,
                                (dv + half) as usize,
                                grp,
                            ) * x.get(b, ch, si as usize, sj as usize);
                        }
                    }
                    out.set(b, ch, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// The kernel generation map: per pixel, reduce the channel vector
/// `C -> C/r`, rectify, expand `C/r -> K^2 G`, reshape to `(K, K, G)`.
/// Weights are spatially shared.
#[derive(Debug, Clone)]
pub struct KernelGenSpec {
    channels: usize,
    reduction: usize,
    k: usize,
    groups: usize,
    /// `(C/r) x C`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `(K^2 G) x (C/r)`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl KernelGenSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        channels: usize,
        reduction: usize,
        k: usize,
        groups: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self, InvolutionError> {
        if channels == 0 || reduction == 0 || k == 0 || groups == 0 {
            return Err(InvolutionError::ZeroDim(vec![channels, reduction, k, groups]));
        }
        if k.is_multiple_of(2) {
            return Err(InvolutionError::EvenKernelSize(k));
        }
        if !channels.is_multiple_of(reduction) {
            return Err(InvolutionError::ReductionMismatch {
                c: channels,
                r: reduction,
            });
        }
        let hidden = channels / reduction;
        let out = k * k * groups;
        for (name, vec, want) in [
            ("w1", &w1, hidden * channels),
            ("b1", &b1, hidden),
            ("w2", &w2, out * hidden),
            ("b2", &b2, out),
        ] {
            if vec.len() != want {
                return Err(InvolutionError::WeightLength {
                    name,
                    want,
                    got: vec.len(),
                });
            }
        }
        Ok(Self {
            channels,
            reduction,
            k,
            groups,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Seeded uniform(-0.5, 0.5) weights, zero biases.
    pub fn seeded(
        channels: usize,
        reduction: usize,
        k: usize,
        groups: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, InvolutionError> {
        let hidden = channels
            .checked_div(reduction)
            .filter(|_| channels.is_multiple_of(reduction))
            .ok_or(InvolutionError::ReductionMismatch {
                c: channels,
                r: reduction,
            })?;
        let out = k * k * groups;
        let w1 = (0..hidden * channels)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let w2 = (0..out * hidden)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        Self::new(
            channels,
            reduction,
            k,
            groups,
            w1,
            vec![0.0; hidden],
            w2,
            vec![0.0; out],
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn groups(&self) -> usize {
        self.groups
    }
}

/// Generate the per-pixel kernel from a single-item batch.
///
/// The expanded `K^2 G` vector maps to `(u, v, g)` row-major:
/// `m = (u K + v) G + g`.
pub fn generate_kernel(
    x: &Tensor4,
    spec: &KernelGenSpec,
) -> Result<InvolutionKernel, InvolutionError> {
    let (n, c, h, w) = x.dims();
    if n != 1 {
        return Err(InvolutionError::BatchNotSingleton(n));
    }
    if c != spec.channels {
        return Err(InvolutionError::ChannelMismatch {
            want: spec.channels,
            got: c,
        });
    }
    let hidden = spec.channels / spec.reduction;
    let out_dim = spec.k * spec.k * spec.groups;
    let mut kernel =
        InvolutionKernel::new((h, w, spec.k, spec.groups), vec![0.0; h * w * out_dim])?;
    let mut hid = vec![0.0; hidden];
    for i in 0..h {
        for j in 0..w {
            for (m, hv) in hid.iter_mut().enumerate() {
                let mut acc = spec.b1[m];
                for ch in 0..c {
                    acc += spec.w1[m * c + ch] * x.get(0, ch, i, j);
                }
                *hv = acc.max(0.0); // ReLU
            }
            for m in 0..out_dim {
                let mut acc = spec.b2[m];
                for (q, hv) in hid.iter().enumerate() {
                    acc += spec.w2[m * hidden + q] * hv;
                }
                let u = m / (spec.k * spec.groups);
                let v = (m / spec.groups) % spec.k;
                let g = m % spec.groups;
                kernel.set(i, j, u, v, g, acc);
            }
        }
    }
    Ok(kernel)
}
