//! Forward and backward passes of the network building blocks on
//! channel-major volumes.

use super::real::Real;

/// `channels` volumes of `dims = [nx, ny, nz]`, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    pub channels: usize,
    pub dims: [usize; 3],
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Tensor {
            channels,
            dims,
            data: vec![R::zero(); channels * dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_data(channels: usize, dims: [usize; 3], data: Vec<R>) -> Self {
        assert_eq!(data.len(), channels * dims[0] * dims[1] * dims[2]);
        Tensor {
            channels,
            dims,
            data,
        }
    }

    pub fn spatial(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn channel(&self, c: usize) -> &[R] {
        let n = self.spatial();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor {
            channels: self.channels,
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<R>) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

const TAPS: usize = 27;
// upper bound on im2col chunk size, in elements
const COL_BUDGET: usize = 1 << 20;

fn planes_per_chunk(k_rows: usize, plane: usize, nz: usize) -> usize {
    (COL_BUDGET / (k_rows * plane).max(1)).clamp(1, nz)
}

/// Fill `col[(ci*27 + tap) * nc + p]` for output planes `z0..z1`, zero padded.
fn im2col<R: Real>(x: &Tensor<R>, z0: usize, z1: usize, col: &mut [R]) {
    let [nx, ny, nz] = x.dims;
    let nc = (z1 - z0) * nx * ny;
    for ci in 0..x.channels {
        let src = x.channel(ci);
        for tap in 0..TAPS {
            let (dx, dy, dz) = (tap % 3, (tap / 3) % 3, tap / 9);
            let row = &mut col[(ci * TAPS + tap) * nc..(ci * TAPS + tap + 1) * nc];
            for z in z0..z1 {
                let sz = z as isize + dz as isize - 1;
                for y in 0..ny {
                    let sy = y as isize + dy as isize - 1;
                    let out = &mut row[((z - z0) * ny + y) * nx..((z - z0) * ny + y + 1) * nx];
                    if sz < 0 || sz >= nz as isize || sy < 0 || sy >= ny as isize {
                        out.fill(R::zero());
                        continue;
                    }
                    let line = &src[(sz as usize * ny + sy as usize) * nx..][..nx];
                    match dx {
                        0 => {
                            out[0] = R::zero();
                            out[1..].copy_from_slice(&line[..nx - 1]);
                        }
                        1 => out.copy_from_slice(line),
                        _ => {
                            out[..nx - 1].copy_from_slice(&line[1..]);
                            out[nx - 1] = R::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate `col` back into `dx`.
fn col2im<R: Real>(col: &[R], z0: usize, z1: usize, dx: &mut Tensor<R>) {
    let [nx, ny, nz] = dx.dims;
    let n = dx.spatial();
    let nc = (z1 - z0) * nx * ny;
    for ci in 0..dx.channels {
        let dst = &mut dx.data[ci * n..(ci + 1) * n];
        for tap in 0..TAPS {
            let (ox, oy, oz) = (tap % 3, (tap / 3) % 3, tap / 9);
            let row = &col[(ci * TAPS + tap) * nc..(ci * TAPS + tap + 1) * nc];
            for z in z0..z1 {
                let sz = z as isize + oz as isize - 1;
                if sz < 0 || sz >= nz as isize {
                    continue;
                }
                for y in 0..ny {
                    let sy = y as isize + oy as isize - 1;
                    if sy < 0 || sy >= ny as isize {
                        continue;
                    }
                    let src = &row[((z - z0) * ny + y) * nx..][..nx];
                    let line = &mut dst[(sz as usize * ny + sy as usize) * nx..][..nx];
                    match ox {
                        0 => {
                            for i in 1..nx {
                                line[i - 1] = line[i - 1] + src[i];
                            }
                        }
                        1 => {
                            for i in 0..nx {
                                line[i] = line[i] + src[i];
                            }
                        }
                        _ => {
                            for i in 0..nx - 1 {
                                line[i + 1] = line[i + 1] + src[i];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Same-padded convolution with kernel 1 or 3. `w` is `[cout][cin][k³]`.
pub fn conv_forward<R: Real>(
    x: &Tensor<R>,
    w: &[R],
    b: &[R],
    cout: usize,
    ksize: usize,
) -> Tensor<R> {
    let n = x.spatial();
    let cin = x.channels;
    let mut y = Tensor::zeros(cout, x.dims);
    for co in 0..cout {
        y.data[co * n..(co + 1) * n].fill(b[co]);
    }
    if ksize == 1 {
        R::gemm(
            cout,
            cin,
            n,
            R::one(),
            w,
            cin as isize,
            1,
            &x.data,
            n as isize,
            1,
            R::one(),
            &mut y.data,
            n as isize,
            1,
        );
        return y;
    }
    debug_assert_eq!(ksize, 3);
    let k = cin * TAPS;
    let plane = x.dims[0] * x.dims[1];
    let step = planes_per_chunk(k, plane, x.dims[2]);
    let mut col = vec![R::zero(); k * step * plane];
    let mut z0 = 0;
    while z0 < x.dims[2] {
        let z1 = (z0 + step).min(x.dims[2]);
        let nc = (z1 - z0) * plane;
        im2col(x, z0, z1, &mut col[..k * nc]);
        R::gemm(
            cout,
            k,
            nc,
            R::one(),
            w,
            k as isize,
            1,
            &col[..k * nc],
            nc as isize,
            1,
            R::one(),
            &mut y.data[z0 * plane..],
            n as isize,
            1,
        );
        z0 = z1;
    }
    y
}

/// Accumulates `dw`, `db`; returns the input gradient when `need_dx`.
pub fn conv_backward<R: Real>(
    x: &Tensor<R>,
    w: &[R],
    dy: &Tensor<R>,
    ksize: usize,
    dw: &mut [R],
    db: &mut [R],
    need_dx: bool,
) -> Option<Tensor<R>> {
    let n = x.spatial();
    let cin = x.channels;
    let cout = dy.channels;
    for co in 0..cout {
        db[co] = db[co] + dy.channel(co).iter().copied().sum();
    }
    if ksize == 1 {
        // dw += dy · xᵀ
        R::gemm(
            cout,
            n,
            cin,
            R::one(),
            &dy.data,
            n as isize,
            1,
            &x.data,
            1,
            n as isize,
            R::one(),
            dw,
            cin as isize,
            1,
        );
        if !need_dx {
            return None;
        }
        let mut dx = Tensor::zeros(cin, x.dims);
        R::gemm(
            cin,
            cout,
            n,
            R::one(),
            w,
            1,
            cin as isize,
            &dy.data,
            n as isize,
            1,
            R::zero(),
            &mut dx.data,
            n as isize,
            1,
        );
        return Some(dx);
    }
    let k = cin * TAPS;
    let plane = x.dims[0] * x.dims[1];
    let step = planes_per_chunk(k, plane, x.dims[2]);
    let mut col = vec![R::zero(); k * step * plane];
    let mut dcol = if need_dx {
        vec![R::zero(); k * step * plane]
    } else {
        Vec::new()
    };
    let mut dx = need_dx.then(|| Tensor::zeros(cin, x.dims));
    let mut z0 = 0;
    while z0 < x.dims[2] {
        let z1 = (z0 + step).min(x.dims[2]);
        let nc = (z1 - z0) * plane;
        im2col(x, z0, z1, &mut col[..k * nc]);
        let dys = &dy.data[z0 * plane..];
        // dw[co][r] += Σ_p dy[co][p] col[r][p]
        R::gemm(
            cout,
            nc,
            k,
            R::one(),
            dys,
            n as isize,
            1,
            &col[..k * nc],
            1,
            nc as isize,
            R::one(),
            dw,
            k as isize,
            1,
        );
        if let Some(dx) = dx.as_mut() {
            // dcol = wᵀ · dy
            R::gemm(
                k,
                cout,
                nc,
                R::one(),
                w,
                1,
                k as isize,
                dys,
                n as isize,
                1,
                R::zero(),
                &mut dcol[..k * nc],
                nc as isize,
                1,
            );
            col2im(&dcol[..k * nc], z0, z1, dx);
        }
        z0 = z1;
    }
    dx
}

pub const GN_EPS: f64 = 1e-5;

/// Saved statistics for the group norm backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<R> {
    pub xhat: Tensor<R>,
    pub inv_std: Vec<R>,
}

pub fn group_norm_forward<R: Real>(
    x: &Tensor<R>,
    groups: usize,
    gamma: &[R],
    beta: &[R],
) -> (Tensor<R>, NormCache<R>) {
    let n = x.spatial();
    let per = x.channels / groups;
    let count = (per * n) as f64;
    let mut xhat = Tensor::zeros(x.channels, x.dims);
    let mut y = Tensor::zeros(x.channels, x.dims);
    let mut inv_std = Vec::with_capacity(groups);
    for g in 0..groups {
        let span = g * per * n..(g + 1) * per * n;
        let xs = &x.data[span.clone()];
        let mean = xs.iter().map(|v| v.f64()).sum::<f64>() / count;
        let var = xs.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / count;
        let inv = 1.0 / (var + GN_EPS).sqrt();
        inv_std.push(R::of(inv));
        let (m, inv) = (R::of(mean), R::of(inv));
        for (h, &v) in xhat.data[span].iter_mut().zip(xs) {
            *h = (v - m) * inv;
        }
        for c in g * per..(g + 1) * per {
            let (ga, be) = (gamma[c], beta[c]);
            for i in c * n..(c + 1) * n {
                y.data[i] = xhat.data[i] * ga + be;
            }
        }
    }
    (y, NormCache { xhat, inv_std })
}

pub fn group_norm_backward<R: Real>(
    dy: &Tensor<R>,
    cache: &NormCache<R>,
    groups: usize,
    gamma: &[R],
    dgamma: &mut [R],
    dbeta: &mut [R],
) -> Tensor<R> {
    let n = dy.spatial();
    let per = dy.channels / groups;
    let count = R::of((per * n) as f64);
    let mut dx = Tensor::zeros(dy.channels, dy.dims);
    for c in 0..dy.channels {
        let (d, h) = (dy.channel(c), cache.xhat.channel(c));
        dgamma[c] = dgamma[c] + d.iter().zip(h).map(|(&a, &b)| a * b).sum();
        dbeta[c] = dbeta[c] + d.iter().copied().sum();
    }
    for g in 0..groups {
        // dxhat = dy * gamma; dx = inv/N * (N dxhat - Σdxhat - xhat Σ(dxhat xhat))
        let mut s1 = R::zero();
        let mut s2 = R::zero();
        for c in g * per..(g + 1) * per {
            for i in c * n..(c + 1) * n {
                let dh = dy.data[i] * gamma[c];
                s1 = s1 + dh;
                s2 = s2 + dh * cache.xhat.data[i];
            }
        }
        let inv = cache.inv_std[g];
        for c in g * per..(g + 1) * per {
            for i in c * n..(c + 1) * n {
                let dh = dy.data[i] * gamma[c];
                dx.data[i] = inv * (dh - s1 / count - cache.xhat.data[i] * s2 / count);
            }
        }
    }
    dx
}

#[inline]
pub fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

pub fn silu<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    x.map(|v| v * sigmoid(v))
}

pub fn silu_slice<R: Real>(x: &[R]) -> Vec<R> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

#[inline]
pub fn silu_grad<R: Real>(x: R) -> R {
    let s = sigmoid(x);
    s * (R::one() + x * (R::one() - s))
}

/// `dx = dy * silu'(x)`.
pub fn silu_backward<R: Real>(x: &Tensor<R>, dy: &Tensor<R>) -> Tensor<R> {
    Tensor {
        channels: x.channels,
        dims: x.dims,
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&a, &d)| d * silu_grad(a))
            .collect(),
    }
}

/// `y = W x + b` with `W` as `[out][in]`.
pub fn linear_forward<R: Real>(x: &[R], w: &[R], b: &[R]) -> Vec<R> {
    let out = b.len();
    let inp = x.len();
    (0..out)
        .map(|o| {
            b[o] + w[o * inp..(o + 1) * inp]
                .iter()
                .zip(x)
                .map(|(&a, &v)| a * v)
                .sum()
        })
        .collect()
}

pub fn linear_backward<R: Real>(x: &[R], w: &[R], dy: &[R], dw: &mut [R], db: &mut [R]) -> Vec<R> {
    let inp = x.len();
    let mut dx = vec![R::zero(); inp];
    for (o, &d) in dy.iter().enumerate() {
        db[o] = db[o] + d;
        for i in 0..inp {
            dw[o * inp + i] = dw[o * inp + i] + d * x[i];
            dx[i] = dx[i] + d * w[o * inp + i];
        }
    }
    dx
}

/// 2×2×2 mean pooling; dims must be even.
pub fn avg_pool<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    let [nx, ny, nz] = x.dims;
    let od = [nx / 2, ny / 2, nz / 2];
    let mut y = Tensor::zeros(x.channels, od);
    let eighth = R::of(0.125);
    let on = y.spatial();
    for c in 0..x.channels {
        let src = x.channel(c);
        for z in 0..nz {
            for yy in 0..ny {
                for xx in 0..nx {
                    let o = c * on + ((z / 2) * od[1] + yy / 2) * od[0] + xx / 2;
                    y.data[o] = y.data[o] + src[(z * ny + yy) * nx + xx] * eighth;
                }
            }
        }
    }
    y
}

pub fn avg_pool_backward<R: Real>(dy: &Tensor<R>, dims: [usize; 3]) -> Tensor<R> {
    let mut dx = Tensor::zeros(dy.channels, dims);
    let [nx, ny, nz] = dims;
    let od = dy.dims;
    let eighth = R::of(0.125);
    let n = nx * ny * nz;
    for c in 0..dy.channels {
        let src = dy.channel(c);
        for z in 0..nz {
            for yy in 0..ny {
                for xx in 0..nx {
                    dx.data[c * n + (z * ny + yy) * nx + xx] =
                        src[((z / 2) * od[1] + yy / 2) * od[0] + xx / 2] * eighth;
                }
            }
        }
    }
    dx
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    let [nx, ny, nz] = x.dims;
    let od = [nx * 2, ny * 2, nz * 2];
    let mut y = Tensor::zeros(x.channels, od);
    let on = y.spatial();
    for c in 0..x.channels {
        let src = x.channel(c);
        for z in 0..od[2] {
            for yy in 0..od[1] {
                for xx in 0..od[0] {
                    y.data[c * on + (z * od[1] + yy) * od[0] + xx] =
                        src[((z / 2) * ny + yy / 2) * nx + xx / 2];
                }
            }
        }
    }
    y
}

pub fn upsample_backward<R: Real>(dy: &Tensor<R>) -> Tensor<R> {
    let od = dy.dims;
    let dims = [od[0] / 2, od[1] / 2, od[2] / 2];
    let mut dx = Tensor::zeros(dy.channels, dims);
    let n = dx.spatial();
    for c in 0..dy.channels {
        let src = dy.channel(c);
        for z in 0..od[2] {
            for yy in 0..od[1] {
                for xx in 0..od[0] {
                    let o = c * n + ((z / 2) * dims[1] + yy / 2) * dims[0] + xx / 2;
                    dx.data[o] = dx.data[o] + src[(z * od[1] + yy) * od[0] + xx];
                }
            }
        }
    }
    dx
}

pub fn concat<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    assert_eq!(a.dims, b.dims);
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Tensor::from_data(a.channels + b.channels, a.dims, data)
}

pub fn split<R: Real>(t: &Tensor<R>, first: usize) -> (Tensor<R>, Tensor<R>) {
    let n = t.spatial();
    (
        Tensor::from_data(first, t.dims, t.data[..first * n].to_vec()),
        Tensor::from_data(t.channels - first, t.dims, t.data[first * n..].to_vec()),
    )
}
