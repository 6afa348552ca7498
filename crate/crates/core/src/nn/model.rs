use serde::{Deserialize, Serialize};

use super::layers::*;
use super::real::Real;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

/// Network shape. Input channels are `x_t` plus the enabled conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub stage_mults: Vec<usize>,
    pub blocks_per_stage: usize,
    /// Upper bound on group-norm groups; the largest divisor of each
    /// channel count not above it is used.
    pub groups: usize,
    /// Width of the projected timestep embedding.
    pub time_embed_dim: usize,
    /// Global attention is not available; must be false.
    pub attention: bool,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            in_channels: 5,
            base_channels: 16,
            stage_mults: vec![1, 2],
            blocks_per_stage: 2,
            groups: 8,
            time_embed_dim: 64,
            attention: false,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("denoiser config: {m}")));
        if self.in_channels == 0
            || self.base_channels == 0
            || self.groups == 0
            || self.time_embed_dim == 0
        {
            return bad("counts must be positive");
        }
        if self.base_channels % 2 != 0 {
            return bad("base_channels must be even for the sinusoidal embedding");
        }
        if self.stage_mults.is_empty()
            || self.stage_mults.contains(&0)
            || self.blocks_per_stage == 0
        {
            return bad("need at least one stage and one block, all multipliers positive");
        }
        if self.attention {
            return bad("attention is not implemented");
        }
        Ok(())
    }

    /// Spatial dims must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << (self.stage_mults.len() - 1)
    }

    fn groups_for(&self, ch: usize) -> usize {
        (1..=self.groups.min(ch))
            .rev()
            .find(|g| ch % g == 0)
            .unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvL {
    w: usize,
    b: usize,
    cout: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormL {
    g: usize,
    b: usize,
    groups: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinL {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockL {
    norm1: NormL,
    conv1: ConvL,
    norm2: NormL,
    ada: LinL,
    conv2: ConvL,
    skip: Option<ConvL>,
    cout: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    conv_in: ConvL,
    t1: LinL,
    t2: LinL,
    enc: Vec<Vec<BlockL>>,
    dec: Vec<Vec<BlockL>>,
    up: Vec<Option<ConvL>>,
    out_norm: NormL,
    conv_out: ConvL,
}

struct Builder<'a> {
    specs: &'a mut Vec<ParamSpec>,
}

impl Builder<'_> {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.specs.push(ParamSpec { name, shape });
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> ConvL {
        ConvL {
            w: self.add(format!("{name}.weight"), vec![cout, cin, k * k * k]),
            b: self.add(format!("{name}.bias"), vec![cout]),
            cout,
        }
    }

    fn norm(&mut self, name: &str, ch: usize, groups: usize) -> NormL {
        NormL {
            g: self.add(format!("{name}.gamma"), vec![ch]),
            b: self.add(format!("{name}.beta"), vec![ch]),
            groups,
        }
    }

    fn linear(&mut self, name: &str, inp: usize, out: usize) -> LinL {
        LinL {
            w: self.add(format!("{name}.weight"), vec![out, inp]),
            b: self.add(format!("{name}.bias"), vec![out]),
        }
    }

    fn block(&mut self, cfg: &DenoiserConfig, name: &str, cin: usize, cout: usize) -> BlockL {
        BlockL {
            norm1: self.norm(&format!("{name}.norm1"), cin, cfg.groups_for(cin)),
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3),
            norm2: self.norm(&format!("{name}.norm2"), cout, cfg.groups_for(cout)),
            ada: self.linear(&format!("{name}.ada"), cfg.time_embed_dim, 2 * cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1)),
            cout,
        }
    }
}

fn build_layout(cfg: &DenoiserConfig) -> (Layout, Vec<ParamSpec>) {
    let mut specs = Vec::new();
    let mut b = Builder { specs: &mut specs };
    let c = cfg.base_channels;
    let levels = cfg.stage_mults.len();
    let conv_in = b.conv("conv_in", cfg.in_channels, c, 3);
    let t1 = b.linear("time.fc1", c, cfg.time_embed_dim);
    let t2 = b.linear("time.fc2", cfg.time_embed_dim, cfg.time_embed_dim);
    let mut ch = c;
    let mut enc = Vec::new();
    for (l, &m) in cfg.stage_mults.iter().enumerate() {
        let mut blocks = Vec::new();
        for i in 0..cfg.blocks_per_stage {
            blocks.push(b.block(cfg, &format!("enc{l}.{i}"), ch, c * m));
            ch = c * m;
        }
        enc.push(blocks);
    }
    let mut dec: Vec<Vec<BlockL>> = vec![Vec::new(); levels];
    let mut up = vec![None; levels];
    for l in (0..levels).rev() {
        let width = c * cfg.stage_mults[l];
        if l + 1 < levels {
            up[l] = Some(b.conv(&format!("up{l}"), ch, width, 3));
            ch = 2 * width;
        }
        for i in 0..cfg.blocks_per_stage {
            dec[l].push(b.block(cfg, &format!("dec{l}.{i}"), ch, width));
            ch = width;
        }
    }
    let out_norm = b.norm("out.norm", ch, cfg.groups_for(ch));
    let conv_out = b.conv("out.conv", ch, 1, 3);
    (
        Layout {
            conv_in,
            t1,
            t2,
            enc,
            dec,
            up,
            out_norm,
            conv_out,
        },
        specs,
    )
}

/// Volumetric encoder-decoder `f(x, t)` with timestep-modulated group norms.
#[derive(Debug, Clone)]
pub struct DenoiserModel<R> {
    config: DenoiserConfig,
    layout: Layout,
    specs: Vec<ParamSpec>,
    pub params: Vec<Vec<R>>,
}

struct BlockCache<R> {
    x: Tensor<R>,
    n1: NormCache<R>,
    a1: Tensor<R>,
    h1: Tensor<R>,
    n2: NormCache<R>,
    g2: Tensor<R>,
    m2: Tensor<R>,
    h2: Tensor<R>,
    mods: Vec<R>,
}

/// Activations saved by [`DenoiserModel::forward_train`].
pub struct ForwardCache<R> {
    input: Tensor<R>,
    sin: Vec<R>,
    t1_out: Vec<R>,
    t1_act: Vec<R>,
    emb_act: Vec<R>,
    emb: Vec<R>,
    enc: Vec<Vec<BlockCache<R>>>,
    pooled_dims: Vec<[usize; 3]>,
    up_in: Vec<Option<Tensor<R>>>,
    dec: Vec<Vec<BlockCache<R>>>,
    out_norm: NormCache<R>,
    out_pre: Tensor<R>,
    out_act: Tensor<R>,
}

/// Standard sinusoidal embedding of a (possibly fractional) timestep.
pub fn timestep_embedding<R: Real>(t: f64, dim: usize) -> Vec<R> {
    let half = dim / 2;
    let mut out = vec![R::zero(); dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = R::of((t * freq).cos());
        out[half + i] = R::of((t * freq).sin());
    }
    out
}

impl<R: Real> DenoiserModel<R> {
    /// Fresh model. The output convolution and the second convolution of
    /// every residual block start at zero, so each block starts as identity.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(&config);
        let mut params = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let n = spec.len();
            let v = if spec.name.starts_with("out.conv") || spec.name.contains(".conv2.") {
                vec![R::zero(); n]
            } else if spec.name.ends_with(".gamma") {
                vec![R::one(); n]
            } else if spec.name.ends_with(".weight") {
                let fan_in: usize = spec.shape[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut r = rng::stream(seed, i as u64);
                (0..n)
                    .map(|_| R::of(r.random_range(-bound..bound)))
                    .collect()
            } else {
                vec![R::zero(); n]
            };
            params.push(v);
        }
        Ok(DenoiserModel {
            config,
            layout,
            specs,
            params,
        })
    }

    /// Rebuild from stored parameters.
    pub fn from_params(config: DenoiserConfig, params: Vec<Vec<R>>) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(&config);
        if params.len() != specs.len() || params.iter().zip(&specs).any(|(p, s)| p.len() != s.len())
        {
            return Err(Error::ConfigMismatch(
                "parameter shapes do not match the config".into(),
            ));
        }
        Ok(DenoiserModel {
            config,
            layout,
            specs,
            params,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn num_parameters(&self) -> usize {
        self.specs.iter().map(|s| s.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<R>> {
        self.specs
            .iter()
            .map(|s| vec![R::zero(); s.len()])
            .collect()
    }

    /// Same network with every parameter cast to `S`.
    pub fn cast<S: Real>(&self) -> DenoiserModel<S> {
        DenoiserModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            specs: self.specs.clone(),
            params: self
                .params
                .iter()
                .map(|p| p.iter().map(|v| S::of(v.f64())).collect())
                .collect(),
        }
    }

    pub fn check_input(&self, x: &Tensor<R>) -> Result<()> {
        if x.channels != self.config.in_channels {
            return Err(Error::ConfigMismatch(format!(
                "model expects {} input channels, got {}",
                self.config.in_channels, x.channels
            )));
        }
        let d = self.config.divisor();
        if x.dims.iter().any(|&n| n == 0 || n % d != 0) {
            return Err(Error::GeometryMismatch(format!(
                "grid dims {:?} must be positive multiples of {d}",
                x.dims
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<R>, t: f64) -> Result<Tensor<R>> {
        Ok(self.forward_train(x, t)?.0)
    }

    fn p(&self, i: usize) -> &[R] {
        &self.params[i]
    }

    fn block_forward(
        &self,
        bl: &BlockL,
        x: Tensor<R>,
        emb_act: &[R],
    ) -> (Tensor<R>, BlockCache<R>) {
        let (a1, n1) =
            group_norm_forward(&x, bl.norm1.groups, self.p(bl.norm1.g), self.p(bl.norm1.b));
        let h1 = silu(&a1);
        let c1 = conv_forward(&h1, self.p(bl.conv1.w), self.p(bl.conv1.b), bl.cout, 3);
        let (g2, n2) =
            group_norm_forward(&c1, bl.norm2.groups, self.p(bl.norm2.g), self.p(bl.norm2.b));
        let mods = linear_forward(emb_act, self.p(bl.ada.w), self.p(bl.ada.b));
        let n = g2.spatial();
        let mut m2 = g2.clone();
        for c in 0..bl.cout {
            let (s, sh) = (R::one() + mods[c], mods[bl.cout + c]);
            for v in &mut m2.data[c * n..(c + 1) * n] {
                *v = *v * s + sh;
            }
        }
        let h2 = silu(&m2);
        let mut out = conv_forward(&h2, self.p(bl.conv2.w), self.p(bl.conv2.b), bl.cout, 3);
        match bl.skip {
            Some(sk) => out.add_assign(&conv_forward(&x, self.p(sk.w), self.p(sk.b), bl.cout, 1)),
            None => out.add_assign(&x),
        }
        (
            out,
            BlockCache {
                x,
                n1,
                a1,
                h1,
                n2,
                g2,
                m2,
                h2,
                mods,
            },
        )
    }

    /// Returns `dx`; accumulates parameter gradients and the embedding
    /// gradient.
    fn block_backward(
        &self,
        bl: &BlockL,
        cache: &BlockCache<R>,
        dout: &Tensor<R>,
        emb_act: &[R],
        grads: &mut [Vec<R>],
        d_emb_act: &mut [R],
    ) -> Tensor<R> {
        let mut dx = match bl.skip {
            Some(sk) => {
                let (dw, db) = two_mut(grads, sk.w, sk.b);
                conv_backward(&cache.x, self.p(sk.w), dout, 1, dw, db, true).unwrap()
            }
            None => dout.clone(),
        };
        let (dw, db) = two_mut(grads, bl.conv2.w, bl.conv2.b);
        let dh2 = conv_backward(&cache.h2, self.p(bl.conv2.w), dout, 3, dw, db, true).unwrap();
        let dm2 = silu_backward(&cache.m2, &dh2);
        let n = dm2.spatial();
        let mut dmods = vec![R::zero(); 2 * bl.cout];
        let mut dg2 = dm2.clone();
        for c in 0..bl.cout {
            let s = R::one() + cache.mods[c];
            let mut ds = R::zero();
            let mut dsh = R::zero();
            for i in c * n..(c + 1) * n {
                ds = ds + dm2.data[i] * cache.g2.data[i];
                dsh = dsh + dm2.data[i];
                dg2.data[i] = dm2.data[i] * s;
            }
            dmods[c] = ds;
            dmods[bl.cout + c] = dsh;
        }
        let (dw, db) = two_mut(grads, bl.ada.w, bl.ada.b);
        let de = linear_backward(emb_act, self.p(bl.ada.w), &dmods, dw, db);
        for (a, b) in d_emb_act.iter_mut().zip(de) {
            *a = *a + b;
        }
        let (dg, db) = two_mut(grads, bl.norm2.g, bl.norm2.b);
        let dc1 = group_norm_backward(&dg2, &cache.n2, bl.norm2.groups, self.p(bl.norm2.g), dg, db);
        let (dw, db) = two_mut(grads, bl.conv1.w, bl.conv1.b);
        let dh1 = conv_backward(&cache.h1, self.p(bl.conv1.w), &dc1, 3, dw, db, true).unwrap();
        let da1 = silu_backward(&cache.a1, &dh1);
        let (dg, db) = two_mut(grads, bl.norm1.g, bl.norm1.b);
        dx.add_assign(&group_norm_backward(
            &da1,
            &cache.n1,
            bl.norm1.groups,
            self.p(bl.norm1.g),
            dg,
            db,
        ));
        dx
    }

    /// Forward pass keeping every activation needed by [`Self::backward`].
    pub fn forward_train(&self, x: &Tensor<R>, t: f64) -> Result<(Tensor<R>, ForwardCache<R>)> {
        self.check_input(x)?;
        let ly = &self.layout;
        let levels = self.config.stage_mults.len();
        let sin = timestep_embedding::<R>(t, self.config.base_channels);
        let t1_out = linear_forward(&sin, self.p(ly.t1.w), self.p(ly.t1.b));
        let t1_act = silu_slice(&t1_out);
        let emb = linear_forward(&t1_act, self.p(ly.t2.w), self.p(ly.t2.b));
        let emb_act = silu_slice(&emb);

        let mut h = conv_forward(
            x,
            self.p(ly.conv_in.w),
            self.p(ly.conv_in.b),
            ly.conv_in.cout,
            3,
        );
        let mut enc = Vec::with_capacity(levels);
        let mut skips = Vec::new();
        let mut pooled_dims = Vec::new();
        for l in 0..levels {
            let mut caches = Vec::new();
            for bl in &ly.enc[l] {
                let (o, c) = self.block_forward(bl, h, &emb_act);
                h = o;
                caches.push(c);
            }
            enc.push(caches);
            if l + 1 < levels {
                pooled_dims.push(h.dims);
                let pooled = avg_pool(&h);
                skips.push(h);
                h = pooled;
            }
        }
        let mut dec: Vec<Vec<BlockCache<R>>> = (0..levels).map(|_| Vec::new()).collect();
        let mut up_in: Vec<Option<Tensor<R>>> = (0..levels).map(|_| None).collect();
        for l in (0..levels).rev() {
            if let Some(uc) = ly.up[l] {
                let u = upsample(&h);
                let c = conv_forward(&u, self.p(uc.w), self.p(uc.b), uc.cout, 3);
                h = concat(&c, &skips[l]);
                up_in[l] = Some(u);
            }
            for bl in &ly.dec[l] {
                let (o, c) = self.block_forward(bl, h, &emb_act);
                h = o;
                dec[l].push(c);
            }
        }
        let (out_pre, out_norm) = group_norm_forward(
            &h,
            ly.out_norm.groups,
            self.p(ly.out_norm.g),
            self.p(ly.out_norm.b),
        );
        let out_act = silu(&out_pre);
        let y = conv_forward(&out_act, self.p(ly.conv_out.w), self.p(ly.conv_out.b), 1, 3);
        Ok((
            y,
            ForwardCache {
                input: x.clone(),
                sin,
                t1_out,
                t1_act,
                emb_act,
                emb,
                enc,
                pooled_dims,
                up_in,
                dec,
                out_norm,
                out_pre,
                out_act,
            },
        ))
    }

    /// Accumulate `∂L/∂θ` into `grads` given `∂L/∂y`.
    pub fn backward(&self, cache: &ForwardCache<R>, dy: &Tensor<R>, grads: &mut [Vec<R>]) {
        let ly = &self.layout;
        let levels = self.config.stage_mults.len();
        let mut d_emb_act = vec![R::zero(); self.config.time_embed_dim];

        let (dw, db) = two_mut(grads, ly.conv_out.w, ly.conv_out.b);
        let d_act =
            conv_backward(&cache.out_act, self.p(ly.conv_out.w), dy, 3, dw, db, true).unwrap();
        let d_pre = silu_backward(&cache.out_pre, &d_act);
        let (dg, db) = two_mut(grads, ly.out_norm.g, ly.out_norm.b);
        let mut dh = group_norm_backward(
            &d_pre,
            &cache.out_norm,
            ly.out_norm.groups,
            self.p(ly.out_norm.g),
            dg,
            db,
        );

        let mut dskips: Vec<Option<Tensor<R>>> = (0..levels).map(|_| None).collect();
        for l in 0..levels {
            for (bl, c) in ly.dec[l].iter().zip(&cache.dec[l]).rev() {
                dh = self.block_backward(bl, c, &dh, &cache.emb_act, grads, &mut d_emb_act);
            }
            if let Some(uc) = ly.up[l] {
                let width = uc.cout;
                let (dc, dskip) = split(&dh, width);
                dskips[l] = Some(dskip);
                let u = cache.up_in[l].as_ref().unwrap();
                let (dw, db) = two_mut(grads, uc.w, uc.b);
                let du = conv_backward(u, self.p(uc.w), &dc, 3, dw, db, true).unwrap();
                dh = upsample_backward(&du);
            }
        }
        for l in (0..levels).rev() {
            if l + 1 < levels {
                dh = avg_pool_backward(&dh, cache.pooled_dims[l]);
                dh.add_assign(dskips[l].as_ref().unwrap());
            }
            for (bl, c) in ly.enc[l].iter().zip(&cache.enc[l]).rev() {
                dh = self.block_backward(bl, c, &dh, &cache.emb_act, grads, &mut d_emb_act);
            }
        }
        let (dw, db) = two_mut(grads, ly.conv_in.w, ly.conv_in.b);
        conv_backward(&cache.input, self.p(ly.conv_in.w), &dh, 3, dw, db, false);

        let d_emb: Vec<R> = d_emb_act
            .iter()
            .zip(&cache.emb)
            .map(|(&d, &e)| d * silu_grad(e))
            .collect();
        let (dw, db) = two_mut(grads, ly.t2.w, ly.t2.b);
        let d_t1_act = linear_backward(&cache.t1_act, self.p(ly.t2.w), &d_emb, dw, db);
        let d_t1: Vec<R> = d_t1_act
            .iter()
            .zip(&cache.t1_out)
            .map(|(&d, &e)| d * silu_grad(e))
            .collect();
        let (dw, db) = two_mut(grads, ly.t1.w, ly.t1.b);
        linear_backward(&cache.sin, self.p(ly.t1.w), &d_t1, dw, db);
    }
}

fn two_mut<R>(v: &mut [Vec<R>], a: usize, b: usize) -> (&mut [R], &mut [R]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
