use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FlowKind, FlowTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub blocks: usize,
    pub hidden: usize,
    pub scale_clamp: f64,
    pub seed: u64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            blocks: 6,
            hidden: 64,
            scale_clamp: 3.0,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.hidden == 0 {
            return Err(Error::Config("coupling flow needs blocks >= 1 and hidden >= 1".into()));
        }
        if !(self.scale_clamp > 0.0 && self.scale_clamp.is_finite()) {
            return Err(Error::Config(format!("scale clamp must be > 0, got {}", self.scale_clamp)));
        }
        Ok(())
    }
}

/// One affine coupling block.
///
/// Coordinates `perm[..n_cond]` condition the update of `perm[n_cond..]`:
///
/// ```text
/// h   = tanh(W1 x_c + c1)
/// s   = s_max * tanh((Ws h + cs) / s_max)
/// t   = Wt h + ct
/// y_t = x_t * exp(s) + t
/// ```
///
/// Matrices are stored row-major, output-major.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    perm: Vec<usize>,
    n_cond: usize,
    w1: Vec<f64>,
    c1: Vec<f64>,
    ws: Vec<f64>,
    cs: Vec<f64>,
    wt: Vec<f64>,
    ct: Vec<f64>,
}

struct BlockCache {
    hidden: Vec<f64>,
    tanh_s: Vec<f64>,
    scale: Vec<f64>,
}

impl Block {
    fn n_out(&self) -> usize {
        self.perm.len() - self.n_cond
    }

    fn param_count(&self) -> usize {
        self.w1.len() + self.c1.len() + self.ws.len() + self.cs.len() + self.wt.len() + self.ct.len()
    }

    fn nets(&self, x: &[f64], s_max: f64) -> (BlockCache, Vec<f64>) {
        let h = self.c1.len();
        let nc = self.n_cond;
        let no = self.n_out();
        let cond = &self.perm[..nc];
        let hidden: Vec<f64> = (0..h)
            .map(|k| {
                let row = &self.w1[k * nc..(k + 1) * nc];
                let pre: f64 = row.iter().zip(cond).map(|(w, &i)| w * x[i]).sum::<f64>() + self.c1[k];
                pre.tanh()
            })
            .collect();
        let mut tanh_s = Vec::with_capacity(no);
        let mut scale = Vec::with_capacity(no);
        let mut shift = Vec::with_capacity(no);
        for j in 0..no {
            let raw = dot(&self.ws[j * h..(j + 1) * h], &hidden) + self.cs[j];
            let ts = (raw / s_max).tanh();
            tanh_s.push(ts);
            scale.push(s_max * ts);
            shift.push(dot(&self.wt[j * h..(j + 1) * h], &hidden) + self.ct[j]);
        }
        (BlockCache { hidden, tanh_s, scale }, shift)
    }

    fn forward(&self, x: &mut [f64], s_max: f64) -> (f64, BlockCache) {
        let (cache, shift) = self.nets(x, s_max);
        for (j, &i) in self.perm[self.n_cond..].iter().enumerate() {
            x[i] = x[i] * cache.scale[j].exp() + shift[j];
        }
        (cache.scale.iter().sum(), cache)
    }

    fn inverse(&self, y: &mut [f64], s_max: f64) {
        let (cache, shift) = self.nets(y, s_max);
        for (j, &i) in self.perm[self.n_cond..].iter().enumerate() {
            y[i] = (y[i] - shift[j]) * (-cache.scale[j]).exp();
        }
    }

    /// `input` is this block's input, `g` holds dL/d(output) and is turned
    /// into dL/d(input) in place. `grad` is this block's parameter slice.
    fn backward(&self, input: &[f64], cache: &BlockCache, g: &mut [f64], g_logdet: f64, grad: &mut [f64]) {
        let h = self.c1.len();
        let nc = self.n_cond;
        let no = self.n_out();
        let (g_w1, rest) = grad.split_at_mut(self.w1.len());
        let (g_c1, rest) = rest.split_at_mut(h);
        let (g_ws, rest) = rest.split_at_mut(self.ws.len());
        let (g_cs, rest) = rest.split_at_mut(no);
        let (g_wt, g_ct) = rest.split_at_mut(self.wt.len());

        let mut g_hidden = vec![0.0; h];
        for (j, &i) in self.perm[nc..].iter().enumerate() {
            let e = cache.scale[j].exp();
            let gy = g[i];
            g[i] = gy * e;
            let g_scale = gy * input[i] * e + g_logdet;
            let g_raw = g_scale * (1.0 - cache.tanh_s[j] * cache.tanh_s[j]);
            let g_shift = gy;
            g_cs[j] += g_raw;
            g_ct[j] += g_shift;
            for k in 0..h {
                g_ws[j * h + k] += g_raw * cache.hidden[k];
                g_wt[j * h + k] += g_shift * cache.hidden[k];
                g_hidden[k] += self.ws[j * h + k] * g_raw + self.wt[j * h + k] * g_shift;
            }
        }
        for k in 0..h {
            let g_pre = g_hidden[k] * (1.0 - cache.hidden[k] * cache.hidden[k]);
            g_c1[k] += g_pre;
            for (c, &i) in self.perm[..nc].iter().enumerate() {
                g_w1[k * nc + c] += g_pre * input[i];
                g[i] += self.w1[k * nc + c] * g_pre;
            }
        }
    }

    fn params_into(&self, out: &mut Vec<f64>) {
        for v in [&self.w1, &self.c1, &self.ws, &self.cs, &self.wt, &self.ct] {
            out.extend_from_slice(v);
        }
    }

    fn load(&mut self, p: &[f64]) {
        let mut off = 0;
        for v in [&mut self.w1, &mut self.c1, &mut self.ws, &mut self.cs, &mut self.wt, &mut self.ct] {
            let n = v.len();
            v.copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stack of affine coupling blocks with fixed coordinate permutations.
///
/// Block `k` conditions on `ceil(d/2)` coordinates and updates the other
/// `floor(d/2)`. Even blocks draw a seeded random permutation; odd blocks
/// rotate the previous one so that updated coordinates become conditioning
/// ones. Parameter order per block: `W1, c1, Ws, cs, Wt, ct`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingFlow {
    dim: usize,
    hidden: usize,
    scale_clamp: f64,
    blocks: Vec<Block>,
}

impl CouplingFlow {
    /// Identity-initialised stack: scale and shift heads are zero, so the
    /// flow starts as the identity map while the hidden layer is random.
    pub fn new(dim: usize, opts: &FlowOptions) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("coupling flow needs dim >= 2".into()));
        }
        opts.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let perms = Self::permutations(dim, opts.blocks, &mut rng);
        let n_cond = dim.div_ceil(2);
        let init = Normal::new(0.0, 1.0 / (n_cond as f64).sqrt()).expect("valid normal");
        let blocks = perms
            .into_iter()
            .map(|perm| {
                let no = dim - n_cond;
                Block {
                    perm,
                    n_cond,
                    w1: (0..opts.hidden * n_cond).map(|_| init.sample(&mut rng)).collect(),
                    c1: vec![0.0; opts.hidden],
                    ws: vec![0.0; no * opts.hidden],
                    cs: vec![0.0; no],
                    wt: vec![0.0; no * opts.hidden],
                    ct: vec![0.0; no],
                }
            })
            .collect();
        Ok(CouplingFlow {
            dim,
            hidden: opts.hidden,
            scale_clamp: opts.scale_clamp,
            blocks,
        })
    }

    /// Every parameter drawn from `N(0, scale^2)`; used to exercise
    /// non-trivial maps.
    pub fn random(dim: usize, opts: &FlowOptions, seed: u64, scale: f64) -> Self {
        let mut flow = CouplingFlow::new(dim, opts).expect("valid coupling options");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, scale).expect("valid normal");
        let p: Vec<f64> = (0..flow.params().len()).map(|_| n.sample(&mut rng)).collect();
        flow.set_params(&p).expect("matching parameter count");
        flow
    }

    pub(crate) fn from_layout(dim: usize, hidden: usize, scale_clamp: f64, perms: Vec<Vec<usize>>) -> Result<Self> {
        if dim < 2 || hidden == 0 || perms.is_empty() || !(scale_clamp > 0.0 && scale_clamp.is_finite()) {
            return Err(Error::Format("invalid coupling layout".into()));
        }
        let n_cond = dim.div_ceil(2);
        let no = dim - n_cond;
        let mut blocks = Vec::with_capacity(perms.len());
        for perm in perms {
            let mut seen = vec![false; dim];
            if perm.len() != dim || perm.iter().any(|&i| i >= dim || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Format("coupling permutation is not a permutation".into()));
            }
            blocks.push(Block {
                perm,
                n_cond,
                w1: vec![0.0; hidden * n_cond],
                c1: vec![0.0; hidden],
                ws: vec![0.0; no * hidden],
                cs: vec![0.0; no],
                wt: vec![0.0; no * hidden],
                ct: vec![0.0; no],
            });
        }
        Ok(CouplingFlow {
            dim,
            hidden,
            scale_clamp,
            blocks,
        })
    }

    fn permutations(dim: usize, blocks: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let n_cond = dim.div_ceil(2);
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(blocks);
        for k in 0..blocks {
            if k % 2 == 1 {
                let prev = &out[k - 1];
                let mut p = prev[n_cond..].to_vec();
                p.extend_from_slice(&prev[..n_cond]);
                out.push(p);
            } else {
                let mut p: Vec<usize> = (0..dim).collect();
                p.shuffle(rng);
                out.push(p);
            }
        }
        out
    }

    pub fn blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn scale_clamp(&self) -> f64 {
        self.scale_clamp
    }

    pub fn permutation(&self, block: usize) -> &[usize] {
        &self.blocks[block].perm
    }
}

impl FlowTransform for CouplingFlow {
    fn kind(&self) -> FlowKind {
        FlowKind::Coupling
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut z = x.to_vec();
        let mut logdet = 0.0;
        for b in &self.blocks {
            logdet += b.forward(&mut z, self.scale_clamp).0;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("coupling flow produced a non-finite output".into()));
        }
        Ok((z, logdet))
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut x = z.to_vec();
        for b in self.blocks.iter().rev() {
            b.inverse(&mut x, self.scale_clamp);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("coupling inverse produced a non-finite output".into()));
        }
        Ok(x)
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for b in &self.blocks {
            b.params_into(&mut p);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let total: usize = self.blocks.iter().map(Block::param_count).sum();
        if params.len() != total {
            return Err(Error::Format(format!(
                "coupling flow needs {total} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite coupling parameter".into()));
        }
        let mut off = 0;
        for b in &mut self.blocks {
            let n = b.param_count();
            b.load(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn backward(&self, xs: &[&[f64]], grad_z: &[Vec<f64>], grad_logdet: f64, grad: &mut [f64]) -> Result<()> {
        let offsets: Vec<usize> = self
            .blocks
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += b.param_count();
                Some(o)
            })
            .collect();
        for (x, gz) in xs.iter().zip(grad_z) {
            let mut inputs = Vec::with_capacity(self.blocks.len());
            let mut caches = Vec::with_capacity(self.blocks.len());
            let mut cur = x.to_vec();
            for b in &self.blocks {
                inputs.push(cur.clone());
                let (_, cache) = b.forward(&mut cur, self.scale_clamp);
                caches.push(cache);
            }
            let mut g = gz.clone();
            for (k, b) in self.blocks.iter().enumerate().rev() {
                let n = b.param_count();
                b.backward(&inputs[k], &caches[k], &mut g, grad_logdet, &mut grad[offsets[k]..offsets[k] + n]);
            }
        }
        Ok(())
    }

    fn encode_layout(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        out.extend_from_slice(&self.scale_clamp.to_le_bytes());
        for b in &self.blocks {
            for &i in &b.perm {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
    }

    fn clone_box(&self) -> Box<dyn FlowTransform> {
        Box::new(self.clone())
    }
}
