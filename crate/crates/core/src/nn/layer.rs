//! Layers, blocks and their backward passes.
//!
//! Canonical parameter order (used by initialization, optimizer updates and
//! checkpoints alike): blocks in network order; within a plain FC layer the
//! weight matrix (row-major, out x in) then the bias; within a residual
//! block the scalar alpha then its inner layers; within a split block its
//! layers in order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Activation;

/// Fully connected layer `y = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major, `out_dim x in_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub act: Activation,
}

/// Accumulated parameter gradients of one FC layer.
#[derive(Debug, Clone)]
pub struct FcGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl FcLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, act: Activation) -> Self {
        FcLayer {
            in_dim,
            out_dim,
            w: vec![0.0; out_dim * in_dim],
            b: vec![0.0; out_dim],
            act,
        }
    }

    /// Glorot-uniform weight init, zero biases.
    pub fn init(in_dim: usize, out_dim: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, act);
        for w in &mut layer.w {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y.push(self.act.apply(acc));
        }
        y
    }

    /// Backward pass: given the layer input, its output and the gradient on
    /// the output, accumulates parameter gradients and returns the gradient
    /// on the input.
    pub fn backward(&self, x: &[f64], y: &[f64], grad_y: &[f64], grad: &mut FcGrad) -> Vec<f64> {
        debug_assert_eq!(grad_y.len(), self.out_dim);
        let mut grad_x = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let dz = grad_y[o] * self.act.prime_from_output(y[o]);
            if dz == 0.0 {
                continue;
            }
            grad.db[o] += dz;
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let drow = &mut grad.dw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                drow[i] += dz * x[i];
                grad_x[i] += dz * row[i];
            }
        }
        grad_x
    }

    pub fn grad_zeros(&self) -> FcGrad {
        FcGrad {
            dw: vec![0.0; self.w.len()],
            db: vec![0.0; self.b.len()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// A plain multi-layer perceptron; also the shape of the decoder-side
/// quantization-error correction network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<FcLayer>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer, then the final output.
    pub activations: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur);
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let y = layer.forward(acts.last().unwrap());
            acts.push(y);
        }
        let out = acts.last().unwrap().clone();
        (out, MlpCache { activations: acts })
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut [FcGrad]) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(
                &cache.activations[li],
                &cache.activations[li + 1],
                &g,
                &mut grads[li],
            );
        }
        g
    }

    pub fn grad_zeros(&self) -> Vec<FcGrad> {
        self.layers.iter().map(|l| l.grad_zeros()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// One network stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Fc(FcLayer),
    /// `y = x + alpha * F(x)`; alpha starts at 0, so the block is the
    /// identity at initialization.
    ReZero { alpha: f64, inner: Mlp },
    /// Triangular block: the first `ceil(rho * w_i)` outputs of every
    /// non-final layer are routed directly to the block output, the rest
    /// feed the next layer; the final layer contributes all its outputs.
    /// Routed slices are concatenated in layer order.
    DeepSplit { layers: Vec<FcLayer>, rho: f64 },
}

#[derive(Debug, Clone)]
pub enum BlockCache {
    Fc { x: Vec<f64>, y: Vec<f64> },
    ReZero { inner: MlpCache, fx: Vec<f64>, x: Vec<f64> },
    DeepSplit { xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub enum BlockGrad {
    Fc(FcGrad),
    ReZero { dalpha: f64, inner: Vec<FcGrad> },
    DeepSplit { layers: Vec<FcGrad> },
}

/// Number of directly-routed outputs of a non-final split-block layer.
pub fn split_count(width: usize, rho: f64) -> usize {
    (rho * width as f64).ceil() as usize
}

impl Block {
    pub fn in_dim(&self) -> usize {
        match self {
            Block::Fc(l) => l.in_dim,
            Block::ReZero { inner, .. } => inner.layers[0].in_dim,
            Block::DeepSplit { layers, .. } => layers[0].in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Block::Fc(l) => l.out_dim,
            Block::ReZero { inner, .. } => inner.layers[0].in_dim,
            Block::DeepSplit { layers, rho } => {
                let last = layers.len() - 1;
                layers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| if i == last { l.out_dim } else { split_count(l.out_dim, *rho) })
                    .sum()
            }
        }
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, BlockCache) {
        match self {
            Block::Fc(l) => {
                let y = l.forward(x);
                (y.clone(), BlockCache::Fc { x: x.to_vec(), y })
            }
            Block::ReZero { alpha, inner } => {
                let (fx, cache) = inner.forward_cached(x);
                let y: Vec<f64> = x.iter().zip(&fx).map(|(xi, fi)| xi + alpha * fi).collect();
                (y, BlockCache::ReZero { inner: cache, fx, x: x.to_vec() })
            }
            Block::DeepSplit { layers, rho } => {
                let last = layers.len() - 1;
                let mut xs = Vec::with_capacity(layers.len());
                let mut ys = Vec::with_capacity(layers.len());
                let mut routed: Vec<f64> = Vec::new();
                let mut cur = x.to_vec();
                for (li, layer) in layers.iter().enumerate() {
                    let y = layer.forward(&cur);
                    xs.push(std::mem::take(&mut cur));
                    if li == last {
                        routed.extend_from_slice(&y);
                    } else {
                        let s = split_count(layer.out_dim, *rho);
                        routed.extend_from_slice(&y[..s]);
                        cur = y[s..].to_vec();
                    }
                    ys.push(y);
                }
                (routed, BlockCache::DeepSplit { xs, ys })
            }
        }
    }

    pub fn backward(&self, cache: &BlockCache, grad_out: &[f64], grad: &mut BlockGrad) -> Vec<f64> {
        match (self, cache, grad) {
            (Block::Fc(l), BlockCache::Fc { x, y }, BlockGrad::Fc(g)) => l.backward(x, y, grad_out, g),
            (
                Block::ReZero { alpha, inner },
                BlockCache::ReZero { inner: cache, fx, x: _ },
                BlockGrad::ReZero { dalpha, inner: ginner },
            ) => {
                *dalpha += grad_out.iter().zip(fx).map(|(g, f)| g * f).sum::<f64>();
                let gf: Vec<f64> = grad_out.iter().map(|g| alpha * g).collect();
                let gx_inner = inner.backward(cache, &gf, ginner);
                grad_out.iter().zip(&gx_inner).map(|(a, b)| a + b).collect()
            }
            (
                Block::DeepSplit { layers, rho },
                BlockCache::DeepSplit { xs, ys },
                BlockGrad::DeepSplit { layers: glayers },
            ) => {
                let last = layers.len() - 1;
                // slice boundaries of grad_out in layer order
                let mut slice_grads: Vec<&[f64]> = Vec::with_capacity(layers.len());
                let mut off = 0;
                for (li, layer) in layers.iter().enumerate() {
                    let n = if li == last { layer.out_dim } else { split_count(layer.out_dim, *rho) };
                    slice_grads.push(&grad_out[off..off + n]);
                    off += n;
                }
                debug_assert_eq!(off, grad_out.len());

                // walk layers from the end, merging routed-slice gradients
                // with gradients flowing back from deeper layers
                let mut g_forwarded: Vec<f64> = Vec::new();
                for li in (0..layers.len()).rev() {
                    let gy: Vec<f64> = if li == last {
                        slice_grads[li].to_vec()
                    } else {
                        let mut gy = slice_grads[li].to_vec();
                        gy.extend_from_slice(&g_forwarded);
                        gy
                    };
                    g_forwarded = layers[li].backward(&xs[li], &ys[li], &gy, &mut glayers[li]);
                }
                g_forwarded
            }
            _ => unreachable!("mismatched block/cache/grad variants"),
        }
    }

    pub fn grad_zeros(&self) -> BlockGrad {
        match self {
            Block::Fc(l) => BlockGrad::Fc(l.grad_zeros()),
            Block::ReZero { inner, .. } => BlockGrad::ReZero { dalpha: 0.0, inner: inner.grad_zeros() },
            Block::DeepSplit { layers, .. } => {
                BlockGrad::DeepSplit { layers: layers.iter().map(|l| l.grad_zeros()).collect() }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Block::Fc(l) => l.param_count(),
            Block::ReZero { inner, .. } => 1 + inner.param_count(),
            Block::DeepSplit { layers, .. } => layers.iter().map(|l| l.param_count()).sum(),
        }
    }
}

/// A sequence of blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Net {
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct NetCache {
    pub blocks: Vec<BlockCache>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NetGrad {
    pub blocks: Vec<BlockGrad>,
}

impl Net {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for b in &self.blocks {
            cur = b.forward_cached(&cur).0;
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> NetCache {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = x.to_vec();
        for b in &self.blocks {
            let (y, c) = b.forward_cached(&cur);
            caches.push(c);
            cur = y;
        }
        NetCache { blocks: caches, output: cur }
    }

    pub fn backward(&self, cache: &NetCache, grad_out: &[f64], grads: &mut NetGrad) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for (bi, block) in self.blocks.iter().enumerate().rev() {
            g = block.backward(&cache.blocks[bi], &g, &mut grads.blocks[bi]);
        }
        g
    }

    pub fn grad_zeros(&self) -> NetGrad {
        NetGrad { blocks: self.blocks.iter().map(|b| b.grad_zeros()).collect() }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.param_count()).sum()
    }

    pub fn in_dim(&self) -> usize {
        self.blocks.first().map(|b| b.in_dim()).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.blocks.last().map(|b| b.out_dim()).unwrap_or(0)
    }
}

/// Builds one split block, validating that every non-final layer keeps at
/// least one forwarded output.
pub fn build_deep_split(
    in_dim: usize,
    widths: &[usize],
    rho: f64,
    act: Activation,
    rng: &mut impl Rng,
) -> Result<Block> {
    let mut layers = Vec::with_capacity(widths.len());
    let mut cur_in = in_dim;
    let last = widths.len() - 1;
    for (li, &w) in widths.iter().enumerate() {
        layers.push(FcLayer::init(cur_in, w, act, rng));
        if li < last {
            let s = split_count(w, rho);
            if s >= w {
                return Err(Error::Config(format!(
                    "split block layer {li}: routing {s} of {w} outputs leaves nothing to forward"
                )));
            }
            cur_in = w - s;
        }
    }
    Ok(Block::DeepSplit { layers, rho })
}

/// Visits every parameter slice of a net in canonical order, paired with the
/// matching gradient slice. Scalars are passed as one-element slices.
pub fn for_each_param_pair(
    net: &mut Net,
    grads: &NetGrad,
    f: &mut impl FnMut(&mut [f64], &[f64]),
) {
    for (block, grad) in net.blocks.iter_mut().zip(&grads.blocks) {
        match (block, grad) {
            (Block::Fc(l), BlockGrad::Fc(g)) => {
                f(&mut l.w, &g.dw);
                f(&mut l.b, &g.db);
            }
            (Block::ReZero { alpha, inner }, BlockGrad::ReZero { dalpha, inner: gi }) => {
                f(std::slice::from_mut(alpha), std::slice::from_ref(dalpha));
                for (l, g) in inner.layers.iter_mut().zip(gi) {
                    f(&mut l.w, &g.dw);
                    f(&mut l.b, &g.db);
                }
            }
            (Block::DeepSplit { layers, .. }, BlockGrad::DeepSplit { layers: gl }) => {
                for (l, g) in layers.iter_mut().zip(gl) {
                    f(&mut l.w, &g.dw);
                    f(&mut l.b, &g.db);
                }
            }
            _ => unreachable!("mismatched block/grad variants"),
        }
    }
}

/// Read-only parameter visitor in the same canonical order.
pub fn for_each_param(net: &Net, f: &mut impl FnMut(&[f64])) {
    for block in &net.blocks {
        match block {
            Block::Fc(l) => {
                f(&l.w);
                f(&l.b);
            }
            Block::ReZero { alpha, inner } => {
                f(std::slice::from_ref(alpha));
                for l in &inner.layers {
                    f(&l.w);
                    f(&l.b);
                }
            }
            Block::DeepSplit { layers, .. } => {
                for l in layers {
                    f(&l.w);
                    f(&l.b);
                }
            }
        }
    }
}

/// Mutable parameter visitor in the same canonical order.
pub fn for_each_param_mut(net: &mut Net, f: &mut impl FnMut(&mut [f64])) {
    for block in &mut net.blocks {
        match block {
            Block::Fc(l) => {
                f(&mut l.w);
                f(&mut l.b);
            }
            Block::ReZero { alpha, inner } => {
                f(std::slice::from_mut(alpha));
                for l in &mut inner.layers {
                    f(&mut l.w);
                    f(&mut l.b);
                }
            }
            Block::DeepSplit { layers, .. } => {
                for l in layers {
                    f(&mut l.w);
                    f(&mut l.b);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha;

    #[test]
    fn identity_fc_passes_through() {
        let mut l = FcLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            l.w[i * 3 + i] = 1.0;
        }
        assert_eq!(l.forward(&[1.0, -2.0, 0.5]), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_preactivation() {
        let l = FcLayer::init(4, 3, Activation::Identity, &mut chacha(0));
        assert_eq!(l.forward(&[0.0; 4]), vec![0.0; 3]);
    }

    #[test]
    fn fc_backward_matches_finite_difference() {
        let mut rng = chacha(1);
        let l = FcLayer::init(5, 4, Activation::Logistic, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss = |layer: &FcLayer| -> f64 {
            layer
                .forward(&x)
                .iter()
                .zip(&target)
                .map(|(y, t)| (y - t) * (y - t))
                .sum()
        };

        let y = l.forward(&x);
        let grad_y: Vec<f64> = y.iter().zip(&target).map(|(yi, t)| 2.0 * (yi - t)).collect();
        let mut g = l.grad_zeros();
        let grad_x = l.backward(&x, &y, &grad_y, &mut g);

        let h = 1e-6;
        for k in 0..l.w.len() {
            let mut lp = l.clone();
            lp.w[k] += h;
            let mut lm = l.clone();
            lm.w[k] -= h;
            let num = (loss(&lp) - loss(&lm)) / (2.0 * h);
            let rel = (num - g.dw[k]).abs() / num.abs().max(g.dw[k].abs()).max(1e-8);
            assert!(rel <= 1e-6, "w[{k}] rel {rel}");
        }
        for k in 0..l.b.len() {
            let mut lp = l.clone();
            lp.b[k] += h;
            let mut lm = l.clone();
            lm.b[k] -= h;
            let num = (loss(&lp) - loss(&lm)) / (2.0 * h);
            let rel = (num - g.db[k]).abs() / num.abs().max(g.db[k].abs()).max(1e-8);
            assert!(rel <= 1e-6, "b[{k}] rel {rel}");
        }
        // input gradient via perturbing x
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fp: f64 = l.forward(&xp).iter().zip(&target).map(|(y, t)| (y - t) * (y - t)).sum();
            let fm: f64 = l.forward(&xm).iter().zip(&target).map(|(y, t)| (y - t) * (y - t)).sum();
            let num = (fp - fm) / (2.0 * h);
            let rel = (num - grad_x[k]).abs() / num.abs().max(grad_x[k].abs()).max(1e-8);
            assert!(rel <= 1e-6, "x[{k}] rel {rel}");
        }
    }

    #[test]
    fn rezero_is_identity_at_alpha_zero() {
        let mut rng = chacha(2);
        let inner = Mlp { layers: vec![FcLayer::init(6, 6, Activation::Relu, &mut rng)] };
        let block = Block::ReZero { alpha: 0.0, inner };
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (y, _) = block.forward_cached(&x);
        assert_eq!(y, x);
    }

    #[test]
    fn rezero_alpha_one_identity_inner_doubles() {
        let mut identity = FcLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            identity.w[i * 3 + i] = 1.0;
        }
        let block = Block::ReZero { alpha: 1.0, inner: Mlp { layers: vec![identity] } };
        let (y, _) = block.forward_cached(&[1.0, 2.0, -3.0]);
        assert_eq!(y, vec![2.0, 4.0, -6.0]);
    }

    #[test]
    fn rezero_alpha_gradient_is_inner_dot() {
        let mut rng = chacha(3);
        let inner = Mlp { layers: vec![FcLayer::init(4, 4, Activation::Logistic, &mut rng)] };
        let block = Block::ReZero { alpha: 0.3, inner };
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (y, cache) = block.forward_cached(&x);
        let grad_y: Vec<f64> = y.iter().map(|v| 2.0 * v).collect(); // d(sum y^2)
        let mut g = block.grad_zeros();
        block.backward(&cache, &grad_y, &mut g);
        let analytic = match &g {
            BlockGrad::ReZero { dalpha, .. } => *dalpha,
            _ => unreachable!(),
        };

        let h = 1e-6;
        let loss_at = |alpha: f64| -> f64 {
            let b2 = match &block {
                Block::ReZero { inner, .. } => Block::ReZero { alpha, inner: inner.clone() },
                _ => unreachable!(),
            };
            b2.forward_cached(&x).0.iter().map(|v| v * v).sum()
        };
        let num = (loss_at(0.3 + h) - loss_at(0.3 - h)) / (2.0 * h);
        let rel = (num - analytic).abs() / num.abs().max(analytic.abs());
        assert!(rel <= 1e-6, "rel {rel}");
    }

    #[test]
    fn deep_split_widths_arithmetic() {
        // widths (8, 8), rho = 0.25: 2 routed + 8 final = 10 outputs
        let block = build_deep_split(5, &[8, 8], 0.25, Activation::Identity, &mut chacha(4)).unwrap();
        assert_eq!(block.out_dim(), 10);
        let (y, _) = block.forward_cached(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(y.len(), 10);
    }

    #[test]
    fn deep_split_single_layer_is_plain_fc() {
        let mut rng = chacha(5);
        let block = build_deep_split(4, &[6], 0.25, Activation::Relu, &mut rng).unwrap();
        let x = [0.3, -0.4, 0.9, 0.05];
        let (y, _) = block.forward_cached(&x);
        let fc = match &block {
            Block::DeepSplit { layers, .. } => layers[0].forward(&x),
            _ => unreachable!(),
        };
        assert_eq!(y, fc);
    }

    #[test]
    fn deep_split_rejects_degenerate_split() {
        // rho close to 1 leaves nothing to forward
        assert!(build_deep_split(4, &[4, 4], 0.95, Activation::Relu, &mut chacha(6)).is_err());
    }

    #[test]
    fn deep_split_backward_matches_finite_difference() {
        let mut rng = chacha(7);
        let block = build_deep_split(6, &[8, 7, 5], 0.3, Activation::Logistic, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out_dim = block.out_dim();
        let target: Vec<f64> = (0..out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss_of = |b: &Block| -> f64 {
            b.forward_cached(&x)
                .0
                .iter()
                .zip(&target)
                .map(|(y, t)| (y - t) * (y - t))
                .sum()
        };

        let (y, cache) = block.forward_cached(&x);
        let grad_y: Vec<f64> = y.iter().zip(&target).map(|(yi, t)| 2.0 * (yi - t)).collect();
        let mut g = block.grad_zeros();
        block.backward(&cache, &grad_y, &mut g);

        let glayers = match &g {
            BlockGrad::DeepSplit { layers } => layers,
            _ => unreachable!(),
        };
        let h = 1e-6;
        if let Block::DeepSplit { layers, rho } = &block {
            for (li, layer) in layers.iter().enumerate() {
                for k in (0..layer.w.len()).step_by(7) {
                    let perturb = |delta: f64| -> Block {
                        let mut ls = layers.clone();
                        ls[li].w[k] += delta;
                        Block::DeepSplit { layers: ls, rho: *rho }
                    };
                    let num = (loss_of(&perturb(h)) - loss_of(&perturb(-h))) / (2.0 * h);
                    let a = glayers[li].dw[k];
                    let rel = (num - a).abs() / num.abs().max(a.abs()).max(1e-8);
                    assert!(rel <= 1e-6, "layer {li} w[{k}] rel {rel}");
                }
            }
        }
    }
}
