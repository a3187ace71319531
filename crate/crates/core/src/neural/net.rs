//! Small convolutional classifier: stride-2 3×3 conv + ReLU blocks, global
//! average pooling, one linear layer. Single-sample forward/backward; batching
//! happens in the training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::Image;

const KSIZE: usize = 9;
const INIT_STREAM: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub n_classes: usize,
}

impl NetConfig {
    pub fn new(n_classes: usize) -> Self {
        Self {
            in_channels: 3,
            channels: vec![16, 32, 64, 128],
            n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub in_c: usize,
    pub out_c: usize,
    /// `out_c × (in_c · 9)`, kernel taps in (channel, ky, kx) order.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    /// `out_f × in_f`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetModel {
    pub arch: NetConfig,
    pub convs: Vec<Conv>,
    pub head: Linear,
}

/// Gradient buffers shaped like the model's parameters. Frozen layers keep
/// empty buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub conv_w: Vec<Vec<f32>>,
    pub conv_b: Vec<Vec<f32>>,
    pub head_w: Vec<f32>,
    pub head_b: Vec<f32>,
}

impl Grads {
    pub fn add(&mut self, other: &Grads) {
        let pairs = self
            .conv_w
            .iter_mut()
            .zip(&other.conv_w)
            .chain(self.conv_b.iter_mut().zip(&other.conv_b))
            .chain([
                (&mut self.head_w, &other.head_w),
                (&mut self.head_b, &other.head_b),
            ]);
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f32) {
        for v in self.conv_w.iter_mut().chain(&mut self.conv_b) {
            v.iter_mut().for_each(|x| *x *= s);
        }
        self.head_w
            .iter_mut()
            .chain(&mut self.head_b)
            .for_each(|x| *x *= s);
    }
}

/// Activations kept for the backward pass.
pub struct Cache {
    /// im2col matrix of each conv's input.
    cols: Vec<Vec<f32>>,
    /// Post-ReLU output of each conv.
    acts: Vec<Vec<f32>>,
    /// Spatial size (h, w) of each conv's input, then of the last output.
    sizes: Vec<(usize, usize)>,
    pub features: Vec<f32>,
}

fn out_size(n: usize) -> usize {
    (n - 1) / 2 + 1
}

/// C = alpha·A·B + beta·C for row-major blocks given explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index matrixmultiply touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(input: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let (ho, wo) = (out_size(h), out_size(w));
    let p = ho * wo;
    let mut cols = vec![0.0f32; c * KSIZE * p];
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * KSIZE + ky * 3 + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * wo..][..wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let (ho, wo) = (out_size(h), out_size(w));
    let p = ho * wo;
    let mut out = vec![0.0f32; c * h * w];
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * KSIZE + ky * 3 + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// CHW float tensor of an image resized to `size × size`, scaled to [-1, 1].
/// Gray images are replicated to three channels.
pub fn image_to_tensor(img: &Image, size: u32) -> Vec<f32> {
    let resized;
    let img = if img.width() == size && img.height() == size {
        img
    } else {
        resized = img.resize_bilinear(size, size);
        &resized
    };
    let n = size as usize * size as usize;
    let c = img.channels() as usize;
    let mut out = vec![0.0f32; 3 * n];
    for (i, px) in img.data().chunks_exact(c).enumerate() {
        for ch in 0..3 {
            out[ch * n + i] = px[ch.min(c - 1)] as f32 / 127.5 - 1.0;
        }
    }
    out
}

impl NetModel {
    /// He-initialized network; all layers trainable.
    pub fn new(arch: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let mut convs = Vec::with_capacity(arch.channels.len());
        let mut in_c = arch.in_channels;
        for &out_c in &arch.channels {
            let fan_in = in_c * KSIZE;
            let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("valid std");
            convs.push(Conv {
                in_c,
                out_c,
                weight: (0..out_c * fan_in)
                    .map(|_| normal.sample(&mut rng))
                    .collect(),
                bias: vec![0.0; out_c],
                trainable: true,
            });
            in_c = out_c;
        }
        let normal = Normal::new(0.0f32, (1.0 / in_c as f32).sqrt()).expect("valid std");
        let head = Linear {
            in_f: in_c,
            out_f: arch.n_classes,
            weight: (0..arch.n_classes * in_c)
                .map(|_| normal.sample(&mut rng))
                .collect(),
            bias: vec![0.0; arch.n_classes],
            trainable: true,
        };
        Self { arch, convs, head }
    }

    /// Freezes the backbone (`false`) or makes every layer trainable.
    pub fn set_backbone_trainable(&mut self, trainable: bool) {
        self.convs.iter_mut().for_each(|c| c.trainable = trainable);
        self.head.trainable = true;
    }

    pub fn backbone_trainable(&self) -> bool {
        self.convs.iter().any(|c| c.trainable)
    }

    pub fn zero_grads(&self) -> Grads {
        let sized = |n: usize, on: bool| if on { vec![0.0; n] } else { Vec::new() };
        Grads {
            conv_w: self
                .convs
                .iter()
                .map(|c| sized(c.weight.len(), c.trainable))
                .collect(),
            conv_b: self
                .convs
                .iter()
                .map(|c| sized(c.bias.len(), c.trainable))
                .collect(),
            head_w: sized(self.head.weight.len(), self.head.trainable),
            head_b: sized(self.head.bias.len(), self.head.trainable),
        }
    }

    /// Forward pass over a CHW tensor of spatial size `h × w`.
    pub fn forward(&self, input: &[f32], h: usize, w: usize) -> (Vec<f32>, Cache) {
        let mut cache = Cache {
            cols: Vec::with_capacity(self.convs.len()),
            acts: Vec::with_capacity(self.convs.len()),
            sizes: vec![(h, w)],
            features: Vec::new(),
        };
        let (mut h, mut w) = (h, w);
        let mut x = input.to_vec();
        for conv in &self.convs {
            let cols = im2col(&x, conv.in_c, h, w);
            let (ho, wo) = (out_size(h), out_size(w));
            let p = ho * wo;
            let k = conv.in_c * KSIZE;
            let mut out = vec![0.0f32; conv.out_c * p];
            gemm(
                conv.out_c,
                k,
                p,
                &conv.weight,
                (k, 1),
                &cols,
                (p, 1),
                0.0,
                &mut out,
            );
            for (o, row) in out.chunks_exact_mut(p).enumerate() {
                let b = conv.bias[o];
                row.iter_mut().for_each(|v| *v = (*v + b).max(0.0));
            }
            cache.cols.push(cols);
            x = out;
            h = ho;
            w = wo;
            cache.acts.push(x.clone());
            cache.sizes.push((h, w));
        }
        let p = (h * w) as f32;
        let features: Vec<f32> = x
            .chunks_exact(h * w)
            .map(|c| c.iter().sum::<f32>() / p)
            .collect();
        let logits = (0..self.head.out_f)
            .map(|o| {
                let row = &self.head.weight[o * self.head.in_f..(o + 1) * self.head.in_f];
                row.iter().zip(&features).map(|(a, b)| a * b).sum::<f32>() + self.head.bias[o]
            })
            .collect();
        cache.features = features;
        (logits, cache)
    }

    pub fn logits(&self, input: &[f32], h: usize, w: usize) -> Vec<f32> {
        self.forward(input, h, w).0
    }

    /// Accumulates parameter gradients for one sample into `grads`. Stops at
    /// the head when the backbone is frozen.
    pub fn backward(&self, cache: &Cache, dlogits: &[f32], grads: &mut Grads) {
        let head = &self.head;
        if head.trainable {
            for (o, &g) in dlogits.iter().enumerate() {
                let row = &mut grads.head_w[o * head.in_f..(o + 1) * head.in_f];
                row.iter_mut()
                    .zip(&cache.features)
                    .for_each(|(a, f)| *a += g * f);
                grads.head_b[o] += g;
            }
        }
        if !self.backbone_trainable() {
            return;
        }
        let mut dfeat = vec![0.0f32; head.in_f];
        for (o, &g) in dlogits.iter().enumerate() {
            let row = &head.weight[o * head.in_f..(o + 1) * head.in_f];
            dfeat.iter_mut().zip(row).for_each(|(d, w)| *d += g * w);
        }
        let last = self.convs.len();
        let (h, w) = cache.sizes[last];
        let p = (h * w) as f32;
        let mut dx: Vec<f32> = dfeat
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d / p, h * w))
            .collect();

        for l in (0..last).rev() {
            let conv = &self.convs[l];
            let (hi, wi) = cache.sizes[l];
            let (ho, wo) = cache.sizes[l + 1];
            let p = ho * wo;
            let k = conv.in_c * KSIZE;
            // ReLU gate.
            dx.iter_mut().zip(&cache.acts[l]).for_each(|(d, &a)| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            if conv.trainable {
                gemm(
                    conv.out_c,
                    p,
                    k,
                    &dx,
                    (p, 1),
                    &cache.cols[l],
                    (1, p),
                    1.0,
                    &mut grads.conv_w[l],
                );
                for (o, row) in dx.chunks_exact(p).enumerate() {
                    grads.conv_b[l][o] += row.iter().sum::<f32>();
                }
            }
            if l == 0 || !self.convs[..l].iter().any(|c| c.trainable) {
                break;
            }
            let mut dcols = vec![0.0f32; k * p];
            gemm(
                k,
                conv.out_c,
                p,
                &conv.weight,
                (1, k),
                &dx,
                (p, 1),
                0.0,
                &mut dcols,
            );
            dx = col2im(&dcols, conv.in_c, hi, wi);
        }
    }

    /// Applies `param -= lr · step` to every trainable layer.
    pub fn apply_step(&mut self, step: &Grads, lr: f32) {
        for (l, conv) in self.convs.iter_mut().enumerate() {
            if conv.trainable {
                conv.weight
                    .iter_mut()
                    .zip(&step.conv_w[l])
                    .for_each(|(p, g)| *p -= lr * g);
                conv.bias
                    .iter_mut()
                    .zip(&step.conv_b[l])
                    .for_each(|(p, g)| *p -= lr * g);
            }
        }
        if self.head.trainable {
            self.head
                .weight
                .iter_mut()
                .zip(&step.head_w)
                .for_each(|(p, g)| *p -= lr * g);
            self.head
                .bias
                .iter_mut()
                .zip(&step.head_b)
                .for_each(|(p, g)| *p -= lr * g);
        }
    }

    /// Parameter arrays in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f32])> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), c.weight.as_slice()));
            out.push((format!("conv{i}.bias"), c.bias.as_slice()));
        }
        out.push(("head.weight".into(), self.head.weight.as_slice()));
        out.push(("head.bias".into(), self.head.bias.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn backbone_params(&self) -> Vec<f32> {
        self.convs
            .iter()
            .flat_map(|c| c.weight.iter().chain(&c.bias))
            .copied()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> NetModel {
        NetModel::new(
            NetConfig {
                in_channels: 3,
                channels: vec![4, 5],
                n_classes: 3,
            },
            7,
        )
    }

    fn loss_of(net: &NetModel, x: &[f32], target: &[f32]) -> f64 {
        let l = net.logits(x, 7, 6);
        l.iter()
            .zip(target)
            .map(|(a, t)| *a as f64 * *t as f64)
            .sum()
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let net = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (h, w) = (7, 6);
        let x: Vec<f32> = (0..3 * h * w)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let (_, cache) = net.forward(&x, h, w);
        let conv = &net.convs[0];
        let (ho, wo) = (out_size(h), out_size(w));
        for o in 0..conv.out_c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = conv.bias[o] as f64;
                    for ci in 0..3 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) =
                                    ((oy * 2 + ky) as isize - 1, (ox * 2 + kx) as isize - 1);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let wv = conv.weight[o * 27 + ci * 9 + ky * 3 + kx] as f64;
                                s += wv * x[ci * h * w + iy as usize * w + ix as usize] as f64;
                            }
                        }
                    }
                    let got = cache.acts[0][o * ho * wo + oy * wo + ox] as f64;
                    assert!((got - s.max(0.0)).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f32> = (0..3 * 7 * 6)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let target = [0.5f32, -1.0, 2.0];
        let (_, cache) = net.forward(&x, 7, 6);
        let mut g = net.zero_grads();
        net.backward(&cache, &target, &mut g);

        let analytic: Vec<f32> = g
            .conv_w
            .iter()
            .zip(&g.conv_b)
            .flat_map(|(w, b)| w.iter().chain(b).copied().collect::<Vec<_>>())
            .chain(g.head_w.iter().chain(&g.head_b).copied())
            .collect();
        let mut idx = 0;
        let mut checked = 0;
        let n_tensors = net.tensors().len();
        for t in 0..n_tensors {
            let len = net.tensors_mut()[t].len();
            for j in (0..len).step_by(7) {
                let orig = net.tensors_mut()[t][j];
                let h = 1e-3f32;
                net.tensors_mut()[t][j] = orig + h;
                let up = loss_of(&net, &x, &target);
                net.tensors_mut()[t][j] = orig - h;
                let down = loss_of(&net, &x, &target);
                net.tensors_mut()[t][j] = orig;
                let num = (up - down) / (2.0 * h as f64);
                let a = analytic[idx + j] as f64;
                // ReLU kinks make a few probes unreliable; the bound is loose.
                assert!(
                    (num - a).abs() < 2e-2 * a.abs().max(1.0),
                    "tensor {t} idx {j}: {num} vs {a}"
                );
                checked += 1;
            }
            idx += len;
        }
        assert!(checked > 20);
    }

    #[test]
    fn frozen_backbone_gets_no_gradient() {
        let mut net = tiny();
        net.set_backbone_trainable(false);
        let x = vec![0.3f32; 3 * 7 * 6];
        let (_, cache) = net.forward(&x, 7, 6);
        let mut g = net.zero_grads();
        net.backward(&cache, &[1.0, 0.0, -1.0], &mut g);
        assert!(g.conv_w.iter().all(Vec::is_empty));
        let before = net.backbone_params();
        net.apply_step(&g, 0.1);
        assert_eq!(before, net.backbone_params());
        assert_eq!(g.head_b, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn tensor_conversion() {
        let gray = Image::new(2, 2, 1, vec![0, 255, 0, 255]).unwrap();
        let t = image_to_tensor(&gray, 2);
        assert_eq!(t.len(), 12);
        assert_eq!(&t[..4], &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(&t[..4], &t[8..]);
    }
}
