use std::io::{Read, Write};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::normalize::{NormalizedPose, INPUT_DIM};
use crate::rng;
use crate::viewsphere::{ErrorField, ViewGrid};

const MAGIC: &[u8; 5] = b"PENv1";

/// Encoder 51 → 64 → 32 → 16, decoder 16 → 32 → 64 → 128 → 192.
pub const DEFAULT_LAYERS: [usize; 8] = [INPUT_DIM, 64, 32, 16, 32, 64, 128, 192];

/// Dense network with `tanh` hidden units and a softplus output.
///
/// Parameters are stored flat, layer by layer: the weight matrix (row-major,
/// `out x in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// One training example: normalized observation and flattened oracle field.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl PerceptionNet {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(PerceptionNet { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    /// Weights uniform in `±sqrt(3 / fan_in)`, biases zero.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut r = rng::rng(seed);
        let mut off = 0;
        for w in sizes.windows(2) {
            let limit = (3.0 / w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = r.random_range(-limit..limit);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!("expected {} parameters, got {}", net.params.len(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `(weights, biases)` of layer `l`.
    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + n_in * n_out];
        (w, &self.params[off + n_in * n_out..off + n_in * n_out + n_out])
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Pre-activations and activations of every layer; `acts[0]` is the input.
    fn trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = vec![x.to_vec()];
        let mut pres = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let a = &acts[l];
            let n_in = a.len();
            let z: Vec<f64> = b.iter().enumerate().map(|(o, &bo)| bo + dot(&w[o * n_in..(o + 1) * n_in], a)).collect();
            let last = l + 1 == self.n_layers();
            acts.push(z.iter().map(|&v| if last { softplus(v) } else { v.tanh() }).collect());
            pres.push(z);
        }
        (pres, acts)
    }

    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!("input has {} values, net expects {}", x.len(), self.input_dim())));
        }
        Ok(self.trace(x).1.pop().unwrap())
    }

    pub fn forward(&self, x: &NormalizedPose) -> Result<Vec<f64>> {
        self.forward_raw(&x.to_vec())
    }

    pub fn predict_field(&self, x: &NormalizedPose, g: &ViewGrid) -> Result<ErrorField> {
        if self.output_dim() != g.len() {
            return Err(Error::invalid(format!("net predicts {} cells, grid has {}", self.output_dim(), g.len())));
        }
        ErrorField::new(g.n_az, g.n_el, g.radius, self.forward(x)?)
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        (0..self.n_layers()).map(|l| self.layer(l).0.iter().map(|w| w * w).sum::<f64>()).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared error over the batch and output cells, without penalty.
pub fn data_loss(net: &PerceptionNet, batch: &[DatasetPair]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut sum = 0.0;
    for p in batch {
        check_pair(net, p)?;
        let y = net.forward_raw(&p.input)?;
        sum += y.iter().zip(&p.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / (batch.len() * net.output_dim()) as f64)
}

fn check_pair(net: &PerceptionNet, p: &DatasetPair) -> Result<()> {
    if p.input.len() != net.input_dim() || p.target.len() != net.output_dim() {
        return Err(Error::invalid(format!(
            "pair dims {}->{} do not match net {}->{}",
            p.input.len(),
            p.target.len(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

/// Data loss plus `l2 * |W|^2`, and its gradient laid out like the net's
/// parameters.
pub fn loss_and_grad(net: &PerceptionNet, batch: &[DatasetPair], l2: f64) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let nl = net.n_layers();
    let offsets: Vec<usize> = (0..nl).map(|l| net.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()).collect();
    let mut grad = vec![0.0; net.params.len()];
    let scale = 1.0 / (batch.len() * net.output_dim()) as f64;
    let mut loss = 0.0;
    for p in batch {
        check_pair(net, p)?;
        let (pres, acts) = net.trace(&p.input);
        let y = &acts[nl];
        let mut delta: Vec<f64> = y
            .iter()
            .zip(&p.target)
            .zip(&pres[nl - 1])
            .map(|((yo, t), z)| {
                loss += (yo - t) * (yo - t) * scale;
                2.0 * (yo - t) * scale * sigmoid(*z)
            })
            .collect();
        for l in (0..nl).rev() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let off = offsets[l];
            let a = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, &ai) in row.iter_mut().zip(a) {
                    *g += d * ai;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let (w, _) = net.layer(l);
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    for (pv, &wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *pv += d * wv;
                    }
                }
                for (pv, &ai) in prev.iter_mut().zip(a) {
                    *pv *= 1.0 - ai * ai;
                }
                delta = prev;
            }
        }
    }
    if l2 != 0.0 {
        for (l, &off) in offsets.iter().enumerate() {
            let n = net.sizes[l] * net.sizes[l + 1];
            for i in off..off + n {
                let w = net.params[i];
                loss += l2 * w * w;
                grad[i] += 2.0 * l2 * w;
            }
        }
    }
    Ok((loss, grad))
}

pub fn write_net<W: Write>(mut w: W, net: &PerceptionNet) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(net.sizes.len() as u32).to_le_bytes())?;
    for &s in &net.sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for p in &net.params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_net<R: Read>(mut r: R) -> Result<PerceptionNet> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| Error::format("truncated net file"))?;
    if &magic != MAGIC {
        return Err(Error::format("not a PENv1 net file"));
    }
    let mut u = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<usize> {
        r.read_exact(&mut u).map_err(|_| Error::format("truncated net header"))?;
        Ok(u32::from_le_bytes(u) as usize)
    };
    let n = read_u32(&mut r)?;
    if !(2..=64).contains(&n) {
        return Err(Error::format(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
    if sizes.iter().any(|&s| s == 0 || s > 1 << 16) {
        return Err(Error::format(format!("implausible layer sizes {sizes:?}")));
    }
    let mut params = vec![0.0; param_count(&sizes)];
    let mut b = [0u8; 8];
    for p in &mut params {
        r.read_exact(&mut b).map_err(|_| Error::format("truncated net weights"))?;
        *p = f64::from_le_bytes(b);
    }
    if r.read(&mut b)? != 0 {
        return Err(Error::format("trailing bytes after net weights"));
    }
    PerceptionNet::from_params(&sizes, params).map_err(|e| Error::format(e.to_string()))
}
