//! Small dense value network with hand-written backpropagation.

use std::io::{self, Read, Write};

use rand::Rng;

use crate::scalar::Scalar;

/// Fully connected layer, `weights` stored row-major as `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = row.iter().zip(x).fold(self.bias[o], |acc, (w, v)| acc + *w * *v);
            out.push(z);
        }
    }
}

/// Rectifier MLP: every hidden layer is followed by `max(0, .)`, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<T: Scalar = f64> {
    layers: Vec<Dense<T>>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Trace<T> {
    /// Input of each layer (post-rectifier for hidden layers).
    inputs: Vec<Vec<T>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl<T: Scalar> ValueNet<T> {
    /// He-uniform weights, zero biases. `sizes` lists input, hidden and
    /// output widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                let bound = (6.0 / w[0] as f64).sqrt();
                for v in &mut d.weights {
                    *v = T::of(rng.random_range(-bound..bound));
                }
                d
            })
            .collect();
        ValueNet { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        ValueNet { layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    pub fn zeros_like(&self) -> Self {
        ValueNet::zeros(&self.dims())
    }

    /// Zeroes the output layer so every action value starts at 0.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weights.iter_mut().chain(last.bias.iter_mut()).for_each(|v| *v = T::zero());
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.trace(x).pre.pop().unwrap()
    }

    pub fn trace(&self, x: &[T]) -> Trace<T> {
        assert_eq!(x.len(), self.input_size(), "input width");
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&cur, &mut z);
            let next = if i < last { z.iter().map(|v| v.max(T::zero())).collect() } else { Vec::new() };
            inputs.push(std::mem::replace(&mut cur, next));
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// Adds the gradient of `sum_k grad_out[k] * output[k]` with respect to
    /// every parameter into `grads`.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], grads: &mut ValueNet<T>) {
        let mut delta = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let x = &trace.inputs[i];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                g.bias[o] = g.bias[o] + d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xv) in row.iter_mut().zip(x) {
                    *gw = *gw + d * *xv;
                }
            }
            if i == 0 {
                break;
            }
            // through the weights, then the previous layer's rectifier
            let below = &trace.pre[i - 1];
            let mut next = vec![T::zero(); layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n = *n + d * *w;
                }
            }
            for (n, z) in next.iter_mut().zip(below) {
                if *z <= T::zero() {
                    *n = T::zero();
                }
            }
            delta = next;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in file order: per layer, weights row-major then biases.
    pub fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn param(&self, i: usize) -> T {
        self.params().nth(i).expect("parameter index")
    }

    pub fn set_param(&mut self, i: usize, v: T) {
        *self.params_mut().nth(i).expect("parameter index") = v;
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> T {
        self.params().map(|v| v * v).sum::<T>().sqrt()
    }

    /// `self -= lr * grads`.
    pub fn descend(&mut self, grads: &ValueNet<T>, lr: T) {
        for (p, g) in self.params_mut().zip(grads.params()) {
            *p = *p - lr * g;
        }
    }

    pub fn scale(&mut self, k: T) {
        self.params_mut().for_each(|p| *p = *p * k);
    }

    /// Little-endian snapshot: `u32` count of layer widths, the widths as
    /// `u32`, then every parameter as `f64` in [`params`](Self::params) order.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dims = self.dims();
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for p in self.params() {
            w.write_all(&p.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> io::Result<Self> {
        let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let count = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&count) {
            return Err(invalid("layer count out of range"));
        }
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b4)?;
            let d = u32::from_le_bytes(b4) as usize;
            if d == 0 || d > 1 << 16 {
                return Err(invalid("layer width out of range"));
            }
            dims.push(d);
        }
        let mut net = ValueNet::zeros(&dims);
        let mut b8 = [0u8; 8];
        for p in net.params_mut() {
            r.read_exact(&mut b8)?;
            *p = T::of(f64::from_le_bytes(b8));
        }
        if r.read(&mut b8)? != 0 {
            return Err(invalid("trailing bytes after parameters"));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::sim_rng;

    #[test]
    fn zero_output_layer_gives_zero_values() {
        let mut rng = sim_rng(1, 0);
        let mut net = ValueNet::<f64>::new(&[5, 8, 8, 9], &mut rng);
        net.zero_output_layer();
        assert!(net.forward(&[1.0, -1.0, 0.0, 1.0, 1.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = sim_rng(2, 0);
        let net = ValueNet::<f64>::new(&[3, 4, 9], &mut rng);
        let x = [1.0, 0.0, -1.0];
        assert_eq!(net.forward(&x), net.forward(&x));
        assert_eq!(net.forward(&x).len(), 9);
    }

    #[test]
    fn hand_computed_forward() {
        let mut net = ValueNet::<f64>::zeros(&[2, 2, 1]);
        // hidden: relu([1, -1] . x), relu([2, 0] . x + 1); out: h0 + 3 h1
        for (i, v) in [1.0, -1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 3.0, 0.5].into_iter().enumerate() {
            net.set_param(i, v);
        }
        // x = (1, 2): h = (relu(-1), relu(3)) = (0, 3); out = 0 + 9 + 0.5
        assert_eq!(net.forward(&[1.0, 2.0]), vec![9.5]);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut rng = sim_rng(3, 0);
        let net = ValueNet::<f64>::new(&[4, 6, 9], &mut rng);
        let mut buf = Vec::new();
        net.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 3 * 4 + 8 * net.param_count());
        assert_eq!(&buf[..4], &3u32.to_le_bytes());
        assert_eq!(&buf[4..8], &4u32.to_le_bytes());
        let back = ValueNet::<f64>::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        buf.push(0);
        assert!(ValueNet::<f64>::read_snapshot(buf.as_slice()).is_err());
    }
}
