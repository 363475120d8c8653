use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::NetworkSpec;
use super::layers::{
    relu_backward, relu_inplace, softmax_cross_entropy, BatchNorm2d, BnCache, Conv2d, Linear,
    MaxPool2d,
};
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub conv: Conv2d<T>,
    pub bn: Option<BatchNorm2d<T>>,
    pub relu: bool,
    pub pool: Option<MaxPool2d>,
}

/// Feature blocks followed by a fully connected head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    spec: NetworkSpec,
    blocks: Vec<Block<T>>,
    head: Linear<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Tensor<T>,
    bn: Option<BnCache<T>>,
    /// Output of conv/bn/relu, before pooling.
    activation: Tensor<T>,
    pool_argmax: Option<Vec<u32>>,
    output_shape: Vec<usize>,
}

/// Intermediate values recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    mode: Mode,
    batch: usize,
    blocks: Vec<BlockCache<T>>,
    features: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Feature maps of the last block, `[batch, channels, rows, cols]`.
    pub fn last_activation(&self) -> &Tensor<T> {
        &self.blocks.last().expect("network has blocks").activation
    }
}

impl<T: Scalar> Network<T> {
    /// Fresh network with seeded fan-in-scaled initialization.
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_ch = if spec.shared_first_block { 1 } else { spec.input.channels };
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for b in &spec.blocks {
            blocks.push(Block {
                conv: Conv2d::new(in_ch, b.filters, b.kernel, b.stride, b.padding, !b.batchnorm, &mut rng),
                bn: b.batchnorm.then(|| BatchNorm2d::new(b.filters)),
                relu: b.relu,
                pool: b.pool.map(|p| MaxPool2d {
                    window: p.window,
                    stride: p.stride,
                    padding: p.padding,
                }),
            });
            in_ch = b.filters;
        }
        let [c, h, w] = spec.feature_shape()?;
        let head = Linear::new(c * h * w, spec.outputs, &mut rng);
        Ok(Self {
            spec: spec.clone(),
            blocks,
            head,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn head(&self) -> &Linear<T> {
        &self.head
    }

    /// Trainable tensors in declaration order: per block conv weight,
    /// conv bias (if any), bn gamma, bn beta; then head weight and bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(&b.conv.weight);
            if let Some(bias) = &b.conv.bias {
                out.push(bias);
            }
            if let Some(bn) = &b.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            if let Some(bias) = &mut b.conv.bias {
                out.push(bias);
            }
            if let Some(bn) = &mut b.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Batchnorm running mean and variance, per block in order.
    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        self.blocks
            .iter()
            .filter_map(|b| b.bn.as_ref())
            .flat_map(|bn| [&bn.running_mean, &bn.running_var])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.blocks
            .iter_mut()
            .filter_map(|b| b.bn.as_mut())
            .flat_map(|bn| [&mut bn.running_mean, &mut bn.running_var])
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    conv: Conv2d {
                        weight: b.conv.weight.cast(),
                        bias: b.conv.bias.as_ref().map(Tensor::cast),
                        stride: b.conv.stride,
                        padding: b.conv.padding,
                    },
                    bn: b.bn.as_ref().map(|bn| BatchNorm2d {
                        gamma: bn.gamma.cast(),
                        beta: bn.beta.cast(),
                        running_mean: bn.running_mean.cast(),
                        running_var: bn.running_var.cast(),
                        eps: bn.eps,
                        momentum: bn.momentum,
                    }),
                    relu: b.relu,
                    pool: b.pool,
                })
                .collect(),
            head: Linear {
                weight: self.head.weight.cast(),
                bias: self.head.bias.cast(),
            },
        }
    }

    /// Runs `[batch, channels, rows, cols]` input through the network and
    /// returns `[batch, outputs]` logits.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let inp = self.spec.input;
        let [n, c, h, w] = <[usize; 4]>::try_from(x.shape()).map_err(|_| {
            Error::Shape(format!("expected [batch, channels, rows, cols], got {:?}", x.shape()))
        })?;
        if (c, h, w) != (inp.channels, inp.rows, inp.cols) || n == 0 {
            return Err(Error::Shape(format!(
                "network `{}` expects [*, {}, {}, {}], got {:?}",
                self.spec.name,
                inp.channels,
                inp.rows,
                inp.cols,
                x.shape()
            )));
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = if self.spec.shared_first_block {
            x.clone().reshape(&[n * c, 1, h, w])?
        } else {
            x.clone()
        };
        for (i, block) in self.blocks.iter().enumerate() {
            let mut act = block.conv.forward(&cur)?;
            let bn_cache = match &block.bn {
                Some(bn) => {
                    let (y, cache) = bn.forward(&act, mode)?;
                    act = y;
                    Some(cache)
                }
                None => None,
            };
            if block.relu {
                relu_inplace(&mut act);
            }
            let (mut out, pool_argmax) = match &block.pool {
                Some(pool) => {
                    let (y, arg) = pool.forward(&act)?;
                    (y, Some(arg))
                }
                None => (act.clone(), None),
            };
            if i == 0 && self.spec.shared_first_block {
                out = sum_groups(&out, c)?;
            }
            if !out.all_finite() {
                return Err(Error::Numeric(format!("non-finite activation in block {i}")));
            }
            let output_shape = out.shape().to_vec();
            caches.push(BlockCache {
                output_shape,
                input: std::mem::replace(&mut cur, out),
                bn: bn_cache,
                activation: act,
                pool_argmax,
            });
        }
        let features = cur.reshape(&[n, self.head.inputs()])?;
        let logits = self.head.forward(&features)?;
        Ok((
            logits,
            ForwardCache {
                mode,
                batch: n,
                blocks: caches,
                features,
            },
        ))
    }

    /// Mean softmax cross-entropy and its gradient for every parameter, in
    /// [`Network::params`] order. Needs a train-mode cache.
    pub fn backward(&self, logits: &Tensor<T>, cache: &ForwardCache<T>, targets: &[usize]) -> Result<(T, Vec<Tensor<T>>)> {
        if cache.mode != Mode::Train {
            return Err(Error::State("backward needs a train-mode forward cache".into()));
        }
        let (loss, dlogits) = softmax_cross_entropy(logits, targets)?;
        Ok((loss, self.backward_from_logits(cache, &dlogits)?))
    }

    pub(crate) fn backward_from_logits(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if cache.blocks.len() != self.blocks.len() || dlogits.shape() != [cache.batch, self.spec.outputs] {
            return Err(Error::State("forward cache does not belong to this network".into()));
        }
        let (dfeat, dw_head, db_head) = self.head.backward(&cache.features, dlogits);
        let mut grads_rev: Vec<Tensor<T>> = vec![db_head, dw_head];
        let out_shape = &cache.blocks.last().expect("network has blocks").output_shape;
        let mut dout = dfeat.reshape(out_shape)?;
        let c_in = self.spec.input.channels;
        for (i, (block, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            if i == 0 && self.spec.shared_first_block {
                dout = repeat_groups(&dout, c_in)?;
            }
            let mut dact = match (&block.pool, &bc.pool_argmax) {
                (Some(pool), Some(arg)) => pool.backward(bc.activation.shape(), arg, &dout),
                _ => dout,
            };
            if block.relu {
                relu_backward(&bc.activation, &mut dact);
            }
            let mut block_grads = Vec::new();
            if let (Some(bn), Some(bn_cache)) = (&block.bn, &bc.bn) {
                let (dx, dgamma, dbeta) = bn.backward(bn_cache, &dact)?;
                block_grads.push(dbeta);
                block_grads.push(dgamma);
                dact = dx;
            }
            let g = block.conv.backward(&bc.input, &dact, i > 0)?;
            if let Some(db) = g.dbias {
                block_grads.push(db);
            }
            block_grads.push(g.dweight);
            grads_rev.extend(block_grads);
            dout = match g.dx {
                Some(dx) => dx,
                None => Tensor::zeros(&[0]),
            };
        }
        grads_rev.reverse();
        Ok(grads_rev)
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            if let (Some(bn), Some(BnCache::Train { stats, .. })) = (&mut block.bn, &bc.bn) {
                bn.update_running(stats);
            }
        }
    }

    /// Hash of every ReLU on/off pattern and max-pool choice in the cache.
    /// Equal signatures mean the forward pass took the same piecewise-linear
    /// branch.
    pub fn kink_signature(cache: &ForwardCache<T>) -> u64 {
        let mut h = DefaultHasher::new();
        for bc in &cache.blocks {
            for v in bc.activation.data() {
                (*v > T::zero()).hash(&mut h);
            }
            bc.pool_argmax.hash(&mut h);
        }
        h.finish()
    }
}

/// `[n·g, c, h, w]` → `[n, c, h, w]` by summing consecutive groups of `g`.
fn sum_groups<T: Scalar>(x: &Tensor<T>, g: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let n = s[0] / g;
    let per: usize = s[1..].iter().product();
    let mut out = Tensor::zeros(&[n, s[1], s[2], s[3]]);
    for i in 0..n {
        let dst = &mut out.data_mut()[i * per..(i + 1) * per];
        for j in 0..g {
            let src = &x.data()[(i * g + j) * per..(i * g + j + 1) * per];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = *d + v;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`sum_groups`] for gradients: copy each sample `g` times.
fn repeat_groups<T: Scalar>(x: &Tensor<T>, g: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let per: usize = s[1..].iter().product();
    let mut data = Vec::with_capacity(x.len() * g);
    for i in 0..s[0] {
        for _ in 0..g {
            data.extend_from_slice(&x.data()[i * per..(i + 1) * per]);
        }
    }
    Tensor::from_vec(&[s[0] * g, s[1], s[2], s[3]], data)
}
