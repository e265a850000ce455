//! Encoder-decoder generator: a U-net, or the same network without skip
//! connections (a deep convolutional autoencoder).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BnRelu, Conv1x1, ConvBlock, ConvT2, MaxPool2, Param};
use super::tensor::{images_to_tensor, tensor_to_images, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::raster::{ImageRole, WpcImage, CHANNELS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Side length of the square input images.
    pub image_size: usize,
    /// Channels of the first stage; stage `i` has `base_channels * 2^i`.
    pub base_channels: usize,
    /// Number of pooling (and upsampling) stages.
    pub depth: usize,
    /// `true` for a U-net, `false` for the autoencoder variant.
    pub skip_connections: bool,
    /// Seed for weight initialization.
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            image_size: 256,
            base_channels: 64,
            depth: 4,
            skip_connections: true,
            init_seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn desk() -> Self {
        NetworkConfig {
            image_size: 64,
            base_channels: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 {
            return Err(Error::Config("depth and base_channels must be positive".into()));
        }
        let f = 1usize << self.depth;
        if self.image_size == 0 || !self.image_size.is_multiple_of(f) {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by 2^depth = {f}",
                self.image_size
            )));
        }
        Ok(())
    }

    pub fn channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn describe(&self) -> String {
        format!(
            "{} {}px base {} depth {}",
            if self.skip_connections { "U-net" } else { "DCAE" },
            self.image_size,
            self.base_channels,
            self.depth
        )
    }
}

#[derive(Clone, Debug)]
pub struct UNet<T> {
    config: NetworkConfig,
    enc: Vec<ConvBlock<T>>,
    pools: Vec<MaxPool2>,
    bottleneck: ConvBlock<T>,
    ups: Vec<ConvT2<T>>,
    dec: Vec<ConvBlock<T>>,
    out: Conv1x1<T>,
}

impl<T: Scalar> UNet<T> {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let d = config.depth;
        let enc = (0..d)
            .map(|i| {
                let cin = if i == 0 { CHANNELS } else { config.channels(i - 1) };
                ConvBlock::new(cin, config.channels(i), &mut rng)
            })
            .collect();
        let bottleneck = ConvBlock::new(config.channels(d - 1), config.channels(d), &mut rng);
        let ups = (0..d)
            .map(|i| ConvT2::new(config.channels(i + 1), config.channels(i), &mut rng))
            .collect();
        let dec = (0..d)
            .map(|i| {
                let c = config.channels(i);
                let cin = if config.skip_connections { 2 * c } else { c };
                ConvBlock::new(cin, c, &mut rng)
            })
            .collect();
        // output bias starts at the white background level
        let out = Conv1x1::new(config.channels(0), CHANNELS, 1.0, &mut rng);
        Ok(UNet {
            pools: vec![MaxPool2::default(); d],
            config,
            enc,
            bottleneck,
            ups,
            dec,
            out,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let f = 1usize << self.config.depth;
        if x.c != CHANNELS || !x.h.is_multiple_of(f) || !x.w.is_multiple_of(f) || x.h == 0 || x.w == 0 {
            return Err(Error::DimensionMismatch {
                expected: format!("3 channels and sides divisible by {f}"),
                actual: format!("{} channels, {}x{}", x.c, x.w, x.h),
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass (running normalization statistics).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let d = self.config.depth;
        let mut skips = Vec::with_capacity(d);
        let mut h = x.clone();
        for i in 0..d {
            let e = self.enc[i].forward(&h);
            h = self.pools[i].forward(&e);
            skips.push(e);
        }
        h = self.bottleneck.forward(&h);
        for i in (0..d).rev() {
            let u = self.ups[i].forward(&h);
            let cat = if self.config.skip_connections {
                Tensor::concat(&skips[i], &u)
            } else {
                u
            };
            h = self.dec[i].forward(&cat);
        }
        Ok(self.out.forward(&h))
    }

    /// Training-mode forward pass; caches activations for [`UNet::backward`].
    pub fn forward_train(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(&x)?;
        let d = self.config.depth;
        let mut skips = Vec::with_capacity(d);
        let mut h = x;
        for i in 0..d {
            let e = self.enc[i].forward_train(h);
            h = self.pools[i].forward_train(&e);
            skips.push(e);
        }
        h = self.bottleneck.forward_train(h);
        for i in (0..d).rev() {
            let u = self.ups[i].forward_train(h);
            let cat = if self.config.skip_connections {
                Tensor::concat(&skips[i], &u)
            } else {
                u
            };
            h = self.dec[i].forward_train(cat);
        }
        Ok(self.out.forward_train(h))
    }

    /// Accumulates parameter gradients for the output gradient `dy`.
    pub fn backward(&mut self, dy: &Tensor<T>) {
        let d = self.config.depth;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; d];
        let mut g = self.out.backward(dy);
        for i in 0..d {
            g = self.dec[i].backward(g, true).expect("decoder gradient");
            if self.config.skip_connections {
                let (ds, du) = g.split(self.config.channels(i));
                skip_grads[i] = Some(ds);
                g = du;
            }
            g = self.ups[i].backward(&g);
        }
        g = self.bottleneck.backward(g, true).expect("bottleneck gradient");
        for i in (0..d).rev() {
            g = self.pools[i].backward(&g);
            if let Some(ds) = &skip_grads[i] {
                g.add_assign(ds);
            }
            match self.enc[i].backward(g, i > 0) {
                Some(next) => g = next,
                None => break,
            }
        }
    }

    /// Every trainable parameter, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = Vec::new();
        for b in self.enc.iter_mut() {
            v.extend(b.params_mut());
        }
        v.extend(self.bottleneck.params_mut());
        for (u, b) in self.ups.iter_mut().zip(self.dec.iter_mut()) {
            v.push(&mut u.weight);
            v.push(&mut u.bias);
            v.extend(b.params_mut());
        }
        v.push(&mut self.out.weight);
        v.push(&mut self.out.bias);
        v
    }

    /// Every trainable parameter, in the same order as [`UNet::params_mut`].
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = Vec::new();
        for b in &self.enc {
            v.extend(b.params());
        }
        v.extend(self.bottleneck.params());
        for (u, b) in self.ups.iter().zip(&self.dec) {
            v.push(&u.weight);
            v.push(&u.bias);
            v.extend(b.params());
        }
        v.push(&self.out.weight);
        v.push(&self.out.bias);
        v
    }

    fn norms(&self) -> Vec<&BnRelu<T>> {
        let mut v = Vec::new();
        for b in self.enc.iter().chain(std::iter::once(&self.bottleneck)).chain(self.dec.iter()) {
            v.push(&b.bn1);
            v.push(&b.bn2);
        }
        v
    }

    fn norms_mut(&mut self) -> Vec<&mut BnRelu<T>> {
        let mut v = Vec::new();
        for b in self
            .enc
            .iter_mut()
            .chain(std::iter::once(&mut self.bottleneck))
            .chain(self.dec.iter_mut())
        {
            v.push(&mut b.bn1);
            v.push(&mut b.bn2);
        }
        v
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Parameters followed by normalization running statistics, flattened.
    pub fn state(&self) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for p in self.params() {
            out.extend_from_slice(&p.value);
        }
        for bn in self.norms() {
            out.extend_from_slice(&bn.running_mean);
            out.extend_from_slice(&bn.running_var);
        }
        out
    }

    pub fn state_len(&self) -> usize {
        let stats: usize = self.norms().iter().map(|b| 2 * b.channels).sum();
        self.n_params() + stats
    }

    /// Inverse of [`UNet::state`].
    pub fn load_state(&mut self, values: &[T]) -> Result<()> {
        let need = self.state_len();
        if values.len() != need {
            return Err(Error::DimensionMismatch {
                expected: format!("{need} state values"),
                actual: values.len().to_string(),
            });
        }
        let mut rest = values;
        for p in self.params_mut() {
            let (a, b) = rest.split_at(p.value.len());
            p.value.copy_from_slice(a);
            rest = b;
        }
        for bn in self.norms_mut() {
            let c = bn.channels;
            bn.running_mean.copy_from_slice(&rest[..c]);
            bn.running_var.copy_from_slice(&rest[c..2 * c]);
            rest = &rest[2 * c..];
        }
        Ok(())
    }

    /// Conv-block parameter count split into (encoder + bottleneck, decoder).
    pub fn block_param_counts(&self) -> (usize, usize) {
        let count = |b: &ConvBlock<T>| b.params().iter().map(|p| p.value.len()).sum::<usize>();
        let enc = self.enc.iter().map(count).sum::<usize>() + count(&self.bottleneck);
        let dec = self.dec.iter().map(count).sum::<usize>();
        (enc, dec)
    }
}

impl UNet<f32> {
    /// Generated images for a batch, in input order, clamped to `[0, 1]`.
    pub fn infer_batch(&self, inputs: &[&WpcImage]) -> Result<Vec<WpcImage>> {
        let size = self.config.image_size;
        if let Some(bad) = inputs.iter().find(|i| i.width != size || i.height != size) {
            return Err(Error::DimensionMismatch {
                expected: format!("{size}x{size} image"),
                actual: format!("{}x{}", bad.width, bad.height),
            });
        }
        let x = images_to_tensor::<f32>(inputs)?;
        let y = self.forward(&x)?;
        Ok(tensor_to_images(&y, ImageRole::Generated, true))
    }

    pub fn infer(&self, input: &WpcImage) -> Result<WpcImage> {
        Ok(self.infer_batch(&[input])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(skip: bool) -> NetworkConfig {
        NetworkConfig {
            image_size: 16,
            base_channels: 2,
            depth: 2,
            skip_connections: skip,
            init_seed: 5,
        }
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        assert!(NetworkConfig::desk().validate().is_ok());
        let bad = NetworkConfig {
            image_size: 24,
            ..NetworkConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn shapes_are_preserved() {
        let net = UNet::<f32>::new(tiny(true)).unwrap();
        for (h, w) in [(16, 16), (8, 12), (32, 16)] {
            let x = Tensor::zeros(3, 2, h, w);
            let y = net.forward(&x).unwrap();
            assert_eq!((y.c, y.n, y.h, y.w), (3, 2, h, w));
        }
        assert!(net.forward(&Tensor::zeros(3, 1, 10, 16)).is_err());
        assert!(net.forward(&Tensor::zeros(1, 1, 16, 16)).is_err());
    }

    #[test]
    fn inference_is_deterministic_and_clamped() {
        let net = UNet::<f32>::new(tiny(false)).unwrap();
        let mut img = WpcImage::white(16, 16, ImageRole::ScadaWpc);
        img.set_pixel(3, 4, [0.0; 3]);
        let a = net.infer(&img).unwrap();
        let b = net.infer(&img).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.role, ImageRole::Generated);
        let batch = net.infer_batch(&[&img, &WpcImage::white(16, 16, ImageRole::ScadaWpc), &img]).unwrap();
        assert_eq!(batch.len(), 3);
        assert_eq!(batch[0], a);
        assert_eq!(batch[2], a);
        assert!(net.infer(&WpcImage::white(32, 32, ImageRole::ScadaWpc)).is_err());
    }

    #[test]
    fn skip_connections_only_widen_decoder_blocks() {
        let u = UNet::<f32>::new(tiny(true)).unwrap();
        let a = UNet::<f32>::new(tiny(false)).unwrap();
        let (ue, ud) = u.block_param_counts();
        let (ae, ad) = a.block_param_counts();
        assert_eq!(ue, ae);
        // only the first conv of each decoder block sees twice the channels
        let extra: usize = (0..2).map(|i| { let c = 2usize << i; c * c * 9 }).sum();
        assert_eq!(ud, ad + extra);
    }

    #[test]
    fn state_round_trip() {
        let a = UNet::<f64>::new(tiny(true)).unwrap();
        let mut b = UNet::<f64>::new(NetworkConfig { init_seed: 9, ..tiny(true) }).unwrap();
        let s = a.state();
        assert_eq!(s.len(), a.state_len());
        b.load_state(&s).unwrap();
        assert_eq!(b.state(), s);
        assert!(b.load_state(&s[1..]).is_err());
    }
}
