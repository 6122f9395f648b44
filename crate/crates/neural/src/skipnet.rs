//! Encoder-decoder generator with narrow per-scale skip connections.
//!
//! Level `k` (resolution `R / 2^k`) is laid out as
//!
//! ```text
//! skip_k  = act(norm(conv1x1(x)))                  -> skip_channels
//! down_k  = act(norm(conv3x3(act(norm(conv3x3_s2(x))))))
//! deeper  = level_{k+1}(down_k)   or down_k at the last level
//! up_k    = act(norm(conv1x1(act(norm(conv3x3(norm(concat(skip_k, upsample(deeper)))))))))
//! ```
//!
//! and the image head is `sigmoid(conv1x1(up_0))` with one output channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NeuralError, Result};
use crate::kernels::resample::UpsampleMode;
use crate::params::Params;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SkipNetConfig {
    /// Channel width of each scale, outermost first. Its length is the number of scales.
    pub channels_per_scale: Vec<usize>,
    pub skip_channels: usize,
    pub input_channels: usize,
    pub leaky_slope: f64,
    pub upsample: UpsampleMode,
    pub norm_eps: f64,
    /// Probability of zeroing an encoder activation; 0 disables dropout.
    pub dropout: f64,
    pub seed: u64,
}

impl SkipNetConfig {
    fn with_channels(channels: &[usize]) -> Self {
        Self {
            channels_per_scale: channels.to_vec(),
            skip_channels: 4,
            input_channels: 32,
            leaky_slope: 0.2,
            upsample: UpsampleMode::Bilinear,
            norm_eps: 1e-5,
            dropout: 0.0,
            seed: 0,
        }
    }

    /// 5 scales, `[16, 32, 64, 128, 256]`.
    pub fn v1() -> Self {
        Self::with_channels(&[16, 32, 64, 128, 256])
    }

    /// 4 scales, `[32, 64, 128, 256]`.
    pub fn v2() -> Self {
        Self::with_channels(&[32, 64, 128, 256])
    }

    /// 3 scales, `[64, 128, 256]`.
    pub fn v3() -> Self {
        Self::with_channels(&[64, 128, 256])
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "v1" => Some(Self::v1()),
            "v2" => Some(Self::v2()),
            "v3" => Some(Self::v3()),
            _ => None,
        }
    }

    pub fn scales(&self) -> usize {
        self.channels_per_scale.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels_per_scale.is_empty() {
            return Err(NeuralError::Config("at least one scale is required".into()));
        }
        if self.channels_per_scale.contains(&0) || self.skip_channels == 0 || self.input_channels == 0 {
            return Err(NeuralError::Config("channel counts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NeuralError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Checks that an `h x w` input survives `scales` halvings.
    pub fn check_input_size(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.scales();
        if !h.is_multiple_of(f) || !w.is_multiple_of(f) || h / f < 2 || w / f < 2 {
            return Err(NeuralError::Config(format!(
                "input {h}x{w} must be divisible by 2^{} with at least 2 pixels left",
                self.scales()
            )));
        }
        Ok(())
    }
}

impl Default for SkipNetConfig {
    fn default() -> Self {
        Self::v1()
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormIdx {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
struct Level {
    skip: (ConvIdx, NormIdx),
    down1: (ConvIdx, NormIdx),
    down2: (ConvIdx, NormIdx),
    concat_norm: NormIdx,
    up1: (ConvIdx, NormIdx),
    up2: (ConvIdx, NormIdx),
}

/// Built generator: the layer layout over an external [`Params`] set.
#[derive(Debug, Clone)]
pub struct SkipNet {
    cfg: SkipNetConfig,
    levels: Vec<Level>,
    head: ConvIdx,
}

struct Builder<'a, T> {
    params: &'a mut Params<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    /// Kernel and bias drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) -> ConvIdx {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        let w = Tensor::uniform(&[c_out, c_in, k, k], -bound, bound, &mut self.rng);
        let b = Tensor::uniform(&[c_out], -bound, bound, &mut self.rng);
        ConvIdx {
            weight: self.params.push(format!("{name}.weight"), w),
            bias: self.params.push(format!("{name}.bias"), b),
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormIdx {
        NormIdx {
            gamma: self.params.push(format!("{name}.gamma"), Tensor::ones(&[c])),
            beta: self.params.push(format!("{name}.beta"), Tensor::zeros(&[c])),
        }
    }

    fn conv_norm(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) -> (ConvIdx, NormIdx) {
        (self.conv(&format!("{name}.conv"), c_in, c_out, k), self.norm(&format!("{name}.norm"), c_out))
    }
}

impl SkipNet {
    /// Lays out the network and draws its initial parameters from `cfg.seed`.
    pub fn build<T: Real>(cfg: &SkipNetConfig) -> Result<(Self, Params<T>)> {
        cfg.validate()?;
        let mut params = Params::new();
        let mut b = Builder {
            params: &mut params,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let ch = &cfg.channels_per_scale;
        let s = cfg.skip_channels;
        let mut levels = Vec::with_capacity(ch.len());
        for k in 0..ch.len() {
            let c_in = if k == 0 { cfg.input_channels } else { ch[k - 1] };
            // the deeper branch hands back ch[k + 1] channels, or ch[k] at the bottom
            let deeper = if k + 1 < ch.len() { ch[k + 1] } else { ch[k] };
            levels.push(Level {
                skip: b.conv_norm(&format!("level{k}.skip"), c_in, s, 1),
                down1: b.conv_norm(&format!("level{k}.down1"), c_in, ch[k], 3),
                down2: b.conv_norm(&format!("level{k}.down2"), ch[k], ch[k], 3),
                concat_norm: b.norm(&format!("level{k}.concat_norm"), s + deeper),
                up1: b.conv_norm(&format!("level{k}.up1"), s + deeper, ch[k], 3),
                up2: b.conv_norm(&format!("level{k}.up2"), ch[k], ch[k], 1),
            });
        }
        let head = b.conv("head", ch[0], 1, 1);
        Ok((
            Self {
                cfg: cfg.clone(),
                levels,
                head,
            },
            params,
        ))
    }

    pub fn config(&self) -> &SkipNetConfig {
        &self.cfg
    }

    /// Shape of the generator input for an `h x w` output.
    pub fn input_shape(&self, h: usize, w: usize) -> [usize; 4] {
        [1, self.cfg.input_channels, h, w]
    }

    fn conv_block<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        x: Var,
        (conv, norm): (ConvIdx, NormIdx),
        stride: usize,
    ) -> Result<Var> {
        let y = tape.conv2d(x, vars[conv.weight], Some(vars[conv.bias]), stride)?;
        let y = tape.channel_norm(y, vars[norm.gamma], vars[norm.beta], self.cfg.norm_eps)?;
        Ok(tape.leaky_relu(y, self.cfg.leaky_slope))
    }

    fn dropout<T: Real>(&self, tape: &mut Tape<T>, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.cfg.dropout;
        let Some(rng) = rng.filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask = Tensor::from_fn(tape.shape(x), |_| {
            if rand::Rng::random::<f64>(rng) < p {
                T::ZERO
            } else {
                keep
            }
        });
        let m = tape.constant(mask);
        tape.mul(x, m)
    }

    fn level<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        k: usize,
        x: Var,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let l = &self.levels[k];
        let skip = self.conv_block(tape, vars, x, l.skip, 1)?;
        let d = self.conv_block(tape, vars, x, l.down1, 2)?;
        let d = self.conv_block(tape, vars, d, l.down2, 1)?;
        let d = self.dropout(tape, d, rng.as_deref_mut())?;
        let deeper = if k + 1 < self.levels.len() {
            self.level(tape, vars, k + 1, d, rng)?
        } else {
            d
        };
        let up = tape.upsample2x(deeper, self.cfg.upsample)?;
        let c = tape.concat(&[skip, up])?;
        let c = tape.channel_norm(c, vars[l.concat_norm.gamma], vars[l.concat_norm.beta], self.cfg.norm_eps)?;
        let y = self.conv_block(tape, vars, c, l.up1, 1)?;
        self.conv_block(tape, vars, y, l.up2, 1)
    }

    /// Records the generator on `tape`. `vars` are the registered parameters
    /// (see [`Params::register`]); `z` is an `[1, input_channels, H, W]` input.
    /// Dropout is applied only when configured and an RNG is supplied.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        z: Var,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let (_, c, h, w) = tape.value(z).nchw("skipnet")?;
        if c != self.cfg.input_channels {
            return Err(NeuralError::Config(format!(
                "input has {c} channels, network expects {}",
                self.cfg.input_channels
            )));
        }
        self.cfg.check_input_size(h, w)?;
        let y = self.level(tape, vars, 0, z, &mut dropout_rng)?;
        let y = tape.conv2d(y, vars[self.head.weight], Some(vars[self.head.bias]), 1)?;
        Ok(tape.sigmoid(y))
    }

    /// Evaluates the generator without keeping the graph.
    pub fn generate<T: Real>(&self, params: &Params<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|(_, t)| tape.constant(t.clone())).collect();
        let zv = tape.constant(z.clone());
        let out = self.forward(&mut tape, &vars, zv, None)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_input() {
        let cfg = SkipNetConfig::v3();
        let (net, params) = SkipNet::build::<f32>(&cfg).unwrap();
        let z = Tensor::zeros(&[1, 32, 20, 20]);
        assert!(matches!(net.generate(&params, &z), Err(NeuralError::Config(_))));
    }

    #[test]
    fn rejects_zero_channels() {
        let mut cfg = SkipNetConfig::v2();
        cfg.skip_channels = 0;
        assert!(SkipNet::build::<f32>(&cfg).is_err());
    }

    #[test]
    fn named_presets() {
        assert_eq!(SkipNetConfig::by_name("v1").unwrap().scales(), 5);
        assert_eq!(SkipNetConfig::by_name("v2").unwrap().scales(), 4);
        assert_eq!(SkipNetConfig::by_name("v3").unwrap().scales(), 3);
        assert!(SkipNetConfig::by_name("v4").is_none());
    }
}
