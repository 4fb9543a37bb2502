//! Network construction, forward/backward passes, and the architecture
//! analyzers (parameter count, FLOPs, receptive field).
//!
//! Both architectures are encoder/decoder stacks of double convolutions
//! (conv 3x3 + batch norm + ReLU, twice) with four 1xk max-pool stages, a
//! mirrored set of four 1xk up-convolutions with skip concatenation, and a
//! final 3x3 convolution onto the two phase classes. The compact variant
//! uses channels [8,16,32,64,128] with pool width 4; the wide baseline uses
//! [64,128,256,512,1024] with pool width 2.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernel::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, concat_channels_batch, conv2d_backward_batch,
    conv2d_batch, crop_length, crop_length_backward, maxpool_backward_batch, maxpool_batch,
    mean_height, mean_height_backward, pad_right_edge, padded_len, relu_backward_batch, relu_batch,
    split_channels_batch, transposed_conv_backward_batch, transposed_conv_batch, Adam,
    BatchNormCache, BatchNormParams, ConvParams, TensorBatch,
};

pub const NUM_POOL_STAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    UNet,
    IMUNet,
}

/// How the six sensor channels map onto the input tensor: SpatialFirst puts
/// them on the height axis of a single channel (1 x 6 x L); TemporalFirst
/// makes each one its own channel (6 x 1 x L).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLayout {
    SpatialFirst,
    TemporalFirst,
}

impl InputLayout {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputLayout::SpatialFirst => "spatial_first",
            InputLayout::TemporalFirst => "temporal_first",
        }
    }

    pub fn parse(s: &str) -> Result<InputLayout> {
        match s {
            "spatial_first" => Ok(InputLayout::SpatialFirst),
            "temporal_first" => Ok(InputLayout::TemporalFirst),
            _ => Err(Error::InvalidArgument(format!("unknown layout {:?}", s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub layout: InputLayout,
    pub pool_k: usize,
    pub encoder_channels: Vec<usize>,
    pub window_len: usize,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Compact network at the native 1000 Hz rate: pool width 4.
    pub fn imu_net(window_len: usize) -> Self {
        NetworkSpec {
            variant: Variant::IMUNet,
            layout: InputLayout::SpatialFirst,
            pool_k: 4,
            encoder_channels: vec![8, 16, 32, 64, 128],
            window_len,
            num_classes: 2,
        }
    }

    /// Compact network for 20 Hz streams: same channels, pool width 2 so
    /// four stages fit into short windows.
    pub fn imu_net_20hz(window_len: usize) -> Self {
        NetworkSpec {
            pool_k: 2,
            ..NetworkSpec::imu_net(window_len)
        }
    }

    /// Wide baseline with the classical channel ladder and pool width 2.
    pub fn unet(window_len: usize) -> Self {
        NetworkSpec {
            variant: Variant::UNet,
            layout: InputLayout::SpatialFirst,
            pool_k: 2,
            encoder_channels: vec![64, 128, 256, 512, 1024],
            window_len,
            num_classes: 2,
        }
    }

    /// Input channel count implied by the layout.
    pub fn in_channels(&self) -> usize {
        match self.layout {
            InputLayout::SpatialFirst => 1,
            InputLayout::TemporalFirst => 6,
        }
    }

    /// Input height implied by the layout.
    pub fn in_height(&self) -> usize {
        match self.layout {
            InputLayout::SpatialFirst => 6,
            InputLayout::TemporalFirst => 1,
        }
    }

    /// Length divisor the padding must reach: pool_k^4.
    pub fn pool_divisor(&self) -> usize {
        self.pool_k.pow(NUM_POOL_STAGES as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.len() != NUM_POOL_STAGES + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} encoder channel entries, got {}",
                NUM_POOL_STAGES + 1,
                self.encoder_channels.len()
            )));
        }
        if self.encoder_channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument(
                "encoder channel widths must be positive".into(),
            ));
        }
        if self.pool_k != 2 && self.pool_k != 4 {
            return Err(Error::InvalidArgument(format!(
                "pool width must be 2 or 4, got {}",
                self.pool_k
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        let min = self.pool_divisor();
        if self.window_len < min {
            return Err(Error::WindowTooShort {
                window_len: self.window_len,
                min,
            });
        }
        Ok(())
    }

    /// Canonical key=value text used inside checkpoints.
    pub fn to_kv(&self) -> String {
        let chans: Vec<String> = self.encoder_channels.iter().map(|c| c.to_string()).collect();
        format!(
            "variant={}\nlayout={}\npool_k={}\nencoder_channels={}\nwindow_len={}\nnum_classes={}\n",
            match self.variant {
                Variant::UNet => "unet",
                Variant::IMUNet => "imunet",
            },
            match self.layout {
                InputLayout::SpatialFirst => "spatial_first",
                InputLayout::TemporalFirst => "temporal_first",
            },
            self.pool_k,
            chans.join(","),
            self.window_len,
            self.num_classes
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut variant = None;
        let mut layout = None;
        let mut pool_k = None;
        let mut encoder_channels = None;
        let mut window_len = None;
        let mut num_classes = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Checkpoint {
                field: "spec".into(),
                reason: format!("malformed line {:?}", line),
            })?;
            let bad = |reason: String| Error::Checkpoint {
                field: k.to_string(),
                reason,
            };
            match k {
                "variant" => {
                    variant = Some(match v {
                        "unet" => Variant::UNet,
                        "imunet" => Variant::IMUNet,
                        _ => return Err(bad(format!("unknown variant {:?}", v))),
                    })
                }
                "layout" => {
                    layout = Some(match v {
                        "spatial_first" => InputLayout::SpatialFirst,
                        "temporal_first" => InputLayout::TemporalFirst,
                        _ => return Err(bad(format!("unknown layout {:?}", v))),
                    })
                }
                "pool_k" => {
                    pool_k = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                }
                "encoder_channels" => {
                    let parsed: std::result::Result<Vec<usize>, _> =
                        v.split(',').map(|s| s.trim().parse::<usize>()).collect();
                    encoder_channels = Some(parsed.map_err(|e| bad(e.to_string()))?);
                }
                "window_len" => {
                    window_len = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                }
                "num_classes" => {
                    num_classes = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                }
                _ => {
                    return Err(Error::Checkpoint {
                        field: k.to_string(),
                        reason: "unknown spec field".into(),
                    })
                }
            }
        }
        let req = |name: &str| Error::Checkpoint {
            field: name.to_string(),
            reason: "missing".into(),
        };
        let spec = NetworkSpec {
            variant: variant.ok_or_else(|| req("variant"))?,
            layout: layout.ok_or_else(|| req("layout"))?,
            pool_k: pool_k.ok_or_else(|| req("pool_k"))?,
            encoder_channels: encoder_channels.ok_or_else(|| req("encoder_channels"))?,
            window_len: window_len.ok_or_else(|| req("window_len"))?,
            num_classes: num_classes.ok_or_else(|| req("num_classes"))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Receptive field in the simplified product form: the four temporal pooling
/// factors times the width of the final 3-tap convolution.
pub fn receptive_field(spec: &NetworkSpec) -> u64 {
    receptive_field_for_pools(&vec![spec.pool_k; NUM_POOL_STAGES])
}

/// Same product form over an arbitrary pooling ladder; an empty ladder
/// leaves just the bare 3-tap kernel.
pub fn receptive_field_for_pools(pools: &[usize]) -> u64 {
    pools.iter().map(|&k| k as u64).product::<u64>() * 3
}

/// True when one output sample sees more than half the window, the regime
/// where a single pass can relate both phases of a stride.
pub fn covers_half_window(spec: &NetworkSpec) -> bool {
    2 * receptive_field(spec) > spec.window_len as u64
}

struct ConvLayer {
    name: String,
    p: ConvParams,
    gw: Vec<f64>,
    gb: Vec<f64>,
}

impl ConvLayer {
    fn new(name: &str, out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Self {
        let p = ConvParams::new(out_ch, in_ch, kh, kw);
        let gw = vec![0.0; p.weights.len()];
        let gb = vec![0.0; p.bias.len()];
        ConvLayer {
            name: name.to_string(),
            p,
            gw,
            gb,
        }
    }

    fn init(&mut self, rng: &mut ChaCha12Rng) {
        let fan_in = (self.p.in_ch * self.p.kh * self.p.kw) as f64;
        let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for w in &mut self.p.weights {
            *w = dist.sample(rng);
        }
        self.p.bias.fill(0.0);
    }
}

struct BnLayer {
    name: String,
    p: BatchNormParams,
    g_gamma: Vec<f64>,
    g_beta: Vec<f64>,
}

impl BnLayer {
    fn new(name: &str, ch: usize) -> Self {
        BnLayer {
            name: name.to_string(),
            p: BatchNormParams::new(ch),
            g_gamma: vec![0.0; ch],
            g_beta: vec![0.0; ch],
        }
    }
}

struct DoubleConv {
    conv1: ConvLayer,
    bn1: BnLayer,
    conv2: ConvLayer,
    bn2: BnLayer,
}

impl DoubleConv {
    fn new(stage: &str, in_ch: usize, out_ch: usize) -> Self {
        DoubleConv {
            conv1: ConvLayer::new(&format!("{stage}.conv1"), out_ch, in_ch, 3, 3),
            bn1: BnLayer::new(&format!("{stage}.bn1"), out_ch),
            conv2: ConvLayer::new(&format!("{stage}.conv2"), out_ch, out_ch, 3, 3),
            bn2: BnLayer::new(&format!("{stage}.bn2"), out_ch),
        }
    }

    fn forward_eval(&self, x: &TensorBatch) -> Result<TensorBatch> {
        let z1 = conv2d_batch(x, &self.conv1.p)?;
        let n1 = batchnorm_eval(&z1, &self.bn1.p)?;
        let (a1, _) = relu_batch(&n1);
        let z2 = conv2d_batch(&a1, &self.conv2.p)?;
        let n2 = batchnorm_eval(&z2, &self.bn2.p)?;
        let (a2, _) = relu_batch(&n2);
        Ok(a2)
    }

    fn forward_train(&mut self, x: TensorBatch) -> Result<(TensorBatch, DoubleConvCache)> {
        let z1 = conv2d_batch(&x, &self.conv1.p)?;
        let (n1, bn1_cache) = batchnorm_train(&z1, &mut self.bn1.p)?;
        drop(z1);
        let (a1, mask1) = relu_batch(&n1);
        drop(n1);
        let z2 = conv2d_batch(&a1, &self.conv2.p)?;
        let (n2, bn2_cache) = batchnorm_train(&z2, &mut self.bn2.p)?;
        drop(z2);
        let (a2, mask2) = relu_batch(&n2);
        Ok((
            a2,
            DoubleConvCache {
                x,
                bn1: bn1_cache,
                mask1,
                a1,
                bn2: bn2_cache,
                mask2,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, cache: DoubleConvCache, grad_out: &TensorBatch) -> Result<TensorBatch> {
        let g_a2 = relu_backward_batch(grad_out, &cache.mask2)?;
        let bn2_g = batchnorm_backward(&g_a2, &self.bn2.p, &cache.bn2)?;
        drop(g_a2);
        add_into(&mut self.bn2.g_gamma, &bn2_g.gamma);
        add_into(&mut self.bn2.g_beta, &bn2_g.beta);
        let conv2_g = conv2d_backward_batch(&cache.a1, &self.conv2.p, &bn2_g.input)?;
        add_into(&mut self.conv2.gw, &conv2_g.weights);
        add_into(&mut self.conv2.gb, &conv2_g.bias);
        let g_a1 = relu_backward_batch(&conv2_g.input, &cache.mask1)?;
        let bn1_g = batchnorm_backward(&g_a1, &self.bn1.p, &cache.bn1)?;
        drop(g_a1);
        add_into(&mut self.bn1.g_gamma, &bn1_g.gamma);
        add_into(&mut self.bn1.g_beta, &bn1_g.beta);
        let conv1_g = conv2d_backward_batch(&cache.x, &self.conv1.p, &bn1_g.input)?;
        add_into(&mut self.conv1.gw, &conv1_g.weights);
        add_into(&mut self.conv1.gb, &conv1_g.bias);
        Ok(conv1_g.input)
    }
}

struct DoubleConvCache {
    x: TensorBatch,
    bn1: BatchNormCache,
    mask1: Vec<bool>,
    a1: TensorBatch,
    bn2: BatchNormCache,
    mask2: Vec<bool>,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

/// Everything the backward pass needs from one training-mode forward.
pub struct ForwardTrace {
    input_len: usize,
    padded_len: usize,
    enc: Vec<DoubleConvCache>,
    pools: Vec<(Vec<usize>, (usize, usize, usize, usize))>,
    bottleneck: Option<DoubleConvCache>,
    ups_in: Vec<TensorBatch>,
    dec: Vec<DoubleConvCache>,
    skip_channels: Vec<usize>,
    head_in: Option<TensorBatch>,
    head_h: usize,
}

pub struct Network {
    pub spec: NetworkSpec,
    enc: Vec<DoubleConv>,
    ups: Vec<ConvLayer>,
    dec: Vec<DoubleConv>,
    head: ConvLayer,
}

impl Network {
    /// Skip pairing: encoder stage i feeds decoder stage (10 - i); up-conv
    /// output widths halve back down the channel ladder.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Network> {
        spec.validate()?;
        let ch = &spec.encoder_channels;
        let mut enc = Vec::new();
        let mut in_ch = spec.in_channels();
        for (i, &out_ch) in ch.iter().enumerate() {
            enc.push(DoubleConv::new(&format!("enc{}", i + 1), in_ch, out_ch));
            in_ch = out_ch;
        }
        let mut ups = Vec::new();
        let mut dec = Vec::new();
        for s in 0..NUM_POOL_STAGES {
            // stage 6+s: upsample from ch[4-s] to ch[3-s], concat skip ch[3-s]
            let from = ch[NUM_POOL_STAGES - s];
            let to = ch[NUM_POOL_STAGES - 1 - s];
            ups.push(ConvLayer::new(
                &format!("up{}", 6 + s),
                to,
                from,
                1,
                spec.pool_k,
            ));
            dec.push(DoubleConv::new(&format!("dec{}", 6 + s), 2 * to, to));
        }
        let head = ConvLayer::new("head", spec.num_classes, ch[0], 3, 3);
        let mut net = Network {
            spec,
            enc,
            ups,
            dec,
            head,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for stage in &mut net.enc {
            stage.conv1.init(&mut rng);
            stage.conv2.init(&mut rng);
        }
        for up in &mut net.ups {
            up.init(&mut rng);
        }
        for stage in &mut net.dec {
            stage.conv1.init(&mut rng);
            stage.conv2.init(&mut rng);
        }
        net.head.init(&mut rng);
        Ok(net)
    }

    fn check_input(&self, x: &TensorBatch) -> Result<()> {
        let want = (
            self.spec.in_channels(),
            self.spec.in_height(),
            self.spec.window_len,
        );
        if (x.c, x.h, x.l) != want {
            return Err(Error::Shape(format!(
                "input shape {:?} does not match expected (c,h,l)={:?}",
                (x.c, x.h, x.l),
                want
            )));
        }
        if x.n == 0 {
            return Err(Error::Empty("forward on an empty batch"));
        }
        Ok(())
    }

    /// Inference-mode forward: logits (n, classes, 1, window_len).
    pub fn forward(&self, x: &TensorBatch) -> Result<TensorBatch> {
        self.check_input(x)?;
        let target = padded_len(x.l, self.spec.pool_divisor());
        let mut cur = pad_right_edge(x, target)?;
        let mut skips = Vec::new();
        for (i, stage) in self.enc.iter().enumerate() {
            cur = stage.forward_eval(&cur)?;
            if i + 1 < self.enc.len() {
                skips.push(cur.clone());
                cur = maxpool_batch(&cur, self.spec.pool_k)?.output;
            }
        }
        for (s, (up, stage)) in self.ups.iter().zip(self.dec.iter()).enumerate() {
            let upsampled = transposed_conv_batch(&cur, &up.p)?;
            let skip = &skips[NUM_POOL_STAGES - 1 - s];
            cur = concat_channels_batch(&upsampled, skip)?;
            cur = stage.forward_eval(&cur)?;
        }
        let mut logits = conv2d_batch(&cur, &self.head.p)?;
        if self.spec.layout == InputLayout::SpatialFirst {
            logits = mean_height(&logits);
        }
        crop_length(&logits, x.l)
    }

    /// Training-mode forward: batch statistics drive normalization and the
    /// returned trace feeds [`Network::backward`].
    pub fn forward_train(&mut self, x: &TensorBatch) -> Result<(TensorBatch, ForwardTrace)> {
        self.check_input(x)?;
        let target = padded_len(x.l, self.spec.pool_divisor());
        let mut trace = ForwardTrace {
            input_len: x.l,
            padded_len: target,
            enc: Vec::new(),
            pools: Vec::new(),
            bottleneck: None,
            ups_in: Vec::new(),
            dec: Vec::new(),
            skip_channels: Vec::new(),
            head_in: None,
            head_h: 0,
        };
        let mut cur = pad_right_edge(x, target)?;
        let mut skips = Vec::new();
        let n_enc = self.enc.len();
        for (i, stage) in self.enc.iter_mut().enumerate() {
            let (out, cache) = stage.forward_train(cur)?;
            if i + 1 < n_enc {
                trace.enc.push(cache);
                skips.push(out.clone());
                let pooled = maxpool_batch(&out, self.spec.pool_k)?;
                trace.pools.push((pooled.argmax, out.shape()));
                cur = pooled.output;
            } else {
                trace.bottleneck = Some(cache);
                cur = out;
            }
        }
        for (s, (up, stage)) in self.ups.iter().zip(self.dec.iter_mut()).enumerate() {
            let upsampled = transposed_conv_batch(&cur, &up.p)?;
            trace.ups_in.push(cur);
            let skip = &skips[NUM_POOL_STAGES - 1 - s];
            trace.skip_channels.push(upsampled.c);
            let joined = concat_channels_batch(&upsampled, skip)?;
            let (out, cache) = stage.forward_train(joined)?;
            trace.dec.push(cache);
            cur = out;
        }
        let mut logits = conv2d_batch(&cur, &self.head.p)?;
        trace.head_h = logits.h;
        trace.head_in = Some(cur);
        if self.spec.layout == InputLayout::SpatialFirst {
            logits = mean_height(&logits);
        }
        let cropped = crop_length(&logits, x.l)?;
        Ok((cropped, trace))
    }

    /// Backpropagate `grad_logits` through the trace, accumulating parameter
    /// gradients in the layer buffers.
    pub fn backward(&mut self, trace: ForwardTrace, grad_logits: &TensorBatch) -> Result<()> {
        let mut g = crop_length_backward(grad_logits, trace.padded_len)?;
        if self.spec.layout == InputLayout::SpatialFirst {
            g = mean_height_backward(&g, trace.head_h)?;
        }
        let head_in = trace.head_in.expect("trace holds head input");
        let head_g = conv2d_backward_batch(&head_in, &self.head.p, &g)?;
        add_into(&mut self.head.gw, &head_g.weights);
        add_into(&mut self.head.gb, &head_g.bias);
        g = head_g.input;

        // decoder stages in reverse, splitting concat grads into the
        // upsampled part and the skip part
        let mut skip_grads: Vec<Option<TensorBatch>> = (0..NUM_POOL_STAGES).map(|_| None).collect();
        let mut dec_caches = trace.dec;
        let mut ups_in = trace.ups_in;
        for s in (0..NUM_POOL_STAGES).rev() {
            let cache = dec_caches.pop().expect("decoder cache");
            let g_joined = self.dec[s].backward(cache, &g)?;
            let (g_up, g_skip) = split_channels_batch(&g_joined, trace.skip_channels[s]);
            skip_grads[NUM_POOL_STAGES - 1 - s] = Some(g_skip);
            let up_input = ups_in.pop().expect("up-conv input");
            let up_g = transposed_conv_backward_batch(&up_input, &self.ups[s].p, &g_up)?;
            add_into(&mut self.ups[s].gw, &up_g.weights);
            add_into(&mut self.ups[s].gb, &up_g.bias);
            g = up_g.input;
        }

        // bottleneck, then encoder stages in reverse; each skip gradient
        // joins the pooled gradient at its stage output
        let bott = trace.bottleneck.expect("bottleneck cache");
        g = self.enc[NUM_POOL_STAGES].backward(bott, &g)?;
        let mut enc_caches = trace.enc;
        let mut pools = trace.pools;
        for i in (0..NUM_POOL_STAGES).rev() {
            let (argmax, shape) = pools.pop().expect("pool cache");
            let mut g_stage = maxpool_backward_batch(shape, &argmax, &g)?;
            let g_skip = skip_grads[i].take().expect("skip gradient");
            add_into(&mut g_stage.data, &g_skip.data);
            let cache = enc_caches.pop().expect("encoder cache");
            g = self.enc[i].backward(cache, &g_stage)?;
        }
        // gradient w.r.t. the padded input is dropped; trace.input_len kept
        // the crop interface honest
        let _ = trace.input_len;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.visit_layers_mut(|layer| match layer {
            LayerMut::Conv(c) => {
                c.gw.fill(0.0);
                c.gb.fill(0.0);
            }
            LayerMut::Bn(b) => {
                b.g_gamma.fill(0.0);
                b.g_beta.fill(0.0);
            }
        });
    }

    /// One optimizer step over every learnable buffer in stable layer order.
    pub fn optimizer_step(&mut self, adam: &mut Adam) -> Result<()> {
        adam.begin_step();
        let mut slot = 0;
        let mut result = Ok(());
        self.visit_layers_mut(|layer| {
            if result.is_err() {
                return;
            }
            let r = match layer {
                LayerMut::Conv(c) => adam
                    .update(slot, &mut c.p.weights, &c.gw)
                    .and_then(|_| adam.update(slot + 1, &mut c.p.bias, &c.gb)),
                LayerMut::Bn(b) => adam
                    .update(slot, &mut b.p.gamma, &b.g_gamma)
                    .and_then(|_| adam.update(slot + 1, &mut b.p.beta, &b.g_beta)),
            };
            slot += 2;
            if let Err(e) = r {
                result = Err(e);
            }
        });
        result
    }

    /// Count of learnable scalars: conv weights and biases plus the batch
    /// norm scale/shift pairs. Running statistics are state, not parameters.
    pub fn count_params(&self) -> u64 {
        let mut total = 0u64;
        self.visit_layers(|layer| match layer {
            LayerRef::Conv(c) => total += c.p.num_params() as u64,
            LayerRef::Bn(b) => total += b.p.num_params() as u64,
        });
        total
    }

    /// Multiply-accumulates of one forward pass over the padded feature-map
    /// sizes, for convolutions and up-convolutions only.
    pub fn count_macs(&self, input_len: usize) -> u64 {
        let spec = &self.spec;
        let h = spec.in_height() as u64;
        let l0 = padded_len(input_len, spec.pool_divisor()) as u64;
        let ch = &spec.encoder_channels;
        let conv = |cin: usize, cout: usize, l: u64| 9 * cin as u64 * cout as u64 * h * l;
        let mut total = 0u64;
        let mut l = l0;
        let mut cin = spec.in_channels();
        for (i, &cout) in ch.iter().enumerate() {
            total += conv(cin, cout, l) + conv(cout, cout, l);
            cin = cout;
            if i + 1 < ch.len() {
                l /= spec.pool_k as u64;
            }
        }
        for s in 0..NUM_POOL_STAGES {
            let from = ch[NUM_POOL_STAGES - s];
            let to = ch[NUM_POOL_STAGES - 1 - s];
            // transposed conv: k taps per input sample across the channel map
            total += from as u64 * to as u64 * spec.pool_k as u64 * h * l;
            l *= spec.pool_k as u64;
            total += conv(2 * to, to, l) + conv(to, to, l);
        }
        total += conv(ch[0], spec.num_classes, l);
        total
    }

    /// FLOPs of one forward pass: two per multiply-accumulate. Biases,
    /// normalization, activations, and pooling are excluded; sizes follow
    /// the padded maps actually computed.
    pub fn count_flops(&self, input_len: usize) -> u64 {
        2 * self.count_macs(input_len)
    }

    /// Named parameter and state arrays in stable order, for checkpoints.
    pub fn state_entries(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        self.visit_layers(|layer| match layer {
            LayerRef::Conv(c) => {
                out.push((
                    format!("{}.weight", c.name),
                    vec![c.p.out_ch, c.p.in_ch, c.p.kh, c.p.kw],
                    c.p.weights.clone(),
                ));
                out.push((format!("{}.bias", c.name), vec![c.p.out_ch], c.p.bias.clone()));
            }
            LayerRef::Bn(b) => {
                let ch = b.p.ch;
                out.push((format!("{}.gamma", b.name), vec![ch], b.p.gamma.clone()));
                out.push((format!("{}.beta", b.name), vec![ch], b.p.beta.clone()));
                out.push((
                    format!("{}.running_mean", b.name),
                    vec![ch],
                    b.p.running_mean.clone(),
                ));
                out.push((
                    format!("{}.running_var", b.name),
                    vec![ch],
                    b.p.running_var.clone(),
                ));
            }
        });
        out
    }

    /// Accumulated gradient of every learnable buffer, named like
    /// [`Network::state_entries`]; running statistics carry no gradient and
    /// are omitted.
    pub fn grad_entries(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        self.visit_layers(|layer| match layer {
            LayerRef::Conv(c) => {
                out.push((format!("{}.weight", c.name), c.gw.clone()));
                out.push((format!("{}.bias", c.name), c.gb.clone()));
            }
            LayerRef::Bn(b) => {
                out.push((format!("{}.gamma", b.name), b.g_gamma.clone()));
                out.push((format!("{}.beta", b.name), b.g_beta.clone()));
            }
        });
        out
    }

    /// Load arrays saved by [`Network::state_entries`]; every buffer must be
    /// present with its exact length.
    pub fn load_state_entries(&mut self, entries: &[(String, Vec<f64>)]) -> Result<()> {
        let mut map: std::collections::HashMap<&str, &Vec<f64>> = std::collections::HashMap::new();
        for (name, data) in entries {
            map.insert(name.as_str(), data);
        }
        let mut missing = None;
        let mut bad_len = None;
        self.visit_layers_mut(|layer| {
            let mut take = |name: String, dst: &mut Vec<f64>| match map.remove(name.as_str()) {
                Some(src) if src.len() == dst.len() => dst.copy_from_slice(src),
                Some(src) => {
                    if bad_len.is_none() {
                        bad_len = Some((name, dst.len(), src.len()));
                    }
                }
                None => {
                    if missing.is_none() {
                        missing = Some(name);
                    }
                }
            };
            match layer {
                LayerMut::Conv(c) => {
                    let name = c.name.clone();
                    take(format!("{name}.weight"), &mut c.p.weights);
                    take(format!("{name}.bias"), &mut c.p.bias);
                }
                LayerMut::Bn(b) => {
                    let name = b.name.clone();
                    take(format!("{name}.gamma"), &mut b.p.gamma);
                    take(format!("{name}.beta"), &mut b.p.beta);
                    take(format!("{name}.running_mean"), &mut b.p.running_mean);
                    take(format!("{name}.running_var"), &mut b.p.running_var);
                }
            }
        });
        if let Some(name) = missing {
            return Err(Error::Checkpoint {
                field: name,
                reason: "array missing".into(),
            });
        }
        if let Some((name, want, got)) = bad_len {
            return Err(Error::Checkpoint {
                field: name,
                reason: format!("expected {} values, got {}", want, got),
            });
        }
        if let Some((name, _)) = map.into_iter().next() {
            return Err(Error::Checkpoint {
                field: name.to_string(),
                reason: "array not part of this architecture".into(),
            });
        }
        Ok(())
    }

    fn visit_layers<'a>(&'a self, mut f: impl FnMut(LayerRef<'a>)) {
        for stage in &self.enc {
            f(LayerRef::Conv(&stage.conv1));
            f(LayerRef::Bn(&stage.bn1));
            f(LayerRef::Conv(&stage.conv2));
            f(LayerRef::Bn(&stage.bn2));
        }
        for up in &self.ups {
            f(LayerRef::Conv(up));
        }
        for stage in &self.dec {
            f(LayerRef::Conv(&stage.conv1));
            f(LayerRef::Bn(&stage.bn1));
            f(LayerRef::Conv(&stage.conv2));
            f(LayerRef::Bn(&stage.bn2));
        }
        f(LayerRef::Conv(&self.head));
    }

    fn visit_layers_mut(&mut self, mut f: impl FnMut(LayerMut<'_>)) {
        for stage in &mut self.enc {
            f(LayerMut::Conv(&mut stage.conv1));
            f(LayerMut::Bn(&mut stage.bn1));
            f(LayerMut::Conv(&mut stage.conv2));
            f(LayerMut::Bn(&mut stage.bn2));
        }
        for up in &mut self.ups {
            f(LayerMut::Conv(up));
        }
        for stage in &mut self.dec {
            f(LayerMut::Conv(&mut stage.conv1));
            f(LayerMut::Bn(&mut stage.bn1));
            f(LayerMut::Conv(&mut stage.conv2));
            f(LayerMut::Bn(&mut stage.bn2));
        }
        f(LayerMut::Conv(&mut self.head));
    }
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("spec", &self.spec)
            .field("params", &self.count_params())
            .finish()
    }
}

impl Clone for Network {
    fn clone(&self) -> Self {
        let mut copy = Network::build(self.spec.clone(), 0).expect("spec already validated");
        let entries: Vec<(String, Vec<f64>)> = self
            .state_entries()
            .into_iter()
            .map(|(name, _, data)| (name, data))
            .collect();
        copy.load_state_entries(&entries).expect("same architecture");
        copy
    }
}

enum LayerRef<'a> {
    Conv(&'a ConvLayer),
    Bn(&'a BnLayer),
}

enum LayerMut<'a> {
    Conv(&'a mut ConvLayer),
    Bn(&'a mut BnLayer),
}
