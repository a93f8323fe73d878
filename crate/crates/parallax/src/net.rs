//! The disparity-predicting encoder: an AlexNet-like trunk, a fully
//! convolutional head, and a coarse-to-fine ladder of learnable bilinear
//! upsampling stages with optional zero-initialized skip fusion from the
//! pooling-layer inputs.
//!
//! The network is described declaratively by [`NetworkConfig`]; every kernel
//! size, stride, padding and initialization lives in the config so the
//! resolution bookkeeping can be audited (and changed) without code edits.

use crate::error::{Error, Result};
use crate::geometry::DisparityMap;
use crate::ops::lrn::LrnParams;
use crate::ops::{conv, pool, upsample, CropPad, Pad2};
use crate::scalar::{c, Scalar};
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Pool,
    Lrn,
    FullyConv,
    Upsample,
    SkipFuse,
    Relu,
    CropPad,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Random,
    Zero,
    Bilinear,
}

fn one_pair() -> [usize; 2] {
    [1, 1]
}

/// One layer of the graph. Unused geometry fields stay at their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    #[serde(default = "one_pair")]
    pub kernel: [usize; 2],
    #[serde(default = "one_pair")]
    pub stride: [usize; 2],
    #[serde(default)]
    pub pad: Pad2,
    #[serde(default)]
    pub crop_pad: CropPad,
    /// `[in, out]` channel counts for conv-like layers.
    #[serde(default)]
    pub channels: [usize; 2],
    #[serde(default)]
    pub init: InitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lrn: Option<LrnParams>,
    #[serde(default)]
    pub factor: usize,
}

impl LayerSpec {
    pub fn conv(
        id: &str,
        channels: [usize; 2],
        kernel: [usize; 2],
        stride: [usize; 2],
        pad: Pad2,
    ) -> Self {
        LayerSpec {
            id: id.into(),
            kind: LayerKind::Conv,
            kernel,
            stride,
            pad,
            crop_pad: CropPad::NONE,
            channels,
            init: InitKind::Random,
            lrn: None,
            factor: 0,
        }
    }

    pub fn fully_conv(id: &str, channels: [usize; 2], kernel: [usize; 2], pad: Pad2, init: InitKind) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConv,
            ..LayerSpec::conv(id, channels, kernel, [1, 1], pad)
        }
        .with_init(init)
    }

    fn with_init(mut self, init: InitKind) -> Self {
        self.init = init;
        self
    }

    pub fn relu(id: &str) -> Self {
        LayerSpec {
            id: id.into(),
            kind: LayerKind::Relu,
            kernel: [1, 1],
            stride: [1, 1],
            pad: Pad2::ZERO,
            crop_pad: CropPad::NONE,
            channels: [0, 0],
            init: InitKind::Random,
            lrn: None,
            factor: 0,
        }
    }

    pub fn lrn(id: &str, params: LrnParams) -> Self {
        LayerSpec {
            kind: LayerKind::Lrn,
            lrn: Some(params),
            ..LayerSpec::relu(id)
        }
    }

    pub fn pool(id: &str, window: [usize; 2], stride: [usize; 2], pad: Pad2) -> Self {
        LayerSpec {
            kind: LayerKind::Pool,
            kernel: window,
            stride,
            pad,
            ..LayerSpec::relu(id)
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv | LayerKind::FullyConv | LayerKind::SkipFuse => {
                self.channels[1] * self.channels[0] * self.kernel[0] * self.kernel[1]
                    + self.channels[1]
            }
            LayerKind::Upsample => {
                let k = upsample::kernel_size(self.factor);
                k * k
            }
            _ => 0,
        }
    }
}

/// Skip branch of an upsampling stage: a zero-initialized 1x1 convolution
/// from the input of the named pooling layer, fused by elementwise sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipSpec {
    /// Pool layer whose *input* is tapped (P3, P2).
    pub source_pool: String,
    pub conv: LayerSpec,
}

impl SkipSpec {
    pub fn new(id: &str, source_pool: &str, source_channels: usize) -> Self {
        SkipSpec {
            source_pool: source_pool.into(),
            conv: LayerSpec {
                id: id.into(),
                kind: LayerKind::SkipFuse,
                kernel: [1, 1],
                stride: [1, 1],
                pad: Pad2::ZERO,
                crop_pad: CropPad::NONE,
                channels: [source_channels, 1],
                init: InitKind::Zero,
                lrn: None,
                factor: 0,
            },
        }
    }
}

/// One coarse-to-fine growth step: a learnable bilinear 2x upsampling of the
/// disparity, optional crop/pad bookkeeping, optional skip fusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpsampleStageSpec {
    pub id: String,
    pub upsample: LayerSpec,
    #[serde(default)]
    pub crop_pad: CropPad,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<SkipSpec>,
}

impl UpsampleStageSpec {
    pub fn new(id: &str, factor: usize, crop_pad: CropPad, skip: Option<SkipSpec>) -> Self {
        let k = upsample::kernel_size(factor);
        UpsampleStageSpec {
            id: id.into(),
            upsample: LayerSpec {
                id: format!("{id}.up"),
                kind: LayerKind::Upsample,
                kernel: [k, k],
                stride: [factor, factor],
                pad: Pad2::ZERO,
                crop_pad: CropPad::NONE,
                channels: [1, 1],
                init: InitKind::Bilinear,
                lrn: None,
                factor,
            },
            crop_pad,
            skip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_channels: usize,
    /// `[H, W]` of the left image fed to the trunk.
    pub input_size: [usize; 2],
    pub trunk: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
    pub stages: Vec<UpsampleStageSpec>,
}

/// Scale profile selector: the published geometry or the shrunken desk one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleProfile {
    Paper,
    Desk,
}

impl NetworkConfig {
    /// The published-geometry network: 188x620 input, AlexNet trunk to C5,
    /// 2048-filter 5x5 fully convolutional head, five upsampling stages with
    /// skip fusion on the first two. `full_extent_head` swaps the 5x5 head
    /// kernel for one spanning the whole coarse map.
    pub fn paper(input_channels: usize, full_extent_head: bool) -> Self {
        Self::build_profile(
            input_channels,
            [188, 620],
            [96, 256, 384, 384, 256],
            2048,
            [11, 11],
            [4, 4],
            Pad2::ZERO,
            5,
            full_extent_head,
        )
    }

    /// Desk-scale profile: 64x192 input, channels at 1/8 of the published
    /// ones, 128 head filters, three upsampling stages. Preserves every
    /// architectural mechanism at a size where full training runs in
    /// seconds to minutes on a CPU.
    pub fn desk(input_channels: usize) -> Self {
        Self::build_profile(
            input_channels,
            [64, 192],
            [12, 32, 48, 48, 32],
            128,
            [5, 5],
            [2, 2],
            Pad2::uniform(2),
            3,
            false,
        )
    }

    pub fn profile(profile: ScaleProfile, input_channels: usize) -> Self {
        match profile {
            ScaleProfile::Paper => Self::paper(input_channels, false),
            ScaleProfile::Desk => Self::desk(input_channels),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_profile(
        input_channels: usize,
        input_size: [usize; 2],
        ch: [usize; 5],
        head_filters: usize,
        c1_kernel: [usize; 2],
        c1_stride: [usize; 2],
        c1_pad: Pad2,
        n_stages: usize,
        full_extent_head: bool,
    ) -> Self {
        let lrn = LrnParams::default();
        let mut trunk = vec![
            LayerSpec::conv("C1", [input_channels, ch[0]], c1_kernel, c1_stride, c1_pad),
            LayerSpec::relu("R1"),
            LayerSpec::lrn("N1", lrn),
        ];
        // Pool paddings are chosen per profile so the trunk hits the
        // published resolution ladder (ceil-mode pooling shows up as an
        // extra pad row/column on the bottom/right).
        let paper = input_size == [188, 620];
        if paper {
            trunk.push(LayerSpec::pool("P1", [3, 3], [2, 2], Pad2::ZERO));
        } else {
            trunk.push(LayerSpec::pool("P1", [3, 3], [2, 2], Pad2::hw(0, 1, 0, 1)));
        }
        trunk.extend([
            LayerSpec::conv("C2", [ch[0], ch[1]], [5, 5], [1, 1], Pad2::uniform(2)),
            LayerSpec::relu("R2"),
            LayerSpec::lrn("N2", lrn),
        ]);
        if paper {
            trunk.push(LayerSpec::pool("P2", [3, 3], [2, 2], Pad2::ZERO));
        } else {
            trunk.push(LayerSpec::pool("P2", [3, 3], [2, 2], Pad2::hw(0, 1, 0, 1)));
        }
        trunk.extend([
            LayerSpec::conv("C3", [ch[1], ch[2]], [3, 3], [1, 1], Pad2::uniform(1)),
            LayerSpec::relu("R3"),
            LayerSpec::conv("C4", [ch[2], ch[3]], [3, 3], [1, 1], Pad2::uniform(1)),
            LayerSpec::relu("R4"),
            LayerSpec::conv("C5", [ch[3], ch[4]], [3, 3], [1, 1], Pad2::uniform(1)),
            LayerSpec::relu("R5"),
        ]);
        if paper {
            trunk.push(LayerSpec::pool("P3", [3, 3], [2, 2], Pad2::hw(0, 1, 0, 0)));
        } else {
            trunk.push(LayerSpec::pool("P3", [3, 3], [2, 2], Pad2::hw(0, 1, 0, 1)));
        }

        // head kernel: 5x5 by default, or the full coarse extent variant
        let coarse = Self::trunk_output_size(&trunk, input_channels, input_size);
        let (head_kernel, head_pad) = if full_extent_head {
            let k = [coarse[0], coarse[1]];
            let pad = Pad2::hw(
                (k[0] - 1) / 2,
                k[0] / 2,
                (k[1] - 1) / 2,
                k[1] / 2,
            );
            (k, pad)
        } else {
            ([5, 5], Pad2::uniform(2))
        };
        let head = vec![
            LayerSpec::fully_conv("L6", [ch[4], head_filters], head_kernel, head_pad, InitKind::Random),
            LayerSpec::relu("R6"),
            LayerSpec::fully_conv("L7", [head_filters, 1], [5, 5], Pad2::uniform(2), InitKind::Zero),
        ];

        // Upsampling ladder: first two stages fuse a skip branch from the
        // inputs of P3 and P2; later stages are plain. Crop/pad bookkeeping
        // reconciles the exact 2x upsampling with the trunk resolutions.
        let mut stages = Vec::new();
        if paper {
            stages.push(UpsampleStageSpec::new(
                "L8",
                2,
                CropPad {
                    top: 0,
                    bottom: 0,
                    left: 0,
                    right: 1,
                },
                Some(SkipSpec::new("L8.skip", "P3", ch[4])),
            ));
            stages.push(UpsampleStageSpec::new(
                "L9",
                2,
                CropPad {
                    top: 1,
                    bottom: 1,
                    left: 1,
                    right: 1,
                },
                Some(SkipSpec::new("L9.skip", "P2", ch[1])),
            ));
            for id in ["L10", "L11", "L12"].iter().take(n_stages.saturating_sub(2)) {
                stages.push(UpsampleStageSpec::new(id, 2, CropPad::NONE, None));
            }
        } else {
            stages.push(UpsampleStageSpec::new(
                "L8",
                2,
                CropPad::NONE,
                Some(SkipSpec::new("L8.skip", "P3", ch[4])),
            ));
            stages.push(UpsampleStageSpec::new(
                "L9",
                2,
                CropPad::NONE,
                Some(SkipSpec::new("L9.skip", "P2", ch[1])),
            ));
            for id in ["L10", "L11", "L12"].iter().take(n_stages.saturating_sub(2)) {
                stages.push(UpsampleStageSpec::new(id, 2, CropPad::NONE, None));
            }
        }
        stages.truncate(n_stages);

        NetworkConfig {
            input_channels,
            input_size,
            trunk,
            head,
            stages,
        }
    }

    fn trunk_output_size(
        trunk: &[LayerSpec],
        input_channels: usize,
        input_size: [usize; 2],
    ) -> [usize; 2] {
        let mut shape = [input_channels, input_size[0], input_size[1]];
        for spec in trunk {
            shape = layer_output_shape(spec, shape)
                .expect("profile builders produce a consistent trunk");
        }
        [shape[1], shape[2]]
    }

    /// Shape-walks the whole declared graph (all stages, grown or not).
    /// Checks that consecutive layer shapes chain, that skip taps match the
    /// upsampled resolution, and reports per-layer output shapes and
    /// parameter counts.
    pub fn audit(&self) -> Result<Vec<LayerReport>> {
        self.validate_specs()?;
        let mut reports = Vec::new();
        let mut shape = [self.input_channels, self.input_size[0], self.input_size[1]];
        let mut pool_inputs: HashMap<String, [usize; 3]> = HashMap::new();

        for spec in self.trunk.iter().chain(&self.head) {
            if spec.kind == LayerKind::Pool {
                pool_inputs.insert(spec.id.clone(), shape);
            }
            shape = layer_output_shape(spec, shape)?;
            reports.push(LayerReport {
                id: spec.id.clone(),
                kind: spec.kind,
                output: shape,
                param_count: spec.param_count(),
            });
        }
        if shape[0] != 1 {
            return Err(Error::Config(format!(
                "head must end in a single-channel disparity map, got {} channels",
                shape[0]
            )));
        }

        for stage in &self.stages {
            let up = layer_output_shape(&stage.upsample, shape)?;
            let mut out = up;
            if !stage.crop_pad.is_none() {
                let s = crate::ops::elem::crop_pad_shape(&[up[0], up[1], up[2]], stage.crop_pad)?;
                out = [s[0], s[1], s[2]];
            }
            if let Some(skip) = &stage.skip {
                let tap = pool_inputs.get(&skip.source_pool).ok_or_else(|| {
                    Error::Config(format!(
                        "stage {} skip source {} is not a pooling layer",
                        stage.id, skip.source_pool
                    ))
                })?;
                if skip.conv.channels[0] != tap[0] {
                    return Err(Error::Config(format!(
                        "stage {} skip conv expects {} channels, pool input has {}",
                        stage.id, skip.conv.channels[0], tap[0]
                    )));
                }
                if [tap[1], tap[2]] != [out[1], out[2]] {
                    return Err(Error::Config(format!(
                        "stage {}: upsampled {}x{} does not match skip source {} input {}x{} after crop/pad",
                        stage.id, out[1], out[2], skip.source_pool, tap[1], tap[2]
                    )));
                }
                reports.push(LayerReport {
                    id: skip.conv.id.clone(),
                    kind: LayerKind::SkipFuse,
                    output: out,
                    param_count: skip.conv.param_count(),
                });
            }
            reports.push(LayerReport {
                id: stage.id.clone(),
                kind: LayerKind::Upsample,
                output: out,
                param_count: stage.upsample.param_count(),
            });
            shape = out;
        }
        Ok(reports)
    }

    fn validate_specs(&self) -> Result<()> {
        if self.input_channels == 0 || self.input_size.contains(&0) {
            return Err(Error::Config("network input size must be positive".into()));
        }
        if self.stages.len() > 5 {
            return Err(Error::Config(format!(
                "at most 5 upsampling stages are supported, got {}",
                self.stages.len()
            )));
        }
        for spec in self.trunk.iter().chain(&self.head) {
            match spec.kind {
                LayerKind::Upsample | LayerKind::SkipFuse => {
                    return Err(Error::Config(format!(
                        "layer {}: {:?} is only valid inside an upsampling stage",
                        spec.id, spec.kind
                    )))
                }
                LayerKind::Lrn => spec.lrn.unwrap_or_default().validate()?,
                _ => {}
            }
        }
        if let Some(last) = self.head.last() {
            if last.kind != LayerKind::FullyConv || last.init != InitKind::Zero {
                return Err(Error::Config(
                    "terminal head layer must be a zero-initialized fully convolutional layer"
                        .into(),
                ));
            }
        } else {
            return Err(Error::Config("network head is empty".into()));
        }
        for stage in &self.stages {
            if stage.upsample.factor < 2 {
                return Err(Error::Config(format!(
                    "stage {}: upsample factor must be >= 2",
                    stage.id
                )));
            }
            if let Some(skip) = &stage.skip {
                if skip.conv.kernel != [1, 1] || skip.conv.init != InitKind::Zero {
                    return Err(Error::Config(format!(
                        "stage {}: skip conv must be a zero-initialized 1x1 convolution",
                        stage.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Coarse resolution followed by each stage's output resolution.
    pub fn resolution_ladder(&self) -> Result<Vec<(String, [usize; 2])>> {
        let reports = self.audit()?;
        let mut ladder = Vec::new();
        let coarse_id = self.head.last().map(|l| l.id.clone()).unwrap_or_default();
        for r in &reports {
            if r.id == coarse_id {
                ladder.push((r.id.clone(), [r.output[1], r.output[2]]));
            }
        }
        for stage in &self.stages {
            if let Some(r) = reports.iter().find(|r| r.id == stage.id) {
                ladder.push((r.id.clone(), [r.output[1], r.output[2]]));
            }
        }
        Ok(ladder)
    }

    /// Ordered layer-id sets per training stage (coarse first, then one per
    /// upsampling stage). Each set strictly contains the previous one.
    pub fn stage_layer_sets(&self) -> Vec<Vec<String>> {
        let mut base: Vec<String> = self
            .trunk
            .iter()
            .chain(&self.head)
            .map(|l| l.id.clone())
            .collect();
        let mut sets = vec![base.clone()];
        for stage in &self.stages {
            base.push(stage.upsample.id.clone());
            if let Some(skip) = &stage.skip {
                base.push(skip.conv.id.clone());
            }
            base.push(stage.id.clone());
            sets.push(base.clone());
        }
        sets
    }
}

#[derive(Clone, Debug)]
pub struct LayerReport {
    pub id: String,
    pub kind: LayerKind,
    pub output: [usize; 3],
    pub param_count: usize,
}

fn layer_output_shape(spec: &LayerSpec, input: [usize; 3]) -> Result<[usize; 3]> {
    let with_id = |e: Error| match e {
        Error::Config(msg) => Error::Config(format!("layer {}: {msg}", spec.id)),
        other => other,
    };
    match spec.kind {
        LayerKind::Conv | LayerKind::FullyConv | LayerKind::SkipFuse => {
            if spec.channels[0] != input[0] {
                return Err(Error::Config(format!(
                    "layer {}: expects {} input channels, got {}",
                    spec.id, spec.channels[0], input[0]
                )));
            }
            let s = conv::output_shape(
                &input,
                &[spec.channels[1], spec.channels[0], spec.kernel[0], spec.kernel[1]],
                (spec.stride[0], spec.stride[1]),
                spec.pad,
            )
            .map_err(with_id)?;
            Ok([s[0], s[1], s[2]])
        }
        LayerKind::Pool => {
            let s = pool::output_shape(
                &input,
                (spec.kernel[0], spec.kernel[1]),
                (spec.stride[0], spec.stride[1]),
                spec.pad,
            )
            .map_err(with_id)?;
            Ok([s[0], s[1], s[2]])
        }
        LayerKind::Relu | LayerKind::Lrn => Ok(input),
        LayerKind::CropPad => {
            let s = crate::ops::elem::crop_pad_shape(&input, spec.crop_pad).map_err(with_id)?;
            Ok([s[0], s[1], s[2]])
        }
        LayerKind::Upsample => Ok([
            input[0],
            input[1] * spec.factor,
            input[2] * spec.factor,
        ]),
    }
}

/// A named parameter tensor.
#[derive(Clone, Debug)]
pub struct Param<F: Scalar> {
    pub name: String,
    pub value: Tensor<F>,
}

#[derive(Clone, Copy, Debug, Default)]
struct LayerSlots {
    kernel: Option<usize>,
    bias: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
struct StageSlots {
    up_kernel: usize,
    skip_kernel: Option<usize>,
    skip_bias: Option<usize>,
}

/// A built network: the config plus allocated parameters for the trunk,
/// head, and every *grown* upsampling stage.
pub struct Network<F: Scalar> {
    config: NetworkConfig,
    params: Vec<Param<F>>,
    trunk_slots: Vec<LayerSlots>,
    stage_slots: Vec<StageSlots>,
}

/// Handles into the tape after one forward pass.
pub struct ForwardPass {
    /// Finest active disparity prediction, shape `[1,H,W]`.
    pub disparity: VarId,
    /// One var per network parameter, aligned with `Network::params()`.
    pub param_vars: Vec<VarId>,
}

impl<F: Scalar> Network<F> {
    /// Validates the config and allocates trunk+head parameters. Trunk conv
    /// weights are uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)], the
    /// terminal disparity layer starts at zero (so the initial prediction is
    /// exactly zero disparity), and all biases start at zero. Upsampling
    /// stages are allocated later by [`Network::grow_stage`].
    pub fn build(config: NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.audit()?;
        let mut net = Network {
            config,
            params: Vec::new(),
            trunk_slots: Vec::new(),
            stage_slots: Vec::new(),
        };
        let specs: Vec<LayerSpec> = net
            .config
            .trunk
            .iter()
            .chain(&net.config.head)
            .cloned()
            .collect();
        for spec in &specs {
            let slots = match spec.kind {
                LayerKind::Conv | LayerKind::FullyConv => {
                    let kernel = net.alloc_conv_kernel(spec, rng);
                    let bias = net.alloc(
                        format!("{}.bias", spec.id),
                        Tensor::zeros(&[spec.channels[1]]),
                    );
                    LayerSlots {
                        kernel: Some(kernel),
                        bias: Some(bias),
                    }
                }
                _ => LayerSlots::default(),
            };
            net.trunk_slots.push(slots);
        }
        Ok(net)
    }

    fn alloc(&mut self, name: String, value: Tensor<F>) -> usize {
        self.params.push(Param {
            name,
            value: value.with_grad(),
        });
        self.params.len() - 1
    }

    fn alloc_conv_kernel(&mut self, spec: &LayerSpec, rng: &mut ChaCha8Rng) -> usize {
        let shape = [
            spec.channels[1],
            spec.channels[0],
            spec.kernel[0],
            spec.kernel[1],
        ];
        let value = match spec.init {
            InitKind::Zero => Tensor::zeros(&shape),
            InitKind::Random => {
                // He-uniform: keeps relu activation variance roughly constant
                // through the trunk so the head sees usable feature magnitudes
                let fan_in = (spec.channels[0] * spec.kernel[0] * spec.kernel[1]) as f64;
                let s = (6.0 / fan_in).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| c::<F>(rng.gen_range(-s..s))).collect();
                Tensor::from_vec_unchecked(&shape, data)
            }
            InitKind::Bilinear => upsample::bilinear_kernel(1, spec.factor),
        };
        self.alloc(format!("{}.kernel", spec.id), value)
    }

    /// Appends the next declared upsampling stage: the transposed-conv
    /// kernel starts as the exact bilinear interpolation filter and the skip
    /// branch (1x1 conv and bias) starts at zero, so growth changes neither
    /// pre-existing parameters nor, at initialization, the predictions
    /// beyond bilinear upsampling.
    pub fn grow_stage(&mut self) -> Result<()> {
        let idx = self.stage_slots.len();
        let stage = self.config.stages.get(idx).ok_or_else(|| {
            Error::Config(format!("no stage {idx} declared in the network config"))
        })?;
        let stage = stage.clone();
        let up_kernel = self.alloc(
            format!("{}.kernel", stage.upsample.id),
            upsample::bilinear_kernel(1, stage.upsample.factor),
        );
        let (skip_kernel, skip_bias) = match &stage.skip {
            Some(skip) => {
                let k = self.alloc(
                    format!("{}.kernel", skip.conv.id),
                    Tensor::zeros(&[1, skip.conv.channels[0], 1, 1]),
                );
                let b = self.alloc(format!("{}.bias", skip.conv.id), Tensor::zeros(&[1]));
                (Some(k), Some(b))
            }
            None => (None, None),
        };
        self.stage_slots.push(StageSlots {
            up_kernel,
            skip_kernel,
            skip_bias,
        });
        Ok(())
    }

    pub fn active_stages(&self) -> usize {
        self.stage_slots.len()
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<F>] {
        &mut self.params
    }

    /// Output `[H, W]` of the finest active stage.
    pub fn output_resolution(&self) -> Result<[usize; 2]> {
        let ladder = self.config.resolution_ladder()?;
        Ok(ladder[self.active_stages()].1)
    }

    /// Rebuilds a network from checkpointed parts.
    pub fn from_parts(
        config: NetworkConfig,
        active_stages: usize,
        params: Vec<Param<F>>,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::build(config, &mut rng)?;
        for _ in 0..active_stages {
            net.grow_stage()?;
        }
        if net.params.len() != params.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, network needs {}",
                params.len(),
                net.params.len()
            )));
        }
        for (slot, loaded) in net.params.iter_mut().zip(params) {
            if slot.name != loaded.name || slot.value.shape() != loaded.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint parameter {} {:?} does not match network {} {:?}",
                    loaded.name,
                    loaded.value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            slot.value = loaded.value.with_grad();
        }
        Ok(net)
    }

    /// Records the forward pass on a tape. The left image enters as a
    /// constant; every parameter enters as a differentiable leaf.
    pub fn forward_on_tape(&self, tape: &mut Tape<F>, left: &Tensor<F>) -> Result<ForwardPass> {
        let (ch, h, w) = left.spatial_dims()?;
        if ch != self.config.input_channels
            || [h, w] != [self.config.input_size[0], self.config.input_size[1]]
        {
            return Err(Error::Config(format!(
                "input {:?} does not match configured {}x{}x{}",
                left.shape(),
                self.config.input_channels,
                self.config.input_size[0],
                self.config.input_size[1]
            )));
        }
        let param_vars: Vec<VarId> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect();

        let named = |id: &str, e: Error| match e {
            Error::Numeric(msg) => Error::Numeric(format!("layer {id}: {msg}")),
            Error::Config(msg) => Error::Config(format!("layer {id}: {msg}")),
            other => other,
        };

        let mut cur = tape.constant(left.clone());
        let mut pool_taps: HashMap<String, VarId> = HashMap::new();
        let specs: Vec<&LayerSpec> = self.config.trunk.iter().chain(&self.config.head).collect();
        for (spec, slots) in specs.iter().zip(&self.trunk_slots) {
            cur = match spec.kind {
                LayerKind::Conv | LayerKind::FullyConv => tape
                    .conv2d(
                        cur,
                        param_vars[slots.kernel.unwrap()],
                        Some(param_vars[slots.bias.unwrap()]),
                        (spec.stride[0], spec.stride[1]),
                        spec.pad,
                    )
                    .map_err(|e| named(&spec.id, e))?,
                LayerKind::Relu => tape.relu(cur).map_err(|e| named(&spec.id, e))?,
                LayerKind::Lrn => tape
                    .lrn(cur, spec.lrn.unwrap_or_default())
                    .map_err(|e| named(&spec.id, e))?,
                LayerKind::Pool => {
                    pool_taps.insert(spec.id.clone(), cur);
                    tape.maxpool2d(
                        cur,
                        (spec.kernel[0], spec.kernel[1]),
                        (spec.stride[0], spec.stride[1]),
                        spec.pad,
                    )
                    .map_err(|e| named(&spec.id, e))?
                }
                LayerKind::CropPad => tape
                    .crop_pad(cur, spec.crop_pad)
                    .map_err(|e| named(&spec.id, e))?,
                LayerKind::Upsample | LayerKind::SkipFuse => unreachable!("validated at build"),
            };
        }

        for (stage, slots) in self.config.stages.iter().zip(&self.stage_slots) {
            let mut up = tape
                .upsample(cur, param_vars[slots.up_kernel], stage.upsample.factor)
                .map_err(|e| named(&stage.upsample.id, e))?;
            if !stage.crop_pad.is_none() {
                up = tape
                    .crop_pad(up, stage.crop_pad)
                    .map_err(|e| named(&stage.id, e))?;
            }
            cur = match (&stage.skip, slots.skip_kernel, slots.skip_bias) {
                (Some(skip), Some(k), Some(b)) => {
                    let tap = *pool_taps.get(&skip.source_pool).expect("audited");
                    let branch = tape
                        .conv2d(tap, param_vars[k], Some(param_vars[b]), (1, 1), Pad2::ZERO)
                        .map_err(|e| named(&skip.conv.id, e))?;
                    tape.add(up, branch).map_err(|e| named(&stage.id, e))?
                }
                _ => up,
            };
        }

        Ok(ForwardPass {
            disparity: cur,
            param_vars,
        })
    }

    /// Plain forward pass returning the finest active disparity map.
    pub fn forward(&self, left: &Tensor<F>) -> Result<DisparityMap<F>> {
        let mut tape = Tape::new();
        let pass = self.forward_on_tape(&mut tape, left)?;
        let out = tape.value(pass.disparity);
        let (_, h, w) = out.spatial_dims()?;
        DisparityMap::new(Tensor::from_vec_unchecked(&[h, w], out.data().to_vec()))
    }

    /// One line per layer: id, kind, geometry, parameter count.
    pub fn dump_arch(&self) -> Result<String> {
        let reports = self.config.audit()?;
        let mut out = String::new();
        out.push_str(&format!(
            "input {}x{}x{} ({} stages declared, {} grown)\n",
            self.config.input_channels,
            self.config.input_size[0],
            self.config.input_size[1],
            self.config.stages.len(),
            self.active_stages()
        ));
        for r in &reports {
            out.push_str(&format!(
                "{:<10} {:<10} out {}x{}x{}  params {}\n",
                r.id,
                format!("{:?}", r.kind),
                r.output[0],
                r.output[1],
                r.output[2],
                r.param_count
            ));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn paper_profile_reproduces_published_ladder() {
        let cfg = NetworkConfig::paper(3, false);
        let ladder = cfg.resolution_ladder().unwrap();
        let resolutions: Vec<[usize; 2]> = ladder.iter().map(|(_, r)| *r).collect();
        assert_eq!(
            resolutions,
            vec![
                [5, 18],
                [10, 37],
                [22, 76],
                [44, 152],
                [88, 304],
                [176, 608]
            ]
        );
    }

    #[test]
    fn desk_profile_ladder_doubles_cleanly() {
        let cfg = NetworkConfig::desk(1);
        let ladder = cfg.resolution_ladder().unwrap();
        let resolutions: Vec<[usize; 2]> = ladder.iter().map(|(_, r)| *r).collect();
        assert_eq!(resolutions, vec![[4, 12], [8, 24], [16, 48], [32, 96]]);
    }

    #[test]
    fn zero_initialized_network_predicts_zero_disparity() {
        let cfg = NetworkConfig::desk(1);
        let net = Network::<f32>::build(cfg, &mut rng()).unwrap();
        let mut data = vec![0.0f32; 64 * 192];
        for (i, v) in data.iter_mut().enumerate() {
            *v = ((i % 97) as f32 / 97.0) - 0.5;
        }
        let left = Tensor::from_vec(&[1, 64, 192], data).unwrap();
        let d = net.forward(&left).unwrap();
        assert!(d.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn growth_preserves_existing_parameters_bitwise() {
        let cfg = NetworkConfig::desk(1);
        let mut net = Network::<f32>::build(cfg, &mut rng()).unwrap();
        let before: Vec<Vec<f32>> = net.params().iter().map(|p| p.value.data().to_vec()).collect();
        net.grow_stage().unwrap();
        for (p, old) in net.params().iter().zip(&before) {
            assert_eq!(p.value.data(), &old[..]);
        }
        assert_eq!(net.active_stages(), 1);
    }

    #[test]
    fn fresh_skip_stage_is_neutral_at_birth() {
        // with the skip branch zero-initialized, the grown output equals
        // plain bilinear upsampling of the coarse prediction
        let cfg = NetworkConfig::desk(1);
        let mut net = Network::<f64>::build(cfg, &mut rng()).unwrap();
        // jitter the head so the coarse output is nonzero
        for p in net.params_mut() {
            if p.name == "L7.kernel" {
                for (i, v) in p.value.data_mut().iter_mut().enumerate() {
                    *v = ((i % 13) as f64 - 6.0) * 0.01;
                }
            }
        }
        let mut data = vec![0.0f64; 64 * 192];
        for (i, v) in data.iter_mut().enumerate() {
            *v = ((i % 31) as f64 / 31.0) - 0.5;
        }
        let left = Tensor::from_vec(&[1, 64, 192], data).unwrap();
        let coarse = net.forward(&left).unwrap();
        net.grow_stage().unwrap();
        let fine = net.forward(&left).unwrap();

        let kernel = upsample::bilinear_kernel::<f64>(1, 2);
        let coarse_t = Tensor::from_vec_unchecked(
            &[1, coarse.height(), coarse.width()],
            coarse.values().data().to_vec(),
        );
        let up = upsample::forward(&coarse_t, &kernel, 2).unwrap();
        for (a, b) in fine.values().data().iter().zip(up.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stage_layer_sets_grow_strictly() {
        let cfg = NetworkConfig::desk(1);
        let sets = cfg.stage_layer_sets();
        assert_eq!(sets.len(), 4);
        for pair in sets.windows(2) {
            assert!(pair[1].len() > pair[0].len());
            for id in &pair[0] {
                assert!(pair[1].contains(id));
            }
        }
    }

    #[test]
    fn topology_audit_recovers_declared_sequence() {
        let cfg = NetworkConfig::desk(1);
        let reports = cfg.audit().unwrap();
        let declared: Vec<String> = cfg
            .trunk
            .iter()
            .chain(&cfg.head)
            .map(|l| l.id.clone())
            .chain(cfg.stages.iter().flat_map(|s| {
                let mut ids = Vec::new();
                if let Some(skip) = &s.skip {
                    ids.push(skip.conv.id.clone());
                }
                ids.push(s.id.clone());
                ids
            }))
            .collect();
        let audited: Vec<String> = reports.iter().map(|r| r.id.clone()).collect();
        assert_eq!(audited, declared);
    }

    #[test]
    fn broken_shape_chain_names_the_layer() {
        let mut cfg = NetworkConfig::desk(1);
        cfg.trunk[4].channels[0] = 99; // C2 expects wrong input channels
        let err = cfg.audit().unwrap_err();
        assert!(err.to_string().contains("C2"), "{err}");
    }
}
