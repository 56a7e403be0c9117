use super::spec::{ArchSpec, Variant};
use super::ArchError;
use crate::nn::init::init_network;
use crate::nn::{softmax, BatchNorm, Conv2d, Dense, Dropout, Layer, Mode, Network, Pool2d, Scalar, Tensor};

/// Node indices of one residual or inception block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockInfo {
    pub name: String,
    pub input: usize,
    /// The residual summation, absent for inception-only blocks.
    pub add: Option<usize>,
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub spec: ArchSpec,
    pub net: Network<T>,
    pub blocks: Vec<BlockInfo>,
}

pub const HEAD_NAME: &str = "head.dense";

impl<T: Scalar> Model<T> {
    /// Number of layers, not counting the input node.
    pub fn layer_count(&self) -> usize {
        self.net.len() - 1
    }

    pub fn head_index(&self) -> usize {
        self.net.index_of(HEAD_NAME).expect("built models always have a dense head")
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn logits(&mut self, x: &Tensor<T>, mode: Mode, step: u64) -> Result<Tensor<T>, ArchError> {
        Ok(self.net.predict(x, mode, step)?)
    }

    /// Class probabilities in eval mode.
    pub fn probabilities(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, ArchError> {
        let logits = self.logits(x, Mode::Eval, 0)?;
        Ok(softmax(&logits)?)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { spec: self.spec.clone(), net: self.net.cast(), blocks: self.blocks.clone() }
    }
}

struct Builder<'a, T> {
    spec: &'a ArchSpec,
    net: Network<T>,
    blocks: Vec<BlockInfo>,
}

impl<T: Scalar> Builder<'_, T> {
    fn add(&mut self, name: String, layer: Layer<T>, inputs: &[usize]) -> Result<usize, ArchError> {
        Ok(self.net.add(name, layer, inputs)?)
    }

    /// `conv{j}` (no bias) -> `bn{j}` -> `relu{j}` under `prefix`.
    #[allow(clippy::too_many_arguments)]
    fn conv_bn_relu(
        &mut self,
        prefix: &str,
        j: usize,
        x: usize,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<usize, ArchError> {
        let c = self.add(format!("{prefix}.conv{j}"), Layer::Conv2d(Conv2d::new(cin, cout, k, stride, pad, false)), &[x])?;
        let b = self.add(format!("{prefix}.bn{j}"), Layer::BatchNorm(BatchNorm::new(cout)), &[c])?;
        self.add(format!("{prefix}.relu{j}"), Layer::Relu, &[b])
    }

    fn pool(&mut self, name: String, avg: bool, k: usize, s: usize, x: usize) -> Result<usize, ArchError> {
        let p = Pool2d { kernel: k, stride: s };
        self.add(name, if avg { Layer::AvgPool(p) } else { Layer::MaxPool(p) }, &[x])
    }

    /// The three inception branches; returns the concat node and its channel count.
    fn branches(&mut self, prefix: &str, x: usize, c: usize, b: usize) -> Result<(usize, usize), ArchError> {
        let b0 = self.conv_bn_relu(&format!("{prefix}.b0"), 0, x, c, b, 1, 1, 0)?;
        let p1 = format!("{prefix}.b1");
        let t = self.conv_bn_relu(&p1, 0, x, c, b, 1, 1, 0)?;
        let b1 = self.conv_bn_relu(&p1, 1, t, b, b, 3, 1, 1)?;
        let p2 = format!("{prefix}.b2");
        let t = self.conv_bn_relu(&p2, 0, x, c, b, 1, 1, 0)?;
        let t = self.conv_bn_relu(&p2, 1, t, b, b, 3, 1, 1)?;
        let b2 = self.conv_bn_relu(&p2, 2, t, b, b, 3, 1, 1)?;
        let cat = self.add(format!("{prefix}.concat"), Layer::Concat, &[b0, b1, b2])?;
        Ok((cat, 3 * b))
    }

    fn inception_resnet_block(&mut self, prefix: String, x: usize, c: usize, b: usize) -> Result<usize, ArchError> {
        let (cat, cc) = self.branches(&prefix, x, c, b)?;
        let proj = self.add(format!("{prefix}.proj"), Layer::Conv2d(Conv2d::new(cc, c, 1, 1, 0, true)), &[cat])?;
        let add = self.add(
            format!("{prefix}.add"),
            Layer::ResidualScaleAdd { scale: self.spec.residual_scale },
            &[x, proj],
        )?;
        let out = self.add(format!("{prefix}.relu"), Layer::Relu, &[add])?;
        self.blocks.push(BlockInfo { name: prefix, input: x, add: Some(add), output: out });
        Ok(out)
    }

    fn inception_block(&mut self, prefix: String, x: usize, c: usize, b: usize) -> Result<(usize, usize), ArchError> {
        let (cat, cc) = self.branches(&prefix, x, c, b)?;
        self.blocks.push(BlockInfo { name: prefix, input: x, add: None, output: cat });
        Ok((cat, cc))
    }

    fn basic_block(&mut self, prefix: String, x: usize, c: usize) -> Result<usize, ArchError> {
        let t = self.conv_bn_relu(&prefix, 0, x, c, c, 3, 1, 1)?;
        let conv = self.add(format!("{prefix}.conv1"), Layer::Conv2d(Conv2d::new(c, c, 3, 1, 1, false)), &[t])?;
        let bn = self.add(format!("{prefix}.bn1"), Layer::BatchNorm(BatchNorm::new(c)), &[conv])?;
        let add = self.add(format!("{prefix}.add"), Layer::ResidualScaleAdd { scale: 1.0 }, &[x, bn])?;
        let out = self.add(format!("{prefix}.relu"), Layer::Relu, &[add])?;
        self.blocks.push(BlockInfo { name: prefix, input: x, add: Some(add), output: out });
        Ok(out)
    }

    /// Concat of a stride-2 max pool and a stride-2 conv; widens by `extra` channels.
    fn reduction(&mut self, prefix: &str, x: usize, c: usize, extra: usize) -> Result<(usize, usize), ArchError> {
        let pool = self.pool(format!("{prefix}.pool"), false, 3, 2, x)?;
        let conv = self.conv_bn_relu(prefix, 0, x, c, extra, 3, 2, 0)?;
        let cat = self.add(format!("{prefix}.concat"), Layer::Concat, &[pool, conv])?;
        Ok((cat, c + extra))
    }

    fn build(&mut self) -> Result<(), ArchError> {
        let spec = self.spec;
        let variant = spec.variant;
        let stem_width = spec.width(16);
        let mut c = spec.width(32);
        let x = self.conv_bn_relu("stem", 0, 0, spec.input_channels, stem_width, 3, 1, 1)?;
        let x = self.pool("stem.pool0".into(), false, 2, 2, x)?;
        let x = self.conv_bn_relu("stem", 1, x, stem_width, c, 3, 1, 1)?;
        let mut x = self.pool("stem.pool1".into(), variant == Variant::MiniInceptionV3, 2, 2, x)?;

        for (i, &count) in spec.block_counts.iter().enumerate() {
            let base = 32 * (i + 1);
            if i > 0 {
                let prefix = format!("stage{i}.reduce");
                if variant == Variant::MiniResnet {
                    x = self.conv_bn_relu(&prefix, 0, x, c, spec.width(base), 3, 2, 1)?;
                    c = spec.width(base);
                } else {
                    (x, c) = self.reduction(&prefix, x, c, spec.width(base / 2))?;
                }
            }
            for j in 0..count {
                let prefix = format!("stage{i}.block{j}");
                match variant {
                    Variant::MiniInceptionResnetV2 => x = self.inception_resnet_block(prefix, x, c, spec.width(base / 2))?,
                    Variant::MiniInceptionV3 => (x, c) = self.inception_block(prefix, x, c, spec.width(base / 2))?,
                    Variant::MiniResnet => x = self.basic_block(prefix, x, c)?,
                }
            }
        }

        let x = self.add("head.pool".into(), Layer::GlobalAvgPool, &[x])?;
        let x = self.add("head.dropout".into(), Layer::Dropout(Dropout { rate: spec.dropout, seed: 0 }), &[x])?;
        self.add(HEAD_NAME.into(), Layer::Dense(Dense::new(c, spec.n_classes)), &[x])?;
        Ok(())
    }
}

/// Builds and seeds a model. The output is raw logits; softmax lives in the loss and in
/// [`Model::probabilities`].
pub fn build_model<T: Scalar>(spec: &ArchSpec, seed: u64) -> Result<Model<T>, ArchError> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        net: Network::new(vec![spec.input_channels, spec.input_height, spec.input_width]),
        blocks: Vec::new(),
    };
    b.build()?;
    let mut model = Model { spec: spec.clone(), net: b.net, blocks: b.blocks };
    init_network(&mut model.net, seed);
    if let Some((name, msg)) = model.net.shape_trace(1).error {
        return Err(ArchError::InvalidSpec(format!(
            "input {}x{} is too small: layer {name}: {msg}",
            spec.input_height, spec.input_width
        )));
    }
    Ok(model)
}
