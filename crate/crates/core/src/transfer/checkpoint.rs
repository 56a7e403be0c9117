use std::fs;
use std::path::Path;

use super::TransferError;
use crate::arch::{build_model, ArchSpec, Model};
use crate::nn::{Layer, Scalar, Tensor};

pub const MAGIC: &[u8] = b"PXC1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    /// `"<node>.<slot>"`, e.g. `stem.conv0.weight` or `stem.bn0.running_mean`.
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Serialized model weights plus the spec they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchSpec,
    pub step: u64,
    pub arrays: Vec<NamedArray>,
    /// Mask seeds of dropout layers, by node name.
    pub dropout_seeds: Vec<(String, u64)>,
}

fn corrupt<S: Into<String>>(msg: S) -> TransferError {
    TransferError::CorruptFile(msg.into())
}

impl Checkpoint {
    /// Snapshots every parameter and batchnorm buffer in node order.
    pub fn from_model<T: Scalar>(model: &Model<T>, step: u64) -> Self {
        let mut arrays = Vec::new();
        let mut dropout_seeds = Vec::new();
        for node in model.net.nodes() {
            if let Layer::Dropout(d) = &node.layer {
                dropout_seeds.push((node.name.clone(), d.seed));
            }
            for (slot, t) in node.layer.params().into_iter().chain(node.layer.buffers()) {
                arrays.push(NamedArray {
                    name: format!("{}.{slot}", node.name),
                    shape: t.shape().to_vec(),
                    data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
                });
            }
        }
        Self { spec: model.spec.clone(), step, arrays, dropout_seeds }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut header = format!("version={FORMAT_VERSION}\nspec_hash={:016x}\nstep={}\n", self.spec.spec_hash(), self.step);
        for line in self.spec.canonical_text().lines() {
            header.push_str(&format!("spec.{line}\n"));
        }
        for (name, seed) in &self.dropout_seeds {
            header.push_str(&format!("dropout={name};{seed}\n"));
        }
        let mut offset = 0usize;
        for a in &self.arrays {
            let dims: Vec<String> = a.shape.iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("array={};{};{offset};{}\n", a.name, dims.join(","), a.data.len()));
            offset += a.data.len() * 4;
        }
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and validates structure, version and the internal spec hash.
    pub fn decode(bytes: &[u8]) -> Result<Self, TransferError> {
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| corrupt("missing magic"))?;
        if rest.len() < 4 {
            return Err(corrupt("truncated header length"));
        }
        let hlen = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        let rest = &rest[4..];
        if rest.len() < hlen {
            return Err(corrupt(format!("header needs {hlen} bytes, file has {}", rest.len())));
        }
        let header = std::str::from_utf8(&rest[..hlen]).map_err(|_| corrupt("header is not UTF-8"))?;
        let data = &rest[hlen..];

        let mut version = None;
        let mut hash = None;
        let mut step = None;
        let mut spec_text = String::new();
        let mut directory = Vec::new();
        let mut dropout_seeds = Vec::new();
        for line in header.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| corrupt(format!("malformed header line {line:?}")))?;
            match k {
                "version" => version = Some(v.parse::<u32>().map_err(|_| corrupt("bad version"))?),
                "spec_hash" => hash = Some(u64::from_str_radix(v, 16).map_err(|_| corrupt("bad spec hash"))?),
                "step" => step = Some(v.parse::<u64>().map_err(|_| corrupt("bad step"))?),
                "array" => directory.push(parse_array_line(v)?),
                "dropout" => {
                    let (name, seed) = v.split_once(';').ok_or_else(|| corrupt(format!("malformed dropout entry {v:?}")))?;
                    let seed = seed.parse::<u64>().map_err(|_| corrupt("bad dropout seed"))?;
                    dropout_seeds.push((name.to_string(), seed));
                }
                _ => match k.strip_prefix("spec.") {
                    Some(key) => spec_text.push_str(&format!("{key}={v}\n")),
                    None => return Err(corrupt(format!("unknown header key {k:?}"))),
                },
            }
        }
        let version = version.ok_or_else(|| corrupt("missing version"))?;
        if version != FORMAT_VERSION {
            return Err(TransferError::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        let hash = hash.ok_or_else(|| corrupt("missing spec hash"))?;
        let step = step.ok_or_else(|| corrupt("missing step"))?;
        let spec = ArchSpec::from_canonical(&spec_text).map_err(|e| corrupt(e.to_string()))?;
        if spec.spec_hash() != hash {
            return Err(corrupt("spec text does not match its recorded hash"));
        }

        let expected_len: usize = directory.iter().map(|(_, _, _, len)| len * 4).sum();
        if data.len() != expected_len {
            return Err(corrupt(format!("expected {expected_len} data bytes, found {}", data.len())));
        }
        let mut arrays = Vec::with_capacity(directory.len());
        for (name, shape, offset, len) in directory {
            if shape.iter().product::<usize>() != len {
                return Err(corrupt(format!("array {name}: shape {shape:?} does not hold {len} values")));
            }
            let end = offset + len * 4;
            let raw = data.get(offset..end).ok_or_else(|| corrupt(format!("array {name} runs past the end")))?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            arrays.push(NamedArray { name, shape, data: values });
        }
        Ok(Self { spec, step, arrays, dropout_seeds })
    }

    /// Builds a model for the recorded spec and fills in every array.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>, TransferError> {
        let mut model = build_model::<T>(&self.spec, 0)?;
        let mut used = vec![false; self.arrays.len()];
        for i in 0..model.net.len() {
            let node = model.net.node_mut(i);
            let prefix = node.name.clone();
            if let Layer::Dropout(d) = &mut node.layer {
                d.seed = self
                    .dropout_seeds
                    .iter()
                    .find(|(n, _)| *n == prefix)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| corrupt(format!("dropout seed for {prefix} is missing")))?;
            }
            let names: Vec<&'static str> = node.layer.params().iter().map(|(n, _)| *n).collect();
            for (slot, t) in names.into_iter().zip(node.layer.params_mut()) {
                self.fill(&mut used, &format!("{prefix}.{slot}"), t)?;
            }
            let names: Vec<&'static str> = node.layer.buffers().iter().map(|(n, _)| *n).collect();
            for (slot, t) in names.into_iter().zip(node.layer.buffers_mut()) {
                self.fill(&mut used, &format!("{prefix}.{slot}"), t)?;
            }
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(corrupt(format!("array {} does not belong to the model", self.arrays[k].name)));
        }
        Ok(model)
    }
}

impl Checkpoint {
    fn fill<T: Scalar>(&self, used: &mut [bool], full: &str, t: &mut Tensor<T>) -> Result<(), TransferError> {
        let k = self
            .arrays
            .iter()
            .position(|a| a.name == full)
            .ok_or_else(|| corrupt(format!("array {full} is missing")))?;
        if used[k] {
            return Err(corrupt(format!("array {full} appears twice")));
        }
        used[k] = true;
        let a = &self.arrays[k];
        if a.shape != t.shape() {
            return Err(corrupt(format!("array {full}: shape {:?}, model expects {:?}", a.shape, t.shape())));
        }
        *t = Tensor::new(a.shape.clone(), a.data.iter().map(|&v| T::of(f64::from(v))).collect())
            .expect("shape checked above");
        Ok(())
    }
}

fn parse_array_line(v: &str) -> Result<(String, Vec<usize>, usize, usize), TransferError> {
    let parts: Vec<&str> = v.split(';').collect();
    let [name, dims, offset, len] = parts[..] else {
        return Err(corrupt(format!("malformed array entry {v:?}")));
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| corrupt(format!("bad number {s:?} in array entry")));
    let shape = dims.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    Ok((name.to_string(), shape, num(offset)?, num(len)?))
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, step: u64, path: &Path) -> Result<(), TransferError> {
    let bytes = Checkpoint::from_model(model, step).encode();
    fs::write(path, bytes).map_err(|e| TransferError::Io(format!("{}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, TransferError> {
    let bytes = fs::read(path).map_err(|e| TransferError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::decode(&bytes)
}

/// Reads a checkpoint and rebuilds its model, refusing files written for another spec.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected: &ArchSpec) -> Result<(Model<T>, u64), TransferError> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.spec.spec_hash() != expected.spec_hash() {
        return Err(TransferError::SpecHashMismatch { expected: expected.spec_hash(), found: ckpt.spec.spec_hash() });
    }
    Ok((ckpt.to_model()?, ckpt.step))
}
