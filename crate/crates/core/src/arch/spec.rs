use std::fmt;
use std::str::FromStr;

use super::ArchError;
use crate::nn::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    MiniInceptionResnetV2,
    MiniInceptionV3,
    MiniResnet,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::MiniInceptionV3, Variant::MiniResnet, Variant::MiniInceptionResnetV2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MiniInceptionResnetV2 => "mini_inception_resnet_v2",
            Variant::MiniInceptionV3 => "mini_inception_v3",
            Variant::MiniResnet => "mini_resnet",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| ArchError::InvalidSpec(format!("unknown variant {s:?}")))
    }
}

/// Every buildable variant.
pub fn registry() -> &'static [Variant] {
    &Variant::ALL
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub variant: Variant,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub width_multiplier: f64,
    /// Blocks in each stage; the stage count is the length.
    pub block_counts: Vec<usize>,
    pub residual_scale: f64,
    pub dropout: f64,
    pub n_classes: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            variant: Variant::MiniInceptionResnetV2,
            input_height: 64,
            input_width: 64,
            input_channels: 1,
            width_multiplier: 1.0,
            block_counts: vec![2, 2],
            residual_scale: 0.2,
            dropout: 0.2,
            n_classes: 2,
        }
    }
}

const KEYS: [&str; 9] = [
    "variant",
    "input_height",
    "input_width",
    "input_channels",
    "width_multiplier",
    "block_counts",
    "residual_scale",
    "dropout",
    "n_classes",
];

impl ArchSpec {
    pub fn new(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let bad = |m: String| Err(ArchError::InvalidSpec(m));
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return bad(format!(
                "input dims must be positive, got {}x{}x{}",
                self.input_height, self.input_width, self.input_channels
            ));
        }
        if !(self.width_multiplier.is_finite() && self.width_multiplier > 0.0) {
            return bad(format!("width multiplier must be positive, got {}", self.width_multiplier));
        }
        if self.block_counts.is_empty() {
            return bad("at least one stage is required".into());
        }
        if !(0.0..=1.0).contains(&self.residual_scale) {
            return bad(format!("residual scale must be in [0,1], got {}", self.residual_scale));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0,1), got {}", self.dropout));
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        Ok(())
    }

    /// Channel count after scaling by the width multiplier, rounded half up.
    pub fn width(&self, base: usize) -> usize {
        ((base as f64 * self.width_multiplier + 0.5).floor() as usize).max(1)
    }

    /// One `key=value` line per field in a fixed order.
    pub fn canonical_text(&self) -> String {
        let blocks: Vec<String> = self.block_counts.iter().map(|b| b.to_string()).collect();
        let values = [
            self.variant.name().to_string(),
            self.input_height.to_string(),
            self.input_width.to_string(),
            self.input_channels.to_string(),
            self.width_multiplier.to_string(),
            blocks.join(","),
            self.residual_scale.to_string(),
            self.dropout.to_string(),
            self.n_classes.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn spec_hash(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }

    /// Inverse of [`ArchSpec::canonical_text`]. All keys are required.
    pub fn from_canonical(text: &str) -> Result<Self, ArchError> {
        let mut values: [Option<&str>; 9] = [None; 9];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ArchError::InvalidSpec(format!("malformed line {line:?}")))?;
            let i = KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| ArchError::InvalidSpec(format!("unknown key {k:?}")))?;
            values[i] = Some(v.trim());
        }
        let get = |i: usize| values[i].ok_or_else(|| ArchError::InvalidSpec(format!("missing key {}", KEYS[i])));
        let spec = Self {
            variant: get(0)?.parse()?,
            input_height: parse_num(KEYS[1], get(1)?)?,
            input_width: parse_num(KEYS[2], get(2)?)?,
            input_channels: parse_num(KEYS[3], get(3)?)?,
            width_multiplier: parse_num(KEYS[4], get(4)?)?,
            block_counts: get(5)?
                .split(',')
                .map(|b| parse_num(KEYS[5], b.trim()))
                .collect::<Result<_, _>>()?,
            residual_scale: parse_num(KEYS[6], get(6)?)?,
            dropout: parse_num(KEYS[7], get(7)?)?,
            n_classes: parse_num(KEYS[8], get(8)?)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub(crate) fn parse_num<N: FromStr>(key: &str, v: &str) -> Result<N, ArchError> {
    v.parse().map_err(|_| ArchError::InvalidSpec(format!("bad value {v:?} for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_roundtrips() {
        let mut spec = ArchSpec::new(Variant::MiniResnet);
        spec.width_multiplier = 0.75;
        spec.block_counts = vec![1, 3, 2];
        let text = spec.canonical_text();
        assert!(text.starts_with("variant=mini_resnet\n"));
        assert!(text.contains("block_counts=1,3,2\n"));
        assert_eq!(ArchSpec::from_canonical(&text).unwrap(), spec);
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = ArchSpec::default();
        let mut wider = base.clone();
        wider.width_multiplier = 2.0;
        let mut more = base.clone();
        more.n_classes = 3;
        assert_ne!(base.spec_hash(), wider.spec_hash());
        assert_ne!(base.spec_hash(), more.spec_hash());
        assert_eq!(base.spec_hash(), base.clone().spec_hash());
    }

    #[test]
    fn validation() {
        assert!(ArchSpec::default().validate().is_ok());
        let cases: [fn(&mut ArchSpec); 5] = [
            |s| s.residual_scale = 1.5,
            |s| s.n_classes = 1,
            |s| s.input_width = 0,
            |s| s.block_counts.clear(),
            |s| s.dropout = 1.0,
        ];
        for f in cases {
            let mut s = ArchSpec::default();
            f(&mut s);
            assert!(matches!(s.validate(), Err(ArchError::InvalidSpec(_))), "{s:?}");
        }
    }

    #[test]
    fn widths_round_half_up() {
        let mut s = ArchSpec::default();
        s.width_multiplier = 0.5;
        assert_eq!(s.width(16), 8);
        s.width_multiplier = 0.25;
        assert_eq!(s.width(2), 1);
        assert_eq!(s.width(6), 2);
        s.width_multiplier = 0.01;
        assert_eq!(s.width(16), 1);
    }

    #[test]
    fn registry_has_three_variants() {
        let names: Vec<&str> = registry().iter().map(|v| v.name()).collect();
        assert_eq!(names, ["mini_inception_v3", "mini_resnet", "mini_inception_resnet_v2"]);
        assert_eq!("mini_resnet".parse::<Variant>().unwrap(), Variant::MiniResnet);
        assert!("resnet50".parse::<Variant>().is_err());
    }
}
