use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{Manifest, Sample};
use super::DataError;
use crate::nn::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, val: 0.0, test: 0.2, seed: 0 }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, DataError> {
        let s = Self { train, val, test, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(DataError::InvalidSplit(format!("fractions must be non-negative, got {fr:?}")));
        }
        if self.train <= 0.0 || self.test <= 0.0 {
            return Err(DataError::InvalidSplit("train and test fractions must be positive".into()));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(format!("fractions must sum to 1, got {fr:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub spec: SplitSpec,
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
    /// Patient id and destination, in shuffled order.
    pub assignment: Vec<(String, Part)>,
}

fn part_count(n: usize, fraction: f64) -> usize {
    if fraction > 0.0 {
        ((n as f64 * fraction).round() as usize).max(1)
    } else {
        0
    }
}

/// Shuffles patients by seed, then takes test, val and train patients in that order. Every
/// image of a patient lands in the same part; samples keep their manifest order.
pub fn split_by_patient(m: &Manifest, spec: &SplitSpec) -> Result<Split, DataError> {
    spec.validate()?;
    let mut patients: Vec<String> = m.patients().into_iter().map(str::to_string).collect();
    let n = patients.len();
    let n_test = part_count(n, spec.test);
    let n_val = part_count(n, spec.val);
    if n < n_test + n_val + 1 {
        return Err(DataError::TooFewPatients { patients: n, needed: n_test + n_val + 1 });
    }
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let assignment: Vec<(String, Part)> = patients
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let part = if i < n_test {
                Part::Test
            } else if i < n_test + n_val {
                Part::Val
            } else {
                Part::Train
            };
            (p, part)
        })
        .collect();
    let lookup: HashMap<&str, Part> = assignment.iter().map(|(p, part)| (p.as_str(), *part)).collect();
    let pick = |part: Part| -> Manifest {
        let samples: Vec<Sample> = m.samples.iter().filter(|s| lookup[s.patient_id.as_str()] == part).cloned().collect();
        Manifest { samples }
    };
    Ok(Split { spec: *spec, train: pick(Part::Train), val: pick(Part::Val), test: pick(Part::Test), assignment })
}

impl Split {
    pub fn part(&self, part: Part) -> &Manifest {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }

    /// Seed, fractions, per-part counts and class balance, then one line per patient.
    pub fn report(&self) -> String {
        let s = &self.spec;
        let mut out = format!("seed={}\nfractions={},{},{}\n", s.seed, s.train, s.val, s.test);
        for part in [Part::Train, Part::Val, Part::Test] {
            let st = self.part(part).stats();
            let n_pat = self.assignment.iter().filter(|(_, p)| *p == part).count();
            let _ = writeln!(
                out,
                "{}: patients={n_pat} images={} significant={} nonsignificant={}",
                part.name(),
                st.images,
                st.significant,
                st.nonsignificant
            );
        }
        for (p, part) in &self.assignment {
            let _ = writeln!(out, "patient {p} {}", part.name());
        }
        out
    }

    /// Writes `train.csv`, `val.csv`, `test.csv` and `split_report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let mut written = Vec::new();
        for part in [Part::Train, Part::Val, Part::Test] {
            let path = dir.join(format!("{}.csv", part.name()));
            self.part(part).write(&path)?;
            written.push(path);
        }
        let path = dir.join("split_report.txt");
        fs::write(&path, self.report()).map_err(|e| DataError::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

/// Index batches for one epoch, shuffled by `(seed, epoch)`.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: u64, drop_last: bool) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, epoch])));
    order
        .chunks(batch_size)
        .filter(|c| !drop_last || c.len() == batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}
