use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Nonsignificant,
    Significant,
}

impl Label {
    /// Class index used by the models: nonsignificant 0, significant 1.
    pub fn class(self) -> usize {
        match self {
            Label::Nonsignificant => 0,
            Label::Significant => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Significant
    }

    pub fn from_class(class: usize) -> Self {
        if class == 1 {
            Label::Significant
        } else {
            Label::Nonsignificant
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Nonsignificant => "nonsignificant",
            Label::Significant => "significant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "significant" => Ok(Label::Significant),
            "nonsignificant" => Ok(Label::Nonsignificant),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub path: PathBuf,
    pub patient_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifestStats {
    pub images: usize,
    pub patients: usize,
    pub significant: usize,
    pub nonsignificant: usize,
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "images={} patients={} significant={} nonsignificant={}",
            self.images, self.patients, self.significant, self.nonsignificant
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub samples: Vec<Sample>,
}

pub const MANIFEST_HEADER: [&str; 3] = ["path", "patient_id", "label"];

impl Manifest {
    /// Checks the non-empty and unique-path rules.
    pub fn new(samples: Vec<Sample>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for (row, s) in samples.iter().enumerate() {
            if s.path.as_os_str().is_empty() {
                return Err(DataError::EmptyField { row: row + 1, column: "path" });
            }
            if s.patient_id.is_empty() {
                return Err(DataError::EmptyField { row: row + 1, column: "patient_id" });
            }
            if !seen.insert(&s.path) {
                return Err(DataError::DuplicatePath(s.path.display().to_string()));
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Patient ids in order of first appearance.
    pub fn patients(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.patient_id.as_str()))
            .map(|s| s.patient_id.as_str())
            .collect()
    }

    pub fn patient_set(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.patient_id.as_str()).collect()
    }

    pub fn stats(&self) -> ManifestStats {
        let significant = self.samples.iter().filter(|s| s.label.is_positive()).count();
        ManifestStats {
            images: self.samples.len(),
            patients: self.patient_set().len(),
            significant,
            nonsignificant: self.samples.len() - significant,
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Parses CSV text; relative paths are resolved against `base_dir`.
    pub fn from_reader<R: Read>(reader: R, base_dir: &Path) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
        let mut cols = [0usize; 3];
        for (slot, name) in cols.iter_mut().zip(MANIFEST_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or(DataError::MissingColumn(name))?;
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
            let row = i + 1;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let raw = field(cols[0]);
            if raw.is_empty() {
                return Err(DataError::EmptyField { row, column: "path" });
            }
            let label = field(cols[2])
                .parse::<Label>()
                .map_err(|label| DataError::UnknownLabel { row, label })?;
            samples.push(Sample { path: resolve(base_dir, raw), patient_id: field(cols[1]).to_string(), label });
        }
        if samples.is_empty() {
            return Err(DataError::EmptyManifest);
        }
        Self::new(samples)
    }

    /// CSV text. Paths under `dir` are written relative to it, others as stored.
    pub fn to_csv(&self, dir: Option<&Path>) -> Result<String, DataError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| DataError::Csv(e.to_string());
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for s in &self.samples {
            let path = match dir.and_then(|d| s.path.strip_prefix(d).ok()) {
                Some(rel) => rel,
                None => s.path.as_path(),
            };
            let path = path.to_string_lossy().replace('\\', "/");
            w.write_record([path.as_str(), s.patient_id.as_str(), s.label.as_str()]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| DataError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output of UTF-8 fields"))
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let dir = path.parent().map(absolute);
        fs::write(path, self.to_csv(dir.as_deref())?).map_err(|e| DataError::io(path, e))
    }
}

pub(crate) fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    absolute(&base.join(raw))
}

/// Reads a `path,patient_id,label` CSV; labels are case-insensitive.
pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Manifest::from_reader(file, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Manifest, DataError> {
        Manifest::from_reader(text.as_bytes(), Path::new("/data"))
    }

    #[test]
    fn three_rows_two_patients() {
        let m = parse("path,patient_id,label\na.png,P01,significant\nb.png,P01,nonsignificant\nc.png,P02,Significant\n")
            .unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.stats(), ManifestStats { images: 3, patients: 2, significant: 2, nonsignificant: 1 });
        assert_eq!(m.samples[2].label, Label::Significant);
        assert_eq!(m.samples[0].path, PathBuf::from("/data/a.png"));
        assert_eq!(m.patients(), ["P01", "P02"]);
    }

    #[test]
    fn column_order_is_free() {
        let m = parse("label,path,patient_id\nNONSIGNIFICANT,x.pgm,7\n").unwrap();
        assert_eq!(m.samples[0].label, Label::Nonsignificant);
        assert_eq!(m.samples[0].patient_id, "7");
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("path,label\na,significant\n"), Err(DataError::MissingColumn("patient_id"))));
        assert!(matches!(
            parse("path,patient_id,label\na,P,gleason7\n"),
            Err(DataError::UnknownLabel { row: 1, .. })
        ));
        assert!(matches!(
            parse("path,patient_id,label\na,P,significant\n./a,Q,significant\n"),
            Err(DataError::DuplicatePath(_))
        ));
        assert!(matches!(parse("path,patient_id,label\n"), Err(DataError::EmptyManifest)));
        assert!(matches!(parse("path,patient_id,label\na,,significant\n"), Err(DataError::EmptyField { .. })));
    }

    #[test]
    fn stats_at_full_dataset_size() {
        let mut text = String::from("path,patient_id,label\n");
        for i in 0..1528 {
            let label = if i % 3 == 0 { "significant" } else { "nonsignificant" };
            text.push_str(&format!("img{i}.png,P{:02},{label}\n", i % 64));
        }
        let s = parse(&text).unwrap().stats();
        assert_eq!((s.images, s.patients), (1528, 64));
    }

    #[test]
    fn csv_roundtrip_relative_to_dir() {
        let m = parse("path,patient_id,label\nsub/a.png,P1,significant\n").unwrap();
        let text = m.to_csv(Some(Path::new("/data"))).unwrap();
        assert_eq!(text, "path,patient_id,label\nsub/a.png,P1,significant\n");
        assert_eq!(parse(&text).unwrap(), m);
    }
}
