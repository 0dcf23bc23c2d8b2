//! Dataset manifests and detector score files.
//!
//! Both are CSV with fixed headers:
//!
//! ```text
//! path,class,generator        (manifest; class is `real` or `synthetic`)
//! path,score                  (scores; higher = more likely synthetic)
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Generator tag carried by every real image.
pub const REAL_GENERATOR: &str = "none";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Real,
    Synthetic,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Real => "real",
            Class::Synthetic => "synthetic",
        }
    }

    /// Binary target used by the classifiers: synthetic is the positive class.
    pub fn target(self) -> f64 {
        match self {
            Class::Real => 0.0,
            Class::Synthetic => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Class::Real => Class::Synthetic,
            Class::Synthetic => Class::Real,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Class {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(Class::Real),
            "synthetic" => Ok(Class::Synthetic),
            other => Err(format!("unknown class {other:?} (expected real or synthetic)")),
        }
    }
}

/// Ground truth for one image. Real images always carry generator `"none"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    class: Class,
    generator: String,
}

impl Label {
    pub fn real() -> Self {
        Self {
            class: Class::Real,
            generator: REAL_GENERATOR.to_string(),
        }
    }

    pub fn synthetic(generator: impl Into<String>) -> Result<Self> {
        let generator = generator.into();
        if generator.is_empty() || generator == REAL_GENERATOR {
            return Err(Error::InvalidParameter(format!(
                "synthetic label needs a generator name, got {generator:?}"
            )));
        }
        Ok(Self {
            class: Class::Synthetic,
            generator,
        })
    }

    pub fn new(class: Class, generator: &str) -> Result<Self> {
        match class {
            Class::Real if generator.is_empty() || generator == REAL_GENERATOR => Ok(Self::real()),
            Class::Real => Err(Error::InvalidParameter(format!(
                "real image with generator {generator:?} (must be \"none\")"
            ))),
            Class::Synthetic => Self::synthetic(generator),
        }
    }

    pub fn class(&self) -> Class {
        self.class
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn is_synthetic(&self) -> bool {
        self.class == Class::Synthetic
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
}

/// Ordered list of labelled images. Paths are relative to `root` unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::DuplicatePath {
                    path: PathBuf::new(),
                    entry: e.path.clone(),
                });
            }
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Filesystem location of an entry.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Sorted, de-duplicated generator names of the synthetic entries.
    pub fn generators(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.label.is_synthetic())
            .map(|e| e.label.generator().to_string())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Reads a manifest CSV; the manifest root becomes the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = open_csv(path)?;
        check_header(&mut reader, path, &["path", "class", "generator"])?;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for row in reader.records() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if row.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", row.len())));
            }
            let entry_path = row[0].trim().to_string();
            if entry_path.is_empty() {
                return Err(bad("empty path".into()));
            }
            let class: Class = row[1].trim().parse().map_err(bad)?;
            let label = Label::new(class, row[2].trim()).map_err(|e| bad(e.to_string()))?;
            if !seen.insert(entry_path.clone()) {
                return Err(Error::DuplicatePath {
                    path: path.to_path_buf(),
                    entry: entry_path,
                });
            }
            entries.push(ManifestEntry {
                path: entry_path,
                label,
            });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    /// Writes the entries as a manifest CSV (the root is implied by the file location).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create_csv(path)?;
        let io = |e: csv::Error| csv_error(path, e);
        w.write_record(["path", "class", "generator"]).map_err(io)?;
        for e in &self.entries {
            w.write_record([e.path.as_str(), e.label.class().as_str(), e.label.generator()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-image detector outputs, in file order. Higher scores mean "more likely synthetic".
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet<T> {
    pub detector_name: String,
    records: Vec<(String, T)>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(detector_name: impl Into<String>, records: Vec<(String, T)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (p, s) in &records {
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("score for {p}")));
            }
            if !seen.insert(p.as_str()) {
                return Err(Error::DuplicatePath {
                    path: PathBuf::new(),
                    entry: p.clone(),
                });
            }
        }
        Ok(Self {
            detector_name: detector_name.into(),
            records,
        })
    }

    pub fn records(&self) -> &[(String, T)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scores(&self) -> impl Iterator<Item = T> + '_ {
        self.records.iter().map(|(_, s)| *s)
    }

    pub fn to_map(&self) -> HashMap<&str, T> {
        self.records.iter().map(|(p, s)| (p.as_str(), *s)).collect()
    }

    /// Applies `f` to every score, keeping paths and order.
    pub fn map_scores(&self, name: impl Into<String>, mut f: impl FnMut(T) -> T) -> Result<Self> {
        Self::new(
            name,
            self.records.iter().map(|(p, s)| (p.clone(), f(*s))).collect(),
        )
    }

    /// Reads a `path,score` CSV. The detector name defaults to the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = open_csv(path)?;
        check_header(&mut reader, path, &["path", "score"])?;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for row in reader.records() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if row.len() != 2 {
                return Err(bad(format!("expected 2 fields, found {}", row.len())));
            }
            let p = row[0].trim().to_string();
            let raw = row[1].trim();
            let value: f64 = raw
                .parse()
                .map_err(|_| bad(format!("score {raw:?} is not a number")))?;
            if !value.is_finite() {
                return Err(bad(format!("score {raw:?} is not finite")));
            }
            if !seen.insert(p.clone()) {
                return Err(Error::DuplicatePath {
                    path: path.to_path_buf(),
                    entry: p,
                });
            }
            records.push((p, T::of(value)));
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            detector_name: name,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create_csv(path)?;
        let io = |e: csv::Error| csv_error(path, e);
        w.write_record(["path", "score"]).map_err(io)?;
        for (p, s) in &self.records {
            w.write_record([p.as_str(), &s.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

pub(crate) fn create_csv(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn check_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    path: &Path,
    expected: &[&str],
) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<&str> = header.iter().map(|h| h.trim().trim_start_matches('\u{feff}')).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("header {:?}, expected {:?}", got, expected.join(",")),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn manifest_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.csv",
            "path,class,generator\nr.png,real,none\nb.png,synthetic,adm\na.png,synthetic,progan\n",
        );
        let m = DatasetManifest::load(&p).unwrap();
        let paths: Vec<&str> = m.entries().iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["r.png", "b.png", "a.png"]);
        assert_eq!(m.entries()[1].label.generator(), "adm");
        assert_eq!(m.root(), dir.path());
        assert_eq!(m.generators(), ["adm", "progan"]);
    }

    #[test]
    fn manifest_accepts_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.csv",
            "path,class,generator\r\nr.png,real,none\r\nf.png,synthetic,glide\r\n",
        );
        let m = DatasetManifest::load(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[1].label.generator(), "glide");
    }

    #[test]
    fn unknown_class_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.csv",
            "path,class,generator\nr.png,real,none\nf.png,fake,adm\n",
        );
        match DatasetManifest::load(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("fake"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "path,class,generator\n");
        assert!(DatasetManifest::load(&p).unwrap().is_empty());
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(
            dir.path(),
            "d.csv",
            "path,class,generator\na.png,real,none\na.png,real,none\n",
        );
        assert!(matches!(
            DatasetManifest::load(&dup),
            Err(Error::DuplicatePath { .. })
        ));
        let short = write(dir.path(), "s.csv", "path,class,generator\na.png,real\n");
        assert!(matches!(
            DatasetManifest::load(&short),
            Err(Error::Parse { line: 2, .. })
        ));
        let real_gen = write(dir.path(), "g.csv", "path,class,generator\na.png,real,adm\n");
        assert!(DatasetManifest::load(&real_gen).is_err());
        let synth_none = write(dir.path(), "n.csv", "path,class,generator\na.png,synthetic,none\n");
        assert!(DatasetManifest::load(&synth_none).is_err());
        assert!(matches!(
            DatasetManifest::load(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn scores_parse_and_reject() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "det.csv", "path,score\na.png,0.9\n");
        let s = ScoreSet::<f64>::load(&p).unwrap();
        assert_eq!(s.records(), &[("a.png".to_string(), 0.9)]);
        assert_eq!(s.detector_name, "det");

        for body in ["path,score\na.png,nan\n", "path,score\na.png,inf\n", "path,score\na.png,high\n"] {
            let p = write(dir.path(), "bad.csv", body);
            assert!(matches!(ScoreSet::<f64>::load(&p), Err(Error::Parse { line: 2, .. })), "{body}");
        }
        let p = write(dir.path(), "dup.csv", "path,score\na.png,0.1\na.png,0.2\n");
        assert!(matches!(ScoreSet::<f64>::load(&p), Err(Error::DuplicatePath { .. })));
    }

    #[test]
    fn large_score_file_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("path,score\n");
        for i in 0..5000 {
            body.push_str(&format!("img{i}.png,{}\n", (i % 97) as f64 / 97.0));
        }
        let p = write(dir.path(), "s.csv", &body);
        let s = ScoreSet::<f64>::load(&p).unwrap();
        assert_eq!(s.len(), 5000);
        assert_eq!(s.records()[4321].0, "img4321.png");
    }
}
