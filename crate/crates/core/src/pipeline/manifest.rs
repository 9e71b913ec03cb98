//! Dataset manifests: `relative_path,label,split,aug_tag` CSV files.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::PipelineError;
use crate::MAX_CLASSES;

pub const MANIFEST_HEADER: [&str; 4] = ["relative_path", "label", "split", "aug_tag"];
pub const UNKNOWN_LABEL: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
    /// Unlabeled challenge-style evaluation data.
    Eval,
}

impl Split {
    pub const LABELED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "eval" => Ok(Split::Eval),
            other => Err(PipelineError::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub relative_path: String,
    pub label: Option<u8>,
    /// `None` until a split has been assigned.
    pub split: Option<Split>,
    /// Empty for original clips.
    pub aug_tag: String,
}

impl ManifestEntry {
    pub fn new(relative_path: impl Into<String>, label: Option<u8>) -> Self {
        Self {
            relative_path: relative_path.into(),
            label,
            split: None,
            aug_tag: String::new(),
        }
    }

    pub fn is_augmented(&self) -> bool {
        !self.aug_tag.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that entry paths are relative to.
    pub root: PathBuf,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            root: root.into(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.relative_path)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    /// Per-class counts within `split`; unknown labels are skipped.
    pub fn class_counts(&self, split: Split) -> [usize; MAX_CLASSES] {
        let mut counts = [0; MAX_CLASSES];
        for e in self.in_split(split) {
            if let Some(l) = e.label {
                counts[usize::from(l)] += 1;
            }
        }
        counts
    }

    /// Number of distinct classes among labeled entries.
    pub fn num_classes(&self) -> usize {
        self.entries.iter().filter_map(|e| e.label).max().map_or(0, |m| usize::from(m) + 1)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.relative_path.as_str()) {
                return Err(PipelineError::Data(format!("duplicate manifest path {}", e.relative_path)));
            }
            if let Some(l) = e.label {
                if usize::from(l) >= MAX_CLASSES {
                    return Err(PipelineError::Data(format!("{}: label {l} out of range", e.relative_path)));
                }
            }
        }
        Ok(())
    }

    /// Reads a manifest; `root` becomes the file's directory. A leading
    /// `# seed=N` comment restores the seed.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut first = String::new();
        BufReader::new(File::open(path)?).read_line(&mut first)?;
        let seed = first
            .trim()
            .strip_prefix("# seed=")
            .map(|s| s.parse().map_err(|_| PipelineError::Data(format!("bad seed line {first:?}"))))
            .transpose()?
            .unwrap_or(0);
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(PipelineError::Data(format!(
                "manifest header must be {}",
                MANIFEST_HEADER.join(",")
            )));
        }
        let mut manifest = Self::new(root, seed);
        for rec in rdr.records() {
            let rec = rec?;
            let label = match &rec[1] {
                UNKNOWN_LABEL => None,
                l => Some(l.parse().map_err(|_| PipelineError::Data(format!("bad label {l:?}")))?),
            };
            let split = match &rec[2] {
                "" => None,
                s => Some(s.parse().map_err(|_| PipelineError::Data(format!("bad split {s:?}")))?),
            };
            manifest.entries.push(ManifestEntry {
                relative_path: rec[0].to_string(),
                label,
                split,
                aug_tag: rec[3].to_string(),
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# seed={}", self.seed)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            let label = e.label.map_or_else(|| UNKNOWN_LABEL.to_string(), |l| l.to_string());
            let split = e.split.map_or("", Split::as_str);
            w.write_record([e.relative_path.as_str(), &label, split, &e.aug_tag])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_unknown_labels_and_tags() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new(dir.path(), 99);
        m.entries.push(ManifestEntry::new("a/x.wav", Some(3)));
        let mut e = ManifestEntry::new("eval/y.wav", None);
        e.split = Some(Split::Eval);
        m.entries.push(e);
        let mut aug = ManifestEntry::new("aug0/a/x.wav", Some(3));
        aug.split = Some(Split::Train);
        aug.aug_tag = "noise;snr_db=10;seed=5;src=a/x.wav".into();
        m.entries.push(aug);
        let path = dir.path().join("manifest.csv");
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("eval/y.wav,?,eval,"));
        assert_eq!(DatasetManifest::read_csv(&path).unwrap(), m);
    }

    #[test]
    fn duplicate_paths_and_bad_headers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new(dir.path(), 0);
        m.entries.push(ManifestEntry::new("a.wav", Some(0)));
        m.entries.push(ManifestEntry::new("a.wav", Some(1)));
        assert!(matches!(m.validate(), Err(PipelineError::Data(_))));
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "path,label\nx.wav,1\n").unwrap();
        assert!(matches!(DatasetManifest::read_csv(&path), Err(PipelineError::Data(_))));
    }
}
