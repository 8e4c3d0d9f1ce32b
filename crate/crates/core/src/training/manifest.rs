//! Dataset manifest: tab-separated rows of (wav path, scene label, device).

use crate::error::{Error, Result};

/// The ten scene labels, in canonical order. A row's class index is its
/// position in this list.
pub const SCENE_LABELS: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

/// Class index of a scene name, if it is in the vocabulary.
pub fn label_index(name: &str) -> Option<usize> {
    SCENE_LABELS.iter().position(|&l| l == name)
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Path relative to the dataset root.
    pub path: String,
    /// Class index into [`SCENE_LABELS`].
    pub label: usize,
    pub device: String,
}

/// Parsed dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    rows: Vec<ManifestRow>,
}

const HEADER: &str = "filename\tscene_label\tdevice";

impl DatasetManifest {
    /// Parse TSV bytes. The first line must be the exact header
    /// `filename<TAB>scene_label<TAB>device`; every row must carry a label
    /// from the ten-scene vocabulary. Errors name the offending line.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Manifest {
            line: 0,
            reason: "manifest is not utf-8".into(),
        })?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim_end_matches('\r') == HEADER => {}
            Some((_, first)) => {
                return Err(Error::Manifest {
                    line: 1,
                    reason: format!("expected header `{HEADER}`, got `{first}`"),
                })
            }
            None => {
                return Err(Error::Manifest {
                    line: 1,
                    reason: "empty manifest".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Manifest {
                    line: lineno,
                    reason: format!("expected 3 tab-separated columns, got {}", cols.len()),
                });
            }
            let label = label_index(cols[1]).ok_or_else(|| Error::Manifest {
                line: lineno,
                reason: format!("unknown scene label `{}`", cols[1]),
            })?;
            rows.push(ManifestRow {
                path: cols[0].to_string(),
                label,
                device: cols[2].to_string(),
            });
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row counts per class index.
    pub fn label_histogram(&self) -> [usize; 10] {
        let mut hist = [0usize; 10];
        for row in &self.rows {
            hist[row.label] += 1;
        }
        hist
    }

    /// Serialize back to TSV (used by tooling that writes manifests).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                row.path, SCENE_LABELS[row.label], row.device
            ));
        }
        out
    }
}
