//! Grid manifests: one `image-id<TAB>labels<TAB>path[<TAB>scale]` line per
//! grid file. Labels are comma-separated class ids; relative paths resolve
//! against the manifest's directory. Blank lines and `#` comments are skipped.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dsp_core::ClassId;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub labels: Vec<ClassId>,
    pub path: PathBuf,
    /// Explicit scale column; when absent the grid's own scale tag applies.
    pub scale: Option<f64>,
    /// 1-based line in the manifest, for error messages.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn parse_labels(field: &str) -> Result<Vec<ClassId>> {
    let mut labels = field
        .split(',')
        .map(|s| s.trim().parse::<ClassId>().with_context(|| format!("bad label id {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    labels.sort_unstable();
    labels.dedup();
    Ok(labels)
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                bail!("line {line}: expected 3 or 4 tab-separated fields, found {}", fields.len());
            }
            let image_id = fields[0].trim().to_string();
            ensure!(!image_id.is_empty(), "line {line}: empty image id");
            let labels = parse_labels(fields[1]).with_context(|| format!("line {line}"))?;
            let path = Path::new(fields[2].trim());
            let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
            let scale = match fields.get(3) {
                Some(s) => {
                    let v: f64 = s.trim().parse().with_context(|| format!("line {line}: bad scale {s:?}"))?;
                    ensure!(v > 0.0 && v.is_finite(), "line {line}: scale must be positive, got {v}");
                    Some(v)
                }
                None => None,
            };
            entries.push(ManifestEntry {
                image_id,
                labels,
                path,
                scale,
                line,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in manifest {}", path.display()))
    }

    /// Fails with every listed path that does not exist.
    pub fn check_files(&self) -> Result<()> {
        let missing: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.path.is_file())
            .map(|e| format!("  line {}: {}", e.line, e.path.display()))
            .collect();
        if !missing.is_empty() {
            bail!("{} grid file(s) missing:\n{}", missing.len(), missing.join("\n"));
        }
        Ok(())
    }

    /// Entries grouped by image id, in order of first appearance.
    pub fn images(&self) -> Result<Vec<(&str, Vec<&ManifestEntry>)>> {
        let mut groups: Vec<(&str, Vec<&ManifestEntry>)> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for e in &self.entries {
            match index.get(e.image_id.as_str()) {
                Some(&i) => {
                    let first: &ManifestEntry = groups[i].1[0];
                    ensure!(
                        first.labels == e.labels,
                        "image {:?} has labels {:?} on line {} but {:?} on line {}",
                        e.image_id,
                        first.labels,
                        first.line,
                        e.labels,
                        e.line
                    );
                    groups[i].1.push(e);
                }
                None => {
                    index.insert(e.image_id.as_str(), groups.len());
                    groups.push((e.image_id.as_str(), vec![e]));
                }
            }
        }
        Ok(groups)
    }
}
