//! Dataset manifests: one `image,mask[,x,y,w,h]` record per line.

use std::path::{Path, PathBuf};

use super::netpbm::{read_mask, read_ppm};
use super::RoiBox;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub roi: Option<RoiBox>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Parses manifest text. Relative paths are resolved against `base`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let line_start = offset;
            offset += raw.len();
            let line = raw.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let roi = match fields.len() {
                2 => None,
                6 => {
                    let roi_text = fields[2..].join(",");
                    let at = line_start + fields[0].len() + fields[1].len() + 2;
                    Some(RoiBox::parse(&roi_text).map_err(|e| match e {
                        Error::Parse { offset, msg } => Error::parse(at + offset, msg),
                        other => other,
                    })?)
                }
                n => {
                    return Err(Error::parse(
                        line_start,
                        format!("expected 2 or 6 comma-separated fields, found {n}"),
                    ))
                }
            };
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::parse(line_start, "empty path"));
            }
            records.push(ManifestRecord {
                image: base.join(fields[0]),
                mask: base.join(fields[1]),
                roi,
            });
        }
        Ok(DatasetManifest { records })
    }

    /// Reads a manifest file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Serializes records, writing paths relative to `base` when possible.
    pub fn to_text(&self, base: &Path) -> String {
        let mut out = String::new();
        for r in &self.records {
            let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
            out.push_str(&format!("{},{}", rel(&r.image), rel(&r.mask)));
            if let Some(b) = r.roi {
                out.push_str(&format!(",{b}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that every referenced file decodes, that image and mask sizes
    /// agree and that any stored box fits.
    pub fn validate_files(&self) -> Result<()> {
        for r in &self.records {
            let image = read_ppm(&r.image)?;
            let (mask, _) = read_mask(&r.mask)?;
            if (image.width, image.height) != (mask.width, mask.height) {
                return Err(Error::Contract(format!(
                    "{} is {}x{} but {} is {}x{}",
                    r.image.display(),
                    image.width,
                    image.height,
                    r.mask.display(),
                    mask.width,
                    mask.height
                )));
            }
            if let Some(b) = r.roi {
                b.validate(image.width, image.height)?;
            }
        }
        Ok(())
    }
}
