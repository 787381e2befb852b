use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imagemath::{load_png, save_png, PixelBox};
use crate::Image;

/// Level-of-detail class of a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetailLabel {
    Low,
    High,
    Discarded,
}

impl fmt::Display for DetailLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetailLabel::Low => "low",
            DetailLabel::High => "high",
            DetailLabel::Discarded => "discarded",
        })
    }
}

impl FromStr for DetailLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "low" => Ok(DetailLabel::Low),
            "high" => Ok(DetailLabel::High),
            "discarded" => Ok(DetailLabel::Discarded),
            other => Err(format!("unknown detail label {other:?}")),
        }
    }
}

/// A standardized crop with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: Image,
    pub production: String,
    pub design: String,
    pub detail: DetailLabel,
    /// The region itself inside the crop; the rest is context.
    pub inner: PixelBox,
}

/// An immutable labeled collection of patches.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub patches: Vec<Patch>,
}

pub const LABEL_FILE: &str = "labels.tsv";
const LABEL_HEADER: &str = "path\tproduction\tdesign\tdetail\tx\ty\tw\th";

impl Corpus {
    pub fn new(patches: Vec<Patch>) -> Self {
        Corpus { patches }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Production ids in sorted order.
    pub fn productions(&self) -> Vec<String> {
        let mut p: Vec<String> = self.patches.iter().map(|p| p.production.clone()).collect();
        p.sort();
        p.dedup();
        p
    }

    /// Patch indices grouped by production, then design (both sorted).
    pub fn index(&self) -> BTreeMap<String, BTreeMap<String, Vec<usize>>> {
        let mut out: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for (i, p) in self.patches.iter().enumerate() {
            out.entry(p.production.clone()).or_default().entry(p.design.clone()).or_default().push(i);
        }
        out
    }

    /// Patches whose production is in `keep`.
    pub fn filter_productions(&self, keep: &[String]) -> Corpus {
        Corpus { patches: self.patches.iter().filter(|p| keep.contains(&p.production)).cloned().collect() }
    }

    /// Writes `patches/NNNNN.png` and the label index under `root`.
    pub fn save(&self, root: &Path) -> Result<()> {
        let dir = root.join("patches");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut index = String::from(LABEL_HEADER);
        index.push('\n');
        for (i, p) in self.patches.iter().enumerate() {
            let rel = format!("patches/{i:05}.png");
            save_png(&p.image, &root.join(&rel))?;
            let b = p.inner;
            index.push_str(&format!(
                "{rel}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                p.production, p.design, p.detail, b.x, b.y, b.w, b.h
            ));
        }
        let path = root.join(LABEL_FILE);
        fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(LABEL_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let shown = path.display().to_string();
        let fail = |line: usize, message: String| Error::Format { path: shown.clone(), line, message };
        let mut patches = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || (n == 0 && line.starts_with("path\t")) {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(fail(line_no, format!("expected 8 fields, found {}", f.len())));
            }
            let detail = f[3].parse::<DetailLabel>().map_err(|m| fail(line_no, m))?;
            let mut num = [0usize; 4];
            for (k, v) in f[4..8].iter().enumerate() {
                num[k] = v.parse().map_err(|_| fail(line_no, format!("bad integer {v:?}")))?;
            }
            let image = load_png(&root.join(f[0]))?;
            let inner = PixelBox::new(num[0], num[1], num[2], num[3]);
            if !inner.fits_within(image.height(), image.width()) {
                return Err(fail(line_no, format!("inner box {inner:?} outside the patch")));
            }
            patches.push(Patch { image, production: f[1].into(), design: f[2].into(), detail, inner });
        }
        Ok(Corpus { patches })
    }
}
