use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemath::PixelBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Face,
    Eye,
}

/// A box inside a frame, with its production and (when known) design.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedRegion {
    /// Frame path resolved against the manifest's directory.
    pub frame: PathBuf,
    pub region: PixelBox,
    pub kind: RegionKind,
    pub production: String,
    pub design: Option<String>,
}

/// A manifest row that parsed but failed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub regions: Vec<AnnotatedRegion>,
    pub rejected: Vec<RejectedRow>,
}

/// Reads a region manifest.
///
/// Rows are `frame, x, y, w, h, kind, production[, design]`; `#` starts a
/// comment and an optional first row naming the columns is skipped. Rows
/// that parse but reference a missing frame or a box outside it are
/// returned in `rejected` (and logged); malformed rows fail the whole file.
pub fn ingest_manifest(path: &Path) -> Result<Manifest> {
    let shown = path.display().to_string();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format { path: shown.clone(), line: 0, message: format!("{other:?}") },
        })?;
    let mut out = Manifest::default();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Format { path: shown.clone(), line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fail = |message: String| Error::Format { path: shown.clone(), line, message };
        if first && record.get(0) == Some("frame") {
            first = false;
            continue;
        }
        first = false;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if !(7..=8).contains(&record.len()) {
            return Err(fail(format!("expected 7 or 8 fields, found {}", record.len())));
        }
        let mut num = [0usize; 4];
        for (k, v) in num.iter_mut().enumerate() {
            let s = &record[k + 1];
            *v = s.parse().map_err(|_| fail(format!("field {} is not a non-negative integer: {s:?}", k + 2)))?;
        }
        let kind = match &record[5] {
            "face" => RegionKind::Face,
            "eye" => RegionKind::Eye,
            other => return Err(fail(format!("unknown region kind {other:?}"))),
        };
        let production = record[6].to_string();
        if production.is_empty() {
            return Err(fail("empty production id".into()));
        }
        let design = record.get(7).filter(|d| !d.is_empty()).map(str::to_string);
        let region = PixelBox::new(num[0], num[1], num[2], num[3]);
        let frame = base.join(&record[0]);

        let reject = |out: &mut Manifest, message: String| {
            log::warn!("{shown}:{line}: {message}");
            out.rejected.push(RejectedRow { line, message });
        };
        if region.w == 0 || region.h == 0 {
            reject(&mut out, format!("empty box {}x{}", region.w, region.h));
            continue;
        }
        let (fw, fh) = match image::image_dimensions(&frame) {
            Ok(d) => d,
            Err(e) => {
                reject(&mut out, format!("frame {} unreadable: {e}", frame.display()));
                continue;
            }
        };
        if !region.fits_within(fh as usize, fw as usize) {
            reject(&mut out, format!("box {region:?} exceeds frame {fw}x{fh}"));
            continue;
        }
        out.regions.push(AnnotatedRegion { frame, region, kind, production, design });
    }
    Ok(out)
}

/// Writes regions in manifest form, frame paths relative to `base`.
pub fn format_manifest(regions: &[AnnotatedRegion], base: &Path) -> String {
    let mut s = String::from("frame,x,y,w,h,kind,production,design\n");
    for r in regions {
        let rel = r.frame.strip_prefix(base).unwrap_or(&r.frame);
        let kind = match r.kind {
            RegionKind::Face => "face",
            RegionKind::Eye => "eye",
        };
        s.push_str(&format!(
            "{},{},{},{},{},{kind},{},{}\n",
            rel.display(),
            r.region.x,
            r.region.y,
            r.region.w,
            r.region.h,
            r.production,
            r.design.as_deref().unwrap_or("")
        ));
    }
    s
}
