use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::raster::RasterImage;
use super::{SampleRecord, Target};
use crate::error::{Error, Result};

const HEADER: [&str; 5] = ["image", "target_kind", "target", "patient_id", "class"];

/// Reads `x,y` lines (no header). Blank lines are ignored.
pub fn read_dots_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Image { path: path.to_path_buf(), msg: format!("line {line}: {msg}") };
    let mut dots = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (x, y) = line.split_once(',').ok_or_else(|| bad(i + 1, format!("expected x,y, got {line:?}")))?;
        let parse = |v: &str| v.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        match (parse(x), parse(y)) {
            (Some(x), Some(y)) => dots.push((x, y)),
            _ => return Err(bad(i + 1, format!("expected numeric x,y, got {line:?}"))),
        }
    }
    Ok(dots)
}

pub fn write_dots_csv(path: impl AsRef<Path>, dots: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let text: String = dots.iter().map(|(x, y)| format!("{x},{y}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Row {
    line: usize,
    image: String,
    kind: String,
    target: String,
    patient: String,
    class: String,
}

fn load_row(base: &Path, row: &Row) -> Result<SampleRecord> {
    let err = |msg: String| Error::Manifest { row: row.line, msg };
    let resolve = |p: &str| -> PathBuf { base.join(p) };
    let image_path = resolve(&row.image);
    let image = RasterImage::load_png(&image_path).map_err(|e| err(e.to_string()))?;
    let target = match row.kind.as_str() {
        "class" => {
            let k: usize = row.target.parse().map_err(|_| err(format!("class target {:?} is not an index", row.target)))?;
            if !row.class.is_empty() && row.class != row.target {
                return Err(err(format!("class column {:?} disagrees with target {:?}", row.class, row.target)));
            }
            Target::Class(k)
        }
        "mask" => Target::Mask(RasterImage::load_png(resolve(&row.target)).map_err(|e| err(e.to_string()))?),
        "dots" => Target::Dots(read_dots_csv(resolve(&row.target)).map_err(|e| err(e.to_string()))?),
        other => return Err(err(format!("target_kind {other:?} is not class, mask or dots"))),
    };
    let record = SampleRecord {
        image,
        target,
        patient_id: row.patient.clone(),
        source_path: image_path.to_string_lossy().into_owned(),
    };
    record.validate().map_err(|e| err(e.to_string()))?;
    Ok(record)
}

/// Loads every row of a manifest CSV. Paths are relative to the manifest's
/// directory. Rows load in parallel; the result keeps manifest order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Manifest { row: 0, msg: format!("{other:?}") },
        })?;
    let headers = reader.headers().map_err(|e| Error::Manifest { row: 0, msg: e.to_string() })?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Manifest { row: 0, msg: format!("header must be {}, got {:?}", HEADER.join(","), headers) });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Manifest { row: line, msg: e.to_string() })?;
        let field = |k: usize| rec.get(k).unwrap_or("").to_string();
        rows.push(Row { line, image: field(0), kind: field(1), target: field(2), patient: field(3), class: field(4) });
    }
    rows.par_iter().map(|row| load_row(&base, row)).collect()
}

/// Writes images, masks and dot files under `dir` plus `dir/manifest.csv`,
/// returning the manifest path.
pub fn write_dataset(records: &[SampleRecord], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["images", "masks", "dots"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::Manifest { row: 0, msg: e.to_string() })?;
    let csv_err = |e: csv::Error| Error::Manifest { row: 0, msg: e.to_string() };
    w.write_record(HEADER).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let image = format!("images/{i:05}.png");
        r.image.save_png(dir.join(&image))?;
        let (target, class) = match &r.target {
            Target::Class(k) => (k.to_string(), k.to_string()),
            Target::Mask(m) => {
                let p = format!("masks/{i:05}.png");
                m.save_png(dir.join(&p))?;
                (p, String::new())
            }
            Target::Dots(d) => {
                let p = format!("dots/{i:05}.csv");
                write_dots_csv(dir.join(&p), d)?;
                (p, String::new())
            }
        };
        w.write_record([image.as_str(), r.target.kind(), &target, &r.patient_id, &class]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
