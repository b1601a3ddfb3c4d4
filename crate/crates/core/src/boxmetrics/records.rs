//! Line-delimited box records: `image_id,class,cx,cy,w,h[,confidence]`.

use std::fmt::Write as _;
use std::path::Path;

use super::bbox::{BBox, Category, LabeledBox};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub fn format_record(b: &LabeledBox) -> String {
    let mut s = format!(
        "{},{},{:.6},{:.6},{:.6},{:.6}",
        b.image_id,
        b.category,
        b.bbox.cx(),
        b.bbox.cy(),
        b.bbox.w(),
        b.bbox.h()
    );
    if let Some(c) = b.confidence {
        let _ = write!(s, ",{c:.6}");
    }
    s
}

pub fn parse_record(line: &str) -> Result<LabeledBox> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 && fields.len() != 7 {
        return Err(Error::Schema(format!(
            "expected 6 or 7 fields, found {}",
            fields.len()
        )));
    }
    if fields[0].is_empty() {
        return Err(Error::Schema("empty image id".into()));
    }
    let category: Category = fields[1].parse()?;
    let num = |i: usize| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| Error::Schema(format!("bad number {:?}", fields[i])))
    };
    let bbox = BBox::new(num(2)?, num(3)?, num(4)?, num(5)?)?;
    if fields.len() == 7 {
        LabeledBox::detection(fields[0], category, bbox, num(6)?)
    } else {
        Ok(LabeledBox::ground_truth(fields[0], category, bbox))
    }
}

/// Serializes boxes one per line. Image ids must not contain separators.
pub fn to_records_string(boxes: &[LabeledBox]) -> Result<String> {
    let mut out = String::new();
    for b in boxes {
        if b.image_id.contains([',', '\n', ';']) || b.image_id.is_empty() {
            return Err(Error::Schema(format!("unserializable image id {:?}", b.image_id)));
        }
        out.push_str(&format_record(b));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_records(text: &str, path: &Path) -> Result<Vec<LabeledBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_record(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, boxes: &[LabeledBox]) -> Result<()> {
    write_atomic(path, to_records_string(boxes)?.as_bytes())
}

pub fn read_records(path: &Path) -> Result<Vec<LabeledBox>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path)
}
