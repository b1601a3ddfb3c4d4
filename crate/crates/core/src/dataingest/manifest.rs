//! Line-delimited manifests.
//!
//! ```text
//! # fsd-manifest v1 name=<name> split=<train|test|all>
//! image_id,path,width,height,class,cx,cy,w,h;class,cx,cy,w,h
//! ```
//!
//! Relative image paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boxmetrics::{BBox, Category, LabeledBox};
use crate::error::{Error, Result};
use crate::util::write_atomic;

const HEADER: &str = "# fsd-manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::All => "all",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::Ingest(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub annotations: Vec<LabeledBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub split: Split,
    pub records: Vec<ImageRecord>,
    /// Directory relative paths resolve against; not serialized.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(name: impl Into<String>, split: Split, records: Vec<ImageRecord>) -> Self {
        Self {
            name: name.into(),
            split,
            records,
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, record: &ImageRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            validate_record(r)?;
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::Ingest(format!("duplicate image id {:?}", r.image_id)));
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> crate::boxmetrics::BoxesByImage {
        self.records
            .iter()
            .map(|r| (r.image_id.clone(), r.annotations.clone()))
            .collect()
    }

    pub fn to_text(&self) -> Result<String> {
        self.validate()?;
        if self.name.contains(char::is_whitespace) {
            return Err(Error::Ingest(format!("manifest name {:?} contains whitespace", self.name)));
        }
        let mut s = format!("{HEADER} name={} split={}\n", self.name, self.split);
        for r in &self.records {
            s.push_str(&format_line(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty manifest".into()))?;
        let rest = header
            .strip_prefix(HEADER)
            .ok_or_else(|| err(1, format!("expected header {HEADER:?}")))?;
        let mut name = None;
        let mut split = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("name", v)) => name = Some(v.to_string()),
                Some(("split", v)) => split = Some(v.parse::<Split>().map_err(|e| err(1, e.to_string()))?),
                _ => return Err(err(1, format!("unknown header field {kv:?}"))),
            }
        }
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let r = parse_line(line).map_err(|e| err(i + 1, e.to_string()))?;
            if !seen.insert(r.image_id.clone()) {
                return Err(err(i + 1, format!("duplicate image id {:?}", r.image_id)));
            }
            records.push(r);
        }
        Ok(Self {
            name: name.ok_or_else(|| err(1, "missing name".into()))?,
            split: split.ok_or_else(|| err(1, "missing split".into()))?,
            records,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }
}

fn validate_record(r: &ImageRecord) -> Result<()> {
    if r.image_id.is_empty() || r.image_id.contains([',', ';', '\n']) {
        return Err(Error::Ingest(format!("bad image id {:?}", r.image_id)));
    }
    if r.width == 0 || r.height == 0 {
        return Err(Error::Ingest(format!("{}: zero image size", r.image_id)));
    }
    for a in &r.annotations {
        if a.image_id != r.image_id {
            return Err(Error::Ingest(format!("{}: annotation tagged {:?}", r.image_id, a.image_id)));
        }
        if a.bbox.clip(r.width as f64, r.height as f64).is_none() {
            return Err(Error::Ingest(format!("{}: annotation outside the image", r.image_id)));
        }
    }
    Ok(())
}

fn format_line(r: &ImageRecord) -> Result<String> {
    let path = r
        .path
        .to_str()
        .filter(|p| !p.contains([',', '\n']))
        .ok_or_else(|| Error::Ingest(format!("unserializable path {:?}", r.path)))?;
    let anns: Vec<String> = r
        .annotations
        .iter()
        .map(|a| {
            format!(
                "{},{:.6},{:.6},{:.6},{:.6}",
                a.category,
                a.bbox.cx(),
                a.bbox.cy(),
                a.bbox.w(),
                a.bbox.h()
            )
        })
        .collect();
    Ok(format!("{},{},{},{},{}", r.image_id, path, r.width, r.height, anns.join(";")))
}

fn parse_line(line: &str) -> Result<ImageRecord> {
    let mut parts = line.splitn(5, ',');
    let mut next = |what: &str| {
        parts
            .next()
            .map(str::trim)
            .ok_or_else(|| Error::Ingest(format!("missing {what}")))
    };
    let image_id = next("image id")?.to_string();
    let path = PathBuf::from(next("path")?);
    let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Ingest(format!("bad dimension {s:?}")));
    let width = dim(next("width")?)?;
    let height = dim(next("height")?)?;
    let anns = parts.next().unwrap_or("").trim();
    let mut annotations = Vec::new();
    if !anns.is_empty() {
        for a in anns.split(';') {
            let f: Vec<&str> = a.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Ingest(format!("annotation {a:?} needs 5 fields")));
            }
            let category: Category = f[0].parse()?;
            let n = |s: &str| s.parse::<f64>().map_err(|_| Error::Ingest(format!("bad number {s:?}")));
            let bbox = BBox::new(n(f[1])?, n(f[2])?, n(f[3])?, n(f[4])?)?;
            annotations.push(LabeledBox::ground_truth(image_id.clone(), category, bbox));
        }
    }
    let r = ImageRecord {
        image_id,
        path,
        width,
        height,
        annotations,
    };
    validate_record(&r)?;
    Ok(r)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    write_atomic(path, manifest.to_text()?.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        let rec = |id: &str, anns: Vec<(Category, [f64; 4])>| ImageRecord {
            image_id: id.into(),
            path: PathBuf::from(format!("images/{id}.png")),
            width: 64,
            height: 48,
            annotations: anns
                .into_iter()
                .map(|(c, b)| LabeledBox::ground_truth(id, c, BBox::new(b[0], b[1], b[2], b[3]).unwrap()))
                .collect(),
        };
        Manifest::new(
            "demo",
            Split::All,
            vec![
                rec("a", vec![(Category::Fire, [10.0, 10.0, 4.0, 6.0]), (Category::Smoke, [30.5, 20.0, 10.0, 8.25])]),
                rec("b", vec![]),
            ],
        )
    }

    #[test]
    fn text_round_trip() {
        let m = sample();
        let text = m.to_text().unwrap();
        let back = Manifest::parse(&text, Path::new("m.txt")).unwrap();
        assert_eq!(back.records, m.records);
        assert_eq!(back.name, "demo");
        assert_eq!(back.split, Split::All);
    }

    #[test]
    fn unknown_class_reports_line() {
        let text = "# fsd-manifest v1 name=x split=all\na,p.png,10,10,fire,5,5,2,2\nb,q.png,10,10,person,5,5,2,2\n";
        match Manifest::parse(text, Path::new("m.txt")).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("person"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn negative_image_is_valid() {
        let text = "# fsd-manifest v1 name=x split=test\na,p.png,10,10,\n";
        let m = Manifest::parse(text, Path::new("m.txt")).unwrap();
        assert!(m.records[0].annotations.is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "# fsd-manifest v1 name=x split=all\na,p.png,10,10,\na,q.png,10,10,\n";
        assert!(Manifest::parse(text, Path::new("m.txt")).is_err());
    }
}
