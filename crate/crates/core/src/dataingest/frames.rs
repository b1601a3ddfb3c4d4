//! Video-to-frame extraction with seeded random retention.
//!
//! A video is either an animated GIF or a directory of frame images (sorted
//! by file name). Every frame is decoded, then a seeded uniform sample
//! without replacement keeps the retention budget; survivors stay in time
//! order.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use image::codecs::gif::GifDecoder;
use image::{AnimationDecoder, RgbImage};
use rand::seq::index::sample;

use super::manifest::ImageRecord;
use crate::error::{Error, Result};
use crate::util::{png_bytes, rng_for, write_atomic};

const FRAME_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

enum Source {
    Gif(Vec<RgbImage>),
    Dir(Vec<PathBuf>),
}

impl Source {
    fn open(video: &Path) -> Result<Self> {
        if video.is_dir() {
            let mut frames: Vec<PathBuf> = std::fs::read_dir(video)
                .map_err(|e| Error::io(video, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            frames.sort();
            if frames.is_empty() {
                return Err(Error::Ingest(format!("{}: no frame images", video.display())));
            }
            return Ok(Source::Dir(frames));
        }
        let file = File::open(video).map_err(|e| Error::io(video, e))?;
        let undecodable = |e: image::ImageError| Error::Ingest(format!("{}: cannot decode video: {e}", video.display()));
        let decoder = GifDecoder::new(BufReader::new(file)).map_err(undecodable)?;
        let frames = decoder.into_frames().collect_frames().map_err(undecodable)?;
        if frames.is_empty() {
            return Err(Error::Ingest(format!("{}: video has no frames", video.display())));
        }
        Ok(Source::Gif(
            frames
                .into_iter()
                .map(|f| image::DynamicImage::ImageRgba8(f.into_buffer()).to_rgb8())
                .collect(),
        ))
    }

    fn len(&self) -> usize {
        match self {
            Source::Gif(f) => f.len(),
            Source::Dir(f) => f.len(),
        }
    }
}

/// Number of frames in `video`.
pub fn count_frames(video: &Path) -> Result<usize> {
    Ok(Source::open(video)?.len())
}

/// Frame indices kept for a video of `frames` frames: all of them when the
/// budget allows, otherwise a seeded uniform sample in ascending order.
pub fn select_frames(frames: usize, budget: usize, seed: u64, key: &str) -> Vec<usize> {
    if budget >= frames {
        return (0..frames).collect();
    }
    let mut rng = rng_for(seed, &format!("frames:{key}"));
    let mut idx = sample(&mut rng, frames, budget).into_vec();
    idx.sort_unstable();
    idx
}

fn stem(video: &Path) -> Result<String> {
    video
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.replace([',', ';', ' '], "_"))
        .ok_or_else(|| Error::Ingest(format!("{}: unusable video name", video.display())))
}

/// Extracts up to `budget` frames, written as PNGs under `out_dir/frames`.
/// Record paths are relative to `out_dir`.
pub fn extract_frames(video: &Path, budget: usize, seed: u64, out_dir: &Path) -> Result<Vec<ImageRecord>> {
    if budget == 0 {
        return Err(Error::Config("frame budget must be at least 1".into()));
    }
    let source = Source::open(video)?;
    let key = stem(video)?;
    let keep = select_frames(source.len(), budget, seed, &key);
    let mut records = Vec::with_capacity(keep.len());
    for i in keep {
        let image_id = format!("{key}_f{i:06}");
        let frame = match &source {
            Source::Gif(frames) => frames[i].clone(),
            Source::Dir(paths) => image::open(&paths[i])
                .map_err(|e| Error::Ingest(format!("{}: {e}", paths[i].display())))?
                .to_rgb8(),
        };
        let path = PathBuf::from("frames").join(format!("{image_id}.png"));
        let (width, height) = (frame.width() as usize, frame.height() as usize);
        write_atomic(&out_dir.join(&path), &png_bytes(&frame.into())?)?;
        records.push(ImageRecord {
            image_id,
            path,
            width,
            height,
            annotations: Vec::new(),
        });
    }
    Ok(records)
}

/// Splits `total` across videos in proportion to their frame counts by the
/// largest-remainder rule, never exceeding a video's own count. Ties go to
/// the earlier video.
pub fn allocate_budget(frame_counts: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = frame_counts.iter().sum();
    if total >= sum {
        return frame_counts.to_vec();
    }
    let mut alloc: Vec<usize> = frame_counts.iter().map(|&n| n * total / sum).collect();
    let mut rema: Vec<(usize, usize)> = frame_counts.iter().enumerate().map(|(i, &n)| (n * total % sum, i)).collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - alloc.iter().sum::<usize>();
    for (_, i) in rema {
        if left == 0 {
            break;
        }
        if alloc[i] < frame_counts[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Extracts frames from several videos so that exactly
/// `min(total_budget, total frames)` are retained overall.
pub fn extract_videos(videos: &[PathBuf], total_budget: usize, seed: u64, out_dir: &Path) -> Result<Vec<ImageRecord>> {
    let counts = videos.iter().map(|v| count_frames(v)).collect::<Result<Vec<_>>>()?;
    let alloc = allocate_budget(&counts, total_budget);
    let mut out = Vec::new();
    for (v, n) in videos.iter().zip(alloc) {
        if n > 0 {
            out.extend(extract_frames(v, n, seed, out_dir)?);
        }
    }
    Ok(out)
}

/// Videos under `dir` in name order: `.gif` files and frame directories.
pub fn list_videos(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_gif = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("gif"));
        if path.is_dir() || is_gif {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Ingest(format!("no videos found in {}", dir.display())));
    }
    Ok(out)
}
