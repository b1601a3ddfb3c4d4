#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = "\
# small enough for tests
input_size = 64x64
backbone_widths = 4,4,8,8
head_channels = 4
tower_depth = 1
level_ranges = 0:16,16:32,32:inf
steps = 3
batch_size = 2
warmup_steps = 1
synth_count = 6
synth_size = 64x64
synth_object_size = 16,24
";

pub fn fsd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch fsd")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let o = fsd(dir, args);
    assert_eq!(
        code(&o),
        0,
        "fsd {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

/// Directories of PNG frames standing in for videos.
pub fn make_videos(root: &Path, videos: usize, frames: usize) -> PathBuf {
    let dir = root.join("videos");
    for v in 0..videos {
        let vd = dir.join(format!("clip{v}"));
        std::fs::create_dir_all(&vd).unwrap();
        for f in 0..frames {
            let img = image::RgbImage::from_fn(40, 30, |x, y| {
                image::Rgb([(x * 6) as u8, (y * 8) as u8, (v * 50 + f * 20) as u8])
            });
            img.save(vd.join(format!("f{f:03}.png"))).unwrap();
        }
    }
    dir
}

/// Relative file path to contents for every file under `dir`.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
