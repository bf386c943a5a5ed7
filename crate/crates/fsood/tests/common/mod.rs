#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fsood() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fsood"))
}

pub fn run(args: &[&str]) -> Output {
    fsood().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Axis-aligned quad line in DOTA order.
pub fn quad(x0: f64, y0: f64, x1: f64, y1: f64, category: &str, difficult: u8) -> String {
    format!("{x0} {y0} {x1} {y0} {x1} {y1} {x0} {y1} {category} {difficult}")
}

pub const SPLIT: &str = r#"{"categories": ["car", "boat", "tree"], "novel": ["tree"]}"#;

/// Three 64×48 RGB images with checkerboard texture and a handful of boxes.
pub fn dataset(root: &Path) -> PathBuf {
    let labels = root.join("labelTxt");
    let images = root.join("images");
    fs::create_dir_all(&labels).unwrap();
    fs::create_dir_all(&images).unwrap();
    let files = [
        (
            "a",
            vec![
                quad(2.0, 2.0, 14.0, 10.0, "car", 0),
                quad(20.0, 4.0, 30.0, 20.0, "car", 0),
                quad(40.0, 10.0, 60.0, 30.0, "tree", 0),
            ],
        ),
        (
            "b",
            vec![
                quad(5.0, 5.0, 25.0, 15.0, "boat", 0),
                quad(30.0, 30.0, 50.0, 44.0, "car", 1),
                quad(1.0, 20.0, 12.0, 40.0, "boat", 0),
            ],
        ),
        ("c", vec![quad(10.0, 10.0, 30.0, 30.0, "tree", 0), quad(35.0, 5.0, 55.0, 20.0, "car", 0)]),
    ];
    for (name, lines) in files {
        let text = format!("imagesource:synthetic\ngsd:0.5\n{}\n", lines.join("\n"));
        fs::write(labels.join(format!("{name}.txt")), text).unwrap();
        let img = image::RgbImage::from_fn(64, 48, |x, y| {
            let v = if (x / 2 + y / 2) % 2 == 0 { 220 } else { 30 };
            image::Rgb([v, (x * 4) as u8, (y * 5) as u8])
        });
        img.save(images.join(format!("{name}.png"))).unwrap();
    }
    fs::write(root.join("split.json"), SPLIT).unwrap();
    root.to_path_buf()
}
