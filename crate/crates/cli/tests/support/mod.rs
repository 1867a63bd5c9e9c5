//! Shared harness: synthetic inputs and an end-to-end pipeline run.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use featdistill_cli::RunManifest;
use image::{Rgb, RgbImage};
use serde_json::Value;

pub fn cli(args: &[&str]) -> i32 {
    featdistill_cli::dispatch(std::iter::once("featdistill").chain(args.iter().copied()))
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("run.json")).unwrap()).unwrap()
}

pub fn report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

pub fn checksum_of(records: &[featdistill_cli::FileRecord], role: &str) -> String {
    records.iter().find(|r| r.role == role).unwrap_or_else(|| panic!("no `{role}` record")).checksum.clone()
}

/// Image with a saturated blob on white; roughly half the 32-pixel tiles keep.
pub fn write_slide(path: &Path, w: u32, h: u32, hue: u8) {
    let img = RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - w as f64 * 0.4, y as f64 - h as f64 * 0.5);
        if dx * dx + dy * dy < (w.min(h) as f64 * 0.45).powi(2) {
            Rgb([180u8.wrapping_add((x % 7) as u8), 40 + hue, 120 + (y % 5) as u8])
        } else {
            Rgb([248, 248, 248])
        }
    });
    let format = if path.extension().is_some_and(|e| e == "ppm") {
        image::ImageFormat::Pnm
    } else {
        image::ImageFormat::Png
    };
    img.save_with_format(path, format).unwrap();
}

/// Deterministic pseudo-random value in [-1, 1) from two integers.
pub fn hash_unit(a: u64, b: u64) -> f64 {
    let mut h = a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    h ^= h >> 31;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Student rows `d_s` wide and teacher rows `Z_s·A` (`d_t` wide) for the ids.
pub fn write_embedding_csvs(ids: &[(String, String)], d_s: usize, d_t: usize, student: &Path, teacher: &Path) {
    let header = |d: usize| {
        let mut h = "sample_id,bag_id,label,center_id,tissue_class".to_string();
        for j in 0..d {
            write!(h, ",v{j}").unwrap();
        }
        h + "\n"
    };
    let mut s = header(d_s);
    let mut t = header(d_t);
    for (i, (id, bag)) in ids.iter().enumerate() {
        let z: Vec<f64> = (0..d_s).map(|j| hash_unit(i as u64, j as u64)).collect();
        let label = usize::from(z[0] > 0.0);
        let meta = format!("{id},{bag},{label},c{},{}", i % 3, label);
        s.push_str(&meta);
        t.push_str(&meta);
        for v in &z {
            write!(s, ",{v}").unwrap();
        }
        for k in 0..d_t {
            let v: f64 = (0..d_s).map(|j| z[j] * hash_unit(1000 + j as u64, k as u64)).sum();
            write!(t, ",{v}").unwrap();
        }
        s.push('\n');
        t.push('\n');
    }
    fs::write(student, s).unwrap();
    fs::write(teacher, t).unwrap();
}

pub struct Pipeline {
    pub tile: PathBuf,
    pub student: PathBuf,
    pub teacher: PathBuf,
    pub distill: PathBuf,
    pub cka: PathBuf,
    pub knn: PathBuf,
    pub robustness: PathBuf,
}

/// tile -> ingest (two sets) -> distill -> cka, plus eval-knn and
/// robustness, all rooted at `root/<tag>`; inputs are created once in `root`.
pub fn run_pipeline(root: &Path, tag: &str) -> Pipeline {
    let inputs = root.join("inputs");
    if !inputs.exists() {
        fs::create_dir_all(&inputs).unwrap();
        write_slide(&inputs.join("slideA.png"), 256, 192, 0);
        write_slide(&inputs.join("slideB.ppm"), 192, 256, 30);
    }
    let base = root.join(tag);
    let out = |n: &str| base.join(n);
    let pl = Pipeline {
        tile: out("tile"),
        student: out("student"),
        teacher: out("teacher"),
        distill: out("distill"),
        cka: out("cka"),
        knn: out("knn"),
        robustness: out("robustness"),
    };
    assert_eq!(
        cli(&[
            "tile", "--input", p(&inputs.join("slideA.png")), p(&inputs.join("slideB.ppm")),
            "--tile", "32", "--crop", "24", "--n-augment", "2", "--p-blur", "0.5",
            "--seed", "5", "--out", p(&pl.tile),
        ]),
        0
    );
    let tiles = report(&pl.tile);
    let ids: Vec<(String, String)> = tiles["result"]["tiles"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["sample_id"].as_str().unwrap().to_string(), t["bag_id"].as_str().unwrap().to_string()))
        .collect();
    assert!(ids.len() >= 40, "only {} tiles", ids.len());

    let (s_csv, t_csv) = (base.join("student.csv"), base.join("teacher.csv"));
    fs::create_dir_all(&base).unwrap();
    write_embedding_csvs(&ids, 6, 4, &s_csv, &t_csv);
    let tiles_report = pl.tile.join("report.json");
    for (csv, dir, prov) in [(&s_csv, &pl.student, "student@20x"), (&t_csv, &pl.teacher, "teacher@20x")] {
        assert_eq!(
            cli(&[
                "ingest", "--input", p(csv), "--tiles", p(&tiles_report), "--class-names", "neg,pos",
                "--provenance", prov, "--out", p(dir),
            ]),
            0
        );
    }
    assert_eq!(
        cli(&[
            "distill", "--student", p(&pl.student.join("set")), "--teacher", p(&pl.teacher.join("set")),
            "--total-steps", "150", "--batch-size", "16", "--lr-start", "1e-2", "--lr-end", "1e-4",
            "--student-arch", "mlp:8", "--project", "--seed", "3", "--threads", "2", "--out", p(&pl.distill),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "cka", "--x", p(&pl.distill.join("projected")), "--y", p(&pl.teacher.join("set")),
            "--n-subsamples", "4", "--subsample-size", "20", "--seed", "8", "--out", p(&pl.cka),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "eval-knn", "--input", p(&pl.student.join("set")), "--k", "3", "--n-repeats", "4",
            "--seed", "2", "--out", p(&pl.knn),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "robustness", "--input", p(&pl.student.join("set")), "--per-class", "10", "--k-neighbors", "3",
            "--seed", "4", "--out", p(&pl.robustness),
        ]),
        0
    );
    pl
}

/// Relative path -> bytes for every file under `dir`, with `run.json`
/// durations zeroed.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&path).unwrap();
            if path.file_name().unwrap() == "run.json" {
                let mut m: RunManifest = serde_json::from_slice(&bytes).unwrap();
                m.duration_ms = 0;
                bytes = serde_json::to_vec(&m).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
    out
}
