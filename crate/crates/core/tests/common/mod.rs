#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ss_sfr::chart::{render_chart, ChartSpec};
use ss_sfr::image::{encode_gray_png, transpose, BitDepth, GrayImage};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn write_png(path: &Path, img: &GrayImage) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, encode_gray_png(img, BitDepth::Sixteen).unwrap()).unwrap();
}

/// Step and Gaussian-edge charts in both orientations.
pub fn write_chart_corpus(dir: &Path) {
    let charts = [
        ("step05", ChartSpec::step(5.0)),
        ("step10", ChartSpec::step(10.0)),
        ("gauss07", ChartSpec::gaussian(0.8, 7.0)),
    ];
    for (name, spec) in charts {
        let img = render_chart(&spec).unwrap();
        write_png(&dir.join(format!("{name}_v.png")), &img);
        write_png(&dir.join(format!("{name}_h.png")), &transpose(&img));
    }
}

/// Every file under `dir` keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}
