//! Deterministic report bundles: CSV artifacts, a replayable JSON manifest
//! and small native SVG line charts. Re-running a manifest reproduces the
//! CSV bytes exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coins;
use crate::Result;

/// Stable fingerprint of artifact bytes (mixing hash, not cryptographic).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut acc = 0x6_1706_5726_3u64;
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        acc = coins::mix64(acc ^ u64::from_le_bytes(word));
    }
    format!("{:016x}", coins::mix64(acc ^ bytes.len() as u64))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub rows: u64,
    pub hash: String,
}

/// A named pass/fail gate carried by every experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub plan: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    pub gates: Vec<GateResult>,
}

impl Manifest {
    pub fn new(master_seed: u64, plan: serde_json::Value) -> Self {
        Self {
            tool: "percolab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            plan,
            artifacts: Vec::new(),
            gates: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Parse(e.to_string()))
    }
}

/// Writes artifacts into one output directory and records them in the
/// manifest.
pub struct ReportBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl ReportBundle {
    pub fn create(
        dir: impl Into<PathBuf>,
        master_seed: u64,
        plan: serde_json::Value,
    ) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            manifest: Manifest::new(master_seed, plan),
        })
    }

    pub fn write_artifact(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, content)?;
        self.manifest.artifacts.push(Artifact {
            name: name.to_string(),
            rows: content.lines().count().saturating_sub(1) as u64,
            hash: content_hash(content.as_bytes()),
        });
        Ok(())
    }

    pub fn add_gate(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.manifest.gates.push(GateResult {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn all_gates_pass(&self) -> bool {
        self.manifest.gates.iter().all(|g| g.pass)
    }

    pub fn finalize(&self) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| crate::Error::Parse(e.to_string()))?;
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// A single polyline series for the chart renderer.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#16a085",
];

/// Minimal self-contained SVG line chart (log-x optional).
pub fn svg_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_x: bool,
) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (64.0, 24.0, 40.0, 52.0);
    let map_x = |x: f64| if log_x { x.max(1e-300).log10() } else { x };
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(map_x(x));
            ys.push(y);
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (map_x(x) - x0) / (x1 - x0).max(1e-12) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0).max(1e-12) * (h - mt - mb);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        w / 2.0,
        title
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let xpix = ml + f * (w - ml - mr);
        let ypix = h - mb - f * (h - mt - mb);
        let xdisp = if log_x { 10f64.powf(xv) } else { xv };
        out.push_str(&format!(
            "<text x=\"{xpix}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{}</text>\n",
            h - mb + 18.0,
            trim_num(xdisp)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{}</text>\n",
            ml - 6.0,
            ypix + 4.0,
            trim_num(yv)
        ));
        out.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{ypix}\" x2=\"{}\" y2=\"{ypix}\" stroke=\"#dddddd\"/>\n",
            w - mr
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        (ml + w - mr) / 2.0,
        h - 14.0,
        x_label
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        y_label
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\" \
             font-family=\"sans-serif\">{}</text>\n",
            w - mr - 150.0,
            mt + 16.0 * i as f64,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn trim_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_distinguishes_and_is_stable() {
        let a = content_hash(b"alpha,beta\n1,2\n");
        let b = content_hash(b"alpha,beta\n1,3\n");
        assert_ne!(a, b);
        assert_eq!(a, content_hash(b"alpha,beta\n1,2\n"));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = std::env::temp_dir().join(format!("percolab-report-{}", std::process::id()));
        let mut bundle =
            ReportBundle::create(&dir, 42, serde_json::json!({"kind": "test"})).unwrap();
        bundle.write_artifact("data.csv", "a,b\n1,2\n").unwrap();
        bundle.add_gate("sanity", true, "ok");
        let path = bundle.finalize().unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(loaded.master_seed, 42);
        assert_eq!(loaded.artifacts.len(), 1);
        assert_eq!(loaded.artifacts[0].rows, 1);
        assert!(loaded.gates[0].pass);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn svg_renders_series() {
        let s = Series {
            label: "curve".into(),
            points: vec![(1.0, 0.1), (2.0, 0.5), (4.0, 0.9)],
        };
        let svg = svg_line_chart("t", "x", "y", &[s], true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
