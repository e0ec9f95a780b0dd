//! Deterministic artifact writing: canonical JSON, run directories with
//! manifests, and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Pretty JSON with floats always printed at 17 significant digits.
struct CanonicalFormatter<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for CanonicalFormatter<'_> {
    forward!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );

    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize with sorted object keys and fixed float formatting, so equal
/// values always produce equal bytes.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // serde_json::Map is ordered by key, which sorts every object
    let tree = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter(PrettyFormatter::new()));
    tree.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Input path -> SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output name -> SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

/// `<out>/<command>-<hash prefix>/`, where the hash covers the configuration
/// and the contents of every input file.
pub struct RunDir {
    path: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    pub fn create(
        out: &Path,
        command: &str,
        config: serde_json::Value,
        inputs: BTreeMap<String, String>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let keyed = serde_json::json!({ "command": command, "config": config, "inputs": inputs, "version": env!("CARGO_PKG_VERSION") });
        let config_hash = sha256_hex(to_canonical_json(&keyed)?.as_bytes());
        let path = out.join(format!("{command}-{}", &config_hash[..12]));
        std::fs::create_dir_all(&path)?;
        Ok(RunDir {
            path,
            manifest: RunManifest {
                tool: "iaa",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                config,
                config_hash,
                seed,
                inputs,
                outputs: BTreeMap::new(),
            },
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path.join(name);
        std::fs::write(&p, text)?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_text(name, &to_canonical_json(value)?)
    }

    /// Write `run.json` and return the run directory.
    pub fn finish(self) -> Result<PathBuf> {
        std::fs::write(self.path.join("run.json"), to_canonical_json(&self.manifest)?)?;
        Ok(self.path)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open(width: f64, height: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        escape(title)
    )
}

/// Horizontal bar chart, one bar per label.
pub fn bar_chart_svg(title: &str, x_label: &str, bars: &[(String, f64)]) -> String {
    let (left, right, top, row) = (220.0, 40.0, 36.0, 18.0);
    let width = 720.0;
    let height = top + row * bars.len() as f64 + 40.0;
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let span = width - left - right;
    let mut s = svg_open(width, height, title);
    for (i, (label, value)) in bars.iter().enumerate() {
        let y = top + row * i as f64;
        let w = (value.max(0.0) / max) * span;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n<rect x=\"{left}\" y=\"{:.1}\" width=\"{w:.2}\" height=\"{:.1}\" fill=\"#4c78a8\"/>\n<text x=\"{:.1}\" y=\"{:.1}\">{value:.3}</text>",
            left - 6.0,
            y + row * 0.7,
            escape(label),
            y + 2.0,
            row - 4.0,
            left + w + 4.0,
            y + row * 0.7,
        );
    }
    let axis_y = top + row * bars.len() as f64 + 4.0;
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{axis_y:.1}\" x2=\"{:.1}\" y2=\"{axis_y:.1}\" stroke=\"black\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        left + span,
        left + span / 2.0,
        axis_y + 24.0,
        escape(x_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Scatter plot with a least-squares line.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let (width, height) = (520.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 36.0, 50.0);
    let range = |vals: Vec<f64>| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(points.iter().map(|p| p.0).collect());
    let (y0, y1) = range(points.iter().map(|p| p.1).collect());
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (width - left - right);
    let py = |y: f64| height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom);
    let mut s = svg_open(width, height, title);
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        width - left - right,
        height - top - bottom
    );
    for (x, y) in points {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#e45756\"/>", px(*x), py(*y));
    }
    if points.len() >= 2 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
            let at = |x: f64| my + slope * (x - mx);
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#4c78a8\" stroke-dasharray=\"4 3\"/>",
                px(x0),
                py(at(x0)),
                px(x1),
                py(at(x1))
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{left}\" y=\"{:.1}\">{x0:.3}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{x1:.3}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y0:.3}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y1:.3}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text transform=\"translate(14 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        height - bottom + 16.0,
        width - right,
        height - bottom + 16.0,
        left - 4.0,
        height - bottom,
        left - 4.0,
        top + 10.0,
        (left + width - right) / 2.0,
        height - 12.0,
        escape(x_label),
        (top + height - bottom) / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}
