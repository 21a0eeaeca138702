//! Minimal SVG line charts of TPR/TNR curves — estimated dashed, truth
//! solid — with no drawing dependency. Coordinates are emitted at fixed 0.1px
//! precision so identical curves always produce identical bytes.

use std::fs;
use std::path::Path;

use crate::curves::PerfCurve;
use crate::error::Result;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 62.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 42.0;
const BOTTOM: f64 = 46.0;

const TPR_COLOR: &str = "#1f6fb4";
const TNR_COLOR: &str = "#c4442a";

struct Frame {
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, d: f64) -> f64 {
        LEFT + (d - self.lo) / (self.hi - self.lo) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        // y grows downward; v=1 sits at the top of the plot area
        TOP + (1.0 - v) * (HEIGHT - TOP - BOTTOM)
    }
}

fn polyline(out: &mut String, frame: &Frame, grid_values: &[f64], ys: &[f64], color: &str, dashed: bool) {
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{} points=\"",
        if dashed { " stroke-dasharray=\"7 4\"" } else { "" }
    ));
    for (k, &d) in grid_values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{:.1},{:.1}", frame.x(d), frame.y(ys[k])));
    }
    out.push_str("\"/>\n");
}

fn legend_entry(out: &mut String, x: f64, y: f64, color: &str, dashed: bool, label: &str) {
    out.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"1.8\"{}/>\n",
        x,
        y,
        x + 26.0,
        y,
        if dashed { " stroke-dasharray=\"7 4\"" } else { "" }
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#333\">{label}</text>\n",
        x + 31.0,
        y + 3.5
    ));
}

/// Renders the estimated curves (dashed) and, when given, the true curves
/// (solid) into a standalone SVG document.
pub fn curve_svg(estimated: &PerfCurve, truth: Option<&PerfCurve>, title: &str) -> String {
    let frame = Frame { lo: estimated.grid.lo, hi: estimated.grid.hi };
    let values = estimated.grid.values();
    let mut out = String::with_capacity(16 * 1024);
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"15\" fill=\"#111\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));

    // axes and gridlines
    for k in 0..=4 {
        let v = k as f64 * 0.25;
        let y = frame.y(v);
        out.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\" stroke-width=\"1\"/>\n",
            WIDTH - RIGHT
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#555\" text-anchor=\"end\">{v:.2}</text>\n",
            LEFT - 7.0,
            y + 3.5
        ));
    }
    let n_xticks = 5;
    for k in 0..=n_xticks {
        let d = frame.lo + (frame.hi - frame.lo) * k as f64 / n_xticks as f64;
        let x = frame.x(d);
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{TOP}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#eee\" stroke-width=\"1\"/>\n",
            HEIGHT - BOTTOM
        ));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#555\" text-anchor=\"middle\">{d:.1}</text>\n",
            HEIGHT - BOTTOM + 16.0
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n",
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#333\" text-anchor=\"middle\">distance threshold</text>\n",
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 10.0
    ));

    if let Some(t) = truth {
        polyline(&mut out, &frame, &values, &t.tpr, TPR_COLOR, false);
        polyline(&mut out, &frame, &values, &t.tnr, TNR_COLOR, false);
    }
    polyline(&mut out, &frame, &values, &estimated.tpr, TPR_COLOR, true);
    polyline(&mut out, &frame, &values, &estimated.tnr, TNR_COLOR, true);

    let lx = WIDTH - RIGHT - 170.0;
    let mut ly = TOP + 14.0;
    legend_entry(&mut out, lx, ly, TPR_COLOR, true, "TPR estimated");
    ly += 16.0;
    legend_entry(&mut out, lx, ly, TNR_COLOR, true, "TNR estimated");
    if truth.is_some() {
        ly += 16.0;
        legend_entry(&mut out, lx, ly, TPR_COLOR, false, "TPR true");
        ly += 16.0;
        legend_entry(&mut out, lx, ly, TNR_COLOR, false, "TNR true");
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_curve_svg(
    path: &Path,
    estimated: &PerfCurve,
    truth: Option<&PerfCurve>,
    title: &str,
) -> Result<()> {
    fs::write(path, curve_svg(estimated, truth, title))?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{exact_curves, ThresholdGrid};
    use crate::embedding::circle_set;

    #[test]
    fn svg_structure_and_determinism() {
        let set = circle_set(&[0.0, 12.0, 100.0, 115.0], &[0, 0, 1, 1]);
        let curve = exact_curves(&set, ThresholdGrid::default_unit_sphere()).unwrap();
        let a = curve_svg(&curve, Some(&curve), "demo <1>");
        let b = curve_svg(&curve, Some(&curve), "demo <1>");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 4);
        assert!(a.contains("&lt;1&gt;"), "title is escaped");
        let est_only = curve_svg(&curve, None, "demo");
        assert_eq!(est_only.matches("<polyline").count(), 2);
    }
}
