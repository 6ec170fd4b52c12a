//! Learning-curve plots as self-contained SVG: one median line plus an
//! interquartile band per series, shared axes, and a legend.
//!
//! The renderer is deliberately small and deterministic — same input, same
//! bytes — so plots can be regenerated and diffed like any other artifact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::CsvCurve;

/// One labeled percentile-band curve.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub steps: Vec<u64>,
    pub prc_25: Vec<f64>,
    pub prc_50: Vec<f64>,
    pub prc_75: Vec<f64>,
}

impl PlotSeries {
    pub fn new(
        label: impl Into<String>,
        steps: Vec<u64>,
        prc_25: Vec<f64>,
        prc_50: Vec<f64>,
        prc_75: Vec<f64>,
    ) -> Result<Self> {
        let series = PlotSeries { label: label.into(), steps, prc_25, prc_50, prc_75 };
        series.validate()?;
        Ok(series)
    }

    pub fn from_curve(label: impl Into<String>, curve: CsvCurve) -> Result<Self> {
        PlotSeries::new(label, curve.steps, curve.prc_25, curve.prc_50, curve.prc_75)
    }

    fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::invalid(format!("series '{}' is empty", self.label)));
        }
        let n = self.steps.len();
        if self.prc_25.len() != n || self.prc_50.len() != n || self.prc_75.len() != n {
            return Err(Error::invalid(format!(
                "series '{}' has ragged columns ({} steps, {}/{}/{} percentile values)",
                self.label,
                n,
                self.prc_25.len(),
                self.prc_50.len(),
                self.prc_75.len()
            )));
        }
        Ok(())
    }
}

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 700.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 452.0;
const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

/// Renders the series into an SVG document. `y_cap` fixes the top of the
/// y axis (steps-to-completion); values beyond it are drawn at the cap.
pub fn render_svg(series: &[PlotSeries], y_cap: f64) -> Result<String> {
    if series.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    if !(y_cap > 0.0) {
        return Err(Error::invalid(format!("y axis cap must be positive, got {y_cap}")));
    }
    for s in series {
        s.validate()?;
    }
    let steps = &series[0].steps;
    for s in &series[1..] {
        if s.steps != *steps {
            return Err(Error::invalid(format!(
                "series '{}' and '{}' disagree on the step axis",
                series[0].label, s.label
            )));
        }
    }

    let max_step = *steps.last().expect("validated non-empty") as f64;
    let map_x = |step: u64| -> f64 {
        if max_step == 0.0 {
            LEFT
        } else {
            LEFT + (step as f64 / max_step) * (RIGHT - LEFT)
        }
    };
    let map_y = |v: f64| -> f64 {
        let v = v.clamp(0.0, y_cap);
        BOTTOM - (v / y_cap) * (BOTTOM - TOP)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Gridlines and ticks: quarters of each axis.
    for k in 0..=4u32 {
        let frac = f64::from(k) / 4.0;
        let x = LEFT + frac * (RIGHT - LEFT);
        let y = BOTTOM - frac * (BOTTOM - TOP);
        let step_label = (frac * max_step).round() as u64;
        let value_label = frac * y_cap;
        svg.push_str(&format!(
            "  <line x1=\"{x:.1}\" y1=\"{TOP}\" x2=\"{x:.1}\" y2=\"{BOTTOM}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "  <line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{RIGHT}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
             fill=\"#333333\">{step_label}</text>\n",
            BOTTOM + 18.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\" \
             fill=\"#333333\">{value_label:.0}</text>\n",
            LEFT - 8.0,
            y + 4.0
        ));
    }

    // Bands first so every median line stays visible.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (k, &step) in s.steps.iter().enumerate() {
            points.push_str(&format!("{:.1},{:.1} ", map_x(step), map_y(s.prc_25[k])));
        }
        for (k, &step) in s.steps.iter().enumerate().rev() {
            points.push_str(&format!("{:.1},{:.1} ", map_x(step), map_y(s.prc_75[k])));
        }
        svg.push_str(&format!(
            "  <polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
            points.trim_end()
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .steps
            .iter()
            .enumerate()
            .map(|(k, &step)| format!("{:.1},{:.1}", map_x(step), map_y(s.prc_50[k])))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
    }

    // Axes on top of the grid.
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" \
         stroke=\"#000000\" stroke-width=\"1.5\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" \
         stroke=\"#000000\" stroke-width=\"1.5\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"#000000\">Training Steps</text>\n",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 42.0
    ));
    svg.push_str(&format!(
        "  <text x=\"20\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"#000000\" transform=\"rotate(-90 20 {:.1})\">Steps to Task Completion</text>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    ));

    // Legend in the right margin.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 16.0 + 24.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>\n",
            RIGHT + 16.0,
            RIGHT + 44.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" fill=\"#000000\">{}</text>\n",
            RIGHT + 50.0,
            y + 4.0,
            escape_text(&s.label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders and writes the plot in one go.
pub fn emit_plot(series: &[PlotSeries], y_cap: f64, path: &Path) -> Result<()> {
    let svg = render_svg(series, y_cap)?;
    fs::write(path, svg)?;
    Ok(())
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, steps: Vec<u64>, medians: Vec<f64>) -> PlotSeries {
        let lo: Vec<f64> = medians.iter().map(|v| v - 1.0).collect();
        let hi: Vec<f64> = medians.iter().map(|v| v + 1.0).collect();
        PlotSeries::new(label, steps, lo, medians, hi).unwrap()
    }

    #[test]
    fn renders_lines_bands_axes_and_legend() {
        let svg = render_svg(
            &[
                series("TL-CD", vec![100, 200, 300], vec![50.0, 20.0, 10.0]),
                series("No TL-CD", vec![100, 200, 300], vec![900.0, 700.0, 300.0]),
            ],
            1000.0,
        )
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("Training Steps"));
        assert!(svg.contains("Steps to Task Completion"));
        assert!(svg.contains(">TL-CD<"));
        assert!(svg.contains(">No TL-CD<"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = [series("a", vec![10, 20], vec![5.0, 3.0])];
        assert_eq!(render_svg(&s, 100.0).unwrap(), render_svg(&s, 100.0).unwrap());
    }

    #[test]
    fn values_beyond_the_cap_are_drawn_at_the_cap() {
        let over = [series("a", vec![10, 20], vec![5000.0, 3.0])];
        let capped = [series("a", vec![10, 20], vec![101.0, 3.0])];
        // Whole band (lo/median/hi) sits at or beyond the cap either way.
        let a = render_svg(&over, 100.0).unwrap();
        let b = render_svg(&capped, 100.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_rejects_bad_series() {
        assert!(render_svg(&[], 100.0).is_err());
        assert!(PlotSeries::new("x", vec![], vec![], vec![], vec![]).is_err());
        assert!(PlotSeries::new("x", vec![1], vec![1.0, 2.0], vec![1.0], vec![1.0]).is_err());
        let a = series("a", vec![10, 20], vec![5.0, 3.0]);
        let b = series("b", vec![10, 30], vec![5.0, 3.0]);
        assert!(render_svg(&[a.clone(), b], 100.0).is_err());
        assert!(render_svg(&[a], 0.0).is_err());
    }

    #[test]
    fn emit_writes_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        emit_plot(&[series("a", vec![10], vec![5.0])], 100.0, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    }
}
