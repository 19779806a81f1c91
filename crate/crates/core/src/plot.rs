//! Hypnogram rendering as SVG and as plain text.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::{check_labels, Stage, NUM_STAGES};

/// Stages from top to bottom of a hypnogram panel.
pub const DISPLAY_ORDER: [Stage; NUM_STAGES] = [Stage::W, Stage::Rem, Stage::N1, Stage::N2, Stage::N3];

fn display_row(stage: usize) -> usize {
    DISPLAY_ORDER.iter().position(|s| s.index() == stage).expect("checked label")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotStyle {
    /// Pixels per 30 s epoch.
    pub epoch_px: f64,
    pub lane_height_px: f64,
    pub truth_color: String,
    pub raw_color: String,
    pub corrected_color: String,
    pub grid_color: String,
    /// Maximum columns of the text rendering; longer records are binned.
    pub text_width: usize,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            epoch_px: 1.0,
            lane_height_px: 90.0,
            truth_color: "#222222".into(),
            raw_color: "#d62728".into(),
            corrected_color: "#1f77b4".into(),
            grid_color: "#dddddd".into(),
            text_width: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneKind {
    Truth,
    Raw,
    Corrected,
}

impl LaneKind {
    pub fn title(self) -> &'static str {
        match self {
            LaneKind::Truth => "ground truth",
            LaneKind::Raw => "raw prediction",
            LaneKind::Corrected => "corrected prediction",
        }
    }

    fn color(self, style: &PlotStyle) -> &str {
        match self {
            LaneKind::Truth => &style.truth_color,
            LaneKind::Raw => &style.raw_color,
            LaneKind::Corrected => &style.corrected_color,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub kind: LaneKind,
    pub labels: Vec<usize>,
}

fn check_lanes(lanes: &[Lane]) -> Result<usize> {
    let Some(first) = lanes.first() else {
        return Err(Error::InvalidArgument("hypnogram needs at least one lane".into()));
    };
    for lane in lanes {
        check_labels(&lane.labels)?;
        if lane.labels.len() != first.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} has {} epochs, {} has {}",
                lane.kind.title(),
                lane.labels.len(),
                first.kind.title(),
                first.labels.len()
            )));
        }
    }
    Ok(first.labels.len())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel per lane, stacked vertically; x is the epoch index.
pub fn hypnogram_svg(title: &str, lanes: &[Lane], style: &PlotStyle) -> Result<String> {
    let epochs = check_lanes(lanes)?;
    let left = 48.0;
    let top = 24.0;
    let gap = 22.0;
    let plot_w = (epochs.max(1) as f64) * style.epoch_px;
    let width = left + plot_w + 12.0;
    let height = top + lanes.len() as f64 * (style.lane_height_px + gap) + 4.0;
    let row_h = style.lane_height_px / NUM_STAGES as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="14" font-size="12">{}</text>"#, escape(title));
    for (k, lane) in lanes.iter().enumerate() {
        let y0 = top + k as f64 * (style.lane_height_px + gap) + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="{:.1}" fill="{}">{}</text>"#,
            y0 - 3.0,
            lane.kind.color(style),
            lane.kind.title()
        );
        for (row, stage) in DISPLAY_ORDER.iter().enumerate() {
            let y = y0 + (row as f64 + 0.5) * row_h;
            let _ = writeln!(
                s,
                r#"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="0.5"/>"#,
                left + plot_w,
                style.grid_color
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 4.0,
                y + 3.0,
                stage.name()
            );
        }
        let mut d = String::new();
        for (i, &label) in lane.labels.iter().enumerate() {
            let y = y0 + (display_row(label) as f64 + 0.5) * row_h;
            let x0 = left + i as f64 * style.epoch_px;
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{x0:.2},{y:.1} H{:.2} ", x0 + style.epoch_px);
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
            d.trim_end(),
            lane.kind.color(style)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Text rendering: five rows per lane, `#` where the stage holds. When the
/// record is wider than `style.text_width` each column shows the most frequent
/// stage of its bin.
pub fn hypnogram_text(title: &str, lanes: &[Lane], style: &PlotStyle) -> Result<String> {
    let epochs = check_lanes(lanes)?;
    let width = style.text_width.max(1);
    let bin = epochs.div_ceil(width).max(1);
    let mut s = format!("{title} ({epochs} epochs, {bin} per column)\n");
    for lane in lanes {
        let columns: Vec<usize> = lane
            .labels
            .chunks(bin)
            .map(|chunk| {
                let mut counts = [0usize; NUM_STAGES];
                for &l in chunk {
                    counts[l] += 1;
                }
                // most frequent, earliest display row on ties
                DISPLAY_ORDER
                    .iter()
                    .map(|st| st.index())
                    .max_by_key(|&i| (counts[i], std::cmp::Reverse(display_row(i))))
                    .expect("five stages")
            })
            .collect();
        let _ = writeln!(s, "{}", lane.kind.title());
        for stage in DISPLAY_ORDER {
            let row: String = columns.iter().map(|&c| if c == stage.index() { '#' } else { ' ' }).collect();
            let _ = writeln!(s, "{:>4} |{}", stage.name(), row.trim_end());
        }
    }
    Ok(s)
}
