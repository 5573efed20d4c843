//! Minimal standalone SVG charts.

use std::fmt::Write;

use chrono::Timelike;

use super::TimelineEvent;
use crate::domain::Modality;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 64.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948"];

/// A named sequence of values, one per x label.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            values,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn plot_w() -> f64 {
    WIDTH - MARGIN_LEFT - MARGIN_RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
}

fn y_of(v: f64, max: f64) -> f64 {
    MARGIN_TOP + plot_h() * (1.0 - v / max)
}

fn nice_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.filter(|v| v.is_finite()).fold(0.0_f64, f64::max);
    if m <= 0.0 {
        1.0
    } else {
        m * 1.1
    }
}

fn open(title: &str, out: &mut String) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(
        out,
        r##"<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(max: f64, out: &mut String) {
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h();
    let _ = write!(
        out,
        r#"<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        x0 + plot_w()
    );
    for i in 0..=4 {
        let v = max * f64::from(i) / 4.0;
        let y = y_of(v, max);
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            y + 4.0,
            format_tick(v)
        );
    }
}

fn format_tick(v: f64) -> String {
    if v >= 10.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn x_labels(labels: &[String], out: &mut String) {
    if labels.is_empty() {
        return;
    }
    let step = plot_w() / labels.len() as f64;
    let every = labels.len().div_ceil(16).max(1);
    for (i, label) in labels.iter().enumerate() {
        if i % every != 0 {
            continue;
        }
        let x = MARGIN_LEFT + step * (i as f64 + 0.5);
        let y = MARGIN_TOP + plot_h() + 14.0;
        let _ = write!(
            out,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="end" transform="rotate(-40 {x:.1} {y:.1})">{}</text>"#,
            escape(label)
        );
    }
}

fn legend(series: &[Series], out: &mut String) {
    for (i, s) in series.iter().enumerate() {
        let x = MARGIN_LEFT + 8.0 + 110.0 * i as f64;
        let y = MARGIN_TOP + 4.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            out,
            r#"<rect class="legend" x="{x}" y="{y}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            x + 14.0,
            y + 9.0,
            escape(&s.name)
        );
    }
}

pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    grouped_bar_chart(title, labels, &[Series::new("", values.to_vec())])
}

/// Side-by-side bars, one group per label. A legend appears for two or more series.
pub fn grouped_bar_chart(title: &str, labels: &[String], series: &[Series]) -> String {
    let mut out = String::new();
    open(title, &mut out);
    let max = nice_max(series.iter().flat_map(|s| s.values.iter().copied()));
    axes(max, &mut out);
    if !labels.is_empty() && !series.is_empty() {
        let step = plot_w() / labels.len() as f64;
        let bar_w = step * 0.8 / series.len() as f64;
        for (si, s) in series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            for (i, &v) in s.values.iter().enumerate().take(labels.len()) {
                let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
                let x = MARGIN_LEFT + step * i as f64 + step * 0.1 + bar_w * si as f64;
                let y = y_of(v, max);
                let _ = write!(
                    out,
                    r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"><title>{}: {v}</title></rect>"#,
                    MARGIN_TOP + plot_h() - y,
                    escape(&labels[i])
                );
            }
        }
    }
    x_labels(labels, &mut out);
    if series.len() > 1 {
        legend(series, &mut out);
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per series.
pub fn line_chart(title: &str, labels: &[String], series: &[Series]) -> String {
    let mut out = String::new();
    open(title, &mut out);
    let max = nice_max(series.iter().flat_map(|s| s.values.iter().copied()));
    axes(max, &mut out);
    if !labels.is_empty() {
        let step = plot_w() / labels.len() as f64;
        for (si, s) in series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let points: Vec<String> = s
                .values
                .iter()
                .take(labels.len())
                .enumerate()
                .map(|(i, &v)| {
                    let v = if v.is_finite() { v } else { 0.0 };
                    format!(
                        "{:.2},{:.2}",
                        MARGIN_LEFT + step * (i as f64 + 0.5),
                        y_of(v, max)
                    )
                })
                .collect();
            let _ = write!(
                out,
                r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
        }
    }
    x_labels(labels, &mut out);
    legend(series, &mut out);
    out.push_str("</svg>\n");
    out
}

/// Logs of one day placed by local time of day, one row per modality.
pub fn timeline_chart(title: &str, events: &[TimelineEvent]) -> String {
    let mut out = String::new();
    open(title, &mut out);
    let rows = [Modality::Image, Modality::Text, Modality::Audio];
    let row_h = plot_h() / rows.len() as f64;
    for (ri, m) in rows.iter().enumerate() {
        let y = MARGIN_TOP + row_h * (ri as f64 + 0.5);
        let _ = write!(
            out,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#cccccc"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            MARGIN_LEFT + plot_w(),
            MARGIN_LEFT - 4.0,
            y + 4.0,
            m.as_str()
        );
    }
    for h in (0..=24).step_by(3) {
        let x = MARGIN_LEFT + plot_w() * f64::from(h) / 24.0;
        let _ = write!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{h:02}:00</text>"#,
            MARGIN_TOP + plot_h() + 16.0
        );
    }
    for e in events {
        let ri = rows.iter().position(|m| *m == e.modality).unwrap_or(0);
        let secs = e.at.time().num_seconds_from_midnight();
        let x = MARGIN_LEFT + plot_w() * f64::from(secs) / 86_400.0;
        let y = MARGIN_TOP + row_h * (ri as f64 + 0.5);
        let _ = write!(
            out,
            r#"<circle class="event" cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"><title>{}</title></circle>"#,
            PALETTE[ri],
            e.at.format("%H:%M")
        );
    }
    out.push_str("</svg>\n");
    out
}
