//! Self-contained SVG line charts, no plotting dependencies.

use std::fmt::Write as _;

use crate::trace::Trace;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

struct LogAxis {
    lo: f64,
    hi: f64,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl LogAxis {
    fn new(values: impl Iterator<Item = f64>, pixel_lo: f64, pixel_hi: f64) -> Option<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        if lo == hi {
            lo /= 2.0;
            hi *= 2.0;
        }
        Some(Self {
            lo: lo.log10(),
            hi: hi.log10(),
            pixel_lo,
            pixel_hi,
        })
    }

    fn place(&self, v: f64) -> f64 {
        let t = (v.log10() - self.lo) / (self.hi - self.lo);
        self.pixel_lo + t * (self.pixel_hi - self.pixel_lo)
    }

    fn decade_ticks(&self) -> Vec<f64> {
        let lo = self.lo.floor() as i32;
        let hi = self.hi.ceil() as i32;
        (lo..=hi).map(|e| 10f64.powi(e)).collect()
    }
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    if points.is_empty() {
        return String::new();
    }
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Log-log chart of the per-phase duality gaps (averages and last played
/// pair) against the phase index.
pub fn gap_chart(trace: &Trace) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );

    let xs = trace.phases.iter().map(|p| p.t as f64);
    let ys = trace
        .phases
        .iter()
        .flat_map(|p| [p.gap_avg, p.gap_last]);
    let (Some(x_axis), Some(y_axis)) = (
        LogAxis::new(xs, MARGIN_L, WIDTH - MARGIN_R),
        LogAxis::new(ys, HEIGHT - MARGIN_B, MARGIN_T),
    ) else {
        svg.push_str("<text x=\"40\" y=\"40\">no positive gap data</text>\n</svg>\n");
        return svg;
    };

    for tick in x_axis.decade_ticks() {
        let px = x_axis.place(tick);
        if !(MARGIN_L..=WIDTH - MARGIN_R).contains(&px) {
            continue;
        }
        let _ = write!(
            svg,
            "<line x1=\"{px:.2}\" y1=\"{MARGIN_T}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"#ddd\"/>\n\
             <text x=\"{px:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{tick}</text>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 16.0
        );
    }
    for tick in y_axis.decade_ticks() {
        let py = y_axis.place(tick);
        if !(MARGIN_T..=HEIGHT - MARGIN_B).contains(&py) {
            continue;
        }
        let _ = write!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{py:.2}\" x2=\"{}\" y2=\"{py:.2}\" stroke=\"#ddd\"/>\n\
             <text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{tick:e}</text>\n",
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            py + 4.0
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">phase t (log)</text>\n\
         <text x=\"16\" y=\"{:.2}\" font-size=\"12\" transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">duality gap (log)</text>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
    );

    let series = |selector: fn(&crate::trace::PhaseRecord) -> f64| -> Vec<(f64, f64)> {
        trace
            .phases
            .iter()
            .filter(|p| selector(p) > 0.0)
            .map(|p| (x_axis.place(p.t as f64), y_axis.place(selector(p))))
            .collect()
    };
    svg.push_str(&polyline(&series(|p| p.gap_avg), "#1f77b4"));
    svg.push_str(&polyline(&series(|p| p.gap_last), "#d62728"));
    let _ = write!(
        svg,
        "<rect x=\"{0}\" y=\"{MARGIN_T}\" width=\"170\" height=\"40\" fill=\"white\" stroke=\"#999\"/>\n\
         <line x1=\"{1}\" y1=\"{2}\" x2=\"{3}\" y2=\"{2}\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n\
         <text x=\"{4}\" y=\"{5}\" font-size=\"11\">gap of averages</text>\n\
         <line x1=\"{1}\" y1=\"{6}\" x2=\"{3}\" y2=\"{6}\" stroke=\"#d62728\" stroke-width=\"2\"/>\n\
         <text x=\"{4}\" y=\"{7}\" font-size=\"11\">gap of last pair</text>\n",
        WIDTH - MARGIN_R - 180.0,
        WIDTH - MARGIN_R - 172.0,
        MARGIN_T + 13.0,
        WIDTH - MARGIN_R - 146.0,
        WIDTH - MARGIN_R - 140.0,
        MARGIN_T + 17.0,
        MARGIN_T + 30.0,
        MARGIN_T + 34.0,
    );
    svg.push_str("</svg>\n");
    svg
}
