//! Minimal self-contained SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `None` breaks the line.
    pub points: Vec<(f64, Option<f64>)>,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Series { name: name.into(), points: xs.iter().zip(ys).map(|(&x, &y)| (x, Some(y))).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed vertical line at `x` with a caption.
    pub marker: Option<(f64, String)>,
    /// Values are clamped into this range and the y axis spans it exactly.
    pub y_clip: Option<(f64, f64)>,
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            marker: None,
            y_clip: None,
        }
    }

    /// Data range of the x and y axes.
    pub fn extent(&self) -> ((f64, f64), (f64, f64)) {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = self.series.iter().flat_map(|s| s.points.iter().filter_map(|p| p.1)).map(|y| self.clip(y));
        let x = padded(min_max(xs));
        let y = match self.y_clip {
            Some(r) => r,
            None => padded(min_max(ys)),
        };
        (x, y)
    }

    fn clip(&self, y: f64) -> f64 {
        self.y_clip.map_or(y, |(lo, hi)| y.clamp(lo, hi))
    }

    pub fn to_svg(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.extent();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let base = TOP + ph;
            let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{base:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"##, base + 4.0);
            let _ = writeln!(
                s,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                base + 18.0,
                tick_label(xv)
            );
            let _ = writeln!(s, r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"##, LEFT - 4.0);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 7.0,
                py + 4.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        if let Some((mx, caption)) = &self.marker {
            let px = sx(*mx);
            let _ = writeln!(
                s,
                r##"<line class="marker" x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#444444" stroke-dasharray="6 4"/>"##,
                TOP + ph
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, px + 4.0, TOP + 14.0, esc(caption));
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            for run in segments(&series.points) {
                let pts: Vec<String> =
                    run.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(self.clip(y)))).collect();
                if pts.len() == 1 {
                    let (x, y) = run[0];
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                        sx(x),
                        sy(self.clip(y))
                    );
                } else {
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                        pts.join(" ")
                    );
                }
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = WIDTH - RIGHT + 14.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, esc(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Widens empty or degenerate ranges so the axis is drawable.
fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

fn segments(points: &[(f64, Option<f64>)]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &(x, y) in points {
        match y {
            Some(y) => cur.push((x, y)),
            None if !cur.is_empty() => out.push(std::mem::take(&mut cur)),
            None => {}
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn tick_label(v: f64) -> String {
    let t = format!("{v:.2}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.into() }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> LineChart {
        let mut c = LineChart::new("TAC <PCAT>", "time (s)", "HU");
        c.series.push(Series::new("PCAT", &[0.0, 2.0, 4.0], &[-75.0, -60.0, -53.0]));
        c.series.push(Series::new("EAT", &[0.0, 2.0, 4.0], &[-86.0, -84.0, -82.0]));
        c.marker = Some((2.0, "Pa".into()));
        c
    }

    #[test]
    fn axes_span_data() {
        assert_eq!(chart().extent(), ((0.0, 4.0), (-86.0, -53.0)));
    }

    #[test]
    fn marker_is_dashed_at_pa() {
        let svg = chart().to_svg();
        let line = svg.lines().find(|l| l.contains("class=\"marker\"")).unwrap();
        assert!(line.contains("stroke-dasharray"));
        // x = 2 sits mid-axis.
        let mid = LEFT + (WIDTH - LEFT - RIGHT) / 2.0;
        assert!(line.contains(&format!("x1=\"{mid:.2}\"")));
        assert!(svg.contains("TAC &lt;PCAT&gt;"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn clip_fixes_axis_and_values() {
        let mut c = LineChart::new("drift", "scan", "%");
        c.series.push(Series { name: "a".into(), points: vec![(0.0, Some(0.0)), (1.0, Some(80.0)), (2.0, None), (3.0, Some(-5.0))] });
        c.y_clip = Some((-30.0, 30.0));
        assert_eq!(c.extent().1, (-30.0, 30.0));
        let svg = c.to_svg();
        // The gap splits the series into a polyline and a single point.
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains(&format!(",{TOP:.2}\"")) || svg.contains(&format!(",{TOP:.2} ")));
    }

    #[test]
    fn flat_data_gets_padded_axis() {
        let mut c = LineChart::new("flat", "x", "y");
        c.series.push(Series::new("a", &[1.0, 2.0], &[5.0, 5.0]));
        assert_eq!(c.extent().1, (4.0, 6.0));
        assert_eq!(tick_label(-0.001), "0");
        assert_eq!(tick_label(12.5), "12.5");
    }
}
