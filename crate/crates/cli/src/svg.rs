//! Minimal SVG writer for heatmap figures. Coordinates are printed with two
//! decimals, so output is stable across runs.

use std::fmt::Write;

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

pub type Rgb = (u8, u8, u8);

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: Rgb) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{}"/>"#,
            hex(fill)
        );
    }

    pub fn outline(&mut self, x: f64, y: f64, w: f64, h: f64) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444" stroke-width="0.5"/>"##
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: Rgb, stroke: Option<Rgb>) {
        let stroke = stroke
            .map(|s| format!(r#" stroke="{}" stroke-width="1""#, hex(s)))
            .unwrap_or_default();
        let _ = writeln!(
            self.body,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{}"{stroke}/>"#,
            hex(fill)
        );
    }

    /// `anchor` is an SVG `text-anchor` value.
    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size:.1}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            escape(content)
        );
    }

    /// Draws `values` (row-major, row 0 on top) as a grid of cells.
    #[allow(clippy::too_many_arguments)]
    pub fn heatmap(
        &mut self,
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        rows: usize,
        cols: usize,
        values: &[f64],
        color: impl Fn(f64) -> Rgb,
    ) {
        let (cw, ch) = (w / cols as f64, h / rows as f64);
        for r in 0..rows {
            for c in 0..cols {
                let v = values[r * cols + c];
                // Slight overlap hides antialiasing seams between cells.
                self.rect(
                    x + c as f64 * cw,
                    y + r as f64 * ch,
                    cw + 0.3,
                    ch + 0.3,
                    color(v),
                );
            }
        }
        self.outline(x, y, w, h);
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn hex((r, g, b): Rgb) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn ramp(stops: &[Rgb], t: f64) -> Rgb {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (stops.len() - 1) as f64;
    let i = (pos.floor() as usize).min(stops.len() - 2);
    lerp(stops[i], stops[i + 1], pos - i as f64)
}

/// Blue at -1, white at 0, red at +1.
pub fn diverging(v: f64) -> Rgb {
    ramp(
        &[(33, 102, 172), (247, 247, 247), (178, 24, 43)],
        (v + 1.0) / 2.0,
    )
}

/// Viridis-like ramp over `[0, 1]`.
pub fn sequential(v: f64) -> Rgb {
    ramp(
        &[
            (68, 1, 84),
            (59, 82, 139),
            (33, 145, 140),
            (94, 201, 98),
            (253, 231, 37),
        ],
        v,
    )
}

/// Divides by the largest absolute value; an all-zero slice is left as is.
pub fn normalize_max_abs(values: &mut [f64]) {
    let m = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        values.iter_mut().for_each(|v| *v /= m);
    }
}
