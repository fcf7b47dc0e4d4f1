//! Minimal SVG writer for report figures.

use std::fmt::Write;

/// A drawing in data coordinates, mapped onto a fixed-size canvas with the
/// y axis pointing up.
pub struct Svg {
    lo: [f64; 2],
    hi: [f64; 2],
    size: [f64; 2],
    body: String,
}

impl Svg {
    pub fn new(lo: [f64; 2], hi: [f64; 2], width: f64, height: f64) -> Self {
        Self { lo, hi, size: [width, height], body: String::new() }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (x - self.lo[0]) / (self.hi[0] - self.lo[0]).max(f64::MIN_POSITIVE) * self.size[0];
        let sy = (1.0 - (y - self.lo[1]) / (self.hi[1] - self.lo[1]).max(f64::MIN_POSITIVE)) * self.size[1];
        (sx, sy)
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for p in pts {
            let (x, y) = self.map(p[0], p[1]);
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\" points=\"{}\"/>",
            d.trim_end()
        );
    }

    pub fn circle(&mut self, c: [f64; 2], r: f64, fill: &str) {
        let (x, y) = self.map(c[0], c[1]);
        let _ = writeln!(self.body, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r}\" fill=\"{fill}\"/>");
    }

    pub fn text(&mut self, at: [f64; 2], s: &str) {
        let (x, y) = self.map(at[0], at[1]);
        let s = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(self.body, "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"12\">{s}</text>");
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.size[0], self.size[1], self.body
        )
    }
}
