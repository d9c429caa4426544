//! Minimal SVG plots.

use std::fmt::Write;

use crate::report::Histogram;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn frame(title: &str, x_label: &str, lo: f64, hi: f64, y_max: f64, body: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y0}" stroke="black"/>"#,
        y0 = H - PAD,
        x1 = W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">{lo:.4}</text><text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{hi:.4}</text>"#,
        H - PAD + 15.0,
        W - PAD,
        H - PAD + 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{y_max:.4}</text>"#, PAD - 4.0, PAD + 4.0);
    s.push_str(body);
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Histogram with 30 bins over the finite values, plus an optional marker line.
pub fn histogram_svg(h: &Histogram) -> String {
    let finite: Vec<f64> = h.values.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = range(finite.iter().copied().chain(h.marker));
    let bins = 30;
    let mut counts = vec![0usize; bins];
    for v in &finite {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (W - 2.0 * PAD) / bins as f64;
    let mut body = String::new();
    for (i, c) in counts.iter().enumerate() {
        let bh = (H - 2.0 * PAD) * *c as f64 / top;
        let _ = writeln!(
            body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b5" stroke="white"/>"##,
            PAD + i as f64 * bw,
            H - PAD - bh,
            bw,
            bh
        );
    }
    if let Some(m) = h.marker {
        let x = PAD + (m - lo) / (hi - lo) * (W - 2.0 * PAD);
        let _ = writeln!(body, r##"<line x1="{x:.2}" y1="{PAD}" x2="{x:.2}" y2="{}" stroke="#c0392b" stroke-dasharray="5,3"/>"##, H - PAD);
    }
    frame(&h.title, &h.x_label, lo, hi, top, &body)
}

/// Polyline plot of several named curves sharing the x axis.
pub fn lines_svg(title: &str, x_label: &str, xs: &[f64], curves: &[(String, Vec<f64>)]) -> String {
    let (lo, hi) = range(xs.iter().copied());
    let all = curves.iter().flat_map(|(_, ys)| ys.iter().copied()).filter(|v| v.is_finite());
    let (ylo, yhi) = range(all);
    let palette = ["#4a78b5", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50"];
    let mut body = String::new();
    for (ci, (name, ys)) in curves.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    PAD + (x - lo) / (hi - lo) * (W - 2.0 * PAD),
                    H - PAD - (y - ylo) / (yhi - ylo) * (H - 2.0 * PAD)
                )
            })
            .collect();
        let color = palette[ci % palette.len()];
        let _ = writeln!(body, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 14.0 * ci as f64,
            escape(name)
        );
    }
    let _ = writeln!(body, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{ylo:.4}</text>"#, PAD - 4.0, H - PAD);
    frame(title, x_label, lo, hi, yhi, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_is_wellformed() {
        let h = Histogram {
            title: "gaps <per spin>".into(),
            x_label: "gap".into(),
            values: vec![0.1, 0.2, 0.2, f64::NEG_INFINITY],
            marker: Some(0.5),
        };
        let s = histogram_svg(&h);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("&lt;per spin&gt;"));
        assert_eq!(s.matches("<rect").count(), 31);
    }

    #[test]
    fn lines_plot_has_one_polyline_per_curve() {
        let s = lines_svg("t", "r", &[0.0, 0.5, 1.0], &[("a".into(), vec![1.0, 2.0, 3.0]), ("b".into(), vec![0.0, f64::NAN, 1.0])]);
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
