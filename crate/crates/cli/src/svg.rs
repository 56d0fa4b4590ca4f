//! Minimal static SVG charts. Output depends only on the input values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use eiqa_core::PredictionRecord;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || hi <= lo {
        (lo.min(0.0).min(hi), lo.max(1.0).max(hi + 1.0))
    } else {
        (lo, hi)
    }
}

/// Predicted vs. ground-truth MOS, one dot per test image.
pub fn scatter(title: &str, preds: &[PredictionRecord]) -> String {
    let (lo, hi) = range(preds.iter().flat_map(|p| [p.mos, p.predicted]));
    let sx = |v: f64| PAD + (v - lo) / (hi - lo) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let mut s = header(title);
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    );
    for p in preds {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f77b4" fill-opacity="0.6"/>"##,
            sx(p.mos),
            sy(p.predicted)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">MOS</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">predicted</text>"#,
        H / 2.0,
        H / 2.0
    );
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{v:.1}</text>"#, sx(v), H - PAD + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, PAD - 4.0, sy(v) + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Mean absolute error per algorithm with one-standard-deviation whiskers.
pub fn error_bars(title: &str, stats: &BTreeMap<u32, (f64, f64, usize)>) -> String {
    let top = stats.values().map(|(m, sd, _)| m + sd).fold(1e-9, f64::max);
    let n = stats.len().max(1) as f64;
    let slot = (W - 2.0 * PAD) / n;
    let sy = |v: f64| H - PAD - v / top * (H - 2.0 * PAD);
    let mut s = header(title);
    for (i, (algo, (mean, sd, _))) in stats.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.2;
        let bw = slot * 0.6;
        let cx = x + bw / 2.0;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="#ff7f0e"/>"##,
            sy(*mean),
            H - PAD - sy(*mean)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            sy((mean - sd).max(0.0)),
            sy(mean + sd)
        );
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">a{algo}</text>"#, H - PAD + 14.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">algorithm</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">mean |error|</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{top:.2}</text>"#, PAD - 4.0, sy(top) + 4.0);
    s.push_str("</svg>\n");
    s
}
