//! Reward curves as standalone SVG: per-seed trailing-window smoothing, then
//! the mean across seeds with a min-max band.

use std::fmt::Write;

use sili_core::trainer::MetricRow;

use crate::analysis::seeds;

/// Trailing window used for the reward plots.
pub const SMOOTHING_WINDOW: usize = 20;

/// Mean of the last `window` values up to and including each position.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Mean and range across seeds at each interaction index.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub x: Vec<u64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Smooths each seed's series of `field` and aggregates the seeds over the
/// interactions they all reached.
pub fn band(rows: &[MetricRow], field: fn(&MetricRow) -> f64, window: usize) -> Band {
    let curves: Vec<(Vec<u64>, Vec<f64>)> = seeds(rows)
        .into_iter()
        .map(|s| {
            let mut seed_rows: Vec<&MetricRow> = rows.iter().filter(|r| r.seed == s).collect();
            seed_rows.sort_by_key(|r| r.interaction);
            let raw: Vec<f64> = seed_rows.iter().map(|r| field(r)).collect();
            (seed_rows.iter().map(|r| r.interaction).collect(), trailing_mean(&raw, window))
        })
        .collect();
    let len = curves.iter().map(|c| c.1.len()).min().unwrap_or(0);
    let mut b = Band { x: Vec::new(), mean: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for i in 0..len {
        let ys: Vec<f64> = curves.iter().map(|c| c.1[i]).collect();
        b.x.push(curves[0].0[i]);
        b.mean.push(ys.iter().sum::<f64>() / ys.len() as f64);
        b.lo.push(ys.iter().copied().fold(f64::INFINITY, f64::min));
        b.hi.push(ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    b
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// Renders a band as an SVG document.
pub fn svg(title: &str, y_label: &str, band: &Band) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(title));
    if band.x.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, W / 2.0, H / 2.0);
        s.push_str("</svg>\n");
        return s;
    }
    let (x0, x1) = (band.x[0] as f64, *band.x.last().unwrap() as f64);
    let mut y0 = band.lo.iter().copied().fold(f64::INFINITY, f64::min);
    let mut y1 = band.hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y1 - y0 < 1e-9 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let px = |x: f64| MARGIN + if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.5 } * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    // Axes with end labels.
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        l = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for (v, y) in [(y0, H - MARGIN), (y1, MARGIN)] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, y + 4.0, num(v));
    }
    for (v, x) in [(x0, MARGIN), (x1, W - MARGIN)] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x, H - MARGIN + 18.0, num(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">interaction</text>"#, W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );

    let mut area = String::new();
    for (i, &x) in band.x.iter().enumerate() {
        let _ = write!(area, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(x as f64), py(band.hi[i]));
    }
    for (i, &x) in band.x.iter().enumerate().rev() {
        let _ = write!(area, "L{:.2} {:.2} ", px(x as f64), py(band.lo[i]));
    }
    let _ = writeln!(s, r#"<path d="{}Z" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#, area);
    let mut line = String::new();
    for (i, &x) in band.x.iter().enumerate() {
        let _ = write!(line, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(x as f64), py(band.mean[i]));
    }
    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, line.trim_end());
    s.push_str("</svg>\n");
    s
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(seed: u64, j: u64, task: f64) -> MetricRow {
        MetricRow { seed, interaction: j, task_reward: task, stability_reward: 0.0, beta: 0.5, strategy_changed: false }
    }

    #[test]
    fn trailing_mean_by_hand() {
        assert_eq!(trailing_mean(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
        assert!(trailing_mean(&[], 20).is_empty());
    }

    proptest! {
        #[test]
        fn constant_series_is_a_fixed_point(c in -1e3f64..1e3, n in 1usize..80, w in 1usize..30) {
            for v in trailing_mean(&vec![c; n], w) {
                prop_assert!((v - c).abs() <= 1e-9 * c.abs().max(1.0));
            }
        }

        #[test]
        fn smoothed_values_stay_within_the_window_range(xs in proptest::collection::vec(-100f64..100.0, 1..60), w in 1usize..10) {
            let m = trailing_mean(&xs, w);
            for i in 0..xs.len() {
                let win = &xs[i + 1 - (i + 1).min(w)..=i];
                let lo = win.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m[i] >= lo - 1e-9 && m[i] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn band_spans_the_seeds() {
        let rows = vec![row(1, 1, 0.0), row(1, 2, 2.0), row(2, 1, 4.0), row(2, 2, 6.0), row(2, 3, 9.0)];
        let b = band(&rows, |r| r.task_reward, 1);
        assert_eq!(b.x, vec![1, 2]);
        assert_eq!(b.mean, vec![2.0, 4.0]);
        assert_eq!(b.lo, vec![0.0, 2.0]);
        assert_eq!(b.hi, vec![4.0, 6.0]);
    }

    #[test]
    fn svg_is_well_formed_and_deterministic() {
        let rows: Vec<MetricRow> = (1..=30).map(|j| row(1, j, -(j as f64))).collect();
        let b = band(&rows, |r| r.task_reward, SMOOTHING_WINDOW);
        let a = svg("Task <reward>", "task reward", &b);
        assert_eq!(a, svg("Task <reward>", "task reward", &b));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("Task &lt;reward&gt;"));
        assert!(svg("empty", "y", &band(&[], |r| r.task_reward, 5)).contains("no data"));
    }
}
