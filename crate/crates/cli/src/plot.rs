//! Hand-written SVG figures for 2-D datasets.

use std::fmt::Write;

use leafstream::data::Dataset;
use leafstream::ensemble::{distillation_error, DistillingEnsemble};
use leafstream::nn::{softmax, FeedForwardNet};
use leafstream::streams::StreamAnalysis;
use leafstream::Matrix;

use crate::config::PlotSection;
use crate::error::CliError;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;
const MIN_PROFILE_POINTS: usize = 200;

/// Data bounds padded by 5% on each side.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl View {
    pub fn fit(x: &Matrix) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for r in x.iter_rows() {
            for d in 0..2 {
                lo[d] = lo[d].min(r[d]);
                hi[d] = hi[d].max(r[d]);
            }
        }
        let pad = |l: f64, h: f64| {
            let w = (h - l).max(1e-9) * 0.05;
            (l - w, h + w)
        };
        Self {
            x: pad(lo[0], hi[0]),
            y: pad(lo[1], hi[1]),
        }
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * SIZE
    }

    fn py(&self, v: f64) -> f64 {
        MARGIN + (self.y.1 - v) / (self.y.1 - self.y.0) * SIZE
    }
}

fn open(title: &str) -> String {
    let side = SIZE + 2.0 * MARGIN;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\">\n\
         <title>{title}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn frame(svg: &mut String) {
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>"
    );
}

/// Diverging blue-white-red scale for a probability.
pub fn probability_color(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let (lo, hi) = if p < 0.5 {
        ([59.0, 76.0, 192.0], [255.0; 3])
    } else {
        ([255.0; 3], [180.0, 4.0, 38.0])
    };
    let t = if p < 0.5 { p * 2.0 } else { (p - 0.5) * 2.0 };
    let c: Vec<u8> = (0..3).map(|i| (lo[i] + (hi[i] - lo[i]) * t).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Color of a stream label: hues advance by the golden-ratio conjugate.
pub fn label_color(label: usize) -> String {
    let h = (label as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, l) = (0.65, 0.5);
    let c = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to(r), to(g), to(b))
}

fn class_probability(logits: &[f64], class: usize) -> Result<f64, CliError> {
    let p = softmax(logits)?;
    p.get(class)
        .copied()
        .ok_or_else(|| CliError::usage(format!("plot class {class} outside 0..{}", p.len())))
}

fn cut_line(svg: &mut String, view: &View, y: f64) {
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-dasharray=\"6 4\"/>",
        view.px(view.x.0),
        view.py(y),
        view.px(view.x.1),
        view.py(y)
    );
}

/// Network probability of `cfg.class` on a grid, with the training points on top.
pub fn heatmap(net: &FeedForwardNet, data: &Dataset, view: &View, cfg: &PlotSection) -> Result<String, CliError> {
    let g = cfg.grid.max(2);
    let mut svg = open("network probability");
    let (cw, ch) = (SIZE / g as f64, SIZE / g as f64);
    for i in 0..g {
        for j in 0..g {
            let x = view.x.0 + (i as f64 + 0.5) / g as f64 * (view.x.1 - view.x.0);
            let y = view.y.1 - (j as f64 + 0.5) / g as f64 * (view.y.1 - view.y.0);
            let p = class_probability(&net.forward(&[x, y])?, cfg.class)?;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                MARGIN + i as f64 * cw,
                MARGIN + j as f64 * ch,
                cw + 0.3,
                ch + 0.3,
                probability_color(p)
            );
        }
    }
    let step = (data.len() / 2000).max(1);
    for (k, r) in data.features().iter_rows().enumerate().step_by(step) {
        let fill = if data.labels()[k] == cfg.class { "#7a0018" } else { "#16235e" };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{fill}\"/>",
            view.px(r[0]),
            view.py(r[1])
        );
    }
    cut_line(&mut svg, view, cfg.profile_y);
    frame(&mut svg);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Training objects colored by stream label; flagged objects get a black ring.
pub fn stream_scatter(data: &Dataset, an: &StreamAnalysis, view: &View, cfg: &PlotSection) -> String {
    let mut svg = open("stream labels");
    for (r, o) in data.features().iter_rows().zip(&an.objects) {
        let stroke = if o.flagged { " stroke=\"black\" stroke-width=\"0.8\"" } else { "" };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"{}\"{stroke}/>",
            view.px(r[0]),
            view.py(r[1]),
            label_color(o.label)
        );
    }
    cut_line(&mut svg, view, cfg.profile_y);
    frame(&mut svg);
    for (k, label) in an.table.labels_by_population().into_iter().take(20).enumerate() {
        let e = an.table.entry(label).expect("listed label");
        let y = MARGIN + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\">{} ({})</text>",
            MARGIN + 6.0,
            y - 9.0,
            label_color(label),
            MARGIN + 20.0,
            y,
            label,
            e.population
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Values of the profile cut, shared by the figure and tests.
pub struct Profile {
    pub x: Vec<f64>,
    pub nn: Vec<f64>,
    pub ensemble: Vec<f64>,
    pub high_error: Vec<bool>,
}

pub fn profile_values(
    net: &FeedForwardNet,
    ens: &DistillingEnsemble,
    an: &StreamAnalysis,
    view: &View,
    cfg: &PlotSection,
) -> Result<Profile, CliError> {
    let n = cfg.profile_points.max(MIN_PROFILE_POINTS);
    let state = an.table.state();
    let mut p = Profile {
        x: Vec::with_capacity(n),
        nn: Vec::with_capacity(n),
        ensemble: Vec::with_capacity(n),
        high_error: Vec::with_capacity(n),
    };
    for k in 0..n {
        let x = view.x.0 + (view.x.1 - view.x.0) * k as f64 / (n - 1) as f64;
        let stream = net.capture_stream(&[x, cfg.profile_y])?;
        let e = ens.predict(&stream)?;
        let err = distillation_error(stream.logits(), &e, state.metric);
        p.x.push(x);
        p.nn.push(class_probability(stream.logits(), cfg.class)?);
        p.ensemble.push(class_probability(&e, cfg.class)?);
        p.high_error.push(state.error_threshold.is_some_and(|t| err >= t));
    }
    Ok(p)
}

/// Probability along the horizontal cut; shaded where the error reaches the
/// stored threshold.
pub fn profile(
    net: &FeedForwardNet,
    ens: &DistillingEnsemble,
    an: &StreamAnalysis,
    view: &View,
    cfg: &PlotSection,
) -> Result<String, CliError> {
    let p = profile_values(net, ens, an, view, cfg)?;
    let mut svg = open("profile cut");
    let sx = |x: f64| view.px(x);
    let sy = |v: f64| MARGIN + (1.0 - v) * SIZE;
    let half = (p.x[1] - p.x[0]) / 2.0;
    let mut k = 0;
    while k < p.x.len() {
        if !p.high_error[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < p.x.len() && p.high_error[k] {
            k += 1;
        }
        let (a, b) = ((p.x[start] - half).max(view.x.0), (p.x[k - 1] + half).min(view.x.1));
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{MARGIN}\" width=\"{:.2}\" height=\"{SIZE}\" fill=\"#999999\" fill-opacity=\"0.35\"/>",
            sx(a),
            sx(b) - sx(a)
        );
    }
    for (values, color, dash) in [(&p.nn, "#b40426", ""), (&p.ensemble, "#3b4cc0", " stroke-dasharray=\"5 3\"")] {
        let pts: Vec<String> = p.x.iter().zip(values.iter()).map(|(x, v)| format!("{:.2},{:.2}", sx(*x), sy(*v))).collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash} points=\"{}\"/>",
            pts.join(" ")
        );
    }
    for t in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{t}</text>",
            MARGIN - 4.0,
            sy(t) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">network (solid), ensemble (dashed), x2 = {}</text>",
        MARGIN,
        MARGIN - 10.0,
        cfg.profile_y
    );
    frame(&mut svg);
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_colors_are_deterministic_and_distinct() {
        assert_eq!(label_color(3), label_color(3));
        let first: Vec<String> = (1..=8).map(label_color).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(first[i], first[j]);
            }
        }
        assert!(first.iter().all(|c| c.len() == 7 && c.starts_with('#')));
    }

    #[test]
    fn probability_scale_endpoints() {
        assert_eq!(probability_color(0.0), "#3b4cc0");
        assert_eq!(probability_color(0.5), "#ffffff");
        assert_eq!(probability_color(1.0), "#b40426");
    }
}
