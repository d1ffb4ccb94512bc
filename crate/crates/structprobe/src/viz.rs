//! Standalone SVG rendering: dependency arc diagrams and sweep line charts.
//!
//! Output is a pure function of the input spec. Coordinates are printed with
//! two decimals and nothing time- or environment-dependent is emitted, so
//! identical specs give identical bytes.

use std::fmt::Write as _;

use structprobe_core::Edge;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VizError {
    #[error("arc diagram needs at least one token")]
    NoTokens,
    #[error("edge {edge} is outside tokens 1..={tokens}")]
    EdgeOutOfRange { edge: Edge, tokens: usize },
    #[error("edge {0} has non-finite strength")]
    NonFiniteStrength(Edge),
    #[error("line chart needs at least one series")]
    NoSeries,
    #[error("series {0:?} has no points")]
    EmptySeries(String),
    #[error("series {0:?}: x values must be finite and strictly increasing")]
    BadX(String),
    #[error("series {0:?}: non-finite y value")]
    NonFiniteY(String),
    #[error("series {0:?}: log-scaled x needs positive values")]
    NonPositiveLogX(String),
}

/// Orange, used for the weakest strengths.
pub const LOW_COLOR: [u8; 3] = [0xE6, 0x9F, 0x00];
/// Blue, used for the strongest strengths.
pub const HIGH_COLOR: [u8; 3] = [0x00, 0x72, 0xB2];
/// Number of color bands between strength 0 and the clamp bound.
pub const STRENGTH_BANDS: usize = 10;

/// Okabe-Ito palette for chart series.
pub const PALETTE: [&str; 8] = [
    "#E69F00", "#56B4E9", "#009E73", "#F0E442", "#0072B2", "#D55E00", "#CC79A7", "#000000",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ArcStyle {
    pub token_spacing: f64,
    /// Arc height per token of span.
    pub arc_height: f64,
    pub font_size: f64,
    pub stroke_width: f64,
    pub gold_color: String,
    pub low_color: [u8; 3],
    pub high_color: [u8; 3],
    /// Strengths are clamped to `[0, strength_max]` before coloring.
    pub strength_max: f64,
}

impl Default for ArcStyle {
    fn default() -> Self {
        Self {
            token_spacing: 80.0,
            arc_height: 18.0,
            font_size: 14.0,
            stroke_width: 1.5,
            gold_color: "#000000".into(),
            low_color: LOW_COLOR,
            high_color: HIGH_COLOR,
            strength_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedArc {
    pub edge: Edge,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArcDiagramSpec {
    pub title: Option<String>,
    pub tokens: Vec<String>,
    /// Drawn in black above the tokens.
    pub gold_edges: Vec<Edge>,
    /// Drawn below the tokens, colored by strength.
    pub predicted_edges: Vec<PredictedArc>,
    pub style: ArcStyle,
}

/// Band index of `strength` after clamping to `[0, max]`.
pub fn strength_band(strength: f64, max: f64) -> usize {
    let clamped = strength.clamp(0.0, max);
    ((clamped / max * STRENGTH_BANDS as f64) as usize).min(STRENGTH_BANDS - 1)
}

fn band_color(band: usize, low: [u8; 3], high: [u8; 3]) -> String {
    let t = band as f64 / (STRENGTH_BANDS - 1) as f64;
    let mix = |a: u8, b: u8| (f64::from(a) + t * (f64::from(b) - f64::from(a))).round() as u8;
    format!(
        "#{:02X}{:02X}{:02X}",
        mix(low[0], high[0]),
        mix(low[1], high[1]),
        mix(low[2], high[2])
    )
}

/// Stroke color for a predicted edge: the clamped strength is cut into
/// [`STRENGTH_BANDS`] equal bands, and band colors step linearly in RGB
/// from `low` (first band) to `high` (last band).
pub fn strength_color(strength: f64, style: &ArcStyle) -> String {
    band_color(
        strength_band(strength, style.strength_max),
        style.low_color,
        style.high_color,
    )
}

pub fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
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

/// Shortest decimal label for a tick value.
fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn render_arcs(spec: &ArcDiagramSpec) -> Result<String, VizError> {
    let n = spec.tokens.len();
    if n == 0 {
        return Err(VizError::NoTokens);
    }
    let in_range = |e: &Edge| e.0 >= 1 && e.1 <= n && e.0 < e.1;
    for e in spec
        .gold_edges
        .iter()
        .chain(spec.predicted_edges.iter().map(|p| &p.edge))
    {
        if !in_range(e) {
            return Err(VizError::EdgeOutOfRange {
                edge: *e,
                tokens: n,
            });
        }
    }
    if let Some(p) = spec
        .predicted_edges
        .iter()
        .find(|p| !p.strength.is_finite())
    {
        return Err(VizError::NonFiniteStrength(p.edge));
    }

    let st = &spec.style;
    let span_height = |e: &Edge| st.arc_height * (e.1 - e.0) as f64 / 2.0 + st.arc_height / 2.0;
    let max_height =
        |edges: &mut dyn Iterator<Item = &Edge>| edges.map(span_height).fold(0.0, f64::max);
    let gold_h = max_height(&mut spec.gold_edges.iter());
    let pred_h = max_height(&mut spec.predicted_edges.iter().map(|p| &p.edge));

    let margin = 30.0;
    let title_h = if spec.title.is_some() {
        st.font_size * 2.0
    } else {
        0.0
    };
    let legend_w = 200.0;
    let width =
        (2.0 * margin + st.token_spacing * (n - 1) as f64).max(2.0 * margin + legend_w + 40.0);
    let baseline = margin + title_h + gold_h + st.font_size;
    let gold_y = baseline - st.font_size - 4.0;
    let pred_y = baseline + 8.0;
    let legend_y = pred_y + pred_h + 24.0;
    let height = legend_y + 40.0;
    let x = |i: usize| margin + st.token_spacing * (i - 1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#,
        w = width,
        h = height
    );
    svg.push_str(
        "<defs>\n<linearGradient id=\"strength-scale\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"0\">\n",
    );
    for band in 0..STRENGTH_BANDS {
        let color = band_color(band, st.low_color, st.high_color);
        for edge in [band, band + 1] {
            let _ = writeln!(
                svg,
                r#"<stop offset="{:.2}" stop-color="{color}"/>"#,
                edge as f64 / STRENGTH_BANDS as f64
            );
        }
    }
    svg.push_str("</linearGradient>\n</defs>\n");
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{width:.2}" height="{height:.2}" fill="#FFFFFF"/>"##
    );
    let font = format!(
        r#"font-family="sans-serif" font-size="{:.2}""#,
        st.font_size
    );

    if let Some(title) = &spec.title {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" {font} font-weight="bold">{}</text>"#,
            margin,
            margin + st.font_size,
            escape_xml(title)
        );
    }

    svg.push_str("<g class=\"gold\" fill=\"none\">\n");
    for e in &spec.gold_edges {
        let (x1, x2) = (x(e.0), x(e.1));
        let _ = writeln!(
            svg,
            r#"<path d="M {x1:.2} {y:.2} A {rx:.2} {ry:.2} 0 0 1 {x2:.2} {y:.2}" stroke="{}" stroke-width="{:.2}"/>"#,
            st.gold_color,
            st.stroke_width,
            y = gold_y,
            rx = (x2 - x1) / 2.0,
            ry = span_height(e),
        );
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"tokens\" text-anchor=\"middle\">\n");
    for (i, form) in spec.tokens.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" {font}>{}</text>"#,
            x(i + 1),
            baseline,
            escape_xml(form)
        );
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"predicted\" fill=\"none\">\n");
    for p in &spec.predicted_edges {
        let (x1, x2) = (x(p.edge.0), x(p.edge.1));
        let _ = writeln!(
            svg,
            r#"<path d="M {x1:.2} {y:.2} A {rx:.2} {ry:.2} 0 0 0 {x2:.2} {y:.2}" stroke="{}" stroke-width="{:.2}"><title>strength {:.3}</title></path>"#,
            strength_color(p.strength, st),
            st.stroke_width,
            p.strength,
            y = pred_y,
            rx = (x2 - x1) / 2.0,
            ry = span_height(&p.edge),
        );
    }
    svg.push_str("</g>\n");

    let small = format!(
        r#"font-family="sans-serif" font-size="{:.2}""#,
        st.font_size * 0.8
    );
    let lx = margin;
    let _ = writeln!(
        svg,
        r#"<g class="legend"><rect x="{lx:.2}" y="{legend_y:.2}" width="{legend_w:.2}" height="10.00" fill="url(#strength-scale)"/>"#
    );
    let label_y = legend_y + 10.0 + st.font_size;
    for (frac, value) in [
        (0.0, 0.0),
        (0.5, st.strength_max / 2.0),
        (1.0, st.strength_max),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{label_y:.2}" {small} text-anchor="middle">{}</text>"#,
            lx + frac * legend_w,
            tick_label(value)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" {small}>strength d_B/d_T, clamped to [0, {}]</text></g>"#,
        lx + legend_w + 12.0,
        legend_y + 9.0,
        tick_label(st.strength_max)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Space x ticks by `log2(x)`, for rank sweeps.
    pub log_x: bool,
}

/// Axis range from the data, padded by 5% of the span on each side. A
/// degenerate span is padded by 5% of the value, or by 1 around zero.
pub fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else if lo != 0.0 {
        0.05 * lo.abs()
    } else {
        1.0
    };
    (lo - pad, hi + pad)
}

pub fn render_line_chart(spec: &LineChartSpec) -> Result<String, VizError> {
    if spec.series.is_empty() {
        return Err(VizError::NoSeries);
    }
    for s in &spec.series {
        if s.points.is_empty() {
            return Err(VizError::EmptySeries(s.name.clone()));
        }
        let xs_ok = s.points.iter().all(|p| p.0.is_finite())
            && s.points.windows(2).all(|w| w[0].0 < w[1].0);
        if !xs_ok {
            return Err(VizError::BadX(s.name.clone()));
        }
        if s.points.iter().any(|p| !p.1.is_finite()) {
            return Err(VizError::NonFiniteY(s.name.clone()));
        }
        if spec.log_x && s.points.iter().any(|p| p.0 <= 0.0) {
            return Err(VizError::NonPositiveLogX(s.name.clone()));
        }
    }

    let mut xs: Vec<f64> = spec
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let tx = |v: f64| if spec.log_x { v.log2() } else { v };
    let (x_lo, x_hi) = {
        let (a, b) = (tx(xs[0]), tx(xs[xs.len() - 1]));
        if a == b {
            (a - 1.0, b + 1.0)
        } else {
            (a, b)
        }
    };
    let ys = spec
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1));
    let (y_min, y_max) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
        (lo.min(y), hi.max(y))
    });
    let (y_lo, y_hi) = padded_range(y_min, y_max);

    let (width, height) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 180.0, 50.0, 60.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    // inset x so end markers do not sit on the axes
    let inset = 16.0;
    let px = |v: f64| left + inset + (tx(v) - x_lo) / (x_hi - x_lo) * (plot_w - 2.0 * inset);
    let py = |v: f64| top + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;
    let font = r#"font-family="sans-serif" font-size="12""#;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{width:.2}" height="{height:.2}" fill="#FFFFFF"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="28.00" font-family="sans-serif" font-size="15" font-weight="bold" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        escape_xml(&spec.title)
    );

    svg.push_str("<g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\">\n");
    let _ = writeln!(
        svg,
        r#"<line x1="{left:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}"/>"#,
        b = top + plot_h,
        r = left + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{:.2}"/>"#,
        top + plot_h
    );
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"x-ticks\">\n");
    for &v in &xs {
        let (x, y) = (px(v), top + plot_h);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/><text x="{x:.2}" y="{:.2}" {font} text-anchor="middle">{}</text>"##,
            y + 5.0,
            y + 20.0,
            tick_label(v)
        );
    }
    svg.push_str("</g>\n<g class=\"y-ticks\">\n");
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * f64::from(k) / 4.0;
        let y = py(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#000000"/><text x="{:.2}" y="{:.2}" {font} text-anchor="end">{}</text>"##,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            tick_label((v * 100.0).round() / 100.0)
        );
    }
    svg.push_str("</g>\n");

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" {font} text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        height - 15.0,
        escape_xml(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18.00" y="{y:.2}" {font} text-anchor="middle" transform="rotate(-90 18.00 {y:.2})">{}</text>"#,
        escape_xml(&spec.y_label),
        y = top + plot_h / 2.0
    );

    for (k, s) in spec.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<g class="series"><polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.50" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        svg.push_str("</g>\n");
    }

    svg.push_str("<g class=\"legend\">\n");
    for (k, s) in spec.series.iter().enumerate() {
        let y = top + 10.0 + 20.0 * k as f64;
        let x = left + plot_w + 20.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="14.00" height="10.00" fill="{}"/><text x="{:.2}" y="{y:.2}" {font}>{}</text>"#,
            y - 9.0,
            PALETTE[k % PALETTE.len()],
            x + 20.0,
            escape_xml(&s.name)
        );
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
