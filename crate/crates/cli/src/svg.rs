//! Hand-rolled SVG line charts for aggregate sweep output. No plotting
//! dependencies; output is deterministic byte-for-byte given the input.

use std::fmt::Write as _;

use acbench_core::analysis::{default_fit_window, exponent_fit};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Regret,
    Reward,
    Switches,
}

impl PlotKind {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "regret" => Ok(PlotKind::Regret),
            "reward" => Ok(PlotKind::Reward),
            "switches" => Ok(PlotKind::Switches),
            other => Err(CliError::Config(format!(
                "unknown plot kind `{other}` (regret|reward|switches)"
            ))),
        }
    }

    fn columns(self) -> (usize, usize, usize) {
        match self {
            PlotKind::Regret => (2, 3, 4),
            PlotKind::Reward => (5, 6, 7),
            PlotKind::Switches => (8, 9, 10),
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            PlotKind::Regret => "cumulative regret",
            PlotKind::Reward => "episode reward",
            PlotKind::Switches => "cumulative switches",
        }
    }
}

struct Series {
    name: String,
    points: Vec<(f64, f64, f64, f64)>, // (t, mean, lo, hi)
}

fn parse_aggregate(csv: &str, kind: PlotKind) -> Result<Vec<Series>, CliError> {
    let (c_mean, c_lo, c_hi) = kind.columns();
    let mut series: Vec<Series> = Vec::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 11 {
            return Err(CliError::Config(format!(
                "aggregate CSV line {}: expected 11 columns, got {}",
                i + 1,
                fields.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64, CliError> {
            fields[idx].trim().parse::<f64>().map_err(|e| {
                CliError::Config(format!("aggregate CSV line {}: column {idx}: {e}", i + 1))
            })
        };
        let t = parse(1)?;
        let point = (t, parse(c_mean)?, parse(c_lo)?, parse(c_hi)?);
        let name = fields[0].to_string();
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(point),
            None => series.push(Series {
                name,
                points: vec![point],
            }),
        }
    }
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(CliError::Config("aggregate CSV contains no series".into()));
    }
    Ok(series)
}

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 75.0;
const RIGHT: f64 = 630.0;
const TOP: f64 = 45.0;
const BOTTOM: f64 = 445.0;

pub fn render(csv: &str, kind: PlotKind, loglog: bool) -> Result<String, CliError> {
    let series = parse_aggregate(csv, kind)?;

    // Optional log-log transform; nonpositive points are dropped.
    let transform = |x: f64| if loglog { x.log10() } else { x };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &series {
        for &(t, mean, lo, hi) in &s.points {
            if loglog && (t <= 0.0 || mean <= 0.0) {
                continue;
            }
            xs.push(transform(t));
            ys.push(transform(mean));
            if !loglog {
                ys.push(lo);
                ys.push(hi);
            }
        }
    }
    if xs.is_empty() {
        return Err(CliError::Config(
            "no plottable points (log-log requires positive values)".into(),
        ));
    }
    let (x_min, x_max) = min_max(&xs);
    let (mut y_min, mut y_max) = min_max(&ys);
    if !loglog {
        y_min = y_min.min(0.0);
    }
    if (y_max - y_min).abs() < 1e-12 {
        // Constant series: open a unit window so the polyline sits midway.
        y_max += 1.0;
        y_min -= 1.0;
    }
    let x_span = (x_max - x_min).max(1e-12);
    let y_span = y_max - y_min;
    let px = |x: f64| LEFT + (x - x_min) / x_span * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - (y - y_min) / y_span * (BOTTOM - TOP);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();

    // Axes.
    writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();

    // Ticks and grid.
    for i in 0..=5 {
        let fx = x_min + x_span * i as f64 / 5.0;
        let x = px(fx);
        writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{BOTTOM}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            BOTTOM + 5.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            BOTTOM + 20.0,
            tick_label(fx)
        )
        .unwrap();
        let fy = y_min + y_span * i as f64 / 5.0;
        let y = py(fy);
        writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black" stroke-width="1"/>"#,
            LEFT - 5.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            tick_label(fy)
        )
        .unwrap();
    }

    // Axis labels.
    let x_label = if loglog { "log10(episode)" } else { "episode" };
    let y_label = if loglog {
        format!("log10({})", kind.y_label())
    } else {
        kind.y_label().to_string()
    };
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{x_label}</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 45.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="18" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">{y_label}</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    )
    .unwrap();

    // Bands (linear scale only), then lines.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if !loglog {
            let mut band = String::new();
            for &(t, _, lo, _) in &s.points {
                write!(band, "{:.2},{:.2} ", px(t), py(lo)).unwrap();
            }
            for &(t, _, _, hi) in s.points.iter().rev() {
                write!(band, "{:.2},{:.2} ", px(t), py(hi)).unwrap();
            }
            writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" opacity="0.15"/>"#,
                band.trim_end()
            )
            .unwrap();
        }
        let mut line = String::new();
        for &(t, mean, _, _) in &s.points {
            if loglog && (t <= 0.0 || mean <= 0.0) {
                continue;
            }
            write!(line, "{:.2},{:.2} ", px(transform(t)), py(transform(mean))).unwrap();
        }
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.trim_end()
        )
        .unwrap();
    }

    // Legend, with fitted slope annotations on log-log regret plots.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let y = TOP + 18.0 * idx as f64;
        writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="3"/>"#,
            RIGHT + 10.0,
            RIGHT + 34.0
        )
        .unwrap();
        let label = if loglog {
            let means: Vec<f64> = s.points.iter().map(|p| p.1).collect();
            match exponent_fit(&means, default_fit_window(means.len())) {
                Ok(fit) if fit.valid => format!("{} slope={:.2}", s.name, fit.slope),
                _ => s.name.clone(),
            }
        } else {
            s.name.clone()
        };
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{label}</text>"#,
            RIGHT + 40.0,
            y + 4.0
        )
        .unwrap();
    }

    writeln!(out, "</svg>").unwrap();
    Ok(out)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}
