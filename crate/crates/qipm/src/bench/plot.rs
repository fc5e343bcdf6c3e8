//! Tiny deterministic SVG line plots for study CSVs.

use crate::error::{QipmError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct PlotSpec {
    pub x_column: String,
    pub y_column: String,
    /// Column whose distinct values split the data into series; empty for a
    /// single series.
    pub series_column: String,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
}

/// Column-mapping presets for the study kinds.
pub fn spec_for_kind(kind: &str) -> Result<PlotSpec> {
    match kind {
        "scaling-queries" => Ok(PlotSpec {
            x_column: "n".into(),
            y_column: "qram_queries_unit".into(),
            series_column: "mode".into(),
            log_x: true,
            log_y: true,
            title: "modeled qram queries (unit kappa,|A|_F) vs n".into(),
        }),
        "scaling-classical" => Ok(PlotSpec {
            x_column: "n".into(),
            y_column: "classical_ops".into(),
            series_column: "mode".into(),
            log_x: true,
            log_y: true,
            title: "measured classical ops vs n".into(),
        }),
        "scaling-iterations" => Ok(PlotSpec {
            x_column: "n".into(),
            y_column: "ipm_iterations".into(),
            series_column: "mode".into(),
            log_x: true,
            log_y: true,
            title: "ipm iterations vs n".into(),
        }),
        "condnum" => Ok(PlotSpec {
            x_column: "step".into(),
            y_column: "cond".into(),
            series_column: "run".into(),
            log_x: false,
            log_y: true,
            title: "newton-system condition number per iteration".into(),
        }),
        other => Err(QipmError::UnknownColumn(format!("plot kind '{other}'"))),
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    Ok(Table { header, rows })
}

impl Table {
    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| QipmError::UnknownColumn(name.to_string()))
    }
}

/// Render a CSV study report as an SVG line plot. Output is byte-identical
/// for identical input.
pub fn emit_plot(csv: &str, kind: &str) -> Result<String> {
    let spec = spec_for_kind(kind)?;
    render(csv, &spec)
}

pub fn render(csv: &str, spec: &PlotSpec) -> Result<String> {
    let table = parse_csv(csv)?;
    let xi = table.column(&spec.x_column)?;
    let yi = table.column(&spec.y_column)?;
    let si = if spec.series_column.is_empty() {
        None
    } else {
        Some(table.column(&spec.series_column)?)
    };

    // Series in first-appearance order for reproducibility.
    let mut names: Vec<String> = Vec::new();
    let mut series: Vec<Vec<(f64, f64)>> = Vec::new();
    for row in &table.rows {
        let (Ok(x), Ok(y)) = (row[xi].parse::<f64>(), row[yi].parse::<f64>()) else {
            continue;
        };
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        let name = si.map(|i| row[i].clone()).unwrap_or_default();
        let idx = match names.iter().position(|n| *n == name) {
            Some(i) => i,
            None => {
                names.push(name);
                series.push(Vec::new());
                names.len() - 1
            }
        };
        series[idx].push((x, y));
    }

    let tx = |v: f64| if spec.log_x { v.max(1e-300).log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.max(1e-300).log10() } else { v };
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for pts in &series {
        for &(x, y) in pts {
            xmin = xmin.min(tx(x));
            xmax = xmax.max(tx(x));
            ymin = ymin.min(ty(y));
            ymax = ymax.max(ty(y));
        }
    }
    let empty = !xmin.is_finite();
    if empty {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let sx = (WIDTH - 2.0 * MARGIN) / (xmax - xmin);
    let sy = (HEIGHT - 2.0 * MARGIN) / (ymax - ymin);
    let px = |x: f64| MARGIN + (tx(x) - xmin) * sx;
    let py = |y: f64| HEIGHT - MARGIN - (ty(y) - ymin) * sy;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        MARGIN, spec.title
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{m:.2}\" y1=\"{t:.2}\" x2=\"{m:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    let axis_label = |v: f64, log: bool| {
        if log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.2}")
        }
    };
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{} .. {}</text>\n",
        MARGIN,
        HEIGHT - MARGIN + 28.0,
        axis_label(xmin, spec.log_x),
        axis_label(xmax, spec.log_x),
    ));
    svg.push_str(&format!(
        "<text x=\"6\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{} .. {}</text>\n",
        MARGIN - 8.0,
        axis_label(ymin, spec.log_y),
        axis_label(ymax, spec.log_y),
    ));

    for (k, pts) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if pts.len() == 1 {
            let (x, y) = pts[0];
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        } else if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                path.join(" ")
            ));
        }
        // Legend entry.
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN - 160.0,
            MARGIN + 18.0 * k as f64,
            WIDTH - MARGIN - 142.0,
            MARGIN + 18.0 * k as f64 + 10.0,
            if names[k].is_empty() {
                "series"
            } else {
                &names[k]
            },
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
