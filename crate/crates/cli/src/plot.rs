//! Plot-ready exports.
//!
//! Each dataset becomes a long-format table `(panel, series, x, y, y_err)`
//! plus a small JSON file with axis metadata. The optional SVG is drawn from
//! that same table and adds no numbers of its own.

use plotters::coord::ranged1d::{AsRangedCoord, ValueFormatter};
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::Serialize;

use crate::datasets::{
    CoherenceRow, FitCurveRow, RateRow, SensingRow, SpectrumRow, T2Row, TrajectoryRow,
};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Coherence(Vec<CoherenceRow>),
    Spectrum {
        points: Vec<SpectrumRow>,
        fit: Option<Vec<FitCurveRow>>,
    },
    Sensing {
        points: Vec<SensingRow>,
        /// Phase residuals of the linear response fit, one per point.
        residuals: Option<Vec<f64>>,
    },
    Trajectory(Vec<TrajectoryRow>),
    T2Table(Vec<T2Row>),
    Rates(Vec<RateRow>),
}

impl Style {
    pub fn name(self) -> &'static str {
        match self {
            Style::Decay => "decay",
            Style::Spectrum => "spectrum",
            Style::Fringe => "fringe",
            Style::Trace => "trace",
            Style::Scaling => "scaling",
            Style::Rates => "rates",
        }
    }
}

impl Dataset {
    fn name(&self) -> &'static str {
        match self {
            Dataset::Coherence(_) => "CoherenceCurve",
            Dataset::Spectrum { .. } => "SpectrumEstimate",
            Dataset::Sensing { .. } => "SensingRun",
            Dataset::Trajectory(_) => "trajectory",
            Dataset::T2Table(_) => "T2 table",
            Dataset::Rates(_) => "decay rates",
        }
    }

    /// The style that fits this dataset.
    pub fn natural_style(&self) -> Style {
        match self {
            Dataset::Coherence(_) => Style::Decay,
            Dataset::Spectrum { .. } => Style::Spectrum,
            Dataset::Sensing { .. } => Style::Fringe,
            Dataset::Trajectory(_) => Style::Trace,
            Dataset::T2Table(_) => Style::Scaling,
            Dataset::Rates(_) => Style::Rates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    /// Coherence against total time on log-log axes.
    Decay,
    /// Spectrum with an optional fitted curve.
    Spectrum,
    /// Quadratures against field, with a residual panel when available.
    Fringe,
    Trace,
    /// T₂ against pulse spacing.
    Scaling,
    Rates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mark {
    Markers,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Series {
    name: String,
    mark: Mark,
    #[serde(skip)]
    points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Panel {
    id: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    x_log: bool,
    y_log: bool,
    series: Vec<Series>,
}

#[derive(Serialize)]
struct Axes<'a> {
    style: Style,
    dataset: &'a str,
    panels: &'a [Panel],
}

#[derive(Serialize)]
struct PlotRow<'a> {
    panel: &'a str,
    series: &'a str,
    x: f64,
    y: f64,
    y_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub table_csv: Vec<u8>,
    pub axes_json: Vec<u8>,
    pub svg: Option<String>,
}

fn series(name: &str, mark: Mark, points: impl IntoIterator<Item = (f64, f64, f64)>) -> Series {
    Series {
        name: name.to_string(),
        mark,
        points: points.into_iter().collect(),
    }
}

fn panels(dataset: &Dataset, style: Style) -> CliResult<Vec<Panel>> {
    let mismatch = || {
        CliError::Export(format!(
            "style `{}` does not apply to a {} dataset",
            style.name(),
            dataset.name()
        ))
    };
    let out = match (dataset, style) {
        (Dataset::Coherence(rows), Style::Decay) => vec![Panel {
            id: "decay",
            x_label: "t (s)",
            y_label: "C",
            x_log: true,
            y_log: true,
            series: vec![series(
                "C",
                Mark::Markers,
                rows.iter().map(|r| (r.t_s, r.c, r.sigma_c)),
            )],
        }],
        (Dataset::Spectrum { points, fit }, Style::Spectrum) => {
            let mut s = vec![series(
                "S",
                Mark::Markers,
                points.iter().map(|p| (p.nu_hz, p.s, p.sigma_s)),
            )];
            if let Some(f) = fit {
                s.push(series(
                    "fit",
                    Mark::Line,
                    f.iter().map(|p| (p.nu_hz, p.s_fit, 0.0)),
                ));
            }
            vec![Panel {
                id: "spectrum",
                x_label: "ν (Hz)",
                y_label: "S (Hz)",
                x_log: true,
                y_log: true,
                series: s,
            }]
        }
        (Dataset::Sensing { points, residuals }, Style::Fringe) => {
            let mut v = vec![Panel {
                id: "fringe",
                x_label: "B_ac (T)",
                y_label: "quadrature / R",
                x_log: false,
                y_log: false,
                series: vec![
                    series(
                        "X/R",
                        Mark::Markers,
                        points.iter().map(|p| (p.b_ac_t, p.x_over_r, 0.0)),
                    ),
                    series(
                        "Y/R",
                        Mark::Markers,
                        points.iter().map(|p| (p.b_ac_t, p.y_over_r, 0.0)),
                    ),
                ],
            }];
            if let Some(res) = residuals {
                if res.len() != points.len() {
                    return Err(CliError::Export(format!(
                        "{} residuals for {} sensing points",
                        res.len(),
                        points.len()
                    )));
                }
                v.push(Panel {
                    id: "residual",
                    x_label: "B_ac (T)",
                    y_label: "phase residual (rad)",
                    x_log: false,
                    y_log: false,
                    series: vec![series(
                        "residual",
                        Mark::Markers,
                        points.iter().zip(res).map(|(p, &r)| (p.b_ac_t, r, 0.0)),
                    )],
                });
            }
            v
        }
        (Dataset::Trajectory(rows), Style::Trace) => vec![Panel {
            id: "trace",
            x_label: "t (s)",
            y_label: "ξ (rad/s)",
            x_log: false,
            y_log: false,
            series: vec![series(
                "xi",
                Mark::Line,
                rows.iter().map(|r| (r.t_s, r.xi_rad_per_s, 0.0)),
            )],
        }],
        (Dataset::T2Table(rows), Style::Scaling) => vec![Panel {
            id: "scaling",
            x_label: "τ (s)",
            y_label: "T₂ (s)",
            x_log: true,
            y_log: true,
            series: vec![series(
                "T2",
                Mark::Markers,
                rows.iter().map(|r| (r.tau_s, r.t2_s, r.sigma_t2_s)),
            )],
        }],
        (Dataset::Rates(rows), Style::Rates) => vec![Panel {
            id: "rates",
            x_label: "ν (Hz)",
            y_label: "Γ (1/s)",
            x_log: true,
            y_log: true,
            series: vec![series(
                "Gamma",
                Mark::Markers,
                rows.iter()
                    .map(|r| (r.nu_hz, r.gamma_per_s, r.sigma_gamma_per_s)),
            )],
        }],
        _ => return Err(mismatch()),
    };
    Ok(out)
}

/// Converts a dataset into plot-ready files.
pub fn export_plotdata(dataset: &Dataset, style: Style, svg: bool) -> CliResult<PlotData> {
    let panels = panels(dataset, style)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &panels {
        for s in &p.series {
            for &(x, y, y_err) in &s.points {
                w.serialize(PlotRow {
                    panel: p.id,
                    series: &s.name,
                    x,
                    y,
                    y_err,
                })
                .expect("in-memory write");
            }
        }
    }
    let table_csv = w.into_inner().expect("in-memory flush");
    let mut axes_json = serde_json::to_vec_pretty(&Axes {
        style,
        dataset: dataset.name(),
        panels: &panels,
    })
    .expect("serializable axes");
    axes_json.push(b'\n');
    let svg = if svg {
        Some(render_svg(&panels)?)
    } else {
        None
    };
    Ok(PlotData {
        table_csv,
        axes_json,
        svg,
    })
}

/// At most this many points per series are drawn; the table keeps them all.
const MAX_DRAWN: usize = 4000;

const COLORS: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    BLACK,
];

fn render_svg(panels: &[Panel]) -> CliResult<String> {
    let mut out = String::new();
    {
        let height = 360 * panels.len() as u32;
        let root = SVGBackend::with_string(&mut out, (720, height)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        for (area, panel) in root.split_evenly((panels.len(), 1)).iter().zip(panels) {
            let (x, y) = bounds(panel);
            match (panel.x_log, panel.y_log) {
                (false, false) => draw(area, panel, (x, y), x.0..x.1, y.0..y.1)?,
                (true, false) => draw(area, panel, (x, y), (x.0..x.1).log_scale(), y.0..y.1)?,
                (false, true) => draw(area, panel, (x, y), x.0..x.1, (y.0..y.1).log_scale())?,
                (true, true) => draw(
                    area,
                    panel,
                    (x, y),
                    (x.0..x.1).log_scale(),
                    (y.0..y.1).log_scale(),
                )?,
            }
        }
        root.present().map_err(draw_err)?;
    }
    Ok(out)
}

fn draw_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Export(format!("svg rendering failed: {e:?}"))
}

fn drawable(panel: &Panel, x: f64, y: f64) -> bool {
    x.is_finite() && y.is_finite() && (!panel.x_log || x > 0.0) && (!panel.y_log || y > 0.0)
}

/// Widest ratio shown on a log axis; smaller values are left off the SVG.
const MAX_LOG_SPAN: f64 = 1e12;

fn bounds(panel: &Panel) -> ((f64, f64), (f64, f64)) {
    let pts = || {
        panel
            .series
            .iter()
            .flat_map(|s| &s.points)
            .filter(|&&(x, y, _)| drawable(panel, x, y))
    };
    let span = |vals: Vec<f64>, log: bool| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return if log { (0.1, 10.0) } else { (-1.0, 1.0) };
        }
        if log {
            let lo = lo.max(hi / MAX_LOG_SPAN);
            let (lo, hi) = if hi > lo {
                (lo, hi)
            } else {
                (lo / 2.0, hi * 2.0)
            };
            let pad = (hi / lo).powf(0.05);
            (lo / pad, hi * pad)
        } else {
            let pad = if hi > lo {
                0.05 * (hi - lo)
            } else {
                0.5 * lo.abs().max(1e-300)
            };
            (lo - pad, hi + pad)
        }
    };
    (
        span(pts().map(|p| p.0).collect(), panel.x_log),
        span(pts().map(|p| p.1).collect(), panel.y_log),
    )
}

fn draw<DB, X, Y>(
    area: &DrawingArea<DB, Shift>,
    panel: &Panel,
    range: ((f64, f64), (f64, f64)),
    x: X,
    y: Y,
) -> CliResult<()>
where
    DB: DrawingBackend,
    X: AsRangedCoord<Value = f64>,
    Y: AsRangedCoord<Value = f64>,
    X::CoordDescType: ValueFormatter<f64>,
    Y::CoordDescType: ValueFormatter<f64>,
{
    let mut chart = ChartBuilder::on(area)
        .caption(panel.id, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x, y)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc(panel.x_label)
        .y_desc(panel.y_label)
        .draw()
        .map_err(draw_err)?;
    for (k, s) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|&&(x, y, _)| drawable(panel, x, y))
            .filter(|&&(x, y, _)| {
                let ((x0, x1), (y0, y1)) = range;
                (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
            })
            .map(|&(x, y, _)| (x, y))
            .collect();
        let stride = pts.len().div_ceil(MAX_DRAWN).max(1);
        let pts = pts.into_iter().step_by(stride);
        let anno = match s.mark {
            Mark::Line => chart.draw_series(LineSeries::new(pts, color.stroke_width(2))),
            Mark::Markers => chart.draw_series(pts.map(|p| Circle::new(p, 3, color.filled()))),
        }
        .map_err(draw_err)?;
        anno.label(s.name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 12, y + 4)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    Ok(())
}
