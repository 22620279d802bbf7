//! Artifact rendering: CSV tables, the scan summary, and simple SVG line
//! plots, all with deterministic byte output.
//!
//! Numeric cells are printed with 9 significant digits (`{:.8e}`), `.` as the
//! decimal separator and `\n` line endings, so identical runs produce
//! identical bytes. Censored values are an empty cell plus a flag column (or
//! just an empty cell where no flag column exists) rather than a NaN literal.
//! Non-finite sensitivities print as `inf` — a deliberate sentinel, not a
//! formatting accident.

use spinpair::entanglement::{DeathKind, LifetimeResult};
use spinpair::magnetometry::{CurvePoint, LifetimeCurve, PointFailure, SensitivityReport};

/// 9-significant-digit scientific formatting; infinities print as `inf`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

pub const CURVE_HEADER: &str = "B_mT,TE_ns,censored";
pub const SCAN_HEADER: &str = "B_mT,TE_ns,slope_ns_per_mT,r,deltaB_fund_mT,deltaB_TE_mT";
pub const TRAJECTORY_HEADER: &str = "t_ns,trace,singlet_prob,concurrence";

/// Lifetime-versus-field table (`sweep.csv` / `figure1b.csv`): censored or
/// failed points carry an empty lifetime cell and censored = 1.
pub fn curve_csv(curve: &LifetimeCurve) -> String {
    let mut out = String::with_capacity(32 * (curve.len() + 1));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for point in curve.points() {
        match point.lifetime() {
            Some(te) => {
                out.push_str(&format!("{},{},0\n", fmt_num(point.field), fmt_num(te)));
            }
            None => {
                out.push_str(&format!("{},,1\n", fmt_num(point.field)));
            }
        }
    }
    out
}

/// Sensitivity table (`scan.csv`): one block of rows per audited pass, in
/// pass order. Unusable points keep their field and fundamental-limit cells
/// and leave the slope-derived cells empty.
pub fn scan_csv(passes: &[(&str, &SensitivityReport)]) -> String {
    let mut out = String::new();
    out.push_str(SCAN_HEADER);
    out.push('\n');
    for (_, report) in passes {
        for rec in &report.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_num(rec.field),
                opt_num(rec.lifetime),
                opt_num(rec.slope),
                opt_num(rec.ratio),
                fmt_num(rec.delta_b_fund),
                opt_num(rec.delta_b_lifetime),
            ));
        }
    }
    out
}

/// Time-trajectory table (`trajectory_B<value>.csv`). The singlet-probability
/// and concurrence cells are empty past the point where all pairs have
/// reacted (trace underflow): no conditional state exists there.
pub fn trajectory_csv(rows: &[(f64, f64, Option<f64>, Option<f64>)]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for &(t, trace, prob, conc) in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(t),
            fmt_num(trace),
            opt_num(prob),
            opt_num(conc),
        ));
    }
    out
}

/// Parse an externally supplied lifetime curve in the `sweep.csv` format.
/// Accepts exactly the emitted dialect: the fixed header, `B,TE,0` data rows
/// and `B,,1` censored rows. A lifetime of exactly 0 is dead-at-birth.
pub fn parse_curve_csv(text: &str) -> Result<LifetimeCurve, String> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    match lines.next() {
        Some(h) if h == CURVE_HEADER => {}
        other => {
            return Err(format!(
                "curve CSV must start with header `{CURVE_HEADER}`, found {other:?}"
            ))
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after the header
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("curve CSV row {row}: expected 3 fields, got {}", fields.len()));
        }
        let b: f64 = fields[0]
            .parse()
            .map_err(|e| format!("curve CSV row {row}: bad field value: {e}"))?;
        let result = match fields[2] {
            "1" => {
                if !fields[1].is_empty() {
                    return Err(format!(
                        "curve CSV row {row}: censored row must have an empty lifetime cell"
                    ));
                }
                Ok(LifetimeResult {
                    lifetime: None,
                    kind: DeathKind::Censored,
                    horizon: f64::INFINITY,
                    refinement_width: 0.0,
                })
            }
            "0" => {
                let te: f64 = fields[1]
                    .parse()
                    .map_err(|e| format!("curve CSV row {row}: bad lifetime value: {e}"))?;
                if !(te >= 0.0 && te.is_finite()) {
                    return Err(format!(
                        "curve CSV row {row}: lifetime must be non-negative and finite, got {te}"
                    ));
                }
                let kind = if te == 0.0 {
                    DeathKind::DeadAtBirth
                } else {
                    DeathKind::Death
                };
                Ok(LifetimeResult {
                    lifetime: Some(te),
                    kind,
                    horizon: f64::INFINITY,
                    refinement_width: 0.0,
                })
            }
            other => {
                return Err(format!(
                    "curve CSV row {row}: censored flag must be 0 or 1, got `{other}`"
                ))
            }
        };
        points.push(CurvePoint { field: b, result });
    }
    let _ = PointFailure; // dialect carries no failure rows; keep the import honest
    LifetimeCurve::new(points).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Scan summary
// ---------------------------------------------------------------------------

/// Human-readable audit summary: per-pass minima, the overall minimum ratio,
/// and every field interval where the readout would beat the fundamental
/// limit. Contains a `VIOLATION` line exactly when min r < 1.
pub fn scan_summary(passes: &[(&str, &SensitivityReport)]) -> String {
    let mut out = String::new();
    out.push_str("sensitivity audit: entanglement-lifetime readout vs fundamental limit\n");
    out.push_str(
        "r = gamma * TE^2 / |dTE/dB|; physical consistency requires r >= 1 everywhere\n\n",
    );

    let mut overall: Option<(f64, f64)> = None;
    let mut any_violation = false;
    for (name, report) in passes {
        let points = report.records.len();
        match report.min_ratio {
            Some((b, r)) => {
                out.push_str(&format!(
                    "pass {name}: {points} points, grid step {} mT, min r = {} at B = {} mT\n",
                    fmt_num(report.grid_step),
                    fmt_num(r),
                    fmt_num(b),
                ));
                if overall.is_none_or(|(_, best)| r < best) {
                    overall = Some((b, r));
                }
            }
            None => {
                out.push_str(&format!(
                    "pass {name}: {points} points, no usable ratio (all points censored or isolated)\n"
                ));
            }
        }
        any_violation |= !report.violations.is_empty();
    }

    out.push('\n');
    match overall {
        Some((b, r)) => {
            out.push_str(&format!("min r = {} at B = {} mT\n", fmt_num(r), fmt_num(b)));
        }
        None => out.push_str("min r: undefined (no usable points)\n"),
    }

    if any_violation {
        out.push_str("VIOLATION: r < 1 — the lifetime readout would beat the fundamental field-measurement limit on:\n");
        for (name, report) in passes {
            for v in &report.violations {
                out.push_str(&format!(
                    "  {name}: B in [{}, {}] mT ({} grid point(s))\n",
                    fmt_num(v.field_start),
                    fmt_num(v.field_end),
                    v.points,
                ));
            }
        }
        out.push_str(
            "such sensitivity is unphysical; it is an artifact of treating a detection-resolution jump as a real slope\n",
        );
    } else {
        out.push_str("no violation: r >= 1 at every usable grid point\n");
    }
    out
}

// ---------------------------------------------------------------------------
// SVG line plots
// ---------------------------------------------------------------------------

const SVG_W: f64 = 880.0;
const SVG_H: f64 = 560.0;
const PLOT_X0: f64 = 80.0;
const PLOT_X1: f64 = 830.0;
const PLOT_Y0: f64 = 60.0; // top
const PLOT_Y1: f64 = 490.0; // bottom

fn px(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    b_lo: f64,
    b_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, b: f64) -> f64 {
        PLOT_X0 + (b - self.b_lo) / (self.b_hi - self.b_lo) * (PLOT_X1 - PLOT_X0)
    }

    fn y(&self, v: f64) -> f64 {
        PLOT_Y1 - (v - self.y_lo) / (self.y_hi - self.y_lo) * (PLOT_Y1 - PLOT_Y0)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n",
            "<text x=\"{tx}\" y=\"30\" font-family=\"monospace\" font-size=\"16\" ",
            "text-anchor=\"middle\">{title}</text>\n",
        ),
        w = SVG_W,
        h = SVG_H,
        tx = (PLOT_X0 + PLOT_X1) / 2.0,
        title = title,
    )
}

fn svg_axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000000\"/>\n",
        px(PLOT_X0),
        px(PLOT_Y0),
        px(PLOT_X1 - PLOT_X0),
        px(PLOT_Y1 - PLOT_Y0),
    ));
    const TICKS: usize = 6;
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let b = frame.b_lo + f * (frame.b_hi - frame.b_lo);
        let x = frame.x(b);
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y1}\" stroke=\"#000000\"/>\n",
            x = px(x),
            y0 = px(PLOT_Y1),
            y1 = px(PLOT_Y1 + 6.0),
        ));
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{v:.2}</text>\n",
            x = px(x),
            y = px(PLOT_Y1 + 22.0),
            v = b,
        ));
        let v = frame.y_lo + f * (frame.y_hi - frame.y_lo);
        let y = frame.y(v);
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#000000\"/>\n",
            x0 = px(PLOT_X0 - 6.0),
            x1 = px(PLOT_X0),
            y = px(y),
        ));
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"end\">{v:.1}</text>\n",
            x = px(PLOT_X0 - 10.0),
            y = px(y + 4.0),
            v = v,
        ));
    }
    out.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{x_label}</text>\n",
        x = px((PLOT_X0 + PLOT_X1) / 2.0),
        y = px(PLOT_Y1 + 45.0),
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{y}\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 {y})\">{y_label}</text>\n",
        y = px((PLOT_Y0 + PLOT_Y1) / 2.0),
    ));
    out
}

/// One polyline from the usable points of a pass (censored points are
/// omitted; the pass stays a single polyline).
fn curve_polyline(frame: &Frame, curve: &LifetimeCurve, color: &str) -> String {
    let mut pts = String::new();
    for point in curve.points() {
        if let Some(te) = point.lifetime() {
            if !pts.is_empty() {
                pts.push(' ');
            }
            pts.push_str(&format!("{},{}", px(frame.x(point.field)), px(frame.y(te))));
        }
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{pts}\"/>\n")
}

/// `figure1b.svg`: T_E(B) for the coarse pass and, when present, the zoom
/// pass, with the zoom window annotated on the coarse axis.
pub fn figure_svg(coarse: &LifetimeCurve, zoom: Option<(&LifetimeCurve, (f64, f64))>) -> String {
    let b_lo = coarse.fields().next().unwrap_or(0.0);
    let b_hi = coarse.fields().last().unwrap_or(1.0).max(b_lo + 1e-9);
    let te_max = coarse
        .points()
        .iter()
        .chain(zoom.iter().flat_map(|(c, _)| c.points()))
        .filter_map(|p| p.lifetime())
        .fold(1.0_f64, f64::max);
    let frame = Frame {
        b_lo,
        b_hi,
        y_lo: 0.0,
        y_hi: te_max * 1.05,
    };

    let mut out = svg_open("entanglement lifetime vs magnetic field");
    out.push_str(&svg_axes(&frame, "B (mT)", "T_E (ns)"));
    if let Some((_, (w_lo, w_hi))) = zoom {
        out.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"#d6272822\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n",
            x = px(frame.x(w_lo)),
            y = px(PLOT_Y0),
            w = px(frame.x(w_hi) - frame.x(w_lo)),
            h = px(PLOT_Y1 - PLOT_Y0),
        ));
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\" fill=\"#d62728\">zoom pass: [{lo:.3}, {hi:.3}] mT</text>\n",
            x = px(PLOT_X0 + 8.0),
            y = px(PLOT_Y0 + 18.0),
            lo = w_lo,
            hi = w_hi,
        ));
    }
    out.push_str(&curve_polyline(&frame, coarse, "#1f77b4"));
    if let Some((zoom_curve, _)) = zoom {
        out.push_str(&curve_polyline(&frame, zoom_curve, "#d62728"));
    }
    out.push_str("</svg>\n");
    out
}

/// `scan.svg`: overlay of T_E(B) (left axis, linear) and the consistency
/// ratio r(B) (right axis, log10), with the r = 1 bound drawn as a dashed
/// line. One T_E polyline and one r polyline per pass.
pub fn scan_svg(passes: &[(&str, &LifetimeCurve, &SensitivityReport)]) -> String {
    let b_lo = passes
        .iter()
        .flat_map(|(_, c, _)| c.fields().next())
        .fold(f64::INFINITY, f64::min);
    let b_hi = passes
        .iter()
        .flat_map(|(_, c, _)| c.fields().last())
        .fold(f64::NEG_INFINITY, f64::max);
    let (b_lo, b_hi) = if b_lo.is_finite() && b_hi > b_lo {
        (b_lo, b_hi)
    } else {
        (0.0, 1.0)
    };
    let te_max = passes
        .iter()
        .flat_map(|(_, c, _)| c.points())
        .filter_map(|p| p.lifetime())
        .fold(1.0_f64, f64::max);
    let te_frame = Frame {
        b_lo,
        b_hi,
        y_lo: 0.0,
        y_hi: te_max * 1.05,
    };

    // Right axis: log10 r over the finite ratios, padded, always including
    // the bound log10(1) = 0.
    let mut log_lo = 0.0_f64;
    let mut log_hi = 0.0_f64;
    for (_, _, report) in passes {
        for rec in &report.records {
            if let Some(r) = rec.ratio {
                if r.is_finite() && r > 0.0 {
                    log_lo = log_lo.min(r.log10());
                    log_hi = log_hi.max(r.log10());
                }
            }
        }
    }
    let r_frame = Frame {
        b_lo,
        b_hi,
        y_lo: log_lo - 0.3,
        y_hi: log_hi + 0.3,
    };

    let mut out = svg_open("entanglement lifetime and sensitivity ratio vs field");
    out.push_str(&svg_axes(&te_frame, "B (mT)", "T_E (ns)"));
    // Right-axis label and bound line.
    out.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(90 {x} {y})\">log10 r</text>\n",
        x = px(SVG_W - 18.0),
        y = px((PLOT_Y0 + PLOT_Y1) / 2.0),
    ));
    let bound_y = px(r_frame.y(0.0));
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#2ca02c\" stroke-dasharray=\"6 4\"/>\n",
        x0 = px(PLOT_X0),
        x1 = px(PLOT_X1),
        y = bound_y,
    ));
    out.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\" fill=\"#2ca02c\">r = 1 bound</text>\n",
        x = px(PLOT_X1 - 110.0),
        y = px(r_frame.y(0.0) - 6.0),
    ));

    for (_, curve, report) in passes {
        out.push_str(&curve_polyline(&te_frame, curve, "#1f77b4"));
        let mut pts = String::new();
        for rec in &report.records {
            if let Some(r) = rec.ratio {
                if r.is_finite() && r > 0.0 {
                    if !pts.is_empty() {
                        pts.push(' ');
                    }
                    pts.push_str(&format!(
                        "{},{}",
                        px(r_frame.x(rec.field)),
                        px(r_frame.y(r.log10()))
                    ));
                }
            }
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"{pts}\"/>\n"
        ));
    }
    out.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\">blue: T_E (left axis)   red: log10 r (right axis)</text>\n",
        x = px(PLOT_X0 + 8.0),
        y = px(PLOT_Y0 + 18.0),
    ));
    out.push_str("</svg>\n");
    out
}
