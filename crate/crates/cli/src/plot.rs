//! SVG figures. Layout follows the usual conventions for these quantities
//! (dual axes for the time traces, log–log for scalings); the styling is plain.

use std::error::Error;
use std::path::Path;

use plotters::prelude::*;
use pstclock_core::sweep::SweepFits;
use pstclock_core::{FitResult, SweepRecord};

use crate::report::{AnalyzeReport, QuenchReport};
use crate::CliError;

const SIZE: (u32, u32) = (900, 600);
const FONT: &str = "sans-serif";

type PlotResult = Result<(), Box<dyn Error>>;

fn wrap(path: &Path, r: PlotResult) -> Result<(), CliError> {
    r.map_err(|e| CliError::Plot(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max)
}

/// Log-scale range padded by a factor on both sides.
fn log_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|x| x.is_finite() && *x > 0.0)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    if !lo.is_finite() {
        return (0.1, 10.0);
    }
    (lo / pad, hi * pad)
}

/// Survival (left axis) and tick density (right axis) with the coupling profile as an inset.
pub fn analyze_chart(path: &Path, report: &AnalyzeReport) -> Result<(), CliError> {
    ensure_dir(path)?;
    wrap(path, draw_analyze(path, report))
}

fn draw_analyze(path: &Path, report: &AnalyzeReport) -> PlotResult {
    let s = &report.series;
    let t_max = s
        .times
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let p_max = max_of(&s.tick_pdf).max(1e-12) * 1.1;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let caption = match &report.statistics {
        Some(st) => format!(
            "N = {}, resolution {:.4e}, precision {:.2}",
            report.spec.n_sites(),
            st.resolution,
            st.precision
        ),
        None => format!("N = {}", report.spec.n_sites()),
    };
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, (FONT, 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(60)
        .right_y_label_area_size(70)
        .build_cartesian_2d(0.0..t_max, 0.0..1.05)?
        .set_secondary_coord(0.0..t_max, 0.0..p_max);
    chart
        .configure_mesh()
        .disable_mesh()
        .x_desc("t (1/Γ)")
        .y_desc("survival S(t)")
        .draw()?;
    chart
        .configure_secondary_axes()
        .y_desc("tick density")
        .y_label_formatter(&|v| format!("{v:.1e}"))
        .draw()?;
    chart
        .draw_series(LineSeries::new(
            s.times.iter().copied().zip(s.survival.iter().copied()),
            RED.stroke_width(2),
        ))?
        .label("S(t)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .draw_secondary_series(LineSeries::new(
            s.times.iter().copied().zip(s.tick_pdf.iter().copied()),
            BLUE.stroke_width(2),
        ))?
        .label("tick density")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    if report.spec.gamma() == 0.0 {
        chart
            .draw_series(LineSeries::new(
                s.times.iter().copied().zip(s.fidelity.iter().copied()),
                GREEN.stroke_width(1),
            ))?
            .label("fidelity")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], GREEN));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;

    let couplings = report.spec.couplings();
    let inset = root.clone().shrink((440, 240), (330, 220));
    inset.fill(&WHITE.mix(0.9))?;
    let j_max = max_of(couplings).max(f64::MIN_POSITIVE) * 1.1;
    let mut ic = ChartBuilder::on(&inset)
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(45)
        .build_cartesian_2d(0.5..(couplings.len() as f64 + 0.5), 0.0..j_max)?;
    ic.configure_mesh()
        .disable_mesh()
        .x_desc("bond i")
        .y_desc("J_i")
        .label_style((FONT, 11))
        .draw()?;
    ic.draw_series(
        couplings
            .iter()
            .enumerate()
            .map(|(i, &j)| Circle::new(((i + 1) as f64, j), 2, BLACK.filled())),
    )?;
    root.present()?;
    Ok(())
}

/// Precision against resolution on log–log axes with the trade-off bounds and the fit.
pub fn scaling_chart(
    path: &Path,
    best: &[SweepRecord],
    fit: Option<&FitResult>,
) -> Result<(), CliError> {
    ensure_dir(path)?;
    wrap(path, draw_scaling(path, best, fit))
}

fn draw_scaling(path: &Path, best: &[SweepRecord], fit: Option<&FitResult>) -> PlotResult {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let (x0, x1) = log_range(best.iter().map(|r| r.resolution), 1.5);
    let (y0, y1) = log_range(best.iter().flat_map(|r| [r.precision, r.prt_lower]), 2.0);
    let mut chart = ChartBuilder::on(&root)
        .caption("precision against resolution", (FONT, 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())?;
    chart
        .configure_mesh()
        .x_desc("resolution ν")
        .y_desc("precision")
        .x_label_formatter(&|v| format!("{v:.1e}"))
        .y_label_formatter(&|v| format!("{v:.0}"))
        .draw()?;

    // Γ is recovered from the stored bound, Γ/ν.
    let gamma = best.first().map_or(1.0, |r| r.prt_lower * r.resolution);
    let xs: Vec<f64> = (0..=100)
        .map(|i| x0 * (x1 / x0).powf(i as f64 / 100.0))
        .collect();
    chart
        .draw_series(LineSeries::new(
            xs.iter().map(|&x| (x, gamma / x)),
            BLACK.mix(0.6),
        ))?
        .label("Γ/ν")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK.mix(0.6)));
    chart
        .draw_series(LineSeries::new(
            xs.iter()
                .map(|&x| (x, (gamma / x).powi(2)))
                .filter(|&(_, y)| y <= y1),
            BLACK.mix(0.3),
        ))?
        .label("Γ²/ν²")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK.mix(0.3)));
    if let Some(f) = fit {
        chart
            .draw_series(LineSeries::new(
                xs.iter().map(|&x| (x, f.prefactor * x.powf(f.exponent))),
                RED.stroke_width(2),
            ))?
            .label(format!("fit, b = {:.3}", f.exponent))
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    }
    chart.draw_series(
        best.iter()
            .map(|r| Circle::new((r.resolution, r.precision), 4, BLUE.filled())),
    )?;
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// `J₀` and `J_{N−1}/J_max` against `N` on log–log axes.
pub fn coupling_chart(
    path: &Path,
    best: &[SweepRecord],
    fits: Option<&SweepFits>,
) -> Result<(), CliError> {
    ensure_dir(path)?;
    wrap(path, draw_couplings(path, best, fits))
}

fn draw_couplings(path: &Path, best: &[SweepRecord], fits: Option<&SweepFits>) -> PlotResult {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let (x0, x1) = log_range(best.iter().map(|r| r.n_sites as f64), 1.3);
    let (y0, y1) = log_range(best.iter().flat_map(|r| [r.j0, r.j_last_ratio]), 2.0);
    let mut chart = ChartBuilder::on(&root)
        .caption("coupling scalings", (FONT, 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())?;
    chart
        .configure_mesh()
        .x_desc("N")
        .y_label_formatter(&|v| format!("{v:.1e}"))
        .draw()?;
    chart
        .draw_series(
            best.iter()
                .map(|r| Circle::new((r.n_sites as f64, r.j0), 4, BLUE.filled())),
        )?
        .label("J0")
        .legend(|(x, y)| Circle::new((x + 10, y), 4, BLUE.filled()));
    chart
        .draw_series(
            best.iter()
                .map(|r| TriangleMarker::new((r.n_sites as f64, r.j_last_ratio), 5, RED.filled())),
        )?
        .label("J_{N-1}/J_max")
        .legend(|(x, y)| TriangleMarker::new((x + 10, y), 5, RED.filled()));
    if let Some(f) = fits {
        let xs: Vec<f64> = (0..=50)
            .map(|i| x0 * (x1 / x0).powf(i as f64 / 50.0))
            .collect();
        for (fit, color) in [(&f.j0_vs_n, BLUE), (&f.ratio_vs_n, RED)] {
            chart
                .draw_series(LineSeries::new(
                    xs.iter()
                        .map(|&x| (x, fit.prefactor * x.powf(fit.exponent))),
                    color.mix(0.6),
                ))?
                .label(format!("N^{:.3}", fit.exponent))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.mix(0.6)));
        }
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Effective precision relative to the unquenched one against decoupling time over `μ`.
pub fn quench_chart(path: &Path, report: &QuenchReport) -> Result<(), CliError> {
    ensure_dir(path)?;
    wrap(path, draw_quench(path, report))
}

fn draw_quench(path: &Path, report: &QuenchReport) -> PlotResult {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let (x0, x1) = log_range(
        report
            .sweeps
            .iter()
            .flat_map(|s| s.tdc_grid.iter().map(move |t| t / s.mu)),
        1.2,
    );
    let y1 = report
        .sweeps
        .iter()
        .flat_map(|s| s.n_eff.iter().flatten().map(move |v| v / s.baseline))
        .fold(1.0f64, f64::max)
        * 1.05;
    let mut chart = ChartBuilder::on(&root)
        .caption("effective precision after decoupling", (FONT, 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(60)
        .build_cartesian_2d((x0..x1).log_scale(), 0.0..y1)?;
    chart
        .configure_mesh()
        .x_desc("T_DC / μ")
        .y_desc("effective / unquenched precision")
        .x_label_formatter(&|v| format!("{v:.0e}"))
        .draw()?;
    for (i, s) in report.sweeps.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts: Vec<(f64, f64)> = s
            .tdc_grid
            .iter()
            .zip(&s.n_eff)
            .filter_map(|(&t, v)| v.map(|v| (t / s.mu, v / s.baseline)))
            .collect();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))?
            .label(format!("N = {}", s.n_sites))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        if let (Some(onset), Some(plateau)) = (s.plateau_onset, s.plateau) {
            chart.draw_series(std::iter::once(Cross::new(
                (onset / s.mu, plateau / s.baseline),
                6,
                color.stroke_width(2),
            )))?;
        }
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}
