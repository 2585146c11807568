use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use pstclock_core::metrics::{resolve_horizon, statistics_from_moments, survival_moments};
use pstclock_core::spectral::spectral_series;
use pstclock_core::sweep::{best_per_n, for_each_ordered, read_records, sweep_fits};
use pstclock_core::{
    build_effective_matrix, build_xx_matrix, decompose_effective, decompose_hermitian, fidelity,
    fit_power_law, linspace, logspace, prt_bounds, sweep_quench, tick_statistics_with, ChainSpec,
    Checkpoint, DEConfig, OptimizationResult, Optimizer, PairedTickForm, QuenchOptions,
    SweepRecord, SweepStore,
};

use crate::config::RunConfig;
use crate::plot;
use crate::report::{
    read_json, write_json, AnalyzeReport, FidelityPeak, FitsReport, PairedFormCheck, QuenchReport,
    RunReport, Series,
};
use crate::CliError;

pub struct Context {
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
}

impl Context {
    pub fn sweep_csv(&self) -> PathBuf {
        self.out.join("sweep.csv")
    }

    pub fn run_path(&self, n: usize, config: &DEConfig) -> PathBuf {
        self.out
            .join("runs")
            .join(format!("{}.json", run_tag(n, config)))
    }

    pub fn checkpoint_path(&self, n: usize, config: &DEConfig) -> PathBuf {
        self.out
            .join("checkpoints")
            .join(format!("{}.json", run_tag(n, config)))
    }
}

fn run_tag(n: usize, config: &DEConfig) -> String {
    format!("n{n}_o{}_s{}", config.o, config.seed)
}

pub fn analyze(cfg: &RunConfig, ctx: &Context) -> Result<AnalyzeReport, CliError> {
    let spec = cfg.chain_spec()?;
    let a = &cfg.analysis;
    if a.points < 2 {
        return Err(CliError::Config(
            "[analysis] points must be at least 2".into(),
        ));
    }
    let spectrum = decompose_effective(&build_effective_matrix(&spec))?;
    let stats = resolve_horizon(&spectrum, a.horizon)
        .and_then(|h| survival_moments(&spectrum, h))
        .and_then(|m| statistics_from_moments(&m, a.tick_floor));
    let (statistics, statistics_error) = match stats {
        Ok(st) => (Some(st), None),
        Err(e) => {
            warn!("no tick statistics: {e}");
            (None, Some(e.to_string()))
        }
    };

    let t_pst = cfg
        .chain
        .as_ref()
        .and_then(|c| c.pst_scale())
        .map(|j0| PI / (2.0 * j0));
    let t_max = match (a.t_max, statistics) {
        (Some(t), _) => t,
        (None, Some(st)) => st.horizon.unwrap_or(4.0 * st.mu),
        (None, None) => t_pst.map_or(10.0 * spec.n_sites() as f64 / spec.max_coupling(), |t| {
            2.0 * t
        }),
    };
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::Config(format!(
            "[analysis] t_max must be positive, got {t_max}"
        )));
    }
    let grid = linspace(0.0, t_max, a.points);
    let (survival, tick) = spectral_series(&spectrum, &grid)?;
    let closed = decompose_hermitian(&build_xx_matrix(&spec))?;
    let fid: Vec<f64> = grid.iter().map(|&t| fidelity(&closed, t)).collect();
    let fidelity_peak = t_pst.map(|t| FidelityPeak {
        t_pst: t,
        value: fidelity(&closed, t),
    });

    let paired_form = match PairedTickForm::new(&spectrum, spec.gamma()) {
        Ok(form) => PairedFormCheck {
            supported: true,
            max_abs_diff: Some(
                grid.iter()
                    .zip(&tick.values)
                    .map(|(&t, &p)| (form.tick_pdf(t) - p).abs())
                    .fold(0.0, f64::max),
            ),
            reason: None,
        },
        Err(e) => PairedFormCheck {
            supported: false,
            max_abs_diff: None,
            reason: Some(e.to_string()),
        },
    };

    let prt = statistics.map(|st| prt_bounds(spec.gamma(), st.resolution));
    let inside_prt = statistics.zip(prt).map(|(st, b)| b.contains(st.precision));
    let report = AnalyzeReport {
        spec,
        horizon: a.horizon,
        statistics,
        statistics_error,
        prt,
        inside_prt,
        fidelity_peak,
        paired_form,
        series: Series {
            times: grid,
            survival: survival.values,
            tick_pdf: tick.values,
            fidelity: fid,
        },
    };
    if let Some(st) = &report.statistics {
        info!(
            "resolution {:.6e}, precision {:.4}",
            st.resolution, st.precision
        );
    }
    write_json(&ctx.out.join("analyze.json"), &report)?;
    plot::analyze_chart(&ctx.out.join("analyze.svg"), &report)?;
    Ok(report)
}

/// Runs one optimization, checkpointing every `every` generations and
/// continuing from `resume_from` when given.
fn run_optimizer(
    n: usize,
    config: &DEConfig,
    checkpoint: &Path,
    every: usize,
    resume_from: Option<Checkpoint>,
) -> pstclock_core::Result<(OptimizationResult, f64)> {
    let start = Instant::now();
    let mut opt = match resume_from {
        Some(cp) => {
            info!(
                "N = {n}, seed {}: resuming at generation {}",
                config.seed, cp.generation
            );
            Optimizer::resume(cp, n, config.clone())?
        }
        None => Optimizer::new(n, config.clone())?,
    };
    if every > 0 {
        if let Some(dir) = checkpoint.parent() {
            std::fs::create_dir_all(dir)?;
        }
    }
    opt.run_with(|cp| {
        if every > 0 && cp.generation % every == 0 {
            cp.save(checkpoint)?;
            info!(
                "N = {n}, seed {}: generation {}/{}, best cost {:.6}",
                config.seed,
                cp.generation,
                cp.config.generations,
                cp.cost_trace.last().copied().unwrap_or(f64::INFINITY)
            );
        }
        Ok(())
    })?;
    let result = opt.finish()?;
    Ok((result, start.elapsed().as_secs_f64()))
}

pub fn optimize(cfg: &RunConfig, ctx: &Context) -> Result<RunReport, CliError> {
    let n = cfg
        .optimize
        .n_sites
        .ok_or_else(|| CliError::Config("optimize needs [optimize] n_sites".into()))?;
    let config = &cfg.optimizer;
    config.validate(n)?;
    let resume = ctx.resume.as_deref().map(Checkpoint::load).transpose()?;
    let checkpoint = ctx.checkpoint_path(n, config);
    let (result, wall_time_s) = run_optimizer(
        n,
        config,
        &checkpoint,
        cfg.optimize.checkpoint_every,
        resume,
    )?;
    let report = RunReport {
        record: SweepRecord::from_result(&result),
        result,
        wall_time_s,
    };
    write_json(&ctx.run_path(n, config), &report)?;
    SweepStore::open(ctx.sweep_csv())?.append(&report.record)?;
    info!(
        "N = {n}: resolution {:.6e}, precision {:.4}, cost {:.6} in {wall_time_s:.1} s",
        report.record.resolution, report.record.precision, report.record.cost
    );
    Ok(report)
}

pub fn sweep(cfg: &RunConfig, ctx: &Context) -> Result<FitsReport, CliError> {
    let s = &cfg.sweep;
    if s.n_sites.is_empty() || s.seeds.is_empty() {
        return Err(CliError::Config(
            "[sweep] needs at least one chain length and one seed".into(),
        ));
    }
    for &n in &s.n_sites {
        cfg.optimizer.validate(n)?;
    }
    let store = SweepStore::open(ctx.sweep_csv())?;
    let done: HashSet<(usize, u64)> = store.read()?.iter().map(|r| (r.n_sites, r.seed)).collect();
    let work: Vec<(usize, DEConfig)> = s
        .n_sites
        .iter()
        .flat_map(|&n| s.seeds.iter().map(move |&seed| (n, seed)))
        .filter(|key| {
            let pending = !done.contains(key);
            if !pending {
                info!(
                    "N = {}, seed {}: already in {}",
                    key.0,
                    key.1,
                    store.path().display()
                );
            }
            pending
        })
        .map(|(n, seed)| {
            (
                n,
                DEConfig {
                    seed,
                    ..cfg.optimizer.clone()
                },
            )
        })
        .collect();
    let every = s.checkpoint_every;
    for_each_ordered(
        &work,
        |(n, config)| {
            let checkpoint = ctx.checkpoint_path(*n, config);
            let resume = if checkpoint.exists() {
                Some(Checkpoint::load(&checkpoint)?)
            } else {
                None
            };
            let (result, wall_time_s) = run_optimizer(*n, config, &checkpoint, every, resume)?;
            let report = RunReport {
                record: SweepRecord::from_result(&result),
                result,
                wall_time_s,
            };
            write_json(&ctx.run_path(*n, config), &report)?;
            if checkpoint.exists() {
                std::fs::remove_file(&checkpoint)?;
            }
            Ok(report)
        },
        |_, report| {
            info!(
                "N = {}, seed {}: resolution {:.6e}, precision {:.4} in {:.1} s",
                report.record.n_sites,
                report.record.seed,
                report.record.resolution,
                report.record.precision,
                report.wall_time_s
            );
            store.append(&report.record)
        },
    )?;
    fit_records(&store.read()?, s.fit_cutoff, ctx)
}

fn fit_records(
    records: &[SweepRecord],
    cutoff: usize,
    ctx: &Context,
) -> Result<FitsReport, CliError> {
    let best = best_per_n(records);
    plot::scaling_chart(&ctx.out.join("scaling.svg"), &best, None)?;
    let fits = sweep_fits(records, cutoff)?;
    let outside_prt: Vec<usize> = best
        .iter()
        .filter(|r| !r.inside_prt())
        .map(|r| r.n_sites)
        .collect();
    if !outside_prt.is_empty() {
        warn!("precision outside the trade-off region for N = {outside_prt:?}");
    }
    info!(
        "precision ~ resolution^{:.3} (r² {:.4}), J0 ~ N^{:.3}, J_last/J_max ~ N^{:.3}",
        fits.precision_vs_resolution.exponent,
        fits.precision_vs_resolution.r_squared,
        fits.j0_vs_n.exponent,
        fits.ratio_vs_n.exponent
    );
    let report = FitsReport {
        cutoff,
        fits,
        outside_prt,
    };
    write_json(&ctx.out.join("fits.json"), &report)?;
    plot::scaling_chart(
        &ctx.out.join("scaling.svg"),
        &best,
        Some(&report.fits.precision_vs_resolution),
    )?;
    plot::coupling_chart(&ctx.out.join("couplings.svg"), &best, Some(&report.fits))?;
    Ok(report)
}

pub fn fit(cfg: &RunConfig, ctx: &Context) -> Result<FitsReport, CliError> {
    let input = cfg.fit.input.clone().unwrap_or_else(|| ctx.sweep_csv());
    if !input.exists() {
        return Err(CliError::Input(format!(
            "sweep table {} does not exist",
            input.display()
        )));
    }
    let records = read_records(&input)?;
    fit_records(&records, cfg.fit.cutoff, ctx)
}

pub fn quench(cfg: &RunConfig, ctx: &Context) -> Result<QuenchReport, CliError> {
    let q = &cfg.quench;
    let mut specs: Vec<ChainSpec> = Vec::new();
    if cfg.chain.is_some() {
        specs.push(cfg.chain_spec()?);
    }
    for path in &q.runs {
        let run: RunReport = read_json(path)?;
        specs.push(run.result.spec);
    }
    if specs.is_empty() {
        return Err(CliError::Config(
            "quench needs a [chain] section or run reports in [quench] runs".into(),
        ));
    }
    if q.tdc.is_none() && q.points < 2 {
        return Err(CliError::Config(
            "[quench] points must be at least 2".into(),
        ));
    }
    let options = QuenchOptions {
        horizon: q.horizon,
        tick_floor: q.tick_floor,
    };
    let mut sweeps = Vec::with_capacity(specs.len());
    for spec in &specs {
        let grid = match &q.tdc {
            Some(tdc) => tdc.clone(),
            None => {
                let spectrum = decompose_effective(&build_effective_matrix(spec))?;
                let mu = tick_statistics_with(&spectrum, q.horizon)?.mu;
                logspace(1e-2, mu.max(2e-2), q.points)
            }
        };
        let sw = sweep_quench(spec, &grid, &options)?;
        info!(
            "N = {}: baseline precision {:.4}, plateau onset {:?}",
            sw.n_sites, sw.baseline, sw.plateau_onset
        );
        sweeps.push(sw);
    }
    let points: Vec<(f64, f64)> = sweeps
        .iter()
        .filter_map(|s| s.plateau_onset.map(|t| (s.n_sites as f64, t / s.mu)))
        .collect();
    let (onset_fit, onset_fit_error) = match fit_power_law(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = QuenchReport {
        sweeps,
        onset_fit,
        onset_fit_error,
    };
    write_json(&ctx.out.join("quench.json"), &report)?;
    plot::quench_chart(&ctx.out.join("quench.svg"), &report)?;
    Ok(report)
}

/// Redraws every plot whose source data exists in the output directory.
pub fn plot(ctx: &Context) -> Result<(), CliError> {
    let mut drawn = 0;
    let analyze = ctx.out.join("analyze.json");
    if analyze.exists() {
        plot::analyze_chart(&ctx.out.join("analyze.svg"), &read_json(&analyze)?)?;
        drawn += 1;
    }
    let csv = ctx.sweep_csv();
    if csv.exists() {
        let best = best_per_n(&read_records(&csv)?);
        let fits_path = ctx.out.join("fits.json");
        let fits: Option<FitsReport> = if fits_path.exists() {
            Some(read_json(&fits_path)?)
        } else {
            None
        };
        plot::scaling_chart(
            &ctx.out.join("scaling.svg"),
            &best,
            fits.as_ref().map(|f| &f.fits.precision_vs_resolution),
        )?;
        plot::coupling_chart(
            &ctx.out.join("couplings.svg"),
            &best,
            fits.as_ref().map(|f| &f.fits),
        )?;
        drawn += 2;
    }
    let quench = ctx.out.join("quench.json");
    if quench.exists() {
        plot::quench_chart(&ctx.out.join("quench.svg"), &read_json(&quench)?)?;
        drawn += 1;
    }
    if drawn == 0 {
        return Err(CliError::Input(format!(
            "nothing to plot in {}",
            ctx.out.display()
        )));
    }
    info!("wrote {drawn} plots to {}", ctx.out.display());
    Ok(())
}
