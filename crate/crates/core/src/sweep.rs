//! Optimizations across chain lengths and seeds, the CSV result store, and
//! the scaling fits over the best solution per chain length.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use crate::de::{optimize, DEConfig, OptimizationResult};
use crate::error::{Error, Result};
use crate::fit::{exclusion_trace, fit_power_law_above, ExclusionStep, FitResult};
use crate::metrics::prt_bounds;

/// Fits use chain lengths strictly above this.
pub const DEFAULT_FIT_CUTOFF: usize = 10;

mod semicolon_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        s.serialize_str(&text.join(";"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() {
            return Ok(Vec::new());
        }
        text.split(';')
            .map(|x| x.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// One optimized chain. Column order of the CSV store follows field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n_sites: usize,
    pub seed: u64,
    pub o: usize,
    pub j0: f64,
    /// `J_{N−o}..J_{N−1}`, semicolon separated in the CSV.
    #[serde(with = "semicolon_list")]
    pub tail_couplings: Vec<f64>,
    pub resolution: f64,
    pub precision: f64,
    pub mu: f64,
    pub variance: f64,
    pub prt_lower: f64,
    pub prt_upper: f64,
    pub j_max: f64,
    /// `J_{N−1} / J_max`.
    pub j_last_ratio: f64,
    pub cost: f64,
    pub evaluations: u64,
}

impl SweepRecord {
    pub fn from_result(r: &OptimizationResult) -> Self {
        let (j0, tail) = r
            .best
            .params
            .split_last()
            .expect("parameter vector holds J0");
        let st = &r.statistics;
        let bounds = prt_bounds(r.spec.gamma(), st.resolution);
        let j_max = r.spec.max_coupling();
        let last = *r.spec.couplings().last().expect("chain has a bond");
        SweepRecord {
            n_sites: r.n_sites,
            seed: r.config.seed,
            o: r.config.o,
            j0: *j0,
            tail_couplings: tail.to_vec(),
            resolution: st.resolution,
            precision: st.precision,
            mu: st.mu,
            variance: st.variance,
            prt_lower: bounds.lower,
            prt_upper: bounds.upper,
            j_max,
            j_last_ratio: last / j_max,
            cost: r.best.cost,
            evaluations: r.evaluations,
        }
    }

    pub fn inside_prt(&self) -> bool {
        self.prt_lower <= self.precision && self.precision <= self.prt_upper
    }
}

/// Append-only CSV of sweep records with a header row.
pub struct SweepStore {
    path: PathBuf,
}

impl SweepStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        if !path.exists() || std::fs::metadata(&path)?.len() == 0 {
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(Self::header())?;
            w.flush()?;
        }
        Ok(SweepStore { path })
    }

    pub fn header() -> Vec<&'static str> {
        vec![
            "n_sites",
            "seed",
            "o",
            "j0",
            "tail_couplings",
            "resolution",
            "precision",
            "mu",
            "variance",
            "prt_lower",
            "prt_upper",
            "j_max",
            "j_last_ratio",
            "cost",
            "evaluations",
        ]
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &SweepRecord) -> Result<()> {
        let file = OpenOptions::new().append(true).open(&self.path)?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        w.serialize(record)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(&self) -> Result<Vec<SweepRecord>> {
        read_records(&self.path)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRecord>, _>>()?;
    Ok(records)
}

/// Runs `work` over `items` in parallel and hands the results to `emit` in
/// input order, so whatever `emit` writes is independent of scheduling.
/// After the first error no new items start and that error is returned.
pub fn for_each_ordered<I, T, W, E>(items: &[I], work: W, emit: E) -> Result<()>
where
    I: Sync,
    T: Send,
    W: Fn(&I) -> Result<T> + Sync,
    E: FnMut(usize, T) -> Result<()> + Send,
{
    let failed = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<T>)>();
    let stop = &failed;
    std::thread::scope(|scope| {
        let writer = scope.spawn(move || {
            let mut emit = emit;
            let mut pending = BTreeMap::new();
            let mut next = 0;
            for (i, r) in rx {
                pending.insert(i, r);
                while let Some(r) = pending.remove(&next) {
                    if let Err(e) = r.and_then(|value| emit(next, value)) {
                        stop.store(true, Ordering::Relaxed);
                        return Err(e);
                    }
                    next += 1;
                }
            }
            // Items after a failure may never have run, leaving gaps.
            pending
                .into_values()
                .find_map(|r| r.err())
                .map_or(Ok(()), Err)
        });
        items
            .par_iter()
            .enumerate()
            .for_each_with(tx, |tx, (i, item)| {
                if stop.load(Ordering::Relaxed) {
                    return;
                }
                let r = work(item);
                if r.is_err() {
                    stop.store(true, Ordering::Relaxed);
                }
                // The writer only hangs up after an error of its own.
                let _ = tx.send((i, r));
            });
        writer.join().expect("result writer panicked")
    })
}

/// Optimizes every `(N, seed)` pair, running pairs in parallel, and hands
/// each result to `on_result` in `(N, seed)` order.
pub fn run_sweep<F>(
    ns: &[usize],
    seeds: &[u64],
    base: &DEConfig,
    mut on_result: F,
) -> Result<Vec<SweepRecord>>
where
    F: FnMut(&OptimizationResult, &SweepRecord) -> Result<()> + Send,
{
    let jobs: Vec<(usize, u64)> = ns
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let mut records = Vec::with_capacity(jobs.len());
    for_each_ordered(
        &jobs,
        |&(n, seed)| {
            optimize(
                n,
                &DEConfig {
                    seed,
                    ..base.clone()
                },
            )
        },
        |_, result| {
            let record = SweepRecord::from_result(&result);
            on_result(&result, &record)?;
            records.push(record);
            Ok(())
        },
    )?;
    Ok(records)
}

/// Lowest-cost record per chain length; ties go to the earlier record.
pub fn best_per_n(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut best: BTreeMap<usize, &SweepRecord> = BTreeMap::new();
    for r in records {
        match best.get(&r.n_sites) {
            Some(b) if b.cost <= r.cost => {}
            _ => {
                best.insert(r.n_sites, r);
            }
        }
    }
    best.into_values().cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFits {
    /// `𝒩 ∝ ν^b`.
    pub precision_vs_resolution: FitResult,
    /// `J₀ ∝ N^b`.
    pub j0_vs_n: FitResult,
    /// `J_{N−1}/J_max ∝ N^b`.
    pub ratio_vs_n: FitResult,
    /// Exponent of `𝒩` vs `ν` as small chains are dropped.
    pub exclusion_trace: Vec<ExclusionStep>,
}

pub fn sweep_fits(records: &[SweepRecord], cutoff: usize) -> Result<SweepFits> {
    let best = best_per_n(records);
    if best.iter().filter(|r| r.n_sites > cutoff).count() < 3 {
        return Err(Error::Fit(format!(
            "need optimized chains for at least 3 lengths above N = {cutoff}"
        )));
    }
    let nu: Vec<_> = best
        .iter()
        .map(|r| (r.n_sites, r.resolution, r.precision))
        .collect();
    let j0: Vec<_> = best
        .iter()
        .map(|r| (r.n_sites, r.n_sites as f64, r.j0))
        .collect();
    let ratio: Vec<_> = best
        .iter()
        .map(|r| (r.n_sites, r.n_sites as f64, r.j_last_ratio))
        .collect();
    Ok(SweepFits {
        precision_vs_resolution: fit_power_law_above(&nu, cutoff)?,
        j0_vs_n: fit_power_law_above(&j0, cutoff)?,
        ratio_vs_n: fit_power_law_above(&ratio, cutoff)?,
        exclusion_trace: exclusion_trace(&nu),
    })
}
