//! Subcommand implementations.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lsmc_pde::baselines::{fd_price, heston_european_put, lsmc_price, FdExercise};
use lsmc_pde::fst::GridSpec;
use lsmc_pde::mlmc::level_test;
use lsmc_pde::model::{derive_seed, simulate_paths, ModelSpec};
use lsmc_pde::pricer::{extract_boundary, low_estimate, run_hybrid_trial, simulated_variance_bands, Policy};

use crate::config::{Algorithm, Method, RunConfig};
use crate::error::CliError;
use crate::summary::{PriceSummary, Reference, Stat, TrialRecord, SUMMARY_KIND};

pub struct Context {
    pub config_path: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

impl Context {
    fn label(&self) -> String {
        self.config_path.file_stem().map_or("run".to_string(), |s| s.to_string_lossy().into_owned())
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::Output { path: path.display().to_string(), source: e })
    }

    fn prepare(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::Output { path: self.out.display().to_string(), source: e })
    }
}

/// Result of one trial before it is stamped with its index and timing.
struct Priced {
    direct: f64,
    low: Option<f64>,
    low_std_error: Option<f64>,
}

fn price_once(cfg: &RunConfig, seed: u64) -> Result<Priced, CliError> {
    let (model, option) = (&cfg.model, &cfg.option);
    Ok(match &cfg.algorithm {
        Algorithm::Hybrid(h) => {
            let o = run_hybrid_trial(model, option, h, seed)?;
            Priced { direct: o.direct, low: o.low, low_std_error: o.low_std_error }
        }
        Algorithm::European(h) => {
            let grid = h.setup(model.dim())?.grid;
            let paths = simulate_paths(model, &option.schedule, h.plan.paths[0], h.n_steps, derive_seed(seed, 1))?;
            let r = low_estimate(Policy::NeverExercise, &paths, model, option, &grid)?;
            Priced { direct: r.atm(), low: None, low_std_error: Some(r.atm_std_error) }
        }
        Algorithm::Lsmc(l) => {
            let r = lsmc_price(model, option, l, seed)?;
            Priced { direct: r.direct, low: r.low, low_std_error: r.low_std_error }
        }
        Algorithm::Fd { config, style } => {
            let ModelSpec::Heston(h) = model else {
                return Err(CliError::Schema { field: "method".into(), reason: "fd supports the one-asset model only".into() });
            };
            let sol = fd_price(h, option, config, *style)?;
            Priced { direct: sol.value_at(h.s0, h.v0), low: None, low_std_error: None }
        }
        Algorithm::LevelTest(_) => {
            return Err(CliError::Schema { field: "method".into(), reason: "use the level-test subcommand".into() })
        }
    })
}

/// Run all trials (seed + trial index), timing the first one over the
/// configured number of repeats and keeping the minimum.
pub fn price(ctx: &Context, cfg: &RunConfig) -> Result<PriceSummary, CliError> {
    if cfg.method() == Method::LevelTest {
        return Err(CliError::Schema { field: "method".into(), reason: "use the level-test subcommand".into() });
    }
    ctx.prepare()?;
    let wall = Instant::now();
    // a deterministic method gives the same number every trial
    let n_trials = if cfg.method() == Method::Fd { 1 } else { cfg.trials };
    let mut records = Vec::with_capacity(n_trials);
    let mut runtime = f64::INFINITY;
    for trial in 0..n_trials {
        let seed = ctx.seed.wrapping_add(trial as u64);
        let repeats = if trial == 0 { cfg.timing_repeats } else { 1 };
        let mut priced = None;
        let mut best = f64::INFINITY;
        for _ in 0..repeats {
            let t = Instant::now();
            let p = price_once(cfg, seed)?;
            best = best.min(t.elapsed().as_secs_f64());
            priced = Some(p);
        }
        if trial == 0 {
            runtime = best;
        }
        let p = priced.expect("at least one repeat");
        log::info!("trial {trial}: direct {:.6}", p.direct);
        records.push(TrialRecord {
            trial,
            seed,
            direct: p.direct,
            low: p.low,
            low_std_error: p.low_std_error,
            seconds: best,
        });
    }
    let directs: Vec<f64> = records.iter().map(|r| r.direct).collect();
    let lows: Vec<f64> = records.iter().filter_map(|r| r.low).collect();
    let reference = match (&cfg.algorithm, &cfg.model) {
        (Algorithm::European(_), ModelSpec::Heston(h)) => Some(Reference {
            name: "transform".into(),
            value: heston_european_put(h, cfg.option.strike, cfg.option.schedule.maturity)?,
        }),
        (Algorithm::Fd { style: FdExercise::European, .. }, ModelSpec::Heston(h)) => Some(Reference {
            name: "transform".into(),
            value: heston_european_put(h, cfg.option.strike, cfg.option.schedule.maturity)?,
        }),
        _ => None,
    };
    let summary = PriceSummary {
        kind: SUMMARY_KIND.into(),
        label: ctx.label(),
        method: cfg.method().name().into(),
        seed: ctx.seed,
        threads: ctx.threads,
        n_trials,
        trials: records,
        direct: Stat::of(&directs),
        low: (lows.len() == n_trials).then(|| Stat::of(&lows)),
        reference,
        runtime_seconds: runtime,
        timing_repeats: cfg.timing_repeats,
        wall_seconds: wall.elapsed().as_secs_f64(),
        config: cfg.entries.clone(),
    };
    let mut w = ctx.create(&format!("{}.json", ctx.label()))?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| CliError::Output {
        path: ctx.out.join(format!("{}.json", ctx.label())).display().to_string(),
        source: e.into(),
    })?;
    Ok(summary)
}

/// Write the exercise boundary (and, for the hybrid, the coefficient
/// surfaces per date) from a single run with the base seed.
pub fn boundary(ctx: &Context, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    ctx.prepare()?;
    let (model, option) = (&cfg.model, &cfg.option);
    let s0 = model.spots();
    let label = ctx.label();
    let mut written = Vec::new();
    let band_grid = || GridSpec::new(model.dim(), cfg.boundary_resolution, -3.0, 3.0);
    let bands = |steps: usize| {
        simulated_variance_bands(model, &option.schedule, cfg.band_paths, steps, derive_seed(ctx.seed, 99))
    };
    let policy = match &cfg.algorithm {
        Algorithm::Hybrid(h) => {
            let h = lsmc_pde::pricer::HybridConfig { direct_only: true, ..h.clone() };
            let o = run_hybrid_trial(model, option, &h, ctx.seed)?;
            for c in &o.result.coeffs {
                let name = format!("{label}_coeffs_date{:02}.csv", c.date);
                c.write_csv(ctx.create(&name)?)?;
                written.push(ctx.out.join(name));
            }
            extract_boundary(&o.result, model, option)?
        }
        Algorithm::Lsmc(l) => {
            let l = lsmc_pde::baselines::LsmcConfig { n_low_paths: 0, ..*l };
            let r = lsmc_price(model, option, &l, ctx.seed)?;
            r.boundary(model, option, &band_grid()?, &bands(l.n_steps)?)?
        }
        Algorithm::Fd { config, .. } => {
            let ModelSpec::Heston(h) = model else {
                return Err(CliError::Schema { field: "method".into(), reason: "fd supports the one-asset model only".into() });
            };
            let sol = fd_price(h, option, config, FdExercise::Bermudan)?;
            let steps = 100 * option.schedule.n_dates;
            sol.boundary(h, option, &band_grid()?, &bands(steps)?)?
        }
        Algorithm::European(_) | Algorithm::LevelTest(_) => {
            return Err(CliError::Schema {
                field: "method".into(),
                reason: "boundaries exist for hybrid, lsmc and fd runs only".into(),
            })
        }
    };
    let name = format!("{label}_boundary.csv");
    policy.write_csv(ctx.create(&name)?, &s0)?;
    written.push(ctx.out.join(name));
    Ok(written)
}

/// Bias/variance/cost per level, written as CSV and JSON.
pub fn level_test_cmd(ctx: &Context, cfg: &RunConfig) -> Result<lsmc_pde::mlmc::LevelTestReport, CliError> {
    let Algorithm::LevelTest(lt) = &cfg.algorithm else {
        return Err(CliError::Schema { field: "method".into(), reason: "level-test requires method = level-test".into() });
    };
    ctx.prepare()?;
    let report = level_test(&cfg.model, &cfg.option, lt, ctx.seed)?;
    let label = ctx.label();
    report.write_csv(ctx.create(&format!("{label}.csv"))?)?;
    let json_name = format!("{label}_levels.json");
    let mut w = ctx.create(&json_name)?;
    let value = serde_json::json!({ "kind": "level-test", "label": label, "seed": ctx.seed, "report": report });
    serde_json::to_writer_pretty(&mut w, &value)
        .map_err(|e| CliError::Output { path: ctx.out.join(json_name).display().to_string(), source: e.into() })?;
    Ok(report)
}

pub fn report(dir: &Path) -> Result<String, CliError> {
    let rows = crate::summary::load_summaries(dir)?;
    Ok(crate::summary::render_table(&rows))
}
