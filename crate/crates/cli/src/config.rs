//! Flat `key = value` run configurations.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Every key must be consumed by the selected model and method, so typos and
//! keys that do not apply to the run are rejected rather than silently
//! ignored.

use std::collections::BTreeMap;
use std::path::Path;

use lsmc_pde::baselines::{DirectStyle, FdConfig, FdExercise, LsmcConfig};
use lsmc_pde::mlmc::{LevelTestConfig, MlmcLevelPlan};
use lsmc_pde::model::{ExerciseSchedule, HestonSpec, ModelSpec, MultiHestonSpec, VarianceFactor};
use lsmc_pde::pricer::{HybridConfig, OptionSpec, PayoffKind};
use lsmc_pde::regression::TruncationConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Hybrid estimator, optionally with clustering and multiple levels.
    Hybrid,
    /// Full-state least-squares Monte Carlo.
    Lsmc,
    /// Explicit finite differences (one-asset put only).
    Fd,
    /// Hybrid estimator with the never-exercise policy, reported next to the
    /// transform price.
    European,
    /// Multilevel bias/variance/cost study.
    LevelTest,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::Lsmc => "lsmc",
            Method::Fd => "fd",
            Method::European => "european",
            Method::LevelTest => "level-test",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Algorithm {
    Hybrid(HybridConfig),
    Lsmc(LsmcConfig),
    Fd { config: FdConfig, style: FdExercise },
    European(HybridConfig),
    LevelTest(LevelTestConfig),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub option: OptionSpec,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub timing_repeats: usize,
    /// Paths used to locate the variance band for boundary output when the
    /// method does not simulate variance itself.
    pub band_paths: usize,
    /// Grid for boundary output of methods without their own log-grid.
    pub boundary_resolution: usize,
    /// Echo of the parsed key/value pairs, in key order.
    pub entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn method(&self) -> Method {
        match self.algorithm {
            Algorithm::Hybrid(_) => Method::Hybrid,
            Algorithm::Lsmc(_) => Method::Lsmc,
            Algorithm::Fd { .. } => Method::Fd,
            Algorithm::European(_) => Method::European,
            Algorithm::LevelTest(_) => Method::LevelTest,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigRead { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut fields = Fields::parse(text)?;
        let entries = fields.echo();
        let model = parse_model(&mut fields)?;
        let option = parse_option(&mut fields, &model)?;
        let method = fields.required_with("method", |s| match s {
            "hybrid" => Ok(Method::Hybrid),
            "lsmc" => Ok(Method::Lsmc),
            "fd" => Ok(Method::Fd),
            "european" => Ok(Method::European),
            "level-test" => Ok(Method::LevelTest),
            _ => Err("expected one of hybrid, lsmc, fd, european, level-test".into()),
        })?;
        let trials = fields.optional("trials", 1usize)?;
        if trials == 0 {
            return Err(fields.invalid("trials", "must be at least 1"));
        }
        let timing_repeats = fields.optional("timing_repeats", 3usize)?;
        if timing_repeats == 0 {
            return Err(fields.invalid("timing_repeats", "must be at least 1"));
        }
        let band_paths = fields.optional("band_paths", 10_000usize)?;
        let boundary_resolution = fields.optional("boundary_resolution", 512usize)?;
        let algorithm = match method {
            Method::Hybrid => Algorithm::Hybrid(parse_hybrid(&mut fields, false)?),
            Method::European => Algorithm::European(parse_hybrid(&mut fields, true)?),
            Method::Lsmc => Algorithm::Lsmc(LsmcConfig {
                n_paths: fields.required("paths")?,
                n_low_paths: fields.optional("low_paths", 0usize)?,
                n_steps: fields.required("steps")?,
                degree: fields.required("degree")?,
                direct: fields.optional_with("lsmc_direct", DirectStyle::CashFlow, |s| match s {
                    "cash-flow" => Ok(DirectStyle::CashFlow),
                    "value-iteration" => Ok(DirectStyle::ValueIteration),
                    _ => Err("expected cash-flow or value-iteration".into()),
                })?,
            }),
            Method::Fd => {
                if model.dim() != 1 {
                    return Err(fields.invalid("method", "fd supports the one-asset model only"));
                }
                let style = fields.optional_with("fd_style", FdExercise::Bermudan, |s| match s {
                    "bermudan" => Ok(FdExercise::Bermudan),
                    "european" => Ok(FdExercise::European),
                    _ => Err("expected bermudan or european".into()),
                })?;
                Algorithm::Fd {
                    config: FdConfig {
                        n_s: fields.required("fd_ns")?,
                        n_v: fields.required("fd_nv")?,
                        n_t: fields.required("fd_nt")?,
                        s_max: fields.required("s_max")?,
                        v_max: fields.required("v_max")?,
                    },
                    style,
                }
            }
            Method::LevelTest => Algorithm::LevelTest(LevelTestConfig {
                resolutions: fields.required_list("resolutions")?,
                reference: fields.required("reference_resolution")?,
                trials,
                n_steps: fields.required("steps")?,
                x_min: fields.optional("x_min", -3.0)?,
                x_max: fields.optional("x_max", 3.0)?,
                timing_repeats,
            }),
        };
        fields.finish()?;
        Ok(Self { model, option, algorithm, trials, timing_repeats, band_paths, boundary_resolution, entries })
    }
}

fn parse_model(f: &mut Fields) -> Result<ModelSpec, CliError> {
    let kind = f.required_with("model", |s| match s {
        "heston" => Ok(1usize),
        "multi-heston" => Ok(2usize),
        _ => Err("expected heston or multi-heston".into()),
    })?;
    let r = f.required("r")?;
    let spec = if kind == 1 {
        let h = HestonSpec {
            r,
            kappa: f.required("kappa")?,
            theta: f.required("theta")?,
            eta: f.required("eta")?,
            rho: f.required("rho")?,
            v0: f.required("v0")?,
            s0: f.required("s0")?,
        };
        ModelSpec::Heston(h)
    } else {
        let mut assets = [VarianceFactor { kappa: 0.0, theta: 0.0, eta: 0.0, v0: 0.0, s0: 0.0 }; 2];
        for (k, a) in assets.iter_mut().enumerate() {
            let n = k + 1;
            *a = VarianceFactor {
                kappa: f.required(&format!("kappa{n}"))?,
                theta: f.required(&format!("theta{n}"))?,
                eta: f.required(&format!("eta{n}"))?,
                v0: f.required(&format!("v0_{n}"))?,
                s0: f.required(&format!("s0_{n}"))?,
            };
        }
        // factor order: S1, S2, v1, v2
        let names = ["s1", "s2", "v1", "v2"];
        let mut rho = [[0.0; 4]; 4];
        for i in 0..4 {
            rho[i][i] = 1.0;
            for j in i + 1..4 {
                let c: f64 = f.required(&format!("rho_{}_{}", names[i], names[j]))?;
                rho[i][j] = c;
                rho[j][i] = c;
            }
        }
        ModelSpec::MultiHeston(MultiHestonSpec::new(r, assets, rho)?)
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_option(f: &mut Fields, model: &ModelSpec) -> Result<OptionSpec, CliError> {
    let kind = f.required_with("option", |s| match s {
        "put" => Ok(PayoffKind::Put),
        "max-put" => Ok(PayoffKind::MaxPut),
        _ => Err("expected put or max-put".into()),
    })?;
    let schedule = ExerciseSchedule::new(f.required("maturity")?, f.required("exercise_dates")?)?;
    let option = OptionSpec { kind, strike: f.required("strike")?, schedule, clip: f.maybe("clip")? };
    if option.dim() != model.dim() {
        return Err(f.invalid("option", "payoff dimension does not match the model"));
    }
    option.validate(model)?;
    Ok(option)
}

fn parse_hybrid(f: &mut Fields, direct_only: bool) -> Result<HybridConfig, CliError> {
    let paths: Vec<usize> = f.required_list("paths")?;
    let resolutions: Vec<usize> = f.required_list("resolutions")?;
    if paths.len() != resolutions.len() {
        return Err(f.invalid("resolutions", "needs one entry per entry of `paths`"));
    }
    let plan = MlmcLevelPlan::new(paths, resolutions)?;
    let defaults = TruncationConfig::default();
    let trunc = TruncationConfig {
        inverse_norm_bound: f.optional("inverse_norm_bound", defaults.inverse_norm_bound)?,
        support_tail: f.optional("support_tail", defaults.support_tail)?,
        support_enlargement: f.optional("support_enlargement", defaults.support_enlargement)?,
    };
    Ok(HybridConfig {
        plan,
        x_min: f.optional("x_min", -3.0)?,
        x_max: f.optional("x_max", 3.0)?,
        degree: f.required("degree")?,
        trunc,
        n_steps: f.required("steps")?,
        clusters: f.maybe("clusters")?,
        direct_only: f.optional("direct_only", direct_only)?,
    })
}

/// Parsed key/value pairs with line numbers; keys are removed as they are
/// read so that leftovers can be reported.
struct Fields {
    map: BTreeMap<String, (String, usize)>,
}

impl Fields {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| CliError::Schema { field: format!("line {line}"), reason: "expected `key = value`".into() })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(CliError::Schema { field: format!("line {line}"), reason: "empty key or value".into() });
            }
            if map.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(CliError::Schema { field: k.to_string(), reason: format!("duplicate key on line {line}") });
            }
        }
        Ok(Self { map })
    }

    fn echo(&self) -> BTreeMap<String, String> {
        self.map.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()
    }

    fn invalid(&self, field: &str, reason: &str) -> CliError {
        CliError::Schema { field: field.to_string(), reason: reason.to_string() }
    }

    fn take_with<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((v, line)) => parse(&v)
                .map(Some)
                .map_err(|reason| CliError::Schema { field: key.to_string(), reason: format!("{reason} (line {line}, got `{v}`)") }),
        }
    }

    fn maybe<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.take_with(key, |s| s.parse::<T>().map_err(|_| format!("expected {}", std::any::type_name::<T>())))
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        self.maybe(key)?.ok_or_else(|| CliError::Schema { field: key.to_string(), reason: "missing required key".into() })
    }

    fn optional<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.maybe(key)?.unwrap_or(default))
    }

    fn required_with<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError> {
        self.take_with(key, parse)?
            .ok_or_else(|| CliError::Schema { field: key.to_string(), reason: "missing required key".into() })
    }

    fn optional_with<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError> {
        Ok(self.take_with(key, parse)?.unwrap_or(default))
    }

    fn required_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>, CliError> {
        self.required_with(key, |s| {
            s.split(',')
                .map(|x| x.trim().parse::<T>().map_err(|_| format!("expected a comma-separated list of {}", std::any::type_name::<T>())))
                .collect()
        })
    }

    fn finish(self) -> Result<(), CliError> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(CliError::Schema {
                field: k,
                reason: format!("unknown key, or not used by this model/method (line {line})"),
            }),
        }
    }
}
