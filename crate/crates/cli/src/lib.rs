//! Experiment runner behind the `qstein` binary: reads a TOML config, runs
//! the requested stages and writes CSV/JSON artifacts plus a manifest.

pub mod config;
pub mod model;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use qstein::asymptotics::{
    alpha_curve, bryc_check, clt_diagnostic, expansion_experiment, rate_estimates, ExpansionOptions,
};
use qstein::models::beta_n;
use qstein::models::fermion::{decay_check, szego_rate, SzegoMode};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, Stage};
pub use output::{format_number, ManifestFile, RunManifest, StageTiming};

use model::Built;
use output::OutDir;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;
pub const EXIT_CAP: i32 = 4;

/// Default output directory when neither `--out` nor the config sets one.
pub const OUT_ENV: &str = "QSTEIN_OUT";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("stage {stage}: {source}")]
    Compute {
        stage: String,
        #[source]
        source: qstein::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn compute(stage: &str, source: qstein::Error) -> Self {
        RunError::Compute { stage: stage.into(), source }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Compute { source, .. } if source.is_cap() => EXIT_CAP,
            _ => EXIT_COMPUTE,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub max_dim: Option<usize>,
    pub max_fock: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.max_dim {
            cfg.caps.max_dim = d;
        }
        if let Some(f) = self.max_fock {
            cfg.caps.max_fock = f;
        }
        if self.jobs == Some(0) {
            return Err(ConfigError::new("--jobs", "must be positive"));
        }
        cfg.validate()
    }
}

/// `--out`, then the config's `out`, then `$QSTEIN_OUT`, then `qstein-out`.
pub fn resolve_out(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qstein-out"))
}

/// Loads `path`, applies `overrides` and runs `stages` (the config's `run`
/// selection when `None`).
pub fn run_file(path: &Path, stages: Option<&[Stage]>, overrides: &Overrides) -> Result<RunManifest, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    overrides.apply(&mut cfg)?;
    let stages = match stages {
        Some(s) => {
            for &st in s {
                cfg.supports(st).map_err(|m| ConfigError::new(st.name(), m))?;
            }
            s.to_vec()
        }
        None => cfg.run_stages(),
    };
    let out = resolve_out(overrides.out.as_deref(), &cfg);
    match overrides.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| ConfigError::new("--jobs", e.to_string()))?
            .install(|| run(&cfg, &stages, &out)),
        None => run(&cfg, &stages, &out),
    }
}

/// Runs `stages` on a validated config, writing into `out`.
pub fn run(cfg: &ExperimentConfig, stages: &[Stage], out: &Path) -> Result<RunManifest, RunError> {
    let dir = OutDir::prepare(out)?;
    let mut timings = Vec::new();
    let start = Instant::now();
    let built = model::build(cfg)?;
    dir.json("model.json", &built.summary)?;
    timings.push(StageTiming { stage: "model".into(), seconds: start.elapsed().as_secs_f64() });
    for &stage in stages {
        let start = Instant::now();
        run_stage(cfg, &built, stage, &dir)?;
        timings.push(StageTiming { stage: stage.name().into(), seconds: start.elapsed().as_secs_f64() });
    }
    dir.finish(cfg, stages, timings)
}

fn run_stage(cfg: &ExperimentConfig, built: &Built, stage: Stage, dir: &OutDir) -> Result<(), RunError> {
    let at = |e| RunError::compute(stage.name(), e);
    let model = built.model.as_ref();
    let ns = cfg.n_values();
    let num = format_number;
    match stage {
        Stage::Divergences => {
            let est = rate_estimates(model, &ns).map_err(at)?;
            let rows = est
                .per_n
                .iter()
                .map(|r| vec![r.n.to_string(), num(r.w_n), num(r.d_n), num(r.v_n), num(r.d_per_w), num(r.v_per_w)]);
            dir.csv("divergences.csv", &["n", "w_n", "d_n", "v_n", "d_per_w", "v_per_w"], rows)?;
        }
        Stage::Beta => {
            let jobs: Vec<(f64, usize)> = cfg.eps.iter().flat_map(|&e| ns.iter().map(move |&n| (e, n))).collect();
            let betas =
                jobs.par_iter().map(|&(e, n)| beta_n(model, n, e)).collect::<qstein::Result<Vec<_>>>().map_err(at)?;
            let rows = jobs
                .iter()
                .zip(&betas)
                .map(|(&(e, n), &b)| vec![num(e), n.to_string(), num(model.weight(n)), num(b), num(-b.ln())]);
            dir.csv("beta.csv", &["eps", "n", "w_n", "beta", "neg_log_beta"], rows)?;
        }
        Stage::Expansion => {
            let opts = ExpansionOptions { first_order: cfg.expansion.first_order, rates: cfg.expansion.rates };
            let mut rows = Vec::new();
            for &e in &cfg.eps {
                let rep = expansion_experiment(model, e, &ns, opts).map_err(at)?;
                for r in rep.rows {
                    rows.push(vec![
                        num(e),
                        r.n.to_string(),
                        num(r.w_n),
                        num(r.exact),
                        num(r.first_order),
                        num(r.second_order_pred),
                        num(r.residual),
                        num(r.residual_over_sqrt_wn),
                        r.residual_over_log_wn.map(num).unwrap_or_default(),
                        num(rep.d),
                        num(rep.v),
                    ]);
                }
            }
            let header = [
                "eps",
                "n",
                "w_n",
                "exact",
                "first_order",
                "second_order_pred",
                "residual",
                "residual_over_sqrt_wn",
                "residual_over_log_wn",
                "d_rate",
                "v_rate",
            ];
            dir.csv("expansion.csv", &header, rows)?;
        }
        Stage::Bryc => {
            let b = cfg.bryc.expect("checked by supports");
            let rep = bryc_check(model, b.r, &ns, b.grid).map_err(at)?;
            let rows = rep.cauchy_decay.iter().map(|&(n, d)| vec![n.to_string(), num(d)]);
            dir.csv("bryc.csv", &["n", "cauchy_diff"], rows)?;
            #[derive(Serialize)]
            struct Summary {
                r: f64,
                grid_points: usize,
                sup_bound: f64,
                analytic_ok: bool,
            }
            let s = Summary {
                r: rep.r,
                grid_points: rep.grid.len(),
                sup_bound: rep.sup_bound,
                analytic_ok: rep.analytic_ok,
            };
            dir.json("bryc.json", &s)?;
        }
        Stage::Clt => {
            let diags = ns
                .par_iter()
                .map(|&n| clt_diagnostic(model, n, None))
                .collect::<qstein::Result<Vec<_>>>()
                .map_err(at)?;
            let rows = diags.iter().map(|c| vec![c.n.to_string(), num(c.w_n), num(c.v), num(c.distance)]);
            dir.csv("clt.csv", &["n", "w_n", "v", "distance"], rows)?;
        }
        Stage::FermionRates => {
            let (q, r, points) = built.symbols.as_ref().expect("checked by supports");
            let fr = cfg.fermion_rates.clone().unwrap_or_default();
            let mut modes = vec![("entropy", None, SzegoMode::Entropy), ("variance", None, SzegoMode::Variance)];
            modes.extend(fr.s.iter().map(|&s| ("psi", Some(s), SzegoMode::Psi(s))));
            let rates = modes
                .par_iter()
                .map(|&(_, _, m)| szego_rate(q, r, m, *points))
                .collect::<qstein::Result<Vec<_>>>()
                .map_err(at)?;
            let rows = modes
                .iter()
                .zip(&rates)
                .map(|((name, s, _), &v)| vec![name.to_string(), s.map(num).unwrap_or_default(), num(v)]);
            dir.csv("fermion_rates.csv", &["mode", "s", "rate"], rows)?;
            let k_max = fr.k_max.min(points.saturating_sub(1) / 2);
            let mut decay = Vec::new();
            for (name, sym) in [("q", q), ("r", r)] {
                let rep = decay_check(sym, k_max, *points).map_err(at)?;
                decay.push(vec![
                    name.to_string(),
                    k_max.to_string(),
                    num(rep.partial_sum),
                    num(rep.tail_ratio),
                    rep.decaying.to_string(),
                ]);
            }
            dir.csv("fermion_decay.csv", &["symbol", "k_max", "partial_sum", "tail_ratio", "decaying"], decay)?;
        }
        Stage::AlphaCurve => {
            let a = cfg.alpha_curve.as_ref().expect("checked by supports");
            let rows = alpha_curve(model, a.n, &a.t2.values(), None).map_err(at)?;
            let rows = rows.iter().map(|r| vec![num(r.t2), num(r.alpha_proxy), num(r.phi_prediction)]);
            dir.csv("alpha_curve.csv", &["t2", "alpha_proxy", "phi_prediction"], rows)?;
        }
    }
    Ok(())
}
