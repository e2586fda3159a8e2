//! One function per subcommand, plus replay of single replicas.
//!
//! Every replica family is run as a named stage whose seeds are the config
//! seed derived by the stage's position in the run, so replay can rebuild
//! the task from `config.resolved` and rerun any replica on its own.

use std::path::{Path, PathBuf};

use exchain_core::billiard::{BilliardError, CellGeometry};
use exchain_core::chain::{ChainError, ModelParams};
use exchain_core::estimators::{
    compare_with_exponential, density_tail_exponent, fit_exponential_tail, fit_last_decade, fit_polynomial_tail, lambda_rescaled,
    linear_fit, EmpiricalCcdf, EstimatorError, Histogram, ParticipationDensity, RateFunction, RateSurface, TailFit,
};
use exchain_core::experiments::{
    cell_energy_tail, collision_ccdf, conductivity_sweep, fit_participation, flux_curve, gamma_scan, mean_trajectory, numerical_invariant,
    participation_fractions, post_collision_test, rate_law_slope, rate_surface, BilliardPassageTask, CollisionSample, CollisionTask,
    ConductivityTask, ExchangeTask, ExperimentError, InvariantTask, PassageSample, ReplicaTask, ReturnTask, RunSettings, SeePassageTask,
    SeeStart, SyntheticLaw, SyntheticTask, Table, TrajectoryTask,
};
use exchain_core::harness::{read_digests, HarnessError, RunManifest, RunOptions, RunOutput, SeedSpec};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Config, ConfigError, FitKind, RateKind, StartKind};
use crate::output::{Plot, RunDir, CONFIG_FILE, DIGEST_FILE, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Billiard(#[from] BilliardError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.to_string();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    SeeTail,
    SeeSimulate,
    SeeInvariant,
    SeeGammaScan,
    BilliardCollisionTime,
    BilliardRate,
    BilliardLambda,
    BilliardParticipation,
    BilliardPostcollision,
    BilliardCelltail,
    BilliardFlux,
    BilliardPassage,
    Conductivity,
    CalibrateEstimators,
}

impl Experiment {
    pub const ALL: [Experiment; 14] = [
        Self::SeeTail,
        Self::SeeSimulate,
        Self::SeeInvariant,
        Self::SeeGammaScan,
        Self::BilliardCollisionTime,
        Self::BilliardRate,
        Self::BilliardLambda,
        Self::BilliardParticipation,
        Self::BilliardPostcollision,
        Self::BilliardCelltail,
        Self::BilliardFlux,
        Self::BilliardPassage,
        Self::Conductivity,
        Self::CalibrateEstimators,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SeeTail => "see-tail",
            Self::SeeSimulate => "see-simulate",
            Self::SeeInvariant => "see-invariant",
            Self::SeeGammaScan => "see-gamma-scan",
            Self::BilliardCollisionTime => "billiard-collision-time",
            Self::BilliardRate => "billiard-rate",
            Self::BilliardLambda => "billiard-lambda",
            Self::BilliardParticipation => "billiard-participation",
            Self::BilliardPostcollision => "billiard-postcollision",
            Self::BilliardCelltail => "billiard-celltail",
            Self::BilliardFlux => "billiard-flux",
            Self::BilliardPassage => "billiard-passage",
            Self::Conductivity => "conductivity",
            Self::CalibrateEstimators => "calibrate-estimators",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

fn see_params(cfg: &Config) -> Result<ModelParams<f64>, CliError> {
    Ok(ModelParams::new(cfg.see.n, cfg.see.m, cfg.see.t_left, cfg.see.t_right)?)
}

fn geometry(cfg: &Config, m: usize) -> Result<CellGeometry<f64>, CliError> {
    Ok(cfg.geometry.with_disks(m).build()?)
}

fn pair(energies: &[f64]) -> Result<(f64, f64), CliError> {
    match energies {
        [a, b] => Ok((*a, *b)),
        _ => Err(CliError::Run(format!("expected two cell energies, got {}", energies.len()))),
    }
}

fn see_tail_task(cfg: &Config) -> Result<SeePassageTask, CliError> {
    let c = &cfg.see_tail;
    let start = match c.start {
        StartKind::Point => SeeStart::Point(c.point.clone()),
        StartKind::TailCorrected => SeeStart::TailCorrected,
        StartKind::Relaxed => SeeStart::Relaxed { t_relax: c.t_relax },
    };
    cfg.reference.validate()?;
    Ok(SeePassageTask { params: see_params(cfg)?, starts: vec![start], reference: cfg.reference, replicas: c.replicas, cap: c.cap })
}

fn gamma_points(cfg: &Config) -> Result<Vec<Vec<f64>>, CliError> {
    let c = &cfg.see_gamma_scan;
    if c.site >= c.base.len() {
        return Err(CliError::Run(format!("site {} is outside a base of {} sites", c.site, c.base.len())));
    }
    Ok(c.values
        .iter()
        .map(|&v| {
            let mut p = c.base.clone();
            p[c.site] = v;
            p
        })
        .collect())
}

fn conductivity_params(cfg: &Config) -> Result<Vec<ModelParams<f64>>, CliError> {
    let s = &cfg.see;
    Ok(cfg.conductivity.lengths.iter().map(|&n| ModelParams::new(n, s.m, s.t_left, s.t_right)).collect::<Result<_, _>>()?)
}

fn synthetic_laws(cfg: &Config) -> [(&'static str, SyntheticLaw); 2] {
    let c = &cfg.calibrate_estimators;
    [
        ("exponential", SyntheticLaw::Exponential { rate: c.rate }),
        ("pareto", SyntheticLaw::Pareto { scale: c.pareto_scale, shape: c.pareto_shape }),
    ]
}

fn tail_fit(c: &EmpiricalCcdf, cfg: &Config, kind: FitKind) -> Result<TailFit, EstimatorError> {
    match kind {
        FitKind::Default => fit_polynomial_tail(c, &cfg.window),
        FitKind::ResolvableDecade => fit_last_decade(c, &cfg.window),
    }
}

fn passage_ccdf(samples: &[PassageSample], cap: f64) -> Result<EmpiricalCcdf, EstimatorError> {
    let obs: Vec<(f64, bool)> = samples.iter().map(|s| (s.tau, s.censored)).collect();
    EmpiricalCcdf::from_observations(&obs, Some(cap))
}

fn chunks<T>(items: &[T], size: u64) -> impl Iterator<Item = &[T]> {
    items.chunks(size.max(1) as usize)
}

fn log_ccdf_plot(title: &'static str, csv: &str) -> Plot {
    Plot { title, xlabel: "t", ylabel: "P(tau > t)", logx: true, logy: true, series: vec![(csv.into(), 1, 2, "lines")] }
}

fn density_table(h: &Histogram, column: &str) -> Table {
    let mut t = Table::new(&["x", column]);
    for (x, d) in h.centers().into_iter().zip(h.densities()) {
        t.push(vec![x, d]);
    }
    t
}

struct Ctx<'c> {
    cfg: &'c Config,
    dir: RunDir,
    manifest: RunManifest,
    base: SeedSpec,
    options: RunOptions,
}

impl Ctx<'_> {
    fn settings(&self) -> RunSettings {
        RunSettings { seeds: self.base.derive(self.manifest.stages.len() as u64), options: self.options }
    }

    fn record<T>(&mut self, name: &str, run: &RunSettings, out: &RunOutput<T>) {
        self.manifest.record(name, &run.seeds, out);
    }

    fn stage<T: ReplicaTask>(&mut self, name: &str, task: &T) -> Result<RunOutput<T::Output>, CliError> {
        let run = self.settings();
        let out = task.run(&run)?;
        self.record(name, &run, &out);
        Ok(out)
    }

    fn csv(&self, name: &str, table: &Table) -> Result<(), CliError> {
        self.dir.write_csv(name, table).map_err(io(format!("writing {name}.csv")))
    }

    fn plot(&self, name: &str, plot: Plot) -> Result<(), CliError> {
        self.dir.write_plot(name, &plot).map_err(io(format!("writing {name}.gp")))
    }

    fn cap(&mut self, name: &str, value: f64) {
        self.manifest.caps.insert(name.to_string(), value);
    }

    fn censoring(&mut self, what: &str, c: &EmpiricalCcdf) {
        if c.censored_count() > 0 {
            self.manifest.warnings.push(format!("{what}: {} of {} replicas censored at the cap", c.censored_count(), c.total()));
        }
    }

    fn collision_events(&mut self, samples: &[CollisionSample]) {
        self.manifest.events += samples.iter().map(|s| s.events).sum::<u64>();
    }

    fn passage_events(&mut self, samples: &[PassageSample]) {
        self.manifest.events += samples.iter().map(|s| s.events).sum::<u64>();
    }
}

/// Runs `experiment` and writes its run directory, returning its path and
/// the result summary.
pub fn run(experiment: Experiment, cfg: &Config) -> Result<(PathBuf, Value), CliError> {
    let text = cfg.to_toml()?;
    let path = if cfg.out.is_empty() { Path::new("runs").join(experiment.name()) } else { PathBuf::from(&cfg.out) };
    let dir = RunDir::create(&path).map_err(io(format!("creating {}", path.display())))?;
    dir.write_config(&text).map_err(io("writing config.resolved"))?;
    let base = SeedSpec::new(cfg.seed);
    let manifest = RunManifest::new(experiment.name(), &text, &base, cfg.workers);
    let mut ctx = Ctx { cfg, dir, manifest, base, options: RunOptions { workers: cfg.workers, progress: cfg.progress } };
    let results = match experiment {
        Experiment::SeeTail => see_tail(&mut ctx),
        Experiment::SeeSimulate => see_simulate(&mut ctx),
        Experiment::SeeInvariant => see_invariant(&mut ctx),
        Experiment::SeeGammaScan => see_gamma(&mut ctx),
        Experiment::BilliardCollisionTime => collision_time(&mut ctx),
        Experiment::BilliardRate => billiard_rate(&mut ctx),
        Experiment::BilliardLambda => billiard_lambda(&mut ctx),
        Experiment::BilliardParticipation => participation(&mut ctx),
        Experiment::BilliardPostcollision => postcollision(&mut ctx),
        Experiment::BilliardCelltail => celltail(&mut ctx),
        Experiment::BilliardFlux => billiard_flux(&mut ctx),
        Experiment::BilliardPassage => billiard_passage(&mut ctx),
        Experiment::Conductivity => conductivity(&mut ctx),
        Experiment::CalibrateEstimators => calibrate(&mut ctx),
    }?;
    ctx.manifest.results = results.clone();
    ctx.dir.write_manifest(&ctx.manifest).map_err(io("writing manifest"))?;
    Ok((path, results))
}

fn see_tail(ctx: &mut Ctx) -> Result<Value, CliError> {
    let task = see_tail_task(ctx.cfg)?;
    let out = ctx.stage("passage", &task)?;
    ctx.passage_events(&out.results);
    ctx.cap("passage", task.cap);
    let c = passage_ccdf(&out.results, task.cap)?;
    ctx.censoring("passage", &c);
    ctx.csv("passage", &Table::ccdf(&c, 200))?;
    ctx.plot("passage", log_ccdf_plot("SEE passage time into the reference set", "passage"))?;
    let fit = tail_fit(&c, ctx.cfg, ctx.cfg.see_tail.fit);
    Ok(json!({
        "replicas": c.total(),
        "censored_fraction": c.censored_fraction(),
        "fit": fit.as_ref().ok(),
        "fit_error": fit.as_ref().err().map(|e| e.to_string()),
    }))
}

fn see_simulate(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.see_simulate;
    let run = ctx.settings();
    let (table, out) = mean_trajectory(&see_params(ctx.cfg)?, &SeeStart::Point(c.point.clone()), &c.times, c.replicas, &run)?;
    ctx.record("trajectory", &run, &out);
    ctx.csv("trajectory", &table)?;
    let n = ctx.cfg.see.n;
    ctx.plot(
        "trajectory",
        Plot {
            title: "Mean site energies",
            xlabel: "t",
            ylabel: "E_i",
            logx: false,
            logy: false,
            series: (0..n).map(|i| ("trajectory".to_string(), 1, i + 2, "linespoints")).collect(),
        },
    )?;
    let last = table.rows.last().map(|r| r[1..=n].to_vec());
    Ok(json!({ "replicas": c.replicas, "final_means": last }))
}

fn see_invariant(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.see_invariant;
    let run = ctx.settings();
    let (diag, out) = numerical_invariant(&see_params(ctx.cfg)?, c.t_relax, c.t_check, c.replicas, &run)?;
    ctx.record("invariant", &run, &out);
    let mut sites = Table::new(&["site", "mean", "stderr"]);
    for (i, (m, s)) in diag.site_means.iter().zip(&diag.site_stderrs).enumerate() {
        sites.push(vec![(i + 1) as f64, *m, *s]);
    }
    ctx.csv("sites", &sites)?;
    let all: Vec<f64> = out.results.iter().flat_map(|r| r.relaxed.iter().copied()).collect();
    ctx.csv("density", &density_table(&Histogram::log_spaced(1e-4, 1e2, c.bins, &all)?, "density"))?;
    ctx.plot(
        "density",
        Plot {
            title: "Site energy density of the relaxed ensemble",
            xlabel: "E",
            ylabel: "density",
            logx: true,
            logy: true,
            series: vec![("density".into(), 1, 2, "points")],
        },
    )?;
    serde_json::to_value(diag).map_err(|e| CliError::Run(e.to_string()))
}

fn see_gamma(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.see_gamma_scan;
    let points = gamma_points(ctx.cfg)?;
    let run = ctx.settings();
    let (res, out) = gamma_scan(&see_params(ctx.cfg)?, &points, &ctx.cfg.reference, c.beta, c.replicas, c.cap, &c.policy, &run)?;
    ctx.record("passage", &run, &out);
    ctx.passage_events(&out.results);
    ctx.cap("passage", c.cap);
    let mut t = Table::new(&["value", "gamma", "t_at_sup", "grid_top", "lower_bound", "censored_fraction"]);
    for (v, p) in c.values.iter().zip(&res) {
        let row = match &p.estimate {
            Some(e) => [e.gamma, e.t_at_sup, e.grid_top, e.lower_bound as u8 as f64],
            None => [f64::NAN; 4],
        };
        t.push([&[*v], &row[..], &[p.censored_fraction]].concat());
    }
    ctx.csv("gamma", &t)?;
    ctx.plot(
        "gamma",
        Plot {
            title: "sup P(tau > t) t^beta against the scanned site energy",
            xlabel: "E_site",
            ylabel: "gamma",
            logx: true,
            logy: true,
            series: vec![("gamma".into(), 1, 2, "linespoints")],
        },
    )?;
    Ok(json!({ "points": res }))
}

fn collision_time(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_collision_time;
    let g = geometry(ctx.cfg, c.m)?;
    let task = CollisionTask { geometry: &g, points: c.points.clone(), replicas: c.replicas, cap: c.cap };
    let out = ctx.stage("collisions", &task)?;
    ctx.collision_events(&out.results);
    ctx.cap("collision", c.cap);
    let mut rates = Table::new(&["point", "e1", "e2", "rate", "stderr", "r_squared", "mean_tau", "censored_fraction"]);
    let mut series = Vec::new();
    let mut summary = Vec::new();
    for (k, (chunk, p)) in chunks(&out.results, c.replicas).zip(&c.points).enumerate() {
        let ccdf = collision_ccdf(chunk, c.cap)?;
        ctx.censoring(&format!("point {k}"), &ccdf);
        let name = format!("ccdf_{k}");
        ctx.csv(&name, &Table::ccdf(&ccdf, 200))?;
        series.push((name, 1, 2, "lines"));
        let fit = fit_exponential_tail(&ccdf, &ctx.cfg.window);
        let (rate, se, r2) = fit.as_ref().map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.rate(), f.stderr, f.r_squared));
        let e1 = p.first().copied().unwrap_or(f64::NAN);
        let e2 = p.get(1).copied().unwrap_or(f64::NAN);
        rates.push(vec![k as f64, e1, e2, rate, se, r2, ccdf.mean_uncensored().unwrap_or(f64::NAN), ccdf.censored_fraction()]);
        summary.push(json!({ "energies": p, "fit": fit.as_ref().ok(), "fit_error": fit.err().map(|e| e.to_string()) }));
    }
    ctx.csv("rates", &rates)?;
    ctx.plot("ccdf", Plot { title: "First cross-collision time", xlabel: "t", ylabel: "P(tau > t)", logx: false, logy: true, series })?;
    Ok(json!({ "points": summary }))
}

fn rate_table(points: &[exchain_core::experiments::RatePoint]) -> Table {
    let mut t = Table::new(&["e1", "rate", "stderr", "r_squared", "censored_fraction", "mean_tau"]);
    for p in points {
        t.push(vec![p.e1, p.rate, p.stderr, p.r_squared, p.censored_fraction, p.mean_tau]);
    }
    t
}

fn billiard_rate(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_rate;
    let g = geometry(ctx.cfg, c.m)?;
    let run = ctx.settings();
    let (points, out) = rate_surface(&g, &c.grid, c.replicas, c.cap, &ctx.cfg.window, &run)?;
    ctx.record("collisions", &run, &out);
    ctx.collision_events(&out.results);
    ctx.cap("collision", c.cap);
    ctx.csv("rate", &rate_table(&points))?;
    ctx.plot(
        "rate",
        Plot {
            title: "First-collision rate against the smaller cell energy",
            xlabel: "E1",
            ylabel: "R",
            logx: true,
            logy: true,
            series: vec![("rate".into(), 1, 2, "linespoints")],
        },
    )?;
    let slope = rate_law_slope(&points, c.fit_lo, c.fit_hi);
    Ok(json!({
        "points": points,
        "slope": slope.as_ref().ok(),
        "slope_error": slope.err().map(|e| e.to_string()),
    }))
}

fn billiard_lambda(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_lambda;
    let g = geometry(ctx.cfg, c.m)?;
    ctx.cap("collision", c.cap);
    let mut rate = match c.rate {
        RateKind::Surface => {
            let run = ctx.settings();
            let (points, out) = rate_surface(&g, &c.grid, c.rate_replicas, c.cap, &ctx.cfg.window, &run)?;
            ctx.record("rate", &run, &out);
            ctx.collision_events(&out.results);
            ctx.csv("rate", &rate_table(&points))?;
            let knots: Vec<(f64, f64)> = points.iter().filter(|p| p.error.is_none()).map(|p| (p.e1, p.rate)).collect();
            RateFunction::surface(RateSurface::new(&knots)?)
        }
        RateKind::SqrtMin => RateFunction::sqrt_min(),
    };
    let task = ReturnTask {
        geometry: &g,
        energies: c.energies.clone(),
        burn_in: c.burn_in,
        collisions: c.collisions,
        cap: c.cap,
        trajectories: c.trajectories,
    };
    let out = ctx.stage("returns", &task)?;
    ctx.manifest.events += out.results.iter().map(|t| t.events).sum::<u64>();
    if out.results.iter().any(|t| t.censored) {
        ctx.manifest.warnings.push("a return gap exceeded the cap; that trajectory stopped early".into());
    }
    let samples: Vec<_> = out.results.iter().flat_map(|t| t.samples.iter().copied()).collect();
    if c.rate == RateKind::SqrtMin {
        let raw = lambda_rescaled(&samples, &rate)?;
        let mean = raw.mean_uncensored().unwrap_or(1.0);
        rate = rate.scaled(1.0 / mean);
    }
    let lambda = lambda_rescaled(&samples, &rate)?;
    let check = compare_with_exponential(&lambda, c.t_max, c.points);
    let mut t = Table::new(&["t", "ccdf", "stderr", "exp_minus_t"]);
    for k in 0..c.points.max(2) {
        let x = c.t_max * k as f64 / (c.points.max(2) - 1) as f64;
        t.push(vec![x, lambda.ccdf(x), lambda.stderr(x), (-x).exp()]);
    }
    ctx.csv("lambda", &t)?;
    ctx.plot(
        "lambda",
        Plot {
            title: "Rescaled return times",
            xlabel: "t",
            ylabel: "L(t)",
            logx: false,
            logy: true,
            series: vec![("lambda".into(), 1, 2, "lines"), ("lambda".into(), 1, 4, "lines")],
        },
    )?;
    Ok(json!({ "gaps": samples.len(), "check": check }))
}

fn participation(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_participation;
    let g = geometry(ctx.cfg, c.m)?;
    let task = CollisionTask { geometry: &g, points: vec![c.energies.clone()], replicas: c.replicas, cap: c.cap };
    let out = ctx.stage("collisions", &task)?;
    ctx.collision_events(&out.results);
    ctx.cap("collision", c.cap);
    let xs = participation_fractions(&out.results);
    let fit = fit_participation(&xs, c.m, c.bins)?;
    let density = ParticipationDensity::with_exponent(fit.coefficient, c.m as f64 - 2.0)?;
    let h = Histogram::uniform(0.0, 1.0, c.bins, &xs)?;
    let mut t = Table::new(&["x", "density", "fitted_density"]);
    for (x, d) in h.centers().into_iter().zip(h.densities()) {
        t.push(vec![x, d, density.density(x)]);
    }
    ctx.csv("participation", &t)?;
    ctx.plot(
        "participation",
        Plot {
            title: "Energy fraction of the colliding disk",
            xlabel: "x",
            ylabel: "density",
            logx: false,
            logy: false,
            series: vec![("participation".into(), 1, 2, "points"), ("participation".into(), 1, 3, "lines")],
        },
    )?;
    serde_json::to_value(fit).map_err(|e| CliError::Run(e.to_string()))
}

fn postcollision(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_postcollision;
    let (e1, e2) = pair(&c.energies)?;
    let g = geometry(ctx.cfg, c.m)?;
    let task = CollisionTask { geometry: &g, points: vec![c.energies.clone()], replicas: c.replicas, cap: c.cap };
    let out = ctx.stage("collisions", &task)?;
    ctx.collision_events(&out.results);
    ctx.cap("collision", c.cap);
    let test = post_collision_test(&out.results, e1, e2, c.bins)?;
    let n = test.histogram.total() as f64;
    let mut t = Table::new(&["y", "observed", "expected"]);
    for ((y, &k), p) in test.histogram.centers().into_iter().zip(&test.histogram.counts).zip(&test.expected) {
        t.push(vec![y, k as f64 / n, *p]);
    }
    ctx.csv("postcollision", &t)?;
    ctx.plot(
        "postcollision",
        Plot {
            title: "Post-collision energy of the colliding disk",
            xlabel: "E",
            ylabel: "bin probability",
            logx: false,
            logy: false,
            series: vec![("postcollision".into(), 1, 2, "points"), ("postcollision".into(), 1, 3, "lines")],
        },
    )?;
    Ok(json!({ "chi_square": test.chi_square, "ks": test.ks }))
}

fn celltail(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_celltail;
    let (e1, e2) = pair(&c.energies)?;
    let g = geometry(ctx.cfg, c.m)?;
    let task = CollisionTask { geometry: &g, points: vec![c.energies.clone()], replicas: c.replicas, cap: c.cap };
    let out = ctx.stage("collisions", &task)?;
    ctx.collision_events(&out.results);
    ctx.cap("collision", c.cap);
    let billiard = cell_energy_tail(&out.results, c.window.0, c.window.1, c.bins);
    let left: Vec<f64> = out.results.iter().filter(|s| !s.censored).map(|s| s.left_post).collect();
    ctx.csv("billiard", &density_table(&Histogram::log_spaced(c.window.0, c.window.1, c.bins, &left)?, "density"))?;
    let draws = ctx.stage("exchange", &ExchangeTask { m: c.m, e1, e2, draws: c.exchange_draws })?;
    let exchange = density_tail_exponent(&draws.results, c.exchange_window.0, c.exchange_window.1, c.exchange_bins);
    let h = Histogram::log_spaced(c.exchange_window.0, c.exchange_window.1, c.exchange_bins, &draws.results)?;
    ctx.csv("exchange", &density_table(&h, "density"))?;
    ctx.plot(
        "celltail",
        Plot {
            title: "Post-collision cell energy near zero",
            xlabel: "E",
            ylabel: "density",
            logx: true,
            logy: true,
            series: vec![("billiard".into(), 1, 2, "points"), ("exchange".into(), 1, 2, "points")],
        },
    )?;
    Ok(json!({
        "billiard": billiard.as_ref().ok(),
        "billiard_error": billiard.err().map(|e| e.to_string()),
        "exchange": exchange.as_ref().ok(),
        "exchange_error": exchange.err().map(|e| e.to_string()),
    }))
}

fn billiard_flux(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_flux;
    let g = geometry(ctx.cfg, c.m)?;
    let run = ctx.settings();
    let (points, out) = flux_curve(&g, &c.grid, c.replicas, c.cap, &run)?;
    ctx.record("collisions", &run, &out);
    ctx.collision_events(&out.results);
    ctx.cap("collision", c.cap);
    let mut t = Table::new(&["e1", "mean", "stderr", "samples", "censored"]);
    for p in &points {
        t.push(vec![p.e1, p.mean, p.stderr, p.samples as f64, p.censored as f64]);
    }
    ctx.csv("flux", &t)?;
    ctx.plot(
        "flux",
        Plot {
            title: "Mean energy gained by the left cell",
            xlabel: "E1",
            ylabel: "mean flux",
            logx: false,
            logy: false,
            series: vec![("flux".into(), 1, 2, "linespoints")],
        },
    )?;
    let xs: Vec<f64> = points.iter().map(|p| p.e1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let fit = linear_fit(&xs, &ys).ok();
    Ok(json!({ "points": points, "fit": fit, "zero_crossing": fit.map(|f| f.root()) }))
}

fn billiard_passage(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.billiard_passage;
    let g = geometry(ctx.cfg, c.m)?;
    let task = BilliardPassageTask {
        geometry: &g,
        total: c.total,
        threshold: c.threshold,
        target: c.target,
        h: c.h,
        cap: c.cap,
        replicas: c.replicas,
    };
    let out = ctx.stage("passage", &task)?;
    ctx.passage_events(&out.results);
    ctx.cap("passage", c.cap);
    let ccdf = passage_ccdf(&out.results, c.cap)?;
    ctx.censoring("passage", &ccdf);
    ctx.csv("passage", &Table::ccdf(&ccdf, 200))?;
    ctx.plot("passage", log_ccdf_plot("Billiard passage time to the high-energy set", "passage"))?;
    let fit = tail_fit(&ccdf, ctx.cfg, c.fit);
    Ok(json!({
        "replicas": ccdf.total(),
        "censored_fraction": ccdf.censored_fraction(),
        "fit": fit.as_ref().ok(),
        "fit_error": fit.err().map(|e| e.to_string()),
    }))
}

fn conductivity(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.conductivity;
    let s = &ctx.cfg.see;
    let run = ctx.settings();
    let (sweep, out) = conductivity_sweep(s.m, s.t_left, s.t_right, &c.lengths, c.repeats, c.burn_in, c.horizon, &run)?;
    ctx.record("ledgers", &run, &out);
    let mut kappa = Table::new(&["n", "inv_n", "kappa", "stderr"]);
    let mut bonds = Table::new(&["n", "bond", "mean_flux", "stderr"]);
    for p in &sweep.points {
        kappa.push(vec![p.n as f64, 1.0 / p.n as f64, p.kappa, p.stderr]);
        for (b, (m, e)) in p.bonds.mean.iter().zip(&p.bonds.stderr).enumerate() {
            bonds.push(vec![p.n as f64, b as f64, *m, *e]);
        }
    }
    ctx.csv("conductivity", &kappa)?;
    ctx.csv("bonds", &bonds)?;
    ctx.plot(
        "conductivity",
        Plot {
            title: "Thermal conductivity against inverse length",
            xlabel: "1/N",
            ylabel: "kappa",
            logx: false,
            logy: false,
            series: vec![("conductivity".into(), 2, 3, "linespoints")],
        },
    )?;
    serde_json::to_value(sweep).map_err(|e| CliError::Run(e.to_string()))
}

fn calibrate(ctx: &mut Ctx) -> Result<Value, CliError> {
    let c = &ctx.cfg.calibrate_estimators;
    let mut fits = serde_json::Map::new();
    for (name, law) in synthetic_laws(ctx.cfg) {
        let out = ctx.stage(name, &SyntheticTask { law, samples: c.samples })?;
        let ccdf = EmpiricalCcdf::from_samples(out.results)?;
        ctx.csv(name, &Table::ccdf(&ccdf, 200))?;
        let fit = match law {
            SyntheticLaw::Exponential { .. } => fit_exponential_tail(&ccdf, &ctx.cfg.window),
            SyntheticLaw::Pareto { .. } => fit_polynomial_tail(&ccdf, &c.pareto_window),
        };
        let estimate = fit.as_ref().map(|f| -f.slope).ok();
        fits.insert(
            name.into(),
            json!({ "law": law, "estimate": estimate, "fit": fit.as_ref().ok(), "fit_error": fit.err().map(|e| e.to_string()) }),
        );
    }
    ctx.plot(
        "calibration",
        Plot {
            title: "Synthetic calibration samples",
            xlabel: "x",
            ylabel: "P(X > x)",
            logx: true,
            logy: true,
            series: vec![("exponential".into(), 1, 2, "lines"), ("pareto".into(), 1, 2, "lines")],
        },
    )?;
    Ok(Value::Object(fits))
}

/// Loads a run directory: resolved config text and manifest with digests.
pub fn load_run(dir: &Path) -> Result<(String, RunManifest), CliError> {
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE)).map_err(io(format!("reading {CONFIG_FILE}")))?;
    let json = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(io(format!("reading {MANIFEST_FILE}")))?;
    let mut manifest: RunManifest = serde_json::from_str(&json).map_err(|e| CliError::Run(format!("bad manifest: {e}")))?;
    manifest.replica_digests = read_digests(&dir.join(DIGEST_FILE)).map_err(io(format!("reading {DIGEST_FILE}")))?;
    Ok((text, manifest))
}

struct Replay<'a> {
    manifest: &'a RunManifest,
    text: &'a str,
    stage: &'a str,
    seeds: SeedSpec,
    index: u64,
}

impl Replay<'_> {
    fn with<T: ReplicaTask>(&self, task: &T) -> Result<Value, CliError> {
        let out =
            exchain_core::harness::replay(self.manifest, self.text, self.stage, &self.seeds, self.index, |i, rng| task.replica(i, rng))?;
        to_json(&out)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Run(e.to_string()))
}

/// Recomputes replica `index` of a stage (the first one by default) and
/// checks its digest. `seed` replaces the run's seed.
pub fn replay(dir: &Path, index: u64, stage: Option<&str>, seed: Option<u64>) -> Result<Value, CliError> {
    let (text, manifest) = load_run(dir)?;
    manifest.check_replayable(&text)?;
    let cfg = Config::parse(&text)?;
    let experiment = Experiment::from_name(&manifest.experiment)
        .ok_or_else(|| CliError::Run(format!("unknown experiment {:?}", manifest.experiment)))?;
    let name = match stage {
        Some(s) => s,
        None => manifest.stages.first().map(|s| s.name.as_str()).ok_or_else(|| CliError::Run("run has no stages".into()))?,
    };
    let pos = manifest.stages.iter().position(|s| s.name == name).ok_or_else(|| HarnessError::UnknownStage(name.to_string()))?;
    let seeds = match seed {
        Some(s) => SeedSpec::new(s).derive(pos as u64),
        None => SeedSpec::new(manifest.stages[pos].master_seed),
    };
    let r = Replay { manifest: &manifest, text: &text, stage: name, seeds, index };
    let output = match (experiment, name) {
        (Experiment::SeeTail, _) => r.with(&see_tail_task(&cfg)?),
        (Experiment::SeeSimulate, _) => {
            let c = &cfg.see_simulate;
            let start = SeeStart::Point(c.point.clone());
            r.with(&TrajectoryTask { params: see_params(&cfg)?, start, times: c.times.clone(), replicas: c.replicas })
        }
        (Experiment::SeeInvariant, _) => {
            let c = &cfg.see_invariant;
            r.with(&InvariantTask { params: see_params(&cfg)?, t_relax: c.t_relax, t_check: c.t_check, replicas: c.replicas })
        }
        (Experiment::SeeGammaScan, _) => {
            let c = &cfg.see_gamma_scan;
            let starts = gamma_points(&cfg)?.into_iter().map(SeeStart::Point).collect();
            r.with(&SeePassageTask { params: see_params(&cfg)?, starts, reference: cfg.reference, replicas: c.replicas, cap: c.cap })
        }
        (Experiment::BilliardCollisionTime, _) => {
            let c = &cfg.billiard_collision_time;
            let g = geometry(&cfg, c.m)?;
            r.with(&CollisionTask { geometry: &g, points: c.points.clone(), replicas: c.replicas, cap: c.cap })
        }
        (Experiment::BilliardRate, _) => {
            let c = &cfg.billiard_rate;
            r.with(&CollisionTask::line(&geometry(&cfg, c.m)?, &c.grid, c.replicas, c.cap))
        }
        (Experiment::BilliardLambda, "rate") => {
            let c = &cfg.billiard_lambda;
            r.with(&CollisionTask::line(&geometry(&cfg, c.m)?, &c.grid, c.rate_replicas, c.cap))
        }
        (Experiment::BilliardLambda, _) => {
            let c = &cfg.billiard_lambda;
            let g = geometry(&cfg, c.m)?;
            r.with(&ReturnTask {
                geometry: &g,
                energies: c.energies.clone(),
                burn_in: c.burn_in,
                collisions: c.collisions,
                cap: c.cap,
                trajectories: c.trajectories,
            })
        }
        (Experiment::BilliardParticipation | Experiment::BilliardPostcollision, _) => {
            let c = if experiment == Experiment::BilliardParticipation { &cfg.billiard_participation } else { &cfg.billiard_postcollision };
            let g = geometry(&cfg, c.m)?;
            r.with(&CollisionTask { geometry: &g, points: vec![c.energies.clone()], replicas: c.replicas, cap: c.cap })
        }
        (Experiment::BilliardCelltail, "exchange") => {
            let c = &cfg.billiard_celltail;
            let (e1, e2) = pair(&c.energies)?;
            r.with(&ExchangeTask { m: c.m, e1, e2, draws: c.exchange_draws })
        }
        (Experiment::BilliardCelltail, _) => {
            let c = &cfg.billiard_celltail;
            let g = geometry(&cfg, c.m)?;
            r.with(&CollisionTask { geometry: &g, points: vec![c.energies.clone()], replicas: c.replicas, cap: c.cap })
        }
        (Experiment::BilliardFlux, _) => {
            let c = &cfg.billiard_flux;
            r.with(&CollisionTask::line(&geometry(&cfg, c.m)?, &c.grid, c.replicas, c.cap))
        }
        (Experiment::BilliardPassage, _) => {
            let c = &cfg.billiard_passage;
            let g = geometry(&cfg, c.m)?;
            r.with(&BilliardPassageTask {
                geometry: &g,
                total: c.total,
                threshold: c.threshold,
                target: c.target,
                h: c.h,
                cap: c.cap,
                replicas: c.replicas,
            })
        }
        (Experiment::Conductivity, _) => {
            let c = &cfg.conductivity;
            r.with(&ConductivityTask { params: conductivity_params(&cfg)?, repeats: c.repeats, burn_in: c.burn_in, horizon: c.horizon })
        }
        (Experiment::CalibrateEstimators, _) => {
            let (_, law) =
                synthetic_laws(&cfg).into_iter().find(|(n, _)| *n == name).ok_or_else(|| HarnessError::UnknownStage(name.to_string()))?;
            r.with(&SyntheticTask { law, samples: cfg.calibrate_estimators.samples })
        }
    }?;
    let digest = manifest.replica_digests.get((manifest.stages[pos].offset + index) as usize).copied().unwrap_or_default();
    Ok(json!({
        "experiment": manifest.experiment,
        "stage": name,
        "index": index,
        "master_seed": seeds.master_seed,
        "digest": format!("{digest:016x}"),
        "output": output,
    }))
}
