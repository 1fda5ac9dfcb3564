//! One function per subcommand. Symbols are reported 1-based.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use intermap::diagnostics::{
    checkpoints, continuity_experiment, kac_experiment, orbit_histogram, preimage_bounds_check, preimage_sequence,
    sweep, HistogramOptions, KacOptions, ReturnStats, StartLaw, UlamModel,
};
use intermap::transfer::{
    auxiliary_trials, check_cone_c0, check_cone_c1, check_cone_c2, cone_preservation, converged_density,
    fit_global_envelope, lipschitz_envelope_check, power_iterate, ConeParams, DensityGrid, Grid, IterationOptions,
    PowerIteration,
};
use intermap::{Half, Phase, PhaseReport, RandomSystem};

use crate::config::{KacStart, LoadedConfig};
use crate::error::CliError;
use crate::output::{Cell, Output};

pub struct Context<'a> {
    pub loaded: &'a LoadedConfig,
    pub system: RandomSystem,
    pub out: Option<&'a Path>,
}

impl Context<'_> {
    fn output(&self, command: &'static str) -> Result<Output<'_>, CliError> {
        Output::new(self.out, command, &self.loaded.config)
    }

    fn grid(&self) -> Result<Arc<Grid>, CliError> {
        self.loaded.config.grid.spec().build().map_err(|e| self.loaded.error("grid", e.to_string()))
    }

    /// Maps a core error to an exit class: bad inputs are configuration
    /// errors anchored at `block`, everything else is numerical.
    fn fail(&self, block: &str) -> impl Fn(intermap::Error) -> CliError + '_ {
        let block = block.to_string();
        move |e| match e {
            intermap::Error::InvalidSystem(_)
            | intermap::Error::InvalidArgument(_)
            | intermap::Error::Precondition(_) => self.loaded.error(&block, e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }

    fn converged(&self) -> Result<PowerIteration, CliError> {
        let c = &self.loaded.config.converge;
        converged_density(&self.system, self.grid()?, c.max_iterations, c.tolerance).map_err(self.fail("converge"))
    }
}

fn half_name(h: Half) -> &'static str {
    match h {
        Half::Left => "left",
        Half::Right => "right",
    }
}

fn density_rows(f: &DensityGrid) -> impl Iterator<Item = Vec<Cell>> + '_ {
    let o = f.grid().offsets();
    [Half::Left, Half::Right].into_iter().flat_map(move |h| {
        o.iter().zip(f.values(h)).map(move |(&t, &v)| {
            let x = if h == Half::Left { t } else { 0.5 + t };
            vec![half_name(h).into(), t.into(), x.into(), v.into()]
        })
    })
}

const DENSITY_HEADER: &[&str] = &["half", "t", "x", "density"];

fn bin_rows(masses: &[f64]) -> impl Iterator<Item = Vec<Cell>> + '_ {
    let n = masses.len() as f64;
    masses.iter().enumerate().map(move |(i, &m)| {
        vec![i.into(), (i as f64 / n).into(), ((i + 1) as f64 / n).into(), m.into(), (m * n).into()]
    })
}

const BIN_HEADER: &[&str] = &["bin", "left", "right", "mass", "density"];

pub fn classify(ctx: &Context) -> Result<(), CliError> {
    ctx.output("classify")?.summary(ctx.system.classify())
}

#[derive(Serialize)]
struct PerHalf {
    left: f64,
    right: f64,
}

#[derive(Serialize)]
struct Envelope {
    beta: f64,
    t1: f64,
    t2: f64,
    fitted_a1: f64,
    fitted_a2: f64,
    sufficient_a1: f64,
    sufficient_a2: f64,
}

#[derive(Serialize)]
struct ResidualPoint {
    step: usize,
    residual: f64,
}

#[derive(Serialize)]
struct DensityReport {
    phase: Phase,
    iterations: usize,
    converged: bool,
    cesaro: bool,
    final_residual: Option<f64>,
    /// Residuals at every step up to 100, then about 20 per decade.
    residual_history: Vec<ResidualPoint>,
    mass: f64,
    tail_exponents: PerHalf,
    tail_masses: PerHalf,
    pole_slopes: PerHalf,
    max: PerHalf,
    /// Innermost values on either side of `1/2`.
    value_below_half: f64,
    value_above_half: f64,
    c0: bool,
    envelope: Option<Envelope>,
    /// Smallest `a` with `f <= a x^(-alpha_min)` on `(0, 1]`; reported when
    /// `sum_r p_r / K_r < 1`.
    alpha_min_envelope: Option<f64>,
}

fn envelope(system: &RandomSystem, f: &DensityGrid, beta: Option<f64>) -> Option<Envelope> {
    let p = ConeParams::new(system, beta).ok()?;
    let c2 = check_cone_c2(f, &p);
    Some(Envelope {
        beta: p.beta,
        t1: p.t1,
        t2: p.t2,
        fitted_a1: c2.fitted_a1,
        fitted_a2: c2.fitted_a2,
        sufficient_a1: p.a1,
        sufficient_a2: p.a2,
    })
}

pub fn density(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config.density;
    if let Some(b) = c.beta {
        ConeParams::new(&ctx.system, Some(b)).map_err(ctx.fail("beta"))?;
    }
    let options = IterationOptions { iterations: c.iterations, tolerance: c.tolerance, cesaro: c.cesaro };
    let run = power_iterate(&ctx.system, ctx.grid()?, options).map_err(ctx.fail("density"))?;
    let f = &run.density;
    let out = ctx.output("density")?;
    out.table("density.csv", DENSITY_HEADER, density_rows(f))?;
    out.table(
        "residuals.csv",
        &["step", "residual"],
        run.residuals.iter().enumerate().map(|(k, &r)| vec![(k + 1).into(), r.into()]),
    )?;
    let history = if run.residuals.is_empty() {
        Vec::new()
    } else {
        checkpoints(run.residuals.len())
            .into_iter()
            .map(|step| ResidualPoint { step, residual: run.residuals[step - 1] })
            .collect()
    };
    let inverse_slope_sum: f64 = ctx.system.attracting().map(|(p, k)| p / k).sum();
    let report = DensityReport {
        phase: run.phase,
        iterations: run.iterations,
        converged: run.converged,
        cesaro: c.cesaro,
        final_residual: run.residuals.last().copied(),
        residual_history: history,
        mass: f.mass(),
        tail_exponents: PerHalf { left: f.tails().left, right: f.tails().right },
        tail_masses: PerHalf { left: f.tail_mass(Half::Left), right: f.tail_mass(Half::Right) },
        pole_slopes: PerHalf { left: f.pole_slope(Half::Left), right: f.pole_slope(Half::Right) },
        max: PerHalf { left: f.max(Half::Left), right: f.max(Half::Right) },
        value_below_half: *f.left_values().last().unwrap(),
        value_above_half: f.right_values()[0],
        c0: check_cone_c0(f).pass,
        envelope: envelope(&ctx.system, f, c.beta),
        alpha_min_envelope: (inverse_slope_sum < 1.0).then(|| fit_global_envelope(f, ctx.system.alpha_min())),
    };
    out.summary(report)
}

#[derive(Serialize)]
struct OrbitReport {
    seed: u64,
    x0: f64,
    steps: usize,
    final_point: f64,
}

pub fn orbit(ctx: &Context, seed: u64) -> Result<(), CliError> {
    let c = &ctx.loaded.config.orbit;
    let trace = ctx.system.sample_orbit(seed, c.x0, c.steps).map_err(ctx.fail("orbit"))?;
    let out = ctx.output("orbit")?;
    let rows = trace.points.iter().enumerate().map(|(n, &x)| {
        let symbol = n.checked_sub(1).map(|i| trace.word[i] + 1);
        vec![n.into(), symbol.into(), x.into()]
    });
    out.table("orbit.csv", &["n", "symbol", "x"], rows)?;
    out.summary(OrbitReport { seed, x0: c.x0, steps: c.steps, final_point: *trace.points.last().unwrap() })
}

#[derive(Serialize)]
struct HistogramReport {
    seed: u64,
    bins: usize,
    replicas: u64,
    recorded: u64,
    burn_in_per_replica: u64,
    mass_near_half: f64,
    mass_near_zero: f64,
}

pub fn histogram(ctx: &Context, seed: u64) -> Result<(), CliError> {
    let c = &ctx.loaded.config.histogram;
    let options = HistogramOptions { x0: c.x0, seed, steps: c.steps, bins: c.bins, replicas: c.replicas };
    let h = orbit_histogram(&ctx.system, options).map_err(ctx.fail("histogram"))?;
    let out = ctx.output("histogram")?;
    out.table("histogram.csv", BIN_HEADER, bin_rows(&h.masses))?;
    out.summary(HistogramReport {
        seed,
        bins: h.bins,
        replicas: c.replicas,
        recorded: h.recorded,
        burn_in_per_replica: h.burn_in,
        mass_near_half: h.mass_between(0.5, 0.51),
        mass_near_zero: h.mass_between(0.0, 0.01),
    })
}

#[derive(Serialize)]
struct UlamReport {
    bins: usize,
    iterations: usize,
    residual: f64,
}

pub fn ulam(ctx: &Context) -> Result<(), CliError> {
    let m = UlamModel::build(&ctx.system, ctx.loaded.config.ulam.bins).map_err(ctx.fail("ulam"))?;
    let out = ctx.output("ulam")?;
    out.table("ulam.csv", BIN_HEADER, bin_rows(&m.stationary))?;
    out.summary(UlamReport { bins: m.bins, iterations: m.iterations, residual: m.residual })
}

#[derive(Serialize)]
struct Fibre {
    symbol: usize,
    a: (f64, f64),
    b: (f64, f64),
}

#[derive(Serialize)]
struct KacReport {
    seed: u64,
    phase: Phase,
    eta: f64,
    start_law: StartLaw,
    fibres: Vec<Fibre>,
    /// Stationary mass of the return set; its inverse is the Kac mean.
    set_mass: Option<f64>,
    kac_mean: Option<f64>,
    density_iterations: Option<usize>,
    stats: Vec<ReturnStats>,
    /// Set when more than 1% of the samples hit the cap.
    heavy_censoring: bool,
}

pub fn kac(ctx: &Context, seed: u64) -> Result<(), CliError> {
    let c = &ctx.loaded.config.kac;
    let report = ctx.system.classify();
    let run_density = c.start == KacStart::Density && report.phase == Phase::FiniteACS;
    if c.start == KacStart::Density && !run_density {
        log::warn!("no finite stationary density in phase {:?}; starting from the uniform law", report.phase);
    }
    let density = if run_density { Some(ctx.converged()?) } else { None };
    let options = KacOptions { seed, samples: c.samples, cap: c.cap };
    let run = kac_experiment(&ctx.system, density.as_ref().map(|d| &d.density), options).map_err(ctx.fail("kac"))?;
    let out = ctx.output("kac")?;
    let rows = run.samples.iter().enumerate().map(|(i, s)| {
        vec![i.into(), (s.start_symbol + 1).into(), s.start_point.into(), s.return_time.into(), s.censored.into()]
    });
    out.table("returns.csv", &["sample", "symbol", "x", "time", "censored"], rows)?;
    let mut sizes = c.sizes.clone();
    if !sizes.contains(&c.samples) {
        sizes.push(c.samples);
    }
    let stats: Vec<ReturnStats> = sizes.iter().map(|&n| run.stats(n)).collect();
    let heavy_censoring = stats.last().is_some_and(|s| s.censored_fraction > 0.01);
    if heavy_censoring {
        log::warn!("more than 1% of return times were censored at cap {}", c.cap);
    }
    out.summary(KacReport {
        seed,
        phase: report.phase,
        eta: report.eta,
        start_law: run.start_law,
        fibres: run.fibres.iter().map(|f| Fibre { symbol: f.symbol + 1, a: f.a, b: f.b }).collect(),
        set_mass: run.set_mass,
        kac_mean: run.set_mass.map(|m| 1.0 / m),
        density_iterations: density.as_ref().map(|d| d.iterations),
        stats,
        heavy_censoring,
    })
}

#[derive(Serialize)]
struct Check {
    pass: bool,
    detail: Option<String>,
}

impl Check {
    fn of(c: &intermap::transfer::ConeCheck) -> Self {
        Self { pass: c.pass, detail: c.violation.map(|v| format!("{v:?}")) }
    }
}

#[derive(Serialize)]
struct ConesReport {
    seed: u64,
    params: ConeParams,
    density_iterations: usize,
    density_converged: bool,
    c0: Check,
    c1: Check,
    c2_sufficient: bool,
    fitted_a1: f64,
    fitted_a2: f64,
    mass: f64,
    lipschitz_fitted: Check,
    members: usize,
    members_preserved: usize,
    auxiliary_trials: usize,
    auxiliary_passed: usize,
    pass: bool,
}

pub fn cones(ctx: &Context, seed: u64) -> Result<(), CliError> {
    let c = &ctx.loaded.config.cones;
    let params = ConeParams::new(&ctx.system, c.beta).map_err(ctx.fail("cones"))?;
    let grid = ctx.grid()?;
    let run = ctx.converged()?;
    let f = &run.density;
    let c2 = check_cone_c2(f, &params);
    let fitted = params.with_envelope(c2.fitted_a1, c2.fitted_a2);
    let trials = cone_preservation(&ctx.system, &grid, &params, seed, c.members).map_err(ctx.fail("cones"))?;
    let aux = auxiliary_trials(seed, c.auxiliary).map_err(ctx.fail("cones"))?;
    let out = ctx.output("cones")?;
    let rows = trials.iter().enumerate().map(|(i, t)| {
        vec![
            i.into(),
            t.pass().into(),
            t.input_a1.into(),
            t.input_a2.into(),
            t.output_a1.into(),
            t.output_a2.into(),
            t.c0.pass.into(),
            t.c1.pass.into(),
            t.c2.pass.into(),
        ]
    });
    let header = ["member", "pass", "input_a1", "input_a2", "output_a1", "output_a2", "c0", "c1", "c2"];
    out.table("cone_members.csv", &header, rows)?;
    let rows = aux.iter().map(|t| {
        vec![
            t.alpha.into(),
            t.k.into(),
            t.b.into(),
            t.d.into(),
            t.report.ratio_increasing.into(),
            t.report.h_pass.into(),
            t.report.pass.into(),
        ]
    });
    out.table("auxiliary.csv", &["alpha", "kappa", "b", "d", "ratio_increasing", "h_monotone", "pass"], rows)?;
    let c0 = Check::of(&check_cone_c0(f));
    let c1 = Check::of(&check_cone_c1(f, &params));
    let lipschitz_fitted = Check::of(&lipschitz_envelope_check(f, &fitted));
    let members_preserved = trials.iter().filter(|t| t.pass()).count();
    let auxiliary_passed = aux.iter().filter(|t| t.report.pass).count();
    let pass = c0.pass
        && c1.pass
        && c2.pass
        && lipschitz_fitted.pass
        && members_preserved == trials.len()
        && auxiliary_passed == aux.len();
    out.summary(ConesReport {
        seed,
        params,
        density_iterations: run.iterations,
        density_converged: run.converged,
        c0,
        c1,
        c2_sufficient: c2.pass,
        fitted_a1: c2.fitted_a1,
        fitted_a2: c2.fitted_a2,
        mass: c2.mass,
        lipschitz_fitted,
        members: trials.len(),
        members_preserved,
        auxiliary_trials: aux.len(),
        auxiliary_passed,
        pass,
    })
}

#[derive(Serialize)]
struct Ratio {
    symbol: usize,
    alpha: f64,
    ratio_min: f64,
    ratio_max: f64,
    spread: f64,
    pass: bool,
}

#[derive(Serialize)]
struct PreimagesReport {
    seed: u64,
    n_max: usize,
    words: usize,
    lower_symbol: usize,
    ratios: Vec<Ratio>,
    worst_ordering_gap: f64,
    ordering_pass: bool,
    pass: bool,
}

pub fn preimages(ctx: &Context, seed: u64) -> Result<(), CliError> {
    let c = &ctx.loaded.config.preimages;
    let r = preimage_bounds_check(&ctx.system, seed, c.n_max, c.words).map_err(ctx.fail("preimages"))?;
    let seqs = ctx
        .system
        .maps()
        .iter()
        .map(|m| preimage_sequence(m, c.n_max))
        .collect::<intermap::Result<Vec<_>>>()
        .map_err(ctx.fail("preimages"))?;
    let out = ctx.output("preimages")?;
    let names: Vec<String> = (1..=seqs.len()).map(|j| format!("x_n_{j}")).collect();
    let mut header = vec!["n"];
    header.extend(names.iter().map(String::as_str));
    let rows = (0..c.n_max).map(|k| {
        let mut row = vec![Cell::from(k + 1)];
        row.extend(seqs.iter().map(|s| Cell::from(s[k])));
        row
    });
    out.table("preimages.csv", &header, rows)?;
    out.summary(PreimagesReport {
        seed,
        n_max: r.n_max,
        words: r.words,
        lower_symbol: r.lower_symbol + 1,
        ratios: r
            .ratios
            .iter()
            .map(|b| Ratio {
                symbol: b.symbol + 1,
                alpha: b.alpha,
                ratio_min: b.ratio_min,
                ratio_max: b.ratio_max,
                spread: b.spread,
                pass: b.pass,
            })
            .collect(),
        worst_ordering_gap: r.worst_ordering_gap,
        ordering_pass: r.ordering_pass,
        pass: r.pass,
    })
}

#[derive(Serialize)]
struct ContinuityReport {
    points: Vec<intermap::diagnostics::ContinuityPoint>,
    /// Distances strictly decrease as `delta` decreases.
    monotone: bool,
}

pub fn continuity(ctx: &Context) -> Result<(), CliError> {
    let Some(c) = &ctx.loaded.config.continuity else {
        return Err(ctx.loaded.error("maps", "the continuity command needs a \"continuity\" block"));
    };
    let options = ctx.loaded.config.converge.options();
    let points = continuity_experiment(&ctx.system, &c.direction, &c.deltas, &ctx.grid()?, options)
        .map_err(ctx.fail("continuity"))?;
    let out = ctx.output("continuity")?;
    let rows = points
        .iter()
        .map(|p| vec![p.delta.into(), p.eta.into(), p.distance.into(), p.iterations.into(), p.converged.into()]);
    out.table("continuity.csv", &["delta", "eta", "distance", "iterations", "converged"], rows)?;
    let mut by_delta = points.clone();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let monotone = by_delta.windows(2).all(|w| w[1].distance < w[0].distance);
    out.summary(ContinuityReport { points, monotone })
}

pub fn sweep_cmd(ctx: &Context) -> Result<(), CliError> {
    let Some(c) = &ctx.loaded.config.sweep else {
        return Err(ctx.loaded.error("maps", "the sweep command needs a \"sweep\" block"));
    };
    let grid = ctx.grid()?;
    let density = c.density.then(|| (&grid, ctx.loaded.config.converge.options()));
    let rows = sweep(&ctx.system, c.parameter(), &c.values, density);
    let out = ctx.output("sweep")?;
    let header = [
        "value",
        "eta",
        "gamma",
        "alpha_min",
        "alpha_max",
        "phase",
        "beta_lower",
        "beta_upper",
        "iterations",
        "converged",
        "final_residual",
        "left_slope",
        "right_slope",
        "right_max",
        "error",
    ];
    let csv_rows = rows.iter().map(|r| {
        let p: Option<&PhaseReport> = r.report.as_ref();
        let beta = p.and_then(|p| p.beta_range);
        let d = r.density;
        vec![
            r.value.into(),
            p.map(|p| p.eta).into(),
            p.map(|p| p.gamma).into(),
            p.map(|p| p.alpha_min).into(),
            p.map(|p| p.alpha_max).into(),
            p.map(|p| Cell::S(format!("{:?}", p.phase))).unwrap_or(Cell::Empty),
            beta.map(|b| b.lower).into(),
            beta.map(|b| b.upper).into(),
            d.map(|d| d.iterations).into(),
            d.map(|d| d.converged).into(),
            d.map(|d| d.final_residual).into(),
            d.map(|d| d.left_slope).into(),
            d.map(|d| d.right_slope).into(),
            d.map(|d| d.right_max).into(),
            r.error.as_deref().into(),
        ]
    });
    out.table("sweep.csv", &header, csv_rows)?;
    out.summary(&rows)
}
