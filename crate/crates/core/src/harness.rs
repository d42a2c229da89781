//! Run configuration, the four commands behind the `gwp` binary, CSV
//! emission, and gnuplot script generation. Everything here returns text;
//! file and process handling stays in the binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    bracket_rhs, classical_hamiltonian, integrate_packet, rk4_integrate, semiclassical_hamiltonian, semiclassical_rhs, zhou_rhs, ClassicalPhasePoint,
    ModelKind, Monitor, PacketTangent, Trajectory, DEFAULT_FD_STEP,
};
use crate::egorov::{propagate_ensemble, EgorovEstimate, EgorovPlan, Observable, PhaseEnsemble, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::expectations::{asymptotic_expectation, full_hamiltonian, gaussian_expectation, QuadratureRule, DEFAULT_GH_NODES};
use crate::observables::{semiclassical_angular_momentum, ConvergenceReport};
use crate::potentials::{builtin, fd_cross_check, rotation_2d, rotational_symmetry_check, FieldModel, LinearTilt, QuadraticLinear, SharedField, BUILTIN_NAMES};
use crate::state::PacketState;

/// Every key accepted in a config file; flags use the same names with `-` for `_`.
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "potential",
    "q",
    "p",
    "A",
    "B",
    "hbar",
    "hbars",
    "dt",
    "t_final",
    "t_star",
    "samples",
    "samples_per_hbar",
    "seed",
    "gh_nodes",
    "out",
    "observables",
    "stride",
    "antithetic",
    "mass",
    "K",
    "b_lin",
    "c",
    "M0",
    "a0",
];

/// `ℏ` values of the default convergence sweep.
pub const DEFAULT_HBARS: [f64; 6] = [0.5, 0.3, 0.1, 0.05, 0.03, 0.01];

const QUADRATIC_KEYS: [&str; 5] = ["K", "b_lin", "c", "M0", "a0"];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Config(format!("line {}: key `{k}` given twice", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn check_key(k: &str) -> Result<()> {
    if CONFIG_KEYS.contains(&k) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key `{k}`; known keys: {}", CONFIG_KEYS.join(", "))))
    }
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}` as a number", s.trim())))).collect()
}

fn parse_scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

/// Parses a row-major `d×d` matrix.
pub fn parse_matrix(key: &str, v: &str, d: usize) -> Result<Vec<f64>> {
    let m = parse_list(key, v)?;
    if m.len() != d * d {
        return Err(Error::Config(format!("`{key}` needs {} comma-separated entries for d = {d}, got {}", d * d, m.len())));
    }
    Ok(m)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("`{key}`: expected true or false, got `{other}`"))),
    }
}

/// Accepts `1000000`, `1e6` and `1_000_000`.
fn parse_count(key: &str, v: &str) -> Result<usize> {
    let s = v.trim().replace('_', "");
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let f: f64 = s.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}` as a count")))?;
    if f >= 0.0 && f.fract() == 0.0 && f <= 1e15 {
        Ok(f as usize)
    } else {
        Err(Error::Config(format!("`{key}`: `{v}` is not a whole number")))
    }
}

/// Built-in initial data and defaults for the two preset potentials.
struct Preset {
    q: &'static [f64],
    p: &'static [f64],
    a: &'static [f64],
    b: &'static [f64],
    t_star: f64,
}

fn preset(potential: &str) -> Option<Preset> {
    match potential {
        "cosine1d" => Some(Preset { q: &[0.5], p: &[-1.0], a: &[0.0], b: &[1.0], t_star: 1.6 }),
        "quartic2d" => Some(Preset { q: &[1.0, 0.0], p: &[0.0, 1.0], a: &[-3.0, -6.0, -6.0, -6.0], b: &[1.0, 0.5, 0.5, 1.0], t_star: 2.0 }),
        _ => None,
    }
}

/// Fully validated run parameters.
#[derive(Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub potential: String,
    pub field: SharedField,
    pub state: PacketState,
    pub hbar: f64,
    pub hbars: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub t_star: Option<f64>,
    /// Uniform ensemble size; `None` means the default per `ℏ`.
    pub samples: Option<usize>,
    pub samples_per_hbar: Option<Vec<usize>>,
    pub seed: u64,
    pub gh_nodes: usize,
    pub out: Option<String>,
    pub observables: Vec<Observable>,
    pub stride: usize,
    pub antithetic: bool,
}

impl std::fmt::Debug for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunConfig")
            .field("model", &self.model)
            .field("potential", &self.potential)
            .field("state", &self.state)
            .field("hbar", &self.hbar)
            .field("hbars", &self.hbars)
            .field("dt", &self.dt)
            .field("t_final", &self.t_final)
            .field("t_star", &self.t_star)
            .field("samples", &self.samples)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl RunConfig {
    /// Merges file entries with overrides (overrides win) and validates.
    pub fn from_pairs(file: &[(String, String)], overrides: &[(String, String)]) -> Result<Self> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in file.iter().chain(overrides) {
            check_key(k)?;
            map.insert(k.as_str(), v.as_str());
        }
        Self::from_map(&map)
    }

    /// Parses config text and applies overrides.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_pairs(&parse_config_text(text)?, overrides)
    }

    fn from_map(map: &BTreeMap<&str, &str>) -> Result<Self> {
        let get = |k: &str| map.get(k).copied();
        let model = get("model").map(str::parse).transpose()?.unwrap_or(ModelKind::Semiclassical);
        let potential = get("potential").unwrap_or("cosine1d").to_string();
        if !BUILTIN_NAMES.contains(&potential.as_str()) {
            return Err(Error::Unknown { kind: "potential", name: potential, available: BUILTIN_NAMES.join(", ") });
        }
        let pre = preset(&potential);

        let q = match (get("q"), &pre) {
            (Some(v), _) => parse_list("q", v)?,
            (None, Some(p)) => p.q.to_vec(),
            (None, None) => return Err(Error::Config(format!("potential `{potential}` needs an initial `q`"))),
        };
        let d = q.len();
        if let Some(p) = &pre {
            if p.q.len() != d {
                return Err(Error::Config(format!("potential `{potential}` is {}-dimensional but q has {d} entries", p.q.len())));
            }
        }
        let p = match (get("p"), &pre) {
            (Some(v), _) => parse_list("p", v)?,
            (None, Some(pr)) => pr.p.to_vec(),
            (None, None) => return Err(Error::Config(format!("potential `{potential}` needs an initial `p`"))),
        };
        if p.len() != d {
            return Err(Error::Config(format!("p has {} entries but q has {d}", p.len())));
        }
        let identity: Vec<f64> = (0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 } else { 0.0 }).collect();
        let a = match (get("A"), &pre) {
            (Some(v), _) => parse_matrix("A", v, d)?,
            (None, Some(pr)) => pr.a.to_vec(),
            (None, None) => vec![0.0; d * d],
        };
        let b = match (get("B"), &pre) {
            (Some(v), _) => parse_matrix("B", v, d)?,
            (None, Some(pr)) => pr.b.to_vec(),
            (None, None) => identity,
        };
        let state = PacketState::from_slices(&q, &p, &a, &b)?;

        let mass = get("mass").map(|v| parse_scalar::<f64>("mass", v)).transpose()?;
        if mass.is_some() && pre.is_some() {
            return Err(Error::Config(format!("`mass` is fixed to 1 for potential `{potential}`")));
        }
        let mass = mass.unwrap_or(1.0);
        if let Some(k) = QUADRATIC_KEYS.iter().find(|k| map.contains_key(**k)) {
            if potential != "quadratic" {
                return Err(Error::Config(format!("`{k}` only applies to potential = quadratic")));
            }
        }
        let field: SharedField = if potential == "quadratic" {
            let k = get("K").ok_or_else(|| Error::Config("potential `quadratic` needs `K`".into()))?;
            let k = parse_matrix("K", k, d)?;
            let b_lin = get("b_lin").map(|v| parse_list("b_lin", v)).transpose()?.unwrap_or(vec![0.0; d]);
            let c = get("c").map(|v| parse_scalar::<f64>("c", v)).transpose()?.unwrap_or(0.0);
            let m0 = get("M0").map(|v| parse_matrix("M0", v, d)).transpose()?.unwrap_or(vec![0.0; d * d]);
            let a0 = get("a0").map(|v| parse_list("a0", v)).transpose()?.unwrap_or(vec![0.0; d]);
            if b_lin.len() != d || a0.len() != d {
                return Err(Error::Config(format!("`b_lin` and `a0` need {d} entries")));
            }
            Arc::new(QuadraticLinear::new(&k, &b_lin, c, &m0, &a0, mass)?)
        } else {
            builtin(&potential, d, mass)?
        };

        let hbar = get("hbar").map(|v| parse_scalar::<f64>("hbar", v)).transpose()?.unwrap_or(0.1);
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Config(format!("`hbar` must be positive, got {hbar}")));
        }
        let hbars = get("hbars").map(|v| parse_list("hbars", v)).transpose()?.unwrap_or(DEFAULT_HBARS.to_vec());
        if let Some(h) = hbars.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::Config(format!("`hbars` entries must be positive, got {h}")));
        }
        let dt = get("dt").map(|v| parse_scalar::<f64>("dt", v)).transpose()?.unwrap_or(0.01);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("`dt` must be positive, got {dt}")));
        }
        let t_final = get("t_final").map(|v| parse_scalar::<f64>("t_final", v)).transpose()?.unwrap_or(3.0);
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::Config(format!("`t_final` must be non-negative, got {t_final}")));
        }
        let t_star = get("t_star").map(|v| parse_scalar::<f64>("t_star", v)).transpose()?.or(pre.as_ref().map(|p| p.t_star));
        if let Some(t) = t_star {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("`t_star` must be positive, got {t}")));
            }
        }
        let samples = get("samples").map(|v| parse_count("samples", v)).transpose()?;
        let samples_per_hbar =
            get("samples_per_hbar").map(|v| v.split(',').map(|s| parse_count("samples_per_hbar", s)).collect::<Result<Vec<_>>>()).transpose()?;
        if samples.is_some() && samples_per_hbar.is_some() {
            return Err(Error::Config("give either `samples` or `samples_per_hbar`, not both".into()));
        }
        if let Some(list) = &samples_per_hbar {
            if list.len() != hbars.len() {
                return Err(Error::Config(format!("`samples_per_hbar` has {} entries for {} hbars", list.len(), hbars.len())));
            }
        }
        if samples == Some(0) || samples_per_hbar.as_ref().is_some_and(|l| l.contains(&0)) {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        let seed = get("seed").map(|v| parse_scalar::<u64>("seed", v)).transpose()?.unwrap_or(0);
        let gh_nodes = get("gh_nodes").map(|v| parse_count("gh_nodes", v)).transpose()?.unwrap_or(DEFAULT_GH_NODES);
        if gh_nodes == 0 {
            return Err(Error::Config("`gh_nodes` must be at least 1".into()));
        }
        let observables = match get("observables") {
            Some(v) => v.split(',').map(|s| parse_observable(s.trim(), d)).collect::<Result<Vec<_>>>()?,
            None => Observable::standard_set(d),
        };
        let stride = get("stride").map(|v| parse_count("stride", v)).transpose()?.unwrap_or(1);
        if stride == 0 {
            return Err(Error::Config("`stride` must be at least 1".into()));
        }
        let antithetic = get("antithetic").map(|v| parse_bool("antithetic", v)).transpose()?.unwrap_or(false);

        Ok(Self {
            model,
            potential,
            field,
            state,
            hbar,
            hbars,
            dt,
            t_final,
            t_star,
            samples,
            samples_per_hbar,
            seed,
            gh_nodes,
            out: get("out").map(str::to_string),
            observables,
            stride,
            antithetic,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    /// Ensemble size used at `hbars[i]` in a sweep.
    pub fn samples_for(&self, i: usize) -> usize {
        if let Some(list) = &self.samples_per_hbar {
            return list[i];
        }
        self.samples.unwrap_or(if self.hbars[i] <= 0.01 { 10 * DEFAULT_SAMPLES } else { DEFAULT_SAMPLES })
    }

    fn even_if_antithetic(&self, n: usize) -> usize {
        if self.antithetic {
            n + n % 2
        } else {
            n
        }
    }
}

/// `q1`, `p2`, `H0`, `Lz`, `L13`.
pub fn parse_observable(name: &str, d: usize) -> Result<Observable> {
    let bad = || Error::Unknown {
        kind: "observable",
        name: name.to_string(),
        available: Observable::standard_set(d).iter().map(Observable::name).collect::<Vec<_>>().join(", "),
    };
    let index = |s: &str| s.parse::<usize>().ok().filter(|i| (1..=d).contains(i)).map(|i| i - 1);
    let obs = match name {
        "H0" => Observable::Energy,
        "Lz" if d == 2 => Observable::AngularMomentum(0, 1),
        _ if name.starts_with('q') => Observable::Position(index(&name[1..]).ok_or_else(bad)?),
        _ if name.starts_with('p') => Observable::Momentum(index(&name[1..]).ok_or_else(bad)?),
        _ if name.starts_with('L') && name.len() == 3 => {
            let (i, j) = (index(&name[1..2]).ok_or_else(bad)?, index(&name[2..3]).ok_or_else(bad)?);
            if i == j {
                return Err(bad());
            }
            Observable::AngularMomentum(i, j)
        }
        _ => return Err(bad()),
    };
    Ok(obs)
}

/// Trajectory CSV; `aborted` describes an early stop, in which case `csv` holds the completed steps.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub csv: String,
    pub aborted: Option<String>,
}

pub fn simulate_header(d: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=d).map(|i| format!("q{i}")));
    cols.extend((1..=d).map(|i| format!("p{i}")));
    for name in ["A", "B"] {
        cols.extend((1..=d).flat_map(|i| (1..=d).map(move |j| format!("{name}{i}{j}"))));
    }
    cols.extend(["H0".to_string(), "Hhbar".to_string()]);
    if d == 2 {
        cols.push("J12".into());
    }
    cols.push("minEigB".into());
    cols.join(",")
}

/// Integrates the configured packet and tabulates state and monitors.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    let d = cfg.dim();
    let (field, hbar) = (cfg.field.as_ref(), cfg.hbar);
    let mut monitors = vec![
        Monitor::new("H0", move |s: &PacketState| classical_hamiltonian(&ClassicalPhasePoint::from(s), field)),
        Monitor::new("Hhbar", move |s: &PacketState| semiclassical_hamiltonian(s, field, hbar)),
    ];
    if d == 2 {
        monitors.push(Monitor::new("J12", move |s: &PacketState| semiclassical_angular_momentum(s, hbar).0[(0, 1)]));
    }
    monitors.push(Monitor::new("minEigB", |s: &PacketState| s.min_eigenvalue_b()));
    crate::dynamics::step_count(cfg.dt, cfg.t_final)?;
    let (traj, aborted) = match integrate_packet(cfg.model, field, cfg.state.clone(), hbar, cfg.dt, cfg.t_final, &monitors) {
        Ok(t) => (t, None),
        Err(abort) => {
            let msg = abort.to_string();
            (abort.partial, Some(msg))
        }
    };
    let mut csv = simulate_header(d);
    csv.push('\n');
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![fmt_f64(*t)];
        row.extend(s.q().iter().chain(s.p().iter()).map(|v| fmt_f64(*v)));
        for m in [s.a(), s.b()] {
            row.extend((0..d).flat_map(|i| (0..d).map(move |j| m[(i, j)])).map(fmt_f64));
        }
        row.extend(traj.monitors.iter().map(|(_, series)| fmt_f64(series[k])));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    if let Some(msg) = &aborted {
        let _ = writeln!(csv, "# {msg}");
    }
    Ok(SimulateOutput { csv, aborted })
}

/// Gnuplot script drawing the phase curve of a `simulate` CSV.
pub fn simulate_plot_script(csv_path: &str, d: usize, png_path: &str) -> String {
    let (x, y, xl, yl) = if d == 1 { (2, 3, "q", "p") } else { (2, 3, "q1", "q2") };
    format!(
        "set terminal pngcairo size 800,600\nset output '{png_path}'\nset datafile separator ','\nset key autotitle columnhead\n\
         set xlabel '{xl}'\nset ylabel '{yl}'\nplot '{csv_path}' using {x}:{y} with lines title 'trajectory'\n"
    )
}

fn egorov_csv(est: &EgorovEstimate) -> String {
    let is_phase = |o: &Observable| matches!(o, Observable::Position(_) | Observable::Momentum(_));
    let phase: Vec<usize> = (0..est.observables.len()).filter(|&k| is_phase(&est.observables[k])).collect();
    let other: Vec<usize> = (0..est.observables.len()).filter(|&k| !is_phase(&est.observables[k])).collect();
    let mut cols = vec!["t".to_string()];
    cols.extend(phase.iter().map(|&k| format!("mean_{}", est.observables[k].name())));
    cols.extend(phase.iter().map(|&k| format!("se_{}", est.observables[k].name())));
    for &k in &other {
        let n = est.observables[k].name();
        cols.push(format!("mean_{n}"));
        cols.push(format!("se_{n}"));
    }
    let mut csv = cols.join(",");
    csv.push('\n');
    for (ti, t) in est.times.iter().enumerate() {
        let mut row = vec![fmt_f64(*t)];
        row.extend(phase.iter().map(|&k| fmt_f64(est.mean[k][ti])));
        row.extend(phase.iter().map(|&k| fmt_f64(est.se[k][ti])));
        for &k in &other {
            row.push(fmt_f64(est.mean[k][ti]));
            row.push(fmt_f64(est.se[k][ti]));
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let _ = writeln!(csv, "# excluded_samples = {} (used = {})", est.excluded, est.used);
    csv
}

/// Runs the Egorov ensemble for the configured packet.
pub fn egorov_estimate(cfg: &RunConfig) -> Result<EgorovEstimate> {
    let n = cfg.even_if_antithetic(cfg.samples.unwrap_or(DEFAULT_SAMPLES));
    let ens = PhaseEnsemble::new(&cfg.state, cfg.hbar, cfg.seed, n, cfg.antithetic)?;
    let plan = EgorovPlan::new(cfg.dt, cfg.t_final, cfg.observables.clone()).with_stride(cfg.stride);
    propagate_ensemble(&ens, cfg.field.as_ref(), &plan)
}

/// Egorov means and standard errors as CSV.
pub fn cmd_egorov(cfg: &RunConfig) -> Result<String> {
    Ok(egorov_csv(&egorov_estimate(cfg)?))
}

/// Artifacts of an `ℏ` sweep.
#[derive(Debug, Clone)]
pub struct ConvergeOutput {
    pub report: ConvergenceReport,
    pub excluded: Vec<usize>,
    pub csv: String,
    pub summary: String,
}

/// Sweeps `ℏ`, measuring classical and semiclassical phase errors against the Egorov mean at `t_star`.
pub fn cmd_converge(cfg: &RunConfig) -> Result<ConvergeOutput> {
    if cfg.hbars.len() < 2 {
        return Err(Error::Config("a convergence sweep needs at least two hbars".into()));
    }
    let t_star = cfg.t_star.ok_or_else(|| Error::Config(format!("potential `{}` needs `t_star`", cfg.potential)))?;
    let d = cfg.dim();
    let field = cfg.field.as_ref();
    let plan = EgorovPlan::new(cfg.dt, t_star, Observable::phase_space(d)).with_stride(usize::MAX);
    let (mut classical, mut semiclassical, mut se, mut samples, mut excluded) = (vec![], vec![], vec![], vec![], vec![]);
    for (i, &hbar) in cfg.hbars.iter().enumerate() {
        let n = cfg.even_if_antithetic(cfg.samples_for(i));
        let ens = PhaseEnsemble::new(&cfg.state, hbar, cfg.seed, n, cfg.antithetic)?;
        let est = propagate_ensemble(&ens, field, &plan)?;
        let last = est.times.len() - 1;
        let (mean, err) = est.phase_point(last, d)?;
        let dist = |kind: ModelKind| -> Result<f64> {
            let traj = integrate_packet(kind, field, cfg.state.clone(), hbar, cfg.dt, t_star, &[])
                .map_err(|a| Error::InvalidParameter(format!("{} run at hbar = {hbar}: {a}", kind.as_str())))?;
            let s = traj.states.last().expect("trajectory has an initial state");
            Ok(s.q().iter().chain(s.p().iter()).zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        };
        classical.push(dist(ModelKind::Classical)?);
        semiclassical.push(dist(ModelKind::Semiclassical)?);
        se.push(err);
        samples.push(n);
        excluded.push(est.excluded);
    }
    let report = ConvergenceReport::new(t_star, cfg.hbars.clone(), classical, semiclassical, se, samples)?;
    let mut csv = String::from("hbar,samples,classical_error,semiclassical_error,egorov_se,excluded\n");
    for i in 0..report.hbars.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_f64(report.hbars[i]),
            report.samples[i],
            fmt_f64(report.classical_error[i]),
            fmt_f64(report.semiclassical_error[i]),
            fmt_f64(report.egorov_se[i]),
            excluded[i]
        );
    }
    let summary = converge_summary(&report, &cfg.potential);
    Ok(ConvergeOutput { report, excluded, csv, summary })
}

fn converge_summary(r: &ConvergenceReport, potential: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "potential: {potential}");
    let _ = writeln!(s, "t_star: {}", r.t_star);
    for (name, fit) in [("classical", r.classical_fit), ("semiclassical", r.semiclassical_fit)] {
        let _ = writeln!(s, "{name}: error = exp({:.4}) * hbar^{:.4}", fit.intercept, fit.exponent);
    }
    let better = r.semiclassical_error.iter().zip(&r.classical_error).filter(|(a, b)| a < b).count();
    let _ = writeln!(s, "semiclassical closer at {better}/{} hbar values", r.hbars.len());
    s
}

/// Gnuplot script for a `converge` CSV with both fitted lines.
pub fn converge_plot_script(csv_path: &str, report: &ConvergenceReport, png_path: &str) -> String {
    let (c, s) = (report.classical_fit, report.semiclassical_fit);
    format!(
        "set terminal pngcairo size 800,600\n\
         set output '{png_path}'\n\
         set datafile separator ','\n\
         set logscale xy\n\
         set key top left\n\
         set xlabel 'hbar'\n\
         set ylabel 'phase-space error at t = {t}'\n\
         fc(x) = exp({ci}) * x**({ce})\n\
         fs(x) = exp({si}) * x**({se})\n\
         plot '{csv_path}' every ::1 using 1:3 with points pt 7 title 'classical', \\\n\
         \x20    '{csv_path}' every ::1 using 1:4 with points pt 5 title 'semiclassical', \\\n\
         \x20    '{csv_path}' every ::1 using 1:5 with lines dt 2 title 'Egorov SE', \\\n\
         \x20    fc(x) title sprintf('classical fit, slope %.3f', {ce}), \\\n\
         \x20    fs(x) title sprintf('semiclassical fit, slope %.3f', {se})\n",
        t = report.t_star,
        ci = c.intercept,
        ce = c.exponent,
        si = s.intercept,
        se = s.exponent,
    )
}

/// Vector field under test in the bracket and conservation checks.
pub type RhsFn = fn(&PacketState, &dyn FieldModel, f64) -> PacketTangent;

/// Parameters of the invariant suite; swap fields to inject faults.
#[derive(Clone)]
pub struct CheckSuite {
    pub rhs: RhsFn,
    /// Model used in the angular-momentum check.
    pub noether_model: SharedField,
    pub wigner_samples: usize,
}

impl Default for CheckSuite {
    fn default() -> Self {
        Self { rhs: semiclassical_rhs, noether_model: crate::potentials::quartic_rotational_2d(), wigner_samples: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.results {
            writeln!(f, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        Ok(())
    }
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> PacketState {
    let mut u = |s: f64| rng.random_range(-s..s);
    let q: Vec<f64> = (0..d).map(|_| u(1.5)).collect();
    let p: Vec<f64> = (0..d).map(|_| u(1.5)).collect();
    let a = DMatrix::from_fn(d, d, |_, _| u(1.0));
    let a = (&a + a.transpose()) * 0.5;
    let m = DMatrix::from_fn(d, d, |_, _| u(1.0));
    let b = &m * m.transpose() + DMatrix::identity(d, d) * 0.4;
    PacketState::new(q.into(), p.into(), a, b).expect("random state is valid")
}

fn relative_gap(x: &PacketTangent, y: &PacketTangent) -> f64 {
    let (a, b) = (x.to_flat(), y.to_flat());
    let diff = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    diff / y.norm().max(f64::MIN_POSITIVE)
}

fn integrate_with(
    rhs: RhsFn,
    model: &dyn FieldModel,
    s0: PacketState,
    hbar: f64,
    dt: f64,
    t: f64,
    monitors: &[Monitor<'_, PacketState>],
) -> Result<Trajectory<PacketState>> {
    rk4_integrate(|s: &PacketState| Ok(rhs(s, model, hbar).to_flat()), s0, dt, t, monitors).map_err(|a| Error::InvalidParameter(a.to_string()))
}

fn check_fd() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let models = [crate::potentials::cosine_1d(), crate::potentials::quartic_rotational_2d()];
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for m in &models {
        for _ in 0..10 {
            let x: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = fd_cross_check(m.as_ref(), &x, 1e-5);
            worst = worst.max(r.max_deviation());
            failed.extend(r.failures().map(|f| format!("{}:{f}", m.name())));
        }
    }
    CheckResult { name: "fd_cross_check", passed: failed.is_empty(), detail: format!("max relative deviation {worst:.2e}; failures {failed:?}") }
}

fn check_bracket(suite: &CheckSuite) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let models = [crate::potentials::cosine_1d(), crate::potentials::quartic_rotational_2d()];
    let mut worst = 0.0f64;
    for m in &models {
        for hbar in [0.5, 0.1] {
            for _ in 0..3 {
                let s = random_state(&mut rng, m.dim());
                let field = m.as_ref();
                let gap = match bracket_rhs(|x: &PacketState| semiclassical_hamiltonian(x, field, hbar), &s, hbar, DEFAULT_FD_STEP) {
                    Ok(br) => relative_gap(&(suite.rhs)(&s, field, hbar), &br),
                    Err(_) => f64::INFINITY,
                };
                worst = worst.max(gap);
            }
        }
    }
    CheckResult { name: "bracket_consistency", passed: worst <= 1e-5, detail: format!("max relative gap {worst:.2e} (tol 1e-5)") }
}

fn check_exactness(suite: &CheckSuite) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_rhs = 0.0f64;
    let mut worst_h = 0.0f64;
    for d in [1, 2] {
        for _ in 0..3 {
            let mut u = |s: f64| rng.random_range(-s..s);
            let k = DMatrix::from_fn(d, d, |_, _| u(2.0));
            let k = (&k + k.transpose()) * 0.5;
            let m0: Vec<f64> = (0..d * d).map(|_| u(1.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| u(1.0)).collect();
            let a0: Vec<f64> = (0..d).map(|_| u(1.0)).collect();
            let model = QuadraticLinear::new(k.transpose().as_slice(), &b, u(1.0), &m0, &a0, 1.0 + u(0.5)).expect("valid quadratic model");
            let rule = QuadratureRule::new(DEFAULT_GH_NODES, d).expect("valid rule");
            let s = random_state(&mut rng, d);
            let hbar = 0.3;
            let gap = (suite.rhs)(&s, &model, hbar).max_abs_diff(&zhou_rhs(&s, &model));
            worst_rhs = worst_rhs.max(gap);
            let h = full_hamiltonian(&s, &model, hbar, &rule).map(|f| (f - semiclassical_hamiltonian(&s, &model, hbar)).abs());
            worst_h = worst_h.max(h.unwrap_or(f64::INFINITY));
        }
    }
    CheckResult {
        name: "exactness_regime",
        passed: worst_rhs <= 1e-12 && worst_h <= 1e-12,
        detail: format!("max |rhs - zhou| {worst_rhs:.2e}, max |<H> - H_hbar| {worst_h:.2e} (tol 1e-12)"),
    }
}

fn check_energy(suite: &CheckSuite) -> CheckResult {
    let model = crate::potentials::cosine_1d();
    let field = model.as_ref();
    let s0 = PacketState::from_slices(&[0.5], &[-1.0], &[0.0], &[1.0]).expect("valid state");
    let mut worst = 0.0f64;
    for hbar in [0.5, 0.1, 0.01] {
        let mon = [Monitor::new("H", move |s: &PacketState| semiclassical_hamiltonian(s, field, hbar))];
        worst = worst.max(match integrate_with(suite.rhs, field, s0.clone(), hbar, 0.01, 3.0, &mon) {
            Ok(t) => t.monitor_drift("H").unwrap_or(f64::INFINITY) / t.monitor("H").map_or(1.0, |h| h[0].abs()),
            Err(_) => f64::INFINITY,
        });
    }
    CheckResult { name: "energy_conservation", passed: worst < 1e-7, detail: format!("max relative H_hbar drift {worst:.2e} (tol 1e-7)") }
}

fn check_angular_momentum(suite: &CheckSuite) -> CheckResult {
    let model = suite.noether_model.as_ref();
    let symmetric = [0.4, 1.3, 2.9].iter().all(|&th| rotational_symmetry_check(model, &rotation_2d(th), &[0.8, -0.3], 1e-12));
    let hbar = 0.5;
    let s0 = PacketState::from_slices(&[1.0, 0.0], &[0.0, 1.0], &[0.2, 0.1, 0.1, -0.1], &[1.0, 0.3, 0.3, 0.8]).expect("valid state");
    let mon = [Monitor::new("J", move |s: &PacketState| semiclassical_angular_momentum(s, hbar).0[(0, 1)])];
    let drift = integrate_with(suite.rhs, model, s0, hbar, 0.01, 5.0, &mon).map_or(f64::INFINITY, |t| t.monitor_drift("J").unwrap_or(f64::INFINITY));
    CheckResult {
        name: "angular_momentum",
        passed: symmetric && drift < 1e-7,
        detail: format!("rotational symmetry {}; J12 drift over [0,5] {drift:.2e} (tol 1e-7)", if symmetric { "holds" } else { "broken" }),
    }
}

fn check_wigner(suite: &CheckSuite) -> CheckResult {
    let state = PacketState::from_slices(&[1.0, 0.0], &[0.0, 1.0], &[-3.0, -6.0, -6.0, -6.0], &[1.0, 0.5, 0.5, 1.0]).expect("valid state");
    let hbar = 0.1;
    let n = suite.wigner_samples;
    let ens = match PhaseEnsemble::new(&state, hbar, 5, n, false) {
        Ok(e) => e,
        Err(e) => return CheckResult { name: "wigner_moments", passed: false, detail: e.to_string() },
    };
    let rows = ens.materialize();
    let d = 2;
    let c = state.b_inv();
    let a = state.a();
    let exact_pp = (state.b() + a * c * a) * (0.5 * hbar);
    let exact_xp = c * a * (0.5 * hbar);
    let exact_xx = c * (0.5 * hbar);
    let centre: Vec<f64> = state.q().iter().chain(state.p().iter()).copied().collect();
    let nf = n as f64;
    let mut worst = 0.0f64;
    for i in 0..2 * d {
        for j in i..2 * d {
            let exact = match (i < d, j < d) {
                (true, true) => exact_xx[(i, j)],
                (true, false) => exact_xp[(i, j - d)],
                _ => exact_pp[(i - d, j - d)],
            };
            let prods: Vec<f64> = rows.iter().map(|r| (r[i] - centre[i]) * (r[j] - centre[j])).collect();
            let mean = prods.iter().sum::<f64>() / nf;
            let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            worst = worst.max((mean - exact).abs() / (var / nf).sqrt());
        }
        let m = rows.iter().map(|r| r[i]).sum::<f64>() / nf;
        let var = rows.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / (nf - 1.0);
        worst = worst.max((m - centre[i]).abs() / (var / nf).sqrt());
    }
    CheckResult { name: "wigner_moments", passed: worst < 4.0, detail: format!("N = {n}; worst deviation {worst:.2} SE (tol 4)") }
}

fn check_asymptotics() -> CheckResult {
    let b = DMatrix::from_element(1, 1, 1.0);
    let rule = QuadratureRule::new(DEFAULT_GH_NODES, 1).expect("valid rule");
    let q = 0.7f64;
    let rem = |hbar: f64| -> f64 {
        let exact = gaussian_expectation(|x: &[f64]| x[0].cos(), &nalgebra::DVector::from_element(1, q), &b, hbar, &rule).unwrap_or(f64::NAN);
        let approx = asymptotic_expectation(q.cos(), &DMatrix::from_element(1, 1, -q.cos()), &b, hbar).unwrap_or(f64::NAN);
        (exact - approx).abs()
    };
    let r = [rem(0.4), rem(0.2), rem(0.1)];
    let ratios = [r[0] / r[1], r[1] / r[2]];
    let ok = ratios.iter().all(|x| (3.2..=4.8).contains(x));
    CheckResult { name: "asymptotic_order", passed: ok, detail: format!("remainder halving ratios {:.3}, {:.3} (want [3.2, 4.8])", ratios[0], ratios[1]) }
}

/// Runs the fast invariant suite.
pub fn cmd_check(suite: &CheckSuite) -> CheckReport {
    CheckReport {
        results: vec![
            check_fd(),
            check_bracket(suite),
            check_exactness(suite),
            check_energy(suite),
            check_angular_momentum(suite),
            check_wigner(suite),
            check_asymptotics(),
        ],
    }
}

/// Default model for the symmetry-breaking control: quartic well tilted along `x₁`.
pub fn tilted_quartic() -> SharedField {
    Arc::new(LinearTilt::new(crate::potentials::quartic_rotational_2d(), vec![1.0, 0.0]))
}
