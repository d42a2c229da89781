//! Browser bindings for three gwp-core operations: classical vs semiclassical
//! phase curves, energy series, and an Egorov mean trajectory.
//!
//! The `*_series` functions are plain Rust so they can be tested on the host;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use gwp_core::dynamics::{classical_hamiltonian, integrate_packet, semiclassical_hamiltonian, ClassicalPhasePoint, ModelKind, Monitor};
use gwp_core::egorov::{propagate_ensemble, EgorovPlan, Observable, PhaseEnsemble};
use gwp_core::harness::RunConfig;
use gwp_core::PacketState;
use wasm_bindgen::prelude::*;

/// Longest horizon the page may request.
pub const MAX_T: f64 = 20.0;
/// Largest ensemble the page may request.
pub const MAX_SAMPLES: usize = 200_000;

fn config(potential: &str, hbar: f64, t_final: f64) -> Result<RunConfig, String> {
    if !(t_final > 0.0 && t_final <= MAX_T) {
        return Err(format!("t_final must lie in (0, {MAX_T}], got {t_final}"));
    }
    let pairs = [("potential", potential.to_string()), ("hbar", hbar.to_string()), ("t_final", t_final.to_string())];
    let pairs: Vec<(String, String)> = pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    RunConfig::from_pairs(&[], &pairs).map_err(|e| e.to_string())
}

/// Plotted coordinates: `(q, p)` in 1D, `(q1, q2)` in 2D.
fn coords(s: &PacketState) -> (f64, f64) {
    if s.dim() == 1 {
        (s.q()[0], s.p()[0])
    } else {
        (s.q()[0], s.q()[1])
    }
}

/// Sampled curves of the classical and semiclassical centres.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Curves {
    classical_x: Vec<f64>,
    classical_y: Vec<f64>,
    semiclassical_x: Vec<f64>,
    semiclassical_y: Vec<f64>,
    dim: usize,
}

#[wasm_bindgen]
impl Curves {
    pub fn classical_x(&self) -> Vec<f64> {
        self.classical_x.clone()
    }
    pub fn classical_y(&self) -> Vec<f64> {
        self.classical_y.clone()
    }
    pub fn semiclassical_x(&self) -> Vec<f64> {
        self.semiclassical_x.clone()
    }
    pub fn semiclassical_y(&self) -> Vec<f64> {
        self.semiclassical_y.clone()
    }
    /// 1 for `(q, p)` axes, 2 for `(q1, q2)`.
    pub fn dim(&self) -> usize {
        self.dim
    }
}

pub fn curves_series(potential: &str, hbar: f64, t_final: f64) -> Result<Curves, String> {
    let cfg = config(potential, hbar, t_final)?;
    let run = |kind| integrate_packet(kind, cfg.field.as_ref(), cfg.state.clone(), hbar, cfg.dt, cfg.t_final, &[]).map_err(|e| e.to_string());
    let (cl, sc) = (run(ModelKind::Classical)?, run(ModelKind::Semiclassical)?);
    let (classical_x, classical_y) = cl.states.iter().map(coords).unzip();
    let (semiclassical_x, semiclassical_y) = sc.states.iter().map(coords).unzip();
    Ok(Curves { classical_x, classical_y, semiclassical_x, semiclassical_y, dim: cfg.dim() })
}

/// `H₀` along the classical run and `H_ℏ` along the semiclassical run.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Energies {
    times: Vec<f64>,
    classical: Vec<f64>,
    semiclassical: Vec<f64>,
}

#[wasm_bindgen]
impl Energies {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    pub fn classical(&self) -> Vec<f64> {
        self.classical.clone()
    }
    pub fn semiclassical(&self) -> Vec<f64> {
        self.semiclassical.clone()
    }
}

pub fn energy_series_impl(potential: &str, hbar: f64, t_final: f64) -> Result<Energies, String> {
    let cfg = config(potential, hbar, t_final)?;
    let field = cfg.field.as_ref();
    let h0 = [Monitor::new("H", |s: &PacketState| classical_hamiltonian(&ClassicalPhasePoint::from(s), field))];
    let hh = [Monitor::new("H", |s: &PacketState| semiclassical_hamiltonian(s, field, hbar))];
    let cl = integrate_packet(ModelKind::Classical, field, cfg.state.clone(), hbar, cfg.dt, t_final, &h0).map_err(|e| e.to_string())?;
    let sc = integrate_packet(ModelKind::Semiclassical, field, cfg.state.clone(), hbar, cfg.dt, t_final, &hh).map_err(|e| e.to_string())?;
    Ok(Energies {
        times: cl.times.clone(),
        classical: cl.monitor("H").unwrap_or_default().to_vec(),
        semiclassical: sc.monitor("H").unwrap_or_default().to_vec(),
    })
}

/// Egorov mean of the plotted coordinates and of `H₀`, with standard errors.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct EgorovSeries {
    times: Vec<f64>,
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
    se_x: Vec<f64>,
    se_y: Vec<f64>,
    mean_energy: Vec<f64>,
    se_energy: Vec<f64>,
    excluded: usize,
}

#[wasm_bindgen]
impl EgorovSeries {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    pub fn mean_x(&self) -> Vec<f64> {
        self.mean_x.clone()
    }
    pub fn mean_y(&self) -> Vec<f64> {
        self.mean_y.clone()
    }
    pub fn se_x(&self) -> Vec<f64> {
        self.se_x.clone()
    }
    pub fn se_y(&self) -> Vec<f64> {
        self.se_y.clone()
    }
    pub fn mean_energy(&self) -> Vec<f64> {
        self.mean_energy.clone()
    }
    pub fn se_energy(&self) -> Vec<f64> {
        self.se_energy.clone()
    }
    pub fn excluded(&self) -> usize {
        self.excluded
    }
}

pub fn egorov_series(potential: &str, hbar: f64, t_final: f64, samples: usize, seed: u32) -> Result<EgorovSeries, String> {
    if !(1..=MAX_SAMPLES).contains(&samples) {
        return Err(format!("samples must lie in [1, {MAX_SAMPLES}], got {samples}"));
    }
    let cfg = config(potential, hbar, t_final)?;
    let d = cfg.dim();
    let (x, y) = if d == 1 { (Observable::Position(0), Observable::Momentum(0)) } else { (Observable::Position(0), Observable::Position(1)) };
    let ens = PhaseEnsemble::new(&cfg.state, hbar, u64::from(seed), samples, false).map_err(|e| e.to_string())?;
    let plan = EgorovPlan::new(cfg.dt, t_final, vec![x, y, Observable::Energy]).with_stride(5);
    let est = propagate_ensemble(&ens, cfg.field.as_ref(), &plan).map_err(|e| e.to_string())?;
    let (mx, sx) = est.series(x).expect("requested observable");
    let (my, sy) = est.series(y).expect("requested observable");
    let (me, se) = est.series(Observable::Energy).expect("requested observable");
    Ok(EgorovSeries {
        times: est.times.clone(),
        mean_x: mx.to_vec(),
        mean_y: my.to_vec(),
        se_x: sx.to_vec(),
        se_y: sy.to_vec(),
        mean_energy: me.to_vec(),
        se_energy: se.to_vec(),
        excluded: est.excluded,
    })
}

/// Classical and semiclassical centre curves for a built-in potential.
#[wasm_bindgen]
pub fn phase_curves(potential: &str, hbar: f64, t_final: f64) -> Result<Curves, JsError> {
    curves_series(potential, hbar, t_final).map_err(|e| JsError::new(&e))
}

/// Energy along both runs.
#[wasm_bindgen]
pub fn energy_series(potential: &str, hbar: f64, t_final: f64) -> Result<Energies, JsError> {
    energy_series_impl(potential, hbar, t_final).map_err(|e| JsError::new(&e))
}

/// Egorov ensemble mean trajectory.
#[wasm_bindgen]
pub fn egorov_mean(potential: &str, hbar: f64, t_final: f64, samples: usize, seed: u32) -> Result<EgorovSeries, JsError> {
    egorov_series(potential, hbar, t_final, samples, seed).map_err(|e| JsError::new(&e))
}
