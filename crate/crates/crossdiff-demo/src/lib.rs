//! Browser playground: three JSON-speaking entry points over the core
//! solver, thin enough to call from a static page. The `demo_*` wrappers
//! are the wasm exports; the underlying functions are plain Rust and run
//! in native tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use crossdiff::coefficients::{
    check_conditions, preset_ion_transport, preset_maxwell_stefan, preset_skt, CoefficientModel,
};
use crossdiff::entropy::{EntropySpec, SemimetricKind};
use crossdiff::experiments::{run_same_aggregate, ExperimentKind, ExperimentOutcome, ExperimentSpec};
use crossdiff::expr::ScalarFn;
use crossdiff::fields::{Field, Grid1D, SpeciesState};
use crossdiff::solver::{run, SchemeConfig};

#[derive(Serialize)]
struct ErrorOut<'a> {
    error: &'a str,
}

fn wrap(r: Result<String, String>) -> String {
    match r {
        Ok(s) => s,
        Err(e) => serde_json::to_string(&ErrorOut { error: &e }).unwrap(),
    }
}

/// Demo scenario per preset: model, initial profiles, background level,
/// and a cap on the perturbation amplitude that keeps the aggregate
/// inside the model's admissible interval.
fn scenario(preset: &str, amp: f64) -> Result<(CoefficientModel, Vec<ScalarFn>, f64, f64), String> {
    let (model, base, background, amp_cap) = match preset {
        "maxwell_stefan" => (
            preset_maxwell_stefan(2.0, 1.0, 2).map_err(|e| e.to_string())?,
            0.3,
            0.6,
            0.3,
        ),
        "skt" => (
            preset_skt(1.0, &[1.0, 1.0], 3.0).map_err(|e| e.to_string())?,
            0.5,
            1.0,
            0.45,
        ),
        "ion_transport" => (
            preset_ion_transport(1.0, 1.0, 2).map_err(|e| e.to_string())?,
            0.25,
            0.5,
            0.2,
        ),
        other => return Err(format!("unknown preset '{other}'")),
    };
    let amp = amp.clamp(0.0, amp_cap);
    let u1 = ScalarFn::closure(move |x| base + amp * (std::f64::consts::PI * x).cos());
    let u2 = ScalarFn::Const(base);
    Ok((model, vec![u1, u2], background, amp))
}

#[derive(Serialize)]
struct SimulateOut {
    x: Vec<f64>,
    times: Vec<f64>,
    /// Aggregate u0 per stored frame.
    u0: Vec<Vec<f64>>,
    species_final: Vec<Vec<f64>>,
    phi_final: Vec<f64>,
    diag_t: Vec<f64>,
    entropy: Vec<f64>,
    mass_total: Vec<f64>,
    steps: usize,
    tainted: bool,
}

fn thin_stride(len: usize, keep: usize) -> usize {
    len.div_ceil(keep).max(1)
}

pub fn simulate(preset: &str, cells: usize, t_end: f64, amp: f64) -> Result<String, String> {
    if !(t_end >= 0.0) || t_end > 1.0 {
        return Err("t_end must be in [0, 1]".into());
    }
    if cells > 1024 {
        return Err("cells must be <= 1024".into());
    }
    let (model, profiles, background, _) = scenario(preset, amp)?;
    let grid = Grid1D::new(cells, 1.0).map_err(|e| e.to_string())?;
    let state = SpeciesState::from_profiles(&grid, &profiles);
    let f = Field::constant(&grid, background);

    // probe pass to learn the step count, then a second pass storing
    // about 40 evenly spaced frames
    let probe_cfg = SchemeConfig {
        t_end,
        ..Default::default()
    };
    let probe = run(&grid, &state, &model, &f, &probe_cfg).map_err(|e| e.to_string())?;
    let cfg = SchemeConfig {
        t_end,
        output_every: thin_stride(probe.steps.max(1), 40),
        ..Default::default()
    };
    let traj = run(&grid, &state, &model, &f, &cfg).map_err(|e| e.to_string())?;

    let weights = model.weights();
    let mut times = Vec::new();
    let mut u0 = Vec::new();
    for snap in &traj.snapshots {
        times.push(snap.t);
        u0.push(
            snap.state
                .aggregate(weights)
                .map_err(|e| e.to_string())?
                .values,
        );
    }
    let last = traj.snapshots.last().ok_or("empty trajectory")?;
    let stride = thin_stride(traj.records.len(), 400);
    let mut diag_t = Vec::new();
    let mut entropy = Vec::new();
    let mut mass_total = Vec::new();
    for (i, r) in traj.records.iter().enumerate() {
        if i % stride == 0 || i + 1 == traj.records.len() {
            diag_t.push(r.t);
            entropy.push(r.entropy);
            mass_total.push(r.masses.iter().sum());
        }
    }
    let out = SimulateOut {
        x: (0..grid.cells()).map(|j| grid.cell_center(j)).collect(),
        times,
        u0,
        species_final: last.state.species.iter().map(|u| u.values.clone()).collect(),
        phi_final: last.poisson.phi.values.clone(),
        diag_t,
        entropy,
        mass_total,
        steps: traj.steps,
        tainted: traj.tainted,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct StructureOut {
    cond1_ok: bool,
    cond2_ok: bool,
    min_p: f64,
    min_p_plus_qs: f64,
    sup_ratio: f64,
    span: f64,
    span_is_surrogate: bool,
    s: Vec<f64>,
    p: Vec<f64>,
    p_plus_qs: Vec<f64>,
    r: Vec<f64>,
    ratio: Vec<f64>,
}

pub fn structure(preset: &str, samples: usize) -> Result<String, String> {
    if !(2..=4096).contains(&samples) {
        return Err("samples must be in [2, 4096]".into());
    }
    let (model, _, _, _) = scenario(preset, 0.0)?;
    let rep = check_conditions(&model, samples).map_err(|e| e.to_string())?;
    let span = rep.span;
    let mut s = Vec::with_capacity(samples);
    let mut p = Vec::with_capacity(samples);
    let mut pqs = Vec::with_capacity(samples);
    let mut r = Vec::with_capacity(samples);
    let mut ratio = Vec::with_capacity(samples);
    for k in 0..samples {
        let sk = span * k as f64 / (samples - 1) as f64;
        let pk = model.eval_p(sk);
        let qk = model.eval_q(sk);
        let rk = model.eval_r(sk);
        let rpk = model.eval_r_prime(sk);
        s.push(sk);
        p.push(pk);
        pqs.push(pk + qk * sk);
        r.push(rk);
        let num = (rk + rpk * sk).powi(2);
        let den = pk + qk * sk;
        ratio.push(if den > 1e-12 { num / den } else { f64::NAN });
    }
    let out = StructureOut {
        cond1_ok: rep.cond1_ok,
        cond2_ok: rep.cond2_ok,
        min_p: rep.min_p,
        min_p_plus_qs: rep.min_p_plus_qs,
        sup_ratio: rep.sup_ratio,
        span,
        span_is_surrogate: rep.span_is_surrogate,
        s,
        p,
        p_plus_qs: pqs,
        r,
        ratio,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ContractionOut {
    t: Vec<f64>,
    d_gajewski: Vec<f64>,
    d_relsym: Vec<f64>,
    lower_bound: Vec<f64>,
    verdict: bool,
    worst_step_increase: f64,
    max_aggregate_gap: f64,
    tainted: bool,
}

pub fn contraction(
    preset: &str,
    cells: usize,
    t_end: f64,
    delta: f64,
    seed: u64,
) -> Result<String, String> {
    if !(t_end >= 0.0) || t_end > 0.5 {
        return Err("t_end must be in [0, 0.5]".into());
    }
    if cells > 512 {
        return Err("cells must be <= 512".into());
    }
    let (model, profiles, background, _) = scenario(preset, 0.1)?;
    let grid = Grid1D::new(cells, 1.0).map_err(|e| e.to_string())?;
    let scheme = SchemeConfig {
        t_end,
        q_consistent: true,
        ..Default::default()
    };
    let mut spec = ExperimentSpec::new(
        ExperimentKind::SameAggregate,
        model,
        grid,
        scheme,
        profiles,
        ScalarFn::Const(background),
    );
    spec.entropy = EntropySpec {
        eps: 1e-8,
        kind: SemimetricKind::Gajewski,
    };
    spec.delta = delta.clamp(0.0, 0.05);
    spec.seed = seed;
    let rep = run_same_aggregate(&spec).map_err(|e| e.to_string())?;

    let stride = thin_stride(rep.series.len(), 500);
    let mut t = Vec::new();
    let mut dg = Vec::new();
    let mut dr = Vec::new();
    let mut lb = Vec::new();
    for (i, row) in rep.series.iter().enumerate() {
        if i % stride == 0 || i + 1 == rep.series.len() {
            t.push(row.t);
            dg.push(row.d_gajewski);
            dr.push(row.d_relsym);
            lb.push(row.lower_bound);
        }
    }
    let (worst, gap) = match rep.outcome {
        ExperimentOutcome::SameAggregate {
            worst_step_increase,
            max_aggregate_gap,
            ..
        } => (worst_step_increase, max_aggregate_gap),
        _ => (f64::NAN, f64::NAN),
    };
    let out = ContractionOut {
        t,
        d_gajewski: dg,
        d_relsym: dr,
        lower_bound: lb,
        verdict: rep.verdict,
        worst_step_increase: worst,
        max_aggregate_gap: gap,
        tainted: rep.tainted,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn demo_simulate(preset: &str, cells: u32, t_end: f64, amp: f64) -> String {
    wrap(simulate(preset, cells as usize, t_end, amp))
}

#[wasm_bindgen]
pub fn demo_structure(preset: &str, samples: u32) -> String {
    wrap(structure(preset, samples as usize))
}

#[wasm_bindgen]
pub fn demo_contraction(preset: &str, cells: u32, t_end: f64, delta: f64, seed: u32) -> String {
    wrap(contraction(preset, cells as usize, t_end, delta, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> serde_json::Value {
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        assert!(
            v.get("error").is_none(),
            "unexpected error: {}",
            v["error"]
        );
        v
    }

    #[test]
    fn simulate_all_presets() {
        for preset in ["maxwell_stefan", "skt", "ion_transport"] {
            let v = parse(&simulate(preset, 48, 2e-3, 0.1).unwrap());
            let x = v["x"].as_array().unwrap();
            assert_eq!(x.len(), 48);
            let frames = v["u0"].as_array().unwrap();
            assert!(frames.len() >= 2, "{preset}: {} frames", frames.len());
            assert_eq!(frames[0].as_array().unwrap().len(), 48);
            assert_eq!(v["species_final"].as_array().unwrap().len(), 2);
            assert_eq!(v["tainted"], false);
            // mass stays flat
            let mass = v["mass_total"].as_array().unwrap();
            let m0 = mass[0].as_f64().unwrap();
            let mlast = mass[mass.len() - 1].as_f64().unwrap();
            assert!((m0 - mlast).abs() <= 1e-12 * m0.abs(), "{preset}: {m0} vs {mlast}");
        }
    }

    #[test]
    fn structure_reports_pass_for_presets() {
        for preset in ["maxwell_stefan", "skt", "ion_transport"] {
            let v = parse(&structure(preset, 128).unwrap());
            assert_eq!(v["cond1_ok"], true, "{preset}");
            assert_eq!(v["cond2_ok"], true, "{preset}");
            assert_eq!(v["s"].as_array().unwrap().len(), 128);
        }
        // maxwell_stefan has p + q s identically 1/D = 1
        let v = parse(&structure("maxwell_stefan", 64).unwrap());
        for val in v["p_plus_qs"].as_array().unwrap() {
            assert!((val.as_f64().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_decays_on_skt() {
        let v = parse(&contraction("skt", 48, 2e-3, 0.01, 3).unwrap());
        assert_eq!(v["verdict"], true);
        let d = v["d_gajewski"].as_array().unwrap();
        let first = d[0].as_f64().unwrap();
        let last = d[d.len() - 1].as_f64().unwrap();
        assert!(first > 0.0 && last < first, "{first} -> {last}");
    }

    #[test]
    fn errors_become_json() {
        let s = wrap(simulate("nope", 32, 1e-3, 0.1));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["error"].as_str().unwrap().contains("nope"));
        assert!(simulate("skt", 4096, 1e-3, 0.1).is_err());
        assert!(contraction("skt", 48, 2.0, 0.01, 1).is_err());
    }
}
