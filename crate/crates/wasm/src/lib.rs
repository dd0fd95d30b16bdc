//! Browser bindings: three small computations that return JSON for the demo page in `www/`.

use magecho::engine::SpinSystem;
use magecho::experiments::{divergence_exhibit, fid, FidSpectrum, ACQUISITION_STEP, ECHO_HALF_WIDTH};
use magecho::lattice::{build_cluster, second_moment, Orientation, PhysicalConstants};
use magecho::thermo::{solve_beta, GaussianParams, KernelSpec};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest cluster the page offers; 2^8-dimensional matrices stay interactive.
pub const MAX_DEMO_SITES: usize = 8;

fn system(orientation: &str, n_sites: usize) -> magecho::Result<SpinSystem> {
    if n_sites > MAX_DEMO_SITES {
        return Err(magecho::Error::SiteCountOutOfRange {
            n: n_sites,
            max: MAX_DEMO_SITES,
        });
    }
    let o: Orientation = orientation.parse()?;
    SpinSystem::new(build_cluster(o, 3.0, n_sites, &PhysicalConstants::default())?)
}

/// Normalized free-induction decay of the cluster over five local-field periods.
pub fn fid_json(orientation: &str, n_sites: usize) -> magecho::Result<Value> {
    let sys = system(orientation, n_sites)?;
    let wl = sys.local_field();
    let curve = fid(&sys, 2.0 * ECHO_HALF_WIDTH / wl, 2.0 * ACQUISITION_STEP / wl)?;
    let spec = FidSpectrum::new(&sys);
    Ok(json!({
        "t_us": curve.abscissa().iter().map(|t| t * 1e6).collect::<Vec<_>>(),
        "g": curve.values(),
        "second_moment": second_moment(sys.cluster()),
        "fid_second_moment": spec.second_moment(),
        "omega_l": wl,
    }))
}

/// β(t) for the three principal orientations.
pub fn thermo_json(n: f64, m_ratio: f64, offset_us: f64, t_end_us: f64) -> magecho::Result<Value> {
    let params = GaussianParams {
        n,
        m_ratio,
        offset: offset_us * 1e-6,
    };
    let mut curves = Vec::new();
    for o in Orientation::principal() {
        let kernel = KernelSpec::paper(&o, params)?;
        let b = solve_beta(&kernel, t_end_us * 1e-6, (t_end_us * 1e-6 / 500.0).min(1e-6))?;
        curves.push(json!({
            "orientation": o.to_string(),
            "t_us": b.times().iter().map(|t| t * 1e6).collect::<Vec<_>>(),
            "beta": b.beta(),
        }));
    }
    Ok(Value::Array(curves))
}

/// Ideal-reversal sequence-1 sweep on the cluster next to the memory-kernel prediction.
pub fn divergence_json(orientation: &str, n_sites: usize, gauss: f64, t1_max_us: f64) -> magecho::Result<Value> {
    let sys = system(orientation, n_sites)?;
    let o = sys.cluster().orientation();
    let omega1 = sys.cluster().constants().from_gauss(gauss);
    let d = divergence_exhibit(&sys, &o, omega1, t1_max_us * 1e-6, GaussianParams::default())?;
    Ok(json!({
        "t1_us": d.t1.iter().map(|t| t * 1e6).collect::<Vec<_>>(),
        "simulated": d.simulated,
        "thermo": d.thermo,
        "a_ideal": d.a_ideal,
        "max_difference": d.max_difference,
        "thermo_t_d_us": d.thermo_decay.time().map(|t| t * 1e6),
    }))
}

fn to_js(r: magecho::Result<Value>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn fid_curve(orientation: &str, n_sites: usize) -> Result<String, JsValue> {
    to_js(fid_json(orientation, n_sites))
}

#[wasm_bindgen]
pub fn thermo_curves(n: f64, m_ratio: f64, offset_us: f64, t_end_us: f64) -> Result<String, JsValue> {
    to_js(thermo_json(n, m_ratio, offset_us, t_end_us))
}

#[wasm_bindgen]
pub fn echo_divergence(orientation: &str, n_sites: usize, gauss: f64, t1_max_us: f64) -> Result<String, JsValue> {
    to_js(divergence_json(orientation, n_sites, gauss, t1_max_us))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fid_starts_at_one() {
        let v = fid_json("100", 4).unwrap();
        assert!((v["g"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
        let m2 = v["second_moment"].as_f64().unwrap();
        assert!((v["fid_second_moment"].as_f64().unwrap() / m2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn thermo_has_three_orientations() {
        let v = thermo_json(0.45, 0.25, 80.0, 400.0).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 3);
        assert_eq!(arr[0]["beta"][0], 1.0);
    }

    #[test]
    fn divergence_columns_match() {
        let v = divergence_json("111", 4, 25.3, 100.0).unwrap();
        let n = v["t1_us"].as_array().unwrap().len();
        assert_eq!(v["simulated"].as_array().unwrap().len(), n);
        assert_eq!(v["thermo"].as_array().unwrap().len(), n);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fid_json("up", 4).is_err());
        assert!(fid_json("100", 20).is_err());
        assert!(thermo_json(0.45, -1.0, 80.0, 400.0).is_err());
    }
}
