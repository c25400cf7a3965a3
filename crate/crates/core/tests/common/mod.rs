//! Fixtures and independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tarifflab::network::{Bus, Line, Network, NetworkFile, Transformer};
use tarifflab::optimizer::BuildingInput;
use tarifflab::pv::PvProfile;
use tarifflab::time::{TimeGrid, DEFAULT_YEAR};

/// One day at hourly resolution, starting on zero-based day `day` of the default year.
pub fn day_grid(day: u32) -> TimeGrid {
    TimeGrid::from_blocks(DEFAULT_YEAR, 60, &[(day, 1)]).unwrap()
}

/// Hourly per-kWp PV shape on a clear day, built from dyadic values so that optimal
/// sizes land on binary fractions.
pub fn clear_day(scale: f64) -> Vec<f64> {
    let mut pv = vec![0.0; 24];
    let shape = [0.125, 0.25, 0.5, 0.75, 1.0, 1.0, 0.75, 0.5, 0.25, 0.125];
    for (k, v) in shape.iter().enumerate() {
        pv[7 + k] = v * scale;
    }
    pv
}

/// Base load with a morning and an evening block, kW.
pub fn household(base: f64, morning: f64, evening: f64) -> Vec<f64> {
    (0..24)
        .map(|h| match h {
            6..=7 => morning,
            18..=21 => evening,
            _ => base,
        })
        .collect()
}

pub fn building(id: &str, load: Vec<f64>, pv: Vec<f64>, roof_kw: f64) -> BuildingInput {
    BuildingInput {
        id: id.into(),
        load,
        pv: PvProfile {
            per_kw: pv,
            max_capacity: roof_kw,
        },
    }
}

pub const V_LV: f64 = 400.0;

/// Random radial feeder: bus `k` hangs off a random earlier bus.
pub fn radial_file(n_buses: usize, seed: u64) -> NetworkFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses = (0..n_buses)
        .map(|i| Bus {
            id: format!("n{i}"),
            v_nominal: V_LV,
        })
        .collect();
    let lines = (1..n_buses)
        .map(|i| {
            let parent = rng.gen_range(0..i);
            let length = rng.gen_range(20.0..150.0);
            Line {
                id: format!("l{i}"),
                from: format!("n{parent}"),
                to: format!("n{i}"),
                r: 0.2e-3 * length,
                x: 0.08e-3 * length,
                ampacity: Some(250.0),
                length,
            }
        })
        .collect();
    NetworkFile {
        name: format!("radial-{n_buses}"),
        transformer: Transformer {
            s_rated: 400.0,
            n_parallel: 1,
            lv_bus: "n0".into(),
            virtual_rating: None,
        },
        buses,
        lines,
        injections: (1..n_buses).map(|i| (format!("h{i}"), format!("n{i}"))).collect(),
    }
}

pub fn radial(n_buses: usize, seed: u64) -> Network {
    Network::from_file(radial_file(n_buses, seed)).unwrap()
}

/// Polar Newton–Raphson on the dense bus admittance matrix. Consumption `p`/`q` in
/// kW/kvar keyed by bus id, power base `s_base_kva`; returns complex voltages (p.u.) by
/// bus id with the transformer bus fixed at 1∠0.
pub fn newton_oracle(
    file: &NetworkFile,
    p: &BTreeMap<String, f64>,
    q: &BTreeMap<String, f64>,
    s_base_kva: f64,
) -> BTreeMap<String, Complex64> {
    let ids: Vec<&str> = std::iter::once(file.transformer.lv_bus.as_str())
        .chain(file.buses.iter().map(|b| b.id.as_str()).filter(|id| *id != file.transformer.lv_bus))
        .collect();
    let n = ids.len();
    let pos = |id: &str| ids.iter().position(|b| *b == id).unwrap();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for l in &file.lines {
        let (a, b) = (pos(&l.from), pos(&l.to));
        let v = file.buses.iter().find(|bus| bus.id == l.from).unwrap().v_nominal;
        let z_base = v * v / (s_base_kva * 1e3);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.r / z_base, l.x / z_base);
        y[(a, a)] += ys;
        y[(b, b)] += ys;
        y[(a, b)] -= ys;
        y[(b, a)] -= ys;
    }
    let spec: Vec<Complex64> = ids
        .iter()
        .map(|id| {
            -Complex64::new(
                p.get(*id).copied().unwrap_or(0.0),
                q.get(*id).copied().unwrap_or(0.0),
            ) / s_base_kva
        })
        .collect();

    let mut vm = vec![1.0; n];
    let mut th = vec![0.0; n];
    let m = n - 1;
    for _ in 0..50 {
        let (pc, qc) = injections(&y, &vm, &th);
        let mut mismatch = DVector::zeros(2 * m);
        for i in 1..n {
            mismatch[i - 1] = spec[i].re - pc[i];
            mismatch[m + i - 1] = spec[i].im - qc[i];
        }
        if mismatch.amax() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for i in 1..n {
            for k in 1..n {
                let (g, b) = (y[(i, k)].re, y[(i, k)].im);
                let (r, c) = (i - 1, k - 1);
                if i == k {
                    jac[(r, c)] = -qc[i] - b * vm[i] * vm[i];
                    jac[(r, m + c)] = pc[i] / vm[i] + g * vm[i];
                    jac[(m + r, c)] = pc[i] - g * vm[i] * vm[i];
                    jac[(m + r, m + c)] = qc[i] / vm[i] - b * vm[i];
                } else {
                    let t = th[i] - th[k];
                    let (s, co) = t.sin_cos();
                    jac[(r, c)] = vm[i] * vm[k] * (g * s - b * co);
                    jac[(r, m + c)] = vm[i] * (g * co + b * s);
                    jac[(m + r, c)] = -vm[i] * vm[k] * (g * co + b * s);
                    jac[(m + r, m + c)] = vm[i] * (g * s - b * co);
                }
            }
        }
        let dx = jac.lu().solve(&mismatch).expect("nonsingular Jacobian");
        for i in 1..n {
            th[i] += dx[i - 1];
            vm[i] += dx[m + i - 1];
        }
    }
    ids.iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), Complex64::from_polar(vm[i], th[i])))
        .collect()
}

fn injections(y: &DMatrix<Complex64>, vm: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], th[i])).collect();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut current = Complex64::new(0.0, 0.0);
        for k in 0..n {
            current += y[(i, k)] * v[k];
        }
        let s = v[i] * current.conj();
        p[i] = s.re;
        q[i] = s.im;
    }
    (p, q)
}

/// Random per-bus consumption (negative = generation) for every non-slack bus.
pub fn random_injections(file: &NetworkFile, seed: u64, scale: f64) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = BTreeMap::new();
    let mut q = BTreeMap::new();
    for b in &file.buses {
        if b.id == file.transformer.lv_bus {
            continue;
        }
        p.insert(b.id.clone(), rng.gen_range(-scale..scale));
        q.insert(b.id.clone(), rng.gen_range(-0.3 * scale..0.3 * scale));
    }
    (p, q)
}
