use proptest::prelude::*;

use rdslab_core::certification::{Overrides, Param, ParameterSet};
use rdslab_core::diffusion::{forward_flow, FlowConfig};
use rdslab_core::noise::{NoiseSource, WienerPath2S};
use rdslab_core::seeding::seed_replica;
use rdslab_core::vpso::OperatorCatalog;

fn flow_cfg(d: usize, horizon: f64) -> FlowConfig {
    FlowConfig {
        dt: 1.0 / 256.0,
        horizon,
        ..FlowConfig::with_d(d)
    }
}

fn simplex_point(m: usize, raw: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = raw[..m].iter().map(|r| r + 1e-3).collect();
    let s: f64 = w.iter().sum();
    let mut x: Vec<f64> = w.iter().map(|v| v / s).collect();
    let rest: f64 = x[1..].iter().sum();
    x[0] = 1.0 - rest;
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn diffusion_flow_is_a_cocycle(
        seed in any::<u64>(),
        x in proptest::collection::vec(0.01f64..0.99, 2),
        s in 1u32..8,
        t in 1u32..8,
    ) {
        let (s, t) = (f64::from(s) / 4.0, f64::from(t) / 4.0);
        let path = WienerPath2S::new(seed, 2);
        let whole = forward_flow(std::slice::from_ref(&x), &path, &flow_cfg(2, s + t)).unwrap();
        let first = forward_flow(&[x], &path, &flow_cfg(2, s)).unwrap();
        let shifted = path.shift(s).unwrap();
        let second = forward_flow(first.last(), &shifted, &flow_cfg(2, t)).unwrap();
        for (a, b) in whole.last()[0].iter().zip(&second.last()[0]) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn vpso_rds_is_a_cocycle(
        seed in any::<u64>(),
        m in 2usize..=4,
        d in 2usize..=3,
        raw in proptest::collection::vec(0.0f64..1.0, 4),
        split in 0usize..=30,
    ) {
        let cat = OperatorCatalog::canonical(m, d).unwrap();
        let x0 = simplex_point(m, &raw);
        let stream = cat.sample_stream(seed, 30);
        let whole = cat.iterate_rds(&stream, &x0).unwrap();
        let head = cat.iterate_rds(&stream[..split], &x0).unwrap();
        let tail = cat.iterate_rds(&stream[split..], head.last().unwrap()).unwrap();
        prop_assert_eq!(whole.last().unwrap(), tail.last().unwrap());
        prop_assert_eq!(&whole[split], head.last().unwrap());
    }

    #[test]
    fn rederiving_a_parameter_set_is_bit_identical(
        m in 2usize..=5,
        d in 2usize..=5,
        nu_frac in 0.05f64..1.0,
        a_frac in 0.05f64..0.99,
    ) {
        let nu = nu_frac / m as f64;
        let amax = -(1.0 - nu).ln() / (d as f64).ln();
        let mut o = Overrides::new();
        o.insert(Param::Alpha1, a_frac * amax);
        let Ok(ps) = ParameterSet::derive(m, d, nu, &o) else {
            return Err(TestCaseError::reject("no valid set for these choices"));
        };
        let again = ParameterSet::derive(m, d, nu, &ps.as_overrides()).unwrap();
        for p in Param::ALL {
            prop_assert_eq!(ps.get(p).to_bits(), again.get(p).to_bits(), "{}", p.name());
        }
        prop_assert_eq!(ps.ln_e.to_bits(), again.ln_e.to_bits());
    }
}

#[test]
fn replica_paths_are_reproducible_and_distinct() {
    let base = 20261016;
    let a = WienerPath2S::new(seed_replica(base, 3), 1);
    let b = WienerPath2S::new(seed_replica(base, 3), 1);
    let c = WienerPath2S::new(seed_replica(base, 4), 1);
    let ia = a.increments(-2.0, 3.0, 1.0 / 64.0).unwrap();
    let ib = b.increments(-2.0, 3.0, 1.0 / 64.0).unwrap();
    let ic = c.increments(-2.0, 3.0, 1.0 / 64.0).unwrap();
    assert_eq!(ia.coord(0), ib.coord(0));
    assert_ne!(ia.coord(0), ic.coord(0));

    // querying a finer grid first does not change the coarse increments
    let d = WienerPath2S::new(seed_replica(base, 3), 1);
    let fine = d.increments(-2.0, 3.0, 1.0 / 1024.0).unwrap();
    let coarse = d.increments(-2.0, 3.0, 1.0 / 64.0).unwrap();
    assert_eq!(coarse.coord(0), ia.coord(0));
    assert!((fine.total(0) - coarse.total(0)).abs() < 1e-12);
}
