use fanc::data::generate_synthetic;
use fanc::numerics::RealArray;
use fanc::unconscious::{
    acceleration, float_batch_padded, float_state, float_state_steps, specific_energy, GravityField,
};
use fanc::ModelConfig;
use proptest::prelude::*;

fn single_item_field(softening: f64) -> GravityField<f64> {
    GravityField::new(
        RealArray::matrix(1, 2, vec![0.0, 0.0]).unwrap(),
        RealArray::vector(vec![0.0]),
        softening,
        None,
    )
    .unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Endpoint errors at `n` and `2n` steps against a reference with `16 · 2n` steps.
fn convergence_ratio(n: usize) -> f64 {
    let f = single_item_field(0.1);
    let h = [1.0, 0.0, 0.0, 0.6];
    let reference = float_state_steps(&f, &h, 1.0, 32 * n).unwrap();
    let coarse = max_abs_diff(&float_state_steps(&f, &h, 1.0, n).unwrap(), &reference);
    let fine = max_abs_diff(&float_state_steps(&f, &h, 1.0, 2 * n).unwrap(), &reference);
    coarse / fine
}

#[test]
fn rk4_is_fourth_order_on_the_gravity_field() {
    for n in [10, 20, 40] {
        let r = convergence_ratio(n);
        assert!((10.0..=24.0).contains(&r), "n = {n}: ratio {r}");
    }
}

fn planted_field() -> GravityField<f64> {
    let world = generate_synthetic::<f64>(20, 1, 1, 7).unwrap().world;
    let config = ModelConfig {
        softening: 0.5,
        max_accel: None,
        ..ModelConfig::default()
    };
    world.model.params.field(&config)
}

#[test]
fn free_floating_conserves_energy() {
    let f = planted_field();
    let d = f.dim();
    for (k, u0) in [0.3, -1.0, 2.0].into_iter().enumerate() {
        let mut h = vec![0.0; 2 * d];
        for (i, x) in h.iter_mut().enumerate() {
            *x = u0 * ((i + k) as f64 * 0.7).sin();
        }
        let e0 = specific_energy(&f, &h).unwrap();
        let end = float_state_steps(&f, &h, 1.0, 100).unwrap();
        let e1 = specific_energy(&f, &end).unwrap();
        let drift = ((e1 - e0) / e0.abs()).abs();
        assert!(drift < 1e-6, "relative drift {drift}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn padded_batch_matches_single_floats(
        state in prop::collection::vec(-2.0f64..2.0, 32),
        ks in prop::collection::vec(2usize..=15, 4),
    ) {
        let f = planted_field();
        let states: Vec<Vec<f64>> = state.chunks(8).map(<[f64]>::to_vec).collect();
        let grid = 0.1;
        let dts: Vec<f64> = ks.iter().map(|&k| k as f64 * grid).collect();
        let batch = float_batch_padded(&f, &states, &dts, 1.5, 15).unwrap();
        for ((h, dt), got) in states.iter().zip(&dts).zip(&batch) {
            let single = float_state(&f, h, *dt, 10.0).unwrap();
            prop_assert!(max_abs_diff(got, &single) <= 1e-12);
        }
    }

    #[test]
    fn flow_is_a_deterministic_map(
        h in prop::collection::vec(-2.0f64..2.0, 8),
        dt in 0.05f64..1.5,
    ) {
        let f = planted_field();
        prop_assert_eq!(float_state(&f, &h, dt, 10.0).unwrap(), float_state(&f, &h, dt, 10.0).unwrap());
    }

    #[test]
    fn clamp_bounds_the_acceleration(
        u in prop::collection::vec(-1.0f64..1.0, 4),
        cap in 0.01f64..2.0,
    ) {
        let mut f = planted_field();
        f.max_accel = Some(cap);
        let a = acceleration(&f, &u).unwrap();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= cap * (1.0 + 1e-12));
        f.max_accel = None;
        let free = acceleration(&f, &u).unwrap();
        let free_norm = free.iter().map(|x| x * x).sum::<f64>().sqrt();
        if free_norm <= cap {
            prop_assert_eq!(a, free);
        }
    }
}
