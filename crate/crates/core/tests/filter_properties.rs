use nalgebra::Vector3;
use proptest::prelude::*;

use se23nav::error_models::Vector15;
use se23nav::filter::{feedback, linearized_error};
use se23nav::liegroup::{so3_exp, so3_log};
use se23nav::{
    EarthModel, ErrorDefinition, ErrorState15, Filter, FilterConfig, Geodetic, ImuSample, Integrator, NavState,
    Navigation, NoiseSpec,
};

fn earth() -> EarthModel<f64> {
    EarthModel::wgs84()
}

fn static_truth(heading: f64) -> (NavState<f64>, ImuSample<f64>) {
    let e = earth();
    let g = Geodetic::from_degrees(30.5, 114.3, 20.0);
    let p = e.geodetic_to_ecef(&g);
    let c = e.ecef_to_ned_rotation(&g).inverse() * so3_exp(&Vector3::new(0.0, 0.0, heading));
    let gyro = c.inverse() * e.omega_vec();
    let accel = -(c.inverse() * e.gravity(&p).unwrap());
    (NavState::new(c, Vector3::zeros(), p), ImuSample::new(0.0, gyro, accel, 0.01))
}

fn config(definition: ErrorDefinition) -> FilterConfig<f64> {
    FilterConfig {
        definition,
        init_attitude_std: Vector3::new(2.0, 2.0, 5.0).map(f64::to_radians),
        init_vel_std: Vector3::repeat(0.1),
        init_pos_std: Vector3::repeat(1.0),
        init_gyro_bias_std: Vector3::repeat(1e-9),
        init_accel_bias_std: Vector3::repeat(1e-6),
        noise: NoiseSpec {
            gyro_psd: Vector3::repeat(1e-8),
            accel_psd: Vector3::repeat(1e-5),
            gyro_bias: Vector3::repeat(1e-9),
            accel_bias: Vector3::repeat(1e-6),
        },
        integrator: Integrator::Midpoint,
    }
}

proptest! {
    #[test]
    fn feedback_inverts_the_linearized_error(
        phi in prop::array::uniform3(-1.2..1.2f64),
        dv in prop::array::uniform3(-5.0..5.0f64),
        dp in prop::array::uniform3(-50.0..50.0f64),
        heading in -3.0..3.0f64,
    ) {
        let (truth, _) = static_truth(heading);
        let truth = NavState::new(truth.att, Vector3::new(10.0, -3.0, 0.5), truth.pos);
        for d in ErrorDefinition::ALL {
            let mut x = Vector15::zeros();
            x.fixed_rows_mut::<3>(0).copy_from(&Vector3::from(phi));
            x.fixed_rows_mut::<3>(3).copy_from(&Vector3::from(dv));
            x.fixed_rows_mut::<3>(6).copy_from(&Vector3::from(dp));
            let est = Navigation::new(d, &truth, earth().omega_ie);
            let moved = feedback(&est, &ErrorState15::from_vector(d, &x)).unwrap();
            let back = linearized_error(d, &moved, &est).unwrap();
            let nav = x.fixed_rows::<9>(0);
            prop_assert!((back - nav).norm() <= 1e-7 * nav.norm().max(1.0), "{:?}: {} vs {}", d, back, nav);
        }
    }
}

#[test]
fn exact_velocity_fixes_level_a_tilted_static_start() {
    let (truth, u) = static_truth(0.4);
    let tilt = so3_exp(&Vector3::new(1f64.to_radians(), -1f64.to_radians(), 0.0));
    let start = NavState::new(truth.att * tilt, truth.vel, truth.pos);
    let r = nalgebra::Matrix3::identity() * 1e-4;
    for d in ErrorDefinition::ALL {
        let mut f = Filter::new(config(d), &start, 0.0, earth()).unwrap();
        for k in 0..6000 {
            if k % 100 == 0 {
                f.update_gps(&truth.vel, &truth.pos, &r, &r).unwrap();
            }
            f.propagate(&u).unwrap();
        }
        let residual = so3_log(&(f.nav().att.inverse() * truth.att)).vector();
        let level = residual.xy().norm().to_degrees();
        assert!(level < 0.01, "{d:?}: residual tilt {level} deg");
        f.check_covariance();
        assert!(f.hygiene.covariance_ok(), "{d:?}");
    }
}

#[test]
fn single_precision_filter_runs() {
    let (truth, u) = static_truth(0.4);
    let cast = |v: &Vector3<f64>| v.map(|x| x as f32);
    let nav: NavState<f32> = NavState::new(truth.att.cast::<f32>(), cast(&truth.vel), cast(&truth.pos));
    let c = config(ErrorDefinition::Left);
    let cfg = FilterConfig {
        definition: c.definition,
        init_attitude_std: cast(&c.init_attitude_std),
        init_vel_std: cast(&c.init_vel_std),
        init_pos_std: cast(&c.init_pos_std),
        init_gyro_bias_std: cast(&c.init_gyro_bias_std),
        init_accel_bias_std: cast(&c.init_accel_bias_std),
        noise: NoiseSpec {
            gyro_psd: cast(&c.noise.gyro_psd),
            accel_psd: cast(&c.noise.accel_psd),
            gyro_bias: cast(&c.noise.gyro_bias),
            accel_bias: cast(&c.noise.accel_bias),
        },
        integrator: c.integrator,
    };
    let u32 = ImuSample::new(0.0f32, cast(&u.gyro), cast(&u.accel), 0.01);
    let mut f = Filter::new(cfg, &nav, 0.0, EarthModel::<f32>::wgs84()).unwrap();
    for _ in 0..100 {
        f.propagate(&u32).unwrap();
    }
    f.update_gps(&nav.vel, &nav.pos, &nalgebra::Matrix3::identity(), &nalgebra::Matrix3::identity()).unwrap();
    assert!(f.state.p.iter().all(|x| x.is_finite()));
    // f32 spacing at ECEF radius is 0.5 m, and every step adds and removes
    // ~4.6 m of earth-rate motion, so tens of metres per second is rounding.
    let drift = (f.nav().pos - nav.pos).norm();
    assert!(drift < 200.0, "{drift}");
}
