use cfcal::calibration::synthetic::{generate, LeadProfile, SyntheticConfig, SyntheticSet};
use cfcal::calibration::*;
use cfcal::measures::{FuelCoefficients, IntervalSpec};
use cfcal::models::{reference, LinearParams, ModelKind, ModelParams, ModelSpec, VehicleClass};
use cfcal::simulation::VehicleSeries;
use cfcal::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn idm_truth() -> ModelSpec {
    reference::bic().spec(ModelKind::Idm).unwrap()
}

fn idm_set(seed: u64) -> SyntheticSet {
    let mut cfg = SyntheticConfig::new(idm_truth(), LeadProfile::StopAndGo);
    cfg.duration = 40.0;
    cfg.platoons = 2;
    cfg.followers = 3;
    cfg.large_every = Some(3);
    cfg.seed = seed;
    generate(&cfg).unwrap()
}

fn vecs(m: &ModelSpec) -> Vec<Vec<f64>> {
    [VehicleClass::Small, VehicleClass::Large].iter().map(|&c| m.for_class(c).to_vec()).collect()
}

fn from_vecs(kind: ModelKind, p: &[Vec<f64>]) -> ModelSpec {
    ModelSpec::new(ModelParams::from_slice(kind, &p[0]).unwrap(), ModelParams::from_slice(kind, &p[1]).unwrap()).unwrap()
}

fn spec(kind: ObjectiveKind, set: &SyntheticSet) -> ObjectiveSpec {
    ObjectiveSpec::new(kind, Some(set.intervals.clone()))
}

fn linear(k1: f64, k2: f64, k3: f64) -> ModelSpec {
    ModelSpec::uniform(ModelParams::Linear(LinearParams { k1, k2, k3 })).unwrap()
}

fn series(id: &str, x: Vec<f64>, v: Vec<f64>) -> VehicleSeries {
    let a = vec![0.0; x.len()];
    VehicleSeries {
        id: id.into(),
        class: VehicleClass::Small,
        length: 4.5,
        x,
        v,
        a,
    }
}

/// Head cruising at 10 m/s from x = 150; one follower observed at 10 m/s from
/// x = 0 but starting with a recorded speed of 12.5 m/s.
fn hand_platoon() -> (CalibrationData, IntervalSpec) {
    let n = 16;
    let head = series("0", (0..n).map(|t| 150.0 + 10.0 * t as f64).collect(), vec![10.0; n]);
    let mut v = vec![10.0; n];
    v[0] = 12.5;
    let f = series("1", (0..n).map(|t| 10.0 * t as f64).collect(), v);
    let p = ObservedPlatoon::from_series(0.0, 1.0, head, vec![f]).unwrap();
    let iv = IntervalSpec {
        boundaries: vec![0.0, 20.0],
        entry_x: 10.0,
        exit_x: 110.0,
        edge: None,
    };
    (CalibrationData::new(vec![p]).unwrap(), iv)
}

#[test]
fn objectives_vanish_at_generating_parameters() {
    let set = idm_set(3);
    let fuel = FuelCoefficients::vt_micro();
    let truth = idm_truth();
    for kind in [ObjectiveKind::Mic, ObjectiveKind::Mac, ObjectiveKind::Bic] {
        for rollout in [RolloutMode::Cascade, RolloutMode::TeacherForced] {
            let mut s = spec(kind, &set);
            s.rollout = rollout;
            let v = Objective::new(&set.data, &s, &fuel).unwrap().value(&truth);
            assert!(v < 1e-10, "{kind} {rollout:?}: {v}");
        }
    }
}

#[test]
fn objectives_positive_away_from_generating_parameters() {
    let set = idm_set(3);
    let fuel = FuelCoefficients::vt_micro();
    let mut p = vecs(&idm_truth());
    p[0][0] *= 1.1;
    let off = from_vecs(ModelKind::Idm, &p);
    for kind in [ObjectiveKind::Mic, ObjectiveKind::Mac, ObjectiveKind::Bic] {
        let v = Objective::new(&set.data, &spec(kind, &set), &fuel).unwrap().value(&off);
        assert!(v > 1e-8, "{kind}: {v}");
    }
}

#[test]
fn hand_computed_terms() {
    let (data, iv) = hand_platoon();
    let fuel = FuelCoefficients::vt_micro();
    let mut s = ObjectiveSpec::new(ObjectiveKind::Mac, Some(iv));
    s.normalization = Normalization::None;
    s.weights = Weights {
        w0_sys: 1.0,
        w1_mac: 1.0,
        w2_mac: 0.0,
    };
    let obj = Objective::new(&data, &s, &fuel).unwrap();
    // Simulated follower keeps 12.5 m/s: crossings at 0.8 s and 8.8 s against
    // observed 1 s and 11 s.
    let b = obj.evaluate(&linear(0.0, 0.0, 0.0));
    assert!((b.travel_time - 4.0).abs() < 1e-12, "{b:?}");
    assert!((b.macro_term - 4.0).abs() < 1e-12);
    assert_eq!(b.micro, 0.0);
    let b = obj.evaluate(&linear(0.0, 0.0, 0.5));
    assert!((b.micro - 0.25).abs() < 1e-15);
}

#[test]
fn degenerate_weights_reduce_exactly() {
    let set = idm_set(5);
    let fuel = FuelCoefficients::vt_micro();
    let bounds = ParamBounds::default_for(ModelKind::Idm);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let draw = |rng: &mut ChaCha8Rng, b: &[(f64, f64)]| b.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect::<Vec<_>>();
        let small = draw(&mut rng, bounds.get(VehicleClass::Small));
        let large = draw(&mut rng, bounds.get(VehicleClass::Large));
        let m = from_vecs(ModelKind::Idm, &[small, large]);
        let w0 = rng.gen_range(0.1..3.0);

        let mut s = spec(ObjectiveKind::Bic, &set);
        s.weights.w0_sys = 0.0;
        let bic = objective_bic(&m, &set.data, &s, &fuel).unwrap();
        let mac = objective_mac(&m, &set.data, &s, &fuel).unwrap();
        assert_eq!(bic, mac);

        s.weights = Weights {
            w0_sys: w0,
            w1_mac: 0.0,
            w2_mac: 0.0,
        };
        let bic = objective_bic(&m, &set.data, &s, &fuel).unwrap();
        let mic = objective_mic(&m, &set.data, &s, &fuel).unwrap();
        assert_eq!(bic, w0 * mic);
    }
}

#[test]
fn weight_scaling_scales_values_and_keeps_argmin() {
    let set = idm_set(6);
    let fuel = FuelCoefficients::vt_micro();
    let base = vecs(&idm_truth());
    let probes: Vec<ModelSpec> = (0..8)
        .map(|i| {
            let mut p = base.clone();
            p[0][i % 5] *= 1.0 + 0.03 * (i as f64 - 3.5);
            from_vecs(ModelKind::Idm, &p)
        })
        .collect();
    let argmin = |vals: &[f64]| {
        vals.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap()
    };
    let s1 = spec(ObjectiveKind::Bic, &set);
    let mut s2 = s1.clone();
    s2.weights = s1.weights.scaled(2.5);
    let o1 = Objective::new(&set.data, &s1, &fuel).unwrap();
    let o2 = Objective::new(&set.data, &s2, &fuel).unwrap();
    let v1: Vec<f64> = probes.iter().map(|m| o1.value(m)).collect();
    let v2: Vec<f64> = probes.iter().map(|m| o2.value(m)).collect();
    for (a, b) in v1.iter().zip(&v2) {
        assert!((b - 2.5 * a).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
    }
    assert_eq!(argmin(&v1), argmin(&v2));
}

#[test]
fn collisions_score_above_feasible_and_earlier_is_worse() {
    let (data, iv) = hand_platoon();
    let fuel = FuelCoefficients::vt_micro();
    let obj = Objective::new(&data, &ObjectiveSpec::new(ObjectiveKind::Bic, Some(iv)), &fuel).unwrap();
    let feasible = obj.evaluate(&linear(0.0, 0.0, 0.5));
    let late = obj.evaluate(&linear(0.0, 0.0, 3.0));
    let early = obj.evaluate(&linear(0.0, 0.0, 20.0));
    assert!(!feasible.collided);
    assert!(late.collided && early.collided);
    let v = |b: &Breakdown| b.value(ObjectiveKind::Bic, 1.0);
    assert!(v(&feasible) < v(&late), "{feasible:?} {late:?}");
    assert!(v(&late) < v(&early));
    assert!(v(&early) <= 3.0 * 2.0 * PENALTY_BASE);
}

#[test]
fn macro_objectives_need_intervals() {
    let set = idm_set(1);
    let fuel = FuelCoefficients::vt_micro();
    let s = ObjectiveSpec::new(ObjectiveKind::Mac, None);
    assert!(matches!(objective_mac(&idm_truth(), &set.data, &s, &fuel), Err(Error::Config(_))));
    let s = ObjectiveSpec::new(ObjectiveKind::Mic, None);
    assert!(objective_mic(&idm_truth(), &set.data, &s, &fuel).unwrap() < 1e-10);
}

#[test]
fn linear_parameters_recovered() {
    let truth = reference::bic().spec(ModelKind::Linear).unwrap();
    let mut cfg = SyntheticConfig::new(truth.clone(), LeadProfile::Accelerating);
    cfg.duration = 15.0;
    cfg.followers = 3;
    let set = generate(&cfg).unwrap();
    let mut setup = CalibrationSetup::new(ModelKind::Linear, ObjectiveSpec::new(ObjectiveKind::Mic, None));
    setup.budget = 4000;
    let r = calibrate(&set.data, &setup, &FuelCoefficients::vt_micro()).unwrap();
    assert!(r.objective_value < 1e-6, "{}", r.objective_value);
    let got = r.params.small.unwrap().to_vec();
    for (g, w) in got.iter().zip(truth.for_class(VehicleClass::Small).to_vec()) {
        assert!((g - w).abs() <= 0.05 * w.abs(), "{got:?}");
    }
    assert!(r.params.large.is_none());
}

#[test]
fn calibration_is_deterministic_across_thread_counts() {
    let set = idm_set(2);
    let fuel = FuelCoefficients::vt_micro();
    let mut setup = CalibrationSetup::new(ModelKind::Idm, spec(ObjectiveKind::Bic, &set));
    setup.budget = 300;
    setup.seed = 9;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| calibrate(&set.data, &setup, &fuel).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_eq!(a.to_toml().unwrap(), b.to_toml().unwrap());
    setup.seed = 10;
    assert_ne!(calibrate(&set.data, &setup, &fuel).unwrap().params, a.params);
}

#[test]
fn class_modes_fit_both_classes() {
    let set = idm_set(4);
    let fuel = FuelCoefficients::vt_micro();
    let mut setup = CalibrationSetup::new(ModelKind::Idm, ObjectiveSpec::new(ObjectiveKind::Mic, None));
    setup.budget = 200;
    let joint = calibrate(&set.data, &setup, &fuel).unwrap();
    assert_eq!(joint.searches.len(), 1);
    assert_eq!(joint.searches[0].classes, vec![VehicleClass::Small, VehicleClass::Large]);
    setup.class_mode = ClassMode::Independent;
    let ind = calibrate(&set.data, &setup, &fuel).unwrap();
    assert_eq!(ind.searches.len(), 2);
    assert_eq!(ind.searches[1].seed, setup.seed + 1);
    assert!(ind.params.small.is_some() && ind.params.large.is_some());
    assert_eq!(ind.evaluations, ind.searches.iter().map(|s| s.evaluations).sum::<usize>());
}

#[test]
fn result_roundtrips_through_toml() {
    let set = idm_set(7);
    let mut setup = CalibrationSetup::new(ModelKind::Idm, spec(ObjectiveKind::Bic, &set));
    setup.budget = 100;
    let r = calibrate(&set.data, &setup, &FuelCoefficients::vt_micro()).unwrap();
    let text = r.to_toml().unwrap();
    assert_eq!(CalibrationResult::from_toml(&text).unwrap(), r);
    let pf = r.param_file().unwrap();
    assert_eq!(pf.spec(ModelKind::Idm).unwrap(), r.params.spec().unwrap());
}

#[test]
fn budget_below_population_is_rejected() {
    let set = idm_set(1);
    let mut setup = CalibrationSetup::new(ModelKind::Idm, ObjectiveSpec::new(ObjectiveKind::Mic, None));
    setup.budget = 5;
    let e = calibrate(&set.data, &setup, &FuelCoefficients::vt_micro()).unwrap_err();
    assert!(matches!(e, Error::BudgetTooSmall { .. }), "{e}");
}
