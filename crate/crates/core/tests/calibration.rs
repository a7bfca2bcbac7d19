use hjm_core::calibration::{
    calibrate, levenberg_marquardt, rmse, synthetic_surface, CalibTarget, CalibrationSettings, GaSettings, LmSettings,
    Objective, ParamVector, SimSettings,
};
use hjm_core::{demo, ModelState};

fn init() -> ModelState {
    ModelState::new(demo::initial_curve(1.0 / 12.0, 10.0).unwrap(), 0.0)
}

fn settings() -> SimSettings {
    SimSettings { paths: 512, ..SimSettings::default() }
}

fn target() -> CalibTarget {
    let quotes =
        synthetic_surface(&demo::vol_spec(), &init(), &settings(), &[1.0, 2.0, 3.0], &[0.9, 1.0, 1.1, 1.2], 0.25).unwrap();
    CalibTarget::from_surface(&quotes).unwrap()
}

#[test]
fn generator_parameters_are_already_optimal() {
    let spec = demo::vol_spec();
    let objective = Objective::new(&spec, &init(), &settings(), &target()).unwrap();
    let p = ParamVector::from_spec(&spec).values;
    let r = objective.residuals(&p).unwrap();
    assert!(r.iter().all(|&x| x == 0.0));
    let bounds = hjm_core::calibration::default_bounds(&spec);
    let fit = levenberg_marquardt(|x| objective.residuals(x), &p, &bounds, &LmSettings::default()).unwrap();
    assert!(fit.iterations <= 2);
    assert_eq!(fit.params, p);
}

#[test]
fn without_generations_the_fit_is_pure_local_search() {
    let spec = demo::vol_spec();
    let target = target();
    let mut start = ParamVector::from_spec(&spec).values;
    start[3] *= 1.1;
    start[11] *= 0.9;
    let lm = LmSettings { max_iterations: 3, ..LmSettings::default() };
    let cal = CalibrationSettings {
        simulation: settings(),
        ga: GaSettings { generations: 0, ..GaSettings::default() },
        lm: lm.clone(),
        bounds: None,
        start: Some(start.clone()),
    };
    let (fitted, report) = calibrate(&spec, &init(), &target, &cal).unwrap();
    let objective = Objective::new(&spec, &init(), &settings(), &target).unwrap();
    let bounds = hjm_core::calibration::default_bounds(&spec);
    let direct = levenberg_marquardt(|x| objective.residuals(x), &start, &bounds, &lm).unwrap();
    assert_eq!(report.params, direct.params);
    assert_eq!(ParamVector::from_spec(&fitted).values, direct.params);
    assert_eq!(report.ga_rmse, report.start_rmse);
    assert_eq!(report.rmse, rmse(&direct.residuals));
    assert!(report.rmse < report.start_rmse);
}

#[test]
fn genetic_stage_never_worsens_the_start() {
    let spec = demo::vol_spec();
    let mut start = ParamVector::from_spec(&spec).values;
    start[9] = 0.3;
    let cal = CalibrationSettings {
        simulation: settings(),
        ga: GaSettings { population: 6, generations: 2, ..GaSettings::default() },
        lm: LmSettings { max_iterations: 1, ..LmSettings::default() },
        bounds: None,
        start: Some(start),
    };
    let (_, report) = calibrate(&spec, &init(), &target(), &cal).unwrap();
    assert!(report.ga_rmse <= report.start_rmse);
    assert!(report.rmse <= report.ga_rmse);
}
