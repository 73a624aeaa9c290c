use bcresnet::gradcheck::{rel_err, run, CheckKind, Fault, GradcheckOptions, Stencil, THRESHOLD};

#[test]
fn every_check_passes() {
    let report = run(&GradcheckOptions::default()).unwrap();
    assert!(report.passed(), "{report}");
    assert!(report.count(CheckKind::Op) >= 10);
    assert!(report.count(CheckKind::Block) >= 2);
    for r in &report.results {
        assert!(r.checked > 0, "{} checked nothing", r.name);
        assert!(r.skipped * 10 < r.checked, "{} skipped too much", r.name);
    }
    assert_eq!(report.seeds, 5);
}

#[test]
fn corrupted_swish_derivative_is_caught() {
    let opts = GradcheckOptions {
        seeds: vec![0],
        fault: Some(Fault::SwishDerivative),
        ..GradcheckOptions::default()
    };
    let report = run(&opts).unwrap();
    assert!(!report.passed());
    let failing: Vec<_> = report
        .results
        .iter()
        .filter(|r| r.max_rel_err >= THRESHOLD)
        .map(|r| r.name)
        .collect();
    assert_eq!(failing, ["swish"]);
}

#[test]
fn three_point_stencil_truncation_on_blocks() {
    let opts = GradcheckOptions {
        seeds: vec![0, 1],
        stencil: Stencil::ThreePoint,
        ..GradcheckOptions::default()
    };
    let report = run(&opts).unwrap();
    let worst_op = report
        .results
        .iter()
        .filter(|r| r.kind == CheckKind::Op)
        .map(|r| r.max_rel_err)
        .fold(0.0, f64::max);
    let worst_block = report
        .results
        .iter()
        .filter(|r| r.kind == CheckKind::Block)
        .map(|r| r.max_rel_err)
        .fold(0.0, f64::max);
    assert!(worst_op < THRESHOLD);
    // the two-point-difference error on whole blocks is O(h^2) truncation
    assert!(worst_block > THRESHOLD);
    assert!(worst_block < 1e-2);
}

#[test]
fn shrinking_the_step_shrinks_three_point_error() {
    let coarse = GradcheckOptions {
        seeds: vec![3],
        stencil: Stencil::ThreePoint,
        ..GradcheckOptions::default()
    };
    let fine = GradcheckOptions {
        step: 1e-4,
        ..coarse.clone()
    };
    let block_err = |o: &GradcheckOptions| {
        run(o)
            .unwrap()
            .results
            .iter()
            .find(|r| r.name == "normal")
            .unwrap()
            .max_rel_err
    };
    let (c, f) = (block_err(&coarse), block_err(&fine));
    assert!(f < c / 30.0, "coarse {c:e}, fine {f:e}");
}

#[test]
fn relative_error_floor() {
    assert_eq!(rel_err(1.0, 1.0), 0.0);
    assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
    assert!((rel_err(1e-9, 0.0) - 1e-6).abs() < 1e-18);
}
