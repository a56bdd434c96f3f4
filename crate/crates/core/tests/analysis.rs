use qprox::analysis::{analyze, envelope, gamma_bound_c, EnvelopeParams};
use qprox::Error;
use qprox::harness::{prepare, RunConfig};

fn params(bits: Option<u8>, kappa: f64) -> EnvelopeParams {
    EnvelopeParams {
        nodes: 4,
        max_degree: 3,
        inner: 8,
        block_dim: 2.0,
        bits,
        l_bar: 2.0,
        mu: 1.0,
        eta: 0.05,
        kappa,
        intervals: [1.0, 2.0, 3.0, 4.0],
    }
}

#[test]
fn gamma_constant_by_hand() {
    // 3·8·2/(12·15²) · (2·4·(1 + 3) + 2·(5/4)·2 + 4)
    let expect = 48.0 / 2700.0 * (32.0 + 5.0 + 4.0);
    assert!((gamma_bound_c(&params(Some(4), 0.9)) - expect).abs() <= 1e-15);
    assert_eq!(gamma_bound_c(&params(None, 0.9)), 0.0);
}

#[test]
fn envelope_by_hand() {
    let p = params(Some(4), 0.95);
    let c = p.theorem1().unwrap();
    // α = 1/(μη(1 − 4L̄η)T) + 4L̄η(T + 1)/((1 − 4L̄η)T)
    let alpha = 1.0 / (0.05 * 0.6 * 8.0) + 0.4 * 9.0 / (0.6 * 8.0);
    assert!((c.alpha - alpha).abs() <= 1e-12);
    // α > 1 here, so no envelope exists
    assert!(matches!(envelope(&p, 3, 1.0), Err(Error::EnvelopeInapplicable { .. })));

    let p = EnvelopeParams { inner: 4000, mu: 30.0, ..p };
    let c = p.checked().unwrap();
    let noise = c.beta * gamma_bound_c(&p) / (1.0 - c.alpha / 0.95);
    for s in [0, 1, 7] {
        let env = envelope(&p, s, 2.5).unwrap();
        assert!((env - 0.95f64.powi(s as i32) * (2.5 + noise)).abs() <= 1e-12 * env);
    }
}

#[test]
fn unquantized_rate_is_at_most_alpha() {
    let cfg = RunConfig { bits: None, outer: 40, ..RunConfig::default() };
    let prep = prepare(&cfg).unwrap();
    let trace = prep.run_distributed(&cfg).unwrap().trace;
    let report = analyze(&trace, &prep.envelope_params(&cfg)).unwrap();
    let fit = report.gap_fit.as_ref().unwrap();
    assert!(fit.rho <= report.alpha, "{} > {}", fit.rho, report.alpha);
    assert_eq!(report.c, 0.0);
    assert_eq!(report.gap_within_envelope(), Some(true));
}

#[test]
fn quantized_report_is_consistent() {
    let cfg = RunConfig { outer: 40, ..RunConfig::default() };
    let prep = prepare(&cfg).unwrap();
    let trace = prep.run_distributed(&cfg).unwrap().trace;
    let report = analyze(&trace, &prep.envelope_params(&cfg)).unwrap();
    assert_eq!(report.overflows, 0);
    assert_eq!(report.rows.len(), 41);
    assert_eq!(report.gap_within_envelope(), Some(true));
    for (k, row) in report.rows.iter().enumerate() {
        assert_eq!(row.s, k);
        assert!((row.gamma_bound - report.c * report.kappa.powi(k as i32)).abs() <= 1e-12 * row.gamma_bound);
    }
    let csv = report.to_csv();
    assert!(csv.starts_with("s,gap,envelope,gamma,gamma_bound\n"));
    assert_eq!(csv.lines().count(), 42);
    assert!(report.summary().contains("alpha"));
}
