//! The consolidated suites on the built-in corpus and on a broken field.

use loewner::field::{builtin_field, corpus, polynomial::field_from_json, Family, ParamTable};
use loewner::linear::{Verdict, THM_CONSTANT_STRICT, THM_ELL_BUNCHING, THM_COMMUTING_UNIFORM};
use loewner::verify::{analyze_field, run_suite, SuiteConfig};

#[test]
fn corpus_passes_the_full_suite() {
    let cfg = SuiteConfig::default();
    for (name, field) in corpus() {
        let report = run_suite(&name, &field, &cfg).unwrap();
        let failing: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert!(report.passed, "{name}: {failing:#?}");
        assert_eq!(report.chain_available, name != "diag-1-2", "{name}");
        assert!(report.checks.len() >= 10, "{name}");
    }
}

#[test]
fn repelling_field_fails_class_n_first() {
    let field = field_from_json(r#"{ "dim": 1, "linear": [ { "constant": { "re": [[-1]] } } ] }"#, 1e-10).unwrap();
    let report = run_suite("minus-z", &field, &SuiteConfig::default()).unwrap();
    assert!(!report.passed);
    assert_eq!(report.first_failure.as_deref(), Some("class_n"));
    assert_eq!(report.checks.len(), 1);
    assert!(!report.checks[0].witnesses.is_empty());
}

#[test]
fn analysis_of_identity_and_diag_1_2() {
    let cfg = SuiteConfig::default();
    let id = builtin_field(Family::ConstantLinear, &ParamTable::new()).unwrap();
    let rep = analyze_field("identity", &id, &cfg).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.hypotheses.ell, Some(1.0));
    assert!(rep.hypotheses.theorems.iter().all(|t| t.verdict == Verdict::Satisfied));

    let d12 = builtin_field(Family::ConstantLinear, &[("d_2".to_string(), 2.0)].into()).unwrap();
    let rep = analyze_field("diag-1-2", &d12, &cfg).unwrap();
    assert_eq!(rep.hypotheses.theorem(THM_CONSTANT_STRICT).unwrap().verdict, Verdict::Violated);
    assert_eq!(rep.hypotheses.theorem(THM_COMMUTING_UNIFORM).unwrap().verdict, Verdict::Violated);
    assert_eq!(rep.hypotheses.theorem(THM_ELL_BUNCHING).unwrap().verdict, Verdict::Satisfied);
    assert!(rep.passed);
}

#[test]
fn tighter_tolerances_keep_the_verdicts() {
    let field = builtin_field(Family::Koebe1d, &ParamTable::new()).unwrap();
    let base = run_suite("koebe-1d", &field, &SuiteConfig::default()).unwrap();
    let tight = SuiteConfig { tol_ode: 1e-11, tol_chain: 1e-9, ..SuiteConfig::default() };
    let tightened = run_suite("koebe-1d", &field, &tight).unwrap();
    let verdicts = |r: &loewner::verify::SuiteReport| r.checks.iter().map(|c| (c.name.clone(), c.passed)).collect::<Vec<_>>();
    assert_eq!(verdicts(&base), verdicts(&tightened));
}
