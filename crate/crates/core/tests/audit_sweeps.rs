//! Calibration and control runs of the residual-order audit.

use thinflow::audit::{self, AuditOptions, Defect, Family, FamilyParams, Residual, Sweep};

fn sweep(family: Family, fp: &FamilyParams, opts: &AuditOptions) -> Sweep {
    audit::epsilon_sweep(|e| audit::family_member(family, e, fp), &audit::DEFAULT_EPS, opts).unwrap()
}

#[test]
fn injected_defects_are_recovered() {
    let fp = FamilyParams::default();
    let base = sweep(Family::NewtonianInertial, &fp, &AuditOptions::default());
    let kin = base.fit(Residual::Kinematic).order;

    let first = AuditOptions { defect: Some(Defect { residual: Residual::Kinematic, c: 1.0, q: 1.0 }), ..Default::default() };
    let s = sweep(Family::NewtonianInertial, &fp, &first);
    let o = s.fit(Residual::Kinematic).order;
    assert!((o - 1.0).abs() <= 0.2, "order {o}");
    assert!(!s.passed());

    // A defect above the expected order leaves the fit unchanged.
    let third = AuditOptions { defect: Some(Defect { residual: Residual::Kinematic, c: 1.0, q: 3.0 }), ..Default::default() };
    let s = sweep(Family::NewtonianInertial, &fp, &third);
    let o = s.fit(Residual::Kinematic).order;
    assert!((o - kin).abs() <= 0.2 && (o - 2.0).abs() <= 0.2, "order {o} vs {kin}");
    assert!(s.passed());
}

#[test]
fn surface_tension_does_not_change_orders() {
    let with = sweep(Family::NewtonianInertial, &FamilyParams::default(), &AuditOptions::default());
    let without = sweep(Family::NewtonianInertial, &FamilyParams { gamma: 0.0, ..Default::default() }, &AuditOptions::default());
    let d = audit::max_order_difference(&with, &without);
    assert!(d <= 0.1, "orders moved by {d}");
    assert!(without.passed());
}

#[test]
fn ablation_degrades_a_boundary_condition() {
    let fp = FamilyParams::default();
    let full = sweep(Family::NewtonianInertial, &fp, &AuditOptions::default());
    let flat = sweep(Family::NewtonianInertial, &fp, &AuditOptions { correction: false, ..Default::default() });
    assert!(full.passed());
    assert!(!flat.passed());
    let friction = flat.fit(Residual::BottomFriction).order;
    let kinematic = flat.fit(Residual::Kinematic).order;
    assert!(friction.min(kinematic) < 1.5, "friction {friction}, kinematic {kinematic}");
}

#[test]
fn inherited_families_pass_and_are_flagged() {
    for family in [Family::NewtonianViscous, Family::ViscoelasticSlices] {
        let s = sweep(family, &FamilyParams::default(), &AuditOptions::default());
        assert!(s.passed(), "{}", family.name());
        assert!(s.summary().iter().all(|r| r.expected.inherited));
    }
}

#[test]
fn summary_files_round_trip() {
    let s = sweep(Family::NewtonianInertial, &FamilyParams { nx: 128, ..Default::default() }, &AuditOptions::default());
    let dir = tempfile::tempdir().unwrap();
    s.write_summary(&dir.path().join("summary.csv")).unwrap();
    s.write_table(&dir.path().join("table.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let names: Vec<String> = rows.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(names, Residual::ALL.map(|r| r.name().to_string()).to_vec());
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 8 * audit::DEFAULT_EPS.len());
}
