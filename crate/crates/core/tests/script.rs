mod common;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{fixture_bytes, fixture_session, python3, random_action, random_session, run_script, script_matches};
use wrangle::anomaly::AnomalyType;
use wrangle::codegen::generate_script;
use wrangle::{CellRef, RepairAction, Session};

macro_rules! need_python {
    () => {
        if python3().is_none() {
            eprintln!("warning: python3 not found, skipping script execution");
            return;
        }
    };
}

fn run(session: &Session, input: &[u8]) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let script = generate_script(session).unwrap();
    assert!(script.verifiable);
    run_script(dir.path(), &script.source_text, input).unwrap_or_else(|e| panic!("{e}\n{}", script.source_text))
}

#[test]
fn zero_actions_reproduce_the_input_table() {
    need_python!();
    let s = fixture_session();
    let out = run(&s, &fixture_bytes());
    script_matches(&s, &out).unwrap();
}

#[test]
fn removals_shrink_the_output() {
    need_python!();
    let mut s = fixture_session();
    s.commit(RepairAction::RemoveRows { rows: vec![0, 1] }).unwrap();
    s.commit(RepairAction::RemoveRows { rows: vec![5] }).unwrap();
    let out = run(&s, &fixture_bytes());
    let lines = String::from_utf8(out.clone()).unwrap().lines().count();
    assert_eq!(lines, 1 + 7);
    script_matches(&s, &out).unwrap();
}

#[test]
fn fixture_with_mixed_actions() {
    need_python!();
    let mut s = fixture_session();
    s.commit(RepairAction::ConvertCells {
        cells: vec![CellRef::new(7, "Income")],
    })
    .unwrap();
    let missing = s
        .records()
        .iter()
        .find(|r| r.kind == AnomalyType::MissingValue)
        .unwrap()
        .clone();
    let impute = s.suggest(&missing).unwrap().remove(0);
    s.commit(impute).unwrap();
    s.commit(RepairAction::RemoveRows { rows: vec![0, 1] }).unwrap();
    s.commit(RepairAction::MergeGroups {
        column: "Degree".into(),
        source_key: "BS".into(),
        dest_key: "MS".into(),
    })
    .unwrap();
    let out = run(&s, &fixture_bytes());
    script_matches(&s, &out).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("Lesotho,PhD,12000"));
}

#[test]
fn random_round_trips() {
    need_python!();
    let mut rng = StdRng::seed_from_u64(31);
    let mut done = 0;
    while done < 25 {
        let Some((csv, mut s)) = random_session(&mut rng) else { continue };
        for _ in 0..rng.gen_range(1..8) {
            if let Some(a) = random_action(&mut rng, &s) {
                let _ = s.commit(a);
            }
        }
        let out = run(&s, csv.as_bytes());
        script_matches(&s, &out).unwrap_or_else(|e| panic!("{e}\ninput:\n{csv}"));
        done += 1;
    }
}

#[test]
fn header_records_provenance() {
    let mut s = fixture_session();
    s.commit(RepairAction::RemoveRows { rows: vec![0] }).unwrap();
    let script = generate_script(&s).unwrap();
    assert_eq!(script.language_tag, "python3");
    assert_eq!(script.input_ref, "income.csv");
    assert_eq!(script.action_count, 1);
    assert!(script.source_text.contains(&s.original().fingerprint()));
    assert!(script.source_text.contains(env!("CARGO_PKG_VERSION")));
}
