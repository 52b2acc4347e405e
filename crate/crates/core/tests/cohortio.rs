use std::path::PathBuf;

use proptest::prelude::*;
use survbias::cohort::{Cohort, CohortData, LatentState, SubjectRecord};
use survbias::cohortio::*;
use survbias::datagen::{simulate_cohorts, Scenario, SimulationConfig};
use survbias::estimators::{run_all, EstimationSettings, Estimand, Method, TruthValues};
use survbias::survcore::CountingProcessData;
use survbias::Error;
use tempfile::TempDir;

fn file(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

const HEADER: &str = "id,cohort,entry_time,event_time,event,wait_time,treatment_start\n";

fn schema_error(result: survbias::Result<CohortData>) -> (usize, String) {
    match result {
        Err(Error::Schema { row, column, .. }) => (row, column),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn minimal_file() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "c.csv", &format!("{HEADER}1,control,0,2.5,1,,\n2,treated,3,1.25,0,3,3\n"));
    let data = read_cohort(&p).unwrap();
    assert_eq!(data.len(), 2);
    assert_eq!(data.records[1].cohort, Cohort::Treated);
    assert_eq!(data.records[1].wait_time, Some(3.0));
    assert!(!data.records[1].event);
    assert_eq!(data.records[0].wait_time, None);
}

#[test]
fn strict_schema_errors_name_row_and_column() {
    let dir = TempDir::new().unwrap();
    let read = |body: &str| read_cohort(file(&dir, "c.csv", &format!("{HEADER}{body}")));
    assert_eq!(schema_error(read("1,control,0,2,1,,\n2,control,0,3,2,,\n")), (2, "event".into()));
    assert_eq!(schema_error(read("1,control,0,2x,1,,\n")), (1, "event_time".into()));
    assert_eq!(schema_error(read("1,control,0,NaN,1,,\n")), (1, "event_time".into()));
    assert_eq!(schema_error(read("1,control,0,inf,1,,\n")), (1, "event_time".into()));
    assert_eq!(schema_error(read("1,control,0,-1,1,,\n")), (1, "event_time".into()));
    assert_eq!(schema_error(read("-1,control,0,1,1,,\n")), (1, "id".into()));
    assert_eq!(schema_error(read("1,placebo,0,1,1,,\n")), (1, "cohort".into()));
    assert_eq!(schema_error(read("1,control,0,1,1,,\n1,control,0,2,1,,\n")), (2, "id".into()));
    assert_eq!(schema_error(read("1,treated,2,1,1,3,3\n")), (1, "wait_time".into()));
    assert_eq!(schema_error(read("1,prospective,0,1,1,,1\n")), (1, "treatment_start".into()));
    // same id in different cohorts is fine
    assert_eq!(read("1,control,0,1,1,,\n1,treated,2,1,1,2,2\n").unwrap().len(), 2);

    let missing = file(&dir, "m.csv", "id,cohort,entry_time,event\n1,control,0,1\n");
    assert!(matches!(read_cohort(&missing), Err(Error::Format { message, .. }) if message.contains("event_time")));
    let unknown = file(&dir, "u.csv", "id,cohort,entry_time,event_time,event,age\n1,control,0,1,1,3\n");
    assert!(matches!(read_cohort(&unknown), Err(Error::Format { message, .. }) if message.contains("age")));
    let ragged = file(&dir, "r.csv", &format!("{HEADER}1,control,0,1\n"));
    assert!(matches!(read_cohort(&ragged), Err(Error::Format { .. })));
    let partial_latent = file(&dir, "l.csv", "id,cohort,entry_time,event_time,event,frailty_rate\n1,control,0,1,1,0.1\n");
    assert!(read_cohort(&partial_latent).is_err());
    assert!(matches!(read_cohort(dir.path().join("absent.csv")), Err(Error::Io { .. })));
}

#[test]
fn covariates_and_latent_columns() {
    let dir = TempDir::new().unwrap();
    let p = file(
        &dir,
        "c.csv",
        "id,cohort,entry_time,event_time,event,cov_age,frailty_rate,g_carrier,untreated_time\n\
         1,control,0,2,1,31.5,0.2,,2\n",
    );
    let plain = read_cohort(&p).unwrap();
    assert_eq!(plain.covariate_names, vec!["age"]);
    assert_eq!(plain.records[0].covariates, vec![31.5]);
    assert_eq!(plain.records[0].latent, None);
    let full = read_cohort_with(&p, ReadOptions { latent: true, ..Default::default() }).unwrap();
    assert_eq!(
        full.records[0].latent,
        Some(LatentState {
            frailty_rate: 0.2,
            g_carrier: None,
            untreated_time: 2.0
        })
    );
}

#[test]
fn simulated_cohort_round_trips_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let sim = simulate_cohorts(&SimulationConfig::scenario(Scenario::Gfactor).with_n(2_000)).unwrap();
    let p = dir.path().join("cohort.csv");
    write_cohort(&sim.data, &p).unwrap();
    let back = read_cohort_with(&p, ReadOptions { latent: true, ..Default::default() }).unwrap();
    assert_eq!(back, sim.data);
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.ends_with('\n'));
    assert!(text.starts_with("id,cohort,entry_time,event_time,event,wait_time,treatment_start,frailty_rate,g_carrier,untreated_time\n"));

    let q = dir.path().join("again.csv");
    write_cohort(&back, &q).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
}

#[test]
fn multiple_files_detect_cross_file_duplicates() {
    let dir = TempDir::new().unwrap();
    let a = file(&dir, "a.csv", &format!("{HEADER}1,control,0,1,1,,\n"));
    let b = file(&dir, "b.csv", &format!("{HEADER}1,treated,2,1,1,2,2\n"));
    let both = read_cohorts(&[&a, &b], ReadOptions::default()).unwrap();
    assert_eq!(both.len(), 2);
    let dup = read_cohorts(&[&a, &a], ReadOptions::default());
    assert!(matches!(dup, Err(Error::Schema { row: 1, .. })));
    let c = file(&dir, "c.csv", "id,cohort,entry_time,event_time,event,cov_x\n2,control,0,1,1,0\n");
    assert!(read_cohorts(&[&a, &c], ReadOptions::default()).is_err());
}

fn record_strategy() -> impl Strategy<Value = SubjectRecord> {
    let time = prop_oneof![1e-300..1e-3f64, 1e-3..1e3f64, 1e3..1e300f64];
    (
        any::<u64>(),
        0..3u8,
        time.clone(),
        time,
        any::<bool>(),
        proptest::collection::vec(-1e12..1e12f64, 2),
        proptest::option::of((0.0..1e3f64, proptest::option::of(any::<bool>()), 0.0..1e3f64)),
        0.0..1.0f64,
    )
        .prop_map(|(id, c, a, b, event, covariates, latent, frac)| {
            let (cohort, entry, wait, start) = match c {
                0 => (Cohort::Control, 0.0, None, None),
                1 => (Cohort::Treated, a, Some(a), Some(a)),
                _ => (Cohort::Prospective, 0.0, None, Some(b * frac)),
            };
            SubjectRecord {
                id,
                cohort,
                entry_time: entry,
                event_time: b,
                event,
                wait_time: wait,
                treatment_start: start.filter(|s| *s < b),
                covariates,
                latent: latent.map(|(r, g, t)| LatentState {
                    frailty_rate: r,
                    g_carrier: g,
                    untreated_time: t,
                }),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cohort_round_trip(records in proptest::collection::vec(record_strategy(), 0..20)) {
        let mut records = records;
        let mut seen = std::collections::HashSet::new();
        records.retain(|r| seen.insert((r.id, r.cohort)));
        // latent columns are written only when every record has them
        let all_latent = !records.is_empty() && records.iter().all(|r| r.latent.is_some());
        if !all_latent {
            for r in &mut records {
                r.latent = None;
            }
        }
        let data = CohortData::new(vec!["x".into(), "y z".into()], records);
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("c.csv");
        write_cohort(&data, &p).unwrap();
        let back = read_cohort_with(&p, ReadOptions { latent: true, ..Default::default() }).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn counting_process_round_trip(
        rows in proptest::collection::vec((any::<u64>(), any::<u64>(), 0.0..1e6f64, 1e-9..1e6f64, any::<bool>(), any::<u32>(), -1e9..1e9f64), 0..30)
    ) {
        let mut data = CountingProcessData::new(vec!["treatment".into()]);
        for (s, c, start, len, status, stratum, x) in rows {
            data.push(s, c, start, start + len, status, stratum, &[x]).unwrap();
        }
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("cp.csv");
        write_counting_process(&data, &p).unwrap();
        let back = read_counting_process(&p).unwrap();
        prop_assert_eq!(back.len(), data.len());
        for i in 0..data.len() {
            prop_assert_eq!(back.row(i), data.row(i));
        }
    }
}

#[test]
fn counting_process_rejects_bad_rows() {
    let dir = TempDir::new().unwrap();
    let header = "subject_id,cluster_id,start,stop,status,stratum,x\n";
    let bad = file(&dir, "a.csv", &format!("{header}1,1,2,2,1,0,0.5\n"));
    assert!(matches!(read_counting_process(&bad), Err(Error::Schema { row: 1, column, .. }) if column == "stop"));
    let bad = file(&dir, "b.csv", "subject_id,start,stop\n1,0,1\n");
    assert!(matches!(read_counting_process(&bad), Err(Error::Format { .. })));
    let ok = file(&dir, "c.csv", &format!("{header}1,1,0,2,1,3,0.5\n"));
    let data = read_counting_process(&ok).unwrap();
    assert_eq!(data.stratum(0), 3);
    assert_eq!(data.covariate_names(), &["x".to_string()]);
}

fn application_fixture(dir: &TempDir) -> PathBuf {
    file(
        dir,
        "application.csv",
        "method,estimand,hr,ci_low,ci_high\n\
         time_varying,ATE,2.15,1.71,2.69\n\
         unadjusted,ATE,1.63,1.13,1.65\n\
         wait_linear,ATE,1.73,1.27,2.38\n\
         wait_quadratic,ATE,2.11,1.44,3.07\n\
         wait_rcs,ATE,2.08,1.43,3.01\n\
         matching,ATE,1.98,1.59,2.47\n\
         early_treated,ATC,1.66,1.16,2.39\n\
         median_control,ATT,2.04,1.58,2.64\n",
    )
}

#[test]
fn published_application_bias_arithmetic() {
    let dir = TempDir::new().unwrap();
    let mut table = read_results(application_fixture(&dir)).unwrap();
    let warnings = table.recompute_bias();
    assert!(warnings.is_empty(), "{warnings:?}");
    let unadjusted = table.row(Method::Unadjusted).unwrap();
    let quadratic = table.row(Method::WaitQuadratic).unwrap();
    // oracle: ln(2.15 / 1.63) / ln 2.15 and ln(2.11 / 1.63) / ln(2.15 / 1.63)
    let bias = 100.0 * (2.15f64 / 1.63).ln() / 2.15f64.ln();
    let eliminated = 100.0 * (2.11f64 / 1.63).ln() / (2.15f64 / 1.63).ln();
    assert!((unadjusted.percent_bias.unwrap() - bias).abs() < 1e-9);
    assert!((quadratic.percent_bias_eliminated.unwrap() - eliminated).abs() < 1e-9);
    assert!((unadjusted.percent_bias.unwrap() - 36.2).abs() < 0.1);
    assert!((quadratic.percent_bias_eliminated.unwrap() - 93.2).abs() < 0.1);
    let text = table.render_text();
    assert!(text.contains("2.11 (1.44-3.07)"), "{text}");
    assert!(text.contains("93.2%"));
    assert!(text.contains("36.2%"));
}

#[test]
fn undefined_elimination_is_flagged() {
    let dir = TempDir::new().unwrap();
    let p = file(
        &dir,
        "r.csv",
        "method,estimand,hr\ntrue,ATE,1.5\nunadjusted,ATE,1.5\nwait_linear,ATE,1.4\n",
    );
    let mut table = read_results(p).unwrap();
    let warnings = table.recompute_bias();
    assert!(warnings.iter().any(|w| w.contains("undefined")), "{warnings:?}");
    assert_eq!(table.row(Method::WaitLinear).unwrap().percent_bias_eliminated, None);
    assert!(table.render_text().contains("undefined"));
}

#[test]
fn results_round_trip_and_render() {
    let dir = TempDir::new().unwrap();
    let data = simulate_cohorts(&SimulationConfig::scenario(Scenario::Beta).with_n(3_000)).unwrap().data;
    let report = run_all(&data, &EstimationSettings::simulation(), Some(TruthValues { atc: 1.49, att: 1.51, ate: 1.5 })).unwrap();
    let table = ResultTable::from_report(&report);
    assert_eq!(table.rows.len(), 3 + 8);
    assert_eq!(table.rows[0].method, Method::Truth);
    assert_eq!(table.rows[2].estimand, Estimand::Ate);

    let csv = dir.path().join("results.csv");
    write_results(&table, &csv, ResultFormat::Csv).unwrap();
    assert_eq!(read_results(&csv).unwrap(), table);

    let mut recomputed = table.clone();
    assert!(recomputed.recompute_bias().is_empty());
    for (a, b) in table.rows.iter().zip(&recomputed.rows) {
        assert_eq!(a.true_hr.is_some(), b.true_hr.is_some());
        if let (Some(x), Some(y)) = (a.percent_bias_eliminated, b.percent_bias_eliminated) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    let text = table.render_text();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("Effect estimate"));
    assert_eq!(lines.len(), 12);
    let col = lines[0].find("Hazard ratio (95%CI)").unwrap();
    for line in &lines[4..] {
        let cell = &line[col..];
        assert!(cell.chars().next().unwrap().is_ascii_digit(), "{line}");
        let hr: String = cell.split_whitespace().take(2).collect::<Vec<_>>().join(" ");
        assert!(hr.len() == 16 && hr.contains(" (") && hr.ends_with(')'), "{hr}");
    }
}

#[test]
fn empty_table_is_header_only() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("empty.csv");
    write_results(&ResultTable::default(), &p, ResultFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("method,estimand,hr,"));
    assert!(read_results(&p).unwrap().rows.is_empty());
    assert_eq!(ResultTable::default().render_text().lines().count(), 1);
}

#[test]
fn failed_rows_survive_round_trip() {
    let dir = TempDir::new().unwrap();
    let p = file(&dir, "r.csv", "method,estimand,hr,error\nmatching,ATE,,no landmark has both arms\n");
    let table = read_results(&p).unwrap();
    assert_eq!(table.rows[0].error.as_deref(), Some("no landmark has both arms"));
    assert!(table.render_text().contains("failed"));
    let bad = file(&dir, "b.csv", "method,estimand,hr\nmatching,ATE,\n");
    assert!(matches!(read_results(&bad), Err(Error::Schema { .. })));
    let bad = file(&dir, "c.csv", "method,estimand,hr\nmatching,ATX,1.2\n");
    assert!(matches!(read_results(&bad), Err(Error::Schema { column, .. }) if column == "estimand"));
}

#[test]
fn metadata_sidecar() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("controls.csv");
    std::fs::write(&out, "x\n").unwrap();
    let mut meta = RunMetadata::new("simulate", "seed = 4\n".into());
    meta.seed = Some(4);
    meta.generator = Some("g".into());
    meta.warnings.push("w".into());
    meta.add_input(&out).unwrap();
    let path = write_metadata(&out, &meta).unwrap();
    assert_eq!(path, dir.path().join("controls.csv.meta.toml"));
    assert_eq!(read_metadata(&path).unwrap(), meta);
    assert_eq!(meta.config_hash, sha256_hex(b"seed = 4\n"));
    assert_eq!(
        sha256_hex(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
    assert_eq!(meta.inputs[0].sha256, sha256_hex(b"x\n"));
}

#[test]
fn io_errors_carry_the_path() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("missing").join("out.csv");
    let err = write_cohort(&CohortData::default(), &p).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("out.csv"));
}

#[test]
fn wait_time_required_on_request() {
    let dir = TempDir::new().unwrap();
    let no_column = file(&dir, "a.csv", "id,cohort,entry_time,event_time,event\n1,control,0,1,1\n2,treated,3,1,1\n");
    assert_eq!(read_cohort(&no_column).unwrap().len(), 2);
    let strict = ReadOptions { require_wait_time: true, ..Default::default() };
    match read_cohort_with(&no_column, strict) {
        Err(Error::Schema { row: 2, column, message, .. }) => {
            assert_eq!(column, "wait_time");
            assert!(message.contains("missing"));
        }
        other => panic!("{other:?}"),
    }
}
