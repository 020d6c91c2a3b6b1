use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "block_number,transaction_id,is_coinbase,input_address_id,output_address_id,value,timestamp\n";

/// Three years of activity; 2011 only moves 5000 sat, which is dust.
const THREE_YEARS: &str = "\
1,c1,1,,A,5000000000,2010-03-01 00:00:00 UTC
2,t1,0,A,B,3000000000,2010-05-01 12:00:00 UTC
2,t1,0,A,C,1999990000,2010-05-01 12:00:00 UTC
2,t1,0,A,__fee__,10000,2010-05-01 12:00:00 UTC
3,c2,1,,B,5000000000,2011-01-01 00:00:00 UTC
4,t2,0,C,D,5000,2011-06-01 00:00:00 UTC
5,c3,1,,D,5000000000,2012-02-01 00:00:00 UTC
6,t3,0,B,E,2000000000,2012-08-01 00:00:00 UTC
6,t3,0,B,F,1000000000,2012-08-01 00:00:00 UTC
";

fn txnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_txnet")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn three_year_fixture_reports_three_years() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.csv", &(HEADER.to_string() + THREE_YEARS));
    let out = dir.path().join("out");
    let o = txnet(&[
        "run",
        "--input",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--write-snapshots",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let coverage = fs::read_to_string(out.join("filter_coverage.csv")).unwrap();
    let years: Vec<&str> = coverage.lines().skip(1).map(|l| &l[..4]).collect();
    assert_eq!(years, ["2010", "2011", "2012"]);
    for year in 2010..=2012 {
        assert!(out.join(format!("ledgers/ledger_{year}.tsv")).exists());
    }

    // 2011 keeps one raw edge and nothing after filtering.
    let dust = coverage.lines().find(|l| l.starts_with("2011")).unwrap();
    let f: Vec<&str> = dust.split(',').collect();
    assert_eq!(&f[2..6], ["2", "1", "0", "0"]);
    assert_eq!(&f[8..], ["0", "0"]);
    let filtered = fs::read_to_string(out.join("snapshots/snapshot_2011_filtered.tsv")).unwrap();
    assert_eq!(
        filtered.lines().filter(|l| !l.starts_with('#')).count(),
        1,
        "header only: {filtered}"
    );

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let na = metrics
        .lines()
        .filter(|l| l.starts_with("2011,") && l.ends_with(",NA"))
        .count();
    assert!(na > 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json.as_object().unwrap().len(), 3);
    assert_eq!(json["2011"]["phase"], "exploration");
    assert_eq!(json["2012"]["phase"], "adaptation");
    assert!(json["2011"]
        .as_object()
        .unwrap()
        .values()
        .any(|m| m.as_object().is_some_and(|v| v.values().any(|x| x.is_null()))));
}

#[test]
fn year_range_limits_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "in.tsv",
        &(HEADER.to_string() + THREE_YEARS).replace(',', "\t"),
    );
    let out = dir.path().join("out");
    let o = txnet(&[
        "run",
        "--input",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--years",
        "2011-2011",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let union = fs::read_to_string(out.join("union_growth.csv")).unwrap();
    assert!(union.lines().skip(1).all(|l| l.starts_with("2011,")));
    // The 2010 activity still reaches the 2011 ledger.
    let ledger = fs::read_to_string(out.join("ledgers/ledger_2011.tsv")).unwrap();
    assert!(ledger.lines().count() > 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let good = write(dir.path(), "in.csv", &(HEADER.to_string() + THREE_YEARS));

    let bad_flag = txnet(&["run", "--input", &good, "--top-k", "zero"]);
    assert_eq!(code(&bad_flag), 1);
    let cfg = write(dir.path(), "bad.conf", "no_such_key = 3\n");
    assert_eq!(
        code(&txnet(&["run", "--config", &cfg, "--input", &good, "--out", out])),
        1
    );
    assert_eq!(
        code(&txnet(&["run", "--input", &good, "--out", out, "--top-percent", "1.5"])),
        1
    );
    assert_eq!(code(&txnet(&["run", "--out", out])), 1);

    let missing = dir.path().join("missing.csv");
    let o = txnet(&["run", "--input", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));

    let broken = write(
        dir.path(),
        "broken.csv",
        &(HEADER.to_string() + THREE_YEARS + "7,t4,0,E,G,notanumber,2012-09-01 00:00:00 UTC\n"),
    );
    let o = txnet(&["run", "--input", &broken, "--out", out]);
    assert_eq!(code(&o), 3);
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("row 11"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let early = write(
        dir.path(),
        "early.csv",
        &(HEADER.to_string() + "1,c,1,,A,50,2008-06-01 00:00:00 UTC\n"),
    );
    assert_eq!(code(&txnet(&["run", "--input", &early, "--out", out])), 3);
}

#[test]
fn synth_output_feeds_run() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("chain.csv");
    let o = txnet(&[
        "synth",
        "--years",
        "2",
        "--tx-per-year",
        "300",
        "--out",
        chain.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = txnet(&["synth", "--years", "2", "--tx-per-year", "300"]);
    assert_eq!(stdout.stdout, fs::read(&chain).unwrap());
    let out = dir.path().join("out");
    let o = txnet(&[
        "run",
        "--input",
        chain.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&txnet(&["synth", "--years", "0"])), 1);
}
