use ndarray::array;
use wmmd_core::kernels::KernelSpec;
use wmmd_core::measures::{read_dataset, write_binary, write_csv};
use wmmd_core::report::{read_csv, summary_path, version, Report};
use wmmd_core::sketch::{draw_features, sketch_samples, Sketch};

#[test]
fn report_csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rep = Report::new("demo", 17, &["x", "y"]);
    let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 1.0 - f64::EPSILON];
    for pair in vals.chunks(2) {
        rep.push(pair.to_vec());
    }
    rep.require(true);
    let path = dir.path().join("out.csv");
    let side = rep.write(&path).unwrap();
    assert_eq!(side, summary_path(&path));
    let (header, rows) = read_csv(&path).unwrap();
    assert_eq!(header, vec!["x", "y"]);
    let flat: Vec<f64> = rows.concat();
    assert_eq!(flat.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>());

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
    assert_eq!(summary["seed"], 17);
    assert_eq!(summary["experiment"], "demo");
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["version"], version());
    assert!(!version().is_empty());
}

#[test]
fn empty_report_has_header_only() {
    let rep = Report::new("empty", 0, &["a", "b", "c"]);
    assert_eq!(rep.to_csv().trim_end(), "a,b,c");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    rep.write(&path).unwrap();
    let (header, rows) = read_csv(&path).unwrap();
    assert_eq!(header.len(), 3);
    assert!(rows.is_empty());
}

#[test]
fn datasets_round_trip_through_csv_and_binary() {
    let dir = tempfile::tempdir().unwrap();
    let x = array![[0.1, -2.0, 3.5e-7], [1.0 / 3.0, 4.0, -0.0], [1e300, -1e-300, 2.0]];
    let csv = dir.path().join("x.csv");
    let bin = dir.path().join("x.bin");
    write_csv(&csv, &x).unwrap();
    write_binary(&bin, &x).unwrap();
    assert_eq!(read_dataset(&csv).unwrap(), x);
    assert_eq!(read_dataset(&bin).unwrap(), x);

    let with_header = dir.path().join("h.csv");
    std::fs::write(&with_header, "a,b\n# comment\n1,2\n3,4\n").unwrap();
    assert_eq!(read_dataset(&with_header).unwrap(), array![[1.0, 2.0], [3.0, 4.0]]);
    let ragged = dir.path().join("r.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert!(read_dataset(&ragged).is_err());
}

#[test]
fn sketch_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
    let map = draw_features(&KernelSpec::matern(1.5, 1.0, 2).unwrap(), 12, 44).unwrap();
    let s = sketch_samples(&map, x.view()).unwrap();
    let path = dir.path().join("s.json");
    s.write(&path).unwrap();
    let back = Sketch::read(&path).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_json(), s.to_json());
}
