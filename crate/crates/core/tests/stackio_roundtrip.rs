use std::fs;
use std::path::Path;

use proptest::prelude::*;
use ventriq::phantom::{generate, PhantomSpec};
use ventriq::stackio::*;
use ventriq::volgrid::{BinaryMask, Dims, IntensityVolume, Phase, Spacing, StackSeries};
use ventriq::Error;

fn fixture() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/conformance/manifest.json"))
}

#[test]
fn conformance_fixture_reads_as_documented() {
    let s = read_stack_series(fixture()).unwrap();
    assert_eq!(s.phase_indices(), vec![0, 3]);
    assert_eq!(s.dims(), Dims::new(2, 2, 3).unwrap());
    assert_eq!(s.spacing(), Spacing::new(0.5, 0.5, 1.5).unwrap());
    let m0 = &s.phases()[0];
    // z-major: (z, y, x) = (1, 0, 2) is byte 8.
    assert!(*m0.mask.get(1, 0, 2) && !*m0.mask.get(1, 1, 0));
    assert_eq!(m0.mask.count(), 6);
    let iv = m0.intensity.as_ref().unwrap();
    assert_eq!(*iv.get(1, 1, 2), 5.5);
    assert!(s.phases()[1].intensity.is_none());
}

#[test]
fn writer_reproduces_conformance_fixture() {
    let s = read_stack_series(fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = write_stack_series(&s, dir.path()).unwrap();
    let src = fixture().parent().unwrap();
    for name in ["manifest.json", "mask_000.raw", "mask_003.raw", "int_000.raw"] {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(src.join(name)).unwrap(), "{name}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);
    assert_eq!(m, dir.path().join(MANIFEST_NAME));
}

#[test]
fn phantom_round_trip_is_bit_identical() {
    let ph = generate(&PhantomSpec { n_phases: 11, seed: 4, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = write_stack_series(&ph.series, dir.path()).unwrap();
    let back = read_stack_series(&m).unwrap();
    assert_eq!(back.phase_indices(), ph.series.phase_indices());
    for (a, b) in ph.series.phases().iter().zip(back.phases()) {
        assert_eq!(a.mask, b.mask);
        let (x, y) = (a.intensity.as_ref().unwrap(), b.intensity.as_ref().unwrap());
        assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn manifest_invariants_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let src = fixture().parent().unwrap();
    for name in ["mask_000.raw", "mask_003.raw", "int_000.raw"] {
        fs::copy(src.join(name), dir.path().join(name)).unwrap();
    }
    let base = fs::read_to_string(fixture()).unwrap();
    let m = dir.path().join(MANIFEST_NAME);
    let cases = [
        (base.replace("\"t\": 3", "\"t\": 0"), "strictly increasing"),
        (base.replace("\"little\"", "\"big\""), "byte_order"),
        (base.replace("\"u8\"", "\"u16\""), "u16"),
        (base.replace("\"mask\": \"mask_003.raw\"", "\"mask\": \"gone.raw\""), "gone.raw"),
    ];
    for (text, needle) in cases {
        fs::write(&m, text).unwrap();
        let err = read_stack_series(&m).unwrap_err();
        assert!(err.is_io(), "{err}");
        assert!(err.to_string().contains(needle), "{err} lacks {needle}");
    }
}

#[test]
fn single_phase_series_is_rejected() {
    let d = Dims::new(1, 2, 2).unwrap();
    let one = vec![Phase { index: 0, mask: BinaryMask::empty(d, Spacing::unit()), intensity: None }];
    assert!(StackSeries::new(one).is_err());
}

#[test]
fn reports_are_deterministic_and_parse() {
    let ph = generate(&PhantomSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    write_report(&ph.truth, &a, ReportFormat::Json).unwrap();
    write_report(&ph.truth, &b, ReportFormat::Json).unwrap();
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["es_phase"], 5);
    assert!(text.ends_with("}\n") && !text.contains('\r'));

    let c = dir.path().join("gt.csv");
    write_report(&ph.truth, &c, ReportFormat::Csv).unwrap();
    let csv = fs::read_to_string(&c).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("phases_0,phases_1,"));
}

#[test]
fn missing_intensity_file_is_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let d = Dims::new(1, 1, 2).unwrap();
    let phases = (0..2)
        .map(|t| Phase {
            index: t,
            mask: BinaryMask::empty(d, Spacing::unit()),
            intensity: Some(IntensityVolume::filled(d, Spacing::unit(), 1.0).unwrap()),
        })
        .collect();
    let m = write_stack_series(&StackSeries::new(phases).unwrap(), dir.path()).unwrap();
    fs::remove_file(dir.path().join("int_001.raw")).unwrap();
    assert!(matches!(read_stack_series(&m), Err(Error::MissingFile(p)) if p.ends_with("int_001.raw")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn read_write_identity(
        nz in 1usize..4, ny in 1usize..5, nx in 1usize..5,
        bits in prop::collection::vec(any::<bool>(), 3 * 80),
        vals in prop::collection::vec(any::<f32>(), 3 * 80),
        steps in prop::collection::vec(1u32..4, 3),
    ) {
        let d = Dims::new(nz, ny, nx).unwrap();
        let sp = Spacing::new(0.7, 0.3, 2.0).unwrap();
        let mut t = 0;
        let phases: Vec<Phase> = (0..3).map(|k| {
            t += steps[k];
            let off = k * 80;
            Phase {
                index: t,
                mask: BinaryMask::new(d, sp, bits[off..off + d.len()].to_vec()).unwrap(),
                intensity: (k != 1).then(|| {
                    let v: Vec<f32> = vals[off..off + d.len()].iter().map(|v| if v.is_finite() { v.abs() } else { 0.0 }).collect();
                    IntensityVolume::new(d, sp, v).unwrap()
                }),
            }
        }).collect();
        let s = StackSeries::new(phases).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let back = read_stack_series(&write_stack_series(&s, dir.path()).unwrap()).unwrap();
        prop_assert_eq!(back.spacing(), s.spacing());
        prop_assert_eq!(back.phase_indices(), s.phase_indices());
        for (a, b) in s.phases().iter().zip(back.phases()) {
            prop_assert_eq!(&a.mask, &b.mask);
            prop_assert_eq!(
                a.intensity.as_ref().map(|v| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()),
                b.intensity.as_ref().map(|v| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            );
        }
    }
}
