mod common;

use rand::Rng;
use smogcast_core::data::*;
use smogcast_core::Error;
use smogcast_core::Tensor;

fn cube(t: usize, h: usize, w: usize, c: usize, first_day: i64, values: Vec<f32>) -> DatasetCube {
    let names: Vec<String> = (0..c).map(|i| format!("f{i}")).collect();
    let axis = (0..t as i64).map(|i| first_day + 5 * i).collect();
    DatasetCube::new(Tensor::from_vec(&[t, h, w, c], values).unwrap(), axis, names, vec!["1".into(); c], STUDY_BBOX).unwrap()
}

/// Interpolates one series from scratch: for every gap, find the observed
/// neighbours by scanning outward.
fn oracle_series(s: &[f32]) -> Vec<f32> {
    (0..s.len())
        .map(|i| {
            if !s[i].is_nan() {
                return s[i];
            }
            let left = (0..i).rev().find(|&k| !s[k].is_nan());
            let right = (i + 1..s.len()).find(|&k| !s[k].is_nan());
            match (left, right) {
                (Some(a), Some(b)) => {
                    let (va, vb) = (s[a] as f64, s[b] as f64);
                    (va + (vb - va) * (i - a) as f64 / (b - a) as f64) as f32
                }
                (Some(a), None) => s[a],
                (None, Some(b)) => s[b],
                (None, None) => unreachable!(),
            }
        })
        .collect()
}

#[test]
fn impute_matches_per_series_oracle() {
    let mut r = common::rng(30);
    let (t, h, w, c) = (24, 5, 4, 3);
    let mut vals: Vec<f32> = (0..t * h * w * c).map(|_| r.random_range(-3.0..3.0)).collect();
    for v in vals.iter_mut() {
        if r.random_bool(0.1) {
            *v = f32::NAN;
        }
    }
    let stride = h * w * c;
    // every series keeps at least one observation
    for off in 0..stride {
        if (0..t).all(|k| vals[k * stride + off].is_nan()) {
            vals[off] = 1.0;
        }
    }
    let input = cube(t, h, w, c, 0, vals.clone());
    assert!(input.missing_count() > 0);
    let out = impute(&input).unwrap();
    for off in 0..stride {
        let series: Vec<f32> = (0..t).map(|k| vals[k * stride + off]).collect();
        let want = oracle_series(&series);
        for k in 0..t {
            assert_eq!(out.values.data()[k * stride + off], want[k], "offset {off} frame {k}");
        }
    }
}

#[test]
fn impute_series_examples_and_fallback() {
    let c = cube(3, 1, 2, 1, 0, vec![1.0, f32::NAN, f32::NAN, 10.0, 3.0, f32::NAN]);
    let out = impute(&c).unwrap();
    // pixel 0: [1, NaN, 3] → [1, 2, 3]; pixel 1: [NaN, 10, NaN] → [10, 10, 10]
    assert_eq!(out.values.data(), &[1.0, 10.0, 2.0, 10.0, 3.0, 10.0]);

    let c = cube(2, 1, 2, 1, 0, vec![2.0, f32::NAN, 4.0, f32::NAN]);
    assert_eq!(impute(&c).unwrap().values.data(), &[2.0, 3.0, 4.0, 3.0]);

    let c = cube(2, 1, 1, 2, 0, vec![1.0, f32::NAN, 2.0, f32::NAN]);
    assert!(matches!(impute(&c), Err(Error::AllMissing(name)) if name == "f1"));
}

#[test]
fn normalize_fits_on_range_only() {
    let c = cube(3, 1, 1, 1, 0, vec![-2.0, 2.0, 10.0]);
    let (n, stats) = normalize(&c, Some((0, 5))).unwrap();
    assert_eq!((stats.min[0], stats.max[0]), (-2.0, 2.0));
    assert_eq!(n.values.data(), &[0.0, 1.0, 1.0]);
    let (n, _) = normalize(&c, None).unwrap();
    assert_eq!(n.values.data()[1], 4.0 / 12.0);
    assert!(normalize(&c, Some((100, 200))).is_err());
    let nan = cube(1, 1, 1, 1, 0, vec![f32::NAN]);
    assert!(normalize(&nan, None).is_err());
}

#[test]
fn downsample_examples() {
    let c = cube(1, 2, 2, 1, 0, vec![1.0, 2.0, 3.0, 6.0]);
    assert_eq!(downsample_bilinear(&c, 1, 1).unwrap().values.data(), &[3.0]);
    assert_eq!(downsample_bilinear(&c, 2, 2).unwrap().values, c.values);
    assert!(downsample_bilinear(&c, 3, 2).is_err());

    let k = cube(2, 5, 7, 2, 0, vec![0.25; 140]);
    let d = downsample_bilinear(&k, 3, 4).unwrap();
    assert!(d.values.data().iter().all(|&v| v == 0.25));
    assert_eq!(d.time_axis, k.time_axis);

    // corner-aligned: output corners sample input corners exactly
    let vals: Vec<f32> = (0..35).map(|i| i as f32).collect();
    let g = cube(1, 5, 7, 1, 0, vals);
    let d = downsample_bilinear(&g, 3, 4).unwrap();
    assert_eq!(d.values.data()[0], 0.0);
    assert_eq!(d.values.data()[3], 6.0);
    assert_eq!(d.values.data()[11], 34.0);
    // linear field is reproduced exactly: value = 7y + x at (y, x) = (2, 4)
    assert_eq!(d.values.data()[4 + 2], 7.0 * 2.0 + 4.0);
}

#[test]
fn window_counts_and_shapes() {
    let p = cube(10, 3, 2, 6, 0, vec![0.1; 360]);
    let t = cube(10, 3, 2, 1, 0, (0..60).map(|i| i as f32).collect());
    let w = make_windows(&p, &t, 1, 1).unwrap();
    assert_eq!(w.len(), 9);
    assert_eq!(w.samples.shape(), &[9, 1, 3, 2, 6]);
    assert_eq!(w.targets.shape(), &[9, 1, 3, 2, 1]);
    assert_eq!(w.targets.outer(0).unwrap().data(), t.values.outer(1).unwrap().data());
    assert_eq!(make_windows(&p, &t, 1, 0).unwrap().len(), 10);
    assert!(matches!(make_windows(&p, &t, 6, 5), Err(Error::InsufficientFrames { needed: 11, have: 10 })));
    let shifted = cube(10, 3, 2, 1, 1, vec![0.0; 60]);
    assert!(make_windows(&p, &shifted, 1, 1).is_err());
}

fn five_day_axis(from: (i32, u32, u32), to: (i32, u32, u32)) -> Vec<i64> {
    let a = days_from_ymd(from.0, from.1, from.2).unwrap();
    let b = days_from_ymd(to.0, to.1, to.2).unwrap();
    (0..).map(|k| a + 5 * k).take_while(|&d| d <= b).collect()
}

#[test]
fn split_by_date_on_five_year_axis() {
    let axis = five_day_axis((2019, 1, 1), (2023, 12, 31));
    let t = axis.len();
    let p = cube(t, 1, 1, 6, axis[0], (0..t * 6).map(|i| (i % 17) as f32).collect());
    let y = cube(t, 1, 1, 1, axis[0], (0..t).map(|i| i as f32).collect());
    let w = make_windows(&p, &y, 1, 1).unwrap();
    let (train, test) = split(&w, &SplitSpec::default_years()).unwrap();

    let start_2023 = days_from_ymd(2023, 1, 1).unwrap();
    let expected_test: Vec<i64> = axis[1..].iter().copied().filter(|&d| d >= start_2023).collect();
    assert_eq!(test.sample_dates, expected_test);
    assert!(train.sample_dates.iter().all(|&d| d < start_2023));
    assert_eq!(train.len() + test.len(), w.len());
    assert!(test.sample_dates.iter().all(|&d| chrono::Datelike::year(&date_from_days(d).unwrap()) == 2023));

    // stats come from train only: the largest train target maps to 1, later ones clamp
    let ts = train.target_stats.as_ref().unwrap();
    assert_eq!(ts.max[0], train.sample_dates.len() as f32);
    assert!(test.targets.data().iter().all(|&v| v == 1.0));
    assert_eq!(train.targets.data().iter().cloned().fold(f32::MIN, f32::max), 1.0);
}

#[test]
fn split_boundaries_and_empty_sides() {
    let d = |y, m, dd| days_from_ymd(y, m, dd).unwrap();
    let axis = [d(2022, 12, 26), d(2022, 12, 31), d(2023, 1, 5)];
    let p = cube(3, 1, 1, 6, axis[0], vec![0.0; 18]);
    let y = cube(3, 1, 1, 1, axis[0], vec![0.0, 1.0, 2.0]);
    let w = make_windows(&p, &y, 1, 0).unwrap();
    let (train, test) = partition(&w, &SplitSpec::default_years()).unwrap();
    assert_eq!(train.sample_dates, [axis[0], axis[1]]);
    assert_eq!(test.sample_dates, [axis[2]]);

    let old = cube(3, 1, 1, 6, d(2019, 3, 1), vec![0.0; 18]);
    let oy = cube(3, 1, 1, 1, d(2019, 3, 1), vec![0.0; 3]);
    let w = make_windows(&old, &oy, 1, 0).unwrap();
    assert!(matches!(split(&w, &SplitSpec::default_years()), Err(Error::Empty("test split"))));
    assert!(SplitSpec::new((10, 20), (20, 30)).is_err());
}

#[test]
fn synth_still_field_and_determinism() {
    let still = SynthConfig { noise_sigma: 0.0, velocity: (0.0, 0.0), frames: 6, ..SynthConfig::default() };
    let (p, t) = synth_advection(&still).unwrap();
    for k in 1..6 {
        assert_eq!(p.values.outer(k).unwrap(), p.values.outer(0).unwrap());
        assert_eq!(t.values.outer(k).unwrap(), t.values.outer(0).unwrap());
    }
    let cfg = SynthConfig { frames: 30, ..SynthConfig::default() };
    let a = synth_advection(&cfg).unwrap();
    let b = synth_advection(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0.feature_names, ["SO2", "NO2", "CH4", "O3", "CO", "HCHO"]);
    assert_eq!(a.0.units[2], "ppb");
    assert_eq!(a.1.feature_names, ["AER_AI"]);
    assert_eq!(*a.0.time_axis.last().unwrap(), days_from_ymd(2023, 12, 31).unwrap());
    a.0.require_cadence(5).unwrap();
}

#[test]
fn synth_blob_tracks_velocity() {
    let cfg = SynthConfig { n_blobs: 1, noise_sigma: 0.0, velocity: (1.0, 2.0), frames: 12, grid_h: 16, grid_w: 20, ..SynthConfig::default() };
    let (_, t) = synth_advection(&cfg).unwrap();
    let argmax = |k: usize| {
        let f = t.values.outer(k).unwrap();
        let i = (0..f.len()).max_by(|&a, &b| f.data()[a].total_cmp(&f.data()[b])).unwrap();
        (i / 20, i % 20)
    };
    let (y0, x0) = argmax(0);
    for k in 1..12 {
        let (y, x) = argmax(k);
        assert_eq!(y, (y0 + k) % 16, "frame {k}");
        assert_eq!(x, (x0 + 2 * k) % 20, "frame {k}");
    }
}
