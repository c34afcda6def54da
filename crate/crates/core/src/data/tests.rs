use std::fs;

use super::*;

fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> RasterImage {
    RasterImage::from_fn(w, h, 1, |_, y, x| f(x, y)).unwrap()
}

fn record(image: RasterImage, target: Target, patient: &str) -> SampleRecord {
    SampleRecord { image, target, patient_id: patient.to_string(), source_path: "mem".to_string() }
}

#[test]
fn raster_rejects_out_of_range_and_bad_channels() {
    assert!(RasterImage::new(1, 1, 1, vec![1.5]).is_err());
    assert!(RasterImage::new(1, 1, 2, vec![0.0, 0.0]).is_err());
    assert!(RasterImage::new(0, 1, 1, vec![]).is_err());
}

#[test]
fn patch_grid_counts() {
    for (w, h, p, n) in [(1344, 1024, 64, 336), (100, 100, 50, 4), (775, 522, 256, 6)] {
        let r = record(RasterImage::zeros(w, h, 1).unwrap(), Target::Class(0), "a");
        assert_eq!(extract_patches(&r, p).unwrap().len(), n, "{w}x{h}@{p}");
    }
    let small = record(RasterImage::zeros(10, 40, 1).unwrap(), Target::Class(0), "a");
    assert!(extract_patches(&small, 20).unwrap().is_empty());
}

#[test]
fn patches_tile_without_overlap_and_carry_targets() {
    let (w, h, p) = (23, 17, 5);
    let image = gray(w, h, |x, y| ((x * 31 + y * 7) % 255) as f64 / 255.0);
    let mask = gray(w, h, |x, y| ((x + y) % 2) as f64);
    let patches = extract_patches(&record(image.clone(), Target::Mask(mask.clone()), "p"), p).unwrap();
    assert_eq!(patches.len(), (w / p) * (h / p));
    let mut seen = vec![0; w * h];
    for (i, patch) in patches.iter().enumerate() {
        let (r, c) = (i / (w / p), i % (w / p));
        let Target::Mask(m) = &patch.target else { panic!() };
        for y in 0..p {
            for x in 0..p {
                let (gx, gy) = (c * p + x, r * p + y);
                seen[gy * w + gx] += 1;
                assert_eq!(patch.image.get(0, y, x), image.get(0, gy, gx));
                assert_eq!(m.get(0, y, x), mask.get(0, gy, gx));
            }
        }
        assert_eq!(patch.patient_id, "p");
    }
    for y in 0..h {
        for x in 0..w {
            let expect = usize::from(x < (w / p) * p && y < (h / p) * p);
            assert_eq!(seen[y * w + x], expect);
        }
    }
    let dots = vec![(1.0, 1.0), (7.0, 2.0), (22.0, 16.0)];
    let patches = extract_patches(&record(image, Target::Dots(dots), "p"), p).unwrap();
    assert_eq!(patches[0].target, Target::Dots(vec![(1.0, 1.0)]));
    assert_eq!(patches[1].target, Target::Dots(vec![(2.0, 2.0)]));
    let total: usize = patches
        .iter()
        .map(|r| match &r.target {
            Target::Dots(d) => d.len(),
            _ => 0,
        })
        .sum();
    assert_eq!(total, 2);
}

#[test]
fn resize_examples() {
    let img = gray(7, 5, |x, y| (x + y) as f64 / 12.0);
    assert_eq!(resize(&img, 7, 5, Interp::Bilinear).unwrap(), img);
    let checker = gray(2, 2, |x, y| if x == y { 1.0 } else { 0.0 });
    assert_eq!(resize(&checker, 1, 1, Interp::Bilinear).unwrap().data(), &[0.5]);
    let ramp = gray(4, 4, |x, y| (x + 4 * y) as f64 / 15.0);
    let small = resize(&ramp, 2, 2, Interp::Bilinear).unwrap();
    let expect = [2.5 / 15.0, 4.5 / 15.0, 10.5 / 15.0, 12.5 / 15.0];
    for (a, b) in small.data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-9);
    }
    let mask = gray(9, 9, |x, y| if (x as f64 - 4.0).hypot(y as f64 - 4.0) < 3.0 { 1.0 } else { 0.0 });
    assert!(resize(&mask, 5, 13, Interp::Nearest).unwrap().is_binary());
    assert!(resize(&mask, 0, 3, Interp::Nearest).is_err());
}

#[test]
fn right_angle_rotations_are_exact_permutations() {
    let img = RasterImage::from_fn(5, 3, 3, |c, y, x| ((c * 15 + y * 5 + x) as f64) / 45.0).unwrap();
    assert_eq!(rotate(&img, 0.0, Interp::Bilinear).unwrap(), img);
    let r90 = rotate(&img, 90.0, Interp::Bilinear).unwrap();
    assert_eq!((r90.width(), r90.height()), (3, 5));
    let twice = rotate(&r90, 90.0, Interp::Bilinear).unwrap();
    assert_eq!(twice, rotate(&img, 180.0, Interp::Bilinear).unwrap());
    let full = rotate(&rotate(&twice, 90.0, Interp::Bilinear).unwrap(), 90.0, Interp::Bilinear).unwrap();
    assert_eq!(full, img);
    assert_eq!(rotate(&r90, 270.0, Interp::Bilinear).unwrap(), img);
}

#[test]
fn rotated_dot_matches_closed_form_and_pixel_permutation() {
    let (x, y) = rotate_point(10.0, 20.0, 100, 100, 90.0);
    assert_eq!((x, y), (20.0, 89.0));
    let (c, s) = (0.0f64, 1.0f64);
    let (dx, dy) = (10.0 - 49.5, 20.0 - 49.5);
    assert!((49.5 + dx * c + dy * s - x).abs() < 1e-9);
    assert!((49.5 - dx * s + dy * c - y).abs() < 1e-9);
    let theta = 90f64.to_radians();
    assert!((49.5 + dx * theta.cos() + dy * theta.sin() - x).abs() < 1e-9);
    let img = gray(100, 100, |px, py| if (px, py) == (10, 20) { 1.0 } else { 0.0 });
    let r = rotate(&img, 90.0, Interp::Nearest).unwrap();
    assert_eq!(r.get(0, 89, 20), 1.0);
    assert_eq!(r.data().iter().sum::<f64>(), 1.0);
}

#[test]
fn rotate_augment_handles_masks_dots_and_oblique_angles() {
    let img = gray(20, 12, |x, y| (x * y % 7) as f64 / 7.0);
    let mask = gray(20, 12, |x, y| if x < 6 && y > 3 { 1.0 } else { 0.0 });
    let mass: f64 = mask.data().iter().sum();
    let rec = record(img.clone(), Target::Mask(mask), "p");
    let out = rotate_augment(&rec, &[0.0, 90.0, 180.0, 270.0, 45.0]).unwrap();
    assert_eq!(out[0], SampleRecord { source_path: "mem@rot0".into(), ..rec.clone() });
    for r in &out[..4] {
        let Target::Mask(m) = &r.target else { panic!() };
        assert_eq!(m.data().iter().sum::<f64>(), mass);
    }
    let Target::Mask(m45) = &out[4].target else { panic!() };
    assert!(m45.is_binary());
    assert_eq!((out[4].image.width(), out[4].image.height()), (20, 12));
    let dots = record(img, Target::Dots(vec![(0.0, 0.0), (10.0, 6.0)]), "p");
    let rot = rotate_augment(&dots, &[45.0]).unwrap();
    let Target::Dots(d) = &rot[0].target else { panic!() };
    assert_eq!(d.len(), 1, "corner dot leaves the canvas at 45 degrees");
    assert!(rotate_augment(&dots, &[360.0]).is_err());
}

#[test]
fn balance_examples() {
    let labels: Vec<usize> = (0..196_455).map(|_| 0).chain((0..78_768).map(|_| 1)).collect();
    let keep = balance_indices(&labels, 78_000, 1);
    assert_eq!(keep.len(), 156_000);
    assert_eq!(keep.iter().filter(|&&i| labels[i] == 0).count(), 78_000);
    assert!(keep.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(balance_indices(&labels, 200_000, 1).len(), labels.len());
    assert_eq!(keep, balance_indices(&labels, 78_000, 1));
    assert_ne!(keep, balance_indices(&labels, 78_000, 2));
}

#[test]
fn density_target_mass() {
    assert!(density_target(&[], 10, 10, 2.0).unwrap().values.iter().all(|&v| v == 0.0));
    let one = density_target(&[(50.0, 50.0)], 100, 100, 2.0).unwrap();
    assert!((one.sum() - 1.0).abs() < 1e-3);
    let dots: Vec<(f64, f64)> = (0..7).map(|i| (10.0 + 12.0 * i as f64, 30.0 + 5.0 * i as f64)).collect();
    let seven = density_target(&dots, 100, 100, 2.0).unwrap();
    assert!((seven.sum() - 7.0).abs() < 0.01);
    let a = density_target(&dots[..3], 100, 100, 2.0).unwrap();
    let b = density_target(&dots[3..], 100, 100, 2.0).unwrap();
    for ((s, x), y) in seven.values.iter().zip(&a.values).zip(&b.values) {
        assert!((s - (x + y)).abs() < 1e-15);
    }
    assert!(density_target(&[(100.0, 5.0)], 100, 100, 2.0).is_err());
    assert!(density_target(&[(5.0, 5.0)], 100, 100, 0.0).is_err());
}

#[test]
fn one_patient_out_partitions() {
    let recs: Vec<SampleRecord> = (0..40)
        .map(|i| record(RasterImage::zeros(2, 2, 1).unwrap(), Target::Class(i % 2), &format!("p{}", i % 11)))
        .collect();
    for p in 0..11 {
        let id = format!("p{p}");
        let (train, test) = split_one_patient_out(&recs, &id).unwrap();
        assert_eq!(train.len() + test.len(), recs.len());
        assert!(test.iter().all(|r| r.patient_id == id));
        assert!(train.iter().all(|r| r.patient_id != id));
    }
    assert!(split_one_patient_out(&recs, "nobody").is_err());
    let (train, test) = split_one_patient_out(&recs[..1], "p0").unwrap();
    assert!(train.is_empty() && test.len() == 1);
}

#[test]
fn fraction_split_examples() {
    let (a, b) = split_fraction_indices(11_780, None, 0.8, 3).unwrap();
    assert_eq!((a.len(), b.len()), (9_424, 2_356));
    let (a, b) = split_fraction_indices(100, None, 0.9, 3).unwrap();
    assert_eq!((a.len(), b.len()), (90, 10));
    assert_eq!(split_fraction_indices(100, None, 0.9, 3).unwrap().0, a);
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    let labels: Vec<usize> = (0..100).map(|i| usize::from(i < 30)).collect();
    let (tr, _) = split_fraction_indices(100, Some(&labels), 0.8, 5).unwrap();
    assert_eq!(tr.iter().filter(|&&i| labels[i] == 1).count(), 24);
    assert!(split_fraction_indices(10, None, 1.0, 0).is_err());
}

#[test]
fn synthetic_sets_are_deterministic_and_consistent() {
    for kind in [SynthKind::Blobs, SynthKind::Circles, SynthKind::Dots] {
        let a = gen_synthetic(&SynthSpec::new(kind, 6, 32, 4)).unwrap();
        assert_eq!(a, gen_synthetic(&SynthSpec::new(kind, 6, 32, 4)).unwrap());
        assert_ne!(a, gen_synthetic(&SynthSpec::new(kind, 6, 32, 5)).unwrap());
        for r in &a {
            r.validate().unwrap();
        }
    }
    for r in gen_synthetic(&SynthSpec::new(SynthKind::Circles, 10, 64, 1)).unwrap() {
        let Target::Mask(m) = &r.target else { panic!() };
        assert!(m.is_binary());
        let (mut fg, mut bg) = (vec![], vec![]);
        for (v, k) in r.image.data().iter().zip(m.data()) {
            if *k == 1.0 { fg.push(*v) } else { bg.push(*v) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&fg) > 0.6 && mean(&bg) < 0.35);
    }
    for r in gen_synthetic(&SynthSpec::new(SynthKind::Dots, 10, 64, 1)).unwrap() {
        let Target::Dots(d) = &r.target else { panic!() };
        assert!((3..=8).contains(&d.len()));
        for &(x, y) in d {
            assert!(r.image.get(0, y as usize, x as usize) > 0.7);
        }
    }
    assert!(gen_synthetic(&SynthSpec::new(SynthKind::Dots, 1, 8, 0)).is_err());
}

#[test]
fn manifest_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut recs = gen_synthetic(&SynthSpec::new(SynthKind::Blobs, 3, 16, 1)).unwrap();
    recs.extend(gen_synthetic(&SynthSpec::new(SynthKind::Circles, 2, 16, 1)).unwrap());
    recs.extend(gen_synthetic(&SynthSpec::new(SynthKind::Dots, 2, 16, 1)).unwrap());
    let manifest = write_dataset(&recs, dir.path()).unwrap();
    let back = load_manifest(&manifest).unwrap();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!((&a.image, &a.target, &a.patient_id), (&b.image, &b.target, &b.patient_id));
    }

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "image,target_kind,target,patient_id,class\n").unwrap();
    assert!(load_manifest(&empty).unwrap().is_empty());

    RasterImage::zeros(8, 8, 1).unwrap().save_png(dir.path().join("small.png")).unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "image,target_kind,target,patient_id,class\nimages/00000.png,class,0,a,0\nimages/00003.png,mask,small.png,b,\n",
    )
    .unwrap();
    match load_manifest(&bad) {
        Err(crate::Error::Manifest { row, .. }) => assert_eq!(row, 2),
        other => panic!("{other:?}"),
    }
    let missing = dir.path().join("missing.csv");
    fs::write(&missing, "image,target_kind,target,patient_id,class\nnope.png,class,0,a,0\n").unwrap();
    assert!(load_manifest(&missing).is_err());
}

#[test]
fn png_round_trip_rgb() {
    let dir = tempfile::tempdir().unwrap();
    let img = RasterImage::from_fn(5, 4, 3, |c, y, x| ((c * 20 + y * 5 + x) * 3) as f64 / 255.0).unwrap();
    let p = dir.path().join("x.png");
    img.save_png(&p).unwrap();
    assert_eq!(RasterImage::load_png(&p).unwrap(), img);
}

#[test]
fn resize_record_moves_masks_and_dots() {
    let image = RasterImage::zeros(50, 50, 3).unwrap();
    let r = SampleRecord { image, target: Target::Dots(vec![(-0.5, 24.5), (49.0, 0.0)]), patient_id: "p".into(), source_path: "s".into() };
    let out = resize_record(&r, 48, 48).unwrap();
    assert_eq!((out.image.width(), out.image.height(), out.image.channels()), (48, 48, 3));
    let Target::Dots(d) = &out.target else { panic!() };
    assert_eq!(d[0], (-0.5, 23.5));
    assert!((d[1].0 - (49.5 * 0.96 - 0.5)).abs() < 1e-12);

    let mask = RasterImage::from_fn(50, 50, 1, |_, y, _| f64::from(u8::from(y < 25))).unwrap();
    let r = SampleRecord { image: RasterImage::zeros(50, 50, 1).unwrap(), target: Target::Mask(mask), ..r };
    let Target::Mask(m) = resize_record(&r, 48, 48).unwrap().target else { panic!() };
    assert!(m.is_binary());
    assert_eq!(m.data().iter().sum::<f64>(), 24.0 * 48.0);
}
