use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn confusion_formula_example() {
    let pred = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
    let truth = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
    let c = confusion_metrics(&pred, &truth, 1).unwrap();
    assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, tn: 6, fn_: 1 });
    assert!((c.precision() - 2.0 / 3.0).abs() < 1e-15);
    assert!((c.recall() - 2.0 / 3.0).abs() < 1e-15);
    assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(c.accuracy(), 0.8);
    let perfect = confusion_metrics(&truth, &truth, 1).unwrap();
    assert_eq!([perfect.precision(), perfect.recall(), perfect.f1(), perfect.accuracy()], [1.0; 4]);
    let none = confusion_metrics(&[0, 0], &[0, 0], 1).unwrap();
    assert_eq!([none.precision(), none.recall(), none.f1()], [0.0; 3]);
    assert!(confusion_metrics(&[0], &[0, 1], 1).is_err());
}

#[test]
fn confusion_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let pred: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
        let truth: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
        let c = confusion_metrics(&pred, &truth, 2).unwrap();
        let count = |f: &dyn Fn(usize, usize) -> bool| pred.iter().zip(&truth).filter(|(p, t)| f(**p, **t)).count() as u64;
        assert_eq!(c.tp, count(&|p, t| p == 2 && t == 2));
        assert_eq!(c.fp, count(&|p, t| p == 2 && t != 2));
        assert_eq!(c.fn_, count(&|p, t| p != 2 && t == 2));
        assert_eq!(c.total(), 200);
    }
}

#[test]
fn auc_examples() {
    let roc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert_eq!(roc.auc, 0.75);
    assert_eq!(roc_auc(&[0.1, 0.2, 0.9, 0.8], &[false, false, true, true]).unwrap().auc, 1.0);
    assert_eq!(roc_auc(&[0.3; 5], &[true, false, true, false, false]).unwrap().auc, 0.5);
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
}

#[test]
fn auc_matches_pairwise_oracle_and_trapezoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..10u8)) / 10.0).collect();
        let roc = roc_auc(&scores, &labels).unwrap();
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert_eq!(roc.auc, num / pairs);
        let trap: f64 = roc.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
        assert!((trap - roc.auc).abs() < 1e-12);
        assert!(roc.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        assert_eq!(roc.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        assert_eq!(roc_auc(&squashed, &labels).unwrap().auc, roc.auc);
    }
}

#[test]
fn dice_examples() {
    let a: Vec<f64> = (0..200).map(|i| f64::from(u8::from(i < 100))).collect();
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    let comp: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
    assert_eq!(dice(&a, &comp).unwrap(), 0.0);
    let half: Vec<f64> = (0..200).map(|i| f64::from(u8::from((50..150).contains(&i)))).collect();
    assert_eq!(dice(&a, &half).unwrap(), 0.5);
    assert_eq!(dice(&[0.0; 4], &[0.0; 4]).unwrap(), 1.0);
    assert!(dice(&[0.5], &[1.0]).is_err());
    assert_eq!(dice(&a, &half).unwrap(), dice(&half, &a).unwrap());
}

#[test]
fn pixel_accuracy_and_mse() {
    let a: Vec<f64> = (0..1024).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
    let comp: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
    assert_eq!(pixel_accuracy(&a, &a, 0.5).unwrap(), 1.0);
    assert_eq!(pixel_accuracy(&a, &comp, 0.5).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..1024).map(|_| rng.random()).collect();
    let hits = p.iter().zip(&a).filter(|(p, t)| (**p >= 0.5) as u8 as f64 == **t).count();
    assert_eq!(pixel_accuracy(&p, &a, 0.5).unwrap(), hits as f64 / 1024.0);
    assert_eq!(mse_metric(&p, &p).unwrap(), 0.0);
    let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
    assert!((mse_metric(&shifted, &p).unwrap() - 1.0).abs() < 1e-12);
}

fn bump(w: usize, h: usize, centers: &[(f64, f64)]) -> Vec<f64> {
    let mut m = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            for &(cx, cy) in centers {
                m[y * w + x] += (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / 8.0).exp();
            }
        }
    }
    m
}

#[test]
fn peak_detection_examples() {
    let one = bump(32, 32, &[(10.0, 20.0)]);
    assert_eq!(detect_peaks(&one, 32, 32, 0.5, 3.0).unwrap(), vec![(10.0, 20.0)]);
    assert!(detect_peaks(&[0.0; 64], 8, 8, 0.1, 2.0).unwrap().is_empty());
    let two = bump(40, 40, &[(8.0, 8.0), (30.0, 25.0)]);
    let mut peaks = detect_peaks(&two, 40, 40, 0.5, 5.0).unwrap();
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(peaks, vec![(8.0, 8.0), (30.0, 25.0)]);
    let shifted: Vec<f64> = two.iter().map(|v| v + 3.0).collect();
    let mut again = detect_peaks(&shifted, 40, 40, 3.5, 5.0).unwrap();
    again.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(again, peaks);
    assert!(detect_peaks(&two, 40, 40, 0.5, 0.5).is_err());
}

#[test]
fn detection_matching_examples() {
    let truth = [(10.0, 10.0), (30.0, 30.0), (50.0, 50.0)];
    assert_eq!(detection_f1(&truth, &truth, 4.0).unwrap().f1(), 1.0);
    let empty = detection_f1(&[], &truth, 4.0).unwrap();
    assert_eq!((empty.recall(), empty.fn_), (0.0, 3));
    let pred = [(11.0, 10.0), (30.0, 32.0), (60.0, 50.0)];
    let c = detection_f1(&pred, &truth, 4.0).unwrap();
    assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
    assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
    let swapped = detection_f1(&truth, &pred, 4.0).unwrap();
    assert_eq!((swapped.precision(), swapped.recall()), (c.recall(), c.precision()));
    // One prediction between two truths matches the nearer one only.
    let c = detection_f1(&[(20.0, 20.0)], &[(17.0, 20.0), (22.0, 20.0)], 4.0).unwrap();
    assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 1));
}

#[test]
fn report_is_sorted_key_value_text() {
    let mut r = MetricsReport::default();
    r.set("f1", 0.5);
    r.set("accuracy", 0.75);
    assert_eq!(r.to_text(), "accuracy = 0.75\nf1 = 0.5\n");
}
