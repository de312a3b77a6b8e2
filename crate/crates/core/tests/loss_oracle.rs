use myoseg::model::{LabelMask, ProbMap};
use myoseg::objective::{dice_loss, jaccard_loss, DEFAULT_SMOOTH};
use myoseg::rng::RngStream;
use myoseg::tensor::Tensor;
use proptest::prelude::*;

/// Pixel-by-pixel set-overlap sums written independently of the library.
fn oracle(pred: &[f64], truth: &[f64], s: f64) -> (f64, f64) {
    let mut inter = 0.0;
    let mut sum_pt = 0.0;
    for i in 0..pred.len() {
        inter += pred[i] * truth[i];
        sum_pt += pred[i] + truth[i];
    }
    let union = sum_pt - inter;
    let jac = 1.0 - (inter + s) / (union + s);
    let dice = 1.0 - (2.0 * inter + s) / (sum_pt + s);
    (jac, dice)
}

fn maps(shape: &[usize], p: Vec<f64>, t: Vec<f64>) -> (ProbMap<f64>, LabelMask<f64>) {
    (
        ProbMap::new(Tensor::from_vec(shape, p).unwrap()).unwrap(),
        LabelMask::new(Tensor::from_vec(shape, t).unwrap()).unwrap(),
    )
}

#[test]
fn thousand_random_pairs_match_oracle() {
    let mut rng = RngStream::new(2024);
    for _ in 0..1000 {
        let h = 1 + rng.index(8);
        let w = 1 + rng.index(8);
        let p: Vec<f64> = (0..h * w).map(|_| rng.uniform(0.0, 1.0)).collect();
        let t: Vec<f64> = (0..h * w).map(|_| (rng.index(2)) as f64).collect();
        let (want_j, want_d) = oracle(&p, &t, DEFAULT_SMOOTH);
        let (pm, tm) = maps(&[1, h, w], p, t);
        let j = jaccard_loss(&pm, &tm, DEFAULT_SMOOTH).unwrap().value;
        let d = dice_loss(&pm, &tm, DEFAULT_SMOOTH).unwrap().value;
        assert!((j - want_j).abs() <= 1e-10, "jaccard {j} vs {want_j}");
        assert!((d - want_d).abs() <= 1e-10, "dice {d} vs {want_d}");
    }
}

#[test]
fn half_probability_closed_forms() {
    // p = 0.5 everywhere, half the pixels foreground: I = n/4, P = T = n/2
    let p = vec![0.5; 16];
    let t: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
    let (pm, tm) = maps(&[1, 4, 4], p, t);
    let j = jaccard_loss(&pm, &tm, 0.0).unwrap().value;
    let d = dice_loss(&pm, &tm, 0.0).unwrap().value;
    assert!((j - 2.0 / 3.0).abs() < 1e-12);
    assert!((d - 0.5).abs() < 1e-12);
}

#[test]
fn empty_masks_stay_finite() {
    let (pm, tm) = maps(&[1, 2, 2], vec![0.0; 4], vec![0.0; 4]);
    let j = jaccard_loss(&pm, &tm, DEFAULT_SMOOTH).unwrap();
    let d = dice_loss(&pm, &tm, DEFAULT_SMOOTH).unwrap();
    assert_eq!(j.value, 0.0);
    assert_eq!(d.value, 0.0);
    assert!(j.d_prob.all_finite() && d.d_prob.all_finite());
}

fn pair() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(h, w)| {
        (
            Just(h),
            Just(w),
            prop::collection::vec(0.0f64..=1.0, h * w),
            prop::collection::vec(prop::bool::ANY.prop_map(|b| b as u8 as f64), h * w),
        )
    })
}

proptest! {
    #[test]
    fn jaccard_loss_dominates_dice_loss((h, w, p, t) in pair()) {
        let (pm, tm) = maps(&[1, h, w], p, t);
        let j = jaccard_loss(&pm, &tm, DEFAULT_SMOOTH).unwrap().value;
        let d = dice_loss(&pm, &tm, DEFAULT_SMOOTH).unwrap().value;
        prop_assert!(j >= d - 1e-12);
        prop_assert!((0.0..=1.0).contains(&j) && (0.0..=1.0).contains(&d));
    }

    #[test]
    fn losses_ignore_pixel_order((h, w, p, t) in pair(), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..h * w).collect();
        RngStream::new(seed).shuffle(&mut idx);
        let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let (a, b) = maps(&[1, h, w], p, t);
        let (c, d) = maps(&[1, h, w], pp, tp);
        let j1 = jaccard_loss(&a, &b, DEFAULT_SMOOTH).unwrap().value;
        let j2 = jaccard_loss(&c, &d, DEFAULT_SMOOTH).unwrap().value;
        prop_assert!((j1 - j2).abs() < 1e-12);
        let d1 = dice_loss(&a, &b, DEFAULT_SMOOTH).unwrap().value;
        let d2 = dice_loss(&c, &d, DEFAULT_SMOOTH).unwrap().value;
        prop_assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn losses_symmetric_in_binary_arguments(
        (h, w, _, t) in pair(),
        bits in prop::collection::vec(prop::bool::ANY, 64),
    ) {
        let p: Vec<f64> = bits[..h * w].iter().map(|&b| b as u8 as f64).collect();
        let (a, b) = maps(&[1, h, w], p.clone(), t.clone());
        let (c, d) = maps(&[1, h, w], t, p);
        let ab = dice_loss(&a, &b, DEFAULT_SMOOTH).unwrap().value;
        let cd = dice_loss(&c, &d, DEFAULT_SMOOTH).unwrap().value;
        prop_assert!((ab - cd).abs() < 1e-12);
        let ab = jaccard_loss(&a, &b, DEFAULT_SMOOTH).unwrap().value;
        let cd = jaccard_loss(&c, &d, DEFAULT_SMOOTH).unwrap().value;
        prop_assert!((ab - cd).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_zero_loss((h, w, _, t) in pair()) {
        let (a, b) = maps(&[1, h, w], t.clone(), t);
        prop_assert!(jaccard_loss(&a, &b, DEFAULT_SMOOTH).unwrap().value.abs() < 1e-9);
        prop_assert!(dice_loss(&a, &b, DEFAULT_SMOOTH).unwrap().value.abs() < 1e-9);
    }
}
