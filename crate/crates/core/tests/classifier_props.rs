use proptest::prelude::*;
use wnll_core::classifier::{
    accuracy, batched_vote, predict_softmax, train_softmax, wnll_classify, SoftmaxConfig, WnllParams,
};
use wnll_core::synth::{gaussian_blobs, two_moons};

#[test]
fn separated_blobs_classified_perfectly() {
    let (x, y) = gaussian_blobs(&[&[0.0, 0.0], &[20.0, 0.0]], 60, 1.0, 11).unwrap();
    let train: Vec<usize> = (0..20).collect();
    let test: Vec<usize> = (20..120).collect();
    let pred = wnll_classify(&x.select_rows(&train).unwrap(), &y.select(&train), &x.select_rows(&test).unwrap(), &WnllParams::default()).unwrap();
    assert_eq!(accuracy(&pred, &y.select(&test)).unwrap(), 1.0);
}

#[test]
fn one_template_batch_equals_single_solve() {
    let (x, y) = two_moons(300, 0.1, 3).unwrap();
    let train: Vec<usize> = (0..100).collect();
    let test: Vec<usize> = (100..300).collect();
    let (tx, ty, sx) = (x.select_rows(&train).unwrap(), y.select(&train), x.select_rows(&test).unwrap());
    let single = wnll_classify(&tx, &ty, &sx, &WnllParams::default()).unwrap();
    let (voted, tally) = batched_vote(&tx, &ty, &sx, &WnllParams::default(), 100, 7).unwrap();
    assert_eq!(voted, single);
    assert_eq!(tally.batches(), 1);
    let (_, tally) = batched_vote(&tx, &ty, &sx, &WnllParams::default(), 30, 7).unwrap();
    assert_eq!(tally.batches(), 4);
    assert!((0..tally.len()).all(|i| tally.votes(i).iter().sum::<u32>() == 4));
}

#[test]
fn full_batch_softmax_loss_is_monotone() {
    let (x, y) = two_moons(200, 0.2, 5).unwrap();
    let model = train_softmax(&x, &y, SoftmaxConfig { epochs: 200, lr: 0.5, batch_size: 0, seed: 0 }).unwrap();
    for w in model.loss_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn softmax_fits_its_separable_training_set() {
    let (x, y) = gaussian_blobs(&[&[-4.0, 1.0], &[4.0, -1.0]], 80, 1.0, 9).unwrap();
    let model = train_softmax(&x, &y, SoftmaxConfig { epochs: 30, lr: 0.5, batch_size: 16, seed: 1 }).unwrap();
    assert_eq!(accuracy(&predict_softmax(&model, &x).unwrap(), &y).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wnll_predictions_ignore_global_scale(seed in 0u64..1000, scale in 0.001f64..1000.0) {
        let (x, y) = two_moons(120, 0.15, seed).unwrap();
        let train: Vec<usize> = (0..30).collect();
        let test: Vec<usize> = (30..120).collect();
        let p = WnllParams::default();
        let (tx, ty, sx) = (x.select_rows(&train).unwrap(), y.select(&train), x.select_rows(&test).unwrap());
        let base = wnll_classify(&tx, &ty, &sx, &p).unwrap();
        let scaled = wnll_classify(&tx.scaled(scale).unwrap(), &ty, &sx.scaled(scale).unwrap(), &p).unwrap();
        prop_assert_eq!(base, scaled);
    }
}
