//! Compares backpropagated gradients of a small ranking net with central
//! finite differences of the batch loss.
//!
//! cargo run --example gradient_check

use hlrank::loss::batch_loss;
use hlrank::{LayerSpec, LossSpec, Mode, RankingNet};
use ndarray::{array, Array1, Array2};

fn loss_of(net: &RankingNet, x: &Array2<f64>, spec: &LossSpec) -> f64 {
    let scores = net.score_batch(x.view()).unwrap();
    let b = x.nrows() / 2;
    let pairs: Vec<(f64, f64)> = (0..b).map(|i| (scores[i], scores[b + i])).collect();
    batch_loss(&pairs, spec).unwrap().mean
}

fn main() -> hlrank::Result<()> {
    let spec = LayerSpec::new(vec![3, 5, 4, 1], 0.0)?;
    let mut net = RankingNet::init(spec, 17);
    // two positives, then two negatives
    let x: Array2<f64> = array![[0.3, -0.2, 0.9], [0.1, 0.4, -0.5], [-0.7, 0.2, 0.6], [0.5, 0.5, -0.1]];
    let h = 1e-5;

    for loss in [LossSpec::Hinge { p: 1 }, LossSpec::Hinge { p: 2 }, LossSpec::Huber { delta: 1.5 }] {
        let (scores, cache) = net.forward_batch(x.view(), Mode::Train, None)?;
        let pairs: Vec<(f64, f64)> = (0..2).map(|i| (scores[i], scores[2 + i])).collect();
        let bl = batch_loss(&pairs, &loss)?;
        let d = Array1::from(vec![bl.d_pos[0], bl.d_pos[1], bl.d_neg[0], bl.d_neg[1]]);
        let grads = net.backward_batch(&cache, d.view())?;

        let mut worst = 0.0f64;
        for k in 0..net.weights().len() {
            for idx in 0..net.weights()[k].len() {
                let (rows, cols) = net.weights()[k].dim();
                let (o, i) = (idx / cols, idx % cols);
                debug_assert!(o < rows);
                let orig = net.weights()[k][[o, i]];
                net.params_mut().0[k][[o, i]] = orig + h;
                let up = loss_of(&net, &x, &loss);
                net.params_mut().0[k][[o, i]] = orig - h;
                let down = loss_of(&net, &x, &loss);
                net.params_mut().0[k][[o, i]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.weights[k][[o, i]];
                worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5));
            }
        }
        println!("{loss:?}: loss {:.6}, worst relative weight-gradient error {worst:.2e}", bl.mean);
    }
    Ok(())
}
