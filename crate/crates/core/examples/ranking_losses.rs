//! Hinge and Huber ranking losses over a sweep of margins, showing where the
//! Huber gradient stops growing.
//!
//! cargo run --example ranking_losses

use hlrank::loss::{batch_loss, hinge_rank_loss, huber_rank_loss};
use hlrank::LossSpec;

fn main() -> hlrank::Result<()> {
    let delta = 1.5;
    println!("mu\thinge1\thinge2\thuber\td_neg(hinge2)\td_neg(huber)");
    for k in -2..=8 {
        let mu = k as f64 * 0.5;
        // s_pos = 0, so mu = 1 + s_neg
        let s_neg = mu - 1.0;
        let h1 = hinge_rank_loss(0.0, s_neg, 1)?;
        let h2 = hinge_rank_loss(0.0, s_neg, 2)?;
        let hu = huber_rank_loss(0.0, s_neg, delta)?;
        println!(
            "{mu}\t{}\t{}\t{}\t{}\t{}",
            h1.value, h2.value, hu.value, h2.d_neg, hu.d_neg
        );
    }

    // a mislabeled negative (a highlight inside a raw video) scores well above
    // the positive; its pull on the batch gradient is capped by delta
    let pairs = [(1.2, 0.1), (0.9, 0.0), (-1.0, 2.5)];
    for spec in [LossSpec::Hinge { p: 2 }, LossSpec::Huber { delta }] {
        let b = batch_loss(&pairs, &spec)?;
        println!("{spec:?}: mean {:.4}, d_neg per pair {:?}", b.mean, b.d_neg);
    }
    Ok(())
}
