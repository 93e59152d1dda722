//! Accuracy, precision, recall, F1 and tie-aware AUC on small hand-checkable
//! inputs.
//!
//!     cargo run --example metrics

use sfgru::metrics::{roc_auc, MetricsReport};

fn main() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1];
    let labels = [true, true, false, true, false, false, true, false];
    let m = MetricsReport::from_scores(&scores, &labels, 0.5);
    println!("tp {} fp {} tn {} fn {}", m.tp, m.fp, m.tn, m.fn_);
    println!(
        "acc {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  auc {:.4}",
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.auc.unwrap()
    );

    // Tied positive/negative pairs count one half.
    println!("all tied: auc {:?}", roc_auc(&[0.5; 4], &[true, false, true, false]));
    println!("one class only: auc {:?}", roc_auc(&[0.2, 0.7], &[true, true]));

    // Nothing predicted positive: precision is undefined and reported as 0.
    let m = MetricsReport::from_scores(&[0.1, 0.2, 0.3], &[true, false, false], 0.5);
    println!("no positives predicted: precision {} (defined: {})", m.precision, m.precision_defined);
}
