//! Error-structure probe for knn on embedded features at seed scale.

use prachdet::classifiers::{fit, ClassifierSpec};
use prachdet::eval::stratified_split;
use prachdet::transform::psr_features;
use prachdet::{GenConfig, Label, PsrConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spread: f64 = args.first().and_then(|v| v.parse().ok()).unwrap_or(6.0);
    let k: usize = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(5);
    let cfg = GenConfig { snr_spread_db: spread, ..GenConfig::default() };
    let ds = prachdet::prach::generate_dataset(&cfg).unwrap();
    let (train, test) = stratified_split(&ds, 0.7, 99).unwrap();
    let x_train = psr_features(&train, &PsrConfig::default()).unwrap();
    let x_test = psr_features(&test, &PsrConfig::default()).unwrap();

    // Seed split mirroring run_cell (10% stratified).
    let (seed_idx, _) = prachdet::eval::stratified_indices(&x_train.labels, 0.10, 7).unwrap();
    let x_seed = x_train.subset(&seed_idx);
    let seed_labels = x_seed.labels.clone();
    let weighted: bool = args.get(2).map(|v| v == "w").unwrap_or(false);
    let pred = if weighted {
        // Inverse-distance-weighted vote among the k nearest seed rows.
        let d = x_seed.cols;
        let seed_rows: Vec<&[f64]> = (0..x_seed.rows()).map(|i| x_seed.row(i)).collect();
        (0..x_test.rows())
            .map(|i| {
                let q = x_test.row(i);
                let mut dist: Vec<(f64, Label)> = seed_rows
                    .iter()
                    .zip(&x_seed.labels)
                    .map(|(r, &l)| {
                        let d2: f64 = (0..d).map(|j| (q[j] - r[j]).powi(2)).sum();
                        (d2.sqrt(), l)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut w_peak = 0.0;
                let mut w_false = 0.0;
                for &(dd, l) in dist.iter().take(k) {
                    let w = 1.0 / (dd + 1e-12);
                    match l {
                        Label::Peak => w_peak += w,
                        Label::FalsePeak => w_false += w,
                    }
                }
                if w_peak > w_false { Label::Peak } else { Label::FalsePeak }
            })
            .collect()
    } else {
        let model = fit(&ClassifierSpec::knn(k), &x_seed, &seed_labels).unwrap();
        model.predict(&x_test).unwrap()
    };

    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, t) in pred.iter().zip(&x_test.labels) {
        match (p, t) {
            (Label::Peak, Label::Peak) => tp += 1,
            (Label::Peak, Label::FalsePeak) => fp += 1,
            (Label::FalsePeak, Label::Peak) => fn_ += 1,
            _ => tn += 1,
        }
    }
    println!("spread {spread} k {k}: tp {tp} fp {fp} fn {fn_} tn {tn}");
    println!("precision {:.4} recall {:.4}", tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fn_) as f64);

    // Bucket recall errors by how many peaks sit inside the forward context
    // window (lags 1..m-1 of the embedding).
    let labels = &x_test.labels;
    let ctx_peaks = |i: usize| -> usize {
        (1..7)
            .filter(|&o| i + o < labels.len() && labels[i + o] == Label::Peak)
            .count()
    };
    let mut total = [0usize; 7];
    let mut missed = [0usize; 7];
    for (i, (p, t)) in pred.iter().zip(labels).enumerate() {
        if *t == Label::Peak {
            let c = ctx_peaks(i);
            total[c] += 1;
            if *p == Label::FalsePeak {
                missed[c] += 1;
            }
        }
    }
    for c in 0..7 {
        if total[c] > 0 {
            println!(
                "ctx peaks {c}: {} test peaks, {} missed ({:.1}%)",
                total[c],
                missed[c],
                100.0 * missed[c] as f64 / total[c] as f64
            );
        }
    }
}
