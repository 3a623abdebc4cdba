use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tkdistill::eval::{accuracy, mean_average_precision, Candidate, RankedList};
use tkdistill::kernelsvm::{train_smo, SvmTrainConfig};
use tkdistill::oracle::{ptk_bruteforce, random_tree, sst_bruteforce};
use tkdistill::treekernel::{ptk_kernel, sst_kernel, GramMatrix};

use crate::Failure;

fn kernel_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels = ["A", "B", "C", "D"];
    let words = ["x", "y"];
    let (mut sst, mut ptk): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let (n1, n2) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let a = random_tree(&mut rng, n1, &labels, &words);
        let b = random_tree(&mut rng, n2, &labels, &words);
        sst = sst.max((sst_kernel(&a, &b, 0.4) - sst_bruteforce(&a, &b, 0.4)).abs());
        let (n1, n2) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        let a = random_tree(&mut rng, n1, &labels, &words);
        let b = random_tree(&mut rng, n2, &labels, &words);
        ptk = ptk.max((ptk_kernel(&a, &b, 0.4, 0.4) - ptk_bruteforce(&a, &b, 0.4, 0.4)).abs());
    }
    (
        sst <= 1e-9 && ptk <= 1e-9,
        format!("tree kernels vs brute force on 200 pairs: SST {sst:.1e}, PTK {ptk:.1e}"),
    )
}

fn svm_optimality() -> (bool, String) {
    let toy = GramMatrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).expect("square rows");
    let cfg = SvmTrainConfig { c: 10.0, ..Default::default() };
    let Ok(m) = train_smo(&toy, &[1.0, -1.0], &cfg) else {
        return (false, "SMO failed on the two-point toy".into());
    };
    let toy_ok = (m.alphas[0] - 0.5).abs() <= 1e-6 && (m.alphas[1] - 0.5).abs() <= 1e-6 && m.bias.abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| if x[0] + x[1] + rng.gen_range(-0.3..0.3) > 0.0 { 1.0 } else { -1.0 })
        .collect();
    let k = GramMatrix::linear(&xs);
    let Ok(noisy) = train_smo(&k, &ys, &SvmTrainConfig::default()) else {
        return (false, "SMO failed on 40 noisy points".into());
    };
    let kkt = noisy.kkt_violation(&k);
    let eq = noisy.equality_residual();
    (
        toy_ok && kkt <= 1e-3 && eq <= 1e-6,
        format!(
            "SMO toy α = [{:.4}, {:.4}], b = {:.1e}; KKT violation {kkt:.1e}, |Σαy| {eq:.1e}",
            m.alphas[0], m.alphas[1], m.bias
        ),
    )
}

fn metrics() -> (bool, String) {
    let acc = accuracy(&[true, false, true], &[true, false, false]).unwrap_or(f64::NAN);
    let c = |id: &str, score: f64, relevant: bool| Candidate {
        id: id.into(),
        score,
        relevant,
    };
    let lists = [
        RankedList::new("q1", vec![c("c1", 0.9, true), c("c2", 0.8, false), c("c3", 0.7, true)]),
        RankedList::new("q2", vec![c("c4", 0.9, false), c("c5", 0.3, true)]),
    ];
    let map = mean_average_precision(&lists).unwrap_or(f64::NAN);
    (
        acc == 2.0 / 3.0 && (map - 2.0 / 3.0).abs() < 1e-12,
        format!("accuracy fixture {acc:.4}, MAP fixture {map:.4}"),
    )
}

pub fn run() -> Result<(), Failure> {
    let checks = [kernel_oracles(), svm_optimality(), metrics()];
    for (ok, msg) in &checks {
        println!("{} {msg}", if *ok { "ok  " } else { "FAIL" });
    }
    if checks.iter().all(|(ok, _)| *ok) {
        Ok(())
    } else {
        Err(Failure::Internal("selftest failed".into()))
    }
}
