use nalgebra::DMatrix;
use propcoloc::sim::{gen_ld, wishart_draw, wishart_perturb, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truth() -> DMatrix<f64> {
    let cfg = SimConfig::single(100, 5, 1.0, 0.5);
    gen_ld(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().0
}

#[test]
fn mean_of_unscaled_draws_matches_truth() {
    let ld = truth();
    let lambda = 12;
    let reps = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sum = DMatrix::zeros(5, 5);
    let mut sq = DMatrix::zeros(5, 5);
    for _ in 0..reps {
        let w = wishart_draw(&ld, lambda, &mut rng).unwrap();
        sq += w.component_mul(&w);
        sum += w;
    }
    let m = reps as f64;
    let mean = &sum / m;
    for a in 0..5 {
        for b in 0..5 {
            let var = sq[(a, b)] / m - mean[(a, b)].powi(2);
            let se = (var / m).sqrt();
            assert!(
                (mean[(a, b)] - ld[(a, b)]).abs() < 3.5 * se,
                "entry ({a},{b}): {} vs {} (se {se})",
                mean[(a, b)],
                ld[(a, b)]
            );
        }
    }
}

#[test]
fn smaller_df_deviates_more() {
    let ld = truth();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let avg_dev = |lambda: usize, rng: &mut ChaCha8Rng| {
        (0..500)
            .map(|_| (wishart_perturb(&ld, lambda, rng).unwrap() - &ld).norm())
            .sum::<f64>()
            / 500.0
    };
    let small = avg_dev(10, &mut rng);
    let large = avg_dev(100, &mut rng);
    assert!(small > large, "{small} <= {large}");
}

#[test]
fn huge_df_concentrates() {
    let ld = truth();
    let w = wishart_perturb(&ld, 1_000_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!((w - ld).amax() < 0.01);
}
