use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tempseg_core::decoder::{
    decode_all, derive_orders, fit_gaussians, loglik_grid, viterbi_decode, Covariance, OrderConstraint, OrderMode,
};
use tempseg_core::embednet::EmbeddedSequence;
use tempseg_core::globalassign::{GlobalAssignment, Strategy};
use tempseg_core::videocluster::WithinVideoClusters;
use tempseg_core::Matrix;

/// Best score over all ways to cut `frames` frames into `k` nonempty ordered
/// segments, summing the grid in frame order.
fn enumerate_best(grid: &Matrix, order: &[usize]) -> (f64, Vec<usize>) {
    let (frames, k) = (grid.rows(), order.len());
    let mut best = (f64::NEG_INFINITY, Vec::new());
    // Each admissible path is a choice of k - 1 advance frames among 1..frames.
    let mut cuts: Vec<usize> = (1..k).collect();
    loop {
        let mut labels = Vec::with_capacity(frames);
        let mut seg = 0;
        for t in 0..frames {
            if seg < cuts.len() && cuts[seg] == t {
                seg += 1;
            }
            labels.push(order[seg]);
        }
        let score = labels.iter().enumerate().fold(0.0, |acc, (t, &c)| acc + grid[(t, c)]);
        if score > best.0 {
            best = (score, labels);
        }
        // next combination
        let mut i = cuts.len();
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if cuts[i] < frames - (cuts.len() - i) {
                cuts[i] += 1;
                for j in i + 1..cuts.len() {
                    cuts[j] = cuts[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_grid(rng: &mut ChaCha8Rng, frames: usize, k: usize) -> Matrix {
    Matrix::from_vec(frames, k, (0..frames * k).map(|_| rng.random_range(-5.0..0.0)).collect()).unwrap()
}

fn clusters(id: &str, means: Vec<f64>, labels: Vec<usize>) -> WithinVideoClusters {
    let k = means.len();
    WithinVideoClusters { video_id: id.into(), labels, centroids: Matrix::zeros(k, 1), mean_timestamps: means, k }
}

#[test]
fn grid_matches_direct_density() {
    let pts = Matrix::from_rows(&[[0.0, 1.0], [1.0, 3.0], [2.0, 2.0]]).unwrap();
    let other = Matrix::from_rows(&[[5.0, 5.0], [6.0, 4.0]]).unwrap();
    let model = fit_gaussians(&[pts, other], Covariance::Diagonal).unwrap();
    let emb = EmbeddedSequence::new("v", Matrix::from_rows(&[[0.5, 0.5], [5.5, 4.0]]).unwrap());
    let grid = loglik_grid(&model, &emb).unwrap();
    for t in 0..2 {
        for k in 0..2 {
            let x = emb.embedding.row(t);
            let mut density = 1.0;
            for d in 0..2 {
                let (mu, var) = (model.means[(k, d)], model.variances[(k, d)]);
                density *= (-(x[d] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            }
            assert!((grid[(t, k)] - density.ln()).abs() < 1e-9);
        }
    }
    assert_eq!(grid.row(0).iter().cloned().fold(f64::MIN, f64::max), grid[(0, 0)]);
}

#[test]
fn reversed_videos_get_reversed_orders() {
    let a = clusters("a", vec![0.2, 0.5, 0.8], vec![0, 1, 2]);
    let b = clusters("b", vec![0.8, 0.5, 0.2], vec![0, 1, 2]);
    let assignment = GlobalAssignment { strategy: Strategy::MultiHub, global_of: vec![vec![0, 1, 2], vec![0, 1, 2]], cost: 0.0 };
    let orders = derive_orders(&[a, b], &assignment, OrderMode::VideoWise).unwrap();
    let mut reversed = orders[0].order.clone();
    reversed.reverse();
    assert_eq!(orders[1].order, reversed);
}

#[test]
fn uniform_order_is_shared() {
    let a = clusters("a", vec![0.3, 0.7], vec![0, 0, 1, 1]);
    let b = clusters("b", vec![0.6, 0.2], vec![1, 1, 0, 0]);
    let assignment = GlobalAssignment { strategy: Strategy::MultiHub, global_of: vec![vec![0, 1], vec![1, 0]], cost: 0.0 };
    let orders = derive_orders(&[a, b], &assignment, OrderMode::Uniform).unwrap();
    assert_eq!(orders[0], orders[1]);
    assert_eq!(orders[0].order, vec![0, 1]);
}

#[test]
fn timestamp_ties_prefer_lower_global_id() {
    let a = clusters("a", vec![0.5, 0.5], vec![0, 1]);
    let assignment = GlobalAssignment { strategy: Strategy::MultiHub, global_of: vec![vec![1, 0]], cost: 0.0 };
    assert_eq!(derive_orders(&[a], &assignment, OrderMode::VideoWise).unwrap()[0].order, vec![0, 1]);
}

#[test]
fn single_cluster_labels_everything() {
    let model = fit_gaussians(&[Matrix::from_rows(&[[0.0], [1.0]]).unwrap()], Covariance::Diagonal).unwrap();
    let emb = EmbeddedSequence::new("v", Matrix::from_rows(&[[0.0], [9.0], [1.0]]).unwrap());
    let seg = decode_all(&[emb], &model, &[OrderConstraint::new(vec![0]).unwrap()]).unwrap();
    assert_eq!(seg.labels, vec![vec![0, 0, 0]]);
}

#[test]
fn planted_boundaries_are_found() {
    // Four well-separated 1-D actions in the order 2, 0, 3, 1.
    let levels = [0.0, 10.0, 20.0, 30.0];
    let lengths = [12, 7, 15, 9];
    let order = [2usize, 0, 3, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (&a, &len) in order.iter().zip(&lengths) {
        for _ in 0..len {
            rows.push([levels[a] + rng.random_range(-1.0..1.0)]);
            truth.push(a);
        }
    }
    let groups: Vec<Matrix> =
        levels.iter().map(|&l| Matrix::from_rows(&[[l - 1.0], [l], [l + 1.0]]).unwrap()).collect();
    let model = fit_gaussians(&groups, Covariance::Diagonal).unwrap();
    let emb = EmbeddedSequence::new("v", Matrix::from_rows(&rows).unwrap());
    let seg = decode_all(&[emb], &model, &[OrderConstraint::new(order.to_vec()).unwrap()]).unwrap();
    assert_eq!(seg.labels[0], truth);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn viterbi_equals_enumeration(k in 1usize..5, extra in 0usize..9, seed in any::<u64>()) {
        let frames = k + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, frames, k);
        let mut order: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let path = viterbi_decode(&grid, &OrderConstraint::new(order.clone()).unwrap()).unwrap();
        let (best, _) = enumerate_best(&grid, &order);
        prop_assert_eq!(path.score, best);

        // The labels realize the score, follow the order and visit every cluster.
        let realized = path.labels.iter().enumerate().fold(0.0, |acc, (t, &c)| acc + grid[(t, c)]);
        prop_assert_eq!(realized, path.score);
        let pos: Vec<usize> = path.labels.iter().map(|l| order.iter().position(|o| o == l).unwrap()).collect();
        prop_assert_eq!(pos[0], 0);
        prop_assert_eq!(*pos.last().unwrap(), k - 1);
        for w in pos.windows(2) {
            prop_assert!(w[1] == w[0] || w[1] == w[0] + 1);
        }
    }
}
