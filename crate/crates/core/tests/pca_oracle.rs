use nalgebra::{DMatrix, SymmetricEigen};
use qmgeo::flsim::data::{synth_dataset, Dataset};
use qmgeo::flsim::pca::{pca_reduce, Pca};
use qmgeo::flsim::LabeledData;
use qmgeo::StreamKey;

fn covariance(data: &LabeledData, rows: &[usize]) -> DMatrix<f64> {
    let n = data.input_dim();
    let x = DMatrix::from_fn(rows.len(), n, |r, c| data.row(rows[r])[c]);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(rows.len(), n, |r, c| x[(r, c)] - mean[c]);
    centred.transpose() * centred / (rows.len() - 1) as f64
}

#[test]
fn matches_symmetric_eigendecomposition() {
    let ds = synth_dataset(StreamKey::new(31), 400, 8, 4, 4.0, 3).unwrap();
    let rows: Vec<usize> = ds.training_indices().collect();
    let k = 3;
    let pca = Pca::fit(&ds.data, &rows, k, StreamKey::new(1)).unwrap();

    let eig = SymmetricEigen::new(covariance(&ds.data, &rows));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (j, &o) in order.iter().take(k).enumerate() {
        let want = eig.eigenvalues[o];
        assert!((pca.eigenvalues()[j] - want).abs() < 1e-8 * want, "{j}");
        let v = eig.eigenvectors.column(o);
        let dot: f64 = pca.components()[j].iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8, "component {j}: |cos| = {}", dot.abs());
    }
    let total: f64 = eig.eigenvalues.iter().sum();
    let top: f64 = order.iter().take(k).map(|&o| eig.eigenvalues[o]).sum();
    assert!((pca.explained_variance_ratio() - top / total).abs() < 1e-8);
}

#[test]
fn full_rank_projection_reconstructs() {
    let ds = synth_dataset(StreamKey::new(5), 120, 5, 3, 2.0, 2).unwrap();
    let rows: Vec<usize> = ds.training_indices().collect();
    let pca = Pca::fit(&ds.data, &rows, 5, StreamKey::new(2)).unwrap();
    for i in 0..ds.data.len() {
        let x = ds.data.row(i);
        let back = pca.reconstruct(&pca.project(x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn reduce_keeps_split_and_fits_on_training_only() {
    let ds = synth_dataset(StreamKey::new(8), 200, 6, 3, 3.0, 4).unwrap();
    let (reduced, pca) = pca_reduce(&ds, 2, StreamKey::new(0)).unwrap();
    assert_eq!(reduced.data.input_dim(), 2);
    assert_eq!(reduced.partitions, ds.partitions);
    assert_eq!(reduced.holdout, ds.holdout);
    assert_eq!(reduced.data.labels(), ds.data.labels());

    // Moving holdout rows must not change the fitted basis.
    let mut features = ds.data.features().to_vec();
    for &h in &ds.holdout {
        for x in &mut features[h * 6..(h + 1) * 6] {
            *x += 100.0;
        }
    }
    let shifted = Dataset {
        data: LabeledData::new(features, ds.data.labels().to_vec(), 6).unwrap(),
        partitions: ds.partitions.clone(),
        holdout: ds.holdout.clone(),
    };
    let (_, pca2) = pca_reduce(&shifted, 2, StreamKey::new(0)).unwrap();
    assert_eq!(pca.eigenvalues(), pca2.eigenvalues());
}

#[test]
fn rejects_bad_k() {
    let ds = synth_dataset(StreamKey::new(8), 50, 3, 2, 3.0, 1).unwrap();
    assert!(pca_reduce(&ds, 0, StreamKey::new(0)).is_err());
    assert!(pca_reduce(&ds, 4, StreamKey::new(0)).is_err());
}
