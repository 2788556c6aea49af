use ndarray::{array, Array3};
use tppo::{array2, array3, nested2, nested3};

#[test]
fn nested_lists_round_trip() {
    let a = Array3::from_shape_fn((2, 3, 2), |(i, t, k)| (i * 10 + t) as f64 + 0.5 * k as f64);
    let back = array3(&nested3(&a), "a").unwrap();
    assert_eq!(back, a);
    let m = array![[1.0, -2.0], [3.5, 0.0], [7.0, 8.0]];
    assert_eq!(array2(&nested2(&m), 2, "m").unwrap(), m);
}

#[test]
fn ragged_or_malformed_input_is_rejected() {
    let ragged = vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![vec![0.0, 0.0]]];
    assert!(array3(&ragged, "x").is_err());
    let three_coords = vec![vec![vec![0.0, 0.0, 0.0]]];
    assert!(array3(&three_coords, "x").is_err());
    assert!(array2(&[vec![1.0]], 2, "x").is_err());
}

#[test]
fn empty_input_gives_empty_array() {
    assert_eq!(array3(&[], "x").unwrap().dim(), (0, 0, 2));
}
