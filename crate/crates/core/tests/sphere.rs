use rand::SeedableRng;

use cabo::geometry::sample_sphere;
use cabo::rng::StreamRng;

#[test]
fn second_moment_is_isotropic() {
    let d = 3;
    let n = 1_000_000;
    let mut rng = StreamRng::seed_from_u64(5);
    let mut m = [[0.0f64; 3]; 3];
    for _ in 0..n {
        let s = sample_sphere(d, &mut rng).unwrap().into_vec();
        assert!((s.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12);
        for i in 0..d {
            for j in 0..d {
                m[i][j] += s[i] * s[j] / n as f64;
            }
        }
    }
    for (i, row) in m.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let expect = if i == j { 1.0 / 3.0 } else { 0.0 };
            assert!((x - expect).abs() <= 0.01, "{m:?}");
        }
    }
}
