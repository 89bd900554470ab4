use gauss_quad::GaussLegendre;
use std::sync::OnceLock;

/// Gauss–Legendre rule with 64 nodes on [-1, 1].
pub fn gl64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| rule(64))
}

pub fn rule(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(n.max(2))
        .expect("degree >= 2")
        .as_node_weight_pairs()
        .to_vec()
}

/// ∫_a^b f with the supplied rule on [-1, 1].
pub fn integrate<T, F>(rule: &[(f64, f64)], a: f64, b: f64, mut f: F) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    F: FnMut(f64) -> T,
{
    let h = 0.5 * (b - a);
    let m = 0.5 * (b + a);
    let mut acc = T::default();
    for &(x, w) in rule {
        acc = acc + f(m + h * x) * (w * h);
    }
    acc
}
