//! Deterministic CSV text: `.` decimal separator, 17 significant digits.

use nalgebra::DMatrix;
use std::fmt::Write as _;

pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0" so outputs do not depend on the sign of zero
        return "0.0000000000000000e0".into();
    }
    format!("{x:.16e}")
}

/// Matrix dump with header row,col,value.
pub fn matrix_csv(a: &DMatrix<f64>) -> String {
    let mut out = String::from("row,col,value\n");
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let _ = writeln!(out, "{i},{j},{}", fmt_f64(a[(i, j)]));
        }
    }
    out
}

/// Parses a `row,col,value` dump back into a square matrix.
pub fn parse_matrix_csv(text: &str) -> Option<DMatrix<f64>> {
    let mut entries = Vec::new();
    let mut n = 0;
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut it = line.split(',');
        let i: usize = it.next()?.trim().parse().ok()?;
        let j: usize = it.next()?.trim().parse().ok()?;
        let v: f64 = it.next()?.trim().parse().ok()?;
        n = n.max(i + 1).max(j + 1);
        entries.push((i, j, v));
    }
    let mut a = DMatrix::zeros(n, n);
    for (i, j, v) in entries {
        a[(i, j)] = v;
    }
    Some(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
    }
}
