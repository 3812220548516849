//! Fixed sinusoidal positional encoding and the distance-preservation
//! counterexample: three points on the unit circle in the `xz` plane whose
//! distance ordering flips once the encoding has enough frequencies.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::camera::Vec3;

/// `(sin(2⁰πt), cos(2⁰πt), …, sin(2^{L−1}πt), cos(2^{L−1}πt))`.
pub fn gamma_encode(t: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * levels);
    for k in 0..levels {
        let arg = (k as f64).exp2() * t * PI;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// `(x, y, z, γ(x), γ(y), γ(z))`, length `3 + 6L`.
pub fn t_encode(p: Vec3, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 + 6 * levels);
    out.extend_from_slice(&p);
    for c in p {
        out.extend(gamma_encode(c, levels));
    }
    out
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance between vectors of different length");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub levels: usize,
    pub d_ab: f64,
    pub d_ac: f64,
}

/// Encoded distances `d(T(a), T(b))` and `d(T(a), T(c))` for `L = 0..=l_max`.
pub fn distance_curve(a: Vec3, b: Vec3, c: Vec3, l_max: usize) -> Vec<CurveRow> {
    (0..=l_max)
        .map(|l| {
            let ta = t_encode(a, l);
            CurveRow {
                levels: l,
                d_ab: euclidean(&ta, &t_encode(b, l)),
                d_ac: euclidean(&ta, &t_encode(c, l)),
            }
        })
        .collect()
}

/// Formats `v` with nine significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.8e}")
    }
}

/// CSV with header `L,d_ab,d_ac`.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("L,d_ab,d_ac\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.levels, sig9(r.d_ab), sig9(r.d_ac));
    }
    s
}

/// Smallest `L*` such that `d_ab > d_ac` holds for every row with `L >= L*`.
pub fn crossover(rows: &[CurveRow]) -> Option<usize> {
    let mut start = None;
    for r in rows {
        if r.d_ab > r.d_ac {
            start.get_or_insert(r.levels);
        } else {
            start = None;
        }
    }
    start
}

/// The counterexample triple: `a` at 70°, `b` at 80°, `c` the mirror of `a`.
pub fn proof_triple() -> (Vec3, Vec3, Vec3) {
    let (c70, s70) = (70f64.to_radians().cos(), 70f64.to_radians().sin());
    let (c80, s80) = (80f64.to_radians().cos(), 80f64.to_radians().sin());
    ([c70, 0.0, s70], [c80, 0.0, s80], [-c70, 0.0, s70])
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    pub levels: usize,
    pub raw_ab: f64,
    pub raw_ac: f64,
    pub enc_ab: f64,
    pub enc_ac: f64,
    /// Raw ordering holds by more than the margin.
    pub raw_holds: bool,
    /// Encoded ordering is reversed by more than the margin.
    pub reversed: bool,
}

impl DistanceReport {
    /// True when the pair of inequalities is a counterexample to distance preservation.
    pub fn pass(&self) -> bool {
        self.raw_holds && self.reversed
    }
}

pub const MARGIN: f64 = 1e-6;

/// Evaluates both inequalities for the proof triple at `levels` frequencies.
pub fn check_distance_preservation(levels: usize) -> DistanceReport {
    let (a, b, c) = proof_triple();
    let raw_ab = euclidean(&a, &b);
    let raw_ac = euclidean(&a, &c);
    let enc_ab = euclidean(&t_encode(a, levels), &t_encode(b, levels));
    let enc_ac = euclidean(&t_encode(a, levels), &t_encode(c, levels));
    DistanceReport {
        levels,
        raw_ab,
        raw_ac,
        enc_ab,
        enc_ac,
        raw_holds: raw_ac - raw_ab > MARGIN,
        reversed: enc_ab - enc_ac > MARGIN,
    }
}

/// The default check at `L = 10`.
pub fn check_proposition1() -> DistanceReport {
    check_distance_preservation(10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        let g = gamma_encode(0.0, 2);
        assert_eq!(g, vec![0.0, 1.0, 0.0, 1.0]);
        let g = gamma_encode(1.0, 1);
        assert!(g[0].abs() < 1e-15 && g[1] == -1.0);
        assert_eq!(gamma_encode(0.3, 10).len(), 20);
        assert!(gamma_encode(0.3, 0).is_empty());
    }

    #[test]
    fn t_examples() {
        assert_eq!(t_encode([0.0; 3], 1), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(t_encode([0.1, 0.2, 0.3], 10).len(), 63);
        assert_eq!(t_encode([0.1, 0.2, 0.3], 0), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn raw_distances_are_chords() {
        let r = check_distance_preservation(0);
        assert!((r.raw_ab - 2.0 * 5f64.to_radians().sin()).abs() < 1e-12);
        assert!((r.raw_ac - 2.0 * 70f64.to_radians().cos()).abs() < 1e-12);
        assert!((r.raw_ab - 0.174311).abs() < 1e-6);
        assert!((r.raw_ac - 0.684040).abs() < 1e-6);
        // with no frequencies the encoding is the identity, so no reversal
        assert!(r.raw_holds && !r.reversed);
    }

    #[test]
    fn reversal_at_ten_levels() {
        let r = check_proposition1();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn mirror_input_has_zero_distance() {
        let (a, b, _) = proof_triple();
        for row in distance_curve(a, b, a, 6) {
            assert_eq!(row.d_ac, 0.0);
        }
    }

    #[test]
    fn crossover_exists() {
        let (a, b, c) = proof_triple();
        let rows = distance_curve(a, b, c, 10);
        let l = crossover(&rows).unwrap();
        assert!(l <= 10);
        assert!(rows[..l].iter().any(|r| r.d_ab <= r.d_ac) || l == 0);
    }

    #[test]
    fn csv_layout() {
        let (a, b, c) = proof_triple();
        let csv = curve_csv(&distance_curve(a, b, c, 2));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "L,d_ab,d_ac");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0.174311485,0.684040287");
    }

    #[test]
    fn sig9_formats() {
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(12.3456789012), "12.3456789");
        assert_eq!(sig9(0.0), "0");
    }
}
