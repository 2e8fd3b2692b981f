//! CSV output with round-trippable float formatting.

use std::fmt::Write as _;

use crate::grid::{RadialField, RadialGrid};

/// Shortest representation that round-trips, like `%.17g` without the noise.
pub fn fmt_g17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// `r,value` rows.
pub fn field_csv(f: &RadialField) -> String {
    let mut out = String::from("r,value\n");
    for (r, v) in f.grid.centers().iter().zip(&f.values) {
        let _ = writeln!(out, "{},{}", fmt_g17(*r), fmt_g17(*v));
    }
    out
}

/// `t,r,value` rows for a list of snapshots.
pub fn snapshots_csv(snaps: &[RadialField]) -> String {
    let mut out = String::from("t,r,value\n");
    for f in snaps {
        for (r, v) in f.grid.centers().iter().zip(&f.values) {
            let _ = writeln!(out, "{},{},{}", fmt_g17(f.time), fmt_g17(*r), fmt_g17(*v));
        }
    }
    out
}

/// Generic table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_g17(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(serde::Serialize)]
struct GridJson<'a> {
    faces: &'a [f64],
    grading: f64,
    lambda: f64,
    #[serde(rename = "N")]
    dim: usize,
}

/// Faces, grading, λ and N as a JSON-ready value.
pub fn grid_summary(g: &RadialGrid) -> impl serde::Serialize + '_ {
    GridJson { faces: g.faces(), grading: g.grading(), lambda: g.lambda(), dim: g.dim() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_g17(f64::INFINITY), "inf");
    }

    #[test]
    fn table_layout() {
        let s = table_csv(&["a", "b"], &[vec![1.0, 2.5]]);
        assert_eq!(s, "a,b\n1.0,2.5\n");
    }
}
