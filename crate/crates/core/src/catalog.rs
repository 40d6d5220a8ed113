//! Built-in algebras. Every entry carries a matrix representation whose
//! commutators reproduce the structure constants.

use nalgebra::DMatrix;

use crate::algebra::LieAlgebra;

/// `E_ij` in `m × m`, zero-based.
pub fn unit(m: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, m);
    e[(i, j)] = 1.0;
    e
}

/// Three-dimensional Heisenberg algebra with `[h1, h2] = −h3`.
pub fn heisenberg() -> LieAlgebra {
    LieAlgebra::from_matrix_basis(
        &["h1", "h2", "h3"],
        vec![unit(3, 0, 1), unit(3, 1, 2), -unit(3, 0, 2)],
    )
    .expect("catalog algebra is valid")
}

/// Upper-triangular 3×3 real matrices: `t1..t3` diagonal, `t4 = E12`,
/// `t5 = E23`, `t6 = E13`.
pub fn upper_triangular() -> LieAlgebra {
    LieAlgebra::from_matrix_basis(
        &["t1", "t2", "t3", "t4", "t5", "t6"],
        vec![
            unit(3, 0, 0),
            unit(3, 1, 1),
            unit(3, 2, 2),
            unit(3, 0, 1),
            unit(3, 1, 2),
            unit(3, 0, 2),
        ],
    )
    .expect("catalog algebra is valid")
}

/// `n`-dimensional abelian algebra realized by diagonal matrices.
pub fn abelian(n: usize) -> LieAlgebra {
    assert!(n > 0, "abelian algebra needs positive dimension");
    let labels: Vec<String> = (1..=n).map(|i| format!("a{i}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    LieAlgebra::from_matrix_basis(&refs, (0..n).map(|i| unit(n, i, i)).collect())
        .expect("catalog algebra is valid")
}

/// `sl(2)` with `[e,f] = h`, `[h,e] = 2e`, `[h,f] = −2f`. Not solvable.
pub fn sl2() -> LieAlgebra {
    LieAlgebra::from_matrix_basis(
        &["e", "f", "h"],
        vec![unit(2, 0, 1), unit(2, 1, 0), unit(2, 0, 0) - unit(2, 1, 1)],
    )
    .expect("catalog algebra is valid")
}

/// Planar rigid motions: rotation `e1` and translations `e2`, `e3`, with
/// `[e1,e2] = e3`, `[e1,e3] = −e2`, `[e2,e3] = 0`.
pub fn se2() -> LieAlgebra {
    let mut rot = DMatrix::zeros(3, 3);
    rot[(0, 1)] = -1.0;
    rot[(1, 0)] = 1.0;
    LieAlgebra::from_matrix_basis(&["e1", "e2", "e3"], vec![rot, unit(3, 0, 2), unit(3, 1, 2)])
        .expect("catalog algebra is valid")
}

/// Look up a catalog algebra by name. `abelian<n>` selects `abelian(n)`.
pub fn by_name(name: &str) -> Option<LieAlgebra> {
    match name {
        "heisenberg" => Some(heisenberg()),
        "upper-triangular" | "upper_triangular" => Some(upper_triangular()),
        "sl2" => Some(sl2()),
        "se2" => Some(se2()),
        _ => name
            .strip_prefix("abelian")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .map(abelian),
    }
}

/// Every catalog algebra, with a display name.
pub fn all() -> Vec<(&'static str, LieAlgebra)> {
    vec![
        ("heisenberg", heisenberg()),
        ("upper-triangular", upper_triangular()),
        ("abelian3", abelian(3)),
        ("sl2", sl2()),
        ("se2", se2()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brackets_of_upper_triangular() {
        let g = upper_triangular();
        let b = |x: &str, y: &str| g.bracket(&g.element(&[(x, 1.0)]), &g.element(&[(y, 1.0)])).unwrap();
        assert_eq!(b("t1", "t4"), g.element(&[("t4", 1.0)]));
        assert_eq!(b("t1", "t6"), g.element(&[("t6", 1.0)]));
        assert_eq!(b("t2", "t4"), g.element(&[("t4", -1.0)]));
        assert_eq!(b("t2", "t5"), g.element(&[("t5", 1.0)]));
        assert_eq!(b("t3", "t5"), g.element(&[("t5", -1.0)]));
        assert_eq!(b("t3", "t6"), g.element(&[("t6", -1.0)]));
        assert_eq!(b("t4", "t5"), g.element(&[("t6", 1.0)]));
        assert_eq!(b("t1", "t2"), g.zero());
        assert_eq!(b("t4", "t6"), g.zero());
    }

    #[test]
    fn sl2_relations() {
        let g = sl2();
        let b = |x: &str, y: &str| g.bracket(&g.element(&[(x, 1.0)]), &g.element(&[(y, 1.0)])).unwrap();
        assert_eq!(b("e", "f"), g.element(&[("h", 1.0)]));
        assert_eq!(b("h", "e"), g.element(&[("e", 2.0)]));
        assert_eq!(b("h", "f"), g.element(&[("f", -2.0)]));
    }

    #[test]
    fn se2_relations() {
        let g = se2();
        let b = |x: &str, y: &str| g.bracket(&g.element(&[(x, 1.0)]), &g.element(&[(y, 1.0)])).unwrap();
        assert_eq!(b("e1", "e2"), g.element(&[("e3", 1.0)]));
        assert_eq!(b("e1", "e3"), g.element(&[("e2", -1.0)]));
        assert_eq!(b("e2", "e3"), g.zero());
    }

    #[test]
    fn lookup() {
        assert_eq!(by_name("abelian5").unwrap().dim(), 5);
        assert!(by_name("abelian0").is_none());
        assert!(by_name("nope").is_none());
        assert_eq!(all().len(), 5);
    }
}
