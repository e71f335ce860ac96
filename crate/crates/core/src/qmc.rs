//! Deterministic low-discrepancy point sets.

const BASES: [u8; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Point `index` of the Halton sequence in `[0,1)^dim` (dim <= 8). Index 0 is
/// skipped since it is the origin in every dimension.
pub fn halton_point(index: usize, dim: usize) -> Vec<f64> {
    assert!(dim <= BASES.len(), "halton dimension {dim} unsupported");
    BASES[..dim]
        .iter()
        .map(|&b| halton::number(b, index + 1))
        .collect()
}

pub fn halton3(index: usize) -> [f64; 3] {
    [
        halton::number(2, index + 1),
        halton::number(3, index + 1),
        halton::number(5, index + 1),
    ]
}
