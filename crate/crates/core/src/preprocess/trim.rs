use crate::error::{Error, Result};
use crate::sparse::ObservedMatrix;

#[derive(Debug, Clone)]
pub struct TrimReport {
    pub trimmed: ObservedMatrix,
    /// Rows whose degree exceeded `2|E|/m`, ascending.
    pub zeroed_rows: Vec<usize>,
    /// Columns whose degree exceeded `2|E|/n`, ascending.
    pub zeroed_cols: Vec<usize>,
    pub epsilon_after: f64,
}

/// Drops every entry lying in a row of degree `> 2|E|/m` or a column of
/// degree `> 2|E|/n`.
///
/// Thresholds come from the input matrix and are applied once; rows that
/// become over-represented relative to the reduced `|E|` are kept.
pub fn trim(observed: &ObservedMatrix) -> Result<TrimReport> {
    if observed.is_empty() {
        return Err(Error::degenerate("cannot trim an empty observation"));
    }
    let (m, n) = observed.shape().dims();
    let twice = 2 * observed.nnz();
    // d > 2|E|/m  <=>  d * m > 2|E|
    let zeroed_rows: Vec<usize> = (0..m).filter(|&i| observed.row_degree(i) * m > twice).collect();
    let zeroed_cols: Vec<usize> = (0..n).filter(|&j| observed.col_degree(j) * n > twice).collect();

    let trimmed = if zeroed_rows.is_empty() && zeroed_cols.is_empty() {
        observed.clone()
    } else {
        let mut drop_row = vec![false; m];
        let mut drop_col = vec![false; n];
        zeroed_rows.iter().for_each(|&i| drop_row[i] = true);
        zeroed_cols.iter().for_each(|&j| drop_col[j] = true);
        observed.retain(|i, j, _| !drop_row[i] && !drop_col[j])
    };
    if trimmed.is_empty() {
        return Err(Error::degenerate("trimming removed every observed entry"));
    }
    Ok(TrimReport {
        epsilon_after: trimmed.epsilon(),
        trimmed,
        zeroed_rows,
        zeroed_cols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::ProblemShape;

    fn shape(m: usize, n: usize) -> ProblemShape {
        ProblemShape::new(m, n).unwrap()
    }

    #[test]
    fn heavy_row_is_zeroed() {
        // |E| = 8; row 0 has degree 5 > 2 * 8 / 4 = 4, columns stay <= 2 < 8 / 3
        let entries = [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (1, 0), (2, 1), (3, 5)];
        let m = ObservedMatrix::new(shape(4, 6), entries.iter().map(|&(i, j)| (i, j, (i * 10 + j) as f64))).unwrap();
        let report = trim(&m).unwrap();
        assert_eq!(report.zeroed_rows, vec![0]);
        assert!(report.zeroed_cols.is_empty());
        assert_eq!(
            report.trimmed.iter().collect::<Vec<_>>(),
            vec![(1, 0, 10.0), (2, 1, 21.0), (3, 5, 35.0)]
        );
        assert_eq!(report.epsilon_after, 3.0 / 24f64.sqrt());
    }

    #[test]
    fn heavy_column_is_zeroed() {
        let entries = [(0, 0), (1, 0), (2, 0), (3, 1), (0, 2), (1, 3)];
        // 4x4, |E| = 6, column threshold 3: column 0 has degree 3, not trimmed
        let m = ObservedMatrix::pattern(shape(4, 4), entries).unwrap();
        assert!(trim(&m).unwrap().zeroed_cols.is_empty());
        let m = ObservedMatrix::pattern(shape(4, 8), entries).unwrap();
        // threshold 12 / 8 = 1.5: column 0 (degree 3) goes
        let report = trim(&m).unwrap();
        assert_eq!(report.zeroed_cols, vec![0]);
        assert_eq!(report.trimmed.nnz(), 3);
    }

    #[test]
    fn boundary_degree_is_kept() {
        // every row and column has degree exactly 2|E|/m = 2
        let m = ObservedMatrix::pattern(shape(4, 4), [(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap();
        let report = trim(&m).unwrap();
        assert!(report.zeroed_rows.is_empty() && report.zeroed_cols.is_empty());
        assert_eq!(report.trimmed, m);
    }

    #[test]
    fn empty_and_fully_trimmed_inputs_fail() {
        let empty = ObservedMatrix::new(shape(3, 3), []).unwrap();
        assert!(matches!(trim(&empty), Err(Error::Degenerate(_))));
        // one observed entry: its row degree 1 > 2/4
        let single = ObservedMatrix::pattern(shape(4, 4), [(0, 0)]).unwrap();
        assert!(matches!(trim(&single), Err(Error::Degenerate(_))));
    }
}
