//! Rotation-based aggregates and the two vector-matrix products.
//!
//! The summations rely on cyclic rotation wrapping inside the grid, which
//! only holds when the grid fills every slot.

use crate::api::{Backend, CipherVector, Evaluator};
use crate::error::{HeError, Result};
use crate::packing::{first_column_mask, Format, GridShape, LogicalDims, Packed};

pub type PackedCipher<B> = Packed<CipherVector<B>>;

impl<T> Packed<T> {
    /// Reads a row-wise `d × k` matrix as a column-wise `k × d` one and
    /// vice versa. The slots are unchanged.
    pub fn transposed_view(self) -> Result<Packed<T>> {
        let format = match self.format {
            Format::RowWise => Format::ColWise,
            Format::ColWise => Format::RowWise,
            other => return Err(HeError::Format(format!("{other:?} is not a matrix format"))),
        };
        let dims = match self.dims {
            LogicalDims::Matrix { rows, cols } => LogicalDims::Matrix { rows: cols, cols: rows },
            v => v,
        };
        Ok(Packed { format, dims, ..self })
    }
}

/// Column sums replicated into every row. Depth 0, `log2 r` rotations.
pub fn sum_rows<B: Backend>(ev: &Evaluator<B>, w: &PackedCipher<B>) -> Result<PackedCipher<B>> {
    let out = sum_rows_raw(ev, &w.payload, w.shape.rows, w.shape.cols)?;
    Ok(Packed {
        shape: w.shape,
        format: Format::Repeated,
        dims: LogicalDims::Vector(w.shape.cols),
        payload: out,
    })
}

/// Row sums replicated into every column. Depth 1 (masking),
/// `2 · log2 c` rotations.
pub fn sum_cols<B: Backend>(ev: &Evaluator<B>, w: &PackedCipher<B>) -> Result<PackedCipher<B>> {
    let out = sum_cols_raw(ev, &w.payload, w.shape)?;
    Ok(Packed {
        shape: w.shape,
        format: Format::Expanded,
        dims: LogicalDims::Vector(w.shape.rows),
        payload: out,
    })
}

/// Row schedule on an arbitrary `rows × cols` reading of the slots.
pub(crate) fn sum_rows_raw<B: Backend>(
    ev: &Evaluator<B>,
    x: &CipherVector<B>,
    rows: usize,
    cols: usize,
) -> Result<CipherVector<B>> {
    let log_r = rows.trailing_zeros();
    let mut s = x.clone();
    for t in 0..log_r {
        let step = (cols << (log_r - 1 - t)) as i64;
        s = ev.add(&s, &ev.rotate(&s, step)?)?;
    }
    Ok(s)
}

pub(crate) fn sum_cols_raw<B: Backend>(
    ev: &Evaluator<B>,
    x: &CipherVector<B>,
    shape: GridShape,
) -> Result<CipherVector<B>> {
    let log_c = shape.log_cols();
    let mut u = x.clone();
    for t in 0..log_c {
        let step = 1i64 << (log_c - 1 - t);
        u = ev.add(&u, &ev.rotate(&u, step)?)?;
    }
    // Only the first slot of each row holds a clean sum.
    u = ev.mul_plain(&u, &first_column_mask(shape))?;
    for t in 0..log_c {
        u = ev.add(&u, &ev.rotate(&u, -(1i64 << t))?)?;
    }
    Ok(u)
}

fn matrix_dims<T>(w: &Packed<T>) -> Result<(usize, usize)> {
    match w.dims {
        LogicalDims::Matrix { rows, cols } => Ok((rows, cols)),
        LogicalDims::Vector(_) => Err(HeError::Format("expected a packed matrix".into())),
    }
}

fn check_operands<T, U>(a: &Packed<T>, a_fmt: Format, w: &Packed<U>, w_fmt: Format) -> Result<(usize, usize)> {
    if a.format != a_fmt {
        return Err(HeError::Format(format!(
            "activation must be {a_fmt:?}, got {:?}",
            a.format
        )));
    }
    if w.format != w_fmt {
        return Err(HeError::Format(format!(
            "weights must be {w_fmt:?}, got {:?}",
            w.format
        )));
    }
    if a.shape != w.shape {
        return Err(HeError::Dimension(format!(
            "grid mismatch: {:?} vs {:?}",
            a.shape, w.shape
        )));
    }
    let d = a.vector_len()?;
    let (rows, cols) = matrix_dims(w)?;
    if d != rows {
        return Err(HeError::Dimension(format!(
            "vector of length {d} against a {rows}x{cols} matrix"
        )));
    }
    Ok((rows, cols))
}

/// `aᵀW` from an expanded `a` and row-wise `W`; repeated output, depth 1.
pub fn re_matmul<B: Backend>(ev: &Evaluator<B>, a: &PackedCipher<B>, w: &PackedCipher<B>) -> Result<PackedCipher<B>> {
    let (_, k) = check_operands(a, Format::Expanded, w, Format::RowWise)?;
    let prod = ev.mul(&a.payload, &w.payload)?;
    let out = sum_rows_raw(ev, &prod, a.shape.rows, a.shape.cols)?;
    Ok(Packed {
        shape: a.shape,
        format: Format::Repeated,
        dims: LogicalDims::Vector(k),
        payload: out,
    })
}

/// `aᵀW` from a repeated `a` and column-wise `W`; expanded output, depth 2.
pub fn ce_matmul<B: Backend>(ev: &Evaluator<B>, a: &PackedCipher<B>, w: &PackedCipher<B>) -> Result<PackedCipher<B>> {
    let (_, k) = check_operands(a, Format::Repeated, w, Format::ColWise)?;
    let prod = ev.mul(&a.payload, &w.payload)?;
    let out = sum_cols_raw(ev, &prod, a.shape)?;
    Ok(Packed {
        shape: a.shape,
        format: Format::Expanded,
        dims: LogicalDims::Vector(k),
        payload: out,
    })
}
