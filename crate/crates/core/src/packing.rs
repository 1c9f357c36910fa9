//! Slot-grid layouts for vectors and matrices.
//!
//! A ciphertext's N/2 slots are read as an `r × c` row-major grid with
//! `r · c = N/2`. Vectors are either repeated (copied into every row) or
//! expanded (copied into every column); matrices are stored row-wise or
//! transposed in the top-left block. All slots outside the logical region
//! are zero.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::api::PlainVector;
use crate::error::{HeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    /// Requires power-of-two sides filling exactly `slots`.
    pub fn new(rows: usize, cols: usize, slots: usize) -> Result<Self> {
        if !rows.is_power_of_two() || !cols.is_power_of_two() {
            return Err(HeError::Dimension(format!(
                "grid {rows}x{cols} must have power-of-two sides"
            )));
        }
        if rows * cols != slots {
            return Err(HeError::Dimension(format!(
                "grid {rows}x{cols} does not fill {slots} slots"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn slots(&self) -> usize {
        self.rows * self.cols
    }

    pub fn log_rows(&self) -> u32 {
        self.rows.trailing_zeros()
    }

    pub fn log_cols(&self) -> u32 {
        self.cols.trailing_zeros()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Repeated,
    Expanded,
    RowWise,
    ColWise,
}

/// Logical extent of a packed object. Matrices are always described in
/// their natural `d × k` orientation, even when stored transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogicalDims {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl LogicalDims {
    /// `(rows needed, cols needed)` of the grid for this object in `format`.
    pub fn extent(&self, format: Format) -> Result<(usize, usize)> {
        match (*self, format) {
            (LogicalDims::Vector(d), Format::Repeated) => Ok((1, d)),
            (LogicalDims::Vector(d), Format::Expanded) => Ok((d, 1)),
            (LogicalDims::Matrix { rows, cols }, Format::RowWise) => Ok((rows, cols)),
            (LogicalDims::Matrix { rows, cols }, Format::ColWise) => Ok((cols, rows)),
            (dims, format) => Err(HeError::Format(format!("{dims:?} cannot be packed as {format:?}"))),
        }
    }

    pub fn fits(&self, format: Format, shape: GridShape) -> bool {
        matches!(self.extent(format), Ok((r, c)) if r <= shape.rows && c <= shape.cols)
    }
}

/// A packed value: layout metadata bound to a plaintext or ciphertext
/// payload.
#[derive(Clone, Debug)]
pub struct Packed<T> {
    pub shape: GridShape,
    pub format: Format,
    pub dims: LogicalDims,
    pub payload: T,
}

impl<T> Packed<T> {
    pub fn with_payload<U>(&self, payload: U) -> Packed<U> {
        Packed {
            shape: self.shape,
            format: self.format,
            dims: self.dims,
            payload,
        }
    }

    pub fn vector_len(&self) -> Result<usize> {
        match self.dims {
            LogicalDims::Vector(d) => Ok(d),
            LogicalDims::Matrix { .. } => Err(HeError::Format("expected a packed vector".into())),
        }
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(HeError::Dimension("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `vᵀ · self`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "vector length must match matrix rows");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
        out
    }

    pub fn dims(&self) -> LogicalDims {
        LogicalDims::Matrix {
            rows: self.rows,
            cols: self.cols,
        }
    }
}

fn check_fit(dims: LogicalDims, format: Format, shape: GridShape) -> Result<()> {
    let (r, c) = dims.extent(format)?;
    if r > shape.rows || c > shape.cols {
        return Err(HeError::Dimension(format!(
            "{dims:?} as {format:?} needs a {r}x{c} region, grid is {}x{}",
            shape.rows, shape.cols
        )));
    }
    Ok(())
}

/// Lays out a vector in repeated or expanded format.
pub fn pack_vector(v: &[f64], format: Format, shape: GridShape) -> Result<Vec<f64>> {
    check_fit(LogicalDims::Vector(v.len()), format, shape)?;
    let mut slots = vec![0.0; shape.slots()];
    match format {
        Format::Repeated => {
            for row in slots.chunks_exact_mut(shape.cols) {
                row[..v.len()].copy_from_slice(v);
            }
        }
        Format::Expanded => {
            for (i, &x) in v.iter().enumerate() {
                slots[i * shape.cols..(i + 1) * shape.cols].fill(x);
            }
        }
        _ => unreachable!("check_fit rejects matrix formats for vectors"),
    }
    Ok(slots)
}

/// Lays out `w` row-wise (as is) or column-wise (transposed).
pub fn pack_matrix(w: &Matrix, format: Format, shape: GridShape) -> Result<Vec<f64>> {
    check_fit(w.dims(), format, shape)?;
    let mut slots = vec![0.0; shape.slots()];
    for i in 0..w.rows {
        for j in 0..w.cols {
            let (r, c) = match format {
                Format::RowWise => (i, j),
                Format::ColWise => (j, i),
                _ => unreachable!("check_fit rejects vector formats for matrices"),
            };
            slots[r * shape.cols + c] = w.get(i, j);
        }
    }
    Ok(slots)
}

/// Reads a length-`len` vector back from row 0 (repeated) or column 0
/// (expanded).
pub fn unpack_vector(slots: &[f64], format: Format, shape: GridShape, len: usize) -> Result<Vec<f64>> {
    check_len(slots, shape)?;
    check_fit(LogicalDims::Vector(len), format, shape)?;
    match format {
        Format::Repeated => Ok(slots[..len].to_vec()),
        Format::Expanded => Ok((0..len).map(|i| slots[i * shape.cols]).collect()),
        _ => Err(HeError::Format(format!("{format:?} is not a vector format"))),
    }
}

/// Reads an `rows × cols` matrix back from its top-left block.
pub fn unpack_matrix(slots: &[f64], format: Format, shape: GridShape, rows: usize, cols: usize) -> Result<Matrix> {
    check_len(slots, shape)?;
    let dims = LogicalDims::Matrix { rows, cols };
    check_fit(dims, format, shape)?;
    let mut w = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let idx = match format {
                Format::RowWise => i * shape.cols + j,
                Format::ColWise => j * shape.cols + i,
                _ => return Err(HeError::Format(format!("{format:?} is not a matrix format"))),
            };
            w.set(i, j, slots[idx]);
        }
    }
    Ok(w)
}

fn check_len(slots: &[f64], shape: GridShape) -> Result<()> {
    if slots.len() != shape.slots() {
        return Err(HeError::LengthMismatch {
            expected: shape.slots(),
            actual: slots.len(),
        });
    }
    Ok(())
}

/// Binary mask that is 1 exactly at the first slot of every row.
pub fn first_column_mask(shape: GridShape) -> PlainVector {
    let mut values = vec![0.0; shape.slots()];
    for i in 0..shape.rows {
        values[i * shape.cols] = 1.0;
    }
    PlainVector { values, scale_bits: 0 }
}

/// Signed rotation steps used by the row and column summation schedules.
pub fn required_rotations(shape: GridShape) -> BTreeSet<i64> {
    let c = shape.cols as i64;
    let mut set = BTreeSet::new();
    for t in 0..shape.log_rows() {
        set.insert(c << t);
    }
    for t in 0..shape.log_cols() {
        set.insert(1 << t);
        set.insert(-(1 << t));
    }
    set
}

/// Layer widths of an alternating RE/CE network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

/// Block family. Odd blocks (1-based) consume expanded activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Re,
    Ce,
}

impl BlockKind {
    /// Kind of block `h`, counting from 1.
    pub fn of(h: usize) -> Self {
        if h % 2 == 1 {
            BlockKind::Re
        } else {
            BlockKind::Ce
        }
    }

    /// Format of the activation this block consumes.
    pub fn input_format(self) -> Format {
        match self {
            BlockKind::Re => Format::Expanded,
            BlockKind::Ce => Format::Repeated,
        }
    }

    /// Format of the activation this block produces.
    pub fn output_format(self) -> Format {
        match self {
            BlockKind::Re => Format::Repeated,
            BlockKind::Ce => Format::Expanded,
        }
    }

    pub fn layer_format(self) -> Format {
        match self {
            BlockKind::Re => Format::RowWise,
            BlockKind::Ce => Format::ColWise,
        }
    }

    pub fn classifier_format(self) -> Format {
        match self {
            BlockKind::Re => Format::ColWise,
            BlockKind::Ce => Format::RowWise,
        }
    }

    /// Format of this block's local prediction and its label.
    pub fn head_format(self) -> Format {
        self.input_format()
    }
}

/// A named object the training loop packs into the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedObject {
    pub name: String,
    pub format: Format,
    pub dims: LogicalDims,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        if input == 0 || classes == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(HeError::Dimension(
                "architecture needs positive widths and at least one block".into(),
            ));
        }
        Ok(Self { input, hidden, classes })
    }

    pub fn blocks(&self) -> usize {
        self.hidden.len()
    }

    /// Width entering block `h` (1-based).
    pub fn fan_in(&self, h: usize) -> usize {
        if h == 1 {
            self.input
        } else {
            self.hidden[h - 2]
        }
    }

    /// Every object packed during one training iteration.
    pub fn packed_objects(&self) -> Vec<PackedObject> {
        let mut out = Vec::new();
        let o = self.classes;
        let mut push = |name: String, format: Format, dims: LogicalDims| out.push(PackedObject { name, format, dims });
        for h in 1..=self.blocks() {
            let kind = BlockKind::of(h);
            let (d, k) = (self.fan_in(h), self.hidden[h - 1]);
            let mat = |rows, cols| LogicalDims::Matrix { rows, cols };
            push(format!("a{}", h - 1), kind.input_format(), LogicalDims::Vector(d));
            push(format!("W{h}"), kind.layer_format(), mat(d, k));
            push(format!("V{h}"), kind.layer_format(), mat(d, k));
            push(format!("Z{h}"), kind.output_format(), LogicalDims::Vector(k));
            push(format!("A{h}"), kind.output_format(), LogicalDims::Vector(k));
            push(format!("dA{h}"), kind.output_format(), LogicalDims::Vector(k));
            push(format!("C{h}"), kind.classifier_format(), mat(k, o));
            push(format!("VC{h}"), kind.classifier_format(), mat(k, o));
            push(format!("Yhat{h}"), kind.head_format(), LogicalDims::Vector(o));
            push(format!("Y{h}"), kind.head_format(), LogicalDims::Vector(o));
        }
        out
    }
}

/// Minimal power-of-two grid holding every packed object, with rows
/// inflated so the grid fills all `slots`.
pub fn compute_dims(arch: &Architecture, slots: usize) -> Result<GridShape> {
    let (r_min, c_min) = min_dims(arch)?;
    if r_min * c_min > slots {
        return Err(HeError::Capacity(format!(
            "needs a {r_min}x{c_min} grid, only {slots} slots available"
        )));
    }
    GridShape::new(slots / c_min, c_min, slots)
}

/// Smallest power-of-two `(r, c)` satisfying every format constraint.
pub fn min_dims(arch: &Architecture) -> Result<(usize, usize)> {
    let mut r = 1;
    let mut c = 1;
    for obj in arch.packed_objects() {
        let (need_r, need_c) = obj.dims.extent(obj.format)?;
        r = r.max(need_r);
        c = c.max(need_c);
    }
    Ok((r.next_power_of_two(), c.next_power_of_two()))
}
