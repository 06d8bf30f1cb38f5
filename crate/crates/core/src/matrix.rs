//! Dense cell × slot matrices.

use serde::{Deserialize, Serialize};

/// An N×S matrix indexed by (cell, slot), stored cell-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSlotMatrix<T> {
    cells: usize,
    slots: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> CellSlotMatrix<T> {
    pub fn zeros(cells: usize, slots: usize) -> Self {
        Self {
            cells,
            slots,
            data: vec![T::default(); cells * slots],
        }
    }

    pub fn filled(cells: usize, slots: usize, value: T) -> Self {
        Self {
            cells,
            slots,
            data: vec![value; cells * slots],
        }
    }

    pub fn from_vec(cells: usize, slots: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), cells * slots, "matrix data length");
        Self { cells, slots, data }
    }

    #[inline]
    pub fn get(&self, cell: usize, slot: usize) -> T {
        self.data[cell * self.slots + slot]
    }

    #[inline]
    pub fn set(&mut self, cell: usize, slot: usize, value: T) {
        self.data[cell * self.slots + slot] = value;
    }

    #[inline]
    pub fn get_mut(&mut self, cell: usize, slot: usize) -> &mut T {
        &mut self.data[cell * self.slots + slot]
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> CellSlotMatrix<U> {
        CellSlotMatrix {
            cells: self.cells,
            slots: self.slots,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl<T> CellSlotMatrix<T> {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_shape<U>(&self, other: &CellSlotMatrix<U>) -> bool {
        self.cells == other.cells && self.slots == other.slots
    }

    /// Iterate `(cell, slot, &value)`.
    pub fn indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let slots = self.slots;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / slots, i % slots, v))
    }
}

/// Visit counts aggregated over drones.
pub type CountMatrix = CellSlotMatrix<u32>;
/// Real-valued sensing values for one period.
pub type ValueMatrix = CellSlotMatrix<f64>;

impl CountMatrix {
    pub fn add_assign(&mut self, other: &CountMatrix) {
        assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn sub_assign(&mut self, other: &CountMatrix) {
        assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.checked_sub(*b).expect("count underflow");
        }
    }

    pub fn total(&self) -> u64 {
        self.data.iter().map(|&x| x as u64).sum()
    }
}

impl ValueMatrix {
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}
