//! State-space quadruples, numeric and LFT-valued.

use crate::error::Result;
use crate::lft::{BoundsMode, LftMatrix, Mat, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// `[[A, B], [C, D]]`.
    pub fn system_matrix(&self) -> Mat {
        let (n, m, p) = (self.a.nrows(), self.b.ncols(), self.c.nrows());
        let mut s = Mat::zeros(n + p, n + m);
        s.view_mut((0, 0), (n, n)).copy_from(&self.a);
        s.view_mut((0, n), (n, m)).copy_from(&self.b);
        s.view_mut((n, 0), (p, n)).copy_from(&self.c);
        s.view_mut((n, n), (p, m)).copy_from(&self.d);
        s
    }

    pub fn from_system_matrix(s: &Mat, n: usize) -> Self {
        let (r, c) = s.shape();
        StateSpace {
            a: s.view((0, 0), (n, n)).into_owned(),
            b: s.view((0, n), (n, c - n)).into_owned(),
            c: s.view((n, 0), (r - n, n)).into_owned(),
            d: s.view((n, n), (r - n, c - n)).into_owned(),
        }
    }
}

/// `[[A, B], [C, D]]` as one LFT, so that all four blocks share one
/// perturbation structure.
#[derive(Clone, Debug)]
pub struct LftStateSpace {
    pub system: LftMatrix,
    pub n_states: usize,
}

impl LftStateSpace {
    pub fn new(system: LftMatrix, n_states: usize) -> Self {
        LftStateSpace { system, n_states }
    }

    pub fn from_blocks(a: &LftMatrix, b: &LftMatrix, c: &LftMatrix, d: &LftMatrix) -> Self {
        let sys = LftMatrix::from_blocks(&[vec![a.clone(), b.clone()], vec![c.clone(), d.clone()]]);
        LftStateSpace::new(sys, a.nrows())
    }

    pub fn n_inputs(&self) -> usize {
        self.system.ncols() - self.n_states
    }

    pub fn n_outputs(&self) -> usize {
        self.system.nrows() - self.n_states
    }

    pub fn a(&self) -> LftMatrix {
        let n = self.n_states;
        self.system.block(0, 0, n, n).reduce()
    }

    pub fn b(&self) -> LftMatrix {
        let n = self.n_states;
        self.system.block(0, n, n, self.n_inputs()).reduce()
    }

    pub fn c(&self) -> LftMatrix {
        let n = self.n_states;
        self.system.block(n, 0, self.n_outputs(), n).reduce()
    }

    pub fn d(&self) -> LftMatrix {
        let n = self.n_states;
        self.system.block(n, n, self.n_outputs(), self.n_inputs()).reduce()
    }

    pub fn evaluate(&self, point: &Point) -> Result<StateSpace> {
        self.evaluate_with(point, BoundsMode::Warn)
    }

    pub fn evaluate_with(&self, point: &Point, mode: BoundsMode) -> Result<StateSpace> {
        let s = self.system.evaluate_with(point, mode)?;
        Ok(StateSpace::from_system_matrix(&s, self.n_states))
    }

    pub fn nominal(&self) -> StateSpace {
        StateSpace::from_system_matrix(&self.system.nominal(), self.n_states)
    }

    pub fn reduce(&self) -> Self {
        LftStateSpace::new(self.system.reduce(), self.n_states)
    }
}
