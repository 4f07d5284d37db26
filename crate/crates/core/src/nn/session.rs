use crate::error::Result;
use crate::tensor::{Real, Tape, Tensor, Var};

use super::params::{ParamId, ParamRole, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward pass: a fresh tape plus lazily bound parameters.
///
/// Each parameter is bound to a single tape leaf however many times it is used,
/// so twin branches evaluated in one session share storage and gradients.
pub struct Session<'a, T: Real> {
    pub tape: Tape<T>,
    store: &'a mut ParamStore<T>,
    bound: Vec<Option<Var>>,
    mode: Mode,
    track_grads: bool,
}

impl<'a, T: Real> Session<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, mode: Mode, track_grads: bool) -> Self {
        let n = store.len();
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; n],
            mode,
            track_grads,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let trainable = self.store.role(id) == ParamRole::Trainable;
        let v = self
            .tape
            .leaf(self.store.get(id).clone(), self.track_grads && trainable);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, x: Tensor<T>) -> Var {
        self.tape.constant(x)
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn split(&mut self) -> (&mut Tape<T>, &mut ParamStore<T>) {
        (&mut self.tape, self.store)
    }

    /// Number of distinct parameters bound to the tape so far.
    pub fn bound_count(&self) -> usize {
        self.bound.iter().filter(|b| b.is_some()).count()
    }

    pub fn bound_var(&self, id: ParamId) -> Option<Var> {
        self.bound[id.0]
    }

    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.tape.backward(root)
    }

    /// Gradients of bound trainable parameters after [`Session::backward`].
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let v = (*b)?;
                self.tape.grad(v).map(|g| (ParamId(i), g.clone()))
            })
            .collect()
    }
}
