//! Central parameter storage. Modules hold [`ParamId`]s into a [`ParamStore`];
//! gradients live in a separate [`Grads`] that only has slots for trainable
//! entries, so a frozen tensor can never receive an update.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Frozen,
    Trainable,
    /// Non-learned state such as batch-norm running statistics.
    Buffer,
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub group: String,
    pub role: Role,
    pub value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: String, group: &str, role: Role, value: Tensor) -> ParamId {
        self.entries.push(ParamEntry {
            name,
            group: String::from(group),
            role,
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn count(&self, role: Role) -> usize {
        self.entries
            .iter()
            .filter(|e| e.role == role)
            .map(|e| e.value.len())
            .sum()
    }

    /// Re-marks every entry of `group` that is not a buffer.
    pub fn set_group_role(&mut self, group: &str, role: Role) {
        for e in &mut self.entries {
            if e.group == group && e.role != Role::Buffer {
                e.role = role;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn new(store: &ParamStore) -> Self {
        let slots = store
            .entries
            .iter()
            .map(|e| (e.role == Role::Trainable).then(|| vec![0.0; e.value.len()]))
            .collect();
        Self { slots }
    }

    pub fn tracks(&self, id: ParamId) -> bool {
        self.slots[id.0].is_some()
    }

    /// Mutable gradient slot. Panics for frozen parameters and buffers.
    pub fn slot(&mut self, id: ParamId) -> &mut [f64] {
        self.slots[id.0]
            .as_mut()
            .expect("gradient requested for a frozen parameter")
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.slots[id.0].as_deref()
    }

    pub fn zero(&mut self) {
        for s in self.slots.iter_mut().flatten() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn norm(&self, ids: impl IntoIterator<Item = ParamId>) -> f64 {
        let mut acc = 0.0;
        for id in ids {
            if let Some(s) = &self.slots[id.0] {
                acc += s.iter().map(|v| v * v).sum::<f64>();
            }
        }
        libm::sqrt(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct StatUpdate {
    mean: ParamId,
    var: ParamId,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Forward-pass context. Collects running-statistic updates so forward passes
/// can borrow the store immutably; [`Ctx::commit`] applies them in order.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub mode: Mode,
    pub momentum: f64,
    updates: Vec<StatUpdate>,
}

impl Ctx {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            momentum: 0.1,
            updates: Vec::new(),
        }
    }

    pub fn train() -> Self {
        Self::new(Mode::Train)
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval)
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub(crate) fn record_stats(&mut self, mean: ParamId, var: ParamId, batch_mean: Vec<f64>, batch_var: Vec<f64>) {
        self.updates.push(StatUpdate {
            mean,
            var,
            batch_mean,
            batch_var,
        });
    }

    pub fn pending(&self) -> usize {
        self.updates.len()
    }

    pub fn commit(&mut self, store: &mut ParamStore) {
        let m = self.momentum;
        for u in self.updates.drain(..) {
            for (r, b) in store.get_mut(u.mean).data_mut().iter_mut().zip(&u.batch_mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in store.get_mut(u.var).data_mut().iter_mut().zip(&u.batch_var) {
                *r = (1.0 - m) * *r + m * b;
            }
        }
    }

    pub fn discard(&mut self) {
        self.updates.clear();
    }
}

/// Weight initialisers.
pub fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if std > 0.0 {
        let dist = Normal::new(0.0, std).expect("finite std");
        for v in t.data_mut() {
            *v = dist.sample(rng);
        }
    }
    t
}

/// Normal samples clipped to two standard deviations.
pub fn trunc_normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let mut t = normal_tensor(rng, shape, std);
    for v in t.data_mut() {
        *v = v.clamp(-2.0 * std, 2.0 * std);
    }
    t
}

pub fn kaiming_std(fan_in: usize) -> f64 {
    libm::sqrt(2.0 / fan_in as f64)
}

pub fn identity_matrix(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        t.data_mut()[i * n + i] = 1.0;
    }
    t
}

/// Adds `N(0, std)` noise to the listed entries. Moves freshly initialised
/// biases and norm shifts off exact zeros before finite-difference checks.
pub fn jitter<R: Rng + ?Sized>(ps: &mut ParamStore, ids: &[ParamId], std: f64, rng: &mut R) {
    let dist = Normal::new(0.0, std).expect("finite std");
    for &id in ids {
        for v in ps.get_mut(id).data_mut() {
            *v += dist.sample(rng);
        }
    }
}
