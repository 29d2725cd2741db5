//! Learnable parameters and hierarchical traversal of modules.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::{Float, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        Self(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A learnable tensor. Cloning produces an independent parameter with a new
/// identity, so a cloned module never aliases the original on a graph.
#[derive(Debug)]
pub struct Param<T: Float> {
    id: ParamId,
    value: Arc<Tensor<T>>,
    trainable: bool,
}

impl<T: Float> Clone for Param<T> {
    fn clone(&self) -> Self {
        Self {
            id: ParamId::fresh(),
            value: Arc::new((*self.value).clone()),
            trainable: self.trainable,
        }
    }
}

impl<T: Float> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        Self {
            id: ParamId::fresh(),
            value: Arc::new(value),
            trainable: true,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub(crate) fn shared_value(&self) -> Arc<Tensor<T>> {
        self.value.clone()
    }

    /// Mutable access; copies only if a live graph still holds the value.
    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.value)
    }

    pub fn set(&mut self, value: Tensor<T>) {
        assert_eq!(value.shape(), self.value.shape(), "parameter shape change");
        self.value = Arc::new(value);
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }
}

/// Anything that owns parameters. Names are dot-separated paths.
pub trait Module<T: Float> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Param<T>));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));
}

pub fn join_name(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

impl<T: Float> Module<T> for Param<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Param<T>)) {
        f(prefix, self)
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(prefix, self)
    }
}

impl<T: Float, M: Module<T>> Module<T> for Option<M> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Param<T>)) {
        if let Some(m) = self {
            m.visit_params(prefix, f)
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        if let Some(m) = self {
            m.visit_params_mut(prefix, f)
        }
    }
}

impl<T: Float, M: Module<T>> Module<T> for Vec<M> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Param<T>)) {
        for (i, m) in self.iter().enumerate() {
            m.visit_params(&join_name(prefix, &i.to_string()), f)
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, m) in self.iter_mut().enumerate() {
            m.visit_params_mut(&join_name(prefix, &i.to_string()), f)
        }
    }
}

impl<T: Float, M: Module<T>> Module<T> for Box<M> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Param<T>)) {
        (**self).visit_params(prefix, f)
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        (**self).visit_params_mut(prefix, f)
    }
}

/// Implements [`Module`] for a struct generic over `T: Float` by visiting the
/// listed fields in order.
#[macro_export]
macro_rules! impl_module {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<T: $crate::Float> $crate::Module<T> for $ty<T> {
            fn visit_params<'a>(
                &'a self,
                prefix: &str,
                f: &mut dyn FnMut(&str, &'a $crate::Param<T>),
            ) {
                $( $crate::Module::visit_params(&self.$field, &$crate::join_name(prefix, stringify!($field)), f); )*
            }

            fn visit_params_mut(
                &mut self,
                prefix: &str,
                f: &mut dyn FnMut(&str, &mut $crate::Param<T>),
            ) {
                $( $crate::Module::visit_params_mut(&mut self.$field, &$crate::join_name(prefix, stringify!($field)), f); )*
            }
        }
    };
}

pub fn named_params<T: Float, M: Module<T> + ?Sized>(m: &M) -> Vec<(String, &Param<T>)> {
    let mut out = Vec::new();
    m.visit_params("", &mut |name, p| out.push((name.to_string(), p)));
    out
}

pub fn param_count<T: Float, M: Module<T> + ?Sized>(m: &M) -> usize {
    let mut n = 0;
    m.visit_params("", &mut |_, p| n += p.value().len());
    n
}

pub fn set_trainable<T: Float, M: Module<T> + ?Sized>(m: &mut M, trainable: bool) {
    m.visit_params_mut("", &mut |_, p| p.set_trainable(trainable));
}

/// Order-sensitive checksum over every parameter bit pattern.
pub fn param_checksum<T: Float, M: Module<T> + ?Sized>(m: &M) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    m.visit_params("", &mut |name, p| {
        for b in name.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
        for &v in p.value().data() {
            let bits = v.to_f64_lossy().to_bits();
            h = (h ^ bits).wrapping_mul(0x100_0000_01b3);
        }
    });
    h
}
