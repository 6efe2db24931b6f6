//! Named parameter tensors grouped by the part of the model they belong to.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Backbone,
    Adaptor,
    Rec,
    Projector,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Backbone, Group::Adaptor, Group::Rec, Group::Projector];

    pub fn name(self) -> &'static str {
        match self {
            Group::Backbone => "backbone",
            Group::Adaptor => "adaptor",
            Group::Rec => "rec",
            Group::Projector => "projector",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which groups receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub backbone: bool,
    pub adaptor: bool,
    pub rec: bool,
    pub projector: bool,
}

impl Trainable {
    pub fn all() -> Self {
        Self {
            backbone: true,
            adaptor: true,
            rec: true,
            projector: true,
        }
    }

    pub fn none() -> Self {
        Self {
            backbone: false,
            adaptor: false,
            rec: false,
            projector: false,
        }
    }

    pub fn allows(&self, g: Group) -> bool {
        match g {
            Group::Backbone => self.backbone,
            Group::Adaptor => self.adaptor,
            Group::Rec => self.rec,
            Group::Projector => self.projector,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Mat,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Mat) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, group, value });
        self.params.len() - 1
    }

    /// Adds a tensor drawn from uniform(-scale, scale), rounded to `f32`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        group: Group,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> usize {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale) as f32 as f64)
            .collect();
        self.add(name, group, Mat::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Mat {
        &mut self.params[idx].value
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn by_name(&self, name: &str) -> Result<&Mat> {
        Ok(&self.params[self.index_of(name)?].value)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Result<&mut Mat> {
        let i = self.index_of(name)?;
        Ok(&mut self.params[i].value)
    }

    pub fn count(&self, group: Group) -> usize {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.data().len())
            .sum()
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}
