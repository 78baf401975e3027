//! Named parameter storage shared across per-shard graphs.

use std::collections::HashMap;

use super::{numel, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Plain-data parameter values. Cheap to share across threads; graphs bind
/// fresh leaf tensors from it through [`ParamStore::bind`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateParameter(name.to_string()));
        }
        if values.len() != numel(shape) {
            return Err(TensorError::ShapeMismatch(format!(
                "parameter `{name}` has {} values for shape {shape:?}",
                values.len()
            )));
        }
        let id = self.params.len();
        self.params.push(Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].values
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    /// Overwrite values from `other` by name; shapes must agree and every
    /// parameter of `self` must be present.
    pub fn load_from(&mut self, other: &[Parameter]) -> Result<()> {
        let lookup: HashMap<&str, &Parameter> = other.iter().map(|p| (p.name.as_str(), p)).collect();
        for p in &mut self.params {
            let src = lookup
                .get(p.name.as_str())
                .ok_or_else(|| TensorError::UnknownParameter(p.name.clone()))?;
            if src.shape != p.shape {
                return Err(TensorError::ShapeMismatch(format!(
                    "parameter `{}` stored as {:?}, expected {:?}",
                    p.name, src.shape, p.shape
                )));
            }
            p.values.clone_from(&src.values);
        }
        Ok(())
    }

    /// Fresh gradient-tracking leaves for one graph.
    pub fn bind(&self) -> BoundParams {
        BoundParams {
            tensors: self
                .params
                .iter()
                .map(|p| Tensor::leaf(p.values.clone(), &p.shape).expect("shape checked on insert"))
                .collect(),
        }
    }

    /// Constant (non-tracking) tensors, for inference.
    pub fn bind_frozen(&self) -> BoundParams {
        BoundParams {
            tensors: self
                .params
                .iter()
                .map(|p| Tensor::new(p.values.clone(), &p.shape).expect("shape checked on insert"))
                .collect(),
        }
    }
}

pub struct BoundParams {
    tensors: Vec<Tensor>,
}

impl BoundParams {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    /// Gradients gathered after `backward`; parameters the loss did not
    /// reach get zeros.
    pub fn gradients(&self) -> Gradients {
        Gradients(
            self.tensors
                .iter()
                .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
                .collect(),
        )
    }
}

/// One gradient buffer per parameter, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Gradients {
        Gradients(store.iter().map(|p| vec![0.0; p.values.len()]).collect())
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for x in self.0.iter_mut().flatten() {
            *x *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Sum shards in the given order. The fixed order keeps results
    /// independent of how shards were scheduled.
    pub fn sum_ordered(store: &ParamStore, shards: impl IntoIterator<Item = Gradients>) -> Gradients {
        let mut total = Gradients::zeros(store);
        for g in shards {
            total.add_assign(&g);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", &[2], vec![0.0, 0.0]).unwrap();
        assert!(matches!(s.add("w", &[1], vec![0.0]), Err(TensorError::DuplicateParameter(_))));
        assert!(s.add("v", &[3], vec![0.0]).is_err());
    }

    #[test]
    fn unreached_parameters_get_zero_gradient() {
        let mut s = ParamStore::new();
        let a = s.add("a", &[2], vec![1.0, 2.0]).unwrap();
        s.add("b", &[1], vec![5.0]).unwrap();
        let bound = s.bind();
        bound.get(a).square().sum().backward().unwrap();
        let g = bound.gradients();
        assert_eq!(g.0, vec![vec![2.0, 4.0], vec![0.0]]);
    }

    #[test]
    fn load_from_checks_shapes() {
        let mut s = ParamStore::new();
        s.add("a", &[2], vec![0.0, 0.0]).unwrap();
        let good = vec![Parameter { name: "a".into(), shape: vec![2], values: vec![1.0, 2.0] }];
        s.load_from(&good).unwrap();
        assert_eq!(s.iter().next().unwrap().values, vec![1.0, 2.0]);
        let bad = vec![Parameter { name: "a".into(), shape: vec![1, 2], values: vec![1.0, 2.0] }];
        assert!(s.load_from(&bad).is_err());
    }
}
