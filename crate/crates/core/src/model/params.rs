use crate::error::{check_dim, Error, Result};

/// Named flat parameter buffers. Gradient stores are created with
/// [`ParamStore::zeros_like`] and share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    buffers: Vec<Vec<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            buffers: Vec::new(),
        }
    }

    /// Appends a buffer and returns its index.
    pub fn push(&mut self, name: impl Into<String>, data: Vec<f64>) -> Result<usize> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.names.push(name);
        self.buffers.push(data);
        Ok(self.buffers.len() - 1)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            buffers: self.buffers.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.buffers.iter().map(Vec::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, idx: usize) -> &[f64] {
        &self.buffers[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.buffers[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.buffers.iter().map(Vec::as_slice))
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        check_dim("ParamStore buffers", self.len(), other.len())?;
        for (a, b) in self.buffers.iter().zip(&other.buffers) {
            check_dim("ParamStore buffer length", a.len(), b.len())?;
        }
        Ok(())
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.buffers.iter_mut().zip(&other.buffers) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.buffers.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn norm2(&self) -> f64 {
        self.buffers.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.buffers.iter().flatten().all(|x| x.is_finite())
    }

    /// Replaces buffer contents from a list of named buffers with the same layout.
    pub fn load(&mut self, named: Vec<(String, Vec<f64>)>) -> Result<()> {
        check_dim("ParamStore::load buffers", self.len(), named.len())?;
        for (i, (name, data)) in named.into_iter().enumerate() {
            if name != self.names[i] {
                return Err(Error::InvalidArgument(format!(
                    "parameter {i} is named {name}, expected {}",
                    self.names[i]
                )));
            }
            check_dim("ParamStore::load length", self.buffers[i].len(), data.len())?;
            self.buffers[i] = data;
        }
        Ok(())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}
