//! Finite σ-fields stored as canonical atom partitions.
//!
//! On a finite ground set a σ-field is the same thing as a partition into
//! atoms, so every field here is a label vector: element `e` belongs to atom
//! `labels[e]`, and labels are numbered in order of their least element.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SigmaError {
    #[error("fields are defined over different ground sets")]
    GroundMismatch,
    #[error("map is undefined on ground element {0}")]
    MissingEntry(usize),
    #[error("target ground set does not factor through the source: {0}")]
    NotAFactor(String),
    #[error("invalid ordering prefix {0:?}")]
    BadPrefix(Vec<usize>),
    #[error("duplicate ground element {0:?}")]
    DuplicateElement(Vec<usize>),
    #[error("ground element {0:?} is outside the coordinate ranges")]
    OutOfRange(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coordinate {
    pub name: String,
    pub size: usize,
}

impl Coordinate {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Coordinate { name: name.into(), size }
    }
}

/// Ordered list of outcome tuples over named coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundSet {
    coords: Vec<Coordinate>,
    elements: Vec<Vec<usize>>,
}

impl GroundSet {
    /// The full product of the coordinate ranges, in lexicographic order.
    pub fn product(coords: Vec<Coordinate>) -> Self {
        let mut elements = vec![Vec::new()];
        for c in &coords {
            let mut next = Vec::with_capacity(elements.len() * c.size);
            for e in &elements {
                for v in 0..c.size {
                    let mut t = e.clone();
                    t.push(v);
                    next.push(t);
                }
            }
            elements = next;
        }
        GroundSet { coords, elements }
    }

    /// A subset of the product; elements are sorted into canonical order.
    pub fn new(coords: Vec<Coordinate>, mut elements: Vec<Vec<usize>>) -> Result<Self, SigmaError> {
        for e in &elements {
            if e.len() != coords.len() || e.iter().zip(&coords).any(|(v, c)| *v >= c.size) {
                return Err(SigmaError::OutOfRange(e.clone()));
            }
        }
        elements.sort();
        if let Some(w) = elements.windows(2).find(|w| w[0] == w[1]) {
            return Err(SigmaError::DuplicateElement(w[0].clone()));
        }
        Ok(GroundSet { coords, elements })
    }

    pub fn coords(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, element: &[usize]) -> Option<usize> {
        self.elements
            .binary_search_by(|e| e.as_slice().cmp(element))
            .ok()
    }
}

#[derive(Clone, Debug)]
pub struct PartitionField {
    ground: Arc<GroundSet>,
    labels: Vec<u32>,
    n_atoms: usize,
}

impl PartialEq for PartitionField {
    fn eq(&self, other: &Self) -> bool {
        same_ground(&self.ground, &other.ground) && self.labels == other.labels
    }
}

impl Eq for PartitionField {}

fn same_ground(a: &Arc<GroundSet>, b: &Arc<GroundSet>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Relabels arbitrary keys by first occurrence, which yields the canonical
/// "sorted by least element" numbering.
fn canonical<K: Eq + Hash>(keys: impl IntoIterator<Item = K>) -> (Vec<u32>, usize) {
    let mut seen: HashMap<K, u32> = HashMap::new();
    let mut labels = Vec::new();
    for k in keys {
        let next = seen.len() as u32;
        labels.push(*seen.entry(k).or_insert(next));
    }
    (labels, seen.len())
}

impl PartitionField {
    /// Level sets of `f`. `f` receives the element index and its tuple.
    pub fn from_map<K, F>(ground: &Arc<GroundSet>, mut f: F) -> Result<Self, SigmaError>
    where
        K: Eq + Hash,
        F: FnMut(usize, &[usize]) -> Option<K>,
    {
        let mut keys = Vec::with_capacity(ground.len());
        for (i, e) in ground.elements.iter().enumerate() {
            keys.push(f(i, e).ok_or(SigmaError::MissingEntry(i))?);
        }
        let (labels, n_atoms) = canonical(keys);
        Ok(PartitionField { ground: ground.clone(), labels, n_atoms })
    }

    /// Level sets of a value table given in ground order.
    pub fn from_values<K: Eq + Hash + Clone>(
        ground: &Arc<GroundSet>,
        values: &[K],
    ) -> Result<Self, SigmaError> {
        if values.len() < ground.len() {
            return Err(SigmaError::MissingEntry(values.len()));
        }
        Self::from_map(ground, |i, _| Some(values[i].clone()))
    }

    pub fn trivial(ground: &Arc<GroundSet>) -> Self {
        let n = ground.len();
        PartitionField { ground: ground.clone(), labels: vec![0; n], n_atoms: usize::from(n > 0) }
    }

    pub fn discrete(ground: &Arc<GroundSet>) -> Self {
        let n = ground.len();
        PartitionField { ground: ground.clone(), labels: (0..n as u32).collect(), n_atoms: n }
    }

    /// The field generated by a family of events (membership vectors in
    /// ground order). Atoms are the classes of equal membership signature.
    pub fn generated_by(ground: &Arc<GroundSet>, events: &[Vec<bool>]) -> Result<Self, SigmaError> {
        if let Some(e) = events.iter().find(|e| e.len() != ground.len()) {
            return Err(SigmaError::MissingEntry(e.len().min(ground.len())));
        }
        Self::from_map(ground, |i, _| Some(events.iter().map(|e| e[i]).collect::<Vec<_>>()))
    }

    pub fn ground(&self) -> &Arc<GroundSet> {
        &self.ground
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn atom_of(&self, element: usize) -> usize {
        self.labels[element] as usize
    }

    /// Atoms as lists of element indices, sorted by least element.
    pub fn atoms(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_atoms];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    /// True iff every atom of `finer` lies inside one atom of `self`,
    /// i.e. σ(self) ⊆ σ(finer).
    pub fn is_coarser(&self, finer: &PartitionField) -> Result<bool, SigmaError> {
        if !same_ground(&self.ground, &finer.ground) {
            return Err(SigmaError::GroundMismatch);
        }
        Ok(self.coarser_on(finer, 0..self.labels.len()))
    }

    /// `is_coarser` for the trace fields on `subset`.
    pub fn is_coarser_on(&self, finer: &PartitionField, subset: &[usize]) -> Result<bool, SigmaError> {
        if !same_ground(&self.ground, &finer.ground) {
            return Err(SigmaError::GroundMismatch);
        }
        Ok(self.coarser_on(finer, subset.iter().copied()))
    }

    fn coarser_on(&self, finer: &PartitionField, elements: impl Iterator<Item = usize>) -> bool {
        let mut image: HashMap<u32, u32> = HashMap::new();
        for e in elements {
            let want = self.labels[e];
            if *image.entry(finer.labels[e]).or_insert(want) != want {
                return false;
            }
        }
        true
    }

    pub fn join(&self, other: &PartitionField) -> Result<Self, SigmaError> {
        if !same_ground(&self.ground, &other.ground) {
            return Err(SigmaError::GroundMismatch);
        }
        let (labels, n_atoms) = canonical(self.labels.iter().zip(&other.labels));
        Ok(PartitionField { ground: self.ground.clone(), labels, n_atoms })
    }

    /// Pulls the field back along the coordinate projection from `target`
    /// onto this field's ground. Source coordinates are matched by name.
    pub fn cylindrical_extension(&self, target: &Arc<GroundSet>) -> Result<Self, SigmaError> {
        let mut positions = Vec::with_capacity(self.ground.coords.len());
        for c in &self.ground.coords {
            let pos = target
                .coords
                .iter()
                .position(|t| t == c)
                .ok_or_else(|| SigmaError::NotAFactor(format!("missing coordinate {}", c.name)))?;
            positions.push(pos);
        }
        let mut labels = Vec::with_capacity(target.len());
        let mut buf = vec![0; positions.len()];
        for e in &target.elements {
            for (b, &p) in buf.iter_mut().zip(&positions) {
                *b = e[p];
            }
            let src = self
                .ground
                .index_of(&buf)
                .ok_or_else(|| SigmaError::NotAFactor(format!("projection {buf:?} not in source")))?;
            labels.push(self.labels[src]);
        }
        let (labels, n_atoms) = canonical(labels);
        Ok(PartitionField { ground: target.clone(), labels, n_atoms })
    }

    /// True iff the event (membership by ground index) is a union of atoms.
    pub fn contains_event(&self, event: &[bool]) -> bool {
        let mut seen: HashMap<u32, bool> = HashMap::new();
        self.labels
            .iter()
            .zip(event)
            .all(|(l, &m)| *seen.entry(*l).or_insert(m) == m)
    }

    /// True iff all of `subset` lies in a single atom.
    pub fn constant_on(&self, subset: &[usize]) -> bool {
        match subset.first() {
            None => true,
            Some(&f) => subset.iter().all(|&e| self.labels[e] == self.labels[f]),
        }
    }
}

/// 𝒫_s: keeps ω and the actions of the DMs listed in `prefix` (0-based), in
/// prefix order.
pub fn project(prefix: &[usize], omega: &[usize], u: &[usize]) -> Result<Vec<usize>, SigmaError> {
    let mut seen = vec![false; u.len()];
    for &p in prefix {
        if p >= u.len() || seen[p] {
            return Err(SigmaError::BadPrefix(prefix.to_vec()));
        }
        seen[p] = true;
    }
    let mut out = omega.to_vec();
    out.extend(prefix.iter().map(|&p| u[p]));
    Ok(out)
}
