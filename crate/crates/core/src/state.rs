//! Tensor-structured chain state.
//!
//! Everything a kernel touches — the chain position, kernel-private state,
//! per-step side information — is an ordered collection of named tensors.
//! That uniform representation is what makes kernels composable: a composite
//! kernel can collect, split, and compare child state without knowing what
//! any child stores, and "the state never changes shape across iterations"
//! becomes a checkable structural property rather than a convention.

use indexmap::IndexMap;
use ndarray::ArrayD;

use crate::error::{Error, Result};

/// Element kind of a [`Tensor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    /// 64-bit floats.
    F64,
    /// 64-bit signed integers (used for counts and flags).
    I64,
}

/// Declared kind and shape of one named tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub kind: TensorKind,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn scalar_f64() -> Self {
        TensorSpec {
            kind: TensorKind::F64,
            shape: vec![],
        }
    }

    pub fn scalar_i64() -> Self {
        TensorSpec {
            kind: TensorKind::I64,
            shape: vec![],
        }
    }

    pub fn f64(shape: &[usize]) -> Self {
        TensorSpec {
            kind: TensorKind::F64,
            shape: shape.to_vec(),
        }
    }

    pub fn i64(shape: &[usize]) -> Self {
        TensorSpec {
            kind: TensorKind::I64,
            shape: shape.to_vec(),
        }
    }
}

/// Dense tensor with a fixed element kind.
///
/// Scalars are rank-0 tensors. Values are compared either structurally
/// (kind and shape) or bitwise; bitwise comparison distinguishes `-0.0`
/// from `0.0` and treats equal NaN bit patterns as equal, which is what
/// replay/determinism checks need.
#[derive(Clone, Debug, PartialEq)]
pub enum Tensor {
    F64(ArrayD<f64>),
    I64(ArrayD<i64>),
}

impl Tensor {
    pub fn scalar_f64(x: f64) -> Self {
        Tensor::F64(ndarray::arr0(x).into_dyn())
    }

    pub fn scalar_i64(x: i64) -> Self {
        Tensor::I64(ndarray::arr0(x).into_dyn())
    }

    pub fn f64_from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        ArrayD::from_shape_vec(ndarray::IxDyn(shape), data)
            .map(Tensor::F64)
            .map_err(|e| Error::InvalidArgument(format!("bad tensor shape {shape:?}: {e}")))
    }

    pub fn i64_from_vec(shape: &[usize], data: Vec<i64>) -> Result<Self> {
        ArrayD::from_shape_vec(ndarray::IxDyn(shape), data)
            .map(Tensor::I64)
            .map_err(|e| Error::InvalidArgument(format!("bad tensor shape {shape:?}: {e}")))
    }

    pub fn kind(&self) -> TensorKind {
        match self {
            Tensor::F64(_) => TensorKind::F64,
            Tensor::I64(_) => TensorKind::I64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F64(a) => a.shape(),
            Tensor::I64(a) => a.shape(),
        }
    }

    pub fn spec(&self) -> TensorSpec {
        TensorSpec {
            kind: self.kind(),
            shape: self.shape().to_vec(),
        }
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The value of a rank-0 float tensor.
    pub fn as_scalar_f64(&self) -> Result<f64> {
        match self {
            Tensor::F64(a) if a.ndim() == 0 => Ok(*a.first().expect("rank-0 tensor")),
            _ => Err(Error::StructureMismatch(format!(
                "expected a scalar float tensor, got {:?} {:?}",
                self.kind(),
                self.shape()
            ))),
        }
    }

    /// The value of a rank-0 integer tensor.
    pub fn as_scalar_i64(&self) -> Result<i64> {
        match self {
            Tensor::I64(a) if a.ndim() == 0 => Ok(*a.first().expect("rank-0 tensor")),
            _ => Err(Error::StructureMismatch(format!(
                "expected a scalar integer tensor, got {:?} {:?}",
                self.kind(),
                self.shape()
            ))),
        }
    }

    pub fn as_f64_array(&self) -> Result<&ArrayD<f64>> {
        match self {
            Tensor::F64(a) => Ok(a),
            Tensor::I64(_) => Err(Error::StructureMismatch(
                "expected a float tensor, got an integer tensor".into(),
            )),
        }
    }

    pub fn as_i64_array(&self) -> Result<&ArrayD<i64>> {
        match self {
            Tensor::I64(a) => Ok(a),
            Tensor::F64(_) => Err(Error::StructureMismatch(
                "expected an integer tensor, got a float tensor".into(),
            )),
        }
    }

    /// Same kind and shape.
    pub fn structure_eq(&self, other: &Tensor) -> bool {
        self.kind() == other.kind() && self.shape() == other.shape()
    }

    /// Same structure and bit-identical elements.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        match (self, other) {
            (Tensor::F64(a), Tensor::F64(b)) => {
                a.shape() == b.shape()
                    && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Tensor::I64(a), Tensor::I64(b)) => a == b,
            _ => false,
        }
    }

    /// Flattened elements as f64 (integers are converted).
    pub fn flat_f64(&self) -> Vec<f64> {
        match self {
            Tensor::F64(a) => a.iter().copied().collect(),
            Tensor::I64(a) => a.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// Ordered collection of named tensors.
///
/// `Position` plays three roles: the point a chain lives at, the payload of
/// kernel-private state, and the payload of per-step info records. Iteration
/// order is insertion order and is part of the structure.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Position {
    entries: IndexMap<String, Tensor>,
}

impl Position {
    pub fn new() -> Self {
        Position::default()
    }

    /// Builds from `(name, tensor)` pairs, rejecting duplicate names.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Tensor)>,
        S: Into<String>,
    {
        let mut p = Position::new();
        for (name, t) in pairs {
            p.insert(name.into(), t)?;
        }
        Ok(p)
    }

    /// Appends an entry; the name must be new.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    /// Like [`Position::get`] but failing with [`Error::UnknownName`].
    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownName(name.into()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Splits into `(selected, remainder)` by name.
    ///
    /// `selected` holds the requested names in the requested order;
    /// `remainder` holds every other entry in the original order. Unknown or
    /// repeated names are errors. `merge`-ing the two halves reconstructs the
    /// original contents up to entry order.
    pub fn project(&self, names: &[&str]) -> Result<(Position, Position)> {
        let mut seen = std::collections::HashSet::new();
        let mut selected = Position::new();
        for &name in names {
            if !seen.insert(name) {
                return Err(Error::DuplicateName(name.into()));
            }
            let t = self.expect(name)?;
            selected.insert(name, t.clone())?;
        }
        let mut remainder = Position::new();
        for (name, t) in self.iter() {
            if !seen.contains(name) {
                remainder.insert(name, t.clone())?;
            }
        }
        Ok((selected, remainder))
    }

    /// Disjoint union: entries of `self` followed by entries of `other`.
    ///
    /// A name present in both is an error.
    pub fn merge(&self, other: &Position) -> Result<Position> {
        let mut out = self.clone();
        for (name, t) in other.iter() {
            out.insert(name, t.clone())?;
        }
        Ok(out)
    }

    /// Returns a copy in which every entry named in `updates` takes the
    /// updated tensor while all other entries — and the entry order — are
    /// preserved. Each update must name an existing entry and preserve its
    /// structure.
    pub fn replace_values(&self, updates: &Position) -> Result<Position> {
        for (name, t) in updates.iter() {
            let old = self.expect(name)?;
            if !old.structure_eq(t) {
                return Err(Error::StructureMismatch(format!(
                    "replacement for `{name}` has {:?} {:?}, expected {:?} {:?}",
                    t.kind(),
                    t.shape(),
                    old.kind(),
                    old.shape()
                )));
            }
        }
        let mut out = Position::new();
        for (name, t) in self.iter() {
            let v = updates.get(name).unwrap_or(t);
            out.insert(name, v.clone())?;
        }
        Ok(out)
    }

    /// Same names, in the same order, with the same kinds and shapes.
    pub fn structure_eq(&self, other: &Position) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.structure_eq(tb))
    }

    /// Same structure and bit-identical values.
    pub fn bitwise_eq(&self, other: &Position) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bitwise_eq(tb))
    }

    /// Total number of scalar components over all entries.
    pub fn flat_len(&self) -> usize {
        self.iter().map(|(_, t)| t.len()).sum()
    }

    /// Concatenated row-major elements of all entries, restricted to float
    /// tensors. An integer entry is an error (used by kernels that treat the
    /// position as a real vector).
    pub fn flatten_f64(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.flat_len());
        for (name, t) in self.iter() {
            match t {
                Tensor::F64(a) => out.extend(a.iter().copied()),
                Tensor::I64(_) => {
                    return Err(Error::StructureMismatch(format!(
                        "entry `{name}` is integer-valued; expected a real-valued position"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Rebuilds a position with this position's structure from flattened
    /// float values (inverse of [`Position::flatten_f64`]).
    pub fn unflatten_f64_like(&self, values: &[f64]) -> Result<Position> {
        if values.len() != self.flat_len() {
            return Err(Error::StructureMismatch(format!(
                "expected {} flattened values, got {}",
                self.flat_len(),
                values.len()
            )));
        }
        let mut out = Position::new();
        let mut offset = 0;
        for (name, t) in self.iter() {
            let n = t.len();
            match t {
                Tensor::F64(_) => {
                    let tensor =
                        Tensor::f64_from_vec(t.shape(), values[offset..offset + n].to_vec())?;
                    out.insert(name, tensor)?;
                }
                Tensor::I64(_) => {
                    return Err(Error::StructureMismatch(format!(
                        "entry `{name}` is integer-valued; expected a real-valued position"
                    )))
                }
            }
            offset += n;
        }
        Ok(out)
    }

    /// Labels of flattened components: `name` for scalars, `name.i` for
    /// multi-element tensors (row-major index).
    pub fn component_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.flat_len());
        for (name, t) in self.iter() {
            if t.len() == 1 && t.shape().is_empty() {
                out.push(name.to_string());
            } else {
                for i in 0..t.len() {
                    out.push(format!("{name}.{i}"));
                }
            }
        }
        out
    }

    /// Short human-readable rendering used in error messages.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .iter()
            .map(|(n, t)| match t {
                Tensor::F64(a) if a.ndim() == 0 => format!("{n}={}", a.first().unwrap()),
                Tensor::I64(a) if a.ndim() == 0 => format!("{n}={}", a.first().unwrap()),
                _ => format!("{n}:{:?}{:?}", t.kind(), t.shape()),
            })
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// Chain-visible state: the position plus its cached log-density.
///
/// `log_density` may be `-inf` (a position outside the support); it is never
/// NaN. `log_density_grad` is reserved for gradient-based kernels and is
/// `None` for every kernel shipped here.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub position: Position,
    pub log_density: f64,
    pub log_density_grad: Option<Position>,
}

impl ChainState {
    pub fn new(position: Position, log_density: f64) -> Self {
        ChainState {
            position,
            log_density,
            log_density_grad: None,
        }
    }
}

/// Kernel-private state: a payload for a primitive kernel, or an ordered
/// sequence of child states for a composite kernel.
#[derive(Clone, Debug)]
pub enum KernelState {
    Leaf(Position),
    Seq(Vec<KernelState>),
}

impl KernelState {
    pub fn empty() -> Self {
        KernelState::Leaf(Position::new())
    }

    pub fn as_leaf(&self) -> Result<&Position> {
        match self {
            KernelState::Leaf(p) => Ok(p),
            KernelState::Seq(_) => Err(Error::StructureMismatch(
                "expected a primitive kernel state, got a sequence".into(),
            )),
        }
    }

    pub fn as_seq(&self) -> Result<&[KernelState]> {
        match self {
            KernelState::Seq(s) => Ok(s),
            KernelState::Leaf(_) => Err(Error::StructureMismatch(
                "expected a sequence of kernel states, got a primitive state".into(),
            )),
        }
    }

    pub fn structure_eq(&self, other: &KernelState) -> bool {
        match (self, other) {
            (KernelState::Leaf(a), KernelState::Leaf(b)) => a.structure_eq(b),
            (KernelState::Seq(a), KernelState::Seq(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.structure_eq(y))
            }
            _ => false,
        }
    }
}

/// Per-step side information: a record for a primitive kernel, or an ordered
/// sequence of child infos for a composite kernel.
///
/// Every primitive kernel here emits at least `is_accepted` (0/1 scalar) and
/// `log_acceptance`.
#[derive(Clone, Debug)]
pub enum Info {
    Leaf(Position),
    Seq(Vec<Info>),
}

impl Info {
    pub fn as_leaf(&self) -> Result<&Position> {
        match self {
            Info::Leaf(p) => Ok(p),
            Info::Seq(_) => Err(Error::StructureMismatch(
                "expected a primitive info record, got a sequence".into(),
            )),
        }
    }

    pub fn as_seq(&self) -> Result<&[Info]> {
        match self {
            Info::Seq(s) => Ok(s),
            Info::Leaf(_) => Err(Error::StructureMismatch(
                "expected a sequence of info records, got a primitive record".into(),
            )),
        }
    }

    /// Depth-first flattened view of all primitive records.
    pub fn leaves(&self) -> Vec<&Position> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Position>) {
        match self {
            Info::Leaf(p) => out.push(p),
            Info::Seq(s) => {
                for i in s {
                    i.collect_leaves(out);
                }
            }
        }
    }

    pub fn structure_eq(&self, other: &Info) -> bool {
        match (self, other) {
            (Info::Leaf(a), Info::Leaf(b)) => a.structure_eq(b),
            (Info::Seq(a), Info::Seq(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.structure_eq(y))
            }
            _ => false,
        }
    }
}

/// The full state a sampling algorithm carries between steps.
#[derive(Clone, Debug)]
pub struct ChainAndKernelState {
    pub chain: ChainState,
    pub kernel: KernelState,
}

impl ChainAndKernelState {
    pub fn new(chain: ChainState, kernel: KernelState) -> Self {
        ChainAndKernelState { chain, kernel }
    }

    /// Position structure and kernel-state structure both match.
    pub fn structure_eq(&self, other: &ChainAndKernelState) -> bool {
        self.chain.position.structure_eq(&other.chain.position)
            && self.kernel.structure_eq(&other.kernel)
    }
}

/// Column of a [`TraceBuffer`]: one position entry over all iterations.
#[derive(Clone, Debug)]
struct TraceColumn {
    name: String,
    spec: TensorSpec,
    /// Elements per row for this entry.
    width: usize,
    data: ColumnData,
}

#[derive(Clone, Debug)]
enum ColumnData {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

/// Preallocated sample storage with the structure of a prototype position.
///
/// Slots are zero-initialized: reading an index that was never written
/// returns a defined all-zeros position rather than garbage.
#[derive(Clone, Debug)]
pub struct TraceBuffer {
    num_samples: usize,
    columns: Vec<TraceColumn>,
}

impl TraceBuffer {
    /// Allocates storage for `num_samples` rows shaped like `prototype`.
    pub fn allocate(prototype: &Position, num_samples: usize) -> TraceBuffer {
        let columns = prototype
            .iter()
            .map(|(name, t)| {
                let width = t.len();
                let data = match t.kind() {
                    TensorKind::F64 => ColumnData::F64(vec![0.0; width * num_samples]),
                    TensorKind::I64 => ColumnData::I64(vec![0; width * num_samples]),
                };
                TraceColumn {
                    name: name.to_string(),
                    spec: t.spec(),
                    width,
                    data,
                }
            })
            .collect();
        TraceBuffer {
            num_samples,
            columns,
        }
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    /// Prototype structure the buffer was allocated for.
    pub fn prototype(&self) -> Position {
        let mut p = Position::new();
        for c in &self.columns {
            let t = match c.spec.kind {
                TensorKind::F64 => {
                    Tensor::f64_from_vec(&c.spec.shape, vec![0.0; c.width]).expect("valid shape")
                }
                TensorKind::I64 => {
                    Tensor::i64_from_vec(&c.spec.shape, vec![0; c.width]).expect("valid shape")
                }
            };
            p.insert(&c.name, t).expect("unique column names");
        }
        p
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.num_samples {
            return Err(Error::OutOfBounds {
                index,
                len: self.num_samples,
            });
        }
        Ok(())
    }

    /// Writes `position` into row `index`. The position must match the
    /// prototype structure exactly (names, order, kinds, shapes).
    pub fn write(&mut self, index: usize, position: &Position) -> Result<()> {
        self.check_index(index)?;
        if position.len() != self.columns.len() {
            return Err(Error::StructureMismatch(format!(
                "position has {} entries, trace expects {}",
                position.len(),
                self.columns.len()
            )));
        }
        for (col, (name, t)) in self.columns.iter().zip(position.iter()) {
            if col.name != name || col.spec != t.spec() {
                return Err(Error::StructureMismatch(format!(
                    "position entry `{name}` does not match trace column `{}`",
                    col.name
                )));
            }
        }
        for (col, (_, t)) in self.columns.iter_mut().zip(position.iter()) {
            let at = index * col.width;
            match (&mut col.data, t) {
                (ColumnData::F64(buf), Tensor::F64(a)) => {
                    for (slot, v) in buf[at..at + col.width].iter_mut().zip(a.iter()) {
                        *slot = *v;
                    }
                }
                (ColumnData::I64(buf), Tensor::I64(a)) => {
                    for (slot, v) in buf[at..at + col.width].iter_mut().zip(a.iter()) {
                        *slot = *v;
                    }
                }
                _ => unreachable!("structure checked above"),
            }
        }
        Ok(())
    }

    /// Reads row `index` back as a position.
    pub fn read(&self, index: usize) -> Result<Position> {
        self.check_index(index)?;
        let mut p = Position::new();
        for col in &self.columns {
            let at = index * col.width;
            let t = match &col.data {
                ColumnData::F64(buf) => {
                    Tensor::f64_from_vec(&col.spec.shape, buf[at..at + col.width].to_vec())?
                }
                ColumnData::I64(buf) => {
                    Tensor::i64_from_vec(&col.spec.shape, buf[at..at + col.width].to_vec())?
                }
            };
            p.insert(&col.name, t)?;
        }
        Ok(p)
    }

    /// One flattened component across all rows, as f64.
    ///
    /// `flat` indexes into the row-major flattening of the named entry.
    pub fn component(&self, name: &str, flat: usize) -> Result<Vec<f64>> {
        let col = self
            .columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownName(name.into()))?;
        if flat >= col.width {
            return Err(Error::OutOfBounds {
                index: flat,
                len: col.width,
            });
        }
        Ok((0..self.num_samples)
            .map(|row| match &col.data {
                ColumnData::F64(buf) => buf[row * col.width + flat],
                ColumnData::I64(buf) => buf[row * col.width + flat] as f64,
            })
            .collect())
    }

    /// Labels of all flattened components, in column order.
    pub fn component_labels(&self) -> Vec<String> {
        self.prototype().component_labels()
    }

    /// `(entry name, flat index, label)` for every flattened component, in
    /// column order — the iteration target for per-component statistics.
    pub fn component_index(&self) -> Vec<(String, usize, String)> {
        let mut out = Vec::new();
        for col in &self.columns {
            for flat in 0..col.width {
                let label = if col.width == 1 && col.spec.shape.is_empty() {
                    col.name.clone()
                } else {
                    format!("{}.{flat}", col.name)
                };
                out.push((col.name.clone(), flat, label));
            }
        }
        out
    }

    /// Writes the trace as CSV: header `iteration,<labels...>`, then one row
    /// per sample. Row `i` is labeled with iteration `i + 1` (the number of
    /// completed steps). Floats use the shortest decimal that round-trips.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("iteration");
        for label in self.component_labels() {
            header.push(',');
            header.push_str(&label);
        }
        writeln!(w, "{header}")?;
        let mut line = String::new();
        for row in 0..self.num_samples {
            line.clear();
            line.push_str(&(row + 1).to_string());
            for col in &self.columns {
                let at = row * col.width;
                for k in 0..col.width {
                    line.push(',');
                    match &col.data {
                        ColumnData::F64(buf) => line.push_str(&format!("{}", buf[at + k])),
                        ColumnData::I64(buf) => line.push_str(&format!("{}", buf[at + k])),
                    }
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Writes a simple little-endian binary dump.
    ///
    /// Layout: magic `MWGTRACE`, format version (u32), number of rows (u64),
    /// number of columns (u32); per column a name (u32 length + UTF-8 bytes),
    /// kind byte (0 = f64, 1 = i64), rank (u32) and dimensions (u64 each);
    /// then row-major sample data, rows outermost, columns in declared order,
    /// elements as little-endian 8-byte values.
    pub fn write_binary<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"MWGTRACE")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.num_samples as u64).to_le_bytes())?;
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        for col in &self.columns {
            w.write_all(&(col.name.len() as u32).to_le_bytes())?;
            w.write_all(col.name.as_bytes())?;
            w.write_all(&[match col.spec.kind {
                TensorKind::F64 => 0u8,
                TensorKind::I64 => 1u8,
            }])?;
            w.write_all(&(col.spec.shape.len() as u32).to_le_bytes())?;
            for &d in &col.spec.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
        }
        for row in 0..self.num_samples {
            for col in &self.columns {
                let at = row * col.width;
                for k in 0..col.width {
                    match &col.data {
                        ColumnData::F64(buf) => w.write_all(&buf[at + k].to_le_bytes())?,
                        ColumnData::I64(buf) => w.write_all(&buf[at + k].to_le_bytes())?,
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`TraceBuffer::write_binary`].
    pub fn read_binary<R: std::io::Read>(mut r: R) -> Result<TraceBuffer> {
        fn bad(msg: &str) -> Error {
            Error::InvalidArgument(format!("malformed trace dump: {msg}"))
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"MWGTRACE" {
            return Err(bad("wrong magic"));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u32b)?;
        if u32::from_le_bytes(u32b) != 1 {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut u64b)?;
        let num_samples = u64::from_le_bytes(u64b) as usize;
        r.read_exact(&mut u32b)?;
        let n_cols = u32::from_le_bytes(u32b) as usize;
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            r.read_exact(&mut u32b)?;
            let name_len = u32::from_le_bytes(u32b) as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes).map_err(|_| bad("non-UTF-8 name"))?;
            let mut kind_byte = [0u8; 1];
            r.read_exact(&mut kind_byte)?;
            let kind = match kind_byte[0] {
                0 => TensorKind::F64,
                1 => TensorKind::I64,
                _ => return Err(bad("unknown kind byte")),
            };
            r.read_exact(&mut u32b)?;
            let rank = u32::from_le_bytes(u32b) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                r.read_exact(&mut u64b)?;
                shape.push(u64::from_le_bytes(u64b) as usize);
            }
            let width: usize = shape.iter().product();
            let data = match kind {
                TensorKind::F64 => ColumnData::F64(vec![0.0; width * num_samples]),
                TensorKind::I64 => ColumnData::I64(vec![0; width * num_samples]),
            };
            columns.push(TraceColumn {
                name,
                spec: TensorSpec { kind, shape },
                width,
                data,
            });
        }
        for row in 0..num_samples {
            for col in &mut columns {
                let at = row * col.width;
                for k in 0..col.width {
                    r.read_exact(&mut u64b)?;
                    match &mut col.data {
                        ColumnData::F64(buf) => buf[at + k] = f64::from_le_bytes(u64b),
                        ColumnData::I64(buf) => buf[at + k] = i64::from_le_bytes(u64b),
                    }
                }
            }
        }
        Ok(TraceBuffer {
            num_samples,
            columns,
        })
    }
}
