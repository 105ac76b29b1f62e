//! Sparse multi-photon Fock states and their linear-optical evolution.
//!
//! A [`FockState`] is a sparse superposition of occupation-number kets over the
//! modes of a [`ModeRegistry`]. Amplitudes are coefficients of orthonormal
//! kets `|n_1, n_2, ...>`; the `1/sqrt(n!)` factors of creation-operator
//! monomials are folded in, so probabilities are plain sums of `|amp|^2`.
//!
//! Terms are kept sorted by [`Occupation`] and every reduction walks them in
//! that order, which makes every result bit-stable across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Complex amplitude of a Fock ket.
pub type Amplitude = Complex64;

/// Terms with `|amp| < PRUNE_EPS` are dropped after every linear evolution.
pub const PRUNE_EPS: f64 = 1e-14;

/// Entrywise tolerance on `M^H M - I` accepted for a [`LinearMap`].
pub const ISOMETRY_TOL: f64 = 1e-12;

const MAX_MODES: usize = u16::MAX as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeId(pub usize);

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    System,
    Detector,
    Sink,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeDescriptor {
    pub id: ModeId,
    pub kind: ModeKind,
    pub subsystem: Option<usize>,
    pub rail: Option<usize>,
    pub internal: Option<usize>,
    pub label: String,
}

/// The flattened set of optical modes a simulation runs over.
///
/// Ids are dense in `0..len()`. System modes carry a full
/// `(subsystem, rail, internal)` address.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModeDescriptor>", into = "Vec<ModeDescriptor>")]
pub struct ModeRegistry {
    modes: Vec<ModeDescriptor>,
}

impl TryFrom<Vec<ModeDescriptor>> for ModeRegistry {
    type Error = Error;

    fn try_from(modes: Vec<ModeDescriptor>) -> Result<Self> {
        ModeRegistry::from_modes(modes)
    }
}

impl From<ModeRegistry> for Vec<ModeDescriptor> {
    fn from(r: ModeRegistry) -> Self {
        r.modes
    }
}

impl ModeRegistry {
    pub fn from_modes(modes: Vec<ModeDescriptor>) -> Result<Self> {
        if modes.len() > MAX_MODES {
            return Err(Error::Capacity(format!(
                "{} modes requested, at most {MAX_MODES} supported",
                modes.len()
            )));
        }
        for (i, m) in modes.iter().enumerate() {
            if m.id.0 != i {
                return Err(Error::Format(format!(
                    "mode ids must be dense and ordered: position {i} holds id {}",
                    m.id
                )));
            }
            if m.kind == ModeKind::System
                && (m.subsystem.is_none() || m.rail.is_none() || m.internal.is_none())
            {
                return Err(Error::Format(format!(
                    "system mode {} lacks a full (subsystem, rail, internal) address",
                    m.id
                )));
            }
        }
        Ok(Self { modes })
    }

    /// `n * d * d` system modes indexed `(subsystem, rail, internal)` row-major,
    /// followed by `extra_sinks` sink modes.
    pub fn grid(n: usize, d: usize, extra_sinks: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain(format!("N must be >= 1, got {n}")));
        }
        if d < 2 {
            return Err(Error::Domain(format!("d must be >= 2, got {d}")));
        }
        let mut modes = Vec::with_capacity(n * d * d + extra_sinks);
        for j in 0..n {
            for k in 0..d {
                for s in 0..d {
                    modes.push(ModeDescriptor {
                        id: ModeId(modes.len()),
                        kind: ModeKind::System,
                        subsystem: Some(j),
                        rail: Some(k),
                        internal: Some(s),
                        label: format!("a{j}[{k},{s}]"),
                    });
                }
            }
        }
        for i in 0..extra_sinks {
            modes.push(ModeDescriptor {
                id: ModeId(modes.len()),
                kind: ModeKind::Sink,
                subsystem: None,
                rail: None,
                internal: None,
                label: format!("sink{i}"),
            });
        }
        Self::from_modes(modes)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeDescriptor] {
        &self.modes
    }

    pub fn get(&self, id: ModeId) -> Option<&ModeDescriptor> {
        self.modes.get(id.0)
    }

    pub fn contains(&self, id: ModeId) -> bool {
        id.0 < self.modes.len()
    }

    pub fn check(&self, id: ModeId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownMode(id))
        }
    }

    /// Looks up the system mode with the given address.
    pub fn system_mode(&self, subsystem: usize, rail: usize, internal: usize) -> Option<ModeId> {
        self.modes
            .iter()
            .find(|m| {
                m.kind == ModeKind::System
                    && m.subsystem == Some(subsystem)
                    && m.rail == Some(rail)
                    && m.internal == Some(internal)
            })
            .map(|m| m.id)
    }

    pub fn of_kind(&self, kind: ModeKind) -> impl Iterator<Item = ModeId> + '_ {
        self.modes.iter().filter(move |m| m.kind == kind).map(|m| m.id)
    }
}

/// Registry for the `(N, d)` scheme: `N·d·d` system modes plus sinks.
pub fn make_registry(n: usize, d: usize, extra_sinks: usize) -> Result<ModeRegistry> {
    ModeRegistry::grid(n, d, extra_sinks)
}

/// Photon occupation of a Fock ket.
///
/// Stored as the ascending list of occupied modes with one entry per photon,
/// so `|2,0,1>` is `[0, 0, 2]`. Equal occupations have equal representations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(SmallVec<[u16; 16]>);

impl Occupation {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds an occupation from `(mode, count)` pairs; zero counts are ignored
    /// and repeated modes accumulate.
    pub fn from_counts<I: IntoIterator<Item = (ModeId, usize)>>(counts: I) -> Self {
        let mut v: SmallVec<[u16; 16]> = SmallVec::new();
        for (m, c) in counts {
            for _ in 0..c {
                v.push(m.0 as u16);
            }
        }
        v.sort_unstable();
        Self(v)
    }

    pub fn from_modes<I: IntoIterator<Item = ModeId>>(modes: I) -> Self {
        Self::from_counts(modes.into_iter().map(|m| (m, 1)))
    }

    pub fn total(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, mode: ModeId) -> usize {
        self.0.iter().filter(|&&m| m as usize == mode.0).count()
    }

    /// Run-length view: ascending `(mode, count)` pairs with positive counts.
    pub fn counts(&self) -> Vec<(ModeId, usize)> {
        let mut out: Vec<(ModeId, usize)> = Vec::new();
        for &m in &self.0 {
            match out.last_mut() {
                Some((last, c)) if last.0 == m as usize => *c += 1,
                _ => out.push((ModeId(m as usize), 1)),
            }
        }
        out
    }

    /// One entry per photon, ascending.
    pub fn photons(&self) -> impl Iterator<Item = ModeId> + '_ {
        self.0.iter().map(|&m| ModeId(m as usize))
    }

    pub fn with_photon(&self, mode: ModeId) -> Self {
        let mut v = self.0.clone();
        let pos = v.partition_point(|&m| (m as usize) <= mode.0);
        v.insert(pos, mode.0 as u16);
        Self(v)
    }

    pub fn without_photon(&self, mode: ModeId) -> Option<Self> {
        let pos = self.0.iter().position(|&m| m as usize == mode.0)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(Self(v))
    }

    /// Splits into the photons on `modes` and the rest.
    pub fn split(&self, modes: &BTreeSet<ModeId>) -> (Occupation, Occupation) {
        let mut inside = SmallVec::new();
        let mut outside = SmallVec::new();
        for &m in &self.0 {
            if modes.contains(&ModeId(m as usize)) {
                inside.push(m);
            } else {
                outside.push(m);
            }
        }
        (Self(inside), Self(outside))
    }

    /// `prod_m n_m!`
    pub fn factorial_product(&self) -> f64 {
        self.counts().iter().map(|&(_, c)| factorial(c)).product()
    }

    /// Combines two occupations and returns the bosonic merge factor
    /// `prod_m sqrt((a_m + b_m)! / (a_m! b_m!))`.
    fn merge(&self, other: &Occupation) -> (Occupation, f64) {
        let mut v: SmallVec<[u16; 16]> = SmallVec::with_capacity(self.0.len() + other.0.len());
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i] <= b[j]) {
                v.push(a[i]);
                i += 1;
            } else {
                v.push(b[j]);
                j += 1;
            }
        }
        let mut factor = 1.0;
        if !a.is_empty() && !b.is_empty() {
            for &(m, cb) in other.counts().iter() {
                let ca = self.count(m);
                if ca > 0 {
                    factor *= binomial(ca + cb, ca).sqrt();
                }
            }
        }
        (Self(v), factor)
    }

    fn insert_raw(&mut self, mode: u16) {
        let pos = self.0.partition_point(|&m| m <= mode);
        self.0.insert(pos, mode);
    }
}

impl Serialize for Occupation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<(usize, usize)> = self.counts().into_iter().map(|(m, c)| (m.0, c)).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Occupation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<(usize, usize)> = Vec::deserialize(d)?;
        if pairs.iter().any(|&(m, _)| m > MAX_MODES) {
            return Err(serde::de::Error::custom("mode id out of range"));
        }
        Ok(Occupation::from_counts(pairs.into_iter().map(|(m, c)| (ModeId(m), c))))
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A linear map on creation operators: `a†_p -> sum_q matrix[q][p] a†_q`.
///
/// Columns index `input_modes`, rows index `output_modes`. The matrix must be
/// an isometry, which is checked once here.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    input_modes: Vec<ModeId>,
    output_modes: Vec<ModeId>,
    matrix: DMatrix<Complex64>,
}

impl LinearMap {
    pub fn new(
        input_modes: Vec<ModeId>,
        output_modes: Vec<ModeId>,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self> {
        if matrix.ncols() != input_modes.len() || matrix.nrows() != output_modes.len() {
            return Err(Error::Binding(format!(
                "matrix is {}x{} but binds {} inputs and {} outputs",
                matrix.nrows(),
                matrix.ncols(),
                input_modes.len(),
                output_modes.len()
            )));
        }
        check_distinct(&input_modes)?;
        check_distinct(&output_modes)?;
        let dev = isometry_deviation(&matrix);
        if dev > ISOMETRY_TOL {
            return Err(Error::NotIsometric(dev));
        }
        Ok(Self { input_modes, output_modes, matrix })
    }

    /// Square map on `modes`.
    pub fn square(modes: Vec<ModeId>, matrix: DMatrix<Complex64>) -> Result<Self> {
        Self::new(modes.clone(), modes, matrix)
    }

    pub fn identity(modes: Vec<ModeId>) -> Self {
        let n = modes.len();
        Self { input_modes: modes.clone(), output_modes: modes, matrix: DMatrix::identity(n, n) }
    }

    /// Relabelling map `from -> to` for each pair; must be a bijection on the
    /// listed modes.
    pub fn permutation(pairs: &[(ModeId, ModeId)]) -> Result<Self> {
        let inputs: Vec<ModeId> = pairs.iter().map(|p| p.0).collect();
        let domain: BTreeSet<ModeId> = inputs.iter().copied().collect();
        let image: BTreeSet<ModeId> = pairs.iter().map(|p| p.1).collect();
        if domain.len() != pairs.len() || domain != image {
            return Err(Error::Binding("rewiring is not a bijection on its modes".into()));
        }
        let n = inputs.len();
        let mut m = DMatrix::zeros(n, n);
        for (col, &(_, to)) in pairs.iter().enumerate() {
            let row = inputs.iter().position(|&x| x == to).expect("image equals domain");
            m[(row, col)] = Complex64::new(1.0, 0.0);
        }
        Self::new(inputs.clone(), inputs, m)
    }

    pub fn input_modes(&self) -> &[ModeId] {
        &self.input_modes
    }

    pub fn output_modes(&self) -> &[ModeId] {
        &self.output_modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Image of a single input mode's creation operator.
    pub fn image(&self, mode: ModeId) -> Option<Vec<(ModeId, Complex64)>> {
        let col = self.input_modes.iter().position(|&m| m == mode)?;
        Some(
            self.output_modes
                .iter()
                .enumerate()
                .map(|(r, &q)| (q, self.matrix[(r, col)]))
                .filter(|(_, u)| u.norm() > 0.0)
                .collect(),
        )
    }

    /// Embeds the map into the full `n_modes`-dimensional space, acting as the
    /// identity on modes it does not touch. Only meaningful when inputs and
    /// outputs span the same mode set.
    pub fn embed(&self, n_modes: usize) -> Result<DMatrix<Complex64>> {
        let ins: BTreeSet<ModeId> = self.input_modes.iter().copied().collect();
        let outs: BTreeSet<ModeId> = self.output_modes.iter().copied().collect();
        if ins != outs {
            return Err(Error::Binding(
                "only maps whose inputs and outputs cover the same modes can be embedded".into(),
            ));
        }
        let mut full = DMatrix::identity(n_modes, n_modes);
        for &m in &self.input_modes {
            if m.0 >= n_modes {
                return Err(Error::UnknownMode(m));
            }
            full[(m.0, m.0)] = Complex64::new(0.0, 0.0);
        }
        for (c, &p) in self.input_modes.iter().enumerate() {
            for (r, &q) in self.output_modes.iter().enumerate() {
                full[(q.0, p.0)] = self.matrix[(r, c)];
            }
        }
        Ok(full)
    }
}

fn check_distinct(modes: &[ModeId]) -> Result<()> {
    let set: BTreeSet<_> = modes.iter().collect();
    if set.len() != modes.len() {
        return Err(Error::Binding("a mode appears twice in one binding".into()));
    }
    Ok(())
}

/// Max entrywise `|M^H M - I|`.
pub fn isometry_deviation(m: &DMatrix<Complex64>) -> f64 {
    let g = m.adjoint() * m;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Sparse pure state with a fixed total photon number.
#[derive(Clone, Debug)]
pub struct FockState {
    registry: Arc<ModeRegistry>,
    photon_count: usize,
    terms: Vec<(Occupation, Amplitude)>,
}

impl PartialEq for FockState {
    fn eq(&self, other: &Self) -> bool {
        self.photon_count == other.photon_count
            && self.terms == other.terms
            && same_registry(&self.registry, &other.registry)
    }
}

fn same_registry(a: &Arc<ModeRegistry>, b: &Arc<ModeRegistry>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `|vac>` on `registry`.
pub fn vacuum(registry: &Arc<ModeRegistry>) -> FockState {
    FockState {
        registry: Arc::clone(registry),
        photon_count: 0,
        terms: vec![(Occupation::empty(), Complex64::new(1.0, 0.0))],
    }
}

impl FockState {
    /// Canonicalizes arbitrary terms: duplicates are summed in input order,
    /// tiny amplitudes are pruned, and terms are sorted.
    pub fn from_terms<I>(registry: &Arc<ModeRegistry>, photon_count: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Occupation, Amplitude)>,
    {
        let mut acc: BTreeMap<Occupation, Amplitude> = BTreeMap::new();
        for (occ, amp) in terms {
            if occ.total() != photon_count {
                return Err(Error::PhotonMismatch(photon_count, occ.total()));
            }
            if let Some(m) = occ.photons().find(|m| !registry.contains(*m)) {
                return Err(Error::UnknownMode(m));
            }
            if !(amp.re.is_finite() && amp.im.is_finite()) {
                return Err(Error::Domain("non-finite amplitude".into()));
            }
            *acc.entry(occ).or_default() += amp;
        }
        Ok(Self {
            registry: Arc::clone(registry),
            photon_count,
            terms: acc.into_iter().filter(|(_, a)| a.norm() >= PRUNE_EPS).collect(),
        })
    }

    /// Single ket `|occ>` with unit amplitude.
    pub fn basis(registry: &Arc<ModeRegistry>, occ: Occupation) -> Result<Self> {
        let n = occ.total();
        Self::from_terms(registry, n, [(occ, Complex64::new(1.0, 0.0))])
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn photon_count(&self) -> usize {
        self.photon_count
    }

    pub fn terms(&self) -> &[(Occupation, Amplitude)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, occ: &Occupation) -> Amplitude {
        self.terms
            .binary_search_by(|(o, _)| o.cmp(occ))
            .map(|i| self.terms[i].1)
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: Amplitude) -> FockState {
        let terms = self
            .terms
            .iter()
            .map(|(o, a)| (o.clone(), a * c))
            .filter(|(_, a)| a.norm() >= PRUNE_EPS)
            .collect();
        FockState { registry: Arc::clone(&self.registry), photon_count: self.photon_count, terms }
    }

    /// `self / ||self||`; the zero state is returned unchanged.
    pub fn normalized(&self) -> FockState {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    /// `self + other`, both on the same registry and photon number.
    pub fn add(&self, other: &FockState) -> Result<FockState> {
        if !same_registry(&self.registry, &other.registry) {
            return Err(Error::RegistryMismatch);
        }
        if self.photon_count != other.photon_count {
            return Err(Error::PhotonMismatch(self.photon_count, other.photon_count));
        }
        FockState::from_terms(
            &self.registry,
            self.photon_count,
            self.terms.iter().chain(other.terms.iter()).cloned(),
        )
    }

    /// Applies `a†_mode`.
    pub fn create_photon(&self, mode: ModeId) -> Result<FockState> {
        self.registry.check(mode)?;
        let mut terms: Vec<(Occupation, Amplitude)> = self
            .terms
            .iter()
            .map(|(o, a)| {
                let n = o.count(mode) as f64;
                (o.with_photon(mode), a * (n + 1.0).sqrt())
            })
            .collect();
        terms.sort_by(|x, y| x.0.cmp(&y.0));
        Ok(FockState {
            registry: Arc::clone(&self.registry),
            photon_count: self.photon_count + 1,
            terms,
        })
    }

    /// Applies the annihilation operator `sum_m c_m a_m`.
    pub fn annihilate(&self, coeffs: &[(ModeId, Amplitude)]) -> Result<FockState> {
        for &(m, _) in coeffs {
            self.registry.check(m)?;
        }
        let count = self.photon_count.saturating_sub(1);
        if self.photon_count == 0 {
            return FockState::from_terms(&self.registry, 0, std::iter::empty());
        }
        let mut out: Vec<(Occupation, Amplitude)> = Vec::new();
        for (o, a) in &self.terms {
            for &(m, c) in coeffs {
                let n = o.count(m);
                if n == 0 || c.norm() == 0.0 {
                    continue;
                }
                let reduced = o.without_photon(m).expect("mode is occupied");
                out.push((reduced, a * c * (n as f64).sqrt()));
            }
        }
        FockState::from_terms(&self.registry, count, out)
    }

    /// Linear-optical evolution: every creation operator on an input mode of
    /// `map` is replaced by its image and the result is re-expanded.
    ///
    /// Photons on the map's input modes are expanded one at a time with
    /// merging after each photon. Images of each distinct input sub-occupation
    /// are cached, so repeated local patterns are expanded once.
    pub fn apply_linear(&self, map: &LinearMap) -> Result<FockState> {
        for &m in map.input_modes.iter().chain(map.output_modes.iter()) {
            self.registry.check(m)?;
        }
        let n_modes = self.registry.len();
        let mut column_of: Vec<Option<usize>> = vec![None; n_modes];
        for (c, m) in map.input_modes.iter().enumerate() {
            column_of[m.0] = Some(c);
        }
        let columns: Vec<Vec<(u16, Complex64)>> = (0..map.input_modes.len())
            .map(|c| {
                map.output_modes
                    .iter()
                    .enumerate()
                    .filter_map(|(r, q)| {
                        let u = map.matrix[(r, c)];
                        (u.norm() > 0.0).then_some((q.0 as u16, u))
                    })
                    .collect()
            })
            .collect();

        let mut cache: FxHashMap<Occupation, Vec<(Occupation, Complex64)>> = FxHashMap::default();
        let mut acc: FxHashMap<Occupation, Amplitude> =
            FxHashMap::with_capacity_and_hasher(self.terms.len(), Default::default());
        for (occ, amp) in &self.terms {
            let mut touched = Occupation::empty();
            let mut rest = Occupation::empty();
            for &m in &occ.0 {
                if column_of[m as usize].is_some() {
                    touched.0.push(m);
                } else {
                    rest.0.push(m);
                }
            }
            let image = cache
                .entry(touched)
                .or_insert_with_key(|t| expand_local(t, &column_of, &columns));
            for (img, c) in image.iter() {
                let (merged, factor) = rest.merge(img);
                *acc.entry(merged).or_default() += amp * c * factor;
            }
        }
        let mut terms: Vec<(Occupation, Amplitude)> =
            acc.into_iter().filter(|(_, a)| a.norm() >= PRUNE_EPS).collect();
        terms.sort_unstable_by(|x, y| x.0.cmp(&y.0));
        Ok(FockState { registry: Arc::clone(&self.registry), photon_count: self.photon_count, terms })
    }

    /// Keeps the kets for which `keep` holds and returns the squared norm of
    /// the dropped part.
    pub fn retain<F>(&self, keep: F) -> (FockState, f64)
    where
        F: Fn(&Occupation) -> bool,
    {
        let mut dropped = 0.0;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (o, a) in &self.terms {
            if keep(o) {
                terms.push((o.clone(), *a));
            } else {
                dropped += a.norm_sqr();
            }
        }
        let state = FockState { registry: Arc::clone(&self.registry), photon_count: self.photon_count, terms };
        (state, dropped)
    }

    /// `<self|other>`. States with different photon numbers are orthogonal.
    pub fn inner_product(&self, other: &FockState) -> Result<Amplitude> {
        if !same_registry(&self.registry, &other.registry) {
            return Err(Error::RegistryMismatch);
        }
        if self.photon_count != other.photon_count {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let (mut i, mut j) = (0, 0);
        let mut sum = Complex64::new(0.0, 0.0);
        while i < self.terms.len() && j < other.terms.len() {
            match self.terms[i].0.cmp(&other.terms[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.terms[i].1.conj() * other.terms[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(sum)
    }

    /// Projects the modes in `over` onto the occupation `fixed`.
    ///
    /// Returns the unnormalized conditional state on the remaining modes and
    /// its squared norm, the probability of observing `fixed` on `over`.
    pub fn marginal_project(&self, fixed: &Occupation, over: &BTreeSet<ModeId>) -> (FockState, f64) {
        let remaining = self.photon_count.saturating_sub(fixed.total());
        let mut terms = Vec::new();
        for (occ, amp) in &self.terms {
            let (inside, outside) = occ.split(over);
            if &inside == fixed {
                terms.push((outside, *amp));
            }
        }
        terms.sort_by(|x, y| x.0.cmp(&y.0));
        let state = FockState { registry: Arc::clone(&self.registry), photon_count: remaining, terms };
        let p = state.norm_sqr();
        (state, p)
    }

    /// Relabels every photon through `relabel`, moving the state onto `registry`.
    pub fn relabel<F>(&self, registry: &Arc<ModeRegistry>, relabel: F) -> Result<FockState>
    where
        F: Fn(ModeId) -> ModeId,
    {
        let terms = self.terms.iter().map(|(o, a)| (Occupation::from_modes(o.photons().map(&relabel)), *a));
        FockState::from_terms(registry, self.photon_count, terms)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<TermDump> = self
            .terms
            .iter()
            .map(|(o, a)| TermDump { occ: o.clone(), re: a.re, im: a.im })
            .collect();
        serde_json::to_value(StateDump { photon_count: self.photon_count, terms })
            .expect("state dump is always serializable")
    }

    pub fn from_json(registry: &Arc<ModeRegistry>, value: &serde_json::Value) -> Result<FockState> {
        let dump: StateDump =
            serde_json::from_value(value.clone()).map_err(|e| Error::Format(e.to_string()))?;
        FockState::from_terms(
            registry,
            dump.photon_count,
            dump.terms.into_iter().map(|t| (t.occ, Complex64::new(t.re, t.im))),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct StateDump {
    photon_count: usize,
    terms: Vec<TermDump>,
}

#[derive(Serialize, Deserialize)]
struct TermDump {
    occ: Occupation,
    re: f64,
    im: f64,
}

/// Expands the product of images of the photons in `touched`, returning
/// normalized-ket amplitudes over output modes.
fn expand_local(
    touched: &Occupation,
    column_of: &[Option<usize>],
    columns: &[Vec<(u16, Complex64)>],
) -> Vec<(Occupation, Complex64)> {
    // raw monomial coefficients
    let mut poly: BTreeMap<Occupation, Complex64> = BTreeMap::new();
    poly.insert(Occupation::empty(), Complex64::new(1.0, 0.0));
    for &p in &touched.0 {
        let col = &columns[column_of[p as usize].expect("touched photons are inputs")];
        let mut next: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (mono, c) in &poly {
            for &(q, u) in col {
                let mut m = mono.clone();
                m.insert_raw(q);
                *next.entry(m).or_default() += c * u;
            }
        }
        poly = next;
    }
    let input_norm = touched.factorial_product().sqrt();
    poly.into_iter()
        .filter_map(|(mono, c)| {
            let amp = c * (mono.factorial_product().sqrt() / input_norm);
            (amp.norm() >= PRUNE_EPS * 1e-3).then_some((mono, amp))
        })
        .collect()
}
