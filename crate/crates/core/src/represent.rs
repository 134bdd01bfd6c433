//! Per-view graph convolution and vehicle state assembly.

use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geo::LocationEmbedding;
use crate::hexgraph::{Level, MultiviewGraph, ViewFeatures};

/// Whether the adjacency gets self-loops before the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GcnMode {
    /// `(A + I) X W`: a cell's own features reach its embedding.
    #[default]
    SelfLoops,
    /// `A X W` exactly, which drops a cell's own features.
    Literal,
}

/// Which views contribute to the state; disabled views embed as zeros.
pub type ViewMask = [bool; 3];

pub const ALL_VIEWS: ViewMask = [true, true, true];

pub fn gcn_param_name(level: Level) -> String {
    format!("gcn.{level}")
}

/// Adds one `m x d_g` weight per view.
pub fn init_gcn(store: &mut ParamStore, d_g: usize, rng: &mut impl Rng) -> Result<()> {
    for level in Level::ALL {
        let m = level.feature_dim();
        store.insert_normal(gcn_param_name(level), m, d_g, (1.0 / m as f64).sqrt(), rng)?;
    }
    Ok(())
}

pub fn gcn_dim(store: &ParamStore) -> Result<usize> {
    let id = store.require(&gcn_param_name(Level::Micro))?;
    Ok(store.value(id).cols())
}

fn propagate(a: &Tensor, x: &Tensor, mode: GcnMode) -> Result<Tensor> {
    if !a.is_matrix() || a.rows() != a.cols() || a.rows() != x.rows() {
        return Err(Error::shape("gcn", a.shape(), x.shape()));
    }
    let mut a = a.clone();
    if mode == GcnMode::SelfLoops {
        let n = a.rows();
        for i in 0..n {
            a.data_mut()[i * n + i] += 1.0;
        }
    }
    a.matmul(x)
}

/// Node embeddings of one view; differentiable in `w`.
pub fn gcn_view<'t>(a: &Tensor, x: &Tensor, w: Var<'t>, mode: GcnMode) -> Result<Var<'t>> {
    let ax = propagate(a, x, mode)?;
    w.tape().constant(ax).matmul(w)
}

/// Row `ego` of the propagated features, the only part of a view the ego
/// embedding depends on.
pub fn ego_aggregate(graph: &MultiviewGraph, features: &ViewFeatures, level: Level, ego: usize, mode: GcnMode) -> Result<Vec<f64>> {
    let grid = graph.grid(level);
    let x = features.get(level);
    if ego >= grid.len() {
        return Err(Error::OutOfDomain(format!("{level} ego cell {ego} not in graph")));
    }
    if x.rows() != grid.len() || x.cols() != level.feature_dim() {
        return Err(Error::shape("gcn", &[grid.len(), level.feature_dim()], x.shape()));
    }
    let mut row = vec![0.0; x.cols()];
    let own = std::iter::once(ego).filter(|_| mode == GcnMode::SelfLoops);
    for i in own.chain(grid.neighbors(ego).iter().copied()) {
        for (acc, v) in row.iter_mut().zip(x.row_slice(i)) {
            *acc += v;
        }
    }
    Ok(row)
}

/// Propagated ego rows for all three views.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoAggregates(pub [Vec<f64>; 3]);

impl EgoAggregates {
    pub fn compute(graph: &MultiviewGraph, features: &ViewFeatures, ego: [usize; 3], mode: GcnMode) -> Result<Self> {
        Ok(Self([
            ego_aggregate(graph, features, Level::Micro, ego[0], mode)?,
            ego_aggregate(graph, features, Level::Meso, ego[1], mode)?,
            ego_aggregate(graph, features, Level::Macro, ego[2], mode)?,
        ]))
    }

    pub fn zeros() -> Self {
        Self(Level::ALL.map(|l| vec![0.0; l.feature_dim()]))
    }
}

/// `Emb_G` from precomputed ego rows: per-view `row * W`, concatenated micro,
/// meso, macro. Masked-out views contribute zeros.
pub fn embed_aggregates<'t>(tape: &'t Tape, store: &ParamStore, agg: &EgoAggregates, mask: ViewMask) -> Result<Var<'t>> {
    let d_g = gcn_dim(store)?;
    let mut parts = Vec::with_capacity(3);
    for level in Level::ALL {
        let k = level.index();
        if mask[k] {
            let w = tape.param_named(store, &gcn_param_name(level))?;
            parts.push(tape.constant(Tensor::row(agg.0[k].clone())).matmul(w)?);
        } else {
            parts.push(tape.constant(Tensor::zeros(1, d_g)));
        }
    }
    tape.concat_cols(&parts)
}

/// `Emb_G` for the vehicle whose cell in each view is `ego`.
pub fn multiview_embed<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    graph: &MultiviewGraph,
    features: &ViewFeatures,
    ego: [usize; 3],
    mode: GcnMode,
    mask: ViewMask,
) -> Result<Var<'t>> {
    let agg = EgoAggregates::compute(graph, features, ego, mode)?;
    embed_aggregates(tape, store, &agg, mask)
}

/// `s_t`: graph embedding then location bits.
pub fn state_embed<'t>(emb_g: Var<'t>, loc: &LocationEmbedding) -> Result<Var<'t>> {
    let tape = emb_g.tape();
    tape.concat_cols(&[emb_g, tape.constant(Tensor::row(loc.as_slice().to_vec()))])
}

pub fn state_dim(d_g: usize, precision: usize) -> usize {
    3 * d_g + 5 * precision
}
