//! The masked residual GNN: input projection, a stack of square layers gated
//! channelwise by hop masks, and a linear classification head.

mod checkpoint;

use rand::Rng;

pub use checkpoint::Checkpoint;

use crate::error::{Error, Result};
use crate::process::{active_scope, MaskSample, VariationalPosterior};
use crate::tensor::{glorot_uniform, log_sum_exp, Matrix, Propagator, Tape, Var};

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 128;

/// Default activity threshold applied to relaxed masks.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Layer stack variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backbone {
    /// Residual layers gated by sampled masks, depth set by the sampled scope.
    #[default]
    Bna,
    /// Plain stacked graph convolutions.
    Gcn,
    /// Residual graph convolutions with every channel active.
    ResGcn,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::Bna => "bna",
            Backbone::Gcn => "gcn",
            Backbone::ResGcn => "resgcn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bna" => Some(Backbone::Bna),
            "gcn" => Some(Backbone::Gcn),
            "resgcn" | "res" => Some(Backbone::ResGcn),
            _ => None,
        }
    }
}

/// Masks used when predicting with a trained posterior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalMaskPolicy {
    /// Fresh relaxed samples, as in training.
    #[default]
    Sampled,
    /// Every channel of layer `l` scaled by the posterior-mean stick `π_l`.
    Expected,
    /// Relaxed samples rounded to {0, 1} at the activity threshold.
    Hard,
}

impl EvalMaskPolicy {
    pub fn name(self) -> &'static str {
        match self {
            EvalMaskPolicy::Sampled => "sampled",
            EvalMaskPolicy::Expected => "expected",
            EvalMaskPolicy::Hard => "hard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sampled" => Some(EvalMaskPolicy::Sampled),
            "expected" => Some(EvalMaskPolicy::Expected),
            "hard" => Some(EvalMaskPolicy::Hard),
            _ => None,
        }
    }
}

/// Network weights. `layers` holds `T` matrices for [`Backbone::Bna`] and the
/// fixed depth for the baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub w_in: Matrix,
    pub layers: Vec<Matrix>,
    pub w_out: Matrix,
}

impl ModelParams {
    /// Glorot-uniform initialization.
    pub fn init<R: Rng + ?Sized>(features: usize, hidden: usize, depth: usize, classes: usize, rng: &mut R) -> Self {
        let w_in = glorot_uniform(features, hidden, rng);
        let layers = (0..depth).map(|_| glorot_uniform(hidden, hidden, rng)).collect();
        let w_out = glorot_uniform(hidden, classes, rng);
        ModelParams { w_in, layers, w_out }
    }

    pub fn n_features(&self) -> usize {
        self.w_in.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_in.cols()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn n_classes(&self) -> usize {
        self.w_out.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let o = self.hidden();
        for (i, w) in self.layers.iter().enumerate() {
            if w.shape() != (o, o) {
                return Err(Error::Precondition(format!("layer {} has shape {:?}, expected ({o}, {o})", i + 1, w.shape())));
            }
        }
        if self.w_out.rows() != o {
            return Err(Error::Precondition(format!("output head has {} rows, expected {o}", self.w_out.rows())));
        }
        if !(self.w_in.is_finite() && self.w_out.is_finite() && self.layers.iter().all(Matrix::is_finite)) {
            return Err(Error::Precondition("non-finite weights".into()));
        }
        Ok(())
    }

    /// Every weight matrix in a fixed order: input, layers, output.
    pub fn matrices(&self) -> Vec<&Matrix> {
        std::iter::once(&self.w_in).chain(&self.layers).chain(std::iter::once(&self.w_out)).collect()
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        std::iter::once(&mut self.w_in)
            .chain(self.layers.iter_mut())
            .chain(std::iter::once(&mut self.w_out))
            .collect()
    }
}

/// Weights recorded on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub w_in: Var,
    pub layers: Vec<Var>,
    pub w_out: Var,
}

impl ParamVars {
    /// Records the weights as parameters when `trainable`, else as constants.
    pub fn record(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        let mut put = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        ParamVars {
            w_in: put(&params.w_in),
            layers: params.layers.iter().map(&mut put).collect(),
            w_out: put(&params.w_out),
        }
    }

    /// Same order as [`ModelParams::matrices`].
    pub fn vars(&self) -> Vec<Var> {
        std::iter::once(self.w_in).chain(self.layers.iter().copied()).chain(std::iter::once(self.w_out)).collect()
    }
}

/// Largest 1-based layer with a channel above `threshold` in the O×T mask.
pub fn neighborhood_scope(z: &Matrix, threshold: f64) -> usize {
    active_scope(z, threshold)
}

/// Which layers run and how they are gated.
#[derive(Clone, Copy, Debug)]
pub enum LayerPlan {
    /// Every stored layer, no residual, no mask.
    Gcn,
    /// Every stored layer, residual, all channels active.
    ResGcn,
    /// The first `depth` layers, residual, layer `l` gated by row `l - 1` of
    /// the T×O mask `z_rows`.
    Masked { z_rows: Var, depth: usize },
}

/// Inverted dropout applied in training mode.
pub struct Dropout<'r, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'r mut R,
}

fn apply_dropout<R: Rng + ?Sized>(tape: &mut Tape, h: Var, dropout: &mut Option<Dropout<'_, R>>) -> Result<Var> {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let (r, c) = tape.shape(h);
            let keep = 1.0 / (1.0 - d.rate);
            let data = (0..r * c).map(|_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { keep }).collect();
            tape.mul_const(h, Matrix::from_vec(r, c, data)?)
        }
        _ => Ok(h),
    }
}

/// One hidden layer: `ReLU(Â·dropout(h)·W)`, optionally gated columnwise by
/// the 1×O row `z`, plus `h` when `residual`.
pub fn forward_layer<R: Rng + ?Sized>(
    tape: &mut Tape,
    h_prev: Var,
    adjacency: &Propagator,
    w: Var,
    z: Option<Var>,
    residual: bool,
    dropout: &mut Option<Dropout<'_, R>>,
) -> Result<Var> {
    let h = apply_dropout(tape, h_prev, dropout)?;
    let agg = tape.propagate(adjacency, h)?;
    let lin = tape.matmul(agg, w)?;
    let mut out = tape.relu(lin);
    if let Some(z) = z {
        out = tape.mask_cols(out, z)?;
    }
    if residual {
        out = tape.add(out, h_prev)?;
    }
    Ok(out)
}

/// Tape handles of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// Projection output followed by each executed layer.
    pub hidden: Vec<Var>,
    pub logits: Var,
}

/// Records projection, layer stack and head.
pub fn record_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    adjacency: &Propagator,
    x: Var,
    params: &ParamVars,
    plan: LayerPlan,
    dropout: &mut Option<Dropout<'_, R>>,
) -> Result<ForwardVars> {
    let xd = apply_dropout(tape, x, dropout)?;
    let agg = tape.propagate(adjacency, xd)?;
    let lin = tape.matmul(agg, params.w_in)?;
    let mut h = tape.relu(lin);
    let mut hidden = vec![h];
    let (depth, residual) = match plan {
        LayerPlan::Gcn => (params.layers.len(), false),
        LayerPlan::ResGcn => (params.layers.len(), true),
        LayerPlan::Masked { depth, .. } => (depth, true),
    };
    if depth > params.layers.len() {
        return Err(Error::Precondition(format!(
            "scope {depth} exceeds the {} stored layers",
            params.layers.len()
        )));
    }
    for l in 0..depth {
        let z = match plan {
            LayerPlan::Masked { z_rows, .. } => Some(tape.select_row(z_rows, l)?),
            _ => None,
        };
        h = forward_layer(tape, h, adjacency, params.layers[l], z, residual, dropout)?;
        hidden.push(h);
    }
    let logits = tape.matmul(h, params.w_out)?;
    Ok(ForwardVars { hidden, logits })
}

/// Hidden states, logits and the mask of one evaluated forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `H_0` (projection output) through `H_{l_ns}`.
    pub hidden: Vec<Matrix>,
    pub logits: Matrix,
    pub mask: Option<MaskSample>,
}

/// Forward pass without gradients. `mask` is required for [`Backbone::Bna`]
/// and ignored otherwise.
pub fn forward_model<R: Rng + ?Sized>(
    adjacency: &Propagator,
    features: &Matrix,
    params: &ModelParams,
    backbone: Backbone,
    mask: Option<&MaskSample>,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let vars = ParamVars::record(&mut tape, params, false);
    let plan = match backbone {
        Backbone::Gcn => LayerPlan::Gcn,
        Backbone::ResGcn => LayerPlan::ResGcn,
        Backbone::Bna => {
            let m = mask.ok_or_else(|| Error::Precondition("bna forward needs a mask sample".into()))?;
            if m.z.cols() != params.depth() || m.z.rows() != params.hidden() {
                return Err(Error::Dimension {
                    op: "forward_model",
                    left: m.z.shape(),
                    right: (params.hidden(), params.depth()),
                });
            }
            LayerPlan::Masked {
                z_rows: tape.constant(m.z.transpose()),
                depth: m.scope,
            }
        }
    };
    let out = record_forward(&mut tape, adjacency, x, &vars, plan, &mut dropout)?;
    Ok(ForwardTrace {
        hidden: out.hidden.iter().map(|&v| tape.value(v).clone()).collect(),
        logits: tape.value(out.logits).clone(),
        mask: if backbone == Backbone::Bna { mask.cloned() } else { None },
    })
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let lse = log_sum_exp(logits.row(r));
        for v in out.row_mut(r) {
            *v = (*v - lse).exp();
        }
    }
    out
}

/// Mask used for one evaluation forward under `policy`.
pub fn eval_mask<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    policy: EvalMaskPolicy,
    channels: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<MaskSample> {
    match policy {
        EvalMaskPolicy::Sampled => MaskSample::draw(posterior, channels, threshold, rng),
        EvalMaskPolicy::Hard => {
            let mut s = MaskSample::draw(posterior, channels, threshold, rng)?;
            s.z = s.z.map(|v| if v > threshold { 1.0 } else { 0.0 });
            Ok(s)
        }
        EvalMaskPolicy::Expected => {
            let nu = posterior.mean_fractions();
            let pi = posterior.mean_sticks();
            let mut z = Matrix::zeros(channels, pi.len());
            for c in 0..channels {
                z.row_mut(c).copy_from_slice(&pi);
            }
            let scope = active_scope(&z, threshold);
            Ok(MaskSample { nu, pi, z, scope })
        }
    }
}

/// Monte-Carlo predictive distribution: the softmax averaged over `samples`
/// masks, dropout off. Baselines are deterministic and run once.
#[allow(clippy::too_many_arguments)]
pub fn predict<R: Rng + ?Sized>(
    adjacency: &Propagator,
    features: &Matrix,
    params: &ModelParams,
    backbone: Backbone,
    posterior: &VariationalPosterior,
    policy: EvalMaskPolicy,
    samples: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<Matrix> {
    if samples < 1 {
        return Err(Error::Precondition("predict needs at least one sample".into()));
    }
    if backbone != Backbone::Bna {
        let t = forward_model::<R>(adjacency, features, params, backbone, None, None)?;
        return Ok(softmax_rows(&t.logits));
    }
    let runs = if policy == EvalMaskPolicy::Expected { 1 } else { samples };
    let mut acc: Option<Matrix> = None;
    for _ in 0..runs {
        let mask = eval_mask(posterior, policy, params.hidden(), threshold, rng)?;
        let t = forward_model::<R>(adjacency, features, params, backbone, Some(&mask), None)?;
        let p = softmax_rows(&t.logits);
        match acc.as_mut() {
            None => acc = Some(p),
            Some(a) => a.add_assign(&p),
        }
    }
    Ok(acc.expect("runs >= 1").scale(1.0 / runs as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Splits};
    use crate::process::MaskNoise;
    use crate::rng::{substream, BnaRng};

    fn path_graph(n: usize, features: Matrix) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, edges, features, vec![None; n], Splits::default()).unwrap()
    }

    fn toy() -> (Graph, ModelParams) {
        let mut rng = substream(41, &[]);
        let g = crate::graph::synthetic::erdos_renyi_graph(12, 0.3, &mut rng);
        let x = glorot_uniform(12, 5, &mut rng);
        let g = Graph::new(12, g.edges().to_vec(), x, vec![None; 12], Splits::default()).unwrap();
        let p = ModelParams::init(5, 6, 4, 3, &mut rng);
        (g, p)
    }

    fn mask_with(z: Matrix, threshold: f64) -> MaskSample {
        let t = z.cols();
        MaskSample {
            nu: vec![0.5; t],
            pi: vec![0.5; t],
            scope: active_scope(&z, threshold),
            z,
        }
    }

    #[test]
    fn scope_examples() {
        assert_eq!(neighborhood_scope(&Matrix::zeros(4, 10), 0.5), 0);
        let mut z = Matrix::zeros(4, 10);
        z[(2, 0)] = 0.9;
        z[(1, 5)] = 0.7;
        z[(3, 7)] = 0.5;
        assert_eq!(neighborhood_scope(&z, 0.5), 6);
    }

    #[test]
    fn zero_mask_layer_is_identity() {
        let (g, p) = toy();
        let mut tape = Tape::new();
        let h = tape.constant(glorot_uniform(12, 6, &mut substream(1, &[])));
        let w = tape.constant(p.layers[0].clone());
        let z = tape.constant(Matrix::zeros(1, 6));
        let out = forward_layer::<BnaRng>(&mut tape, h, g.adjacency(), w, Some(z), true, &mut None).unwrap();
        assert_eq!(tape.value(out), tape.value(h));
    }

    #[test]
    fn all_ones_mask_matches_resgcn_bit_for_bit() {
        let (g, p) = toy();
        let mask = mask_with(Matrix::filled(6, 4, 1.0), 0.5);
        let bna = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::Bna, Some(&mask), None).unwrap();
        let res = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::ResGcn, None, None).unwrap();
        assert_eq!(bna.logits, res.logits);
        assert_eq!(bna.hidden, res.hidden);
    }

    #[test]
    fn zero_scope_uses_projection_only() {
        let (g, p) = toy();
        let mask = mask_with(Matrix::zeros(6, 4), 0.5);
        let t = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::Bna, Some(&mask), None).unwrap();
        assert_eq!(t.hidden.len(), 1);
        let ax = g.adjacency().matrix().spmm(g.features()).unwrap();
        let h = ax.matmul(&p.w_in).unwrap().map(|v| v.max(0.0));
        let want = h.matmul(&p.w_out).unwrap();
        assert!(t.logits.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn inactive_layers_beyond_scope_change_nothing() {
        let (g, p) = toy();
        let mut z = Matrix::zeros(6, 4);
        z[(0, 0)] = 0.8;
        z[(3, 1)] = 0.6;
        let mask = mask_with(z.clone(), 0.5);
        assert_eq!(mask.scope, 2);
        let short = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::Bna, Some(&mask), None).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let vars = ParamVars::record(&mut tape, &p, false);
        let z_rows = tape.constant(z.transpose());
        let full = record_forward::<BnaRng>(&mut tape, g.adjacency(), x, &vars, LayerPlan::Masked { z_rows, depth: 4 }, &mut None).unwrap();
        for l in 2..=4 {
            assert_eq!(tape.value(full.hidden[l]), &short.hidden[2]);
        }
        assert_eq!(tape.value(full.logits), &short.logits);
    }

    #[test]
    fn masked_column_passes_through_on_path() {
        // 3-node path, O = 2, z = (1, 0): the second channel is the residual
        // alone.
        let g = path_graph(3, Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]));
        let mut tape = Tape::new();
        let h0 = Matrix::from_rows(&[[0.3, -0.2], [1.0, 0.5], [-0.4, 0.8]]);
        let h = tape.constant(h0.clone());
        let w = tape.constant(Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]));
        let z = tape.constant(Matrix::row_vector(&[1.0, 0.0]));
        let out = forward_layer::<BnaRng>(&mut tape, h, g.adjacency(), w, Some(z), true, &mut None).unwrap();
        let out = tape.value(out);
        assert_eq!(out.column(1), h0.column(1));
        // First column by hand: Â on the path has 1/2 at the ends' self
        // loops, 1/3 at the middle, 1/sqrt(6) across edges.
        let s = 1.0 / 6f64.sqrt();
        let a = [[0.5, s, 0.0], [s, 1.0 / 3.0, s], [0.0, s, 0.5]];
        for i in 0..3 {
            let ah: [f64; 2] = std::array::from_fn(|c| (0..3).map(|j| a[i][j] * h0[(j, c)]).sum());
            let pre = ah[0] * 1.0 + ah[1] * -1.0;
            assert!((out[(i, 0)] - (pre.max(0.0) + h0[(i, 0)])).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_one_layer_matches_two_layer_formula() {
        // Two-node path: Â = [[1/2, 1/2], [1/2, 1/2]]. With W_out = I the
        // logits are ReLU(Â ReLU(Â X W0) W1).
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]);
        let g = path_graph(2, x);
        let w0 = Matrix::from_rows(&[[0.5, -1.0, 0.2], [0.1, 0.3, -0.4]]);
        let w1 = Matrix::from_rows(&[[1.0, 0.0], [-0.5, 2.0], [0.3, 0.7]]);
        let p = ModelParams {
            w_in: w0,
            layers: vec![w1],
            w_out: Matrix::identity(2),
        };
        // ÂX = [[2, 0.5], [2, 0.5]] on both rows.
        // ÂXW0 = [2*0.5+0.5*0.1, 2*-1+0.5*0.3, 2*0.2+0.5*-0.4] = [1.05, -1.85, 0.2]
        // ReLU -> [1.05, 0, 0.2]; Â keeps it; times W1 -> [1.05+0.06, 0.14]
        let t = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::Gcn, None, None).unwrap();
        let want = Matrix::from_rows(&[[1.11, 0.14], [1.11, 0.14]]);
        assert!(t.logits.max_abs_diff(&want) < 1e-12, "{:?}", t.logits);
    }

    #[test]
    fn bna_without_mask_is_rejected() {
        let (g, p) = toy();
        let err = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::Bna, None, None).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn predict_rows_sum_to_one_and_single_sample_matches() {
        let (g, p) = toy();
        let post = VariationalPosterior::new(&[3.0; 4], &[1.0; 4], 0.67).unwrap();
        let probs = predict(g.adjacency(), g.features(), &p, Backbone::Bna, &post, EvalMaskPolicy::Sampled, 7, 0.5, &mut substream(5, &[])).unwrap();
        for r in 0..probs.rows() {
            assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let one = predict(g.adjacency(), g.features(), &p, Backbone::Bna, &post, EvalMaskPolicy::Sampled, 1, 0.5, &mut substream(6, &[])).unwrap();
        let mask = eval_mask(&post, EvalMaskPolicy::Sampled, 6, 0.5, &mut substream(6, &[])).unwrap();
        let t = forward_model::<BnaRng>(g.adjacency(), g.features(), &p, Backbone::Bna, Some(&mask), None).unwrap();
        assert_eq!(one, softmax_rows(&t.logits));
        assert!(predict(g.adjacency(), g.features(), &p, Backbone::Bna, &post, EvalMaskPolicy::Sampled, 0, 0.5, &mut substream(6, &[])).is_err());
    }

    #[test]
    fn hard_and_expected_policies() {
        let post = VariationalPosterior::new(&[3.0, 0.5], &[1.0, 4.0], 0.67).unwrap();
        let hard = eval_mask(&post, EvalMaskPolicy::Hard, 5, 0.5, &mut substream(7, &[])).unwrap();
        assert!(hard.z.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        let exp = eval_mask(&post, EvalMaskPolicy::Expected, 5, 0.5, &mut substream(7, &[])).unwrap();
        assert_eq!(exp.z.column(1), vec![exp.pi[1]; 5]);
        assert_eq!(exp.scope, exp.pi.iter().rposition(|&p| p > 0.5).map_or(0, |l| l + 1));
    }

    #[test]
    fn scope_frequency_matches_product_formula() {
        // P(z > 0.5) = π for every τ, so P(scope = 2) = Π_{l ≥ 3} (1 - π_l)^O.
        let t = 10;
        let o = 128;
        let mut pi = vec![0.9, 0.9];
        pi.extend(std::iter::repeat(1e-5).take(t - 2));
        let nu: Vec<f64> = pi.iter().enumerate().map(|(l, &p)| if l == 0 { p } else { p / pi[l - 1] }).collect();
        let exact: f64 = (1.0f64 - 0.1f64.powi(o as i32)) * pi[2..].iter().map(|&p| (1.0 - p).powi(o as i32)).product::<f64>();
        let mut rng = substream(8, &[]);
        let draws = 1000;
        let mut hits = 0;
        for _ in 0..draws {
            let noise = MaskNoise::draw(t, o, &mut rng);
            let mut z = Matrix::zeros(o, t);
            for l in 0..t {
                for c in 0..o {
                    z[(c, l)] = crate::process::concrete_relaxed(pi[l], 0.05, noise.logistic[(l, c)]);
                }
            }
            hits += usize::from(neighborhood_scope(&z, 0.5) == 2);
        }
        let freq = hits as f64 / draws as f64;
        let se = (exact * (1.0 - exact) / draws as f64).sqrt();
        assert!(exact > 0.95 && freq > 0.95, "{freq} vs {exact}");
        assert!((freq - exact).abs() <= 4.0 * se + 1e-3, "{freq} vs {exact}");
        assert!(nu.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn averaging_reduces_variance_like_one_over_s() {
        let (g, p) = toy();
        let post = VariationalPosterior::new(&[1.0; 4], &[1.0; 4], 0.67).unwrap();
        let repeats = 200;
        let var_of = |s: usize, stream: u64| {
            let vals: Vec<f64> = (0..repeats)
                .map(|r| {
                    let probs = predict(g.adjacency(), g.features(), &p, Backbone::Bna, &post, EvalMaskPolicy::Sampled, s, 0.5, &mut substream(stream, &[r])).unwrap();
                    probs[(0, 0)]
                })
                .collect();
            let m = vals.iter().sum::<f64>() / repeats as f64;
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (repeats - 1) as f64
        };
        let ratio = var_of(1, 9) / var_of(20, 10);
        assert!((10.0..40.0).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn forward_is_deterministic_with_dropout_seed() {
        let (g, p) = toy();
        let run = || {
            let mut rng = substream(11, &[]);
            let d = Some(Dropout { rate: 0.5, rng: &mut rng });
            forward_model(g.adjacency(), g.features(), &p, Backbone::ResGcn, None, d).unwrap().logits
        };
        assert_eq!(run(), run());
    }
}
