//! Decision-dependent distributions `D(θ)` over finite supports, and the
//! decoupled risk `J(θ₁; θ₂) = E_{Z~D(θ₂)} ℓ(θ₁; Z)` with its partial
//! gradient in the first slot.
//!
//! Every map here is a uniform distribution over `m` samples obtained by
//! moving each base sample according to the deployed parameters. Exact
//! operations enumerate that support in index order, so their floating
//! point results are reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::models::{LabelEncoding, Loss, MlpBceModel, Sample};
use crate::numkit::linalg::{axpy, norm_sq, scale};
use crate::numkit::RngStream;

/// The unshifted sample set `D°`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDataset {
    samples: Vec<Sample>,
    dim: usize,
    encoding: LabelEncoding,
}

impl BaseDataset {
    pub fn new(samples: Vec<Sample>, encoding: LabelEncoding) -> Result<Self> {
        let dim = samples.first().ok_or(Error::EmptyDataset)?.x.len();
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "samples must have at least one feature",
            ));
        }
        for z in &samples {
            check_dim(dim, z.x.len())?;
            encoding.check(z.y)?;
        }
        Ok(Self {
            samples,
            dim,
            encoding,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoding(&self) -> LabelEncoding {
        self.encoding
    }

    /// Relabels every sample into `encoding`.
    pub fn with_encoding(mut self, encoding: LabelEncoding) -> Self {
        let from = self.encoding;
        for z in &mut self.samples {
            z.y = from.convert(z.y, encoding);
        }
        self.encoding = encoding;
        self
    }

    /// Per-feature `(min, max)` over the samples.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for z in &self.samples {
            for (r, v) in ranges.iter_mut().zip(&z.x) {
                r.0 = r.0.min(*v);
                r.1 = r.1.max(*v);
            }
        }
        ranges
    }

    /// Rescales each feature onto `[0, 1]` with the given ranges; constant
    /// features map to zero.
    pub fn normalized_with(mut self, ranges: &[(f64, f64)]) -> Result<Self> {
        check_dim(self.dim, ranges.len())?;
        for z in &mut self.samples {
            for (v, (lo, hi)) in z.x.iter_mut().zip(ranges) {
                let span = hi - lo;
                *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            }
        }
        Ok(self)
    }
}

/// A decision-dependent distribution with finite, indexable support.
pub trait ShiftMap {
    fn base(&self) -> &BaseDataset;

    /// Length of the deployed parameter vector the map responds to.
    fn param_dim(&self) -> usize;

    /// Shift magnitude ε of the map.
    fn sensitivity(&self) -> f64;

    /// Support point `i` of `D(θ)`.
    fn shifted(&self, i: usize, theta: &[f64]) -> Result<Sample>;

    fn support_size(&self) -> usize {
        self.base().len()
    }

    /// A constant `κ` with `W1(D(θ), D(θ′)) ≤ κ‖θ - θ′‖₁` under the L1
    /// ground metric, when known in closed form.
    fn w1_constant(&self) -> Option<f64> {
        None
    }
}

/// `D(θ)` uniform on `{(x_i - ε θ, y_i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationShiftMap {
    base: BaseDataset,
    eps: f64,
}

impl LocationShiftMap {
    pub fn new(base: BaseDataset, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(
                "shift magnitude must be nonnegative",
            ));
        }
        Ok(Self { base, eps })
    }
}

impl ShiftMap for LocationShiftMap {
    fn base(&self) -> &BaseDataset {
        &self.base
    }

    fn param_dim(&self) -> usize {
        self.base.dim
    }

    fn sensitivity(&self) -> f64 {
        self.eps
    }

    fn w1_constant(&self) -> Option<f64> {
        Some(self.eps)
    }

    fn shifted(&self, i: usize, theta: &[f64]) -> Result<Sample> {
        check_dim(self.base.dim, theta.len())?;
        let z = &self.base.samples[i];
        let mut x = z.x.clone();
        axpy(-self.eps, theta, &mut x);
        Ok(Sample { x, y: z.y })
    }
}

/// Strategic response of each sample to the deployed network: one gradient
/// step against the classifier output, `x̄ - ε ∇ₓ f_θ(x̄)`. Labels are kept
/// and every sample moves, whatever its class.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseShiftMap {
    base: BaseDataset,
    eps: f64,
    model: MlpBceModel,
}

impl BestResponseShiftMap {
    pub fn new(base: BaseDataset, eps: f64, model: MlpBceModel) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(
                "shift magnitude must be nonnegative",
            ));
        }
        check_dim(model.layout().input(), base.dim)?;
        Ok(Self { base, eps, model })
    }

    pub fn model(&self) -> &MlpBceModel {
        &self.model
    }
}

impl ShiftMap for BestResponseShiftMap {
    fn base(&self) -> &BaseDataset {
        &self.base
    }

    fn param_dim(&self) -> usize {
        self.model.layout().param_count()
    }

    fn sensitivity(&self) -> f64 {
        self.eps
    }

    fn shifted(&self, i: usize, theta: &[f64]) -> Result<Sample> {
        let z = &self.base.samples[i];
        if self.eps == 0.0 {
            check_dim(self.param_dim(), theta.len())?;
            return Ok(z.clone());
        }
        let gx = self.model.grad_x(theta, &z.x)?;
        let mut x = z.x.clone();
        axpy(-self.eps, &gx, &mut x);
        Ok(Sample { x, y: z.y })
    }
}

fn check_compat<L: Loss + ?Sized, M: ShiftMap + ?Sized>(model: &L, map: &M) -> Result<()> {
    check_dim(model.feature_dim(), map.base().dim())
}

/// Full support of `D(θ)` in base index order.
pub fn support<M: ShiftMap + ?Sized>(map: &M, theta: &[f64]) -> Result<Vec<Sample>> {
    check_dim(map.param_dim(), theta.len())?;
    (0..map.support_size())
        .map(|i| map.shifted(i, theta))
        .collect()
}

/// `b` i.i.d. draws from `D(θ)`, uniform over support indices with
/// replacement.
pub fn draw_minibatch<M: ShiftMap + ?Sized>(
    map: &M,
    theta: &[f64],
    b: usize,
    rng: &mut RngStream,
) -> Result<Vec<Sample>> {
    if b == 0 {
        return Err(Error::InvalidArgument("batch size must be positive"));
    }
    check_dim(map.param_dim(), theta.len())?;
    let m = map.support_size();
    (0..b).map(|_| map.shifted(rng.index(m), theta)).collect()
}

/// Mean loss of `θ` over an explicit sample list.
pub fn mean_loss<L: Loss + ?Sized>(model: &L, theta: &[f64], samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for z in samples {
        acc += model.loss(theta, z)?;
    }
    Ok(acc / samples.len() as f64)
}

/// Mean gradient of `θ` over an explicit sample list.
pub fn mean_grad<L: Loss + ?Sized>(
    model: &L,
    theta: &[f64],
    samples: &[Sample],
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut g = vec![0.0; model.param_dim()];
    for z in samples {
        model.accumulate_grad(theta, z, 1.0, &mut g)?;
    }
    scale(1.0 / samples.len() as f64, &mut g);
    Ok(g)
}

/// `J(θ₁; θ₂)` by full enumeration of the θ₂-shifted support.
pub fn decoupled_risk_exact<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    theta1: &[f64],
    theta2: &[f64],
    map: &M,
) -> Result<f64> {
    check_compat(model, map)?;
    mean_loss(model, theta1, &support(map, theta2)?)
}

/// `∇J(θ₁; θ₂)`: the support is frozen at θ₂, only the first slot is
/// differentiated.
pub fn decoupled_grad_exact<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    theta1: &[f64],
    theta2: &[f64],
    map: &M,
) -> Result<Vec<f64>> {
    check_compat(model, map)?;
    mean_grad(model, theta1, &support(map, theta2)?)
}

/// Sample-mean estimate of `∇J(θ₁; θ₂)` from `n` draws of `D(θ₂)`.
pub fn decoupled_grad_mc<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    theta1: &[f64],
    theta2: &[f64],
    map: &M,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_compat(model, map)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive"));
    }
    check_dim(map.param_dim(), theta2.len())?;
    let m = map.support_size();
    let mut g = vec![0.0; model.param_dim()];
    for _ in 0..n {
        let z = map.shifted(rng.index(m), theta2)?;
        model.accumulate_grad(theta1, &z, 1.0, &mut g)?;
    }
    scale(1.0 / n as f64, &mut g);
    Ok(g)
}

/// Stationarity measure `‖∇J(θ; θ)‖²`.
pub fn sps_measure<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    theta: &[f64],
    map: &M,
) -> Result<f64> {
    Ok(norm_sq(&decoupled_grad_exact(model, theta, theta, map)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearSigmoidModel, MlpLayout};

    fn toy() -> BaseDataset {
        BaseDataset::new(
            vec![
                Sample::new(vec![1.0, 2.0, 3.0], 1),
                Sample::new(vec![-1.0, 0.5, 0.0], -1),
                Sample::new(vec![0.2, -0.3, 0.9], 1),
            ],
            LabelEncoding::PlusMinusOne,
        )
        .unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert_eq!(
            BaseDataset::new(vec![], LabelEncoding::ZeroOne),
            Err(Error::EmptyDataset)
        );
        let mixed = vec![Sample::new(vec![1.0], 1), Sample::new(vec![1.0, 2.0], 1)];
        assert!(BaseDataset::new(mixed, LabelEncoding::PlusMinusOne).is_err());
        let bad_label = vec![Sample::new(vec![1.0], 2)];
        assert!(BaseDataset::new(bad_label, LabelEncoding::PlusMinusOne).is_err());
    }

    #[test]
    fn zero_shift_is_identity() {
        let map = LocationShiftMap::new(toy(), 0.0).unwrap();
        assert_eq!(
            support(&map, &[5.0, -1.0, 2.0]).unwrap(),
            toy().into_samples()
        );
    }

    #[test]
    fn location_shift_moves_along_theta() {
        let map = LocationShiftMap::new(toy(), 2.0).unwrap();
        let sup = support(&map, &[1.0, 0.0, 0.0]).unwrap();
        for (s, b) in sup.iter().zip(toy().samples()) {
            assert_eq!(s.x[0], b.x[0] - 2.0);
            assert_eq!(&s.x[1..], &b.x[1..]);
            assert_eq!(s.y, b.y);
        }
    }

    #[test]
    fn best_response_with_zero_weights_is_identity() {
        let layout = MlpLayout::new(3, 4, 2).unwrap();
        let model = MlpBceModel::new(layout, 0.0).unwrap();
        let base = toy().with_encoding(LabelEncoding::ZeroOne);
        let map = BestResponseShiftMap::new(base.clone(), 10.0, model.clone()).unwrap();
        let theta = vec![0.0; model.param_dim()];
        assert_eq!(support(&map, &theta).unwrap(), base.into_samples());
    }

    #[test]
    fn single_sample_minibatch() {
        let one = BaseDataset::new(
            vec![Sample::new(vec![1.0, 1.0], -1)],
            LabelEncoding::PlusMinusOne,
        )
        .unwrap();
        let map = LocationShiftMap::new(one, 0.5).unwrap();
        let mut rng = RngStream::new(0);
        let batch = draw_minibatch(&map, &[2.0, 0.0], 5, &mut rng).unwrap();
        assert!(batch.iter().all(|z| z.x == vec![0.0, 1.0] && z.y == -1));
        assert!(draw_minibatch(&map, &[2.0, 0.0], 0, &mut rng).is_err());
    }

    #[test]
    fn risk_at_zero_is_one_half() {
        let model = LinearSigmoidModel::new(0.1, 1e-3, 3).unwrap();
        let map = LocationShiftMap::new(toy(), 0.7).unwrap();
        let r = decoupled_risk_exact(&model, &[0.0; 3], &[0.0; 3], &map).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn zero_features_give_regulariser_gradient() {
        let base = BaseDataset::new(
            vec![
                Sample::new(vec![0.0, 0.0], 1),
                Sample::new(vec![0.0, 0.0], -1),
            ],
            LabelEncoding::PlusMinusOne,
        )
        .unwrap();
        let map = LocationShiftMap::new(base, 0.0).unwrap();
        let model = LinearSigmoidModel::new(0.3, 0.25, 2).unwrap();
        let g = decoupled_grad_exact(&model, &[2.0, -4.0], &[1.0, 1.0], &map).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn mc_with_zero_variance_is_exact() {
        let base = BaseDataset::new(
            vec![Sample::new(vec![0.5, -0.25], 1); 7],
            LabelEncoding::PlusMinusOne,
        )
        .unwrap();
        let map = LocationShiftMap::new(base, 0.0).unwrap();
        let model = LinearSigmoidModel::new(0.8, 0.1, 2).unwrap();
        let theta = [0.3, 0.9];
        let exact = decoupled_grad_exact(&model, &theta, &theta, &map).unwrap();
        for n in [1, 3, 50] {
            let mut rng = RngStream::new(n as u64);
            let mc = decoupled_grad_mc(&model, &theta, &theta, &map, n, &mut rng).unwrap();
            for (a, b) in mc.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let map = LocationShiftMap::new(toy(), 1.0).unwrap();
        assert!(support(&map, &[1.0, 2.0]).is_err());
        let model = LinearSigmoidModel::new(0.1, 0.0, 2).unwrap();
        assert!(decoupled_risk_exact(&model, &[0.0; 2], &[0.0; 3], &map).is_err());
    }
}
