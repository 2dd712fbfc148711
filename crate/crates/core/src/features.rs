//! Radial basis function features for the linear Q-function.
//!
//! Two layouts are provided. The temperature layout evaluates every
//! multivariate RBF of a 9-dimensional center grid on the down-sampled
//! temperature field and places the activations in the block of the chosen
//! action, all other blocks being zero. The IR layout featurizes each
//! (state, core) pair as a quadruple (core temperature, distance from the chip
//! center, distance from the hotspot, pairing ratio) and takes the tensor
//! product of one 1-D bank per element.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Mesh;

/// Lower end of the temperature normalization window, K.
pub const TEMP_LO: f64 = 330.0;
/// Upper end of the temperature normalization window, K.
pub const TEMP_HI: f64 = 360.0;

pub fn normalize_temp(t: f64) -> f64 {
    ((t - TEMP_LO) / (TEMP_HI - TEMP_LO)).clamp(0.0, 1.0)
}

/// How the squared distance inside the Gaussian is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceScaling {
    /// Plain squared Euclidean norm.
    #[default]
    Raw,
    /// Squared norm divided by the input dimension.
    PerDimMean,
}

/// Gaussian kernel `exp(−‖v−ω‖² / 2σ²) / √(2πσ²)`.
pub fn rbf(v: &[f64], center: &[f64], sigma: f64, scaling: DistanceScaling) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("RBF width must be positive, got {sigma}")));
    }
    if v.len() != center.len() {
        return Err(Error::Dimension { expected: center.len(), got: v.len() });
    }
    let sq: f64 = v.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(kernel(scale_sq(sq, v.len(), scaling), sigma))
}

fn scale_sq(sq: f64, dim: usize, scaling: DistanceScaling) -> f64 {
    match scaling {
        DistanceScaling::Raw => sq,
        DistanceScaling::PerDimMean => sq / dim as f64,
    }
}

#[inline]
fn kernel(sq: f64, sigma: f64) -> f64 {
    (-sq / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt()
}

/// One set of per-dimension centers with a common width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfBank {
    pub centers: Vec<f64>,
    pub sigma: f64,
}

impl RbfBank {
    pub fn new(mut centers: Vec<f64>, sigma: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("RBF bank needs at least one center".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("RBF width must be positive, got {sigma}")));
        }
        if centers.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("RBF centers must lie in [0, 1]".into()));
        }
        centers.sort_by(f64::total_cmp);
        Ok(Self { centers, sigma })
    }

    /// Default center placement and width for 2, 3 or 5 centers.
    pub fn standard(count: usize) -> Result<Self> {
        match count {
            2 => Self::new(vec![0.33, 0.66], 0.09),
            3 => Self::new(vec![0.25, 0.5, 0.75], 0.07),
            5 => Self::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], 0.05),
            n => Err(Error::Config(format!("no standard RBF bank with {n} centers (use 2, 3 or 5)"))),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Number of multivariate RBFs over a `dims`-dimensional center grid.
    pub fn grid_size(&self, dims: u32) -> usize {
        self.len().pow(dims)
    }

    /// 1-D activations of a scalar input.
    pub fn activations(&self, v: f64) -> Vec<f64> {
        self.centers.iter().map(|c| kernel((v - c) * (v - c), self.sigma)).collect()
    }
}

/// Options shared by both feature layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub scaling: DistanceScaling,
    /// Rescale activations to sum to one (a normalized RBF network).
    pub normalize: bool,
}

/// A sparse feature vector whose nonzero entries form one contiguous segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    offset: usize,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(dim: usize, offset: usize, values: Vec<f64>) -> Result<Self> {
        if offset + values.len() > dim {
            return Err(Error::Dimension { expected: dim, got: offset + values.len() });
        }
        Ok(Self { dim, offset, values })
    }

    pub fn dense(values: Vec<f64>) -> Self {
        Self { dim: values.len(), offset: 0, values }
    }

    pub fn one_hot(index: usize, dim: usize) -> Self {
        assert!(index < dim, "one-hot index {index} out of {dim}");
        Self { dim, offset: index, values: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(index, value)` pairs of the stored segment.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.offset + i, v))
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        out[self.offset..self.offset + self.values.len()].copy_from_slice(&self.values);
        out
    }

    pub fn dot(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: theta.len() });
        }
        Ok(self.dot_unchecked(theta))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, theta: &[f64]) -> f64 {
        let seg = &theta[self.offset..self.offset + self.values.len()];
        seg.iter().zip(&self.values).map(|(a, b)| a * b).sum()
    }

    /// `theta += scale · self`.
    pub fn add_scaled_to(&self, theta: &mut [f64], scale: f64) {
        let seg = &mut theta[self.offset..self.offset + self.values.len()];
        for (t, v) in seg.iter_mut().zip(&self.values) {
            *t += scale * v;
        }
    }
}

/// State-only activations of the temperature layout: one value per point of
/// the `x⁹` center grid, enumerated with the first grid dimension varying
/// slowest.
pub fn temperature_rbfs(state9: &[f64; 9], bank: &RbfBank, opts: FeatureOptions) -> Vec<f64> {
    let x = bank.len();
    let g = bank.grid_size(9);
    // squared distance contribution of dimension d to center c
    let mut parts = [[0.0f64; 8]; 9];
    let mut wide = Vec::new();
    let use_wide = x > 8;
    if use_wide {
        wide = vec![vec![0.0; x]; 9];
    }
    for d in 0..9 {
        for (c, center) in bank.centers.iter().enumerate() {
            let diff = state9[d] - center;
            if use_wide {
                wide[d][c] = diff * diff;
            } else {
                parts[d][c] = diff * diff;
            }
        }
    }
    let part = |d: usize, c: usize| if use_wide { wide[d][c] } else { parts[d][c] };
    let mut out = Vec::with_capacity(g);
    let mut idx = [0usize; 9];
    for _ in 0..g {
        let sq: f64 = (0..9).map(|d| part(d, idx[d])).sum();
        out.push(kernel(scale_sq(sq, 9, opts.scaling), bank.sigma));
        for d in (0..9).rev() {
            idx[d] += 1;
            if idx[d] < x {
                break;
            }
            idx[d] = 0;
        }
    }
    if opts.normalize {
        normalize_in_place(&mut out);
    }
    out
}

fn normalize_in_place(values: &mut [f64]) {
    let sum: f64 = values.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for v in values.iter_mut() {
            *v /= sum;
        }
    } else {
        let uniform = 1.0 / values.len() as f64;
        values.iter_mut().for_each(|v| *v = uniform);
    }
}

/// Places state activations into the block of `action` out of `action_count`.
pub fn block_features(state_rbfs: &[f64], action: usize, action_count: usize) -> Result<FeatureVector> {
    if action >= action_count {
        return Err(Error::OutOfRange { index: action, len: action_count });
    }
    let g = state_rbfs.len();
    FeatureVector::new(g * action_count, action * g, state_rbfs.to_vec())
}

/// Temperature-layout features of `(state, action)`.
pub fn dvfs_features(
    state9: &[f64; 9],
    action: usize,
    bank: &RbfBank,
    action_count: usize,
    opts: FeatureOptions,
) -> Result<FeatureVector> {
    block_features(&temperature_rbfs(state9, bank, opts), action, action_count)
}

/// Normalized IR quadruple of one candidate core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrQuadruple {
    pub temperature: f64,
    pub center_distance: f64,
    pub hotspot_distance: f64,
    pub pairing_ratio: f64,
}

impl IrQuadruple {
    /// Builds the quadruple for idle core `core` from the current per-core
    /// temperatures and the cores of unpaired running tasks.
    pub fn compute(mesh: &Mesh, temps: &[f64], core: usize, partner_cores: &[usize]) -> Result<Self> {
        mesh.check(core)?;
        if temps.len() != mesh.len() {
            return Err(Error::Dimension { expected: mesh.len(), got: temps.len() });
        }
        let hotspot = hottest(temps);
        let diag = mesh.diagonal();
        Ok(Self {
            temperature: normalize_temp(temps[core]),
            center_distance: mesh.dist_from_point(core, mesh.center())? / diag,
            hotspot_distance: mesh.dist_from_point(core, mesh.position(hotspot))? / diag,
            pairing_ratio: pairing_ratio(mesh, core, partner_cores, hotspot)?,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.temperature, self.center_distance, self.hotspot_distance, self.pairing_ratio]
    }
}

fn hottest(temps: &[f64]) -> usize {
    let mut best = 0;
    for (i, &t) in temps.iter().enumerate() {
        if t > temps[best] {
            best = i;
        }
    }
    best
}

/// Fraction of xy routes from `core` to the candidate partners' cores that
/// cross the hotspot's router; zero without candidates.
pub fn pairing_ratio(mesh: &Mesh, core: usize, partner_cores: &[usize], hotspot: usize) -> Result<f64> {
    if partner_cores.is_empty() {
        return Ok(0.0);
    }
    let mut crossing = 0usize;
    for &p in partner_cores {
        if mesh.xy_route(core, p)?.contains(hotspot) {
            crossing += 1;
        }
    }
    Ok(crossing as f64 / partner_cores.len() as f64)
}

/// Tensor product of the four per-element activation vectors, flattened with
/// the temperature element varying slowest.
pub fn ir_features(quad: &IrQuadruple, banks: &[RbfBank; 4], opts: FeatureOptions) -> FeatureVector {
    let mut acts: Vec<Vec<f64>> = quad
        .as_array()
        .iter()
        .zip(banks)
        .map(|(&v, bank)| {
            let mut a = bank.activations(v);
            if opts.normalize {
                normalize_in_place(&mut a);
            }
            a
        })
        .collect();
    if let DistanceScaling::PerDimMean = opts.scaling {
        // A product of 1-D Gaussians carries the 4-D norm; rescale each factor's
        // exponent by 1/4 so the product sees the mean squared distance.
        for (a, (&v, bank)) in acts.iter_mut().zip(quad.as_array().iter().zip(banks)) {
            *a = bank
                .centers
                .iter()
                .map(|c| kernel((v - c) * (v - c) / 4.0, bank.sigma))
                .collect();
            if opts.normalize {
                normalize_in_place(a);
            }
        }
    }
    let mut out = vec![1.0];
    for a in &acts {
        let mut next = Vec::with_capacity(out.len() * a.len());
        for &o in &out {
            for &v in a {
                next.push(o * v);
            }
        }
        out = next;
    }
    FeatureVector::dense(out)
}

/// Parameter count of the IR layout.
pub fn ir_dimension(banks: &[RbfBank; 4]) -> usize {
    banks.iter().map(RbfBank::len).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_peak_tail_symmetry() {
        let peak = rbf(&[0.4, 0.2], &[0.4, 0.2], 0.09, DistanceScaling::Raw).unwrap();
        assert!((peak - 1.0 / (2.0 * std::f64::consts::PI * 0.09f64.powi(2)).sqrt()).abs() < 1e-12);
        let far = rbf(&[40.0, 0.2], &[0.4, 0.2], 0.09, DistanceScaling::Raw).unwrap();
        assert_eq!(far, 0.0);
        let a = rbf(&[0.1, 0.7], &[0.33, 0.66], 0.07, DistanceScaling::Raw).unwrap();
        let b = rbf(&[0.33, 0.66], &[0.1, 0.7], 0.07, DistanceScaling::Raw).unwrap();
        assert_eq!(a, b);
        assert!(rbf(&[0.0], &[0.0], 0.0, DistanceScaling::Raw).is_err());
        assert!(rbf(&[0.0], &[0.0], -1.0, DistanceScaling::Raw).is_err());
    }

    #[test]
    fn rbf_strictly_decreasing_in_distance() {
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let v = rbf(&[0.5 + i as f64 * 0.01], &[0.5], 0.09, DistanceScaling::Raw).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn standard_banks() {
        let b2 = RbfBank::standard(2).unwrap();
        assert_eq!((b2.centers.clone(), b2.sigma), (vec![0.33, 0.66], 0.09));
        let b3 = RbfBank::standard(3).unwrap();
        assert_eq!((b3.centers.clone(), b3.sigma), (vec![0.25, 0.5, 0.75], 0.07));
        let b5 = RbfBank::standard(5).unwrap();
        assert_eq!((b5.centers.clone(), b5.sigma), (vec![0.0, 0.25, 0.5, 0.75, 1.0], 0.05));
        assert!(RbfBank::standard(4).is_err());
        assert_eq!(b2.grid_size(9), 512);
        assert_eq!(b3.grid_size(9), 19683);
        assert_eq!(b5.grid_size(9), 1953125);
    }

    #[test]
    fn dvfs_block_layout() {
        let bank = RbfBank::standard(2).unwrap();
        let state = [0.3, 0.4, 0.2, 0.5, 0.6, 0.1, 0.3, 0.3, 0.35];
        let opts = FeatureOptions::default();
        // 5x5 mesh with 4 levels: 100 actions
        let f = dvfs_features(&state, 7, &bank, 100, opts).unwrap();
        assert_eq!(f.dim(), 51200);
        assert_eq!(f.nonzero_count(), 512);
        let g = dvfs_features(&state, 8, &bank, 100, opts).unwrap();
        let fi: Vec<usize> = f.entries().filter(|e| e.1 != 0.0).map(|e| e.0).collect();
        let gi: Vec<usize> = g.entries().filter(|e| e.1 != 0.0).map(|e| e.0).collect();
        assert!(fi.iter().all(|i| !gi.contains(i)));
        assert!(fi.iter().all(|&i| (7 * 512..8 * 512).contains(&i)));
        assert!(dvfs_features(&state, 100, &bank, 100, opts).is_err());
    }

    #[test]
    fn temperature_rbfs_match_direct_kernel() {
        let bank = RbfBank::standard(3).unwrap();
        let state = [0.3, 0.4, 0.2, 0.5, 0.6, 0.1, 0.3, 0.3, 0.35];
        for scaling in [DistanceScaling::Raw, DistanceScaling::PerDimMean] {
            let opts = FeatureOptions { scaling, normalize: false };
            let acts = temperature_rbfs(&state, &bank, opts);
            assert_eq!(acts.len(), 19683);
            // grid point with multi-index (2,0,1,1,2,0,0,1,2)
            let idx = [2, 0, 1, 1, 2, 0, 0, 1, 2];
            let flat = idx.iter().fold(0, |acc, &i| acc * 3 + i);
            let center: Vec<f64> = idx.iter().map(|&i| bank.centers[i]).collect();
            let direct = rbf(&state, &center, bank.sigma, scaling).unwrap();
            assert!((acts[flat] - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        }
    }

    #[test]
    fn normalized_features_sum_to_one() {
        let bank = RbfBank::standard(2).unwrap();
        let opts = FeatureOptions { scaling: DistanceScaling::Raw, normalize: true };
        let acts = temperature_rbfs(&[0.0; 9], &bank, opts);
        assert!((acts.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let quad = IrQuadruple { temperature: 0.2, center_distance: 0.5, hotspot_distance: 0.9, pairing_ratio: 0.0 };
        let banks = [bank.clone(), bank.clone(), bank.clone(), bank];
        let f = ir_features(&quad, &banks, opts);
        assert!((f.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ir_dimensions() {
        for (x, expected) in [(2, 16), (3, 81), (5, 625)] {
            let bank = RbfBank::standard(x).unwrap();
            let banks = [bank.clone(), bank.clone(), bank.clone(), bank];
            assert_eq!(ir_dimension(&banks), expected);
            let quad = IrQuadruple { temperature: 0.5, center_distance: 0.2, hotspot_distance: 0.4, pairing_ratio: 1.0 };
            assert_eq!(ir_features(&quad, &banks, FeatureOptions::default()).dim(), expected);
        }
    }

    #[test]
    fn ir_tensor_product_equals_4d_kernel_product() {
        let bank = RbfBank::standard(3).unwrap();
        let banks = [bank.clone(), bank.clone(), bank.clone(), bank.clone()];
        let quad = IrQuadruple { temperature: 0.42, center_distance: 0.17, hotspot_distance: 0.6, pairing_ratio: 0.5 };
        let f = ir_features(&quad, &banks, FeatureOptions::default());
        let v = quad.as_array();
        // entry (i,j,k,l) is the product of four 1-D kernels
        let (i, j, k, l) = (1, 0, 2, 1);
        let expect: f64 = [i, j, k, l]
            .iter()
            .zip(v)
            .map(|(&c, x)| rbf(&[x], &[bank.centers[c]], bank.sigma, DistanceScaling::Raw).unwrap())
            .product();
        let got = f.values()[((i * 3 + j) * 3 + k) * 3 + l];
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn identical_quadruples_identical_features() {
        let mesh = Mesh::new(4, 4).unwrap();
        let mut temps = vec![335.0; 16];
        temps[0] = 345.0;
        // tiles 1 and 4 mirror each other about the diagonal through the hotspot
        let a = IrQuadruple::compute(&mesh, &temps, 1, &[]).unwrap();
        let b = IrQuadruple::compute(&mesh, &temps, 4, &[]).unwrap();
        assert_eq!(a, b);
        let bank = RbfBank::standard(2).unwrap();
        let banks = [bank.clone(), bank.clone(), bank.clone(), bank];
        let opts = FeatureOptions::default();
        assert_eq!(ir_features(&a, &banks, opts), ir_features(&b, &banks, opts));
        let c = IrQuadruple::compute(&mesh, &temps, 5, &[]).unwrap();
        assert_ne!(ir_features(&a, &banks, opts), ir_features(&c, &banks, opts));
    }

    #[test]
    fn pairing_ratio_cases() {
        let mesh = Mesh::new(4, 4).unwrap();
        assert_eq!(pairing_ratio(&mesh, 0, &[], 5).unwrap(), 0.0);
        // from tile 0: route to 3 runs along row 0; route to 12 runs along column 0
        assert_eq!(pairing_ratio(&mesh, 0, &[2, 3], 1).unwrap(), 1.0);
        assert_eq!(pairing_ratio(&mesh, 0, &[3, 12], 1).unwrap(), 0.5);
        assert_eq!(pairing_ratio(&mesh, 0, &[12], 1).unwrap(), 0.0);
    }

    #[test]
    fn quadruple_in_unit_box() {
        let mesh = Mesh::new(5, 5).unwrap();
        let temps: Vec<f64> = (0..25).map(|i| 320.0 + 2.0 * i as f64).collect();
        for core in 0..25 {
            let q = IrQuadruple::compute(&mesh, &temps, core, &[3, 7, 22]).unwrap();
            assert!(q.as_array().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(normalize_temp(300.0), 0.0);
        assert_eq!(normalize_temp(400.0), 1.0);
        assert!((normalize_temp(345.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bank_activation_sum_is_continuous() {
        // finite-difference continuity: no jumps larger than the local slope allows
        for x in [2, 3, 5] {
            let bank = RbfBank::standard(x).unwrap();
            let h = 1e-6;
            let mut v = 0.0;
            while v < 1.0 {
                let s0: f64 = bank.activations(v).iter().sum();
                let s1: f64 = bank.activations(v + h).iter().sum();
                let s2: f64 = bank.activations(v + 2.0 * h).iter().sum();
                let jump = (s1 - s0).abs();
                let slope_bound = (s2 - s0).abs() + 1e-9;
                assert!(jump <= slope_bound * 2.0 + 1e-9, "jump at {v}");
                v += 0.01;
            }
        }
    }
}
