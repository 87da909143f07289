//! Spread-spectrum sensing: `Phi = H_Omega^T diag(m)`.
//!
//! Two numeric conventions coexist. The digital operator used by the solver
//! has orthonormal rows (entries +-1/sqrt(N)). The optical rows driving the
//! SLM are the same rows scaled by sqrt(N) (entries +-1), biased to {0,1}.
//! [`debias`] is the only place where the two meet.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hadamard::{self, hadamard_sign, HadamardOrder};

/// One compressive acquisition: row subset, Rademacher modulation and the
/// seed they were drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingPlan {
    order: HadamardOrder,
    omega: Vec<usize>,
    modulation: Vec<i8>,
    seed: u64,
    include_dc: bool,
}

impl SensingPlan {
    /// Assembles a plan from stored parts, checking every invariant.
    pub fn from_parts(
        order: HadamardOrder,
        omega: Vec<usize>,
        modulation: Vec<i8>,
        seed: u64,
        include_dc: bool,
    ) -> Result<Self> {
        let n = order.len();
        if modulation.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: modulation.len(),
            });
        }
        if modulation.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::invalid("modulation entries must be +1 or -1"));
        }
        check_count(omega.len(), n, include_dc)?;
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("omega must be strictly increasing"));
        }
        if let Some(&last) = omega.last() {
            if last >= n {
                return Err(Error::IndexOutOfRange { index: last, len: n });
            }
        }
        if !include_dc && omega.first() == Some(&0) {
            return Err(Error::invalid("omega contains the DC row but include_dc is false"));
        }
        Ok(SensingPlan {
            order,
            omega,
            modulation,
            seed,
            include_dc,
        })
    }

    pub fn order(&self) -> HadamardOrder {
        self.order
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn m_count(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn modulation(&self) -> &[i8] {
        &self.modulation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn include_dc(&self) -> bool {
        self.include_dc
    }

    pub fn is_full(&self) -> bool {
        self.m_count() == self.n()
    }

    /// Draws a fresh row subset out of this plan's rows, keeping the
    /// modulation. Used to emulate acquisitions with fewer patterns from one
    /// full-sampling acquisition.
    pub fn restrict(&self, m_count: usize, seed: u64, include_dc: bool) -> Result<SensingPlan> {
        let eligible: Vec<usize> = self
            .omega
            .iter()
            .copied()
            .filter(|&r| include_dc || r != 0)
            .collect();
        if m_count == 0 || m_count > eligible.len() {
            return Err(Error::MeasurementCount {
                m: m_count,
                n: self.n(),
                include_dc,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega: Vec<usize> = index::sample(&mut rng, eligible.len(), m_count)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        omega.sort_unstable();
        Ok(SensingPlan {
            order: self.order,
            omega,
            modulation: self.modulation.clone(),
            seed,
            include_dc,
        })
    }

    /// Optical (+-1) sign of entry `(i, j)` of `sqrt(N) * Phi`.
    pub fn optical_sign(&self, i: usize, j: usize) -> i8 {
        hadamard_sign(self.omega[i], j) * self.modulation[j]
    }
}

fn check_count(m: usize, n: usize, include_dc: bool) -> Result<()> {
    let max = if include_dc { n } else { n - 1 };
    if m == 0 || m > max {
        return Err(Error::MeasurementCount { m, n, include_dc });
    }
    Ok(())
}

/// Draws `m_count` distinct rows uniformly and an i.i.d. Rademacher
/// modulation, both as a pure function of `seed`.
pub fn make_plan(
    order: HadamardOrder,
    m_count: usize,
    seed: u64,
    include_dc: bool,
) -> Result<SensingPlan> {
    let n = order.len();
    check_count(m_count, n, include_dc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = usize::from(!include_dc);
    let mut omega: Vec<usize> = index::sample(&mut rng, n - first, m_count)
        .into_iter()
        .map(|i| i + first)
        .collect();
    omega.sort_unstable();
    let modulation = (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    Ok(SensingPlan {
        order,
        omega,
        modulation,
        seed,
        include_dc,
    })
}

fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}

/// `y = Phi s`, digital convention.
pub fn apply_phi(s: &[f64], plan: &SensingPlan) -> Result<Vec<f64>> {
    check_len(s.len(), plan.n())?;
    let mut buf: Vec<f64> = s
        .iter()
        .zip(&plan.modulation)
        .map(|(v, &m)| v * m as f64)
        .collect();
    hadamard::fwht_in_place(&mut buf)?;
    Ok(plan.omega.iter().map(|&i| buf[i]).collect())
}

/// `Phi^T y`, digital convention.
pub fn adjoint_phi(y: &[f64], plan: &SensingPlan) -> Result<Vec<f64>> {
    check_len(y.len(), plan.m_count())?;
    let mut buf = vec![0.0; plan.n()];
    for (&i, &v) in plan.omega.iter().zip(y) {
        buf[i] = v;
    }
    hadamard::fwht_in_place(&mut buf)?;
    buf.iter_mut()
        .zip(&plan.modulation)
        .for_each(|(v, &m)| *v *= m as f64);
    Ok(buf)
}

/// Inner products of `s` with the optical +-1 rows, i.e. `sqrt(N) * Phi s`.
pub fn optical_products(s: &[f64], plan: &SensingPlan) -> Result<Vec<f64>> {
    let root_n = (plan.n() as f64).sqrt();
    Ok(apply_phi(s, plan)?.into_iter().map(|v| v * root_n).collect())
}

/// Binary SLM patterns, one per selected row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlmPatternSet {
    patterns: Vec<Vec<u8>>,
}

impl SlmPatternSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn pattern(&self, i: usize) -> &[u8] {
        &self.patterns[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.patterns.iter().map(Vec::as_slice)
    }
}

/// Biases each optical row to `(row + 1) / 2`, which is exactly {0,1}.
pub fn make_patterns(plan: &SensingPlan) -> SlmPatternSet {
    let n = plan.n();
    let patterns = (0..plan.m_count())
        .map(|i| {
            (0..n)
                .map(|j| u8::from(plan.optical_sign(i, j) > 0))
                .collect()
        })
        .collect();
    SlmPatternSet { patterns }
}

/// Raw measurements for one CCD pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBundle {
    pub pixel_id: u32,
    /// Biased measurements, one per pattern, optical units.
    pub y_biased: Vec<f64>,
    /// Transparent-SLM measurement `<1, s>`.
    pub z_bar: Option<f64>,
    /// Cached `2 y_biased - z_bar`, optical units (not divided by sqrt(N)).
    pub y_debiased: Option<Vec<f64>>,
}

impl MeasurementBundle {
    pub fn new(pixel_id: u32, y_biased: Vec<f64>, z_bar: Option<f64>) -> Self {
        MeasurementBundle {
            pixel_id,
            y_biased,
            z_bar,
            y_debiased: None,
        }
    }

    /// Fills the cached unnormalized debiased vector.
    pub fn with_debiased(mut self) -> Result<Self> {
        let z = self.z_bar.ok_or(Error::MissingTransparent)?;
        self.y_debiased = Some(self.y_biased.iter().map(|&y| 2.0 * y - z).collect());
        Ok(self)
    }

    /// Keeps only the measurements belonging to `child`, whose rows must be
    /// a subset of `parent`'s.
    pub fn restrict(&self, parent: &SensingPlan, child: &SensingPlan) -> Result<Self> {
        check_len(self.y_biased.len(), parent.m_count())?;
        if parent.modulation != child.modulation || parent.order != child.order {
            return Err(Error::invalid("plans do not share a modulation"));
        }
        let positions = child
            .omega
            .iter()
            .map(|r| {
                parent
                    .omega
                    .binary_search(r)
                    .map_err(|_| Error::invalid(format!("row {r} is not measured by the parent plan")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MeasurementBundle {
            pixel_id: self.pixel_id,
            y_biased: positions.iter().map(|&p| self.y_biased[p]).collect(),
            z_bar: self.z_bar,
            y_debiased: self
                .y_debiased
                .as_ref()
                .map(|d| positions.iter().map(|&p| d[p]).collect()),
        })
    }
}

/// `(2 y_biased - z_bar) / sqrt(N)`: the digital-convention `Phi s`.
pub fn debias(bundle: &MeasurementBundle, plan: &SensingPlan) -> Result<Vec<f64>> {
    check_len(bundle.y_biased.len(), plan.m_count())?;
    let z = bundle.z_bar.ok_or(Error::MissingTransparent)?;
    let scale = plan.order().scale();
    Ok(bundle
        .y_biased
        .iter()
        .map(|&y| (2.0 * y - z) * scale)
        .collect())
}

/// Dense orthonormal basis, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBasis {
    n: usize,
    columns: Vec<f64>,
}

impl DenseBasis {
    pub fn from_columns(n: usize, columns: Vec<f64>) -> Result<Self> {
        check_len(columns.len(), n * n)?;
        Ok(DenseBasis { n, columns })
    }

    pub fn identity(n: usize) -> Self {
        let mut columns = vec![0.0; n * n];
        for i in 0..n {
            columns[i * n + i] = 1.0;
        }
        DenseBasis { n, columns }
    }

    pub fn hadamard(order: HadamardOrder) -> Self {
        let n = order.len();
        let s = order.scale();
        let columns = (0..n)
            .flat_map(|j| (0..n).map(move |i| hadamard_sign(i, j) as f64 * s))
            .collect();
        DenseBasis { n, columns }
    }

    /// Orthonormal multilevel Haar basis: the constant vector plus wavelets at
    /// every dyadic scale.
    pub fn haar(order: HadamardOrder) -> Self {
        let n = order.len();
        let mut columns = Vec::with_capacity(n * n);
        columns.extend(std::iter::repeat_n((n as f64).sqrt().recip(), n));
        let mut support = n;
        while support >= 2 {
            let amp = (support as f64).sqrt().recip();
            for k in 0..n / support {
                let start = k * support;
                columns.extend((0..n).map(|i| {
                    if i < start || i >= start + support {
                        0.0
                    } else if i < start + support / 2 {
                        amp
                    } else {
                        -amp
                    }
                }));
            }
            support /= 2;
        }
        DenseBasis { n, columns }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n..(j + 1) * self.n]
    }
}

/// `sqrt(N) max_{i,j} |<diag(m) Gamma_j, Psi_i>|`. Dense, `O(N^3)`.
pub fn coherence(
    sensing: &DenseBasis,
    sparsity: &DenseBasis,
    modulation: Option<&[i8]>,
) -> Result<f64> {
    let n = sensing.n();
    check_len(sparsity.n(), n)?;
    if let Some(m) = modulation {
        check_len(m.len(), n)?;
    }
    let mut worst = 0.0f64;
    let mut gamma = vec![0.0; n];
    for j in 0..n {
        gamma.copy_from_slice(sensing.column(j));
        if let Some(m) = modulation {
            gamma.iter_mut().zip(m).for_each(|(g, &s)| *g *= s as f64);
        }
        for i in 0..n {
            let ip = crate::linalg::dot(&gamma, sparsity.column(i)).abs();
            worst = worst.max(ip);
        }
    }
    Ok(worst * (n as f64).sqrt())
}
