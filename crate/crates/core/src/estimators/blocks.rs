use crate::data::{AdoptionTime, Covariate, Dataset, DerivedWeights};
use crate::error::{Error, Result};
use crate::estimators::{beta_index, Adjustment, EstimatorSpec, Level};
use crate::linalg::{weighted_least_squares, WeightedQr};
use crate::numeric::sum;

/// Relative size below which a centered covariate column counts as constant.
const DEGENERATE_TOL: f64 = 1e-10;

/// Rows of one independent least-squares problem.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub period: usize,
    /// Arm of a per-cell block; `None` for a pooled ANCOVA period.
    pub arm: Option<usize>,
    pub p: usize,
    /// `(design column, β index)` for every intercept column.
    pub beta_cols: Vec<(usize, usize)>,
    pub cluster: Vec<usize>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// Row-major `rows × p`.
    pub design: Vec<f64>,
}

impl Block {
    pub fn n_rows(&self) -> usize {
        self.v.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.design[r * self.p..(r + 1) * self.p]
    }

    fn singular(&self, periods: usize) -> Error {
        Error::SingularNormalEquations {
            period: self.period + 1,
            arm: self.arm.map(|a| AdoptionTime::from_arm(a, periods)),
        }
    }
}

/// Inverse Gram matrix of a block.
#[derive(Debug, Clone)]
pub(crate) enum Bread {
    /// Intercept-only block: `Σ v`.
    Scalar(f64),
    Qr(WeightedQr),
}

impl Bread {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Bread::Scalar(s) => vec![rhs[0] / s],
            Bread::Qr(qr) => qr.gram_solve(rhs),
        }
    }
}

pub(crate) struct Layout {
    pub blocks: Vec<Block>,
    pub dropped: Vec<(usize, Covariate)>,
}

/// Solve a block; returns coefficients and the bread.
pub(crate) fn solve_block(block: &Block, periods: usize) -> Result<(Vec<f64>, Bread)> {
    if block.p == 1 {
        let total = sum(block.v.iter().copied());
        if !(total > 0.0) {
            return Err(block.singular(periods));
        }
        let mean = sum(block.v.iter().zip(&block.y).map(|(v, y)| v * y)) / total;
        return Ok((vec![mean], Bread::Scalar(total)));
    }
    let (coef, qr) = weighted_least_squares(&block.design, &block.y, &block.v, block.p)
        .map_err(|_| block.singular(periods))?;
    Ok((coef, Bread::Qr(qr)))
}

/// Lay out every solve block of `spec` on `d`.
pub(crate) fn build_blocks(
    d: &Dataset,
    w: &DerivedWeights,
    spec: &EstimatorSpec,
) -> Result<Layout> {
    let frame = d.frame();
    spec.validate(frame)?;
    let sys = w.system();
    if sys.n_clusters() != d.n_clusters() || sys.periods() != d.periods() {
        return Err(Error::ShapeMismatch(
            "weights do not match the dataset".into(),
        ));
    }
    let periods = d.periods();
    let n = d.n_clusters();
    let arms = d.arms();
    let counts = d.arm_counts();
    if let Some(a) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyArm {
            period: 1,
            arm: AdoptionTime::from_arm(a, periods),
        });
    }

    // active terms and their centers per period
    let mut dropped = Vec::new();
    let mut active: Vec<Vec<(Covariate, f64)>> = Vec::with_capacity(periods);
    for j in 0..periods {
        let mut terms = Vec::new();
        for &t in &spec.covariates {
            let center = sys.center(t, j, spec.level.weighted_centering());
            let (mut raw_max, mut dev_max) = (0.0_f64, 0.0_f64);
            for i in 0..n {
                if t.is_individual() {
                    for k in 0..frame.cell(i, j).size {
                        let v = sys.individual_term(t, i, j, k);
                        raw_max = raw_max.max(v.abs());
                        dev_max = dev_max.max((v - center).abs());
                    }
                } else {
                    let v = sys.cell_term(t, i, j);
                    raw_max = raw_max.max(v.abs());
                    dev_max = dev_max.max((v - center).abs());
                }
            }
            if dev_max <= DEGENERATE_TOL * raw_max {
                // a constant π carries no information; any other constant term is an input error
                if t == Covariate::Pi {
                    dropped.push((j + 1, t));
                    continue;
                }
                return Err(Error::RankDeficientCovariates {
                    term: t.name(frame),
                    period: j + 1,
                });
            }
            terms.push((t, center));
        }
        active.push(terms);
    }

    if spec.adjustment != Adjustment::None {
        let p = active.iter().map(Vec::len).max().unwrap_or(0);
        for (a, &have) in counts.iter().enumerate() {
            if have < p + 2 {
                return Err(Error::TooFewClusters {
                    arm: AdoptionTime::from_arm(a, periods),
                    have,
                    need: p + 2,
                });
            }
        }
    }

    let ancova = spec.adjustment == Adjustment::Ancova;
    let mut blocks = Vec::new();
    let groups: Vec<(usize, Option<usize>)> = if ancova {
        (0..periods).map(|j| (j, None)).collect()
    } else {
        (0..=periods)
            .flat_map(|a| (0..periods).map(move |j| (j, Some(a))))
            .collect()
    };
    for (j, arm) in groups {
        let terms = &active[j];
        let n_int = if ancova { periods + 1 } else { 1 };
        let p = n_int + terms.len();
        let beta_cols = match arm {
            Some(a) => vec![(0, beta_index(periods, a, j))],
            None => (0..=periods)
                .map(|a| (a, beta_index(periods, a, j)))
                .collect(),
        };
        let mut block = Block {
            period: j,
            arm,
            p,
            beta_cols,
            cluster: Vec::new(),
            y: Vec::new(),
            v: Vec::new(),
            design: Vec::new(),
        };
        for i in 0..n {
            if arm.is_some_and(|a| a != arms[i]) {
                continue;
            }
            let push_row = |block: &mut Block, y: f64, v: f64, k: Option<usize>| {
                block.cluster.push(i);
                block.y.push(y);
                block.v.push(v);
                if ancova {
                    block
                        .design
                        .extend((0..=periods).map(|a| if a == arms[i] { 1.0 } else { 0.0 }));
                } else {
                    block.design.push(1.0);
                }
                for &(t, c) in terms {
                    let raw = match k {
                        Some(k) => sys.individual_term(t, i, j, k),
                        None => sys.cell_term(t, i, j),
                    };
                    block.design.push(raw - c);
                }
            };
            match spec.level {
                Level::Individual => {
                    let pi = sys.pi(i, j);
                    for (k, &y) in d.outcomes(i, j).iter().enumerate() {
                        push_row(&mut block, y, pi[k], Some(k));
                    }
                }
                Level::Average => push_row(&mut block, w.ybar(i, j), sys.pi_cell(i, j), None),
                Level::Total => push_row(&mut block, w.ytilde(i, j), 1.0, None),
            }
        }
        blocks.push(block);
    }
    Ok(Layout { blocks, dropped })
}
