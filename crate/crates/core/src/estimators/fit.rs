use crate::data::{Dataset, DerivedWeights};
use crate::error::Result;
use crate::estimators::{build_blocks, solve_block, DwateEstimate, EstimatorSpec};

/// Fit one estimator block by block.
pub fn fit(d: &Dataset, w: &DerivedWeights, spec: &EstimatorSpec) -> Result<DwateEstimate> {
    let layout = build_blocks(d, w, spec)?;
    let periods = d.periods();
    let mut beta = vec![f64::NAN; periods * (periods + 1)];
    let mut gamma = Vec::with_capacity(layout.blocks.len());
    let mut residuals = Vec::with_capacity(layout.blocks.len());
    for block in &layout.blocks {
        let (coef, _) = solve_block(block, periods)?;
        for &(col, idx) in &block.beta_cols {
            beta[idx] = coef[col];
        }
        gamma.push(coef[block.beta_cols.len()..].to_vec());
        residuals.push(
            (0..block.n_rows())
                .map(|r| {
                    let fitted: f64 = block.row(r).iter().zip(&coef).map(|(x, c)| x * c).sum();
                    block.y[r] - fitted
                })
                .collect(),
        );
    }
    Ok(DwateEstimate {
        spec: spec.clone(),
        scheme: w.scheme(),
        periods,
        beta,
        gamma,
        residuals,
        dropped: layout.dropped,
    })
}
