use super::Action;
use crate::autodiff::Var;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeoLossMode {
    /// Wrap correction in both directions.
    #[default]
    Symmetric,
    /// Only the `+360` correction, as the loss is usually written.
    Literal,
}

fn wrap_shift(delta: f64, mode: GeoLossMode) -> f64 {
    let shifts: &[f64] = match mode {
        GeoLossMode::Symmetric => &[0.0, 360.0, -360.0],
        GeoLossMode::Literal => &[0.0, 360.0],
    };
    shifts
        .iter()
        .copied()
        .min_by(|a, b| (delta + a).abs().total_cmp(&(delta + b).abs()))
        .expect("non-empty")
}

/// Squared wrapped angle gap (degrees squared, times `angle_weight`) plus
/// squared normalized distance gap.
pub fn geo_loss(pred: Action, truth: Action, mode: GeoLossMode, angle_weight: f64) -> f64 {
    let delta = pred.deg - truth.deg;
    let angle = delta + wrap_shift(delta, mode);
    angle_weight * angle * angle + (pred.dis_norm - truth.dis_norm).powi(2)
}

/// [`geo_loss`] on a tape for a predicted `(dis_norm, deg)` pair. The wrap
/// branch is picked from the forward values, so the gradient is the one of
/// the active branch.
pub fn geo_loss_var<'t>(dis: Var<'t>, deg: Var<'t>, truth: Action, mode: GeoLossMode, angle_weight: f64) -> Result<Var<'t>> {
    let delta = deg.item() - truth.deg;
    let shift = wrap_shift(delta, mode);
    let angle = deg.add_scalar(shift - truth.deg).square().scale(angle_weight);
    angle.add(dis.add_scalar(-truth.dis_norm).square())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(dis: f64, deg: f64) -> Action {
        Action { dis_norm: dis, deg }
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(geo_loss(a(0.3, 1.0), a(0.3, 359.0), GeoLossMode::Literal, 1.0), 4.0);
        assert_eq!(geo_loss(a(0.3, 359.0), a(0.3, 1.0), GeoLossMode::Literal, 1.0), 128164.0);
        assert_eq!(geo_loss(a(0.3, 359.0), a(0.3, 1.0), GeoLossMode::Symmetric, 1.0), 4.0);
        assert_eq!(geo_loss(a(0.3, 1.0), a(0.3, 359.0), GeoLossMode::Symmetric, 1.0), 4.0);
        assert_eq!(geo_loss(a(0.5, 90.0), a(0.5, 90.0), GeoLossMode::Symmetric, 1.0), 0.0);
        assert_eq!(geo_loss(a(0.5, 90.0), a(0.25, 90.0), GeoLossMode::Symmetric, 1.0), 0.0625);
        assert_eq!(geo_loss(a(0.5, 10.0), a(0.5, 20.0), GeoLossMode::Symmetric, 0.5), 50.0);
    }
}
