//! Direct evaluation of the kernel density label cost, pixel by pixel and
//! scribble by scribble, straight from its definition.

use flowseg::data_term::{FeatureImage, C_MISSING};
use flowseg::flow_consistency::ScribbleSet;

pub fn kde_oracle(scribbles: &ScribbleSet, features: &FeatureImage, sigma: f64) -> Vec<Vec<f64>> {
    let dims = features.dims();
    let n = scribbles.num_labels();
    let mut out = vec![vec![0.0; n]; dims.len()];
    for py in 0..dims.height {
        for px in 0..dims.width {
            let j_x = features.get(px, py);
            for label in 0..n {
                let seeds = scribbles.label(label);
                if seeds.is_empty() {
                    out[py * dims.width + px][label] = C_MISSING;
                    continue;
                }
                let mut nearest = f64::INFINITY;
                for s in seeds {
                    let d = ((px as f64 - s.x).powi(2) + (py as f64 - s.y).powi(2)).sqrt();
                    if d < nearest {
                        nearest = d;
                    }
                }
                let rho = if nearest > 1.0 { nearest } else { 1.0 };
                let mut density = 0.0;
                for s in seeds {
                    let spatial = (px as f64 - s.x).powi(2) + (py as f64 - s.y).powi(2);
                    let mut feat = 0.0;
                    for c in 0..j_x.len() {
                        feat += (j_x[c] - s.feature[c]).powi(2);
                    }
                    density += f64::exp(-spatial / (2.0 * rho * rho) - feat / (2.0 * sigma * sigma));
                }
                density /= seeds.len() as f64;
                out[py * dims.width + px][label] = -f64::ln(density.max(1e-300));
            }
        }
    }
    out
}
