use super::pav::pav_blocks;
use super::ScoreSet;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EerMethod {
    /// Equal-error point of the ROC convex hull.
    #[default]
    ConvexHull,
    /// Linear interpolation between empirical threshold operating points.
    Interpolated,
}

pub fn eer(scores: &ScoreSet) -> Result<f64> {
    eer_with(scores, EerMethod::ConvexHull)
}

pub fn eer_with(scores: &ScoreSet, method: EerMethod) -> Result<f64> {
    match method {
        EerMethod::ConvexHull => rocch_eer(scores),
        EerMethod::Interpolated => interpolated_eer(scores),
    }
}

/// ROCCH vertices as `(p_fa, p_miss)`, from (1, 0) to (0, 1).
pub fn rocch(scores: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    let blocks = pav_blocks(scores)?;
    let nt = scores.tar.len() as f64;
    let nn = scores.non.len() as f64;
    let mut miss = 0usize;
    let mut fa: usize = scores.non.len();
    let mut pts = vec![(1.0, 0.0)];
    for b in &blocks {
        miss += b.n_tar;
        fa -= b.n_non;
        pts.push((fa as f64 / nn, miss as f64 / nt));
    }
    Ok(pts)
}

fn rocch_eer(scores: &ScoreSet) -> Result<f64> {
    let pts = rocch(scores)?;
    let mut eer = 0.0f64;
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 == x1 || y0 == y1 {
            continue;
        }
        // line through both vertices written as a*x + b*y = 1
        let det = x0 * y1 - x1 * y0;
        if det == 0.0 {
            continue;
        }
        let a = (y1 - y0) / det;
        let b = (x0 - x1) / det;
        eer = eer.max(1.0 / (a + b));
    }
    Ok(eer)
}

fn interpolated_eer(scores: &ScoreSet) -> Result<f64> {
    scores.validate()?;
    let mut thr: Vec<f64> = scores.tar.iter().chain(&scores.non).copied().collect();
    thr.sort_by(f64::total_cmp);
    thr.dedup();
    let nt = scores.tar.len() as f64;
    let nn = scores.non.len() as f64;
    // accept when score >= threshold; append a point above every score
    let mut pts: Vec<(f64, f64)> = thr
        .iter()
        .map(|&t| {
            let miss = scores.tar.iter().filter(|&&s| s < t).count() as f64 / nt;
            let fa = scores.non.iter().filter(|&&s| s >= t).count() as f64 / nn;
            (fa, miss)
        })
        .collect();
    pts.push((0.0, 1.0));
    for w in pts.windows(2) {
        let (fa0, m0) = w[0];
        let (fa1, m1) = w[1];
        let d0 = m0 - fa0;
        let d1 = m1 - fa1;
        if d0 == 0.0 {
            return Ok(m0);
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let t = -d0 / (d1 - d0);
            return Ok(m0 + t * (m1 - m0));
        }
    }
    Ok(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_is_zero() {
        assert_eq!(eer(&ScoreSet::new(vec![2.0, 3.0], vec![0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn constant_is_half() {
        assert_eq!(eer(&ScoreSet::new(vec![1.0; 4], vec![1.0; 7])).unwrap(), 0.5);
    }

    #[test]
    fn small_hand_case() {
        // hull passes through (0, 2/3) and (1, 0); crosses the diagonal at 0.4
        let s = ScoreSet::new(vec![0.0, 2.0, 4.0], vec![1.0, 3.0]);
        assert!((eer(&s).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn interpolated_never_below_hull() {
        let s = ScoreSet::new(vec![0.0, 2.0, 4.0, 1.5], vec![1.0, 3.0, -1.0]);
        let hull = eer(&s).unwrap();
        let naive = eer_with(&s, EerMethod::Interpolated).unwrap();
        assert!(naive >= hull - 1e-12, "{naive} < {hull}");
    }
}
