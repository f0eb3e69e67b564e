//! Alignment and reward-quality metrics, plus CSV/SVG emitters.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::data::Demonstration;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::numcore::{squared_distance, Matrix};
use crate::reward::RewardModel;

/// Index of the row of `s_j` nearest to `query` (first on ties).
pub fn hard_nearest_neighbor<S: AsRef<[f64]>>(query: &[f64], s_j: &[S]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, row) in s_j.iter().enumerate() {
        let d = squared_distance(query, row.as_ref());
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Kendall tau-b between two equally long series. Returns 0 when either
/// series is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]);
            let dy = y[i].partial_cmp(&y[j]);
            match (dx, dy) {
                (Some(std::cmp::Ordering::Equal), Some(std::cmp::Ordering::Equal)) => {
                    ties_x += 1;
                    ties_y += 1;
                }
                (Some(std::cmp::Ordering::Equal), _) => ties_x += 1,
                (_, Some(std::cmp::Ordering::Equal)) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2) as i64;
    let denom = (((pairs - ties_x) * (pairs - ties_y)) as f64).sqrt();
    if denom == 0.0 {
        log::warn!("kendall tau undefined for a constant series; reporting 0");
        return Ok(0.0);
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Matches every frame of `s_i` to its nearest frame in `s_j` and rank
/// correlates source and matched indices.
pub fn kendall_tau_alignment<S: AsRef<[f64]>>(s_i: &[S], s_j: &[S]) -> Result<f64> {
    if s_i.len() < 2 || s_j.is_empty() {
        return Err(Error::contract("alignment needs at least 2 source frames and 1 target frame"));
    }
    let source: Vec<f64> = (0..s_i.len()).map(|n| n as f64).collect();
    let matched: Vec<f64> = s_i.iter().map(|q| hard_nearest_neighbor(q.as_ref(), s_j) as f64).collect();
    kendall_tau_b(&source, &matched)
}

fn rows(m: &Matrix) -> Vec<&[f64]> {
    m.iter_rows().collect()
}

/// Mean alignment tau over the listed demo index pairs.
pub fn mean_alignment_tau(enc: &EncoderParams, demos: &[Demonstration], pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::contract("alignment needs at least one demo pair"));
    }
    let mut cache: Vec<Option<Matrix>> = vec![None; demos.len()];
    let mut total = 0.0;
    for &(i, j) in pairs {
        for k in [i, j] {
            let demo = demos
                .get(k)
                .ok_or_else(|| Error::contract(format!("pair index {k} out of range ({} demos)", demos.len())))?;
            if cache[k].is_none() {
                cache[k] = Some(enc.encode_frames(demo.frames())?);
            }
        }
        let (a, b) = (cache[i].as_ref().unwrap(), cache[j].as_ref().unwrap());
        total += kendall_tau_alignment(&rows(a), &rows(b))?;
    }
    Ok(total / pairs.len() as f64)
}

/// Every unordered pair `(i, j)` with `i < j`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation. A constant series yields 0 with a warning.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::contract("rank correlation needs at least 2 points"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numeric("rank correlation of a NaN series".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        log::warn!("spearman correlation undefined for a constant series; reporting 0");
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-frame learned reward along a demonstration.
pub fn reward_progression(rm: &RewardModel, demo: &Demonstration) -> Result<Vec<f64>> {
    rm.rewards(demo.frames())
}

/// Spearman correlation between per-frame reward and frame index.
pub fn progress_correlation(rm: &RewardModel, demo: &Demonstration) -> Result<f64> {
    let rewards = reward_progression(rm, demo)?;
    let index: Vec<f64> = (0..rewards.len()).map(|n| n as f64).collect();
    spearman(&rewards, &index)
}

pub fn write_progression_csv<W: Write>(mut w: W, rewards: &[f64]) -> std::io::Result<()> {
    writeln!(w, "frame,reward")?;
    for (n, r) in rewards.iter().enumerate() {
        writeln!(w, "{n},{r}")?;
    }
    Ok(())
}

pub fn save_progression_csv(path: impl AsRef<Path>, rewards: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_progression_csv(&mut buf, rewards).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Standalone SVG line plot of one or more series against their index.
pub fn line_plot_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let finite = || series.iter().flat_map(|(_, s)| s.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let longest = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0).max(2);
    let px = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (longest - 1) as f64;
    let py = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(svg, r#"<path d="M{pad},{pad} V{} H{}" fill="none" stroke="black"/>"#, h - pad, w - pad);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text>"#, pad - 4.0, pad + 4.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{lo:.3}</text>"#, pad - 4.0, h - pad);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, w - pad, h - pad + 16.0, longest - 1);
    for (k, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", px(i), py(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad + 4.0,
            pad + 14.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let sign = |v: f64| (v > 0.0) as i32 - (v < 0.0) as i32;
        let (mut s, mut nx, mut ny) = (0i32, 0i32, 0i32);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let a = sign(x[i] - x[j]);
                let b = sign(y[i] - y[j]);
                s += a * b;
                nx += a * a;
                ny += b * b;
            }
        }
        if nx == 0 || ny == 0 {
            0.0
        } else {
            s as f64 / ((nx as f64) * (ny as f64)).sqrt()
        }
    }

    fn seq(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|v| vec![*v]).collect()
    }

    #[test]
    fn identical_sequences_align_perfectly() {
        let s = seq(&[0.0, 1.0, 2.5, 4.0, 7.0]);
        assert_eq!(kendall_tau_alignment(&s, &s).unwrap(), 1.0);
    }

    #[test]
    fn reversed_sequences_anti_align() {
        let s = seq(&[0.0, 1.0, 2.5, 4.0, 7.0]);
        let r: Vec<Vec<f64>> = s.iter().rev().cloned().collect();
        assert_eq!(kendall_tau_alignment(&s, &r).unwrap(), -1.0);
    }

    #[test]
    fn collapsed_target_gives_zero() {
        let s = seq(&[0.0, 1.0, 2.0]);
        let t = seq(&[5.0, 5.0]);
        assert_eq!(kendall_tau_alignment(&s, &t).unwrap(), 0.0);
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(kendall_tau_alignment(&seq(&[1.0]), &seq(&[1.0, 2.0])).is_err());
    }

    proptest! {
        #[test]
        fn tau_matches_all_pairs_oracle(
            a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 6),
            b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 6),
        ) {
            let tau = kendall_tau_alignment(&a, &b).unwrap();
            let src: Vec<f64> = (0..6).map(|n| n as f64).collect();
            let matched: Vec<f64> = a
                .iter()
                .map(|q| {
                    let d: Vec<f64> = b.iter().map(|r| q.iter().zip(r).map(|(x, y)| (x - y).powi(2)).sum()).collect();
                    (0..6).min_by(|&i, &j| d[i].total_cmp(&d[j])).unwrap() as f64
                })
                .collect();
            prop_assert!((tau - brute_tau_b(&src, &matched)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&tau));
        }

        #[test]
        fn tau_b_handles_ties(x in prop::collection::vec(0u8..4, 2..12), y in prop::collection::vec(0u8..4, 12)) {
            let x: Vec<f64> = x.iter().map(|v| *v as f64).collect();
            let y: Vec<f64> = y[..x.len()].iter().map(|v| *v as f64).collect();
            prop_assert!((kendall_tau_b(&x, &y).unwrap() - brute_tau_b(&x, &y)).abs() < 1e-12);
        }

        #[test]
        fn tau_invariant_under_monotone_rescaling(
            a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 5),
            b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 5),
            k in 0.1f64..10.0,
        ) {
            let scale = |s: &Vec<Vec<f64>>| s.iter().map(|r| r.iter().map(|v| v * k).collect::<Vec<f64>>()).collect::<Vec<_>>();
            let t1 = kendall_tau_alignment(&a, &b).unwrap();
            let t2 = kendall_tau_alignment(&scale(&a), &scale(&b)).unwrap();
            prop_assert_eq!(t1, t2);
        }

        #[test]
        fn spearman_bounded_and_rank_based(x in prop::collection::vec(-5.0f64..5.0, 2..30)) {
            let y: Vec<f64> = (0..x.len()).map(|n| n as f64).collect();
            let r = spearman(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
            prop_assert!((spearman(&cubed, &y).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_known_values() {
        let idx = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &idx).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[9.0, 7.0, 5.0, 3.0, 1.0], &idx).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[2.0; 5], &idx).unwrap(), 0.0);
        // Textbook tie example: ranks (1, 2.5, 2.5, 4).
        assert_eq!(average_ranks(&[1.0, 3.0, 3.0, 7.0]), vec![1.0, 2.5, 2.5, 4.0]);
        let r = spearman(&[1.0, 3.0, 3.0, 7.0], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
        assert!(spearman(&[f64::NAN, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn pairs_enumeration() {
        assert_eq!(all_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(all_pairs(1).is_empty());
    }

    #[test]
    fn csv_and_svg() {
        let mut buf = Vec::new();
        write_progression_csv(&mut buf, &[-1.0, -0.5, 0.0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,reward\n0,-1\n1,-0.5\n2,0\n");
        let svg = line_plot_svg("reward <demo>", &[("a", &[-1.0, -0.5, 0.0]), ("b", &[-0.8, -0.8])]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("reward &lt;demo&gt;"));
        let flat = line_plot_svg("flat", &[("c", &[0.0, 0.0])]);
        assert!(!flat.contains("NaN"));
    }
}
