//! Point-track temporal coherence: smoothness, visibility stability, local topology
//! and global affine continuity, combined into `s_pt`.

use serde::{Deserialize, Serialize};

use super::affine::fit_affine;
use crate::model::TrackSet;
use crate::scalar::Scalar;
use crate::stats::{median, quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    /// Weights of (smooth, vis, topo, global); must sum to 1.
    pub weights: [f64; 4],
    pub tau_acc: f64,
    pub tau_topo: f64,
    pub tau_rmse: f64,
    pub tau_jitter: f64,
    pub knn_k: usize,
    pub eps: f64,
    /// A sample spikes when its acceleration exceeds this multiple of its track median...
    pub spike_factor: f64,
    /// ...and this absolute floor, px/step^2.
    pub spike_floor: f64,
    pub acc_quantile: f64,
    pub global_quantile: f64,
    /// Weights of the rmse and jitter terms inside `s_global`.
    pub global_mix: [f64; 2],
    /// A track is confident when visible in at least this fraction of frames.
    pub visible_fraction: f64,
    /// Minimum fraction of confident tracks; below it the clip is discarded.
    pub confidence_floor: f64,
    /// Retention floor on `s_pt`.
    pub pass_floor: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            weights: [0.25; 4],
            tau_acc: 2.0,
            tau_topo: 0.08,
            tau_rmse: 1.5,
            tau_jitter: 0.5,
            knn_k: 4,
            eps: 1e-6,
            spike_factor: 5.0,
            spike_floor: 0.5,
            acc_quantile: 0.95,
            global_quantile: 0.9,
            global_mix: [0.7, 0.3],
            visible_fraction: 0.8,
            confidence_floor: 0.6,
            pass_floor: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("need at least 3 frames, got {0}")]
    TooFewFrames(usize),
    #[error("insufficient tracking confidence: {confident} of {total} tracks usable, need {needed}")]
    Confidence {
        confident: usize,
        total: usize,
        needed: usize,
    },
    #[error("weights must be non-negative and sum to 1, got {0:?}")]
    Weights([f64; 4]),
    #[error("malformed track set: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PointTrackScores<T> {
    pub s_smooth: T,
    pub s_vis: T,
    pub s_topo: T,
    pub s_global: T,
    pub s_pt: T,
}

/// Per-pair diagnostics behind `s_global`, exposed for tests and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDiagnostics<T> {
    pub rmse: Vec<T>,
    pub jitter: Vec<T>,
}

fn clip01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

fn dist<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn smoothness<T: Scalar>(tracks: &TrackSet<T>, cfg: &TrackConfig) -> T {
    let mut pooled = Vec::new();
    let mut spikes = 0usize;
    for (pts, mask) in tracks.points.iter().zip(&tracks.masks) {
        let acc: Vec<T> = (1..pts.len().saturating_sub(1))
            .filter(|&t| mask[t - 1] && mask[t] && mask[t + 1])
            .map(|t| {
                let ax = pts[t + 1][0] - pts[t][0] - pts[t][0] + pts[t - 1][0];
                let ay = pts[t + 1][1] - pts[t][1] - pts[t][1] + pts[t - 1][1];
                (ax * ax + ay * ay).sqrt()
            })
            .collect();
        if acc.is_empty() {
            continue;
        }
        let med = median(&acc).expect("finite accelerations");
        let limit = (med * T::lit(cfg.spike_factor)).max(T::lit(cfg.spike_floor));
        spikes += acc.iter().filter(|&&a| a > limit).count();
        pooled.extend(acc);
    }
    if pooled.is_empty() {
        return T::one();
    }
    let q = quantile(&pooled, cfg.acc_quantile).expect("finite accelerations");
    let r_spike = T::from_usize_lossy(spikes) / T::from_usize_lossy(pooled.len());
    clip01((-q / T::lit(cfg.tau_acc)).exp() * (T::one() - r_spike))
}

fn visibility<T: Scalar>(tracks: &TrackSet<T>) -> T {
    let rates: Vec<T> = tracks
        .masks
        .iter()
        .map(|m| {
            let flips = m.windows(2).filter(|w| w[0] != w[1]).count();
            T::from_usize_lossy(flips) / T::from_usize_lossy(m.len() - 1)
        })
        .collect();
    clip01(T::one() - median(&rates).expect("at least one track"))
}

fn topology<T: Scalar>(tracks: &TrackSet<T>, usable: &[usize], cfg: &TrackConfig) -> T {
    let anchors: Vec<usize> = usable.iter().copied().filter(|&i| tracks.masks[i][0]).collect();
    let k = cfg.knn_k.min(anchors.len().saturating_sub(1));
    let eps = T::lit(cfg.eps);
    let mut u = Vec::new();
    for &i in &anchors {
        let p0 = tracks.points[i][0];
        let mut others: Vec<(T, usize)> = anchors
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (dist(p0, tracks.points[j][0]), j))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        for &(d0, j) in others.iter().take(k) {
            for t in 1..tracks.num_frames() {
                if tracks.masks[i][t] && tracks.masks[j][t] {
                    let dt = dist(tracks.points[i][t], tracks.points[j][t]);
                    u.push((dt - d0).abs() / (d0 + eps));
                }
            }
        }
    }
    if u.is_empty() {
        return T::one();
    }
    clip01((-median(&u).expect("finite") / T::lit(cfg.tau_topo)).exp())
}

/// Affine fits between every adjacent frame pair over points visible in both.
pub fn global_diagnostics<T: Scalar>(tracks: &TrackSet<T>) -> GlobalDiagnostics<T> {
    let frames = tracks.num_frames();
    let mut rmse = Vec::new();
    let mut params: Vec<Option<[T; 6]>> = Vec::new();
    for t in 0..frames.saturating_sub(1) {
        let (src, dst): (Vec<_>, Vec<_>) = tracks
            .points
            .iter()
            .zip(&tracks.masks)
            .filter(|(_, m)| m[t] && m[t + 1])
            .map(|(p, _)| (p[t], p[t + 1]))
            .unzip();
        match fit_affine(&src, &dst) {
            Some(fit) => {
                rmse.push(fit.rmse);
                let n = T::from_usize_lossy(src.len());
                let cx = src.iter().map(|p| p[0]).sum::<T>() / n;
                let cy = src.iter().map(|p| p[1]).sum::<T>() / n;
                let rho = (src
                    .iter()
                    .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
                    .sum::<T>()
                    / n)
                    .sqrt();
                let moved = fit.apply([cx, cy]);
                params.push(Some([
                    fit.m[0][0] - T::one(),
                    fit.m[0][1],
                    fit.m[1][0],
                    fit.m[1][1] - T::one(),
                    (moved[0] - cx) / rho,
                    (moved[1] - cy) / rho,
                ]));
            }
            None => params.push(None),
        }
    }
    let jitter = params
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| (*y - *x).powi(2)).sum::<T>().sqrt()),
            _ => None,
        })
        .collect();
    GlobalDiagnostics { rmse, jitter }
}

fn global<T: Scalar>(tracks: &TrackSet<T>, cfg: &TrackConfig) -> T {
    let diag = global_diagnostics(tracks);
    if diag.rmse.is_empty() {
        return T::zero();
    }
    let q_rmse = quantile(&diag.rmse, cfg.global_quantile).expect("finite rmse");
    let q_jit = if diag.jitter.is_empty() {
        T::zero()
    } else {
        quantile(&diag.jitter, cfg.global_quantile).expect("finite jitter")
    };
    clip01(
        T::lit(cfg.global_mix[0]) * (-q_rmse / T::lit(cfg.tau_rmse)).exp()
            + T::lit(cfg.global_mix[1]) * (-q_jit / T::lit(cfg.tau_jitter)).exp(),
    )
}

/// Indices of tracks visible in at least `visible_fraction` of frames.
pub fn confident_tracks<T: Scalar>(tracks: &TrackSet<T>, cfg: &TrackConfig) -> Vec<usize> {
    let frames = tracks.num_frames() as f64;
    tracks
        .masks
        .iter()
        .enumerate()
        .filter(|(_, m)| m.iter().filter(|&&v| v).count() as f64 >= cfg.visible_fraction * frames)
        .map(|(i, _)| i)
        .collect()
}

pub fn score_tracks<T: Scalar>(tracks: &TrackSet<T>, cfg: &TrackConfig) -> Result<PointTrackScores<T>, TrackError> {
    let w = cfg.weights;
    if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrackError::Weights(w));
    }
    let frames = tracks.num_frames();
    if frames < 3 {
        return Err(TrackError::TooFewFrames(frames));
    }
    tracks
        .validate(frames)
        .map_err(|e| TrackError::Malformed(e.to_string()))?;
    let usable = confident_tracks(tracks, cfg);
    let total = tracks.num_tracks();
    let needed = ((cfg.confidence_floor * total as f64).ceil() as usize).max(cfg.knn_k + 1);
    if usable.len() < needed {
        return Err(TrackError::Confidence {
            confident: usable.len(),
            total,
            needed,
        });
    }
    let s_smooth = smoothness(tracks, cfg);
    let s_vis = visibility(tracks);
    let s_topo = topology(tracks, &usable, cfg);
    let s_global = global(tracks, cfg);
    let s_pt = clip01(
        T::lit(w[0]) * s_smooth + T::lit(w[1]) * s_vis + T::lit(w[2]) * s_topo + T::lit(w[3]) * s_global,
    );
    Ok(PointTrackScores {
        s_smooth,
        s_vis,
        s_topo,
        s_global,
        s_pt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_grid(frames: usize) -> TrackSet<f64> {
        let points = (0..100)
            .map(|i| vec![[(i % 10) as f64 * 12.0 + 30.0, (i / 10) as f64 * 9.0 + 20.0]; frames])
            .collect();
        TrackSet {
            points,
            masks: vec![vec![true; frames]; 100],
        }
    }

    #[test]
    fn static_tracks_score_one() {
        let s = score_tracks(&static_grid(30), &TrackConfig::default()).unwrap();
        for v in [s.s_smooth, s.s_vis, s.s_topo, s.s_global, s.s_pt] {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rigid_translation_keeps_topology() {
        let mut tr = static_grid(20);
        for track in &mut tr.points {
            for (t, p) in track.iter_mut().enumerate() {
                p[0] += 1.5 * t as f64;
                p[1] -= 0.5 * t as f64;
            }
        }
        let s = score_tracks(&tr, &TrackConfig::default()).unwrap();
        assert!((s.s_topo - 1.0).abs() < 1e-12);
        assert!(global_diagnostics(&tr).rmse.iter().all(|&r| r < 1e-9));
        assert!(global_diagnostics(&tr).jitter.iter().all(|&j| j < 1e-9));
    }

    #[test]
    fn median_flip_rule() {
        let mut tr = TrackSet {
            points: (0..4).map(|i| vec![[i as f64 * 10.0, (i * i) as f64]; 6]).collect(),
            masks: vec![vec![true; 6]; 4],
        };
        tr.masks[2] = vec![true, false, true, false, true, false];
        let cfg = TrackConfig {
            knn_k: 2,
            confidence_floor: 0.5,
            ..Default::default()
        };
        assert_eq!(score_tracks(&tr, &cfg).unwrap().s_vis, 1.0);
    }

    #[test]
    fn low_visibility_is_a_confidence_error() {
        let mut tr = static_grid(10);
        for m in tr.masks.iter_mut().take(50) {
            for (t, v) in m.iter_mut().enumerate() {
                *v = t % 2 == 0;
            }
        }
        assert!(matches!(
            score_tracks(&tr, &TrackConfig::default()),
            Err(TrackError::Confidence { confident: 50, .. })
        ));
        assert!(matches!(
            score_tracks(&static_grid(2), &TrackConfig::default()),
            Err(TrackError::TooFewFrames(2))
        ));
    }

    #[test]
    fn single_precision_static_tracks_score_one() {
        let g = static_grid(12);
        let tr: TrackSet<f32> = TrackSet {
            points: g
                .points
                .iter()
                .map(|t| t.iter().map(|p| [p[0] as f32, p[1] as f32]).collect())
                .collect(),
            masks: g.masks.clone(),
        };
        let s = score_tracks(&tr, &TrackConfig::default()).unwrap();
        assert!((s.s_pt - 1.0).abs() < 1e-5);
    }
}
