//! Handcrafted "no tracking" baseline: per-pixel temporal saturation range,
//! flagged-pixel ratio and cumulative decision.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{clip_rectified_frames, ClipRecord, Label, CANONICAL_SIZE};
use crate::decision::{Strategy, DEFAULT_MIN_BUFFER};
use crate::error::{Error, Result};
use crate::metrics::{roc_auc, Verdict};
use crate::raster::saturation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub s_thresh: f64,
    pub h_thresh: f64,
    /// Trailing window length; all frames seen so far when unset.
    pub window: Option<usize>,
    pub min_buffer: usize,
    pub working_size: (u32, u32),
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            s_thresh: 50.0,
            h_thresh: 0.01,
            window: None,
            min_buffer: DEFAULT_MIN_BUFFER,
            working_size: CANONICAL_SIZE,
        }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_thresh > 0.0) || !(self.h_thresh > 0.0 && self.h_thresh < 1.0) || self.window.is_some_and(|t| t < 2) {
            return Err(Error::Config("baseline needs S_thresh > 0, h_thresh in (0, 1), T >= 2".into()));
        }
        Ok(())
    }
}

/// Per-pixel statistic deciding whether a pixel behaves holographically.
pub trait PixelStatistic: Sync {
    /// Per-frame channel reduced to one byte per pixel.
    fn channel(&self, img: &RgbImage) -> Vec<u8>;
}

/// HSV saturation; a pixel is flagged when its max-min range over the window exceeds the threshold.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaturationRange;

impl PixelStatistic for SaturationRange {
    fn channel(&self, img: &RgbImage) -> Vec<u8> {
        img.pixels().map(|p| saturation(p.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMap {
    pub fn ratio(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len().max(1) as f64
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

fn check_sizes(frames: &[RgbImage]) -> Result<(u32, u32)> {
    let first = frames.first().ok_or(Error::Empty("frames"))?;
    let dims = first.dimensions();
    if frames.iter().any(|f| f.dimensions() != dims) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    Ok(dims)
}

/// Flags pixels whose saturation range over `frames` exceeds `s_thresh`.
pub fn holographic_map(frames: &[RgbImage], s_thresh: f64) -> Result<BinaryMap> {
    holographic_map_with(frames, s_thresh, &SaturationRange)
}

pub fn holographic_map_with(frames: &[RgbImage], s_thresh: f64, stat: &dyn PixelStatistic) -> Result<BinaryMap> {
    if frames.len() < 2 {
        return Err(Error::ClipTooShort("holographic map needs at least 2 frames".into()));
    }
    let (width, height) = check_sizes(frames)?;
    let channels: Vec<Vec<u8>> = frames.iter().map(|f| stat.channel(f)).collect();
    let range = ChannelRange::over(&channels);
    Ok(BinaryMap { width, height, bits: range.flags(s_thresh) })
}

/// Running per-pixel min and max.
#[derive(Debug, Clone)]
struct ChannelRange {
    min: Vec<u8>,
    max: Vec<u8>,
}

impl ChannelRange {
    fn new(first: &[u8]) -> Self {
        Self { min: first.to_vec(), max: first.to_vec() }
    }

    fn push(&mut self, c: &[u8]) {
        for ((lo, hi), &v) in self.min.iter_mut().zip(self.max.iter_mut()).zip(c) {
            *lo = (*lo).min(v);
            *hi = (*hi).max(v);
        }
    }

    fn over(channels: &[Vec<u8>]) -> Self {
        let mut r = Self::new(&channels[0]);
        channels[1..].iter().for_each(|c| r.push(c));
        r
    }

    fn flags(&self, s_thresh: f64) -> Vec<bool> {
        self.min.iter().zip(&self.max).map(|(&lo, &hi)| (hi - lo) as f64 > s_thresh).collect()
    }

    fn ratio(&self, s_thresh: f64) -> f64 {
        let n = self.min.iter().zip(&self.max).filter(|(&lo, &hi)| (hi - lo) as f64 > s_thresh).count();
        n as f64 / self.min.len().max(1) as f64
    }
}

/// Frame indices at which the cumulative decision is evaluated.
fn evaluation_points(n: usize, min_buffer: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let start = min_buffer.saturating_sub(1).min(n - 1);
    (start..n).collect()
}

/// Flagged ratio after each evaluation point, for several thresholds at once.
fn ratio_trace(channels: &[Vec<u8>], s_values: &[f64], window: Option<usize>, strategy: Strategy, min_buffer: usize) -> Vec<Vec<f64>> {
    let n = channels.len();
    match strategy {
        Strategy::Whole => {
            if n < 2 {
                return vec![vec![0.0]; s_values.len()];
            }
            let r = ChannelRange::over(channels);
            s_values.iter().map(|&s| vec![r.ratio(s)]).collect()
        }
        Strategy::Cumulative => {
            let points = evaluation_points(n, min_buffer);
            let mut out = vec![Vec::with_capacity(points.len()); s_values.len()];
            let mut running = window.is_none().then(|| ChannelRange::new(&channels[0]));
            let mut next = 1;
            for &i in &points {
                let r = match (&mut running, window) {
                    (Some(r), _) => {
                        while next <= i {
                            r.push(&channels[next]);
                            next += 1;
                        }
                        r.clone()
                    }
                    (None, Some(t)) => ChannelRange::over(&channels[(i + 1).saturating_sub(t)..=i]),
                    (None, None) => unreachable!(),
                };
                for (k, &s) in s_values.iter().enumerate() {
                    out[k].push(if i == 0 { 0.0 } else { r.ratio(s) });
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineDecision {
    pub verdict: Verdict,
    pub stop_index: usize,
    /// Flagged ratio at `stop_index` (whole mode: over the full clip).
    pub score: f64,
}

fn decide_from_trace(trace: &[f64], n_frames: usize, h_thresh: f64, strategy: Strategy, min_buffer: usize) -> BaselineDecision {
    match strategy {
        Strategy::Whole => {
            let score = trace[0];
            let verdict = if score >= h_thresh { Verdict::Original } else { Verdict::Attack };
            BaselineDecision { verdict, stop_index: n_frames - 1, score }
        }
        Strategy::Cumulative => {
            let points = evaluation_points(n_frames, min_buffer);
            for (k, &r) in trace.iter().enumerate() {
                if r >= h_thresh {
                    return BaselineDecision { verdict: Verdict::Original, stop_index: points[k], score: r };
                }
            }
            BaselineDecision { verdict: Verdict::Attack, stop_index: n_frames - 1, score: *trace.last().unwrap_or(&0.0) }
        }
    }
}

/// Decision on frames already rectified to the working size.
pub fn baseline_decide(frames: &[RgbImage], params: &BaselineParams, strategy: Strategy) -> Result<BaselineDecision> {
    params.validate()?;
    let dims = check_sizes(frames)?;
    if dims != params.working_size {
        return Err(Error::Shape(format!("frames are {dims:?}, expected {:?}", params.working_size)));
    }
    let channels: Vec<Vec<u8>> = frames.iter().map(|f| SaturationRange.channel(f)).collect();
    let trace = ratio_trace(&channels, &[params.s_thresh], params.window, strategy, params.min_buffer);
    Ok(decide_from_trace(&trace[0], frames.len(), params.h_thresh, strategy, params.min_buffer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub s_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// Window lengths; 0 stands for "all frames seen so far".
    pub t_values: Vec<usize>,
    pub min_buffer: usize,
    pub working_size: (u32, u32),
    pub strategy: Strategy,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            s_values: vec![30.0, 40.0, 50.0],
            h_values: vec![0.01, 0.02, 0.03],
            t_values: vec![0],
            min_buffer: DEFAULT_MIN_BUFFER,
            working_size: CANONICAL_SIZE,
            strategy: Strategy::Cumulative,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.s_values.is_empty() || self.h_values.is_empty() || self.t_values.is_empty() {
            return Err(Error::Config("sweep grid axes must be non-empty".into()));
        }
        let bad_s = self.s_values.iter().any(|&s| !(s > 0.0));
        let bad_h = self.h_values.iter().any(|&h| !(h > 0.0 && h < 1.0));
        if bad_s || bad_h || self.t_values.contains(&1) {
            return Err(Error::Config("sweep grid needs S > 0, h in (0, 1), T = 0 (all) or >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub s_thresh: f64,
    pub h_thresh: f64,
    pub window: Option<usize>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub best: SweepCell,
}

impl SweepTable {
    /// One block per T, rows S, columns h.
    pub fn format(&self, grid: &SweepGrid) -> String {
        let mut out = String::new();
        for &t in &grid.t_values {
            let label = if t == 0 { "all".to_string() } else { t.to_string() };
            let t = window_of(t);
            out.push_str(&format!("T = {label}\nS \\ h"));
            for h in &grid.h_values {
                out.push_str(&format!("\t{h}"));
            }
            out.push('\n');
            for &s in &grid.s_values {
                out.push_str(&format!("{s}"));
                for &h in &grid.h_values {
                    let cell = self.cells.iter().find(|c| c.s_thresh == s && c.h_thresh == h && c.window == t);
                    out.push_str(&format!("\t{:.3}", cell.map_or(f64::NAN, |c| c.auc)));
                }
                out.push('\n');
            }
        }
        out.push_str(&format!(
            "best: S = {}, h = {}, T = {}, AUC = {:.3}\n",
            self.best.s_thresh,
            self.best.h_thresh,
            self.best.window.map_or("all".to_string(), |t| t.to_string()),
            self.best.auc
        ));
        out
    }
}

fn window_of(t: usize) -> Option<usize> {
    (t > 0).then_some(t)
}

/// Ratio traces of one clip for every (T, S) pair of the grid.
pub struct ClipTraces {
    pub label: Label,
    pub n_frames: usize,
    traces: Vec<Vec<Vec<f64>>>,
}

pub fn clip_traces(frames: &[RgbImage], label: Label, grid: &SweepGrid) -> Result<ClipTraces> {
    check_sizes(frames)?;
    let channels: Vec<Vec<u8>> = frames.iter().map(|f| SaturationRange.channel(f)).collect();
    let traces = grid
        .t_values
        .iter()
        .map(|&t| ratio_trace(&channels, &grid.s_values, window_of(t), grid.strategy, grid.min_buffer))
        .collect();
    Ok(ClipTraces { label, n_frames: frames.len(), traces })
}

/// ROC AUC for each grid configuration.
///
/// A clip's attack score is the negated flagged ratio at its decision point,
/// so in cumulative mode the early stop makes the AUC depend on `h_thresh` too.
pub fn sweep_from_traces(clips: &[ClipTraces], grid: &SweepGrid) -> Result<SweepTable> {
    grid.validate()?;
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let mut cells = Vec::new();
    for (ti, &t) in grid.t_values.iter().enumerate() {
        for (si, &s) in grid.s_values.iter().enumerate() {
            for &h in &grid.h_values {
                let scores: Vec<f64> = clips
                    .iter()
                    .map(|c| {
                        let d = decide_from_trace(&c.traces[ti][si], c.n_frames, h, grid.strategy, grid.min_buffer);
                        -d.score
                    })
                    .collect();
                cells.push(SweepCell { s_thresh: s, h_thresh: h, window: window_of(t), auc: roc_auc(&scores, &labels)? });
            }
        }
    }
    let best = cells
        .iter()
        .fold(None::<&SweepCell>, |b, c| match b {
            Some(b) if b.auc >= c.auc => Some(b),
            _ => Some(c),
        })
        .cloned()
        .ok_or(Error::Empty("sweep grid"))?;
    Ok(SweepTable { cells, best })
}

/// Loads, rectifies and scores every clip, then sweeps the grid.
pub fn parameter_sweep(clips: &[ClipRecord], grid: &SweepGrid, target_fps: f64) -> Result<SweepTable> {
    grid.validate()?;
    let traces = clips
        .par_iter()
        .map(|c| clip_traces(&clip_rectified_frames(c, grid.working_size, target_fps)?, c.label, grid))
        .collect::<Result<Vec<_>>>()?;
    sweep_from_traces(&traces, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn frames_with(n: usize, f: impl Fn(usize, u32, u32) -> [u8; 3]) -> Vec<RgbImage> {
        (0..n).map(|t| RgbImage::from_fn(20, 10, |x, y| Rgb(f(t, x, y)))).collect()
    }

    #[test]
    fn identical_frames_flag_nothing() {
        let f = frames_with(4, |_, x, y| [x as u8 * 10, y as u8 * 20, 100]);
        assert_eq!(holographic_map(&f, 30.0).unwrap().count(), 0);
    }

    #[test]
    fn single_toggling_pixel_is_flagged() {
        let f = frames_with(3, |t, x, y| if (x, y) == (4, 5) && t % 2 == 1 { [255, 0, 0] } else { [128, 128, 128] });
        let m = holographic_map(&f, 50.0).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.bits[5 * 20 + 4]);
    }

    #[test]
    fn mismatched_sizes_and_short_input_error() {
        let mut f = frames_with(2, |_, _, _| [0, 0, 0]);
        f.push(RgbImage::new(3, 3));
        assert!(matches!(holographic_map(&f, 50.0), Err(Error::Shape(_))));
        assert!(holographic_map(&f[..1], 50.0).is_err());
    }

    #[test]
    fn cumulative_waits_for_the_buffer() {
        let params = BaselineParams { working_size: (20, 10), ..BaselineParams::default() };
        let f = frames_with(8, |t, _, _| if t % 2 == 0 { [255, 0, 0] } else { [128, 128, 128] });
        let d = baseline_decide(&f, &params, Strategy::Cumulative).unwrap();
        assert_eq!((d.verdict, d.stop_index), (Verdict::Original, 4));
        let whole = baseline_decide(&f, &params, Strategy::Whole).unwrap();
        assert_eq!(whole.verdict, Verdict::Original);
    }

    #[test]
    fn windowed_trace_matches_direct_maps() {
        let f = frames_with(7, |t, x, _| [((t * 37 + x as usize * 11) % 256) as u8, 40, 200]);
        let channels: Vec<Vec<u8>> = f.iter().map(|i| SaturationRange.channel(i)).collect();
        let trace = ratio_trace(&channels, &[30.0], Some(3), Strategy::Cumulative, 5);
        for (k, i) in (4..7).enumerate() {
            let direct = holographic_map(&f[i - 2..=i], 30.0).unwrap().ratio();
            assert_eq!(trace[0][k], direct);
        }
    }

    #[test]
    fn perfectly_separable_dataset_gives_unit_auc() {
        let grid = SweepGrid { working_size: (20, 10), ..SweepGrid::default() };
        let dynamic = frames_with(6, |t, _, _| if t % 2 == 0 { [255, 0, 0] } else { [120, 120, 120] });
        let stat = frames_with(6, |_, _, _| [90, 90, 90]);
        let clips = vec![
            clip_traces(&dynamic, Label::Original, &grid).unwrap(),
            clip_traces(&stat, Label::Attack, &grid).unwrap(),
        ];
        let table = sweep_from_traces(&clips, &grid).unwrap();
        assert_eq!(table.cells.len(), 9);
        assert!(table.cells.iter().all(|c| c.auc == 1.0));
    }
}
