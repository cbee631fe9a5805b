//! Operational time series and Hankel-matrix machinery.
//!
//! Raw building data arrives as mode-tagged contiguous segments of
//! (input power, disturbances, indoor temperature) sampled on a 15-minute
//! grid. This module ingests such data from CSV, slices it into
//! [`OperationalSegment`]s, assembles the stacked init/pred Hankel blocks
//! used by the predictor, and verifies persistent excitation.
//!
//! All operations are pure functions over immutable inputs; nothing here
//! holds internal mutability, so values can be shared freely across
//! threads.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

/// Sampling period of the slow (building) timescale.
pub const SAMPLE_PERIOD_MINUTES: i64 = 15;
/// 15-minute steps in one day.
pub const STEPS_PER_DAY: usize = 96;

/// Heat-pump operating mode. The two modes have opposite actuation signs,
/// so they are kept as separate datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Heating,
    Cooling,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Heating => "H",
            Mode::Cooling => "C",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Mode> {
        match tag.trim() {
            "H" | "h" => Some(Mode::Heating),
            "C" | "c" => Some(Mode::Cooling),
            _ => None,
        }
    }
}

#[derive(Error, Debug)]
pub enum DataError {
    #[error("insufficient data: segment of length {len} is shorter than depth {depth}")]
    InsufficientData { len: usize, depth: usize },
    #[error("no data for mode {}", .0.tag())]
    NoDataForMode(Mode),
    #[error("malformed row at line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("unsorted data at line {line}")]
    UnsortedData { line: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A temporally contiguous run of samples under a single HP mode.
///
/// `u` is the HP electrical power \[kW\], `w` holds `n_w` disturbance
/// values per sample (outdoor temperature \[degC\], solar radiation
/// \[kW/m2\] in the standard configuration), `y` is the indoor
/// temperature \[degC\]. Samples sit on the 15-minute grid starting at
/// `start_index`.
#[derive(Clone, Debug)]
pub struct OperationalSegment {
    pub start_index: i64,
    pub mode: Mode,
    n_w: usize,
    u: Vec<f64>,
    w: Vec<f64>,
    y: Vec<f64>,
}

impl OperationalSegment {
    pub fn new(
        start_index: i64,
        mode: Mode,
        n_w: usize,
        u: Vec<f64>,
        w: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self, DataError> {
        if u.is_empty() {
            return Err(DataError::DimensionMismatch(
                "segment must hold at least one sample".into(),
            ));
        }
        if y.len() != u.len() || w.len() != u.len() * n_w {
            return Err(DataError::DimensionMismatch(format!(
                "segment signals disagree: |u|={}, |w|={} (n_w={}), |y|={}",
                u.len(),
                w.len(),
                n_w,
                y.len()
            )));
        }
        Ok(Self {
            start_index,
            mode,
            n_w,
            u,
            w,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Disturbance vector of sample `i`.
    pub fn w_at(&self, i: usize) -> &[f64] {
        &self.w[i * self.n_w..(i + 1) * self.n_w]
    }

    /// End index (exclusive) on the sample grid.
    pub fn end_index(&self) -> i64 {
        self.start_index + self.len() as i64
    }

    /// Copy of the segment with the first `drop` samples removed.
    fn trimmed_front(&self, drop: usize) -> OperationalSegment {
        OperationalSegment {
            start_index: self.start_index + drop as i64,
            mode: self.mode,
            n_w: self.n_w,
            u: self.u[drop..].to_vec(),
            w: self.w[drop * self.n_w..].to_vec(),
            y: self.y[drop..].to_vec(),
        }
    }

    /// Whether `next` continues this segment without a time gap or mode change.
    fn continues_into(&self, next: &OperationalSegment) -> bool {
        self.mode == next.mode && self.n_w == next.n_w && self.end_index() == next.start_index
    }

    /// Appends `next` in place; caller guarantees `continues_into(next)`.
    fn absorb(&mut self, next: &OperationalSegment) {
        self.u.extend_from_slice(&next.u);
        self.w.extend_from_slice(&next.w);
        self.y.extend_from_slice(&next.y);
    }
}

/// Hyperparameters of the data-driven predictor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpHyper {
    /// Column-data length per Hankel set (the paper-facing `T`), in samples.
    pub data_len: usize,
    /// Initialization depth in steps.
    pub t_init: usize,
    /// Prediction depth in steps.
    pub horizon: usize,
    /// Scalar regularization weight on the combination vector.
    pub reg_weight: f64,
    /// Overestimate of the plant state order, used by the PE check.
    pub state_order: usize,
    /// Physical-consistency acceptance threshold in [0, 1].
    pub consistency_eta: f64,
}

impl DdpHyper {
    /// Total window depth `t_init + horizon`.
    pub fn depth(&self) -> usize {
        self.t_init + self.horizon
    }

    /// Hankel columns implied by `data_len`.
    pub fn col_budget(&self) -> usize {
        self.data_len + 1 - self.depth()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.t_init == 0 || self.horizon == 0 {
            return Err(DataError::InvalidHyper(
                "t_init and horizon must be positive".into(),
            ));
        }
        if self.data_len < self.depth() {
            return Err(DataError::InvalidHyper(format!(
                "data_len {} is shorter than depth {}",
                self.data_len,
                self.depth()
            )));
        }
        if !(self.reg_weight > 0.0) {
            return Err(DataError::InvalidHyper(
                "reg_weight must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.consistency_eta) {
            return Err(DataError::InvalidHyper(
                "consistency_eta must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Signal dimensions carried alongside the Hankel blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HankelDims {
    pub t_init: usize,
    pub horizon: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub n_y: usize,
}

impl HankelDims {
    pub fn depth(&self) -> usize {
        self.t_init + self.horizon
    }
}

/// Per-signal Hankel matrices of one segment at a given depth.
pub struct SegmentHankel {
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Hankel matrix of a (possibly vector-valued) series.
///
/// `width` is the number of values per sample; column `j` stacks samples
/// `j..j+depth-1` time-major, so the matrix has `depth * width` rows and
/// `len/width - depth + 1` columns.
pub fn hankel_matrix(series: &[f64], width: usize, depth: usize) -> Result<DMatrix<f64>, DataError> {
    assert!(width > 0, "width must be positive");
    assert_eq!(series.len() % width, 0, "series length must be a multiple of width");
    let samples = series.len() / width;
    if samples < depth {
        return Err(DataError::InsufficientData {
            len: samples,
            depth,
        });
    }
    let cols = samples - depth + 1;
    let rows = depth * width;
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for t in 0..depth {
            for k in 0..width {
                m[(t * width + k, j)] = series[(j + t) * width + k];
            }
        }
    }
    Ok(m)
}

/// Per-signal Hankel matrices of depth `depth` for one segment.
pub fn build_hankel(segment: &OperationalSegment, depth: usize) -> Result<SegmentHankel, DataError> {
    Ok(SegmentHankel {
        u: hankel_matrix(segment.u(), 1, depth)?,
        w: hankel_matrix(segment.w(), segment.n_w(), depth)?,
        y: hankel_matrix(segment.y(), 1, depth)?,
    })
}

/// Stacked init/pred Hankel blocks for the three signals, with the source
/// segments retained so deeper-than-`L` checks (persistent excitation) can
/// be run on the same data.
#[derive(Clone, Debug)]
pub struct HankelSet {
    pub dims: HankelDims,
    pub mode: Mode,
    pub u_init: DMatrix<f64>,
    pub u_pred: DMatrix<f64>,
    pub w_init: DMatrix<f64>,
    pub w_pred: DMatrix<f64>,
    pub y_init: DMatrix<f64>,
    pub y_pred: DMatrix<f64>,
    sources: Vec<OperationalSegment>,
}

impl HankelSet {
    pub fn n_cols(&self) -> usize {
        self.u_init.ncols()
    }

    /// Segments whose windows populate the columns, oldest first.
    pub fn sources(&self) -> &[OperationalSegment] {
        &self.sources
    }

    /// Provenance hash over dimensions, mode and all block entries.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.mode.tag().as_bytes());
        for v in [
            self.dims.t_init,
            self.dims.horizon,
            self.dims.n_u,
            self.dims.n_w,
            self.dims.n_y,
        ] {
            h.update(v.to_le_bytes());
        }
        for m in [
            &self.u_init,
            &self.u_pred,
            &self.w_init,
            &self.w_pred,
            &self.y_init,
            &self.y_pred,
        ] {
            for x in m.iter() {
                h.update(x.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds a [`HankelSet`] from every segment matching `mode`, newest data
/// winning when the column budget implied by `hyper.data_len` overflows.
///
/// Adjacent segments that continue each other without a gap are merged
/// first, so windows may span what used to be a storage boundary but never
/// a real discontinuity. Columns are ordered oldest to newest.
pub fn stack_segments(
    segments: &[OperationalSegment],
    hyper: &DdpHyper,
    mode: Mode,
) -> Result<HankelSet, DataError> {
    hyper.validate()?;
    let depth = hyper.depth();

    let mut usable: Vec<OperationalSegment> = Vec::new();
    let mut sorted: Vec<&OperationalSegment> =
        segments.iter().filter(|s| s.mode == mode).collect();
    sorted.sort_by_key(|s| s.start_index);
    for seg in sorted {
        match usable.last_mut() {
            Some(last) if last.continues_into(seg) => last.absorb(seg),
            _ => usable.push(seg.clone()),
        }
    }
    usable.retain(|s| s.len() >= depth);
    if usable.is_empty() {
        return Err(DataError::NoDataForMode(mode));
    }
    let n_w = usable[0].n_w;
    if usable.iter().any(|s| s.n_w != n_w) {
        return Err(DataError::DimensionMismatch(
            "segments disagree on the disturbance dimension".into(),
        ));
    }

    // Drop the oldest columns once the budget is exceeded, trimming whole
    // segments first and then the front of the oldest survivor.
    let budget = hyper.col_budget();
    let mut total: usize = usable.iter().map(|s| s.len() - depth + 1).sum();
    while total > budget {
        let overflow = total - budget;
        let head_cols = usable[0].len() - depth + 1;
        if head_cols <= overflow {
            usable.remove(0);
            total -= head_cols;
        } else {
            usable[0] = usable[0].trimmed_front(overflow);
            total -= overflow;
        }
    }

    let mut u_blocks = Vec::new();
    let mut w_blocks = Vec::new();
    let mut y_blocks = Vec::new();
    for seg in &usable {
        let h = build_hankel(seg, depth)?;
        u_blocks.push(h.u);
        w_blocks.push(h.w);
        y_blocks.push(h.y);
    }
    let concat = |blocks: &[DMatrix<f64>]| {
        let rows = blocks[0].nrows();
        let cols = blocks.iter().map(|b| b.ncols()).sum();
        let mut m = DMatrix::zeros(rows, cols);
        let mut at = 0;
        for b in blocks {
            m.columns_mut(at, b.ncols()).copy_from(b);
            at += b.ncols();
        }
        m
    };
    let u_all = concat(&u_blocks);
    let w_all = concat(&w_blocks);
    let y_all = concat(&y_blocks);

    let dims = HankelDims {
        t_init: hyper.t_init,
        horizon: hyper.horizon,
        n_u: 1,
        n_w,
        n_y: 1,
    };
    let split = |m: &DMatrix<f64>, width: usize| {
        let init = m.rows(0, hyper.t_init * width).into_owned();
        let pred = m.rows(hyper.t_init * width, hyper.horizon * width).into_owned();
        (init, pred)
    };
    let (u_init, u_pred) = split(&u_all, 1);
    let (w_init, w_pred) = split(&w_all, n_w);
    let (y_init, y_pred) = split(&y_all, 1);

    Ok(HankelSet {
        dims,
        mode,
        u_init,
        u_pred,
        w_init,
        w_pred,
        y_init,
        y_pred,
        sources: usable,
    })
}

/// Outcome of the persistent-excitation check.
#[derive(Clone, Debug)]
pub struct PeReport {
    pub pass: bool,
    pub rank: usize,
    pub required: usize,
    pub reason: Option<String>,
}

/// Numerical rank with the tolerance `sigma_max * 1e-10 * max(rows, cols)`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return 0;
    }
    let tol = sigma_max * 1e-10 * m.nrows().max(m.ncols()) as f64;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Persistent-excitation check of order `t_init + horizon + n_x`.
///
/// Stacks the input and disturbance Hankel matrices of that depth over the
/// set's source segments and tests whether the stack has full row rank.
pub fn check_pe(h: &HankelSet, n_x: usize) -> PeReport {
    let depth = h.dims.depth() + n_x;
    let required = depth * (h.dims.n_u + h.dims.n_w);

    let mut blocks = Vec::new();
    for seg in h.sources() {
        if seg.len() < depth {
            continue;
        }
        let u = hankel_matrix(seg.u(), 1, depth).expect("length checked");
        let w = hankel_matrix(seg.w(), seg.n_w(), depth).expect("length checked");
        let mut b = DMatrix::zeros(u.nrows() + w.nrows(), u.ncols());
        b.rows_mut(0, u.nrows()).copy_from(&u);
        b.rows_mut(u.nrows(), w.nrows()).copy_from(&w);
        blocks.push(b);
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    if cols < required {
        return PeReport {
            pass: false,
            rank: 0,
            required,
            reason: Some(format!(
                "not enough columns: {cols} available, {required} required"
            )),
        };
    }
    let rows = depth * (h.dims.n_u + h.dims.n_w);
    let mut stacked = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in &blocks {
        stacked.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    let rank = numerical_rank(&stacked);
    let pass = rank == required;
    PeReport {
        pass,
        rank,
        required,
        reason: (!pass).then(|| format!("rank {rank} below required {required}")),
    }
}

/// A collection of operational segments, sorted by start time.
#[derive(Clone, Debug, Default)]
pub struct OperationalDataset {
    pub segments: Vec<OperationalSegment>,
}

/// Most recent `t_init`-step measurement windows used to seed a prediction.
#[derive(Clone, Debug)]
pub struct InitWindow {
    pub y_init: Vec<f64>,
    pub u_init: Vec<f64>,
    pub w_init: Vec<f64>,
}

impl OperationalDataset {
    pub fn new(segments: Vec<OperationalSegment>) -> Self {
        let mut d = Self { segments };
        d.segments.sort_by_key(|s| s.start_index);
        d
    }

    /// Appends one sample, extending the last segment when contiguous in
    /// time and mode, and opening a new segment otherwise.
    pub fn push_sample(&mut self, index: i64, mode: Mode, u: f64, w: &[f64], y: f64) {
        if let Some(last) = self.segments.last_mut() {
            if last.mode == mode && last.n_w == w.len() && last.end_index() == index {
                last.u.push(u);
                last.w.extend_from_slice(w);
                last.y.push(y);
                return;
            }
        }
        self.segments.push(
            OperationalSegment::new(index, mode, w.len(), vec![u], w.to_vec(), vec![y])
                .expect("single sample segment is well-formed"),
        );
    }

    /// Grid index one past the newest sample.
    pub fn end_index(&self) -> Option<i64> {
        self.segments.iter().map(|s| s.end_index()).max()
    }

    /// Sample at an absolute grid index, if recorded.
    pub fn sample_at(&self, index: i64) -> Option<(f64, &[f64], f64, Mode)> {
        let seg = self
            .segments
            .iter()
            .find(|s| s.start_index <= index && index < s.end_index())?;
        let i = (index - seg.start_index) as usize;
        Some((seg.u[i], seg.w_at(i), seg.y[i], seg.mode))
    }

    /// Init windows covering `[end - t_init, end)`, provided the samples
    /// are contiguous in time (mode changes inside the window are allowed;
    /// time gaps are not).
    pub fn init_window(&self, end: i64, t_init: usize) -> Option<InitWindow> {
        let mut y_init = Vec::with_capacity(t_init);
        let mut u_init = Vec::with_capacity(t_init);
        let mut w_init = Vec::new();
        for index in (end - t_init as i64)..end {
            let (u, w, y, _) = self.sample_at(index)?;
            u_init.push(u);
            w_init.extend_from_slice(w);
            y_init.push(y);
        }
        Some(InitWindow {
            y_init,
            u_init,
            w_init,
        })
    }

    /// Segments overlapping the index range `[from, to)`, clipped to it.
    pub fn segments_in(&self, from: i64, to: i64) -> Vec<OperationalSegment> {
        let mut out = Vec::new();
        for seg in &self.segments {
            let lo = seg.start_index.max(from);
            let hi = seg.end_index().min(to);
            if hi <= lo {
                continue;
            }
            let a = (lo - seg.start_index) as usize;
            let b = (hi - seg.start_index) as usize;
            out.push(
                OperationalSegment::new(
                    lo,
                    seg.mode,
                    seg.n_w,
                    seg.u[a..b].to_vec(),
                    seg.w[a * seg.n_w..b * seg.n_w].to_vec(),
                    seg.y[a..b].to_vec(),
                )
                .expect("clipped segment is well-formed"),
            );
        }
        out
    }
}

/// Reads a `t,u,w1,w2,y,mode` CSV into mode-tagged contiguous segments.
///
/// `t` is either an integer grid index or an RFC 3339 / `%Y-%m-%d %H:%M:%S`
/// timestamp mapped onto the 15-minute grid. A new segment starts at every
/// mode change or whenever the gap between consecutive rows exceeds 1.5
/// sampling periods.
pub fn read_dataset(path: &Path) -> Result<OperationalDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut dataset = OperationalDataset::default();
    let mut prev_index: Option<i64> = None;
    let mut prev_mode: Option<Mode> = None;
    let mut open: Option<OperationalSegment> = None;

    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2; // header is line 1
        let record = record.map_err(|e| DataError::MalformedRow {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(DataError::MalformedRow {
                line,
                msg: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let index = parse_time_index(&record[0]).ok_or_else(|| DataError::MalformedRow {
            line,
            msg: format!("cannot parse time {:?}", &record[0]),
        })?;
        let parse_f = |field: usize, name: &str| -> Result<f64, DataError> {
            record[field].parse::<f64>().map_err(|_| DataError::MalformedRow {
                line,
                msg: format!("cannot parse {name} {:?}", &record[field]),
            })
        };
        let u = parse_f(1, "u")?;
        let w1 = parse_f(2, "w1")?;
        let w2 = parse_f(3, "w2")?;
        let y = parse_f(4, "y")?;
        let mode = Mode::from_tag(&record[5]).ok_or_else(|| DataError::MalformedRow {
            line,
            msg: format!("mode must be H or C, found {:?}", &record[5]),
        })?;

        if let Some(prev) = prev_index {
            if index <= prev {
                return Err(DataError::UnsortedData { line });
            }
            let gap = index - prev;
            let splits = gap > 1 || prev_mode != Some(mode);
            if splits {
                if let Some(seg) = open.take() {
                    dataset.segments.push(seg);
                }
            }
        }
        match &mut open {
            Some(seg) => {
                seg.u.push(u);
                seg.w.extend_from_slice(&[w1, w2]);
                seg.y.push(y);
            }
            None => {
                open = Some(
                    OperationalSegment::new(index, mode, 2, vec![u], vec![w1, w2], vec![y])
                        .expect("single sample segment is well-formed"),
                );
            }
        }
        prev_index = Some(index);
        prev_mode = Some(mode);
    }
    if let Some(seg) = open {
        dataset.segments.push(seg);
    }
    dataset.segments.sort_by_key(|s| s.start_index);
    Ok(dataset)
}

/// Maps a CSV time field onto the 15-minute grid.
///
/// Integer fields are taken as grid indices directly. Timestamps are
/// rounded down to the grid; the 1.5-period split rule in [`read_dataset`]
/// then tolerates clock jitter below half a period.
fn parse_time_index(field: &str) -> Option<i64> {
    if let Ok(i) = field.parse::<i64>() {
        return Some(i);
    }
    let epoch_seconds = chrono::DateTime::parse_from_rfc3339(field)
        .map(|dt| dt.timestamp())
        .or_else(|_| {
            chrono::NaiveDateTime::parse_from_str(field, "%Y-%m-%d %H:%M:%S")
                .map(|dt| dt.and_utc().timestamp())
        })
        .ok()?;
    Some(epoch_seconds.div_euclid(60 * SAMPLE_PERIOD_MINUTES))
}
