//! Top-down SVG drawing of a circuit tinted by arousal.
//!
//! Windows are assigned to pieces by traversal-time share: each piece's
//! share of one lap is its cell count, stretched for loops by the inverse of
//! the loop speed factor. The trace is spread evenly over `laps` traversals.

use std::fmt::Write;

use thiserror::Error;

use crate::track::{GridPos, Heading, TileKind, Track};

pub const LOW_AROUSAL: f64 = 0.33;
pub const HIGH_AROUSAL: f64 = 0.66;

const BLUE: &str = "#3b6fd8";
const RED: &str = "#d8443b";
const NEUTRAL: &str = "#ffffff";
const UNSEEN: &str = "#d9d9d9";

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("cannot render an infeasible track")]
    InfeasibleTrack,
    #[error("arousal trace is empty")]
    EmptyTrace,
    #[error("laps must be positive")]
    ZeroLaps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tint {
    Decrease,
    Neutral,
    Increase,
    /// No window landed on the piece.
    Unseen,
}

impl Tint {
    pub fn of(mean: Option<f64>) -> Tint {
        match mean {
            None => Tint::Unseen,
            Some(m) if m < LOW_AROUSAL => Tint::Decrease,
            Some(m) if m > HIGH_AROUSAL => Tint::Increase,
            Some(_) => Tint::Neutral,
        }
    }

    fn colour(self) -> &'static str {
        match self {
            Tint::Decrease => BLUE,
            Tint::Neutral => NEUTRAL,
            Tint::Increase => RED,
            Tint::Unseen => UNSEEN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub laps: usize,
    pub loop_speed_factor: f64,
    pub cell_size: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            laps: 1,
            loop_speed_factor: 0.6,
            cell_size: 24.0,
        }
    }
}

fn piece_time(kind: TileKind, cells: usize, opts: &RenderOptions) -> f64 {
    let t = cells as f64;
    if kind == TileKind::Loop && opts.loop_speed_factor > 0.0 {
        t / opts.loop_speed_factor
    } else {
        t
    }
}

/// Mean arousal per piece, weighted by time overlap with each window.
pub fn piece_means(
    track: &Track,
    trace: &[f64],
    opts: &RenderOptions,
) -> Result<Vec<Option<f64>>, RenderError> {
    if !track.feasible {
        return Err(RenderError::InfeasibleTrack);
    }
    if trace.is_empty() {
        return Err(RenderError::EmptyTrace);
    }
    if opts.laps == 0 {
        return Err(RenderError::ZeroLaps);
    }
    let times: Vec<f64> = track
        .pieces
        .iter()
        .map(|p| piece_time(p.kind, p.cells.len(), opts))
        .collect();
    let lap: f64 = times.iter().sum();
    let n = trace.len() as f64;
    let laps = opts.laps as f64;
    let mut start = 0.0;
    let mut means = Vec::with_capacity(times.len());
    for t in &times {
        let (a, b) = (start / lap, (start + t) / lap);
        start += t;
        let (mut sum, mut weight) = (0.0, 0.0);
        for l in 0..opts.laps {
            // Piece span in race time, scaled to window units.
            let lo = (l as f64 + a) / laps * n;
            let hi = (l as f64 + b) / laps * n;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(trace.len());
            for (i, v) in trace.iter().enumerate().take(last).skip(first) {
                let overlap = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                if overlap > 0.0 {
                    sum += v * overlap;
                    weight += overlap;
                }
            }
        }
        means.push((weight > 0.0).then(|| sum / weight));
    }
    Ok(means)
}

fn centre(p: GridPos, cs: f64, margin: f64) -> (f64, f64) {
    (
        margin + (p.x as f64 + 0.5) * cs,
        margin + (p.y as f64 + 0.5) * cs,
    )
}

/// Render `track` with each piece tinted by the mean of its windows.
pub fn render_track_svg(
    track: &Track,
    trace: &[f64],
    opts: &RenderOptions,
) -> Result<String, RenderError> {
    let means = piece_means(track, trace, opts)?;
    let cs = opts.cell_size;
    let margin = cs;
    let legend_h = 3.0 * cs;
    let w = track.config.width as f64 * cs + 2.0 * margin;
    let h = track.config.height as f64 * cs + 2.0 * margin + legend_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#f4f1ea"/>"##);
    let _ = writeln!(
        s,
        r##"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="#8fae7e"/>"##,
        w - 2.0 * margin,
        h - 2.0 * margin - legend_h
    );

    for (i, (piece, mean)) in track.pieces.iter().zip(&means).enumerate() {
        let fill = Tint::of(*mean).colour();
        let _ = write!(
            s,
            r#"<g class="piece" data-index="{i}" data-kind="{}""#,
            piece.kind
        );
        if let Some(m) = mean {
            let _ = write!(s, r#" data-arousal="{m:.4}""#);
        }
        let _ = writeln!(s, r#" data-tint="{}">"#, fill);
        for c in &piece.cells {
            let (cx, cy) = centre(*c, cs, margin);
            let stroke = if piece.is_elevated(*c) { 3.0 } else { 1.0 };
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{cs}" height="{cs}" fill="{fill}" stroke="#333333" stroke-width="{stroke}"/>"##,
                cx - cs / 2.0,
                cy - cs / 2.0
            );
        }
        if piece.kind == TileKind::Loop {
            let (cx, cy) = centre(piece.cells[piece.cells.len() / 2], cs, margin);
            let _ = writeln!(
                s,
                r##"<circle cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="#333333" stroke-width="2"/>"##,
                cs * 0.3
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let path: Vec<String> = track
        .pieces
        .iter()
        .flat_map(|p| p.cells.iter())
        .chain(std::iter::once(&track.config.origin))
        .map(|c| {
            let (x, y) = centre(*c, cs, margin);
            format!("{x},{y}")
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#555555" stroke-width="1.5" stroke-dasharray="4 3"/>"##,
        path.join(" ")
    );

    let (sx, sy) = centre(track.config.origin, cs, margin);
    let (dx, dy) = track.config.initial_heading.delta();
    let (dx, dy) = (dx as f64 * cs * 0.35, dy as f64 * cs * 0.35);
    let (px, py) = (-dy, dx);
    let _ = writeln!(
        s,
        r##"<polygon class="start" points="{},{} {},{} {},{}" fill="#111111"/>"##,
        sx + dx,
        sy + dy,
        sx - dx + px,
        sy - dy + py,
        sx - dx - px,
        sy - dy - py
    );

    let ly = h - legend_h + cs * 0.5;
    let entries = [
        (BLUE, format!("arousal < {LOW_AROUSAL}")),
        (NEUTRAL, "neutral".to_string()),
        (RED, format!("arousal > {HIGH_AROUSAL}")),
        (
            "#111111",
            format!("start ({})", heading_word(track.config.initial_heading)),
        ),
    ];
    let _ = writeln!(
        s,
        r#"<g class="legend" font-family="sans-serif" font-size="{}">"#,
        cs * 0.5
    );
    for (i, (colour, label)) in entries.iter().enumerate() {
        let x = margin + i as f64 * 6.0 * cs;
        let _ = writeln!(
            s,
            r##"<rect x="{x}" y="{ly}" width="{}" height="{}" fill="{colour}" stroke="#333333"/><text x="{}" y="{}">{label}</text>"##,
            cs * 0.6,
            cs * 0.6,
            x + cs * 0.8,
            ly + cs * 0.5
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    Ok(s)
}

fn heading_word(h: Heading) -> String {
    h.to_string().to_lowercase()
}
