//! Demonstration keypoint tracks: loading, validation, normalization to
//! the simulator's scale, and cyclic phase lookup.
//!
//! File format: CSV with header `frame,part,x,y`, one row per
//! (frame, part), four parts per frame (r_knee, l_knee, r_foot, l_foot),
//! coordinates pelvis-relative in arbitrary demo units. Lines starting
//! with `#` are comments; bundled tracks use one to document cadence.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const DEMO_PARTS: [&str; 4] = ["r_knee", "l_knee", "r_foot", "l_foot"];

/// Minimum frames for one full gait cycle at four positions per half step.
pub const MIN_FRAMES: usize = 8;

/// One demonstration frame; coordinates are pelvis-relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoFrame {
    pub frame_index: u64,
    pub r_knee: [f64; 2],
    pub l_knee: [f64; 2],
    pub r_foot: [f64; 2],
    pub l_foot: [f64; 2],
}

impl DemoFrame {
    pub fn part(&self, name: &str) -> Option<[f64; 2]> {
        match name {
            "r_knee" => Some(self.r_knee),
            "l_knee" => Some(self.l_knee),
            "r_foot" => Some(self.r_foot),
            "l_foot" => Some(self.l_foot),
            _ => None,
        }
    }

    pub fn parts(&self) -> [[f64; 2]; 4] {
        [self.r_knee, self.l_knee, self.r_foot, self.l_foot]
    }
}

/// A time-indexed, cyclic track of demonstration frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoTrack {
    pub frames: Vec<DemoFrame>,
    pub frames_per_half_step: usize,
    /// Meters per demo unit applied so far (1.0 for a freshly loaded track).
    pub scale: f64,
    pub cyclic: bool,
}

impl DemoTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Largest pelvis-to-foot distance over the whole track.
    pub fn max_foot_distance(&self) -> f64 {
        let mut max = 0.0f64;
        for f in &self.frames {
            for p in [f.r_foot, f.l_foot] {
                let d = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if d > max {
                    max = d;
                }
            }
        }
        max
    }
}

/// Parse a demo track from a reader. See the module docs for the schema.
pub fn load_demo_from_reader<R: BufRead>(reader: R) -> Result<DemoTrack> {
    let mut header_seen = false;
    // column order is fixed by the header; we still locate them by name
    let mut col: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut rows: BTreeMap<u64, BTreeMap<String, [f64; 2]>> = BTreeMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let row_num = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
        if !header_seen {
            for name in ["frame", "part", "x", "y"] {
                match fields.iter().position(|f| *f == name) {
                    Some(idx) => {
                        col.insert(
                            match name {
                                "frame" => "frame",
                                "part" => "part",
                                "x" => "x",
                                _ => "y",
                            },
                            idx,
                        );
                    }
                    None => {
                        return Err(Error::Schema(format!(
                            "missing column `{name}` in demo header"
                        )))
                    }
                }
            }
            header_seen = true;
            continue;
        }
        if fields.len() < 4 {
            return Err(Error::Data(format!(
                "row {row_num}: expected 4 fields, got {}",
                fields.len()
            )));
        }
        let frame: u64 = fields[col["frame"]]
            .parse()
            .map_err(|e| Error::Data(format!("row {row_num}, column frame: {e}")))?;
        let part = fields[col["part"]].to_string();
        if !DEMO_PARTS.contains(&part.as_str()) {
            return Err(Error::Data(format!(
                "row {row_num}, column part: unknown part `{part}`"
            )));
        }
        let mut coord = [0.0f64; 2];
        for (k, name) in ["x", "y"].iter().enumerate() {
            let raw = fields[col[*name]];
            let v: f64 = raw
                .parse()
                .map_err(|e| Error::Data(format!("row {row_num}, column {name}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "row {row_num}, column {name}: non-finite value `{raw}`"
                )));
            }
            coord[k] = v;
        }
        let entry = rows.entry(frame).or_default();
        if entry.insert(part.clone(), coord).is_some() {
            return Err(Error::Data(format!(
                "row {row_num}: duplicate part `{part}` for frame {frame}"
            )));
        }
    }

    if !header_seen {
        return Err(Error::Schema("empty demo file, expected header frame,part,x,y".into()));
    }

    let mut frames = Vec::with_capacity(rows.len());
    for (frame_index, parts) in &rows {
        let get = |name: &str| -> Result<[f64; 2]> {
            parts.get(name).copied().ok_or_else(|| {
                Error::Data(format!("frame {frame_index}: missing part `{name}`"))
            })
        };
        frames.push(DemoFrame {
            frame_index: *frame_index,
            r_knee: get("r_knee")?,
            l_knee: get("l_knee")?,
            r_foot: get("r_foot")?,
            l_foot: get("l_foot")?,
        });
    }

    if frames.len() < MIN_FRAMES {
        return Err(Error::InsufficientData(format!(
            "demo track has {} frames, need at least {MIN_FRAMES} (one full gait cycle)",
            frames.len()
        )));
    }

    Ok(DemoTrack {
        frames,
        frames_per_half_step: 4,
        scale: 1.0,
        cyclic: true,
    })
}

pub fn load_demo<P: AsRef<Path>>(path: P) -> Result<DemoTrack> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    load_demo_from_reader(BufReader::new(file))
}

/// Write a track in the load format. Floats use the shortest
/// round-trippable decimal form, so load -> save -> load is bit-exact.
pub fn save_demo<W: Write>(out: &mut W, track: &DemoTrack, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    writeln!(out, "frame,part,x,y")?;
    for f in &track.frames {
        for (part, coord) in DEMO_PARTS.iter().zip(f.parts().iter()) {
            writeln!(out, "{},{part},{},{}", f.frame_index, coord[0], coord[1])?;
        }
    }
    Ok(())
}

pub fn save_demo_file<P: AsRef<Path>>(
    path: P,
    track: &DemoTrack,
    comment: Option<&str>,
) -> Result<()> {
    let mut buf = Vec::new();
    save_demo(&mut buf, track, comment)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Rescale so the track's maximum pelvis-to-foot distance equals the
/// simulator's standing leg length.
pub fn normalize(track: &DemoTrack, leg_length: f64) -> Result<DemoTrack> {
    if !(leg_length > 0.0) {
        return Err(Error::Config(format!("leg_length must be > 0, got {leg_length}")));
    }
    let max_dist = track.max_foot_distance();
    if max_dist <= 0.0 {
        return Err(Error::Data(
            "degenerate demo track: maximum pelvis-to-foot distance is 0".into(),
        ));
    }
    let s = leg_length / max_dist;
    let scale_pt = |p: [f64; 2]| [p[0] * s, p[1] * s];
    let frames: Vec<DemoFrame> = track
        .frames
        .iter()
        .map(|f| DemoFrame {
            frame_index: f.frame_index,
            r_knee: scale_pt(f.r_knee),
            l_knee: scale_pt(f.l_knee),
            r_foot: scale_pt(f.r_foot),
            l_foot: scale_pt(f.l_foot),
        })
        .collect();
    for f in &frames {
        for p in f.parts() {
            if p[0].abs() > 2.0 || p[1].abs() > 2.0 {
                return Err(Error::Data(format!(
                    "frame {}: coordinate {:?} outside [-2, 2] m after normalization",
                    f.frame_index, p
                )));
            }
        }
    }
    Ok(DemoTrack {
        frames,
        frames_per_half_step: track.frames_per_half_step,
        scale: track.scale * s,
        cyclic: track.cyclic,
    })
}

/// Cyclic lookup: one demo frame per control step.
pub fn phase_lookup(track: &DemoTrack, control_step: u64) -> &DemoFrame {
    &track.frames[(control_step % track.frames.len() as u64) as usize]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn well_formed(frames: usize) -> String {
        let mut s = String::from("frame,part,x,y\n");
        for f in 0..frames {
            let ph = f as f64 * 0.3;
            s.push_str(&format!("{f},r_knee,{},{}\n", 30.0 * ph.sin(), -55.0));
            s.push_str(&format!("{f},l_knee,{},{}\n", -30.0 * ph.sin(), -55.0));
            s.push_str(&format!("{f},r_foot,{},{}\n", 50.0 * ph.sin(), -100.0));
            s.push_str(&format!("{f},l_foot,{},{}\n", -50.0 * ph.sin(), -100.0));
        }
        s
    }

    #[test]
    fn loads_well_formed_sixteen_frames() {
        let track = load_demo_from_reader(Cursor::new(well_formed(16))).unwrap();
        assert_eq!(track.len(), 16);
        assert!(track.cyclic);
        assert_eq!(track.frames_per_half_step, 4);
        // sorted by frame index
        for w in track.frames.windows(2) {
            assert!(w[0].frame_index < w[1].frame_index);
        }
    }

    #[test]
    fn rejects_duplicate_frame_part() {
        let mut text = well_formed(8);
        text.push_str("3,r_knee,1.0,2.0\n");
        let err = load_demo_from_reader(Cursor::new(text)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate") && msg.contains("row 34"), "{msg}");
    }

    #[test]
    fn rejects_nan_with_row_and_column() {
        let mut text = String::from("frame,part,x,y\n");
        for f in 0..8 {
            for part in DEMO_PARTS {
                if f == 2 && part == "l_foot" {
                    text.push_str(&format!("{f},{part},1.0,NaN\n"));
                } else {
                    text.push_str(&format!("{f},{part},1.0,-2.0\n"));
                }
            }
        }
        let err = load_demo_from_reader(Cursor::new(text)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("column y"), "{msg}");
        assert!(msg.contains("row 13"), "{msg}");
    }

    #[test]
    fn rejects_missing_column() {
        let text = "frame,part,x\n0,r_knee,1.0\n";
        let err = load_demo_from_reader(Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("missing column `y`"), "{err}");
    }

    #[test]
    fn rejects_too_few_frames() {
        let err = load_demo_from_reader(Cursor::new(well_formed(7))).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn normalize_scale_is_ratio_of_lengths() {
        // max pelvis-to-foot distance is exactly 100 units
        let mut text = String::from("frame,part,x,y\n");
        for f in 0..8 {
            text.push_str(&format!("{f},r_knee,0.0,-50.0\n"));
            text.push_str(&format!("{f},l_knee,0.0,-50.0\n"));
            text.push_str(&format!("{f},r_foot,0.0,-100.0\n"));
            text.push_str(&format!("{f},l_foot,0.0,-60.0\n"));
        }
        let track = load_demo_from_reader(Cursor::new(text)).unwrap();
        let norm = normalize(&track, 0.9).unwrap();
        assert!((norm.scale - 0.009).abs() < 1e-15);
        assert!((norm.frames[0].r_foot[1] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let track = load_demo_from_reader(Cursor::new(well_formed(16))).unwrap();
        let once = normalize(&track, 0.9).unwrap();
        let twice = normalize(&once, 0.9).unwrap();
        assert_eq!(once.frames, twice.frames);
        assert!((once.max_foot_distance() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn normalize_preserves_distance_ratios() {
        let track = load_demo_from_reader(Cursor::new(well_formed(16))).unwrap();
        let norm = normalize(&track, 0.9).unwrap();
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let before = dist(track.frames[3].r_knee, track.frames[5].l_foot);
        let after = dist(norm.frames[3].r_knee, norm.frames[5].l_foot);
        let expect = before * norm.scale;
        assert!((after - expect).abs() < 1e-12 * before.max(1.0));
    }

    #[test]
    fn normalize_rejects_degenerate_track() {
        let mut text = String::from("frame,part,x,y\n");
        for f in 0..8 {
            for part in DEMO_PARTS {
                text.push_str(&format!("{f},{part},0.0,0.0\n"));
            }
        }
        let track = load_demo_from_reader(Cursor::new(text)).unwrap();
        assert!(matches!(normalize(&track, 0.9), Err(Error::Data(_))));
    }

    #[test]
    fn phase_lookup_is_cyclic() {
        let track = load_demo_from_reader(Cursor::new(well_formed(12))).unwrap();
        let n = track.len() as u64;
        assert_eq!(phase_lookup(&track, 0), &track.frames[0]);
        assert_eq!(phase_lookup(&track, n), &track.frames[0]);
        assert_eq!(phase_lookup(&track, 3 * n + 5), &track.frames[5]);
        for step in 0..100 {
            assert_eq!(phase_lookup(&track, step), phase_lookup(&track, step + n));
        }
    }

    #[test]
    fn save_load_roundtrip_is_bit_identical() {
        let track = load_demo_from_reader(Cursor::new(well_formed(16))).unwrap();
        let norm = normalize(&track, 0.87).unwrap();
        let mut buf = Vec::new();
        save_demo(&mut buf, &norm, Some("cadence: 1 frame per control step")).unwrap();
        let reloaded = load_demo_from_reader(Cursor::new(&buf)).unwrap();
        assert_eq!(reloaded.frames, norm.frames);
        let mut buf2 = Vec::new();
        save_demo(&mut buf2, &reloaded, Some("cadence: 1 frame per control step")).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn comments_are_skipped() {
        let mut text = String::from("# style: test fixture\n# cadence: whatever\n");
        text.push_str(&well_formed(8));
        let track = load_demo_from_reader(Cursor::new(text)).unwrap();
        assert_eq!(track.len(), 8);
    }
}
