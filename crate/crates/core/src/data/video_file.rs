//! Bit-exact on-disk video format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "HWTS"
//! version u16      1
//! flags   u8       bit0 step labels, bit1 phase labels, bit2 delta_step
//! reserved u8      0
//! T       u32
//! obs_dim u32
//! obs     T*obs_dim f64, row-major
//! steps   T u16    (if bit0)
//! phases  T u16    (if bit1)
//! ```

use std::path::Path;

use ndarray::Array2;

use super::{DataError, VideoRecord};

const MAGIC: &[u8; 4] = b"HWTS";
const VERSION: u16 = 1;

const FLAG_STEPS: u8 = 1 << 0;
const FLAG_PHASES: u8 = 1 << 1;
const FLAG_DELTA: u8 = 1 << 2;

fn encode_labels(out: &mut Vec<u8>, labels: &[usize]) -> Result<(), DataError> {
    for &l in labels {
        if l > u16::MAX as usize {
            return Err(DataError::LabelOutOfRange {
                label: l,
                limit: u16::MAX as usize,
            });
        }
        out.extend_from_slice(&(l as u16).to_le_bytes());
    }
    Ok(())
}

/// Serializes a record. The file name is the caller's choice; by convention
/// the stem is the video id, which is how `read_video_file` recovers it.
pub fn write_video_file(record: &VideoRecord, path: &Path) -> Result<(), DataError> {
    let t = record.frames();
    if t == 0 {
        return Err(DataError::EmptyVideo);
    }
    if let Some(steps) = &record.step_labels {
        if steps.len() != t {
            return Err(DataError::Format(format!(
                "{} step labels for {t} frames",
                steps.len()
            )));
        }
    }
    if let Some(phases) = &record.phase_labels {
        if phases.len() != t {
            return Err(DataError::Format(format!(
                "{} phase labels for {t} frames",
                phases.len()
            )));
        }
    }
    let mut flags = 0u8;
    if record.step_labels.is_some() {
        flags |= FLAG_STEPS;
    }
    if record.phase_labels.is_some() {
        flags |= FLAG_PHASES;
    }
    if record.delta_step {
        flags |= FLAG_DELTA;
    }

    let mut buf = Vec::with_capacity(16 + t * record.obs_dim() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(flags);
    buf.push(0); // reserved
    buf.extend_from_slice(&(t as u32).to_le_bytes());
    buf.extend_from_slice(&(record.obs_dim() as u32).to_le_bytes());
    for v in record.obs.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(steps) = &record.step_labels {
        encode_labels(&mut buf, steps)?;
    }
    if let Some(phases) = &record.phase_labels {
        encode_labels(&mut buf, phases)?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Format("truncated payload".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn labels(&mut self, count: usize) -> Result<Vec<usize>, DataError> {
        let raw = self.take(count * 2)?;
        Ok(raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
            .collect())
    }
}

/// Reads a record back; the video id is the file stem.
pub fn read_video_file(path: &Path) -> Result<VideoRecord, DataError> {
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(DataError::Format("bad magic".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(DataError::Format(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let flags = cur.take(1)?[0];
    let reserved = cur.take(1)?[0];
    if reserved != 0 {
        return Err(DataError::Format(format!(
            "reserved byte must be 0, got {reserved}"
        )));
    }
    let t = cur.u32()? as usize;
    let obs_dim = cur.u32()? as usize;
    if t == 0 {
        return Err(DataError::EmptyVideo);
    }
    let raw = cur.take(t * obs_dim * 8)?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let obs = Array2::from_shape_vec((t, obs_dim), values)
        .map_err(|e| DataError::Format(e.to_string()))?;
    let step_labels = if flags & FLAG_STEPS != 0 {
        Some(cur.labels(t)?)
    } else {
        None
    };
    let phase_labels = if flags & FLAG_PHASES != 0 {
        Some(cur.labels(t)?)
    } else {
        None
    };
    if cur.pos != bytes.len() {
        return Err(DataError::Format(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(VideoRecord {
        video_id,
        obs,
        step_labels,
        phase_labels,
        delta_step: flags & FLAG_DELTA != 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn sample_record() -> VideoRecord {
        VideoRecord {
            video_id: "sample".into(),
            obs: arr2(&[
                [0.125, -3.5, 1e-300],
                [f64::MIN_POSITIVE, 2.0_f64.powi(-40), 7.25],
            ]),
            step_labels: Some(vec![3, 17]),
            phase_labels: Some(vec![1, 4]),
            delta_step: true,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample.hwts");
        let rec = sample_record();
        write_video_file(&rec, &path).unwrap();
        let back = read_video_file(&path).unwrap();
        assert_eq!(back.video_id, "sample");
        assert_eq!(back.step_labels, rec.step_labels);
        assert_eq!(back.phase_labels, rec.phase_labels);
        assert_eq!(back.delta_step, rec.delta_step);
        assert_eq!(back.obs.dim(), rec.obs.dim());
        for (a, b) in back.obs.iter().zip(rec.obs.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn optional_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phase_only.hwts");
        let mut rec = sample_record();
        rec.step_labels = None;
        rec.delta_step = false;
        write_video_file(&rec, &path).unwrap();
        let back = read_video_file(&path).unwrap();
        assert_eq!(back.step_labels, None);
        assert_eq!(back.phase_labels, rec.phase_labels);
        assert!(!back.delta_step);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hwts");
        write_video_file(&sample_record(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        let err = read_video_file(&path).unwrap_err();
        assert!(matches!(err, DataError::Format(ref m) if m.contains("magic")));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.hwts");
        write_video_file(&sample_record(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = read_video_file(&path).unwrap_err();
        assert!(matches!(err, DataError::Format(ref m) if m.contains("truncated")));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("long.hwts");
        write_video_file(&sample_record(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, bytes).unwrap();
        assert!(read_video_file(&path).is_err());
    }

    #[test]
    fn empty_video_rejected_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let rec = VideoRecord {
            video_id: "empty".into(),
            obs: Array2::zeros((0, 4)),
            step_labels: None,
            phase_labels: None,
            delta_step: false,
        };
        let err = write_video_file(&rec, &dir.path().join("e.hwts")).unwrap_err();
        assert!(matches!(err, DataError::EmptyVideo));
    }

    #[test]
    fn oversized_label_rejected_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = sample_record();
        rec.step_labels = Some(vec![0, 70_000]);
        let err = write_video_file(&rec, &dir.path().join("big.hwts")).unwrap_err();
        assert!(matches!(err, DataError::LabelOutOfRange { label: 70_000, .. }));
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v2.hwts");
        write_video_file(&sample_record(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 2;
        std::fs::write(&path, bytes).unwrap();
        let err = read_video_file(&path).unwrap_err();
        assert!(matches!(err, DataError::Format(ref m) if m.contains("version")));
    }
}
