//! Recording files: a CSV of samples plus an optional marker sidecar.
//!
//! The CSV header is `time,<label>,...`; each row holds the time in seconds
//! followed by one value per channel in μV. Values are written as the
//! shortest decimal that reads back to the same 32-bit float. Markers live
//! next to the CSV as `<stem>.markers.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::block::SampleBlock;
use crate::error::{Error, Result};
use crate::montage::Montage;
use crate::synth::GroundTruth;

/// Largest tolerated deviation of a time step from the median step (s).
pub const MAX_JITTER_SEC: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub samples: SampleBlock,
    pub markers: Option<GroundTruth>,
}

pub fn markers_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}.markers.json"))
}

pub fn write_recording(path: &Path, samples: &SampleBlock, montage: &Montage, markers: Option<&GroundTruth>) -> Result<()> {
    if samples.channel_count() != montage.len() {
        return Err(Error::Contract(format!(
            "{} channels for a {}-electrode montage",
            samples.channel_count(),
            montage.len()
        )));
    }
    let io = |e| Error::io(path, e);
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let header: Vec<&str> = std::iter::once("time").chain(montage.labels()).collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for i in 0..samples.len() {
        line.clear();
        line.push_str(&samples.time_of(i).to_string());
        for ch in &samples.channels {
            line.push(',');
            line.push_str(&(ch[i] as f32).to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    if let Some(m) = markers {
        let mp = markers_path(path);
        fs::write(&mp, m.to_json()).map_err(|e| Error::io(&mp, e))?;
    }
    Ok(())
}

/// Parses CSV text, reordering columns into montage order.
pub fn parse_recording(text: &str, montage: &Montage, source: &str) -> Result<SampleBlock> {
    let at = |line: usize| format!("{source}:{line}");
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(at(1), "empty recording"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"time") {
        return Err(Error::parse(at(hline), "first column must be 'time'"));
    }
    let mut slot = vec![None; montage.len()];
    for (k, label) in cols[1..].iter().enumerate() {
        let i = montage
            .index_of(label)
            .ok_or_else(|| Error::parse(at(hline), format!("unknown channel label {label:?}")))?;
        if slot[i].replace(k).is_some() {
            return Err(Error::parse(at(hline), format!("duplicate channel label {label:?}")));
        }
    }
    if let Some(i) = slot.iter().position(Option::is_none) {
        return Err(Error::parse(
            at(hline),
            format!("missing channel {}", montage.electrodes()[i].name),
        ));
    }
    let slot: Vec<usize> = slot.into_iter().map(Option::unwrap).collect();

    let mut times = Vec::new();
    let mut lines_of = Vec::new();
    let mut channels = vec![Vec::new(); montage.len()];
    let mut row = vec![0.0f64; cols.len() - 1];
    for (ln, line) in lines {
        let mut fields = line.split(',').map(str::trim);
        let t: f64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| Error::parse(at(ln), "bad time value"))?;
        let mut count = 0;
        for (k, f) in fields.enumerate() {
            if k >= row.len() {
                return Err(Error::parse(at(ln), format!("expected {} columns", cols.len())));
            }
            row[k] = f
                .parse::<f32>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(at(ln), format!("bad value {f:?} in column {}", cols[k + 1])))?
                as f64;
            count += 1;
        }
        if count != row.len() {
            return Err(Error::parse(at(ln), format!("expected {} columns, found {}", cols.len(), count + 1)));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::parse(at(ln), format!("time {t} does not increase (previous {prev})")));
            }
        }
        times.push(t);
        lines_of.push(ln);
        for (c, &k) in slot.iter().enumerate() {
            channels[c].push(row[k]);
        }
    }
    if times.len() < 2 {
        return Err(Error::parse(at(hline), "need at least two samples to infer the sampling rate"));
    }
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = steps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    for (k, s) in steps.iter_mut().enumerate() {
        if (*s - median).abs() > MAX_JITTER_SEC {
            return Err(Error::parse(
                at(lines_of[k + 1]),
                format!("time step {s} deviates from the median {median} by more than {MAX_JITTER_SEC} s"),
            ));
        }
    }
    let mut fs = 1.0 / median;
    if (fs - fs.round()).abs() < 1e-6 * fs {
        fs = fs.round();
    }
    SampleBlock::new(times[0], fs, channels)
}

pub fn load_recording(path: &Path, montage: &Montage) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples = parse_recording(&text, montage, &path.display().to_string())?;
    let mp = markers_path(path);
    let markers = if mp.exists() {
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        Some(GroundTruth::from_json(&text)?)
    } else {
        None
    };
    Ok(Recording { samples, markers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (Montage, SampleBlock) {
        let m = Montage::standard();
        let channels = (0..32)
            .map(|c| (0..20).map(|i| ((c * 7 + i) as f64 * 0.37).sin() * 13.7).collect())
            .collect();
        (m, SampleBlock::new(0.0, 256.0, channels).unwrap())
    }

    fn to_csv(m: &Montage, b: &SampleBlock) -> String {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_recording(&p, b, m, None).unwrap();
        fs::read_to_string(p).unwrap()
    }

    #[test]
    fn round_trip_at_f32_precision() {
        let (m, b) = small();
        let back = parse_recording(&to_csv(&m, &b), &m, "r.csv").unwrap();
        assert_eq!(back.fs, 256.0);
        for (x, y) in back.channels.iter().flatten().zip(b.channels.iter().flatten()) {
            assert_eq!(*x as f32, *y as f32);
            assert_eq!(*x, (*y as f32) as f64);
        }
    }

    #[test]
    fn shuffled_columns_are_reordered() {
        let (m, b) = small();
        let text = to_csv(&m, &b);
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        // swap the Fp1 and O2 columns everywhere
        let (i, j) = (1 + m.index_of("Fp1").unwrap(), 1 + m.index_of("O2").unwrap());
        let swapped: String = rows
            .into_iter()
            .map(|mut r| {
                r.swap(i, j);
                r.join(",") + "\n"
            })
            .collect();
        let back = parse_recording(&swapped, &m, "s.csv").unwrap();
        let orig = parse_recording(&text, &m, "r.csv").unwrap();
        assert_eq!(back, orig);
    }

    #[test]
    fn bad_files_name_the_problem() {
        let (m, b) = small();
        let text = to_csv(&m, &b);
        let missing = text.replacen(",Oz", ",Xx", 1);
        let e = parse_recording(&missing, &m, "f.csv").unwrap_err().to_string();
        assert!(e.contains("Xx"), "{e}");
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let dropped: String = text
            .lines()
            .map(|l| l.split(',').enumerate().filter(|(k, _)| header[*k] != "Cz").map(|(_, v)| v).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        let e = parse_recording(&dropped, &m, "f.csv").unwrap_err().to_string();
        assert!(e.contains("missing channel Cz"), "{e}");

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[6] = lines[6].replacen(&lines[6].split(',').next().unwrap().to_string(), "0.01", 1);
        let e = parse_recording(&lines.join("\n"), &m, "f.csv").unwrap_err();
        match e {
            Error::Parse { location, .. } => assert_eq!(location, "f.csv:7"),
            other => panic!("{other}"),
        }

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let t = lines[10].split(',').next().unwrap().to_string();
        let jittered = (t.parse::<f64>().unwrap() + 1e-4).to_string();
        lines[10] = lines[10].replacen(&t, &jittered, 1);
        let e = parse_recording(&lines.join("\n"), &m, "f.csv").unwrap_err().to_string();
        assert!(e.contains("f.csv:11") && e.contains("median"), "{e}");
    }

    #[test]
    fn markers_sidecar_travels_with_the_csv() {
        let m = Montage::standard();
        let s = crate::synth::Scenario::new(3.0, 256.0, 2)
            .with_event(crate::synth::EventKind::Blink, 1.0, 1.3)
            .with_event(crate::synth::EventKind::EyesClosed, 1.5, 2.5);
        let out = crate::synth::generate(&s, &m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("session.csv");
        write_recording(&p, &out.samples, &m, Some(&out.truth)).unwrap();
        assert!(dir.path().join("session.markers.json").exists());
        let rec = load_recording(&p, &m).unwrap();
        assert_eq!(rec.markers.as_ref().unwrap().events.len(), s.events.len());
        assert_eq!(rec.samples.fs, 256.0);
        assert_eq!(rec.samples.len(), out.samples.len());
    }
}
