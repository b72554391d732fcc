//! Reference speed traces for the vehicle the platoon follows.
//!
//! A cycle is an ordered list of (time, speed) samples.  Files are plain
//! CSV: optional `time,speed` header, `#` comment lines, and an optional
//! `# units=mph` (or `km/h`, `m/s`) annotation.  Everything is stored in
//! m/s internally.  The simulator resamples to its control period and asks
//! for short speed previews ahead of the current step.
//!
//! Two deterministic synthetic cycles are built in: a 60 s stop-and-go
//! sawtooth for quick tests, and a 600 s aggressive highway cycle with
//! hard launches, cruise oscillations, and three full stops for full-length
//! offline runs.  Standard dynamometer schedules (e.g. EPA US06) are not
//! redistributed here; `scripts/fetch_us06.sh` downloads one into `data/`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{Error, Result};

pub const MPH_TO_MS: f64 = 0.44704;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    MetersPerSecond,
    MilesPerHour,
    KilometersPerHour,
}

impl serde::Serialize for Units {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Units {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl Units {
    pub fn to_ms(self, speed: f64) -> f64 {
        match self {
            Units::MetersPerSecond => speed,
            Units::MilesPerHour => speed * MPH_TO_MS,
            Units::KilometersPerHour => speed / 3.6,
        }
    }
}

impl FromStr for Units {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m/s" | "ms" | "mps" => Ok(Units::MetersPerSecond),
            "mph" => Ok(Units::MilesPerHour),
            "km/h" | "kmh" | "kph" => Ok(Units::KilometersPerHour),
            other => Err(format!("unknown speed units '{other}' (use m/s, mph, or km/h)")),
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Units::MetersPerSecond => write!(f, "m/s"),
            Units::MilesPerHour => write!(f, "mph"),
            Units::KilometersPerHour => write!(f, "km/h"),
        }
    }
}

/// Speed trace in m/s with strictly increasing time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    pub samples: Vec<(f64, f64)>,
    pub name: String,
    pub source_units: Units,
}

impl DriveCycle {
    pub fn from_samples(name: &str, samples: Vec<(f64, f64)>) -> Result<Self> {
        let cycle =
            DriveCycle { samples, name: name.to_string(), source_units: Units::MetersPerSecond };
        cycle.validate()?;
        Ok(cycle)
    }

    fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Domain(format!("cycle '{}' has no samples", self.name)));
        }
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Domain(format!(
                    "cycle '{}': time stamps must strictly increase ({} then {})",
                    self.name, w[0].0, w[1].0
                )));
            }
        }
        if let Some((t, v)) = self.samples.iter().find(|(_, v)| *v < 0.0) {
            return Err(Error::Domain(format!(
                "cycle '{}': negative speed {v} at t={t}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.0).unwrap_or(0.0)
            - self.samples.first().map(|s| s.0).unwrap_or(0.0)
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    /// Number of control steps (= samples) once resampled.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Speed at step `k` of a resampled cycle, holding the last sample
    /// beyond the end.
    pub fn speed_at(&self, k: usize) -> f64 {
        let idx = k.min(self.samples.len() - 1);
        self.samples[idx].1
    }

    /// Speeds at steps k+1 .. k+tp, holding the final speed past the end.
    pub fn preview(&self, k: usize, tp: usize) -> Vec<f64> {
        (1..=tp).map(|s| self.speed_at(k + s)).collect()
    }

    /// Linear interpolation onto a uniform grid with period `ts`, starting
    /// at the first sample's time.  The last grid point lands at or just
    /// past the final sample (held), so endpoint values survive exactly.
    pub fn resample(&self, ts: f64) -> Result<DriveCycle> {
        if !(ts > 0.0) {
            return Err(Error::Domain(format!("resample period must be positive, got {ts}")));
        }
        let t0 = self.samples[0].0;
        let t_end = self.samples.last().unwrap().0;
        let steps = ((t_end - t0) / ts - 1e-9).ceil().max(0.0) as usize;
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = t0 + k as f64 * ts;
            out.push((t, self.interpolate(t)));
        }
        DriveCycle::from_samples(&self.name, out).map(|mut c| {
            c.source_units = self.source_units;
            c
        })
    }

    fn interpolate(&self, t: f64) -> f64 {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        // binary search for the bracketing segment
        let mut lo = 0;
        let mut hi = s.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s[mid].0 <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, v0) = s[lo];
        let (t1, v1) = s[hi];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Canonical on-disk form: `# units=m/s`, header, one `time,speed` line
    /// per sample with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# units=m/s\ntime,speed\n");
        for (t, v) in &self.samples {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}

/// Parses a cycle file.  `units` is the caller's override; a `# units=...`
/// annotation in the file applies when no override is given; default m/s.
pub fn load_cycle(path: &Path, units: Option<Units>) -> Result<DriveCycle> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::CycleNotFound(path.to_path_buf())
        } else {
            Error::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".to_string());
    parse_cycle(&text, &name, units, path)
}

fn parse_cycle(
    text: &str,
    name: &str,
    units_override: Option<Units>,
    path: &Path,
) -> Result<DriveCycle> {
    let err = |line: usize, msg: String| Error::CycleParse { path: PathBuf::from(path), line, msg };
    let mut file_units: Option<Units> = None;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(u) = rest.strip_prefix("units=") {
                file_units = Some(Units::from_str(u).map_err(|e| err(lineno, e))?);
            }
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("time") {
            continue; // header
        }
        let mut parts = line.split(',');
        let t_str = parts.next().unwrap_or("");
        let v_str = parts.next().ok_or_else(|| err(lineno, "expected 'time,speed'".to_string()))?;
        if parts.next().is_some() {
            return Err(err(lineno, "expected exactly two fields".to_string()));
        }
        let t: f64 = t_str
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad time value '{}'", t_str.trim())))?;
        let v: f64 = v_str
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad speed value '{}'", v_str.trim())))?;
        if let Some((prev_t, _)) = samples.last() {
            if t <= *prev_t {
                return Err(err(
                    lineno,
                    format!("time stamps must strictly increase ({prev_t} then {t})"),
                ));
            }
        }
        if v < 0.0 {
            return Err(err(lineno, format!("negative speed {v}")));
        }
        samples.push((t, v));
    }
    if samples.is_empty() {
        return Err(err(1, "no samples in file".to_string()));
    }
    let units = units_override.or(file_units).unwrap_or(Units::MetersPerSecond);
    for (_, v) in samples.iter_mut() {
        *v = units.to_ms(*v);
    }
    let mut cycle = DriveCycle::from_samples(name, samples)?;
    cycle.source_units = units;
    Ok(cycle)
}

/// Piecewise-linear knot helper for the synthetic cycles.
fn from_knots(name: &str, knots: &[(f64, f64)]) -> DriveCycle {
    DriveCycle::from_samples(name, knots.to_vec())
        .expect("synthetic knots are valid")
        .resample(1.0)
        .expect("unit resample")
}

/// 60 s stop-and-go sawtooth: three launch/brake triangles to 12 m/s,
/// ending at rest.  Quick deterministic input for tests.
pub fn sawtooth60() -> DriveCycle {
    from_knots(
        "sawtooth60",
        &[
            (0.0, 0.0),
            (2.0, 0.0),
            (8.0, 12.0),
            (12.0, 12.0),
            (18.0, 0.0),
            (20.0, 0.0),
            (26.0, 12.0),
            (30.0, 12.0),
            (36.0, 0.0),
            (38.0, 0.0),
            (44.0, 12.0),
            (48.0, 12.0),
            (54.0, 0.0),
            (60.0, 0.0),
        ],
    )
}

/// 600 s synthetic aggressive highway cycle: a gentle first pull-away, hard
/// urban launches with three full stops, a sustained high-speed segment with
/// cruise oscillations, and a final deceleration to rest.  Peak speed
/// 35.9 m/s.  Serves as the full-length offline stand-in when no downloaded
/// dynamometer schedule is present.
pub fn transient600() -> DriveCycle {
    from_knots(
        "transient600",
        &[
            (0.0, 0.0),
            (5.0, 0.0),
            (15.0, 10.0),
            (21.0, 22.0),
            (27.0, 16.0),
            (34.0, 0.0),
            (39.0, 0.0),
            (47.0, 20.0),
            (55.0, 28.0),
            (70.0, 28.0),
            (78.0, 12.0),
            (84.0, 0.0),
            (90.0, 0.0),
            (100.0, 30.0),
            (115.0, 33.0),
            (125.0, 30.5),
            (135.0, 33.5),
            (145.0, 31.0),
            (150.0, 33.0),
            (160.0, 35.9),
            (185.0, 35.9),
            (200.0, 28.0),
            (215.0, 34.0),
            (225.0, 31.0),
            (235.0, 34.5),
            (245.0, 32.0),
            (255.0, 34.8),
            (275.0, 20.0),
            (285.0, 26.0),
            (305.0, 8.0),
            (315.0, 0.0),
            (322.0, 0.0),
            (332.0, 22.0),
            (345.0, 30.0),
            (355.0, 27.5),
            (365.0, 31.0),
            (375.0, 28.5),
            (385.0, 31.5),
            (390.0, 30.0),
            (405.0, 35.0),
            (415.0, 33.0),
            (425.0, 35.5),
            (435.0, 33.5),
            (440.0, 35.0),
            (460.0, 28.0),
            (480.0, 24.0),
            (495.0, 31.0),
            (505.0, 29.0),
            (515.0, 31.5),
            (525.0, 29.5),
            (530.0, 31.0),
            (560.0, 12.0),
            (580.0, 3.0),
            (592.0, 0.0),
            (600.0, 0.0),
        ],
    )
}

/// Resolves a `--cycle` argument: an existing file path, or the name of a
/// built-in synthetic cycle (`sawtooth60`, `transient600`).
pub fn resolve_cycle(name_or_path: &str, units: Option<Units>) -> Result<DriveCycle> {
    let path = Path::new(name_or_path);
    if path.exists() {
        return load_cycle(path, units);
    }
    match name_or_path {
        "sawtooth60" => Ok(sawtooth60()),
        "transient600" => Ok(transient600()),
        _ => Err(Error::CycleNotFound(path.to_path_buf())),
    }
}
