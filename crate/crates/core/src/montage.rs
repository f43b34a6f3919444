//! 32-channel electrode geometry.
//!
//! Positions live on the unit sphere with x toward the right ear, y toward the
//! nose and z through the vertex (Cz). Texture coordinates come from an
//! azimuthal-equidistant projection centred on Cz: the electrode ring at 90°
//! from the vertex lands on a circle of radius [`UV_RING_RADIUS`], and the head
//! outline (the unit disc of the texture) extends to [`MAX_INCLINATION`].

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of channels in the canonical cap.
pub const CHANNEL_COUNT: usize = 32;

/// Radius in uv space of the ring at 90° from the vertex.
pub const UV_RING_RADIUS: f64 = 0.4;

/// Inclination (radians) mapped onto the edge of the texture disc.
pub const MAX_INCLINATION: f64 = 0.5 / UV_RING_RADIUS * FRAC_PI_2;

const STANDARD_TABLE: &str = include_str!("../data/standard_32.txt");

/// Labels the pipelines depend on; any imported cap must carry them.
pub const REQUIRED_LABELS: [&str; 14] = [
    "C3", "Cz", "C4", "P3", "Pz", "P4", "PO3", "PO4", "O1", "Oz", "O2", "AFz", "Fp1", "Fp2",
];

const LAPLACIAN: [(&str, [&str; 4]); 3] = [
    ("C3", ["FC5", "FC1", "CP5", "CP1"]),
    ("C4", ["FC2", "FC6", "CP2", "CP6"]),
    ("Cz", ["FC1", "FC2", "CP1", "CP2"]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Vision,
    MeditationPair,
    Blink,
    MotorCenters,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::Vision,
        Region::MeditationPair,
        Region::Blink,
        Region::MotorCenters,
    ];

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Region::Vision => &["P3", "Pz", "P4", "PO3", "PO4", "O1", "Oz", "O2"],
            Region::MeditationPair => &["AFz", "Pz"],
            Region::Blink => &["Fp1", "Fp2"],
            Region::MotorCenters => &["C3", "Cz", "C4"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub name: String,
    pub pos: [f64; 3],
    pub uv: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Montage {
    electrodes: Vec<Electrode>,
    index: HashMap<String, usize>,
    laplacian: BTreeMap<String, Vec<String>>,
}

impl Montage {
    /// The canonical 32-channel cap built from the embedded coordinate table.
    pub fn standard() -> Montage {
        let electrodes = STANDARD_TABLE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|line| {
                let mut cols = line.split_whitespace();
                let name = cols.next().expect("label");
                let theta: f64 = cols.next().and_then(|s| s.parse().ok()).expect("theta");
                let phi: f64 = cols.next().and_then(|s| s.parse().ok()).expect("phi");
                let (theta, phi) = (theta.to_radians(), phi.to_radians());
                let pos = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                Electrode {
                    name: name.to_string(),
                    uv: sphere_to_uv(pos),
                    pos,
                }
            })
            .collect();
        Montage::from_electrodes(electrodes).expect("embedded table is valid")
    }

    /// Builds a montage from an ordered electrode list, enforcing the cap invariants.
    pub fn from_electrodes(electrodes: Vec<Electrode>) -> Result<Montage> {
        if electrodes.len() != CHANNEL_COUNT {
            return Err(Error::Config(format!(
                "montage must have {CHANNEL_COUNT} electrodes, got {}",
                electrodes.len()
            )));
        }
        let mut index = HashMap::with_capacity(electrodes.len());
        for (i, e) in electrodes.iter().enumerate() {
            if index.insert(e.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate electrode label {}", e.name)));
            }
            let norm = e.pos.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "electrode {} is not on the unit sphere (|pos| = {norm})",
                    e.name
                )));
            }
            if e.uv.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Config(format!(
                    "electrode {} has uv outside [0,1]",
                    e.name
                )));
            }
        }
        for label in REQUIRED_LABELS {
            if !index.contains_key(label) {
                return Err(Error::Config(format!("montage lacks required label {label}")));
            }
        }
        let mut laplacian = BTreeMap::new();
        for (center, neighbors) in LAPLACIAN {
            if neighbors.iter().all(|n| index.contains_key(*n)) {
                laplacian.insert(
                    center.to_string(),
                    neighbors.iter().map(|n| n.to_string()).collect(),
                );
            }
        }
        Ok(Montage {
            electrodes,
            index,
            laplacian,
        })
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.electrodes
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.electrodes.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn electrode(&self, label: &str) -> Option<&Electrode> {
        self.index_of(label).map(|i| &self.electrodes[i])
    }

    pub fn laplacian_neighbors(&self, center: &str) -> Option<&[String]> {
        self.laplacian.get(center).map(Vec::as_slice)
    }

    pub fn laplacian_centers(&self) -> impl Iterator<Item = &str> {
        self.laplacian.keys().map(String::as_str)
    }

    /// Channel indices of a named region, in region order.
    pub fn region_indices(&self, region: Region) -> Vec<usize> {
        region
            .labels()
            .iter()
            .map(|l| self.index[*l])
            .collect()
    }

    /// Serializes as `label x y z u v` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# label x y z u v\n");
        for e in &self.electrodes {
            let [x, y, z] = e.pos;
            let [u, v] = e.uv;
            writeln!(out, "{} {x:?} {y:?} {z:?} {u:?} {v:?}", e.name).unwrap();
        }
        out
    }

    /// Parses the `label x y z u v` document written by [`Montage::to_text`].
    pub fn from_text(text: &str) -> Result<Montage> {
        let mut electrodes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let location = format!("line {}", lineno + 1);
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(Error::parse(
                    location,
                    format!("expected 6 columns, found {}", cols.len()),
                ));
            }
            let mut nums = [0.0f64; 5];
            for (slot, col) in nums.iter_mut().zip(&cols[1..]) {
                *slot = col
                    .parse()
                    .map_err(|_| Error::parse(location.clone(), format!("bad number {col:?}")))?;
            }
            let [x, y, z, u, v] = nums;
            let norm = (x * x + y * y + z * z).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::parse(location, "position is not unit-norm"));
            }
            electrodes.push(Electrode {
                name: cols[0].to_string(),
                pos: [x, y, z],
                uv: [u, v],
            });
        }
        Montage::from_electrodes(electrodes)
    }
}

/// Great-circle distance between two unit vectors, in radians.
pub fn geodesic_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Azimuthal-equidistant projection about the vertex.
pub fn sphere_to_uv(pos: [f64; 3]) -> [f64; 2] {
    let inclination = pos[2].clamp(-1.0, 1.0).acos();
    let horiz = pos[0].hypot(pos[1]);
    if horiz < 1e-15 {
        return [0.5, 0.5];
    }
    let r = UV_RING_RADIUS * inclination / FRAC_PI_2;
    [0.5 + r * pos[0] / horiz, 0.5 - r * pos[1] / horiz]
}

/// Inverse of [`sphere_to_uv`]; `None` outside the head outline.
pub fn uv_to_sphere(uv: [f64; 2]) -> Option<[f64; 3]> {
    let scale = FRAC_PI_2 / UV_RING_RADIUS;
    let dx = (uv[0] - 0.5) * scale;
    let dy = -(uv[1] - 0.5) * scale;
    let inclination = dx.hypot(dy);
    if inclination > MAX_INCLINATION {
        return None;
    }
    if inclination < 1e-15 {
        return Some([0.0, 0.0, 1.0]);
    }
    let s = inclination.sin() / inclination;
    Some([s * dx, s * dy, inclination.cos()])
}

/// Pixel containing a uv point on a `width`×`height` grid.
pub fn uv_to_pixel(uv: [f64; 2], width: usize, height: usize) -> (usize, usize) {
    let col = ((uv[0] * width as f64).floor() as usize).min(width - 1);
    let row = ((uv[1] * height as f64).floor() as usize).min(height - 1);
    (col, row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::f64::consts::PI;

    #[test]
    fn standard_has_32_unique_electrodes() {
        let m = Montage::standard();
        assert_eq!(m.len(), 32);
        let names: HashSet<_> = m.labels().collect();
        assert_eq!(names.len(), 32);
        for label in REQUIRED_LABELS {
            assert!(names.contains(label), "{label}");
        }
    }

    #[test]
    fn positions_are_unit_and_uv_in_range() {
        for e in Montage::standard().electrodes() {
            let n = dot(e.pos, e.pos).sqrt();
            assert!((n - 1.0).abs() < 1e-9, "{}", e.name);
            assert!(e.uv.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn cz_is_the_vertex() {
        let m = Montage::standard();
        assert_eq!(m.electrode("Cz").unwrap().pos, [0.0, 0.0, 1.0]);
        assert_eq!(m.electrode("Cz").unwrap().uv, [0.5, 0.5]);
    }

    #[test]
    fn laplacian_neighbors_are_the_four_nearest() {
        let m = Montage::standard();
        assert_eq!(
            m.laplacian_neighbors("C3").unwrap(),
            ["FC5", "FC1", "CP5", "CP1"]
        );
        for center in ["C3", "C4", "Cz"] {
            let c = m.electrode(center).unwrap().pos;
            let mut by_dist: Vec<(f64, &str)> = m
                .electrodes()
                .iter()
                .filter(|e| e.name != center)
                .map(|e| (geodesic_distance(c, e.pos), e.name.as_str()))
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            let nearest: HashSet<&str> = by_dist[..4].iter().map(|p| p.1).collect();
            let declared: HashSet<&str> = m
                .laplacian_neighbors(center)
                .unwrap()
                .iter()
                .map(String::as_str)
                .collect();
            assert_eq!(nearest, declared, "{center}");
            // strictly separated from the fifth
            assert!(by_dist[4].0 - by_dist[3].0 > 1e-3);
        }
    }

    #[test]
    fn regions_match_named_sets() {
        let m = Montage::standard();
        let vision: Vec<&str> = m
            .region_indices(Region::Vision)
            .into_iter()
            .map(|i| m.electrodes()[i].name.as_str())
            .collect();
        assert_eq!(vision, ["P3", "Pz", "P4", "PO3", "PO4", "O1", "Oz", "O2"]);
        assert_eq!(Region::MeditationPair.labels(), ["AFz", "Pz"]);
        assert_eq!(Region::MotorCenters.labels(), ["C3", "Cz", "C4"]);
    }

    #[test]
    fn geodesic_examples() {
        let m = Montage::standard();
        let cz = m.electrode("Cz").unwrap().pos;
        assert_eq!(geodesic_distance(cz, cz), 0.0);
        let p = [0.6, 0.0, 0.8];
        assert!((geodesic_distance(p, [-0.6, 0.0, -0.8]) - PI).abs() < 1e-12);

        // O1 = (-sin18°, -cos18°, 0), O2 = (sin18°, -cos18°, 0)
        // cos d = cos²18° - sin²18° = cos 36°
        let o1 = m.electrode("O1").unwrap().pos;
        let o2 = m.electrode("O2").unwrap().pos;
        assert!((geodesic_distance(o1, o2) - 36f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn triangle_inequality_on_all_triples() {
        let m = Montage::standard();
        let pos: Vec<_> = m.electrodes().iter().map(|e| e.pos).collect();
        for a in &pos {
            for b in &pos {
                for c in &pos {
                    let ab = geodesic_distance(*a, *b);
                    let bc = geodesic_distance(*b, *c);
                    let ac = geodesic_distance(*a, *c);
                    assert!(ac <= ab + bc + 1e-12);
                }
            }
        }
    }

    #[test]
    fn uv_pixels_are_distinct_at_64() {
        let m = Montage::standard();
        let pixels: HashSet<_> = m
            .electrodes()
            .iter()
            .map(|e| uv_to_pixel(e.uv, 64, 64))
            .collect();
        assert_eq!(pixels.len(), 32);
    }

    #[test]
    fn uv_projection_round_trips() {
        for e in Montage::standard().electrodes() {
            let back = uv_to_sphere(e.uv).unwrap();
            for k in 0..3 {
                assert!((back[k] - e.pos[k]).abs() < 1e-12, "{}", e.name);
            }
        }
        assert!(uv_to_sphere([0.0, 0.0]).is_none());
    }

    #[test]
    fn text_round_trip() {
        let m = Montage::standard();
        let back = Montage::from_text(&m.to_text()).unwrap();
        assert_eq!(back.electrodes(), m.electrodes());
        assert_eq!(back.laplacian_neighbors("Cz"), m.laplacian_neighbors("Cz"));
    }

    #[test]
    fn text_import_rejects_bad_documents() {
        let m = Montage::standard();
        let text = m.to_text();
        let short: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Montage::from_text(&short), Err(Error::Config(_))));
        let broken = text.replacen("Fp1 ", "Fp1 nope ", 1);
        assert!(matches!(Montage::from_text(&broken), Err(Error::Parse { .. })));
        let renamed = text.replacen("Oz ", "Iz ", 1);
        assert!(Montage::from_text(&renamed).is_err());
    }
}
