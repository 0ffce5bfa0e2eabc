//! Synthetic urban scenes: a vehicle with a camera rig driving through a
//! corridor of building facades covered in sparse keypoints.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::associate::{sees, CameraBuckets};
use crate::model::{Camera, CameraId, CameraIntrinsics, CameraPose, ModelError, Point3, PointId, Scene};
use crate::num::format_sig9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid rig: {0}")]
    Rig(String),
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("invalid world: {0}")]
    World(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub n_cams: u32,
    /// Frames per second.
    pub framerate: f64,
    /// Sensor yaw relative to the driving direction, degrees, counterclockwise.
    pub mount_yaw_deg: Vec<f64>,
    /// Sensor offset in the vehicle frame (forward, left, up), meters.
    pub mount_offset: Vec<[f64; 3]>,
    /// Height of the rig above the road.
    pub mount_height: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self::with_cams(7)
    }
}

impl RigConfig {
    /// `n` sensors spread evenly around the vertical axis, 3840x1920 at 30 Hz.
    pub fn with_cams(n: u32) -> Self {
        Self {
            n_cams: n,
            framerate: 30.0,
            mount_yaw_deg: (0..n).map(|k| k as f64 * 360.0 / n.max(1) as f64).collect(),
            mount_offset: vec![[0.0; 3]; n as usize],
            mount_height: 1.6,
            fx: 1920.0,
            fy: 1920.0,
            cx: 1920.0,
            cy: 960.0,
            width: 3840,
            height: 1920,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_cams < 1 {
            return Err(SynthError::Rig("at least one camera required".into()));
        }
        if !(self.framerate > 0.0) {
            return Err(SynthError::Rig(format!("framerate {} must be positive", self.framerate)));
        }
        if self.mount_yaw_deg.len() != self.n_cams as usize || self.mount_offset.len() != self.n_cams as usize {
            return Err(SynthError::Rig("one mounting pose per camera required".into()));
        }
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Straight,
    /// Two straight passes crossing at the origin.
    Intersecting,
    /// Approach, one full loop around a circle, exit.
    Roundabout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// Seconds.
    pub duration: f64,
    /// Meters per second.
    pub speed: f64,
    /// Heading of the first pass and, for intersecting runs, of the second.
    pub headings_deg: [f64; 2],
    /// Roundabout radius, meters.
    pub radius: f64,
    /// Standard deviation of lateral position jitter, meters.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Straight,
            duration: 10.0,
            speed: 10.0,
            headings_deg: [0.0, 120.0],
            radius: 15.0,
            jitter: 0.0,
            seed: 1,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Trajectory(m));
        if !(self.duration > 0.0) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if !(self.speed > 0.0) {
            return bad(format!("speed {} must be positive", self.speed));
        }
        if self.kind == TrajectoryKind::Roundabout && !(self.radius > 0.0) {
            return bad(format!("radius {} must be positive", self.radius));
        }
        if !(self.jitter >= 0.0) {
            return bad(format!("jitter {} must be non-negative", self.jitter));
        }
        Ok(())
    }

    /// Time to drive once around the roundabout.
    pub fn circle_time(&self) -> f64 {
        2.0 * PI * self.radius / self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: [f64; 2],
    /// Radians, counterclockwise from +x.
    pub heading: f64,
    pub time: f64,
    /// Index of the continuous pass this sample belongs to.
    pub pass: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<VehicleState>,
    /// `states.len() * n_cams` cameras; id = frame * n_cams + sensor.
    pub cameras: Vec<Camera<f64>>,
}

fn q9(v: f64) -> f64 {
    format_sig9(v).parse().expect("formatted float parses")
}

fn vehicle_states(spec: &TrajectorySpec, framerate: f64) -> Vec<VehicleState> {
    let n = (spec.duration * framerate + 1e-9).floor() as usize;
    let dir = |deg: f64| {
        let a = deg.to_radians();
        [a.cos(), a.sin()]
    };
    let mut out = Vec::with_capacity(n);
    match spec.kind {
        TrajectoryKind::Straight => {
            let d = dir(spec.headings_deg[0]);
            for i in 0..n {
                let t = i as f64 / framerate;
                let s = spec.speed * t;
                out.push(VehicleState { position: [s * d[0], s * d[1]], heading: spec.headings_deg[0].to_radians(), time: t, pass: 0 });
            }
        }
        TrajectoryKind::Intersecting => {
            let na = n / 2;
            for (pass, range) in [(0u32, 0..na), (1, na..n)] {
                let d = dir(spec.headings_deg[pass as usize]);
                let len = range.len();
                let half = spec.speed * len.saturating_sub(1) as f64 / framerate / 2.0;
                for (k, i) in range.enumerate() {
                    let s = spec.speed * k as f64 / framerate - half;
                    out.push(VehicleState {
                        position: [s * d[0], s * d[1]],
                        heading: spec.headings_deg[pass as usize].to_radians(),
                        time: i as f64 / framerate,
                        pass,
                    });
                }
            }
        }
        TrajectoryKind::Roundabout => {
            // circle centered at the origin, entered at (0, -r) heading +x
            let r = spec.radius;
            let tc = spec.circle_time();
            let approach = ((spec.duration - tc) / 2.0).max(0.0);
            for i in 0..n {
                let t = i as f64 / framerate;
                let (position, heading) = if t < approach {
                    ([-(approach - t) * spec.speed, -r], 0.0)
                } else if t < approach + tc {
                    let th = (t - approach) * spec.speed / r;
                    ([r * th.sin(), -r * th.cos()], th)
                } else {
                    ([(t - approach - tc) * spec.speed, -r], 0.0)
                };
                out.push(VehicleState { position, heading, time: t, pass: 0 });
            }
        }
    }
    if spec.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.jitter).expect("validated jitter");
        for s in &mut out {
            let e = normal.sample(&mut rng);
            s.position[0] -= e * s.heading.sin();
            s.position[1] += e * s.heading.cos();
        }
    }
    out
}

/// Camera looking horizontally along `yaw` (radians) from `center`.
fn yaw_pose(yaw: f64, center: [f64; 3]) -> Result<CameraPose<f64>, ModelError> {
    let f = [yaw.cos(), yaw.sin(), 0.0];
    let m = [[f[1], -f[0], 0.0], [0.0, 0.0, -1.0], f];
    let pose = CameraPose::from_matrix_and_center(&m, &center)?;
    CameraPose::new(pose.quaternion().map(q9), pose.translation().map(q9))
}

/// Samples vehicle poses at the rig framerate and expands each into one
/// camera per sensor. Poses are rounded to the precision of the scene file.
pub fn generate_trajectory(spec: &TrajectorySpec, rig: &RigConfig) -> Result<Trajectory, SynthError> {
    spec.validate()?;
    rig.validate()?;
    let states = vehicle_states(spec, rig.framerate);
    let k = CameraIntrinsics::new(q9(rig.fx), q9(rig.fy), q9(rig.cx), q9(rig.cy), rig.width, rig.height)?;
    let mut cameras = Vec::with_capacity(states.len() * rig.n_cams as usize);
    for (frame, s) in states.iter().enumerate() {
        let (sin, cos) = s.heading.sin_cos();
        for sensor in 0..rig.n_cams {
            let o = rig.mount_offset[sensor as usize];
            let center = [
                s.position[0] + cos * o[0] - sin * o[1],
                s.position[1] + sin * o[0] + cos * o[1],
                rig.mount_height + o[2],
            ];
            let yaw = s.heading + rig.mount_yaw_deg[sensor as usize].to_radians();
            let id = CameraId(frame as u32 * rig.n_cams + sensor);
            let mut cam = Camera::new(id, k, yaw_pose(yaw, center)?);
            cam.sensor_index = sensor;
            cam.timestamp = q9(s.time);
            cameras.push(cam);
        }
    }
    Ok(Trajectory { states, cameras })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    /// Distance from the road center line to each facade, meters.
    pub half_width: f64,
    pub facade_height: f64,
    /// Keypoints per square meter of facade.
    pub density: f64,
    /// Standard deviation of keypoint position noise, meters.
    pub noise_sigma: f64,
    /// Fraction of facade length that emits no keypoints, in `[0, 1)`.
    pub textureless_fraction: f64,
    /// Length of the facade pieces that are textured or blank as a whole.
    pub segment_length: f64,
    /// Range limit used when computing tracks.
    pub max_depth: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            facade_height: 10.0,
            density: 0.5,
            noise_sigma: 0.05,
            textureless_fraction: 0.0,
            segment_length: 5.0,
            max_depth: 50.0,
            seed: 1,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::World(m));
        if !(self.density >= 0.0) {
            return bad(format!("density {} must be non-negative", self.density));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.textureless_fraction) {
            return bad(format!("textureless fraction {} must lie in [0, 1)", self.textureless_fraction));
        }
        if !(self.half_width > 0.0 && self.facade_height > 0.0 && self.segment_length > 0.0 && self.max_depth > 0.0) {
            return bad("half width, facade height, segment length and max depth must be positive".into());
        }
        Ok(())
    }
}

/// Arc-length parametrized polyline through the states of one pass.
struct Path {
    pts: Vec<[f64; 2]>,
    cum: Vec<f64>,
}

impl Path {
    fn new(pts: Vec<[f64; 2]>) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cum.push(cum.last().unwrap() + d);
        }
        Self { pts, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position and unit left normal at arc length `s`.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let i = match self.cum.partition_point(|&c| c <= s) {
            0 => 0,
            k => (k - 1).min(self.pts.len() - 2),
        };
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        let len = self.cum[i + 1] - self.cum[i];
        let u = if len > 0.0 { (s - self.cum[i]) / len } else { 0.0 };
        let t = if len > 0.0 { [(b[0] - a[0]) / len, (b[1] - a[1]) / len] } else { [1.0, 0.0] };
        ([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])], [-t[1], t[0]])
    }
}

/// Facade keypoint positions before track computation, already rounded.
fn facade_points(traj: &Trajectory, world: &WorldSpec) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
    let noise = Normal::new(0.0, world.noise_sigma.max(0.0)).expect("validated sigma");
    let mut passes: Vec<Vec<[f64; 2]>> = Vec::new();
    for s in &traj.states {
        if passes.len() <= s.pass as usize {
            passes.resize(s.pass as usize + 1, Vec::new());
        }
        let v = &mut passes[s.pass as usize];
        if v.last().is_none_or(|p: &[f64; 2]| p != &s.position) {
            v.push(s.position);
        }
    }

    // vehicle positions bucketed for the clearance test
    let clearance = 0.9 * world.half_width;
    let mut road: HashMap<(i64, i64), Vec<[f64; 2]>> = HashMap::new();
    let key = |x: f64, y: f64| ((x / clearance).floor() as i64, (y / clearance).floor() as i64);
    for s in &traj.states {
        road.entry(key(s.position[0], s.position[1])).or_default().push(s.position);
    }
    let near_road = |x: f64, y: f64| {
        let (i, j) = key(x, y);
        (i - 1..=i + 1).any(|a| {
            (j - 1..=j + 1).any(|b| {
                road.get(&(a, b))
                    .is_some_and(|v| v.iter().any(|p| (p[0] - x).hypot(p[1] - y) < clearance))
            })
        })
    };

    let mut out = Vec::new();
    for pts in passes.into_iter().filter(|p| p.len() >= 2) {
        let path = Path::new(pts);
        let len = path.length();
        for side in [1.0, -1.0] {
            let n_seg = (len / world.segment_length).ceil().max(1.0) as usize;
            let mut segs: Vec<usize> = (0..n_seg).collect();
            segs.shuffle(&mut rng);
            let n_blank = (world.textureless_fraction * n_seg as f64).round() as usize;
            let mut blank = vec![false; n_seg];
            for &s in &segs[..n_blank.min(n_seg)] {
                blank[s] = true;
            }
            let count = (world.density * len * world.facade_height).round() as usize;
            for _ in 0..count {
                let s = rng.random_range(0.0..len);
                let z = rng.random_range(0.0..world.facade_height);
                let (e, w, h) = (noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                let seg = ((s / world.segment_length) as usize).min(n_seg - 1);
                if blank[seg] {
                    continue;
                }
                let (p, nrm) = path.at(s);
                let x = p[0] + side * world.half_width * nrm[0] + e;
                let y = p[1] + side * world.half_width * nrm[1] + w;
                if near_road(x, y) {
                    continue;
                }
                out.push([q9(x), q9(y), q9(z + h)]);
            }
        }
    }
    out
}

/// Places keypoints on the two facades flanking every pass and gives each
/// the set of cameras that see it within `max_depth`. Keypoints seen by
/// fewer than two cameras are dropped.
pub fn generate_scene(traj: &Trajectory, world: &WorldSpec, rig: &RigConfig) -> Result<Scene<f64>, SynthError> {
    world.validate()?;
    rig.validate()?;
    let buckets = CameraBuckets::new(&traj.cameras, world.max_depth);
    let mut points = Vec::new();
    for pos in facade_points(traj, world) {
        let track: Vec<CameraId> = buckets
            .near(pos[0], pos[1], world.max_depth)
            .into_iter()
            .map(|i| &traj.cameras[i])
            .filter(|c| sees(c, &pos, world.max_depth))
            .map(|c| c.id)
            .collect();
        if track.len() >= 2 {
            points.push(Point3::keypoint(PointId(points.len() as u64), pos, track));
        }
    }
    Ok(Scene::new(traj.cameras.clone(), points)?)
}

/// Direction of travel when `camera` was taken, degrees in `[0, 360)`.
pub fn vehicle_heading(camera: &Camera<f64>, rig: &RigConfig) -> f64 {
    let f = camera.pose.forward();
    let yaw = f[1].atan2(f[0]).to_degrees();
    let mount = rig.mount_yaw_deg.get(camera.sensor_index as usize).copied().unwrap_or(0.0);
    (yaw - mount).rem_euclid(360.0)
}

fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Single-linkage grouping of headings on the circle: neighbors closer than
/// `link_deg` share a group. Returns the groups' headings, each ascending.
pub fn heading_groups(headings: &[f64], link_deg: f64) -> Vec<Vec<f64>> {
    let mut h: Vec<f64> = headings.iter().map(|v| v.rem_euclid(360.0)).collect();
    h.sort_by(|a, b| a.total_cmp(b));
    if h.is_empty() {
        return Vec::new();
    }
    let n = h.len();
    let gap = |i: usize| if i + 1 < n { h[i + 1] - h[i] } else { h[0] + 360.0 - h[n - 1] };
    let cuts: Vec<usize> = (0..n).filter(|&i| gap(i) >= link_deg).collect();
    if cuts.is_empty() {
        return vec![h];
    }
    // rotate so every group is contiguous, starting after the first cut
    let start = (cuts[0] + 1) % n;
    let mut groups = Vec::new();
    let mut cur = Vec::new();
    for k in 0..n {
        let i = (start + k) % n;
        cur.push(h[i]);
        if cuts.contains(&i) {
            groups.push(std::mem::take(&mut cur));
        }
    }
    groups
}

/// Circular mean of headings in degrees.
pub fn mean_heading(headings: &[f64]) -> f64 {
    let (s, c) = headings.iter().fold((0.0, 0.0), |(s, c), h| {
        let r = h.to_radians();
        (s + r.sin(), c + r.cos())
    });
    s.atan2(c).to_degrees().rem_euclid(360.0)
}

/// Whether the headings fall into at least two groups whose mean
/// directions differ by more than `min_separation_deg`.
pub fn has_separated_groups(headings: &[f64], link_deg: f64, min_separation_deg: f64) -> bool {
    let means: Vec<f64> = heading_groups(headings, link_deg).iter().map(|g| mean_heading(g)).collect();
    means.iter().enumerate().any(|(i, a)| means[i + 1..].iter().any(|b| circular_diff(*a, *b) > min_separation_deg))
}

/// Smallest arc of the circle containing every heading, degrees.
pub fn heading_span(headings: &[f64]) -> f64 {
    let mut h: Vec<f64> = headings.iter().map(|v| v.rem_euclid(360.0)).collect();
    if h.len() < 2 {
        return 0.0;
    }
    h.sort_by(|a, b| a.total_cmp(b));
    let mut max_gap = h[0] + 360.0 - h[h.len() - 1];
    for w in h.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    360.0 - max_gap
}

/// Passes with at least one vehicle position inside the closed rectangle
/// `[min_x, min_y, max_x, max_y]`.
pub fn passes_through(traj: &Trajectory, rect: [f64; 4]) -> Vec<u32> {
    let mut out: Vec<u32> = traj
        .states
        .iter()
        .filter(|s| {
            s.position[0] >= rect[0] && s.position[0] <= rect[2] && s.position[1] >= rect[1] && s.position[1] <= rect[3]
        })
        .map(|s| s.pass)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}
