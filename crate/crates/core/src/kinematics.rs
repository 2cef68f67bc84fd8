//! Five-joint eye poses and keyframed expression movements.
//!
//! Joints: one lid aperture per eye, one yaw per eye, and a shared pitch.
//! Arousal opens the lids, pleasure raises the gaze.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mentality::{MentalityState, STATE_LIMIT};

pub const YAW_LIMIT_DEG: f64 = 30.0;
pub const PITCH_LIMIT_DEG: f64 = 20.0;
/// Shortest movement accepted by [`movement_between`].
pub const MIN_MOVEMENT_MS: u64 = 100;
/// Keyframe rate used by [`movement_between`].
pub const DEFAULT_KEYFRAME_HZ: u32 = 50;
pub const DEFAULT_MOVEMENT_MS: u64 = 800;

/// Joint targets for both eyes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyePose {
    /// Aperture fraction, 0 = closed, 1 = fully open.
    pub lid_left: f64,
    pub lid_right: f64,
    /// Degrees, positive to the robot's left.
    pub yaw_left: f64,
    pub yaw_right: f64,
    /// Degrees, positive looks up.
    pub pitch: f64,
}

impl EyePose {
    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        let checks = [
            ("lid_left", self.lid_left, 0.0, 1.0),
            ("lid_right", self.lid_right, 0.0, 1.0),
            ("yaw_left", self.yaw_left, -YAW_LIMIT_DEG, YAW_LIMIT_DEG),
            ("yaw_right", self.yaw_right, -YAW_LIMIT_DEG, YAW_LIMIT_DEG),
            ("pitch", self.pitch, -PITCH_LIMIT_DEG, PITCH_LIMIT_DEG),
        ];
        for (name, v, lo, hi) in checks {
            if !within(v, lo, hi) {
                return Err(Error::InvalidPose(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    fn clamped(self) -> Self {
        Self {
            lid_left: self.lid_left.clamp(0.0, 1.0),
            lid_right: self.lid_right.clamp(0.0, 1.0),
            yaw_left: self.yaw_left.clamp(-YAW_LIMIT_DEG, YAW_LIMIT_DEG),
            yaw_right: self.yaw_right.clamp(-YAW_LIMIT_DEG, YAW_LIMIT_DEG),
            pitch: self.pitch.clamp(-PITCH_LIMIT_DEG, PITCH_LIMIT_DEG),
        }
    }

    /// Largest absolute joint difference, mixing units.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.lid_left - other.lid_left,
            self.lid_right - other.lid_right,
            self.yaw_left - other.yaw_left,
            self.yaw_right - other.yaw_right,
            self.pitch - other.pitch,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Resting pose for a mentality state.
///
/// Lid aperture is `0.5 + x_ar / 400`; pitch is `20 · x_pl / 200` degrees;
/// both yaws are zero.
pub fn pose_from_state(s: &MentalityState) -> EyePose {
    let lid = 0.5 + s.arousal() / (2.0 * STATE_LIMIT);
    EyePose {
        lid_left: lid,
        lid_right: lid,
        yaw_left: 0.0,
        yaw_right: 0.0,
        pitch: PITCH_LIMIT_DEG * s.pleasure() / STATE_LIMIT,
    }
    .clamped()
}

/// Upper bound on `|Δpose|∞ / |Δstate|∞` for [`pose_from_state`].
pub const POSE_LIPSCHITZ: f64 = PITCH_LIMIT_DEG / STATE_LIMIT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time_ms: u64,
    #[serde(flatten)]
    pub pose: EyePose,
}

/// A timed trajectory of eye poses starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMovement")]
pub struct ExpressionMovement {
    keyframes: Vec<Keyframe>,
    duration_ms: u64,
}

#[derive(Deserialize)]
struct RawMovement {
    keyframes: Vec<Keyframe>,
    duration_ms: u64,
}

impl TryFrom<RawMovement> for ExpressionMovement {
    type Error = Error;

    fn try_from(raw: RawMovement) -> Result<Self> {
        let m = Self::new(raw.keyframes)?;
        if m.duration_ms != raw.duration_ms {
            return Err(Error::InvalidPose(format!(
                "duration_ms {} does not match last keyframe at {}",
                raw.duration_ms, m.duration_ms
            )));
        }
        Ok(m)
    }
}

impl ExpressionMovement {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self> {
        let first = keyframes
            .first()
            .ok_or_else(|| Error::InvalidPose("movement has no keyframes".into()))?;
        if first.time_ms != 0 {
            return Err(Error::InvalidPose("first keyframe must be at t = 0".into()));
        }
        if keyframes.windows(2).any(|w| w[0].time_ms >= w[1].time_ms) {
            return Err(Error::InvalidPose(
                "keyframe times must strictly increase".into(),
            ));
        }
        for k in &keyframes {
            k.pose.validate()?;
        }
        let duration_ms = keyframes.last().map(|k| k.time_ms).unwrap_or(0);
        Ok(Self {
            keyframes,
            duration_ms,
        })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_ms
    }

    pub fn first_pose(&self) -> EyePose {
        self.keyframes[0].pose
    }

    pub fn last_pose(&self) -> EyePose {
        self.keyframes[self.keyframes.len() - 1].pose
    }

    /// Writes the keyframes as CSV with the header
    /// `time_ms,lid_left,lid_right,yaw_left,yaw_right,pitch`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "time_ms",
            "lid_left",
            "lid_right",
            "yaw_left",
            "yaw_right",
            "pitch",
        ])?;
        for k in &self.keyframes {
            let p = k.pose;
            w.write_record(&[
                k.time_ms.to_string(),
                p.lid_left.to_string(),
                p.lid_right.to_string(),
                p.yaw_left.to_string(),
                p.yaw_right.to_string(),
                p.pitch.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Keyframe times for a movement of `duration_ms` sampled at `rate_hz`:
/// every whole-millisecond sample instant plus the end point.
fn keyframe_times(duration_ms: u64, rate_hz: u32) -> Vec<u64> {
    let rate = rate_hz.max(1) as u64;
    let mut times: Vec<u64> = (0..)
        .map(|k: u64| (k * 1000 + rate / 2) / rate)
        .take_while(|&t| t < duration_ms)
        .collect();
    times.dedup();
    times.push(duration_ms);
    times
}

/// Movement from `from` to `to`, keyframed at `rate_hz`.
///
/// Intermediate keyframes interpolate in state space with smoothstep and are
/// then mapped through [`pose_from_state`]. At least three keyframes are
/// produced.
pub fn movement_sampled(
    from: &MentalityState,
    to: &MentalityState,
    duration_ms: u64,
    rate_hz: u32,
) -> Result<ExpressionMovement> {
    if duration_ms < MIN_MOVEMENT_MS {
        return Err(Error::InvalidPose(format!(
            "movement duration {duration_ms} ms is below {MIN_MOVEMENT_MS} ms"
        )));
    }
    if rate_hz == 0 {
        return Err(Error::InvalidPose("keyframe rate must be positive".into()));
    }
    let mut times = keyframe_times(duration_ms, rate_hz);
    if times.len() < 3 {
        times = vec![0, duration_ms / 2, duration_ms];
    }
    let keyframes = times
        .into_iter()
        .map(|t| {
            let u = smoothstep(t as f64 / duration_ms as f64);
            Keyframe {
                time_ms: t,
                pose: pose_from_state(&from.lerp(to, u)),
            }
        })
        .collect();
    ExpressionMovement::new(keyframes)
}

/// Movement from `from` to `to` at the default keyframe rate.
pub fn movement_between(
    from: &MentalityState,
    to: &MentalityState,
    duration_ms: u64,
) -> Result<ExpressionMovement> {
    movement_sampled(from, to, duration_ms, DEFAULT_KEYFRAME_HZ)
}

/// Blink timing: the mean inter-blink interval shrinks linearly with arousal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkPolicy {
    base_interval_ms: f64,
    /// Interval shrink per unit of arousal, ms.
    arousal_gain: f64,
    blink_duration_ms: f64,
}

/// Relative half-width of the uniform jitter applied to each interval.
pub const BLINK_JITTER: f64 = 0.2;

impl Default for BlinkPolicy {
    fn default() -> Self {
        Self {
            base_interval_ms: 4000.0,
            arousal_gain: 7.5,
            blink_duration_ms: 150.0,
        }
    }
}

impl BlinkPolicy {
    /// Rejects policies whose shortest jittered interval (at full arousal)
    /// would be shorter than a blink.
    pub fn new(base_interval_ms: f64, arousal_gain: f64, blink_duration_ms: f64) -> Result<Self> {
        let policy = Self {
            base_interval_ms,
            arousal_gain,
            blink_duration_ms,
        };
        let shortest = policy
            .mean_interval_ms(STATE_LIMIT)
            .min(policy.mean_interval_ms(-STATE_LIMIT))
            * (1.0 - BLINK_JITTER);
        if !(blink_duration_ms > 0.0 && base_interval_ms.is_finite() && arousal_gain.is_finite())
            || shortest < blink_duration_ms
        {
            return Err(Error::config(format!(
                "blink policy allows intervals ({shortest} ms) shorter than a blink ({blink_duration_ms} ms)"
            )));
        }
        Ok(policy)
    }

    pub fn mean_interval_ms(&self, arousal: f64) -> f64 {
        self.base_interval_ms - self.arousal_gain * arousal
    }

    pub fn blink_duration_ms(&self) -> f64 {
        self.blink_duration_ms
    }
}

/// Blink onset times within `[0, horizon_ms]`, each interval jittered by
/// ±20% uniformly. Deterministic for a given seed.
pub fn blink_times(
    policy: &BlinkPolicy,
    s: &MentalityState,
    horizon_ms: u64,
    seed: u64,
) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = policy.mean_interval_ms(s.arousal());
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        let jitter = rng.gen_range(1.0 - BLINK_JITTER..=1.0 + BLINK_JITTER);
        t += (mean * jitter).max(policy.blink_duration_ms);
        if t > horizon_ms as f64 {
            return out;
        }
        out.push(t.round() as u64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mentality::grid_states;
    use proptest::prelude::*;

    fn st(pl: f64, ar: f64) -> MentalityState {
        MentalityState::new(pl, ar).unwrap()
    }

    #[test]
    fn pose_examples() {
        let p = pose_from_state(&st(0.0, 0.0));
        assert_eq!(
            (p.lid_left, p.lid_right, p.pitch, p.yaw_left, p.yaw_right),
            (0.5, 0.5, 0.0, 0.0, 0.0)
        );
        let p = pose_from_state(&st(0.0, 200.0));
        assert_eq!((p.lid_left, p.lid_right), (1.0, 1.0));
        let p = pose_from_state(&st(-200.0, -200.0));
        assert_eq!((p.lid_left, p.lid_right, p.pitch), (0.0, 0.0, -20.0));
    }

    #[test]
    fn pose_validation() {
        let mut p = pose_from_state(&st(0.0, 0.0));
        assert!(p.is_valid());
        p.yaw_right = 31.0;
        assert!(p.validate().is_err());
        p.yaw_right = 0.0;
        p.lid_left = -0.01;
        assert!(p.validate().is_err());
    }

    #[test]
    fn constant_movement() {
        let s = st(40.0, -70.0);
        let m = movement_between(&s, &s, 800).unwrap();
        assert!(m.keyframes().len() >= 3);
        assert!(m.keyframes().iter().all(|k| k.pose == m.first_pose()));
    }

    #[test]
    fn midpoint_uses_smoothstep() {
        let m = movement_between(&st(0.0, 0.0), &st(0.0, 200.0), 1000).unwrap();
        let mid = m.keyframes().iter().find(|k| k.time_ms == 500).unwrap();
        assert!((mid.pose.lid_left - 0.75).abs() < 1e-12);
        assert_eq!(m.duration_ms(), 1000);
        assert_eq!(m.last_pose().lid_left, 1.0);
    }

    #[test]
    fn keyframe_counts() {
        assert_eq!(keyframe_times(800, 50).len(), 41);
        let odd = keyframe_times(1000, 30);
        assert_eq!(odd[1], 33);
        assert_eq!(*odd.last().unwrap(), 1000);
        assert!(odd.windows(2).all(|w| w[0] < w[1]));
        // coarse rate still yields three keyframes
        let m = movement_sampled(&st(0.0, 0.0), &st(0.0, 100.0), 100, 1).unwrap();
        assert_eq!(m.keyframes().len(), 3);
    }

    #[test]
    fn short_movements_rejected() {
        assert!(movement_between(&st(0.0, 0.0), &st(0.0, 0.0), 99).is_err());
        assert!(movement_sampled(&st(0.0, 0.0), &st(0.0, 0.0), 500, 0).is_err());
    }

    #[test]
    fn movement_constructor_checks_times() {
        let pose = pose_from_state(&st(0.0, 0.0));
        let kf = |t| Keyframe { time_ms: t, pose };
        assert!(ExpressionMovement::new(vec![kf(0), kf(10), kf(10)]).is_err());
        assert!(ExpressionMovement::new(vec![kf(5), kf(10)]).is_err());
        assert!(ExpressionMovement::new(vec![]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let m = movement_sampled(&st(0.0, 0.0), &st(0.0, 200.0), 800, 50).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "time_ms,lid_left,lid_right,yaw_left,yaw_right,pitch"
        );
        assert_eq!(lines.len(), 42);
        assert_eq!(lines[1], "0,0.5,0.5,0,0,0");
        assert_eq!(lines[41], "800,1,1,0,0,0");
    }

    #[test]
    fn movement_json_is_validated() {
        let m = movement_between(&st(0.0, 0.0), &st(10.0, 10.0), 200).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(
            serde_json::from_value::<ExpressionMovement>(v.clone()).unwrap(),
            m
        );
        let mut wrong = v.clone();
        wrong["duration_ms"] = 300.into();
        assert!(serde_json::from_value::<ExpressionMovement>(wrong).is_err());
        let mut bad_pose = v;
        bad_pose["keyframes"][1]["pitch"] = 45.0.into();
        assert!(serde_json::from_value::<ExpressionMovement>(bad_pose).is_err());
    }

    #[test]
    fn grid_poses_are_distinct() {
        let poses: Vec<EyePose> = grid_states().states().iter().map(pose_from_state).collect();
        for (i, a) in poses.iter().enumerate() {
            for b in &poses[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn blink_examples() {
        let policy = BlinkPolicy::default();
        let calm = st(0.0, -200.0);
        assert!(blink_times(&policy, &calm, 1000, 1).is_empty());
        assert_eq!(
            blink_times(&policy, &calm, 60_000, 9),
            blink_times(&policy, &calm, 60_000, 9)
        );
        let lively = blink_times(&policy, &st(0.0, 200.0), 60_000, 9);
        let sleepy = blink_times(&policy, &calm, 60_000, 9);
        // mean intervals 2500 ms vs 5500 ms
        assert!(lively.len() > sleepy.len());
        assert!((20..=30).contains(&lively.len()), "{}", lively.len());
        assert!((9..=14).contains(&sleepy.len()), "{}", sleepy.len());
    }

    #[test]
    fn blink_policy_validation() {
        assert!(BlinkPolicy::new(4000.0, 7.5, 150.0).is_ok());
        assert!(BlinkPolicy::new(1000.0, 4.9, 150.0).is_err());
        assert!(BlinkPolicy::new(1000.0, 0.0, 0.0).is_err());
    }

    fn arb_state() -> impl Strategy<Value = MentalityState> {
        (-200.0..=200.0f64, -200.0..=200.0f64).prop_map(|(p, a)| st(p, a))
    }

    proptest! {
        #[test]
        fn pose_is_lipschitz(a in arb_state(), b in arb_state()) {
            let ds = (a.pleasure() - b.pleasure()).abs().max((a.arousal() - b.arousal()).abs());
            let dp = pose_from_state(&a).max_abs_diff(&pose_from_state(&b));
            prop_assert!(dp <= POSE_LIPSCHITZ * ds + 1e-12);
        }

        #[test]
        fn movements_respect_joint_limits(a in arb_state(), b in arb_state(), dur in 100u64..3000) {
            let m = movement_between(&a, &b, dur).unwrap();
            prop_assert!(m.keyframes().len() >= 3);
            prop_assert!(m.keyframes().iter().all(|k| k.pose.is_valid()));
            prop_assert_eq!(m.first_pose(), pose_from_state(&a));
            prop_assert_eq!(m.last_pose(), pose_from_state(&b));
            prop_assert_eq!(m.duration_ms(), dur);
        }
    }
}
