//! Intent expression for a fleet of eye robots.
//!
//! A recommendation's priority and the robot's current arousal are run
//! through a Mamdani fuzzy rule base ([`intent`]) to move the robot's
//! pleasure–arousal state ([`mentality`]); the new state becomes eyelid and
//! eyeball motion ([`kinematics`]). Robots share a small publish/subscribe
//! bus ([`bus`]) and a rating harness ([`harness`]) replays the 20-state
//! evaluation protocol.

pub mod bus;
pub mod error;
pub mod fuzzy;
pub mod harness;
pub mod intent;
pub mod kinematics;
pub mod mentality;
