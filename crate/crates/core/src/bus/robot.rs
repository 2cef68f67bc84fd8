//! Eye-robot bus components.
//!
//! Each robot owns its mentality state and consumes its inbox strictly in
//! order, so state changes are serialized per robot.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::bus::{
    Bus, BusError, BusMessage, ErrorPayload, MessageType, PoseCommandPayload, Publisher,
    StateUpdatePayload, Subscription,
};
use crate::error::{Error, Result};
use crate::intent::{compute_delta, IntentConfig, RecommendationEvent, SpeechCategoryEvent};
use crate::kinematics::{movement_between, ExpressionMovement, DEFAULT_MOVEMENT_MS};
use crate::mentality::{apply_delta, MentalityState, StateDelta};

pub const STANDARD_FLEET_SIZE: usize = 5;

#[derive(Debug, Clone)]
pub struct RobotInstance {
    pub id: u8,
    pub mobile: bool,
    /// Meters, desk frame.
    pub position: [f64; 2],
    pub state: MentalityState,
    pub config: Arc<IntentConfig>,
}

impl RobotInstance {
    /// Only the mobile robot can be moved.
    pub fn set_position(&mut self, position: [f64; 2]) -> Result<()> {
        if !self.mobile {
            return Err(Error::config(format!("robot {} is stationary", self.id)));
        }
        if !position.iter().all(|p| p.is_finite()) {
            return Err(Error::config("position must be finite"));
        }
        self.position = position;
        Ok(())
    }

    pub fn source_name(&self) -> String {
        format!("robot-{}", self.id)
    }
}

/// `count` robots with ids `1..=count`. The last one sits on the mobile base;
/// the others stand in a row 0.6 m apart.
pub fn fleet_layout(count: usize, config: Arc<IntentConfig>) -> Result<Vec<RobotInstance>> {
    if count == 0 || count > u8::MAX as usize {
        return Err(Error::config(format!(
            "robot count {count} is out of range"
        )));
    }
    let robots: Vec<RobotInstance> = (1..=count)
        .map(|i| {
            let mobile = i == count;
            RobotInstance {
                id: i as u8,
                mobile,
                position: if mobile {
                    [1.2, 1.5]
                } else {
                    [0.6 * (i - 1) as f64, 0.0]
                },
                state: MentalityState::NEUTRAL,
                config: Arc::clone(&config),
            }
        })
        .collect();
    check_fleet(&robots)?;
    Ok(robots)
}

/// Unique ids and exactly one mobile robot.
pub fn check_fleet(robots: &[RobotInstance]) -> Result<()> {
    for (i, r) in robots.iter().enumerate() {
        if robots[..i].iter().any(|o| o.id == r.id) {
            return Err(Error::config(format!("duplicate robot id {}", r.id)));
        }
    }
    let mobile = robots.iter().filter(|r| r.mobile).count();
    if mobile != 1 {
        return Err(Error::config(format!(
            "expected exactly one mobile robot, found {mobile}"
        )));
    }
    Ok(())
}

fn bus_err(e: BusError) -> Error {
    Error::Bus(e.reason)
}

/// Runs the intent pipeline for one event and announces the result:
/// STATE.UPDATE first, then POSE.COMMAND. On an inference error an ERROR
/// message is published and the state is left as it was.
pub fn robot_on_recommendation(
    robot: &mut RobotInstance,
    ev: &RecommendationEvent,
    out: &mut Publisher,
) -> Result<(StateDelta, MentalityState, ExpressionMovement)> {
    let old = robot.state;
    let delta = match compute_delta(&old, ev, &robot.config) {
        Ok(d) => d,
        Err(e) => {
            let _ = out.send(
                MessageType::Error,
                ErrorPayload {
                    reason: format!("robot {}: {e}", robot.id),
                    source: None,
                    seq: None,
                },
            );
            return Err(e);
        }
    };
    let new = apply_delta(old, delta);
    let movement = movement_between(&old, &new, DEFAULT_MOVEMENT_MS)?;
    robot.state = new;
    out.send(
        MessageType::StateUpdate,
        StateUpdatePayload {
            robot: robot.id,
            state: new,
            delta,
            item_id: Some(ev.item_id.clone()),
        },
    )
    .map_err(bus_err)?;
    out.send(
        MessageType::PoseCommand,
        PoseCommandPayload {
            robot: Some(robot.id),
            trial_index: None,
            movement: movement.clone(),
        },
    )
    .map_err(bus_err)?;
    Ok((delta, new, movement))
}

/// A robot attached to the bus: its instance, outgoing handle and inbox.
pub struct RobotNode {
    robot: RobotInstance,
    publisher: Publisher,
    inbox: Subscription,
}

impl RobotNode {
    pub fn attach(bus: &Arc<Bus>, robot: RobotInstance) -> Result<Self> {
        let inbox = bus.subscribe(&[MessageType::Recommendation, MessageType::SpeechCategory]);
        let publisher = bus.publisher(robot.source_name()).map_err(bus_err)?;
        Ok(Self {
            robot,
            publisher,
            inbox,
        })
    }

    pub fn robot(&self) -> &RobotInstance {
        &self.robot
    }

    pub fn robot_mut(&mut self) -> &mut RobotInstance {
        &mut self.robot
    }

    fn handle(&mut self, msg: &BusMessage) {
        match msg.kind {
            MessageType::Recommendation => match msg.decode::<RecommendationEvent>() {
                Ok(ev) => {
                    if let Err(e) =
                        robot_on_recommendation(&mut self.robot, &ev, &mut self.publisher)
                    {
                        log::warn!("robot {}: {e}", self.robot.id);
                    }
                }
                Err(e) => log::warn!("robot {}: {e}", self.robot.id),
            },
            MessageType::SpeechCategory => {
                if let Ok(ev) = msg.decode::<SpeechCategoryEvent>() {
                    log::info!("robot {}: speech category `{}`", self.robot.id, ev.category);
                    if let Some(d) = self.robot.config.speech_delta(&self.robot.state, &ev) {
                        self.robot.state = apply_delta(self.robot.state, d);
                    }
                }
            }
            _ => {}
        }
    }

    /// Handles everything currently queued. Returns the number handled.
    pub fn pump(&mut self) -> usize {
        let msgs = self.inbox.drain();
        for m in &msgs {
            self.handle(m);
        }
        msgs.len()
    }

    /// Consumes the inbox on a dedicated thread until `stop` is set.
    pub fn spawn(mut self, stop: Arc<AtomicBool>) -> JoinHandle<RobotInstance> {
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                match self.inbox.recv_timeout(Duration::from_millis(50)) {
                    Ok(Some(m)) => self.handle(&m),
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
            self.robot
        })
    }
}

/// All robots of one session.
pub struct Fleet {
    nodes: Vec<RobotNode>,
}

impl Fleet {
    pub fn attach(bus: &Arc<Bus>, count: usize, config: Arc<IntentConfig>) -> Result<Self> {
        let nodes = fleet_layout(count, config)?
            .into_iter()
            .map(|r| RobotNode::attach(bus, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes })
    }

    pub fn robots(&self) -> impl Iterator<Item = &RobotInstance> {
        self.nodes.iter().map(RobotNode::robot)
    }

    pub fn robot_mut(&mut self, id: u8) -> Option<&mut RobotInstance> {
        self.nodes
            .iter_mut()
            .map(RobotNode::robot_mut)
            .find(|r| r.id == id)
    }

    /// Embedded mode: lets every robot work off its inbox, in id order,
    /// until all inboxes are empty.
    pub fn pump(&mut self) -> usize {
        let mut total = 0;
        loop {
            let n: usize = self.nodes.iter_mut().map(RobotNode::pump).sum();
            if n == 0 {
                return total;
            }
            total += n;
        }
    }

    pub fn spawn(self, stop: Arc<AtomicBool>) -> Vec<JoinHandle<RobotInstance>> {
        self.nodes
            .into_iter()
            .map(|n| n.spawn(Arc::clone(&stop)))
            .collect()
    }
}
