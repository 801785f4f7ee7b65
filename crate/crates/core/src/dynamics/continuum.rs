use crate::time::SimTime;

use super::elements::rtn_basis;
use super::propagate::{advance, Propagator};
use super::{BodyId, BodyState, DynamicsError, Vec3};

struct Track {
    name: String,
    /// Time of the last discontinuity (initial epoch or impulse).
    origin: SimTime,
    /// Last state on the step grid `origin + k * step`.
    anchor: BodyState,
    /// State at the most recent request.
    current: BodyState,
    total_dv: f64,
}

/// Ground-truth continuous state of all bodies, advanced on demand.
///
/// Each body integrates along a fixed grid of whole steps measured from its
/// last discontinuity. A request between grid points takes one partial step
/// from the latest grid state without disturbing the grid. The states
/// returned for a set of request times are therefore bit-identical no matter
/// which other requests were interleaved.
pub struct Continuum {
    propagator: Box<dyn Propagator>,
    tracks: Vec<Track>,
    advances: u64,
}

impl Continuum {
    pub fn new(propagator: Box<dyn Propagator>) -> Self {
        Continuum {
            propagator,
            tracks: Vec::new(),
            advances: 0,
        }
    }

    pub fn propagator(&self) -> &dyn Propagator {
        self.propagator.as_ref()
    }

    /// Registers a body; its state's epoch becomes the start of its step grid.
    pub fn add_body(&mut self, name: impl Into<String>, mut state: BodyState) -> BodyId {
        let id = BodyId(self.tracks.len());
        state.body = id;
        self.tracks.push(Track {
            name: name.into(),
            origin: state.epoch,
            anchor: state.clone(),
            current: state,
            total_dv: 0.0,
        });
        id
    }

    pub fn body_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn body_name(&self, id: BodyId) -> Option<&str> {
        self.tracks.get(id.0).map(|t| t.name.as_str())
    }

    pub fn body_id(&self, name: &str) -> Option<BodyId> {
        self.tracks.iter().position(|t| t.name == name).map(BodyId)
    }

    /// Number of requests that actually moved a stored state forward.
    pub fn advance_count(&self) -> u64 {
        self.advances
    }

    /// Most recently requested state, without propagating.
    pub fn peek(&self, id: BodyId) -> Option<&BodyState> {
        self.tracks.get(id.0).map(|t| &t.current)
    }

    /// Sum of impulse magnitudes applied to a body, m/s.
    pub fn total_dv(&self, id: BodyId) -> f64 {
        self.tracks.get(id.0).map_or(0.0, |t| t.total_dv)
    }

    pub fn request_state(&mut self, id: BodyId, t: SimTime) -> Result<BodyState, DynamicsError> {
        let prop = self.propagator.as_ref();
        let track = self.tracks.get_mut(id.0).ok_or(DynamicsError::UnknownBody(id))?;
        if t < track.current.epoch {
            return Err(DynamicsError::TimeReversal {
                body: id,
                requested: t,
                epoch: track.current.epoch,
            });
        }
        if t == track.current.epoch {
            return Ok(track.current.clone());
        }
        let h = prop.step_nanos();
        while (t - track.anchor.epoch).as_nanos() >= h {
            track.anchor = advance(prop, &track.anchor, h)?;
        }
        let rem = (t - track.anchor.epoch).as_nanos();
        track.current = if rem > 0 {
            advance(prop, &track.anchor, rem)?
        } else {
            track.anchor.clone()
        };
        self.advances += 1;
        Ok(track.current.clone())
    }

    /// Propagates to `t`, then adds `dv_rtn` (radial, transverse, normal; m/s) to the velocity.
    pub fn apply_impulse(&mut self, id: BodyId, t: SimTime, dv_rtn: [f64; 3]) -> Result<BodyState, DynamicsError> {
        let mut state = self.request_state(id, t)?;
        let dv = Vec3::from(dv_rtn);
        if dv == Vec3::zeros() {
            return Ok(state);
        }
        let (r_hat, t_hat, n_hat) = rtn_basis(&state.position, &state.velocity);
        state.velocity += r_hat * dv.x + t_hat * dv.y + n_hat * dv.z;
        let track = &mut self.tracks[id.0];
        track.origin = t;
        track.anchor = state.clone();
        track.current = state.clone();
        track.total_dv += dv.norm();
        Ok(state)
    }
}
