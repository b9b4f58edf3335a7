//! Long-baseline underwater acoustic positioning.
//!
//! Four GNSS-synchronized surface buoys take turns broadcasting their
//! position and transmit time. An underwater receiver with a free-running
//! clock differences the apparent travel times, which removes its clock
//! offset, and intersects the resulting hyperboloids to find itself.
//!
//! - [`geo`]: WGS-84 geodetic, ECEF and local ENU frames.
//! - [`multilateration`]: pseudorange differences, the closed-form solver
//!   and a Gauss–Newton refinement.
//! - [`protocol`]: the buoy sentence codec and the TDMA frame schedule.
//! - [`channel`]: a scenario simulator producing reception events.
//! - [`cli`]: the command implementations behind the `lbl` binary.

// `!(x > 0.0)` style guards deliberately reject NaN along with bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod geo;
pub mod multilateration;
pub mod protocol;
pub mod time;
pub mod verify;
