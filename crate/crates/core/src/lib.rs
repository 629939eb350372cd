//! Reduced-order mechanics of tapered waterbomb origami panels and
//! four-panel gripper modules.

pub mod analysis;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mechanics;
pub mod mesh;
pub mod run;
pub mod solver;
