//! Green functions: torus zero-average kernel, `Z^d` Green function, killed
//! Green functions with exit laws, half-space hitting, and the identity suite.

mod bessel;
pub mod halfspace;
pub mod identities;
pub mod killed;
pub mod torus;
pub mod zd;

pub use bessel::scaled_bessel_i;
pub use halfspace::halfspace_exit_prob;
pub use identities::{verify_green_identities, IdentityReport, IDENTITY_VOLUME_LIMIT};
pub use killed::{Closure, ClosureSite, KilledGreenSolver};
pub use torus::{decay_profile, DecayRow, TorusGreenKernel, TorusSpectrum};
pub use zd::{GreenValue, Regime, ZdGreen, ZdGreenConfig, ZdTable};
