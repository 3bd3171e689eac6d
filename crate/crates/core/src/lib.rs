//! Slow invariant manifolds of autonomous flows from the flow-curvature
//! determinant: time-derivative jets, generalized curvatures, the `phi = 0`
//! manifold, tangent linear hyperplanes and an event-aware integrator.

pub mod error;
pub mod export;
pub mod geometry;
pub mod integrate;
pub mod jets;
pub mod linalg;
pub mod manifold;
pub mod models;
pub mod spectral;
pub mod verify;

pub use error::{FlowError, Result};
pub use geometry::{curvatures, CurvatureSet};
pub use integrate::{integrate, integrate_with, propagate, IntegrateOptions, IntegrationFailure, Trajectory};
pub use jets::{derivative_stack, derivative_stack_in, DerivStack, Jet};
pub use manifold::{
    darboux_residual, lie_phi, phi, zero_crossings_on_trajectory, zero_set_grid, GridAxis, GridSpec, ManifoldSample,
    ZeroSet, ZeroSetOptions,
};
pub use models::{
    builtin, fixed_points, load_model, load_model_file, Branch, FixedPoint, FixedPointSet, ModelDef, ParamSet, Region,
};
pub use spectral::{tls_hyperplane, tls_hyperplane_with, FastEigenPolicy, Hyperplane, Spectrum};
pub use verify::{verify_model, VerifyOptions, VerifyReport};
