//! Domain types and exact evaluation of the force function, kinetic energy,
//! action, and its gap-variable form.

mod energy;
mod order;
mod params;
mod path;

pub use energy::{
    action, action_gradient, gap_action, kinetic, moment_of_inertia, potential, potential_gradient,
    regularized_potential,
};
pub(crate) use energy::{action_and_gradient_raw, action_raw, refinement_mask};
pub(crate) use order::strict_order;
pub use order::{has_exact_tie, order_of, same_order, OrderInfo, OrderLabel};
pub use params::{SystemParams, DEFAULT_COLLISION_TOL, DEFAULT_QUADRATURE_REFINEMENT};
pub(crate) use path::{check_center_of_mass, min_pair_distance, positions_from_gaps, recenter};
pub use path::{uniform_times, Configuration, DiscretePath, GapPath};
