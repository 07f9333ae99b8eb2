//! Sets, distances, tangent cones and sampled nonsmooth differentials.

mod cone;
mod hausdorff;
mod nonsmooth;
mod sampling;
mod sets;

pub use cone::{cone_limit, cone_quotients, cone_residual, ConeMode, ConeProbe, CONE_TOL};
pub use hausdorff::{directed_hausdorff, hausdorff_distance};
pub use nonsmooth::{
    clarke_gradient_sample, clarke_gradient_sample_with, fd_gradient, proximal_subgradient_test,
    proximal_subgradient_test_with, ProximalOutcome, SubgradientCandidate,
};
pub use sampling::{ball_points, halton, halton_point, sphere_points, unit_directions};
pub use sets::{distance_to_set, Aabb, Distance, DistanceMode, ScalarFn, SearchGrid, SetSpec};
