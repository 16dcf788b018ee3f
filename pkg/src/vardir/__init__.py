"""Directional maximal operators along algebraic varieties, at desk scale."""

from .polynomials import (
    Polynomial,
    PolySystem,
    evaluate_with_gradient,
    jacobian_rank,
    monomials_upto,
    veronese_dim,
    veronese_lift,
)
from .nets import Band, DirectionSet, Net, asym_dist, band_members, build_net
from .varieties import (
    TCI,
    CurveComponents,
    Variety,
    curve_components,
    is_tci,
    perturb_tci,
    plane_curve_crossings,
    sample_variety,
    sphere_poly,
    tci_approximation,
    unit_sphere,
)
from .elimination import (
    GroebnerBasis,
    approx_projection,
    buchberger,
    elimination_ideal,
    ideal_membership,
)

__version__ = "0.1.0"
