"""Rough paths, rough differential equations and rough PDE solvers.

Layers, bottom to top: truncated tensor algebra (:mod:`.tensor`), gridded
rough paths (:mod:`.paths`), sampled drivers (:mod:`.drivers`), RDE flows
and jets (:mod:`.rde`), transport and parabolic rough PDEs
(:mod:`.transport`, :mod:`.parabolic`) and the experiment harness.
"""
from . import drivers, paths, rde, tensor
from .drivers import DriverSpec, sample_lift
from .errors import *  # noqa: F401,F403
from .fields import SymbolicFieldSet, VectorFieldSet
from .grid import Box, ScalarField, SpaceTimeGrid
from .parabolic import (
    EllipticCoefficients,
    TransformedCoefficients,
    solve_direct_lipschitz,
    solve_parabolic,
    solve_second_order_rpde,
    transform_coefficients,
)
from .paths import RoughPathGrid, lift_piecewise_linear
from .rde import FlowJet, inverse_flow, solve_rde, solve_rde_jet
from .tensor import GroupElement, LieElement
from .transport import InitialDatum, solve_transport

__version__ = "0.1.0"
