import numpy as np
import pytest

from sadi.nonsmooth import KinkSurface, PiecewiseSmoothScalar, SmoothPiece, smooth_scalar
from sadi.sets import FieldPiece, PiecewiseField, Region, SetValuedMap, krasovskii


def neg_sign_field(scale: float = 1.0) -> PiecewiseField:
    """One-dimensional field -scale*sign(y)."""
    return PiecewiseField(
        1,
        [
            FieldPiece(lambda y: y[0] > 0, lambda y: np.array([-scale])),
            FieldPiece(lambda y: y[0] < 0, lambda y: np.array([scale])),
            FieldPiece(lambda y: True, lambda y: np.array([0.0])),
        ],
        thresholds=[[0.0]],
    )


def neg_sign_map(scale: float = 1.0) -> SetValuedMap:
    field = neg_sign_field(scale)
    return SetValuedMap(
        1,
        [Region(lambda x: True, lambda x: krasovskii(field, x))],
        common_bound=scale,
        name="neg_sign",
        thresholds=[[0.0]],
    )


def relu_scalar() -> PiecewiseSmoothScalar:
    """max(x, 0) with its kink declared at the origin."""
    return PiecewiseSmoothScalar(
        1,
        [
            SmoothPiece(lambda x: x[0] > 0, lambda x: float(x[0]), lambda x: np.array([1.0])),
            SmoothPiece(lambda x: True, lambda x: 0.0, lambda x: np.array([0.0])),
        ],
        kinks=[KinkSurface.coordinate(0, 0.0, 1)],
        regular=True,
        name="relu",
    )


def abs_scalar() -> PiecewiseSmoothScalar:
    return PiecewiseSmoothScalar(
        1,
        [
            SmoothPiece(lambda x: x[0] > 0, lambda x: float(x[0]), lambda x: np.array([1.0])),
            SmoothPiece(lambda x: x[0] < 0, lambda x: float(-x[0]), lambda x: np.array([-1.0])),
            SmoothPiece(lambda x: True, lambda x: abs(float(x[0])),
                        lambda x: np.array([0.0])),
        ],
        kinks=[KinkSurface.coordinate(0, 0.0, 1)],
        regular=True,
        name="abs",
    )


def squared_norm(dim: int) -> PiecewiseSmoothScalar:
    return smooth_scalar(dim, lambda x: float(x @ x), lambda x: 2.0 * x, name="sqnorm")


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
