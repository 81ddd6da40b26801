import numpy as np
import pytest

from salesrisk import datagen as dg


@pytest.fixture
def small_schema():
    return dg.FieldSchema((dg.categorical("cat", cardinality=3), dg.continuous("x1")))


@pytest.fixture
def linear_truth():
    """Assumption-1 ground truth: location and scale both linear in x, so the
    conditional quantile function is exactly linear in the one-hot design."""
    schema = dg.FieldSchema((dg.categorical("g", cardinality=2),
                             dg.continuous("x1"), dg.continuous("x2")))
    p = schema.width
    params = dg.FmLocationScaleParams(
        w0=2.0, w=np.array([0.5, 1.5, 2.0, -1.0]), V=np.zeros((p, 1)),
        r0=0.8, rvec=np.array([0.1, 0.2, 0.3, 0.2]), Z=np.zeros((p, 1)),
    )
    return schema, params


def linear_truth_beta(schema, params, grid):
    """Exact coefficient matrix for a linear-truth model on the quantile grid:
    beta(tau) = w + rvec * exp(ndtri(tau)), constants folded into the first
    categorical block."""
    from scipy.special import ndtri

    z = np.exp(ndtri(grid.levels))[:, None]
    beta = params.w[None, :] + params.rvec[None, :] * z
    first = schema.fields[0]
    assert first.kind == dg.KIND_CATEGORICAL
    beta[:, :first.cardinality] += params.w0 + params.r0 * z
    return beta
