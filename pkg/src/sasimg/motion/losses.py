"""Loss terms for the ping-to-ping motion fit."""

import numpy as np


def huber(a):
    """``a**2 / 2`` inside ``|a| <= 1``, ``|a| - 1/2`` outside."""
    a = np.asarray(a, dtype=float)
    out = np.where(np.abs(a) <= 1.0, 0.5 * a * a, np.abs(a) - 0.5)
    return out if out.ndim else float(out)


def square(a):
    a = np.asarray(a, dtype=float)
    out = a * a
    return out if out.ndim else float(out)


LOSSES = {"square": square, "huber": huber}


def loss_fn(name):
    try:
        return LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}") from None


def robust_residual(a, weights, loss):
    """Signed residuals whose squares are ``w * h(a)``.

    Returns ``(r, dr/da)``; the derivative at ``a = 0`` uses the quadratic
    limit of ``h``.
    """
    a = np.asarray(a, float)
    w = np.asarray(weights, float)
    if loss == "square":
        sw = np.sqrt(w)
        return sw * a, sw * np.ones_like(a)
    h = huber(a)
    root = np.sqrt(w * h)
    r = np.sign(a) * root
    hp = np.minimum(np.abs(a), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(root > 0, w * hp / (2.0 * root), np.sqrt(w / 2.0))
    return r, d


def loss_dpc(g, weights=None, loss="square", scale=1.0):
    """``sum w * h(g / scale)`` accumulated in input order."""
    g = np.asarray(g, float) / scale
    w = np.ones_like(g) if weights is None else np.asarray(weights, float)
    return float(np.sum(w * loss_fn(loss)(g)))


def second_difference(v):
    v = np.asarray(v, float)
    return v[2:] - 2.0 * v[1:-1] + v[:-2]


def loss_smooth(v_y, v_z):
    """Sum of squared second differences of both velocity series."""
    return float(np.sum(second_difference(v_y) ** 2) + np.sum(second_difference(v_z) ** 2))


def integrate_depth(v_z, p_z0, dt):
    """Ping depths ``p_z0 + sum_{n<i} v_z[n] dt[n]`` (ping 0 at ``p_z0``)."""
    v_z = np.asarray(v_z, float)
    dt = np.broadcast_to(np.asarray(dt, float), v_z.shape)
    return p_z0 + np.concatenate([[0.0], np.cumsum(v_z[:-1] * dt[:-1])])


def loss_dvl(v_z, z_dvl, p_z0, dt):
    """Squared mismatch between integrated depth and DVL-derived depth.

    ``z_dvl`` are depths (NED z), i.e. the negated altitude above a flat
    seafloor at z = 0.
    """
    z_dvl = np.asarray(z_dvl, float)
    if z_dvl.shape != np.shape(v_z):
        raise ValueError("DVL series length must equal the ping count")
    return float(np.sum((integrate_depth(v_z, p_z0, dt) - z_dvl) ** 2))


def total_loss(dpc, smooth, dvl, lambda1, lambda2):
    return dpc + lambda1 * smooth + lambda2 * dvl
