"""Hot numeric kernels.

Everything here is written in the subset of numpy that numba compiles, and is
wrapped by :func:`crlbdesign._accel.jit`. With the numba backend disabled the
very same functions run as plain Python/numpy, except where a vectorised
numpy variant is cheaper (see ``row_distances``).

Catalog systems are identified by an integer code plus a flat float64
parameter vector so that the integrator can be compiled once for all of them.
"""
import numpy as np

from ._accel import USE_NUMBA, jit

LINEAR = 0
VAN_DER_POL = 1
HOPF = 2
LORENZ = 3
AUGMENTED_VDP = 4

OK = 0
MAX_STEPS = 1
NONFINITE = 2


@jit
def catalog_rhs(code, params, x):
    m = x.shape[0]
    out = np.empty(m)
    if code == LINEAR:
        a = params.reshape((m, m))
        out[:] = a @ x
    elif code == VAN_DER_POL:
        mu = params[0]
        out[0] = x[1]
        out[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0]
    elif code == HOPF:
        lam, b = params[0], params[1]
        g = lam + b * (x[0] * x[0] + x[1] * x[1])
        out[0] = x[0] * g - x[1]
        out[1] = x[1] * g + x[0]
    elif code == LORENZ:
        s, r, beta = params[0], params[1], params[2]
        out[0] = s * (x[1] - x[0])
        out[1] = x[0] * (r - x[2]) - x[1]
        out[2] = x[0] * x[1] - beta * x[2]
    else:
        a, c, p, decay = params[0], params[1], params[2], params[3]
        out[0] = a * (x[0] - x[0] ** p / 3.0 - x[1])
        out[1] = c * x[0]
        for i in range(2, m):
            out[i] = -decay * x[i]
    return out


@jit
def catalog_jac(code, params, x):
    m = x.shape[0]
    jac = np.zeros((m, m))
    if code == LINEAR:
        jac[:, :] = params.reshape((m, m))
    elif code == VAN_DER_POL:
        mu = params[0]
        jac[0, 1] = 1.0
        jac[1, 0] = -2.0 * mu * x[0] * x[1] - 1.0
        jac[1, 1] = mu * (1.0 - x[0] * x[0])
    elif code == HOPF:
        lam, b = params[0], params[1]
        g = lam + b * (x[0] * x[0] + x[1] * x[1])
        jac[0, 0] = g + 2.0 * b * x[0] * x[0]
        jac[0, 1] = 2.0 * b * x[0] * x[1] - 1.0
        jac[1, 0] = 2.0 * b * x[0] * x[1] + 1.0
        jac[1, 1] = g + 2.0 * b * x[1] * x[1]
    elif code == LORENZ:
        s, r, beta = params[0], params[1], params[2]
        jac[0, 0] = -s
        jac[0, 1] = s
        jac[1, 0] = r - x[2]
        jac[1, 1] = -1.0
        jac[1, 2] = -x[0]
        jac[2, 0] = x[1]
        jac[2, 1] = x[0]
        jac[2, 2] = -beta
    else:
        a, c, p, decay = params[0], params[1], params[2], params[3]
        jac[0, 0] = a * (1.0 - p * x[0] ** (p - 1.0) / 3.0)
        jac[0, 1] = -a
        jac[1, 0] = c
        for i in range(2, m):
            jac[i, i] = -decay
    return jac


@jit
def catalog_sens_rhs(code, params, y):
    # y = [x, vec(S)] with S row-major; returns [f(x), vec(df/dx @ S)]
    n = y.shape[0]
    m = int(np.sqrt(n + 0.25) - 0.5 + 0.5)
    x = y[:m].copy()
    s = y[m:].copy().reshape((m, m))
    out = np.empty(n)
    out[:m] = catalog_rhs(code, params, x)
    if code == AUGMENTED_VDP:
        # sparse structure: only the leading 2x2 block couples rows
        a, c, p, decay = params[0], params[1], params[2], params[3]
        j00 = a * (1.0 - p * x[0] ** (p - 1.0) / 3.0)
        ds = np.empty((m, m))
        ds[0, :] = j00 * s[0, :] - a * s[1, :]
        ds[1, :] = c * s[0, :]
        for i in range(2, m):
            ds[i, :] = -decay * s[i, :]
    else:
        ds = catalog_jac(code, params, x) @ s
    out[m:] = ds.ravel()
    return out


def _make_dopri(rhs):
    """Build a Dormand-Prince 5(4) integrator around ``rhs(code, params, y)``.

    The returned function advances ``y0`` from 0 to ``t1`` with local
    extrapolation and standard PI-free step control, and returns
    ``(y, status, n_steps)``.
    """

    def integrate(code, params, y0, t1, rtol, atol, max_steps):
        c2, c3, c4, c5 = 0.2, 0.3, 0.8, 8.0 / 9.0
        a21 = 0.2
        a31, a32 = 3.0 / 40.0, 9.0 / 40.0
        a41, a42, a43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
        a51, a52, a53, a54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
        a61, a62, a63 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0
        a64, a65 = 49.0 / 176.0, -5103.0 / 18656.0
        b1, b3, b4, b5, b6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
        e1, e3, e4 = 71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0
        e5, e6, e7 = -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0

        y = y0.copy()
        n = y.shape[0]
        if t1 <= 0.0:
            return y, OK, 0
        k1 = rhs(code, params, y)

        # initial step size (Hairer, Norsett & Wanner II.4)
        sc = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.sum((y / sc) ** 2) / n)
        d1 = np.sqrt(np.sum((k1 / sc) ** 2) / n)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        h0 = min(h0, t1)
        f1 = rhs(code, params, y + h0 * k1)
        d2 = np.sqrt(np.sum(((f1 - k1) / sc) ** 2) / n) / h0
        dm = max(d1, d2)
        if dm <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / dm) ** 0.2
        h = min(100.0 * h0, h1, t1)

        t = 0.0
        steps = 0
        rejected = False
        while t < t1:
            if steps >= max_steps:
                return y, MAX_STEPS, steps
            last = False
            if t + h >= t1 * (1.0 - 1e-14):
                h = t1 - t
                last = True
            k2 = rhs(code, params, y + h * (a21 * k1))
            k3 = rhs(code, params, y + h * (a31 * k1 + a32 * k2))
            k4 = rhs(code, params, y + h * (a41 * k1 + a42 * k2 + a43 * k3))
            k5 = rhs(code, params, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4))
            k6 = rhs(code, params, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5))
            y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6)
            k7 = rhs(code, params, y_new)
            steps += 1
            if not np.all(np.isfinite(y_new)):
                return y, NONFINITE, steps
            err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.sum((err_vec / sc) ** 2) / n)
            if err <= 1.0:
                t = t1 if last else t + h
                y = y_new
                k1 = k7
                if err == 0.0:
                    fac = 10.0
                else:
                    fac = min(10.0, max(0.2, 0.9 * err ** -0.2))
                if rejected:
                    fac = min(fac, 1.0)
                rejected = False
                h = h * fac
            else:
                rejected = True
                h = h * max(0.2, 0.9 * err ** -0.2)
                if h < 1e-14 * max(1.0, abs(t)):
                    return y, MAX_STEPS, steps
        return y, OK, steps

    return integrate


integrate_catalog = jit(_make_dopri(catalog_rhs))
integrate_catalog_sens = jit(_make_dopri(catalog_sens_rhs))


def make_python_integrator(fun):
    """Integrator for an arbitrary Python right-hand side ``fun(y) -> dy``."""
    return _make_dopri(lambda code, params, y: np.asarray(fun(y), dtype=float))


@jit
def objective_value(g, alpha, d, u):
    # sum_i alpha_i (g_i . u)^2 / (u^T d u)
    proj = g @ u
    den = u @ (d @ u)
    return np.sum(alpha * proj * proj) / den


@jit
def sphere_gradient(g, alpha, d, u):
    proj = g @ u
    du = d @ u
    den = u @ du
    f = np.sum(alpha * proj * proj) / den
    grad = (2.0 / den) * (g.T @ (alpha * proj)) - (2.0 * f / den) * du
    return grad - (grad @ u) * u


@jit
def geodesic_step(u, s, step):
    norm_s = np.sqrt(s @ s)
    if norm_s == 0.0:
        return u.copy()
    theta = step * norm_s
    out = np.cos(theta) * u + np.sin(theta) * (s / norm_s)
    return out / np.sqrt(out @ out)


@jit
def gradient_ascent(g, alpha, d, u0, step_scale, decay, steps):
    """Geodesic ascent with step ``step_scale * i**-decay``; tracks the best iterate.

    Returns ``(best_u, best_value, values)`` where ``values[i]`` is the
    objective at iterate ``i`` (``values[0]`` is the start).
    """
    u = u0 / np.sqrt(u0 @ u0)
    values = np.empty(steps + 1)
    best_u = u.copy()
    best_f = objective_value(g, alpha, d, u)
    values[0] = best_f
    for i in range(1, steps + 1):
        s = sphere_gradient(g, alpha, d, u)
        u = geodesic_step(u, s, step_scale * i ** (-decay))
        f = objective_value(g, alpha, d, u)
        values[i] = f
        if f > best_f:
            best_f = f
            best_u = u.copy()
    return best_u, best_f, values


@jit
def _row_distances_loop(points, query):
    n, k = points.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(k):
            diff = points[i, j] - query[j]
            acc += diff * diff
        out[i] = np.sqrt(acc)
    return out


def _row_distances_numpy(points, query):
    return np.sqrt(np.sum((points - query) ** 2, axis=1))


row_distances = _row_distances_loop if USE_NUMBA else _row_distances_numpy
row_distances.__doc__ = "Euclidean distance from ``query`` to each row of ``points``."


@jit
def hinge_weights(dist, d_max):
    """Normalised ``max(0, d_max - d)`` weights, nearest neighbour if all vanish.

    Ties for the nearest neighbour go to the lowest index.
    """
    w = np.maximum(0.0, d_max - dist)
    total = np.sum(w)
    if total > 0.0:
        return w / total
    out = np.zeros(dist.shape[0])
    out[np.argmin(dist)] = 1.0
    return out
