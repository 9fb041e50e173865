"""Dynamical systems: dynamics, flows and flow Jacobians.

Continuous catalog systems are integrated by a compiled Dormand-Prince 5(4)
pair. Flow Jacobians come from the forward sensitivity (variational)
equation ``dS/dt = df/dx(x(t)) S`` with ``S(0) = I``, integrated jointly with
the state. Linear systems use the matrix exponential instead.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import _kernels as K


class DimensionError(ValueError):
    """State or matrix shape does not match the system dimension."""


class IntegrationDiverged(RuntimeError):
    """Step budget exhausted or the trajectory left the floating point range."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-8
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be a positive integer")


DEFAULT_INTEGRATOR = IntegratorConfig()


class DynamicalSystem:
    """Contract shared by every system.

    Subclasses provide ``dimension``, ``dynamics`` and ``flow``; the
    remaining methods have generic implementations. ``dynamics_jacobian``
    falls back to central finite differences, so a user system only needs
    ``dimension`` and ``dynamics`` to work with the generic integrator.
    """

    discrete = False
    name = "system"

    @property
    def dimension(self):
        raise NotImplementedError

    def dynamics(self, x):
        raise NotImplementedError

    def dynamics_jacobian(self, x):
        x = self._check(x)
        m = self.dimension
        jac = np.empty((m, m))
        for j in range(m):
            h = 1e-6 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            jac[:, j] = (np.asarray(self.dynamics(xp)) - np.asarray(self.dynamics(xm))) / (2 * h)
        return jac

    def flow(self, x, tau, cfg=DEFAULT_INTEGRATOR):
        return self.flow_and_jacobian(x, tau, cfg, jacobian=False)[0]

    def flow_jacobian(self, x, tau, cfg=DEFAULT_INTEGRATOR):
        return self.flow_and_jacobian(x, tau, cfg)[1]

    def flow_and_jacobian(self, x, tau, cfg=DEFAULT_INTEGRATOR, jacobian=True):
        """Return ``(flow(x, tau), dflow(x, tau))``; the Jacobian is None if not requested."""
        x = self._check(x)
        tau = self._check_tau(tau)
        m = self.dimension
        if tau == 0:
            return x.copy(), (np.eye(m) if jacobian else None)

        def fun(y):
            if not jacobian:
                return self.dynamics(y)
            xs, s = y[:m], y[m:].reshape(m, m)
            return np.concatenate([self.dynamics(xs), (self.dynamics_jacobian(xs) @ s).ravel()])

        y0 = np.concatenate([x, np.eye(m).ravel()]) if jacobian else x
        integrate = K.make_python_integrator(fun)
        y, status, _ = integrate(0, np.zeros(0), y0, float(tau), cfg.rtol, cfg.atol, cfg.max_steps)
        _raise_status(status, self, tau)
        if jacobian:
            return y[:m], y[m:].reshape(m, m)
        return y, None

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DimensionError(f"{self.name}: expected state of length {self.dimension}, got shape {x.shape}")
        return x

    def _check_tau(self, tau):
        if tau < 0:
            raise ValueError("flow duration must be non-negative")
        return tau


def _raise_status(status, system, tau):
    if status == K.MAX_STEPS:
        raise IntegrationDiverged(f"{system.name}: step budget exhausted integrating over tau={tau}")
    if status == K.NONFINITE:
        raise IntegrationDiverged(f"{system.name}: trajectory became non-finite within tau={tau}")


class CatalogSystem(DynamicalSystem):
    """System whose dynamics live in the compiled kernel catalog."""

    _code = None

    def __init__(self, params, dimension):
        self._params = np.ascontiguousarray(params, dtype=float)
        self._dimension = int(dimension)

    @property
    def dimension(self):
        return self._dimension

    @property
    def params(self):
        return self._params.copy()

    def dynamics(self, x):
        return K.catalog_rhs(self._code, self._params, self._check(x))

    def dynamics_jacobian(self, x):
        return K.catalog_jac(self._code, self._params, self._check(x))

    def flow_and_jacobian(self, x, tau, cfg=DEFAULT_INTEGRATOR, jacobian=True):
        x = self._check(x)
        tau = float(self._check_tau(tau))
        m = self.dimension
        if tau == 0:
            return x.copy(), (np.eye(m) if jacobian else None)
        if jacobian:
            y0 = np.concatenate([x, np.eye(m).ravel()])
            y, status, _ = K.integrate_catalog_sens(self._code, self._params, y0, tau,
                                                    cfg.rtol, cfg.atol, cfg.max_steps)
            _raise_status(status, self, tau)
            return y[:m], y[m:].reshape(m, m)
        y, status, _ = K.integrate_catalog(self._code, self._params, x.copy(), tau,
                                           cfg.rtol, cfg.atol, cfg.max_steps)
        _raise_status(status, self, tau)
        return y, None


class LinearSystem(CatalogSystem):
    """``dx/dt = A x``; flows are exact matrix exponentials."""

    _code = K.LINEAR
    name = "linear"

    def __init__(self, matrix):
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionError("dynamics matrix must be square")
        self.matrix = a
        super().__init__(a.ravel(), a.shape[0])

    def flow_and_jacobian(self, x, tau, cfg=DEFAULT_INTEGRATOR, jacobian=True):
        x = self._check(x)
        tau = self._check_tau(tau)
        e = expm(tau * self.matrix)
        return e @ x, (e if jacobian else None)


class VanDerPol(CatalogSystem):
    """``x' = y, y' = mu (1 - x^2) y - x``."""

    _code = K.VAN_DER_POL
    name = "vanderpol"

    def __init__(self, mu=1.0):
        if not mu > 0:
            raise ValueError("Van der Pol parameter mu must be positive")
        self.mu = float(mu)
        super().__init__([mu], 2)


class Hopf(CatalogSystem):
    """Hopf normal form; the defaults give the stable unit-circle limit cycle."""

    _code = K.HOPF
    name = "hopf"

    def __init__(self, lam=1.0, b=-1.0):
        self.lam, self.b = float(lam), float(b)
        super().__init__([lam, b], 2)


class Lorenz(CatalogSystem):
    _code = K.LORENZ
    name = "lorenz"

    def __init__(self, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
        self.sigma, self.rho, self.beta = float(sigma), float(rho), float(beta)
        super().__init__([sigma, rho, beta], 3)


class AugmentedVanDerPol(CatalogSystem):
    """Van der Pol oscillator (Lienard form) padded with decaying coordinates.

    ``x1' = a (x1 - x1**exponent / 3 - x2)``, ``x2' = c x1`` and
    ``xi' = -decay xi`` for ``i >= 3``. ``exponent=3`` is the classical
    oscillator with a stable limit cycle; ``exponent=4`` is accepted but
    blows up in finite time from generic initial states.
    """

    _code = K.AUGMENTED_VDP
    name = "augmented-vanderpol"

    def __init__(self, dimension=2, a=3.5, c=2.0 / 7.0, exponent=3, decay=1.0):
        if dimension < 2:
            raise ValueError("augmented Van der Pol needs dimension >= 2")
        if exponent not in (3, 4):
            raise ValueError("exponent must be 3 or 4")
        self.a, self.c, self.exponent, self.decay = float(a), float(c), int(exponent), float(decay)
        super().__init__([a, c, float(exponent), decay], dimension)


class DiscreteLinear(DynamicalSystem):
    """``x_{k+1} = A x_k``; durations are whole steps."""

    discrete = True
    name = "discrete-linear"

    def __init__(self, matrix):
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionError("dynamics matrix must be square")
        self.matrix = a

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def dynamics(self, x):
        return self.matrix @ self._check(x)

    def dynamics_jacobian(self, x):
        self._check(x)
        return self.matrix.copy()

    def _check_tau(self, tau):
        if tau < 0 or int(tau) != tau:
            raise ValueError("discrete systems need a non-negative integer number of steps")
        return int(tau)

    def flow_and_jacobian(self, x, tau, cfg=DEFAULT_INTEGRATOR, jacobian=True):
        x = self._check(x)
        n = self._check_tau(tau)
        power = np.linalg.matrix_power(self.matrix, n)
        return power @ x, (power if jacobian else None)


def eval_dynamics(system, x):
    return system.dynamics(x)


def flow(system, x, tau, cfg=DEFAULT_INTEGRATOR):
    return system.flow(x, tau, cfg)


def flow_jacobian(system, x, tau, cfg=DEFAULT_INTEGRATOR):
    return system.flow_jacobian(x, tau, cfg)


def make_system(system_id, dim=None):
    """Build a catalog system from a short id used by the CLI and table files."""
    if system_id == "linear2":
        return LinearSystem(np.diag([-10.0, -0.1]))
    if system_id == "static2":
        return LinearSystem(np.zeros((2, 2)))
    if system_id in ("vdp", "vanderpol"):
        return VanDerPol(1.0)
    if system_id == "hopf":
        return Hopf()
    if system_id == "lorenz":
        return Lorenz()
    if system_id in ("augvdp", "augmented-vanderpol"):
        return AugmentedVanDerPol(2 if dim is None else int(dim))
    raise ValueError(f"unknown system id {system_id!r}")


SYSTEM_IDS = ("linear2", "static2", "vdp", "hopf", "lorenz", "augvdp")
