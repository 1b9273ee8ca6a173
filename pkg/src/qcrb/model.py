"""Parameterized density-matrix families.

A :class:`StateModel` bundles the map theta -> rho with optional analytic
derivatives and an optional smooth spectral factorization
``theta -> (V, Y, q)`` (orthonormal range basis, orthonormal null basis,
positive weights with rho = V diag(q) V^dag).  Built-in models cover the
situations exercised by the test-suite; user models are loaded from JSON
config files, either as registry instances with bound constants or as
"stencil" tables that tabulate rho at a center point and its 2p
central-difference neighbours.
"""

from __future__ import annotations

import cmath
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import linalg
from .config import DEFAULT, Tolerances
from .errors import (
    DerivativeInconsistent,
    InvalidState,
    OutOfDomain,
    ParseError,
    StencilIncomplete,
    UnknownModel,
)

Array = np.ndarray
Box = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class StateModel:
    """A family rho_theta on an open parameter box."""

    name: str
    n_s: int
    p: int
    box: Box
    eval_rho: Callable[[Array], Array]
    deriv: Optional[Callable[[Array, int], Array]] = None
    factorization: Optional[Callable[[Array], tuple[Array, Array, Array]]] = None
    dfactorization: Optional[Callable[[Array, int], Array]] = None
    constants: dict = field(default_factory=dict)
    default_theta: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class StateBundle:
    """State and its parameter derivatives at one point."""

    theta: Array
    rho: Array
    drho: tuple[Array, ...]


def in_box(model: StateModel, theta: Array, margin: float = 0.0) -> bool:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        return False
    for t, (lo, hi) in zip(theta, model.box):
        if not (lo + margin < t < hi - margin):
            return False
    return True


def _require_in_box(model: StateModel, theta: Array, margin: float) -> Array:
    theta = np.asarray(theta, dtype=float)
    if not in_box(model, theta, margin):
        raise OutOfDomain(
            f"theta {theta.tolist()} not inside the open box of {model.name!r}"
            + (f" with margin {margin}" if margin else "")
        )
    return theta


def validate_state(rho: Array, n_s: int, tol: Tolerances = DEFAULT) -> Array:
    """Gate hermiticity, positivity and unit trace of a density matrix."""
    rho = linalg.as_matrix(rho)
    if rho.shape != (n_s, n_s):
        raise InvalidState(f"state has shape {rho.shape}, expected {(n_s, n_s)}")
    if linalg.herm_defect(rho) > tol.state:
        raise InvalidState(f"state is not Hermitian (defect {linalg.herm_defect(rho):.3e})")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 10.0 * tol.state:
        raise InvalidState(f"state trace {tr} deviates from 1")
    evals = linalg.herm_eigen(rho, tol).values
    if evals[0] < -tol.state:
        raise InvalidState(f"state has negative eigenvalue {evals[0]:.3e}")
    return rho


def _fd_derivative(model: StateModel, theta: Array, l: int, h: float) -> Array:
    step = np.zeros_like(theta)
    step[l] = h
    hi = model.eval_rho(theta + step)
    lo = model.eval_rho(theta - step)
    return (hi - lo) / (2.0 * h)


def eval_bundle(
    model: StateModel,
    theta,
    h: Optional[float] = None,
    *,
    use_analytic: bool = True,
    cross_check: bool = False,
    tol: Tolerances = DEFAULT,
) -> StateBundle:
    """Evaluate rho and all first derivatives at theta.

    Analytic derivatives are preferred when the model supplies them;
    otherwise central differences with step ``h`` are used (theta must
    then sit at least ``h`` inside the box).  With ``cross_check=True``
    both routes are computed and compared at the 10*h^2 scale.
    """
    h = tol.fd_step if h is None else float(h)
    if h <= 0.0:
        raise ValueError("finite-difference step must be positive")
    analytic_available = model.deriv is not None
    needs_fd = (not analytic_available) or (not use_analytic) or cross_check
    theta = _require_in_box(model, theta, h if needs_fd else 0.0)

    rho = validate_state(model.eval_rho(theta), model.n_s, tol)

    analytic = None
    if analytic_available and (use_analytic or cross_check):
        analytic = [linalg.as_matrix(model.deriv(theta, l)) for l in range(model.p)]
    fd = None
    if needs_fd:
        fd = [_fd_derivative(model, theta, l, h) for l in range(model.p)]

    if cross_check and analytic is not None and fd is not None:
        for l in range(model.p):
            gap = float(np.max(np.abs(analytic[l] - fd[l])))
            scale = 10.0 * h * h * (1.0 + float(np.max(np.abs(analytic[l]))))
            if gap > scale:
                raise DerivativeInconsistent(
                    f"analytic and FD derivatives for parameter {l} differ by {gap:.3e}"
                )

    drho = analytic if (analytic is not None and use_analytic) else fd
    assert drho is not None
    for l, d in enumerate(drho):
        if linalg.herm_defect(d) > tol.state:
            raise InvalidState(f"derivative {l} is not Hermitian")
        if abs(complex(np.trace(d))) > tol.trace:
            raise InvalidState(f"derivative {l} has trace {complex(np.trace(d)):.3e}")
    return StateBundle(theta=theta, rho=rho, drho=tuple(drho))


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


def make_example2(d: complex = 0.6, c1: float = 1.0, c2: float = 2.0) -> StateModel:
    """Rank-2 state on C^3 with a parameter-dependent range.

    rho = theta1 |psi1><psi1| + (1 - theta1) |psi2><psi2| with
    psi1 = (0, 1, 0) and psi2 = (d e^{i phi}, 0, sqrt(1-|d|^2)),
    phi = c1 theta1 + c2 theta2.  Requires 0 < |d| < 1 and c1, c2 != 0.
    """
    d = complex(d)
    if not 0.0 < abs(d) < 1.0:
        raise InvalidState(f"example2 requires 0 < |d| < 1, got |d| = {abs(d)}")
    if c1 == 0.0 or c2 == 0.0:
        raise InvalidState("example2 requires non-zero c1 and c2")
    c = (float(c1), float(c2))
    root = math.sqrt(1.0 - abs(d) ** 2)
    psi1 = np.array([0.0, 1.0, 0.0], dtype=complex)

    def psi2(theta: Array) -> Array:
        phi = c[0] * theta[0] + c[1] * theta[1]
        return np.array([d * cmath.exp(1j * phi), 0.0, root], dtype=complex)

    def dpsi2(theta: Array, l: int) -> Array:
        phi = c[0] * theta[0] + c[1] * theta[1]
        return np.array([1j * c[l] * d * cmath.exp(1j * phi), 0.0, 0.0], dtype=complex)

    def eval_rho(theta: Array) -> Array:
        v2 = psi2(theta)
        return theta[0] * np.outer(psi1, psi1.conj()) + (1.0 - theta[0]) * np.outer(v2, v2.conj())

    def deriv(theta: Array, l: int) -> Array:
        v2 = psi2(theta)
        dv2 = dpsi2(theta, l)
        out = (1.0 - theta[0]) * (np.outer(dv2, v2.conj()) + np.outer(v2, dv2.conj()))
        if l == 0:
            out = out + np.outer(psi1, psi1.conj()) - np.outer(v2, v2.conj())
        return out

    def factorization(theta: Array) -> tuple[Array, Array, Array]:
        phi = c[0] * theta[0] + c[1] * theta[1]
        v = np.column_stack([psi1, psi2(theta)])
        y = np.array([[root], [0.0], [-d.conjugate() * cmath.exp(-1j * phi)]], dtype=complex)
        q = np.array([theta[0], 1.0 - theta[0]])
        return v, y, q

    def dfactorization(theta: Array, l: int) -> Array:
        return np.column_stack([np.zeros(3, dtype=complex), dpsi2(theta, l)])

    return StateModel(
        name="example2",
        n_s=3,
        p=2,
        box=((0.0, 1.0), (0.0, 1.0)),
        eval_rho=eval_rho,
        deriv=deriv,
        factorization=factorization,
        dfactorization=dfactorization,
        constants={"d": d, "c1": c[0], "c2": c[1]},
    )


def make_fixed_range() -> StateModel:
    """Rank-2 state on C^3 whose range is the fixed span of e1, e2.

    V = [e1, e^{i theta2} e2] with weights (theta1, 1 - theta1); the state
    itself is diag(theta1, 1-theta1, 0) and does not depend on theta2.
    """

    def eval_rho(theta: Array) -> Array:
        return np.diag(np.array([theta[0], 1.0 - theta[0], 0.0], dtype=complex))

    def deriv(theta: Array, l: int) -> Array:
        if l == 0:
            return np.diag(np.array([1.0, -1.0, 0.0], dtype=complex))
        return np.zeros((3, 3), dtype=complex)

    def factorization(theta: Array) -> tuple[Array, Array, Array]:
        v = np.zeros((3, 2), dtype=complex)
        v[0, 0] = 1.0
        v[1, 1] = cmath.exp(1j * theta[1])
        y = np.zeros((3, 1), dtype=complex)
        y[2, 0] = 1.0
        return v, y, np.array([theta[0], 1.0 - theta[0]])

    def dfactorization(theta: Array, l: int) -> Array:
        dv = np.zeros((3, 2), dtype=complex)
        if l == 1:
            dv[1, 1] = 1j * cmath.exp(1j * theta[1])
        return dv

    return StateModel(
        name="fixed_range",
        n_s=3,
        p=2,
        box=((0.0, 1.0), (-2.0 * math.pi, 2.0 * math.pi)),
        eval_rho=eval_rho,
        deriv=deriv,
        factorization=factorization,
        dfactorization=dfactorization,
    )


def make_classical_diag() -> StateModel:
    """Full-rank commuting family diag(theta1, theta2, 1 - theta1 - theta2)."""

    def eval_rho(theta: Array) -> Array:
        return np.diag(np.array([theta[0], theta[1], 1.0 - theta[0] - theta[1]], dtype=complex))

    def deriv(theta: Array, l: int) -> Array:
        if l == 0:
            return np.diag(np.array([1.0, 0.0, -1.0], dtype=complex))
        return np.diag(np.array([0.0, 1.0, -1.0], dtype=complex))

    def factorization(theta: Array) -> tuple[Array, Array, Array]:
        return (
            np.eye(3, dtype=complex),
            np.zeros((3, 0), dtype=complex),
            np.array([theta[0], theta[1], 1.0 - theta[0] - theta[1]]),
        )

    def dfactorization(theta: Array, l: int) -> Array:
        return np.zeros((3, 3), dtype=complex)

    # box keeps theta1 + theta2 < 1 so the third weight stays positive
    return StateModel(
        name="classical_diag",
        n_s=3,
        p=2,
        box=((0.0, 0.5), (0.0, 0.5)),
        eval_rho=eval_rho,
        deriv=deriv,
        factorization=factorization,
        dfactorization=dfactorization,
    )


def make_qubit_xy() -> StateModel:
    """Full-rank qubit family (I + theta1 X + theta2 Y) / 2 with non-commuting SLDs."""
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    sy = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)

    def eval_rho(theta: Array) -> Array:
        return 0.5 * (np.eye(2, dtype=complex) + theta[0] * sx + theta[1] * sy)

    def deriv(theta: Array, l: int) -> Array:
        return 0.5 * (sx if l == 0 else sy)

    return StateModel(
        name="qubit_xy",
        n_s=2,
        p=2,
        box=((-0.6, 0.6), (-0.6, 0.6)),
        eval_rho=eval_rho,
        deriv=deriv,
    )


def make_pure_state() -> StateModel:
    """Pure qubit family (cos theta1, e^{i theta2} sin theta1)."""

    def psi(theta: Array) -> Array:
        return np.array([math.cos(theta[0]), cmath.exp(1j * theta[1]) * math.sin(theta[0])])

    def dpsi(theta: Array, l: int) -> Array:
        if l == 0:
            return np.array(
                [-math.sin(theta[0]), cmath.exp(1j * theta[1]) * math.cos(theta[0])]
            )
        return np.array([0.0, 1j * cmath.exp(1j * theta[1]) * math.sin(theta[0])])

    def eval_rho(theta: Array) -> Array:
        v = psi(theta)
        return np.outer(v, v.conj())

    def deriv(theta: Array, l: int) -> Array:
        v = psi(theta)
        dv = dpsi(theta, l)
        return np.outer(dv, v.conj()) + np.outer(v, dv.conj())

    def factorization(theta: Array) -> tuple[Array, Array, Array]:
        v = psi(theta).reshape(2, 1)
        y = np.array(
            [[-cmath.exp(-1j * theta[1]) * math.sin(theta[0])], [math.cos(theta[0])]]
        )
        return v, y, np.array([1.0])

    def dfactorization(theta: Array, l: int) -> Array:
        return dpsi(theta, l).reshape(2, 1)

    return StateModel(
        name="pure_state",
        n_s=2,
        p=2,
        box=((0.05, 1.5), (-3.0, 3.0)),
        eval_rho=eval_rho,
        deriv=deriv,
        factorization=factorization,
        dfactorization=dfactorization,
    )


_REGISTRY: dict[str, dict] = {
    "example2": {"factory": make_example2, "constants": {"d": 0.6, "c1": 1.0, "c2": 2.0}},
    "fixed_range": {"factory": make_fixed_range, "constants": {}},
    "classical_diag": {"factory": make_classical_diag, "constants": {}},
    "qubit_xy": {"factory": make_qubit_xy, "constants": {}},
    "pure_state": {"factory": make_pure_state, "constants": {}},
}


def builtin_registry() -> list[dict]:
    """Descriptors (name, dimensions, box, constants) of the built-in models."""
    out = []
    for name, entry in _REGISTRY.items():
        probe = entry["factory"]()
        out.append(
            {
                "name": name,
                "n_s": probe.n_s,
                "p": probe.p,
                "box": [list(b) for b in probe.box],
                "constants": dict(entry["constants"]),
            }
        )
    return out


def build_model(name: str, **constants) -> StateModel:
    if name not in _REGISTRY:
        raise UnknownModel(f"no built-in model named {name!r}")
    return _REGISTRY[name]["factory"](**constants)


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def _as_complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ParseError(f"expected a number or [re, im] pair, got {value!r}")


def _parse_theta(obj, p: int) -> Optional[tuple[float, ...]]:
    theta = obj.get("theta")
    if theta is None:
        return None
    if not isinstance(theta, list) or len(theta) != p:
        raise ParseError(f"'theta' must be a list of {p} numbers")
    return tuple(float(t) for t in theta)


def _make_stencil_model(obj: dict, tol: Tolerances) -> StateModel:
    try:
        h = float(obj["h"])
        center = np.asarray([float(t) for t in obj["center"]], dtype=float)
        rho_center = linalg.matrix_from_json(obj["rho_center"])
        plus = obj["rho_plus"]
        minus = obj["rho_minus"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad stencil config: {exc}") from exc
    if h <= 0.0:
        raise ParseError("stencil step h must be positive")
    p = center.size
    if not isinstance(plus, list) or not isinstance(minus, list) or len(plus) != p or len(minus) != p:
        raise StencilIncomplete(f"stencil needs {p} forward and {p} backward points")
    n_s = rho_center.shape[0]
    table: dict[tuple[float, ...], Array] = {tuple(center): validate_state(rho_center, n_s, tol)}
    for l in range(p):
        step = np.zeros(p)
        step[l] = h
        try:
            hi = linalg.matrix_from_json(plus[l])
            lo = linalg.matrix_from_json(minus[l])
        except ValueError as exc:
            raise ParseError(f"bad stencil matrix for parameter {l}: {exc}") from exc
        table[tuple(center + step)] = validate_state(hi, n_s, tol)
        table[tuple(center - step)] = validate_state(lo, n_s, tol)

    def lookup(theta: Array) -> Array:
        key = tuple(float(t) for t in theta)
        for point, rho in table.items():
            if max(abs(a - b) for a, b in zip(point, key)) <= 1e-12 * (1.0 + max(map(abs, point))):
                return rho.copy()
        raise OutOfDomain(f"stencil model tabulated only at its center and {2 * p} neighbours")

    def deriv(theta: Array, l: int) -> Array:
        key = tuple(float(t) for t in theta)
        if max(abs(a - b) for a, b in zip(tuple(center), key)) > 1e-12:
            raise OutOfDomain("stencil derivatives are available only at the center")
        step = np.zeros(p)
        step[l] = h
        return (table[tuple(center + step)] - table[tuple(center - step)]) / (2.0 * h)

    box = tuple((float(c - 2.0 * h), float(c + 2.0 * h)) for c in center)
    return StateModel(
        name="stencil",
        n_s=n_s,
        p=p,
        box=box,
        eval_rho=lookup,
        deriv=deriv,
        constants={"h": h},
        default_theta=tuple(float(c) for c in center),
    )


def model_from_config(obj: dict, tol: Tolerances = DEFAULT) -> StateModel:
    """Build a model from a parsed config dict (see :func:`load_model`)."""
    if not isinstance(obj, dict) or "model" not in obj:
        raise ParseError("model config must be an object with a 'model' key")
    name = obj["model"]
    if name == "stencil":
        return _make_stencil_model(obj, tol)
    if name not in _REGISTRY:
        raise UnknownModel(f"no built-in model named {name!r}")
    allowed = set(_REGISTRY[name]["constants"])
    constants = {}
    for key, value in obj.items():
        if key in ("model", "theta", "box"):
            continue
        if key not in allowed:
            raise ParseError(f"model {name!r} does not take a constant {key!r}")
        constants[key] = _as_complex(value) if key == "d" else float(value)
    built = build_model(name, **constants)
    box = built.box
    if "box" in obj:
        raw = obj["box"]
        if (
            not isinstance(raw, list)
            or len(raw) != built.p
            or not all(isinstance(b, list) and len(b) == 2 for b in raw)
        ):
            raise ParseError(f"'box' must be a list of {built.p} [lo, hi] pairs")
        box = tuple((float(lo), float(hi)) for lo, hi in raw)
        if any(not lo < hi for lo, hi in box):
            raise InvalidState("box intervals must be non-empty")
    theta = _parse_theta(obj, built.p)
    built = dataclasses.replace(built, box=box, default_theta=theta)
    if theta is not None and not in_box(built, np.asarray(theta)):
        raise OutOfDomain(f"config theta {list(theta)} lies outside the box")
    return built


def load_model(path, tol: Tolerances = DEFAULT) -> StateModel:
    """Load a model from a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
        obj = json.loads(text)
    except OSError as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_config(obj, tol)


def stencil_payload(model: StateModel, theta, h: float) -> dict:
    """Serialize a model to the stencil config format around one point."""
    theta = _require_in_box(model, np.asarray(theta, dtype=float), h)
    payload = {
        "model": "stencil",
        "h": float(h),
        "center": [float(t) for t in theta],
        "rho_center": linalg.matrix_to_json(model.eval_rho(theta)),
        "rho_plus": [],
        "rho_minus": [],
    }
    for l in range(model.p):
        step = np.zeros(model.p)
        step[l] = h
        payload["rho_plus"].append(linalg.matrix_to_json(model.eval_rho(theta + step)))
        payload["rho_minus"].append(linalg.matrix_to_json(model.eval_rho(theta - step)))
    return payload
