"""Lie-algebraic strong-accessibility analysis in Bloch coordinates.

Given a model (Hamiltonian + Lindblad channels with efficiencies), decide in
how many dimensions the state distribution can spread: the noise directions
generate a Lie algebra of vector fields, closed under brackets with the
Stratonovich-corrected drift of each channel, and the support dimension is
the pointwise rank of that algebra at interior sample points.

All fields are exact multivariate polynomials in (x, y, z).  The convention
throughout is the *true* Bloch velocity: a tangent matrix Delta maps to
2 * pauli_coefficients(Delta), so that a field here is literally dv/dt of the
master equation.  Brackets are

    lie_bracket(V, W) = (Jacobian of V) . W - (Jacobian of W) . V

with that sign the noise-field brackets reproduce operator commutators:
lie_bracket(g_field(A), g_field(B)) == g_field(A@B - B@A), coefficient-wise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT
from .qubit_state import (
    IDENTITY,
    PAULI,
    as_matrix2,
    dagger,
    pauli_coefficients,
)


class DegreeCapError(RuntimeError):
    """A polynomial operation would exceed the configured degree cap."""


class AccessibilityError(RuntimeError):
    """Inconsistency between analytic and numeric accessibility verdicts."""


class ClosureNotConverged(RuntimeError):
    """Lie closure hit the bracket-depth cap with rank still below 3."""


DEGREE_CAP = 8
DEPTH_CAP = 6


# ---------------------------------------------------------------------------
# exact polynomial algebra in (x, y, z)
# ---------------------------------------------------------------------------

class Poly3:
    """Real-coefficient polynomial in three variables, stored sparsely.

    Coefficients are a dict {(ix, iy, iz): coef}.  Arithmetic is exact over
    floats; ``cleanup`` drops coefficients below a threshold (used after
    brackets so that float dust does not masquerade as new basis directions).
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict | float = 0.0):
        if isinstance(coeffs, dict):
            self.coeffs = {k: float(v) for k, v in coeffs.items() if v != 0.0}
        else:
            c = float(coeffs)
            self.coeffs = {(0, 0, 0): c} if c != 0.0 else {}

    @staticmethod
    def variable(axis: int) -> "Poly3":
        key = tuple(1 if i == axis else 0 for i in range(3))
        return Poly3({key: 1.0})

    def degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    def __add__(self, other):
        other = other if isinstance(other, Poly3) else Poly3(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return Poly3(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly3({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        other = other if isinstance(other, Poly3) else Poly3(other)
        return self + (-other)

    def __rsub__(self, other):
        return Poly3(other) + (-self)

    def __mul__(self, other):
        if not isinstance(other, Poly3):
            c = float(other)
            return Poly3({k: c * v for k, v in self.coeffs.items()})
        out: dict = {}
        for ka, va in self.coeffs.items():
            for kb, vb in other.coeffs.items():
                k = (ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2])
                out[k] = out.get(k, 0.0) + va * vb
        return Poly3(out)

    __rmul__ = __mul__

    def diff(self, axis: int) -> "Poly3":
        out = {}
        for k, v in self.coeffs.items():
            if k[axis] == 0:
                continue
            kk = list(k)
            kk[axis] -= 1
            out[tuple(kk)] = out.get(tuple(kk), 0.0) + v * k[axis]
        return Poly3(out)

    def cleanup(self, tol: float = DEFAULT.coefficient_cleanup) -> "Poly3":
        return Poly3({k: v for k, v in self.coeffs.items() if abs(v) > tol})

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., 3)."""
        pts = np.asarray(points, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        out = np.zeros(pts.shape[:-1])
        for (i, j, k), v in self.coeffs.items():
            out = out + v * (x ** i) * (y ** j) * (z ** k)
        return out

    def max_abs_coeff(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)

    def __repr__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs):
            mono = "".join(f"{n}^{p}" if p > 1 else n
                           for n, p in zip("xyz", k) if p > 0)
            parts.append(f"{self.coeffs[k]:+g}{('*' + mono) if mono else ''}")
        return " ".join(parts)


@dataclass(frozen=True)
class PolyVectorField:
    """Vector field on R^3 with polynomial components."""

    components: tuple[Poly3, Poly3, Poly3]
    name: str = field(default="", compare=False)

    @staticmethod
    def zero() -> "PolyVectorField":
        return PolyVectorField((Poly3(), Poly3(), Poly3()))

    def degree(self) -> int:
        return max(c.degree() for c in self.components)

    def is_zero(self, tol: float = DEFAULT.coefficient_cleanup) -> bool:
        return all(c.max_abs_coeff() <= tol for c in self.components)

    def cleanup(self, tol: float = DEFAULT.coefficient_cleanup) -> "PolyVectorField":
        return PolyVectorField(tuple(c.cleanup(tol) for c in self.components), self.name)

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def scale(self, c: float) -> "PolyVectorField":
        return PolyVectorField(tuple(comp * c for comp in self.components), self.name)

    def scalar_mul(self, p: Poly3) -> "PolyVectorField":
        return PolyVectorField(tuple(p * comp for comp in self.components))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate; returns shape (..., 3)."""
        return np.stack([c(points) for c in self.components], axis=-1)

    def coefficient_vector(self, keys: list[tuple[int, tuple[int, int, int]]]) -> np.ndarray:
        return np.array([self.components[c].coeffs.get(k, 0.0) for c, k in keys])

    def support(self) -> set[tuple[int, tuple[int, int, int]]]:
        return {(c, k) for c in range(3) for k in self.components[c].coeffs}

    def named(self, name: str) -> "PolyVectorField":
        return PolyVectorField(self.components, name)


def lie_bracket(V: PolyVectorField, W: PolyVectorField,
                degree_cap: int = DEGREE_CAP) -> PolyVectorField:
    """Bracket (J_V) . W - (J_W) . V, exact polynomial arithmetic.

    Antisymmetric, satisfies Jacobi, and matches operator commutators
    through g_field.  Raises :class:`DegreeCapError` if the result would
    exceed ``degree_cap``.
    """
    dv = max(V.degree(), 0)
    dw = max(W.degree(), 0)
    if not V.is_zero() and not W.is_zero() and dv + dw - 1 > degree_cap:
        raise DegreeCapError(
            f"bracket [{V.name or 'V'}, {W.name or 'W'}] would have degree "
            f"{dv + dw - 1} > cap {degree_cap}"
        )
    comps = []
    for i in range(3):
        acc = Poly3()
        for ell in range(3):
            acc = acc + V.components[i].diff(ell) * W.components[ell]
            acc = acc - W.components[i].diff(ell) * V.components[ell]
        comps.append(acc)
    return PolyVectorField(tuple(comps)).cleanup()


# ---------------------------------------------------------------------------
# operator decomposition and field constructors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorDecomposition:
    """Pauli expansion L = (v_r + i v_i) . sigma + trace_part * I."""

    v_r: np.ndarray
    v_i: np.ndarray
    trace_part: complex

    @staticmethod
    def of(L) -> "OperatorDecomposition":
        L = as_matrix2(L)
        coeffs = np.array([np.trace(L @ s) / 2.0 for s in PAULI])
        return OperatorDecomposition(coeffs.real.copy(), coeffs.imag.copy(),
                                     complex(np.trace(L) / 2.0))

    def reconstruct(self) -> np.ndarray:
        m = self.trace_part * IDENTITY
        for k in range(3):
            m = m + (self.v_r[k] + 1j * self.v_i[k]) * PAULI[k]
        return m

    @property
    def v(self) -> np.ndarray:
        return np.concatenate([self.v_r, self.v_i])


def traceless(L) -> np.ndarray:
    L = as_matrix2(L)
    return L - (np.trace(L) / 2.0) * IDENTITY


def g_field(L) -> PolyVectorField:
    """Noise vector field of a channel operator, in true Bloch velocity.

    Built from the Pauli expansion of the traceless part (the identity
    component never contributes to back-action).  Degree <= 2.
    """
    d = OperatorDecomposition.of(traceless(L))
    a, b, c = d.v_r
    ta, tb, tc = d.v_i
    x, y, z = (Poly3.variable(i) for i in range(3))
    dot = a * x + b * y + c * z
    gx = a - tb * z + tc * y - dot * x
    gy = b - tc * x + ta * z - dot * y
    gz = c + tb * x - ta * y - dot * z
    return PolyVectorField((gx * 2.0, gy * 2.0, gz * 2.0)).cleanup()


def _field_from_linear_map(fn) -> PolyVectorField:
    """Pushforward of rho -> fn(rho) (linear in rho) to Bloch coordinates."""
    x, y, z = (Poly3.variable(i) for i in range(3))
    const = 2.0 * pauli_coefficients(fn(IDENTITY / 2.0))
    cols = [2.0 * pauli_coefficients(fn(s / 2.0)) for s in PAULI]
    comps = []
    for i in range(3):
        comps.append(Poly3(const[i]) + cols[0][i] * x + cols[1][i] * y + cols[2][i] * z)
    return PolyVectorField(tuple(comps)).cleanup()


def f_field(L) -> PolyVectorField:
    """Relaxation drift field of one channel (affine, degree <= 1)."""
    L = as_matrix2(L)
    LdL = dagger(L) @ L
    return _field_from_linear_map(lambda m: L @ m @ dagger(L) - 0.5 * (LdL @ m + m @ LdL))


def h_field(H) -> PolyVectorField:
    """Hamiltonian rotation field -i[H, rho] (linear, degree <= 1)."""
    H = as_matrix2(H)
    return _field_from_linear_map(lambda m: -1j * (H @ m - m @ H))


def strat_correction(G: PolyVectorField) -> PolyVectorField:
    """Ito -> Stratonovich drift correction -(1/2) (J_G) . G for a unit-
    efficiency noise field; scale by eta for efficiency eta."""
    comps = []
    for i in range(3):
        acc = Poly3()
        for ell in range(3):
            acc = acc + G.components[i].diff(ell) * G.components[ell]
        comps.append(acc * (-0.5))
    return PolyVectorField(tuple(comps)).cleanup()


def d_field(L) -> PolyVectorField:
    """Stratonovich correction of channel L at unit efficiency (degree <= 3)."""
    return strat_correction(g_field(L))


def _affine_scalar(fn) -> Poly3:
    """Pushforward of a scalar rho -> fn(rho), affine in rho."""
    x, y, z = (Poly3.variable(i) for i in range(3))
    c0 = float(fn(IDENTITY / 2.0))
    cs = [float(fn(s / 2.0)) for s in PAULI]
    return Poly3(c0) + cs[0] * x + cs[1] * y + cs[2] * z


def _expectation_poly(L) -> Poly3:
    """trace(L rho + rho L+) as an affine polynomial of (x, y, z)."""
    L = as_matrix2(L)
    return _affine_scalar(lambda m: np.trace(L @ m + m @ dagger(L)).real)


def _sandwich_field(Lj, Lk) -> PolyVectorField:
    """Field of rho -> X + X+ - trace(X + X+) rho with X = [Lj, Lk] rho Lj+.

    This is the non-operator part of the drift/noise bracket carried by the
    unmonitored fraction of channel j (degree <= 2).
    """
    Lj, Lk = as_matrix2(Lj), as_matrix2(Lk)
    C = Lj @ Lk - Lk @ Lj
    lin = _field_from_linear_map(lambda m: C @ m @ dagger(Lj) + Lj @ m @ dagger(C))
    tr = _affine_scalar(lambda m: np.trace(C @ m @ dagger(Lj) + Lj @ m @ dagger(C)).real)
    x, y, z = (Poly3.variable(i) for i in range(3))
    vs = (x, y, z)
    comps = tuple(lin.components[i] - tr * vs[i] for i in range(3))
    return PolyVectorField(comps).cleanup()


def drift_bracket(Lj, eta_j: float, Lk) -> PolyVectorField:
    """Bracket of channel j's Stratonovich-corrected drift with channel k's
    noise field, assembled from operator data.

    The eta_j-weighted splitting is

        (1 - eta) * [relaxation-only part]  +  eta * [corrected part]

    where the relaxation-only part is the sandwich field plus g_field of
    Q1 = [Lk, Lj+ Lj]/2, and the corrected part is g_field of the state-
    dependent operator Q(rho) = [Lk, ((Lj+ + Lj)/2 - tr(Lj rho + rho Lj+)) Lj]
    plus a scalar multiple of Lj, expanded into constant-operator fields with
    polynomial scalar weights.  Always equals
    lie_bracket(f_field(Lj) + eta_j * d_field(Lj), g_field(Lk)) exactly.
    """
    Lj, Lk = as_matrix2(Lj), as_matrix2(Lk)
    eta = float(eta_j)
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"efficiency {eta} outside [0, 1]")

    comm_jk = Lj @ Lk - Lk @ Lj  # [Lj, Lk]
    q1 = 0.5 * (Lk @ (dagger(Lj) @ Lj) - (dagger(Lj) @ Lj) @ Lk)
    uncorrected = _sandwich_field(Lj, Lk) + g_field(q1)

    # corrected part: Q(rho) = Q2 + tr(Lj rho + rho Lj+) [Lj, Lk] + g2(rho) Lj
    s = (dagger(Lj) + Lj) @ Lj
    q2 = 0.5 * (Lk @ s - s @ Lk)
    g1 = _expectation_poly(Lj)

    def _g2(m):
        a = np.trace((Lj + dagger(Lj)) @ (Lk @ m + m @ dagger(Lk))).real
        return a

    g2_lin = _affine_scalar(_g2)
    g2 = g2_lin - g1 * _expectation_poly(Lk)
    corrected = (
        g_field(q2)
        + g_field(comm_jk).scalar_mul(g1)
        + g_field(Lj).scalar_mul(g2)
    )

    out = uncorrected.scale(1.0 - eta) + corrected.scale(eta)
    return out.cleanup()


# ---------------------------------------------------------------------------
# operator-level classification shortcuts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveVerdict:
    curve: bool
    canonical_form: str  # "sigma_minus_like" | "sigma_z_like" | "none"
    residual: float
    r: float = 0.0
    c: complex = 0.0


def curve_criterion(L, tol: float = DEFAULT.basis_independence) -> CurveVerdict:
    """Single-channel test for confinement to a deterministic curve.

    The condition is [L, L+] L = r L + c I with r real and c complex,
    decided by least squares; operators passing it are, up to a basis
    change, either a lowering operator (non-normal) or a shifted
    sigma_z (normal).
    """
    L = as_matrix2(L)
    if np.max(np.abs(L)) == 0.0:
        raise ValueError("curve criterion needs a nonzero operator")
    comm = L @ dagger(L) - dagger(L) @ L
    M = comm @ L
    # unknowns: r (real), Re c, Im c
    a_cols = np.stack([L.flatten(), IDENTITY.flatten(), 1j * IDENTITY.flatten()], axis=1)
    A = np.concatenate([a_cols.real, a_cols.imag], axis=0)
    # r multiplies L which is complex: real unknown times complex column -> keep L column complex
    b = np.concatenate([M.flatten().real, M.flatten().imag])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.linalg.norm(A @ sol - b))
    scale = max(float(np.linalg.norm(M.flatten())), float(np.linalg.norm(L.flatten())), 1.0)
    is_curve = resid <= tol * scale
    if not is_curve:
        return CurveVerdict(False, "none", resid)
    normal = float(np.max(np.abs(comm))) <= tol * max(float(np.max(np.abs(L))) ** 2, 1.0)
    form = "sigma_z_like" if normal else "sigma_minus_like"
    return CurveVerdict(True, form, resid, float(sol[0]), complex(sol[1], sol[2]))


@dataclass(frozen=True)
class DependenceVerdict:
    dependent: bool
    option: str  # "linear" | "all_skew" | "rotated_projection" | "independent"


def _numeric_g_rank(operators, rng, n_points: int = 20) -> int:
    fields = [g_field(L) for L in operators]
    pts = sample_ball_points(rng, n_points)
    best = 0
    for p in pts:
        vals = np.stack([f(p) for f in fields])
        best = max(best, _rank(vals))
    return best


def g_dependence(operators, tol: float = DEFAULT.basis_independence,
                 seed: int = 20) -> DependenceVerdict:
    """Decide whether 2 or 3 channel operators give everywhere linearly
    dependent noise directions, and classify the mechanism.

    For two operators: dependent iff the traceless parts are real multiples
    of each other.  For three: dependent iff the six-component expansions
    are linearly dependent, or all real parts vanish (pure rotations), or
    the real parts span a plane and the projected imaginary parts are a
    common multiple of the quarter-turned real parts.  The analytic verdict
    is cross-checked against the numeric rank of the fields at random
    interior points.
    """
    ops = [traceless(L) for L in operators]
    if len(ops) not in (2, 3):
        raise ValueError("g_dependence expects 2 or 3 operators")
    decs = [OperatorDecomposition.of(L) for L in ops]
    rng = np.random.default_rng(seed)

    if len(ops) == 2:
        v1, v2 = decs[0].v, decs[1].v
        n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
        if n1 == 0.0 or n2 == 0.0:
            verdict = DependenceVerdict(True, "linear")
        else:
            cross = v2 - (v1 @ v2 / (n1 * n1)) * v1
            verdict = DependenceVerdict(bool(np.linalg.norm(cross) <= tol * n2), "linear"
                                        if np.linalg.norm(cross) <= tol * n2 else "independent")
        expected_rank = 1 if verdict.dependent else 2
    else:
        verdict = _three_op_dependence(decs, tol)
        expected_rank = 2 if verdict.dependent else 3

    numeric = _numeric_g_rank(ops, rng)
    # degenerate inputs (zero fields) can push the numeric rank below the
    # analytic expectation; only a numeric rank *above* it is a real clash
    if numeric > expected_rank:
        raise AccessibilityError(
            f"analytic dependence verdict {verdict} contradicts numeric rank {numeric}")
    return verdict


def _three_op_dependence(decs, tol: float) -> DependenceVerdict:
    V = np.stack([d.v for d in decs])          # (3, 6)
    scale = max(float(np.max(np.abs(V))), 1e-30)
    if _rank(V, rel=tol) <= 2:
        return DependenceVerdict(True, "linear")
    R = np.stack([d.v_r for d in decs])        # (3, 3)
    if float(np.max(np.abs(R))) <= tol * scale:
        return DependenceVerdict(True, "all_skew")
    if _rank(R, rel=tol) == 2:
        # orthonormal basis of the plane S spanned by the real parts
        _, s, vt = np.linalg.svd(R)
        e1, e2 = vt[0], vt[1]
        for orientation in (+1.0, -1.0):
            betas = []
            ok = True
            for d in decs:
                r2 = np.array([d.v_r @ e1, d.v_r @ e2])
                i2 = np.array([d.v_i @ e1, d.v_i @ e2])
                rot = orientation * np.array([r2[1], -r2[0]])  # quarter turn in S
                nr = np.linalg.norm(rot)
                if nr <= tol * max(1.0, scale):
                    if np.linalg.norm(i2) > tol * max(1.0, scale):
                        ok = False
                        break
                    continue
                # require i2 parallel to rot with a real factor
                beta = float(i2 @ rot) / float(rot @ rot)
                if np.linalg.norm(i2 - beta * rot) > tol * max(1.0, scale):
                    ok = False
                    break
                betas.append(beta)
            if ok and (len(betas) == 0 or np.ptp(betas) <= tol * max(1.0, scale)):
                return DependenceVerdict(True, "rotated_projection")
    return DependenceVerdict(False, "independent")


# ---------------------------------------------------------------------------
# Lie closure and dimension verdicts
# ---------------------------------------------------------------------------

def sample_ball_points(rng: np.random.Generator, n: int,
                       radius: float = 0.9, pole_margin: float = 1e-3) -> np.ndarray:
    """Rejection-sample interior points, away from the z = +-1 poles."""
    out = []
    while len(out) < n:
        cand = rng.uniform(-radius, radius, size=(4 * n, 3))
        keep = np.linalg.norm(cand, axis=1) <= radius
        keep &= np.abs(1.0 - cand[:, 2]) > pole_margin
        keep &= np.abs(1.0 + cand[:, 2]) > pole_margin
        out.extend(cand[keep])
    return np.asarray(out[:n])


def _rank(mat: np.ndarray, rel: float = DEFAULT.rank_threshold) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel * s[0]))


@dataclass
class LieBasis:
    """Coefficient-independent generating set of the drift-preserved algebra."""

    fields: list[PolyVectorField]
    provenance: list[str]
    pointwise_ranks: dict[int, int]     # sample index -> rank
    sample_points: np.ndarray
    converged: bool
    termination: str    # "coefficient_fixpoint" | "pointwise_fixpoint" | "rank_saturated" | "depth_cap" | "degree_cap"

    def max_rank(self) -> int:
        return max(self.pointwise_ranks.values(), default=0)


class _CoefficientSpan:
    """Incremental span of polynomial fields as coefficient vectors."""

    def __init__(self, tol: float):
        self.tol = tol
        self.keys: list = []
        self.key_index: dict = {}
        self.rows: list[np.ndarray] = []

    def _vector(self, f: PolyVectorField) -> np.ndarray:
        for key in sorted(f.support()):
            if key not in self.key_index:
                self.key_index[key] = len(self.keys)
                self.keys.append(key)
                for i, r in enumerate(self.rows):
                    self.rows[i] = np.append(r, 0.0)
        v = np.zeros(len(self.keys))
        for (c, k), idx in self.key_index.items():
            v[idx] = f.components[c].coeffs.get(k, 0.0)
        return v

    def try_add(self, f: PolyVectorField) -> bool:
        """Add if independent of the current span; returns True if added."""
        v = self._vector(f)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return False
        v = v / nv
        for r in self.rows:
            v = v - (r @ v) * r
        res = np.linalg.norm(v)
        if res <= self.tol:
            return False
        self.rows.append(v / res)
        return True


def _drift_generators(model) -> list[tuple[PolyVectorField, str]]:
    gens = []
    for j, ch in enumerate(model.channels):
        f = f_field(ch.operator).named(f"F[{j}]")
        eta = ch.efficiency
        if eta == 0.0:
            gens.append((f, f"F[{j}]"))
        elif eta == 1.0:
            fd = (f + d_field(ch.operator)).cleanup().named(f"F+D[{j}]")
            gens.append((fd, f"F+D[{j}]"))
        else:
            fd = (f + d_field(ch.operator)).cleanup().named(f"F+D[{j}]")
            gens.append((f, f"F[{j}]"))
            gens.append((fd, f"F+D[{j}]"))
    if not np.all(model.hamiltonian == 0):
        gens.append((h_field(model.hamiltonian).named("H"), "H"))
    return gens


def _pointwise_in_span(candidate: PolyVectorField, basis_values: np.ndarray,
                       points: np.ndarray, rel: float = DEFAULT.rank_threshold) -> bool:
    """True if candidate(p) lies in span{basis(p)} at every sample point."""
    vals = candidate(points)            # (P, 3)
    for ip in range(points.shape[0]):
        B = basis_values[:, ip, :]      # (n_basis, 3)
        v = vals[ip]
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        stack = np.vstack([B, v])
        s_b = np.linalg.svd(B, compute_uv=False) if B.size else np.array([0.0])
        s_a = np.linalg.svd(stack, compute_uv=False)
        top = max(s_a[0], 1e-30)
        rank_b = int(np.sum(s_b > rel * top)) if B.size else 0
        rank_a = int(np.sum(s_a > rel * top))
        if rank_a > rank_b:
            return False
    return True


def lie_closure(model, *, seed: int = 7, n_samples: int = 24,
                depth_cap: int = DEPTH_CAP, degree_cap: int = DEGREE_CAP,
                tol: float = DEFAULT.basis_independence) -> LieBasis:
    """Build the noise Lie algebra closed under per-channel drift brackets.

    Generators are the noise fields of the monitored channels; the drift of
    each channel enters as independent generators for its unmonitored and
    monitored fractions (both fractions present when 0 < eta < 1).  The
    iteration stops when the pointwise rank saturates at 3 everywhere, when
    no coefficient-independent field appears, or when one full round of new
    brackets stays pointwise inside the current span (the spanned plane
    field is then involutive and drift-invariant, so the algebra cannot
    leave it).  Hitting the depth cap with rank < 3 marks the basis as not
    converged, to be corroborated by Monte Carlo.
    """
    if model.n_channels == 0:
        raise ValueError("lie_closure needs at least one channel")
    rng = np.random.default_rng(seed)
    points = sample_ball_points(rng, n_samples)
    drift_gens = _drift_generators(model)

    span = _CoefficientSpan(tol)
    fields: list[PolyVectorField] = []
    provenance: list[str] = []
    depths: list[int] = []

    for j, ch in enumerate(model.channels):
        if ch.efficiency == 0.0:
            continue
        g = g_field(ch.operator).cleanup().named(f"G[{j}]")
        if g.is_zero():
            continue
        if span.try_add(g):
            fields.append(g)
            provenance.append(f"G[{j}]")
            depths.append(0)

    bracket_done: set[tuple[str, str]] = set()
    termination = "coefficient_fixpoint"
    converged = True
    degree_capped = False

    def ranks() -> dict[int, int]:
        if not fields:
            return {i: 0 for i in range(points.shape[0])}
        vals = np.stack([f(points) for f in fields])  # (n_fields, P, 3)
        return {i: _rank(vals[:, i, :]) for i in range(points.shape[0])}

    while True:
        current = ranks()
        if fields and min(current.values()) == 3 and max(current.values()) == 3:
            termination = "rank_saturated"
            break

        candidates: list[tuple[PolyVectorField, str, int]] = []
        for i, j in itertools.combinations(range(len(fields)), 2):
            key = (provenance[i], provenance[j])
            if key in bracket_done:
                continue
            bracket_done.add(key)
            try:
                br = lie_bracket(fields[i], fields[j], degree_cap)
            except DegreeCapError:
                degree_capped = True
                continue
            if not br.is_zero():
                candidates.append((br, f"[{provenance[i]},{provenance[j]}]",
                                   max(depths[i], depths[j]) + 1))
        for i in range(len(fields)):
            for z, zname in drift_gens:
                key = (zname, provenance[i])
                if key in bracket_done:
                    continue
                bracket_done.add(key)
                try:
                    br = lie_bracket(z, fields[i], degree_cap)
                except DegreeCapError:
                    degree_capped = True
                    continue
                if not br.is_zero():
                    candidates.append((br, f"[{zname},{provenance[i]}]", depths[i] + 1))

        new_fields = [(f, p, d) for f, p, d in candidates if d <= depth_cap]
        over_depth = len(new_fields) < len(candidates)

        added_any = False
        basis_values = (np.stack([f(points) for f in fields])
                        if fields else np.zeros((0, points.shape[0], 3)))
        pointwise_new = []
        for f, p, d in new_fields:
            f = f.named(p)
            if not span.try_add(f):
                continue
            if _pointwise_in_span(f, basis_values, points):
                pointwise_new.append((f, p, d))
                continue
            fields.append(f)
            provenance.append(p)
            depths.append(d)
            added_any = True
            basis_values = np.stack([g(points) for g in fields])

        if not added_any:
            if pointwise_new:
                termination = "pointwise_fixpoint"
            elif degree_capped:
                termination = "degree_cap"
                converged = False
            elif over_depth:
                termination = "depth_cap"
                converged = False
            else:
                termination = "coefficient_fixpoint"
            break

    final = ranks()
    if termination in ("depth_cap", "degree_cap") and max(final.values(), default=0) == 3:
        converged = True
        termination = "rank_saturated"
    return LieBasis(fields, provenance, final, points, converged, termination)


@dataclass
class DimensionVerdict:
    dimension: int
    confidence: str                  # "exact_rank" | "mc_corroborated"
    sample_points: np.ndarray
    draw_ranks: list[int]
    provenance: list[str]
    termination: str


def _genericity_draws(model, rng: np.random.Generator, n_draws: int = 3):
    """Rescale channel strengths and jitter interior efficiencies.

    Exact efficiencies 0 and 1 are structural and never perturbed.  The
    first draw is the model itself.
    """
    from .qubit_state import LindbladChannel, ModelSpec
    yield model
    for _ in range(n_draws - 1):
        chans = []
        for ch in model.channels:
            s = rng.uniform(0.6, 1.7)
            eta = ch.efficiency
            if 0.0 < eta < 1.0:
                eta = float(np.clip(eta * rng.uniform(0.8, 1.25), 0.03, 0.97))
            chans.append(LindbladChannel(s * ch.operator, eta))
        yield ModelSpec(model.hamiltonian, tuple(chans))


def mc_dimension_estimate(model, *, seed: int = 0, n: int = 2000,
                          dt: float = 1e-5, horizon: float = 0.01,
                          rel_floor: float = 0.12) -> int:
    """PCA count of a short-horizon Monte Carlo cloud, above the noise floor.

    The cloud of n end states from a common generic interior start spans the
    locally reachable directions; principal components below ``rel_floor``
    of the leading one are attributed to manifold curvature and integrator
    noise.
    """
    from .sde_engine import simulate_ensemble
    from .qubit_state import density_from_bloch

    rng = np.random.default_rng(seed)
    start = sample_ball_points(rng, 1, radius=0.7)[0]
    rho0 = density_from_bloch(start)
    ens = simulate_ensemble(model, rho0, dt, horizon, n, base_seed=seed)
    finals = np.array([[t.xyz[-1, 0], t.xyz[-1, 1], t.xyz[-1, 2]] for t in ens.trajectories])
    centered = finals - finals.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_floor * s[0]))


def su2_from_angles(angles) -> np.ndarray:
    """Euler-angle parametrization Rz(a) Ry(b) Rz(c) of SU(2)."""
    a, b, c = angles

    def rz(t):
        return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])

    def ry(t):
        return np.array([[np.cos(t / 2), -np.sin(t / 2)],
                         [np.sin(t / 2), np.cos(t / 2)]], dtype=complex)

    return rz(a) @ ry(b) @ rz(c)


def find_basis_match(L, residual_fn, restarts: int = 20, seed: int = 0,
                     threshold: float = 1e-8):
    """Search for a unitary basis change bringing L to a canonical form.

    ``residual_fn(M)`` scores a conjugated operator M = U L U+ (zero means
    an exact match; it should be insensitive to the admissible scalar
    freedoms of the family being tested).  Optimizes over the three Euler
    parameters with multiple restarts.  Returns (matched, residual, U).
    """
    from scipy.optimize import minimize

    L = as_matrix2(L)
    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    for _ in range(restarts):
        x0 = rng.uniform(-np.pi, np.pi, size=3)
        res = minimize(lambda ang: residual_fn(su2_from_angles(ang) @ L @ dagger(su2_from_angles(ang))),
                       x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 800})
        if res.fun < best[0]:
            best = (float(res.fun), su2_from_angles(res.x))
        if best[0] < threshold * 1e-2:
            break
    return best[0] <= threshold, best[0], best[1]


def _coeffs4(M) -> tuple[complex, complex, complex, complex]:
    """Complex Pauli + identity expansion coefficients (a, b, c, d)."""
    a = complex(np.trace(M @ PAULI[0]) / 2)
    b = complex(np.trace(M @ PAULI[1]) / 2)
    c = complex(np.trace(M @ PAULI[2]) / 2)
    d = complex(np.trace(M) / 2)
    return a, b, c, d


def residual_lowering_form(M) -> float:
    """Zero iff M is a complex multiple of the lowering operator."""
    n2 = float(np.sum(np.abs(M) ** 2))
    if n2 == 0.0:
        return 1.0
    return float((abs(M[0, 0]) ** 2 + abs(M[0, 1]) ** 2 + abs(M[1, 1]) ** 2) / n2)


def residual_shifted_sigma_z_form(M) -> float:
    """Zero iff M is diagonal, i.e. c1 sigma_z + c2 I."""
    n2 = float(np.sum(np.abs(M) ** 2))
    if n2 == 0.0:
        return 1.0
    return float((abs(M[0, 1]) ** 2 + abs(M[1, 0]) ** 2) / n2)


def residual_planar_real_shift_form(M) -> float:
    """Zero iff M = s (sigma_x + i beta sigma_y + r I), s > 0, beta, r real."""
    a, b, c, d = _coeffs4(M)
    n2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    if n2 == 0.0:
        return 1.0
    bad = abs(c) ** 2 + a.imag ** 2 + b.real ** 2 + d.imag ** 2
    return float(bad / n2)


def residual_planar_imag_shift_form(M) -> float:
    """Zero iff M = s (sigma_x + i sqrt(1+r^2) sigma_y + r i I), s > 0, r real."""
    a, b, c, d = _coeffs4(M)
    n2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    if n2 == 0.0:
        return 1.0
    bad = abs(c) ** 2 + a.imag ** 2 + b.real ** 2 + d.real ** 2
    bad += (b.imag ** 2 - a.real ** 2 - d.imag ** 2) ** 2 / max(n2, 1e-30)
    return float(bad / n2)


def dimension(model, sample_count: int = 50, seed: int = 7) -> DimensionVerdict:
    """Support dimension of the state distribution for a model.

    Runs the Lie closure on the model and on genericity draws (rescaled
    channel strengths, jittered interior efficiencies), evaluates the basis
    rank at ``sample_count`` interior points, and takes the maximum.  If any
    closure failed to converge, the verdict is corroborated by a Monte
    Carlo cloud and reported with ``mc_corroborated`` confidence.
    """
    if sample_count < 10:
        raise ValueError("sample_count must be at least 10")
    rng = np.random.default_rng(seed)
    points = sample_ball_points(rng, sample_count)

    draw_ranks = []
    all_converged = True
    provenance: list[str] = []
    termination = ""
    for k, m in enumerate(_genericity_draws(model, rng)):
        basis = lie_closure(m, seed=seed + 1000 * k)
        if not basis.fields:
            draw_ranks.append(0)
        else:
            vals = np.stack([f(points) for f in basis.fields])
            draw_ranks.append(max(_rank(vals[:, i, :]) for i in range(points.shape[0])))
        all_converged &= basis.converged
        if k == 0:
            provenance = list(basis.provenance)
            termination = basis.termination

    dim = max(draw_ranks)
    if len(set(draw_ranks)) > 1:
        # a measure-zero tuning was hit by one draw; report the generic max
        all_converged = False

    if all_converged:
        return DimensionVerdict(dim, "exact_rank", points, draw_ranks, provenance, termination)

    mc = mc_dimension_estimate(model, seed=seed)
    dim = max(dim, mc)
    if mc != dim:
        raise AccessibilityError(
            f"Monte Carlo dimension {mc} disagrees with algebraic rank {dim}")
    return DimensionVerdict(dim, "mc_corroborated", points, draw_ranks, provenance, termination)


# ---------------------------------------------------------------------------
# classification catalog
# ---------------------------------------------------------------------------

def _model(*channels) -> "ModelSpec":
    from .qubit_state import LindbladChannel, ModelSpec
    h0 = np.zeros((2, 2), dtype=complex)
    return ModelSpec(h0, tuple(LindbladChannel(op, eta) for op, eta in channels))


def _catalog_rows(seed: int = 2024):
    """Fixture table: (row id, model, expected dimension).

    Parametrized families are sampled three times with a seeded generator;
    angles stay away from degenerate values where a family collapses to a
    lower-dimensional special case.
    """
    from .qubit_state import SIGMA_MINUS, SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY

    rng = np.random.default_rng(seed)
    sx, sy, sz, sm, ii = SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_MINUS, IDENTITY
    rows: list[tuple[str, object, int]] = []

    rot = su2_from_angles((0.7, 1.1, -0.4))

    # single channels confined to a curve
    rows.append(("curve/fluorescence eta=0.5", _model((sm, 0.5)), 1))
    rows.append(("curve/qnd eta=0.5", _model((sz, 0.5)), 1))
    rows.append(("curve/qnd shifted eta=0.7", _model((3 * sz + (2 + 1j) * ii, 0.7)), 1))
    rows.append(("curve/fluorescence rotated eta=0.5", _model((rot @ sm @ dagger(rot), 0.5)), 1))

    # several shifted-QND channels sharing one axis stay on a curve
    c0 = 1.0 + 0.5j
    rows.append(("curve/shared-axis pair", _model((c0 * sz + (0.3 - 0.2j) * ii, 0.3),
                                                  (c0 * sz + (-0.1 + 0.4j) * ii, 0.7)), 1))

    # single perfectly monitored channels on a surface, and their eta<1 spread
    for k in range(3):
        beta = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 2.2)
        r = rng.uniform(-1.0, 1.0)
        if abs(abs(beta) - 1.0) < 0.05 and abs(r) < 0.05:
            beta += 0.2  # avoid the lowering-operator degeneration
        L1 = sx + 1j * beta * sy + r * ii
        rows.append((f"surface/planar-real {k} eta=1", _model((L1, 1.0)), 2))
        rows.append((f"spread/planar-real {k} eta=0.5", _model((L1, 0.5)), 3))
        r2 = rng.uniform(0.3, 1.4)
        L2 = sx + 1j * np.sqrt(1 + r2 * r2) * sy + r2 * 1j * ii
        rows.append((f"surface/planar-imag {k} eta=1", _model((L2, 1.0)), 2))
        rows.append((f"spread/planar-imag {k} eta=0.35", _model((L2, 0.35)), 3))

    # pairs of partially monitored channels on a surface (shared canonical axis)
    for eta in (0.3, 0.7):
        rows.append((f"surface/qnd-family eta={eta}",
                     _model((sz + 0.1 * ii, eta), (0.7j * sz + 0.2 * ii, eta)), 2))
        rows.append((f"surface/fluorescence-family eta={eta}",
                     _model((sm, eta), (1.3j * sm, eta)), 2))
    rows.append(("spread/off-family pair theta=pi/3 eta=0.5",
                 _model((sz, 0.5), (np.cos(np.pi / 3) * sz + np.sin(np.pi / 3) * sx, 0.5)), 3))
    rows.append(("spread/qnd+fluorescence pair eta=0.5",
                 _model((sz, 0.5), (sm, 0.5)), 3))

    # unmonitored dephasing next to monitored fluorescence
    rows.append(("surface/dephasing+homodyne-fluorescence",
                 _model((sz, 0.0), (sm, 0.5)), 2))
    rows.append(("spread/dephasing+heterodyne-fluorescence",
                 _model((sz, 0.0), (sm, 0.4), (1j * sm, 0.4)), 3))

    # worked examples
    rows.append(("example/qnd-plus-lowering eta=1", _model((sz + sm, 1.0)), 2))
    rows.append(("example/qnd-plus-lowering eta=0.5", _model((sz + sm, 0.5)), 3))
    rows.append(("example/lowering-plus-ix eta=1", _model((sm + 1j * sx, 1.0)), 3))
    rows.append(("example/heterodyne-qnd eta=0.5", _model((sz, 0.5), (1j * sz, 0.5)), 2))
    rows.append(("example/heterodyne-fluorescence eta=0.5", _model((sm, 0.5), (1j * sm, 0.5)), 2))
    th = 1.1
    rows.append(("example/skew-pair eta=1",
                 _model((1j * sz + (0.2 + 0.1j) * ii, 1.0),
                        (1j * (np.cos(th) * sz + np.sin(th) * sx) + (0.3 - 0.2j) * ii, 1.0)), 2))
    rows.append(("spread/skew-pair eta=0.5",
                 _model((1j * sz, 0.5), (1j * (np.cos(th) * sz + np.sin(th) * sx), 0.5)), 3))

    # perfectly monitored pair catalog, three draws per family
    def draw_params():
        return (rng.uniform(0.4, 2.4), rng.uniform(0.3, 1.2), rng.uniform(1.3, 2.4),
                rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
                complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
                rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5))

    for k in range(3):
        th, t1, t2, r1, r2, c1, c2, b1, b2 = draw_params()
        pairs = {
            "A": (sz + r1 * ii, np.cos(th) * sz + np.sin(th) * sx + r2 * ii),
            "B": (1j * sz + c1 * ii, sx + r2 * ii),
            "C": (1j * sz + c1 * ii, 1j * (np.cos(th) * sz + np.sin(th) * sx) + c2 * ii),
            "D": (np.cos(t1) * sx + 1j * np.sin(t1) * sy + r1 * ii,
                  np.cos(t2) * sx + np.sin(t2) * sz + r2 * ii),
            "E": (np.cos(th) * sx + 1j * np.sin(th) * sy + r1 * ii, 1j * sy + c2 * ii),
            "F": (sx + b1 * 1j * sy + r1 * ii,
                  np.cos(th) * sx + np.sin(th) * sz + b2 * 1j * sy + r2 * ii),
            "G": (np.cos(t1) * sx + 1j * sy + np.sin(t1) * 1j * ii,
                  np.cos(t2) * sx + 1j * (np.cos(t1 - t2) * sy + np.sin(t1 - t2) * sz)
                  + np.sin(t2) * 1j * ii),
        }
        for tag, (L1, L2) in pairs.items():
            rows.append((f"pair-catalog/{tag} draw {k} eta=1",
                         _model((L1, 1.0), (L2, 1.0)), 2))
    return rows


def catalog_check(seed: int = 2024, sample_count: int = 30) -> dict:
    """Run :func:`dimension` over the classification fixture table.

    Also records the single-channel curve verdict for the qnd-plus-lowering
    operator, which has one noise channel yet is not confined to a curve.
    Returns a report dict with one entry per row and an overall pass flag.
    """
    from .qubit_state import SIGMA_MINUS, SIGMA_Z

    rows = []
    all_pass = True
    for name, mdl, expected in _catalog_rows(seed):
        verdict = dimension(mdl, sample_count=sample_count, seed=seed)
        ok = verdict.dimension == expected
        all_pass &= ok
        rows.append({
            "row": name,
            "expected_dimension": expected,
            "dimension": verdict.dimension,
            "confidence": verdict.confidence,
            "draw_ranks": verdict.draw_ranks,
            "pass": ok,
        })

    cv = curve_criterion(SIGMA_Z + SIGMA_MINUS)
    curve_ok = (not cv.curve) and cv.canonical_form == "none"
    all_pass &= curve_ok
    rows.append({
        "row": "example/qnd-plus-lowering curve verdict",
        "expected_dimension": "not a curve",
        "dimension": "not a curve" if not cv.curve else "curve",
        "confidence": "exact_rank",
        "draw_ranks": [],
        "pass": curve_ok,
    })

    return {"rows": rows, "all_pass": all_pass, "seed": seed}
