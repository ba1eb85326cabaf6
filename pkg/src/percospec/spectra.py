"""Eigenvalues, counting functions, and the windowed IDS estimator.

Counting is right continuous: ``count(E)`` is the number of eigenvalues
lambda <= E + count_tol.  Kernel membership uses |lambda| <= kernel_tol
relative to the max-row-sum norm; the matrices here have integer entries,
so at desk scale true eigenvalue gaps sit far above both tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, sparse
from scipy.sparse import csgraph

from ._parallel import run_indexed
from .cayley import FiniteSubgraph, GroupSpec, enumerate_ball, tetrahedron
from .errors import BudgetError, DegenerateSpectrumError
from .operators import (
    ADJACENCY,
    DIRICHLET,
    NEUMANN,
    LabeledOperator,
    free_laplacian,
    restrict,
    subgraph_laplacian,
)
from .percolation import SITE, PercolationModel, PercolationSample, sample

KERNEL_TOL = 1e-8
COUNT_TOL = 1e-9
DENSE_CAP = 4000


# ---------------------------------------------------------------------------
# dense spectra
# ---------------------------------------------------------------------------

@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    dim: int
    kernel_dim: int


def _kernel_count(eigenvalues: np.ndarray, scale: float) -> int:
    return int((np.abs(eigenvalues) <= KERNEL_TOL * scale).sum())


def eigenvalues_dense(op: LabeledOperator, dense_cap: int = DENSE_CAP,
                      validate: bool = False) -> Spectrum:
    """Full spectrum by a symmetric dense eigensolve.

    Refuses dimensions above ``dense_cap``; use :func:`count_below` there.
    With ``validate=True`` each eigenpair residual is checked against
    1e-8 * ||H||.
    """
    if op.dim > dense_cap:
        raise BudgetError(
            f"operator dimension {op.dim} exceeds the dense cap {dense_cap}; "
            "use count_below for counting at this size")
    if op.dim == 0:
        return Spectrum(eigenvalues=np.zeros(0), dim=0, kernel_dim=0)
    dense = op.to_dense()
    scale = op.inf_norm()
    if validate:
        vals, vecs = linalg.eigh(dense)
        resid = np.linalg.norm(dense @ vecs - vecs * vals, axis=0)
        if np.any(resid > 1e-8 * max(scale, 1.0)):
            raise RuntimeError("eigenpair residual above tolerance")
    else:
        vals = linalg.eigvalsh(dense)
    return Spectrum(eigenvalues=vals, dim=op.dim,
                    kernel_dim=_kernel_count(vals, scale))


def block_eigenvalues(op: LabeledOperator, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """All eigenvalues via per-connected-component dense solves.

    Percolation operators decompose over clusters, so in the subcritical
    regime components stay small even when the window is large.  Components
    are batched by size for vectorised LAPACK calls.
    """
    n = op.dim
    if n == 0:
        return np.zeros(0)
    ncomp, labels = csgraph.connected_components(op.matrix, directed=False)
    if ncomp == 1:
        if n > dense_cap:
            raise BudgetError(
                f"connected component of dimension {n} exceeds the dense cap "
                f"{dense_cap}")
        return np.sort(linalg.eigvalsh(op.to_dense()))
    order = np.argsort(labels, kind="stable")
    permuted = op.matrix[order][:, order].tocsr()
    sizes = np.bincount(labels)
    if sizes.max() > dense_cap:
        raise BudgetError(
            f"connected component of dimension {int(sizes.max())} exceeds the "
            f"dense cap {dense_cap}")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    buckets: dict[int, list[np.ndarray]] = {}
    for c in range(ncomp):
        a, b = offsets[c], offsets[c + 1]
        buckets.setdefault(int(b - a), []).append(permuted[a:b, a:b].toarray())
    out = []
    for size, blocks in buckets.items():
        if size == 1:
            out.append(np.concatenate([blk.ravel() for blk in blocks]))
        else:
            out.append(np.linalg.eigvalsh(np.stack(blocks)).ravel())
    return np.sort(np.concatenate(out))


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------

def _inertia_count(dense: np.ndarray, shift: float, scale: float) -> int:
    """Number of eigenvalues below ``shift`` from the LDL^T inertia."""
    n = dense.shape[0]
    shifted = dense - shift * np.eye(n)
    _, d, _ = linalg.ldl(shifted, lower=True)
    neg = 0
    i = 0
    breakdown_tol = 1e-12 * max(scale, 1.0)
    while i < n:
        if i + 1 < n and d[i, i + 1] != 0.0:
            det = d[i, i] * d[i + 1, i + 1] - d[i, i + 1] * d[i + 1, i]
            block_scale = abs(d[i, i]) + abs(d[i + 1, i + 1]) + 2 * abs(d[i, i + 1])
            if abs(det) <= breakdown_tol * max(block_scale, 1.0):
                raise FloatingPointError("pivot breakdown: shift hits an eigenvalue")
            if det < 0:
                neg += 1
            elif d[i, i] + d[i + 1, i + 1] < 0:
                neg += 2
            i += 2
        else:
            if abs(d[i, i]) <= breakdown_tol:
                raise FloatingPointError("pivot breakdown: shift hits an eigenvalue")
            if d[i, i] < 0:
                neg += 1
            i += 1
    return neg


def count_below(op: LabeledOperator, energy: float, method: str = "auto",
                dense_cap: int = DENSE_CAP) -> int:
    """Number of eigenvalues <= energy + count_tol.

    Small operators go through the dense eigensolve; larger ones through
    the inertia of a symmetric triangular (LDL^T) factorisation of
    H - (E + tol) * I.  A factorisation breakdown at a near-eigenvalue
    shift triggers one retry at E + 2 * tol, then an error.
    """
    if method not in ("auto", "dense", "inertia"):
        raise ValueError(f"unknown method {method!r}")
    if op.dim == 0:
        return 0
    if method == "dense" or (method == "auto" and op.dim <= dense_cap):
        vals = block_eigenvalues(op, dense_cap=max(dense_cap, op.dim))
        return int(np.searchsorted(vals, energy + COUNT_TOL, side="right"))
    dense = op.to_dense()
    scale = op.inf_norm()
    for attempt, shift in enumerate((energy + COUNT_TOL, energy + 2 * COUNT_TOL)):
        try:
            return _inertia_count(dense, shift, scale)
        except FloatingPointError:
            if attempt:
                raise RuntimeError(
                    f"inertia factorisation broke down twice near E={energy}")
    raise AssertionError("unreachable")


def lowest_nonzero(op: LabeledOperator, dense_cap: int = DENSE_CAP) -> float:
    """Smallest eigenvalue above the kernel tolerance.

    For adjacency and Dirichlet operators this is the smallest eigenvalue
    outright, since they are injective on finite subgraphs.
    """
    if op.dim < 1:
        raise ValueError("operator must have dimension >= 1")
    vals = block_eigenvalues(op, dense_cap=dense_cap)
    threshold = KERNEL_TOL * op.inf_norm()
    above = vals[vals > threshold]
    if not len(above):
        raise DegenerateSpectrumError("all eigenvalues lie in the kernel")
    return float(above[0])


@dataclass
class CountingFunction:
    """Right-continuous normalized eigenvalue counting step function."""

    jump_locations: np.ndarray
    cumulative: np.ndarray
    normalization: float

    @classmethod
    def from_eigenvalues(cls, eigenvalues, normalization: float) -> "CountingFunction":
        vals = np.sort(np.asarray(eigenvalues, dtype=np.float64))
        locs, counts = np.unique(vals, return_counts=True)
        return cls(jump_locations=locs, cumulative=np.cumsum(counts),
                   normalization=float(normalization))

    def counts(self, energies) -> np.ndarray:
        idx = np.searchsorted(self.jump_locations, np.asarray(energies) + COUNT_TOL,
                              side="right")
        padded = np.concatenate([[0], self.cumulative])
        return padded[idx]

    def __call__(self, energies) -> np.ndarray:
        return self.counts(energies) / self.normalization


# ---------------------------------------------------------------------------
# empirical IDS
# ---------------------------------------------------------------------------

@dataclass
class IDSEstimate:
    energies: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    bracket_low: np.ndarray
    bracket_high: np.ndarray
    n_at_zero: tuple
    params: dict


def _window_subsample(s: PercolationSample, window_mask: np.ndarray):
    """Active set and open adjacency of the window-induced sub-configuration."""
    ball = s.window
    if s.model.kind == SITE:
        act_mask = np.zeros(len(ball), dtype=bool)
        act_mask[np.flatnonzero(s.open_marks)] = True
        act_mask &= window_mask
        edges = ball.edges
        keep = act_mask[edges[:, 0]] & act_mask[edges[:, 1]] if len(edges) \
            else np.zeros(0, dtype=bool)
        open_edges = edges[keep]
        active = np.flatnonzero(act_mask)
    else:
        open_edges = ball.edges[s.open_marks]
        keep = window_mask[open_edges[:, 0]] & window_mask[open_edges[:, 1]] \
            if len(open_edges) else np.zeros(0, dtype=bool)
        open_edges = open_edges[keep]
        active = np.unique(open_edges)
    return active, open_edges


def _ids_sample_task(ctx, i):
    ball = ctx["ball"]
    window_mask = ctx["window_mask"]
    window_size = ctx["window_size"]
    model = ctx["model"]
    bc = ctx["bc"]
    grid = ctx["grid"]
    dense_cap = ctx["dense_cap"]

    s = sample(model, ball, i)

    # intrinsic operator of the window-induced percolation subgraph
    active_w, open_w = _window_subsample(s, window_mask)
    sub = FiniteSubgraph(parent=ball, vertex_indices=active_w, edges=open_w,
                         induced=model.kind == SITE)
    op_int = subgraph_laplacian(sub, bc, tag=f"perc:{bc}")
    vals_int = block_eigenvalues(op_int, dense_cap)
    counts_int = np.searchsorted(vals_int, grid + COUNT_TOL, side="right")

    kern = _kernel_count(vals_int, op_int.inf_norm())

    # compression of the full-sample operator onto the window
    op_big = subgraph_laplacian(s.subgraph(), bc, tag=f"perc:{bc}")
    subset = op_big.index_set[window_mask[op_big.index_set]]
    op_comp = restrict(op_big, subset)
    vals_comp = block_eigenvalues(op_comp, dense_cap)
    counts_comp = np.searchsorted(vals_comp, grid + COUNT_TOL, side="right")

    return np.concatenate([counts_int, counts_comp, [kern]]) / window_size


def empirical_ids(group: GroupSpec, model: PercolationModel, bc: str, *,
                  radius: int | None = None, depth: int | None = None,
                  n_samples: int, energy_grid, workers: int = 1,
                  dense_cap: int = DENSE_CAP,
                  budget: int | None = None) -> IDSEstimate:
    """Monte Carlo estimate of the IDS from finite-window eigenvalue counts.

    The window is the ball B(radius) (polynomial growth) or the depth-n
    tetrahedron (lamplighter); each sample lives on a one-step-larger ball
    so both the intrinsic window operator and the compression of the
    full-sample operator onto the window can be counted.  The reported mean
    is the intrinsic count; the bracket columns envelope both conventions,
    which monitors the finite-window boundary bias.  ``n_at_zero`` is the
    normalized kernel mass of the intrinsic operator.
    """
    if n_samples < 10:
        raise ValueError("need n_samples >= 10")
    if (radius is None) == (depth is None):
        raise ValueError("specify exactly one of radius or depth")
    grid = np.asarray(energy_grid, dtype=np.float64)
    if depth is not None:
        if group.kind != "lamplighter":
            raise ValueError("tetrahedron windows exist only for lamplighter groups")
        ball = enumerate_ball(group, 2 * depth + 1, budget)
        tet = tetrahedron(group.modulus, depth, ball)
        window_mask = np.zeros(len(ball), dtype=bool)
        window_mask[tet.vertex_indices] = True
        window_size = tet.size
        window_descr = {"depth": depth}
    else:
        ball = enumerate_ball(group, radius + 1, budget)
        window_mask = np.zeros(len(ball), dtype=bool)
        window_mask[:ball.volume(radius)] = True
        window_size = ball.volume(radius)
        window_descr = {"radius": radius}

    ctx = {"ball": ball, "window_mask": window_mask, "window_size": window_size,
           "model": model, "bc": bc, "grid": grid, "dense_cap": dense_cap}
    rows = np.vstack(run_indexed(_ids_sample_task, range(n_samples), workers, ctx))

    g = len(grid)
    ints, comps, kerns = rows[:, :g], rows[:, g:2 * g], rows[:, -1]
    mean = ints.mean(axis=0)
    stderr = ints.std(axis=0, ddof=1) / np.sqrt(n_samples)
    mean_comp = comps.mean(axis=0)
    params = {"group": group.label(), "model": model.kind, "p": model.p,
              "seed": model.seed, "bc": bc, "n_samples": n_samples,
              **window_descr}
    return IDSEstimate(
        energies=grid, mean=mean, stderr=stderr,
        bracket_low=np.minimum(mean, mean_comp),
        bracket_high=np.maximum(mean, mean_comp),
        n_at_zero=(float(kerns.mean()),
                   float(kerns.std(ddof=1) / np.sqrt(n_samples))),
        params=params)


def export_ids_csv(est: IDSEstimate, fh) -> None:
    p = est.params
    fh.write("E,mean,stderr,n_samples,bc,model,p,radius,seed\n")
    radius = p.get("radius", p.get("depth"))
    for e, m, se in zip(est.energies, est.mean, est.stderr):
        fh.write(f"{e:.17g},{m:.17g},{se:.17g},{p['n_samples']},{p['bc']},"
                 f"{p['model']},{p['p']:.17g},{radius},{p['seed']}\n")


# ---------------------------------------------------------------------------
# five-operator counting audit
# ---------------------------------------------------------------------------

def five_operator_counts(s: PercolationSample, energy_grid, couplings,
                         dense_cap: int = DENSE_CAP) -> dict:
    """Normalized eigenvalue counts of the comparison chain on one sample.

    For a site sample on a window, counts (per energy, divided by the
    window size) for: the zero-extended Neumann operator, the free window
    Laplacian, the two-valued-potential Hamiltonian at each coupling, and
    the adjacency and Dirichlet operators of the active set.  The form
    ordering makes these counting functions pointwise decreasing along
    that list, sample by sample.
    """
    from .operators import anderson, extend, percolation_laplacian

    grid = np.asarray(energy_grid, dtype=np.float64)
    window = s.window
    norm = float(len(window))

    def counts(op):
        vals = block_eigenvalues(op, dense_cap)
        return np.searchsorted(vals, grid + COUNT_TOL, side="right") / norm

    out = {}
    n_op = percolation_laplacian(s, NEUMANN)
    out["neumann_extended"] = counts(extend(n_op, window, 0.0,
                                            check_separation=False))
    out["free"] = counts(free_laplacian(window))
    for lam in couplings:
        out[f"anderson:{lam:g}"] = counts(anderson(s, window, lam))
    out["adjacency"] = counts(percolation_laplacian(s, ADJACENCY))
    out["dirichlet"] = counts(percolation_laplacian(s, DIRICHLET))
    return out


# ---------------------------------------------------------------------------
# free IDS on Z^d
# ---------------------------------------------------------------------------

@dataclass
class FreeIDSValue:
    value: float
    error: float
    clamped: bool
    method: str


def free_ids_zd(d: int, energy: float, mc_samples: int = 400_000,
                mc_seed: int = 20240) -> FreeIDSValue:
    """IDS of the free Laplacian on Z^d at one energy.

    Evaluates the momentum-space volume of { theta : sum_i 2(1 - cos
    theta_i) <= E } over the torus.  Dimensions 1 and 2 are deterministic
    (closed form / adaptive quadrature, absolute error <= 1e-6); dimensions
    3 and 4 use Monte Carlo with a reported standard error.  Energies
    outside [0, 4d] clamp to 0 or 1 with a flag.
    """
    if not 1 <= d <= 4:
        raise ValueError("dimension must be between 1 and 4")
    if energy <= 0.0:
        return FreeIDSValue(0.0, 0.0, energy < 0.0, "clamped" if energy < 0 else "exact")
    if energy >= 4.0 * d:
        return FreeIDSValue(1.0, 0.0, energy > 4.0 * d, "clamped" if energy > 4 * d else "exact")
    if d == 1:
        return FreeIDSValue(float(np.arccos(1.0 - energy / 2.0) / np.pi),
                            1e-12, False, "closed-form")
    if d == 2:
        theta_max = np.arccos(np.clip(1.0 - energy / 2.0, -1.0, 1.0))

        def slice_measure(t):
            rest = energy - 2.0 * (1.0 - np.cos(t))
            return np.arccos(np.clip(1.0 - rest / 2.0, -1.0, 1.0))

        val, err = integrate.quad(slice_measure, 0.0, theta_max,
                                  epsabs=1e-10, epsrel=1e-10, limit=300)
        value = val / np.pi ** 2
        if err / np.pi ** 2 > 1e-6:
            raise RuntimeError("quadrature error estimate above 1e-6")
        return FreeIDSValue(float(value), float(err / np.pi ** 2), False, "quadrature")
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [mc_seed, d], dtype=np.uint64)))
    theta = gen.random((mc_samples, d)) * np.pi
    inside = (2.0 * (1.0 - np.cos(theta))).sum(axis=1) <= energy
    value = inside.mean()
    return FreeIDSValue(float(value),
                        float(np.sqrt(value * (1 - value) / mc_samples)),
                        False, "monte-carlo")


@dataclass
class FreeIDSTrace:
    energies: np.ndarray
    values: np.ndarray
    trace: list


def free_ids_ball(spec: GroupSpec, radius: int, energies,
                  trace_radii=None, budget: int | None = None,
                  dense_cap: int = DENSE_CAP) -> FreeIDSTrace:
    """Free IDS by exhaustion: <chi_(-inf,E] (Delta(B(n))) delta_id, delta_id>.

    Returns the value at the final radius together with the sequence over
    ``trace_radii`` (default: every radius up to ``radius``) so convergence
    is visible.
    """
    grid = np.atleast_1d(np.asarray(energies, dtype=np.float64))
    ball = enumerate_ball(spec, radius, budget)
    if trace_radii is None:
        trace_radii = range(1, radius + 1)
    trace_radii = sorted(set(int(r) for r in trace_radii) | {radius})
    trace = []
    values = None
    for r in trace_radii:
        if r < 0 or r > radius:
            raise ValueError("trace radius outside [0, radius]")
        nv = ball.volume(r)
        if nv > dense_cap:
            raise BudgetError(f"ball B({r}) has {nv} vertices, above the dense "
                              f"cap {dense_cap}")
        keep = (ball.edges[:, 0] < nv) & (ball.edges[:, 1] < nv) \
            if len(ball.edges) else np.zeros(0, dtype=bool)
        edges = ball.edges[keep]
        diag = np.full(nv, ball.k, dtype=np.float64)
        rowsc = np.concatenate([edges[:, 0], edges[:, 1]]) if len(edges) else []
        colsc = np.concatenate([edges[:, 1], edges[:, 0]]) if len(edges) else []
        mat = sparse.csr_matrix((-np.ones(2 * len(edges)), (rowsc, colsc)),
                                shape=(nv, nv)) + sparse.diags(diag)
        vals, vecs = linalg.eigh(mat.toarray())
        overlap = vecs[0, :] ** 2
        vaux = np.array([overlap[vals <= e + COUNT_TOL].sum() for e in grid])
        trace.append((r, vaux))
        values = vaux
    return FreeIDSTrace(energies=grid, values=values, trace=trace)


# ---------------------------------------------------------------------------
# random-walk return probability
# ---------------------------------------------------------------------------

@dataclass
class ReturnProbability:
    steps: int
    value: float


def return_probability(spec: GroupSpec, n: int, budget: int | None = None) -> ReturnProbability:
    """Exact return probability of the simple random walk after 2n steps.

    A closed walk of length 2n never leaves B(n), so the (identity,
    identity) entry of (A/k)^(2n) on the ball of radius n is exact.  Walk
    counts stay below 2^53, so the float arithmetic is exact too.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if (2 * n) * np.log2(spec.k) > 52:
        raise ValueError("walk count would overflow exact float range")
    ball = enumerate_ball(spec, n, budget)
    adj = ball.adjacency_matrix()
    vec = np.zeros(len(ball))
    vec[0] = 1.0
    for _ in range(2 * n):
        vec = adj @ vec
    return ReturnProbability(steps=2 * n, value=float(vec[0] / spec.k ** (2 * n)))


# ---------------------------------------------------------------------------
# exact subcritical site IDS on the line
# ---------------------------------------------------------------------------

def _line_cluster_eigenvalues(s: int, bc: str) -> np.ndarray:
    """Eigenvalues of the boundary-condition Laplacian of an s-site segment of Z."""
    if bc == NEUMANN:
        return 2.0 * (1.0 - np.cos(np.pi * np.arange(s) / s)) if s > 1 \
            else np.zeros(1)
    if bc == ADJACENCY:
        return 2.0 * (1.0 - np.cos(np.pi * np.arange(1, s + 1) / (s + 1)))
    # Dirichlet: tridiagonal with diagonal (3, 2, ..., 2, 3); no closed form
    diag = np.full(s, 2.0)
    diag[0] = diag[-1] = 3.0
    if s == 1:
        return np.array([4.0])
    return linalg.eigvalsh_tridiagonal(diag, -np.ones(s - 1))


def line_site_ids_oracle(p: float, energies, bc: str,
                         s_max: int | None = None) -> np.ndarray:
    """Exact subcritical site-percolation IDS on Z by direct summation.

    Clusters on the line are segments; a given vertex is the left end of an
    s-cluster with probability p^s (1-p)^2, so the IDS is the weighted sum
    of segment spectra over sizes.  The default size cutoff keeps the
    truncated tail below 1e-40 for p <= 0.85; beyond that the hard cap of
    600 sizes (150 for the end-corrected Dirichlet spectra, which need a
    per-size eigensolve) bounds the truncation by p^cap.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("need 0 < p < 1")
    if s_max is None:
        s_max = int(min(600 if bc != DIRICHLET else 150,
                        np.ceil(np.log(1e-40) / np.log(p))))
    grid = np.asarray(energies, dtype=np.float64)
    all_vals, all_weights = [], []
    for s in range(1, s_max + 1):
        vals = _line_cluster_eigenvalues(s, bc)
        w = p ** s * (1.0 - p) ** 2
        all_vals.append(vals)
        all_weights.append(np.full(len(vals), w))
    vals = np.concatenate(all_vals)
    weights = np.concatenate(all_weights)
    order = np.argsort(vals)
    vals, weights = vals[order], np.cumsum(weights[order])
    idx = np.searchsorted(vals, grid + COUNT_TOL, side="right")
    padded = np.concatenate([[0.0], weights])
    return padded[idx]
