"""Loop-soup Monte Carlo: bridge sampling, excursions, topology predicates.

Loops are closed polylines of complex vertices.  Interior/separation tests
use conservative rasterisation plus a flood fill from the grid boundary,
which handles non-simple curves (a point is *inside* when the fill cannot
reach it).  Ball-hitting tests are exact segment-disk intersections.

The half-plane samplers never generate paths below the real axis: vertical
coordinates of boundary-pinned loops are Bessel(3) bridges (the modulus of
a 3D Gaussian bridge), which is exactly the positive-conditioned Brownian
bridge; the conditioning probability 1 - exp(-2*y0^2/t) enters the
importance weight analytically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

try:  # optional fast connected components
    import cv2
except ImportError:  # pragma: no cover
    cv2 = None

from .correlators import ModelParams
from .errors import AmbiguousPointError, DomainError, InputError, SamplingError

__all__ = [
    "SoupWindow",
    "LoopSample",
    "ExcursionSample",
    "MCEstimate",
    "ExcursionHull",
    "soup_mass",
    "sample_soup",
    "sample_excursion",
    "hits_disk",
    "interior_contains",
    "separates",
    "hull_of_excursion",
    "config_digest",
]


def config_digest(payload) -> str:
    """Stable fingerprint of a parameter payload (sorted-key JSON, sha256)."""
    blob = json.dumps(payload, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class SoupWindow:
    """Sampling window: root box, duration band, diameter cutoff, domain."""

    box: tuple  # (x_min, x_max, y_min, y_max)
    t_min: float
    t_max: float
    diam_cutoff: float
    domain: str = "plane"

    def __post_init__(self):
        x0, x1, y0, y1 = self.box
        if not (x1 >= x0 and y1 >= y0):
            raise DomainError("box must satisfy x_min <= x_max, y_min <= y_max")
        if not (0 < self.t_min <= self.t_max):
            raise DomainError("need 0 < t_min <= t_max")
        if not self.diam_cutoff > 0:
            raise DomainError("diam_cutoff must be positive")
        if self.domain not in ("plane", "half-plane"):
            raise DomainError("domain must be 'plane' or 'half-plane'")

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.box
        return (x1 - x0) * (y1 - y0)


@dataclass(frozen=True)
class LoopSample:
    """Discretised Brownian loop: closed polyline, duration, root, sign."""

    vertices: np.ndarray  # complex, vertices[0] == vertices[-1]
    duration: float
    root: complex
    sign: int


@dataclass(frozen=True)
class ExcursionSample:
    """Discretised half-plane excursion from 0 to a real endpoint."""

    vertices: np.ndarray  # complex, starts at 0, ends within eta of endpoint
    endpoint: float


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo result: mean, batch-means standard error, sample count."""

    mean: float
    stderr: float
    n: int
    config_digest: str
    warnings: tuple = ()

    def __post_init__(self):
        if self.stderr < 0 or self.n < 1:
            raise InputError("stderr must be >= 0 and n >= 1")


def soup_mass(window: SoupWindow) -> float:
    """Total rooted-loop measure of the window before the diameter filter."""
    return window.area / (2.0 * math.pi) * (1.0 / window.t_min - 1.0 / window.t_max)


def _sample_durations(rng, n, t_min, t_max):
    """Inverse-CDF draws from the density proportional to t^-2 on [t_min, t_max]."""
    u = rng.random(n)
    return 1.0 / (1.0 / t_min - u * (1.0 / t_min - 1.0 / t_max))


def _plane_bridges(rng, roots, ts, n_steps):
    """Standard 2D Brownian bridges: (n, n_steps+1) complex vertex array."""
    n = len(roots)
    dt = (ts / n_steps)[:, None]
    incs = rng.standard_normal((n, n_steps, 2)) * np.sqrt(dt)[..., None]
    walk = np.cumsum(incs, axis=1)
    frac = (np.arange(1, n_steps + 1) / n_steps)[None, :, None]
    bridge = walk - frac * walk[:, -1:, :]
    verts = np.empty((n, n_steps + 1), dtype=complex)
    verts[:, 0] = roots
    verts[:, 1:] = roots[:, None] + bridge[..., 0] + 1j * bridge[..., 1]
    verts[:, -1] = roots  # exact closure
    return verts


def _polyline_diameter(vertices):
    """Maximal pairwise vertex distance (equals the polyline diameter)."""
    pts = np.column_stack([vertices.real, vertices.imag])
    try:
        from scipy.spatial import ConvexHull

        hull = pts[ConvexHull(pts).vertices]
    except Exception:
        hull = pts
    d2 = ((hull[:, None, :] - hull[None, :, :]) ** 2).sum(-1)
    return math.sqrt(d2.max())


def sample_soup(window: SoupWindow, params: ModelParams, seed: int, n_steps: int = 512):
    """Poisson realisation of the loop soup restricted to the window.

    Loop count is Poisson(lam * soup_mass); durations follow t^-2, roots are
    uniform in the box, paths are exact discrete Brownian bridges.  Loops
    below the diameter cutoff, and (in half-plane mode) loops leaving the
    upper half-plane, are discarded; survivors get independent +-1 signs.
    """
    if n_steps < 16:
        raise InputError("n_steps must be at least 16")
    rng = np.random.default_rng(seed)
    mass = soup_mass(window)
    n = int(rng.poisson(params.lam * mass))
    if n == 0:
        return []
    x0, x1, y0, y1 = window.box
    roots = x0 + rng.random(n) * (x1 - x0) + 1j * (y0 + rng.random(n) * (y1 - y0))
    ts = _sample_durations(rng, n, window.t_min, window.t_max)
    verts = _plane_bridges(rng, roots, ts, n_steps)
    out = []
    for k in range(n):
        v = verts[k]
        if window.domain == "half-plane" and v.imag.min() <= 0.0:
            continue
        if _polyline_diameter(v) < window.diam_cutoff:
            continue
        sign = 1 if rng.random() < 0.5 else -1
        out.append(LoopSample(vertices=v, duration=float(ts[k]), root=complex(roots[k]), sign=sign))
    return out


# ---------------------------------------------------------------------------
# topology predicates
# ---------------------------------------------------------------------------


def _as_closed_polyline(vertices):
    v = np.asarray(vertices, dtype=complex).ravel()
    if len(v) < 3:
        raise InputError("polyline needs at least 3 vertices")
    if v[0] != v[-1]:
        v = np.append(v, v[0])
    return v


def _segment_distances(vertices, p):
    """Distance from point p to every segment of the polyline."""
    a = vertices[:-1]
    b = vertices[1:]
    ab = b - a
    denom = (ab.real ** 2 + ab.imag ** 2)
    denom = np.where(denom == 0.0, 1.0, denom)
    ap = p - a
    t = np.clip((ap.real * ab.real + ap.imag * ab.imag) / denom, 0.0, 1.0)
    closest = a + t * ab
    return np.abs(closest - p)


def hits_disk(loop, center: complex, radius: float) -> bool:
    """True if any polyline segment intersects the closed disk."""
    if not radius > 0:
        raise DomainError("radius must be positive")
    v = _as_closed_polyline(loop if not isinstance(loop, LoopSample) else loop.vertices)
    return bool(_segment_distances(v, complex(center)).min() <= radius)


class _RasterInterior:
    """Flood-fill interior oracle for one closed polyline."""

    def __init__(self, vertices, grid_res=512):
        if grid_res < 16:
            raise InputError("grid_res must be at least 16")
        self.vertices = _as_closed_polyline(vertices)
        xs, ys = self.vertices.real, self.vertices.imag
        span = max(xs.max() - xs.min(), ys.max() - ys.min())
        if span == 0.0:
            span = 1.0
        self.cell = span / grid_res
        self.x0 = xs.min() - 2.0 * self.cell
        self.y0 = ys.min() - 2.0 * self.cell
        self.nx = int(math.ceil((xs.max() - self.x0) / self.cell)) + 3
        self.ny = int(math.ceil((ys.max() - self.y0) / self.cell)) + 3
        curve = np.zeros((self.ny, self.nx), dtype=bool)
        ix, iy = self._sample_cells(xs, ys)
        curve[iy, ix] = True
        if cv2 is not None:
            _, labels = cv2.connectedComponents((~curve).astype(np.uint8), connectivity=4)
        else:
            labels, _ = ndimage.label(~curve)
        self._curve = curve
        self._inside = (~curve) & (labels != labels[0, 0])

    def _sample_cells(self, xs, ys):
        ax, ay, bx, by = xs[:-1], ys[:-1], xs[1:], ys[1:]
        seg_len = np.hypot(bx - ax, by - ay)
        n_samp = np.maximum(np.ceil(seg_len / (0.45 * self.cell)).astype(np.int64) + 1, 2)
        total = int(n_samp.sum())
        idx = np.repeat(np.arange(len(ax)), n_samp)
        starts = np.concatenate([[0], np.cumsum(n_samp)[:-1]])
        frac = (np.arange(total) - starts[idx]) / (n_samp[idx] - 1)
        px = ax[idx] + frac * (bx - ax)[idx]
        py = ay[idx] + frac * (by - ay)[idx]
        ix = np.clip(((px - self.x0) / self.cell).astype(np.int64), 0, self.nx - 1)
        iy = np.clip(((py - self.y0) / self.cell).astype(np.int64), 0, self.ny - 1)
        return ix, iy

    def contains(self, z: complex) -> bool:
        z = complex(z)
        if _segment_distances(self.vertices, z).min() < self.cell:
            raise AmbiguousPointError(
                f"point {z} is within one grid cell of the curve; raise grid_res"
            )
        ix = int((z.real - self.x0) / self.cell)
        iy = int((z.imag - self.y0) / self.cell)
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            return False
        return bool(self._inside[iy, ix])


def interior_contains(loop, z: complex, grid_res: int = 512) -> bool:
    """True iff z lies in a bounded face of the polyline complement."""
    v = loop.vertices if isinstance(loop, LoopSample) else loop
    return _RasterInterior(v, grid_res).contains(z)


def separates(loop, z1: complex, z2: complex, grid_res: int = 512) -> bool:
    """True iff exactly one of z1, z2 is disconnected from infinity."""
    v = loop.vertices if isinstance(loop, LoopSample) else loop
    tester = _RasterInterior(v, grid_res)
    return tester.contains(z1) != tester.contains(z2)


class ExcursionHull:
    """Interior handle for the loop formed by an excursion plus [0, x]."""

    def __init__(self, exc: ExcursionSample, grid_res: int = 512):
        closed = np.concatenate([exc.vertices, [complex(exc.endpoint), exc.vertices[0]]])
        self.polyline = closed
        self._tester = _RasterInterior(closed, grid_res)

    def contains(self, z: complex) -> bool:
        return self._tester.contains(z)

    def separates(self, z1: complex, z2: complex) -> bool:
        return self.contains(z1) != self.contains(z2)


def hull_of_excursion(exc: ExcursionSample, grid_res: int = 512) -> ExcursionHull:
    """Flood-fill interior oracle for the excursion hull."""
    return ExcursionHull(exc, grid_res)


# ---------------------------------------------------------------------------
# excursion sampling
# ---------------------------------------------------------------------------

_EXC_DT0 = 1.5e-3  # squared relative step of the driving walk
_EXC_R0 = 0.05  # resolution floor near the launch point
_EXC_ETA_REL = 1e-3  # stop when |phi(z) - x| < eta_rel * x


def _excursion_dt(z, dt0=_EXC_DT0, r0=_EXC_R0):
    # refine near the pole of the Moebius map (preimage of the far hull)
    return dt0 * min(max(abs(z) ** 2, r0 ** 2), abs(z + 1.0) ** 2)


def sample_excursion(x: float, n_steps: int = 200_000, seed: int = 0) -> ExcursionSample:
    """Brownian excursion in the upper half-plane from 0 to x > 0.

    Simulates the excursion from 0 to infinity (horizontal Brownian motion,
    vertical Bessel(3)) with steps refined near the Moebius pole, then maps
    it through z -> x z / (z + 1).  Raises SamplingError at the step cap.
    """
    if not x > 0:
        raise DomainError("endpoint x must be positive")
    rng = np.random.default_rng(seed)
    hx = 0.0
    v = np.zeros(3)
    pts = [0.0 + 0.0j]
    r_stop = 1.0 / _EXC_ETA_REL
    for _ in range(n_steps):
        z = complex(hx, math.sqrt(v @ v))
        if abs(z + 1.0) >= r_stop:
            return ExcursionSample(vertices=np.asarray(pts, dtype=complex), endpoint=float(x))
        sdt = math.sqrt(_excursion_dt(z))
        g = rng.standard_normal(4)
        hx += sdt * g[0]
        v += sdt * g[1:]
        z = complex(hx, math.sqrt(v @ v))
        pts.append(x * z / (z + 1.0))
    raise SamplingError(f"excursion did not terminate within {n_steps} steps")


def excursion_separation_flags(x, z1, z2, n_paths, seed, *, chunk=4096, block=64,
                               step_cap=120_000, grid_res=512):
    """Separation indicators for a batch of excursion hulls from 0 to x.

    Paths are advanced in lockstep within chunks; only paths whose image
    bounding box can possibly enclose z1 or z2 are re-simulated (same
    generator stream) to build the hull and run the flood-fill test.
    Returns (flags bool array of length n_paths, n_failures, n_ambiguous).
    """
    x = float(x)
    z1, z2 = complex(z1), complex(z2)
    if not x > 0:
        raise DomainError("endpoint x must be positive")
    flags = np.zeros(n_paths, dtype=bool)
    failures = 0
    ambiguous = 0
    r_stop = 1.0 / _EXC_ETA_REL
    n_chunks = (n_paths + chunk - 1) // chunk

    for c in range(n_chunks):
        m = min(chunk, n_paths - c * chunk)
        base = c * chunk

        def run(record_cols=None, max_steps=step_cap):
            rng = np.random.default_rng(np.random.SeedSequence((seed, 61, c)))
            hx = np.zeros(m)
            v = np.zeros((m, 3))
            active = np.ones(m, dtype=bool)
            re_min = np.zeros(m)
            re_max = np.zeros(m)
            im_max = np.zeros(m)
            end_step = np.full(m, -1, dtype=np.int64)
            rec = {i: [0.0 + 0.0j] for i in (record_cols or [])}
            draws = None
            for s in range(max_steps):
                if s % block == 0:
                    draws = rng.standard_normal((block, m, 4))
                g = draws[s % block]
                z = hx + 1j * np.sqrt((v * v).sum(axis=1))
                done = active & (np.abs(z + 1.0) >= r_stop)
                end_step[done] = s
                active[done] = False
                if not active.any():
                    return end_step, re_min, re_max, im_max, rec, active
                dt = _EXC_DT0 * np.minimum(
                    np.maximum(np.abs(z) ** 2, _EXC_R0 ** 2), np.abs(z + 1.0) ** 2
                )
                sdt = np.sqrt(np.where(active, dt, 0.0))
                hx = hx + sdt * g[:, 0]
                v = v + sdt[:, None] * g[:, 1:]
                z = hx + 1j * np.sqrt((v * v).sum(axis=1))
                img = x * z / (z + 1.0)
                re_min = np.where(active, np.minimum(re_min, img.real), re_min)
                re_max = np.where(active, np.maximum(re_max, img.real), re_max)
                im_max = np.where(active, np.maximum(im_max, img.imag), im_max)
                for i in rec:
                    if active[i]:
                        rec[i].append(complex(img[i]))
            return end_step, re_min, re_max, im_max, rec, active

        end_step, re_min, re_max, im_max, _, still_active = run()
        failures += int(still_active.sum())
        lo = np.minimum(re_min, 0.0)
        hi = np.maximum(re_max, x)
        cand = np.zeros(m, dtype=bool)
        for z in (z1, z2):
            cand |= (im_max >= z.imag) & (lo <= z.real) & (z.real <= hi)
        cand &= ~still_active
        cols = np.nonzero(cand)[0]
        if len(cols):
            _, _, _, _, rec, _ = run(record_cols=list(cols), max_steps=int(end_step[cols].max()) + 1)
            for i in cols:
                exc = ExcursionSample(vertices=np.asarray(rec[i], dtype=complex), endpoint=x)
                try:
                    flags[base + i] = hull_of_excursion(exc, grid_res).separates(z1, z2)
                except AmbiguousPointError:
                    try:
                        flags[base + i] = hull_of_excursion(exc, 2 * grid_res).separates(z1, z2)
                    except AmbiguousPointError:
                        ambiguous += 1
    return flags, failures, ambiguous


# ---------------------------------------------------------------------------
# boundary-pinned conditioned loops (importance sampler for bubble events)
# ---------------------------------------------------------------------------


def _ramped_time_grid(total, dt_fine, n_mid, per_doubling=16):
    """Time grid with geometric ramps dt_fine -> total/n_mid at both ends."""
    dt_mid = total / n_mid
    if dt_fine >= dt_mid:
        return np.linspace(0.0, total, n_mid + 1)
    ratio = 2.0 ** (1.0 / per_doubling)
    dts = [dt_fine]
    while dts[-1] * ratio < dt_mid and sum(dts) < total / 4.0:
        dts.append(dts[-1] * ratio)
    ramp = np.asarray(dts)
    middle = total - 2.0 * ramp.sum()
    n_middle = max(int(math.ceil(middle / dt_mid)), 1)
    all_dts = np.concatenate([ramp, np.full(n_middle, middle / n_middle), ramp[::-1]])
    times = np.concatenate([[0.0], np.cumsum(all_dts)])
    times[-1] = total
    return times


def _bridges_on_grid(rng, anchors, times, totals):
    """Scalar Brownian bridges anchor->anchor on per-loop time grids.

    anchors: (m, n_comp); times: (m, K); totals: (m,).  Returns (m, K,
    n_comp).  Sequential conditional sampling, exact for any grid.
    """
    m, K = times.shape
    n_comp = anchors.shape[1]
    out = np.empty((m, K, n_comp))
    out[:, 0, :] = anchors
    for k in range(K - 1):
        dt = (times[:, k + 1] - times[:, k])[:, None]
        rem = (totals[:, None] - times[:, k][:, None])
        frac = dt / rem
        mean = out[:, k, :] + (anchors - out[:, k, :]) * frac
        var = np.maximum(dt * (1.0 - frac), 0.0)
        out[:, k + 1, :] = mean + rng.standard_normal((m, n_comp)) * np.sqrt(var)
    out[:, -1, :] = anchors
    return out


def pinned_loop_chunks(center, eps, t_min, t_max, n, seed, *, n_mid=1024,
                       dt_fine=None, chunk=2048, per_doubling=16):
    """Yield chunks of half-plane loops rooted in the boundary ball B_eps(center).

    Roots are uniform in the upper half-disk, durations follow t^-2 on
    [t_min, t_max], horizontal coordinates are Brownian bridges and vertical
    coordinates Bessel(3) bridges (positive-conditioned).  Each chunk is a
    dict with the polyline, per-vertex trapezoid weights, the occupation
    time of the root ball, and the unrooted-measure importance weight

        weight = (1 - exp(-2 y0^2 / t)) * t / T_ball,

    so that (ball measure) * mean(weight * event) estimates the loop-measure
    mass of {event, loop meets B_eps(center)}.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if not (0 < t_min < t_max):
        raise DomainError("need 0 < t_min < t_max")
    if dt_fine is None:
        dt_fine = eps * eps / 512.0
    center = float(center)
    ss = np.random.SeedSequence((seed, 37))
    n_chunks = (n + chunk - 1) // chunk
    seeds = ss.spawn(n_chunks)
    for c in range(n_chunks):
        m = min(chunk, n - c * chunk)
        rng = np.random.default_rng(seeds[c])
        r = eps * np.sqrt(rng.random(m))
        phi = math.pi * rng.random(m)
        x0 = center + r * np.cos(phi)
        y0 = r * np.sin(phi)
        ts = np.sort(_sample_durations(rng, m, t_min, t_max))[::-1].copy()
        t_top = ts[0]
        ref = _ramped_time_grid(t_top, dt_fine, n_mid, per_doubling)
        times = ref[None, :] * (ts / t_top)[:, None]
        anchors = np.column_stack([x0, y0, np.zeros(m), np.zeros(m)])
        paths = _bridges_on_grid(rng, anchors, times, ts)
        hx = paths[:, :, 0]
        y = np.sqrt((paths[:, :, 1:] ** 2).sum(axis=2))
        dts = np.diff(times, axis=1)
        w_trap = np.empty_like(times)
        w_trap[:, 0] = 0.5 * dts[:, 0]
        w_trap[:, -1] = 0.5 * dts[:, -1]
        w_trap[:, 1:-1] = 0.5 * (dts[:, :-1] + dts[:, 1:])
        in_ball = (hx - center) ** 2 + y ** 2 < eps * eps
        t_ball = (w_trap * in_ball).sum(axis=1)
        t_ball = np.maximum(t_ball, dt_fine)  # root vertex is always inside
        p_stay = -np.expm1(-2.0 * y0 * y0 / ts)
        yield {
            "hx": hx,
            "y": y,
            "comps": paths,
            "times": times,
            "ts": ts,
            "y0": y0,
            "weight": p_stay * ts / t_ball,
            "rng_refine": seeds[c].spawn(1)[0],
        }


def ball_measure(eps, t_min, t_max) -> float:
    """Loop-measure mass of the root half-ball times the duration band."""
    return eps * eps / 4.0 * (1.0 / t_min - 1.0 / t_max)


def refine_near_disk(comps, times, center, radius, dt_target, rng):
    """Bisect segments of one loop near a disk until their dt <= dt_target.

    comps: (K, n_comp) scalar components (first is horizontal, the rest are
    the squared-sum vertical block); times: (K,).  Midpoints are exact
    conditional Gaussian inserts, so the refined skeleton keeps the bridge
    law.  Returns refined (comps, times).
    """
    cx = complex(center).real
    cy = complex(center).imag
    for _ in range(64):
        hx = comps[:, 0]
        y = np.sqrt((comps[:, 1:] ** 2).sum(axis=1))
        d = np.hypot(hx - cx, y - cy)
        dts = np.diff(times)
        near = np.minimum(d[:-1], d[1:]) < radius + 4.0 * np.sqrt(dts)
        todo = np.nonzero(near & (dts > dt_target))[0]
        if len(todo) == 0:
            break
        mid_t = 0.5 * (times[todo] + times[todo + 1])
        mid_mean = 0.5 * (comps[todo, :] + comps[todo + 1, :])
        mid_sd = np.sqrt(0.25 * dts[todo])[:, None]
        mids = mid_mean + rng.standard_normal((len(todo), comps.shape[1])) * mid_sd
        times = np.insert(times, todo + 1, mid_t)
        comps = np.insert(comps, todo + 1, mids, axis=0)
    return comps, times


def loop_xy(comps):
    """(horizontal, vertical) coordinates of a component skeleton."""
    return comps[:, 0], np.sqrt((comps[:, 1:] ** 2).sum(axis=1))


def ray_crossing_counts(hx, y, point):
    """(vertical, horizontal) ray-crossing counts for each loop in a chunk.

    A point interior to a loop has at least one crossing on every ray, so
    min(vertical, horizontal) == 0 certifies 'outside' cheaply.
    """
    a, b = complex(point).real, complex(point).imag
    dx0 = hx[:, :-1] - a
    dx1 = hx[:, 1:] - a
    cross_v = (dx0 * dx1) < 0
    tt = np.where(cross_v, dx0 / np.where(dx0 == dx1, 1.0, dx0 - dx1), 0.0)
    yi = y[:, :-1] + tt * (y[:, 1:] - y[:, :-1])
    vert = (cross_v & (yi > b)).sum(axis=1)
    dy0 = y[:, :-1] - b
    dy1 = y[:, 1:] - b
    cross_h = (dy0 * dy1) < 0
    ss = np.where(cross_h, dy0 / np.where(dy0 == dy1, 1.0, dy0 - dy1), 0.0)
    xi = hx[:, :-1] + ss * (hx[:, 1:] - hx[:, :-1])
    horiz = (cross_h & (xi < a)).sum(axis=1)
    return vert, horiz
