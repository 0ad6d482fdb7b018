"""Monte Carlo estimators for loop-measure weights and correlator ratios.

Boundary-pinned events (a loop meeting a small boundary ball) are sampled
by rooting loops inside the ball and reweighting by the occupation time,
w = (1 - exp(-2 y0^2/t)) * t / T_ball, which converts the rooted measure
back to the unrooted loop measure restricted to ball-meeting loops.  The
naive window estimator (soup mass times hit fraction) is reserved for
events of order-one probability such as mutual containment; for a ball of
radius 0.02 its hit rate per sampled loop is ~1e-7 and no feasible sample
size reaches useful error bars.

All estimators use batch means over seed-derived substreams: results are
reproducible bit-for-bit for a fixed seed and independent of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .correlators import ModelParams
from .errors import AmbiguousPointError, ConfigError, DomainError
from .sampler import (
    MCEstimate,
    SoupWindow,
    _plane_bridges,
    _RasterInterior,
    _sample_durations,
    ball_measure,
    config_digest,
    excursion_separation_flags,
    loop_xy,
    pinned_loop_chunks,
    ray_crossing_counts,
    refine_near_disk,
    sample_soup,
    soup_mass,
)

__all__ = [
    "estimate_bubble_separation",
    "estimate_mutual_containment",
    "estimate_domain_perturbation",
    "domain_perturbation_report",
    "estimate_boundary_pair_scaling",
    "estimate_pair_weight_asymptotics",
    "estimate_excursion_separation",
]

_GRID_RES = 512
_HIT_REFINE_DIV = 8.0  # dt_target = (radius/div)^2 for disk-hit refinement


def _batch_stats(batch_means):
    arr = np.asarray(batch_means, dtype=float)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return mean, stderr


def _child_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence((seed, 101)).spawn(n)]


def _sep_grid_res(verts, scale):
    span = max(verts.real.max() - verts.real.min(), verts.imag.max() - verts.imag.min())
    return int(np.clip(math.ceil(span / (0.02 * scale)), _GRID_RES, 2048))


def _test_separates(verts, z1, z2, grid_res):
    for res in (grid_res, 2 * grid_res):
        try:
            tester = _RasterInterior(verts, res)
            return tester.contains(z1) != tester.contains(z2), False
        except AmbiguousPointError:
            continue
    return False, True


def _loop_contains_both(verts, z1, z2, grid_res=_GRID_RES):
    for res in (grid_res, 2 * grid_res):
        try:
            tester = _RasterInterior(verts, res)
            return tester.contains(z1) and tester.contains(z2), False
        except AmbiguousPointError:
            continue
    return False, True


def _separation_candidates(chunk, z1, z2):
    """Loops that could enclose z1 or z2: crossing test plus proximity pad."""
    hx, y = chunk["hx"], chunk["y"]
    v1, h1 = ray_crossing_counts(hx, y, z1)
    v2, h2 = ray_crossing_counts(hx, y, z2)
    cand = (np.minimum(v1, h1) >= 1) | (np.minimum(v2, h2) >= 1)
    pad = 4.0 * np.sqrt(np.diff(chunk["times"], axis=1).max(axis=1))
    for z in (z1, z2):
        dmin = np.hypot(hx - z.real, y - z.imag).min(axis=1)
        cand |= dmin < pad
    return cand


def _refined_separates(chunk, i, z1, z2, rng):
    """Separation test with the skeleton refined near both query points."""
    comps, times = chunk["comps"][i], chunk["times"][i]
    d12 = abs(z1 - z2)
    dt_target = (0.05 * d12) ** 2
    for z in (z1, z2):
        comps, times = refine_near_disk(comps, times, z, 0.35 * d12, dt_target, rng)
    fhx, fy = loop_xy(comps)
    verts = fhx + 1j * fy
    return _test_separates(verts, z1, z2, _sep_grid_res(verts, d12))


def _apply_event(chunk, event):
    """Event indicators for one pinned-loop chunk; returns (bools, n_ambiguous).

    ``event`` is a plain dict so the batches can be dispatched to worker
    processes: kind 'separates' | 'hits_disk' | 'hits_disk_and_separates'.
    """
    hx, y = chunk["hx"], chunk["y"]
    m = hx.shape[0]
    flags = np.zeros(m, dtype=bool)
    ambiguous = 0
    kind = event["kind"]
    rng = np.random.default_rng(chunk["rng_refine"])
    if kind in ("hits_disk", "hits_disk_and_separates"):
        center, radius = complex(event["center"]), float(event["radius"])
        dt_target = (radius / _HIT_REFINE_DIV) ** 2
        dts = np.diff(chunk["times"], axis=1)
        d = np.hypot(hx - center.real, y - center.imag)
        slack = np.zeros_like(d)
        slack[:, :-1] = 4.0 * np.sqrt(dts)
        slack[:, 1:] = np.maximum(slack[:, 1:], 4.0 * np.sqrt(dts))
        maybe = ((d - slack) < radius).any(axis=1)
        hit = np.zeros(m, dtype=bool)
        for i in np.nonzero(maybe)[0]:
            comps, times = refine_near_disk(
                chunk["comps"][i], chunk["times"][i], center, radius, dt_target,
                np.random.default_rng(rng.integers(0, 2 ** 63)),
            )
            fhx, fy = loop_xy(comps)
            hit[i] = bool(_seg_min_dist(fhx, fy, center) <= radius)
        flags = hit
        if kind == "hits_disk":
            return flags, 0
    if kind in ("separates", "hits_disk_and_separates"):
        z1, z2 = complex(event["z1"]), complex(event["z2"])
        cand = _separation_candidates(chunk, z1, z2)
        if kind == "hits_disk_and_separates":
            cand &= flags
            flags = np.zeros(m, dtype=bool)
        for i in np.nonzero(cand)[0]:
            sep, amb = _refined_separates(
                chunk, i, z1, z2, np.random.default_rng(rng.integers(0, 2 ** 63))
            )
            flags[i] = sep
            ambiguous += int(amb)
    return flags, ambiguous


def _seg_min_dist(hx, y, center):
    ax, ay = hx[:-1], y[:-1]
    bx, by = hx[1:], y[1:]
    abx, aby = bx - ax, by - ay
    denom = abx ** 2 + aby ** 2
    denom = np.where(denom == 0.0, 1.0, denom)
    t = np.clip(((center.real - ax) * abx + (center.imag - ay) * aby) / denom, 0.0, 1.0)
    return np.hypot(ax + t * abx - center.real, ay + t * aby - center.imag).min()


def _pinned_batch(args):
    (center, eps, t_min, t_max, n, seed, event, box, n_mid) = args
    total_w = 0.0
    n_amb = 0
    n_escape = 0
    n_event = 0
    tail_w = 0.0
    for chunk in pinned_loop_chunks(center, eps, t_min, t_max, n, seed, n_mid=n_mid):
        flags, amb = _apply_event(chunk, event)
        n_amb += amb
        w = chunk["weight"]
        total_w += float(w[flags].sum())
        n_event += int(flags.sum())
        tail_w += float(w[flags & (chunk["ts"] > t_max / 3.0)].sum())
        if box is not None and flags.any():
            x0, x1, y0, y1 = box
            hx, y = chunk["hx"][flags], chunk["y"][flags]
            escaped = (
                (hx.min(axis=1) < x0) | (hx.max(axis=1) > x1) | (y.max(axis=1) > y1)
            )
            n_escape += int(escaped.sum())
    mb = ball_measure(eps, t_min, t_max)
    return mb * total_w / n, n_event, n_amb, n_escape, mb * tail_w / n


def _run_batches(worker, arglist, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, arglist))
    return [worker(a) for a in arglist]


def _pinned_event_estimate(center, eps, window, n_batches, seed, event, *,
                           n_loops, n_mid, workers=1, tag="pinned"):
    if n_batches < 2:
        raise ConfigError("need at least 2 batches for an error bar")
    per = max(n_loops // n_batches, 1)
    seeds = _child_seeds(seed, n_batches)
    args = [
        (center, eps, window.t_min, window.t_max, per, s, event, window.box, n_mid)
        for s in seeds
    ]
    rows = _run_batches(_pinned_batch, args, workers)
    mean, stderr = _batch_stats([r[0] for r in rows])
    n_event = sum(r[1] for r in rows)
    n_amb = sum(r[2] for r in rows)
    n_escape = sum(r[3] for r in rows)
    tail = sum(r[4] for r in rows) / n_batches
    warnings = []
    if n_event and n_escape / max(n_event, 1) > 0.01:
        warnings.append(f"window too small: {n_escape}/{n_event} event loops leave the box")
    if mean > 0 and tail > 0.02 * mean:
        warnings.append("t_max may truncate the event measure (heavy duration tail)")
    if n_amb:
        warnings.append(f"{n_amb} ambiguous flood-fill queries skipped")
    digest = config_digest(
        dict(op=tag, center=center, eps=eps, window=repr(window), n_batches=n_batches,
             seed=seed, event=event, n_loops=per * n_batches, n_mid=n_mid)
    )
    return MCEstimate(mean=mean, stderr=stderr, n=per * n_batches,
                      config_digest=digest, warnings=tuple(warnings))


def estimate_bubble_separation(x, z1, z2, eps, window, n_batches, seed, *,
                               n_loops=1_000_000, n_mid=1024, workers=1) -> MCEstimate:
    """eps^-2 times the loop-measure mass of {meets B_eps(x), separates z1, z2}.

    Converges to the pinned-bubble separation weight as eps -> 0.
    """
    x = float(x)
    z1, z2 = complex(z1), complex(z2)
    if z1 == z2:
        digest = config_digest(dict(op="bubble", x=x, z=repr(z1), eps=eps, seed=seed))
        return MCEstimate(mean=0.0, stderr=0.0, n=n_loops, config_digest=digest)
    if eps > 0.25 * min(abs(z1 - x), abs(z2 - x)):
        raise ConfigError("eps must be well below the distance from x to z1, z2")
    event = {"kind": "separates", "z1": z1, "z2": z2}
    est = _pinned_event_estimate(x, eps, window, n_batches, seed, event,
                                 n_loops=n_loops, n_mid=n_mid, workers=workers, tag="bubble")
    return MCEstimate(mean=est.mean / eps ** 2, stderr=est.stderr / eps ** 2,
                      n=est.n, config_digest=est.config_digest, warnings=est.warnings)


def estimate_domain_perturbation(eps, z1, z2, window, n_batches, seed, *,
                                 n_loops=1_000_000, n_mid=1024, workers=1) -> MCEstimate:
    """Loop-measure mass of {meets B_eps(0), separates z1, z2} (not eps-scaled).

    The mass controls the effect of removing an eps-half-disk at the origin
    on the layering two-point function; see domain_perturbation_report.
    """
    z1, z2 = complex(z1), complex(z2)
    if z1 == z2:
        digest = config_digest(dict(op="perturbation", z=repr(z1), eps=eps, seed=seed))
        return MCEstimate(mean=0.0, stderr=0.0, n=n_loops, config_digest=digest)
    event = {"kind": "separates", "z1": z1, "z2": z2}
    return _pinned_event_estimate(0.0, eps, window, n_batches, seed, event,
                                  n_loops=n_loops, n_mid=n_mid, workers=workers,
                                  tag="perturbation")


def domain_perturbation_report(estimate: MCEstimate, eps: float, params: ModelParams) -> dict:
    """Derived quantities of the domain-perturbation estimate.

    ratio: predicted <OO>_{H_eps} / <OO>_H = exp(lam (1-cos beta) mu);
    derivative: eps^-2 mu, the magnitude |<T(0) O O>| / (lam (1-cos beta) <OO>).
    """
    cb = 1.0 - math.cos(params.beta)
    mu, sig = estimate.mean, estimate.stderr
    ratio = math.exp(params.lam * cb * mu)
    return {
        "mu": mu,
        "mu_stderr": sig,
        "ratio": ratio,
        "ratio_stderr": ratio * params.lam * cb * sig,
        "derivative": mu / eps ** 2,
        "derivative_stderr": sig / eps ** 2,
    }


def _containment_batch(args):
    (window, z1, z2, n, seed, n_steps, chunk_size) = args
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = window.box
    n_done = 0
    n_event = 0
    n_amb = 0
    while n_done < n:
        m = min(chunk_size, n - n_done)
        roots = x0 + rng.random(m) * (x1 - x0) + 1j * (y0 + rng.random(m) * (y1 - y0))
        ts = _sample_durations(rng, m, window.t_min, window.t_max)
        verts = _plane_bridges(rng, roots, ts, n_steps)
        stays = verts.imag.min(axis=1) > 0.0
        hx, hy = verts.real, verts.imag
        v1, h1 = ray_crossing_counts(hx, hy, z1)
        v2, h2 = ray_crossing_counts(hx, hy, z2)
        cand = stays & (np.minimum(v1, h1) >= 1) & (np.minimum(v2, h2) >= 1)
        for i in np.nonzero(cand)[0]:
            both, amb = _loop_contains_both(verts[i], z1, z2)
            n_event += int(both)
            n_amb += int(amb)
        n_done += m
    return n_event, n, n_amb


def _containment_soup_batch(args):
    (window, z1, z2, n_soups, seed, n_steps, lam) = args
    seeds = _child_seeds(seed, n_soups)
    count = 0.0
    n_amb = 0
    for s in seeds:
        for loop in sample_soup(window, ModelParams(lam=lam, beta=math.pi), s, n_steps):
            v = loop.vertices
            vv, hh = ray_crossing_counts(v.real[None, :], v.imag[None, :], z1)
            if min(vv[0], hh[0]) < 1:
                continue
            vv, hh = ray_crossing_counts(v.real[None, :], v.imag[None, :], z2)
            if min(vv[0], hh[0]) < 1:
                continue
            both, amb = _loop_contains_both(v, z1, z2)
            count += float(both)
            n_amb += int(amb)
    return count / (lam * n_soups), n_soups, n_amb


def estimate_mutual_containment(z1, z2, window, n_batches, seed, *,
                                n_loops=1_500_000, n_steps=512, chunk_size=4096,
                                full_soup=False, soup_lam=1.0, workers=1) -> MCEstimate:
    """Loop-measure mass of {loop stays in H, z1 and z2 both in its interior}.

    Default mode samples individual loops from the windowed measure and
    reports soup_mass * fraction; ``full_soup`` instead averages event-loop
    counts over Poisson soup realisations, validating the Poisson layer.
    """
    z1, z2 = complex(z1), complex(z2)
    if z1.imag <= 0 or z2.imag <= 0 or z1 == z2:
        raise DomainError("need two distinct interior points")
    if window.diam_cutoff >= abs(z1 - z2):
        raise ConfigError("diameter cutoff must stay below |z1 - z2|")
    if window.domain != "half-plane":
        raise ConfigError("containment estimator requires a half-plane window")
    seeds = _child_seeds(seed, n_batches)
    mass = soup_mass(window)
    if full_soup:
        per = max(n_loops // n_batches, 1)
        args = [(window, z1, z2, per, s, n_steps, soup_lam) for s in seeds]
        rows = _run_batches(_containment_soup_batch, args, workers)
        means = [r[0] for r in rows]
        n_tot = sum(r[1] for r in rows)
    else:
        per = max(n_loops // n_batches, 1)
        args = [(window, z1, z2, per, s, n_steps, chunk_size) for s in seeds]
        rows = _run_batches(_containment_batch, args, workers)
        means = [mass * r[0] / r[1] for r in rows]
        n_tot = sum(r[1] for r in rows)
    mean, stderr = _batch_stats(means)
    n_amb = sum(r[2] for r in rows)
    warnings = (f"{n_amb} ambiguous flood-fill queries skipped",) if n_amb else ()
    digest = config_digest(
        dict(op="containment", z1=repr(z1), z2=repr(z2), window=repr(window),
             n_batches=n_batches, seed=seed, n=n_tot, full_soup=full_soup)
    )
    return MCEstimate(mean=mean, stderr=stderr, n=n_tot, config_digest=digest,
                      warnings=warnings)


def _loglog_slope(xs, means, stderrs):
    """Weighted least-squares slope of ln(mean) against ln(x)."""
    xs = np.asarray(xs, float)
    means = np.asarray(means, float)
    stderrs = np.asarray(stderrs, float)
    if np.any(means <= 0):
        raise ConfigError("cannot fit a log-log slope through non-positive weights")
    lx = np.log(xs)
    ly = np.log(means)
    sy = np.where(means > 0, stderrs / means, 1.0)
    w = 1.0 / np.maximum(sy, 1e-12) ** 2
    xb = (w * lx).sum() / w.sum()
    denom = (w * (lx - xb) ** 2).sum()
    slope = (w * (lx - xb) * ly).sum() / denom
    return float(slope), float(1.0 / math.sqrt(denom))


def estimate_boundary_pair_scaling(x1, x2, eps_ladder, window, n_batches, seed, *,
                                   n_loops=1_000_000, n_mid=512, workers=1,
                                   sep_factors=(1.0, 2.0, 4.0)):
    """Two-ball boundary weights over an eps ladder plus a separation slope.

    For each separation |x1-x2| * factor the weight eps^-4 mu(meets both
    eps-balls) is estimated for every eps in the ladder; the slope of the
    smallest-eps weights against separation is returned as an MCEstimate
    (target: the boundary-edge scaling exponent -4).
    """
    x1, x2 = float(x1), float(x2)
    if x1 == x2:
        raise ConfigError("boundary points must be distinct")
    sep0 = abs(x2 - x1)
    sgn = 1.0 if x2 > x1 else -1.0
    weights = []
    winners = []
    warn = []
    for f_i, f in enumerate(sep_factors):
        sep = sep0 * f
        xb = x1 + sgn * sep
        t_lo = max(window.t_min, (sep / 12.0) ** 2)
        per_eps = []
        for e_i, eps in enumerate(eps_ladder):
            if eps >= 0.25 * sep:
                raise ConfigError("every eps must be well below the separation")
            sub = SoupWindow(box=window.box, t_min=t_lo, t_max=window.t_max,
                             diam_cutoff=window.diam_cutoff, domain="half-plane")
            event = {"kind": "hits_disk", "center": complex(xb, 0.0), "radius": float(eps)}
            est = _pinned_event_estimate(
                x1, eps, sub, n_batches, seed + 7919 * (f_i * 16 + e_i), event,
                n_loops=n_loops, n_mid=n_mid, workers=workers, tag="pair-scaling")
            w = MCEstimate(mean=est.mean / eps ** 4, stderr=est.stderr / eps ** 4,
                           n=est.n, config_digest=est.config_digest, warnings=est.warnings)
            per_eps.append(w)
            weights.append(w)
        winners.append(per_eps[-1])
        if len(per_eps) >= 2:
            a, b = per_eps[-2], per_eps[-1]
            if abs(a.mean - b.mean) > 3.0 * math.hypot(a.stderr, b.stderr):
                warn.append(f"eps ladder not converged at separation {sep:g}")
    seps = [sep0 * f for f in sep_factors]
    slope, slope_err = _loglog_slope(seps, [w.mean for w in winners], [w.stderr for w in winners])
    digest = config_digest(dict(op="pair-scaling-slope", x1=x1, x2=x2, seed=seed,
                                eps_ladder=list(eps_ladder), sep_factors=list(sep_factors)))
    fit = MCEstimate(mean=slope, stderr=slope_err, n=sum(w.n for w in winners),
                     config_digest=digest, warnings=tuple(warn))
    return fit, weights


def estimate_pair_weight_asymptotics(x1, x2, z1, z2, eps, window, n_batches, seed, *,
                                     n_loops=1_000_000, n_mid=1024, workers=1,
                                     sep_factors=(1.0, 0.5, 0.25)) -> MCEstimate:
    """Slope of the two-ball separation weight as the boundary points merge.

    Estimates eps^-4 mu(meets both balls, separates z1, z2) on a shrinking
    separation ladder and fits the log-log slope (target -2).
    """
    x1, x2 = float(x1), float(x2)
    z1, z2 = complex(z1), complex(z2)
    digest = config_digest(dict(op="pair-asymptotics", x1=x1, x2=x2, z1=repr(z1),
                                z2=repr(z2), eps=eps, seed=seed))
    if z1 == z2:
        return MCEstimate(mean=0.0, stderr=0.0, n=n_loops, config_digest=digest)
    sep0 = abs(x2 - x1)
    sgn = 1.0 if x2 > x1 else -1.0
    means, errs = [], []
    warn = []
    for f_i, f in enumerate(sep_factors):
        sep = sep0 * f
        if eps >= 0.25 * sep:
            raise ConfigError("eps must be well below every ladder separation")
        xb = x1 + sgn * sep
        event = {"kind": "hits_disk_and_separates", "center": complex(xb, 0.0),
                 "radius": float(eps), "z1": z1, "z2": z2}
        est = _pinned_event_estimate(x1, eps, window, n_batches, seed + 104729 * f_i,
                                     event, n_loops=n_loops, n_mid=n_mid,
                                     workers=workers, tag="pair-asymptotics")
        means.append(est.mean / eps ** 4)
        errs.append(est.stderr / eps ** 4)
        warn.extend(est.warnings)
    slope, slope_err = _loglog_slope([sep0 * f for f in sep_factors], means, errs)
    return MCEstimate(mean=slope, stderr=slope_err, n=n_loops * len(sep_factors),
                      config_digest=digest, warnings=tuple(warn))


def estimate_excursion_separation(x, z1, z2, n_paths, n_steps, seed, *,
                                  n_batches=50) -> MCEstimate:
    """Probability that the hull of an excursion from 0 to x separates z1, z2."""
    x = float(x)
    z1, z2 = complex(z1), complex(z2)
    digest = config_digest(dict(op="excursion", x=x, z1=repr(z1), z2=repr(z2),
                                n_paths=n_paths, n_steps=n_steps, seed=seed))
    if z1 == z2:
        return MCEstimate(mean=0.0, stderr=0.0, n=n_paths, config_digest=digest)
    flags, failures, ambiguous = excursion_separation_flags(
        x, z1, z2, n_paths, seed, step_cap=n_steps)
    splits = np.array_split(flags, n_batches)
    mean, stderr = _batch_stats([s.mean() for s in splits if len(s)])
    warnings = []
    if failures:
        warnings.append(f"{failures} paths hit the step cap and were dropped")
    if ambiguous:
        warnings.append(f"{ambiguous} ambiguous flood-fill queries skipped")
    return MCEstimate(mean=mean, stderr=stderr, n=n_paths, config_digest=digest,
                      warnings=tuple(warnings))
