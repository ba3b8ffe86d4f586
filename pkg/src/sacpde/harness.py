"""Coupled-path Monte Carlo studies: strong rates, moments, increments.

All studies couple their levels through shared Brownian paths: coarse runs
see pairwise sums of the same fine increments (checked bit-exactly before
each run), so level differences estimate discretisation error rather than
noise.  Paths are the unit of parallelism; `threads` only partitions the
path set, and because each path's arithmetic is row-local the merged
reports are byte-identical for every thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import t as student_t

from .errors import ContractError, ValidationError
from .mesh_fem import FemSpace, PeriodicMesh, l2_project, prolongation_matrix
from .model import initial_datum, make_sigma
from .reports import VERSION, config_hash
from .spectral import (
    SpectralSpace,
    run_spectral_trajectory,
    spectral_energy_identity_residual,
    spectral_project,
    step_batch,
)
from .stepper import (
    IDENTITY_ATOL,
    IDENTITY_RTOL,
    SchemeConfig,
    energy_identity_residual,
    run_trajectory,
    step,
)
from .stochastic import coarsen, mc_accumulate, sample_path, total_displacement
from . import model

STUDY_KINDS = ("simulate", "rate-time", "rate-space", "moments", "increments", "check")


@dataclass
class ExperimentPlan:
    """Everything a study needs; validation is per kind."""

    kind: str
    d: int = 1
    R: float = 1.0
    T: float = 0.25
    J: int = 256
    n: int = 64
    sigma: str = "sine"
    sigma_amplitude: float = 0.5
    x0: str = "cos"
    x0_width: float = 0.1
    seed: int = 1
    n_paths: int = 64
    solver: str = "spectral"
    spectral_modes: int = 128
    spectral_pad: float = 2.0
    quad_degree: int = 4
    lumped: bool = False
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    damping: int = 30
    j_fine: int = 4096
    levels: tuple = ()
    reference: int = 0
    t_anchor: float = 0.125
    taus: tuple = ()
    path_index: int = 0
    record_stride: int = 0
    with_identity: bool = False
    threads: int = 1

    def validate(self):
        bad = []
        if self.kind not in STUDY_KINDS:
            bad.append(f"kind must be one of {STUDY_KINDS} (got {self.kind!r})")
        if self.d not in (1, 2, 3):
            bad.append(f"d must be 1, 2 or 3 (got {self.d})")
        if not self.T > 0:
            bad.append(f"T must be positive (got {self.T})")
        if self.J < 1:
            bad.append(f"J must be >= 1 (got {self.J})")
        if self.seed < 0:
            bad.append(f"seed must be nonnegative (got {self.seed})")
        if self.n_paths < 1:
            bad.append(f"n_paths must be >= 1 (got {self.n_paths})")
        elif self.n_paths < 2 and self.kind in (
            "rate-time",
            "rate-space",
            "moments",
            "increments",
        ):
            bad.append(f"{self.kind} statistics need n_paths >= 2 (got {self.n_paths})")
        if self.threads < 1:
            bad.append(f"threads must be >= 1 (got {self.threads})")
        if self.solver not in ("spectral", "fem"):
            bad.append(f"solver must be spectral or fem (got {self.solver!r})")
        if self.solver == "spectral" and self.d != 1:
            bad.append("the spectral solver supports d=1 only")
        if self.path_index < 0:
            bad.append(f"path_index must be nonnegative (got {self.path_index})")
        if self.record_stride < 0:
            bad.append(f"record_stride must be nonnegative (got {self.record_stride})")

        if self.kind == "rate-time":
            self._validate_temporal_levels(bad)
        elif self.kind == "rate-space":
            self._validate_spatial_levels(bad)
        elif self.kind == "moments":
            pairs = list(self.levels)
            if len(pairs) < 2:
                bad.append("moments needs at least two (J, n) refinement levels")
            ok = True
            for pair in pairs:
                if len(pair) != 2 or pair[0] < 1 or pair[1] < 2:
                    bad.append(f"bad moments level {pair!r}: expected (J>=1, n>=2)")
                    ok = False
            if ok and len(pairs) >= 2:
                js = [p[0] for p in pairs]
                ns = [p[1] for p in pairs]
                if js != sorted(set(js)) or ns != sorted(set(ns)):
                    bad.append(
                        f"moments levels must refine both J and n (got {pairs})"
                    )
        elif self.kind == "increments":
            self._validate_increments(bad)
        if bad:
            raise ValidationError("; ".join(bad))
        return self

    def _validate_temporal_levels(self, bad):
        ref = self.reference or self.j_fine
        if ref != self.j_fine:
            bad.append(
                f"temporal reference is the fine grid: reference={ref} != j_fine={self.j_fine}"
            )
        if not self.levels:
            bad.append("rate-time needs at least one level")
            return
        if list(self.levels) != sorted(set(int(L) for L in self.levels)):
            bad.append(f"levels must be strictly increasing (got {self.levels})")
        for L in self.levels:
            if L < 1 or self.j_fine % L:
                bad.append(f"level J={L} does not divide j_fine={self.j_fine}")
                continue
            f = self.j_fine // L
            if f & (f - 1):
                bad.append(f"coupling factor j_fine/J = {f} is not a power of two")
            elif f != 1 and f < 8:
                bad.append(
                    f"reference-as-truth needs k ratio >= 8, got {f} for level J={L}"
                )

    def _validate_spatial_levels(self, bad):
        if not self.levels:
            bad.append("rate-space needs at least one level")
            return
        if list(self.levels) != sorted(set(int(L) for L in self.levels)):
            bad.append(f"levels must be strictly increasing (got {self.levels})")
        ref = self.reference
        if ref < 2:
            bad.append(f"rate-space needs a reference resolution (got {ref})")
            return
        for n in self.levels:
            if n < 2 or ref % n:
                bad.append(f"reference n={ref} is not a multiple of level n={n}")
                continue
            r = ref // n
            if r & (r - 1):
                bad.append(f"refinement ratio {r} for level n={n} is not a power of two")
            elif r != 1 and r < 4:
                bad.append(
                    f"reference-as-truth needs resolution ratio >= 4, got {r} for level n={n}"
                )

    def _validate_increments(self, bad):
        if self.solver != "spectral" or self.d != 1:
            bad.append("increments study runs on the d=1 spectral reference solver")
        if not self.taus:
            bad.append("increments needs a nonempty taus list")
            return
        k = self.T / self.j_fine
        if not 0 <= self.t_anchor:
            bad.append(f"t_anchor must be nonnegative (got {self.t_anchor})")
        for tau in list(self.taus) + [self.t_anchor]:
            steps = tau / k
            if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
                bad.append(f"{tau} is not a multiple of the step T/j_fine = {k}")
        if self.t_anchor + max(self.taus) > self.T * (1 + 1e-12):
            bad.append(
                f"t_anchor + max(tau) = {self.t_anchor + max(self.taus)} exceeds T = {self.T}"
            )

    def config_dict(self):
        cfg = asdict(self)
        cfg.pop("threads")  # execution detail; must not affect report bytes
        cfg["levels"] = [list(L) if isinstance(L, (tuple, list)) else int(L) for L in self.levels]
        cfg["taus"] = [float(x) for x in self.taus]
        return cfg

    def scheme_config(self, k):
        return SchemeConfig(k, self.newton_tol, self.newton_max_iter, self.damping)

    def make_sigma(self, name=None):
        return make_sigma(self.sigma if name is None else name, self.sigma_amplitude)

    def x0_callable(self):
        return initial_datum(self.x0, self.R, self.x0_width)


class StudyResult:
    """Report payload (JSON-able dict) plus the per-sample CSV block."""

    def __init__(self, report, csv_name=None, csv_header=None, csv_rows=None):
        self.report = report
        self.csv_name = csv_name
        self.csv_header = csv_header
        self.csv_rows = csv_rows or []


def fit_loglog(xs, ys):
    """OLS slope of log(y) on log(x) with a 95% CI when >= 3 points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or np.any(xs <= 0) or np.any(ys <= 0):
        return None
    lx, ly = np.log(xs), np.log(ys)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = len(xs)
    out = {
        "slope": float(coef[0]),
        "intercept": float(coef[1]),
        "n_points": n,
        "ci95_halfwidth": None,
    }
    if n > 2:
        resid = ly - A @ coef
        sxx = float(((lx - lx.mean()) ** 2).sum())
        se = np.sqrt((resid @ resid) / (n - 2) / sxx)
        out["ci95_halfwidth"] = float(student_t.ppf(0.975, n - 2) * se)
    return out


def _chunk_indices(n_paths, threads):
    if threads <= 1 or n_paths <= 1:
        return [np.arange(n_paths)]
    parts = min(threads, n_paths)
    return [c for c in np.array_split(np.arange(n_paths), parts) if len(c)]


def _map_chunks(fn, chunks, threads):
    if threads <= 1 or len(chunks) == 1:
        return [fn(chunk) for chunk in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def _coupling_check(path, factors):
    """Bit-exact agreement of total displacement across coarsening levels."""
    base = total_displacement(path)
    for f in factors:
        got = total_displacement(coarsen(path, f))
        if got != base:
            raise ContractError(
                f"coupling violated for path {path.path_index} factor {f}: "
                f"{got!r} != {base!r}"
            )


def _report_base(plan, extra):
    cfg = plan.config_dict()
    report = {
        "kind": plan.kind,
        "seed": plan.seed,
        "config": cfg,
        "provenance": {
            "package": f"sacpde {VERSION}",
            "config_sha256": config_hash(cfg),
        },
    }
    report.update(extra)
    return report


def _stats_block(stats):
    return stats.as_dict()


def _exclude_noise_floor(levels_sorted_fine_last, stats_l2):
    """Drop the finest level from the fit when its mean is within 3 SE of zero."""
    finest = levels_sorted_fine_last[-1]
    st = stats_l2[finest]
    if st.n > 1 and st.mean < 3.0 * st.se:
        return [finest]
    return []


def _refinement_warnings(labels, stats, what):
    """Refining should not increase the mean error beyond 2 combined SEs."""
    warnings = []
    for (lab_c, st_c), (lab_f, st_f) in zip(
        list(zip(labels, stats))[:-1], list(zip(labels, stats))[1:]
    ):
        band = 2.0 * float(np.hypot(st_c.se, st_f.se))
        if st_f.mean > st_c.mean + band:
            warnings.append(
                f"{what} mean rose under refinement: {lab_c} -> {lab_f} "
                f"({st_c.mean:.6e} -> {st_f.mean:.6e}, allowance {band:.6e})"
            )
    return warnings


def _sup_of_mean(errs_by_time):
    """Per-time mean over paths, then the sup and its time index."""
    mean_t = errs_by_time.mean(axis=0)
    j_star = int(np.argmax(mean_t))
    return {"value": float(mean_t[j_star]), "argmax_j": j_star}


# -- temporal rate ------------------------------------------------------------


def temporal_rate_study(plan):
    plan.validate()
    if plan.kind != "rate-time":
        raise ValidationError(f"temporal_rate_study got plan kind {plan.kind!r}")
    x0 = plan.x0_callable()
    sigma = plan.make_sigma()
    if plan.solver == "spectral":
        space = SpectralSpace(plan.R, plan.spectral_modes, plan.spectral_pad)
        state0 = spectral_project(space, x0).coeffs
        worker = lambda chunk: _temporal_spectral_chunk(plan, space, sigma, state0, chunk)
        space_md = space.metadata()
    else:
        mesh = PeriodicMesh(plan.d, plan.R, plan.n)
        space = FemSpace(mesh, plan.quad_degree, plan.lumped)
        state0 = l2_project(space, x0).coeffs
        worker = lambda chunk: _temporal_fem_chunk(plan, space, sigma, state0, chunk)
        space_md = space.metadata()

    chunks = _chunk_indices(plan.n_paths, plan.threads)
    partials = _map_chunks(worker, chunks, plan.threads)

    rows = []
    level_entries = []
    stats_l2 = {}
    means_h1 = {}
    for L in plan.levels:
        maxsq = np.concatenate([p[L][0] for p in partials])
        h1sum = np.concatenate([p[L][1] for p in partials])
        by_time = np.concatenate([p[L][2] for p in partials], axis=0)
        st_l2 = mc_accumulate(maxsq)
        st_h1 = mc_accumulate(h1sum)
        stats_l2[L] = st_l2
        means_h1[L] = st_h1
        k = plan.T / L
        level_entries.append(
            {
                "J": int(L),
                "k": k,
                "sup_l2_sq": _stats_block(st_l2),
                "sum_h1_sq": _stats_block(st_h1),
                "sup_of_mean_l2_sq": _sup_of_mean(by_time),
            }
        )
        for idx in range(plan.n_paths):
            rows.append((int(L), k, idx, maxsq[idx], h1sum[idx]))

    excluded = _exclude_noise_floor(list(plan.levels), stats_l2)
    fit_levels = [L for L in plan.levels if L not in excluded]
    ks = [plan.T / L for L in fit_levels]
    slope_l2 = fit_loglog(ks, [stats_l2[L].mean for L in fit_levels])
    slope_h1 = fit_loglog(ks, [means_h1[L].mean for L in fit_levels])
    warnings = _refinement_warnings(
        [f"J={L}" for L in plan.levels], [stats_l2[L] for L in plan.levels], "sup_l2_sq"
    )

    report = _report_base(
        plan,
        {
            "parameter": "k",
            "solver": plan.solver,
            "space": space_md,
            "levels": level_entries,
            "excluded_levels": [int(L) for L in excluded],
            "slope_l2": slope_l2,
            "slope_h1": slope_h1,
            "warnings": warnings,
        },
    )
    return StudyResult(
        report,
        csv_name="errors.csv",
        csv_header=("level_J", "k", "path_index", "sup_l2_sq", "sum_h1_sq"),
        csv_rows=rows,
    )


def _temporal_spectral_chunk(plan, space, sigma, state0, chunk):
    factors = [plan.j_fine // int(L) for L in plan.levels]
    paths = [sample_path(plan.seed, int(i), plan.T, plan.j_fine) for i in chunk]
    for p in paths:
        _coupling_check(p, factors)
    inc = np.stack([p.increments for p in paths])
    P = len(paths)
    J_cmp = max(plan.levels)
    stride = plan.j_fine // J_cmp

    cfg = plan.scheme_config(plan.T / plan.j_fine)
    C = np.tile(state0, (P, 1))
    refs = np.empty((J_cmp + 1, P, space.coeff_count), dtype=complex)
    refs[0] = C
    for j in range(1, plan.j_fine + 1):
        C, _, _ = step_batch(space, sigma, cfg, C, inc[:, j - 1])
        if j % stride == 0:
            refs[j // stride] = C

    out = {}
    for L, f in zip(plan.levels, factors):
        incL = np.stack([coarsen(p, f).increments for p in paths])
        cfgL = plan.scheme_config(plan.T / L)
        Cc = np.tile(state0, (P, 1))
        cmp_stride = J_cmp // L
        maxsq = np.zeros(P)
        h1sum = np.zeros(P)
        by_time = np.zeros((P, int(L) + 1))
        for j in range(1, int(L) + 1):
            Cc, _, _ = step_batch(space, sigma, cfgL, Cc, incL[:, j - 1])
            diff = Cc - refs[j * cmp_stride]
            l2sq = space.l2_norm(diff) ** 2
            by_time[:, j] = l2sq
            np.maximum(maxsq, l2sq, out=maxsq)
            h1sum += space.h1_seminorm(diff) ** 2
        out[L] = (maxsq, (plan.T / L) * h1sum, by_time)
    return out


def _temporal_fem_chunk(plan, space, sigma, state0, chunk):
    M, A = space.mass, space.stiffness
    factors = [plan.j_fine // int(L) for L in plan.levels]
    J_cmp = max(plan.levels)
    stride = plan.j_fine // J_cmp
    out = {
        L: (
            np.zeros(len(chunk)),
            np.zeros(len(chunk)),
            np.zeros((len(chunk), int(L) + 1)),
        )
        for L in plan.levels
    }
    for pos, i in enumerate(chunk):
        path = sample_path(plan.seed, int(i), plan.T, plan.j_fine)
        _coupling_check(path, factors)
        cfg = plan.scheme_config(plan.T / plan.j_fine)
        y = state0.copy()
        refs = np.empty((J_cmp + 1, len(state0)))
        refs[0] = y
        for j in range(1, plan.j_fine + 1):
            y, _ = step(space, sigma, cfg, y, path.increments[j - 1])
            if j % stride == 0:
                refs[j // stride] = y
        for L, f in zip(plan.levels, factors):
            incL = coarsen(path, f).increments
            cfgL = plan.scheme_config(plan.T / L)
            yc = state0.copy()
            cmp_stride = J_cmp // L
            maxsq = 0.0
            h1sum = 0.0
            for j in range(1, int(L) + 1):
                yc, _ = step(space, sigma, cfgL, yc, incL[j - 1])
                diff = yc - refs[j * cmp_stride]
                l2sq = diff @ (M @ diff)
                out[L][2][pos, j] = l2sq
                maxsq = max(maxsq, l2sq)
                h1sum += diff @ (A @ diff)
            out[L][0][pos] = maxsq
            out[L][1][pos] = (plan.T / L) * h1sum
    return out


# -- spatial rate --------------------------------------------------------------


def spatial_rate_study(plan):
    plan.validate()
    if plan.kind != "rate-space":
        raise ValidationError(f"spatial_rate_study got plan kind {plan.kind!r}")
    x0 = plan.x0_callable()
    sigma = plan.make_sigma()
    k = plan.T / plan.J
    cfg = plan.scheme_config(k)

    ref_space = FemSpace(PeriodicMesh(plan.d, plan.R, plan.reference), plan.quad_degree, plan.lumped)
    spaces = {
        n: FemSpace(PeriodicMesh(plan.d, plan.R, int(n)), plan.quad_degree, plan.lumped)
        for n in plan.levels
    }
    prolongs = {n: prolongation_matrix(spaces[n].mesh, ref_space.mesh) for n in plan.levels}
    y0 = {n: l2_project(spaces[n], x0).coeffs for n in plan.levels}
    y0_ref = l2_project(ref_space, x0).coeffs

    def worker(chunk):
        out = {
            n: (
                np.zeros(len(chunk)),
                np.zeros(len(chunk)),
                np.zeros((len(chunk), plan.J + 1)),
            )
            for n in plan.levels
        }
        Mr, Ar = ref_space.mass, ref_space.stiffness
        for pos, i in enumerate(chunk):
            path = sample_path(plan.seed, int(i), plan.T, plan.J)
            _coupling_check(path, [1])
            y = y0_ref.copy()
            refs = np.empty((plan.J + 1, len(y)))
            refs[0] = y
            for j in range(1, plan.J + 1):
                y, _ = step(ref_space, sigma, cfg, y, path.increments[j - 1])
                refs[j] = y
            for n in plan.levels:
                P = prolongs[n]
                yc = y0[n].copy()
                d0 = P @ yc - refs[0]
                out[n][2][pos, 0] = d0 @ (Mr @ d0)
                maxsq = float(out[n][2][pos, 0])
                h1sum = 0.0
                for j in range(1, plan.J + 1):
                    yc, _ = step(spaces[n], sigma, cfg, yc, path.increments[j - 1])
                    diff = P @ yc - refs[j]
                    l2sq = diff @ (Mr @ diff)
                    out[n][2][pos, j] = l2sq
                    maxsq = max(maxsq, l2sq)
                    h1sum += diff @ (Ar @ diff)
                out[n][0][pos] = maxsq
                out[n][1][pos] = k * h1sum
        return out

    chunks = _chunk_indices(plan.n_paths, plan.threads)
    partials = _map_chunks(worker, chunks, plan.threads)

    rows = []
    level_entries = []
    stats_l2 = {}
    stats_h1 = {}
    for n in plan.levels:
        maxsq = np.concatenate([p[n][0] for p in partials])
        h1sum = np.concatenate([p[n][1] for p in partials])
        by_time = np.concatenate([p[n][2] for p in partials], axis=0)
        stats_l2[n] = mc_accumulate(maxsq)
        stats_h1[n] = mc_accumulate(h1sum)
        h = plan.R / n
        level_entries.append(
            {
                "n": int(n),
                "h": h,
                "sup_l2_sq": _stats_block(stats_l2[n]),
                "sum_h1_sq": _stats_block(stats_h1[n]),
                "sup_of_mean_l2_sq": _sup_of_mean(by_time),
            }
        )
        for idx in range(plan.n_paths):
            rows.append((int(n), h, idx, maxsq[idx], h1sum[idx]))

    excluded = _exclude_noise_floor(list(plan.levels), stats_l2)
    fit_levels = [n for n in plan.levels if n not in excluded]
    hs = [plan.R / n for n in fit_levels]
    slope_l2 = fit_loglog(hs, [stats_l2[n].mean for n in fit_levels])
    slope_h1 = fit_loglog(hs, [stats_h1[n].mean for n in fit_levels])
    warnings = _refinement_warnings(
        [f"n={n}" for n in plan.levels], [stats_l2[n] for n in plan.levels], "sup_l2_sq"
    )
    # The theory guarantees squared-error slope 2; piecewise-linear elements on
    # uniform meshes often beat it, which is worth surfacing but is not a defect.
    if slope_l2 is not None and slope_l2["slope"] > 2.5:
        warnings.append(
            "superconvergence: observed squared-error slope "
            f"{slope_l2['slope']:.3g} exceeds the guaranteed h^2 bound"
        )

    report = _report_base(
        plan,
        {
            "parameter": "h",
            "solver": "fem",
            "space": ref_space.metadata(),
            "k": k,
            "levels": level_entries,
            "excluded_levels": [int(n) for n in excluded],
            "slope_l2": slope_l2,
            "slope_h1": slope_h1,
            "warnings": warnings,
        },
    )
    return StudyResult(
        report,
        csv_name="errors.csv",
        csv_header=("level_n", "h", "path_index", "sup_l2_sq", "sum_h1_sq"),
        csv_rows=rows,
    )


# -- moments -------------------------------------------------------------------


MOMENT_POWERS = (1, 2, 4)


def moment_study(plan):
    plan.validate()
    if plan.kind != "moments":
        raise ValidationError(f"moment_study got plan kind {plan.kind!r}")
    x0 = plan.x0_callable()
    sigma = plan.make_sigma()

    level_entries = []
    rows = []
    for J, n in plan.levels:
        J, n = int(J), int(n)
        space = FemSpace(PeriodicMesh(plan.d, plan.R, n), plan.quad_degree, plan.lumped)
        y0 = l2_project(space, x0).coeffs
        k = plan.T / J
        cfg = plan.scheme_config(k)

        def worker(chunk, space=space, y0=y0, cfg=cfg, J=J):
            energies = np.empty((len(chunk), J + 1))
            for pos, i in enumerate(chunk):
                path = sample_path(plan.seed, int(i), plan.T, J)
                traj = run_trajectory(space, sigma, cfg, space_field(space, y0), path.increments)
                energies[pos] = traj.energies
            return energies

        chunks = _chunk_indices(plan.n_paths, plan.threads)
        partials = _map_chunks(worker, chunks, plan.threads)
        energies = np.concatenate(partials, axis=0)

        entry = {"J": J, "n": n, "k": k, "moments": {}}
        for p in MOMENT_POWERS:
            powered = energies**p
            mean_over_paths = powered.mean(axis=0)
            j_star = int(np.argmax(mean_over_paths))
            st = mc_accumulate(powered[:, j_star])
            block = _stats_block(st)
            block["argmax_j"] = j_star
            entry["moments"][f"p{p}"] = block
            rows.append((J, n, p, j_star, st.mean, st.se, st.ci95[0], st.ci95[1]))
        level_entries.append(entry)

    # boundedness verdict: the sup-in-time estimates stay within a factor-2
    # band across the refinement levels; estimates at rounding level (an
    # exact equilibrium has energy 0 up to the stiffness form's noise) count
    # as zero rather than producing a meaningless ratio
    bounded = {}
    for p in MOMENT_POWERS:
        vals = [entry["moments"][f"p{p}"]["mean"] for entry in level_entries]
        lo, hi = min(vals), max(vals)
        if max(abs(lo), abs(hi)) <= 1e-12:
            ratio, ok = 1.0, True
        elif lo > 0:
            ratio = hi / lo
            ok = bool(ratio <= 2.0)
        else:
            ratio, ok = None, False
        bounded[f"p{p}"] = {"max_over_min": ratio, "within_factor2": ok}

    report = _report_base(
        plan,
        {"levels": level_entries, "powers": list(MOMENT_POWERS), "bounded": bounded},
    )
    return StudyResult(
        report,
        csv_name="moments.csv",
        csv_header=("J", "n", "p", "argmax_j", "mean", "se", "ci95_low", "ci95_high"),
        csv_rows=rows,
    )


def space_field(space, coeffs):
    from .mesh_fem import Field

    return Field(space, coeffs.copy())


# -- increments ----------------------------------------------------------------


def _ratio_table(taus, means):
    ratios = []
    for i in range(len(taus) - 1):
        ratios.append(
            {
                "tau_from": taus[i],
                "tau_to": taus[i + 1],
                "halving": abs(taus[i + 1] - 0.5 * taus[i]) <= 1e-12 * taus[i],
                "ratio": (means[i + 1] / means[i]) if means[i] > 0 else None,
            }
        )
    return ratios


def increment_study(plan):
    plan.validate()
    if plan.kind != "increments":
        raise ValidationError(f"increment_study got plan kind {plan.kind!r}")
    x0 = plan.x0_callable()
    space = SpectralSpace(plan.R, plan.spectral_modes, plan.spectral_pad)
    state0 = spectral_project(space, x0).coeffs
    k = plan.T / plan.j_fine
    cfg = plan.scheme_config(k)

    taus = sorted(float(t) for t in plan.taus)[::-1]  # largest first
    anchor_idx = int(round(plan.t_anchor / k))
    tau_steps = [int(round(t / k)) for t in taus]
    last_idx = anchor_idx + max(tau_steps)
    wanted = {anchor_idx} | {anchor_idx + s for s in tau_steps}

    def sweep(sigma, path_indices):
        """Per-tau squared-increment samples, keyed by step offset."""

        def worker(chunk):
            paths = [sample_path(plan.seed, int(i), plan.T, plan.j_fine) for i in chunk]
            inc = np.stack([p.increments for p in paths])
            C = np.tile(state0, (len(paths), 1))
            snaps = {}
            if 0 in wanted:
                snaps[0] = C.copy()
            for j in range(1, last_idx + 1):
                C, _, _ = step_batch(space, sigma, cfg, C, inc[:, j - 1])
                if j in wanted:
                    snaps[j] = C.copy()
            base = snaps[anchor_idx]
            return {
                s: space.l2_norm(snaps[anchor_idx + s] - base) ** 2 for s in tau_steps
            }

        chunks = _chunk_indices(len(path_indices), plan.threads)
        chunks = [np.asarray(path_indices)[c] for c in chunks]
        partials = _map_chunks(worker, chunks, plan.threads)
        return {s: np.concatenate([p[s] for p in partials]) for s in tau_steps}

    samples = sweep(plan.make_sigma(), np.arange(plan.n_paths))

    entries = []
    rows = []
    means = []
    for tau, s in zip(taus, tau_steps):
        st = mc_accumulate(samples[s])
        means.append(st.mean)
        entries.append({"tau": tau, "steps": s, "mean_sq_l2": _stats_block(st)})
        rows.append((tau, st.n, st.mean, st.se, st.ci95[0], st.ci95[1]))

    # no-noise control: the deterministic flow is smooth in time, so its
    # squared increments scale like tau^2 (halving ratio about 0.25)
    control_samples = sweep(make_sigma("zero"), np.arange(1))
    control_means = [float(control_samples[s][0]) for s in tau_steps]

    report = _report_base(
        plan,
        {
            "t_anchor": plan.t_anchor,
            "space": space.metadata(),
            "taus": entries,
            "ratios": _ratio_table(taus, means),
            "control": {
                "sigma": "zero",
                "taus": list(taus),
                "mean_sq_l2": control_means,
                "ratios": _ratio_table(taus, control_means),
            },
        },
    )
    return StudyResult(
        report,
        csv_name="increments.csv",
        csv_header=("tau", "n", "mean_sq_l2", "se", "ci95_low", "ci95_high"),
        csv_rows=rows,
    )


# -- structural check suite ------------------------------------------------------


def identity_suite(plan):
    """Run the exactness checks on the plan's configuration.

    Entries report pass/fail; the energy-identity entries flip to
    expected-fail when mass lumping is on (the identity needs degree-4 exact
    integration).  The suite passes iff nothing fails unexpectedly.
    """
    plan.validate()
    entries = []

    mesh = PeriodicMesh(plan.d, plan.R, plan.n)
    space = FemSpace(mesh, plan.quad_degree, plan.lumped)
    k = plan.T / plan.J
    cfg = plan.scheme_config(k)
    x0 = l2_project(space, plan.x0_callable())

    def identity_entry(name, sigma, increments):
        traj = run_trajectory(space, sigma, cfg, x0, increments, with_identity=True)
        worst = 0.0
        violated = False
        for row in traj.diagnostics:
            thr = max(IDENTITY_ATOL, IDENTITY_RTOL * abs(row["identity_lhs"]))
            worst = max(worst, row["identity_residual"])
            if row["identity_residual"] > thr:
                violated = True
        if plan.lumped:
            status = "expected-fail" if violated else "unexpected-pass"
        else:
            status = "fail" if violated else "pass"
        entries.append(
            {"name": name, "status": status, "max_residual": worst, "steps": plan.J}
        )
        return traj

    zero = make_sigma("zero")
    traj0 = identity_entry("energy_identity_sigma_zero", zero, np.zeros(plan.J))

    increases = np.diff(traj0.energies)
    max_up = float(increases.max()) if len(increases) else 0.0
    dissipated = max_up <= 1e-12 * (1.0 + abs(traj0.energies[0]))
    ended_below = traj0.energies[-1] < traj0.energies[0]
    entries.append(
        {
            "name": "energy_dissipation_sigma_zero",
            "status": "info"
            if plan.lumped
            else ("pass" if (dissipated and ended_below) else "fail"),
            "max_increase": max_up,
            "initial": float(traj0.energies[0]),
            "terminal": float(traj0.energies[-1]),
        }
    )

    sigma = plan.make_sigma()
    if not sigma.is_zero:
        path = sample_path(plan.seed, 0, plan.T, plan.J)
        identity_entry(f"energy_identity_sigma_{sigma.name}", sigma, path.increments)

    # weak monotonicity of the drift pairing
    rng = np.random.default_rng(plan.seed)
    worst_margin = -np.inf
    mono_ok = True
    for _ in range(200):
        y1 = rng.uniform(-3.0, 3.0, mesh.dof_count)
        y2 = rng.uniform(-3.0, 3.0, mesh.dof_count)
        gap = model.monotonicity_gap(space, y1, y2)
        e = y1 - y2
        allow = 1e-12 * (1.0 + e @ (space.mass @ e))
        worst_margin = max(worst_margin, gap - allow)
        if gap > allow:
            mono_ok = False
    entries.append(
        {
            "name": "monotonicity_gap",
            "status": "pass" if mono_ok else "fail",
            "worst_margin": float(worst_margin),
            "pairs": 200,
        }
    )

    # projection residual: the L2 projection leaves no component on the basis
    xq = space.physical_quad_points()
    b = space.load_vector(np.asarray(plan.x0_callable()(xq), dtype=float))
    c = space.solve_mass(b)
    resid = float(np.max(np.abs(space.mass @ c - b)))
    proj_ok = resid <= 1e-10 * (1.0 + float(np.max(np.abs(b))))
    entries.append(
        {"name": "projection_orthogonality", "status": "pass" if proj_ok else "fail", "residual": resid}
    )

    # coarsening bit-exactness
    path = sample_path(plan.seed, 0, plan.T, 256)
    two_stage = coarsen(coarsen(path, 2), 4).increments
    one_stage = coarsen(path, 8).increments
    comp_ok = np.array_equal(two_stage, one_stage)
    td = total_displacement(path)
    td_ok = all(total_displacement(coarsen(path, f)) == td for f in (2, 8, 32))
    entries.append(
        {
            "name": "coarsening_bit_exact",
            "status": "pass" if (comp_ok and td_ok) else "fail",
            "composition": bool(comp_ok),
            "total_sum": bool(td_ok),
        }
    )

    if plan.d == 1:
        sp_space = SpectralSpace(plan.R, 32, plan.spectral_pad)
        sp0 = spectral_project(sp_space, plan.x0_callable())
        sp_traj = run_spectral_trajectory(
            sp_space, sigma, cfg, sp0, sample_path(plan.seed, 1, plan.T, plan.J).increments,
            with_identity=True,
        )
        worst = 0.0
        sp_ok = True
        for row in sp_traj.diagnostics:
            thr = max(IDENTITY_ATOL, IDENTITY_RTOL * abs(row["identity_lhs"]))
            worst = max(worst, row["identity_residual"])
            if row["identity_residual"] > thr:
                sp_ok = False
        entries.append(
            {
                "name": f"spectral_identity_sigma_{sigma.name}",
                "status": "pass" if sp_ok else "fail",
                "max_residual": worst,
                "modes": 32,
            }
        )

    passed = all(e["status"] in ("pass", "expected-fail", "info") for e in entries)
    report = _report_base(plan, {"entries": entries, "passed": passed})
    return StudyResult(report)
