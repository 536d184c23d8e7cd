"""Command-line front end: phantom generation, pipeline runs, verification.

All randomness flows from config seeds, so reruns of any pipeline with the
same config produce byte-identical KPT outputs.  Reports are machine-readable
JSON; grid outputs also get a center-line CSV slice for external plotting.

Exit codes: 0 success, 1 verification check failed, 2 bad config,
3 I/O failure, 4 numeric domain error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import analytic, filters, geometry, isotropy, sparse, transform
from .errors import DomainError, FormatError, TruncationWarning
from .fields import GridField, GridSpec, QuadSpec, TGrid, integrate, read_kpt, write_kpt
from .geometry import RngSeed

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    """The run configuration is missing or malformed."""


# --- config parsing -----------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        raise ConfigError("--config is required for this command")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config key {key!r} is required")
    return cfg[key]


def _grid_from(cfg: dict) -> GridSpec:
    g = _require(cfg, "grid")
    try:
        return GridSpec(np.array(g["origin"], dtype=float), float(g["spacing"]),
                        tuple(int(n) for n in g["shape"]))
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"bad grid spec: {exc}") from exc


def _tgrid_from(cfg: dict) -> TGrid:
    g = _require(cfg, "t_grid")
    try:
        return TGrid(np.array(g["origin"], dtype=float), float(g["spacing"]),
                     tuple(int(n) for n in g["shape"]))
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"bad t_grid spec: {exc}") from exc


def _quad_from(cfg: dict) -> QuadSpec:
    q = cfg.get("quad")
    if q is None:
        return QuadSpec.default_for(_grid_from(cfg))
    try:
        return QuadSpec(float(q["halfwidth"]), int(q["nodes"]))
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"bad quad spec: {exc}") from exc


def _frames_from(cfg: dict, seed_override: int | None) -> transform.FrameSet:
    f = _require(cfg, "frames")
    mode = f.get("mode", "monte-carlo")
    count = int(f.get("count", 0))
    if count < 1:
        raise ConfigError("frames.count must be >= 1")
    d, k = int(_require(cfg, "d")), int(_require(cfg, "k"))
    if mode == "deterministic-circle":
        if (d, k) != (2, 1):
            raise ConfigError("deterministic-circle frames require d=2, k=1")
        return transform.frameset_circle(count)
    if mode == "monte-carlo":
        seed = int(f.get("seed", 0)) if seed_override is None else int(seed_override)
        stream = int(f.get("stream", 0))
        return transform.frameset_haar(d, k, count, RngSeed(seed, stream))
    raise ConfigError(f"unknown frames.mode {mode!r}")


def _phantom_field(cfg: dict, grid: GridSpec) -> GridField:
    p = _require(cfg, "phantom")
    kind = p.get("kind")
    try:
        if kind == "gaussian":
            return analytic.gaussian_field(grid, mean=p.get("mean"))
        if kind == "mixture":
            comps = p.get("components", [])
            means = [c["mean"] for c in comps]
            weights = [float(c.get("weight", 1.0)) for c in comps]
            return analytic.mixture_field(grid, means, weights)
        if kind == "ridge-sum":
            d, k = int(_require(cfg, "d")), int(_require(cfg, "k"))
            atoms = []
            for spec in p.get("atoms", []):
                frame = geometry.Frame(d, k, np.array(spec["frame"], dtype=float))
                atoms.append(
                    analytic.RidgeAtom(float(spec.get("weight", 1.0)), frame,
                                       np.array(spec["offset"], dtype=float),
                                       profile=spec.get("profile", "gaussian"),
                                       s=spec.get("s"))
                )
            return analytic.ridge_sum_field(grid, atoms)
    except DomainError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad phantom spec: {exc}") from exc
    raise ConfigError(f"unknown phantom kind {kind!r}")


def _out_path(cfg: dict, out_dir: str | None, key: str, default: str) -> Path:
    output = cfg.get("output", {})
    base = Path(out_dir) if out_dir else Path(output.get("dir", "."))
    base.mkdir(parents=True, exist_ok=True)
    return base / output.get(key, default)


def _write_report(path: Path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_slice_csv(path: Path, fld: GridField) -> None:
    """Center-line slice along the first axis, for external plotting."""
    axes = fld.spec.axes()
    mid = tuple(n // 2 for n in fld.shape)
    line = fld.values[(slice(None),) + mid[1:]]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("coord,value\n")
        for x, v in zip(axes[0], line):
            fh.write(f"{x!r},{v!r}\n")


def _capture_warnings():
    return warnings.catch_warnings(record=True)


# --- commands -------------------------------------------------------------------


def cmd_phantom(cfg: dict, out_dir: str | None, seed: int | None, threads: int | None) -> int:
    grid = _grid_from(cfg)
    t0 = time.perf_counter()
    fld = _phantom_field(cfg, grid)
    path = _out_path(cfg, out_dir, "phantom", "phantom.kpt")
    write_kpt(path, fld)
    report = {
        "timings_ms": {"phantom": 1000 * (time.perf_counter() - t0)},
        "mass": integrate(fld),
        "warnings": [],
    }
    _write_report(path.with_suffix(".report.json"), report)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_forward(cfg: dict, out_dir: str | None, seed: int | None, threads: int | None) -> int:
    grid = _grid_from(cfg)
    phantom_path = _out_path(cfg, out_dir, "phantom", "phantom.kpt")
    fld = read_kpt(phantom_path)
    if not isinstance(fld, GridField):
        raise FormatError(f"{phantom_path} does not hold a grid field", offset=8)
    frames = _frames_from(cfg, seed)
    t_grid = _tgrid_from(cfg)
    quad = _quad_from(cfg)
    order = int(cfg.get("interp_order", 3))
    caught: list = []
    t0 = time.perf_counter()
    with _capture_warnings() as caught:
        warnings.simplefilter("always", TruncationWarning)
        sino = transform.forward(fld, frames, t_grid, quad, order=order, threads=threads)
    elapsed = 1000 * (time.perf_counter() - t0)
    sino_path = _out_path(cfg, out_dir, "sinogram", "sinogram.kpt")
    write_kpt(sino_path, sino)
    report = {
        "timings_ms": {"forward": elapsed},
        "warnings": [str(w.message) for w in caught],
    }
    _write_report(sino_path.with_suffix(".report.json"), report)
    print(f"wrote {sino_path}")
    return EXIT_OK


def cmd_fbp(cfg: dict, out_dir: str | None, seed: int | None, threads: int | None) -> int:
    grid = _grid_from(cfg)
    sino_path = _out_path(cfg, out_dir, "sinogram", "sinogram.kpt")
    sino = read_kpt(sino_path)
    pad = float(cfg.get("filter", {}).get("pad_factor", 2.0))
    caught: list = []
    t0 = time.perf_counter()
    with _capture_warnings() as caught:
        warnings.simplefilter("always", TruncationWarning)
        recon = transform.fbp(sino, sino.d, sino.k, grid, pad, threads=threads)
    elapsed = 1000 * (time.perf_counter() - t0)
    recon_path = _out_path(cfg, out_dir, "reconstruction", "recon.kpt")
    write_kpt(recon_path, recon)
    _write_slice_csv(recon_path.with_suffix(".slice.csv"), recon)

    report = {"timings_ms": {"fbp": elapsed}, "warnings": [str(w.message) for w in caught]}
    phantom_path = _out_path(cfg, out_dir, "phantom", "phantom.kpt")
    if phantom_path.exists():
        reference = read_kpt(phantom_path)
        report["rel_l2_vs_reference"] = transform.rel_l2_error(recon, reference)
        denom = float((recon.values**2).sum())
        report["gain"] = (
            float((recon.values * reference.values).sum()) / denom if denom else None
        )
    report_path = _out_path(cfg, out_dir, "report", "report.json")
    _write_report(report_path, report)
    print(f"wrote {recon_path}")
    return EXIT_OK


def cmd_calibrate(cfg: dict, out_dir: str | None, seed: int | None, threads: int | None) -> int:
    grid = _grid_from(cfg)
    frames = _frames_from(cfg, seed)
    t_grid = _tgrid_from(cfg)
    quad = _quad_from(cfg)
    pad = float(cfg.get("filter", {}).get("pad_factor", 2.0))
    order = int(cfg.get("interp_order", 1))
    d, k = int(_require(cfg, "d")), int(_require(cfg, "k"))
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        gain = transform.calibrate_gain(
            d, k, frames, grid, t_grid, quad, order=order, pad_factor=pad, threads=threads,
        )
    report = {
        "timings_ms": {"calibrate": 1000 * (time.perf_counter() - t0)},
        "gain": gain,
        "warnings": [],
    }
    report_path = _out_path(cfg, out_dir, "report", "report.json")
    _write_report(report_path, report)
    print(f"gain = {gain:.6f}")
    return EXIT_OK


def cmd_reconstruct(cfg: dict, out_dir: str | None, seed: int | None, threads: int | None) -> int:
    sp = _require(cfg, "sparse")
    d, k = int(_require(cfg, "d")), int(_require(cfg, "k"))
    if (d, k) != (2, 1):
        raise ConfigError("sparse reconstruction is wired for d=2, k=1 configs")
    grid = _grid_from(cfg)
    try:
        s = float(sp["s"])
        n_frames = int(sp["frame_count"])
        offsets = np.linspace(float(sp["offset_min"]), float(sp["offset_max"]),
                              int(sp["offset_count"]))
        m_meas = int(sp["measurements"])
        bump_width = float(sp.get("bump_width", 0.8))
        lam_rule = float(sp.get("lambda_rule", 1e-3))
        tol = float(sp.get("tol", 1e-10))
        max_iter = int(sp.get("max_iter", 20000))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad sparse spec: {exc}") from exc

    angles = np.pi * np.arange(n_frames) / n_frames
    frames = [geometry.Frame(2, 1, np.array([[math.cos(a), math.sin(a)]])) for a in angles]
    dico = sparse.build_dictionary(frames, offsets, s, d, k)

    rng_seed = int(sp.get("seed", 0)) if seed is None else int(seed)
    gen = RngSeed(rng_seed, int(sp.get("stream", 0))).generator()
    pts = grid.points()
    functionals = []
    for _ in range(m_meas):
        c = gen.uniform(-2.5, 2.5, size=2)
        vals = np.exp(-((pts - c) ** 2).sum(-1) / (2 * bump_width**2))
        functionals.append(GridField(grid.origin, grid.spacing, grid.shape,
                                     vals.reshape(grid.shape)))
    meas = sparse.MeasurementSet(functionals)

    t0 = time.perf_counter()
    gram = sparse.assemble(dico, meas, grid)
    planted = sp.get("planted")
    if planted:
        a_true = np.zeros(len(dico))
        for item in planted:
            idx = int(item["frame_index"]) * len(offsets) + int(item["offset_index"])
            a_true[idx] = float(item["weight"])
        y = gram @ a_true
    else:
        phantom_path = _out_path(cfg, out_dir, "phantom", "phantom.kpt")
        fld = read_kpt(phantom_path)
        cell = grid.spacing**grid.d
        y = np.array([cell * (h.values * fld.values).sum() for h in functionals])

    lam = lam_rule * float(np.abs(gram.T @ y).max())
    problem = sparse.LassoProblem(gram, y, lam, tol=tol, max_iter=max_iter)
    coeffs = sparse.solve_lasso(problem)
    recon = sparse.reconstruct(coeffs, dico, grid)
    elapsed = 1000 * (time.perf_counter() - t0)

    recon_path = _out_path(cfg, out_dir, "reconstruction", "sparse_recon.kpt")
    write_kpt(recon_path, recon)
    _write_slice_csv(recon_path.with_suffix(".slice.csv"), recon)
    inactive_excess, active_mismatch = sparse.kkt_residuals(problem, coeffs)
    solution = {
        "lambda": lam,
        "s": s,
        "frame_angles": [float(a) for a in angles],
        "offsets": [float(t) for t in offsets],
        "coefficients": [float(v) for v in coeffs],
        "support": [int(j) for j in sparse.support(coeffs)],
        "reg_cost": sparse.reg_cost(coeffs),
        "kkt": {"inactive_excess": inactive_excess, "active_mismatch": active_mismatch},
    }
    sol_path = _out_path(cfg, out_dir, "solution", "solution.json")
    _write_report(sol_path, solution)
    report = {
        "timings_ms": {"reconstruct": elapsed},
        "support_size": len(solution["support"]),
        "warnings": [],
    }
    _write_report(_out_path(cfg, out_dir, "report", "report.json"), report)
    print(f"wrote {recon_path} (support {len(solution['support'])})")
    return EXIT_OK


# --- verify ----------------------------------------------------------------------


def _default_verify_tolerances() -> dict[str, float]:
    return {
        "constant_c21": 1e-12,
        "constant_c32": 1e-12,
        "stiefel_mass_21": 1e-12,
        "gaussian_forward_2d": 1e-3,
        "fourier_slice_2d": 1e-3,
        "moment_mass_2d": 1e-3,
        "moment_centroid_2d": 1e-3,
        "isotropy_rotation_2d": 2e-3,
        "intertwining_gaussian_2d": 1e-2,
        "inversion_gain_2d": 0.02,
        "fbp_rel_l2_2d": 0.05,
        "projector_idempotent_o1": 1e-12,
        "pk_fixes_range_2d": 0.05,
        "hankel_gaussian_3d": 1e-6,
        "green_rbf_exponential": 1e-4,
        "bessel_ode_residual": 1e-6,
        "lasso_identity_prox": 1e-10,
    }


def _run_verify_checks() -> dict[str, float]:
    """Compute the observed value of every registered check (smaller is better)."""
    values: dict[str, float] = {}
    values["constant_c21"] = abs(geometry.c_constant(2, 1) * 4 * math.pi - 1.0)
    values["constant_c32"] = abs(geometry.c_constant(3, 2) * 8 * math.pi**2 - 1.0)
    values["stiefel_mass_21"] = abs(geometry.stiefel_total_mass(2, 1) - 2 * math.pi)

    grid = GridSpec.centered(2, 64, 0.2)
    fld = analytic.gaussian_field(grid)
    frames = transform.frameset_circle(24)
    t_grid = TGrid.centered(1, 63, 0.2)
    quad = QuadSpec(6.0, 128)
    sino = transform.forward(fld, frames, t_grid, quad)
    t_pts = t_grid.points()
    worst = 0.0
    for i, fr in enumerate(frames):
        truth = analytic.gaussian_kplane(fr, t_pts, np.zeros(2))
        worst = max(worst, float(np.abs(sino.values[i].ravel() - truth).max() / truth.max()))
    values["gaussian_forward_2d"] = worst

    mix = analytic.mixture_field(grid, [[0.8, 0.3], [-0.5, -0.9]], [1.0, 0.6])
    gen = RngSeed(5).generator()
    quad_wide = QuadSpec(9.0, 128)
    pairs = []
    for _ in range(10):
        fr = geometry.haar_frame_sample(2, 1, gen)
        om = gen.uniform(-4, 4, size=1)
        pairs.append(analytic.slice_pair(mix, fr, om, quad=quad_wide))
    scale = max(abs(rhs) for _, rhs in pairs)
    values["fourier_slice_2d"] = max(abs(l - r) for l, r in pairs) / scale

    frames_m = transform.frameset_circle(16)
    t_wide = TGrid.centered(1, 127, 0.2)
    sino_m = transform.forward(mix, frames_m, t_wide, quad_wide)
    mass = integrate(mix)
    m0 = transform.moment_integral(sino_m, 1, 0)
    values["moment_mass_2d"] = float(np.abs(m0 - mass).max() / abs(mass))
    centroid = analytic.mixture_centroid([[0.8, 0.3], [-0.5, -0.9]], [1.0, 0.6])
    m1 = transform.moment_integral(sino_m, 1, 1)
    worst = 0.0
    for i, fr in enumerate(frames_m):
        expect = mass * float(fr.rows[0] @ centroid)
        worst = max(worst, abs(float(m1[i]) - expect))
    values["moment_centroid_2d"] = worst

    worst = 0.0
    for i in range(0, 16, 3):
        fr = frames_m.frames[i]
        rotated = sino_m.generator(-fr.rows, -t_wide.points())
        worst = max(worst, float(np.abs(rotated - sino_m.values[i].ravel()).max()))
    values["isotropy_rotation_2d"] = worst

    smooth_spec = filters.gaussian_spec(0.8)
    smoothed_field = filters.apply_radial(mix, smooth_spec)
    lhs_sino = transform.forward(smoothed_field, frames_m, t_wide, quad_wide)
    rhs_sino = filters.apply_radial(sino_m, smooth_spec)
    num = transform.sino_norm(lhs_sino.copy_with(lhs_sino.values - rhs_sino.values, None))
    values["intertwining_gaussian_2d"] = num / transform.sino_norm(rhs_sino)

    frames_fbp = transform.frameset_circle(180)
    t_fbp = TGrid.centered(1, 128, 0.2)
    sino_fbp = transform.forward(mix, frames_fbp, t_fbp, quad_wide, order=1)
    recon = transform.fbp(sino_fbp, 2, 1, grid)
    values["fbp_rel_l2_2d"] = transform.rel_l2_error(recon, mix)
    gain = transform.calibrate_gain(2, 1, frames_fbp, grid, t_fbp, quad)
    values["inversion_gain_2d"] = abs(gain - 1.0)

    p1 = isotropy.project_iso(sino_m)
    p2 = isotropy.project_iso(p1)
    values["projector_idempotent_o1"] = float(np.abs(p2.values - p1.values).max())

    pk = isotropy.pk_project(sino_fbp, grid, quad_wide, order=1)
    num = transform.sino_norm(sino_fbp.copy_with(pk.values - sino_fbp.values, None))
    values["pk_fixes_range_2d"] = num / transform.sino_norm(sino_fbp)

    t = np.arange(0.0, 12.0, 0.002)
    rho = np.exp(-(t**2) / 2) / (2 * math.pi) ** 1.5
    omega = np.linspace(0.0, 6.0, 25)
    prof = filters.hankel_profile(t, rho, 3, omega)
    values["hankel_gaussian_3d"] = float(np.abs(prof - np.exp(-(omega**2) / 2)).max())

    table = filters.green_rbf(2.0, 1)
    r = np.linspace(0.0, 6.0, 25)
    values["green_rbf_exponential"] = float(np.abs(table(r) - np.exp(-r) / 2).max())

    x = np.linspace(0.5, 8.0, 60)
    h = 0.01
    stencil = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * h
    vals = np.stack([filters.bessel_j(1, x + s_) for s_ in stencil])
    d1 = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
    d2 = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h**2)
    values["bessel_ode_residual"] = float(
        np.abs(x**2 * d2 + x * d1 + (x**2 - 1.0) * vals[2]).max()
    )

    y = np.array([2.0, -0.5, 0.05, 0.0, 1.0, -3.0])
    lam = 0.2
    a = sparse.solve_lasso(sparse.LassoProblem(np.eye(6), y, lam, tol=1e-14))
    expect = np.sign(y) * np.maximum(np.abs(y) - lam / 2, 0.0)
    values["lasso_identity_prox"] = float(np.abs(a - expect).max())
    return values


def cmd_verify(cfg: dict | None, out_dir: str | None, seed: int | None, threads: int | None) -> int:
    tolerances = _default_verify_tolerances()
    if cfg:
        overrides = cfg.get("tolerances", {})
        for name, tol in overrides.items():
            if name not in tolerances:
                raise ConfigError(f"unknown check {name!r} in tolerance overrides")
            tolerances[name] = float(tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        values = _run_verify_checks()
    verdict = {}
    all_pass = True
    for name, value in values.items():
        tol = tolerances[name]
        ok = bool(value <= tol)
        verdict[name] = {"pass": ok, "value": value, "tolerance": tol}
        all_pass &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: value={value:.3e} tolerance={tol:.3e}")
    report_path = None
    if cfg is not None:
        report_path = _out_path(cfg, out_dir, "report", "verify.json")
    elif out_dir is not None:
        report_path = Path(out_dir) / "verify.json"
        report_path.parent.mkdir(parents=True, exist_ok=True)
    if report_path is not None:
        _write_report(report_path, verdict)
    return EXIT_OK if all_pass else EXIT_CHECK_FAILED


# --- entry point -------------------------------------------------------------------


COMMANDS = {
    "phantom": cmd_phantom,
    "forward": cmd_forward,
    "fbp": cmd_fbp,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kplane", description=__doc__)
    parser.add_argument("command", choices=[*COMMANDS, "verify"])
    parser.add_argument("--config", help="path to a JSON run configuration")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--seed", type=int, help="override the config's frame seed")
    parser.add_argument(
        "--threads", type=int,
        default=int(os.environ.get("KPLANE_THREADS", "1") or 1),
        help="worker threads for frame loops (env KPLANE_THREADS)",
    )
    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            cfg = _load_config(args.config) if args.config else None
            return cmd_verify(cfg, args.out, args.seed, args.threads)
        cfg = _load_config(args.config)
        return COMMANDS[args.command](cfg, args.out, args.seed, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DomainError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
