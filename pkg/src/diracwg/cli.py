"""Command-line front end for the full pipeline.

Subcommands: ``oracle`` (finite-difference band charts), ``bands``
(certified dispersion curves), ``dirac`` (crossing data and
perturbation coefficients), ``gap`` (gap opening and scaling), and
``interface`` (in-gap bound state of the joint guide); ``all`` chains
them.  Configuration is a flat ``section.key = value`` text file with
fail-fast validation; outputs are CSV/JSON files written atomically,
plus gnuplot scripts for the band diagram and mode profile.

Exit codes: 0 success, 2 configuration error, 3 numerical certification
failure, 4 oracle disagreement.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bands as bands_mod
from . import dirac as dirac_mod
from . import fdoracle, gapgreens, interface as interface_mod
from .errors import ConfigError, DiracWGError, OracleError
from .geometry import make_disk, make_shape
from .qpgreens import KernelParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3
EXIT_ORACLE = 4

_DEFAULTS = {
    "geometry.shape_coeffs": "0.1",
    "geometry.n_nodes": "64",
    "numerics.m_trunc": "64",
    "numerics.sing_guard": "1e-6",
    "numerics.fd_step_p": "2e-4",
    "numerics.fd_step_lambda": "2e-4",
    "numerics.fd_step_delta": "2e-4",
    "numerics.n_bands": "4",
    "numerics.n_p_nodes": "32",
    "numerics.m_gamma_nodes": "32",
    "numerics.oracle_nx": "96",
    "numerics.supercell_cells": "8",
    "numerics.table_fd_nx": "64",
    "sweep.deltas": "0.01",
    "sweep.p_points": "41",
    "sweep.p_refined": "21",
    "sweep.c": "0.9",
    "output.formats": "csv,json",
}


@dataclass
class RunConfig:
    shape_coeffs: tuple[float, ...]
    n_nodes: int
    m_trunc: int
    sing_guard: float
    fd_steps: dict
    n_bands: int
    n_p_nodes: int
    m_gamma_nodes: int
    oracle_nx: int
    supercell_cells: int
    table_fd_nx: int
    deltas: tuple[float, ...]
    p_points: int
    p_refined: int
    c: float
    formats: tuple[str, ...]
    out_dir: Path = field(default_factory=lambda: Path("out"))
    jobs: int = 1

    def shape(self):
        if len(self.shape_coeffs) == 1:
            return make_disk(self.shape_coeffs[0], self.n_nodes)
        return make_shape(self.shape_coeffs, self.n_nodes)

    def params(self):
        return KernelParams(p=np.pi, lam=1.0, m_trunc=self.m_trunc,
                            sing_guard=self.sing_guard)

    def p_grid(self) -> np.ndarray:
        coarse = np.linspace(0.0, 2 * np.pi, self.p_points)
        refined = np.pi + np.linspace(-0.15, 0.15, self.p_refined)
        return np.unique(np.round(np.concatenate([coarse, refined]), 12))


def parse_config(path: Path | None, out_dir: Path | None, jobs: int) -> RunConfig:
    values = dict(_DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val

    def floats(key):
        try:
            return tuple(float(tok) for tok in values[key].replace(",", " ").split())
        except ValueError as exc:
            raise ConfigError(f"bad float list for {key}: {values[key]!r}") from exc

    def one_int(key):
        try:
            return int(values[key])
        except ValueError as exc:
            raise ConfigError(f"bad integer for {key}: {values[key]!r}") from exc

    def one_float(key):
        try:
            return float(values[key])
        except ValueError as exc:
            raise ConfigError(f"bad float for {key}: {values[key]!r}") from exc

    cfg = RunConfig(
        shape_coeffs=floats("geometry.shape_coeffs"),
        n_nodes=one_int("geometry.n_nodes"),
        m_trunc=one_int("numerics.m_trunc"),
        sing_guard=one_float("numerics.sing_guard"),
        fd_steps={
            "dp": one_float("numerics.fd_step_p"),
            "dl": one_float("numerics.fd_step_lambda"),
            "dd": one_float("numerics.fd_step_delta"),
        },
        n_bands=one_int("numerics.n_bands"),
        n_p_nodes=one_int("numerics.n_p_nodes"),
        m_gamma_nodes=one_int("numerics.m_gamma_nodes"),
        oracle_nx=one_int("numerics.oracle_nx"),
        supercell_cells=one_int("numerics.supercell_cells"),
        table_fd_nx=one_int("numerics.table_fd_nx"),
        deltas=floats("sweep.deltas"),
        p_points=one_int("sweep.p_points"),
        p_refined=one_int("sweep.p_refined"),
        c=one_float("sweep.c"),
        formats=tuple(t.strip() for t in values["output.formats"].split(",") if t.strip()),
        out_dir=Path(out_dir) if out_dir else Path("out"),
        jobs=max(1, jobs),
    )
    for name, val in cfg.fd_steps.items():
        if val <= 0:
            raise ConfigError(f"fd step {name} must be positive")
    if not 0 < cfg.c < 1:
        raise ConfigError(f"sweep.c must lie in (0,1), got {cfg.c}")
    for d in cfg.deltas:
        if not 0 < d < 0.05:
            raise ConfigError(f"delta {d} outside (0, 0.05)")
    if cfg.sing_guard <= 0:
        raise ConfigError("sing_guard must be positive")
    unknown_formats = set(cfg.formats) - {"csv", "json"}
    if unknown_formats:
        raise ConfigError(f"unknown output formats: {sorted(unknown_formats)}")
    return cfg


# --------------------------------------------------------------- outputs

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" if isinstance(v, float) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    if not isinstance(payload, dict):  # schema guard before any write
        raise ConfigError("json payload must be a mapping")
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


_BANDS_GP = """\
set datafile separator ','
set xlabel 'p'
set ylabel 'lambda'
set key outside
plot for [d in deltas] 'bands.csv' using 3:($2==d ? $4 : 1/0) with points title 'delta='.d
"""

_INTERFACE_GP = """\
set datafile separator ','
set xlabel 'x1'
set ylabel 'x2'
set view map
splot 'interface_field.csv' using 1:2:(sqrt($3*$3+$4*$4)) with points palette title '|u|'
"""


# -------------------------------------------------------------- commands

def _fd_chart_paths(cfg: RunConfig):
    return cfg.out_dir / "oracle_bands.csv"


def cmd_oracle(cfg: RunConfig) -> int:
    """Finite-difference band charts for delta = 0 and each +-delta."""
    shape = cfg.shape()
    grid = fdoracle.FDGrid(cfg.table_fd_nx)
    p_half = np.linspace(0.0, np.pi, max(cfg.p_points // 2 + 1, 9))
    rows = []
    for delta in sorted({0.0} | set(cfg.deltas) | {-d for d in cfg.deltas}):
        chart = fdoracle.fd_band_chart_richardson(p_half, delta, 4, grid, shape)
        for row in chart:
            rows.append([float(delta), *[float(v) for v in row]])
    _write_csv(_fd_chart_paths(cfg), ["delta", "p", "l1", "l2", "l3", "l4"], rows)
    print(f"oracle chart -> {_fd_chart_paths(cfg)}")
    return EXIT_OK


def _load_fd_chart(cfg: RunConfig, delta: float) -> np.ndarray | None:
    path = _fd_chart_paths(cfg)
    if not path.exists():
        return None
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    sel = np.isclose(data[:, 0], delta)
    return data[sel][:, 1:] if np.any(sel) else None


def cmd_bands(cfg: RunConfig) -> int:
    """Trace certified dispersion curves and emit bands.csv."""
    shape = cfg.shape()
    params = cfg.params()
    p_grid = cfg.p_grid()
    grid = fdoracle.FDGrid(cfg.table_fd_nx)

    chart0 = _load_fd_chart(cfg, 0.0)
    if chart0 is None:
        chart0 = fdoracle.fd_band_chart_richardson(
            np.linspace(0.0, np.pi, 9), 0.0, 2, grid, shape
        )
    window = (chart0[-1, 1] - 1.0, chart0[-1, 1] + 1.0)
    _, lam_star = bands_mod.dirac_point(window, shape, params)

    rows = []

    def run_zero():
        c1, c2 = bands_mod.trace_folded_bands(p_grid, shape, params, lam_star)
        return [c1, c2]

    def run_delta(delta):
        chart = _load_fd_chart(cfg, delta)
        if chart is not None:
            seed1 = float(chart[-1, 1])
            seed2 = float(chart[-1, 2])
        else:
            fd = fdoracle.fd_bloch_eigs(np.pi, delta, 2, grid, shape)
            seed1, seed2 = float(fd[0]), float(fd[1])
        c1 = bands_mod.trace_band(1, p_grid, delta, shape, params, seed_lambda=seed1)
        c2 = bands_mod.trace_band(2, p_grid, delta, shape, params, seed_lambda=seed2)
        return [c1, c2]

    tasks = [(0.0, run_zero)]
    for d in cfg.deltas:
        tasks.append((d, lambda d=d: run_delta(d)))
        tasks.append((-d, lambda d=d: run_delta(-d)))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda t: (t[0], t[1]()), tasks))
    else:
        results = [(d, fn()) for d, fn in tasks]

    for delta, curves in results:
        for curve in curves:
            for p, lam, sg in zip(curve.p_grid, curve.lambdas, curve.sigma_mins):
                rows.append([curve.band_index, float(delta), float(p), float(lam), float(sg)])
    rows.sort(key=lambda r: (r[1], r[0], r[2]))
    _write_csv(cfg.out_dir / "bands.csv", ["band", "delta", "p", "lambda", "sigma_min"], rows)
    _atomic_write(cfg.out_dir / "bands.gp", _BANDS_GP)
    print(f"bands -> {cfg.out_dir / 'bands.csv'}")
    return EXIT_OK


def _dirac_data(cfg: RunConfig):
    shape = cfg.shape()
    params = cfg.params()
    grid = fdoracle.FDGrid(cfg.table_fd_nx)
    chart0 = _load_fd_chart(cfg, 0.0)
    lam_hint = float(chart0[-1, 1]) if chart0 is not None else float(
        fdoracle.fd_bloch_eigs(np.pi, 0.0, 1, grid, shape)[0]
    )
    return dirac_mod.compute_dirac_data(
        shape, params, (lam_hint - 1.0, lam_hint + 1.0), cfg.fd_steps
    )


def cmd_dirac(cfg: RunConfig) -> int:
    """Crossing report: location, coefficients, slope and swap checks."""
    shape = cfg.shape()
    params = cfg.params()
    data = _dirac_data(cfg)
    slope = bands_mod.band_slope_at_crossing(shape, params, data.lambda_star)
    overlaps, labels = dirac_mod.mode_swap_check(data, cfg.deltas[0], shape, params)
    payload = {
        "p_star": data.p_star,
        "lambda_star": data.lambda_star,
        "gamma_star": data.gamma_star,
        "theta_star": data.theta_star,
        "t_star": data.t_star,
        "alpha_star": data.alpha_star,
        "beta_star": data.beta_star,
        "band_slope": slope,
        "slope_rel_dev": abs(slope - data.alpha_star) / data.alpha_star,
        "pattern_residuals": data.pattern_residuals,
        "symmetry_residuals": data.symmetry_residuals,
        "swap_overlaps": {
            "plus": overlaps[+1].tolist(),
            "minus": overlaps[-1].tolist(),
            "labels": labels,
        },
    }
    _write_json(cfg.out_dir / "dirac.json", payload)
    print(f"dirac -> {cfg.out_dir / 'dirac.json'}: lambda*={data.lambda_star:.6f}, "
          f"alpha*={data.alpha_star:.4f}, beta*={data.beta_star:.2f}")
    return EXIT_OK


def cmd_gap(cfg: RunConfig) -> int:
    """Gap opening per delta: edges at the fold momentum and scaling."""
    shape = cfg.shape()
    params = cfg.params()
    data = _dirac_data(cfg)
    report = {"lambda_star": data.lambda_star, "beta_star": data.beta_star, "entries": []}
    widths = {}
    for delta in cfg.deltas:
        half = abs(delta * data.beta_star)
        lo, _ = bands_mod.find_band_lambda(
            np.pi, (data.lambda_star - 1.8 * half, data.lambda_star - 0.3 * half),
            delta, shape, params)
        hi, _ = bands_mod.find_band_lambda(
            np.pi, (data.lambda_star + 0.3 * half, data.lambda_star + 1.8 * half),
            delta, shape, params)
        gap_int = bands_mod.gap_interval(data, delta, cfg.c)
        widths[delta] = hi - lo
        report["entries"].append({
            "delta": delta,
            "edge_lower": lo,
            "edge_upper": hi,
            "width": hi - lo,
            "predicted_width": 2 * half,
            "interval": [gap_int.e1, gap_int.e2],
        })
    for d in cfg.deltas:
        if 2 * d in widths:
            report.setdefault("scaling", {})[f"{d}->{2*d}"] = widths[2 * d] / widths[d]
    _write_json(cfg.out_dir / "gap.json", report)
    print(f"gap -> {cfg.out_dir / 'gap.json'}")
    return EXIT_OK


def _tables_for(cfg: RunConfig, delta: float, shape, params):
    cache = cfg.out_dir / "tables"
    tables = []
    for d in (+delta, -delta):
        key = gapgreens.table_cache_key(shape, d, cfg.n_bands, cfg.n_p_nodes, cfg.m_trunc)
        path = cache / f"bloch_table_{key}.json"
        if path.exists():
            table = gapgreens.load_table(path)
            table.shape = shape
            table.params = params
        else:
            table = gapgreens.build_bloch_table(
                d, cfg.n_bands, cfg.n_p_nodes, shape, params, fd_grid_nx=cfg.table_fd_nx
            )
            gapgreens.save_table(table, cache)
        tables.append(table)
    return tuple(tables)


def cmd_interface(cfg: RunConfig) -> int:
    """Bound-state solve per delta, cross-checked against the supercell."""
    shape = cfg.shape()
    params = cfg.params()
    data = _dirac_data(cfg)
    status = EXIT_OK
    for delta in cfg.deltas:
        tables = _tables_for(cfg, delta, shape, params)
        gap_int = bands_mod.gap_interval(data, delta, cfg.c)
        result = interface_mod.find_interface_eigenvalue(
            delta, gap_int, tables, m_nodes=cfg.m_gamma_nodes,
            full_window_halfwidth=abs(delta * data.beta_star),
        )
        result = interface_mod.reconstruct_interface_mode(result, tables)

        lam_fd, cands, mode, meta = fdoracle.fd_supercell_interface(
            delta, cfg.supercell_cells, fdoracle.FDGrid(cfg.oracle_nx), shape,
            gap_center=0.5 * (result.gap[0] + result.gap[1]),
        )
        kap_fd, r2_fd = fdoracle.mode_decay_rate(mode, meta["X"], 1.0, 4.0)
        gap_width = result.gap[1] - result.gap[0]
        fd_dev = abs(result.lambda_star_mode - lam_fd) / gap_width

        payload = {
            "delta": delta,
            "gap": list(result.gap),
            "lambda_star_mode": result.lambda_star_mode,
            "sigma_min_at_root": result.sigma_min_at_root,
            "kappa": result.kappa,
            "r_squared": result.r_squared,
            "residuals": result.interface_residuals,
            "sigma_scan": result.sigma_scan,
            "warnings": result.warnings,
            "fd_supercell": {
                "lambda": float(lam_fd),
                "kappa": float(kap_fd),
                "r_squared": float(r2_fd),
                "gap_fraction_deviation": float(fd_dev),
            },
        }
        tag = f"{delta:g}".replace(".", "p")
        _write_json(cfg.out_dir / f"interface_delta{tag}.json", payload)

        rows = []
        for i, x1 in enumerate(result.grid_x):
            for j, x2 in enumerate(result.grid_y):
                rows.append([float(x1), float(x2),
                             float(np.real(result.field_samples[i, j])),
                             float(np.imag(result.field_samples[i, j]))])
        _write_csv(cfg.out_dir / f"interface_field_delta{tag}.csv",
                   ["x1", "x2", "re_u", "im_u"], rows)
        _write_csv(cfg.out_dir / f"interface_scan_delta{tag}.csv",
                   ["lambda", "sigma_min"],
                   [[float(a), float(b)] for a, b in result.sigma_scan])
        _atomic_write(cfg.out_dir / "interface.gp", _INTERFACE_GP)

        print(f"interface delta={delta:g}: lambda*={result.lambda_star_mode:.6f} "
              f"(fd {lam_fd:.6f}, dev {fd_dev:.3f} gap), kappa={result.kappa:.3f}")
        if fd_dev > 0.2:
            print("oracle disagreement beyond 0.2 x gap width", file=sys.stderr)
            status = EXIT_ORACLE
    return status


def cmd_verify(cfg: RunConfig) -> int:
    """Quick invariant suite on the kernel and geometry layers."""
    from .qpgreens import eval_Ge, eval_Ge_many

    shape = cfg.shape()
    params = KernelParams(p=1.3, lam=11.0, m_trunc=cfg.m_trunc,
                          sing_guard=cfg.sing_guard)
    rng = np.random.default_rng(7)
    xs = np.column_stack([rng.uniform(-0.4, 0.4, 100), rng.uniform(0.04, 0.46, 100)])
    ys = np.column_stack([rng.uniform(-0.4, 0.4, 100), rng.uniform(0.04, 0.46, 100)])
    base = eval_Ge_many(xs, ys, params)
    shifted = eval_Ge_many(xs + np.array([1.0, 0.0]), ys, params)
    qp = float(np.max(np.abs(shifted - np.exp(1j * params.p) * base)))
    checks = {"quasi_periodicity": qp < 1e-11}
    conj = abs(
        eval_Ge([0.2, 0.3], [0.5, 0.1], KernelParams(np.pi + 0.4, 12.0))
        - np.conj(eval_Ge([0.2, 0.3], [0.5, 0.1], KernelParams(np.pi - 0.4, 12.0)))
    )
    checks["conjugation"] = conj < 1e-12
    rec = abs(
        eval_Ge([0.2, 0.3], [0.5, 0.1], KernelParams(0.9, 12.0))
        - eval_Ge([0.5, 0.1], [0.2, 0.3], KernelParams(2 * np.pi - 0.9, 12.0))
    )
    checks["reciprocity"] = rec < 1e-12
    from .geometry import reflect_indices

    idx = reflect_indices(shape.n_nodes)
    refl = shape.nodes[idx] * np.array([-1.0, 1.0])
    checks["shape_symmetry"] = float(np.max(np.abs(refl - shape.nodes))) < 1e-13
    for name, ok in checks.items():
        print(f"verify {name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if all(checks.values()) else EXIT_CERTIFICATION


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="diracwg",
        description="Band structure, crossing analysis, and interface modes "
                    "of an obstacle-lined waveguide",
    )
    parser.add_argument("command",
                        choices=["bands", "dirac", "gap", "interface", "oracle", "all"])
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--verify", action="store_true",
                        help="run the invariant suite before the command")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.verify:
            code = cmd_verify(cfg)
            if code != EXIT_OK:
                return code
        if args.command == "oracle":
            return cmd_oracle(cfg)
        if args.command == "bands":
            return cmd_bands(cfg)
        if args.command == "dirac":
            return cmd_dirac(cfg)
        if args.command == "gap":
            return cmd_gap(cfg)
        if args.command == "interface":
            return cmd_interface(cfg)
        if args.command == "all":
            for fn in (cmd_oracle, cmd_bands, cmd_dirac, cmd_gap, cmd_interface):
                code = fn(cfg)
                if code != EXIT_OK:
                    return code
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except DiracWGError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
