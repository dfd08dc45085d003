"""`solve` command line entry point."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import config as cfgmod
from .fem_core import MeshError
from .solver import SolverAbort

OUT_ENV = "SMPFEM_OUT"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="solve", description="Coupled electro-thermo-mechanical SMP solver.")
    p.add_argument("config", help="INI scenario file (may be empty to take all defaults)")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and [output] dir)")
    p.add_argument("--scenario", choices=("sec", "cvs"), help="scenario defaults to start from")
    p.add_argument("--mode", choices=("imposed", "coupled"), help="imposed temperature or fully coupled")
    p.add_argument("--dt", type=float, help="time step (s)")
    p.add_argument("--validate-only", action="store_true", help="parse, report MQS validity and thermal scales, exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_out(args, cfg: dict) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or cfg["output"]["dir"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from .scenarios import run_scenario, validation_report

    overrides = {}
    if args.mode:
        overrides[("scenario", "mode")] = args.mode
    if args.dt is not None:
        overrides[("solver", "dt")] = args.dt
    try:
        cfg = cfgmod.parse_config(args.config, scenario=args.scenario, overrides=overrides)
        if args.dt is not None and args.dt <= 0:
            raise cfgmod.ConfigError("--dt must be positive")
        out = resolve_out(args, cfg)
        if args.validate_only:
            rep = validation_report(cfg)
            m, nd = rep["mqs"], rep["nondim"]
            print(f"scenario {cfg['scenario']['name']} ({cfg['scenario']['mode']}): {rep['elements']} elements, {rep['nodes']} nodes")
            print(f"skin depth {m.skin_depth:.6g} m (L_sys {m.L_sys:.6g} m, ok={m.skin_ok})")
            print(f"wavelength {m.wavelength:.6g} m (in material {m.wavelength_material:.6g} m, ok={m.wave_ok})")
            print(f"thermal diffusion time T_c {nd.T_c:.6g} s over L_c {nd.L_c:.6g} m")
            return 0
        t0 = time.perf_counter()
        res = run_scenario(cfg, out)
        last = res.records[-1]
        print(f"{cfg['scenario']['name']}: {len(res.records) - 1} steps to t={last.t:.6g} s in {time.perf_counter() - t0:.1f} s")
        print(f"outputs in {out}")
        return 0
    except (cfgmod.ConfigError, MeshError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverAbort as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
