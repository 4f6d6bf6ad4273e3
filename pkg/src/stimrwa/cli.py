"""Command line entry point.

``stimrwa <scenario> --config FILE --out DIR [--compare-oracle] [--degenerate]
[--radius R] [--modes K]``

Exit codes: 0 on success, 2 on a configuration error, 3 on a numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import SCENARIOS, ConfigError, load_config, parse_config
from .evolution import IntegrationError
from .linalg import NotHermitianError
from .spectral import NoPeriodicityError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

# which config field each command-line override lands in, per scenario
_OVERRIDES = {
    "radius": {
        "transparency": ("numerics", "radius"),
        "transparency-scan": ("numerics", "radius"),
        "selfint": ("numerics", "radius"),
        "selfint-rwa": ("numerics", "radius"),
        "rwa-generic": ("rwa", "radius"),
    },
    "modes": {"selfint": ("numerics", "modes"), "selfint-rwa": ("numerics", "modes")},
    "degenerate": {
        "selfint": ("numerics", "degenerate"),
        "selfint-rwa": ("numerics", "degenerate"),
        "rwa-generic": ("rwa", "degenerate"),
    },
    "compare_oracle": {
        "transparency": (None, "compare_oracle"),
        "transparency-scan": (None, "compare_oracle"),
        "selfint-rwa": (None, "compare_oracle"),
        "rwa-generic": (None, "compare_oracle"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stimrwa", description="Generalized rotating wave approximation scenarios.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", required=True, help="strict JSON scenario file")
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--compare-oracle", action="store_true", default=None, help="also run the numerical oracle")
    p.add_argument("--degenerate", action="store_true", default=None, help="sum degenerate integer sets")
    p.add_argument("--radius", type=int, help="integer hypercube radius")
    p.add_argument("--modes", type=int, help="number of Fourier modes kept")
    return p


def apply_overrides(cfg, scenario: str, **values):
    """Return ``cfg`` with command-line values written in and re-validated."""
    data = cfg.model_dump()
    for name, value in values.items():
        if value is None:
            continue
        target = _OVERRIDES[name].get(scenario)
        if target is None:
            flag = "--" + name.replace("_", "-")
            raise ConfigError(f"{flag} does not apply to scenario {scenario!r}")
        block, key = target
        (data if block is None else data[block])[key] = value
    return parse_config(data, scenario)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    from .scenarios import RUNNERS

    try:
        cfg = load_config(args.config, args.scenario)
        cfg = apply_overrides(
            cfg, args.scenario, radius=args.radius, modes=args.modes,
            degenerate=args.degenerate, compare_oracle=args.compare_oracle,
        )
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"stimrwa: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"stimrwa: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        RUNNERS[args.scenario](cfg, out)
    except (IntegrationError, NoPeriodicityError, NotHermitianError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"stimrwa: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        # inconsistent inputs only detectable once the model is assembled
        print(f"stimrwa: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
