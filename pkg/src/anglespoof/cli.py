"""Command-line interface: estimate / spoof / sweep / heatmap / rate.

Every subcommand takes ``--config FILE`` plus optional ``--output-dir`` and
repeatable ``--override key=value`` flags, echoes the effective config into
the output directory, and writes textual outputs only.  Exit codes: 0 on
success, 1 on configuration errors, 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    apply_overrides,
    build_experiment,
    config_to_dict,
    load_config_file,
    write_effective_config,
)
from .errors import ConfigError, NumericalFailureError
from .estimator import grid_ml_estimate
from .harness import (
    design_spoof,
    generate_heatmap,
    probe_signal,
    run_rate_curves,
    run_sweep,
    write_heatmap_csv,
    write_markers_csv,
    write_rate_csv,
    write_sweep_csv,
    write_trials_csv,
)
from .spoofing import write_diagnostics_csv

OUTPUT_DIR_ENV = "ANGLESPOOF_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports errors through ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="anglespoof", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="{estimate,spoof,sweep,heatmap,rate}")
    for name, help_text in (
        ("estimate", "run one grid-ML estimation and print angles, gains, residual"),
        ("spoof", "design the adversarial precoders; write diagnostics and precoders"),
        ("sweep", "Monte Carlo power sweep; write sweep.csv and trials.csv"),
        ("heatmap", "export the estimator cost surface and peak markers"),
        ("rate", "spectral efficiency vs power for no-spoof and spoofed links"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument(
            "--output-dir",
            default=None,
            help=f"output directory (default: ${OUTPUT_DIR_ENV} or the current directory)",
        )
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (dotted section.key or unique bare key); repeatable",
        )
    return parser


def write_precoders_txt(tensor: np.ndarray, path):
    """Textual complex tensor: 'S N_t M' header, then re,im pairs row-major.

    Blocks follow combiner order; within a block, one line per transmit
    antenna holding M comma-joined re,im pairs separated by spaces.
    """
    s, n_t, m = tensor.shape
    with open(path, "w") as fh:
        fh.write(f"{s} {n_t} {m}\n")
        for block in tensor:
            for row in block:
                fh.write(" ".join("%.17g,%.17g" % (v.real, v.imag) for v in row) + "\n")


def read_precoders_txt(path) -> np.ndarray:
    """Inverse of write_precoders_txt."""
    with open(path) as fh:
        s, n_t, m = (int(v) for v in fh.readline().split())
        tensor = np.zeros((s, n_t, m), dtype=complex)
        for i in range(s):
            for j in range(n_t):
                pairs = fh.readline().split()
                if len(pairs) != m:
                    raise ValueError(f"expected {m} entries in block {i} row {j}")
                for k, pair in enumerate(pairs):
                    re, _, im = pair.partition(",")
                    tensor[i, j, k] = complex(float(re), float(im))
    return tensor


def _cmd_estimate(config, outdir):
    y, _ = probe_signal(config)
    result = grid_ml_estimate(
        y,
        config.codebook(),
        config.grid(),
        config.true_angles().n_paths,
        min_separation=config.min_separation,
    )
    print(f"mode: {config.mode}")
    for i in range(result.angles.n_paths):
        print(
            "path %d: aoa_deg=%.6f aod_deg=%.6f gain_mod=%.6g"
            % (
                i,
                math.degrees(result.angles.aoa[i]),
                math.degrees(result.angles.aod[i]),
                abs(result.gains[i]),
            )
        )
    print("residual: %.6g" % result.residual_cost)
    print(f"under_resolved: {result.under_resolved}")
    return 0


def _cmd_spoof(config, outdir):
    state, diagnostics = design_spoof(config)
    write_diagnostics_csv(state, diagnostics, outdir / "diagnostics.csv")
    write_precoders_txt(state.precoders.per_measurement, outdir / "precoders.txt")
    print(
        "converged=%s iterations=%d objective=%.6g subspace_residual=%.6g"
        % (state.converged, state.iterations, diagnostics.final_objective, diagnostics.subspace_residual)
    )
    return 0


def _cmd_sweep(config, outdir):
    result = run_sweep(config)
    write_sweep_csv(result, outdir / "sweep.csv")
    write_trials_csv(result, outdir / "trials.csv")
    for row in result.per_power:
        print(
            "%g dBm: rmse_aoa=%.4f deg  rmse_aod=%.4f deg  se=%.4f bps/Hz"
            % (
                row["power_dbm"],
                row["rmse_aoa_deg"],
                row["rmse_aod_deg"],
                row["mean_spectral_efficiency_bps_hz"],
            )
        )
    return 0


def _cmd_heatmap(config, outdir):
    result = generate_heatmap(config)
    write_heatmap_csv(config.grid(), result.cost_surface, outdir / "heatmap.csv")
    write_markers_csv(result, config, config.mode, outdir / "heatmap_peaks.csv")
    print(f"wrote {outdir / 'heatmap.csv'} and {outdir / 'heatmap_peaks.csv'}")
    return 0


def _cmd_rate(config, outdir):
    rows = run_rate_curves(config)
    write_rate_csv(rows, outdir / "rate.csv")
    for row in rows:
        print(
            "%g dBm: no_spoof=%.4f bps/Hz  spoof=%.4f bps/Hz"
            % (row["power_dbm"], row["se_no_spoof_bps_hz"], row["se_spoof_bps_hz"])
        )
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "spoof": _cmd_spoof,
    "sweep": _cmd_sweep,
    "heatmap": _cmd_heatmap,
    "rate": _cmd_rate,
}


def parse_and_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError(f"a subcommand is required\n{parser.format_usage()}")
        data = apply_overrides(load_config_file(args.config), args.override)
        config = build_experiment(data)
        outdir = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
        outdir.mkdir(parents=True, exist_ok=True)
        write_effective_config(config_to_dict(config), outdir / "effective_config.toml")
        return _COMMANDS[args.command](config, outdir)
    except ConfigError as exc:
        print(f"anglespoof: {exc}", file=sys.stderr)
        return 1
    except NumericalFailureError as exc:
        print(f"anglespoof: numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
