#!/usr/bin/env python3
"""
qkdsim command line.

    python qkdsim.py run --rounds 4096 --eve intercept:random:0.5 --seed 7
    python qkdsim.py sweep --kind qber-vs-eve --grid 0,0.25,0.5,1 --reps 20 --out results/qber.csv
    python qkdsim.py teleport-demo --trials 1000
    python qkdsim.py cloning-demo --copies 8 --basis X
    python qkdsim.py otp-demo --message 48656c6c6f

Exit status: 0 when the run completed (Success or Aborted), 1 on a
simulator error, 2 on bad usage.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from bit_utils import hex_to_bits
from exceptions import ConfigError, QKDSimError
from experiments import (ExperimentKind, ExperimentSpec, cloning_demo, otp_demo, run_experiment,
                         run_once, teleport_demo, write_table)
from qkd_protocol import ProtocolConfig
from quantum_core import Basis
from random_stream import RandomStream
from sim_config import SimSettings, configure_logging, get_logger

logger = get_logger("cli")

# CLI flag -> ProtocolConfig field
CONFIG_FLAGS = {
    "rounds": "n_rounds",
    "eve": "eve",
    "qmax": "qber_threshold",
    "sample_fraction": "sample_fraction",
    "eps_pe": "eps_pe",
    "eps_cor": "eps_cor",
    "eps_sec": "eps_sec",
    "tag_bits": "tag_bits",
    "seed": "seed",
}
NOISE_FLAGS = {"px": "p_x", "py": "p_y", "pz": "p_z", "ploss": "p_loss"}


def load_config(args: argparse.Namespace) -> ProtocolConfig:
    """Defaults, then environment, then --config file, then explicit flags"""
    config = ProtocolConfig.from_env()
    if getattr(args, "config", None):
        config = ProtocolConfig.from_json_file(args.config, base=config)

    changes = {field: getattr(args, flag) for flag, field in CONFIG_FLAGS.items()
               if getattr(args, flag, None) is not None}
    noise_changes = {field: getattr(args, flag) for flag, field in NOISE_FLAGS.items()
                     if getattr(args, flag, None) is not None}
    if noise_changes:
        changes["noise"] = replace(config.noise, **noise_changes)
    return config.replace(**changes) if changes else config


def _add_protocol_flags(parser: argparse.ArgumentParser, noise: bool = True) -> None:
    parser.add_argument("--config", help="JSON file mirroring ProtocolConfig")
    parser.add_argument("--rounds", type=int, help="number of distributed pairs")
    parser.add_argument("--seed", type=int, help="top-level seed")
    parser.add_argument("--eve", help="passive | intercept:<random|Z|X|deg>:<f> | guessall:<seed>")
    parser.add_argument("--qmax", type=float, help="abort threshold on the QBER upper bound")
    parser.add_argument("--sample-fraction", type=float, help="share of sifted bits spent on estimation")
    parser.add_argument("--eps-pe", type=float)
    parser.add_argument("--eps-cor", type=float)
    parser.add_argument("--eps-sec", type=float)
    parser.add_argument("--tag-bits", type=int, help="verification hash length")
    if noise:
        parser.add_argument("--px", type=float, help="bit-flip probability")
        parser.add_argument("--py", type=float)
        parser.add_argument("--pz", type=float, help="phase-flip probability")
        parser.add_argument("--ploss", type=float, help="loss probability")


def _parse_grid(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"--grid must be comma-separated numbers, got {text!r}")


def cmd_run(args: argparse.Namespace, settings: SimSettings) -> int:
    config = load_config(args)
    result = run_once(config, variant="pm" if args.pm else "eb")
    text = result.to_json()
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Result written to {out}")
    if args.transcript:
        path = result.stats.transcript.save(args.transcript)
        logger.info(f"Transcript ({len(result.stats.transcript)} messages) written to {path}")
    return 0


def cmd_sweep(args: argparse.Namespace, settings: SimSettings) -> int:
    spec = ExperimentSpec(
        kind=args.kind,
        grid=_parse_grid(args.grid),
        repetitions=args.reps,
        base_config=load_config(args),
        workers=args.workers or settings.workers,
        variant="pm" if args.pm else "eb",
        options={"basis": args.basis} if args.basis else {},
    )
    table = run_experiment(spec)
    out = Path(args.out) if args.out else Path(settings.output_dir) / f"{spec.kind.value}.csv"
    write_table(table, out)
    print(table.to_string(index=False))
    return 0


def cmd_teleport_demo(args: argparse.Namespace, settings: SimSettings) -> int:
    seed = args.seed if args.seed is not None else settings.default_seed
    trials = teleport_demo(args.trials, RandomStream(seed).spawn("teleport"), args.theta)
    counts = trials.groupby(["x", "y"]).size()
    print(f"Teleported {args.trials} states (seed {seed})")
    for (x, y), count in counts.items():
        print(f"  outcome x={x} y={y}: {count}")
    print(f"  fidelity after correction: min {trials['fidelity'].min():.12f}, "
          f"mean {trials['fidelity'].mean():.12f}")
    print(f"  fidelity without correction: mean {trials['fidelity_uncorrected'].mean():.4f}")
    return 0


def cmd_cloning_demo(args: argparse.Namespace, settings: SimSettings) -> int:
    seed = args.seed if args.seed is not None else settings.default_seed
    basis = Basis.parse(args.basis) if args.basis else None
    trials = cloning_demo(args.copies, args.trials, RandomStream(seed).spawn("cloning"), basis)
    print("Counterfactual cloning: Bob's copies of his collapsed half, split between Z and X")
    print(trials.to_string(index=False))
    print(f"Bob identified Alice's basis in {trials['signalled'].mean():.1%} of trials "
          f"(error bound {trials['error_bound'].iloc[0]:.3g})")
    return 0


def cmd_otp_demo(args: argparse.Namespace, settings: SimSettings) -> int:
    try:
        message = hex_to_bits(args.message)
    except ValueError as e:
        raise ConfigError(str(e))
    result = otp_demo(message, load_config(args), variant="pm" if args.pm else "eb")
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdsim", description="Deterministic entanglement-based QKD simulator")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="overrides QKDSIM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one protocol session, printed as JSON")
    _add_protocol_flags(run)
    run.add_argument("--pm", action="store_true", help="prepare-and-measure variant")
    run.add_argument("--out", help="also write the JSON result here")
    run.add_argument("--transcript", help="write the public transcript as JSON lines")
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="parameter sweep written as CSV")
    _add_protocol_flags(sweep)
    sweep.add_argument("--kind", required=True, choices=[k.value for k in ExperimentKind])
    sweep.add_argument("--grid", required=True, help="comma-separated parameter values")
    sweep.add_argument("--reps", type=int, default=1, help="repetitions per grid point")
    sweep.add_argument("--workers", type=int, help="worker processes (QKDSIM_WORKERS)")
    sweep.add_argument("--pm", action="store_true", help="prepare-and-measure variant")
    sweep.add_argument("--basis", help="Alice's basis for cloning-demo sweeps")
    sweep.add_argument("--out", help="CSV path (default <output dir>/<kind>.csv)")
    sweep.set_defaults(handler=cmd_sweep)

    tele = sub.add_parser("teleport-demo", help="teleport random states and check the corrections")
    tele.add_argument("--trials", type=int, default=100)
    tele.add_argument("--theta", type=float, help="fix the input polar angle (degrees)")
    tele.add_argument("--seed", type=int)
    tele.set_defaults(handler=cmd_teleport_demo)

    clone = sub.add_parser("cloning-demo", help="what cloning would let Bob learn about Alice's basis")
    clone.add_argument("--copies", type=int, default=8)
    clone.add_argument("--trials", type=int, default=1)
    clone.add_argument("--basis", help="Alice's basis: Z, X or an angle in degrees (random when omitted)")
    clone.add_argument("--seed", type=int)
    clone.set_defaults(handler=cmd_cloning_demo)

    otp = sub.add_parser("otp-demo", help="encrypt a message with QKD key and decrypt it")
    _add_protocol_flags(otp)
    otp.add_argument("--message", required=True, help="message as hex")
    otp.add_argument("--pm", action="store_true", help="prepare-and-measure variant")
    otp.set_defaults(handler=cmd_otp_demo)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = SimSettings.from_env()
        configure_logging(settings, level=args.log_level)
        return args.handler(args, settings)
    except QKDSimError as e:
        logger.error(str(e))
        return 1
    except ValueError as e:
        # Basis.parse and friends raise plain ValueError on bad user input.
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
