"""Command-line front end.

    blockroam security-table [--target T] [--slot-time S]
    blockroam simulate --seed N [--config sim.json] [--events log.jsonl]
    blockroam attack {all,double-spend,...} --seed N [--ratio A]
    blockroam game solve {g1,g2,g3,PATH} [--method sweep|subset|grid|milp] [--restrict-all]
    blockroam game generate --seed N (--row G4 | --budget-range LO HI --cost-range LO HI ...)
    blockroam game table3 --seed N [--rows G4 G9 ...]
    blockroam roaming demo [--config scenario.json] [--seed N]

Every command accepts --seed, --config, --out and --format.  Errors go to
stderr as one JSON object; exit codes are 0 ok, 1 usage, 2 bad data,
3 internal failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import Counter
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Optional

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    """Bad input data: config, instance or scenario."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config loading ----------------------------------------------------------

def load_json(path: str, what: str = "config") -> dict:
    """Read a JSON object, turning syntax errors into line/column diagnostics."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {what} {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise DataError(f"{path}:1:1: {what} must be a JSON object")
    return data


def _key_line(path: Optional[str], key: str) -> str:
    # best-effort location of a top-level key for diagnostics
    if not path:
        return "<defaults>"
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        if f'"{key}"' in line:
            return f"{path}:{k}"
    return path


def _bundled(name: str) -> dict:
    return json.loads(resources.files("blockroam").joinpath("data", name).read_text())


def _need_seed(args) -> int:
    if args.seed is None:
        name = " ".join(filter(None, (args.command, getattr(args, "game_command", None))))
        raise UsageError(f"{name} is stochastic and needs --seed")
    return args.seed


# -- rendering ---------------------------------------------------------------

def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    try:
        import numpy as np
        if isinstance(x, np.generic):
            return x.item()
    except ImportError:   # pragma: no cover
        pass
    raise TypeError(f"cannot serialize {type(x).__name__}")


# -- commands ----------------------------------------------------------------

def cmd_security_table(args) -> str:
    from .security import confirmation_table

    if not 0 < args.target < 1:
        raise DataError("target must lie strictly between 0 and 1")
    if not args.slot_time > 0:
        raise DataError("slot time must be positive")
    rows = confirmation_table(args.target, args.slot_time)
    recs = [{"adversarial_ratio": f"{r.adversarial_ratio:.2f}", "kappa": r.kappa,
             "blockroam_minutes": r.minutes,
             "bitcoin_minutes_published": r.bitcoin, "cardano_minutes_published": r.cardano}
            for r in rows]
    if args.format == "json":
        return _json({"target": args.target, "slot_time": args.slot_time, "rows": recs})
    return _csv(list(recs[0]), [list(r.values()) for r in recs])


DEFAULT_SIMULATION = {
    "mode": "epochs",
    "stakes": {"validator-0": 100, "validator-1": 200, "validator-2": 300, "validator-3": 400},
    "params": {"epoch_length": 100, "committee_size": 3},
    "epochs": 1,
    "behaviors": {},
}


def _simulation_config(args) -> dict:
    cfg = dict(DEFAULT_SIMULATION)
    if args.config:
        cfg.update(load_json(args.config))
    unknown = set(cfg) - {"mode", "stakes", "params", "epochs", "behaviors", "monte_carlo"}
    if unknown:
        k = sorted(unknown)[0]
        raise DataError(f"{_key_line(args.config, k)}: unknown config key {k!r}")
    return cfg


def cmd_simulate(args) -> str:
    from .consensus import Behavior, ConsensusParams, events_to_jsonl, simulate
    from .ledger import Chain, KeyRing
    from .rng import derive_bytes
    from .security import monte_carlo_cp, run_probability

    seed = _need_seed(args)
    cfg = _simulation_config(args)
    if cfg["mode"] == "monte-carlo":
        mc = cfg.get("monte_carlo") or {}
        try:
            a = float(mc.get("adversarial_ratio", 0.3))
            depth = int(mc.get("depth", 3))
            rho = int(mc.get("epoch_slots", 100))
            trials = int(mc.get("trials", 100_000))
            res = monte_carlo_cp(a, depth, rho, trials, seed)
        except (TypeError, ValueError) as exc:
            raise DataError(f"{_key_line(args.config, 'monte_carlo')}: {exc}") from None
        exact = float(run_probability(a, depth, rho))
        summary = {"mode": "monte-carlo", "adversarial_ratio": a, "depth": depth,
                   "epoch_slots": rho, "trials": trials, "hits": res.hits,
                   "empirical": res.probability, "stderr": res.stderr, "analytic": exact,
                   "within_3_sigma": res.within(exact)}
        if args.format == "csv":
            return _csv(["key", "value"], summary.items())
        return _json(summary)
    if cfg["mode"] != "epochs":
        raise DataError(f"{_key_line(args.config, 'mode')}: mode must be 'epochs' or 'monte-carlo'")

    try:
        stakes = {str(k): int(v) for k, v in cfg["stakes"].items()}
        params = ConsensusParams.from_dict(cfg.get("params", {}))
        behaviors = {k: Behavior.from_dict(v) for k, v in cfg.get("behaviors", {}).items()}
        epochs = int(cfg.get("epochs", 1))
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        key = "behaviors" if "behavior" in str(exc).lower() else "params"
        raise DataError(f"{_key_line(args.config, key)}: {exc}") from None
    if epochs < 1:
        raise DataError(f"{_key_line(args.config, 'epochs')}: epochs must be at least 1")
    keys = KeyRing.derive(sorted(stakes), seed=seed)
    genesis = Chain.genesis(stakes)
    result = simulate(genesis, sorted(stakes), params, keys,
                      derive_bytes(seed, "consensus/epoch-seed"), epochs, behaviors)
    chain = result.chain
    leaders = Counter(b.leader for b in chain.blocks if b.slot > 0)
    kinds = Counter(e["event"] for e in result.events)
    summary = {
        "mode": "epochs",
        "epochs": epochs,
        "chain_height": chain.height,
        "growth": chain.height - genesis.height,
        "tip": chain.tip_hash.hex(),
        "blocks_by_leader": dict(sorted(leaders.items())),
        "rewards_by_leader": {k: v * params.block_reward for k, v in sorted(leaders.items())},
        "reorgs": kinds.get("reorg", 0),
        "equivocations": kinds.get("equivocation", 0),
        "slashes": kinds.get("slash", 0),
        "balances": dict(sorted(chain.state.balances.items())),
    }
    if args.events:
        Path(args.events).write_text(events_to_jsonl(result.events))
    if args.format == "csv":
        flat = [(k, json.dumps(v) if isinstance(v, dict) else v) for k, v in summary.items()]
        return _csv(["key", "value"], flat)
    return _json({"summary": summary, "events": result.events})


def cmd_attack(args) -> str:
    from .attacks import CORE_ATTACKS, AttackKind, run_attack

    seed = _need_seed(args)
    kinds = [k.value for k in CORE_ATTACKS] + [AttackKind.GRINDING.value] \
        if args.kind == "all" else [args.kind]
    outcomes = [run_attack(k, args.ratio, seed) for k in kinds]
    if args.format == "csv":
        return _csv(["kind", "adversary_ratio", "succeeded", "cost"],
                    [(o.kind, o.adversary_ratio, str(o.succeeded).lower(), o.cost)
                     for o in outcomes])
    return _json([o.to_dict() for o in outcomes])


def _instance(ref: str):
    from .game import GameInstance, load_fixture
    from .game.instances import FIXTURES

    if ref.lower() in FIXTURES:
        return load_fixture(ref)
    return GameInstance.from_dict(load_json(ref, "instance"))


def cmd_game(args) -> str:
    from .game import (GameInstance, TABLE3_ROWS, brute_force_oracle, generate_instance,
                       milp_oracle, solve_fixed_set, solve_leader, subset_lp_oracle, table3)
    from .game.model import Equilibrium

    if args.game_command == "solve":
        inst = _instance(args.instance)
        if args.restrict_all:
            eq = solve_fixed_set(inst, range(inst.n))
        else:
            method = {"sweep": solve_leader, "subset": subset_lp_oracle,
                      "grid": brute_force_oracle, "milp": milp_oracle}[args.method]
            eq = method(inst)
        if args.format == "csv":
            return _csv(Equilibrium.CSV_HEADER, [eq.csv_row(inst)])
        return _json(eq.to_dict(inst))

    seed = _need_seed(args)
    if args.game_command == "generate":
        if args.row:
            if args.row not in TABLE3_ROWS:
                raise DataError(f"unknown row {args.row!r}")
            inst = TABLE3_ROWS[args.row].instance(seed)
        else:
            if not (args.budget_range and args.cost_range and args.reward is not None):
                raise UsageError("generate needs --row or all of --budget-range, --cost-range, --reward")
            inst = generate_instance(args.budget_range, args.cost_range, args.n, args.sigma,
                                     args.reward, seed)
        return inst.to_json() + "\n"

    results = table3(seed, args.rows)
    header = ["G", "R", "B_range", "C_range", "sigma", "based_on",
              "c_star", "alpha_star_percent", "U_star_p", "pool_stake_percent",
              "published_c_star", "published_alpha_percent", "published_U_star_p",
              "published_pool_stake_percent"]
    rows = []
    for row, inst, eq in results:
        rows.append([row.name, f"{row.reward:g}", "[{:g},{:g}]".format(*row.budget_range),
                     "[{:g},{:g}]".format(*row.cost_range), f"{row.sigma:g}", row.based_on,
                     *eq.csv_row(inst), f"{row.c_star:g}", f"{row.alpha_percent:g}",
                     f"{row.profit:g}", f"{row.pool_stake_percent:g}"])
    if args.format == "json":
        return _json([dict(zip(header, r)) for r in rows])
    return _csv(header, rows)


def cmd_roaming(args) -> str:
    from .roaming import RoamingScenario, run_roaming_demo

    cfg = _bundled("roaming_demo.json")
    if args.config:
        cfg.update(load_json(args.config, "scenario"))
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        scenario = RoamingScenario.from_dict(cfg)
    except TypeError as exc:
        raise DataError(f"scenario: {exc}") from None
    result = run_roaming_demo(scenario)
    out = result.to_dict()
    out["scenario"] = asdict(scenario)
    if args.format == "csv":
        rows = []
        for s in result.steps:
            extra = {k: v for k, v in s.items() if k not in ("step", "label", "slot", "time_s")}
            rows.append([s["step"], s["label"], s["slot"], s["time_s"],
                         json.dumps(extra, sort_keys=True)])
        rows.append(["", "conservation", "", "", result.conservation])
        if result.timeline:
            rows.append(["", "fraud timeline", "", "", json.dumps(result.timeline.to_dict(),
                                                                   sort_keys=True)])
        return _csv(["step", "label", "slot", "time_s", "details"], rows)
    return _json(out)


# -- parser ------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master seed for every random stream")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="blockroam", description="Proof-of-stake roaming ledger simulator and stake-pool game solver",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("security-table", parents=[common], help="confirmation-time table")
    p.add_argument("--target", type=float, default=0.001)
    p.add_argument("--slot-time", type=float, default=20.0)
    p.set_defaults(func=cmd_security_table, default_format="csv")

    p = sub.add_parser("simulate", parents=[common], help="run epochs or Monte Carlo batches")
    p.add_argument("--events", default=None, help="also write the event log as JSON lines")
    p.set_defaults(func=cmd_simulate, default_format="json")

    p = sub.add_parser("attack", parents=[common], help="run scripted attack scenarios")
    p.add_argument("kind", choices=("all", "double-spend", "nothing-at-stake", "long-range",
                                    "transaction-denial", "bribe-supported-denial", "grinding"))
    p.add_argument("--ratio", type=float, default=0.3, help="adversarial stake ratio")
    p.set_defaults(func=cmd_attack, default_format="json")

    p = sub.add_parser("game", parents=[common], help="stake-pool game tools")
    gsub = p.add_subparsers(dest="game_command", required=True, parser_class=_Parser)
    g = gsub.add_parser("solve", parents=[common], help="solve an instance")
    g.add_argument("instance", help="g1, g2, g3 or a path to an instance JSON file")
    g.add_argument("--method", choices=("sweep", "subset", "grid", "milp"), default="sweep")
    g.add_argument("--restrict-all", action="store_true",
                   help="force every follower to invest and report that profit")
    g.set_defaults(default_format="json")
    g = gsub.add_parser("generate", parents=[common], help="draw a random instance")
    g.add_argument("--row", default=None, help="draw with a reference row's parameters, e.g. G4")
    g.add_argument("--budget-range", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--cost-range", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--sigma", type=float, default=1000.0)
    g.add_argument("--reward", type=float, default=None)
    g.set_defaults(default_format="json")
    g = gsub.add_parser("table3", parents=[common], help="regenerate the 13 reference rows")
    g.add_argument("--rows", nargs="+", default=None)
    g.set_defaults(default_format="csv")
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("roaming", parents=[common], help="roaming workflow")
    rsub = p.add_subparsers(dest="roaming_command", required=True, parser_class=_Parser)
    r = rsub.add_parser("demo", parents=[common], help="trace one roaming session")
    r.set_defaults(default_format="json")
    p.set_defaults(func=cmd_roaming)
    return parser


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    from .consensus import ConsensusError
    from .game import GameError
    from .ledger import LedgerError
    from .roaming import RoamingError
    from .attacks import UnknownAttack

    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # the top-level parser also saw the common flags; keep whichever was set
        top, _ = _common().parse_known_args(argv)
        for name in ("seed", "config", "out", "format"):
            if getattr(args, name) is None:
                setattr(args, name, getattr(top, name))
        if args.format is None:
            args.format = args.default_format
        text = args.func(args)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except UsageError as exc:
        return _error("usage", str(exc), EXIT_USAGE)
    except (DataError, GameError, RoamingError, LedgerError, ConsensusError, UnknownAttack,
            ValueError, OSError) as exc:
        return _error("data", str(exc), EXIT_DATA)
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    except Exception as exc:           # noqa: BLE001 - report, never crash with a trace
        return _error("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
