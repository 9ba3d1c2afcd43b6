"""Command line entry point.

Exit codes: 0 when every verdict matches the registry's expectation, 1 on a
deviation, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ConfigError, ScenarioConfig, list_scenarios, run_scenario


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def build_parser():
    p = argparse.ArgumentParser(prog="convexsc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", help="registry name (overrides the config)")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--out", help="output directory (default: $CONVEXSC_OUT or ./convexsc-out)")
    r.add_argument("--seed", type=int)
    r.add_argument("--parallel", action="store_true", help="evaluate schedule points in threads")

    ls = sub.add_parser("list", help="list registered scenarios")
    ls.add_argument("--json", action="store_true")

    v = sub.add_parser("validate-config", help="check a config file")
    v.add_argument("path")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0

    try:
        if args.cmd == "list":
            entries = list_scenarios()
            if args.json:
                print(json.dumps(entries, indent=2, sort_keys=True))
            else:
                for e in entries:
                    print(f"{e['name']:<18} n in {e['dims']}  {e['anchor']}")
            return 0

        if args.cmd == "validate-config":
            cfg = ScenarioConfig.from_dict(_load(args.path))
            print(f"ok: {cfg.scenario}")
            return 0

        raw = _load(args.config) if args.config else {}
        if args.scenario:
            raw["scenario"] = args.scenario
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.parallel:
            raw["parallel"] = True
        if args.out:
            raw["out"] = args.out
        cfg = ScenarioConfig.from_dict(raw)
        report = run_scenario(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for name, v in sorted(report.verdicts.items()):
        flag = "ok" if v["observed"] == v["expected"] else "DEVIATION"
        print(f"{cfg.scenario}:{name}: observed={v['observed']} expected={v['expected']} [{flag}]")
    print(f"wall-clock {report.elapsed:.2f} s")
    return 0 if report.as_expected else 1


if __name__ == "__main__":
    sys.exit(main())
