"""Command-line interface: generate, mine, compare, evaluate.

Exit codes: 0 success (mined policy consistent / query permitted),
1 usage or input errors, 2 inconsistent mined policy or denied query.
"""

from __future__ import annotations

import argparse
import os
import sys

from rebacminer import miner as mn
from rebacminer import model as m
from rebacminer import serialize as ser
from rebacminer import synth
from rebacminer.metrics import similarity_report
from rebacminer.miner import ALGORITHMS


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rebac-miner",
                                description="Mine relationship-based access "
                                            "control rules from ACLs.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic policy bundle")
    g.add_argument("--n-sub", type=int, default=None,
                   help="subjects per subject class")
    g.add_argument("--n-r", type=int, default=None, help="rules to generate")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config", help="JSON run-config file")
    g.add_argument("--out-dir", required=True)

    mi = sub.add_parser("mine", help="mine rules from an ACL policy")
    mi.add_argument("--class-model", required=True)
    mi.add_argument("--object-model", required=True)
    mi.add_argument("--acl", required=True)
    mi.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    mi.add_argument("--seed", type=int, default=None)
    mi.add_argument("--config", help="JSON run-config file")
    mi.add_argument("--out-rules", required=True)
    mi.add_argument("--out-report", required=True)

    c = sub.add_parser("compare", help="compare mined rules with input rules")
    c.add_argument("--class-model", required=True)
    c.add_argument("--object-model", required=True)
    c.add_argument("--mined", required=True)
    c.add_argument("--original", required=True)
    c.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="answer one subject/resource/action query")
    e.add_argument("--class-model", required=True)
    e.add_argument("--object-model", required=True)
    e.add_argument("--rules", required=True)
    e.add_argument("--subject", required=True)
    e.add_argument("--resource", required=True)
    e.add_argument("--action", required=True)
    return p


class CliError(Exception):
    pass


def _read(path: str) -> dict:
    if not os.path.exists(path):
        raise CliError(f"no such file: {path}")
    try:
        return ser.read_document(path)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_configs(config_path):
    doc = _read(config_path) if config_path else {}
    try:
        return ser.parse_run_config(doc)
    except ser.FormatError as exc:
        raise CliError(f"config: {exc}") from exc


def _cmd_generate(args) -> int:
    import dataclasses
    cfgs = _load_configs(args.config)
    scfg = cfgs["synth"]
    overrides = {}
    if args.n_sub is not None:
        overrides["n_sub"] = args.n_sub
    if args.n_r is not None:
        overrides["n_r"] = args.n_r
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        scfg = dataclasses.replace(scfg, **overrides)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    bundle = synth.generate_bundle(scfg)
    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)
    ser.write_document(out("class-model.json"), ser.dump_class_model(bundle.cm))
    ser.write_document(out("object-model.json"), ser.dump_object_model(bundle.om))
    ser.write_document(out("rules.json"), ser.dump_rules(bundle.rules))
    ser.write_document(out("acl.json"), ser.dump_acl(bundle.acl))
    wsc = sum(r.wsc for r in bundle.rules)
    print(f"objects: {len(bundle.om.objects)}")
    print(f"rules: {len(bundle.rules)} (WSC {wsc})")
    print(f"|AU|: {len(bundle.acl.au)}")
    return 0


def _load_acl(args):
    cm = ser.load_class_model(_read(args.class_model))
    try:
        om = ser.load_object_model(_read(args.object_model), cm)
    except m.ModelError as exc:
        raise CliError(f"{args.object_model}: {exc}") from exc
    return cm, om


def _cmd_mine(args) -> int:
    import dataclasses
    cm, om = _load_acl(args)
    try:
        acl = ser.load_acl(_read(args.acl), cm, om)
    except m.ModelError as exc:
        raise CliError(f"{args.acl}: {exc}") from exc
    cfgs = _load_configs(args.config)
    mcfg = cfgs["miner"]
    if args.algorithm is not None:
        mcfg = dataclasses.replace(mcfg, algorithm=args.algorithm)
    if args.seed is not None:
        mcfg = dataclasses.replace(
            mcfg, seed=args.seed,
            train=dataclasses.replace(mcfg.train, seed=args.seed))

    report = mn.mine(acl, mcfg)
    ser.write_document(args.out_rules, ser.dump_rules(report.rules))
    ser.write_document(args.out_report, ser.dump_mining_report(report))
    status = "consistent" if report.consistent else "INCONSISTENT"
    print(f"{report.algorithm}: {len(report.rules)} rules, WSC {report.wsc}, "
          f"{status} ({report.elapsed:.1f}s)")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not report.consistent:
        print("mined policy does not reproduce the input authorizations",
              file=sys.stderr)
        return 2
    return 0


def _cmd_compare(args) -> int:
    cm, om = _load_acl(args)
    mined = ser.load_rules(_read(args.mined))
    original = ser.load_rules(_read(args.original))
    for r in mined | original:
        try:
            m.validate_rule(cm, r)
        except m.ModelError as exc:
            raise CliError(f"rule does not fit the class model: {exc}") from exc
    rep = similarity_report(mined, original, om)
    ser.write_document(args.out, ser.dump_similarity_report(rep))
    print(f"synSim: {rep.syn_sim:.4f}")
    print(f"perRuleSemSim: {rep.per_rule_sem_sim:.4f}")
    print(f"wscRatio: {rep.wsc_ratio:.4f} ({rep.wsc_mined}/{rep.wsc_input})")
    return 0


def _cmd_evaluate(args) -> int:
    cm, om = _load_acl(args)
    rules = ser.load_rules(_read(args.rules))
    for oid in (args.subject, args.resource):
        try:
            om.type_of(oid)
        except m.ModelError as exc:
            raise CliError(str(exc)) from exc
    permitted = any(
        m.satisfies_rule(om, args.subject, args.resource, args.action, r)
        for r in rules)
    print("permit" if permitted else "deny")
    return 0 if permitted else 2


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": _cmd_generate, "mine": _cmd_mine,
                "compare": _cmd_compare, "evaluate": _cmd_evaluate}
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
