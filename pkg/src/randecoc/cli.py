"""Command-line entry point: ``randecoc <subcommand> [--config FILE] [--key value ...]``.

Every subcommand reads an optional JSON config, applies flag overrides,
validates the result against its schema (unknown keys are rejected), and
writes its artifacts plus ``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 config error, 3 failed verification, 4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, bounds, lab
from .attack import (
    AttackConfig,
    PerturbationSpace,
    QueryingSubstituteAttacker,
    RandomBallAttacker,
    SubstituteAttackConfig,
    TransferAttacker,
    substitute_attack,
)
from .codebook import ABSTAIN, as_rational, decode_batch, derive_seed
from .data import Dataset, load_csv, load_idx, synth_gaussian, synth_symmetric
from .ensemble import Ensemble, build_ensemble
from .errors import ConfigError, FormatError
from .learners import TrainConfig, train_substitute

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_IO = 0, 2, 3, 4


class VerificationFailed(Exception):
    pass


def _p(kind, default, help_=None, **extra):
    return {"type": kind, "default": default, "description": help_ or "", **extra}


DATA = {
    "data_source": _p("string", "synthetic", "synthetic, csv or idx", enum=["synthetic", "csv", "idx"]),
    "N": _p("integer", 10, "number of classes (synthetic)", minimum=2),
    "dim": _p("integer", 20, "feature dimension (synthetic)", minimum=1),
    "per_class": _p("integer", 30, "training points per class (synthetic)", minimum=1),
    "test_per_class": _p("integer", 20, "test points per class (synthetic)", minimum=1),
    "public_per_class": _p("integer", 10, "attacker's public points per class (synthetic)", minimum=1),
    "separation": _p("number", 8.0, "distance between class centers", exclusiveMinimum=0),
    "data_seed": _p("integer", 0),
    "train_path": _p(["string", "null"], None, "CSV file, or IDX images file"),
    "train_labels_path": _p(["string", "null"], None, "IDX labels file"),
    "test_path": _p(["string", "null"], None),
    "test_labels_path": _p(["string", "null"], None),
}
LEARNER = {
    "learner": _p("string", "logistic", enum=["logistic", "mlp"]),
    "learning_rate": _p("number", 0.5, exclusiveMinimum=0),
    "epochs": _p("integer", 200, minimum=1),
    "hidden_width": _p("integer", 32, minimum=1),
}
ENSEMBLE = {
    "M": _p("integer", 64, "code length", minimum=1),
    "r": _p("number", 0.25, "Hamming threshold ratio", exclusiveMinimum=0, exclusiveMaximum=1),
    "seed": _p("integer", 0, "master seed"),
}
ATTACK = {
    "attack": _p("string", "fgsm", enum=["fgsm", "pgd", "migm"]),
    "epsilon": _p(["number", "null"], None, "l-infinity radius in feature units (required)", exclusiveMinimum=0),
    "steps": _p("integer", 10, minimum=1),
    "step_size": _p(["number", "null"], None),
    "momentum": _p("number", 1.0, minimum=0),
    "augmentation_epochs": _p("integer", 4, minimum=0),
    "lam": _p("number", 0.5, "Jacobian augmentation step", exclusiveMinimum=0),
    "substitute_arch": _p("string", "mlp", enum=["linear-softmax", "mlp"]),
    "substitute_epochs": _p("integer", 300, minimum=1),
}

SCHEMAS = {
    "train": {**DATA, **LEARNER, **ENSEMBLE},
    "classify": {
        "ensemble_path": _p(["string", "null"], None, "ensemble.json from `train`"),
        "input_csv": _p(["string", "null"], None),
        "r": _p(["number", "null"], None, "override the stored threshold"),
        "no_abstain": _p("boolean", False),
    },
    "attack": {**DATA, **LEARNER, **ENSEMBLE, **ATTACK},
    "sweep-r": {**DATA, **LEARNER, **ENSEMBLE, **ATTACK,
                "r_grid": _p("array", [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45],
                             items={"type": "number", "minimum": 0, "maximum": 1})},
    "challenge-grid": {
        "N": _p("integer", 4, minimum=2),
        "per_class": _p("integer", 30, minimum=1),
        "test_per_class": _p("integer", 10, minimum=1),
        "separation": _p("number", 8.0, exclusiveMinimum=0),
        "symmetric": _p("boolean", True, "permutation-symmetric synthetic data"),
        "dim": _p("integer", 10, minimum=1),
        "data_seed": _p("integer", 0),
        "sample_size": _p("integer", lab.DEFAULT_SAMPLE_SIZE, minimum=1),
        "targeted": _p("boolean", True),
        "trend_classes": _p("array", [], items={"type": "integer", "minimum": 2}),
        "seed": _p("integer", 0),
        **{k: v for k, v in LEARNER.items()},
        "attack": ATTACK["attack"], "epsilon": ATTACK["epsilon"], "steps": ATTACK["steps"],
        "step_size": ATTACK["step_size"], "momentum": ATTACK["momentum"],
    },
    "bounds": {
        "N": _p("integer", 10, minimum=2),
        "M": _p("integer", 100, minimum=1),
        "r": _p("number", 0.1, exclusiveMinimum=0, exclusiveMaximum=1),
        "Q": _p("integer", 1, minimum=0),
        "epsilon": _p("number", 0.1, exclusiveMinimum=0, maximum=1),
        "delta": _p("number", 0.3, exclusiveMinimum=0, exclusiveMaximum=1),
    },
    "verify-lemmas": {
        "N": _p("integer", 10, "trim lemma: classes", minimum=2),
        "M": _p("integer", 50, "trim lemma: code length", minimum=1),
        "r": _p("number", 0.1, "trim lemma: threshold", exclusiveMinimum=0, exclusiveMaximum=1),
        "exact": _p("boolean", False, "enumerate all codes instead of sampling"),
        "trials": _p("integer", 100000, minimum=1),
        "oracle_N": _p("integer", 10, minimum=2),
        "oracle_M": _p("integer", 20, minimum=1),
        "oracle_r": _p("number", 0.25, exclusiveMinimum=0, exclusiveMaximum=1),
        "q_flip": _p("array", [0.7, 0.9], items={"type": "number", "minimum": 0, "maximum": 1}),
        "oracle_trials": _p("integer", 20000, minimum=1),
        "seed": _p("integer", 0),
    },
    "simulate-reduction": {**DATA, **LEARNER, **ENSEMBLE, **ATTACK,
                           "attacker": _p("string", "transfer", enum=["random", "transfer", "query-substitute"]),
                           "trials": _p("integer", 50, minimum=1),
                           "challenge_index": _p("integer", 0, minimum=0),
                           "query_mode": _p("string", "abstain", enum=["abstain", "no-abstain"])},
}
SCHEMAS["challenge-grid"]["learning_rate"] = LEARNER["learning_rate"]


def _schema(name: str) -> dict:
    props = {k: {kk: vv for kk, vv in v.items() if kk not in ("default",)} for k, v in SCHEMAS[name].items()}
    return {"type": "object", "properties": props, "additionalProperties": False}


def _list_arg(text):
    text = text.strip()
    if text.startswith("["):
        return json.loads(text)
    return [json.loads(v) for v in text.split(",") if v.strip()]


def _bool_arg(text):
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text}")


def _add_flags(p: argparse.ArgumentParser, props: dict) -> None:
    for key, prop in props.items():
        kind = prop["type"][0] if isinstance(prop["type"], list) else prop["type"]
        flag = f"--{key.replace('_', '-')}"
        names = [flag] if flag == f"--{key}" else [flag, f"--{key}"]
        kw = {"dest": key, "default": None, "help": prop.get("description") or None}
        if kind == "boolean":
            p.add_argument(*names, nargs="?", const=True, type=_bool_arg, **kw)
        elif kind == "integer":
            p.add_argument(*names, type=int, **kw)
        elif kind == "number":
            p.add_argument(*names, type=float, **kw)
        elif kind == "array":
            p.add_argument(*names, type=_list_arg, **kw)
        else:
            p.add_argument(*names, type=str, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randecoc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, props in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (default runs/<subcommand>)")
        _add_flags(p, props)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = {k: v["default"] for k, v in SCHEMAS[command].items()}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg.update(loaded)
    for key in SCHEMAS[command]:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    try:
        jsonschema.validate(cfg, _schema(command))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{'.'.join(map(str, exc.path)) or 'config'}: {exc.message}") from exc
    if SCHEMAS[command].get("epsilon") is ATTACK["epsilon"] and cfg["epsilon"] is None:
        raise ConfigError("epsilon is required: there is no canonical perturbation scale")
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


class Run:
    def __init__(self, command: str, cfg: dict, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.artifacts: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.artifacts[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def manifest(self, status: str) -> None:
        canon = json.dumps(self.cfg, sort_keys=True)
        body = {
            "command": self.command,
            "config": self.cfg,
            "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
            "seed": self.cfg.get("seed"),
            "version": __version__,
            "status": status,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        (self.out / "manifest.json").write_text(_dump(body))


# -- shared builders -------------------------------------------------------------

def _datasets(cfg) -> tuple[Dataset, Dataset, Dataset]:
    """(train, test, public) datasets from the config."""
    src = cfg["data_source"]
    if src == "synthetic":
        s = cfg["data_seed"]
        train = synth_gaussian(cfg["N"], cfg["dim"], cfg["per_class"], cfg["separation"], derive_seed(s, 0))
        rng = train.feature_range
        test = synth_gaussian(cfg["N"], cfg["dim"], cfg["test_per_class"], cfg["separation"], derive_seed(s, 1), rng)
        public = synth_gaussian(cfg["N"], cfg["dim"], cfg["public_per_class"], cfg["separation"],
                                derive_seed(s, 2), rng)
        return train, test, public
    if not cfg["train_path"]:
        raise ConfigError("train_path is required for csv/idx data")
    if src == "csv":
        train = load_csv(cfg["train_path"])
        test = load_csv(cfg["test_path"], train.n_classes, train.feature_range) if cfg["test_path"] else train
    else:
        if not cfg["train_labels_path"]:
            raise ConfigError("train_labels_path is required for idx data")
        train = load_idx(cfg["train_path"], cfg["train_labels_path"])
        if cfg["test_path"]:
            test = load_idx(cfg["test_path"], cfg["test_labels_path"], train.n_classes)
        else:
            test = train
    return train, test, train


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(kind=cfg["learner"], learning_rate=cfg["learning_rate"], epochs=cfg["epochs"],
                       hidden_width=cfg["hidden_width"], seed=cfg.get("seed", 0))


def _attack_config(cfg, targeted=None) -> AttackConfig:
    return AttackConfig(cfg["attack"], cfg["steps"], cfg["step_size"], cfg["momentum"], targeted)


def _sub_config(cfg) -> TrainConfig:
    return TrainConfig(learning_rate=0.1, epochs=cfg["substitute_epochs"], hidden_width=64, seed=cfg["seed"])


def _accuracy(labels, y) -> float:
    return float(np.mean(np.asarray(labels) == np.asarray(y)))


def _adversarial_run(cfg):
    train, test, public = _datasets(cfg)
    tc = _train_config(cfg)
    ens = build_ensemble(train, cfg["M"], cfg["r"], cfg["seed"], tc)
    space = PerturbationSpace(cfg["epsilon"], train.feature_range)
    scfg = SubstituteAttackConfig(public, cfg["augmentation_epochs"], cfg["lam"], None,
                                  cfg["substitute_arch"], _sub_config(cfg))
    x_adv, log, sub = substitute_attack(lambda Q: ens.classify_batch(Q, no_abstain=True), scfg,
                                        _attack_config(cfg), test.features, test.labels, space)
    return train, test, ens, x_adv, log, sub


def _points_csv(X, y) -> str:
    lines = ["y," + ",".join(f"x{i + 1}" for i in range(X.shape[1]))]
    lines += [f"{int(t)}," + ",".join(repr(float(v)) for v in row) for row, t in zip(X, y)]
    return "\n".join(lines) + "\n"


# -- subcommands -------------------------------------------------------------------

def cmd_train(cfg, run: Run):
    train, test, _ = _datasets(cfg)
    ens = build_ensemble(train, cfg["M"], cfg["r"], cfg["seed"], _train_config(cfg))
    run.write("ensemble.json", _dump(ens.to_dict()))
    summary = {
        "train_accuracy": _accuracy(ens.classify_batch(train.features), train.labels),
        "test_accuracy": _accuracy(ens.classify_batch(test.features), test.labels),
        "test_abstain_rate": float(np.mean(ens.classify_batch(test.features) == ABSTAIN)),
        "duplicate_rows": [list(p) for p in ens.code.duplicate_rows()],
    }
    run.write("train_summary.json", _dump(summary))
    return summary


def cmd_classify(cfg, run: Run):
    if not cfg["ensemble_path"] or not cfg["input_csv"]:
        raise ConfigError("ensemble_path and input_csv are required")
    ens = Ensemble.from_json(Path(cfg["ensemble_path"]).read_text())
    data = load_csv(cfg["input_csv"], ens.n_classes)
    r = ens.r if cfg["r"] is None else cfg["r"]
    words = ens.predict_codewords(data.features)
    labels, dist = decode_batch(ens.code, words, r, no_abstain=cfg["no_abstain"])
    lines = ["index,label,distance,abstained"]
    lines += [f"{i},{int(l)},{int(d)},{int(l == ABSTAIN)}" for i, (l, d) in enumerate(zip(labels, dist))]
    run.write("predictions.csv", "\n".join(lines) + "\n")
    return {"n": len(labels), "accuracy": _accuracy(labels, data.labels)}


def cmd_attack(cfg, run: Run):
    train, test, ens, x_adv, log, sub = _adversarial_run(cfg)
    run.write("adversarial.csv", _points_csv(x_adv, test.labels))
    run.write("querylog.jsonl", log.to_jsonl())
    adv = ens.classify_batch(x_adv)
    nat = ens.classify_batch(test.features)
    summary = {
        "queries": len(log),
        "queries_precede_answers": log.queries_precede_answers(),
        "substitute_accuracy": _accuracy(sub.predict(test.features), test.labels),
        "true_accuracy": _accuracy(nat, test.labels),
        "adversarial_accuracy": float(np.mean((adv == test.labels) | (adv == ABSTAIN))),
        "substitute_adversarial_accuracy": _accuracy(sub.predict(x_adv), test.labels),
    }
    run.write("attack_summary.json", _dump(summary))
    return summary


def cmd_sweep(cfg, run: Run):
    train, test, ens, x_adv, log, sub = _adversarial_run(cfg)
    rows = lab.accuracy_sweep(ens, test.features, test.labels, x_adv, test.labels,
                              [Fraction(repr(float(r))) for r in cfg["r_grid"]])
    run.write("sweep.csv", lab.sweep_csv(rows))
    return {"rows": len(rows)}


def cmd_grid(cfg, run: Run):
    N = cfg["N"]
    s = cfg["data_seed"]
    if cfg["symmetric"]:
        train = synth_symmetric(N, cfg["per_class"], cfg["separation"], derive_seed(s, 0))
        test = synth_symmetric(N, cfg["test_per_class"], cfg["separation"], derive_seed(s, 1), train.feature_range)
    else:
        train = synth_gaussian(N, cfg["dim"], cfg["per_class"], cfg["separation"], derive_seed(s, 0))
        test = synth_gaussian(N, cfg["dim"], cfg["test_per_class"], cfg["separation"], derive_seed(s, 1),
                              train.feature_range)
    tc = _train_config(cfg)
    sub = train_substitute(train.features, train.labels, "linear-softmax", tc.replace(kind="logistic"), N)
    space = PerturbationSpace(cfg["epsilon"], train.feature_range)
    grid = lab.pairwise_grid(train, test, sub, _attack_config(cfg), space, tc, cfg["sample_size"],
                             cfg["seed"], cfg["targeted"])
    run.write("grid.csv", grid.to_csv())
    run.write("grid.json", _dump(grid.to_dict()))
    print(grid.table())
    if cfg["trend_classes"]:
        rows = lab.assumption_trend(cfg["trend_classes"], cfg["per_class"], cfg["separation"], cfg["epsilon"],
                                    _attack_config(cfg), tc, cfg["sample_size"], cfg["seed"])
        lines = ["n_classes,max_flip_rate,mean_flip_rate"]
        lines += [f"{r['n_classes']},{r['max_flip_rate']!r},{r['mean_flip_rate']!r}" for r in rows]
        run.write("trend.csv", "\n".join(lines) + "\n")
    return {"max_cell": list(grid.max_cell), "max_rate": float(grid.rates[grid.max_cell])}


def cmd_bounds(cfg, run: Run):
    rep = bounds.report(cfg["N"], cfg["M"], cfg["r"], cfg["Q"], cfg["epsilon"], cfg["delta"])
    text = _dump(rep)
    run.write("bounds.json", text)
    sys.stdout.write(text)
    return None


def cmd_verify(cfg, run: Run):
    trim = lab.verify_trim_lemma(cfg["N"], cfg["M"], cfg["r"], cfg["trials"], cfg["exact"], cfg["seed"])
    binom = [lab.verify_binomial_lemma(lab.OracleClassifier(q), cfg["oracle_N"], cfg["oracle_M"], cfg["oracle_r"],
                                       cfg["oracle_trials"], cfg["seed"]) for q in cfg["q_flip"]]
    passed = bool(trim["passed"] and all(b["passed"] for b in binom))
    run.write("lemmas.json", _dump({"trim_lemma": trim, "binomial_lemma": binom, "passed": passed}))
    for line in [f"trim lemma ({trim['mode']}): rate {trim['max_column_rate']:.3g} <= bound {trim['bound']:.3g}"
                 f" -> {'PASS' if trim['passed'] else 'FAIL'}"] + \
                [f"binomial lemma q_flip={b['q_flip']}: eps_hat {b['epsilon_hat']:.4f}, exact {b['exact_value']:.4f},"
                 f" union {b['union_value']:.4f} -> {'PASS' if b['passed'] else 'FAIL'}" for b in binom]:
        print(line)
    if not passed:
        raise VerificationFailed("lemma verification failed")
    return None


def cmd_reduction(cfg, run: Run):
    train, test, public = _datasets(cfg)
    tc = _train_config(cfg)
    space = PerturbationSpace(cfg["epsilon"], train.feature_range)
    if cfg["challenge_index"] >= len(test):
        raise ConfigError("challenge_index out of range")
    x, y = test.features[cfg["challenge_index"]], int(test.labels[cfg["challenge_index"]])
    if cfg["attacker"] == "random":
        attacker = RandomBallAttacker(space)
    else:
        sub = train_substitute(public.features, public.labels, cfg["substitute_arch"], _sub_config(cfg),
                               public.n_classes)
        if cfg["attacker"] == "transfer":
            attacker = TransferAttacker(sub, space, _attack_config(cfg))
        else:
            attacker = QueryingSubstituteAttacker(public, sub, space, _attack_config(cfg), cfg["lam"],
                                                  cfg["substitute_arch"], _sub_config(cfg))
    rep = lab.simulate_reduction(train, x, y, attacker, cfg["M"], cfg["r"], cfg["trials"], tc, space,
                                 cfg["seed"], cfg["query_mode"])
    run.write("reduction.json", _dump(rep))
    return rep


COMMANDS = {
    "train": cmd_train,
    "classify": cmd_classify,
    "attack": cmd_attack,
    "sweep-r": cmd_sweep,
    "challenge-grid": cmd_grid,
    "bounds": cmd_bounds,
    "verify-lemmas": cmd_verify,
    "simulate-reduction": cmd_reduction,
}


def _error(code: int, exc: BaseException, run: Run | None) -> int:
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(report) + "\n")
    if run is not None:
        try:
            run.write("error.json", _dump(report))
            run.manifest("error")
        except OSError:
            pass
    return code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    current = None
    try:
        cfg = resolve_config(cmd, args)
        current = Run(cmd, cfg, Path(args.out or f"runs/{cmd}"))
        summary = COMMANDS[cmd](cfg, current)
        if summary is not None:
            print(json.dumps(summary, sort_keys=True))
        current.manifest("ok")
        return EXIT_OK
    except ConfigError as exc:
        return _error(EXIT_CONFIG, exc, current)
    except VerificationFailed as exc:
        return _error(EXIT_ASSERT, exc, current)
    except (OSError, FormatError) as exc:
        return _error(EXIT_IO, exc, current)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
