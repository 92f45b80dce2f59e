"""Command-line entry point: ``learncert <subcommand> ...``.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure or
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from learncert import __version__, attacks, certify, data, nn, pue, report, rng, smoothing
from learncert.errors import LearnCertError, NonConvergenceError, NumericalError
from learncert.manifest import ConfigError, RunManifest, load_config, pick

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

BLOB_KEYS = {"num_classes": int, "input_dim": int, "samples_per_class": int, "test_per_class": int,
             "cluster_spread": float, "center_spread": float, "seed": int}
PIPELINE_KEYS = {**BLOB_KEYS, "hidden": int, "modes": list, "u_perturb": int, "u_train": int,
                 "noise_cap": float, "noise_step": float, "surrogate_steps": int, "stop_error": float,
                 "xi": float, "max_rounds": int, "surrogate": str, "sigma": float, "n": int, "q": float,
                 "alpha": float, "etas": list, "beta": float, "learning_rate": float, "momentum": float,
                 "batch_size": int}


def _floats(values: list[str]) -> list[float]:
    out = []
    for v in values:
        out += [float(x) for x in v.split(",") if x.strip()]
    return out


def _write(path: Path, content) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(content)
    return path


def _manifest(out: Path, stage: str, config: dict, seed: int) -> RunManifest:
    out.mkdir(parents=True, exist_ok=True)
    m = RunManifest.load_or_create(out, {stage: config}, seed)
    m.record_config(stage, config)
    return m


def _load_model(surrogate: Path, model: str | None) -> nn.ModelSpec:
    path = Path(model) if model else surrogate.parent / "model.json"
    if not path.exists():
        raise ConfigError(f"model description not found: {path} (pass --model)")
    d = json.loads(path.read_text())
    return nn.ModelSpec(tuple(d["layer_widths"]), d.get("activation", "relu"))


def _model_json(spec: nn.ModelSpec) -> str:
    return json.dumps({"layer_widths": list(spec.layer_widths), "activation": spec.activation}, indent=2) + "\n"


def _split(data_dir: str, name: str) -> data.LabeledDataset:
    return data.load_dataset(Path(data_dir) / name)


# --- stages (shared by subcommands and the pipeline) ---------------------

def stage_gen_data(spec: data.BlobSpec, out: Path, manifest: RunManifest, root: Path | None = None) -> tuple:
    root = root or out
    train, test = data.make_blobs(spec)
    for name, ds in (("train", train), ("test", test)):
        manifest.add(root, "dataset", _write(out / name, data.dataset_bytes(ds)))
    return train, test


def stage_craft(train: data.LabeledDataset, spec: nn.ModelSpec, cfg: pue.CraftConfig, tcfg: nn.TrainConfig,
                out: Path, manifest: RunManifest, root: Path | None = None) -> pue.CraftResult:
    root = root or out
    _write(out / "model.json", _model_json(spec))
    try:
        result = pue.craft(train, spec, cfg, tcfg)
    except NonConvergenceError as exc:
        if exc.history is not None:
            manifest.add(root, "history", _write(out / "history.json", _history_json(exc.history)))
            manifest.save(root)
        raise
    manifest.add(root, "model", out / "model.json")
    manifest.add(root, "perturbation", _write(out / "delta", data.perturbation_bytes(result.delta, train.domain_digest())))
    theta_path = out / "surrogate"
    nn.save_params(theta_path, result.theta, spec)
    manifest.add(root, "params", theta_path)
    manifest.add(root, "history", _write(out / "history.json", _history_json(result)))
    return result


def _history_json(result: pue.CraftResult) -> str:
    return json.dumps(result.history_dict(), indent=2) + "\n"


def stage_train(poisoned: data.LabeledDataset, spec: nn.ModelSpec, cfg: pue.CraftConfig, tcfg: nn.TrainConfig,
                out: Path, manifest: RunManifest, root: Path | None = None) -> np.ndarray:
    root = root or out
    theta = pue.train_offline_surrogate(poisoned, spec, cfg, tcfg)
    manifest.add(root, "model", _write(out / "model.json", _model_json(spec)))
    nn.save_params(out / "surrogate", theta, spec)
    manifest.add(root, "params", out / "surrogate")
    return theta


def stage_certify(theta, spec, test, scfg: smoothing.SmoothingConfig, q: float, alpha: float, etas: list[float],
                  label: str, out: Path, manifest: RunManifest, beta=None, test_n=None, variant="2N",
                  workers: int = 1, root: Path | None = None) -> list[certify.Certificate]:
    root = root or out
    samples = smoothing.sample_accuracies(theta, spec, test, scfg, workers=workers)
    manifest.add(root, "accuracy-samples", _write(out / "samples", smoothing.format_samples(samples)))
    gen = None
    if beta is not None:
        gen = (test_n or len(test), beta)
    certs = []
    for eta in etas:
        cert = certify.certify_learnability(samples, certify.CertRequest(q, eta, alpha), gen, variant)
        manifest.add(root, "certificate", _write(out / f"cert_eta{eta!r}.json", cert.to_json()))
        certs.append(cert)
    rows = report.build_table([report.MethodCertificates(label, certs)])
    manifest.add(root, "table", _write(out / "certificates.csv", report.table_csv(rows)))
    return certs


# --- subcommands ---------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = pick(load_config(args.spec), BLOB_KEYS, str(args.spec))
    spec = data.BlobSpec(**cfg)
    out = Path(args.out)
    m = _manifest(out, "gen-data", asdict(spec), spec.seed)
    train, test = stage_gen_data(spec, out, m)
    m.save(out)
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")
    return EXIT_OK


def _craft_config(args, mode: pue.Mode) -> pue.CraftConfig:
    return pue.CraftConfig(mode=mode, u_train=args.u_train, u_perturb=args.u_perturb, noise_cap=args.noise_cap,
                           noise_step=args.noise_step, surrogate_steps=args.surrogate_steps,
                           stop_error=args.stop_error, xi=args.xi, max_rounds=args.max_rounds, seed=args.seed)


def cmd_craft(args) -> int:
    train = _split(args.data, "train")
    spec = nn.ModelSpec((train.input_dim, args.hidden, train.num_classes))
    cfg = _craft_config(args, pue.Mode.parse(args.mode))
    out = Path(args.out)
    m = _manifest(out, "craft", _describe(cfg), args.seed)
    m.add(out, "input-dataset", Path(args.data) / "train")
    try:
        result = stage_craft(train, spec, cfg, nn.TrainConfig(seed=args.seed), out, m)
    except NonConvergenceError:
        print(f"{cfg.label}: did not converge; history written to {out / 'history.json'}", file=sys.stderr)
        raise
    m.save(out)
    print(f"{cfg.label}: final perturbed-validation error {result.final_error:.4f} "
          f"after {len(result.history)} rounds")
    return EXIT_OK


def _describe(cfg) -> dict:
    d = asdict(cfg)
    return {k: (v.value if hasattr(v, "value") else v) for k, v in d.items()}


def cmd_train(args) -> int:
    train = _split(args.data, "train")
    delta = data.load_perturbation(args.delta, train) if args.delta else None
    poisoned = data.apply_perturbation(train, delta) if delta is not None else train
    spec = nn.ModelSpec((train.input_dim, args.hidden, train.num_classes))
    cfg = pue.CraftConfig(u_train=args.u_train, noise_cap=args.noise_cap, noise_step=args.noise_step,
                          stop_error=args.stop_error, seed=args.seed)
    out = Path(args.out)
    m = _manifest(out, "train", _describe(cfg), args.seed)
    if args.delta:
        m.add(out, "input-perturbation", args.delta)
    stage_train(poisoned, spec, cfg, nn.TrainConfig(seed=args.seed), out, m)
    m.save(out)
    print(f"wrote offline surrogate to {out / 'surrogate'}")
    return EXIT_OK


def cmd_certify(args) -> int:
    surrogate = Path(args.surrogate)
    spec = _load_model(surrogate, args.model)
    theta = nn.load_params(surrogate, spec)
    test = _split(args.data, args.split)
    if test.input_dim != spec.input_dim or test.num_classes != spec.num_classes:
        raise ConfigError("dataset dimensions do not match the surrogate's model")
    if not args.sigma > 0:
        raise ConfigError("--sigma must be positive")
    scfg = smoothing.SmoothingConfig(args.sigma, args.n, args.seed)
    etas = _floats(args.eta)
    out = Path(args.out)
    m = _manifest(out, "certify", {"sigma": args.sigma, "n": args.n, "q": args.q, "alpha": args.alpha, "etas": etas,
                                   "beta": args.beta, "test_n": args.test_n, "seed": args.seed}, args.seed)
    m.add(out, "input-params", surrogate)
    m.add(out, "input-dataset", Path(args.data) / args.split)
    certs = stage_certify(theta, spec, test, scfg, args.q, args.alpha, etas, args.label, out, m,
                          beta=args.beta, test_n=args.test_n, variant=args.hoeffding, workers=args.workers)
    m.save(out)
    for c in certs:
        print(f"eta={c.eta!r}: " + ("abstain" if c.abstained else f"k={c.k} bound={c.bound:.4f}"))
    return EXIT_OK


def cmd_recover(args) -> int:
    surrogate = Path(args.surrogate)
    spec = _load_model(surrogate, args.model)
    theta = nn.load_params(surrogate, spec)
    clean, test = _split(args.data, "train"), _split(args.data, "test")
    cfg = attacks.RecoveryConfig(lr=args.lr, steps=args.steps, clean_fraction=args.clean_fraction, seed=args.seed)
    curve = attacks.recovery_curve(theta, spec, clean, test, sorted(_floats(args.etas)), cfg,
                                   attacks.RecoveryMode(args.mode))
    _write(Path(args.out), curve.to_csv())
    print(curve.to_csv(), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    surrogate = Path(args.surrogate)
    spec = _load_model(surrogate, args.model)
    theta = nn.load_params(surrogate, spec)
    test = _split(args.data, "test")
    cert = certify.Certificate.from_json(Path(args.cert).read_text())
    rate = attacks.validate_certificate(theta, spec, test, cert, args.m, args.seed, args.interior)
    text = json.dumps(attacks.validation_report(rate, args.m, cert), indent=2) + "\n"
    _write(Path(args.out), text)
    print(text, end="")
    return EXIT_OK


def _parse_pairs(items: list[str], what: str) -> list[tuple[str, str]]:
    pairs = []
    for item in items or []:
        label, sep, value = item.partition("=")
        if not sep or not label:
            raise ConfigError(f"{what} expects LABEL=VALUE, got {item!r}")
        pairs.append((label, value))
    return pairs


def _read_certs(location: str) -> list[certify.Certificate]:
    path = Path(location)
    files = sorted(path.glob("cert_eta*.json")) if path.is_dir() else [path]
    return [certify.Certificate.from_json(f.read_text()) for f in files]


def cmd_report(args) -> int:
    inputs = _parse_pairs(args.input, "--input")
    offsets = {label: float(v) for label, v in _parse_pairs(args.offset, "--offset")}
    unknown = sorted(set(offsets) - {label for label, _ in inputs})
    if unknown:
        raise ConfigError(f"--offset given for unknown methods {unknown}")
    methods = [report.MethodCertificates(label, _read_certs(loc), offsets.get(label)) for label, loc in inputs]
    if not any(m.certificates for m in methods):
        raise ConfigError("no certificates to report")
    text = write_report(methods, Path(args.out), Path(args.svg) if args.svg else None,
                        allow_mixed=args.allow_mixed, offsets=bool(offsets))
    print(text, end="")
    return EXIT_OK


def write_report(methods, out: Path, svg: Path | None, allow_mixed=False, offsets=False) -> str:
    text = report.table_csv(report.build_table(methods, allow_mixed, offsets))
    _write(out, text)
    if svg is not None:
        _write(svg, report.svg_plot(text))
    return text


def cmd_run(args) -> int:
    """Full pipeline from one flat config: data, crafting per mode, certification, report."""
    cfg = pick(load_config(args.config), PIPELINE_KEYS, str(args.config))
    master = cfg.get("seed", args.seed)
    out = Path(args.out)
    m = _manifest(out, "run", cfg, master)
    blob = data.BlobSpec(**{k: cfg[k] for k in BLOB_KEYS if k in cfg and k != "seed"},
                         seed=rng.derive_seed(master, "gen-data"))
    train, test = stage_gen_data(blob, out / "data", m, root=out)
    spec = nn.ModelSpec((train.input_dim, cfg.get("hidden", 128), train.num_classes))
    tcfg = nn.TrainConfig(learning_rate=cfg.get("learning_rate", 0.05), momentum=cfg.get("momentum", 0.9),
                          batch_size=cfg.get("batch_size", 128), seed=rng.derive_seed(master, "train"))
    scfg = smoothing.SmoothingConfig(cfg.get("sigma", 0.25), cfg.get("n", 1000), rng.derive_seed(master, "smoothing"))
    etas = [float(e) for e in cfg.get("etas", [0.0, 0.1, 0.2, 0.3])]
    offline = cfg.get("surrogate", "online")
    if offline not in ("online", "offline"):
        raise ConfigError("surrogate must be 'online' or 'offline'")
    methods = []
    for mode_name in cfg.get("modes", ["pue"]):
        ccfg = pue.CraftConfig(
            mode=pue.Mode.parse(mode_name), u_train=cfg.get("u_train", 5), u_perturb=cfg.get("u_perturb", 10),
            noise_cap=cfg.get("noise_cap", 0.25), noise_step=cfg.get("noise_step", 0.05),
            surrogate_steps=cfg.get("surrogate_steps", 10), stop_error=cfg.get("stop_error", 0.1),
            xi=cfg.get("xi", 8 / 255), max_rounds=cfg.get("max_rounds", 200), seed=rng.derive_seed(master, "craft"),
        )
        stage_dir = out / ccfg.label
        result = stage_craft(train, spec, ccfg, tcfg, stage_dir, m, root=out)
        theta = result.theta
        if offline == "offline":
            poisoned = data.apply_perturbation(train, result.delta)
            theta = stage_train(poisoned, spec, ccfg, tcfg, stage_dir / "offline", m, root=out)
        certs = stage_certify(theta, spec, test, scfg, cfg.get("q", 0.9), cfg.get("alpha", 0.01), etas, ccfg.label,
                              stage_dir, m, beta=cfg.get("beta"), root=out)
        methods.append(report.MethodCertificates(ccfg.label, certs))
    write_report(methods, out / "table.csv", out / "table.svg")
    m.add(out, "table", out / "table.csv")
    m.add(out, "plot", out / "table.svg")
    m.save(out)
    print((out / "table.csv").read_text(), end="")
    return EXIT_OK


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="learncert", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"learncert {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic blob dataset")
    g.add_argument("--spec", required=True, help="flat TOML file with blob settings")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    def craft_flags(sp, defaults_noise=0.25):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--hidden", type=int, default=128)
        sp.add_argument("--u-train", type=int, default=5)
        sp.add_argument("--noise-cap", type=float, default=defaults_noise)
        sp.add_argument("--noise-step", type=float, default=0.05)
        sp.add_argument("--stop-error", type=float, default=0.1)

    c = sub.add_parser("craft", help="craft a class-wise perturbation with its online surrogate")
    c.add_argument("--mode", required=True, choices=[mo.value for mo in pue.Mode])
    c.add_argument("--u-perturb", type=int, default=10)
    c.add_argument("--data", required=True, help="directory holding train/test dataset files")
    c.add_argument("--out", required=True)
    craft_flags(c)
    c.add_argument("--surrogate-steps", type=int, default=10)
    c.add_argument("--xi", type=float, default=8 / 255)
    c.add_argument("--max-rounds", type=int, default=200)
    c.set_defaults(func=cmd_craft)

    t = sub.add_parser("train", help="train an offline surrogate on (optionally perturbed) data")
    t.add_argument("--data", required=True)
    t.add_argument("--delta", help="perturbation file to apply before training")
    t.add_argument("--out", required=True)
    craft_flags(t)
    t.set_defaults(func=cmd_train)

    def surrogate_flags(sp):
        sp.add_argument("--surrogate", required=True, help="parameter file")
        sp.add_argument("--model", help="model description (default: model.json next to the surrogate)")
        sp.add_argument("--data", required=True)
        sp.add_argument("--seed", type=int, default=0)

    ce = sub.add_parser("certify", help="certify (q, eta)-learnability of a surrogate")
    surrogate_flags(ce)
    ce.add_argument("--split", default="test", choices=["train", "test"])
    ce.add_argument("--sigma", type=float, default=0.25)
    ce.add_argument("--n", type=int, default=1000)
    ce.add_argument("--q", type=float, default=0.9)
    ce.add_argument("--alpha", type=float, default=0.01)
    ce.add_argument("--eta", nargs="+", default=["0"], help="eta values, space or comma separated")
    ce.add_argument("--beta", type=float, help="confidence for the test-set generalisation addend")
    ce.add_argument("--test-n", type=int, help="test-set size for the addend (default: the split size)")
    ce.add_argument("--hoeffding", choices=list(certify.HOEFFDING_VARIANTS), default="2N")
    ce.add_argument("--label", default="surrogate", help="method label in the CSV")
    ce.add_argument("--workers", type=int, default=1)
    ce.add_argument("--out", required=True)
    ce.set_defaults(func=cmd_certify)

    r = sub.add_parser("recover", help="projected-SGD recovery attack over a list of radii")
    surrogate_flags(r)
    r.add_argument("--etas", nargs="+", required=True)
    r.add_argument("--mode", choices=[mo.value for mo in attacks.RecoveryMode], default="generalized")
    r.add_argument("--lr", type=float, default=0.01)
    r.add_argument("--steps", type=int, default=300)
    r.add_argument("--clean-fraction", type=float, default=0.2)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_recover)

    v = sub.add_parser("validate", help="empirical violation rate of a certificate")
    surrogate_flags(v)
    v.add_argument("--cert", required=True)
    v.add_argument("--m", type=int, default=500)
    v.add_argument("--interior", action="store_true", help="sample inside the ball instead of on its boundary")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)

    rp = sub.add_parser("report", help="merge certificates into a methods x eta table")
    rp.add_argument("--input", action="append", default=[], metavar="LABEL=PATH",
                    help="certificate directory or file for one method (repeatable)")
    rp.add_argument("--offset", action="append", default=[], metavar="LABEL=VALUE",
                    help="reporting offset (accuracy units) for one method")
    rp.add_argument("--allow-mixed", action="store_true")
    rp.add_argument("--out", required=True)
    rp.add_argument("--svg")
    rp.set_defaults(func=cmd_report)

    ru = sub.add_parser("run", help="full pipeline from one config file")
    ru.add_argument("--config", required=True)
    ru.add_argument("--seed", type=int, default=0, help="master seed when the config has none")
    ru.add_argument("--out", required=True)
    ru.set_defaults(func=cmd_run)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NonConvergenceError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LearnCertError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
