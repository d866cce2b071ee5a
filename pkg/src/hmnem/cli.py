"""Command-line interface: ``hmnem {simulate,infer,diagnose,summarize}``.

Every command resolves its settings from built-in defaults, an optional
``--config`` YAML file, and command-line flags (in increasing priority),
then writes a ``manifest.yaml`` next to its outputs. A manifest is itself a
valid config, so ``hmnem <command> --config run/manifest.yaml --out again``
repeats the run and reproduces its files byte for byte.

Exit codes: 0 success, 2 invalid input or configuration, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import formats
from .diagnostics import ess, hpd_interval, network_metrics, psrf, rejection_rate, running_psrf
from .formats import ConfigError, FormatError
from .sampler import SamplerConfig, binarize, expected_network, run_chains_parallel
from .simulate import SimConfig, simulate

log = logging.getLogger("hmnem")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3

DEFAULTS = {
    "seed": 0,
    "chains": 20,
    "workers": 1,
    "simulation": {f.name: f.default for f in fields(SimConfig) if f.name != "seed"},
    "sampler": {f.name: f.default for f in fields(SamplerConfig) if f.name != "seed"},
    "infer": {"dataset": None, "attachments": None, "mode": None, "alpha": None, "beta": None,
              "cutoff": 0.5, "truth": None},
    "diagnose": {"traces": [], "burn_in": None, "coverage": 0.95, "window": None, "stride": None},
    "summarize": {"expected": None, "truth": None, "cutoff": 0.5},
}

# config sections each command reads; the rest are dropped from its manifest
SECTIONS = {
    "simulate": ("seed", "simulation"),
    "infer": ("seed", "chains", "workers", "sampler", "infer"),
    "diagnose": ("diagnose",),
    "summarize": ("summarize",),
}

# config entries naming input files
INPUT_KEYS = {
    "infer": (("infer", "dataset"), ("infer", "attachments"), ("infer", "truth")),
    "simulate": (),
    "diagnose": (),
    "summarize": (("summarize", "expected"), ("summarize", "truth")),
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmnem", description="Hidden Markov nested effects models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config or a previous run's manifest")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("simulate", help="generate networks and noisy perturbation data")
    common(sp)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("infer", help="sample network paths and smoothness from a dataset")
    common(sp)
    sp.add_argument("dataset", nargs="?")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--burnin", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--cutoff", type=float)
    sp.add_argument("--mode", choices=("binary", "probability"))
    sp.add_argument("--attachments")
    sp.add_argument("--truth", help="true networks, for recovery metrics")

    sp = sub.add_parser("diagnose", help="convergence diagnostics from trace files")
    common(sp)
    sp.add_argument("traces", nargs="*")
    sp.add_argument("--burnin", type=int)

    sp = sub.add_parser("summarize", help="plot-ready tables and metrics from an expected network")
    common(sp)
    sp.add_argument("expected", nargs="?")
    sp.add_argument("--truth")
    sp.add_argument("--cutoff", type=float)
    return p


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _overrides(args) -> dict:
    cmd = args.command
    flat = {
        "seed": ("seed",), "chains": ("chains",), "workers": ("workers",),
        "iterations": ("sampler", "iterations"), "burnin": ("sampler", "burn_in"),
        "sigma": ("sampler", "sigma"), "cutoff": (cmd, "cutoff"), "mode": ("infer", "mode"),
        "attachments": ("infer", "attachments"), "dataset": ("infer", "dataset"),
        "truth": (cmd, "truth"), "expected": ("summarize", "expected"),
    }
    if cmd == "diagnose":
        flat["burnin"] = ("diagnose", "burn_in")
    out: dict = {}
    for name, key in flat.items():
        value = getattr(args, name, None)
        if value is None:
            continue
        if name in ("attachments", "dataset", "truth", "expected"):
            value = os.path.abspath(value)
        d = out
        for k in key[:-1]:
            d = d.setdefault(k, {})
        d[key[-1]] = value
    if cmd == "diagnose" and args.traces:
        out["diagnose"] = {**out.get("diagnose", {}), "traces": [os.path.abspath(p) for p in args.traces]}
    return out


def resolve(args) -> tuple[dict, dict]:
    """Return ``(config, recorded_inputs)`` for the command in ``args``."""
    cmd = args.command
    loaded = formats.load_config(args.config) if args.config else {}
    if loaded.get("command") not in (None, cmd):
        raise ConfigError(args.config, None, f"config was written by '{loaded['command']}', not '{cmd}'")
    recorded = loaded.get("inputs", {}) or {}
    user = {k: v for k, v in loaded.items() if k not in ("command", "config_hash", "inputs", "outputs")}
    cfg = _merge(DEFAULTS, user)
    cfg = _merge(cfg, _overrides(args))
    formats.validate_config({k: v for k, v in cfg.items()}, "<resolved config>")
    cfg = {k: cfg[k] for k in SECTIONS[cmd]}
    return cfg, recorded


def _inputs(cmd: str, cfg: dict, recorded: dict) -> dict:
    paths = [cfg[a][b] for a, b in INPUT_KEYS[cmd] if cfg[a][b] is not None]
    if cmd == "diagnose":
        paths = list(cfg["diagnose"]["traces"])
    out = {}
    for p in paths:
        digest = formats.file_sha256(p)
        if p in recorded and recorded[p] != digest:
            raise CliError(f"{p}: contents changed since the manifest was written "
                           f"(sha256 {digest[:12]}..., recorded {recorded[p][:12]}...)")
        out[p] = digest
    return out


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, cmd: str, cfg: dict, inputs: dict, out_dir: str):
        self.cmd, self.cfg, self.inputs, self.out_dir = cmd, cfg, inputs, out_dir
        self.hash = formats.config_hash({"command": cmd, **cfg, "inputs": inputs})
        self.outputs: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    @property
    def provenance(self) -> dict:
        return {"command": self.cmd, "seed": self.cfg.get("seed", "none"), "config_hash": self.hash}

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def finish(self) -> None:
        doc = {"command": self.cmd, **self.cfg, "config_hash": self.hash, "inputs": self.inputs,
               "outputs": sorted(self.outputs)}
        formats.dump_yaml(os.path.join(self.out_dir, "manifest.yaml"), doc)


# --- commands ---------------------------------------------------------------

def cmd_simulate(run: Run) -> None:
    cfg = run.cfg
    gt = simulate(SimConfig(seed=cfg["seed"], **cfg["simulation"]))
    prov = run.provenance
    formats.write_dataset(run.path("data.csv"), gt.noisy_data, prov)
    formats.write_dataset(run.path("clean.csv"), gt.clean_data, prov)
    formats.write_networks(run.path("truth.csv"), gt.networks, prov)
    formats.write_attachments(run.path("attachments.csv"), gt.attachments, prov)
    log.info("simulated %d timepoints of %d x %d data", len(gt.noisy_data), *gt.noisy_data[0].data.shape)


def _load_inference_data(cfg: dict) -> list:
    inf = cfg["infer"]
    if inf["dataset"] is None:
        raise CliError("no dataset given (positional argument or infer.dataset)")
    att = formats.read_attachments(inf["attachments"]) if inf["attachments"] else None
    data = formats.read_dataset(inf["dataset"], att)
    mode = data[0].mode
    if inf["mode"] is not None and inf["mode"] != mode:
        raise CliError(f"--mode {inf['mode']} conflicts with the dataset's mode '{mode}'")
    if mode == "probability" and att is None:
        raise CliError("probability-mode data needs an attachment map (--attachments)")
    if att is not None and len(att) != data[0].m:
        raise CliError(f"attachment map lists {len(att)} reporters, the dataset has {data[0].m}")
    if mode == "binary":
        alpha = inf["alpha"] if inf["alpha"] is not None else data[0].alpha
        beta = inf["beta"] if inf["beta"] is not None else data[0].beta
        if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
            raise CliError(f"binary likelihood needs error rates in (0, 1), got alpha={alpha}, beta={beta}; "
                           "set infer.alpha and infer.beta")
        data = [type(ds)(ds.data, ds.n, ds.columns, ds.mode, alpha, beta, ds.attachments, ds.targets,
                         ds.reporter_names) for ds in data]
    return data


def _summary_stats(lambdas, log_joint, accepts, burn_ins, coverage: float) -> dict:
    """Pooled and per-chain statistics; ``lambdas`` etc. are lists of per-chain arrays."""
    post = np.concatenate([lam[b:] for lam, b in zip(lambdas, burn_ins)])
    hpd = hpd_interval(post, coverage)
    out = {
        "chains": len(lambdas),
        "posterior_mean_lambda": float(post.mean()),
        "hpd_lambda": [hpd.lower, hpd.upper],
        "hpd_coverage": coverage,
        "ess_lambda": [ess(lam, b)[0] for lam, b in zip(lambdas, burn_ins)],
        "rejection_rate": [rejection_rate(a, b) for a, b in zip(accepts, burn_ins)],
    }
    if len(lambdas) >= 2:
        b = max(burn_ins)
        L = min(len(x) for x in lambdas)
        out["sqrt_r_hat_lambda"] = psrf(np.array([x[:L] for x in lambdas]), b).sqrt_r_hat
        out["sqrt_r_hat_log_joint"] = psrf(np.array([x[:L] for x in log_joint]), b).sqrt_r_hat
    return out


def _metrics_row(inferred, truth) -> dict:
    if len(inferred) != len(truth) or inferred[0].n != truth[0].n:
        raise CliError(f"truth has {len(truth)} networks on {truth[0].n} components, inferred "
                       f"{len(inferred)} on {inferred[0].n}")
    m = network_metrics(inferred, truth)
    return {k: (v if isinstance(v, bool) else float(v) if isinstance(v, float) else int(v))
            for k, v in asdict(m).items()}


def cmd_infer(run: Run) -> None:
    cfg = run.cfg
    data = _load_inference_data(cfg)
    sampler = SamplerConfig(seed=cfg["seed"], **cfg["sampler"])
    traces = run_chains_parallel(sampler, data, cfg["chains"], workers=cfg["workers"])
    for tr in traces:
        header = {**run.provenance, "chain": tr.chain, "iterations": tr.iterations, "burn_in": tr.burn_in,
                  "sigma": tr.sigma}
        formats.write_trace(run.path(f"trace_chain{tr.chain:03d}.jsonl"), tr, header)
    expected = expected_network(traces)
    prov = run.provenance
    formats.write_matrices(run.path("expected_network.csv"), expected, prov)
    binary = binarize(expected, cfg["infer"]["cutoff"])
    formats.write_networks(run.path("binarized_network.csv"), binary, prov)

    summary = {**prov, **_summary_stats([t.lambdas for t in traces], [t.log_joint for t in traces],
                                        [t.kappa_accept for t in traces], [t.burn_in for t in traces], 0.95)}
    if cfg["infer"]["truth"]:
        summary["metrics"] = _metrics_row(binary, formats.read_networks(cfg["infer"]["truth"]))
    formats.dump_yaml(run.path("summary.yaml"), summary)
    log.info("posterior mean lambda %.4f over %d chains", summary["posterior_mean_lambda"], len(traces))


def cmd_diagnose(run: Run) -> None:
    dcfg = run.cfg["diagnose"]
    if not dcfg["traces"]:
        raise CliError("no trace files given")
    traces = [formats.read_trace(p) for p in dcfg["traces"]]
    burn = [dcfg["burn_in"] if dcfg["burn_in"] is not None else t.burn_in for t in traces]
    for t, b, p in zip(traces, burn, dcfg["traces"]):
        if b >= len(t.lambdas):
            raise CliError(f"{p}: burn-in {b} leaves no samples of {len(t.lambdas)}")
    stats = _summary_stats([t.lambdas for t in traces], [t.log_joint for t in traces],
                           [t.kappa_accept for t in traces], burn, dcfg["coverage"])
    seeds = sorted({str(t.header["seed"]) for t in traces if "seed" in t.header})
    prov = {**run.provenance, "seed": ",".join(seeds) or "none"}

    rows = []
    for i, (t, b) in enumerate(zip(traces, burn)):
        h = hpd_interval(t.lambdas[b:], dcfg["coverage"])
        rows.append([str(t.header.get("chain", i)), t.header.get("sigma", math.nan), int(b),
                     float(t.lambdas[b:].mean()), stats["ess_lambda"][i], ess(t.log_joint, b)[0],
                     stats["rejection_rate"][i], h.lower, h.upper])
    rows.append(["pooled", math.nan, int(max(burn)), stats["posterior_mean_lambda"],
                 float(np.sum(stats["ess_lambda"])), math.nan, float(np.mean(stats["rejection_rate"])),
                 *stats["hpd_lambda"]])
    formats.write_long_table(run.path("diagnostics.csv"),
                             ["chain", "sigma", "burn_in", "posterior_mean_lambda", "ess_lambda",
                              "ess_log_joint", "rejection_rate", "hpd_lower", "hpd_upper"], rows, prov)

    text = [f"# seed: {prov['seed']}  config_hash: {prov['config_hash']}", ""]
    groups: dict = {}
    for r in rows[:-1]:
        groups.setdefault(r[1], []).append(r)
    text.append(f"{'sigma':>8} {'chains':>6} {'posterior mean':>15} {'ESS':>10} {'rejection rate':>15}")
    for sigma, rs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        text.append(f"{sigma:>8} {len(rs):>6} {np.mean([r[3] for r in rs]):>15.4f} "
                    f"{np.mean([r[4] for r in rs]):>10.1f} {np.mean([r[6] for r in rs]):>15.4f}")
    text.append("")
    text.append(f"{int(100 * dcfg['coverage'])}% HPD for lambda (pooled): "
                f"[{stats['hpd_lambda'][0]:.4f}, {stats['hpd_lambda'][1]:.4f}]")

    if len(traces) < 2:
        log.warning("sqrt(R-hat) needs at least two chains; statistic omitted")
        text.append("sqrt(R-hat): omitted (single chain)")
    else:
        text.append(f"sqrt(R-hat) lambda: {stats['sqrt_r_hat_lambda']:.4f}")
        text.append(f"sqrt(R-hat) log joint: {stats['sqrt_r_hat_log_joint']:.4f}")
        L = min(len(t.lambdas) for t in traces)
        b = max(burn)
        ends, v_lam = running_psrf(np.array([t.lambdas[:L] for t in traces]), b, dcfg["window"], dcfg["stride"])
        _, v_lj = running_psrf(np.array([t.log_joint[:L] for t in traces]), b, dcfg["window"], dcfg["stride"])
        formats.write_long_table(run.path("running_psrf.csv"),
                                 ["end_iteration", "sqrt_r_hat_lambda", "sqrt_r_hat_log_joint"],
                                 [[int(e), x, y] for e, x, y in zip(ends, v_lam, v_lj)], prov)
    with open(run.path("summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(text) + "\n")
    print("\n".join(text[2:]))


def cmd_summarize(run: Run) -> None:
    scfg = run.cfg["summarize"]
    if scfg["expected"] is None:
        raise CliError("no expected-network file given")
    expected = formats.read_matrices(scfg["expected"])
    T, n, n2 = expected.shape
    if n != n2:
        raise CliError(f"{scfg['expected']}: blocks must be square, got {n} x {n2}")
    if np.any((expected < 0) | (expected > 1)):
        raise CliError(f"{scfg['expected']}: posterior edge means must lie in [0, 1]")
    prov = run.provenance
    rows = [[t, r, c, float(expected[t, r, c])] for t in range(T) for r in range(n) for c in range(n) if r != c]
    formats.write_long_table(run.path("heatmap.csv"), ["t", "from", "to", "mean"], rows, prov)
    binary = binarize(expected, scfg["cutoff"])
    formats.write_networks(run.path("binarized_network.csv"), binary, prov)
    if scfg["truth"]:
        truth = formats.read_networks(scfg["truth"])
        m = _metrics_row(binary, truth)
        formats.write_long_table(run.path("metrics.csv"), list(m), [list(m.values())], prov)
        print(f"sensitivity {m['sensitivity']:.4f}  specificity {m['specificity']:.4f}  "
              f"accuracy {m['accuracy']:.4f}")


COMMANDS = {"simulate": cmd_simulate, "infer": cmd_infer, "diagnose": cmd_diagnose, "summarize": cmd_summarize}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="hmnem: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg, recorded = resolve(args)
        run = Run(args.command, cfg, _inputs(args.command, cfg, recorded), args.out)
        COMMANDS[args.command](run)
        run.finish()
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (FormatError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
