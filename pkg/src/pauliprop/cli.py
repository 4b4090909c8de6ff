"""Batch front-end: config parsing, experiment orchestration, CSV emission.

Subcommands:
  simulate --config FILE            run one experiment, write trajectory CSV
  analyze  --in PATH [options]      entropy series, bounds, histograms
  verify   --suite NAME [--seed N]  run invariant suites
  bound    --s V --eps V --alpha V  budget prescription for a target error

Exit codes: 0 success, 1 failed verification, 2 invalid config or missing
input, 3 engine abort (operator emptied or norm collapsed).
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analytics import delta_bound, distributions, k_prescription, ose
from .hamiltonian import Hamiltonian, build_xxz_chain, format_hamiltonian, parse_hamiltonian
from .pauli import PauliWord
from .propagation import (
    EngineAbort,
    ProductState,
    RunConfig,
    TrajectoryRecord,
    backpropagate,
    staggered_magnetization,
)
from .sparse import PauliSum, TruncationPolicy, format_operator, parse_operator
from .verify import SUITES, run_suites

TRAJECTORY_SCHEMA = "trajectory-v1"
OSE_SCHEMA = "ose-v1"
GROWTH_SCHEMA = "growth-v1"
HIST_SCHEMA = "hist-v1"
BOUNDS_SCHEMA = "bounds-v1"


class ConfigError(ValueError):
    """Invalid configuration or unusable input file (exit code 2)."""


# -- config file ----------------------------------------------------------------

_CONFIG_KEYS = (
    "model", "L", "Jx", "Jy", "Jz", "boundary", "t", "steps", "tau", "K",
    "policy", "buckets", "weight_cap", "observable", "mode", "state",
    "record_every", "seed", "out_dir", "ose", "rescale_each_step",
    "snapshot_every", "hamiltonian_file",
)
_MODEL_KEYS = ("model", "L", "Jx", "Jy", "Jz", "boundary")
_ECHO_KEYS = (
    "model", "L", "Jx", "Jy", "Jz", "boundary", "t", "steps", "K", "policy",
    "buckets", "weight_cap", "observable", "mode", "state", "record_every",
    "seed", "ose", "rescale_each_step", "snapshot_every",
)


@dataclass
class SimPlan:
    """A fully resolved simulate invocation."""

    H: Hamiltonian
    observable: str
    mode: str
    state: ProductState
    cfg: RunConfig
    seed: int
    out_dir: Path
    snapshot_every: int
    echo: dict[str, str]
    hamiltonian_file: str | None


def _parse_kv(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _get_int(raw: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(raw[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw[key]!r}") from None


def _get_float(raw: dict[str, str], key: str, default: float | None = None) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(raw[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw[key]!r}") from None


def _get_bool(raw: dict[str, str], key: str, default: bool = False) -> bool:
    if key not in raw:
        return default
    value = raw[key].lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw[key]!r}")


def _resolve_steps(raw: dict[str, str], t: float) -> int:
    if "steps" in raw and "tau" in raw:
        raise ConfigError("give either steps or tau, not both")
    if "steps" in raw:
        N = _get_int(raw, "steps")
        if N < 1:
            raise ConfigError("steps must be >= 1")
        return N
    if "tau" in raw:
        tau = _get_float(raw, "tau")
        if tau <= 0.0:
            raise ConfigError("tau must be > 0")
        if t == 0.0:
            return 1
        N = round(t / tau)
        if N < 1 or abs(N * tau - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not a whole number of tau={tau} steps")
        return N
    if t == 0.0:
        return 1
    raise ConfigError("missing required key 'steps' (or 'tau')")


def _resolve_policy(raw: dict[str, str]) -> tuple[TruncationPolicy | None, int, int, int]:
    name = raw.get("policy", "exact")
    K = _get_int(raw, "K", 0)
    buckets = _get_int(raw, "buckets", 32)
    cap = _get_int(raw, "weight_cap", 0)
    if K < 0:
        raise ConfigError("K must be >= 0 (0 means untruncated)")
    if name == "exact":
        policy = TruncationPolicy(kind="top_k_exact", K=K) if K >= 1 else None
    elif name == "bucket":
        if K < 1:
            raise ConfigError("policy=bucket needs K >= 1")
        if buckets < 1:
            raise ConfigError("buckets must be >= 1")
        policy = TruncationPolicy(kind="top_k_bucket", K=K, B=buckets)
    elif name == "weight":
        if cap < 1:
            raise ConfigError("policy=weight needs weight_cap >= 1")
        policy = TruncationPolicy(kind="weight_cap", M=cap)
    elif name == "combined":
        if K < 1 or cap < 1:
            raise ConfigError("policy=combined needs K >= 1 and weight_cap >= 1")
        policy = TruncationPolicy(kind="combined", K=K, M=cap)
    else:
        raise ConfigError(f"unknown policy {name!r} (exact|bucket|weight|combined)")
    return policy, K, buckets, cap


def _resolve_observable(spec: str, L: int) -> tuple[str, PauliSum | None]:
    """Returns ("staggered", None) or ("single", observable sum)."""
    if spec == "staggered":
        return "staggered", None
    if spec.startswith("z:"):
        try:
            site = int(spec[2:])
        except ValueError:
            raise ConfigError(f"bad observable {spec!r}") from None
        if not (0 <= site < L):
            raise ConfigError(f"observable site {site} outside 0..{L - 1}")
        return "single", PauliSum.from_terms(L, [(PauliWord.single(L, site, "Z"), 1.0)])
    if re.fullmatch(r"[IXYZ]+", spec):
        if len(spec) != L:
            raise ConfigError(f"observable string length {len(spec)} != L={L}")
        word = PauliWord.from_string(spec)
        if word.is_identity():
            raise ConfigError("observable must not be the identity")
        return "single", PauliSum.from_terms(L, [(word, 1.0)])
    raise ConfigError(f"bad observable {spec!r} (staggered | z:<site> | Pauli string)")


def parse_config(text: str, base_dir: Path) -> SimPlan:
    raw = _parse_kv(text)

    if "hamiltonian_file" in raw:
        for key in _MODEL_KEYS:
            if key in raw:
                raise ConfigError(f"hamiltonian_file replaces the {key!r} key")
        hfile = raw["hamiltonian_file"]
        hpath = Path(hfile)
        if not hpath.is_absolute():
            hpath = base_dir / hpath
        if not hpath.is_file():
            raise ConfigError(f"hamiltonian_file not found: {hpath}")
        H = parse_hamiltonian(hpath.read_text())
        model_echo = {"model": "file"}
    else:
        hfile = None
        model = raw.get("model", "xxz")
        if model != "xxz":
            raise ConfigError(f"unknown model {model!r}")
        L = _get_int(raw, "L")
        H = build_xxz_chain(
            L,
            _get_float(raw, "Jx", 1.0),
            _get_float(raw, "Jy", 1.0),
            _get_float(raw, "Jz", 0.0),
            boundary=raw.get("boundary", "open"),
        )
        model_echo = {
            "model": "xxz",
            "L": str(L),
            "Jx": repr(_get_float(raw, "Jx", 1.0)),
            "Jy": repr(_get_float(raw, "Jy", 1.0)),
            "Jz": repr(_get_float(raw, "Jz", 0.0)),
            "boundary": raw.get("boundary", "open"),
        }
    L = H.n

    t = _get_float(raw, "t")
    if t < 0.0 or not math.isfinite(t):
        raise ConfigError("t must be finite and >= 0")
    N = _resolve_steps(raw, t)
    policy, K, buckets, cap = _resolve_policy(raw)

    observable = raw.get("observable", "staggered")
    mode = raw.get("mode", "joint")
    if mode not in ("joint", "per_site"):
        raise ConfigError(f"mode must be joint or per_site, got {mode!r}")
    if mode == "per_site" and observable != "staggered":
        raise ConfigError("mode=per_site is only defined for observable=staggered")
    _resolve_observable(observable, L)  # validate early

    state_name = raw.get("state", "neel")
    if state_name == "neel":
        state = ProductState.neel(L)
    elif state_name == "up":
        state = ProductState.all_up(L)
    else:
        raise ConfigError(f"unknown state {state_name!r} (neel | up)")

    record_every = _get_int(raw, "record_every", 1)
    snapshot_every = _get_int(raw, "snapshot_every", 0)
    if snapshot_every < 0:
        raise ConfigError("snapshot_every must be >= 0")
    if snapshot_every and mode == "per_site":
        raise ConfigError("snapshots are only written in joint mode")
    seed = _get_int(raw, "seed", 0)
    want_ose = _get_bool(raw, "ose")
    rescale = _get_bool(raw, "rescale_each_step")

    try:
        cfg = RunConfig(
            t=t,
            N=N,
            K=K,
            policy=policy,
            record_every=record_every,
            ose=want_ose,
            rescale_each_step=rescale,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out_dir = Path(raw["out_dir"]) if "out_dir" in raw else None
    if out_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    echo = dict(model_echo)
    echo.update(
        t=repr(t),
        steps=str(N),
        K=str(K),
        policy=raw.get("policy", "exact"),
        buckets=str(buckets),
        weight_cap=str(cap),
        observable=observable,
        mode=mode,
        state=state_name,
        record_every=str(record_every),
        seed=str(seed),
        ose=str(want_ose).lower(),
        rescale_each_step=str(rescale).lower(),
        snapshot_every=str(snapshot_every),
    )
    return SimPlan(
        H=H,
        observable=observable,
        mode=mode,
        state=state,
        cfg=cfg,
        seed=seed,
        out_dir=out_dir if out_dir is not None else Path("."),
        snapshot_every=snapshot_every,
        echo=echo,
        hamiltonian_file=hfile,
    )


# -- output files ----------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def _trajectory_text(plan: SimPlan, records: list[TrajectoryRecord]) -> str:
    lines = [
        f"# schema={TRAJECTORY_SCHEMA}",
        f"# version=pauliprop {__version__}",
        "# config " + " ".join(f"{k}={v}" for k, v in plan.echo.items() if k in plan.echo),
        f"# hamiltonian={plan.H.description or 'from file'}",
        "# term_order=as listed; each step conjugates by exp(-i w_i tau P_i) for i = 1..N_H in order",
    ]
    if plan.hamiltonian_file is not None:
        lines.extend(f"# hterm {line}" for line in format_hamiltonian(plan.H).splitlines())
    cols = "step,time,value,terms,discarded_mass,norm_ratio"
    if plan.cfg.ose:
        cols += ",ose_half,ose_shannon"
    lines.append(cols)
    for r in records:
        row = (
            f"{r.step},{_fmt(r.time)},{_fmt(r.value)},{r.terms},"
            f"{_fmt(r.discarded_mass)},{_fmt(r.norm_ratio)}"
        )
        if plan.cfg.ose:
            row += f",{_fmt(r.ose_half)},{_fmt(r.ose_shannon)}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _dump_operator(path: Path, sum_: PauliSum, step: int, time: float) -> None:
    header = f"# step={step} time={_fmt(time)}\n# sites={sum_.n}\n"
    path.write_text(header + format_operator(sum_))


def cmd_simulate(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    if not config_path.is_file():
        print(f"config file not found: {config_path}", file=sys.stderr)
        return 2
    base_dir = config_path.resolve().parent
    try:
        plan = parse_config(config_path.read_text(), base_dir)
    except (ConfigError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    out_dir = plan.out_dir
    if str(out_dir) == ".":
        out_dir = base_dir / (config_path.stem + "_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    tau = plan.cfg.tau

    def snapshot(step: int, op: PauliSum) -> None:
        _dump_operator(out_dir / f"operator_step{step:06d}.txt", op, step, step * tau)

    snapshot_fn = snapshot if plan.snapshot_every > 0 else None
    try:
        if plan.observable == "staggered":
            result = staggered_magnetization(
                plan.H,
                plan.state,
                plan.cfg,
                mode=plan.mode,
                snapshot_every=plan.snapshot_every,
                snapshot_fn=snapshot_fn,
            )
            records, final_op = result.records, result.operator
        else:
            _, O = _resolve_observable(plan.observable, plan.H.n)
            final_op, records = backpropagate(
                O,
                plan.H,
                plan.cfg,
                state=plan.state,
                snapshot_every=plan.snapshot_every,
                snapshot_fn=snapshot_fn,
            )
    except EngineAbort as exc:
        print(f"engine abort: {exc}", file=sys.stderr)
        return 3

    traj_path = out_dir / "trajectory.csv"
    traj_path.write_text(_trajectory_text(plan, records))
    written = [str(traj_path)]
    if final_op is not None:
        final_path = out_dir / "operator_final.txt"
        _dump_operator(final_path, final_op, plan.cfg.N, plan.cfg.t)
        written.append(str(final_path))
    print(f"wrote {', '.join(written)} ({len(records)} records)")
    return 0


# -- analyze ----------------------------------------------------------------------


def _read_dump(path: Path) -> tuple[PauliSum, float]:
    """Operator dump plus the time recorded in its header (0 when absent)."""
    text = path.read_text()
    time = 0.0
    for line in text.splitlines():
        if line.startswith("#"):
            m = re.search(r"\btime=([^\s]+)", line)
            if m:
                time = float(m.group(1))
        else:
            break
    return parse_operator(text), time


def _write_hist(path: Path, hist: dict[int, float], kind: str, time: float) -> None:
    lines = [f"# schema={HIST_SCHEMA}", f"# kind={kind}", f"# time={_fmt(time)}"]
    lines.append("bucket_lo,bucket_hi,mass")
    for b in sorted(hist):
        if kind == "magnitude":
            lo, hi = 2.0**b, 2.0 ** (b + 1)
        else:
            lo, hi = float(b), float(b + 1)
        lines.append(f"{_fmt(lo)},{_fmt(hi)},{_fmt(hist[b])}")
    path.write_text("\n".join(lines) + "\n")


def _analyze_operator(
    sum_: PauliSum, time: float, alphas: list[float]
) -> list[tuple[float, float, float]]:
    rows = []
    for alpha in alphas:
        rows.append((time, alpha, ose(sum_, alpha).value))
    return rows


def _write_ose_series(path: Path, rows: list[tuple[float, float, float]]) -> None:
    lines = [f"# schema={OSE_SCHEMA}", "time,alpha,value"]
    lines.extend(f"{_fmt(t)},{_fmt(a)},{_fmt(v)}" for t, a, v in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_bounds(
    path: Path,
    entries: list[tuple[float, float]],
    k_list: list[int],
    eps: float,
) -> None:
    lines = [f"# schema={BOUNDS_SCHEMA}", "alpha,S,K,ln_delta_bound,epsilon,K_required"]
    for alpha, S in entries:
        if not (0.0 < alpha < 1.0):
            continue
        try:
            k_req: str = str(k_prescription(S, eps, alpha))
        except OverflowError:
            k_req = "overflow"
        for K in k_list:
            lines.append(
                f"{_fmt(alpha)},{_fmt(S)},{K},{_fmt(delta_bound(S, K, alpha))},"
                f"{_fmt(eps)},{k_req}"
            )
    path.write_text("\n".join(lines) + "\n")


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} must be a comma-separated number list") from None


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} must be a comma-separated integer list") from None


def cmd_analyze(args: argparse.Namespace) -> int:
    src = Path(args.in_path)
    if not src.exists():
        print(f"input not found: {src}", file=sys.stderr)
        return 2
    try:
        alphas = _parse_float_list(args.alpha, "--alpha")
        k_list = _parse_int_list(args.k, "--k")
        eps = float(args.eps)
    except (ConfigError, ValueError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out) if args.out else (src if src.is_dir() else src.parent)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: list[str] = []
    try:
        if src.is_file():
            sum_, time = _read_dump(src)
            stem = src.stem
            ose_rows = _analyze_operator(sum_, time, alphas)
            _write_ose_series(out_dir / f"{stem}_ose.csv", ose_rows)
            mag, wt, _ = distributions(sum_)
            _write_hist(out_dir / f"{stem}_hist_mag.csv", mag, "magnitude", time)
            _write_hist(out_dir / f"{stem}_hist_weight.csv", wt, "weight", time)
            entries = [(a, v) for _, a, v in ose_rows]
            _write_bounds(out_dir / f"{stem}_bounds.csv", entries, k_list, eps)
            written = [f"{stem}_{nm}.csv" for nm in ("ose", "hist_mag", "hist_weight", "bounds")]
        else:
            written = _analyze_run_dir(src, out_dir, alphas, k_list, eps)
    except (ConfigError, ValueError) as exc:
        print(f"analyze failed: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def _analyze_run_dir(
    src: Path, out_dir: Path, alphas: list[float], k_list: list[int], eps: float
) -> list[str]:
    written: list[str] = []
    traj = src / "trajectory.csv"
    if traj.is_file():
        times, terms = _growth_from_trajectory(traj.read_text())
        lines = [f"# schema={GROWTH_SCHEMA}", "time,terms"]
        lines.extend(f"{_fmt(t)},{n}" for t, n in zip(times, terms))
        (out_dir / "growth.csv").write_text("\n".join(lines) + "\n")
        written.append("growth.csv")

    snapshots = sorted(src.glob("operator_step*.txt"))
    final = src / "operator_final.txt"
    ose_rows: list[tuple[float, float, float]] = []
    for snap in snapshots:
        sum_, time = _read_dump(snap)
        ose_rows.extend(_analyze_operator(sum_, time, alphas))
        step_tag = snap.stem.removeprefix("operator_")
        mag, wt, _ = distributions(sum_)
        _write_hist(out_dir / f"hist_mag_{step_tag}.csv", mag, "magnitude", time)
        _write_hist(out_dir / f"hist_weight_{step_tag}.csv", wt, "weight", time)
        written.extend([f"hist_mag_{step_tag}.csv", f"hist_weight_{step_tag}.csv"])
    if ose_rows:
        _write_ose_series(out_dir / "ose_series.csv", ose_rows)
        written.append("ose_series.csv")

    if final.is_file():
        sum_, time = _read_dump(final)
        entries = [(a, ose(sum_, a).value) for a in alphas]
        _write_bounds(out_dir / "bounds.csv", entries, k_list, eps)
        written.append("bounds.csv")
    if not written:
        raise ConfigError(f"nothing to analyze in {src} (no trajectory.csv or dumps)")
    return written


def _growth_from_trajectory(text: str) -> tuple[list[float], list[int]]:
    times: list[float] = []
    terms: list[int] = []
    header: list[str] | None = None
    for line in text.splitlines():
        if line.startswith("#") or not line.strip():
            continue
        parts = line.split(",")
        if header is None:
            header = parts
            if "time" not in header or "terms" not in header:
                raise ConfigError("trajectory.csv lacks time/terms columns")
            continue
        times.append(float(parts[header.index("time")]))
        terms.append(int(parts[header.index("terms")]))
    if header is None:
        raise ConfigError("trajectory.csv holds no rows")
    return times, terms


# -- verify / bound ----------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    if args.suite == "all":
        names = list(SUITES)
    elif args.suite in SUITES:
        names = [args.suite]
    else:
        print(
            f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)} or all",
            file=sys.stderr,
        )
        return 2
    results = run_suites(names, seed=args.seed)
    for res in results:
        print("\n".join(res.lines()))
    return 0 if all(r.ok for r in results) else 1


def cmd_bound(args: argparse.Namespace) -> int:
    try:
        S = float(args.s)
        eps = float(args.eps)
        alpha = float(args.alpha)
        print(f"S={_fmt(S)} epsilon={_fmt(eps)} alpha={_fmt(alpha)}")
        try:
            K = k_prescription(S, eps, alpha)
        except OverflowError as exc:
            print(f"K_required=overflow ({exc})")
            return 0
        ln_bound = delta_bound(S, K, alpha)
        print(f"K_required={K}")
        print(f"ln_delta_bound={_fmt(ln_bound)}")
        print(f"delta_bound={_fmt(math.exp(ln_bound))}")
        print(f"eps_sq_half={_fmt(eps * eps / 2.0)}")
    except ValueError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return 2
    return 0


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pauliprop",
        description="Sparse Pauli back-propagation for spin chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment from a config file")
    p.add_argument("--config", required=True, help="key=value config file")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("analyze", help="entropy series, bounds, and histograms")
    p.add_argument("--in", dest="in_path", required=True, help="run directory or operator dump")
    p.add_argument("--alpha", default="0.5,1", help="comma-separated entropy orders")
    p.add_argument("--k", default="1,4,16,64,256,1024,4096", help="comma-separated budgets")
    p.add_argument("--eps", default="0.001", help="target error for the budget prescription")
    p.add_argument("--out", default=None, help="output directory (default: input dir)")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("--suite", required=True, help=f"{', '.join(SUITES)}, or all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bound", help="budget prescription for a target error")
    p.add_argument("--s", required=True, help="entropy value (nats)")
    p.add_argument("--eps", required=True, help="target expectation error")
    p.add_argument("--alpha", required=True, help="entropy order in (0, 1)")
    p.set_defaults(fn=cmd_bound)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
