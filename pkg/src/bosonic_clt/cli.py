"""Command-line front end: ``bosonic-clt gaussify|converge|capacity|demo``.

Exit codes: 0 success, 1 numerical failure, 2 invalid input,
3 physicality-certificate failure, 4 convergence-threshold miss.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis
from .channels import (
    ChannelSpecError,
    additive_noise_channel,
    channel_from_spec,
    dephasing_channel,
    pure_loss,
    replacement_channel,
    two_point_noise,
    von_mises,
)
from .convolution import KrausExplosion, no_signalling_defect, product_preservation_defect
from .fock import (
    DimensionMismatch,
    FockSpaceConfig,
    NotAStateError,
    coherent_state,
    fock_state,
    thermal_state,
)
from .gaussification import NotCenteredError, UnphysicalCovariance, extract_moments, extract_xy, uncertainty_certificate

log = logging.getLogger("bosonic_clt")

EXIT_OK, EXIT_NUMERICAL, EXIT_INVALID, EXIT_CERTIFICATE, EXIT_THRESHOLD = 0, 1, 2, 3, 4

COMMANDS = ("gaussify", "converge", "capacity", "demo")
DEMOS = ("classical-clt", "cushen-hudson", "no-signalling", "kac-bernstein")
FORMATS = ("json", "csv", "both")


class InvalidInput(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated inputs of one CLI invocation."""

    command: str
    spec: dict | None = None
    spec_dir: str | None = None
    cutoff: int | None = None
    alphas: list = field(default_factory=lambda: [1.0])
    k_max: int = 7
    channel_check_k: int = 3
    z_axis: list = field(default_factory=lambda: list(analysis.GRID_AXIS))
    threshold: float = 0.05
    certificate_tol: float = 1e-8
    energy: float | None = None
    out: str | None = None
    fmt: str = "json"
    demo: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidInput(f"unknown run-config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise InvalidInput(f"unknown command {self.command!r}")
        if self.command in ("gaussify", "converge") and self.spec is None:
            raise InvalidInput(f"{self.command} needs --spec")
        if self.command == "demo" and self.demo not in DEMOS:
            raise InvalidInput(f"unknown demo {self.demo!r}; choose from {', '.join(DEMOS)}")
        if self.spec is not None and not isinstance(self.spec, dict):
            raise InvalidInput("channel spec must be a JSON object")
        if self.cutoff is not None and not 2 <= int(self.cutoff) <= 64:
            raise InvalidInput("cutoff must be in [2, 64]")
        if not 0 <= int(self.k_max) <= 10:
            raise InvalidInput("kmax must be in [0, 10]")
        if not 0 <= int(self.channel_check_k) <= 3:
            raise InvalidInput("channel check depth must be in [0, 3]")
        if self.fmt not in FORMATS:
            raise InvalidInput(f"format must be one of {FORMATS}")
        if not self.alphas:
            raise InvalidInput("at least one alpha is required")
        self.alphas = [complex(a) for a in self.alphas]
        self.z_axis = [float(v) for v in self.z_axis]
        if not self.z_axis:
            raise InvalidInput("z-grid axis is empty")
        if not (self.threshold > 0 and self.certificate_tol >= 0):
            raise InvalidInput("threshold must be positive and tolerances non-negative")
        if self.energy is not None and self.energy < 0:
            raise InvalidInput("energy must be non-negative")

    def channel(self):
        base = Path(self.spec_dir) if self.spec_dir else None
        return channel_from_spec(self.spec, cutoff=self.cutoff, base_dir=base)

    @property
    def z_grid(self) -> np.ndarray:
        return analysis.default_z_grid(self.z_axis)


def _parse_complex_list(text: str) -> list[complex]:
    try:
        return [complex(t.strip().replace(" ", "")) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad complex list {text!r}") from exc


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _load_spec(text: str) -> tuple[dict, str | None]:
    """``--spec`` takes a path to a JSON file or an inline JSON object."""
    if text.lstrip().startswith("{"):
        return json.loads(text), None
    path = Path(text)
    return json.loads(path.read_text()), str(path.parent)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bosonic-clt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec_required):
        p.add_argument("--spec", required=spec_required, help="channel spec JSON file or inline JSON object")
        p.add_argument("--cutoff", type=int, help="Fock cutoff d (overrides the channel spec)")
        p.add_argument("--out", help="output directory; reports go to stdout when omitted")
        p.add_argument("--format", dest="fmt", choices=FORMATS, default="json")

    p = sub.add_parser("gaussify", help="print X, Y, moment data and the uncertainty certificate")
    common(p, True)
    p.add_argument("--tol", dest="certificate_tol", type=float, default=1e-8)

    p = sub.add_parser("converge", help="distance of N^{boxplus 2^k}(|alpha><alpha|) to its Gaussification")
    common(p, True)
    p.add_argument("--alpha", dest="alphas", type=_parse_complex_list, default=[1.0])
    p.add_argument("--kmax", dest="k_max", type=int, default=7)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--check-k", dest="channel_check_k", type=int, default=3,
                   help="run the Kraus-level cross-check up to this k")
    p.add_argument("--z-axis", dest="z_axis", type=_parse_float_list, default=list(analysis.GRID_AXIS))

    p = sub.add_parser("capacity", help="capacity formulas and coherent-information samples")
    common(p, True)
    p.add_argument("--energy", type=float, help="also sample coherent information at this mean photon number")
    p.add_argument("--kmax", dest="k_max", type=int, default=2)

    p = sub.add_parser("demo", help="canned experiments")
    p.add_argument("demo", help="|".join(DEMOS))
    p.add_argument("--cutoff", type=int)
    p.add_argument("--kmax", dest="k_max", type=int)
    p.add_argument("--out")
    p.add_argument("--format", dest="fmt", choices=FORMATS, default="json")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {k: v for k, v in vars(args).items() if k not in ("verbose",) and v is not None}
    if "spec" in data:
        try:
            data["spec"], data["spec_dir"] = _load_spec(data["spec"])
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"cannot read spec: {exc}") from exc
    if data.get("command") == "demo" and "k_max" not in data:
        data["k_max"] = {"classical-clt": 8, "cushen-hudson": 7}.get(data.get("demo"), 0)
    return RunConfig.from_dict(data)


def _emit(cfg: RunConfig, name: str, json_text: str, csv_text: str | None = None) -> None:
    if cfg.out is None:
        if cfg.fmt in ("json", "both"):
            sys.stdout.write(json_text + "\n")
        if cfg.fmt in ("csv", "both") and csv_text is not None:
            sys.stdout.write(csv_text)
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.fmt in ("json", "both"):
        (out / f"{name}.json").write_text(json_text + "\n")
    if cfg.fmt in ("csv", "both") and csv_text is not None:
        (out / f"{name}.csv").write_text(csv_text)
    log.info("wrote %s reports to %s", name, out)


def _summary(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_gaussify(cfg: RunConfig) -> int:
    channel = cfg.channel()
    params = extract_xy(channel)
    md = extract_moments(channel)
    min_eig, ok = uncertainty_certificate(params, cfg.certificate_tol)
    doc = {
        "label": channel.label,
        "cutoff": channel.config.cutoff,
        "X": params.X,
        "Y": params.Y,
        "centered_defect": params.centered_defect,
        "moments": {"t": md.t, "s": md.s, "G": md.G, "H": md.H, "V": md.V, "mean_defect": md.mean_defect},
        "certificate": {"min_eigenvalue": min_eig, "physical": ok, "tol": cfg.certificate_tol},
    }
    _emit(cfg, "gaussify", analysis.dumps(doc))
    _summary(f"{channel.label}: certificate min eigenvalue {min_eig:.3e} ({'physical' if ok else 'UNPHYSICAL'})")
    return EXIT_OK if ok else EXIT_CERTIFICATE


def cmd_converge(cfg: RunConfig) -> int:
    channel = cfg.channel()
    reports = [
        analysis.convergence_study(channel, a, cfg.k_max, cfg.z_grid, min(cfg.channel_check_k, cfg.k_max))
        for a in cfg.alphas
    ]
    doc = {"threshold": cfg.threshold, "reports": [r.to_dict() for r in reports]}
    csv_text = "".join(
        (f"# alpha={a.real!r}{a.imag:+.17g}j\n" if len(reports) > 1 else "") + r.to_csv()
        for a, r in zip(cfg.alphas, reports)
    )
    _emit(cfg, "converge", analysis.dumps(doc), csv_text)
    worst = max(r.rows[-1]["trace_distance"] for r in reports)
    _summary(f"{channel.label}: final trace distance {worst:.3e} (threshold {cfg.threshold:g})")
    return EXIT_OK if worst < cfg.threshold else EXIT_THRESHOLD


def cmd_capacity(cfg: RunConfig) -> int:
    channel = cfg.channel()
    kind = cfg.spec["type"]
    if kind == "dephasing":
        report = analysis.capacity_comparison(channel.meta["angular"])
    elif kind == "pure_loss":
        lam = float(cfg.spec["lambda"])
        report = analysis.CapacityReport(channel.label, gaussification_lambda=lam,
                                         pure_loss_capacity=analysis.pure_loss_capacity(lam))
    elif cfg.energy is None:
        raise InvalidInput("capacity needs a dephasing or pure_loss spec, or --energy for coherent-information samples")
    else:
        report = analysis.CapacityReport(channel.label)
    if cfg.energy is not None:
        q = analysis.q_lower_bound_experiment(channel, cfg.energy, range(cfg.k_max + 1))
        report.samples = q.samples
        report.extra.update(q.extra)
    _emit(cfg, "capacity", report.to_json(), report.to_csv())
    _summary(
        f"{report.label}: dephasing capacity {report.dephasing_capacity}, "
        f"pure-loss capacity {report.pure_loss_capacity}, gap sign {report.gap_sign}"
    )
    return EXIT_OK


def cmd_demo(cfg: RunConfig) -> int:
    name = cfg.demo
    if name == "classical-clt":
        report = analysis.classical_clt_demo(two_point_noise(0.5), cfg.k_max, cfg.z_grid,
                                             config=FockSpaceConfig(cfg.cutoff or 20))
        _emit(cfg, "classical-clt", report.to_json(), report.to_csv())
        dev = report.column("char_sup_dev")
        decreasing = bool(np.all(np.diff(dev) < 0))
        _summary(f"classical CLT: final deviation {dev[-1]:.3e}, decreasing={decreasing}")
        return EXIT_OK if decreasing else EXIT_THRESHOLD
    if name == "cushen-hudson":
        cfg_f = FockSpaceConfig(cfg.cutoff or 24)
        channel = replacement_channel(fock_state(1, cfg_f))
        report = analysis.convergence_study(channel, 0.0, cfg.k_max, cfg.z_grid, min(cfg.channel_check_k, cfg.k_max))
        _emit(cfg, "cushen-hudson", report.to_json(), report.to_csv())
        _summary(f"|1><1| self-convolution: final distance to thermal(nu=3) {report.rows[-1]['trace_distance']:.3e}")
        return EXIT_OK
    if name == "no-signalling":
        d = FockSpaceConfig(cfg.cutoff or 20)
        probes = [fock_state(0, d), coherent_state(0.7, d), thermal_state(0.5, d)]
        additive = no_signalling_defect(additive_noise_channel(two_point_noise(0.5), d), probes)
        deph = no_signalling_defect(dephasing_channel(von_mises(2.0), d), probes)
        doc = {"cutoff": d.cutoff, "additive_noise_defect": additive, "dephasing_defect": deph}
        _emit(cfg, "no-signalling", analysis.dumps(doc))
        _summary(f"no-signalling defect: additive noise {additive:.3e}, dephasing {deph:.3e}")
        return EXIT_OK if additive < 1e-8 else EXIT_THRESHOLD
    d = FockSpaceConfig(cfg.cutoff or 12)
    loss = pure_loss(0.6, d)
    gaussian_mi = product_preservation_defect(loss, coherent_state(0.6, d), coherent_state(-0.3j, d))
    dephasing_mi = product_preservation_defect(dephasing_channel(von_mises(2.0), d), coherent_state(1.0, d),
                                               fock_state(0, d))
    doc = {"cutoff": d.cutoff, "pure_loss_mutual_information": gaussian_mi,
           "dephasing_mutual_information": dephasing_mi}
    _emit(cfg, "kac-bernstein", analysis.dumps(doc))
    _summary(f"output mutual information: pure loss {gaussian_mi:.3e}, dephasing {dephasing_mi:.3e}")
    return EXIT_OK


HANDLERS = {"gaussify": cmd_gaussify, "converge": cmd_converge, "capacity": cmd_capacity, "demo": cmd_demo}


def _thread_limit():
    value = os.environ.get("BOSONIC_CLT_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        return threadpool_limits(limits=max(1, int(value)))
    except ValueError as exc:
        raise InvalidInput(f"BOSONIC_CLT_THREADS must be an integer, got {value!r}") from exc


def run(cfg: RunConfig) -> int:
    with _thread_limit():
        return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(config_from_args(args))
    except (InvalidInput, ChannelSpecError, NotCenteredError, analysis.NonlinearChannelError,
            NotAStateError, DimensionMismatch, UnphysicalCovariance, TypeError, ValueError) as exc:
        # numpy's LinAlgError subclasses ValueError; keep it on the numerical path
        if isinstance(exc, np.linalg.LinAlgError):
            _summary(f"error: numerical failure: {exc}")
            return EXIT_NUMERICAL
        _summary(f"error: {exc}")
        return EXIT_INVALID
    except (KrausExplosion, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        _summary(f"error: numerical failure: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
