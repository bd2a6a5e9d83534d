import abc
import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, NoReturn, Optional, Sequence

import numpy as np

from pfcert.acpf import OperationalLimits
from pfcert.certify import (
    CertResult,
    DeltaResult,
    GammaResult,
    certify_region,
    check_jacobian,
    interval_table,
    maximize_delta,
    maximize_gamma,
    operating_point,
)
from pfcert.conic import (
    BACKENDS,
    Infeasible,
    Unknown,
    certificate_from_json,
    certificate_to_json,
    export_problem,
    verify_certificate,
)
from pfcert.config import CENTER_SOURCES, SHAPE_SOURCES, RunConfig
from pfcert.constants import (
    EPS_PSD,
    EPS_RES,
    EXIT_INPUT_ERROR,
    EXIT_NOT_CERTIFIED,
    EXIT_OK,
    EXIT_UNKNOWN,
    IPM_MAX_ITERS,
    REPORT_SCHEMA_VERSION,
    SCS_MAX_ITERS,
    VALIDATION_SCHEMA_VERSION,
)
from pfcert.exceptions import (
    CaseParseError,
    CertificationError,
    ModelError,
    PreconditionError,
    RelaxationError,
)
from pfcert.moment import problem_from_json, relax
from pfcert.netmodel import Network, resolve_case, to_json
from pfcert.oracle import check_containment, map_feasible_set
from pfcert.poly import build_jacobian_system
from pfcert.region import RegionKind, RegionSpec
from pfcert.util import canonical_json, sha256_of, syncrun
from pfcert.validate import monte_carlo_soundness, ode_validate

DEFAULT_ENV_PREFIX = "PFCERT"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

logger = logging.getLogger(__name__)


def printe(*args, **kwargs) -> None:
    print(*args, file=sys.stderr, **kwargs)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(payload) + "\n")


def _read_json(path: Path, what: str) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"{what} not found: '{path}'") from None
    except json.JSONDecodeError as e:
        raise PreconditionError(f"{what} '{path}' is not valid JSON: {e}") from e


def v_band_type(val: str) -> tuple[float, float]:
    try:
        lo, hi = (float(part) for part in val.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LOW,HIGH") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("LOW must be below HIGH")
    return lo, hi


def positive_float(val: str) -> float:
    number = float(val)
    if not number > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return number


def non_negative_int(val: str) -> int:
    number = int(val)
    if number < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return number


class Arguments:
    env_prefix: str = DEFAULT_ENV_PREFIX

    @classmethod
    def case(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--case",
            required=True,
            help="MATPOWER or native JSON case file, or a bundled case name",
        )

    @classmethod
    def limits(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--flow-limit",
            type=positive_float,
            help="uniform bound on |V_i - V_j| for every branch (default: none)",
        )
        parser.add_argument(
            "--v-band",
            type=v_band_type,
            metavar="LOW,HIGH",
            help="voltage magnitude band for PQ buses (default: from the case)",
        )
        parser.add_argument(
            "--no-generator-limits",
            dest="generator_limits",
            action="store_false",
            default=None,
            help="ignore generator reactive and slack active power limits",
        )

    @classmethod
    def gamma(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--gamma-floor",
            type=positive_float,
            help="smallest acceptable branch voltage-difference bound (default: 0.05)",
        )
        parser.add_argument(
            "--gamma-max",
            type=positive_float,
            help="upper end of the gamma bisection bracket (default: 2.0)",
        )
        parser.add_argument(
            "--gamma",
            type=positive_float,
            help="use this gamma instead of maximizing it",
        )

    @classmethod
    def region(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--region",
            choices=[kind.value for kind in RegionKind],
            help="region shape (default: box)",
        )
        parser.add_argument(
            "--center",
            choices=CENTER_SOURCES,
            help="region center source (default: nominal)",
        )
        parser.add_argument(
            "--shape",
            choices=SHAPE_SOURCES,
            help="widths or ellipsoid shape source (default: uniform)",
        )
        parser.add_argument(
            "--fit-samples",
            type=non_negative_int,
            help="voltage profiles drawn by the box-fitting heuristic (default: 10000)",
        )
        parser.add_argument(
            "--angle-spread",
            type=positive_float,
            help="angle half-width for the box-fitting heuristic (default: 0.5)",
        )
        parser.add_argument(
            "--delta-max",
            type=positive_float,
            help="upper end of the region scale bisection (default: 1.0)",
        )
        parser.add_argument(
            "--delta",
            type=positive_float,
            help="certify this region scale instead of maximizing it",
        )

    @classmethod
    def solver(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--backend",
            choices=BACKENDS,
            help="conic solver backend (default: auto)",
        )
        parser.add_argument(
            "--ipm-max-iters",
            action=EnvDefault,
            envvars=(f"{cls.env_prefix}_IPM_MAX_ITERS",),
            default=IPM_MAX_ITERS,
            type=int,
            help="interior point iteration cap",
        )
        parser.add_argument(
            "--scs-max-iters",
            action=EnvDefault,
            envvars=(f"{cls.env_prefix}_SCS_MAX_ITERS",),
            default=SCS_MAX_ITERS,
            type=int,
            help="operator splitting iteration cap",
        )
        parser.add_argument(
            "--external-solver",
            metavar="COMMAND",
            help="executable for the external backend",
        )

    @classmethod
    def run(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--tol",
            type=positive_float,
            help="bisection tolerance (default: 1e-3)",
        )
        parser.add_argument("--seed", type=int, help="random seed (default: 0)")
        parser.add_argument(
            "--jobs",
            type=int,
            help="worker processes for per-constraint solves (default: 1)",
        )
        parser.add_argument(
            "--mc-samples",
            type=non_negative_int,
            help="Monte-Carlo soundness samples per certified region (default: 100)",
        )

    @classmethod
    def out(
        cls, parser: argparse.ArgumentParser, default: Optional[str] = None
    ) -> None:
        parser.add_argument(
            "--out",
            type=Path,
            default=default,
            help="output directory" + (f" (default: {default})" if default else ""),
        )


class EnvDefault(argparse.Action):
    def __init__(
        self,
        envvars: Sequence[str],
        required: bool = True,
        default: Optional[Any] = None,
        help: str = "",
        supress_help_modification: bool = False,
        **kwargs,
    ) -> None:
        # required unless a default or an env var supplies the value
        if default:
            required = False

        if not supress_help_modification:
            extra: list[str] = []

            if required:
                extra.append("required")

            if default:
                extra.append(f"default: '{default}'")

            envstr = ",".join([f"${v}" for v in envvars])
            extra.append(f"env: {envstr}")

            newline = "\n" if help else ""

            help += f"{newline}({'; '.join(extra)})"

        for envvar in envvars:
            envval = os.getenv(envvar)

            if envval is not None:
                default = envval
                required = False
                break

        if default:
            required = False

        super().__init__(
            default=default,
            required=required,
            help=help,
            **kwargs,
        )

    def __call__(
        self,
        parser: argparse.ArgumentParser,
        namespace: argparse.Namespace,
        values,
        option_string: Optional[str] = None,
    ) -> None:
        setattr(namespace, self.dest, values)


class Command(abc.ABC):
    help: str = ""

    @property
    def name(self) -> str:
        return self.__class__.__name__.lower()

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        pass

    def process_args(
        self,
        parser: argparse.ArgumentParser,
        args: argparse.Namespace,
    ) -> None:
        pass

    @abc.abstractmethod
    def __call__(self, args: argparse.Namespace) -> int:
        pass


class PfcertCommand(Command):
    @abc.abstractmethod
    def run(self, args: argparse.Namespace) -> int:
        pass

    def __call__(self, args: argparse.Namespace) -> int:
        try:
            return self.run(args)
        except (
            CaseParseError,
            ModelError,
            RelaxationError,
            FileNotFoundError,
            PreconditionError,
        ) as e:
            printe(f"error: {e}")
            return EXIT_INPUT_ERROR
        except CertificationError as e:
            printe(f"not certified: {e}")
            return EXIT_NOT_CERTIFIED


def _exit_status(result: CertResult) -> int:
    if result.certified:
        return EXIT_OK
    if result.unknown or isinstance(result.jacobian, Unknown):
        return EXIT_UNKNOWN
    return EXIT_NOT_CERTIFIED


def _summary(
    net: Network,
    gamma: GammaResult,
    result: CertResult,
    delta: Optional[DeltaResult],
) -> str:
    lines = [
        f"case: {net.name} ({len(net.buses)} buses, {len(net.edges)} edges)",
        f"gamma: {gamma.gamma:.6g} (jacobian: {gamma.status.outcome})",
        f"region: {result.region.kind.value}, delta {result.delta:.6g}",
        f"certified: {'yes' if result.certified else 'no'}",
    ]
    if result.soundness is not None:
        soundness = result.soundness
        lines.append(
            f"monte-carlo: {soundness.n_samples - soundness.n_failures}"
            f"/{soundness.n_samples} samples strictly feasible"
        )
    if delta is not None and delta.failing is not None:
        failing = delta.failing.failing
        lines.append(
            f"first failure at delta {delta.failing.delta:.6g}: "
            + (f"{failing.label} ({failing.verdict})" if failing else "soundness")
        )
    lines.append("")
    lines.append("constraint verdicts:")
    for verdict in result.verdicts:
        lines.append(f"  {verdict.label}: {verdict.verdict}")
    return "\n".join(lines) + "\n"


class Certify(PfcertCommand):
    help: str = "Certify a region of injections with guaranteed feasible solutions"

    def set_args(
        self,
        parser: argparse.ArgumentParser,
    ) -> None:
        Arguments.case(parser)
        Arguments.limits(parser)
        Arguments.gamma(parser)
        Arguments.region(parser)
        Arguments.solver(parser)
        Arguments.run(parser)
        Arguments.out(parser)
        parser.add_argument(
            "--export-problems",
            action="store_true",
            help="also write every conic problem to the output directory",
        )

    def _gamma(
        self,
        config: RunConfig,
        net: Network,
        lims: OperationalLimits,
    ) -> GammaResult:
        settings = config.solver_settings()
        if config.gamma is None:
            return maximize_gamma(
                net, lims, config.gamma_floor, config.gamma_max, config.tol, settings
            )
        status = check_jacobian(net, lims, config.gamma, settings)
        return GammaResult(config.gamma, status, ((config.gamma, status.outcome),))

    def _write_certificates(
        self,
        out: Path,
        net: Network,
        lims: OperationalLimits,
        gamma: GammaResult,
        result: CertResult,
        export_problems: bool,
    ) -> dict[str, str]:
        written: dict[str, str] = {}
        if isinstance(gamma.status, Infeasible):
            system = build_jacobian_system(net, lims, gamma.gamma)
            problem = export_problem(relax(system))
            name = "jacobian"
            _write_json(
                out / "certificates" / f"{name}.json",
                {
                    **certificate_to_json(gamma.status.certificate),
                    "label": "jacobian",
                    "problem_sha256": sha256_of(problem),
                },
            )
            written[name] = f"certificates/{name}.json"
            if export_problems:
                _write_json(out / "problems" / f"{name}.json", problem)

        for verdict in result.verdicts:
            name = f"constraint-{verdict.index:03d}"
            if verdict.certificate is not None:
                _write_json(
                    out / "certificates" / f"{name}.json",
                    {
                        **certificate_to_json(verdict.certificate),
                        "label": verdict.label,
                        "problem_sha256": verdict.problem_sha256,
                    },
                )
                written[verdict.label] = f"certificates/{name}.json"
            if export_problems and verdict.problem is not None:
                _write_json(out / "problems" / f"{name}.json", verdict.problem)
        return written

    def run(self, args: argparse.Namespace) -> int:
        started = _now()
        config = RunConfig.from_args(args)
        net = config.load_network()
        lims = config.limits(net)
        out = Path(config.out)

        try:
            gamma = self._gamma(config, net, lims)
        except CertificationError as e:
            printe(f"not certified: {e}")
            gamma = e.result
        template = config.region_template(net, lims)

        if not isinstance(gamma.status, Infeasible):
            printe(
                f"Jacobian non-singularity not certified at gamma={gamma.gamma} "
                f"({gamma.status.outcome})"
            )
            result = CertResult(
                gamma=gamma.gamma,
                region=template,
                jacobian=gamma.status,
                verdicts=(),
            )
            return self._finish(
                args, config, net, lims, out, started, gamma, result, None
            )
        logger.info("gamma* = %.6g", gamma.gamma)

        delta: Optional[DeltaResult] = None
        common: dict[str, Any] = dict(
            settings=config.solver_settings(),
            jobs=config.jobs,
            jacobian=gamma.status,
            mc_samples=config.mc_samples,
            seed=config.seed,
            keep_problems=args.export_problems,
        )
        if config.delta is not None:
            result = syncrun(
                certify_region(
                    net, lims, gamma.gamma, template.with_delta(config.delta), **common
                )
            )
        else:
            try:
                delta = syncrun(
                    maximize_delta(
                        net,
                        lims,
                        gamma.gamma,
                        template,
                        config.delta_max,
                        config.tol,
                        **common,
                    )
                )
                result = delta.result
            except CertificationError as e:
                printe(f"not certified: {e}")
                result = e.result

        return self._finish(args, config, net, lims, out, started, gamma, result, delta)

    def _finish(
        self,
        args: argparse.Namespace,
        config: RunConfig,
        net: Network,
        lims: OperationalLimits,
        out: Path,
        started: str,
        gamma: GammaResult,
        result: CertResult,
        delta: Optional[DeltaResult],
    ) -> int:
        """Write the report, summary, intervals and certificates of any outcome."""
        out.mkdir(parents=True, exist_ok=True)
        certificates = self._write_certificates(
            out, net, lims, gamma, result, args.export_problems
        )
        interval_table(net, result.region).to_csv(out / "intervals.csv", index=False)
        (out / "summary.txt").write_text(_summary(net, gamma, result, delta))

        from pfcert.version import __version__

        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "version": __version__,
            "config": config.to_dict(),
            "network_sha256": sha256_of(to_json(net)),
            "gamma": gamma.to_dict(),
            "delta": delta.to_dict() if delta is not None else None,
            "result": result.to_dict(),
            "region": result.region.to_dict(),
            "certified": result.certified,
            "certificates": certificates,
            "timestamps": {"started": started, "finished": _now()},
        }
        _write_json(out / "report.json", report)
        logger.info("report written to %s", out / "report.json")

        print(_summary(net, gamma, result, delta), end="")
        return _exit_status(result)


def _axis_index(net: Network, value: str) -> int:
    labels = net.injection_labels()
    if value in labels:
        return labels.index(value)
    try:
        return int(value)
    except ValueError:
        raise ModelError(
            f"unknown injection '{value}' (one of {', '.join(labels)})"
        ) from None


class Map(PfcertCommand):
    help: str = "Brute-force map of strictly feasible injections over a grid"

    def set_args(
        self,
        parser: argparse.ArgumentParser,
    ) -> None:
        Arguments.case(parser)
        Arguments.limits(parser)
        Arguments.out(parser, default="pfcert-map")
        parser.add_argument(
            "--axes",
            nargs="+",
            required=True,
            metavar="INJECTION",
            help="one or two injection labels such as 'p(2)', or vector indices",
        )
        parser.add_argument(
            "--range",
            nargs=2,
            type=float,
            action="append",
            required=True,
            dest="ranges",
            metavar=("LOW", "HIGH"),
            help="grid range, once per axis",
        )
        parser.add_argument(
            "--resolution", type=non_negative_int, default=50, help="cells per axis"
        )
        parser.add_argument(
            "--base",
            type=lambda x: [float(v) for v in x.split(",")],
            help="comma-separated injection vector for the other coordinates",
        )
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--jobs", type=int, default=1)
        parser.add_argument(
            "--check-report",
            type=Path,
            help="check that the region of this certify report is strictly feasible",
        )

    def run(self, args: argparse.Namespace) -> int:
        config = RunConfig(
            case=args.case,
            flow_limit=args.flow_limit,
            v_band=args.v_band,
            generator_limits=args.generator_limits is not False,
        )
        net = config.load_network()
        lims = config.limits(net)
        axes = [_axis_index(net, axis) for axis in args.axes]

        region = None
        if args.check_report is not None:
            report = _read_json(args.check_report, "report")
            region = RegionSpec.from_dict(report["region"])
            if region.dim != net.k:
                raise PreconditionError(
                    f"report region has dimension {region.dim}, case has {net.k}"
                )

        base = args.base
        if base is None and region is not None:
            base = region.center
        if base is not None and len(base) != net.k:
            raise ModelError(f"--base needs {net.k} values, got {len(base)}")

        fmap = syncrun(
            map_feasible_set(
                net,
                lims,
                axes,
                [tuple(r) for r in args.ranges],
                args.resolution,
                base=None if base is None else np.asarray(base, dtype=float),
                seed=args.seed,
                jobs=args.jobs,
            )
        )
        args.out.mkdir(parents=True, exist_ok=True)
        fmap.to_csv(args.out / "map.csv")
        print(f"map written to {args.out / 'map.csv'}")

        if region is None:
            return EXIT_OK

        containment = check_containment(fmap, region)
        _write_json(args.out / "containment.json", containment.to_dict())
        print(
            f"{containment.n_inside} cells inside the region, "
            f"{len(containment.violated)} not strictly feasible"
        )
        return EXIT_OK if containment.contained else EXIT_NOT_CERTIFIED


class Validate(PfcertCommand):
    help: str = "Sample a certified region and integrate the power flow ODE into it"

    def set_args(
        self,
        parser: argparse.ArgumentParser,
    ) -> None:
        parser.add_argument(
            "--report", type=Path, required=True, help="report.json from certify"
        )
        parser.add_argument(
            "--samples",
            type=non_negative_int,
            default=500,
            help="Monte-Carlo samples",
        )
        parser.add_argument(
            "--ode-targets",
            type=non_negative_int,
            default=20,
            help="sampled targets for the ODE decay check",
        )
        Arguments.out(parser)

    def run(self, args: argparse.Namespace) -> int:
        report = _read_json(args.report, "report")
        try:
            config = RunConfig.from_dict(report["config"])
            region = RegionSpec.from_dict(report["region"])
            gamma = float(report["gamma"]["gamma"])
        except (KeyError, TypeError) as e:
            raise PreconditionError(f"report is missing {e}") from e

        net = config.load_network()
        lims = config.limits(net).with_gamma(gamma)
        V0, _ = operating_point(net, lims, region.center)

        soundness = monte_carlo_soundness(
            net, lims, region, V0, n_samples=args.samples, seed=config.seed
        )

        rng = np.random.default_rng([config.seed, 1])
        odes = [
            ode_validate(net, region.center, V0, target, lims=lims, region=region)
            for target in region.sample(rng, args.ode_targets)
        ]
        contradictions = sum(ode.contradiction for ode in odes)
        decay_ok = all(ode.decay_ok() for ode in odes)

        out = args.out or args.report.parent
        _write_json(
            Path(out) / "validation.json",
            {
                "schema_version": VALIDATION_SCHEMA_VERSION,
                "report_certified": bool(report.get("certified")),
                "monte_carlo": soundness.to_dict(),
                "ode": [ode.to_dict() for ode in odes],
                "ode_contradictions": contradictions,
                "ode_decay_ok": decay_ok,
            },
        )

        if soundness.vacuous:
            print("monte-carlo: no samples drawn (vacuous pass)")
        else:
            print(
                f"monte-carlo: {soundness.n_samples - soundness.n_failures}"
                f"/{soundness.n_samples} samples strictly feasible"
            )
        print(
            f"ode: {len(odes)} targets, {contradictions} singular inside the region, "
            f"decay {'ok' if decay_ok else 'off'}"
        )
        if not soundness.passed or contradictions:
            return EXIT_NOT_CERTIFIED
        return EXIT_OK


class VerifyCertificate(PfcertCommand):
    help: str = "Re-verify a stored infeasibility certificate against its problem"
    name: str = "verify-certificate"

    def set_args(
        self,
        parser: argparse.ArgumentParser,
    ) -> None:
        parser.add_argument("problem", type=Path, help="exported problem JSON")
        parser.add_argument("certificate", type=Path, help="certificate JSON")
        parser.add_argument("--eps-res", type=positive_float, default=EPS_RES)
        parser.add_argument("--eps-psd", type=positive_float, default=EPS_PSD)

    def run(self, args: argparse.Namespace) -> int:
        try:
            text = args.problem.read_text()
        except FileNotFoundError:
            raise FileNotFoundError(f"problem not found: '{args.problem}'") from None
        payload = _read_json(args.certificate, "certificate")

        expected = payload.get("problem_sha256")
        if expected is not None and expected != sha256_of(json.loads(text)):
            printe("certificate was issued for a different problem")
            return EXIT_NOT_CERTIFIED

        prob = problem_from_json(text)
        cert = certificate_from_json(payload)
        if verify_certificate(prob, cert, eps_psd=args.eps_psd, eps_res=args.eps_res):
            print("certificate valid")
            return EXIT_OK
        printe("certificate invalid")
        return EXIT_NOT_CERTIFIED


class Convert(PfcertCommand):
    help: str = "Convert a case to the native JSON network format"

    def set_args(
        self,
        parser: argparse.ArgumentParser,
    ) -> None:
        parser.add_argument("case", help="case file or bundled case name")
        parser.add_argument(
            "--flow-limit", type=positive_float, help="uniform branch bound"
        )
        parser.add_argument("-o", "--output", type=Path, help="(default: stdout)")

    def run(self, args: argparse.Namespace) -> int:
        text = to_json(resolve_case(args.case, flow_limit=args.flow_limit))
        if args.output is None:
            print(text)
        else:
            args.output.write_text(text + "\n")
        return EXIT_OK


class Version(PfcertCommand):
    help: str = "Print the cli version"

    def run(self, args: argparse.Namespace) -> int:
        from pfcert.version import __version__

        print(f"pfcert version: {__version__}")
        return EXIT_OK


class CLI(abc.ABC):
    def __init__(
        self,
        prog: str,
        description: str,
    ) -> None:
        self.parser = argparse.ArgumentParser(
            prog=prog,
            description=description,
            formatter_class=argparse.RawTextHelpFormatter,
        )
        self.parser.add_argument(
            "--log-level",
            choices=LOG_LEVELS,
            default="WARNING",
            help="(default: WARNING)",
        )
        self._subparsers = self.parser.add_subparsers(
            title="commands",
            dest="command",
        )
        self._subparsers.metavar = "[command]"

    def add_command(self, command: Command) -> None:
        parser = self._subparsers.add_parser(
            command.name,
            help=getattr(command, "help", None),
            aliases=getattr(command, "aliases", []),
        )
        command.set_args(parser)
        parser.set_defaults(_cmd=command)

    def _process_args(
        self,
        argv: Optional[Sequence[str]] = None,
    ) -> argparse.Namespace:
        args: argparse.Namespace = self.parser.parse_args(argv)

        if args.command is None:
            printe("error: command required")
            self.parser.print_help()
            sys.exit(2)

        self.process_args(args)
        args._cmd.process_args(self.parser, args)
        return args

    def process_args(self, args: argparse.Namespace) -> None:
        pass

    def __call__(self, argv: Optional[Sequence[str]] = None) -> NoReturn:
        args = self._process_args(argv)
        sys.exit(args._cmd(args))


class PfcertCLI(CLI):
    commands: dict[str, PfcertCommand] = {
        cmd.name: cmd
        for cmd in (
            Certify(),
            Map(),
            Validate(),
            VerifyCertificate(),
            Convert(),
            Version(),
        )
    }

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        for cmd in PfcertCLI.commands.values():
            self.add_command(cmd)

    def process_args(self, args: argparse.Namespace) -> None:
        logging.basicConfig(
            level=getattr(logging, args.log_level),
            format="%(levelname)s %(name)s: %(message)s",
        )


def get_cli() -> PfcertCLI:
    return PfcertCLI(
        prog="pfcert",
        description="Certified feasibility regions for AC power flow.",
    )
