"""
Command line for boundary-dynamics computations.

    python backend/cli.py [global options] <command> [options]

Every command prints JSON (or CSV) to stdout, or writes it to --out
together with <out>.invocation.json, from which `replay` reruns it.
Exit codes: 0 success, 1 malformed input, 2 domain error, 3 numerical
failure.
"""

import csv
import io
import json
import logging
import sys
from contextvars import ContextVar
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click
import typer
import yaml
from pydantic import ValidationError

from barycenter_service import barycenter_normalize
from boundary_families import F_family, P_family, lambda_iterate
from dynamics_config import get_settings, override_settings
from dynamics_errors import BaseLocusError, DynamicsError, InvalidInputError
from dynamics_models import (
    AtomOut,
    ExperimentConfig,
    FamilySpec,
    InvocationRecord,
    MapOut,
    MapSpec,
    MeasureOut,
    decode_point,
    decode_scalar,
    decode_sphere_measure,
    encode_mass,
    encode_moduli_point,
    encode_point,
    encode_scalar,
    first_error,
)
from logging_setup import configure_logging
from maxent_service import (
    boundary_limit_experiment,
    cross_ratio_witness,
    degree_d_counterexample,
    sample_max_entropy,
)
from measure_service import boundary_measure, mass_at
from moduli_service import (
    ROOT_OF_UNITY_SEARCH,
    DiskKind,
    classify_limit,
    indeterminacy_set,
    match_indeterminacy,
    mhat_point,
    milnor_point,
    multipliers,
    tau_squared,
)
from poly_parser import parse_homogeneous
from ratbar import iterate
from stability_service import all_iterates_stable, classify

logger = logging.getLogger(__name__)

VERSION = "0.1.0"

app = typer.Typer(
    help="Boundary dynamics of rational maps: degenerations, iterate limits, measures and moduli.",
    no_args_is_help=True,
    add_completion=False,
)

_argv: ContextVar[List[str]] = ContextVar("cli_argv", default=[])


@dataclass
class GlobalOptions:
    out: Optional[Path] = None
    overrides: Dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _load_data(text: str, field_name: str) -> Any:
    """Inline JSON/YAML, or @path / an existing path to a JSON or YAML file"""
    inline = text.lstrip().startswith(("{", "["))
    path = Path(text[1:]) if text.startswith("@") else Path(text)
    try:
        if text.startswith("@") or (not inline and path.is_file()):
            text = path.read_text()
    except OSError as e:
        raise InvalidInputError(field_name, f"cannot read {path}: {e}")
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise InvalidInputError(field_name, f"malformed JSON/YAML: {e}")


def _scalar_option(text: Optional[str], field_name: str):
    if text is None:
        return None
    value = decode_scalar(text.strip(), field_name) if text.strip() else None
    if value is None:
        raise InvalidInputError(field_name, "empty value")
    if get_settings().default_backend == "float":
        return complex(value)
    return value


def _point_option(text: str, field_name: str):
    pt = decode_point(text.strip(), field_name)
    if get_settings().default_backend == "float":
        return pt.to_float()
    return pt


def _map_option(text: str):
    data = _load_data(text, "map")
    try:
        spec = MapSpec.model_validate(data)
    except ValidationError as e:
        raise first_error(e)
    if spec.backend is None and get_settings().default_backend == "float":
        spec = spec.model_copy(update={"backend": "float"})
    return spec.to_point()


def _family_option(
    kind: str,
    a: Optional[str],
    b: Optional[str],
    q: int,
    k: int,
    alpha: Optional[str],
    beta: Optional[str],
    P: Optional[str],
    Q: Optional[str],
    spec: Optional[str],
):
    if spec is not None:
        data = _load_data(spec, "spec")
    else:
        data = {"kind": kind, "q": q, "k": k}
        if a is not None:
            data["a"] = a
        if b is not None:
            data["b"] = b
        if alpha is not None:
            data["alpha"] = [s.strip() for s in alpha.split(",")]
        if beta is not None:
            data["beta"] = [s.strip() for s in beta.split(",")]
        if P is not None:
            data["P"] = P
        if Q is not None:
            data["Q"] = Q
    try:
        return FamilySpec.model_validate(data).to_family()
    except ValidationError as e:
        raise first_error(e)


def _disk_order(family, q: Optional[int]) -> int:
    if q is not None:
        return q
    if family.kind == DiskKind.LINE:
        return 2
    if family.kind == DiskKind.CONIC:
        return family.q
    found = match_indeterminacy(family.base_point(), ROOT_OF_UNITY_SEARCH)
    if found is None:
        raise BaseLocusError(f"base point {family.base_point()} is not [Lambda_zeta] for a root of unity")
    return found[0]


def _tau_json(value) -> Any:
    if value.is_infinity:
        return "inf"
    c = complex(value.value)
    return [c.real, c.imag]


def _render(result: Any) -> str:
    if isinstance(result, str):
        return result
    return json.dumps(result, indent=2, sort_keys=True) + "\n"


def _csv(header: List[str], rows: List[List[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _execute(ctx: typer.Context, command: str, body: Callable[[], Any]) -> None:
    """Run body under the global overrides, emit its result, map errors to exit codes"""
    opts: GlobalOptions = ctx.obj or GlobalOptions()
    logger.info(f"Starting {command}")
    try:
        with override_settings(**opts.overrides):
            result = body()
    except DynamicsError as e:
        logger.error(f"{command} failed: {type(e).__name__}: {e.detail}")
        typer.echo(json.dumps(e.to_dict()), err=True)
        raise typer.Exit(e.exit_code)
    except ValidationError as e:
        err = first_error(e)
        typer.echo(json.dumps(err.to_dict()), err=True)
        raise typer.Exit(err.exit_code)

    text = _render(result)
    if opts.out is None:
        typer.echo(text, nl=False)
    else:
        opts.out.write_text(text)
        argv = _strip_out(_argv.get())
        record = InvocationRecord(command=command, args={"argv": argv}, settings=opts.overrides, version=VERSION)
        Path(f"{opts.out}.invocation.json").write_text(
            json.dumps(record.model_dump(), indent=2, sort_keys=True) + "\n"
        )
        logger.info(f"Wrote {opts.out}")
    logger.info(f"Finished {command}")


def _strip_out(argv: List[str]) -> List[str]:
    out, skip = [], False
    for arg in argv:
        if skip:
            skip = False
            continue
        if arg == "--out":
            skip = True
            continue
        if arg.startswith("--out="):
            continue
        out.append(arg)
    return out


# ---------------------------------------------------------------------------
# global options
# ---------------------------------------------------------------------------


@app.callback()
def main(
    ctx: typer.Context,
    backend: Optional[str] = typer.Option(None, "--backend", help="exact | float (default BD_DEFAULT_BACKEND)"),
    tol_root: Optional[float] = typer.Option(None, "--tol-root"),
    tol_bc: Optional[float] = typer.Option(None, "--tol-bc"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    out: Optional[Path] = typer.Option(None, "--out", help="write the artifact here instead of stdout"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
    log_json: bool = typer.Option(False, "--log-json"),
):
    settings = get_settings()
    configure_logging(log_level or settings.log_level, log_json or settings.log_json)
    overrides: Dict[str, Any] = {}
    if backend is not None:
        if backend not in ("exact", "float"):
            raise InvalidInputError("backend", f"unknown backend {backend!r}")
        overrides["default_backend"] = backend
    if tol_root is not None:
        overrides["tol_root"] = tol_root
    if tol_bc is not None:
        overrides["tol_bc"] = tol_bc
    if workers is not None:
        overrides["workers"] = workers
    ctx.obj = GlobalOptions(out=out, overrides=overrides)


MAP_OPT = typer.Option(..., "--map", help='{"degree":2,"P":"zw","Q":"z^2"}, inline or @file')
FAMILY_OPT = typer.Option("line", "--family", help="nf | line | conic | coeff_path | boundary | basilica")


# ---------------------------------------------------------------------------
# Ratbar_d
# ---------------------------------------------------------------------------


@app.command("normalize")
def normalize_cmd(ctx: typer.Context, map_: str = MAP_OPT):
    """Split (P:Q) into holes and the reduced map"""
    _execute(ctx, "normalize", lambda: MapOut.of(_map_option(map_)).model_dump())


@app.command("iterate")
def iterate_cmd(ctx: typer.Context, map_: str = MAP_OPT, n: int = typer.Option(2, "--n", min=1)):
    """n-th iterate by the product formula"""
    _execute(ctx, "iterate", lambda: MapOut.of(iterate(_map_option(map_), n)).model_dump())


@app.command("classify")
def classify_cmd(
    ctx: typer.Context, map_: str = MAP_OPT, iterates: bool = typer.Option(False, "--iterates")
):
    """GIT stability class; with --iterates also the verdict for all f^n"""

    def body():
        f = _map_option(map_)
        report = classify(f)
        out = {
            "class": report.stability.value,
            "witness_hole": None if report.witness_hole is None else encode_point(report.witness_hole),
            "witness_depth": report.witness_depth,
        }
        if iterates:
            it = all_iterates_stable(f)
            out["iterates"] = {
                "all_stable": it.all_stable,
                "all_semistable": it.all_semistable,
                "witness": None if it.witness_point is None else encode_point(it.witness_point),
                "witness_mass": encode_mass(it.witness_mass.value),
                "note": it.note,
            }
        return out

    _execute(ctx, "classify", body)


@app.command("measure")
def measure_cmd(
    ctx: typer.Context,
    map_: str = MAP_OPT,
    depth_n: Optional[int] = typer.Option(None, "--depth-n", min=0),
    point: Optional[str] = typer.Option(None, "--point", help="report the mass of one point only"),
    as_csv: bool = typer.Option(False, "--csv", help="atoms vs mass as CSV"),
):
    """Atomic measure mu_f of a boundary point"""

    def body():
        f = _map_option(map_)
        if point is not None:
            est = mass_at(f, _point_option(point, "point"), depth_n)
            return {"mass": encode_mass(est.value), "error_bound": encode_mass(est.error_bound), "exact": est.exact}
        mu = boundary_measure(f, depth_n)
        if as_csv:
            return _csv(["point", "mass"], [[json.dumps(encode_point(p)), float(m)] for p, m in mu.atoms])
        atoms = [AtomOut(point=encode_point(p), mass=encode_mass(m)) for p, m in mu.atoms]
        return MeasureOut(atoms=atoms, tail_bound=encode_mass(mu.tail_bound)).model_dump()

    _execute(ctx, "measure", body)


# ---------------------------------------------------------------------------
# degree-2 moduli
# ---------------------------------------------------------------------------


@app.command("milnor")
def milnor_cmd(ctx: typer.Context, map_: str = MAP_OPT):
    """Fixed-point multipliers and the point (sigma_1 : sigma_2 : 1) of M_2"""

    def body():
        f = _map_option(map_)
        m = multipliers(f)
        return {
            "multipliers": [encode_scalar(x) for x in m.values],
            "sigma1": encode_scalar(m.sigma1),
            "sigma2": encode_scalar(m.sigma2),
            "point": encode_moduli_point(milnor_point(f)),
        }

    _execute(ctx, "milnor", body)


@app.command("lambda")
def lambda_cmd(
    ctx: typer.Context, a: str = typer.Option(..., "--a"), n: int = typer.Option(1, "--n", min=1)
):
    """Lambda_a^n"""
    _execute(ctx, "lambda", lambda: MapOut.of(lambda_iterate(_point_option(a, "a"), n)).model_dump())


@app.command("family")
def family_cmd(
    ctx: typer.Context,
    kind: str = typer.Option(..., "--kind", help="F | P"),
    q: int = typer.Option(..., "--q", min=2),
    n: int = typer.Option(..., "--n", min=1),
    tau: Optional[str] = typer.Option(None, "--tau"),
):
    """The closed forms F_{q,tau,n} and P_{q,n}"""

    def body():
        if kind == "F":
            if tau is None:
                raise InvalidInputError("tau", "F_{q,tau,n} needs --tau")
            return MapOut.of(F_family(q, _scalar_option(tau, "tau"), n)).model_dump()
        if kind == "P":
            return MapOut.of(P_family(q, n, get_settings().default_backend)).model_dump()
        raise InvalidInputError("kind", f"unknown family {kind!r}; use F or P")

    _execute(ctx, "family", body)


@app.command("indeterminacy")
def indeterminacy_cmd(ctx: typer.Context, n: int = typer.Option(..., "--n", min=2)):
    """Points [Lambda_zeta] of Mbar_2 where f -> f^n is undefined"""

    def body():
        rows = []
        for pt in indeterminacy_set(n):
            q, k = match_indeterminacy(pt, n)
            rows.append({"q": q, "k": k, "point": encode_moduli_point(pt)})
        return {"n": n, "points": rows}

    _execute(ctx, "indeterminacy", body)


@app.command("tau2")
def tau2_cmd(
    ctx: typer.Context,
    family: str = FAMILY_OPT,
    a: Optional[str] = typer.Option(None, "--a"),
    b: Optional[str] = typer.Option(None, "--b"),
    q: Optional[int] = typer.Option(None, "--q", min=2),
    k: int = typer.Option(1, "--k", min=1),
    alpha: Optional[str] = typer.Option(None, "--alpha", help="comma-separated series coefficients"),
    beta: Optional[str] = typer.Option(None, "--beta"),
    P: Optional[str] = typer.Option(None, "--P", help="polynomial in z, w, t"),
    Q: Optional[str] = typer.Option(None, "--Q"),
    spec: Optional[str] = typer.Option(None, "--spec", help="family JSON/YAML, inline or @file"),
    numeric: bool = typer.Option(False, "--numeric"),
):
    """tau^2 of a disk through [Lambda_zeta]"""

    def body():
        disk = _family_option(family, a, b, q or 2, k, alpha, beta, P, Q, spec)
        order = _disk_order(disk, q)
        res = tau_squared(disk, order, numeric)
        out = {"tau2": _tau_json(res.value), "q": order, "method": res.method}
        if res.value.is_exact and not res.value.is_infinity:
            out["exact"] = encode_scalar(res.value.value)
        if res.method == "richardson":
            out["error_estimate"] = res.error_estimate
            out["label_gap"] = res.label_gap
        return out

    _execute(ctx, "tau2", body)


@app.command("limit")
def limit_cmd(
    ctx: typer.Context,
    n: int = typer.Option(..., "--n", min=1),
    family: str = FAMILY_OPT,
    a: Optional[str] = typer.Option(None, "--a"),
    b: Optional[str] = typer.Option(None, "--b"),
    q: int = typer.Option(2, "--q", min=2),
    k: int = typer.Option(1, "--k", min=1),
    alpha: Optional[str] = typer.Option(None, "--alpha"),
    beta: Optional[str] = typer.Option(None, "--beta"),
    P: Optional[str] = typer.Option(None, "--P"),
    Q: Optional[str] = typer.Option(None, "--Q"),
    spec: Optional[str] = typer.Option(None, "--spec"),
):
    """lim [f_t^n] as t -> 0 along a disk"""

    def body():
        disk = _family_option(family, a, b, q, k, alpha, beta, P, Q, spec)
        lc = classify_limit(disk, n)
        return {
            "kind": lc.kind.value,
            "n": n,
            "base": encode_moduli_point(lc.base),
            "q": lc.q,
            "tau": None if lc.tau is None else encode_scalar(lc.tau),
            "parameter": None if lc.parameter is None else encode_point(lc.parameter),
            "map": MapOut.of(lc.representative).model_dump(),
        }

    _execute(ctx, "limit", body)


@app.command("mhat")
def mhat_cmd(
    ctx: typer.Context,
    N: int = typer.Option(..., "--N", min=1),
    family: str = FAMILY_OPT,
    a: Optional[str] = typer.Option(None, "--a"),
    b: Optional[str] = typer.Option(None, "--b"),
    q: int = typer.Option(2, "--q", min=2),
    k: int = typer.Option(1, "--k", min=1),
    alpha: Optional[str] = typer.Option(None, "--alpha"),
    beta: Optional[str] = typer.Option(None, "--beta"),
    P: Optional[str] = typer.Option(None, "--P"),
    Q: Optional[str] = typer.Option(None, "--Q"),
    spec: Optional[str] = typer.Option(None, "--spec"),
):
    """The point of Mhat_2 reached along a disk, as (base, q, tau^2)"""

    def body():
        disk = _family_option(family, a, b, q, k, alpha, beta, P, Q, spec)
        pt = mhat_point(disk, N)
        out = pt.to_dict()
        out["classes"] = [
            {"n": lc.n, "kind": lc.kind.value, "degree": lc.representative.degree} for lc in pt.expand(N)
        ]
        return out

    _execute(ctx, "mhat", body)


# ---------------------------------------------------------------------------
# measures on the sphere
# ---------------------------------------------------------------------------


@app.command("barycenter")
def barycenter_cmd(
    ctx: typer.Context,
    measure: str = typer.Option(..., "--measure", help="[{v, mass}] or {points: [...]}, inline or @file"),
):
    """Barycentric normalization of a measure on S^2"""

    def body():
        res = barycenter_normalize(decode_sphere_measure(_load_data(measure, "measure")))
        out = res.to_dict()
        if res.pushforward is not None:
            out["pushforward"] = res.pushforward.to_dict()
        return out

    _execute(ctx, "barycenter", body)


@app.command("sample")
def sample_cmd(
    ctx: typer.Context,
    map_: str = MAP_OPT,
    n_samples: Optional[int] = typer.Option(None, "--n-samples", min=1),
    seed: int = typer.Option(0, "--seed"),
    as_csv: bool = typer.Option(True, "--csv/--json"),
):
    """Sample mu_f by backward iteration; emits the point cloud on S^2"""

    def body():
        emp = sample_max_entropy(_map_option(map_), n_samples, seed)
        V = emp.vectors
        if as_csv:
            return _csv(["x", "y", "z"], [[f"{c:.12g}" for c in v] for v in V])
        return {"seed": seed, "burn_in": emp.burn_in, "points": V.tolist()}

    _execute(ctx, "sample", body)


@app.command("experiment")
def experiment_cmd(
    ctx: typer.Context,
    config: str = typer.Option(..., "--config", help="experiment JSON/YAML, inline or @file"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    as_csv: bool = typer.Option(True, "--csv/--json"),
):
    """Weak-limit experiment along a t-grid"""

    def body():
        try:
            cfg = ExperimentConfig.model_validate(_load_data(config, "config"))
        except ValidationError as e:
            raise first_error(e)
        limit = cfg.limit.to_point() if cfg.limit is not None else None
        report = boundary_limit_experiment(
            cfg.family.to_family(),
            cfg.t_grid,
            cfg.n_samples,
            cfg.seed if seed is None else seed,
            cfg.depth_n,
            cfg.barycentered,
            limit,
        )
        if report.stopped_early:
            logger.warning(f"Grid stopped early; achieved range {report.achieved_range}")
        if report.annulus is not None:
            logger.info(f"Separating annulus test: {report.annulus}")
        if as_csv:
            return _csv(["t", "distance", "barycenter_status"], [r.to_csv_row() for r in report.rows])
        return {
            "rows": [
                {"t": r.t, "distance": r.distance, "barycenter_status": r.barycenter_status} for r in report.rows
            ],
            "stopped_early": report.stopped_early,
            "achieved_range": list(report.achieved_range),
            "annulus": report.annulus,
        }

    _execute(ctx, "experiment", body)


@app.command("counterexample")
def counterexample_cmd(
    ctx: typer.Context,
    d: int = typer.Option(..., "--d", min=2),
    a: str = typer.Option(..., "--a"),
    t: str = typer.Option("1/100", "--t"),
    P: Optional[str] = typer.Option(None, "--P", help="degree d-1 polynomial for g, f_a"),
    Ph: Optional[str] = typer.Option(None, "--Ph", help="degree d-2 polynomial for h, h_a (d >= 5)"),
    witness: Optional[str] = typer.Option(None, "--witness", help="fixed | preimage | constant"),
    a_values: str = typer.Option("0,1,2", "--a-values"),
):
    """The degree-d families g_{a,t}, h_{a,t} and their limits"""

    def body():
        poly = parse_homogeneous(P, d - 1, "P") if P else None
        poly_h = parse_homogeneous(Ph, d - 2, "Ph") if Ph else None
        ex = degree_d_counterexample(d, _scalar_option(a, "a"), _scalar_option(t, "t"), poly, poly_h)
        out = {
            "d": d,
            "g": MapOut.of(ex.g).model_dump(),
            "g_limit": MapOut.of(ex.g_limit).model_dump(),
            "f_a": MapOut.of(ex.f_a).model_dump(),
        }
        if ex.h is not None:
            out["h"] = MapOut.of(ex.h).model_dump()
            out["h_a"] = MapOut.of(ex.h_a).model_dump()
        if witness is not None:
            values = [_scalar_option(s, "a_values") for s in a_values.split(",")]
            wit = cross_ratio_witness(d, values, witness, poly_h if witness == "constant" else poly)
            out["witness"] = {
                key: [encode_scalar(v) if abs(v) != float("inf") else "inf" for v in vals]
                for key, vals in wit.items()
            }
        return out

    _execute(ctx, "counterexample", body)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


@app.command("replay")
def replay_cmd(ctx: typer.Context, record: Path = typer.Argument(..., exists=True, dir_okay=False)):
    """Rerun a saved invocation record; --out before `replay` redirects the artifact"""
    try:
        rec = InvocationRecord.model_validate(json.loads(record.read_text()))
    except (ValidationError, json.JSONDecodeError) as e:
        err = InvalidInputError("record", f"malformed invocation record: {e}")
        typer.echo(json.dumps(err.to_dict()), err=True)
        raise typer.Exit(err.exit_code)
    opts: GlobalOptions = ctx.obj or GlobalOptions()
    argv = list(rec.args.get("argv", []))
    if opts.out is not None:
        argv = ["--out", str(opts.out)] + argv
    logger.info(f"Replaying {rec.command} recorded by version {rec.version}")
    code = run(argv)
    if code:
        raise typer.Exit(code)


def run(argv: Optional[List[str]] = None) -> int:
    """Entry point returning the process exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    token = _argv.set(argv)
    try:
        result = app(args=argv, standalone_mode=False, prog_name="boundary-dynamics")
        return result if isinstance(result, int) else 0
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except DynamicsError as e:
        typer.echo(json.dumps(e.to_dict()), err=True)
        return e.exit_code
    finally:
        _argv.reset(token)


if __name__ == "__main__":
    sys.exit(run())
