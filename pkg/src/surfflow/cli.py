"""Command-line batch driver.

Three subcommands:

``simulate <config>``
    Run one scenario from a key = value config file.  Emits legacy-VTK
    snapshots of the fluid (and background) cloud at regular intervals,
    a plain-text step report, an error CSV when the scenario has exact
    solutions, and a residual-history figure.

``bench <scenario> [--schedule h:dt:t_end ...]``
    Run the scenario's resolution schedule (or an explicit one) and emit
    one CSV of error records, suitable for convergence studies.

``verify``
    Run a fast property suite (operator exactness, projector algebra,
    step tangency, regularization idempotence) and print pass/fail.

The default output directory is taken from SURFFLOW_OUTPUT, falling
back to the current directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .config import RunConfig, load_config
from .errors import SurfflowError
from .vtk_io import write_vtk

REPORT_COLUMNS = ("step", "t", "tangency", "div_before", "div_after",
                  "v_iters", "p_iters", "merged", "inserted", "deleted")


def _output_dir(cfg_dir=None):
    d = cfg_dir or os.environ.get("SURFFLOW_OUTPUT") or "."
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _scenario_from_config(cfg: RunConfig):
    overrides = {}
    if cfg.eta is not None:
        overrides["eta"] = cfg.eta
    if cfg.rho is not None:
        overrides["rho"] = cfg.rho
    try:
        return bench.get_scenario(cfg.scenario, **overrides)
    except TypeError:
        raise SurfflowError(
            f"scenario {cfg.scenario!r} does not accept eta/rho overrides")


def cmd_simulate(args):
    cfg = load_config(args.config)
    if cfg.threads > 1:
        try:
            import numba
            numba.set_num_threads(cfg.threads)
        except Exception:
            pass
    scn = _scenario_from_config(cfg)
    h, dt, t_end = scn.schedule[0]
    h = cfg.h if cfg.h is not None else h
    dt = cfg.dt if cfg.dt is not None else dt
    t_end = cfg.t_end if cfg.t_end is not None else t_end
    out = _output_dir(cfg.output_dir)

    nsteps = int(round(t_end / dt))
    interval = cfg.output_interval or max(1, -(-nsteps // 200))
    report_path = out / f"{scn.name}_report.txt"
    times, div_b, div_a = [], [], []
    written = []

    with open(report_path, "w") as report:
        report.write(" ".join(REPORT_COLUMNS) + "\n")

        def snapshot(dual, t, step):
            tag = f"{scn.name}_{step:05d}"
            write_vtk(out / f"{tag}_fluid.vtk", dual.fluid,
                      title=f"{scn.name} fluid t={t:.6g}")
            written.append(str(out / f"{tag}_fluid.vtk"))
            if dual.background is not None:
                write_vtk(out / f"{tag}_background.vtk", dual.background,
                          title=f"{scn.name} background t={t:.6g}")

        if scn.kind == "transport":
            def on_step(dual, t):
                step = int(round(t / dt))
                report.write(f"{step} {t:.6g}" + " -" * 8 + "\n")
                if step % interval == 0:
                    snapshot(dual, t, step)
            records, dual = bench.run_transport(scn, h, dt, t_end,
                                                seed=cfg.seed,
                                                on_step=on_step)
        else:
            def on_step(dual, t, rep):
                step = int(round(t / dt))
                report.write(
                    f"{step} {t:.6g} {rep.tangency_residual:.3e} "
                    f"{rep.div_before:.3e} {rep.div_after:.3e} "
                    f"{rep.velocity_iterations} {rep.pressure_iterations} "
                    f"{rep.points_merged} {rep.points_inserted} "
                    f"{rep.points_deleted}\n")
                times.append(t)
                div_b.append(max(rep.div_before, 1e-300))
                div_a.append(max(rep.div_after, 1e-300))
                if step % interval == 0:
                    snapshot(dual, t, step)
            records, dual, _ = bench.run_flow(scn, h, dt, t_end,
                                              seed=cfg.seed,
                                              on_step=on_step,
                                              solver_tol=cfg.solver_tol)

    snapshot_final = out / f"{scn.name}_final_fluid.vtk"
    write_vtk(snapshot_final, dual.fluid, title=f"{scn.name} final")
    if records and (records[-1].eps_v is not None
                    or records[-1].eps_x is not None):
        csv_path = out / f"{scn.name}_errors.csv"
        with open(csv_path, "w") as f:
            f.write(bench.CSV_HEADER + "\n")
            for rec in records:
                f.write(rec.csv_row() + "\n")
        print(f"wrote {csv_path}")
    if times:
        from .figures import history_figure
        fig_path = out / f"{scn.name}_history.png"
        history_figure(times, {"div(v**)": div_b, "div(v)": div_a}, fig_path)
        print(f"wrote {fig_path}")
    print(f"wrote {report_path} and {len(written) + 1} snapshots")
    return 0


def cmd_bench(args):
    scn = bench.get_scenario(args.scenario)
    if args.schedule:
        schedule = []
        for item in args.schedule:
            parts = item.split(":")
            if len(parts) != 3:
                print(f"bad schedule entry {item!r}, expected h:dt:t_end",
                      file=sys.stderr)
                return 2
            schedule.append(tuple(float(p) for p in parts))
    else:
        schedule = scn.schedule
    out = _output_dir(args.output_dir)
    csv_path = out / f"{scn.name}_bench.csv"
    with open(csv_path, "w") as f:
        f.write(bench.CSV_HEADER + "\n")
        for h, dt, t_end in schedule:
            records, _, _ = bench.run_scenario(scn, h, dt, t_end,
                                               seed=args.seed)
            for rec in records:
                f.write(rec.csv_row() + "\n")
            f.flush()
            print(f"done h={h} dt={dt}: " + records[-1].csv_row())
    print(f"wrote {csv_path}")
    return 0


def _verify_properties():
    """Yield (name, callable) pairs for the fast verification suite."""
    from .operators import projector
    from .sampling import sample_sphere
    from .tessellation import build_geometry
    from .regularize import regularize_cloud

    def operator_exactness():
        cloud = sample_sphere(0.3, seed=1)
        st = build_geometry(cloud, stencils=True)
        z = cloud.x[:, 2]
        grad = st.apply_gradient(z)
        exact = np.column_stack([-cloud.x[:, 0] * z, -cloud.x[:, 1] * z,
                                 1.0 - z ** 2])
        err = np.linalg.norm(grad - exact, axis=1)
        assert np.sqrt(np.mean(err ** 2)) < 0.15, "gradient residual too large"
        lap = st.apply_laplacian(z)
        assert np.sqrt(np.mean((lap + 2 * z) ** 2)) < 0.6, \
            "Laplacian residual too large"

    def projector_algebra():
        rng = np.random.default_rng(0)
        n = rng.normal(size=(64, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        P = projector(n)
        assert np.allclose(P, np.swapaxes(P, 1, 2)), "P not symmetric"
        assert np.allclose(np.einsum("nab,nbc->nac", P, P), P), \
            "P not idempotent"
        assert np.allclose(np.einsum("nab,nb->na", P, n), 0.0), \
            "P does not annihilate normals"

    def step_tangency():
        scn = bench.get_scenario("sphere-vortices")
        from .solver import time_step
        from .transport import MotionState
        dual = scn.build(0.4, 0)
        dual.fluid.v = scn.v_exact(dual.fluid.x, 0.0)
        dual.fluid.p = scn.p_exact(dual.fluid.x, 0.0)
        _, _, rep = time_step(dual, MotionState(None, None, 0.1, 0.1, True),
                              scn.params, 0.1, 0.0, bc=scn.bc,
                              renormalize=scn.renormalize,
                              hook=scn.hook_factory(0.4))
        assert rep.tangency_residual < 1e-10, "tangency residual too large"

    def regularize_idempotence():
        cloud = sample_sphere(0.3, seed=2)
        once = regularize_cloud(cloud, relabel=False)
        twice = regularize_cloud(once, relabel=False)
        assert abs(len(twice) - len(once)) <= max(2, len(once) // 100), \
            "regularization is not settling"

    return [("operator exactness", operator_exactness),
            ("projector algebra", projector_algebra),
            ("step tangency", step_tangency),
            ("regularize idempotence", regularize_idempotence)]


def cmd_verify(_args):
    failures = 0
    for name, fn in _verify_properties():
        try:
            fn()
        except Exception as exc:  # report and keep going
            print(f"FAIL  {name}: {exc}")
            failures += 1
        else:
            print(f"PASS  {name}")
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="surfflow",
        description="Meshfree Lagrangian flow on curved surfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario from a config")
    p_sim.add_argument("config", help="path to key = value config file")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="run a benchmark schedule")
    p_bench.add_argument("scenario", help="catalog scenario name")
    p_bench.add_argument("--schedule", nargs="+", metavar="h:dt:t_end",
                         help="explicit resolution triples")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--output-dir", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_ver = sub.add_parser("verify", help="run the fast property suite")
    p_ver.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SurfflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
