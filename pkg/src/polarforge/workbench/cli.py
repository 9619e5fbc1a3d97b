"""Command-line entry point: ``polarforge {scenes,render,invert,refine,eval,selfcheck}``.

Exit codes: 0 success, 2 bad input, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import PolarForgeError
from ..geometry import CameraIntrinsics, Pose, load_obj, load_pose
from ..metrics import evaluate_pose, recall_summary, write_records_csv, write_recall_json
from ..polarization import MaterialSpec, fit_decomposition, priors_from_pixel
from ..refine import Observation, RefineConfig, refine_pose
from .io import QuadrupletArchive, atomic_write_text, read_archive, write_archive, write_pfm
from .scenes import SceneFile, generate_scenes, render_scene

log = logging.getLogger("polarforge")

EXIT_BAD_INPUT = 2
EXIT_INVARIANT = 3


class InvariantViolation(Exception):
    pass


def worker_count() -> int:
    raw = os.environ.get("POLARFORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise PolarForgeError(f"POLARFORGE_THREADS must be an integer, got {raw!r}") from None


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PolarForgeError(f"cannot read {path}: {exc}") from exc


# --- subcommands --------------------------------------------------------------

def cmd_scenes(args, wd: Path) -> int:
    mesh_file = (wd / args.mesh).resolve()
    mesh = load_obj(mesh_file)
    K = CameraIntrinsics.centered(args.focal, args.size, args.size)
    scenes = generate_scenes(mesh, args.n, args.seed, mesh_path=str(mesh_file), intrinsics=K,
                             material=MaterialSpec.named(args.material),
                             roll_jitter=np.deg2rad(args.roll_jitter_deg), mode_map=args.mode)
    out = wd / args.out
    out.mkdir(parents=True, exist_ok=True)
    for i, sc in enumerate(scenes):
        atomic_write_text(out / f"scene_{i:04d}.json", json.dumps(sc.to_dict(), indent=2))
    print(f"wrote {len(scenes)} scenes to {out}")
    return 0


def _render_one(scene_path: Path, out: Path, noise: float) -> Path:
    sc = SceneFile.load(scene_path)
    mesh_file = sc.resolve_mesh(scene_path.parent)
    mesh = load_obj(mesh_file)
    rng = np.random.default_rng(sc.seed)
    r = render_scene(mesh, sc.pose, sc.intrinsics, sc.material, sc.shading, sc.mode, noise, rng)
    rb = r.buffers
    if rb.empty:
        log.warning("%s: object covers no pixel", scene_path)
    archive = QuadrupletArchive(r.quadruplet.images, sc.intrinsics, sc.material, sc.pose,
                                r.quadruplet.angles, str(mesh_file),
                                {"mask": rb.mask.astype(np.float32), "depth": rb.depth_map,
                                 "normals": rb.normal_map})
    return write_archive(archive, out)


def cmd_render(args, wd: Path) -> int:
    scenes = [wd / s for s in args.scene]
    out = wd / args.out
    if len(scenes) == 1:
        targets = [out]
    else:
        targets = [out / p.stem for p in scenes]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        done = list(pool.map(lambda st: _render_one(st[0], st[1], args.noise), zip(scenes, targets)))
    for d in done:
        print(f"wrote archive {d}")
    return 0


def cmd_invert(args, wd: Path) -> int:
    a = read_archive(wd / args.inp)
    d = fit_decomposition(a.images.astype(np.float64), a.filter_angles)
    pri = priors_from_pixel(d, a.material)
    out = wd / args.out
    out.mkdir(parents=True, exist_ok=True)
    write_pfm(out / "i_un.pfm", d.i_un)
    write_pfm(out / "rho.pfm", d.rho)
    write_pfm(out / "phi.pfm", d.phi)
    write_pfm(out / "nonphysical.pfm", np.asarray(d.nonphysical, dtype=np.float32))
    write_pfm(out / "n_d.pfm", pri.n_d)
    write_pfm(out / "n_s1.pfm", pri.n_s1)
    write_pfm(out / "n_s2.pfm", pri.n_s2)
    valid = np.stack([pri.valid_d, pri.valid_s1, pri.valid_s2], axis=-1).astype(np.float32)
    write_pfm(out / "prior_valid.pfm", valid)
    print(f"wrote decomposition and normal priors to {out}")
    return 0


def cmd_refine(args, wd: Path) -> int:
    a = read_archive(wd / args.inp)
    if "mask" not in a.buffers:
        raise PolarForgeError("archive has no object mask buffer")
    mesh_path = wd / args.mesh if args.mesh else (Path(a.mesh) if a.mesh else None)
    if mesh_path is None:
        raise PolarForgeError("no mesh given and the archive does not name one")
    mesh = load_obj(mesh_path)
    cfg = RefineConfig.from_dict(_read_json(wd / args.config)) if args.config else RefineConfig()
    p0 = load_pose(wd / args.init)
    d = fit_decomposition(a.images.astype(np.float64), a.filter_angles)
    obs = Observation(d.rho, d.phi, a.buffers["mask"] > 0.5, a.intrinsics, a.material)
    res = refine_pose(p0, obs, mesh, cfg)
    out = wd / (args.out or args.inp)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "refined_pose.json", json.dumps(res.pose.to_dict(), indent=2))
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["step", "objective"])
    for i, v in enumerate(res.trace):
        w.writerow([i, repr(v)])
    atomic_write_text(out / "trace.csv", buf.getvalue())
    print(f"objective {res.trace[0]:.6g} -> {res.trace[-1]:.6g} in {len(res.trace) - 1} steps")
    return 0


def _load_pose_set(path: Path) -> dict[str, Pose]:
    data = _read_json(path)
    if isinstance(data, dict) and "R" in data and "t" in data:
        return {"0": Pose.from_dict(data)}
    if isinstance(data, list):
        return {str(i): Pose.from_dict(p) for i, p in enumerate(data)}
    if isinstance(data, dict):
        return {str(k): Pose.from_dict(p) for k, p in data.items()}
    raise PolarForgeError(f"{path}: expected a pose, a list of poses or an id->pose mapping")


def cmd_eval(args, wd: Path) -> int:
    gts = _load_pose_set(wd / args.gt)
    preds = _load_pose_set(wd / args.pred)
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise PolarForgeError(f"no prediction for {len(missing)} ground-truth entries, e.g. {missing[0]}")
    mesh = load_obj(wd / args.mesh)
    name = args.object or mesh.name
    records = [evaluate_pose(gts[k], preds[k], mesh, args.sym, name) for k in gts]
    out = wd / args.out
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, out / "add.csv")
    write_recall_json(records, out / "recall.json")
    for obj, rec in recall_summary(records).items():
        print(f"{obj}: recall {rec:.1f}% over {len(records)} poses")
    return 0


def cmd_selfcheck(args, wd: Path) -> int:
    from ..checks import run_all
    t0 = time.perf_counter()
    results = run_all()
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - t0:.1f}s")
    if failed:
        raise InvariantViolation(", ".join(r.name for r in failed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarforge", description=__doc__.splitlines()[0])
    p.add_argument("--workdir", default=".", help="base directory for all relative paths")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scenes", help="sample synthetic viewpoints of a mesh")
    s.add_argument("--mesh", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--material", default="plastics")
    s.add_argument("--mode", default="material", choices=["material", "diffuse", "specular"])
    s.add_argument("--focal", type=float, default=500.0)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--roll-jitter-deg", type=float, default=15.0)
    s.set_defaults(func=cmd_scenes)

    s = sub.add_parser("render", help="render scene files into polarization archives")
    s.add_argument("--scene", required=True, action="append")
    s.add_argument("--out", required=True)
    s.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma added to each image")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("invert", help="decompose an archive and derive normal priors")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("refine", help="refine an initial pose against an archive")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--config")
    s.add_argument("--mesh")
    s.add_argument("--out")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("eval", help="ADD(-S) evaluation of predicted poses")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--sym", action="store_true", help="use ADD-S (symmetric object)")
    s.add_argument("--object")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("selfcheck", help="run the invariant suite")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    wd = Path(args.workdir)
    try:
        return args.func(args, wd)
    except InvariantViolation as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (PolarForgeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
