"""Command-line entry point.

Subcommands: ``train`` (supervised / unsupervised / editing), ``refine``
(map refinement), ``deform`` (shape deformation), ``eval`` (map metrics),
``serve`` (the editing service), and ``diagnose`` (input-signal
separation). Every command is deterministic under ``--seed``: all
randomness flows from the one seed and linear algebra runs single
threaded.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    Manifest,
    RunConfig,
    load_fmap,
    load_p2p,
    save_fmap,
    save_p2p,
)
from .mesh import load_mesh, save_mesh


def _setup_determinism(config):
    import torch

    torch.set_num_threads(max(1, config.threads))
    torch.manual_seed(config.seed)


def _load_config(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        config.epochs = args.epochs
    if getattr(args, "iterations", None) is not None:
        config.iterations = args.iterations
    if getattr(args, "k", None) is not None:
        config.k_coord = args.k
    return config


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args):
    from .losses import PairContext, TrainSample
    from .training import train_supervised, train_unsupervised, build_unsupervised_model

    config = _load_config(args)
    _setup_determinism(config)
    manifest = Manifest.load(args.manifest)
    pairs = manifest.split("train")
    if not pairs:
        print("manifest has no training pairs", file=sys.stderr)
        return 2
    out = _out_dir(args)
    checkpoint_path = out / "checkpoint.bin"
    log_path = out / "train_log.jsonl"

    if args.mode in ("supervised", "editing"):
        samples = []
        problems = []
        for record in pairs:
            source = load_mesh(manifest.resolve(record.source))
            target = load_mesh(manifest.resolve(record.target))
            if source.n_vertices != target.n_vertices or not np.array_equal(
                source.faces, target.faces
            ):
                problems.append(
                    f"{record.source} / {record.target}: connectivity differs"
                )
                continue
            samples.append(
                TrainSample(
                    source,
                    target,
                    config.network_config(source.n_vertices),
                    name=record.source,
                )
            )
        if problems:
            for line in problems:
                print(f"pair rejected: {line}", file=sys.stderr)
            return 2
        net_config = config.network_config(min(s.ctx.n_vertices for s in samples))
        mode = "editing" if args.mode == "editing" else "spectral"
        _, history = train_supervised(
            samples,
            net_config,
            weights=config.loss_weights(),
            epochs=config.epochs,
            lr_start=config.lr_start,
            lr_end=config.lr_end,
            seed=config.seed,
            mode=mode,
            log_path=str(log_path),
            checkpoint_path=str(checkpoint_path),
        )
    else:
        contexts = []
        for record in pairs:
            mesh1 = load_mesh(manifest.resolve(record.source))
            mesh2 = load_mesh(manifest.resolve(record.target))
            n_min = min(mesh1.n_vertices, mesh2.n_vertices)
            contexts.append(
                PairContext(mesh1, mesh2, config.network_config(n_min), name=record.source)
            )
        k_min = min(p.k_coord for p in contexts)
        net_config = config.network_config()
        net_config.k_coord = k_min
        model = build_unsupervised_model(
            net_config, temperature=config.temperature, seed=config.seed
        )
        _, history = train_unsupervised(
            contexts,
            model,
            weights=config.loss_weights(),
            iterations=config.iterations,
            lr_start=config.lr_start,
            lr_end=config.lr_end,
            seed=config.seed,
            log_path=str(log_path),
            checkpoint_path=str(checkpoint_path),
        )
    print(f"checkpoint: {checkpoint_path}")
    print(f"log: {log_path} ({len(history)} records)")
    return 0


def _load_prepared(path, config, k_extra=0):
    from .pipeline import PreparedMesh

    mesh = load_mesh(path)
    return PreparedMesh(mesh, k_feat=config.k_feat, k_extra=k_extra)


def _initial_map(args, source, target):
    init_p2p = init_fmap = None
    if args.init_map:
        init_p2p = load_p2p(args.init_map, target.mesh.n_vertices)
        if len(init_p2p) != source.mesh.n_vertices:
            raise ValueError("initial map length does not match the source mesh")
    if args.init_fmap:
        init_fmap = load_fmap(args.init_fmap)
    return init_p2p, init_fmap


def cmd_refine(args):
    from .metrics import evaluate_map
    from .pipeline import refine_map
    from .training import load_network_checkpoint

    config = _load_config(args)
    _setup_determinism(config)
    model, _ = load_network_checkpoint(args.checkpoint)
    k = config.k_coord
    source = _load_prepared(args.source, config, k_extra=k)
    target = _load_prepared(args.target, config, k_extra=k)
    init_p2p, init_fmap = _initial_map(args, source, target)
    result = refine_map(
        model, source, target, k,
        init_p2p=init_p2p, init_fmap=init_fmap,
        settings=config.recovery_settings(),
    )
    out = _out_dir(args)
    save_p2p(out / "refined_map.txt", result["p2p"])
    save_mesh(out / "recovered.obj", source.mesh.with_vertices(result["recovered"]))
    save_fmap(out / "initial_fmap.txt", result["fmap"])
    gt = None
    if args.gt_map:
        gt = load_p2p(args.gt_map, target.mesh.n_vertices)
    report = evaluate_map(
        result["p2p"], gt, source.mesh, source.ops, target.mesh
    )
    (out / "metrics.json").write_text(report.to_json() + "\n")
    print(report.to_json())
    return 0


def cmd_deform(args):
    from .pipeline import deform_to_target
    from .training import load_network_checkpoint

    config = _load_config(args)
    _setup_determinism(config)
    model, _ = load_network_checkpoint(args.checkpoint)
    k = config.k_coord
    source = _load_prepared(args.source, config, k_extra=k)
    target = _load_prepared(args.target, config, k_extra=k)
    init_p2p, init_fmap = _initial_map(args, source, target)
    vertices, _ = deform_to_target(
        model, source, target, k,
        init_p2p=init_p2p, init_fmap=init_fmap,
        settings=config.recovery_settings(),
    )
    out = _out_dir(args)
    save_mesh(out / "deformed.obj", source.mesh.with_vertices(vertices))
    print(f"deformed mesh: {out / 'deformed.obj'}")
    return 0


def cmd_eval(args):
    from .mesh import build_operators
    from .metrics import evaluate_map

    config = _load_config(args)
    _setup_determinism(config)
    out = _out_dir(args)
    rows = []
    if args.manifest:
        manifest = Manifest.load(args.manifest)
        records = manifest.records
        map_paths = [Path(p) for p in args.map]
        if len(map_paths) != len(records):
            raise ValueError("need one --map per manifest record")
        for record, map_path in zip(records, map_paths):
            source = load_mesh(manifest.resolve(record.source))
            target = load_mesh(manifest.resolve(record.target))
            p2p = load_p2p(map_path, target.n_vertices)
            gt = (
                load_p2p(manifest.resolve(record.gt_map), target.n_vertices)
                if record.gt_map
                else None
            )
            ops = build_operators(source)
            rows.append(evaluate_map(p2p, gt, source, ops, target))
    else:
        source = load_mesh(args.source)
        target = load_mesh(args.target)
        p2p = load_p2p(args.map[0], target.n_vertices)
        gt = load_p2p(args.gt_map, target.n_vertices) if args.gt_map else None
        ops = build_operators(source)
        rows.append(evaluate_map(p2p, gt, source, ops, target))
    lines = [r.to_json() for r in rows]
    aggregate = {
        "aggregate": True,
        "geodesic_error": float(np.mean([r.geodesic_error for r in rows])),
        "inversion_pct": float(np.mean([r.inversion_pct for r in rows])),
        "dirichlet_energy": float(np.mean([r.dirichlet_energy for r in rows])),
        "coverage_pct": float(np.mean([r.coverage_pct for r in rows])),
    }
    lines.append(json.dumps(aggregate, sort_keys=True))
    (out / "reports.jsonl").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import EditService, build_app
    from .training import load_network_checkpoint

    config = _load_config(args)
    _setup_determinism(config)
    model, _ = load_network_checkpoint(args.checkpoint)
    service = EditService(model, config)
    if args.mesh:
        session = service.create_session(Path(args.mesh).read_text())
        print(f"preloaded session: {session.id}")
    app = build_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_diagnose(args):
    from .deform import jacobian_between
    from .mesh import build_operators, face_frames
    from .network import signal_separation
    from .spectral import compute_eigenbasis

    config = _load_config(args)
    _setup_determinism(config)
    source = load_mesh(args.source)
    target = load_mesh(args.target)
    ops = build_operators(source)
    frames = face_frames(source)
    target_ops = build_operators(target)
    k = min(config.k_coord, target.n_vertices)
    target_basis = compute_eigenbasis(target_ops, k)
    gt = jacobian_between(frames, face_frames(target))
    result = signal_separation(
        ops, frames, target.vertices, gt, args.vertex,
        target_basis=target_basis, k=k,
    )
    payload = {
        "vertex": args.vertex,
        "k": k,
        "correlation": result["correlation"],
    }
    out = _out_dir(args)
    np.savetxt(out / "input_distances.txt", result["input_distances"])
    np.savetxt(out / "target_distances.txt", result["target_distances"])
    (out / "separation.json").write_text(json.dumps(payload, sort_keys=True) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jacdeform",
        description="Detail-preserving mesh deformation from coarse Jacobian signals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, pair=False, maps=False):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--k", type=int, help="spectral resolution override")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        if pair:
            p.add_argument("--source", required=True)
            p.add_argument("--target", required=True)
        if maps:
            p.add_argument("--init-map", help="initial pointwise map file")
            p.add_argument("--init-fmap", help="initial functional map file")
            p.add_argument("--gt-map", help="ground-truth map for metrics")

    p = sub.add_parser("train", help="train a network from a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["supervised", "unsupervised", "editing"],
                   default="supervised")
    p.add_argument("--epochs", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="refine an approximate correspondence")
    common(p, checkpoint=True, pair=True, maps=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("deform", help="deform a source onto a target")
    common(p, checkpoint=True, pair=True, maps=True)
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("eval", help="evaluate pointwise maps")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--map", nargs="+", required=True)
    p.add_argument("--gt-map")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the editing service")
    common(p, checkpoint=True)
    p.add_argument("--mesh", help="preload a session from this OBJ")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7430)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("diagnose", help="input-signal separation diagnostic")
    common(p, pair=True)
    p.add_argument("--vertex", type=int, default=0)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
