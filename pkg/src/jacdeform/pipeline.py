"""End-to-end inference pipelines shared by the CLI and the service."""

import numpy as np
import torch

from .deform import poisson_solve, recover_embedding, refine_p2p
from .diffops import SourceContext
from .mesh import build_operators
from .network import build_input_signal
from .spectral import (
    PointwiseMap,
    compute_eigenbasis,
    fmap_from_p2p,
    p2p_from_fmap,
    pullback_coordinates,
)


class PreparedMesh:
    """A mesh with its operators, bases, and torch context built once."""

    def __init__(self, mesh, k_feat, k_extra=0):
        self.mesh = mesh
        self.ops = build_operators(mesh)
        k = min(max(k_feat, k_extra), mesh.n_vertices)
        self.basis = compute_eigenbasis(self.ops, k)
        self.k_feat = min(k_feat, mesh.n_vertices)
        self.ctx = SourceContext(mesh, self.ops, self.basis.truncated(self.k_feat))
        self.frames = self.ctx.frames


def refine_map(model, source, target, k, init_p2p=None, init_fmap=None,
               settings=None):
    """Map refinement: coarse pullback, network pass, regularized recovery.

    Parameters
    ----------
    model : JacobianNet
    source, target : PreparedMesh
    k : int
        Spectral resolution of the coordinate pullback.
    init_p2p : PointwiseMap, optional
    init_fmap : FunctionalMap, optional
        At least one form of the initial correspondence is required.

    Returns
    -------
    dict with ``p2p`` (refined map), ``recovered`` (V1, 3), ``field``,
    ``coarse`` (the pulled-back coordinates), and ``init_p2p``.
    """
    if init_p2p is None and init_fmap is None:
        raise ValueError("an initial map (pointwise or functional) is required")
    k1 = min(k, source.basis.k)
    k2 = min(k, target.basis.k)
    basis1 = source.basis.truncated(k1)
    basis2 = target.basis.truncated(k2)
    if init_fmap is None:
        fmap = fmap_from_p2p(init_p2p, basis1, basis2)
    else:
        if init_fmap.shape[0] > source.basis.k or init_fmap.shape[1] > target.basis.k:
            raise ValueError(
                f"functional map {init_fmap.shape} exceeds the bases "
                f"({source.basis.k}, {target.basis.k})"
            )
        fmap = init_fmap
        basis1 = source.basis.truncated(init_fmap.shape[0])
        basis2 = target.basis.truncated(init_fmap.shape[1])
    coarse = pullback_coordinates(fmap, basis1, basis2, target.mesh.vertices)
    signal = build_input_signal(source.ops, source.frames, coarse, mode="spectral")
    field = model.predict_field(signal, source.ctx)
    spatial_map = init_p2p if init_p2p is not None else p2p_from_fmap(fmap, basis1, basis2)
    recovered = recover_embedding(
        source.ops, spatial_map, target.mesh.vertices, field, settings
    )
    refined = refine_p2p(recovered, target.mesh.vertices)
    return {
        "p2p": refined,
        "recovered": recovered,
        "field": field,
        "coarse": coarse,
        "init_p2p": spatial_map,
        "fmap": fmap,
    }


def deform_to_target(model, source, target, k, init_p2p=None, init_fmap=None,
                     settings=None):
    """Deformation of the source toward a target shape.

    With an initial map the full refinement machinery is used; without
    one the shapes must share connectivity and the signal comes from the
    target's own spectral smoothing, integrated by the plain Poisson
    solve.

    Returns
    -------
    (vertices, field)
    """
    if init_p2p is not None or init_fmap is not None:
        result = refine_map(
            model, source, target, k, init_p2p=init_p2p, init_fmap=init_fmap,
            settings=settings,
        )
        return result["recovered"], result["field"]
    if (
        source.mesh.n_vertices != target.mesh.n_vertices
        or not np.array_equal(source.mesh.faces, target.mesh.faces)
    ):
        raise ValueError(
            "shapes with different connectivity need an initial map"
        )
    signal = build_input_signal(
        source.ops,
        source.frames,
        target.mesh.vertices,
        mode="spectral",
        target_basis=target.basis,
        k=min(k, target.basis.k),
    )
    field = model.predict_field(signal, source.ctx)
    vertices = poisson_solve(source.ops, field)
    vertices += target.mesh.vertices.mean(axis=0)
    return vertices, field


def soft_argmax_map(model, pair, direction=0):
    """Hard map from the model's current soft correspondence of a pair."""
    src = pair.sides[direction]
    dst = pair.sides[1 - direction]
    with torch.no_grad():
        feat_src = model.extractor(src["descriptors_t"])
        feat_dst = model.extractor(dst["descriptors_t"])
        soft = model.soft_map(feat_src, feat_dst)
    return PointwiseMap.hard(
        soft.argmax(dim=1).numpy(), dst["ctx"].n_vertices
    )


def extract_unsupervised_map(model, pair, source, target, k, direction=0,
                             settings=None):
    """Refined map extraction after (zero-shot) unsupervised training.

    The learned soft correspondence is hardened by row argmax and
    converted to a binary-map functional map before driving the
    refinement pipeline: the functional map of a soft correspondence is
    contractive (softmax rows average the spectral embedding toward its
    mean), which degenerates the nearest-neighbor extraction.
    """
    anchor = soft_argmax_map(model, pair, direction=direction)
    k = min(k, source.basis.k, target.basis.k)
    fmap = fmap_from_p2p(
        anchor, source.basis.truncated(k), target.basis.truncated(k)
    )
    return refine_map(
        model.net, source, target, k,
        init_p2p=anchor, init_fmap=fmap, settings=settings,
    )
