"""Training objectives with solver-in-the-loop gradients.

The supervised loss compares a predicted Jacobian field against the
ground truth three ways: directly, through the Poisson-integrated
vertices, and through the frame change of the integrated embedding. The
unsupervised objective couples a learned soft correspondence with the
detail network and needs no ground truth at all.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .diffops import SourceContext, face_frames_t, softmax_rows_t, spmm, tensor
from .mesh import build_operators, face_frames
from .network import JacobianNet, build_input_signal, coarse_signal_t
from .spectral import compute_eigenbasis
from .deform import jacobian_between


def _item(value):
    return float(value.detach()) if torch.is_tensor(value) else float(value)


@dataclass(frozen=True)
class LossWeights:
    """Objective coefficients (trained values).

    ``jacobian``, ``vertex``, ``integrated`` weight the three supervised
    terms; ``smoothness`` and ``volume`` the unsupervised regularizers.
    """

    jacobian: float = 1.0
    vertex: float = 10.0
    integrated: float = 2.0
    smoothness: float = 20.0
    volume: float = 10.0

    def __post_init__(self):
        for name in ("jacobian", "vertex", "integrated", "smoothness", "volume"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} weight must be nonnegative")


class TrainSample:
    """One same-connectivity training pair with cached constants.

    Holds the source context (operators, feature basis, inverse frames,
    Poisson factorization), the ground-truth field, and the coarse input
    signal precomputed for every augmentation level.
    """

    def __init__(self, source_mesh, target_mesh, config, k_values=None, name=""):
        if source_mesh.n_vertices != target_mesh.n_vertices or not np.array_equal(
            source_mesh.faces, target_mesh.faces
        ):
            raise ValueError("supervised pairs must share connectivity")
        self.name = name or "pair"
        ops = build_operators(source_mesh)
        k_feat = min(config.k_feat, source_mesh.n_vertices)
        basis_feat = compute_eigenbasis(ops, k_feat)
        self.ctx = SourceContext(source_mesh, ops, basis_feat)
        self.target_mesh = target_mesh
        self.target_vertices_t = tensor(target_mesh.vertices)

        target_frames = face_frames(target_mesh)
        self.gt_field = jacobian_between(self.ctx.frames, target_frames)
        self.gt_field_t = tensor(self.gt_field.matrices)

        target_ops = build_operators(target_mesh)
        k_values = tuple(k_values or config.k_augmentation)
        k_values = tuple(min(k, target_mesh.n_vertices) for k in k_values)
        k_max = max(max(k_values), min(config.k_coord, target_mesh.n_vertices))
        target_basis = compute_eigenbasis(target_ops, k_max)
        self.k_values = k_values
        self.theta_by_k = {}
        for k in sorted(set(k_values) | {min(config.k_coord, target_mesh.n_vertices)}):
            theta = build_input_signal(
                ops,
                self.ctx.frames,
                target_mesh.vertices,
                mode="spectral",
                target_basis=target_basis,
                k=k,
            )
            self.theta_by_k[k] = tensor(theta)

    def rotation_signal(self):
        """Editing-mode input: vertex-averaged rotation factors of the truth."""
        theta = build_input_signal(
            self.ctx.ops, self.ctx.frames, mode="rotation", field=self.gt_field
        )
        return tensor(theta)


def supervised_loss(model, sample, weights, k=None, signal_t=None):
    """The three-term supervised objective for one sample.

    Parameters
    ----------
    model : JacobianNet
    sample : TrainSample
    weights : LossWeights
    k : int, optional
        Augmentation level selecting a cached input signal.
    signal_t : tensor, optional
        Explicit input signal (editing mode); overrides ``k``.

    Returns
    -------
    (loss, parts) : (tensor scalar, dict of float)
    """
    ctx = sample.ctx
    if signal_t is None:
        if k is None:
            k = sample.k_values[0]
        signal_t = sample.theta_by_k[k]
    if model.config.output_mode == "displacement":
        disp = model(signal_t, ctx)
        recovered = ctx.vertices_t + disp
        return _displacement_loss(sample, weights, recovered)
    predicted = model(signal_t, ctx)

    diff = predicted - sample.gt_field_t
    jacobian_term = torch.sum(diff * diff)

    recovered = ctx.integrate(predicted)
    aligned = recovered + sample.target_vertices_t.mean(dim=0)
    vdiff = sample.target_vertices_t - aligned
    vertex_term = torch.sum(vdiff * vdiff)

    new_frames = face_frames_t(aligned, ctx.faces_t)
    integrated_jac = torch.matmul(ctx.inv_frames_t, new_frames)
    idiff = integrated_jac - sample.gt_field_t
    integrated_term = torch.sum(idiff * idiff)

    loss = (
        weights.jacobian * jacobian_term
        + weights.vertex * vertex_term
        + weights.integrated * integrated_term
    )
    if not torch.isfinite(loss):
        raise ArithmeticError(
            "non-finite loss: "
            f"jacobian={_item(jacobian_term)}, vertex={_item(vertex_term)}, "
            f"integrated={_item(integrated_term)}"
        )
    parts = {
        "jacobian": _item(jacobian_term),
        "vertex": _item(vertex_term),
        "integrated": _item(integrated_term),
        "total": _item(loss),
    }
    return loss, parts


def _displacement_loss(sample, weights, recovered):
    # Ablation path: the network moves vertices directly, terms reuse the
    # same supervision through the induced frame change.
    ctx = sample.ctx
    vdiff = sample.target_vertices_t - recovered
    vertex_term = torch.sum(vdiff * vdiff)
    new_frames = face_frames_t(recovered, ctx.faces_t)
    induced = torch.matmul(ctx.inv_frames_t, new_frames)
    idiff = induced - sample.gt_field_t
    integrated_term = torch.sum(idiff * idiff)
    loss = weights.vertex * vertex_term + weights.integrated * integrated_term
    parts = {
        "jacobian": 0.0,
        "vertex": _item(vertex_term),
        "integrated": _item(integrated_term),
        "total": _item(loss),
    }
    return loss, parts


def loss_and_grad(model, sample, weights, k=None, signal_t=None):
    """Scalar loss and parameter gradients as NumPy arrays (oracle surface)."""
    model.zero_grad(set_to_none=True)
    loss, parts = supervised_loss(model, sample, weights, k=k, signal_t=signal_t)
    loss.backward()
    grads = {
        name: (
            param.grad.detach().numpy().copy()
            if param.grad is not None
            else np.zeros(param.shape)
        )
        for name, param in model.named_parameters()
    }
    return _item(loss), grads, parts


class PairContext:
    """Two meshes of arbitrary connectivity prepared for joint training."""

    def __init__(self, mesh1, mesh2, config, name=""):
        from .features import WKS_EIGENPAIRS, wave_kernel_signature

        self.name = name or "pair"
        self.k_coord = min(config.k_coord, mesh1.n_vertices, mesh2.n_vertices)
        self.sides = []
        for mesh in (mesh1, mesh2):
            ops = build_operators(mesh)
            k_feat = min(config.k_feat, mesh.n_vertices)
            basis = compute_eigenbasis(ops, k_feat)
            ctx = SourceContext(mesh, ops, basis)
            descr = wave_kernel_signature(
                basis.truncated(min(WKS_EIGENPAIRS, basis.k))
            )
            self.sides.append(
                {
                    "ctx": ctx,
                    "descriptors_t": tensor(descr),
                    "evecs_k_t": tensor(basis.evecs[:, : self.k_coord]),
                }
            )


class UnsupervisedModel(torch.nn.Module):
    """Joint correspondence-and-deformation model for one or more pairs.

    Contains the shared feature extractor, the shared detail network, and
    one freely parameterized functional map per direction (initialized at
    identity, the least-constrained reading of the predicted map).
    """

    def __init__(self, network_config, extractor, k_coord, temperature=0.07):
        super().__init__()
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.net = JacobianNet(network_config)
        self.extractor = extractor
        self.temperature = temperature
        eye = torch.eye(k_coord, dtype=torch.float64)
        self.fmap_12 = torch.nn.Parameter(eye.clone())
        self.fmap_21 = torch.nn.Parameter(eye.clone())

    def soft_map(self, feat_src, feat_dst):
        logits = (feat_src @ feat_dst.T) / self.temperature
        return softmax_rows_t(logits)

    def direction_terms(self, pair, i, j, fmap_pred, weights):
        """All loss terms for the ``i -> j`` direction of a pair."""
        src, dst = pair.sides[i], pair.sides[j]
        feat_src = self.extractor(src["descriptors_t"])
        feat_dst = self.extractor(dst["descriptors_t"])
        soft = self.soft_map(feat_src, feat_dst)

        # Functional map induced by the soft correspondence.
        pulled = soft @ dst["evecs_k_t"]
        fmap_soft = src["evecs_k_t"].T @ (src["ctx"].mass_t[:, None] * pulled)

        eye = torch.eye(fmap_pred.shape[0], dtype=torch.float64)
        ortho = fmap_pred.T @ fmap_pred - eye
        orthogonality = torch.sum(ortho * ortho)
        align = fmap_pred - fmap_soft
        alignment = torch.sum(align * align)

        # Coarse signal through the soft functional map, then the network.
        coeff = dst["evecs_k_t"].T @ (
            dst["ctx"].mass_t[:, None] * dst["ctx"].vertices_t
        )
        coarse = src["evecs_k_t"] @ (fmap_soft @ coeff)
        theta = coarse_signal_t(src["ctx"], coarse)
        predicted = self.net(theta, src["ctx"])

        # Data term: frame change toward the soft-mapped embedding.
        soft_targets = soft @ dst["ctx"].vertices_t
        ring_field = src["ctx"].jacobians_to(soft_targets, safe=True)
        ddiff = ring_field - predicted
        data = torch.sum(ddiff * ddiff)

        neighbor_mean = spmm(
            src["ctx"].face_adjacency_t, predicted.reshape(-1, 9)
        ).reshape(-1, 3, 3)
        sdiff = predicted - neighbor_mean
        smoothness = torch.sum(sdiff * sdiff)

        dets = torch.linalg.det(predicted)
        volume = torch.sum((dets - 1.0) ** 2)

        field_term = data + weights.smoothness * smoothness + weights.volume * volume
        total = orthogonality + alignment + field_term
        parts = {
            "orthogonality": _item(orthogonality),
            "alignment": _item(alignment),
            "data": _item(data),
            "smoothness": _item(smoothness),
            "volume": _item(volume),
        }
        return total, parts, soft

    def objective(self, pair, weights):
        """Both directions summed; also returns the term breakdown."""
        total = 0.0
        parts = {}
        for i, j, fmap in ((0, 1, self.fmap_21), (1, 0, self.fmap_12)):
            term, sub, _ = self.direction_terms(pair, i, j, fmap, weights)
            total = total + term
            tag = f"{i + 1}{j + 1}"
            parts.update({f"{name}_{tag}": value for name, value in sub.items()})
        if not torch.isfinite(total):
            raise ArithmeticError(f"non-finite unsupervised loss: {parts}")
        parts["total"] = _item(total)
        return total, parts


def unsupervised_objective(model, pair, weights):
    """Scalar loss and gradients for every trainable tensor (oracle surface)."""
    model.zero_grad(set_to_none=True)
    loss, parts = model.objective(pair, weights)
    loss.backward()
    grads = {
        name: (
            param.grad.detach().numpy().copy()
            if param.grad is not None
            else np.zeros(param.shape)
        )
        for name, param in model.named_parameters()
    }
    return _item(loss), grads, parts
