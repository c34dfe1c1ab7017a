"""The detail network: per-vertex MLP with feature-smoothing layers.

The network maps a coarse 9-dimensional per-vertex deformation signal to a
per-face Jacobian field. Hidden features are repeatedly projected onto the
low-frequency eigenbasis of the source mesh, which shares information over
a small neighborhood of each vertex; the output is parameterized as an
offset from the identity so the untrained network is exactly the identity
deformation.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .deform import JacobianField, polar_rotations
from .diffops import spectral_project_t, spmm, tensor
from .spectral import spectral_project

DEFAULT_K_AUGMENTATION = (20, 30, 40, 50, 60)


@dataclass
class NetworkConfig:
    """Architecture and determinism knobs.

    The defaults are the trained configuration: four 256-wide hidden
    layers each followed by a spectral projection, two more without
    projection, and a 9-dimensional output added to the flattened
    identity. ``k_feat`` eigenfunctions smooth the features, ``k_coord``
    project shape coordinates.
    """

    hidden_width: int = 256
    projected_layers: int = 4
    plain_layers: int = 2
    in_dim: int = 9
    k_feat: int = 128
    k_coord: int = 40
    seed: int = 0
    use_projection: bool = True
    input_discretization: str = "vertex"  # or "face" (ablation)
    output_mode: str = "jacobian"  # or "displacement" (ablation)
    k_augmentation: tuple = field(default_factory=lambda: DEFAULT_K_AUGMENTATION)

    def __post_init__(self):
        if self.input_discretization not in ("vertex", "face"):
            raise ValueError(f"bad input_discretization {self.input_discretization!r}")
        if self.output_mode not in ("jacobian", "displacement"):
            raise ValueError(f"bad output_mode {self.output_mode!r}")

    @property
    def out_dim(self):
        return 3 if self.output_mode == "displacement" else 9

    def to_dict(self):
        return {
            "hidden_width": self.hidden_width,
            "projected_layers": self.projected_layers,
            "plain_layers": self.plain_layers,
            "in_dim": self.in_dim,
            "k_feat": self.k_feat,
            "k_coord": self.k_coord,
            "seed": self.seed,
            "use_projection": self.use_projection,
            "input_discretization": self.input_discretization,
            "output_mode": self.output_mode,
            "k_augmentation": list(self.k_augmentation),
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "k_augmentation" in data:
            data["k_augmentation"] = tuple(data["k_augmentation"])
        return cls(**data)


def init_linear_(layer, generator, zero=False):
    """Deterministic init: uniform +-sqrt(6 / fan_in) weights, zero biases."""
    if zero:
        with torch.no_grad():
            layer.weight.zero_()
            layer.bias.zero_()
        return
    bound = math.sqrt(6.0 / layer.weight.shape[1])
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=generator)
        layer.bias.zero_()


class JacobianNet(torch.nn.Module):
    """Shared-weight per-vertex MLP with interleaved spectral smoothing."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        generator = torch.Generator().manual_seed(config.seed)
        widths = [config.in_dim]
        widths += [config.hidden_width] * (config.projected_layers + config.plain_layers - 1)
        widths += [config.out_dim]
        layers = []
        for i in range(len(widths) - 1):
            layer = torch.nn.Linear(widths[i], widths[i + 1], dtype=torch.float64)
            init_linear_(layer, generator, zero=(i == len(widths) - 2))
            layers.append(layer)
        self.layers = torch.nn.ModuleList(layers)

    def forward(self, signal_t, ctx, return_intermediates=False):
        """Predict the Jacobian field for a coarse input signal.

        Parameters
        ----------
        signal_t : tensor
            (V, in_dim) for vertex discretization, (F, in_dim) for face.
        ctx : SourceContext
        return_intermediates : bool
            Also return the pre/post-projection features of each smoothing
            layer (used by the smoothing-energy tests).

        Returns
        -------
        tensor
            (F, 3, 3) Jacobian field in ``jacobian`` output mode, (V, 3)
            displacements in ``displacement`` mode.
        """
        cfg = self.config
        vertex_mode = cfg.input_discretization == "vertex"
        project = cfg.use_projection and vertex_mode
        if project and ctx.basis_feat.k > ctx.n_vertices:
            raise ValueError("feature basis larger than the vertex count")
        intermediates = []
        x = signal_t
        n_hidden = cfg.projected_layers + cfg.plain_layers - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < n_hidden:
                x = torch.relu(x)
            if project and i < cfg.projected_layers:
                before = x
                x = spectral_project_t(ctx.evecs_t, ctx.mass_t, x)
                if return_intermediates:
                    intermediates.append((before, x))
        if cfg.output_mode == "displacement":
            out = x if vertex_mode else ctx.average_to_vertices(x)
            return (out, intermediates) if return_intermediates else out
        if vertex_mode:
            per_face = spmm(ctx.vertex_to_face_t, x)
        else:
            per_face = x
        field = per_face.reshape(-1, 3, 3) + torch.eye(3, dtype=torch.float64)
        return (field, intermediates) if return_intermediates else field

    def predict_field(self, signal, ctx):
        """Inference convenience: NumPy in, JacobianField out."""
        with torch.no_grad():
            out = self.forward(tensor(signal), ctx)
        if self.config.output_mode == "displacement":
            raise ValueError("displacement mode does not produce a Jacobian field")
        return JacobianField(out.numpy())


def build_input_signal(ops, frames, coarse_target=None, mode="spectral",
                       target_basis=None, k=None, field=None):
    """Coarse per-vertex 9-vector signal for the network.

    In ``spectral`` mode the target geometry (same connectivity as the
    source, either the raw target during training or pulled-back
    coordinates at inference) is optionally smoothed with ``k``
    eigenfunctions of ``target_basis``, the per-face frame change from the
    source is computed, and the flattened matrices are averaged to
    vertices. In ``rotation`` mode the nearest-rotation factors of a given
    full-rank Jacobian field are averaged instead.

    Parameters
    ----------
    ops : DifferentialOperators of the source mesh
    frames : FaceFrames of the source mesh
    coarse_target : ndarray, (V1, 3), spectral mode only
    target_basis : SpectralBasis, optional
        When given, ``coarse_target`` is projected onto its first ``k``
        eigenfunctions first.
    k : int, optional
    field : JacobianField, rotation mode only

    Returns
    -------
    ndarray, (V1, 9)
    """
    from .mesh import face_frames as build_frames

    if mode == "spectral":
        if coarse_target is None:
            raise ValueError("spectral mode needs target coordinates")
        coarse = np.asarray(coarse_target, dtype=np.float64)
        if target_basis is not None:
            basis = target_basis if k is None else target_basis.truncated(k)
            coarse = spectral_project(basis, coarse)
        target_frames = build_frames(coarse, ops.mesh.faces)
        jac = np.matmul(frames.inverses(), target_frames.frames)
    elif mode == "rotation":
        if field is None:
            raise ValueError("rotation mode needs a Jacobian field")
        jac = polar_rotations(field).matrices
    else:
        raise ValueError(f"unknown signal mode {mode!r}")
    return ops.face_to_vertex @ jac.reshape(-1, 9)


def coarse_signal_t(ctx, coarse_vertices_t):
    """Differentiable spectral-mode signal from pulled-back coordinates."""
    jac = ctx.jacobians_to(coarse_vertices_t, safe=True)
    return ctx.average_to_vertices(jac.reshape(-1, 9))


def signal_separation(ops, frames, coarse_target, gt_field, seed_vertex,
                      target_basis=None, k=None):
    """Well-posedness diagnostic for the coarse signal.

    For one seed vertex, returns the Frobenius distances between its
    signal row and every other vertex's, alongside the same distances for
    the vertex-averaged ground-truth Jacobians. Similar distributions mean
    distinct inputs map to distinct outputs.

    Returns
    -------
    dict with ``input_distances``, ``target_distances`` (both (V,)), and
    their Pearson ``correlation``.
    """
    theta = build_input_signal(
        ops, frames, coarse_target, mode="spectral", target_basis=target_basis, k=k
    )
    gt_vertex = ops.face_to_vertex @ gt_field.flattened()
    input_d = np.linalg.norm(theta - theta[seed_vertex], axis=1)
    target_d = np.linalg.norm(gt_vertex - gt_vertex[seed_vertex], axis=1)
    keep = np.arange(len(input_d)) != seed_vertex
    corr = float(np.corrcoef(input_d[keep], target_d[keep])[0, 1])
    return {
        "input_distances": input_d,
        "target_distances": target_d,
        "correlation": corr,
    }
