"""Small feed-forward generators with exact derivatives.

Every network here is a plain stack of affine layers followed by elementwise
activations, so Jacobians, Jacobian-vector products and vector-Jacobian
products are all exact chain-rule products. relu is given derivative 0 at the
kink, which makes the pull-back metric discontinuous on a measure-zero set.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import DimensionMismatchError, InvalidInputError, ModelFormatError
from .models import Activation, FeatureKind, JacobianAudit

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_SIGMA_FLOOR = 1e-4


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -a))


def activate(kind: Activation, a: np.ndarray) -> np.ndarray:
    if kind == Activation.IDENTITY:
        return a
    if kind == Activation.TANH:
        return np.tanh(a)
    if kind == Activation.RELU:
        return np.maximum(a, 0.0)
    if kind == Activation.SIGMOID:
        return _sigmoid(a)
    if kind == Activation.SOFTPLUS:
        return np.logaddexp(0.0, a)
    raise InvalidInputError(f"unknown activation: {kind}")


def activate_grad(kind: Activation, a: np.ndarray) -> np.ndarray:
    """Elementwise derivative of the activation at pre-activation a"""
    if kind == Activation.IDENTITY:
        return np.ones_like(a)
    if kind == Activation.TANH:
        return 1.0 - np.tanh(a) ** 2
    if kind == Activation.RELU:
        return (a > 0.0).astype(float)
    if kind == Activation.SIGMOID:
        s = _sigmoid(a)
        return s * (1.0 - s)
    if kind == Activation.SOFTPLUS:
        return _sigmoid(a)
    raise InvalidInputError(f"unknown activation: {kind}")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class BatchTrace:
    """Per-layer inputs and pre-activations from a batched forward pass"""
    inputs: List[np.ndarray] = field(default_factory=list)
    preacts: List[np.ndarray] = field(default_factory=list)
    output: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Mlp:
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ModelFormatError("an Mlp needs at least one layer")
        for index, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise ModelFormatError(
                    f"layer {index}: weight {layer.weight.shape} and bias {layer.bias.shape} do not match"
                )
            if index and layer.in_dim != self.layers[index - 1].out_dim:
                raise ModelFormatError(
                    f"layer {index}: input dim {layer.in_dim} does not match "
                    f"previous output dim {self.layers[index - 1].out_dim}"
                )
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise ModelFormatError(f"layer {index}: non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_parameters(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def parameters(self) -> List[np.ndarray]:
        """Weight and bias arrays in layer order (shared, not copies)"""
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def _point(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.input_dim,):
            raise DimensionMismatchError(f"expected input of shape ({self.input_dim},), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise InvalidInputError("input has non-finite entries")
        return z

    def _batch(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=float)
        if zs.ndim != 2 or zs.shape[1] != self.input_dim:
            raise DimensionMismatchError(f"expected batch of shape (B, {self.input_dim}), got {zs.shape}")
        return zs

    def forward(self, z: np.ndarray) -> np.ndarray:
        h = self._point(z)
        for layer in self.layers:
            h = activate(layer.activation, layer.weight @ h + layer.bias)
        return h

    def forward_batch(self, zs: np.ndarray) -> np.ndarray:
        return self.trace_batch(zs).output

    def trace_batch(self, zs: np.ndarray) -> BatchTrace:
        trace = BatchTrace()
        h = self._batch(zs)
        for layer in self.layers:
            a = h @ layer.weight.T + layer.bias
            trace.inputs.append(h)
            trace.preacts.append(a)
            h = activate(layer.activation, a)
        trace.output = h
        return trace

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        """Exact (output_dim, input_dim) Jacobian"""
        h = self._point(z)
        jac = np.eye(self.input_dim)
        for layer in self.layers:
            a = layer.weight @ h + layer.bias
            jac = activate_grad(layer.activation, a)[:, None] * (layer.weight @ jac)
            h = activate(layer.activation, a)
        return jac

    def jvp(self, z: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.input_dim,):
            raise DimensionMismatchError(f"tangent must have shape ({self.input_dim},), got {v.shape}")
        return self.jvp_batch(self._point(z)[None, :], v[None, :])[0]

    def jvp_batch(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Forward-mode J(z_b) v_b for every row b"""
        h = self._batch(zs)
        tangent = np.asarray(vs, dtype=float)
        if tangent.shape != h.shape:
            raise DimensionMismatchError(f"tangents {tangent.shape} do not match points {h.shape}")
        for layer in self.layers:
            a = h @ layer.weight.T + layer.bias
            tangent = activate_grad(layer.activation, a) * (tangent @ layer.weight.T)
            h = activate(layer.activation, a)
        return tangent

    def vjp(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.output_dim,):
            raise DimensionMismatchError(f"cotangent must have shape ({self.output_dim},), got {u.shape}")
        return self.vjp_batch(self._point(z)[None, :], u[None, :])[0]

    def vjp_batch(self, zs: np.ndarray, us: np.ndarray) -> np.ndarray:
        """Reverse-mode u_b^T J(z_b) for every row b"""
        trace = self.trace_batch(zs)
        us = np.asarray(us, dtype=float)
        if us.shape != trace.output.shape:
            raise DimensionMismatchError(f"cotangents {us.shape} do not match outputs {trace.output.shape}")
        _, grad_in = self.backward_batch(trace, us, with_params=False)
        return grad_in

    def backward_batch(
        self, trace: BatchTrace, grad_out: np.ndarray, with_params: bool = True
    ) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. parameters and inputs"""
        grads: List[np.ndarray] = []
        g = grad_out
        for layer, h, a in zip(reversed(self.layers), reversed(trace.inputs), reversed(trace.preacts)):
            g = g * activate_grad(layer.activation, a)
            if with_params:
                grads.extend([g.sum(axis=0), g.T @ h])
            g = g @ layer.weight
        grads.reverse()
        return grads, g


@dataclass(frozen=True)
class StochasticGenerator:
    """Gaussian decoder x = mu(z) + sigma(z) * eps with diagonal covariance"""
    mu_net: Mlp
    sigma_net: Mlp
    sigma_floor: float = DEFAULT_SIGMA_FLOOR

    def __post_init__(self):
        if self.mu_net.input_dim != self.sigma_net.input_dim:
            raise ModelFormatError("mu and sigma networks must share the latent dimension")
        if self.mu_net.output_dim != self.sigma_net.output_dim:
            raise ModelFormatError("mu and sigma networks must share the output dimension")
        if self.sigma_net.layers[-1].activation != Activation.SOFTPLUS:
            raise ModelFormatError("sigma network must end in a softplus layer")
        if not self.sigma_floor > 0:
            raise ModelFormatError(f"sigma_floor must be positive, got {self.sigma_floor}")

    @property
    def latent_dim(self) -> int:
        return self.mu_net.input_dim

    @property
    def output_dim(self) -> int:
        return self.mu_net.output_dim

    @property
    def n_parameters(self) -> int:
        return self.mu_net.n_parameters + self.sigma_net.n_parameters

    def mean(self, z: np.ndarray) -> np.ndarray:
        return self.mu_net.forward(z)

    def sigma(self, z: np.ndarray) -> np.ndarray:
        return self.sigma_floor + self.sigma_net.forward(z)

    def sample(self, z: np.ndarray, eps: np.ndarray) -> np.ndarray:
        return self.mean(z) + self.sigma(z) * eps


@dataclass(frozen=True)
class Encoder:
    """Approximate posterior q(z|x): one network emitting (mean, log-variance)"""
    net: Mlp

    def __post_init__(self):
        if self.net.output_dim % 2:
            raise ModelFormatError("encoder output must hold mean and log-variance halves")

    @property
    def latent_dim(self) -> int:
        return self.net.output_dim // 2

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    def posterior(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        out = self.net.forward(x)
        return out[: self.latent_dim], out[self.latent_dim:]

    def posterior_batch(self, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        out = self.net.forward_batch(xs)
        return out[:, : self.latent_dim], out[:, self.latent_dim:]


@dataclass(frozen=True)
class VaeModel:
    """Encoder and stochastic decoder of one trained VAE"""
    encoder: Encoder
    generator: StochasticGenerator

    def __post_init__(self):
        if self.encoder.latent_dim != self.generator.latent_dim:
            raise ModelFormatError("encoder and decoder latent dimensions differ")
        if self.encoder.input_dim != self.generator.output_dim:
            raise ModelFormatError("encoder input and decoder output dimensions differ")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True)
class FeatureMap:
    """Map from output space to feature space, identity or softmax(Wx + b)"""
    kind: FeatureKind = FeatureKind.IDENTITY
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    classes: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == FeatureKind.LOGISTIC_REGRESSION:
            if self.weights is None or self.bias is None:
                raise ModelFormatError("logistic regression needs weights and bias")
            if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
                raise ModelFormatError(
                    f"weights {self.weights.shape} and bias {self.bias.shape} do not match"
                )
            if self.classes and len(self.classes) != self.weights.shape[0]:
                raise ModelFormatError("one class label per weight row is required")

    @classmethod
    def identity(cls) -> "FeatureMap":
        return cls()

    @classmethod
    def logistic(cls, weights: np.ndarray, bias: np.ndarray, classes: Sequence[int] = ()) -> "FeatureMap":
        weights = np.asarray(weights, dtype=float)
        classes = tuple(int(c) for c in classes) or tuple(range(weights.shape[0]))
        return cls(FeatureKind.LOGISTIC_REGRESSION, weights, np.asarray(bias, dtype=float), classes)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == FeatureKind.LOGISTIC_REGRESSION and x.shape[-1] != self.weights.shape[1]:
            raise DimensionMismatchError(
                f"feature map expects inputs of dim {self.weights.shape[1]}, got {x.shape[-1]}"
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        if self.kind == FeatureKind.IDENTITY:
            return x
        return softmax(x @ self.weights.T + self.bias)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        if x.ndim != 1:
            raise DimensionMismatchError(f"expected a single point, got shape {x.shape}")
        if self.kind == FeatureKind.IDENTITY:
            return np.eye(x.shape[0])
        p = softmax(self.weights @ x + self.bias)
        return (np.diag(p) - np.outer(p, p)) @ self.weights

    def jvp_batch(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        """J_FX(x_b) u_b for every row b"""
        xs = self._check(xs)
        if self.kind == FeatureKind.IDENTITY:
            return np.asarray(us, dtype=float)
        p = softmax(xs @ self.weights.T + self.bias)
        wu = np.asarray(us, dtype=float) @ self.weights.T
        return p * wu - p * np.sum(p * wu, axis=1, keepdims=True)

    def metric_diagonal_batch(self, xs: np.ndarray) -> np.ndarray:
        """Diagonal of J_FX^T J_FX at every row, shape (B, D)"""
        xs = self._check(xs)
        if self.kind == FeatureKind.IDENTITY:
            return np.ones_like(xs)
        p = softmax(xs @ self.weights.T + self.bias)
        # J_FX[k, j] = p_k (W_kj - sum_l p_l W_lj)
        centered = self.weights[None, :, :] - (p @ self.weights)[:, None, :]
        return np.sum((p[:, :, None] * centered) ** 2, axis=1)

    def predict(self, xs: np.ndarray) -> np.ndarray:
        """Class label (not row index) of the most probable class per row"""
        if self.kind != FeatureKind.LOGISTIC_REGRESSION:
            raise InvalidInputError("only a logistic regression feature map predicts classes")
        rows = np.argmax(self.forward(np.atleast_2d(xs)), axis=1)
        return np.asarray(self.classes)[rows]


def forward(net: Mlp, z: np.ndarray) -> np.ndarray:
    return net.forward(z)


def jacobian(net: Mlp, z: np.ndarray) -> np.ndarray:
    return net.jacobian(z)


def vjp(net: Mlp, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    return net.vjp(z, u)


def jvp(net: Mlp, z: np.ndarray, v: np.ndarray) -> np.ndarray:
    return net.jvp(z, v)


def feature_forward(f: FeatureMap, x: np.ndarray) -> np.ndarray:
    return f.forward(x)


def feature_jacobian(f: FeatureMap, x: np.ndarray) -> np.ndarray:
    return f.jacobian(x)


def init_mlp(
    widths: Sequence[int],
    activations: Sequence[Activation],
    rng: np.random.Generator,
) -> Mlp:
    """Glorot-uniform weights, zero biases"""
    if len(activations) != len(widths) - 1:
        raise InvalidInputError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(widths[:-1], widths[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return Mlp(tuple(layers))


# Model files


class LayerDocument(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    in_: int = Field(alias="in", gt=0)
    out: int = Field(gt=0)
    activation: Activation
    weights: List[float]
    bias: List[float]

    @model_validator(mode="after")
    def _sizes(self) -> "LayerDocument":
        if len(self.weights) != self.in_ * self.out:
            raise ValueError(f"expected {self.in_ * self.out} weights, got {len(self.weights)}")
        if len(self.bias) != self.out:
            raise ValueError(f"expected {self.out} bias entries, got {len(self.bias)}")
        return self


def _check_chain(name: str, layers: Optional[List[LayerDocument]]) -> None:
    if not layers:
        raise ValueError(f"{name} must list at least one layer")
    for index in range(1, len(layers)):
        if layers[index].in_ != layers[index - 1].out:
            raise ValueError(
                f"{name}[{index}]: in={layers[index].in_} does not match "
                f"{name}[{index - 1}].out={layers[index - 1].out}"
            )


class ModelDocument(BaseModel):
    """On-disk schema shared by every model kind"""
    format_version: int
    kind: Literal["mlp", "stochastic", "vae", "logreg"]
    layers: Optional[List[LayerDocument]] = None
    mu_layers: Optional[List[LayerDocument]] = None
    sigma_layers: Optional[List[LayerDocument]] = None
    encoder_layers: Optional[List[LayerDocument]] = None
    sigma_floor: Optional[float] = Field(default=None, gt=0)
    weights: Optional[List[List[float]]] = None
    bias: Optional[List[float]] = None
    classes: Optional[List[int]] = None

    @model_validator(mode="after")
    def _consistent(self) -> "ModelDocument":
        if self.format_version != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {self.format_version}")
        if self.kind == "mlp":
            _check_chain("layers", self.layers)
        elif self.kind in ("stochastic", "vae"):
            _check_chain("mu_layers", self.mu_layers)
            _check_chain("sigma_layers", self.sigma_layers)
            if self.kind == "vae":
                _check_chain("encoder_layers", self.encoder_layers)
        elif self.weights is None or self.bias is None:
            raise ValueError("logreg models need weights and bias")
        return self


def _layer_to_document(layer: Layer) -> LayerDocument:
    return LayerDocument(
        in_=layer.in_dim,
        out=layer.out_dim,
        activation=layer.activation,
        weights=layer.weight.ravel().tolist(),
        bias=layer.bias.tolist(),
    )


def _mlp_from_documents(layers: List[LayerDocument]) -> Mlp:
    return Mlp(tuple(
        Layer(
            np.asarray(doc.weights, dtype=float).reshape(doc.out, doc.in_),
            np.asarray(doc.bias, dtype=float),
            doc.activation,
        )
        for doc in layers
    ))


Model = Union[Mlp, StochasticGenerator, VaeModel, FeatureMap]


def to_document(model: Model) -> ModelDocument:
    if isinstance(model, Mlp):
        return ModelDocument(
            format_version=FORMAT_VERSION, kind="mlp",
            layers=[_layer_to_document(layer) for layer in model.layers],
        )
    if isinstance(model, (StochasticGenerator, VaeModel)):
        is_vae = isinstance(model, VaeModel)
        generator = model.generator if is_vae else model
        return ModelDocument(
            format_version=FORMAT_VERSION,
            kind="vae" if is_vae else "stochastic",
            mu_layers=[_layer_to_document(layer) for layer in generator.mu_net.layers],
            sigma_layers=[_layer_to_document(layer) for layer in generator.sigma_net.layers],
            encoder_layers=[_layer_to_document(layer) for layer in model.encoder.net.layers] if is_vae else None,
            sigma_floor=generator.sigma_floor,
        )
    if isinstance(model, FeatureMap):
        if model.kind != FeatureKind.LOGISTIC_REGRESSION:
            raise ModelFormatError("identity feature maps are not persisted")
        return ModelDocument(
            format_version=FORMAT_VERSION, kind="logreg",
            weights=model.weights.tolist(), bias=model.bias.tolist(), classes=list(model.classes),
        )
    raise ModelFormatError(f"cannot serialize {type(model).__name__}")


def from_document(doc: ModelDocument) -> Model:
    if doc.kind == "mlp":
        return _mlp_from_documents(doc.layers)
    if doc.kind in ("stochastic", "vae"):
        generator = StochasticGenerator(
            mu_net=_mlp_from_documents(doc.mu_layers),
            sigma_net=_mlp_from_documents(doc.sigma_layers),
            sigma_floor=doc.sigma_floor if doc.sigma_floor is not None else DEFAULT_SIGMA_FLOOR,
        )
        if doc.kind == "stochastic":
            return generator
        return VaeModel(Encoder(_mlp_from_documents(doc.encoder_layers)), generator)
    try:
        weights = np.asarray(doc.weights, dtype=float)
    except ValueError as e:
        raise ModelFormatError(f"logreg weights: {e}") from e
    if weights.ndim != 2:
        raise ModelFormatError("logreg weights must be a rectangular K x D array")
    return FeatureMap.logistic(weights, doc.bias, doc.classes or ())


def save_model(path: Union[str, Path], model: Model) -> Path:
    """Write a model as JSON; Python's float repr round-trips every float64 exactly"""
    path = Path(path)
    doc = to_document(model).model_dump(by_alias=True, exclude_none=True, mode="json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))
    logger.debug("saved %s model to %s", doc["kind"], path)
    return path


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    try:
        doc = ModelDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ModelFormatError(f"{path}: field {where}: {first['msg']}") from e
    return from_document(doc)


# Jacobian audit


def finite_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, one column per input coordinate"""
    columns = []
    for k in range(len(z)):
        step = np.zeros_like(z)
        step[k] = h
        columns.append((fn(z + step) - fn(z - step)) / (2.0 * h))
    return np.stack(columns, axis=1)


def named_networks(model: Model) -> List[Tuple[str, Callable, Callable, int, bool]]:
    """(name, forward, jacobian, input dim, takes images) for every map in a model"""
    if isinstance(model, Mlp):
        return [("generator", model.forward, model.jacobian, model.input_dim, False)]
    if isinstance(model, FeatureMap):
        if model.kind == FeatureKind.IDENTITY:
            return []
        return [("feature", model.forward, model.jacobian, model.weights.shape[1], True)]
    generator = model if isinstance(model, StochasticGenerator) else model.generator
    nets = [
        ("mu_net", generator.mu_net.forward, generator.mu_net.jacobian, generator.latent_dim, False),
        ("sigma_net", generator.sigma_net.forward, generator.sigma_net.jacobian, generator.latent_dim, False),
    ]
    if isinstance(model, VaeModel):
        enc = model.encoder.net
        nets.insert(0, ("encoder", enc.forward, enc.jacobian, enc.input_dim, True))
    return nets


def audit_jacobians(
    model: Model,
    n_points: int = 10,
    seed: int = 0,
    tolerance: float = 1e-4,
    h: float = 1e-6,
) -> List[JacobianAudit]:
    """Compare analytic Jacobians against central differences at random points

    The error at a point is max|J - J_fd| / max(1, max|J_fd|), so flat regions
    are judged absolutely and steep ones relatively.
    """
    if n_points < 1 or h <= 0:
        raise InvalidInputError(f"need n_points >= 1 and h > 0, got {n_points} and {h}")
    rng = np.random.default_rng(seed)
    audits = []
    for name, fn, jac, dim, takes_images in named_networks(model):
        worst = 0.0
        for _ in range(n_points):
            z = rng.uniform(0.0, 1.0, dim) if takes_images else rng.standard_normal(dim)
            reference = finite_difference_jacobian(fn, z, h)
            scale = max(1.0, float(np.max(np.abs(reference))))
            worst = max(worst, float(np.max(np.abs(jac(z) - reference))) / scale)
        audits.append(JacobianAudit(
            network=name, n_points=n_points, max_rel_error=worst, tolerance=tolerance, passed=worst <= tolerance,
        ))
        logger.debug("%s: max Jacobian error %.3e", name, worst)
    return audits
