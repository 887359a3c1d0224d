"""Network assembly for the rotated-MNIST experiments.

Rotation estimators (``two-fc``, ``cnn``, ``cnn-gp``) regress a normalised
angle ``s = (theta + pi) / (2 pi)`` through a final sigmoid.  The ``stn-*``
variants use an estimator as the localisation net of a rotation-only spatial
transformer in front of a digit classifier.  ``r2n-demo`` couples a trained
estimator with a classifier trained on upright digits only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import layers as L
from .gp_pooling import GPPool, PolarGridSpec
from .tensor_core import concat_features, get_dtype
from .warp import RotationWarp

REGRESSION_VARIANTS = ("two-fc", "cnn", "cnn-gp")
STN_VARIANTS = ("stn-two-fc", "stn-cnn", "stn-cnn-gp")
VARIANTS = REGRESSION_VARIANTS + STN_VARIANTS + ("classifier", "r2n-demo")

DEFAULT_GP_SPEC = PolarGridSpec.uniform(math.pi / 36, 2.0)
IMAGE_SIZE = 28


def encode_angle(theta):
    return (np.asarray(theta) + math.pi) / (2 * math.pi)


def decode_angle(s):
    return (2 * np.asarray(s) - 1) * math.pi


@dataclass
class ModelSpec:
    variant: str
    seed: int = 0
    gp_spec: PolarGridSpec = field(default_factory=lambda: DEFAULT_GP_SPEC)
    dropout: float = 0.5
    # where r2n-demo rectifies: the input image or the classifier's pool1 features
    insert_at: str = "image"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if isinstance(self.gp_spec, dict):
            self.gp_spec = PolarGridSpec(**self.gp_spec)
        if self.insert_at not in ("image", "pool1"):
            raise ValueError("insert_at must be 'image' or 'pool1'")

    @property
    def task(self) -> str:
        if self.variant in REGRESSION_VARIANTS:
            return "angle-regression"
        if self.variant in STN_VARIANTS:
            return "stn-classification"
        if self.variant == "classifier":
            return "digit-classification"
        return "r2n-demo"

    def to_dict(self) -> dict:
        return asdict(self)


class Model:
    """Shared parameter bookkeeping; subclasses list their layers in ``_parts``."""

    spec: ModelSpec

    def _parts(self) -> list[tuple[str, object]]:
        raise NotImplementedError

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, part in self._parts():
            if isinstance(part, Model):
                out += [(f"{prefix}.{n}", p) for n, p in part.named_parameters()]
            else:
                out += [(f"{prefix}.{k}", v) for k, v in part.params.items()]
        return out

    def named_gradients(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, part in self._parts():
            if isinstance(part, Model):
                out += [(f"{prefix}.{n}", g) for n, g in part.named_gradients()]
            else:
                out += [(f"{prefix}.{k}", part.grads[k]) for k in part.params]
        return out

    def parameters(self) -> list[np.ndarray]:
        return [p for _, p in self.named_parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [g for _, g in self.named_gradients()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def load_parameters(self, named: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in named:
                raise KeyError(f"missing parameter {name}")
            src = named[name]
            if src.shape != p.shape:
                raise ValueError(f"parameter {name}: shape {src.shape} != {p.shape}")
            p[...] = src

    def dropout_layers(self) -> list[L.Dropout]:
        found = []
        for _, part in self._parts():
            if isinstance(part, Model):
                found += part.dropout_layers()
            elif isinstance(part, L.Dropout):
                found.append(part)
        return found


class RotationEstimator(Model):
    """Angle regressor: ``two-fc``, ``cnn`` or ``cnn-gp``.  Output is (N, 1) in [0, 1]."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        kind = spec.variant.removeprefix("stn-")
        self.kind = kind
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        if kind == "two-fc":
            self.fc1 = L.Linear(IMAGE_SIZE * IMAGE_SIZE, 20, rng)
            self.relu1 = L.ReLU()
            self.fc2 = L.Linear(20, 1, rng)
            self.sig = L.Sigmoid()
            return
        self.conv1 = L.Conv2d(1, 16, 3, 1, 1, rng)
        self.relu1 = L.ReLU()
        self.pool1 = L.MaxPool2d(2, 2)
        self.conv2 = L.Conv2d(16, 32, 3, 1, 1, rng)
        self.relu2 = L.ReLU()
        self.pool2 = L.MaxPool2d(2, 2)
        n_feat = 32 * 7 * 7
        if kind == "cnn-gp":
            self.gp1 = GPPool(spec.gp_spec)
            self.gp2 = GPPool(spec.gp_spec)
            for gp, (size, ch) in ((self.gp1, (IMAGE_SIZE, 16)), (self.gp2, (IMAGE_SIZE // 2, 32))):
                nr, na = gp.output_shape(size, size)
                n_feat += ch * nr * na
        self.n_features = n_feat
        self.fc3 = L.Linear(n_feat, 20, rng)
        self.relu3 = L.ReLU()
        self.drop3 = L.Dropout(spec.dropout, np.random.default_rng([spec.seed, 1]))
        self.fc4 = L.Linear(20, 1, rng)
        self.sig = L.Sigmoid()

    def _parts(self):
        if self.kind == "two-fc":
            return [("fc1", self.fc1), ("fc2", self.fc2)]
        parts = [("conv1", self.conv1), ("conv2", self.conv2), ("fc3", self.fc3), ("fc4", self.fc4)]
        return parts + [("drop3", self.drop3)]

    @property
    def head(self) -> L.Linear:
        return self.fc2 if self.kind == "two-fc" else self.fc4

    def zero_head(self) -> None:
        """Zero the final layer so every input maps to s = 0.5 (theta = 0)."""
        self.head.params["weight"][...] = 0
        self.head.params["bias"][...] = 0

    def features(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Feature vector entering the first fully connected layer."""
        x = np.asarray(x, dtype=get_dtype())
        n = x.shape[0]
        if self.kind == "two-fc":
            return x.reshape(n, -1)
        h1 = self.relu1(self.conv1(x))
        h2 = self.relu2(self.conv2(self.pool1(h1)))
        parts = [self.pool2(h2)]
        if self.kind == "cnn-gp":
            parts += [self.gp1(h1), self.gp2(h2)]
        self._split = [p.reshape(n, -1).shape[1] for p in parts]
        self._part_shapes = [p.shape for p in parts]
        return concat_features(parts)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        f = self.features(x, train)
        if self.kind == "two-fc":
            return self.sig(self.fc2(self.relu1(self.fc1(f))))
        z = self.drop3.forward(self.relu3(self.fc3(f)), train)
        return self.sig(self.fc4(z))

    def backward(self, ds: np.ndarray) -> np.ndarray:
        d = self.sig.backward(ds)
        if self.kind == "two-fc":
            d = self.fc1.backward(self.relu1.backward(self.fc2.backward(d)))
            return d.reshape(-1, 1, IMAGE_SIZE, IMAGE_SIZE)
        d = self.fc4.backward(d)
        df = self.fc3.backward(self.relu3.backward(self.drop3.backward(d)))
        cuts = np.cumsum(self._split)[:-1]
        pieces = [p.reshape(s) for p, s in zip(np.split(df, cuts, axis=1), self._part_shapes)]
        dh2 = self.pool2.backward(pieces[0])
        if self.kind == "cnn-gp":
            dh2 = dh2 + self.gp2.backward(pieces[2])
        dh1 = self.pool1.backward(self.conv2.backward(self.relu2.backward(dh2)))
        if self.kind == "cnn-gp":
            dh1 = dh1 + self.gp1.backward(pieces[1])
        return self.conv1.backward(self.relu1.backward(dh1))

    def predict_angle(self, x: np.ndarray) -> np.ndarray:
        """Estimated rotation in radians, one per image (eval mode)."""
        return decode_angle(self.forward(x, train=False)[:, 0].astype(np.float64))


class DigitClassifier(Model):
    """conv(16) - pool - conv(32) - pool - fc(20) - fc(10) digit classifier."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        self.trunk = L.Sequential([
            ("conv1", L.Conv2d(1, 16, 3, 1, 1, rng)),
            ("relu1", L.ReLU()),
            ("pool1", L.MaxPool2d(2, 2)),
        ])
        self.rest = L.Sequential([
            ("conv2", L.Conv2d(16, 32, 3, 1, 1, rng)),
            ("relu2", L.ReLU()),
            ("pool2", L.MaxPool2d(2, 2)),
            ("flatten", L.Flatten()),
            ("fc3", L.Linear(32 * 7 * 7, 20, rng)),
            ("relu3", L.ReLU()),
            ("fc4", L.Linear(20, 10, rng)),
        ])

    def _parts(self):
        return [(name, layer) for seq in (self.trunk, self.rest) for name, layer in seq.layers if layer.params]

    def pool1_features(self, x, train=False):
        return self.trunk.forward(np.asarray(x, dtype=get_dtype()), train)

    def from_pool1(self, h, train=False):
        return self.rest.forward(h, train)

    def forward(self, x, train=False):
        return self.from_pool1(self.pool1_features(x, train), train)

    def backward(self, dlogits):
        return self.trunk.backward(self.rest.backward(dlogits))

    def predict(self, x) -> np.ndarray:
        return self.forward(x, train=False).argmax(axis=1)


class StnModel(Model):
    """Rotation-only spatial transformer: estimator -> warp(image) -> classifier."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.loc = RotationEstimator(spec, rng)
        self.loc.zero_head()
        self.head = DigitClassifier(spec, rng)
        self.warp = RotationWarp()
        self.theta = None

    def _parts(self):
        return [("loc", self.loc), ("head", self.head)]

    def forward(self, x, train=False):
        """Class logits (N, 10); the intermediate angle is kept in ``self.theta``."""
        x = np.asarray(x, dtype=get_dtype())
        s = self.loc.forward(x, train)
        self.theta = decode_angle(s[:, 0].astype(np.float64))
        rectified = self.warp.forward(x, self.theta).astype(x.dtype, copy=False)
        return self.head.forward(rectified, train)

    def forward_stn(self, x, train=False):
        logits = self.forward(x, train)
        return logits, self.theta

    def backward(self, dlogits):
        dwarped = self.head.backward(dlogits)
        dx, dtheta = self.warp.backward(dwarped)
        ds = (2 * math.pi * dtheta)[:, None].astype(dlogits.dtype)
        return dx.astype(dlogits.dtype) + self.loc.backward(ds)

    def predict_angle(self, x):
        self.forward(x, train=False)
        return self.theta


class R2NPipeline(Model):
    """Trained estimator + upright classifier, rectifying either the image or pool1 features."""

    def __init__(self, spec: ModelSpec, estimator: RotationEstimator | None = None,
                 classifier: DigitClassifier | None = None):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.estimator = estimator or RotationEstimator(ModelSpec("cnn-gp", spec.seed, spec.gp_spec), rng)
        self.classifier = classifier or DigitClassifier(ModelSpec("classifier", spec.seed), rng)

    def _parts(self):
        return [("estimator", self.estimator), ("classifier", self.classifier)]

    def forward(self, x, theta=None):
        """Logits with rectification by ``theta`` (estimated when ``None``)."""
        x = np.asarray(x, dtype=get_dtype())
        if theta is None:
            theta = self.estimator.predict_angle(x)
        if self.spec.insert_at == "image":
            return self.classifier.forward(r2n_rectify(x, theta), train=False)
        h = self.classifier.pool1_features(x)
        return self.classifier.from_pool1(r2n_rectify(h, theta))

    def predict(self, x, theta=None):
        return self.forward(x, theta).argmax(axis=1)


def r2n_rectify(feature_map: np.ndarray, theta) -> np.ndarray:
    """Warp an NCHW feature map by per-sample angles, removing that rotation."""
    return RotationWarp().forward(feature_map, theta).astype(feature_map.dtype, copy=False)


def r2n_rectify_with(estimator: RotationEstimator, image, feature_map):
    """Estimate the angle from ``image`` and rectify ``feature_map`` with it."""
    theta = estimator.predict_angle(image)
    return r2n_rectify(feature_map, theta), theta


def build_model(spec: ModelSpec) -> Model:
    if spec.variant in REGRESSION_VARIANTS:
        return RotationEstimator(spec)
    if spec.variant in STN_VARIANTS:
        return StnModel(spec)
    if spec.variant == "classifier":
        return DigitClassifier(spec)
    return R2NPipeline(spec)
