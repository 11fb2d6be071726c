"""
Joint training of the density, diffusion and growth networks.

Loss (all quantities scaled):

    L_total = lambda_data * L_data + lambda_pde * L_pde + lambda_bio * L_bio

    L_data  mean over a set of grid entries of (U_data - NN_u)^2
    L_pde   mean over collocation points of r^2 with
            r = u_t - D'(u) (u_x1^2 + u_x2^2) - D(u) (u_x1x1 + u_x2x2) - G(u) u
    L_bio   hook, identically zero

One epoch is a single full-batch Adam step on the training entries and a
freshly drawn collocation batch. Early stopping watches the validation loss
(lambda_data * val L_data + lambda_pde * val L_pde on a fixed validation
collocation set); an epoch improves when it beats (1 - es_improvement) times
the best value so far, and the parameters of the last improving epoch are
restored when patience runs out.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import config
from .autodiff import Dual2, Tape, Var, grad, register, trace_network
from .exceptions import NonFiniteLossError
from .grid import DensityField, Scaling, make_scaling
from .io import read_csv, read_json, write_csv, write_json
from .mlp import ROLES, NetworkParams, forward, init

logger = logging.getLogger(__name__)

Nets = Dict[str, NetworkParams]

TRACE_HEADER = ("epoch", "train_data", "train_pde", "val_data", "val_pde", "total_val")
FUNCTION_TRACE_HEADER = ("epoch", "U", "D", "G")


@dataclass(frozen=True, eq=False)
class TvSplit:
    """Fixed partition of flat (i, j, s) entry indices into training and validation sets."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    fraction: float
    seed: int

    def __post_init__(self):
        train = np.sort(np.asarray(self.train_idx, dtype=int))
        val = np.sort(np.asarray(self.val_idx, dtype=int))
        if np.intersect1d(train, val).size:
            raise ValueError("training and validation indices overlap")
        train.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "train_idx", train)
        object.__setattr__(self, "val_idx", val)

    @property
    def n_entries(self) -> int:
        return self.train_idx.size + self.val_idx.size

    def to_dict(self) -> dict:
        return {"train_idx": self.train_idx.tolist(), "val_idx": self.val_idx.tolist(),
                "fraction": self.fraction, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "TvSplit":
        return cls(data["train_idx"], data["val_idx"], float(data["fraction"]), int(data["seed"]))


@dataclass
class TrainConfig:
    lambda_data: float = config.lambda_data
    lambda_pde: float = config.lambda_pde
    lambda_bio: float = config.lambda_bio
    n_collocation: Optional[int] = None
    es_patience: int = config.es_patience
    es_improvement: float = config.es_improvement
    learning_rate: float = config.learning_rate
    beta1: float = config.adam_beta1
    beta2: float = config.adam_beta2
    epsilon: float = config.adam_epsilon
    max_epochs: int = config.max_epochs
    train_fraction: float = config.train_fraction
    hidden_widths_u: Tuple[int, ...] = config.hidden_widths_u
    hidden_widths_rate: Tuple[int, ...] = config.hidden_widths_rate
    function_probe_every: int = config.function_probe_every

    def __post_init__(self):
        self.hidden_widths_u = tuple(self.hidden_widths_u)
        self.hidden_widths_rate = tuple(self.hidden_widths_rate)
        if min(self.lambda_data, self.lambda_pde, self.lambda_bio) < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0 < self.es_improvement < 1:
            raise ValueError(f"es_improvement must lie in (0, 1), got {self.es_improvement}")
        if self.n_collocation is not None and self.n_collocation < 1:
            raise ValueError(f"n_collocation must be >= 1, got {self.n_collocation}")
        if self.es_patience < 0 or self.max_epochs < 1:
            raise ValueError("es_patience must be >= 0 and max_epochs >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def collocation_count(self, n_entries: int) -> int:
        if self.n_collocation is not None:
            return self.n_collocation
        return min(config.collocation_per_entry * n_entries, config.collocation_cap)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden_widths_u"] = list(self.hidden_widths_u)
        out["hidden_widths_rate"] = list(self.hidden_widths_rate)
        return out


@dataclass
class EsState:
    """Early-stopping bookkeeping; ``snapshots`` lists every (epoch, val) that improved."""

    patience: int
    improvement: float
    best_val_loss: float = np.inf
    best_params: Optional[Nets] = None
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    snapshots: List[Tuple[int, float]] = field(default_factory=list)

    def update(self, epoch: int, val_loss: float, nets: Nets) -> bool:
        if val_loss < (1.0 - self.improvement) * self.best_val_loss:
            self.best_val_loss = val_loss
            self.best_params = {role: p.copy() for role, p in nets.items()}
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            self.snapshots.append((epoch, val_loss))
            return True
        self.epochs_since_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.epochs_since_improvement >= self.patience


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    train_data: float
    train_pde: float
    val_data: float
    val_pde: float
    total_val: float


# ---------------------------------------------------------------- data and points

def entry_inputs(field: DensityField, scaling: Scaling) -> Tuple[np.ndarray, np.ndarray]:
    """
    Scaled network inputs and targets for every grid entry.

    Returns:
        inputs (N, 3) of (X1, X2, tau) at cell centres and frame times, and
        targets (N,) of U_data, both in flat (i, j, s) order
    """
    c1, c2 = field.cell_centers()
    X1, X2, T = np.meshgrid(scaling.scale_x1(c1), scaling.scale_x2(c2),
                            scaling.scale_t(field.times), indexing="ij")
    inputs = np.column_stack([X1.ravel(), X2.ravel(), T.ravel()])
    return inputs, scaling.scale_density(field.values).ravel()


def tv_split(field: DensityField, fraction: float = config.train_fraction, seed: int = 0) -> TvSplit:
    """
    Random training/validation partition of the grid entries.

    Raises:
        ValueError: if fraction is outside (0, 1) or either set would be empty
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}; a validation set is required")
    n = field.n_entries
    n_train = int(np.floor(fraction * n + 0.5))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"a {fraction} split of {n} entries leaves an empty set")
    order = np.random.default_rng([seed, 2]).permutation(n)
    return TvSplit(order[:n_train], order[n_train:], float(fraction), int(seed))


def sample_collocation(box: Sequence[float], n_c: int, seed) -> np.ndarray:
    """
    n_c i.i.d. uniform points in the scaled box [0, box[0]] x [0, box[1]] x [0, box[2]].

    ``seed`` may be an int or a sequence of ints.
    """
    if n_c < 1:
        raise ValueError(f"n_c must be >= 1, got {n_c}")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n_c, 3)) * np.asarray(box, dtype=float)


# ---------------------------------------------------------------- losses on a tape

def _activations(params: NetworkParams) -> List[str]:
    return [act for _, _, act in params.layers]


def _register(tape: Tape, nets: Nets, trainable: bool) -> Dict[str, List[Tuple[Var, Var]]]:
    return {role: register(tape, nets[role].layers, trainable) for role in ROLES if role in nets}


def _record_data(tape: Tape, nets: Nets, layer_vars, inputs: np.ndarray, targets: np.ndarray) -> Var:
    out = trace_network(tape, layer_vars["u"], _activations(nets["u"]), tape.constant(inputs))
    pred = tape.component(out, "value")
    return tape.mean(tape.square(tape.sub(pred, tape.constant(targets.reshape(-1, 1)))))


def _record_residual(tape: Tape, nets: Nets, layer_vars, points: np.ndarray) -> Var:
    u = trace_network(tape, layer_vars["u"], _activations(nets["u"]),
                      tape.constant(Dual2.seed(points, (0, 1, 2))))
    u_val = tape.component(u, "value")
    u_x1, u_x2, u_t = (tape.component(u, "d1", a) for a in (0, 1, 2))
    u_x1x1, u_x2x2 = (tape.component(u, "d2", a) for a in (0, 1))

    d = trace_network(tape, layer_vars["D"], _activations(nets["D"]), tape.lift(u_val, k=1))
    D, D_prime = tape.component(d, "value"), tape.component(d, "d1", 0)
    g = trace_network(tape, layer_vars["G"], _activations(nets["G"]), tape.lift(u_val, k=0))
    G = tape.component(g, "value")

    grad_sq = tape.add(tape.square(u_x1), tape.square(u_x2))
    laplacian = tape.add(u_x1x1, u_x2x2)
    r = tape.sub(u_t, tape.mul(D_prime, grad_sq))
    r = tape.sub(r, tape.mul(D, laplacian))
    return tape.sub(r, tape.mul(G, u_val))


def bio_loss(nets: Nets) -> float:
    """Biological-plausibility penalty; no form is imposed, so it is zero."""
    return 0.0


def _record_total(tape: Tape, nets: Nets, layer_vars, inputs, targets, points,
                  cfg: TrainConfig) -> Tuple[Var, Dict[str, float]]:
    l_data = _record_data(tape, nets, layer_vars, inputs, targets)
    l_pde = tape.mean(tape.square(_record_residual(tape, nets, layer_vars, points)))
    l_bio = tape.constant(bio_loss(nets))
    total = tape.combine([(cfg.lambda_data, l_data), (cfg.lambda_pde, l_pde), (cfg.lambda_bio, l_bio)])
    components = {"data": float(l_data.primal), "pde": float(l_pde.primal), "bio": float(l_bio.primal)}
    return total, components


def _nets(theta_u, theta_D=None, theta_G=None) -> Nets:
    nets = {"u": theta_u}
    if theta_D is not None:
        nets["D"] = theta_D
    if theta_G is not None:
        nets["G"] = theta_G
    return nets


def data_loss(theta_u: NetworkParams, field: DensityField, idx, scaling: Optional[Scaling] = None) -> float:
    """
    Mean squared scaled error of NN_u over the given flat entry indices.

    Raises:
        ValueError: if idx is empty
    """
    idx = np.asarray(idx, dtype=int).ravel()
    if idx.size == 0:
        raise ValueError("data_loss needs at least one entry")
    inputs, targets = entry_inputs(field, scaling or make_scaling(field))
    nets = _nets(theta_u)
    tape = Tape()
    return float(_record_data(tape, nets, _register(tape, nets, False), inputs[idx], targets[idx]).primal)


def pde_residual(theta_u: NetworkParams, theta_D: NetworkParams, theta_G: NetworkParams,
                 points) -> Union[float, np.ndarray]:
    """Residual at one scaled point (3,) or at an (N, 3) batch."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    nets = _nets(theta_u, theta_D, theta_G)
    tape = Tape()
    r = _record_residual(tape, nets, _register(tape, nets, False), pts.reshape(-1, 3)).primal[:, 0]
    return float(r[0]) if single else r


def pde_loss(theta_u: NetworkParams, theta_D: NetworkParams, theta_G: NetworkParams, points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("pde_loss needs at least one collocation point")
    r = pde_residual(theta_u, theta_D, theta_G, pts)
    return float(np.mean(r ** 2))


def total_loss(theta_u: NetworkParams, theta_D: NetworkParams, theta_G: NetworkParams,
               field: DensityField, split: TvSplit, points, cfg: Optional[TrainConfig] = None,
               scaling: Optional[Scaling] = None) -> Tuple[float, Dict[str, float]]:
    """Weighted total over the training entries, with its components."""
    cfg = cfg or TrainConfig()
    inputs, targets = entry_inputs(field, scaling or make_scaling(field))
    nets = _nets(theta_u, theta_D, theta_G)
    tape = Tape()
    total, components = _record_total(tape, nets, _register(tape, nets, False),
                                      inputs[split.train_idx], targets[split.train_idx],
                                      np.asarray(points, dtype=float).reshape(-1, 3), cfg)
    return float(total.primal), components


def loss_gradient(nets: Nets, inputs, targets, points, cfg: TrainConfig
                  ) -> Tuple[float, Dict[str, float], Dict[str, List[np.ndarray]]]:
    """Total loss, its components and the gradient for every parameter array, per role."""
    tape = Tape()
    layer_vars = _register(tape, nets, True)
    total, components = _record_total(tape, nets, layer_vars, inputs, targets, points, cfg)
    flat = [v for role in ROLES for W, b in layer_vars[role] for v in (W, b)]
    grads = iter(grad(tape, total, flat))
    per_role = {role: [next(grads) for _ in range(2 * len(layer_vars[role]))] for role in ROLES}
    return float(total.primal), components, per_role


# ---------------------------------------------------------------- optimiser

class Adam:
    def __init__(self, nets: Nets, lr: float, beta1: float, beta2: float, epsilon: float):
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.t = 0
        self.m = {role: [np.zeros_like(a) for a in p.arrays()] for role, p in nets.items()}
        self.v = {role: [np.zeros_like(a) for a in p.arrays()] for role, p in nets.items()}

    def step(self, nets: Nets, grads: Dict[str, List[np.ndarray]]) -> Nets:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        updated = {}
        for role, params in nets.items():
            arrays = []
            for a, g, m, v in zip(params.arrays(), grads[role], self.m[role], self.v[role]):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                arrays.append(a - self.lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon))
            updated[role] = params.with_arrays(arrays)
        return updated


# ---------------------------------------------------------------- model

@dataclass(eq=False)
class BinnModel:
    """Trained networks of one TV split together with their provenance."""

    theta_u: NetworkParams
    theta_D: NetworkParams
    theta_G: NetworkParams
    scaling: Scaling
    split: TvSplit
    trace: List[TraceRow]
    stopped_epoch: int
    best_epoch: int
    seed: int
    config: TrainConfig
    train_densities: np.ndarray
    function_trace: List[Tuple[int, float, float, float]] = field(default_factory=list)
    full_data_loss: float = float("nan")
    wall_clock: float = 0.0

    @property
    def best_val_loss(self) -> float:
        for row in self.trace:
            if row.epoch == self.best_epoch:
                return row.total_val
        return float("nan")

    def diffusion(self, U) -> np.ndarray:
        """Physical D (mm^2/day) at scaled densities U."""
        return self.scaling.unscale_diffusivity(forward(self.theta_D, np.asarray(U, dtype=float).ravel()))

    def growth(self, U) -> np.ndarray:
        """Physical G (1/day) at scaled densities U."""
        return self.scaling.unscale_growth(forward(self.theta_G, np.asarray(U, dtype=float).ravel()))

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for role, params in (("u", self.theta_u), ("D", self.theta_D), ("G", self.theta_G)):
            params.save(directory / f"nn_{role}.json")
        write_csv(directory / "trace.csv", TRACE_HEADER, (asdict(r).values() for r in self.trace))
        write_csv(directory / "function_trace.csv", FUNCTION_TRACE_HEADER, self.function_trace)
        write_json(directory / "model.json", {
            "scaling": self.scaling.to_dict(),
            "split": self.split.to_dict(),
            "seed": self.seed,
            "derived_seeds": derived_seeds(self.seed),
            "train_config": self.config.to_dict(),
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "full_data_loss": self.full_data_loss,
            "train_densities": self.train_densities.tolist(),
            "residual_form": config.residual_form,
            "es_validation": config.es_validation_components,
        })
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "BinnModel":
        directory = Path(directory)
        meta = read_json(directory / "model.json")
        trace = [TraceRow(int(r["epoch"]), *(float(r[k]) for k in TRACE_HEADER[1:]))
                 for r in read_csv(directory / "trace.csv")]
        function_trace = [(int(r["epoch"]), float(r["U"]), float(r["D"]), float(r["G"]))
                          for r in read_csv(directory / "function_trace.csv")]
        return cls(
            theta_u=NetworkParams.load(directory / "nn_u.json"),
            theta_D=NetworkParams.load(directory / "nn_D.json"),
            theta_G=NetworkParams.load(directory / "nn_G.json"),
            scaling=Scaling.from_dict(meta["scaling"]),
            split=TvSplit.from_dict(meta["split"]),
            trace=trace,
            stopped_epoch=int(meta["stopped_epoch"]),
            best_epoch=int(meta["best_epoch"]),
            seed=int(meta["seed"]),
            config=TrainConfig(**meta["train_config"]),
            train_densities=np.asarray(meta["train_densities"], dtype=float),
            function_trace=function_trace,
            full_data_loss=float(meta["full_data_loss"]),
        )


def derived_seeds(seed: int) -> dict:
    """Every RNG stream a training job draws from, keyed by purpose."""
    return {
        "split": [seed, 2],
        "init_u": 3 * seed,
        "init_D": 3 * seed + 1,
        "init_G": 3 * seed + 2,
        "collocation": [seed, 0, "epoch"],
        "validation_collocation": [seed, 1],
    }


# ---------------------------------------------------------------- trainer

class BinnTrainer:
    """
    Training loop for one TV split.

    Usage::

        trainer = BinnTrainer(field, cfg, seed)
        model = trainer.fit()
    """

    def __init__(self, field: DensityField, cfg: Optional[TrainConfig] = None, seed: int = 0,
                 split: Optional[TvSplit] = None):
        self.field = field
        self.cfg = cfg or TrainConfig()
        self.seed = int(seed)
        self.scaling = make_scaling(field)
        self.split = split or tv_split(field, self.cfg.train_fraction, self.seed)
        self.inputs, self.targets = entry_inputs(field, self.scaling)
        self.box = self.scaling.scaled_box(field.domain)
        self.n_collocation = self.cfg.collocation_count(field.n_entries)
        self.val_points = sample_collocation(
            self.box, min(self.n_collocation, config.validation_collocation_cap), [self.seed, 1])
        self.nets: Nets = {
            "u": init("u", 3 * self.seed, self.cfg.hidden_widths_u),
            "D": init("D", 3 * self.seed + 1, self.cfg.hidden_widths_rate),
            "G": init("G", 3 * self.seed + 2, self.cfg.hidden_widths_rate),
        }
        self.optimizer = Adam(self.nets, self.cfg.learning_rate, self.cfg.beta1,
                              self.cfg.beta2, self.cfg.epsilon)
        self.probe = np.linspace(0.0, 1.0, config.function_probe_points)

    def collocation(self, epoch: int) -> np.ndarray:
        return sample_collocation(self.box, self.n_collocation, [self.seed, 0, epoch])

    def step(self, points: np.ndarray) -> Tuple[float, Dict[str, float]]:
        """One Adam update on the training entries and the given points; returns the pre-step loss."""
        idx = self.split.train_idx
        total, components, grads = loss_gradient(self.nets, self.inputs[idx], self.targets[idx],
                                                 points, self.cfg)
        self.nets = self.optimizer.step(self.nets, grads)
        return total, components

    def validation(self) -> Tuple[float, float]:
        idx = self.split.val_idx
        tape = Tape()
        layer_vars = _register(tape, self.nets, False)
        val_data = float(_record_data(tape, self.nets, layer_vars, self.inputs[idx], self.targets[idx]).primal)
        val_pde = pde_loss(self.nets["u"], self.nets["D"], self.nets["G"], self.val_points)
        return val_data, val_pde

    def _probe_functions(self, epoch: int, rows: list):
        D = self.scaling.unscale_diffusivity(forward(self.nets["D"], self.probe))
        G = self.scaling.unscale_growth(forward(self.nets["G"], self.probe))
        rows.extend((epoch, float(U), float(d), float(g)) for U, d, g in zip(self.probe, D, G))

    def fit(self) -> BinnModel:
        cfg = self.cfg
        es = EsState(cfg.es_patience, cfg.es_improvement)
        trace: List[TraceRow] = []
        function_trace: list = []
        started = time.perf_counter()
        logger.info(f"training split seed {self.seed}: {self.split.train_idx.size} train / "
                    f"{self.split.val_idx.size} val entries, n_c={self.n_collocation}, "
                    f"patience {cfg.es_patience}")

        epoch = 0
        for epoch in range(1, cfg.max_epochs + 1):
            _, components = self.step(self.collocation(epoch))
            for name, value in components.items():
                if not np.isfinite(value):
                    logger.error(f"split seed {self.seed}: non-finite {name} loss at epoch {epoch}")
                    raise NonFiniteLossError(epoch, name, value)
            val_data, val_pde = self.validation()
            total_val = cfg.lambda_data * val_data + cfg.lambda_pde * val_pde
            if not np.isfinite(total_val):
                raise NonFiniteLossError(epoch, "validation", total_val)
            trace.append(TraceRow(epoch, components["data"], components["pde"], val_data, val_pde, total_val))
            es.update(epoch, total_val, self.nets)

            if cfg.function_probe_every and epoch % cfg.function_probe_every == 0:
                self._probe_functions(epoch, function_trace)
            if epoch % 500 == 0:
                logger.debug(f"seed {self.seed} epoch {epoch}: train data {components['data']:.3e} "
                             f"pde {components['pde']:.3e}, val {total_val:.3e}")
            if es.should_stop:
                break

        self.nets = es.best_params
        all_idx = np.arange(self.field.n_entries)
        full = data_loss(self.nets["u"], self.field, all_idx, self.scaling)
        elapsed = time.perf_counter() - started
        logger.info(f"split seed {self.seed} stopped at epoch {epoch}, best epoch {es.best_epoch} "
                    f"(val {es.best_val_loss:.4e}) in {elapsed:.1f}s")
        return BinnModel(
            theta_u=self.nets["u"], theta_D=self.nets["D"], theta_G=self.nets["G"],
            scaling=self.scaling, split=self.split, trace=trace, stopped_epoch=epoch,
            best_epoch=es.best_epoch, seed=self.seed, config=cfg,
            train_densities=self.targets[self.split.train_idx].copy(),
            function_trace=function_trace, full_data_loss=full, wall_clock=elapsed,
        )


def train(field: DensityField, cfg: Optional[TrainConfig] = None, seed: int = 0) -> BinnModel:
    """
    Train the three networks on one TV split.

    Raises:
        DegenerateScalingError: if the field is identically zero
        NonFiniteLossError: if a loss component becomes NaN or infinite
    """
    return BinnTrainer(field, cfg, seed).fit()
