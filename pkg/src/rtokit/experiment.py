"""End-to-end pipelines: synthetic data, sampling runs, artifact files.

The offline phase of the surrogate methods (reference point and Jacobian
with the true solver, design, snapshot evaluation, training) is timed
separately from the online phase, which touches only the trained network.
Direct sampling charges everything to the online phase.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import design, diagnostics, fem, fields, forward_model, mlp, rto, seeding
from .config import RunConfig
from .whitening import LinearMisfit, SurrogateMisfit, WhitenedProblem

PHASE_SETUP = "setup"
PHASE_OFFLINE = "offline"
PHASE_ONLINE = "online"
PHASE_REPORT = "report"


class PhaseError(RuntimeError):
    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[phase={phase}] {cause}")


def default_sensors(kind: str) -> np.ndarray:
    """Documented sensor layouts.

    rbf9: an 8x8 interior grid on [0.1, 0.9]^2 plus 7 near-boundary points
    along x2 = 0.95, 71 sensors total.  kl: a 9x9 grid on [0.1, 0.9]^2 with
    spacing 0.1, 81 sensors.
    """
    if kind == "rbf9":
        side = np.linspace(0.1, 0.9, 8)
        g1, g2 = np.meshgrid(side, side, indexing="xy")
        interior = np.column_stack([g1.ravel(), g2.ravel()])
        extra = np.column_stack([np.linspace(0.1, 0.9, 7), np.full(7, 0.95)])
        return np.vstack([interior, extra])
    if kind == "kl":
        side = np.linspace(0.1, 0.9, 9)
        g1, g2 = np.meshgrid(side, side, indexing="xy")
        return np.column_stack([g1.ravel(), g2.ravel()])
    raise ValueError(f"no default sensor layout for problem kind {kind!r}")


def load_sensors(path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    if pts.shape[1] != 2:
        raise ValueError("sensor file must have two columns: x,y")
    return pts


@dataclass
class ProblemBundle:
    """Everything the sampler needs, plus the maps used for reporting."""

    whitened: WhitenedProblem          # true-model evaluator
    pde: forward_model.ForwardProblem | None # None for the linear self-test kind
    kind: str

    def kappa_parameters(self, u: np.ndarray) -> np.ndarray:
        """Natural positive parameters used for error metrics."""
        if self.pde is None:
            return np.asarray(u, dtype=float)
        return self.pde.parameterization.kappa_parameters(u)

    def kappa_samples(self, whitened_samples: np.ndarray) -> np.ndarray:
        return np.array(
            [self.kappa_parameters(self.whitened.unwhiten(v)) for v in np.atleast_2d(whitened_samples)]
        )


def _sensors_from_config(cfg: RunConfig) -> np.ndarray:
    if cfg.problem.sensors == "default":
        return default_sensors(cfg.problem.example)
    return load_sensors(cfg.problem.sensors)


def _linear_operator(cfg: RunConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.problem.linear_seed)
    return rng.standard_normal((cfg.problem.linear_obs, cfg.problem.linear_dim)) / np.sqrt(
        cfg.problem.linear_dim
    )


def _pde_problem(cfg: RunConfig, sensors: np.ndarray, noise_std: np.ndarray) -> forward_model.ForwardProblem:
    mesh = fem.Mesh(cfg.problem.mesh_cells)
    if cfg.problem.example == "rbf9":
        param = fields.RbfWeights.default(mesh)
    else:
        basis = fields.kl_decompose(
            mesh, cfg.problem.kl_variance, cfg.problem.kl_length, cfg.problem.kl_modes
        )
        param = fields.KlModes(basis=basis)
    n = param.n_params
    return forward_model.ForwardProblem(
        mesh=mesh,
        parameterization=param,
        source=fem.benchmark_source(mesh),
        bcs=fem.BoundaryConditions.benchmark(),
        obs=fem.ObservationOperator.build(mesh, sensors),
        noise_std=np.asarray(noise_std, dtype=float),
        prior_mean=np.zeros(n),
        prior_cov=np.eye(n),
    )


def true_parameters(cfg: RunConfig) -> np.ndarray:
    """Seeded ground truth used by generate_data.

    rbf9 draws the positive kernel weights uniformly from [0.5, 2] and
    works with their logs; the other kinds draw standard-normal
    coefficients.
    """
    rng = seeding.stream_rng(cfg.sampler.master_seed, "data-noise", 0)
    if cfg.problem.example == "rbf9":
        return np.log(rng.uniform(0.5, 2.0, size=9))
    if cfg.problem.example == "kl":
        return rng.standard_normal(cfg.problem.kl_modes)
    return rng.standard_normal(cfg.problem.linear_dim)


def generate_data(cfg: RunConfig) -> dict:
    """Simulate the truth, add seeded noise, write data/meta/truth files."""
    out_dir = Path(cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    u_true = true_parameters(cfg)
    noise = seeding.stream_rng(cfg.sampler.master_seed, "data-noise", 1)
    if cfg.problem.example == "linear":
        A = _linear_operator(cfg)
        clean = A @ u_true
        noise_std = cfg.problem.noise_std
        sensors = np.column_stack([np.arange(clean.shape[0], dtype=float), np.zeros(clean.shape[0])])
    else:
        sensors = _sensors_from_config(cfg)
        problem = _pde_problem(cfg, sensors, np.ones(sensors.shape[0]))
        clean = forward_model.forward(problem, u_true)
        if cfg.problem.example == "rbf9":
            noise_std = cfg.problem.noise_delta * np.max(np.abs(clean))
        else:
            noise_std = cfg.problem.noise_std
    values = clean + noise_std * noise.standard_normal(clean.shape[0])

    data_path = _data_path(cfg)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    with open(data_path, "w") as fh:
        fh.write("sensor_x,sensor_y,value\n")
        for (x, y), val in zip(sensors, values):
            fh.write(f"{x:.17g},{y:.17g},{val:.17g}\n")
    meta_path = Path(str(data_path) + ".meta")
    with open(meta_path, "w") as fh:
        fh.write(f"example={cfg.problem.example}\n")
        fh.write(f"noise_std={float(noise_std):.17g}\n")
        fh.write(f"master_seed={cfg.sampler.master_seed}\n")
    truth_path = out_dir / "truth.csv"
    with open(truth_path, "w") as fh:
        fh.write("parameter,value\n")
        for i, val in enumerate(u_true):
            fh.write(f"u{i+1},{val:.17g}\n")
    return {"data": data_path, "meta": meta_path, "truth": truth_path}


def _data_path(cfg: RunConfig) -> Path:
    if cfg.problem.data_file:
        return Path(cfg.problem.data_file)
    return Path(cfg.output.directory) / "data.csv"


def load_data(path) -> tuple[np.ndarray, np.ndarray]:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != 3:
        raise ValueError("data file must have columns sensor_x,sensor_y,value")
    return table[:, :2], table[:, 2]


def read_meta(data_path) -> dict:
    meta_path = Path(str(data_path) + ".meta")
    if not meta_path.exists():
        return {}
    out = {}
    for line in meta_path.read_text().splitlines():
        if "=" in line:
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def build_bundle(cfg: RunConfig) -> ProblemBundle:
    """Assemble the whitened inverse problem from the config and data files."""
    data_path = _data_path(cfg)
    sensors, values = load_data(data_path)
    kind = cfg.problem.example
    if kind == "linear":
        A = _linear_operator(cfg)
        if values.shape[0] != A.shape[0]:
            raise ValueError("data length does not match problem.linear_obs")
        sigma = cfg.problem.noise_std
        evaluator = LinearMisfit(A / sigma, values / sigma)
        whitened = WhitenedProblem(
            evaluator=evaluator,
            s_pr=np.eye(A.shape[1]),
            u_pr=np.zeros(A.shape[1]),
            s_obs=sigma * np.eye(A.shape[0]),
            data=values,
        )
        return ProblemBundle(whitened=whitened, pde=None, kind=kind)
    meta = read_meta(data_path)
    if kind == "rbf9":
        if "noise_std" in meta:
            noise_std = float(meta["noise_std"])
        else:
            noise_std = cfg.problem.noise_delta * np.max(np.abs(values))
    else:
        noise_std = float(meta.get("noise_std", cfg.problem.noise_std))
    if noise_std <= 0.0:
        raise ValueError("noise standard deviation must be positive for inference")
    problem = _pde_problem(cfg, sensors, np.full(values.shape[0], noise_std))
    whitened = WhitenedProblem.from_forward(problem, values)
    return ProblemBundle(whitened=whitened, pde=problem, kind=kind)


@dataclass
class RunResult:
    chain: rto.ChainResult
    bundle: ProblemBundle
    diagnostics_row: dict
    seconds_offline: float
    seconds_online: float
    n_train: int
    surrogate: mlp.MlpSurrogate | None
    artifact_paths: dict


def _train_surrogate(cfg: RunConfig, bundle: ProblemBundle, v_ref: np.ndarray) -> tuple[mlp.MlpSurrogate, int]:
    goal_oriented = cfg.sampler.method == "dnn-rto"
    rng = seeding.stream_rng(cfg.sampler.master_seed, "design")
    points = design.design_points(
        bundle.whitened,
        v_ref,
        cfg.surrogate.n_train,
        rng,
        goal_oriented=goal_oriented,
        rank_threshold=cfg.sampler.rank_threshold,
    )
    training_set = design.build_training_set(bundle.whitened, points)
    arch = mlp.MlpArchitecture.uniform(
        n_in=bundle.whitened.n_params,
        n_out=bundle.whitened.n_observations,
        depth=cfg.resolved_hidden_layers(),
        width=cfg.resolved_hidden_width(),
    )
    options = mlp.TrainOptions(
        learning_rate=cfg.surrogate.learning_rate,
        epochs=cfg.surrogate.epochs,
        seed=seeding.stream_seq(cfg.sampler.master_seed, "init", cfg.surrogate.seed),
        loss_tol=cfg.surrogate.loss_tol,
    )
    net = mlp.train(arch, training_set, options)
    return net, training_set.size


def run_experiment(cfg: RunConfig) -> RunResult:
    out_dir = Path(cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        bundle = build_bundle(cfg)
    except Exception as exc:
        raise PhaseError(PHASE_SETUP, exc) from exc

    method = cfg.sampler.method
    solver_options = rto.SolverOptions(
        gtol=cfg.sampler.gtol,
        steptol=cfg.sampler.steptol,
        max_iter=cfg.sampler.max_iterations,
    )
    surrogate = None
    n_train = 0
    seconds_offline = 0.0

    if method == "rto":
        sampling_problem = bundle.whitened
        v_ref = None
    else:
        t0 = time.perf_counter()
        try:
            v_ref = rto.find_reference(bundle.whitened, options=solver_options)
            surrogate, n_train = _train_surrogate(cfg, bundle, v_ref)
            mlp.save_surrogate(surrogate, out_dir / "surrogate.bin")
        except Exception as exc:
            raise PhaseError(PHASE_OFFLINE, exc) from exc
        seconds_offline = time.perf_counter() - t0
        sampling_problem = bundle.whitened.with_evaluator(SurrogateMisfit(surrogate))

    try:
        chain, subspace = rto.run_chain(
            sampling_problem,
            cfg.sampler.n_samples,
            cfg.sampler.master_seed,
            rank_threshold=cfg.sampler.rank_threshold,
            options=solver_options,
            workers=cfg.sampler.workers,
            v_ref=v_ref,
        )
    except Exception as exc:
        raise PhaseError(PHASE_ONLINE, exc) from exc
    seconds_online = chain.seconds["online"]

    try:
        ess_rep = diagnostics.ess_report(chain.samples, seconds_online)
        errors = None
        if cfg.output.reference_samples:
            reference = np.loadtxt(cfg.output.reference_samples, delimiter=",", skiprows=1, ndmin=2)
            errors = diagnostics.error_metrics(
                bundle.kappa_samples(chain.samples), bundle.kappa_samples(reference)
            )
        row = diagnostics.diagnostics_row(
            method=method,
            n_train=n_train,
            acceptance_rate=chain.acceptance_rate,
            seconds_offline=seconds_offline,
            seconds_online=seconds_online,
            ess_rep=ess_rep,
            errors=errors,
        )
        paths = _write_artifacts(cfg, bundle, chain, row, seconds_offline, seconds_online)
    except PhaseError:
        raise
    except Exception as exc:
        raise PhaseError(PHASE_REPORT, exc) from exc

    return RunResult(
        chain=chain,
        bundle=bundle,
        diagnostics_row=row,
        seconds_offline=seconds_offline,
        seconds_online=seconds_online,
        n_train=n_train,
        surrogate=surrogate,
        artifact_paths=paths,
    )


def write_samples_csv(path, samples: np.ndarray) -> None:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    with open(path, "w") as fh:
        fh.write(",".join(f"v{j+1}" for j in range(samples.shape[1])) + "\n")
        for row in samples:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_samples_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _write_artifacts(cfg, bundle, chain, row, seconds_offline, seconds_online) -> dict:
    out_dir = Path(cfg.output.directory)
    paths = {}
    if cfg.output.emit_samples:
        paths["samples"] = out_dir / "samples.csv"
        write_samples_csv(paths["samples"], chain.samples)
    paths["diagnostics"] = out_dir / "diagnostics.csv"
    diagnostics.write_diagnostics_csv(paths["diagnostics"], [row])
    if bundle.pde is not None:
        mean, std = diagnostics.field_summaries(
            chain.samples, bundle.whitened, bundle.pde, cfg.output.field_quantity
        )
        paths["fields"] = out_dir / "fields.csv"
        nodes = bundle.pde.mesh.nodes
        with open(paths["fields"], "w") as fh:
            fh.write("x,y,mean,std\n")
            for (x, y), m, s in zip(nodes, mean, std):
                fh.write(f"{x:.17g},{y:.17g},{m:.17g},{s:.17g}\n")
    paths["manifest"] = out_dir / "manifest.txt"
    _write_manifest(paths["manifest"], cfg, row, seconds_offline, seconds_online)
    return paths


def _write_manifest(path, cfg: RunConfig, row, seconds_offline, seconds_online) -> None:
    import numpy
    import scipy

    from . import __version__

    lines = [
        f"config_hash={cfg.config_hash()}",
        f"master_seed={cfg.sampler.master_seed}",
        f"rtokit_version={__version__}",
        f"numpy_version={numpy.__version__}",
        f"scipy_version={scipy.__version__}",
        f"python_version={sys.version.split()[0]}",
        f"seconds_offline={seconds_offline:.6f}",
        f"seconds_online={seconds_online:.6f}",
        f"acceptance_rate={row['AP']:.10g}",
    ]
    lines.extend(f"config.{key}={value}" for key, value in cfg.canonical_items())
    Path(path).write_text("\n".join(lines) + "\n")
