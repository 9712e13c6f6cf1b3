"""Joint optimization of the aperture code and the blur-size classifier."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ..exceptions import DegenerateCodeError
from . import network
from .chain import AnnealSchedule, CodeConfig, coded_features, hard_binarize, loss_and_gradients, soft_binarize
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import make_optimizer


@dataclass
class TrainConfig:
    batch_size: int = 128
    iterations: int = 10000
    learning_rate: float = 1e-3
    code_learning_rate: float = None
    seed: int = 0
    optimizer: str = "adam"
    binarize_threshold: float = 0.5
    code_size: int = 11
    eval_every: int = 500
    checkpoint_every: int = 1000
    finetune_iterations: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0 or self.finetune_iterations < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.code_size % 2 == 0:
            raise ValueError("code_size must be odd")


@dataclass
class TrainResult:
    code: np.ndarray
    W: np.ndarray
    params: dict
    log: list = field(default_factory=list)
    val_accuracy: float = None
    soft_code: np.ndarray = None


def init_state(cfg, net_cfg):
    rng = np.random.default_rng(cfg.seed)
    W = rng.uniform(-0.5, 0.5, (cfg.code_size, cfg.code_size))
    params = network.init_params(net_cfg, rng, dtype=np.dtype(cfg.dtype))
    return W, params


def evaluate(val_set, C, params, net_cfg, code_cfg):
    """Patch classification accuracy of ``params`` on all-focus ``val_set`` blurred by ``C``."""
    patches, sizes = val_set
    if len(sizes) == 0:
        return float("nan")
    F = coded_features(patches, sizes, C, code_cfg)
    pred = np.argmax(network.predict_log_proba(F, params, net_cfg), axis=1)
    return float(np.mean(pred == code_cfg.class_index(sizes)))


def _draw(dataset, n):
    if hasattr(dataset, "draw"):
        return dataset.draw(n)
    pairs = [next(dataset) for _ in range(n)]
    return np.stack([p for p, _ in pairs]), np.array([s for _, s in pairs])


class _LogWriter:
    def __init__(self, path, header, append):
        self.fh = None
        if path is not None:
            self.fh = open(path, "a" if append else "w")
            if not append:
                for k, v in header.items():
                    self.fh.write(f"# {k}={v}\n")
                self.fh.write("iteration,alpha,loss,val_accuracy\n")

    def write(self, row):
        if self.fh is not None:
            t, a, loss, acc = row
            acc_s = "" if acc is None else format(acc, ".17g")
            self.fh.write(f"{t},{a:.17g},{loss:.17g},{acc_s}\n")

    def close(self):
        if self.fh is not None:
            self.fh.close()


def _save(path, W, params, opt, t, schedule, cfg, net_cfg, code_cfg, dataset, phase):
    arrays = {"W": W}
    arrays.update({f"param/{k}": v for k, v in params.items()})
    arrays.update({f"opt/{k}": v for k, v in opt.state_arrays().items()})
    meta = {
        "iteration": t,
        "phase": phase,
        "optimizer_t": opt.t,
        "schedule": asdict(schedule),
        "train_config": asdict(cfg),
        "network": net_cfg.to_dict(),
        "code_config": {"scales": list(code_cfg.scales), "patch_size": code_cfg.patch_size,
                        "eps": code_cfg.eps, "magnitude": code_cfg.magnitude},
        "seed": cfg.seed,
        "stream_state": dataset.get_state() if hasattr(dataset, "get_state") else None,
    }
    save_checkpoint(path, arrays, meta)


def load_model(path):
    """``(W, params, net_cfg, code_cfg, meta)`` from a checkpoint."""
    arrays, meta = load_checkpoint(path)
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    net_cfg = network.NetworkConfig(**meta["network"])
    code_cfg = CodeConfig(**meta["code_config"])
    if "code" in arrays:
        meta["code"] = arrays["code"]
    return arrays["W"], params, net_cfg, code_cfg, meta


def train(dataset, code_cfg=None, cfg=None, schedule=None, net_cfg=None, val_set=None,
          log_path=None, checkpoint_path=None, resume=None, stop_after=None):
    """Run ``cfg.iterations`` joint steps, then threshold the code.

    ``dataset`` yields all-focus ``(patch, blur size)`` pairs; an object
    with ``draw(n)`` is used directly. ``resume`` names a checkpoint to
    continue from; ``stop_after`` halts after that many total iterations
    (leaving a checkpoint), which simulates an interruption.
    """
    code_cfg = CodeConfig() if code_cfg is None else code_cfg
    cfg = TrainConfig() if cfg is None else cfg
    schedule = AnnealSchedule() if schedule is None else schedule
    if net_cfg is None:
        net_cfg = network.NetworkConfig(n_classes=len(code_cfg.scales), patch_size=code_cfg.patch_size)
    if net_cfg.n_classes != len(code_cfg.scales):
        raise ValueError("network output width must equal the number of scale classes")

    W, params = init_state(cfg, net_cfg)
    rates = {} if cfg.code_learning_rate is None else {"W": cfg.code_learning_rate}
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate, rates)
    start = 0
    if resume is not None:
        arrays, meta = load_checkpoint(resume)
        W = arrays["W"]
        params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
        opt.load_state(meta["optimizer_t"], {k[4:]: v for k, v in arrays.items() if k.startswith("opt/")})
        start = meta["iteration"]
        if meta.get("stream_state") is not None and hasattr(dataset, "set_state"):
            dataset.set_state(meta["stream_state"])
    header = {
        "network": json.dumps(net_cfg.to_dict(), sort_keys=True),
        "train_config": json.dumps(asdict(cfg), sort_keys=True),
        "schedule": json.dumps(asdict(schedule), sort_keys=True),
        "scales": " ".join(str(s) for s in code_cfg.scales),
    }
    logw = _LogWriter(log_path, header, append=resume is not None)
    log = []
    total = cfg.iterations + cfg.finetune_iterations
    end = total if stop_after is None else min(total, stop_after)
    binary = None
    try:
        with threadpool_limits(limits=1, user_api="blas"):
            theta = dict(params)
            theta["W"] = W
            for t in range(start, end):
                patches, sizes = _draw(dataset, cfg.batch_size)
                if t < cfg.iterations:
                    alpha = schedule.alpha(t)
                    loss, dW, grads = loss_and_gradients(patches, sizes, theta["W"], alpha, params, net_cfg, code_cfg)
                    grads["W"] = dW
                else:
                    # network-only refinement against the thresholded code
                    alpha = schedule.alpha(cfg.iterations)
                    if binary is None:
                        binary = hard_binarize(soft_binarize(theta["W"], alpha), cfg.binarize_threshold)
                    loss, _, grads = loss_and_gradients(
                        patches, sizes, None, alpha, params, net_cfg, code_cfg, code=binary)
                opt.step(theta, grads)
                for k in params:
                    params[k] = theta[k]
                acc = None
                if val_set is not None and cfg.eval_every and (t + 1) % cfg.eval_every == 0:
                    C_eval = soft_binarize(theta["W"], alpha) if t < cfg.iterations else binary
                    acc = evaluate(val_set, C_eval, params, net_cfg, code_cfg)
                row = (t, alpha, loss, acc)
                log.append(row)
                logw.write(row)
                if checkpoint_path is not None and (
                    (cfg.checkpoint_every and (t + 1) % cfg.checkpoint_every == 0) or t + 1 == end
                ):
                    _save(checkpoint_path, theta["W"], params, opt, t + 1, schedule, cfg, net_cfg,
                          code_cfg, dataset, "joint" if t + 1 <= cfg.iterations else "finetune")
            W = theta["W"]
    finally:
        logw.close()
    alpha_final = schedule.alpha(cfg.iterations)
    soft = soft_binarize(W, alpha_final)
    if end < total:
        return TrainResult(code=None, W=W, params=params, log=log, soft_code=soft)
    try:
        code = hard_binarize(soft, cfg.binarize_threshold)
    except DegenerateCodeError:
        raise DegenerateCodeError("training produced an all-zero code") from None
    val_acc = evaluate(val_set, code, params, net_cfg, code_cfg) if val_set is not None else None
    return TrainResult(code=code, W=W, params=params, log=log, val_accuracy=val_acc, soft_code=soft)
