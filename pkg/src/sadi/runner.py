"""Experiment orchestration: replicated runs, aggregation, sweeps, and the
CSV/report artifacts.  All file output carries the config fingerprint and
seed in a header comment, and results are byte-identical for any thread
count.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, validate_config
from .engine import run, run_ensemble
from .rates import NormalizedSeries, SDIModel, compare_to_sdi, tightness_diagnostic

__all__ = ["StartAggregate", "AggregateReport", "run_experiment", "sweep",
           "set_by_path", "write_report_csv"]


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


@dataclass
class StartAggregate:
    start: np.ndarray
    finals: np.ndarray            # (R, d) per-replication final iterates
    fail_steps: np.ndarray        # (R,)
    checkpoint_indices: np.ndarray
    checkpoint_mean: np.ndarray   # (K, d)
    checkpoint_err: np.ndarray    # (K,)
    x_star: Optional[np.ndarray]

    @property
    def n_failed(self) -> int:
        return int(np.sum(self.fail_steps >= 0))

    @property
    def clean(self) -> np.ndarray:
        return self.finals[self.fail_steps < 0]

    @property
    def mean_final(self) -> np.ndarray:
        return self.clean.mean(axis=0)

    @property
    def std_final(self) -> np.ndarray:
        return self.clean.std(axis=0, ddof=1) if self.clean.shape[0] > 1 else np.zeros_like(self.mean_final)

    def err_mean_final(self) -> float:
        """|mean final - x*|: the headline error of a replicated table row."""
        if self.x_star is None:
            return math.nan
        return float(np.linalg.norm(self.mean_final - self.x_star))

    def mean_abs_err(self) -> float:
        if self.x_star is None:
            return math.nan
        return float(np.mean(np.linalg.norm(self.clean - self.x_star, axis=1)))

    def err_quantiles(self, qs=(0.1, 0.5, 0.9)) -> np.ndarray:
        if self.x_star is None:
            return np.full(len(qs), math.nan)
        errs = np.linalg.norm(self.clean - self.x_star, axis=1)
        return np.quantile(errs, qs)


@dataclass
class AggregateReport:
    name: str
    fingerprint: str
    seed: int
    n_reps: int
    starts: list  # of StartAggregate

    def row_dicts(self) -> list:
        rows = []
        for i, agg in enumerate(self.starts):
            q = agg.err_quantiles()
            d = agg.mean_final.shape[0]
            row = {"start_index": i, "n_reps": self.n_reps, "n_failed": agg.n_failed}
            for j in range(d):
                row[f"start{j}"] = agg.start[j]
            for j in range(d):
                row[f"mean_final{j}"] = agg.mean_final[j]
            row["err_mean_final"] = agg.err_mean_final()
            row["mean_abs_err"] = agg.mean_abs_err()
            for j in range(d):
                row[f"std{j}"] = agg.std_final[j]
            row["err_q10"], row["err_q50"], row["err_q90"] = q
            rows.append(row)
        return rows


def _header_line(report_name: str, fingerprint: str, seed: int, extra: str = "") -> str:
    base = f"# name={report_name} fingerprint={fingerprint} seed={seed} version={__version__}"
    return base + (f" {extra}" if extra else "")


def write_report_csv(report: AggregateReport, path) -> None:
    rows = report.row_dicts()
    cols = list(rows[0].keys())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(report.name, report.fingerprint, report.seed) + "\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(
                str(row[c]) if isinstance(row[c], (int, np.integer)) else _fmt(row[c])
                for c in cols) + "\n")


def _write_checkpoints_csv(report: AggregateReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(report.name, report.fingerprint, report.seed) + "\n")
        d = report.starts[0].checkpoint_mean.shape[1]
        cols = ["start_index", "step"] + [f"mean{j}" for j in range(d)] + ["err_mean"]
        fh.write(",".join(cols) + "\n")
        for i, agg in enumerate(report.starts):
            for k, step in enumerate(agg.checkpoint_indices):
                row = [str(i), str(int(step))]
                row += [_fmt(v) for v in agg.checkpoint_mean[k]]
                row += [_fmt(agg.checkpoint_err[k])]
                fh.write(",".join(row) + "\n")


def _write_finals_csv(report: AggregateReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header_line(report.name, report.fingerprint, report.seed) + "\n")
        d = report.starts[0].finals.shape[1]
        cols = ["start_index", "replication"] + [f"x{j}" for j in range(d)] + ["fail_step"]
        fh.write(",".join(cols) + "\n")
        for i, agg in enumerate(report.starts):
            for r in range(agg.finals.shape[0]):
                row = [str(i), str(r)]
                row += [_fmt(v) for v in agg.finals[r]]
                row += [str(int(agg.fail_steps[r]))]
                fh.write(",".join(row) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None, threads: int = 1) -> AggregateReport:
    """Execute every start of a config with replication substreams, write the
    requested artifacts, and return the aggregate report.

    Replication blow-ups are recorded per replication and excluded from the
    statistics; they never abort the experiment.
    """
    preset, specs, x_star = config.resolve()
    n = config.iterations
    ck_count = max(2, config.checkpoints)
    ck_idx = np.unique(np.linspace(0, n, ck_count).astype(int))
    aggregates = []
    record_paths = "normalized" in config.outputs or "sdi_compare" in config.outputs
    path_store = []
    for spec in specs:
        result = run_ensemble(spec, config.seed, config.replications,
                              checkpoints=ck_idx.tolist(), record_paths=record_paths,
                              threads=threads)
        ck_mean = result.checkpoint_states.mean(axis=0)
        if x_star is not None:
            ck_err = np.linalg.norm(ck_mean - np.asarray(x_star), axis=1)
        else:
            ck_err = np.full(ck_mean.shape[0], math.nan)
        aggregates.append(StartAggregate(
            start=spec.x0, finals=result.finals, fail_steps=result.fail_steps,
            checkpoint_indices=result.checkpoint_indices, checkpoint_mean=ck_mean,
            checkpoint_err=ck_err,
            x_star=np.asarray(x_star, dtype=float) if x_star is not None else None))
        path_store.append(result.paths)

    report = AggregateReport(name=config.name, fingerprint=config.fingerprint,
                             seed=config.seed, n_reps=config.replications,
                             starts=aggregates)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if "report" in config.outputs:
            write_report_csv(report, out / "report.csv")
        if "checkpoints" in config.outputs:
            _write_checkpoints_csv(report, out / "checkpoints.csv")
        if "finals" in config.outputs:
            _write_finals_csv(report, out / "finals.csv")
        if "trajectory" in config.outputs:
            for i, spec in enumerate(specs):
                traj = run(spec, config.seed)
                traj.to_csv(out / f"trajectory_start{i}.csv",
                            header={"fingerprint": config.fingerprint})
        if "certificate" in config.outputs:
            if preset is None or preset.stability is None:
                raise ConfigError(["certificate requested but the preset declares no bundle"])
            cert = preset.stability.certify(name=config.name)
            cert.write(out / "certificate.txt")
        if "normalized" in config.outputs and x_star is not None:
            series = _normalized_ensemble(specs[0], path_store[0], x_star)
            rep = tightness_diagnostic(series, kappa=0.05,
                                       n_checkpoints=ck_count)
            (out / "tightness.txt").write_text(
                _header_line(config.name, config.fingerprint, config.seed) + "\n"
                + rep.to_text(), encoding="utf-8")
        if "sdi_compare" in config.outputs:
            if config.sdi_spec is None or x_star is None:
                raise ConfigError(["sdi_compare requires an sdi block and a known x_star"])
            text = _sdi_compare_text(config, specs[0], path_store[0], x_star)
            (out / "sdi_compare.txt").write_text(text, encoding="utf-8")
    return report


def _normalized_ensemble(spec, paths, x_star, start: int = 0):
    if paths is None:
        raise ConfigError(["normalized outputs need recorded paths"])
    return [NormalizedSeries.from_iterates(paths[r], spec.schedule, x_star, start=start)
            for r in range(paths.shape[0])]


def _sdi_compare_text(config, spec, paths, x_star) -> str:
    sdi = config.sdi_spec
    start = int(sdi.get("start_index", 0))
    series = _normalized_ensemble(spec, paths, x_star, start=start)
    model = SDIModel(A=np.asarray(sdi["A"], dtype=float),
                     sigma=np.asarray(sdi["sigma"], dtype=float),
                     t_map=None, half_identity=bool(sdi.get("half_identity", False)))
    ks = compare_to_sdi(series, model, t_eval=float(sdi.get("t_eval", 1.0)),
                        n_sdi_reps=int(sdi.get("n_reps", max(200, len(series)))),
                        seed=config.seed, dt=float(sdi.get("dt", 1e-3)))
    return (_header_line(config.name, config.fingerprint, config.seed) + "\n"
            + str(ks) + "\n")


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------


def set_by_path(raw: dict, path: str, value):
    """Set a scalar config field addressed by a dotted path (list indices
    are numeric segments); raises on non-scalar targets."""
    parts = path.split(".")
    node = raw
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
        elif isinstance(node, dict):
            if p not in node:
                raise ConfigError([f"sweep path segment {p!r} not found"])
            node = node[p]
        else:
            raise ConfigError([f"sweep path {path!r} descends into a scalar"])
    leaf = parts[-1]
    if isinstance(node, list):
        idx = int(leaf)
        if not isinstance(node[idx], (int, float)):
            raise ConfigError([f"sweep path {path!r} does not address a scalar"])
        node[idx] = value
    elif isinstance(node, dict):
        if leaf not in node:
            raise ConfigError([f"sweep path leaf {leaf!r} not found"])
        if not isinstance(node[leaf], (int, float)):
            raise ConfigError([f"sweep path {path!r} does not address a scalar"])
        node[leaf] = value
    else:
        raise ConfigError([f"sweep path {path!r} descends into a scalar"])


def sweep(config: ExperimentConfig, param_path: str, values: Sequence[float],
          out_dir=None, threads: int = 1) -> list:
    """One aggregate report per swept value, plus a combined sweep table."""
    reports = []
    for v in values:
        raw = copy.deepcopy(config.raw)
        set_by_path(raw, param_path, v)
        sub = validate_config(raw)
        reports.append((v, run_experiment(sub, out_dir=None, threads=threads)))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_header_line(config.name, config.fingerprint, config.seed,
                                  extra=f"param={param_path}") + "\n")
            first = reports[0][1].row_dicts()[0]
            cols = ["value"] + list(first.keys())
            fh.write(",".join(cols) + "\n")
            for v, rep in reports:
                for row in rep.row_dicts():
                    line = [_fmt(v)] + [
                        str(row[c]) if isinstance(row[c], (int, np.integer)) else _fmt(row[c])
                        for c in cols[1:]]
                    fh.write(",".join(line) + "\n")
    return reports
