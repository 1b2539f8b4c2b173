"""Helpers for the command line: run directories, reports, plot scripts and stage context."""

import hashlib
import json
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

import yaml

from cli.config import RunConfig, dump_config
from errors import EitError
from messages import format_message
from settings import get_config, get_logger

logger = get_logger(__name__)


def config_hash(cfg: RunConfig) -> str:
    """Content hash of the effective configuration; key order and formatting do not matter."""
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    length = get_config("output.hash_length", 12)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:length]


def run_directory(cfg: RunConfig, out: str | Path | None = None) -> Path:
    """Create `<out>/<hash>/` and write the configuration echo into it."""
    base = Path(out) if out is not None else cfg.output
    path = base / config_hash(cfg)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    logger.info(format_message("cli.run_dir", path=path))
    return path


def write_report(path: Path, report: dict[str, Any]) -> Path:
    path.write_text(yaml.safe_dump(report, sort_keys=False), encoding="utf-8")
    return path


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag toolkit errors raised inside the block with the pipeline stage."""
    try:
        yield
    except EitError as e:
        e.stage = name
        e.add_note(f"stage={name}")
        raise


_PLOT_HEADER = '''"""Plot generated by eit; needs pandas and matplotlib."""

from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

here = Path(__file__).parent
'''

PLOT_SCRIPTS = {
    "spectrum": _PLOT_HEADER
    + '''
spectrum = pd.read_csv(here / "spectrum.csv")
metrics = pd.read_csv(here / "metrics.csv")

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(spectrum["delta"], spectrum["chi_im"].clip(lower=0), label="absorption")
ax.plot(spectrum["delta"], spectrum["chi_re"], lw=0.8, alpha=0.6, label="dispersion")
row = metrics.iloc[0]
if pd.notna(row["width"]):
    ax.axvspan(row["dip_pos"] - row["width"] / 2, row["dip_pos"] + row["width"] / 2, color="tab:orange", alpha=0.2,
               label="transparency window")
ax.set_xlabel("two-photon detuning")
ax.set_ylabel("Im chi (arb.)")
ax.legend()
fig.tight_layout()
fig.savefig(here / "spectrum.png", dpi=150)
''',
    "sweep_width": _PLOT_HEADER
    + '''
points = pd.read_csv(here / "sweep.csv")
analytic = pd.read_csv(here / "analytic.csv")

fig, ax = plt.subplots(figsize=(6, 4))
for (optical, spin), group in points.groupby(["optical", "spin"], sort=False):
    ax.loglog(group["omega"] / group["sigma_opt"], group["width"] / group["sigma_opt"], "o",
              label=f"{optical} / {spin}")
ax.loglog(analytic["abscissa"], analytic["width_closed"] / analytic["sigma_opt"], "k-", label="closed form")
ax.loglog(analytic["abscissa"], analytic["width_eit"] / analytic["sigma_opt"], "k:", lw=0.8)
ax.set_xlabel("Omega / sigma_opt")
ax.set_ylabel("EIT width / sigma_opt")
ax.legend()
fig.tight_layout()
fig.savefig(here / "sweep_width.png", dpi=150)
''',
    "sweep_visibility": _PLOT_HEADER
    + '''
points = pd.read_csv(here / "sweep.csv")
analytic = pd.read_csv(here / "analytic.csv")

fig, ax = plt.subplots(figsize=(6, 4))
for (optical, spin), group in points.groupby(["optical", "spin"], sort=False):
    x = group["omega"] ** 2 / (group["sigma_opt"] * group["sigma_spin"])
    ax.semilogx(x, group["vis_residual"], "o", label=f"{optical} / {spin}")
ax.semilogx(analytic["abscissa"], analytic["visibility_closed"], "k-", label="closed form")
ax.axhline(0.5, color="grey", lw=0.5)
ax.set_xlabel("Omega^2 / (sigma_opt sigma_spin)")
ax.set_ylabel("EIT visibility")
ax.legend()
fig.tight_layout()
fig.savefig(here / "sweep_visibility.png", dpi=150)
''',
    "holeburn": _PLOT_HEADER
    + '''
profile = pd.read_csv(here / "profile.csv")
spectrum = pd.read_csv(here / "spectrum.csv")

fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6))
top.plot(profile["shift"], profile["density"])
top.set_xlabel("optical shift")
top.set_ylabel("class density")
bottom.plot(spectrum["delta"], spectrum["chi_im"].clip(lower=0))
bottom.set_xlabel("two-photon detuning")
bottom.set_ylabel("Im chi (arb.)")
fig.tight_layout()
fig.savefig(here / "holeburn.png", dpi=150)
''',
}


def write_plot_script(run_dir: Path, kind: str) -> Path:
    path = run_dir / f"plot_{kind}.py"
    path.write_text(PLOT_SCRIPTS[kind], encoding="utf-8")
    return path
