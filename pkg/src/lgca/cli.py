"""Command-line front end: dataset ingestion, runs, and report emission.

Subcommands:
  classify  evaluate a manifest of images against candidate labels
  bench     sweep the (N, M) grid and verify the work bounds
  trace     print the per-step table for a single image/label pair

Exit codes: 0 success, 2 configuration error, 3 encoder unavailable,
4 manifest error, 5 work bound violated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .bench import DEFAULT_M_GRID, DEFAULT_N_GRID, verify_bound
from .embedding import Encoder, make_encoder
from .errors import (
    BoundViolated,
    ConfigError,
    EncoderUnavailable,
    InvalidParams,
    LgcaError,
    ManifestError,
)
from .geometry import CropParams, ImageFrame
from .pipeline import LgcaConfig, build_description_set, classify, lgca_similarity

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENCODER = 3
EXIT_MANIFEST = 4
EXIT_BOUND = 5

ENCODER_ENV_VAR = "LGCA_ENCODER"

CONFIG_DEFAULTS = {
    "n_crops": 100,
    "ratio_lo": 0.5,
    "ratio_hi": 0.9,
    "seed": 0,
    "tau": 1.25,
    "temperature": 1.0,
    "schedule": "halving",
    "fixed_topk": 10,
    "out_size": 224,
    "workers": 0,
}


def fmt9(x: float) -> str:
    """Floats printed with 9 significant digits for diffable outputs."""
    return format(x, ".9g")


@dataclass
class RunConfig:
    """Parsed configuration file plus command-line overrides."""

    lgca: LgcaConfig
    encoder_spec: str | None = None
    descriptions_path: str | None = None
    out_size: int = 224
    workers: int = 0

    @classmethod
    def load(cls, path: str | None, *, seed: int | None = None) -> "RunConfig":
        raw: dict = {}
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    raw = tomli.load(fh)
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {path}") from exc
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"config file {path}: {exc}") from exc
        return cls.from_dict(raw, seed=seed, base_dir=Path(path).parent if path else None)

    @classmethod
    def from_dict(
        cls, raw: dict, *, seed: int | None = None, base_dir: Path | None = None
    ) -> "RunConfig":
        known = set(CONFIG_DEFAULTS) | {"step_weights", "encoder", "descriptions"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**CONFIG_DEFAULTS, **raw}
        if seed is not None:
            merged["seed"] = seed
        schedule = merged["schedule"]
        if schedule not in ("halving", "fixed_initial"):
            raise ConfigError(f"schedule must be halving or fixed_initial, got {schedule!r}")
        try:
            crop = CropParams(
                n_crops=int(merged["n_crops"]),
                ratio_lo=float(merged["ratio_lo"]),
                ratio_hi=float(merged["ratio_hi"]),
                seed=int(merged["seed"]),
            )
            weights = raw.get("step_weights")
            lgca = LgcaConfig(
                crop=crop,
                tau=float(merged["tau"]),
                step_weights=tuple(float(w) for w in weights) if weights else None,
                temperature=float(merged["temperature"]),
                schedule_mode=schedule,
                fixed_topk=int(merged["fixed_topk"]) if schedule == "fixed_initial" else None,
            )
        except LgcaError as exc:
            raise ConfigError(str(exc)) from exc
        descriptions = raw.get("descriptions")
        if descriptions and base_dir is not None:
            descriptions = str((base_dir / descriptions).resolve())
        return cls(
            lgca=lgca,
            encoder_spec=raw.get("encoder"),
            descriptions_path=descriptions,
            out_size=int(merged["out_size"]),
            workers=int(merged["workers"]),
        )

    def resolve_encoder(self, cli_spec: str | None) -> Encoder:
        spec = os.environ.get(ENCODER_ENV_VAR) or cli_spec or self.encoder_spec
        if not spec:
            raise ConfigError(
                f"no encoder given: use --encoder, the config file, or ${ENCODER_ENV_VAR}"
            )
        try:
            return make_encoder(spec, out_size=self.out_size)
        except LgcaError as exc:
            raise ConfigError(f"encoder spec {spec!r}: {exc}") from exc


@dataclass
class ManifestEntry:
    image_path: str
    candidate_labels: tuple[str, ...]
    true_label: str | None = None


@dataclass
class Manifest:
    descriptions_path: str
    entries: list[ManifestEntry] = field(default_factory=list)
    descriptions: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "Manifest":
        base = Path(path).parent
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ManifestError(f"manifest not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path}: {exc}") from exc

        descriptions_path = raw.get("descriptions_path")
        if not descriptions_path:
            raise ManifestError("manifest is missing descriptions_path")
        descriptions_path = str((base / descriptions_path).resolve())
        try:
            with open(descriptions_path, "r", encoding="utf-8") as fh:
                descriptions = json.load(fh)
        except FileNotFoundError as exc:
            raise ManifestError(f"description file not found: {descriptions_path}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"description file {descriptions_path}: {exc}") from exc
        if not isinstance(descriptions, dict) or not all(
            isinstance(v, list) and v and all(isinstance(s, str) for s in v)
            for v in descriptions.values()
        ):
            raise ManifestError(
                "description file must map each label to a non-empty list of strings"
            )

        entries = []
        for i, item in enumerate(raw.get("entries", [])):
            image_path = item.get("image_path")
            if not image_path:
                raise ManifestError(f"entry {i}: missing image_path")
            resolved = str((base / image_path).resolve())
            if not os.path.exists(resolved):
                raise ManifestError(f"entry {i}: image not found: {resolved}")
            labels = tuple(item.get("candidate_labels", ()))
            if not labels:
                raise ManifestError(f"entry {i}: candidate_labels must be non-empty")
            for label in labels:
                if label not in descriptions:
                    raise ManifestError(
                        f"entry {i}: label {label!r} missing from description file"
                    )
            true_label = item.get("true_label")
            entries.append(
                ManifestEntry(
                    image_path=resolved, candidate_labels=labels, true_label=true_label
                )
            )
        if not entries:
            raise ManifestError("manifest has no entries")
        return cls(
            descriptions_path=descriptions_path,
            entries=entries,
            descriptions=descriptions,
        )


def _worker_count(configured: int) -> int:
    if configured > 0:
        return configured
    return os.cpu_count() or 1


def cmd_classify(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, seed=args.seed)
    manifest = Manifest.load(args.manifest)
    encoder = config.resolve_encoder(args.encoder)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    all_labels = sorted({l for e in manifest.entries for l in e.candidate_labels})
    header = ["image_id", "predicted_label"] + [f"sim:{label}" for label in all_labels]
    csv_lines = [",".join(header)]
    trace_lines: list[str] = []
    correct = 0
    labeled = 0
    failure: Exception | None = None
    failure_exit = EXIT_ENCODER
    done = 0

    try:
        # one weighted description set per label, shared across entries
        desc_sets = {
            label: build_description_set(
                encoder, label, manifest.descriptions[label], config.lgca.temperature
            )
            for label in all_labels
        }
    except EncoderUnavailable as exc:
        desc_sets = None
        failure = exc
    except LgcaError as exc:
        desc_sets = None
        failure, failure_exit = exc, EXIT_CONFIG

    if desc_sets is not None:

        def evaluate(entry: ManifestEntry):
            image = ImageFrame.from_file(entry.image_path)
            candidates = [(label, desc_sets[label]) for label in entry.candidate_labels]
            return classify(image, candidates, config.lgca, encoder)

        with ThreadPoolExecutor(max_workers=_worker_count(config.workers)) as pool:
            futures = [pool.submit(evaluate, entry) for entry in manifest.entries]
            for entry, future in zip(manifest.entries, futures):
                try:
                    report = future.result()
                except EncoderUnavailable as exc:
                    failure = exc
                    failure_exit = EXIT_ENCODER
                    break
                except LgcaError as exc:
                    failure = exc
                    failure_exit = EXIT_CONFIG
                    break
                sims = {r.label: r.similarity for r in report.results}
                row = [report.image_id, report.predicted_label]
                row += [fmt9(sims[l]) if l in sims else "" for l in all_labels]
                csv_lines.append(",".join(row))
                for r in report.results:
                    trace_lines.append(
                        json.dumps(
                            {
                                "image_id": report.image_id,
                                "label": r.label,
                                "similarity": r.similarity,
                                "steps": [t.to_dict() for t in r.traces],
                            },
                            sort_keys=True,
                        )
                    )
                if entry.true_label is not None:
                    labeled += 1
                    correct += report.predicted_label == entry.true_label
                done += 1

    (out_dir / "predictions.csv").write_text("\n".join(csv_lines) + "\n")
    (out_dir / "traces.jsonl").write_text(
        "\n".join(trace_lines) + ("\n" if trace_lines else "")
    )
    summary = {
        "entries": len(manifest.entries),
        "completed": done,
        "labeled": labeled,
        "correct": correct,
        "accuracy": (correct / labeled) if labeled else None,
    }
    if failure is not None:
        summary["failed"] = str(failure)
        (out_dir / "failure.json").write_text(
            json.dumps({"error": str(failure)}, indent=2) + "\n"
        )
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if failure is not None:
        print(f"run failed after {done} entries: {failure}", file=sys.stderr)
        return failure_exit
    print(f"classified {done} images -> {out_dir}")
    return EXIT_OK


def _parse_grid(text: str, name: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{name} must be comma-separated integers: {text!r}") from exc
    if not values:
        raise ConfigError(f"{name} is empty")
    return values


def cmd_bench(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, seed=args.seed)
    n_grid = _parse_grid(args.n_grid, "--n-grid") if args.n_grid else DEFAULT_N_GRID
    m_grid = _parse_grid(args.m_grid, "--m-grid") if args.m_grid else DEFAULT_M_GRID
    if any(n < 2 for n in n_grid):
        raise ConfigError("--n-grid values must be >= 2")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = verify_bound(
        n_grid,
        m_grid,
        trials=args.trials,
        tau=config.lgca.tau,
        seed=config.lgca.crop.seed,
        q_only=args.q_only,
    )
    (out_dir / "complexity.json").write_text(report.to_json() + "\n")
    (out_dir / "complexity.csv").write_text(report.to_csv())
    worst = max(report.points, key=lambda p: p.ratio_entries)
    print(
        f"{len(report.points)} grid points ok; worst entries ratio "
        f"{fmt9(worst.ratio_entries)} at N={worst.n_crops} M={worst.n_descs}; "
        f"comparison constant {fmt9(report.fitted_constant)}"
    )
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, seed=args.seed)
    encoder = config.resolve_encoder(args.encoder)
    descriptions_path = args.descriptions or config.descriptions_path
    if not descriptions_path:
        raise ConfigError("trace needs --descriptions or a descriptions key in the config")
    try:
        with open(descriptions_path, "r", encoding="utf-8") as fh:
            descriptions = json.load(fh)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise ConfigError(f"description file {descriptions_path}: {exc}") from exc
    if args.label not in descriptions:
        raise ConfigError(f"label {args.label!r} missing from {descriptions_path}")

    image = ImageFrame.from_file(args.image)
    descs = build_description_set(
        encoder, args.label, descriptions[args.label], config.lgca.temperature
    )
    similarity, traces = lgca_similarity(image, descs, config.lgca, encoder)
    print(f"image={image.id} label={args.label}")
    print(f"{'step':>4} {'topk':>6} {'n_in':>6} {'n_out':>6} {'score':>15}")
    for t in traces:
        print(f"{t.step:>4} {t.topk:>6} {t.n_in:>6} {t.n_out:>6} {fmt9(t.score):>15}")
    print(f"similarity = {fmt9(similarity)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgca",
        description="Zero-shot image-text classification with expansion scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_classify = sub.add_parser("classify", help="classify a manifest of images")
    p_classify.add_argument("--manifest", required=True)
    p_classify.add_argument("--config", default=None)
    p_classify.add_argument("--encoder", default=None, help="toy:<world.json> or remote:<host>:<port>")
    p_classify.add_argument("--seed", type=int, default=None)
    p_classify.add_argument("--out", required=True)
    p_classify.set_defaults(func=cmd_classify)

    p_bench = sub.add_parser("bench", help="verify the work bounds on a grid")
    p_bench.add_argument("--n-grid", default=None, help="comma-separated crop counts")
    p_bench.add_argument("--m-grid", default=None, help="comma-separated description counts")
    p_bench.add_argument("--trials", type=int, default=1)
    p_bench.add_argument("--q-only", action="store_true")
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=cmd_bench)

    p_trace = sub.add_parser("trace", help="per-step table for one image/label pair")
    p_trace.add_argument("--image", required=True)
    p_trace.add_argument("--label", required=True)
    p_trace.add_argument("--config", default=None)
    p_trace.add_argument("--descriptions", default=None)
    p_trace.add_argument("--encoder", default=None)
    p_trace.add_argument("--seed", type=int, default=None)
    p_trace.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EncoderUnavailable as exc:
        print(f"encoder unavailable: {exc}", file=sys.stderr)
        return EXIT_ENCODER
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except BoundViolated as exc:
        print(f"bound violated: {exc}", file=sys.stderr)
        return EXIT_BOUND


if __name__ == "__main__":
    sys.exit(main())
