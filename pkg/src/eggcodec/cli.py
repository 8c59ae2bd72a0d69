"""Command-line harness tying the pipeline into reproducible experiments.

Verbs: synth | preprocess | train | reconstruct | extract | evaluate |
gradcheck. All commands are deterministic given (config, seed). Exit codes:
0 success, 2 config error, 3 data error, 4 numeric abort, 5 check failure.
The EGGCODEC_THREADS environment variable caps per-utterance workers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckFailure, ConfigError, DataError, NumericError
from .estimators import reconstruct_windowed
from .experiment import expand_ablation, load_config, save_config
from .f0 import F0Track, extract_f0
from .gradcheck import require_all_pass, run_checks, write_results_csv
from .metrics import aggregate_reports, evaluate_run
from .model import EggCodecModel
from .signals import (
    PIPELINE_RATE,
    SignalBuffer,
    highpass_filter,
    load_wav,
    peak_normalize,
    resample,
    save_wav,
)
from .synth import SynthSpec, glide_spec, synth_corpus
from .training import fit, write_loss_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CHECK = 5


def _worker_count() -> int:
    raw = os.environ.get("EGGCODEC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"EGGCODEC_THREADS={raw!r} is not an integer") from None


def _map_items(fn, items):
    workers = _worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- synth ------------------------------------------------------------------

_SYNTH_DEFAULTS = {
    "duration_s": 1.0,
    "f0_min_hz": 80.0,
    "f0_max_hz": 300.0,
    "glide_fraction": 0.5,
    "gap_fraction": 0.4,
    "gap_s": 0.2,
    "noise_floor": 0.0,
    "sample_rate_hz": PIPELINE_RATE,
}


def _random_spec(rng: np.random.Generator, params: dict) -> SynthSpec:
    lo, hi = params["f0_min_hz"], params["f0_max_hz"]
    duration = params["duration_s"]
    f0_a = float(rng.uniform(lo, hi))
    if rng.random() < params["glide_fraction"]:
        f0_b = float(rng.uniform(lo, hi))
    else:
        f0_b = f0_a
    gap = None
    if rng.random() < params["gap_fraction"] and duration > 3 * params["gap_s"]:
        start = float(rng.uniform(params["gap_s"], duration - 2 * params["gap_s"]))
        gap = (start, start + params["gap_s"])
    return glide_spec(
        f0_a,
        f0_b,
        duration_s=duration,
        gap=gap,
        sample_rate_hz=params["sample_rate_hz"],
        noise_floor=params["noise_floor"],
    )


def cmd_synth(spec_file, out_dir, n_utts: int, seed: int, quiet: bool = True) -> int:
    params = dict(_SYNTH_DEFAULTS)
    if spec_file is not None:
        try:
            data = json.loads(Path(spec_file).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"{spec_file}: synth spec not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec_file}: line {exc.lineno}: {exc.msg}") from exc
        for key, value in data.items():
            if key not in params:
                raise ConfigError(f"{spec_file}: unknown field {key!r}")
            params[key] = value
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"seed": seed, "params": params, "items": []}
    for i in range(n_utts):
        item_seed = seed + 1000 * i
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        spec = _random_spec(rng, params)
        egg, audio, truth = synth_corpus(spec, seed=item_seed)
        stem = f"utt{i:04d}"
        save_wav(audio, out / f"{stem}_audio.wav")
        save_wav(egg, out / f"{stem}_egg.wav")
        truth.to_csv(out / f"{stem}_truth.csv")
        manifest["items"].append(
            {
                "id": stem,
                "seed": item_seed,
                "audio": f"{stem}_audio.wav",
                "egg": f"{stem}_egg.wav",
                "truth": f"{stem}_truth.csv",
                "f0_contour": spec.f0_contour,
                "voicing_mask": spec.voicing_mask,
            }
        )
        if not quiet:
            print(f"synth {stem}")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


# -- preprocess ---------------------------------------------------------------

def _find_pairs(in_dir: Path):
    """Pair speech with EGG (and optional truth) files.

    Adapters, tried per file: PTDB-style ``mic_*`` <-> ``lar_*`` naming;
    generic ``*_audio.wav`` <-> ``*_egg.wav``; lone speech wavs paired with
    a same-stem F0 ground-truth file (CSTR-FDA style) when present.
    """
    wavs = sorted(in_dir.rglob("*.wav"))
    by_name = {p.name: p for p in wavs}
    pairs, errors, used = [], [], set()
    for p in wavs:
        if p.name in used:
            continue
        name = p.name
        if "lar_" in name or name.endswith("_egg.wav"):
            continue  # EGG side; discovered through its speech partner
        if "mic_" in name:
            egg_name = name.replace("mic_", "lar_")
            egg = by_name.get(egg_name)
            if egg is None:
                errors.append({"file": name, "reason": f"no matching {egg_name}"})
                continue
            used.update({name, egg_name})
            pairs.append({"id": p.stem.replace("mic_", ""), "audio": p, "egg": egg})
        elif name.endswith("_audio.wav"):
            egg_name = name.replace("_audio.wav", "_egg.wav")
            egg = by_name.get(egg_name)
            if egg is None:
                errors.append({"file": name, "reason": f"no matching {egg_name}"})
                continue
            used.update({name, egg_name})
            stem = name[: -len("_audio.wav")]
            truth = p.with_name(f"{stem}_truth.csv")
            pairs.append(
                {"id": stem, "audio": p, "egg": egg, "truth": truth if truth.exists() else None}
            )
        else:
            truth = None
            for ext in (".f0", ".csv"):
                cand = p.with_suffix(ext)
                if cand.exists():
                    truth = cand
                    break
            if truth is None:
                errors.append({"file": name, "reason": "no EGG partner or ground-truth file"})
                continue
            pairs.append({"id": p.stem, "audio": p, "egg": None, "truth": truth})
    return pairs, errors


def cmd_preprocess(in_dir, out_dir, filter_egg: bool = True, quiet: bool = True) -> int:
    in_path = Path(in_dir)
    out = Path(out_dir)
    if not in_path.is_dir():
        raise DataError(f"{in_dir}: not a directory")
    out.mkdir(parents=True, exist_ok=True)

    prior = in_path / "preprocess_manifest.json"
    already = False
    if prior.exists():
        try:
            already = bool(json.loads(prior.read_text(encoding="utf-8")).get("processed"))
        except (json.JSONDecodeError, AttributeError):
            already = False

    pairs, errors = _find_pairs(in_path)

    def process(pair):
        entry = {"id": pair["id"]}
        audio = load_wav(pair["audio"])
        if already:
            audio_out = audio  # second pass is a byte-level copy
        else:
            audio_out = peak_normalize(resample(audio, PIPELINE_RATE))
        save_wav(audio_out, out / f"{pair['id']}_audio.wav")
        entry["audio"] = f"{pair['id']}_audio.wav"
        if pair.get("egg") is not None:
            egg = load_wav(pair["egg"])
            if not already:
                egg = resample(egg, PIPELINE_RATE)
                if filter_egg:
                    egg = highpass_filter(egg)
                egg = peak_normalize(egg)
            save_wav(egg, out / f"{pair['id']}_egg.wav")
            entry["egg"] = f"{pair['id']}_egg.wav"
        if pair.get("truth") is not None:
            target = out / f"{pair['id']}_truth{pair['truth'].suffix}"
            target.write_bytes(pair["truth"].read_bytes())
            entry["truth"] = target.name
        if not quiet:
            print(f"preprocess {pair['id']}")
        return entry

    items = _map_items(process, pairs)
    manifest = {
        "processed": True,
        "filtered": bool(filter_egg),
        "source": str(in_path),
        "items": sorted(items, key=lambda e: e["id"]),
        "errors": errors,
    }
    (out / "preprocess_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return EXIT_OK


# -- train --------------------------------------------------------------------

def _load_corpus(corpus_dir: Path):
    manifest_path = corpus_dir / "manifest.json"
    pairs = []
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        for item in manifest.get("items", []):
            if "egg" not in item:
                continue
            pairs.append((corpus_dir / item["audio"], corpus_dir / item["egg"]))
    else:
        found, _ = _find_pairs(corpus_dir)
        pairs = [(p["audio"], p["egg"]) for p in found if p.get("egg") is not None]
    if not pairs:
        raise DataError(f"{corpus_dir}: no paired speech/EGG utterances found")
    corpus = []
    for audio_path, egg_path in pairs:
        audio = resample(load_wav(audio_path), PIPELINE_RATE)
        egg = resample(load_wav(egg_path), PIPELINE_RATE)
        corpus.append((audio, egg))
    return corpus


def cmd_train(config_file, quiet: bool = True) -> int:
    cfg = expand_ablation(load_config(config_file))
    corpus = _load_corpus(Path(cfg.corpus_dir))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "resolved_config.json")
    model = EggCodecModel(cfg.model, seed=cfg.train.seed)
    model, curve = fit(model, corpus, cfg.train, out_dir=out)
    save_checkpoint(model, out / "checkpoint.bin")
    write_loss_csv(curve, out / "loss_curve.csv")
    if not quiet:
        print(f"trained {len(curve)} steps; final l_reco {curve[-1].report.l_reco:.4f}")
    return EXIT_OK


# -- reconstruct / extract ------------------------------------------------------

def cmd_reconstruct(checkpoint, wav_in, wav_out, quiet: bool = True) -> int:
    model = load_checkpoint(checkpoint)
    sig = resample(load_wav(wav_in), PIPELINE_RATE)
    if len(sig) < PIPELINE_RATE:
        raise DataError(f"{wav_in}: input must be at least 1 s at {PIPELINE_RATE} Hz")
    normalized = peak_normalize(sig)
    pred = reconstruct_windowed(model, np.asarray(normalized.samples), PIPELINE_RATE)
    save_wav(SignalBuffer(pred, PIPELINE_RATE), wav_out)
    if not quiet:
        print(f"reconstructed {wav_in} -> {wav_out} ({pred.size} samples)")
    return EXIT_OK


def cmd_extract(wav_in, csv_out, mel_csv=None, mel_window: int = 256, quiet: bool = True) -> int:
    from .spectral import log_mel, mel_to_csv

    sig = resample(load_wav(wav_in), PIPELINE_RATE)
    track = extract_f0(sig)
    track.to_csv(csv_out)
    if mel_csv is not None:
        mel_to_csv(log_mel(sig, mel_window), mel_csv)
    if not quiet:
        voiced = int(track.voiced.sum())
        print(f"extracted {len(track)} frames ({voiced} voiced) -> {csv_out}")
    return EXIT_OK


# -- evaluate -------------------------------------------------------------------

def _track_inputs(pred, ref):
    pred_path, ref_path = Path(pred), Path(ref)
    if pred_path.is_dir() != ref_path.is_dir():
        raise DataError("evaluate: pred and ref must both be files or both directories")
    if not pred_path.is_dir():
        return [(pred_path.stem, pred_path, ref_path)]
    ref_by_name = {p.name: p for p in ref_path.glob("*.csv")}
    triples = []
    for p in sorted(pred_path.glob("*.csv")):
        r = ref_by_name.get(p.name)
        if r is not None:
            triples.append((p.stem, p, r))
    if not triples:
        raise DataError("evaluate: no matching prediction/reference CSV names")
    return triples


def cmd_evaluate(pred, ref, pred_egg=None, ref_egg=None, json_out=None, csv_out=None,
                 quiet: bool = True) -> int:
    triples = _track_inputs(pred, ref)
    egg_pair = None
    if pred_egg is not None and ref_egg is not None:
        a = resample(load_wav(pred_egg), PIPELINE_RATE)
        b = resample(load_wav(ref_egg), PIPELINE_RATE)
        n = min(len(a), len(b))
        egg_pair = (a.samples[:n], b.samples[:n])

    def one(triple):
        name, pred_path, ref_path = triple
        report = evaluate_run(
            F0Track.from_csv(pred_path),
            F0Track.from_csv(ref_path),
            pred_egg=egg_pair[0] if egg_pair else None,
            ref_egg=egg_pair[1] if egg_pair else None,
        )
        return name, report

    results = _map_items(one, triples)
    reports = {name: report for name, report in results}
    aggregate = aggregate_reports(list(reports.values()))
    payload = {
        "utterances": {k: r.to_dict() for k, r in sorted(reports.items())},
        "aggregate": aggregate,
        "reference_optimal": evaluate_reference_context(),
    }
    text = json.dumps(payload, indent=2) + "\n"
    if json_out:
        Path(json_out).write_text(text, encoding="utf-8")
    if csv_out:
        _write_eval_csv(reports, aggregate, csv_out)
    if not quiet:
        print(text, end="")
    return EXIT_OK


def evaluate_reference_context() -> dict:
    from .metrics import REFERENCE_OPTIMAL

    return dict(REFERENCE_OPTIMAL)


def _write_eval_csv(reports, aggregate, path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["utterance", "mae_hz", "rpa_pct", "gpe_pct", "vde_pct", "ppmcc"])
        for name, r in sorted(reports.items()):
            writer.writerow(
                [name, f"{r.mae_hz:.4f}", f"{r.rpa_pct:.2f}", f"{r.gpe_pct:.2f}",
                 f"{r.vde_pct:.2f}", "" if r.ppmcc is None else f"{r.ppmcc:.4f}"]
            )
        agg_ppmcc = aggregate.get("ppmcc")
        writer.writerow(
            ["aggregate", f"{aggregate['mae_hz']:.4f}", f"{aggregate['rpa_pct']:.2f}",
             f"{aggregate['gpe_pct']:.2f}", f"{aggregate['vde_pct']:.2f}",
             "" if agg_ppmcc is None else f"{agg_ppmcc:.4f}"]
        )


# -- gradcheck ------------------------------------------------------------------

def cmd_gradcheck(scope: str, seed: int = 0, csv_out=None, quiet: bool = True) -> int:
    results = run_checks(scope=scope, seed=seed)
    if csv_out:
        write_results_csv(results, csv_out)
    if not quiet:
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            print(f"{status} {r.name} max_rel_err={r.max_rel_err:.3e} tol={r.tolerance:g}")
    require_all_pass(results)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eggcodec", description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="experiment config path")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--out", type=str, default=None, help="output file or directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", type=str, default=None, help="synth parameter JSON")
    p.add_argument("--n-utts", type=int, default=20)

    p = sub.add_parser("preprocess", help="resample / filter / normalize a corpus")
    p.add_argument("in_dir")
    p.add_argument("--no-filter", action="store_true", help="skip the EGG high-pass")

    sub.add_parser("train", help="train from an experiment config")

    p = sub.add_parser("reconstruct", help="speech wav -> predicted EGG wav")
    p.add_argument("checkpoint")
    p.add_argument("wav_in")
    p.add_argument("wav_out")

    p = sub.add_parser("extract", help="EGG wav -> F0 track CSV")
    p.add_argument("wav_in")
    p.add_argument("csv_out")
    p.add_argument("--mel-csv", default=None, help="also dump the input's log-mel (debugging)")
    p.add_argument("--mel-window", type=int, default=256)

    p = sub.add_parser("evaluate", help="compare F0 tracks (and optionally EGG wavs)")
    p.add_argument("pred")
    p.add_argument("ref")
    p.add_argument("--pred-egg", default=None)
    p.add_argument("--ref-egg", default=None)
    p.add_argument("--json-out", default=None)
    p.add_argument("--csv-out", default=None)

    p = sub.add_parser("gradcheck", help="run registered finite-difference checks")
    p.add_argument("scope", choices=["losses", "layers", "model", "all"])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    quiet = args.quiet
    try:
        if args.command == "synth":
            if args.out is None:
                raise ConfigError("synth requires --out DIR")
            return cmd_synth(args.spec, args.out, args.n_utts, args.seed, quiet=quiet)
        if args.command == "preprocess":
            if args.out is None:
                raise ConfigError("preprocess requires --out DIR")
            return cmd_preprocess(args.in_dir, args.out, filter_egg=not args.no_filter, quiet=quiet)
        if args.command == "train":
            if args.config is None:
                raise ConfigError("train requires --config PATH")
            return cmd_train(args.config, quiet=quiet)
        if args.command == "reconstruct":
            return cmd_reconstruct(args.checkpoint, args.wav_in, args.wav_out, quiet=quiet)
        if args.command == "extract":
            return cmd_extract(
                args.wav_in, args.csv_out,
                mel_csv=args.mel_csv, mel_window=args.mel_window, quiet=quiet,
            )
        if args.command == "evaluate":
            return cmd_evaluate(
                args.pred,
                args.ref,
                pred_egg=args.pred_egg,
                ref_egg=args.ref_egg,
                json_out=args.json_out,
                csv_out=args.csv_out,
                quiet=quiet,
            )
        if args.command == "gradcheck":
            return cmd_gradcheck(args.scope, seed=args.seed, csv_out=args.out, quiet=quiet)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
