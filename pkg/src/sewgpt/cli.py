"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 usage/config error,
3 IO or format error. Diagnostics go to stderr; results to stdout or files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import codec
from .checkpoint import read_checkpoint, save_checkpoint
from .codec import NormStats, QuantConfig, compare_patterns, decode, encode, fit_stats
from .conditioning import ProviderSpec, embed_caption, project_condition
from .errors import CheckpointError, CodecError, ConfigError, SewGPTError
from .gradcheck import TINY, gradcheck
from .model import ModelConfig, init_params
from .pattern import dump_pattern, errors_only, load_pattern, validate_pattern
from .render import render_svg
from .sampling import SamplerOptions, sample
from .stitches import StitchMatchConfig
from .synth import KINDS, TemplateSpec, build_dataset
from .train import TrainConfig, evaluate, train

log = logging.getLogger("sewgpt")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
CONFIG_ENV = "SEWCODEC_CONFIG"
GRADCHECK_TOL = 1e-4


class UsageError(SewGPTError):
    pass


@dataclass(frozen=True)
class CliConfig:
    quant: QuantConfig = QuantConfig()
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = TrainConfig()
    sampler: SamplerOptions = SamplerOptions()
    provider: ProviderSpec = ProviderSpec()
    stitch: StitchMatchConfig = StitchMatchConfig()


_PROVIDER_KEYS = {"provider_kind": "kind", "provider_path": "path"}


def resolve_config(path: str | None, overrides: dict) -> CliConfig:
    """Merge a flat JSON config with flag overrides (flags win).

    Raises :class:`ConfigError` on unknown keys or inconsistent values, before
    any command has side effects.
    """
    data: dict = {}
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})

    groups = {
        "quant": {f.name for f in fields(QuantConfig)},
        "model": {f.name for f in fields(ModelConfig)},
        "train": {f.name for f in fields(TrainConfig)},
        "sampler": {f.name for f in fields(SamplerOptions)},
        "stitch": {"tau"},
    }
    picked = {g: {} for g in groups}
    provider = {}
    for key, value in data.items():
        if key in _PROVIDER_KEYS:
            provider[_PROVIDER_KEYS[key]] = value
            continue
        homes = [g for g, names in groups.items() if key in names]
        if not homes:
            raise ConfigError(f"unknown config key {key!r}")
        for g in homes:
            picked[g][key] = value
    try:
        quant = QuantConfig(**picked["quant"])
        mkw = dict(picked["model"])
        mkw.setdefault("vocab_size", quant.vocab_size)
        mkw.setdefault("max_panels", quant.max_panels)
        mkw["K"] = quant.K
        if mkw["vocab_size"] != quant.vocab_size:
            raise ConfigError(f"vocab_size {mkw['vocab_size']} disagrees with the codec's "
                              f"{quant.vocab_size}")
        model = ModelConfig(**mkw)
        provider.setdefault("dim", model.d_cond_in)
        prov = ProviderSpec(**provider)
        if prov.dim != model.d_cond_in:
            raise ConfigError("provider dim must equal d_cond_in")
        return CliConfig(quant, model, TrainConfig.from_dict(picked["train"]),
                         SamplerOptions(**picked["sampler"]), prov,
                         StitchMatchConfig(**picked["stitch"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# -- helpers ----------------------------------------------------------------

def _pattern_files(directory: Path) -> list[Path]:
    manifest = directory / "manifest.json"
    if manifest.exists():
        items = json.loads(manifest.read_text(encoding="utf-8"))["items"]
        return [directory / it["file"] for it in items if it.get("split", "train") == "train"]
    return sorted(p for p in directory.glob("*.json") if p.name != "manifest.json")


def _load_model(path: str):
    params, model, meta = read_checkpoint(path)
    quant = QuantConfig(**meta["quant"])
    stats = NormStats.from_dict(meta["stats"])
    provider = ProviderSpec(**meta["provider"])
    return params, model, quant, stats, provider


def _sampler_from(args, base: SamplerOptions) -> SamplerOptions:
    kw = asdict(base)
    for name in ("temperature", "top_k", "seed", "max_new_tokens"):
        value = getattr(args, name, None)
        if value is not None:
            kw[name] = value
    return SamplerOptions(**kw)


def _finish_generation(result, params, model, quant, stats, prompt, out, tokens_out) -> int:
    if result.truncated:
        log.warning("sampling stopped mid-panel or without END; output cut to whole panels")
    if tokens_out:
        codec.write_token_file(tokens_out, [result.tokens], quant)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pattern = decode(result.tokens, stats, quant, caption=prompt)
    for w in caught:
        log.warning("%s", w.message)
    dump_pattern(pattern, out)
    print(json.dumps({"tokens": len(result.tokens), "panels": len(pattern.panels),
                      "stitches": len(pattern.stitches), "ended": result.ended,
                      "truncated": result.truncated}))
    return EXIT_OK


# -- subcommands ----------------------------------------------------------

def cmd_validate(args) -> int:
    report = validate_pattern(load_pattern(args.pattern))
    for v in report:
        print(f"{v.location}\t{v.rule}\t{v.severity}\t{v.message}")
    return EXIT_INVALID if errors_only(report) else EXIT_OK


def cmd_fit_stats(args) -> int:
    files = _pattern_files(Path(args.dir))
    stats = fit_stats(load_pattern(f) for f in files)
    stats.save(args.output)
    log.info("fitted stats on %d patterns", len(files))
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = resolve_config(args.config, {})
    pattern = load_pattern(args.pattern)
    bad = errors_only(validate_pattern(pattern, cfg.quant.K, cfg.quant.max_panels))
    if bad:
        for v in bad:
            log.error("%s %s: %s", v.location, v.rule, v.message)
        return EXIT_INVALID
    seq = encode(pattern, NormStats.load(args.stats), cfg.quant)
    codec.write_token_file(args.output, [seq], cfg.quant)
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = resolve_config(args.config, {})
    seqs = codec.read_token_file(args.tokens, cfg.quant)
    if len(seqs) != 1:
        raise CodecError(f"expected one token sequence, found {len(seqs)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pattern = decode(seqs[0], NormStats.load(args.stats), cfg.quant, cfg.stitch)
    for w in caught:
        log.warning("%s", w.message)
    dump_pattern(pattern, args.output)
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    cfg = resolve_config(args.config, {})
    stats = NormStats.load(args.stats)
    pattern = load_pattern(args.pattern)
    back = decode(encode(pattern, stats, cfg.quant), stats, cfg.quant, cfg.stitch)
    rt = compare_patterns(pattern, back, stats, cfg.quant)
    bounds = rt.bounds(cfg.quant)
    errors = {"edge": rt.edge, "rotation": rt.rotation, "translation": rt.translation,
              "tag": rt.tag}
    print("channel\tmax_error\tbound")
    for name, err in errors.items():
        print(f"{name}\t{err:.6g}\t{bounds[name]:.6g}")
    print(f"counts: {'EXACT' if rt.counts_equal else 'DIFF'}")
    print(f"flags: {'EXACT' if rt.flags_equal else 'DIFF'}")
    print(f"stitches: {'EXACT' if rt.stitches_equal else 'DIFF'}")
    if args.plot:
        from .plotting import plot_roundtrip_errors
        plot_roundtrip_errors(errors, bounds, args.plot)
    return EXIT_OK if rt.within(cfg.quant) else EXIT_INVALID


def cmd_synth(args) -> int:
    kinds = list(KINDS) if args.template == "all" else [args.template]
    manifest = build_dataset([TemplateSpec(k) for k in kinds], args.n, args.seed, args.output)
    log.info("wrote %d patterns to %s", len(manifest["items"]), args.output)
    return EXIT_OK


def load_training_data(directory: Path, cfg: CliConfig):
    files = _pattern_files(directory)
    if not files:
        raise UsageError(f"no training patterns in {directory}")
    patterns = [load_pattern(f) for f in files]
    stats = fit_stats(patterns)
    data = [(encode(p, stats, cfg.quant), embed_caption(cfg.provider, p.caption))
            for p in patterns]
    return data, stats


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, {"steps": args.steps, "seed": args.seed})
    data, stats = load_training_data(Path(args.data), cfg)
    params = init_params(cfg.model, cfg.train.seed)
    target = args.target_loss
    every = args.eval_every

    def stop(step: int, loss: float) -> bool:
        if target is None or step % every:
            return False
        full, acc = evaluate(params, cfg.model, data)
        log.info("step %d train loss %.4f accuracy %.4f", step, full, acc)
        return full < target and (acc == 1.0 or not args.until_memorized)

    history = train(params, cfg.model, cfg.train, data, stop)
    final, accuracy = evaluate(params, cfg.model, data)
    extra = {"quant": asdict(cfg.quant), "stats": json.loads(stats.to_json()),
             "provider": asdict(cfg.provider), "train": cfg.train.to_dict()}
    save_checkpoint(params, cfg.model, args.out, extra)
    from .plotting import write_loss_csv
    write_loss_csv(history, f"{args.out}.loss.csv")
    if args.plot:
        from .plotting import plot_loss_curve
        plot_loss_curve(history, f"{args.out}.loss.png")
    print(json.dumps({"steps": len(history), "final_train_loss": final,
                      "teacher_forced_accuracy": accuracy, "sequences": len(data)}))
    return EXIT_OK


def cmd_generate(args) -> int:
    params, model, quant, stats, provider = _load_model(args.ckpt)
    opts = _sampler_from(args, SamplerOptions())
    cond = project_condition(params, embed_caption(provider, args.prompt))
    result = sample(params, model, cond, opts)
    return _finish_generation(result, params, model, quant, stats, args.prompt, args.output,
                              args.tokens_out)


def cmd_complete(args) -> int:
    params, model, quant, stats, provider = _load_model(args.ckpt)
    if (args.prefix is None) == (args.tokens is None):
        raise UsageError("give exactly one of --prefix or --tokens")
    if args.prefix:
        partial = load_pattern(args.prefix)
        ids = encode(partial, stats, quant).ids[:-1]
    else:
        seqs = codec.read_token_file(args.tokens, quant)
        if len(seqs) != 1:
            raise CodecError("token prefix file must hold one sequence")
        ids = seqs[0].ids[:-1] if seqs[0].ids[-1] == codec.END else seqs[0].ids
    prefix = codec.make_token_seq(ids, quant)
    opts = _sampler_from(args, SamplerOptions())
    cond = project_condition(params, embed_caption(provider, args.prompt))
    result = sample(params, model, cond, opts, prefix)
    return _finish_generation(result, params, model, quant, stats, args.prompt, args.output,
                              args.tokens_out)


def cmd_gradcheck(args) -> int:
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    names = {f.name for f in fields(ModelConfig)}
    unknown = set(overrides) - names - {"seed", "coords", "h"}
    if unknown:
        raise ConfigError(f"unknown gradcheck keys {sorted(unknown)}")
    model = ModelConfig(**{**asdict(TINY), **{k: v for k, v in overrides.items() if k in names}})
    res = gradcheck(model, n_coords=overrides.get("coords", args.coords),
                    h=overrides.get("h", 1e-3), seed=overrides.get("seed", args.seed))
    worst = int(np.argmax(res.rel_error))
    print(json.dumps({"coords": len(res.names), "max_rel_error": res.max_rel_error,
                      "worst": res.names[worst], "tolerance": GRADCHECK_TOL}))
    return EXIT_OK if res.max_rel_error < GRADCHECK_TOL else EXIT_INVALID


def cmd_render_svg(args) -> int:
    pattern = load_pattern(args.pattern)
    bad = errors_only(validate_pattern(pattern))
    if bad:
        for v in bad:
            log.error("%s %s: %s", v.location, v.rule, v.message)
        return EXIT_INVALID
    render_svg(pattern, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sewgpt", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a pattern JSON file")
    s.add_argument("pattern")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("fit-stats", help="fit normalization statistics over a directory")
    s.add_argument("dir")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fit_stats)

    for name, func in (("encode", cmd_encode), ("roundtrip", cmd_roundtrip)):
        s = sub.add_parser(name)
        s.add_argument("pattern")
        s.add_argument("--stats", required=True)
        s.add_argument("--config")
        if name == "encode":
            s.add_argument("-o", "--output", required=True)
        else:
            s.add_argument("--plot", help="write a per-channel error chart (PNG)")
        s.set_defaults(func=func)

    s = sub.add_parser("decode")
    s.add_argument("tokens")
    s.add_argument("--stats", required=True)
    s.add_argument("--config")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--template", choices=[*KINDS, "all"], required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--target-loss", type=float,
                   help="stop once the full training-set loss drops below this")
    s.add_argument("--until-memorized", action="store_true",
                   help="with --target-loss, also wait until every teacher-forced "
                        "argmax matches its target")
    s.add_argument("--eval-every", type=int, default=250)
    s.add_argument("--plot", action="store_true", help="also write <out>.loss.png")
    s.set_defaults(func=cmd_train)

    for name, func in (("generate", cmd_generate), ("complete", cmd_complete)):
        s = sub.add_parser(name)
        s.add_argument("--ckpt", required=True)
        s.add_argument("--prompt", required=True)
        s.add_argument("--temperature", type=float)
        s.add_argument("--top-k", type=int, dest="top_k")
        s.add_argument("--seed", type=int)
        s.add_argument("--max-new-tokens", type=int, dest="max_new_tokens")
        s.add_argument("--tokens-out", help="also write the sampled token sequence")
        s.add_argument("-o", "--output", required=True)
        if name == "complete":
            s.add_argument("--prefix", help="pattern JSON with the given whole panels")
            s.add_argument("--tokens", help="raw token prefix file instead of --prefix")
        s.set_defaults(func=func)

    s = sub.add_parser("gradcheck", help="finite-difference check of the gradients")
    s.add_argument("--config")
    s.add_argument("--coords", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("render-svg")
    s.add_argument("pattern")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_render_svg)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CodecError, CheckpointError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except SewGPTError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
