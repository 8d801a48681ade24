"""Command-line front end: schedule design, likelihood probes, training,
offline decoding, simulation sweeps, and the demo service."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import adaptation, decoder, schedule as sched, simulator
from .engine import TickerEngine
from .likelihood import GaussianClickDensity, p_C_bruteforce, p_C_recursive
from .model import (
    Alphabet,
    ClickEnsemble,
    EngineConfig,
    Hypers,
    load_config,
    save_config,
)

DEFAULT_DICT = Path(__file__).parent / "data" / "words_en.txt"


def _load_cfg(path: str | None) -> tuple[EngineConfig, Hypers]:
    if path:
        return load_config(path)
    return EngineConfig(), Hypers()


def cmd_init_config(args) -> int:
    save_config(args.out, EngineConfig(), Hypers())
    print(f"wrote default config to {args.out}")
    return 0


def cmd_design(args) -> int:
    alphabet = Alphabet()
    if args.channels in sched.PUBLISHED_ORDERS:
        order_r1 = sched.PUBLISHED_ORDERS[args.channels][0]
    else:
        print(f"unsupported channel count {args.channels}", file=sys.stderr)
        return 2
    order_r2, report = sched.optimize_order(
        alphabet, order_r1, seed=args.seed, budget=args.budget, channels=args.channels
    )
    schedule = sched.Schedule(
        alphabet, (order_r1, order_r2), args.slot_interval, args.channels
    )
    sched.save_schedule(args.out, schedule)
    print(f"channels={args.channels} K={report.K} -> {args.out}")
    for a, b, d in report.binding_pairs[:5]:
        print(f"  binding pair {a!r}/{b!r} at distance {d}")
    if args.plot_csv:
        Path(args.plot_csv).write_text(sched.layout_csv(schedule), encoding="utf-8")
        print(f"layout csv -> {args.plot_csv}")
    return 0


def cmd_likelihood(args) -> int:
    schedule = sched.load_schedule(args.schedule)
    params, kde = adaptation.load_params(args.params)
    cfg, _ = _load_cfg(args.config)
    times = tuple(float(v) for v in args.clicks.split(",")) if args.clicks != "-" else ()
    window_T = schedule.total_T + cfg.window_grace
    ensemble = ClickEnsemble(times=times, window_T=window_T)
    if kde is not None:
        density = adaptation.KdeClickDensity(schedule, kde)
    else:
        density = GaussianClickDensity.from_params(schedule, params)
    fn = p_C_bruteforce if args.brute_force else p_C_recursive
    table = fn(ensemble, density, args.letter, schedule.R)
    for C, p in enumerate(table.p):
        print(f"p[C={C}] = {p!r}")
    from .likelihood import ensemble_likelihood

    total = ensemble_likelihood(ensemble, params, density, args.letter, schedule.R)
    print(f"P(t, M | params, {args.letter!r}) = {total!r}")
    return 0


def cmd_train(args) -> int:
    cfg, hypers = _load_cfg(args.config)
    schedule = sched.load_schedule(args.schedule)
    history = adaptation.load_history(args.history, cap=cfg.history_cap)
    init = adaptation.prior_mode_params(hypers)
    fitted = adaptation.run_em(history, init, hypers, schedule, schedule.R)
    try:
        kde = adaptation.build_kde(history, fitted, schedule, schedule.R)
    except ValueError:
        kde = None
    adaptation.save_params(args.out, fitted, kde)
    print(
        f"trained on {len(history)} letters: delta={fitted.delta:.4f} "
        f"sigma={fitted.sigma:.4f} lambda={fitted.lam:.5f} f={fitted.f:.4f} -> {args.out}"
    )
    return 0


def cmd_decode(args) -> int:
    cfg, hypers = _load_cfg(args.config)
    schedule = sched.load_schedule(args.schedule)
    dictionary = decoder.load_dictionary(args.dict)
    params, _ = adaptation.load_params(args.params)
    engine = TickerEngine(
        cfg, hypers, schedule, dictionary, params=params, adapt=not args.no_adapt
    )
    with open(args.clicks_log, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            times = () if line == "-" else tuple(float(v) for v in line.split(","))
            ensemble = ClickEnsemble(times=times, window_T=engine.window_T)
            outcome = engine.process_window(ensemble)
            if outcome.kind == "selection":
                print(f"window {line_no}: selected {outcome.selected!r}")
            elif args.verbose:
                top = ", ".join(f"{w}:{p:.3f}" for w, p in outcome.top[:3])
                print(f"window {line_no}: {outcome.kind} k={outcome.k} [{top}]")
    print(f"text: {''.join(engine.text)}")
    return 0


def cmd_simulate(args) -> int:
    cfg, hypers = _load_cfg(args.config)
    schedule = sched.load_schedule(args.schedule) if args.schedule else \
        sched.build_default_schedule(cfg.channels, cfg.repetitions, cfg.slot_interval)
    dictionary = decoder.load_dictionary(args.dict or DEFAULT_DICT)
    if args.user:
        user_params, _ = adaptation.load_params(args.user)
    else:
        user_params = simulator.noisy_switch_preset()
    text = Path(args.text).read_text(encoding="utf-8").split()
    report = simulator.run_session(
        text,
        simulator.UserModel(params=user_params, rng_seed=args.seed),
        cfg,
        dictionary,
        schedule,
        hypers=hypers,
        engine_params=user_params if args.oracle_params else None,
        adapt=not args.no_adapt,
    )
    print(
        f"words {report.words_correct}/{report.words_attempted} "
        f"windows={report.windows_used} clicks={report.clicks_emitted} "
        f"wpm={report.wpm:.2f} cer={report.char_error_rate:.3f}"
    )
    if args.out:
        rows = simulator.sweep_csv([{
            "channels": cfg.channels, "sigma": user_params.sigma,
            "f": user_params.f, "lam": user_params.lam, "seed": args.seed,
            "words_attempted": report.words_attempted,
            "words_correct": report.words_correct,
            "accuracy": report.words_correct / max(report.words_attempted, 1),
            "windows_used": report.windows_used,
            "clicks_emitted": report.clicks_emitted,
            "wall_time_s": report.wall_time_simulated,
            "wpm": report.wpm, "char_error_rate": report.char_error_rate,
            "timeouts": report.timeouts, "bits_per_second": 0.0,
        }])
        Path(args.out).write_text(rows, encoding="utf-8")
        print(f"report -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg, hypers = _load_cfg(args.config)
    dictionary = decoder.load_dictionary(args.dict or DEFAULT_DICT)
    text = Path(args.text).read_text(encoding="utf-8").split()
    rows = simulator.sweep(
        text, dictionary, cfg, hypers,
        user_delta=args.delta,
        sigmas=[float(v) for v in args.sigmas.split(",")],
        fs=[float(v) for v in args.fs.split(",")],
        lams=[float(v) for v in args.lams.split(",")],
        channels_list=[int(v) for v in args.channels.split(",")],
        seeds=[int(v) for v in args.seeds.split(",")],
    )
    Path(args.out).write_text(simulator.sweep_csv(rows), encoding="utf-8")
    print(f"{len(rows)} rows -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg, hypers = _load_cfg(args.config)
    app = create_app(
        dictionary_path=args.dict,
        config=cfg,
        hypers=hypers,
        data_dir=args.data_dir,
        static_dir=args.static_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ticker")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write the default config file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_init_config)

    p = sub.add_parser("design", help="optimize a composite schedule")
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=600_000)
    p.add_argument("--slot-interval", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-csv", default=None)
    p.set_defaults(fn=cmd_design)

    p = sub.add_parser("likelihood", help="per-C likelihood table for one window")
    p.add_argument("--schedule", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--letter", required=True)
    p.add_argument("--clicks", required=True, help='comma times, or "-" for none')
    p.add_argument("--brute-force", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_likelihood)

    p = sub.add_parser("train", help="fit click model to a history file")
    p.add_argument("--history", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("decode", help="replay a clicks log through the decoder")
    p.add_argument("--dict", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--clicks-log", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--no-adapt", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("simulate", help="closed-loop synthetic session")
    p.add_argument("--dict", default=None)
    p.add_argument("--schedule", default=None)
    p.add_argument("--user", default=None, help="params file of the simulated user")
    p.add_argument("--text", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--no-adapt", action="store_true")
    p.add_argument("--oracle-params", action="store_true",
                   help="give the engine the user's true parameters")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="grid of sessions, CSV out")
    p.add_argument("--dict", default=None)
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--delta", type=float, default=0.15)
    p.add_argument("--sigmas", default="0.02,0.1,0.3")
    p.add_argument("--fs", default="0.1")
    p.add_argument("--lams", default="0.01")
    p.add_argument("--channels", default="5")
    p.add_argument("--seeds", default="0,1,2")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve", help="run the demo HTTP service")
    p.add_argument("--dict", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--static-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8471)
    p.set_defaults(fn=cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
