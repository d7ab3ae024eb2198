"""Command-line entry point: ``dqtrader run --config FILE``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .agent import backtest, train
from .config import MODES, ConfigError, RunConfig, validate_config
from .env import EnvConfig
from .market_data import DataError, load_series
from .metrics import TABLE_COLUMNS, BacktestReport, buy_and_hold_report
from .qnet import QNetwork

log = logging.getLogger("dqtrader")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
BASELINE_DIR = "buy_and_hold"
AGENT_NAMES = {"pattern": "DQN-pattern", "vanilla": "DQN-vanilla",
               "candlerep": "DQN-candlerep", "windowed": "DQN-windowed"}


def _stamp(cfg: RunConfig) -> str:
    return f"# seed={cfg.seed} config_sha256={cfg.digest}\n"


def _write(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _curve_csv(cfg, report: BacktestReport, dates) -> str:
    lines = [_stamp(cfg).rstrip("\n"), "date,portfolio_value,daily_return"]
    for i, (d, v) in enumerate(zip(dates, report.equity_curve)):
        r = "" if i == 0 else repr(float(report.daily_returns[i - 1]))
        lines.append(f"{d.isoformat()},{float(v)!r},{r}")
    return "\n".join(lines) + "\n"


def _actions_csv(cfg, rollout) -> str:
    lines = [_stamp(cfg).rstrip("\n"), "date,action,position,portfolio_value"]
    for d, a, p, v in rollout.action_rows():
        lines.append(f"{d.isoformat()},{a},{p},{float(v)!r}")
    return "\n".join(lines) + "\n"


def _report_files(cfg, outdir, asset, agent, report) -> None:
    extra = {"asset": asset, "agent": agent, "seed": cfg.seed, "config_sha256": cfg.digest}
    _write(os.path.join(outdir, "report.txt"), report.to_text(extra))
    header = "asset,agent," + ",".join(name for name, _ in TABLE_COLUMNS) + ",var_95"
    row = [asset, agent] + [repr(v) for v in report.table_row()] + [repr(float(report.var_95))]
    _write(os.path.join(outdir, "report.csv"), _stamp(cfg) + header + "\n" + ",".join(row) + "\n")


def summary_table(cfg: RunConfig, rows) -> str:
    header = "asset,agent," + ",".join(f'"{title}"' for _, title in TABLE_COLUMNS)
    lines = [_stamp(cfg).rstrip("\n"), header]
    for asset, agent, report in rows:
        lines.append(",".join([asset, agent] + [repr(v) for v in report.table_row()]))
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> int:
    """Train/evaluate/baseline every (asset, representation) pair and write artifacts."""
    rows = []
    os.makedirs(cfg.out, exist_ok=True)
    for asset in cfg.assets:
        series = load_series(asset.path, asset.split, symbol=asset.symbol)
        log.info("%s: %d candles, split at %s (index %d)", asset.symbol, len(series),
                 series.dates[series.split_index], series.split_index)
        if cfg.mode in ("train", "eval", "all"):
            for rep in cfg.representations:
                outdir = os.path.join(cfg.out, asset.symbol, rep.value)
                os.makedirs(outdir, exist_ok=True)
                env_cfg = EnvConfig(cfg.env.initial_cash, cfg.env.transaction_cost_rate,
                                    rep, cfg.env.window)
                ckpt = os.path.join(outdir, "checkpoint.bin")
                if cfg.mode == "eval":
                    if not os.path.isfile(ckpt):
                        raise FileNotFoundError(f"no checkpoint to evaluate: {ckpt}")
                    net = QNetwork.load(ckpt)
                else:
                    log.info("training %s/%s", asset.symbol, rep.value)
                    net, trainlog = train(series, cfg.train, env_cfg)
                    log.info("trained in %.1fs", trainlog.wall_clock)
                    net.save(ckpt, {"seed": cfg.seed, "config_sha256": cfg.digest})
                    _write(os.path.join(outdir, "trainlog.csv"), _stamp(cfg) + trainlog.to_csv())
                report, rollout = backtest(net, series, env_cfg, "test")
                agent = AGENT_NAMES[rep.value]
                _report_files(cfg, outdir, asset.symbol, agent, report)
                _write(os.path.join(outdir, "curve.csv"), _curve_csv(cfg, report, rollout.dates))
                _write(os.path.join(outdir, "actions.csv"), _actions_csv(cfg, rollout))
                _write(os.path.join(outdir, "resolved_config.json"), cfg.dump())
                rows.append((asset.symbol, agent, report))
        if cfg.mode in ("baseline", "all"):
            outdir = os.path.join(cfg.out, asset.symbol, BASELINE_DIR)
            os.makedirs(outdir, exist_ok=True)
            env_cfg = EnvConfig(cfg.env.initial_cash, cfg.env.transaction_cost_rate,
                                cfg.representations[0], cfg.env.window)
            report = buy_and_hold_report(series, "test", cfg.env.initial_cash, env_cfg)
            _report_files(cfg, outdir, asset.symbol, "B&H", report)
            dates = series.dates[series.split_index + cfg.env.window - 1:]
            _write(os.path.join(outdir, "curve.csv"), _curve_csv(cfg, report, dates))
            _write(os.path.join(outdir, "resolved_config.json"), cfg.dump())
            rows.append((asset.symbol, "B&H", report))
    _write(os.path.join(cfg.out, "summary.csv"), summary_table(cfg, rows))
    _write(os.path.join(cfg.out, "resolved_config.json"), cfg.dump())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqtrader", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train, evaluate and report")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--mode", choices=MODES)
    p_run.add_argument("--out")

    p_val = sub.add_parser("validate", help="check a config and print the resolved settings")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--seed", type=int)
    p_val.add_argument("--mode", choices=MODES)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = validate_config(args.config, seed=args.seed, mode=args.mode,
                              out=getattr(args, "out", None))
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        sys.stdout.write(cfg.dump())
        return EXIT_OK
    try:
        return run(cfg)
    except (DataError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
