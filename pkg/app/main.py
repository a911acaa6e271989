"""
剪枝仿真 - 命令行入口

python -m app <train|eval|trial|render|trace|selftest> [--seed N] [--config PATH|default] [--out DIR]

退出码：0 成功，1 配置或参数错误，2 运行时错误
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, NoReturn, Optional

from . import __version__
from .config import CONTROLLER_IDS, Settings, load_settings, settings
from .exceptions import ConfigError, PruningError
from .models.manager import get_policy_manager
from .models.policy import ActionPolicy, RandomPolicy
from .utils.logger import get_logger, init_logging_from
from .utils.memory_utils import log_memory_status
from .utils.seeding import make_rng

# 初始化全局日志配置（加载 --config 后按新配置重新初始化）
init_logging_from(settings.logging)
logger = get_logger("pruning_sim")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """命令行参数错误"""


class _Parser(argparse.ArgumentParser):
    """参数错误时抛出异常而不是直接以 2 退出"""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="覆盖主种子 / 训练种子")
    common.add_argument("--config", default="default", help="配置文件路径，default 表示内置配置")
    common.add_argument("--out", default=None, help="输出目录")

    parser = _Parser(prog="python -m app", description="果树剪枝仿真与控制器对比")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("train", parents=[common], help="训练视觉策略")

    p = sub.add_parser("eval", parents=[common], help="评估策略成功率")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--random", action="store_true", help="评估均匀随机策略")

    sub.add_parser("trial", parents=[common], help="运行控制器对比实验")

    p = sub.add_parser("render", parents=[common], help="导出分割帧 PPM")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--checkpoint", default=None)

    p = sub.add_parser("trace", parents=[common], help="导出单回合控制轨迹")
    p.add_argument("--controller", choices=list(CONTROLLER_IDS), default="HC")
    p.add_argument("--target", type=int, default=0, help="选中目标列表中的序号")
    p.add_argument("--checkpoint", default=None)

    sub.add_parser("selftest", parents=[common], help="运行内置不变量检查")
    return parser


def _out_dir(args: argparse.Namespace, cfg: Settings) -> Path:
    out = Path(args.out or cfg.app.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_policy(cfg: Settings, checkpoint: Optional[str]) -> ActionPolicy:
    return get_policy_manager().get_policy(checkpoint or cfg.harness.policy_checkpoint)


def cmd_train(args: argparse.Namespace, cfg: Settings) -> int:
    from .services.training import train_policy

    out = _out_dir(args, cfg)
    _, curve = train_policy(cfg, out, seed=args.seed)
    final = curve[-1].success_rate if curve else 0.0
    print(f"updates={len(curve)} final_success_rate={final:.3f} checkpoint={out / 'policy.ckpt'}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: Settings) -> int:
    from .services.training import evaluate_policy

    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.policy.train.seed
    episodes = args.episodes or cfg.policy.eval_episodes
    if episodes <= 0:
        raise ConfigError(f"--episodes 必须为正: {episodes}")

    if args.random:
        policy: ActionPolicy = RandomPolicy(make_rng(seed, "random-policy"))
    else:
        policy = _load_policy(cfg, args.checkpoint)
    result = evaluate_policy(cfg, policy, episodes, seed)

    data = result.to_dict()
    data["policy"] = "random" if args.random else str(args.checkpoint or cfg.harness.policy_checkpoint)
    data["seed"] = seed
    with open(out / "eval.json", "w", encoding="utf-8", newline="") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"success_rate={result.success_rate:.3f} episodes={episodes}")
    return EXIT_OK


def cmd_trial(args: argparse.Namespace, cfg: Settings) -> int:
    from .services.harness import run_trials, summary_text

    _, table = run_trials(cfg, _out_dir(args, cfg))
    sys.stdout.write(summary_text(table))
    return EXIT_OK


def cmd_render(args: argparse.Namespace, cfg: Settings) -> int:
    from .services.inspection import render_episodes

    if args.episodes <= 0:
        raise ConfigError(f"--episodes 必须为正: {args.episodes}")
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.policy.train.seed
    policy = _load_policy(cfg, args.checkpoint) if args.checkpoint else None
    written = render_episodes(cfg, out, args.episodes, seed, policy)
    print(f"frames={written} dir={out / 'frames'}")
    return EXIT_OK


def cmd_trace(args: argparse.Namespace, cfg: Settings) -> int:
    from .services.inspection import trace_episode

    policy = _load_policy(cfg, args.checkpoint) if args.controller == "HC" else None
    paths = trace_episode(cfg, _out_dir(args, cfg), args.controller, args.target, policy)
    for path in paths.values():
        print(path)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace, cfg: Settings) -> int:
    from .services.selftest import run_selftest

    passed, failures = run_selftest(cfg)
    print(f"passed={passed} failed={len(failures)}")
    for failure in failures:
        print(f"FAIL {failure}")
    return EXIT_OK if not failures else EXIT_RUNTIME


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "trial": cmd_trial,
    "render": cmd_render,
    "trace": cmd_trace,
    "selftest": cmd_selftest,
}


def _apply_seed(cfg: Settings, args: argparse.Namespace) -> Settings:
    """--seed 覆盖实验主种子与训练种子"""
    if args.seed is None:
        return cfg
    return cfg.with_overrides(harness={"master_seed": args.seed}, policy={"train": {"seed": args.seed}})


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行主函数

    Args:
        argv: 参数列表，None 时读取 sys.argv

    Returns:
        进程退出码
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        build_parser().print_usage(sys.stderr)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG

    try:
        cfg = _apply_seed(load_settings(args.config), args)
        init_logging_from(cfg.logging, force=True)
        logger.info(f"🚀 {cfg.app.name} v{__version__} | 命令: {args.command} | 配置: {args.config}")
        code = COMMANDS[args.command](args, cfg)
        log_memory_status(f"{args.command} 结束")
        return code
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        return EXIT_CONFIG
    except (PruningError, OSError) as e:
        logger.error(f"运行失败: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
