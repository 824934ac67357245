import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from pipeline.manager import ProtocolManager
from pipeline.validate import SCENARIOS, build_run_config, load_run_file
from utils.config import load_config, setup_logging
from utils.exceptions import ConfigError, KerrProtocolError, NumericallyVoidOutcomeError
from utils.report_writer import save_csv, save_json, sidecar_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VOID = 3


def _add_protocol_arguments(parser: argparse.ArgumentParser) -> None:
    """各子命令共用的协议参数（默认值 None 表示未给出，不覆盖配置文件）"""
    parser.add_argument('--config', help='JSON 运行配置文件，键名与命令行参数一致')
    parser.add_argument('--n', type=int, help='光子数 n')
    theta = parser.add_mutually_exclusive_group()
    theta.add_argument('--theta', type=float, help='单光子相移 θ（弧度）')
    theta.add_argument('--n-theta', dest='n_theta', type=float, help='最大相移 nθ')
    alpha = parser.add_mutually_exclusive_group()
    alpha.add_argument('--alpha', type=float, help='探测光振幅 α')
    alpha.add_argument('--n-alpha', dest='n_alpha', type=float, help='探测光平均光子数 |α|²')
    parser.add_argument('--amps', help='输入态 JSON: {"n": int, "amps": [[re_a, im_a, re_b, im_b], ...]}')
    parser.add_argument('--input', help='输入态 JSON 文件路径')
    parser.add_argument('--seed', type=int, help='随机种子')
    parser.add_argument('--format', choices=['json', 'csv'], help='输出格式')
    parser.add_argument('--output', help='输出文件路径（默认标准输出）')
    parser.add_argument('--max-n-theta', dest='max_n_theta', type=float, help='nθ 上限')
    parser.add_argument('--no-regime-check', dest='no_regime_check', action='store_true', default=None,
                        help='不检查弱非线性区间')
    parser.add_argument('--yaml-config', dest='yaml_config', help='YAML 默认配置路径')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='kerr-entangler',
        description='弱交叉克尔非线性下光子数纠缠态的产生与检测模拟'
    )
    subparsers = parser.add_subparsers(dest='command', help='子命令')

    analyze = subparsers.add_parser('analyze', help='错误概率分析')
    _add_protocol_arguments(analyze)
    analyze.add_argument('--reproduce', action='store_true', default=None, help='复现参考工作点的参数')
    analyze.add_argument('--asymptotic', action='store_true', default=None, help='n ≫ 1 极限')

    simulate = subparsers.add_parser('simulate', help='蒙特卡洛检测模拟')
    _add_protocol_arguments(simulate)
    simulate.add_argument('--trials', type=int, help='试验次数')
    simulate.add_argument('--records', type=int, help='输出的检测记录条数')

    density = subparsers.add_parser('density', help='测量结果密度曲线')
    _add_protocol_arguments(density)
    density.add_argument('--grid-points', dest='grid_points', type=int, help='网格点数')
    density.add_argument('--grid-padding', dest='grid_padding', type=float, help='网格边距')
    density.add_argument('--grid-min', dest='grid_min', type=float, help='网格下限')
    density.add_argument('--grid-max', dest='grid_max', type=float, help='网格上限')
    density.add_argument('--sidecar', help='阈值附属 JSON 文件路径（默认随 --output 命名，否则为 density.thresholds.json）')

    demo = subparsers.add_parser('demo', help='应用演示')
    demo.add_argument('scenario', choices=SCENARIOS, help='演示场景')
    _add_protocol_arguments(demo)
    demo.add_argument('--trials', type=int, help='每个输入态的试验次数')
    demo.add_argument('--level', type=int, help='entangler 的 l 标号')
    demo.add_argument('--records', type=int, help='输出的检测记录条数')

    return parser


def _merge_options(args: argparse.Namespace) -> Dict:
    """运行配置文件中的值被命令行显式给出的值覆盖"""
    options = load_run_file(args.config)
    given = {key: value for key, value in vars(args).items()
             if value is not None and key not in ('command', 'config', 'yaml_config')}
    # 互斥的一对参数中，命令行给出一个时丢弃文件中的另一个
    for pair in (('theta', 'n_theta'), ('alpha', 'n_alpha'), ('amps', 'input')):
        if any(key in given for key in pair):
            for key in pair:
                options.pop(key, None)
    options.update(given)
    return options


def _report_error(kind: str, error: Exception) -> None:
    sys.stderr.write(json.dumps({'error': kind, 'message': str(error)}, ensure_ascii=False) + '\n')


def run(argv: Optional[List[str]] = None) -> int:
    """命令行入口

    Args:
        argv: 参数列表，None 时使用 sys.argv

    Returns:
        int: 退出码（0 成功，2 配置错误，3 数值上无效的测量结果）
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG

    config = load_config(args.yaml_config)
    setup_logging(config)

    try:
        options = _merge_options(args)
        run_config = build_run_config(args.command, options, config)
        manager = ProtocolManager(config)

        if args.command == 'density':
            curve, sidecar = manager.density(run_config)
            save_csv(curve, run_config.output)
            save_json(sidecar, sidecar_path(run_config.output, run_config.sidecar))
            return EXIT_OK

        data, frame = getattr(manager, args.command)(run_config)
        if run_config.output_format == 'csv':
            save_csv(frame, run_config.output)
        else:
            save_json(data, run_config.output)
        return EXIT_OK

    except NumericallyVoidOutcomeError as e:
        _report_error('numerically_void_outcome', e)
        return EXIT_VOID
    except (ConfigError, KerrProtocolError) as e:
        _report_error('config_error' if isinstance(e, ConfigError) else 'parameter_error', e)
        return EXIT_CONFIG


def main():
    """主函数"""
    sys.exit(run())


if __name__ == '__main__':
    main()
