import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.circuit import evolve_protocol
from models.homodyne import outcome_density
from models.states import (
    SignalState, build_input_state, entangled_number_state, noon_state
)
from pipeline.analysis import (
    SCHEMA_VERSION, error_probabilities, monte_carlo_error, reproduce_discussion, run_simulation
)
from pipeline.discriminator import thresholds
from pipeline.validate import RunConfig
from utils.config import load_config

logger = logging.getLogger(__name__)


class ProtocolManager:
    """协议运行管理器：把运行配置分派到分析、模拟、密度与演示"""

    def __init__(self, config: Optional[Dict[str, Any]] = None, config_path: Optional[str] = None):
        """初始化管理器

        Args:
            config: 已加载的配置，None 时从 config_path 加载
            config_path: 配置文件路径
        """
        self.config = config if config is not None else load_config(config_path)
        self.tolerance = float(self.config['numerics']['peak_tolerance'])

    def input_state(self, run: RunConfig) -> SignalState:
        """运行所用的输入态，未指定时为 NOON 态"""
        if run.spec is not None:
            return build_input_state(run.spec)
        return noon_state(run.n)

    def analyze(self, run: RunConfig) -> Tuple[Dict, pd.DataFrame]:
        """错误概率分析

        Args:
            run: 运行配置

        Returns:
            Tuple[Dict, pd.DataFrame]: JSON 报告与逐间隙表
        """
        try:
            if run.reproduce:
                discussion = self.config['protocol']['discussion']
                result = reproduce_discussion(
                    n=run.n if not run.asymptotic else None,
                    asymptotic=run.asymptotic,
                    n_theta=float(discussion['n_theta']),
                    scaled_alpha=float(discussion['scaled_alpha']),
                )
                data = result.to_dict()
                frame = result.report.to_frame()
            else:
                report = error_probabilities(run.n, run.theta, run.alpha, run.max_n_theta)
                data = report.to_dict()
                data['parameters'] = run.echo()
                frame = report.to_frame()
            logger.info(f"分析完成: ε_max={data['epsilon_max']:.6g}")
            return data, frame
        except Exception as e:
            logger.error(f"错误概率分析失败: {str(e)}")
            raise

    def simulate(self, run: RunConfig) -> Tuple[Dict, pd.DataFrame]:
        """重复检测并与解析误判率比较

        Returns:
            Tuple[Dict, pd.DataFrame]: JSON 报告与逐区间表
        """
        try:
            signal = self.input_state(run)
            simulation = run_simulation(signal, run.theta, run.alpha, run.trials, run.seed,
                                        keep_records=run.records, max_n_theta=run.max_n_theta,
                                        tolerance=self.tolerance)
            analytic = error_probabilities(run.n, run.theta, run.alpha)
            monte_carlo = monte_carlo_error(signal, run.theta, run.alpha, run.trials,
                                            np.random.default_rng(run.seed), run.max_n_theta,
                                            self.tolerance)
            monte_carlo.seed = run.seed

            data = simulation.to_dict()
            data['parameters'] = run.echo()
            data['input'] = signal.to_records()
            data['analytic'] = analytic.to_dict()
            data['monte_carlo'] = monte_carlo.to_dict()
            return data, simulation.bins
        except Exception as e:
            logger.error(f"模拟失败: {str(e)}")
            raise

    def density(self, run: RunConfig) -> Tuple[pd.DataFrame, Dict]:
        """测量结果密度曲线与阈值附属数据

        θ = 0 时只有一个峰，阈值列表为空。

        Returns:
            Tuple[pd.DataFrame, Dict]: (x, p) 曲线与阈值信息
        """
        try:
            signal = self.input_state(run)
            joint = evolve_protocol(signal, run.theta, run.alpha, run.max_n_theta)
            mixture = outcome_density(joint, self.tolerance)

            if run.grid_min is not None:
                grid = np.linspace(float(run.grid_min), float(run.grid_max), run.grid_points)
            else:
                grid = mixture.default_grid(run.grid_points, run.grid_padding)
            curve = mixture.to_frame(grid)

            cuts: List[float] = []
            labels: List[Dict] = []
            if run.theta > 0 and run.n >= 2:
                threshold_set = thresholds(run.n, run.theta, run.alpha, self.tolerance)
                cuts = list(threshold_set.cuts)
                labels = threshold_set.to_dict()['labels']

            sidecar = {
                'schema_version': SCHEMA_VERSION,
                'parameters': run.echo(),
                'components': [
                    {'mean': c.mean, 'weight': c.weight, 'm': list(c.m_values)}
                    for c in mixture.components
                ],
                'cuts': cuts,
                'labels': labels,
            }
            return curve, sidecar
        except Exception as e:
            logger.error(f"计算密度曲线失败: {str(e)}")
            raise

    def demo(self, run: RunConfig) -> Tuple[Dict, pd.DataFrame]:
        """演示场景：entangler / parity2 / analyzer"""
        handlers = {
            'entangler': self._demo_entangler,
            'parity2': self._demo_parity2,
            'analyzer': self._demo_analyzer,
        }
        try:
            data, frame = handlers[run.scenario](run)
            data.update({
                'schema_version': SCHEMA_VERSION,
                'scenario': run.scenario,
                'parameters': run.echo(),
            })
            return data, frame
        except Exception as e:
            logger.error(f"演示 {run.scenario} 失败: {str(e)}")
            raise

    def _demo_entangler(self, run: RunConfig) -> Tuple[Dict, pd.DataFrame]:
        # a_l = b_l 的输入经纠缠门后得到 (|n-l,l⟩ + |l,n-l⟩)/√2
        target = entangled_number_state(run.n, run.level)
        simulation = run_simulation(target, run.theta, run.alpha, run.trials, run.seed,
                                    keep_records=min(run.records, run.trials),
                                    max_n_theta=run.max_n_theta, tolerance=self.tolerance)
        m = run.n // 2 - run.level
        row = simulation.bins[simulation.bins['m'] == m].iloc[0]
        conditional = None if pd.isna(row['mean_fidelity']) else float(row['mean_fidelity'])
        transcript = [
            f"输入: a_{run.level} = b_{run.level} = 1/√2, n = {run.n}",
            f"目标态: (|{run.n - run.level},{run.level}⟩ + |{run.level},{run.n - run.level}⟩)/√2",
            f"{run.trials} 次检测中正确区间 m={m} 出现 {int(row['detected'])} 次",
            f"正确区间条件下输出保真度均值 {conditional:.12f}" if conditional is not None
            else "正确区间未出现",
        ]
        return {
            'transcript': transcript,
            'target': target.to_records(),
            'conditional_fidelity': conditional,
            'simulation': simulation.to_dict(),
        }, simulation.bins

    def _demo_parity2(self, run: RunConfig) -> Tuple[Dict, pd.DataFrame]:
        # n = 2：区分 ψ₂⁰（NOON）与 ψ₂¹（|1,1⟩）
        analytic = error_probabilities(2, run.theta, run.alpha)
        rows = []
        for true_l in (0, 1):
            state = entangled_number_state(2, true_l)
            simulation = run_simulation(state, run.theta, run.alpha, run.trials,
                                        run.seed + true_l, max_n_theta=run.max_n_theta,
                                        tolerance=self.tolerance)
            detected = dict(zip(simulation.bins['l'], simulation.bins['detected']))
            rows.append({
                'true_l': true_l,
                'detected_l0': int(detected.get(0, 0)) / run.trials,
                'detected_l1': int(detected.get(1, 0)) / run.trials,
            })
        confusion = pd.DataFrame(rows, columns=['true_l', 'detected_l0', 'detected_l1'])
        off_diagonal = [rows[0]['detected_l1'], rows[1]['detected_l0']]
        transcript = [
            f"n = 2, θ = {run.theta:.6g}, α = {run.alpha:.6g}",
            f"ψ₂⁰ 误判为 ψ₂¹ 的比例 {off_diagonal[0]:.6g}",
            f"ψ₂¹ 误判为 ψ₂⁰ 的比例 {off_diagonal[1]:.6g}",
            f"解析错误概率 ε = {analytic.epsilon_max:.6g}",
        ]
        return {
            'transcript': transcript,
            'confusion': confusion.to_dict(orient='records'),
            'epsilon_analytic': analytic.epsilon_max,
            'off_diagonal': off_diagonal,
        }, confusion

    def _demo_analyzer(self, run: RunConfig) -> Tuple[Dict, pd.DataFrame]:
        # 依次输入 |ψ_n^l⟩，检查识别正确率与出射光子数
        rows = []
        for l in range(run.n // 2 + 1):
            state = entangled_number_state(run.n, l)
            simulation = run_simulation(state, run.theta, run.alpha, run.trials,
                                        run.seed + l, max_n_theta=run.max_n_theta,
                                        tolerance=self.tolerance)
            m = run.n // 2 - l
            row = simulation.bins[simulation.bins['m'] == m].iloc[0]
            rows.append({
                'l': l,
                'm': m,
                'accuracy': int(row['detected']) / run.trials,
                'restored_fidelity': None if pd.isna(row['mean_fidelity']) else float(row['mean_fidelity']),
                'output_photon_numbers': ','.join(str(p) for p in sorted(set(simulation.photon_numbers))),
            })
        table = pd.DataFrame(rows, columns=['l', 'm', 'accuracy', 'restored_fidelity',
                                            'output_photon_numbers'])
        nondestructive = all(r['output_photon_numbers'] == str(run.n) for r in rows)
        transcript = [f"l={r['l']}: 识别正确率 {r['accuracy']:.6g}, 出射光子数 {r['output_photon_numbers']}"
                      for r in rows]
        transcript.append("所有试验的出射光子数均为 n（非破坏性）" if nondestructive
                          else "存在出射光子数与 n 不符的试验")
        return {
            'transcript': transcript,
            'states': table.to_dict(orient='records'),
            'nondestructive': nondestructive,
        }, table
