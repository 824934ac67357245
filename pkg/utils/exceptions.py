"""协议相关的异常类型"""


class KerrProtocolError(ValueError):
    """协议计算的基础异常"""


class InvalidSpecError(KerrProtocolError):
    """输入态描述不合法"""


class ZeroNormError(KerrProtocolError):
    """态矢量范数为零（完全相消干涉）"""


class ParameterError(KerrProtocolError):
    """协议参数（n, θ, α）超出允许范围"""


class DegenerateConfigurationError(KerrProtocolError):
    """相邻高斯峰无法分辨"""


class NumericallyVoidOutcomeError(KerrProtocolError):
    """测量结果远离所有峰，坍缩后范数在数值上为零"""


class ConfigError(ValueError):
    """命令行或配置文件错误"""
