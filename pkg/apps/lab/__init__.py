"""巡回負フィードバック系の数値解析ラボ。"""

__version__ = "0.1.0"
