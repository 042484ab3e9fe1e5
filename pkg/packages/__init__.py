"""共通スキーマなどをまとめたパッケージ。"""
