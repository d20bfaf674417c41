# 앱 버전
__version__ = "1.0.0"
