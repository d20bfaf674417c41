import sys

from dotenv import load_dotenv

from app.interface.cli import cli

# 환경 변수 로드
load_dotenv()

if __name__ == "__main__":
    sys.exit(cli())
