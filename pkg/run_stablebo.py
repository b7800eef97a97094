"""
구간 안정 최적값 인증 솔버를 실행합니다.

Usage:
    python run_stablebo.py gen --kind hat --out instances/hat.model.json --spec-out instances/hat.json
    python run_stablebo.py solve --spec instances/hat.json --out results/hat.json
    python run_stablebo.py solve --spec instances/hat.json --bo-candidates off --bo-counterexamples off --out results/hat_00.json
    python run_stablebo.py oracle --spec instances/hat.json --pitch 0.001
    python run_stablebo.py matrix --instances instances --out results/matrix.csv
    python run_stablebo.py scatter --spec instances/hat.json --out results/scatter.csv
    streamlit run dashboard.py      # 결과 표 보기
"""

import sys

from stablebo.cli import main

if __name__ == "__main__":
    sys.exit(main())
