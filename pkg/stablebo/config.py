import os
from fractions import Fraction

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RESULTS_DIR = os.path.join(BASE_DIR, "results")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# 가우시안 프로세스 기본값 (입력은 단위 박스로 정규화한 뒤 커널에 넣음)
KERNEL = "matern52"
LENGTH_SCALE = 0.25
LENGTH_SCALE_GRID = (0.1, 0.25, 0.5, 1.0)
SIGNAL_VARIANCE = 1.0
NOISE_JITTER = 1e-10
GP_WINDOW = 300             # 학습점이 이 수를 넘으면 가장 오래된 비최적 점부터 버림

# gp_hedge 포트폴리오
ACQUISITIONS = ("ei", "pi", "lcb")
LCB_KAPPA = 1.96
HEDGE_ETA = 1.0

# 획득함수 최대화 (무작위 탐침 + 좌표 하강)
ACQ_PROBES = 512
REFINE_PASSES = 20
REFINE_STEP = 0.1           # 정규화 좌표 기준 초기 보폭
REFINE_SHRINK = 0.7

# 인증기
RELU_CAP = 24
SOLVE_TIMEOUT_S = None
EXTERNAL_TIMEOUT_S = 60.0
SMT_LOGIC = "QF_LRA"

# GearSAT_δ / 이분 탐색
DEFAULT_DELTA = Fraction(0)
DEFAULT_EPSILON = Fraction(1, 100)
MAX_ITER_CANDIDATES = 50    # 후보 탐색 BO 반복
MAX_ITER_COUNTEREXAMPLES = 20  # 반례 탐색 BO 반복
N_INIT = 10                 # 후보 탐색용 BO 초기 LHS 점 수
COUNTEREXAMPLE_SEEDS = 5    # 반례 탐색 초기점 수 k (중심점 포함)
MAX_ROUNDS = 10_000         # gearsat_delta 한 번 실행당 최대 라운드
RATIONAL_DENOMINATOR = 10**6  # BO 제안점을 유리수로 바꿀 때 분모 상한

# 실험 하네스
MATRIX_BUDGET_S = 300.0
MATRIX_WORKERS = 4
TIMER_DECIMALS = 3          # 초 단위, 밀리초 해상도
ORACLE_MAX_DIM = 3
ORACLE_MAX_POINTS = 50_000_000
RANDOM_WEIGHT_DENOMINATOR = 1024
