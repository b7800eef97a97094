import json
import os

import pandas as pd
import streamlit as st

from stablebo.config import RESULTS_DIR
from stablebo.harness import matrix_summary, read_table

# 판정 결과별 색상
OUTCOME_COLORS = {
    "lower": "#e8f5e9",  # 초록
    "upper": "#fff3e0",  # 주황
}


@st.cache_data
def list_results(suffix: str) -> dict[str, str]:
    """results/ 디렉토리에서 확장자별 파일 목록 로딩"""
    if not os.path.isdir(RESULTS_DIR):
        return {}
    return {
        name: os.path.join(RESULTS_DIR, name)
        for name in sorted(os.listdir(RESULTS_DIR))
        if name.endswith(suffix)
    }


@st.cache_data
def load_table(path: str) -> pd.DataFrame:
    return read_table(path)


@st.cache_data
def load_result(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def history_html(history: list[dict]) -> str:
    """이분 탐색 이력을 판정별 색상 HTML 테이블로 변환"""
    html = """<table style="width:100%; border-collapse:collapse; font-size:14px;">
    <thead><tr style="background:#1a237e; color:white;">
        <th style="padding:8px; border:1px solid #ccc; width:10%;">단계</th>
        <th style="padding:8px; border:1px solid #ccc; width:60%;">T</th>
        <th style="padding:8px; border:1px solid #ccc; width:30%;">판정</th>
    </tr></thead><tbody>"""
    for i, step in enumerate(history, start=1):
        bg = OUTCOME_COLORS.get(step["outcome"], "#ffffff")
        html += f"""<tr style="background:{bg};">
            <td style="padding:6px 8px; border:1px solid #ddd;">{i}</td>
            <td style="padding:6px 8px; border:1px solid #ddd;">{step["T"]}</td>
            <td style="padding:6px 8px; border:1px solid #ddd;">{step["outcome"]}</td>
        </tr>"""
    html += "</tbody></table>"
    return html


def render_matrix_tab():
    """2×2 실험 행렬 탭"""
    tables = list_results(".csv")
    matrices = {k: v for k, v in tables.items() if not k.startswith("scatter")}
    if not matrices:
        st.info("results/ 에 행렬 CSV 가 없습니다. `python run_stablebo.py matrix ...` 로 생성하세요.")
        return
    name = st.selectbox("행렬 파일", list(matrices), key="matrix_file")
    df = load_table(matrices[name])
    st.subheader("📋 지표")
    st.dataframe(df, use_container_width=True, hide_index=True)
    if "run" in df.columns and len(df):
        st.subheader("📊 조합별 요약")
        st.dataframe(matrix_summary(df), use_container_width=True, hide_index=True)


def render_result_tab():
    """단일 solve 결과 탭"""
    results = list_results(".json")
    if not results:
        st.info("results/ 에 결과 JSON 이 없습니다.")
        return
    name = st.selectbox("결과 파일", list(results), key="result_file")
    record = load_result(results[name])

    col1, col2, col3 = st.columns(3)
    col1.metric("T (인증된 하한)", f"{record['T_float']:.6g}")
    col2.metric("반복", record["iterations"])
    col3.metric("보조정리", record["lemma_count"])
    st.markdown(f"**T** = `{record['T']}` · **ε** = `{record['epsilon']}` · **상한** = `{record['upper']}`")
    st.markdown(f"**증인** = `{record['witness']}` · **재검증** = `{record.get('verified')}`")
    if not record.get("complete", True):
        st.warning("시간 예산을 넘겨 중단된 부분 결과입니다.")
    if record.get("bo_best"):
        st.caption(f"참고용 기본 BO 최적값: {record['bo_best']['y']:.6g} (인증 없음)")

    st.subheader("📋 이분 탐색 이력")
    st.markdown(history_html(record["history"]), unsafe_allow_html=True)

    st.subheader("📎 지표")
    st.dataframe(pd.DataFrame([record["indicators"]]), use_container_width=True, hide_index=True)


def render_scatter_tab():
    """(후보, 반례) 산점도 데이터 탭 (표만 보여줌)"""
    tables = {k: v for k, v in list_results(".csv").items() if k.startswith("scatter")}
    if not tables:
        st.info("results/ 에 scatter*.csv 가 없습니다.")
        return
    name = st.selectbox("산점도 파일", list(tables), key="scatter_file")
    df = pd.read_csv(tables[name])
    st.dataframe(df, use_container_width=True, hide_index=True)
    if len(df):
        st.caption(f"쌍 {len(df)}개 · 최대 값 차이 {df['gap'].max():.4g}")


def main():
    st.set_page_config(page_title="stablebo 결과", page_icon="📈", layout="wide")

    st.sidebar.title("stablebo 결과 보기")
    st.sidebar.markdown("---")
    if st.sidebar.button("새로고침"):
        st.cache_data.clear()

    tab_matrix, tab_result, tab_scatter = st.tabs(["실험 행렬", "solve 결과", "산점도 데이터"])

    with tab_matrix:
        render_matrix_tab()

    with tab_result:
        render_result_tab()

    with tab_scatter:
        render_scatter_tab()


if __name__ == "__main__":
    main()
