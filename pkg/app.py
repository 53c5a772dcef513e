#!/usr/bin/env python3
import streamlit as st
import sys
from pathlib import Path

import pandas as pd

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

# Import from main.py
from src.config import RUNS_DIR
from src.main import load_run
from src.monitoring.logger import setup_logger
from src.population.population import ratings_table
from src.population.tree_export import export_tree
from src.rating.trueskill import win_probability

# Setup logger
logger = setup_logger(__name__)


@st.cache_resource
def get_run(checkpoint: str):
    """Load a checkpoint using main.py's load_run function"""
    return load_run(Path(checkpoint))


def main():
    # Page config
    st.set_page_config(
        page_title="Prompt Evolution Dashboard",
        page_icon="",
        layout="wide",
        initial_sidebar_state="expanded"
    )

    st.title("Prompt Evolution Dashboard")

    checkpoints = sorted(RUNS_DIR.glob("**/checkpoints/latest.json"))

    # Sidebar
    with st.sidebar:
        st.title(" Run")
        if not checkpoints:
            st.info(f"No runs under {RUNS_DIR}. Train one with `python src/main.py train`.")
            st.stop()
        choice = st.selectbox("Checkpoint", [str(p) for p in checkpoints])
        if st.button(" Reload", use_container_width=True):
            get_run.clear()
            logger.info("Checkpoint cache cleared by user")
            st.rerun()

    with st.spinner(" Loading checkpoint..."):
        try:
            cfg, state, records = get_run(choice)
        except Exception as e:
            st.error(f" Failed to load checkpoint: {str(e)}")
            logger.error(f"Checkpoint load error: {e}", exc_info=True)
            st.stop()

    pop = state.population
    table = ratings_table(pop, cfg.lam)
    best_id, best_mu, best_sigma, best_ucb = table[0]

    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric("Iteration", f"{state.iteration}/{cfg.iterations}")
    with col2:
        st.metric("Prompts", len(pop))
    with col3:
        st.metric("Best UCB", f"{best_ucb:.2f}", help=f"prompt #{best_id}")
    with col4:
        last = records[-1]["mean_reward"] if records else 0.0
        st.metric("Last mean reward", f"{last:.3f}")

    if records:
        st.subheader(" Rewards")
        rewards = pd.DataFrame(
            {"mean_reward": [r["mean_reward"] for r in records],
             "best_value": [r["best_value"] for r in records]},
            index=[r["iteration"] for r in records],
        )
        st.line_chart(rewards)

    st.subheader(" Ratings")
    best = pop.get(best_id).rating
    ratings = pd.DataFrame(table, columns=["id", "mu", "sigma", "ucb"]).set_index("id")
    ratings["p_beats_top"] = [win_probability(pop.get(int(node_id)).rating, best, cfg.rating) for node_id in ratings.index]
    st.dataframe(
        ratings,
        use_container_width=True,
    )

    st.subheader(" Evolutionary tree")
    st.graphviz_chart(export_tree(pop, "dot").decode("utf-8"))

    st.subheader(" Prompts")
    for node_id, mu, sigma, _ in table:
        node = pop.get(node_id)
        with st.expander(f"#{node_id} ({node.origin.value}, born {node.birth_iteration}) mu={mu:.2f} sigma={sigma:.2f}"):
            st.text(f"Parents: {node.parent_ids or '-'}")
            st.code(node.text, language=None)


if __name__ == "__main__":
    main()
