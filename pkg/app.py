import json
from datetime import datetime

import pandas as pd
import streamlit as st

import certify
import exporter
import maps
import montecarlo
import rds
from config import DEFAULT_SEED, HITTING_CAP, START_HORIZON
from errors import AlleeError
from main import require_allee, system_from_dict

PRESET_SYSTEMS = {
    "Rational pair, A_f < A_g": {
        "f": {"family": "rational_unimodal", "G": 1.1, "bp": 2.0, "T": 3.0},
        "g": {"family": "rational_unimodal", "G": 1.3, "bp": 1.0, "T": 3.3},
        "p": 0.5,
    },
    "Rational pair, A_g < A_f": {
        "f": {"family": "rational_unimodal", "G": 1.1, "bp": 1.05, "T": 2.8},
        "g": {"family": "rational_unimodal", "G": 1.3, "bp": 1.0, "T": 2.9},
        "p": 0.5,
    },
    "Increasing sigmoid pair": {
        "f": {"family": "sigmoid", "rho": 2.5, "a": 1.0},
        "g": {"family": "sigmoid", "rho": 3.0, "a": 1.44},
        "p": 0.5,
    },
}


# ---------- Core pipeline logic (in-memory, same calls as the CLI) ----------

def run_analyze(config: rds.RdsConfig) -> dict:
    reports = require_allee(config)
    ff, fg = reports["f"].features, reports["g"].features
    order = certify.classify_ordering(ff, fg)
    rows = [{"map": "f", **ff.to_dict(), "persists_alone": maps.persists_alone(config.f, ff)},
            {"map": "g", **fg.to_dict(), "persists_alone": maps.persists_alone(config.g, fg)}]
    return {"table": pd.DataFrame(rows), "payload": {"config": config.to_dict(), "features": rows,
                                                      "ordering": order.to_dict()}}


def run_certify(config: rds.RdsConfig, theorem: str, delta: float | None) -> dict:
    require_allee(config)
    report = certify.certify(theorem, config.f, config.g, delta)
    rows = [h.to_dict() for h in report.hypotheses]
    st.write(f"Verdict: **{report.verdict.value}**")
    return {"table": exporter.estimate_frame(rows), "payload": {"config": config.to_dict(), **report.to_dict()}}


def run_estimate(config: rds.RdsConfig, x0: float, n_trials: int, horizon: int, seed: int) -> dict:
    require_allee(config)
    result = montecarlo.estimate_absorption(config, x0, n_trials, horizon, seed)
    rows = [{"quantity": "p0", **result.p0.to_dict()}, {"quantity": "p1", **result.p1.to_dict()}]
    st.write(f"Horizon used: **{result.horizon}**, undecided: **{result.n_undecided}**")
    return {"table": pd.DataFrame(rows), "payload": {"config": config.to_dict(), "x0": x0, "estimates": rows}}


def run_sweep(config: rds.RdsConfig, p_grid: list[float], x0: float, n_trials: int, cap: int, seed: int) -> dict:
    require_allee(config)
    sweep = montecarlo.sweep_T_of_p(config.f, config.g, p_grid, x0, n_trials, cap, seed,
                                    config.perturbation, config.b)
    return {"table": pd.DataFrame(sweep.to_rows()),
            "payload": {"config": config.to_dict(), "x0": x0, "seed": seed, "points": sweep.to_rows()}}


# ---------- Streamlit UI ----------

st.set_page_config(page_title="Allee RDS", layout="wide")

if "result" not in st.session_state:
    st.session_state["result"] = None

st.title("Random switching between Allee maps")

with st.sidebar:
    st.header("System")
    example = st.selectbox("Start from", list(PRESET_SYSTEMS))
    config_text = st.text_area("System config (JSON)", value=json.dumps(PRESET_SYSTEMS[example], indent=2),
                               height=260)

    action = st.selectbox("Action", ["Analyze", "Certify", "Estimate", "Sweep T(p)"])
    seed = st.number_input("Seed", min_value=0, value=DEFAULT_SEED, step=1)

    theorem, delta = None, None
    if action == "Certify":
        theorem = st.selectbox("Theorem", [t.value for t in certify.Theorem])
        if theorem in ("T2", "T5"):
            delta = st.number_input("delta", min_value=1e-6, value=0.05, format="%.6f")

    x0, n_trials, horizon, cap, p_grid_text = 3.0, 1000, START_HORIZON, HITTING_CAP, "0.1,0.3,0.5,0.7,0.9"
    if action in ("Estimate", "Sweep T(p)"):
        x0 = st.number_input("x0", min_value=0.0, value=3.0, format="%.6f")
        n_trials = st.number_input("Trials", min_value=1, max_value=100_000, value=1000, step=100)
    if action == "Estimate":
        horizon = st.number_input("Starting horizon", min_value=1, value=START_HORIZON, step=100)
    if action == "Sweep T(p)":
        p_grid_text = st.text_input("p grid", value=p_grid_text)
        cap = st.number_input("Censoring cap", min_value=1, value=10_000, step=1000)

    run_button = st.button("Run", type="primary")

st.divider()

if run_button:
    try:
        config = system_from_dict(json.loads(config_text), source="editor")
        with st.spinner(f"Running {action.lower()}..."):
            if action == "Analyze":
                result = run_analyze(config)
            elif action == "Certify":
                result = run_certify(config, theorem, delta)
            elif action == "Estimate":
                result = run_estimate(config, float(x0), int(n_trials), int(horizon), int(seed))
            else:
                grid = [float(s) for s in p_grid_text.split(",") if s.strip()]
                result = run_sweep(config, grid, float(x0), int(n_trials), int(cap), int(seed))
        st.session_state["result"] = {"action": action, **result}
    except json.JSONDecodeError as e:
        st.error(f"❌ Config is not valid JSON: line {e.lineno}, column {e.colno}: {e.msg}")
        st.stop()
    except (AlleeError, ValueError) as e:
        st.error(f"❌ {e}")
        st.stop()

result = st.session_state.get("result")

if result:
    st.write(f"## {result['action']}")
    df = result["table"]
    st.dataframe(df, use_container_width=True)

    stamp = datetime.now().strftime("%Y-%m-%d")
    prefix = result["action"].lower().split()[0]
    c1, c2 = st.columns(2)
    with c1:
        st.download_button("📊 Download CSV", data=df.to_csv(index=False).encode("utf-8"),
                           file_name=f"allee_{prefix}_{stamp}.csv", mime="text/csv")
    with c2:
        payload = json.dumps(exporter.json_safe(result["payload"]), indent=2)
        st.download_button("📄 Download JSON", data=payload.encode("utf-8"),
                           file_name=f"allee_{prefix}_{stamp}.json", mime="application/json")
else:
    st.info("Pick a system and an action in the sidebar, then press Run.")
