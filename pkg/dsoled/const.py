"""Constants"""

# Transmission variable kinds
PG = "pg"
PV = "pv"
PK_BG = "pk_bg"  # TSO purchase from the ADN
PK_SGC = "pk_sgc"  # TSO sale of cheap (PV) energy
PK_SGE = "pk_sge"  # TSO sale of expensive (thermal) energy
THETA = "theta"
FLOW = "flow"

LEADER_KINDS = (PK_BG, PK_SGC, PK_SGE)

# Transmission equality row families
BALANCE_INTERIOR = "balance_interior"
BALANCE_BOUNDARY = "balance_boundary"
FLOW_DEF = "flow_def"
REF_ANGLE = "ref_angle"

# Transmission inequality row families
FLOW_UB = "flow_ub"
FLOW_LB = "flow_lb"
PG_UB = "pg_ub"
PV_UB = "pv_ub"
SGC_POOL = "sgc_pool"
SGE_POOL = "sge_pool"
BG_CAP = "bg_cap"

TN_EQUALITY_FAMILIES = (BALANCE_INTERIOR, BALANCE_BOUNDARY, FLOW_DEF, REF_ANGLE)
TN_INEQUALITY_FAMILIES = (FLOW_UB, FLOW_LB, PG_UB, PV_UB, SGC_POOL, SGE_POOL, BG_CAP)

# Multiplier symbols of the transcribed TSO optimality conditions
MULTIPLIER_SYMBOLS = {
    BALANCE_INTERIOR: "lambda1",
    BALANCE_BOUNDARY: "lambda2",
    FLOW_DEF: "lambda3",
    REF_ANGLE: "lambda4",
    FLOW_UB: "mu1",
    FLOW_LB: "mu2",
    PG_UB: "mu3",
    PV_UB: "mu4",
    SGC_POOL: "mu5",
    SGE_POOL: "mu6",
    BG_CAP: "mu7",
}

# Aggregated ADN node (sequence baseline, stage 1)
AGG_BALANCE = "aggregate_balance"
AGG_PV_CAP = "aggregate_pv_cap"

# Distribution variable kinds
DN_P = "p"
DN_Q = "q"
DN_L = "l"  # current squared
DN_V = "v"  # voltage squared
DN_QG = "qg"
DN_PV = "pv"
DN_CH = "ch"
DN_DS = "ds"
DN_SOC = "soc"
DN_W = "w"
DN_DP = "dp"
DN_DP_PLUS = "dp_plus"
DN_DP_MINUS = "dp_minus"
DN_P_SM = "p_sm"
DN_P_BM = "p_bm"
DN_P_SG = "p_sg"
DN_P_BG = "p_bg"
DN_Y = "y"
DN_DP_BOUNDARY = "dp_boundary"
DN_PK_BGC = "pk_bgc"
DN_PK_BGE = "pk_bge"
DN_PK_SG = "pk_sg"
DN_LOSS_SG = "loss_sg"
DN_LOSS_BG = "loss_bg"
DN_SLACK_UP = "slack_up"
DN_SLACK_DOWN = "slack_down"

EXCHANGE_KINDS = (DN_PK_BGC, DN_PK_BGE, DN_PK_SG)

# (ADN exchange kind, TN exchange kind) coupled one to one
COUPLING = (
    (DN_PK_SG, PK_BG),
    (DN_PK_BGC, PK_SGC),
    (DN_PK_BGE, PK_SGE),
)

# Distribution row families, grouped into the single-level constraint families
DN_NETWORK_FAMILIES = (
    "active_balance",
    "reactive_balance",
    "agent_injection",
    "boundary_exchange",
    "voltage_drop",
    "branch_cone",
    "qg_max",
    "qg_min",
    "voltage_max",
    "voltage_min",
    "current_limit",
    "sale_cap",
    "cheap_cap",
    "expensive_cap",
)
DN_PV_FAMILIES = ("pv_cap",)
DN_BATTERY_FAMILIES = (
    "soc_anchor",
    "soc_recursion",
    "soc_max",
    "soc_min",
    "soc_cyclic",
    "charge_gate",
    "discharge_gate",
    "install_gate",
)
DN_P2P_FAMILIES = (
    "p2p_split",
    "seller_side",
    "buyer_side",
    "seller_gate",
    "buyer_gate",
    "local_market",
    "grid_sale",
    "grid_purchase",
)
DN_FALLBACK_FAMILIES = ("exchange_elastic",)

# Dual / KKT kinds
LAMBDA = "lambda"
MU = "mu"
NU = "nu"  # lower-bound multiplier
OMEGA = "omega"  # upper-bound multiplier
ALPHA = "alpha"

STATIONARITY = "stationarity"
LOWER_BOUND = "lower_bound"
UPPER_BOUND = "upper_bound"
SLACK_SIDE = "complementarity_slack"
DUAL_SIDE = "complementarity_dual"
COUPLING_FAMILY = "coupling"

# Single-level constraint families
FAMILY_DSO_NETWORK = "dso_network"
FAMILY_DSO_PV = "dso_pv"
FAMILY_DSO_BATTERY = "dso_battery"
FAMILY_DSO_P2P = "dso_p2p"
FAMILY_TSO_PRIMAL = "tso_primal"
FAMILY_TSO_STATIONARITY = "tso_stationarity"
FAMILY_TSO_BIG_M = "tso_big_m"
FAMILY_COUPLING = "coupling"

SINGLE_LEVEL_FAMILIES = (
    FAMILY_DSO_NETWORK,
    FAMILY_DSO_PV,
    FAMILY_DSO_BATTERY,
    FAMILY_DSO_P2P,
    FAMILY_TSO_PRIMAL,
    FAMILY_TSO_STATIONARITY,
    FAMILY_TSO_BIG_M,
    FAMILY_COUPLING,
)

# Defaults
DEFAULT_FEASIBILITY_TOL = 1e-7
DEFAULT_GAP_TOL = 1e-5
DEFAULT_CONE_TOL = 1e-5
DEFAULT_INTEGRALITY_TOL = 1e-6
DEFAULT_STATIONARITY_TOL = 1e-6

DEFAULT_BIG_M_TSO = 1e4
BIG_M_DUAL_FLOOR = 1e3
BIG_M_DUAL_FACTOR = 10.0

DEFAULT_BRUTE_FORCE_CAP = 24
ELASTIC_PENALTY = 1e4  # $/MWh on fallback exchange deviations

DEFAULT_CONIC_SOLVER = "CLARABEL"
OUTPUT_DIR_ENV = "DSOLED_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "runs"
