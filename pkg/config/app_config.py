# Application configuration

# Application title and description
APP_TITLE = "Tensor Network Geometry Lab"
APP_DESCRIPTION = """
Builds tensor networks of different geometries (MPS, trees, star, PEPS, dense),
trains them with L-BFGS to encode a target state produced by a surrogate tensor
network, and aggregates the results into tables.
"""

# Tensor primitives
TENSOR_CONFIG = {
    "rank_tol": 1e-10,  # relative singular value cutoff for numerical_rank
}

# Target generation and target files
SURROGATE_CONFIG = {
    "memory_ceiling": 2 ** 24,  # largest dense state (entries) we agree to build
    "magic": b"TNGT",
    "format_version": 1,
}

# Fidelity / loss evaluation
ENGINE_CONFIG = {
    "eps_fidelity": 1e-300,  # clamp inside the logarithm
    "loss": "log",           # "log" -> (ln F - 1)^2, "squared_infidelity" -> (1 - F)^2
}

LOSS_KINDS = ("log", "squared_infidelity")

# L-BFGS defaults
OPTIM_CONFIG = {
    "memory_pairs": 10,
    "max_iters": 1000,
    "grad_tol": 1e-12,             # on the gradient infinity-norm
    "loss_tol": 1e-14,             # relative loss change ...
    "loss_tol_window": 5,          # ... over this many iterations
    "wolfe_c1": 1e-4,
    "wolfe_c2": 0.9,
    "max_line_search_steps": 40,
    "curvature_eps": 1e-14,        # skip pairs with s.y <= eps * |s| |y|
}

# Sweep / report defaults
HARNESS_CONFIG = {
    "success_threshold": 1e-3,
    "trials_per_cell": 10,
    "workers": 1,
    "workers_env_var": "TNGEO_WORKERS",
    "float_format": "%.17g",
    "record_timing": False,  # wall_ms is written as 0 unless enabled
}

# Sweep table columns with descriptions (fixed header order)
SWEEP_COLUMNS = {
    "geometry": {
        "description": "Geometry label (mps, antenna, balanced, star<k>, peps<r>x<c>, dense)",
        "required": True,
        "aliases": ["family", "structure"]
    },
    "compact": {
        "description": "Whether the network was compactified before training",
        "required": True,
        "aliases": ["compactified"]
    },
    "n": {
        "description": "Number of physical sites",
        "required": False,
        "aliases": ["sites"]
    },
    "chi": {
        "description": "Requested bond dimension",
        "required": True,
        "aliases": ["bond_dim", "bond_dimension"]
    },
    "trial": {
        "description": "Trial number inside the cell",
        "required": False
    },
    "seed": {
        "description": "Seed used to initialize the trained network",
        "required": False
    },
    "final_infidelity": {
        "description": "1 - F at the end of training",
        "required": True,
        "aliases": ["infidelity"]
    },
    "iterations": {
        "description": "Accepted L-BFGS iterations",
        "required": False,
        "aliases": ["iters"]
    },
    "wall_ms": {
        "description": "Training wall time in milliseconds",
        "required": False,
        "aliases": ["time_ms"]
    },
    "largest_tensor": {
        "description": "Element count of the largest tensor",
        "required": False
    },
    "total_elems": {
        "description": "Element count summed over all tensors",
        "required": False,
        "aliases": ["full_size"]
    },
    "diameter": {
        "description": "Maximum node distance of the network",
        "required": False
    },
    "converged_reason": {
        "description": "Why training stopped (or Error:<name>)",
        "required": False
    },
    "peak_elems": {
        "description": "Largest intermediate of the contraction plan",
        "required": False
    },
    "contraction_flops": {
        "description": "Multiply-add count of the contraction plan",
        "required": False
    }
}
