"""
FastMCP Server for pilotgrid

This MCP server provides 5 tools for pilot-assignment analysis:
1. assignment_probability - Typical-user assignment probability (theory)
2. density_curve - RSA density curve rho(t) (theory)
3. simulate - Monte Carlo experiment summary
4. maxmin_partition - Max-min distance partition of a user layout
5. best_inhibition_radius - R_inh grid search for the RSA scheme

Usage:
    mcp run src/server.py
"""

from dataclasses import asdict
from typing import Any, Dict, List

import numpy as np
from fastmcp import FastMCP

from config import ConfigError, get_config, get_logger, load_experiment_config
from rsa_theory import TheoryError, AssignmentProbabilityInputs
import rsa_theory
from experiment import best_rinh, run_experiment, summarize
from maxmin_partition import PartitionError, PartitionInstance, maxmin_assign

# Initialize FastMCP server
mcp = FastMCP("pilotgrid")

# Initialize logger
logger = get_logger(__name__)

# Largest Monte Carlo job a tool call may start
MAX_TOOL_TRIALS = 2000

_config = None


def get_app_config():
    """Get or create config instance."""
    global _config
    if _config is None:
        _config = get_config()
        logger.info("Configuration loaded")
    return _config


@mcp.tool()
def assignment_probability(
    user_density: float,
    inhibition_radius: float,
    num_pilots: List[int],
    observation_radius: float = 600.0
) -> Dict[str, Any]:
    """
    Probability that the typical user obtains a pilot under RSA assignment.

    Args:
        user_density: Users per square meter (e.g., 1e-4)
        inhibition_radius: R_inh in meters (e.g., 200)
        num_pilots: Pilot counts to evaluate (e.g., [1, 2, 4, 8, 16])
        observation_radius: Radius of the observation disk in meters

    Returns:
        Dictionary containing:
        - success: Whether the computation succeeded
        - probabilities: List of {num_pilots, probability}

    Example:
        assignment_probability(user_density=1e-4, inhibition_radius=200, num_pilots=[4, 8])
    """
    try:
        logger.info(f"Assignment probability: lambda_u={user_density}, R_inh={inhibition_radius}")
        values = []
        for p in num_pilots:
            inputs = AssignmentProbabilityInputs(user_density, inhibition_radius, int(p), observation_radius)
            values.append({"num_pilots": int(p), "probability": rsa_theory.assignment_probability(inputs)})
        return {
            "success": True,
            "probabilities": values
        }

    except TheoryError as e:
        logger.error(f"Invalid theory input: {e}")
        return {
            "success": False,
            "error": f"Invalid input: {str(e)}"
        }
    except Exception as e:
        logger.error(f"Assignment probability failed: {e}", exc_info=True)
        return {
            "success": False,
            "error": f"Assignment probability failed: {str(e)}"
        }


@mcp.tool()
def density_curve(
    intensity: float,
    inhibition_radius: float,
    t_max: float = 1.0,
    step: float = 0.05
) -> Dict[str, Any]:
    """
    Density of retained points rho(t) of the RSA kinetics.

    Args:
        intensity: Arrivals per square meter per unit time
        inhibition_radius: R_inh in meters
        t_max: End time (default: 1)
        step: Tabulation step (default: 0.05)

    Returns:
        Dictionary containing:
        - success: Whether the integration succeeded
        - t, rho: Tabulated curve
        - coverage: Final covered fraction kappa * rho(t_max)
    """
    try:
        model = rsa_theory.density_curve(intensity, inhibition_radius, t_max=t_max, step=step)
        return {
            "success": True,
            "t": model.t.tolist(),
            "rho": model.rho.tolist(),
            "coverage": float(model.coverage[-1])
        }

    except TheoryError as e:
        logger.error(f"Invalid theory input: {e}")
        return {
            "success": False,
            "error": f"Invalid input: {str(e)}"
        }
    except Exception as e:
        logger.error(f"Density curve failed: {e}", exc_info=True)
        return {
            "success": False,
            "error": f"Density curve failed: {str(e)}"
        }


@mcp.tool()
def simulate(settings: Dict[str, Any]) -> Dict[str, Any]:
    """
    Run a Monte Carlo experiment and return its summary.

    Args:
        settings: Experiment fields (scheme, rrh_density, user_density,
            num_pilots, inhibition_radius or inhibition_radii, trials, ...)

    Returns:
        Dictionary containing:
        - success: Whether the run succeeded
        - summary: Per (scheme, R_inh) means and 95% half-widths

    Example:
        simulate(settings={"scheme": "rsa", "user_density": 1e-4, "trials": 50})
    """
    try:
        config = load_experiment_config(overrides=settings)
        work = config.trials * len(config.radii)
        if work > MAX_TOOL_TRIALS:
            return {
                "success": False,
                "error": f"{work} trials requested; the tool runs at most {MAX_TOOL_TRIALS}"
            }

        logger.info(f"Simulating {config.scheme} with {work} trials")
        summary = summarize(run_experiment(config, workers=get_app_config().workers))
        return {
            "success": True,
            "summary": [asdict(s) for s in summary]
        }

    except ConfigError as e:
        logger.error(f"Invalid settings: {e}")
        return {
            "success": False,
            "error": str(e)
        }
    except Exception as e:
        logger.error(f"Simulation failed: {e}", exc_info=True)
        return {
            "success": False,
            "error": f"Simulation failed: {str(e)}"
        }


@mcp.tool()
def maxmin_partition(
    points: List[List[float]],
    num_pilots: int,
    size_floor: int = 2,
    epsilon: float = 1.0,
    time_budget: float = 10.0
) -> Dict[str, Any]:
    """
    Split users into pilots maximizing the smallest co-pilot distance.

    Args:
        points: User coordinates [[x, y], ...] in meters
        num_pilots: P
        size_floor: Minimum users per pilot
        epsilon: Bisection tolerance in meters
        time_budget: Seconds per feasibility search

    Returns:
        Dictionary containing:
        - success: Whether a feasible partition was found
        - pilots: Pilot index (1..P) per user
        - t_star: Smallest co-pilot distance achieved
        - approximate: True if a feasibility search timed out
    """
    try:
        instance = PartitionInstance(
            np.asarray(points, dtype=float),
            num_pilots,
            size_floor=size_floor,
            epsilon=epsilon,
            time_budget=time_budget
        )
        result = maxmin_assign(instance)
        if not result.feasible:
            return {
                "success": False,
                "error": f"No partition of {instance.num_users} users into {num_pilots} sets of {size_floor}+"
            }

        return {
            "success": True,
            "pilots": result.membership.tolist(),
            "t_star": result.t_star,
            "approximate": result.approximate,
            "feasibility_calls": result.feasibility_calls
        }

    except PartitionError as e:
        logger.error(f"Invalid partition instance: {e}")
        return {
            "success": False,
            "error": str(e)
        }
    except Exception as e:
        logger.error(f"Max-min partition failed: {e}", exc_info=True)
        return {
            "success": False,
            "error": f"Max-min partition failed: {str(e)}"
        }


@mcp.tool()
def best_inhibition_radius(
    rrh_density: float,
    user_density: float,
    num_pilots: int,
    grid: List[float],
    trials: int = 50,
    base_seed: int = 1
) -> Dict[str, Any]:
    """
    R_inh from a grid that maximizes the mean user SE of RSA assignment.

    Args:
        rrh_density: RRHs per square meter
        user_density: Users per square meter
        num_pilots: P
        grid: Candidate radii in meters
        trials: Trials per radius
        base_seed: Base seed

    Returns:
        Dictionary containing:
        - success: Whether the search ran
        - inhibition_radius: The best grid point (ties go to the smallest)
    """
    try:
        if trials * len(grid) > MAX_TOOL_TRIALS:
            return {
                "success": False,
                "error": f"{trials * len(grid)} trials requested; the tool runs at most {MAX_TOOL_TRIALS}"
            }
        radius = best_rinh(
            rrh_density, user_density, num_pilots, grid,
            trials=trials, base_seed=base_seed, workers=get_app_config().workers
        )
        return {
            "success": True,
            "inhibition_radius": radius
        }

    except ConfigError as e:
        logger.error(f"Invalid search settings: {e}")
        return {
            "success": False,
            "error": str(e)
        }
    except Exception as e:
        logger.error(f"R_inh search failed: {e}", exc_info=True)
        return {
            "success": False,
            "error": f"R_inh search failed: {str(e)}"
        }


# Server startup
if __name__ == "__main__":
    config = get_app_config()
    logger.info("pilotgrid MCP Server starting...")
    logger.info(f"Project root: {config.project_root}")
    logger.info(f"Output directory: {config.output_dir}")
    logger.info(f"Workers: {config.workers}")

    mcp.run()
