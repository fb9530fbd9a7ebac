import json
import os
import uuid
from datetime import datetime
from enum import Enum

# Run log location; an empty CFA_LOG_FILE disables the log
DEFAULT_LOG_FILE = os.path.join("logs", "run_log.json")


class ActionType(str, Enum):
    """
    Kinds of pipeline actions, so runs can be compared entry by entry.
    """
    SIMULATION = "SIMULATION"    # Drawing data from an SCM, oracle values
    DIAGNOSTIC = "DIAGNOSTIC"    # Validation, balance, overlap checks
    ESTIMATION = "ESTIMATION"    # Nuisance fits, decomposition, CATE, ctf-DE
    SENSITIVITY = "SENSITIVITY"  # Robustness values, trimming
    EXPORT = "EXPORT"            # Artifact writing


def get_log_file():
    """Return the active log path, or None when logging is disabled."""
    path = os.getenv("CFA_LOG_FILE")
    if path is None:
        return DEFAULT_LOG_FILE
    return path or None


def log_event(step: str, action: ActionType, details: dict, status: str):
    """
    Record one pipeline action in the JSON run log.

    Args:
        step (str): Pipeline step name (e.g. "decompose", "cate").
        action (ActionType): Kind of action (use the ActionType enum).
        details (dict): Step details. Estimation-type actions MUST carry 'inputs' and 'outputs'.
        status (str): "SUCCESS", "WARNING" or "FAILURE".

    Raises:
        ValueError: If the action is unknown or required keys are missing from 'details'.
    """

    # --- 1. ACTION VALIDATION ---
    valid_actions = [a.value for a in ActionType]
    if isinstance(action, ActionType):
        action_str = action.value
    elif action in valid_actions:
        action_str = action
    else:
        raise ValueError(f"❌ Unknown action: '{action}'. Use the ActionType enum (e.g. ActionType.ESTIMATION).")

    # --- 2. REQUIRED KEYS ---
    # Estimation and sensitivity entries are only comparable across runs with their inputs and outputs
    if action_str in [ActionType.ESTIMATION, ActionType.SENSITIVITY]:
        required_keys = ["inputs", "outputs"]
        missing_keys = [key for key in required_keys if key not in details]

        if missing_keys:
            raise ValueError(
                f"❌ Logging error (step: {step}): "
                f"keys {missing_keys} are missing from 'details'."
            )

    log_file = get_log_file()
    if log_file is None:
        return

    # --- 3. ENTRY ---
    log_dir = os.path.dirname(log_file)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)

    entry = {
        "id": str(uuid.uuid4()),
        "timestamp": datetime.now().isoformat(),
        "step": step,
        "action": action_str,
        "details": details,
        "status": status
    }

    # --- 4. READ & WRITE ---
    data = []
    if os.path.exists(log_file):
        try:
            with open(log_file, 'r', encoding='utf-8') as f:
                content = f.read().strip()
                if content:
                    data = json.loads(content)
        except json.JSONDecodeError:
            print(f"⚠️ Warning: run log {log_file} was corrupted. Starting a new list.")
            data = []

    data.append(entry)

    with open(log_file, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=4, ensure_ascii=False, default=str)
