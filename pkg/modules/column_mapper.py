import logging

from modules.errors import ConfigError

logger = logging.getLogger(__name__)


def map_columns(user_columns, required_columns):
    """
    Match the columns of a results file to the sweep columns.

    Args:
        user_columns (list): Column names found in the file
        required_columns (dict): Column spec with descriptions, required flags and aliases

    Returns:
        tuple: (column_mapping, missing)
            - column_mapping: Dict mapping sweep column -> file column (or None)
            - missing: required sweep columns with no match
    """
    column_mapping = {}
    for col_name, spec in required_columns.items():
        selected = None

        # First check for direct match
        for user_col in user_columns:
            if user_col.strip().lower() == col_name.lower():
                selected = user_col
                break

        # If no direct match, check for aliases
        if selected is None:
            for alias in spec.get("aliases", []):
                for user_col in user_columns:
                    if user_col.strip().lower() == alias.lower():
                        selected = user_col
                        break
                if selected is not None:
                    break

        column_mapping[col_name] = selected

    missing = [
        name for name, spec in required_columns.items()
        if spec.get("required", False) and column_mapping.get(name) is None
    ]
    return column_mapping, missing


def apply_column_mapping(dataframe, required_columns):
    """
    Rename the columns of ``dataframe`` to the sweep column names.

    Raises:
        ConfigError: a required column has no match
    """
    column_mapping, missing = map_columns(list(dataframe.columns), required_columns)
    if missing:
        raise ConfigError(f"missing required columns: {', '.join(missing)}")
    renames = {user: name for name, user in column_mapping.items() if user is not None and user != name}
    if renames:
        logger.info("renaming columns %s", renames)
    return dataframe.rename(columns=renames)
