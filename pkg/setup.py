from strataforms.schemas import ProjectFile
from pathlib import Path
import json
import os
from dotenv import load_dotenv
import sys

load_dotenv()

def write_schema():
    """Write the project file JSON schema next to the sample projects"""
    target = Path(os.getenv("STRATAFORMS_SCHEMA_PATH", "projects/project.schema.json"))

    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(ProjectFile.model_json_schema(), indent=2, sort_keys=True) + "\n")

        print(f"Project schema written to {target}")
        return True
    except OSError as e:
        print(f"Writing the project schema failed: {e}")
        print("Run `python -m strataforms.main schema` to print it instead.")
        return False

if __name__ == "__main__":
    success = write_schema()
    if not success:
        sys.exit(1)
