import sys
from pathlib import Path

# the adapter itself never imports the server package; tests may, both to
# drive the real JobManager against this trainer and to build record files
ROOT = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tf_adapter" / "src"))
