from toolkit.vision.detect import detect_objects
from toolkit.text.summarize import summarize_text

__version__ = "0.3.1"
