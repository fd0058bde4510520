from .summarize import summarize_text
from .translate import Translator
