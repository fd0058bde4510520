import os

DEFAULT_DEVICE = os.environ.get("TOOLKIT_DEVICE", "cpu")
MODEL_PATHS = {
    "detector": "models/detr-resnet-50",
    "classifier": "models/vit-base",
    "ocr": "models/trocr-small",
}
MAX_IMAGE_SIDE: int = 1024
cache_hits = 0
cache_hits += 1
