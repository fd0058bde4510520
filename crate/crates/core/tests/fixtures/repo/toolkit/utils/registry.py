TOOL_REGISTRY = {}


def register(name):
    def wrap(fn):
        TOOL_REGISTRY[name] = fn
        return fn

    return wrap


class Registry:
    @classmethod
    def names(cls):
        return sorted(TOOL_REGISTRY)

    @staticmethod
    def get(name):
        return TOOL_REGISTRY[name]
