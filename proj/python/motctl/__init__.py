try:
    from ._motctl import *  # installed wheel layout
except ImportError:
    from _motctl import *  # build-tree layout (extension dir on sys.path)
