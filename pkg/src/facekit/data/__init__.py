"""Bundled cascades and test images.

``path("cascades/haarcascade_frontalface_default.xml")`` returns a filesystem
path to a bundled file.
"""
from importlib import resources


def path(name):
    return str(resources.files(__name__).joinpath(name))


HAAR_FRONTALFACE = "cascades/haarcascade_frontalface_default.xml"
HAAR_EYE = "cascades/haarcascade_eye.xml"
LBP_FRONTALFACE = "cascades/lbpcascade_frontalface.xml"
