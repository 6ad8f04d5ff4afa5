"""Detector-side implementation of the line-JSON detection protocol.

The package wraps detectors behind a stdin/stdout loop: one handshake
line announcing the detector id and score floor, then one response per
request. Perturbations named in a request (brightness, blur, resize) are
applied to the image before inference, and boxes always come back in
original-image pixels.
"""

__version__ = "0.1.0"
