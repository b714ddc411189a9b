"""Acquisition chain emulation: scanning, frame codec and streaming."""

from capskin.daq.frame import Frame, FrameError, decode_frame, encode_frame
from capskin.daq.scan import JointPose, Scanner, TaxelChannel, VirtualClock, run_virtual, scan_cycle

__all__ = [
    "Frame",
    "FrameError",
    "JointPose",
    "Scanner",
    "TaxelChannel",
    "VirtualClock",
    "decode_frame",
    "encode_frame",
    "run_virtual",
    "scan_cycle",
]
