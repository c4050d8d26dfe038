"""Exception hierarchy shared by all vpnflow modules."""


class VpnflowError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VpnflowError, ValueError):
    """Invalid thresholds, shapes or training configuration."""


class NumericalError(VpnflowError, ArithmeticError):
    """A forward or backward pass produced a non-finite value."""


class CaptureError(VpnflowError):
    """Fatal problem with a pcap capture."""


class TruncatedRecordError(CaptureError):
    def __init__(self, index: int, message: str = "truncated packet record"):
        self.index = index
        super().__init__(f"{message} (record {index})")


class UnsupportedLinkTypeError(CaptureError):
    def __init__(self, link_type: int):
        self.link_type = link_type
        super().__init__(f"unsupported link type {link_type} (only Ethernet/1 is supported)")


class DatasetFormatError(VpnflowError):
    """A FLOW1 or NNMD1 file does not follow its binary layout."""


class BadMagicError(DatasetFormatError):
    pass


class ShortFileError(DatasetFormatError):
    pass


class TrailingDataError(DatasetFormatError):
    pass


class LabelRangeError(VpnflowError, ValueError):
    def __init__(self, index: int, label: int):
        self.index = index
        self.label = label
        super().__init__(f"sample {index}: label {label} outside 0..5")
